//! Periodic Gaussian random fields by spectral synthesis.
//!
//! Real white noise is transformed to Fourier space, modulated by `√S(k)` with
//! `S(k) = exp(−k²/κ²)` and transformed back. The Fourier coefficients of real
//! noise are Hermitian-symmetric complex Gaussians, so the field is real up to
//! round-off and the construction is a circular convolution of the noise.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plasticity::{MaterialParams, YieldModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("kappa must be positive, got {0}")]
    InvalidKappa(f64),
    #[error("noise length {got} does not match grid size {expected}")]
    NoiseLength { expected: usize, got: usize },
    #[error("field has zero spread and cannot be rescaled to a positive std")]
    DegenerateField,
    #[error("field for `{0}` lives on a different grid")]
    GridMismatch(String),
    #[error("missing value for parameter `{0}`")]
    MissingParameter(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lx: f64,
    pub ly: f64,
    pub lz: f64,
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl GridSpec {
    pub fn cube(l: f64, n: usize) -> Self {
        Self {
            lx: l,
            ly: l,
            lz: l,
            nx: n,
            ny: n,
            nz: n,
        }
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self) -> [f64; 3] {
        [
            self.lx / self.nx as f64,
            self.ly / self.ny as f64,
            self.lz / self.nz as f64,
        ]
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    /// Flat index, x fastest.
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.nx * (j + self.ny * k)
    }

    /// Cell-centre coordinates of a flat index.
    pub fn centre(&self, idx: usize) -> [f64; 3] {
        let d = self.spacing();
        let i = idx % self.nx;
        let j = (idx / self.nx) % self.ny;
        let k = idx / (self.nx * self.ny);
        [
            (i as f64 + 0.5) * d[0],
            (j as f64 + 0.5) * d[1],
            (k as f64 + 0.5) * d[2],
        ]
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        if self.nx == 0 || self.ny == 0 || self.nz == 0 {
            return Err(FieldError::InvalidGrid("resolutions must be positive".into()));
        }
        if !(self.lx > 0.0 && self.ly > 0.0 && self.lz > 0.0) {
            return Err(FieldError::InvalidGrid("lengths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub values: Vec<f64>,
    pub grid: GridSpec,
    pub kappa: f64,
    pub seed: u64,
}

impl FieldSample {
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Population standard deviation.
    pub fn std(&self) -> f64 {
        let m = self.mean();
        let v = self.values.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / self.values.len() as f64;
        v.sqrt()
    }

    pub fn constant(grid: GridSpec, value: f64) -> Self {
        Self {
            values: vec![value; grid.len()],
            grid,
            kappa: f64::INFINITY,
            seed: 0,
        }
    }
}

/// `2π · fftfreq(n, d)`.
pub fn wave_numbers(n: usize, d: f64) -> Vec<f64> {
    let scale = 2.0 * std::f64::consts::PI / (n as f64 * d);
    (0..n)
        .map(|i| {
            let m = if i <= (n - 1) / 2 { i as isize } else { i as isize - n as isize };
            m as f64 * scale
        })
        .collect()
}

pub fn gaussian_psd(k: f64, kappa: f64) -> f64 {
    (-(k * k) / (kappa * kappa)).exp()
}

fn psd_grid(grid: &GridSpec, kappa: f64) -> Vec<f64> {
    let d = grid.spacing();
    let kx = wave_numbers(grid.nx, d[0]);
    let ky = wave_numbers(grid.ny, d[1]);
    let kz = wave_numbers(grid.nz, d[2]);
    let mut s = vec![0.0; grid.len()];
    for k in 0..grid.nz {
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let k2 = kx[i] * kx[i] + ky[j] * ky[j] + kz[k] * kz[k];
                s[grid.index(i, j, k)] = gaussian_psd(k2.sqrt(), kappa);
            }
        }
    }
    s
}

/// In-place 3D FFT (unnormalized in both directions), x fastest.
fn fft3(data: &mut [Complex64], dims: [usize; 3], inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let [nx, ny, nz] = dims;
    let plan = |p: &mut FftPlanner<f64>, n: usize| {
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    };
    let fx = plan(&mut planner, nx);
    for line in data.chunks_mut(nx) {
        fx.process(line);
    }
    let mut buf = Vec::new();
    let fy = plan(&mut planner, ny);
    for k in 0..nz {
        for i in 0..nx {
            buf.clear();
            buf.extend((0..ny).map(|j| data[i + nx * (j + ny * k)]));
            fy.process(&mut buf);
            for (j, v) in buf.iter().enumerate() {
                data[i + nx * (j + ny * k)] = *v;
            }
        }
    }
    let fz = plan(&mut planner, nz);
    for j in 0..ny {
        for i in 0..nx {
            buf.clear();
            buf.extend((0..nz).map(|k| data[i + nx * (j + ny * k)]));
            fz.process(&mut buf);
            for (k, v) in buf.iter().enumerate() {
                data[i + nx * (j + ny * k)] = *v;
            }
        }
    }
}

/// White noise used by [`generate_correlated_field`] for a seed.
pub fn white_noise(grid: &GridSpec, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..grid.len()).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Field synthesized from explicit real-space noise. Returns the field and the
/// largest imaginary residue after the inverse transform.
pub fn generate_from_noise(
    grid: &GridSpec,
    kappa: f64,
    noise: &[f64],
) -> Result<(Vec<f64>, f64), FieldError> {
    grid.validate()?;
    if !(kappa > 0.0) {
        return Err(FieldError::InvalidKappa(kappa));
    }
    if noise.len() != grid.len() {
        return Err(FieldError::NoiseLength {
            expected: grid.len(),
            got: noise.len(),
        });
    }
    let n = grid.len();
    let mut buf: Vec<Complex64> = noise.iter().map(|v| Complex64::new(*v, 0.0)).collect();
    fft3(&mut buf, grid.dims(), false);
    for (b, s) in buf.iter_mut().zip(psd_grid(grid, kappa)) {
        *b *= s.sqrt();
    }
    fft3(&mut buf, grid.dims(), true);
    let inv_n = 1.0 / n as f64;
    let imag = buf.iter().fold(0.0_f64, |a, c| a.max((c.im * inv_n).abs()));
    Ok((buf.iter().map(|c| c.re * inv_n).collect(), imag))
}

pub fn generate_correlated_field(grid: &GridSpec, kappa: f64, seed: u64) -> Result<FieldSample, FieldError> {
    let noise = white_noise(grid, seed);
    let (values, _) = generate_from_noise(grid, kappa, &noise)?;
    Ok(FieldSample {
        values,
        grid: *grid,
        kappa,
        seed,
    })
}

/// Affine rescale to an exact sample mean and population std.
pub fn scale_field(f: &FieldSample, target_mean: f64, target_std: f64) -> Result<FieldSample, FieldError> {
    let mut out = f.clone();
    if target_std == 0.0 {
        out.values.iter_mut().for_each(|v| *v = target_mean);
        return Ok(out);
    }
    let m = f.mean();
    let s = f.std();
    if !(s > 0.0) {
        return Err(FieldError::DegenerateField);
    }
    let a = target_std / s;
    out.values.iter_mut().for_each(|v| *v = (*v - m) * a + target_mean);
    Ok(out)
}

/// Circular autocorrelation of the mean-removed field, normalized at zero lag.
pub fn circular_autocorrelation(f: &FieldSample) -> Vec<f64> {
    let m = f.mean();
    let mut buf: Vec<Complex64> = f.values.iter().map(|v| Complex64::new(v - m, 0.0)).collect();
    fft3(&mut buf, f.grid.dims(), false);
    for b in buf.iter_mut() {
        *b = Complex64::new(b.norm_sqr(), 0.0);
    }
    fft3(&mut buf, f.grid.dims(), true);
    let c0 = buf[0].re;
    buf.iter().map(|c| c.re / c0).collect()
}

/// Autocorrelation implied by the PSD on the grid, `IFFT(S)` normalized at zero lag.
pub fn theoretical_autocorrelation(grid: &GridSpec, kappa: f64) -> Vec<f64> {
    let mut buf: Vec<Complex64> = psd_grid(grid, kappa)
        .into_iter()
        .map(|s| Complex64::new(s, 0.0))
        .collect();
    fft3(&mut buf, grid.dims(), true);
    let c0 = buf[0].re;
    buf.iter().map(|c| c.re / c0).collect()
}

/// Averages a lag-indexed grid quantity over shells of the minimum-image lag
/// distance, with shell width `min(dx, dy, dz)`. Returns `(r, value)`.
pub fn radial_profile(grid: &GridSpec, lagged: &[f64]) -> Vec<(f64, f64)> {
    let d = grid.spacing();
    let w = d[0].min(d[1]).min(d[2]);
    let lag = |i: usize, n: usize| -> f64 {
        let i = i as isize;
        let n = n as isize;
        (if i <= n / 2 { i } else { i - n }) as f64
    };
    let r_max = 0.5 * grid.lx.min(grid.ly).min(grid.lz);
    let nb = (r_max / w).floor() as usize + 1;
    let mut sum = vec![0.0; nb];
    let mut cnt = vec![0usize; nb];
    for k in 0..grid.nz {
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let x = lag(i, grid.nx) * d[0];
                let y = lag(j, grid.ny) * d[1];
                let z = lag(k, grid.nz) * d[2];
                let r = (x * x + y * y + z * z).sqrt();
                let b = (r / w + 0.5).floor() as usize;
                if b < nb {
                    sum[b] += lagged[grid.index(i, j, k)];
                    cnt[b] += 1;
                }
            }
        }
    }
    (0..nb)
        .filter(|b| cnt[*b] > 0)
        .map(|b| (b as f64 * w, sum[b] / cnt[b] as f64))
        .collect()
}

/// Mean normalized correlation between neighbouring cells along x.
pub fn lag1_autocorrelation(f: &FieldSample) -> f64 {
    let g = &f.grid;
    let m = f.mean();
    let var = f.std().powi(2);
    let mut acc = 0.0;
    for k in 0..g.nz {
        for j in 0..g.ny {
            for i in 0..g.nx {
                let a = f.values[g.index(i, j, k)] - m;
                let b = f.values[g.index((i + 1) % g.nx, j, k)] - m;
                acc += a * b;
            }
        }
    }
    acc / (g.len() as f64 * var)
}

/// Constitutive family assigned to every cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellModel {
    /// Parameters `E, nu, beta, d, H` and optional `dilation` (defaults to `beta`).
    LinearDruckerPrager,
    /// Parameters `E, nu, c, phi, psi, H`.
    DruckerPrager,
    /// Parameters `E, nu, su, H`.
    VonMises,
}

impl CellModel {
    pub fn parameter_names(&self) -> &'static [&'static str] {
        match self {
            CellModel::LinearDruckerPrager => &["E", "nu", "beta", "d", "H"],
            CellModel::DruckerPrager => &["E", "nu", "c", "phi", "psi", "H"],
            CellModel::VonMises => &["E", "nu", "su", "H"],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipRules {
    pub e_min: f64,
    pub nu_max: f64,
    pub nu_min: f64,
}

impl Default for ClipRules {
    fn default() -> Self {
        Self {
            e_min: 1.0,
            nu_max: 0.499,
            nu_min: -0.999,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    pub cells: Vec<MaterialParams>,
    /// Number of clipped cells per parameter name.
    pub clipped: BTreeMap<String, usize>,
    /// Supplied parameters the cell model does not use.
    pub ignored: Vec<String>,
}

/// Builds one parameter record per grid cell. Parameters found in `fields`
/// vary per cell; the rest are taken from `homogeneous`.
pub fn assign_properties(
    model: CellModel,
    fields: &BTreeMap<String, FieldSample>,
    homogeneous: &BTreeMap<String, f64>,
    clip: &ClipRules,
) -> Result<Assignment, FieldError> {
    let grid = match fields.values().next() {
        Some(f) => f.grid,
        None => GridSpec::cube(1.0, 1),
    };
    for (name, f) in fields {
        if f.grid != grid || f.values.len() != grid.len() {
            return Err(FieldError::GridMismatch(name.clone()));
        }
    }
    let names = model.parameter_names();
    let mut ignored: Vec<String> = fields
        .keys()
        .chain(homogeneous.keys())
        .filter(|n| !names.contains(&n.as_str()) && n.as_str() != "dilation")
        .cloned()
        .collect();
    ignored.sort();
    ignored.dedup();
    let lookup = |name: &str, cell: usize| -> Option<f64> {
        fields
            .get(name)
            .map(|f| f.values[cell])
            .or_else(|| homogeneous.get(name).copied())
    };
    for n in names {
        if lookup(n, 0).is_none() && *n != "H" {
            return Err(FieldError::MissingParameter((*n).to_string()));
        }
    }
    let mut clipped: BTreeMap<String, usize> = BTreeMap::new();
    let mut bump = |n: &str| *clipped.entry(n.to_string()).or_insert(0) += 1;
    let mut cells = Vec::with_capacity(grid.len());
    for cell in 0..grid.len() {
        let get = |n: &str| lookup(n, cell).unwrap_or(0.0);
        let mut e = get("E");
        if e < clip.e_min {
            e = clip.e_min;
            bump("E");
        }
        let mut nu = get("nu");
        if nu > clip.nu_max {
            nu = clip.nu_max;
            bump("nu");
        } else if nu < clip.nu_min {
            nu = clip.nu_min;
            bump("nu");
        }
        let mut h = get("H");
        if h < 0.0 {
            h = 0.0;
            bump("H");
        }
        let mut nonneg = |n: &str| {
            let v = get(n);
            if v < 0.0 {
                bump(n);
                0.0
            } else {
                v
            }
        };
        let yield_model = match model {
            CellModel::LinearDruckerPrager => {
                let beta = nonneg("beta");
                let d = nonneg("d");
                let dilation = lookup("dilation", cell).unwrap_or(beta);
                YieldModel::DruckerPragerLinear {
                    beta_deg: beta,
                    d,
                    dilation_deg: dilation,
                }
            }
            CellModel::DruckerPrager => YieldModel::DruckerPrager {
                cohesion: nonneg("c"),
                friction_deg: nonneg("phi"),
                dilatancy_deg: nonneg("psi"),
            },
            CellModel::VonMises => YieldModel::VonMises { su: nonneg("su") },
        };
        cells.push(MaterialParams {
            young: e,
            poisson: nu,
            hardening: h,
            model: yield_model,
        });
    }
    Ok(Assignment {
        cells,
        clipped,
        ignored,
    })
}

/// `(name, mean, std)` rows of the heterogeneous cell table; rows with zero
/// std are homogeneous. `p0`, `alpha`, `R` and `K` belong to the volumetric
/// cap and are carried for completeness only.
pub fn heterogeneous_cell_table() -> Vec<(&'static str, f64, f64)> {
    vec![
        ("beta", 40.0, 0.1),
        ("d", 15.0, 0.5),
        ("E", 18000.0, 5000.0),
        ("nu", 0.3, 0.01),
        ("p0", 100.0, 0.5),
        ("alpha", 0.05, 0.0),
        ("R", 1.2, 0.0),
        ("K", 0.8, 0.0),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wave_numbers_follow_fftfreq() {
        let k = wave_numbers(4, 0.5);
        let s = 2.0 * std::f64::consts::PI / 2.0;
        assert_eq!(k, vec![0.0, s, -2.0 * s, -s]);
        let k = wave_numbers(5, 1.0);
        let s = 2.0 * std::f64::consts::PI / 5.0;
        for (a, b) in k.iter().zip([0.0, s, 2.0 * s, -2.0 * s, -s]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn deterministic_and_real() {
        let g = GridSpec {
            lx: 1.0,
            ly: 2.0,
            lz: 1.5,
            nx: 8,
            ny: 5,
            nz: 6,
        };
        let a = generate_correlated_field(&g, 5.0, 11).unwrap();
        let b = generate_correlated_field(&g, 5.0, 11).unwrap();
        assert_eq!(a.values, b.values);
        let (vals, imag) = generate_from_noise(&g, 5.0, &white_noise(&g, 11)).unwrap();
        let norm = vals.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(imag <= 1e-10 * norm);
    }

    #[test]
    fn circular_shift_of_noise_shifts_field() {
        let g = GridSpec {
            lx: 4.0,
            ly: 4.0,
            lz: 3.0,
            nx: 8,
            ny: 8,
            nz: 6,
        };
        let noise = white_noise(&g, 3);
        let (f, _) = generate_from_noise(&g, 5.0, &noise).unwrap();
        let (sx, sy, sz) = (3, 5, 1);
        let mut shifted = vec![0.0; g.len()];
        for k in 0..g.nz {
            for j in 0..g.ny {
                for i in 0..g.nx {
                    shifted[g.index((i + sx) % g.nx, (j + sy) % g.ny, (k + sz) % g.nz)] =
                        noise[g.index(i, j, k)];
                }
            }
        }
        let (fs, _) = generate_from_noise(&g, 5.0, &shifted).unwrap();
        for k in 0..g.nz {
            for j in 0..g.ny {
                for i in 0..g.nx {
                    let a = f[g.index(i, j, k)];
                    let b = fs[g.index((i + sx) % g.nx, (j + sy) % g.ny, (k + sz) % g.nz)];
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn flat_psd_is_uncorrelated() {
        let g = GridSpec::cube(100.0, 100);
        let f = generate_correlated_field(&g, 1e6, 1).unwrap();
        assert!(lag1_autocorrelation(&f).abs() < 0.05);
    }

    #[test]
    fn scaling_hits_targets() {
        let g = GridSpec::cube(1.0, 6);
        let f = generate_correlated_field(&g, 5.0, 2).unwrap();
        let s = scale_field(&f, 18000.0, 5000.0).unwrap();
        assert!((s.mean() - 18000.0).abs() <= 1e-12 * 18000.0);
        assert!((s.std() - 5000.0).abs() <= 1e-12 * 5000.0);
        let argmax = |v: &[f64]| {
            v.iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i)
        };
        assert_eq!(argmax(&f.values), argmax(&s.values));
        let same = scale_field(&s, s.mean(), s.std()).unwrap();
        for (a, b) in same.values.iter().zip(&s.values) {
            assert!((a - b).abs() <= 1e-12 * 18000.0);
        }
        let c = scale_field(&f, 3.0, 0.0).unwrap();
        assert!(c.values.iter().all(|v| *v == 3.0));
        let flat = FieldSample::constant(g, 1.0);
        assert_eq!(scale_field(&flat, 0.0, 1.0), Err(FieldError::DegenerateField));
    }

    #[test]
    fn homogeneous_assignment() {
        let g = GridSpec::cube(1.0, 2);
        let mut fields = BTreeMap::new();
        for (n, v) in [("E", 100.0), ("nu", 0.2), ("su", 3.0)] {
            fields.insert(n.to_string(), FieldSample::constant(g, v));
        }
        let a = assign_properties(CellModel::VonMises, &fields, &BTreeMap::new(), &ClipRules::default()).unwrap();
        assert_eq!(a.cells.len(), 8);
        assert!(a.cells.iter().all(|c| *c == a.cells[0]));
        assert!(a.clipped.is_empty());
    }

    #[test]
    fn heterogeneous_table_assignment() {
        let g = GridSpec::cube(1.0, 8);
        let mut fields = BTreeMap::new();
        let mut homog = BTreeMap::new();
        for (i, (n, m, s)) in heterogeneous_cell_table().into_iter().enumerate() {
            if s > 0.0 {
                let f = generate_correlated_field(&g, 5.0, 100 + i as u64).unwrap();
                fields.insert(n.to_string(), scale_field(&f, m, s).unwrap());
            } else {
                homog.insert(n.to_string(), m);
            }
        }
        homog.insert("H".into(), 1000.0);
        let a = assign_properties(CellModel::LinearDruckerPrager, &fields, &homog, &ClipRules::default()).unwrap();
        assert_eq!(a.cells.len(), 512);
        assert_eq!(a.clipped.get("nu"), None);
        assert_eq!(a.ignored, vec!["K", "R", "alpha", "p0"]);
        for c in &a.cells {
            c.validate().unwrap();
        }
        let mut wrong = fields.clone();
        wrong.insert("E".into(), FieldSample::constant(GridSpec::cube(1.0, 3), 1.0));
        assert!(matches!(
            assign_properties(CellModel::LinearDruckerPrager, &wrong, &homog, &ClipRules::default()),
            Err(FieldError::GridMismatch(_))
        ));
    }

    #[test]
    fn averaged_autocorrelation_matches_psd() {
        let g = GridSpec::cube(4.0, 16);
        let theory = radial_profile(&g, &theoretical_autocorrelation(&g, 5.0));
        let mut acc = vec![0.0; theory.len()];
        let n = 30;
        for seed in 0..n {
            let f = generate_correlated_field(&g, 5.0, seed).unwrap();
            for (a, (_, v)) in acc.iter_mut().zip(radial_profile(&g, &circular_autocorrelation(&f))) {
                *a += v / n as f64;
            }
        }
        let rms = (acc.iter().zip(&theory).map(|(a, (_, t))| (a - t).powi(2)).sum::<f64>() / acc.len() as f64).sqrt();
        assert!(rms < 0.05, "rms {rms}");
        assert!((theory[0].1 - 1.0).abs() < 1e-12);
    }
}
