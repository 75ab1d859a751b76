//! Heterogeneous integration-point ensemble under uniform macroscopic strain.
//!
//! Every point sees the same strain; macroscopic stress, energy and
//! dissipation are weighted sums. The internal coordinates of a record are all
//! point states flattened as `[eps_el(6), eps_pl(6), alpha]` per point.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plasticity::{integrate_increment, MaterialParams, PlasticityError, PointState};
use crate::pod::{IcLayout, PodBasis, PodError};
use crate::random_field::{generate_correlated_field, scale_field, FieldError, GridSpec};
use crate::tensor::{Rotation3, SymTensor6, TensorUnit};

pub const IC_PER_POINT: usize = 13;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnsembleError {
    #[error("ensemble is empty")]
    Empty,
    #[error("weights must be positive and sum to one (sum = {0})")]
    BadWeights(f64),
    #[error("invalid parameters at point {point}: {source}")]
    InvalidPoint {
        point: usize,
        #[source]
        source: PlasticityError,
    },
    #[error("point {point} failed at increment {increment}: {source}")]
    NonConvergence {
        point: usize,
        increment: usize,
        #[source]
        source: PlasticityError,
    },
    #[error("strain cap {0} cannot be satisfied by the initial state")]
    CapUnreachable(f64),
    #[error("invalid path settings: {0}")]
    InvalidPath(String),
    #[error("basis has {basis} rows but records carry {record} internal coordinates")]
    LayoutMismatch { basis: usize, record: usize },
    #[error(transparent)]
    Pod(#[from] PodError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub points: Vec<(MaterialParams, f64)>,
}

impl Ensemble {
    pub fn new(points: Vec<(MaterialParams, f64)>) -> Result<Self, EnsembleError> {
        if points.is_empty() {
            return Err(EnsembleError::Empty);
        }
        let sum: f64 = points.iter().map(|p| p.1).sum();
        if points.iter().any(|p| !(p.1 > 0.0)) || (sum - 1.0).abs() > 1e-12 {
            return Err(EnsembleError::BadWeights(sum));
        }
        for (i, (p, _)) in points.iter().enumerate() {
            p.validate()
                .map_err(|source| EnsembleError::InvalidPoint { point: i, source })?;
        }
        Ok(Self { points })
    }

    /// Equal weights.
    pub fn uniform(params: Vec<MaterialParams>) -> Result<Self, EnsembleError> {
        let w = 1.0 / params.len().max(1) as f64;
        let n = params.len();
        let mut points: Vec<(MaterialParams, f64)> = params.into_iter().map(|p| (p, w)).collect();
        // absorb the rounding of 1/n into the last weight
        if n > 0 {
            let rest: f64 = points[..n - 1].iter().map(|p| p.1).sum();
            points[n - 1].1 = 1.0 - rest;
        }
        Self::new(points)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn layout(&self) -> IcLayout {
        IcLayout::ruc(self.len())
    }

    pub fn n_ic(&self) -> usize {
        IC_PER_POINT * self.len()
    }

    /// Volume-averaged Helmholtz energy of a flattened IC vector.
    pub fn energy_of_ics(&self, xi: &[f64]) -> f64 {
        self.points
            .iter()
            .enumerate()
            .map(|(i, (p, w))| {
                let b = &xi[i * IC_PER_POINT..(i + 1) * IC_PER_POINT];
                let el = SymTensor6::strain(b[0..6].try_into().unwrap_or([0.0; 6]));
                w * p.helmholtz(&el, b[12])
            })
            .sum()
    }

    /// Weighted elastic stiffness `⟨C⟩` applied to a strain.
    pub fn mean_elastic_stress(&self, eps: &SymTensor6) -> SymTensor6 {
        let mut s = SymTensor6::zero(TensorUnit::Stress);
        for (p, w) in &self.points {
            s += p.elastic_stress(eps) * *w;
        }
        s
    }
}

/// Ellipsoidal inclusion in a voxelized unit cell with correlated
/// perturbations of Young's modulus and cohesion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InclusionCellSpec {
    pub n_side: usize,
    /// Semi-axes as fractions of the cell edge.
    pub semi_axes: [f64; 3],
    pub matrix: MaterialParams,
    pub inclusion: MaterialParams,
    pub kappa: f64,
    pub young_cov: f64,
    pub cohesion_cov: f64,
    pub seed: u64,
}

impl Default for InclusionCellSpec {
    fn default() -> Self {
        Self {
            n_side: 4,
            semi_axes: [0.4, 0.3, 0.25],
            matrix: MaterialParams::drucker_prager(5500.0, 0.3, 32.0, 32.0, 10.0, 4000.0),
            inclusion: MaterialParams::drucker_prager(6500.0, 0.3, 30.0, 30.0, 12.0, 3500.0),
            kappa: 5.0,
            young_cov: 0.1,
            cohesion_cov: 0.2,
            seed: 7,
        }
    }
}

impl InclusionCellSpec {
    pub fn build(&self) -> Result<Ensemble, EnsembleError> {
        let grid = GridSpec::cube(1.0, self.n_side);
        let unit = |seed: u64| -> Result<Vec<f64>, EnsembleError> {
            if self.n_side < 2 {
                return Ok(vec![0.0; grid.len()]);
            }
            let f = generate_correlated_field(&grid, self.kappa, seed)?;
            Ok(scale_field(&f, 0.0, 1.0)?.values)
        };
        let ge = unit(self.seed)?;
        let gc = unit(self.seed.wrapping_add(1))?;
        let mut params = Vec::with_capacity(grid.len());
        for idx in 0..grid.len() {
            let x = grid.centre(idx);
            let r2: f64 = (0..3)
                .map(|a| ((x[a] - 0.5) / self.semi_axes[a]).powi(2))
                .sum();
            let mut p = if r2 <= 1.0 { self.inclusion } else { self.matrix };
            p.young *= (1.0 + self.young_cov * ge[idx]).max(0.05);
            if let crate::plasticity::YieldModel::DruckerPrager { cohesion, .. } = &mut p.model {
                *cohesion *= (1.0 + self.cohesion_cov * gc[idx]).max(0.0);
            }
            params.push(p);
        }
        Ensemble::uniform(params)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrainPath {
    pub increments: Vec<SymTensor6>,
}

impl StrainPath {
    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    pub fn cumulative(&self) -> Vec<SymTensor6> {
        let mut e = SymTensor6::zero(TensorUnit::Strain);
        self.increments
            .iter()
            .map(|d| {
                e += *d;
                e
            })
            .collect()
    }

    pub fn rotate(&self, r: &Rotation3) -> StrainPath {
        StrainPath {
            increments: self.increments.iter().map(|d| d.rotate(r)).collect(),
        }
    }

    /// Increments taking the strain through `targets` in order from zero.
    pub fn from_targets(targets: &[SymTensor6]) -> StrainPath {
        let mut prev = SymTensor6::zero(TensorUnit::Strain);
        StrainPath {
            increments: targets
                .iter()
                .map(|t| {
                    let d = *t - prev;
                    prev = *t;
                    d
                })
                .collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathSettings {
    pub n_inc: usize,
    pub std_dev: f64,
    pub init_vol_strain: f64,
    pub j2_cap: f64,
}

impl Default for PathSettings {
    fn default() -> Self {
        Self {
            n_inc: 1000,
            std_dev: 5e-4,
            init_vol_strain: -5e-4,
            j2_cap: 0.015,
        }
    }
}

fn j2(e: &SymTensor6) -> f64 {
    e.invariants().j2
}

/// Random-walk strain path: a volumetric preload followed by Gaussian
/// increments per Mandel component, kept inside `J2(ε) ≤ cap`.
pub fn generate_strain_path<R: Rng + ?Sized>(
    rng: &mut R,
    s: &PathSettings,
) -> Result<StrainPath, EnsembleError> {
    if s.n_inc == 0 || !(s.std_dev > 0.0) {
        return Err(EnsembleError::InvalidPath("n_inc ≥ 1 and std_dev > 0 required".into()));
    }
    let v = s.init_vol_strain / 3.0;
    let pre = SymTensor6::strain([v, v, v, 0.0, 0.0, 0.0]);
    if !(j2(&pre) <= s.j2_cap) {
        return Err(EnsembleError::CapUnreachable(s.j2_cap));
    }
    let mut incs = Vec::with_capacity(s.n_inc);
    incs.push(pre);
    let mut e = pre;
    for _ in 1..s.n_inc {
        let mut draw = || {
            let mut c = [0.0; 6];
            for x in c.iter_mut() {
                *x = s.std_dev * rng.sample::<f64, _>(StandardNormal);
            }
            SymTensor6::strain(c)
        };
        let mut d = draw();
        let mut tries = 0;
        while j2(&(e + d)) > s.j2_cap && tries < 100 {
            d = draw();
            tries += 1;
        }
        if j2(&(e + d)) > s.j2_cap {
            d = d * cap_scale(&e, &d, s.j2_cap);
        }
        e += d;
        incs.push(d);
    }
    Ok(StrainPath { increments: incs })
}

/// Largest `t ∈ [0, 1]` with `J2(e + t·d) ≤ cap`, given `J2(e) ≤ cap`.
fn cap_scale(e: &SymTensor6, d: &SymTensor6, cap: f64) -> f64 {
    let de = e.deviator();
    let dd = d.deviator();
    // J2(e + t d) = ½|de|² + t de:dd + ½ t²|dd|²
    let a = 0.5 * dd.dot(&dd);
    let b = de.dot(&dd);
    let c = 0.5 * de.dot(&de) - cap;
    if a <= 0.0 {
        return 0.0;
    }
    let disc = (b * b - 4.0 * a * c).max(0.0);
    let t = (-b + disc.sqrt()) / (2.0 * a);
    // stay on the admissible side of the boundary
    let mut t = t.clamp(0.0, 1.0);
    while t > 0.0 && j2(&(*e + *d * t)) > cap {
        t = (t - 1e-15).max(0.0) * (1.0 - 1e-12);
    }
    t
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct PathRecord {
    pub strain: Vec<SymTensor6>,
    pub stress: Vec<SymTensor6>,
    /// Increment-average stress, conjugate to the strain increment.
    pub stress_mid: Vec<SymTensor6>,
    pub psi: Vec<f64>,
    pub d_inc: Vec<f64>,
    /// Flattened internal coordinates after each increment.
    pub xi: Vec<Vec<f64>>,
}

impl PathRecord {
    pub fn len(&self) -> usize {
        self.strain.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strain.is_empty()
    }

    pub fn increments(&self) -> StrainPath {
        StrainPath::from_targets(&self.strain)
    }
}

fn write_ics(out: &mut [f64], s: &PointState) {
    out[0..6].copy_from_slice(&s.eps_el.c);
    out[6..12].copy_from_slice(&s.eps_pl.c);
    out[12] = s.alpha;
}

/// Integrates every point of the ensemble along the path.
pub fn simulate_path(ens: &Ensemble, path: &StrainPath) -> Result<PathRecord, EnsembleError> {
    let n = path.len();
    let np = ens.len();
    // each point is independent; per-point histories merged in point order
    let per_point: Vec<Result<Vec<crate::plasticity::IncrementResult>, EnsembleError>> = ens
        .points
        .par_iter()
        .enumerate()
        .map(|(i, (p, _))| {
            let mut st = PointState::default();
            let mut out = Vec::with_capacity(n);
            for (k, d) in path.increments.iter().enumerate() {
                let r = integrate_increment(p, &st, d).map_err(|source| EnsembleError::NonConvergence {
                    point: i,
                    increment: k,
                    source,
                })?;
                st = r.state;
                out.push(r);
            }
            Ok(out)
        })
        .collect();
    let mut hist = Vec::with_capacity(np);
    for r in per_point {
        hist.push(r?);
    }
    let mut rec = PathRecord::default();
    let mut e = SymTensor6::zero(TensorUnit::Strain);
    for k in 0..n {
        e += path.increments[k];
        let mut sig = SymTensor6::zero(TensorUnit::Stress);
        let mut mid = SymTensor6::zero(TensorUnit::Stress);
        let mut psi = 0.0;
        let mut d = 0.0;
        let mut xi = vec![0.0; IC_PER_POINT * np];
        for (i, (_, w)) in ens.points.iter().enumerate() {
            let r = &hist[i][k];
            sig += r.sigma * *w;
            mid += r.sigma_mid * *w;
            psi += w * r.psi;
            d += w * r.d_inc;
            write_ics(&mut xi[i * IC_PER_POINT..(i + 1) * IC_PER_POINT], &r.state);
        }
        rec.strain.push(e);
        rec.stress.push(sig);
        rec.stress_mid.push(mid);
        rec.psi.push(psi);
        rec.d_inc.push(d);
        rec.xi.push(xi);
    }
    Ok(rec)
}

/// Simulates independent paths concurrently; results returned in input order.
pub fn simulate_paths(ens: &Ensemble, paths: &[StrainPath]) -> Result<Vec<PathRecord>, EnsembleError> {
    paths.par_iter().map(|p| simulate_path(ens, p)).collect()
}

/// Rotates every tensor of a record; scalars and hardening variables are copied.
pub fn augment_rotation(rec: &PathRecord, r: &Rotation3) -> PathRecord {
    let rot = |v: &Vec<SymTensor6>| v.iter().map(|t| t.rotate(r)).collect::<Vec<_>>();
    let xi = rec
        .xi
        .iter()
        .map(|x| {
            let mut out = x.clone();
            for (o, src) in out.chunks_mut(IC_PER_POINT).zip(x.chunks(IC_PER_POINT)) {
                let el = SymTensor6::strain(src[0..6].try_into().unwrap_or([0.0; 6])).rotate(r);
                let pl = SymTensor6::strain(src[6..12].try_into().unwrap_or([0.0; 6])).rotate(r);
                o[0..6].copy_from_slice(&el.c);
                o[6..12].copy_from_slice(&pl.c);
            }
            out
        })
        .collect();
    PathRecord {
        strain: rot(&rec.strain),
        stress: rot(&rec.stress),
        stress_mid: rot(&rec.stress_mid),
        psi: rec.psi.clone(),
        d_inc: rec.d_inc.clone(),
        xi,
    }
}

/// One increment of macroscopic data in physical units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    /// Index of the source path, used for path-wise splits.
    pub path: usize,
    /// Strain (or generalized force for force-driven systems).
    pub drive: Vec<f64>,
    /// Increment of the drive.
    pub d_drive: Vec<f64>,
    pub z: Vec<f64>,
    /// Per-increment ISV rate `Z_t − Z_{t−1}`.
    pub zdot: Vec<f64>,
    /// Stress (or displacement) target.
    pub response: Vec<f64>,
    pub psi: f64,
    pub d: f64,
}

/// Reduced samples `(E, Z, Ż, Σ, Ψ, D)` of records against a basis.
pub fn build_dataset(records: &[PathRecord], basis: &PodBasis) -> Result<Vec<TrainingSample>, EnsembleError> {
    let mut out = Vec::new();
    for (pi, rec) in records.iter().enumerate() {
        let mut z_prev = vec![0.0; basis.rank()];
        let mut e_prev = [0.0; 6];
        for k in 0..rec.len() {
            if rec.xi[k].len() != basis.n_dof() {
                return Err(EnsembleError::LayoutMismatch {
                    basis: basis.n_dof(),
                    record: rec.xi[k].len(),
                });
            }
            let z = basis.project(&rec.xi[k])?;
            let zdot: Vec<f64> = z.iter().zip(&z_prev).map(|(a, b)| a - b).collect();
            let e = rec.strain[k].c;
            let de: Vec<f64> = e.iter().zip(&e_prev).map(|(a, b)| a - b).collect();
            out.push(TrainingSample {
                path: pi,
                drive: e.to_vec(),
                d_drive: de,
                z: z.clone(),
                zdot,
                response: rec.stress[k].c.to_vec(),
                psi: rec.psi[k],
                d: rec.d_inc[k],
            });
            z_prev = z;
            e_prev = e;
        }
    }
    Ok(out)
}

/// Parameter summary of an ensemble (min, max, mean) per scalar.
pub fn parameter_summary(ens: &Ensemble) -> BTreeMap<String, [f64; 3]> {
    let mut m: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (p, _) in &ens.points {
        m.entry("E".into()).or_default().push(p.young);
        m.entry("nu".into()).or_default().push(p.poisson);
        m.entry("H".into()).or_default().push(p.hardening);
        m.entry("strength".into()).or_default().push(p.strength_scale() - 1.0);
    }
    m.into_iter()
        .map(|(k, v)| {
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            (k, [lo, hi, mean])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pod::{compression_ratio, compute_pod_basis, SnapshotMatrix};
    use crate::tensor::random_rotation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dp() -> MaterialParams {
        MaterialParams::drucker_prager(5500.0, 0.3, 32.0, 32.0, 10.0, 4000.0)
    }

    fn short_path(seed: u64, n: usize, std: f64) -> StrainPath {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = PathSettings {
            n_inc: n,
            std_dev: std,
            ..PathSettings::default()
        };
        generate_strain_path(&mut rng, &s).unwrap()
    }

    #[test]
    fn single_increment_is_preload() {
        let p = short_path(1, 1, 5e-4);
        assert_eq!(p.len(), 1);
        let v = -5e-4 / 3.0;
        assert_eq!(p.increments[0].c, [v, v, v, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn default_path_respects_cap_and_is_deterministic() {
        let a = short_path(3, 1000, 5e-4);
        let b = short_path(3, 1000, 5e-4);
        assert_eq!(a, b);
        assert!(a.cumulative().iter().all(|e| j2(e) <= 0.015));
    }

    #[test]
    fn tight_cap_is_enforced_by_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = PathSettings {
            n_inc: 400,
            std_dev: 2e-3,
            init_vol_strain: -5e-4,
            j2_cap: 1e-5,
        };
        let p = generate_strain_path(&mut rng, &s).unwrap();
        let cum = p.cumulative();
        assert!(cum.iter().all(|e| j2(e) <= 1e-5));
        assert!(cum.iter().any(|e| j2(e) > 0.9e-5));
        let bad = PathSettings { j2_cap: -1.0, ..s };
        assert_eq!(generate_strain_path(&mut rng, &bad), Err(EnsembleError::CapUnreachable(-1.0)));
    }

    #[test]
    fn weights_are_validated() {
        assert!(Ensemble::new(vec![(dp(), 0.5)]).is_err());
        assert!(Ensemble::new(vec![(dp(), 1.2), (dp(), -0.2)]).is_err());
        assert!(Ensemble::new(vec![]).is_err());
        let e = Ensemble::uniform(vec![dp(); 3]).unwrap();
        assert!((e.points.iter().map(|p| p.1).sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn degenerate_averages() {
        let path = short_path(5, 60, 1e-3);
        let one = simulate_path(&Ensemble::new(vec![(dp(), 1.0)]).unwrap(), &path).unwrap();
        let mut st = PointState::default();
        for (k, d) in path.increments.iter().enumerate() {
            let r = integrate_increment(&dp(), &st, d).unwrap();
            assert_eq!(one.stress[k], r.sigma);
            assert_eq!(one.psi[k], r.psi);
            st = r.state;
        }
        let two = simulate_path(&Ensemble::new(vec![(dp(), 0.3), (dp(), 0.7)]).unwrap(), &path).unwrap();
        for k in 0..path.len() {
            assert!(two.stress[k].max_abs_diff(&one.stress[k]) <= 1e-12 * (1.0 + one.stress[k].norm()));
            assert!((two.psi[k] - one.psi[k]).abs() <= 1e-12 * (1.0 + one.psi[k]));
        }
    }

    #[test]
    fn elastic_range_matches_mean_stiffness() {
        let spec = InclusionCellSpec {
            matrix: MaterialParams::drucker_prager(5500.0, 0.3, 32.0, 32.0, 1e6, 4000.0),
            inclusion: MaterialParams::drucker_prager(6500.0, 0.3, 30.0, 30.0, 1e6, 3500.0),
            ..InclusionCellSpec::default()
        };
        let ens = spec.build().unwrap();
        assert_eq!(ens.len(), 64);
        let path = short_path(2, 50, 5e-4);
        let rec = simulate_path(&ens, &path).unwrap();
        for k in 0..rec.len() {
            let oracle = ens.mean_elastic_stress(&rec.strain[k]);
            assert!(rec.stress[k].max_abs_diff(&oracle) <= 1e-9);
            assert_eq!(rec.d_inc[k], 0.0);
        }
    }

    #[test]
    fn macroscopic_first_law_and_dissipation() {
        let ens = InclusionCellSpec::default().build().unwrap();
        let path = short_path(4, 200, 1e-3);
        let rec = simulate_path(&ens, &path).unwrap();
        let mut psi0 = 0.0;
        for k in 0..rec.len() {
            let d = path.increments[k];
            let work = rec.stress_mid[k].dot(&d);
            let res = (work - (rec.psi[k] - psi0) - rec.d_inc[k]).abs();
            let scale = (rec.psi[k] - psi0).abs().max(5500.0 * d.norm());
            assert!(res <= 1e-6 * scale);
            assert!(rec.d_inc[k] >= -1e-10);
            assert!((ens.energy_of_ics(&rec.xi[k]) - rec.psi[k]).abs() <= 1e-12 * (1.0 + rec.psi[k]));
            psi0 = rec.psi[k];
        }
        assert!(rec.d_inc.iter().sum::<f64>() > 0.0);
    }

    #[test]
    fn rotation_augmentation_matches_resimulation() {
        let ens = InclusionCellSpec::default().build().unwrap();
        let path = short_path(6, 120, 1e-3);
        let rec = simulate_path(&ens, &path).unwrap();
        let same = augment_rotation(&rec, &Rotation3::identity());
        for k in 0..rec.len() {
            assert!(same.stress[k].max_abs_diff(&rec.stress[k]) < 1e-12);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = random_rotation(&mut rng);
        let aug = augment_rotation(&rec, &r);
        assert_eq!(aug.psi, rec.psi);
        let resim = simulate_path(&ens, &path.rotate(&r)).unwrap();
        for k in 0..rec.len() {
            assert!(aug.stress[k].max_abs_diff(&resim.stress[k]) <= 1e-9);
            assert!((aug.psi[k] - resim.psi[k]).abs() <= 1e-9);
            for (a, b) in aug.xi[k].iter().zip(&resim.xi[k]) {
                assert!((a - b).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn dataset_assembly() {
        let ens = Ensemble::uniform(vec![dp(); 2]).unwrap();
        let zero = StrainPath {
            increments: vec![SymTensor6::zero(TensorUnit::Strain); 5],
        };
        let path = short_path(8, 30, 1e-3);
        let recs = simulate_paths(&ens, &[zero, path]).unwrap();
        let cols: Vec<Vec<f64>> = recs.iter().flat_map(|r| r.xi.clone()).collect();
        let snap = SnapshotMatrix::from_columns(ens.layout(), &cols).unwrap();
        let basis = compute_pod_basis(&snap, 26).unwrap();
        let ds = build_dataset(&recs, &basis).unwrap();
        assert_eq!(ds.len(), 35);
        for s in &ds[..5] {
            assert!(s.z.iter().all(|v| *v == 0.0));
            assert!(s.zdot.iter().all(|v| *v == 0.0));
        }
        for (k, x) in recs[1].xi.iter().enumerate() {
            let rec = basis.reconstruct(&ds[5 + k].z).unwrap();
            for (a, b) in x.iter().zip(&rec) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        let other = compute_pod_basis(&SnapshotMatrix::from_columns(IcLayout::ruc(3), &[vec![1.0; 39]]).unwrap(), 1).unwrap();
        assert!(matches!(build_dataset(&recs, &other), Err(EnsembleError::LayoutMismatch { .. })));
    }

    #[test]
    fn compression_for_64_points() {
        let ens = InclusionCellSpec::default().build().unwrap();
        assert!(compression_ratio(25, ens.n_ic()) >= 96.0);
    }
}
