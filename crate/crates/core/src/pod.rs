//! Proper orthogonal decomposition of internal-coordinate snapshots.
//!
//! Snapshots are stored column-wise (`n_dof × n_snap`). The basis holds the
//! leading left singular vectors; reduced internal state variables are the
//! coefficients `z = Uᵀ ξ`. Snapshots are not centred, so the pristine state
//! maps to `z = 0`.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Largest dimension for which the SVD is taken directly.
const DIRECT_SVD_LIMIT: usize = 1000;
const GRAM_CHUNK: usize = 512;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PodError {
    #[error("requested rank {r} exceeds the available {max}")]
    RankTooLarge { r: usize, max: usize },
    #[error("rank must be at least 1")]
    ZeroRank,
    #[error("vector of length {got} does not match basis with {expected} rows")]
    LayoutMismatch { expected: usize, got: usize },
    #[error("coefficient vector of length {got} does not match rank {expected}")]
    RankMismatch { expected: usize, got: usize },
    #[error("snapshot matrix is empty")]
    Empty,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldDesc {
    pub name: String,
    pub width: usize,
    pub unit: String,
}

/// Row layout of an internal-coordinate vector: `n_units` repeated groups of
/// `fields`, unit-major.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IcLayout {
    pub n_units: usize,
    pub fields: Vec<FieldDesc>,
}

impl IcLayout {
    fn field(name: &str, width: usize, unit: &str) -> FieldDesc {
        FieldDesc {
            name: name.into(),
            width,
            unit: unit.into(),
        }
    }

    /// Integration-point layout `[eps_el(6), eps_pl(6), alpha]`.
    pub fn ruc(n_points: usize) -> Self {
        Self {
            n_units: n_points,
            fields: vec![
                Self::field("eps_el", 6, "strain"),
                Self::field("eps_pl", 6, "strain"),
                Self::field("alpha", 1, "strain"),
            ],
        }
    }

    /// Spring–slider layout `[stretch, slip, max |slip|]` in metres.
    pub fn iwan(n_elements: usize) -> Self {
        Self {
            n_units: n_elements,
            fields: vec![
                Self::field("stretch", 1, "m"),
                Self::field("slip", 1, "m"),
                Self::field("slip_max", 1, "m"),
            ],
        }
    }

    pub fn unit_width(&self) -> usize {
        self.fields.iter().map(|f| f.width).sum()
    }

    pub fn n_dof(&self) -> usize {
        self.n_units * self.unit_width()
    }

    /// Offset of a field within one unit.
    pub fn field_offset(&self, name: &str) -> Option<(usize, usize)> {
        let mut off = 0;
        for f in &self.fields {
            if f.name == name {
                return Some((off, f.width));
            }
            off += f.width;
        }
        None
    }

    /// Rows belonging to a field across all units.
    pub fn field_rows(&self, name: &str) -> Vec<usize> {
        let w = self.unit_width();
        match self.field_offset(name) {
            Some((off, width)) => (0..self.n_units)
                .flat_map(|u| (0..width).map(move |c| u * w + off + c))
                .collect(),
            None => Vec::new(),
        }
    }

    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).unwrap_or_default();
        hex(&Sha256::digest(&bytes))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotMatrix {
    pub data: DMatrix<f64>,
    pub layout: IcLayout,
}

impl SnapshotMatrix {
    pub fn new(data: DMatrix<f64>, layout: IcLayout) -> Result<Self, PodError> {
        if data.nrows() != layout.n_dof() {
            return Err(PodError::LayoutMismatch {
                expected: layout.n_dof(),
                got: data.nrows(),
            });
        }
        Ok(Self { data, layout })
    }

    pub fn from_columns(layout: IcLayout, columns: &[Vec<f64>]) -> Result<Self, PodError> {
        let n = layout.n_dof();
        if let Some(c) = columns.iter().find(|c| c.len() != n) {
            return Err(PodError::LayoutMismatch {
                expected: n,
                got: c.len(),
            });
        }
        let data = DMatrix::from_fn(n, columns.len(), |i, j| columns[j][i]);
        Ok(Self { data, layout })
    }

    pub fn n_dof(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_snap(&self) -> usize {
        self.data.ncols()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PodBasis {
    /// `n_dof × r`, orthonormal columns.
    pub modes: DMatrix<f64>,
    /// All `min(n_dof, n_snap)` singular values, descending.
    pub singular_values: Vec<f64>,
    pub layout: IcLayout,
}

/// Flips each column so its largest-magnitude entry is positive.
fn normalize_signs(u: &mut DMatrix<f64>) {
    for mut col in u.column_iter_mut() {
        let mut best = 0.0_f64;
        let mut sign = 1.0;
        for v in col.iter() {
            if v.abs() > best {
                best = v.abs();
                sign = v.signum();
            }
        }
        if sign < 0.0 {
            col.neg_mut();
        }
    }
}

/// `A Aᵀ` (when `rows`) or `Aᵀ A`, summed over fixed column/row chunks in order.
fn gram(a: &DMatrix<f64>, rows: bool) -> DMatrix<f64> {
    if rows {
        let n = a.nrows();
        let chunks: Vec<(usize, usize)> = (0..a.ncols())
            .step_by(GRAM_CHUNK)
            .map(|s| (s, GRAM_CHUNK.min(a.ncols() - s)))
            .collect();
        let parts: Vec<DMatrix<f64>> = chunks
            .par_iter()
            .map(|&(s, w)| {
                let blk = a.columns(s, w);
                blk * blk.transpose()
            })
            .collect();
        let mut g = DMatrix::zeros(n, n);
        for p in parts {
            g += p;
        }
        g
    } else {
        let m = a.ncols();
        let cols: Vec<DVector<f64>> = (0..m)
            .into_par_iter()
            .map(|j| a.transpose() * a.column(j))
            .collect();
        DMatrix::from_fn(m, m, |i, j| cols[j][i])
    }
}

fn sorted_eigen(g: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = g.nrows();
    let sym = (&g + g.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|a, b| eig.eigenvalues[*b].total_cmp(&eig.eigenvalues[*a]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    (vals, vecs)
}

/// Orthonormalizes columns in place with modified Gram–Schmidt, replacing
/// degenerate columns by completions of the span.
fn orthonormalize(u: &mut DMatrix<f64>) {
    let (n, r) = u.shape();
    let mut next_unit = 0usize;
    for j in 0..r {
        for _pass in 0..2 {
            for k in 0..j {
                let d = u.column(k).dot(&u.column(j));
                let ck = u.column(k).clone_owned();
                u.column_mut(j).axpy(-d, &ck, 1.0);
            }
        }
        let mut nrm = u.column(j).norm();
        while nrm < 1e-8 && next_unit < n {
            let mut e = DVector::zeros(n);
            e[next_unit] = 1.0;
            next_unit += 1;
            u.set_column(j, &e);
            for _pass in 0..2 {
                for k in 0..j {
                    let d = u.column(k).dot(&u.column(j));
                    let ck = u.column(k).clone_owned();
                    u.column_mut(j).axpy(-d, &ck, 1.0);
                }
            }
            nrm = u.column(j).norm();
        }
        u.column_mut(j).scale_mut(1.0 / nrm);
    }
}

/// Left singular vectors and singular values of `a`, descending, thin.
pub fn thin_svd(a: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let (n, m) = a.shape();
    let k = n.min(m);
    if n.max(m) <= DIRECT_SVD_LIMIT {
        let svd = SVD::new(a.clone(), true, false);
        let u = svd.u.unwrap_or_else(|| DMatrix::zeros(n, k));
        let s: Vec<f64> = svd.singular_values.iter().copied().collect();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|x, y| s[*y].total_cmp(&s[*x]));
        let u = DMatrix::from_fn(n, k, |i, j| u[(i, order[j])]);
        return (u, order.iter().map(|&i| s[i]).collect());
    }
    if n <= m {
        let (vals, vecs) = sorted_eigen(gram(a, true));
        let s = vals.iter().map(|v| v.max(0.0).sqrt()).collect();
        (vecs, s)
    } else {
        let (vals, v) = sorted_eigen(gram(a, false));
        let s: Vec<f64> = vals.iter().map(|x| x.max(0.0).sqrt()).collect();
        let mut u = a * &v;
        let tol = s.first().copied().unwrap_or(0.0) * 1e-13;
        for (j, sj) in s.iter().enumerate() {
            if *sj > tol {
                u.column_mut(j).scale_mut(1.0 / sj);
            } else {
                u.column_mut(j).fill(0.0);
            }
        }
        orthonormalize(&mut u);
        (u, s)
    }
}

/// First `r` left singular vectors of the snapshot matrix.
pub fn compute_pod_basis(s: &SnapshotMatrix, r: usize) -> Result<PodBasis, PodError> {
    if s.n_snap() == 0 || s.n_dof() == 0 {
        return Err(PodError::Empty);
    }
    let max = s.n_dof().min(s.n_snap());
    if r == 0 {
        return Err(PodError::ZeroRank);
    }
    if r > max {
        return Err(PodError::RankTooLarge { r, max });
    }
    let (u, sv) = thin_svd(&s.data);
    let mut modes = u.columns(0, r).clone_owned();
    normalize_signs(&mut modes);
    Ok(PodBasis {
        modes,
        singular_values: sv,
        layout: s.layout.clone(),
    })
}

impl PodBasis {
    pub fn rank(&self) -> usize {
        self.modes.ncols()
    }

    pub fn n_dof(&self) -> usize {
        self.modes.nrows()
    }

    /// Leading `r` modes of this basis.
    pub fn truncate(&self, r: usize) -> Result<PodBasis, PodError> {
        if r == 0 {
            return Err(PodError::ZeroRank);
        }
        if r > self.rank() {
            return Err(PodError::RankTooLarge { r, max: self.rank() });
        }
        Ok(PodBasis {
            modes: self.modes.columns(0, r).clone_owned(),
            singular_values: self.singular_values.clone(),
            layout: self.layout.clone(),
        })
    }

    pub fn project(&self, xi: &[f64]) -> Result<Vec<f64>, PodError> {
        if xi.len() != self.n_dof() {
            return Err(PodError::LayoutMismatch {
                expected: self.n_dof(),
                got: xi.len(),
            });
        }
        let v = DVector::from_column_slice(xi);
        Ok((self.modes.transpose() * v).iter().copied().collect())
    }

    /// Same linear map as [`project`](Self::project), applied to IC increments.
    pub fn project_rate(&self, dxi: &[f64]) -> Result<Vec<f64>, PodError> {
        self.project(dxi)
    }

    pub fn reconstruct(&self, z: &[f64]) -> Result<Vec<f64>, PodError> {
        if z.len() != self.rank() {
            return Err(PodError::RankMismatch {
                expected: self.rank(),
                got: z.len(),
            });
        }
        let v = DVector::from_column_slice(z);
        Ok((&self.modes * v).iter().copied().collect())
    }

    /// Projects and reconstructs every column of a matrix.
    pub fn filter(&self, data: &DMatrix<f64>) -> DMatrix<f64> {
        let z = self.modes.transpose() * data;
        &self.modes * z
    }

    pub fn orthonormality_error(&self) -> f64 {
        let g = self.modes.transpose() * &self.modes;
        (g - DMatrix::identity(self.rank(), self.rank())).abs().max()
    }

    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.layout.fingerprint().as_bytes());
        h.update((self.n_dof() as u64).to_le_bytes());
        h.update((self.rank() as u64).to_le_bytes());
        for v in self.modes.iter() {
            h.update(v.to_le_bytes());
        }
        for v in &self.singular_values {
            h.update(v.to_le_bytes());
        }
        hex(&h.finalize())
    }
}

/// `(1 − dim_z/dim_xi) · 100`.
pub fn compression_ratio(dim_z: usize, dim_xi: usize) -> f64 {
    (1.0 - dim_z as f64 / dim_xi as f64) * 100.0
}

/// Smallest `r` with `σ_{r+1}/σ_1 < threshold`; full length if none.
pub fn select_modes_by_singular_threshold(singular_values: &[f64], threshold: f64) -> usize {
    let s1 = match singular_values.first() {
        Some(v) if *v > 0.0 => *v,
        _ => return 0,
    };
    for (i, s) in singular_values.iter().enumerate().skip(1) {
        if s / s1 < threshold {
            return i;
        }
    }
    singular_values.len()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EnergyNorm {
    #[default]
    Max,
    Mean,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyErrorRow {
    pub r: usize,
    pub mean: f64,
    pub std: f64,
    pub mean_abs: f64,
}

/// Normalized macroscopic energy error `(Ψ − Ψ̄)/Ψ_norm` of reconstructed
/// snapshots, where `energy` maps an IC vector to the macroscopic energy.
/// `basis` must hold at least `max(rs)` modes.
pub fn energy_reconstruction_error<F>(
    basis: &PodBasis,
    rs: &[usize],
    snapshots: &DMatrix<f64>,
    energy: F,
    norm: EnergyNorm,
) -> Result<Vec<EnergyErrorRow>, PodError>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if snapshots.nrows() != basis.n_dof() {
        return Err(PodError::LayoutMismatch {
            expected: basis.n_dof(),
            got: snapshots.nrows(),
        });
    }
    let n = snapshots.ncols();
    if n == 0 {
        return Err(PodError::Empty);
    }
    let eval = |m: &DMatrix<f64>| -> Vec<f64> {
        (0..m.ncols())
            .into_par_iter()
            .map(|j| energy(m.column(j).as_slice()))
            .collect()
    };
    let psi = eval(snapshots);
    let scale = match norm {
        EnergyNorm::Max => psi.iter().fold(0.0_f64, |a, v| a.max(v.abs())),
        EnergyNorm::Mean => psi.iter().map(|v| v.abs()).sum::<f64>() / n as f64,
    };
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let mut rows = Vec::with_capacity(rs.len());
    for &r in rs {
        let b = basis.truncate(r)?;
        let rec = eval(&b.filter(snapshots));
        let errs: Vec<f64> = psi.iter().zip(&rec).map(|(a, b)| (a - b) / scale).collect();
        let mean = errs.iter().sum::<f64>() / n as f64;
        let var = errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n as f64;
        let mean_abs = errs.iter().map(|e| e.abs()).sum::<f64>() / n as f64;
        rows.push(EnergyErrorRow {
            r,
            mean,
            std: var.sqrt(),
            mean_abs,
        });
    }
    Ok(rows)
}

/// Mean absolute reconstruction error per named field for a rank-`r` truncation.
pub fn reconstruction_mae(basis: &PodBasis, snapshots: &DMatrix<f64>) -> Vec<(String, f64)> {
    let rec = basis.filter(snapshots);
    let diff = rec - snapshots;
    let mut out = Vec::new();
    for f in &basis.layout.fields {
        let rows = basis.layout.field_rows(&f.name);
        let mut acc = 0.0;
        for &i in &rows {
            acc += diff.row(i).iter().map(|v| v.abs()).sum::<f64>();
        }
        let cnt = (rows.len() * snapshots.ncols()).max(1);
        out.push((f.name.clone(), acc / cnt as f64));
    }
    let total = diff.iter().map(|v| v.abs()).sum::<f64>() / diff.len().max(1) as f64;
    out.push(("all".into(), total));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize, m: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0))
    }

    fn plain(data: DMatrix<f64>) -> SnapshotMatrix {
        let layout = IcLayout {
            n_units: data.nrows(),
            fields: vec![FieldDesc {
                name: "x".into(),
                width: 1,
                unit: "-".into(),
            }],
        };
        SnapshotMatrix::new(data, layout).unwrap()
    }

    #[test]
    fn rank_one_has_single_singular_value() {
        let a = DVector::from_vec(vec![1.0, 2.0, -1.0, 0.5]);
        let b = DVector::from_vec(vec![3.0, 0.0, 1.0]);
        let basis = compute_pod_basis(&plain(&a * b.transpose()), 1).unwrap();
        let s = &basis.singular_values;
        assert!((s[0] - a.norm() * b.norm()).abs() < 1e-12);
        assert!(s[1..].iter().all(|v| *v < 1e-12));
    }

    #[test]
    fn orthogonal_columns_give_column_norms() {
        let mut m = DMatrix::zeros(5, 3);
        m[(0, 0)] = 2.0;
        m[(1, 1)] = -5.0;
        m[(3, 2)] = 1.0;
        let basis = compute_pod_basis(&plain(m), 3).unwrap();
        assert_eq!(basis.singular_values.len(), 3);
        for (a, b) in basis.singular_values.iter().zip([5.0, 2.0, 1.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn eckart_young_on_random_8x5() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random_matrix(&mut rng, 8, 5);
        let basis = compute_pod_basis(&plain(a.clone()), 2).unwrap();
        let s = &basis.singular_values;
        let tail = (s[2] * s[2] + s[3] * s[3] + s[4] * s[4]).sqrt();
        let res = (&a - basis.filter(&a)).norm();
        assert!((res - tail).abs() <= 1e-10 * tail);
        for _ in 0..10_000 {
            let x = random_matrix(&mut rng, 8, 2);
            let y = random_matrix(&mut rng, 2, 5);
            assert!((&a - x * y).norm() >= res);
        }
    }

    #[test]
    fn projection_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_matrix(&mut rng, 12, 7);
        let basis = compute_pod_basis(&plain(a), 4).unwrap();
        assert!(basis.project(&[0.0; 12]).unwrap().iter().all(|v| *v == 0.0));
        for j in 0..4 {
            let col: Vec<f64> = basis.modes.column(j).iter().copied().collect();
            let z = basis.project(&col).unwrap();
            for (i, v) in z.iter().enumerate() {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((v - e).abs() < 1e-12);
            }
        }
        let xi: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let z = basis.project(&xi).unwrap();
        let rec = basis.reconstruct(&z).unwrap();
        let resid: Vec<f64> = xi.iter().zip(&rec).map(|(a, b)| a - b).collect();
        let along = basis.project(&resid).unwrap();
        assert!(along.iter().all(|v| v.abs() < 1e-10));
        let zz = basis.project(&basis.reconstruct(&z).unwrap()).unwrap();
        for (a, b) in z.iter().zip(&zz) {
            assert!((a - b).abs() < 1e-12);
        }
        let zn: f64 = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        let xn: f64 = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(zn <= xn);
        assert!(matches!(basis.project(&[1.0; 3]), Err(PodError::LayoutMismatch { .. })));
    }

    #[test]
    fn rate_projection_is_linear_and_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = random_matrix(&mut rng, 10, 6);
        let basis = compute_pod_basis(&plain(a.clone()), 3).unwrap();
        let x0: Vec<f64> = a.column(0).iter().copied().collect();
        let x1: Vec<f64> = a.column(1).iter().copied().collect();
        let dx: Vec<f64> = x1.iter().zip(&x0).map(|(a, b)| a - b).collect();
        let z0 = basis.project(&x0).unwrap();
        let z1 = basis.project(&x1).unwrap();
        let dz = basis.project_rate(&dx).unwrap();
        let sum: Vec<f64> = x0.iter().zip(&x1).map(|(a, b)| a + b).collect();
        let zs = basis.project_rate(&sum).unwrap();
        for i in 0..3 {
            assert!((z1[i] - z0[i] - dz[i]).abs() < 1e-12);
            assert!((zs[i] - z0[i] - z1[i]).abs() < 1e-12);
        }
        assert!(basis.project_rate(&[0.0; 10]).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn full_rank_reconstruction_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_matrix(&mut rng, 6, 9);
        let basis = compute_pod_basis(&plain(a.clone()), 6).unwrap();
        let xi: Vec<f64> = a.column(4).iter().copied().collect();
        let rec = basis.reconstruct(&basis.project(&xi).unwrap()).unwrap();
        for (x, y) in xi.iter().zip(&rec) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(basis.reconstruct(&[0.0; 6]).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn gram_routes_agree_with_direct_svd() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        // low-rank-plus-noise tall and wide matrices above the direct limit
        for (n, m) in [(1200, 40), (30, 1100)] {
            let l = random_matrix(&mut rng, n, 5);
            let r = random_matrix(&mut rng, 5, m);
            let a = &l * &r + random_matrix(&mut rng, n, m) * 1e-3;
            let (u, s) = thin_svd(&a);
            let direct = SVD::new(a.clone(), false, false);
            let mut ds: Vec<f64> = direct.singular_values.iter().copied().collect();
            ds.sort_by(|x, y| y.total_cmp(x));
            for j in 0..5 {
                assert!((s[j] - ds[j]).abs() <= 1e-9 * ds[0]);
            }
            let ur = u.columns(0, 8).clone_owned();
            let g = ur.transpose() * &ur;
            assert!((g - DMatrix::identity(8, 8)).abs().max() < 1e-10);
        }
    }

    #[test]
    fn sign_convention_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_matrix(&mut rng, 9, 9);
        let b1 = compute_pod_basis(&plain(a.clone()), 5).unwrap();
        let b2 = compute_pod_basis(&plain(a), 5).unwrap();
        assert_eq!(b1.fingerprint(), b2.fingerprint());
        for col in b1.modes.column_iter() {
            let m = col.iter().fold(0.0_f64, |acc, v| if v.abs() > acc.abs() { *v } else { acc });
            assert!(m > 0.0);
        }
    }

    #[test]
    fn rank_errors() {
        let a = DMatrix::from_element(3, 2, 1.0);
        assert_eq!(
            compute_pod_basis(&plain(a.clone()), 3),
            Err(PodError::RankTooLarge { r: 3, max: 2 })
        );
        assert_eq!(compute_pod_basis(&plain(a), 0), Err(PodError::ZeroRank));
    }

    #[test]
    fn compression_ratio_values() {
        assert_eq!(format!("{:.2}", compression_ratio(25, 138775)), "99.98");
        assert_eq!(format!("{:.2}", compression_ratio(25, 92703)), "99.97");
        assert_eq!(compression_ratio(7, 7), 0.0);
    }

    #[test]
    fn singular_threshold_selection() {
        assert_eq!(select_modes_by_singular_threshold(&[1.0, 0.5, 1e-5], 1e-4), 2);
        assert_eq!(select_modes_by_singular_threshold(&[2.0; 5], 1e-4), 5);
    }

    #[test]
    fn energy_error_vanishes_at_full_rank_and_decreases() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a = random_matrix(&mut rng, 10, 40);
        let basis = compute_pod_basis(&plain(a.clone()), 10).unwrap();
        let energy = |x: &[f64]| 0.5 * x.iter().map(|v| v * v).sum::<f64>();
        let rows = energy_reconstruction_error(&basis, &[2, 5, 8, 10], &a, energy, EnergyNorm::Max).unwrap();
        assert!(rows[3].mean_abs < 1e-14);
        for w in rows.windows(2) {
            assert!(w[1].mean_abs <= w[0].mean_abs);
        }
    }

    #[test]
    fn layout_rows() {
        let l = IcLayout::ruc(3);
        assert_eq!(l.n_dof(), 39);
        assert_eq!(l.field_rows("alpha"), vec![12, 25, 38]);
        assert_eq!(l.field_rows("eps_pl")[..2], [6, 7]);
        assert_ne!(l.fingerprint(), IcLayout::ruc(4).fingerprint());
    }
}
