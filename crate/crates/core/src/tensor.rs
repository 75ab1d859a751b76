//! Symmetric second-order tensors in orthonormal (Mandel) 6-vector form and
//! proper rotations.
//!
//! Component ordering is `[a11, a22, a33, √2·a23, √2·a13, √2·a12]`, so the
//! Euclidean inner product of two vectors equals the double contraction of the
//! corresponding 3×3 tensors.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Orthogonality residual above which a matrix is rejected as a rotation.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum TensorError {
    #[error("matrix is not a proper rotation (orthogonality residual {residual:.3e}, det {det:.6})")]
    NotARotation { residual: f64, det: f64 },
}

/// Physical meaning of a tensor's components.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum TensorUnit {
    /// Dimensionless small strain.
    #[default]
    Strain,
    /// Stress in kPa.
    Stress,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymTensor6 {
    pub c: [f64; 6],
    pub unit: TensorUnit,
}

/// Scalar invariants of a symmetric tensor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Invariants {
    /// Trace.
    pub i1: f64,
    /// Second invariant of the deviator, ½ s:s.
    pub j2: f64,
    /// Mean value I1/3.
    pub p: f64,
    /// Equivalent value √(3 J2).
    pub q: f64,
}

impl SymTensor6 {
    pub const fn new(c: [f64; 6], unit: TensorUnit) -> Self {
        Self { c, unit }
    }

    pub const fn strain(c: [f64; 6]) -> Self {
        Self::new(c, TensorUnit::Strain)
    }

    pub const fn stress(c: [f64; 6]) -> Self {
        Self::new(c, TensorUnit::Stress)
    }

    pub const fn zero(unit: TensorUnit) -> Self {
        Self::new([0.0; 6], unit)
    }

    /// Second-order identity (Kronecker delta).
    pub const fn identity(unit: TensorUnit) -> Self {
        Self::new([1.0, 1.0, 1.0, 0.0, 0.0, 0.0], unit)
    }

    pub fn from_matrix(m: &[[f64; 3]; 3], unit: TensorUnit) -> Self {
        Self::new(
            [
                m[0][0],
                m[1][1],
                m[2][2],
                SQRT2 * m[1][2],
                SQRT2 * m[0][2],
                SQRT2 * m[0][1],
            ],
            unit,
        )
    }

    pub fn to_matrix(&self) -> [[f64; 3]; 3] {
        let c = &self.c;
        let a23 = c[3] / SQRT2;
        let a13 = c[4] / SQRT2;
        let a12 = c[5] / SQRT2;
        [[c[0], a12, a13], [a12, c[1], a23], [a13, a23, c[2]]]
    }

    pub fn with_unit(mut self, unit: TensorUnit) -> Self {
        self.unit = unit;
        self
    }

    /// Double contraction `self : other`.
    pub fn dot(&self, other: &Self) -> f64 {
        self.c.iter().zip(other.c.iter()).map(|(a, b)| a * b).sum()
    }

    /// Frobenius norm of the 3×3 tensor.
    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn trace(&self) -> f64 {
        self.c[0] + self.c[1] + self.c[2]
    }

    pub fn deviator(&self) -> Self {
        let p = self.trace() / 3.0;
        let mut d = *self;
        for v in d.c.iter_mut().take(3) {
            *v -= p;
        }
        d
    }

    pub fn invariants(&self) -> Invariants {
        let i1 = self.trace();
        let s = self.deviator();
        let j2 = 0.5 * s.dot(&s);
        Invariants {
            i1,
            j2,
            p: i1 / 3.0,
            q: (3.0 * j2).sqrt(),
        }
    }

    /// Representation of `R · T · Rᵀ`.
    pub fn rotate(&self, r: &Rotation3) -> Self {
        let t = self.to_matrix();
        let m = &r.m;
        let mut rt = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                rt[i][j] = (0..3).map(|k| m[i][k] * t[k][j]).sum();
            }
        }
        let mut out = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                out[i][j] = (0..3).map(|k| rt[i][k] * m[j][k]).sum();
            }
        }
        // enforce exact symmetry before packing
        for i in 0..3 {
            for j in (i + 1)..3 {
                let avg = 0.5 * (out[i][j] + out[j][i]);
                out[i][j] = avg;
                out[j][i] = avg;
            }
        }
        Self::from_matrix(&out, self.unit)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.c
            .iter()
            .zip(other.c.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl Default for SymTensor6 {
    fn default() -> Self {
        Self::zero(TensorUnit::Strain)
    }
}

impl Add for SymTensor6 {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        for (a, b) in self.c.iter_mut().zip(rhs.c.iter()) {
            *a += b;
        }
        self
    }
}

impl AddAssign for SymTensor6 {
    fn add_assign(&mut self, rhs: Self) {
        for (a, b) in self.c.iter_mut().zip(rhs.c.iter()) {
            *a += b;
        }
    }
}

impl Sub for SymTensor6 {
    type Output = Self;
    fn sub(mut self, rhs: Self) -> Self {
        for (a, b) in self.c.iter_mut().zip(rhs.c.iter()) {
            *a -= b;
        }
        self
    }
}

impl Neg for SymTensor6 {
    type Output = Self;
    fn neg(mut self) -> Self {
        for a in self.c.iter_mut() {
            *a = -*a;
        }
        self
    }
}

impl Mul<f64> for SymTensor6 {
    type Output = Self;
    fn mul(mut self, rhs: f64) -> Self {
        for a in self.c.iter_mut() {
            *a *= rhs;
        }
        self
    }
}

/// A proper rotation of 3D space, stored row-major.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rotation3 {
    m: [[f64; 3]; 3],
}

impl Rotation3 {
    pub const fn identity() -> Self {
        Self {
            m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    /// Validates orthogonality (`‖R Rᵀ − I‖_max ≤ 1e-9`) and `det R = +1`.
    pub fn new(m: [[f64; 3]; 3]) -> Result<Self, TensorError> {
        let r = Self { m };
        let residual = r.orthogonality_residual();
        let det = r.det();
        if residual > ROTATION_TOLERANCE || (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(TensorError::NotARotation { residual, det });
        }
        Ok(r)
    }

    pub fn from_row_major(v: &[f64; 9]) -> Result<Self, TensorError> {
        Self::new([[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]])
    }

    /// Rotation for an (unnormalized, non-zero) quaternion `w + xi + yj + zk`.
    pub fn from_quaternion(w: f64, x: f64, y: f64, z: f64) -> Self {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        let (w, x, y, z) = (w / n, x / n, y / n, z / n);
        Self {
            m: [
                [
                    1.0 - 2.0 * (y * y + z * z),
                    2.0 * (x * y - w * z),
                    2.0 * (x * z + w * y),
                ],
                [
                    2.0 * (x * y + w * z),
                    1.0 - 2.0 * (x * x + z * z),
                    2.0 * (y * z - w * x),
                ],
                [
                    2.0 * (x * z - w * y),
                    2.0 * (y * z + w * x),
                    1.0 - 2.0 * (x * x + y * y),
                ],
            ],
        }
    }

    /// Rotation about a coordinate axis (0 = x, 1 = y, 2 = z).
    pub fn about_axis(axis: usize, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        let m = match axis {
            0 => [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]],
            1 => [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]],
            _ => [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]],
        };
        Self { m }
    }

    pub fn matrix(&self) -> &[[f64; 3]; 3] {
        &self.m
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        let m = &self.m;
        [
            m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
        ]
    }

    /// Matrix product `self · other` (apply `other` first).
    pub fn compose(&self, other: &Self) -> Self {
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| self.m[i][k] * other.m[k][j]).sum();
            }
        }
        Self { m }
    }

    pub fn transpose(&self) -> Self {
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.m[j][i];
            }
        }
        Self { m }
    }

    pub fn det(&self) -> f64 {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// `max |R Rᵀ − I|`.
    pub fn orthogonality_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = (0..3).map(|k| self.m[i][k] * self.m[j][k]).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((v - target).abs());
            }
        }
        worst
    }
}

impl Default for Rotation3 {
    fn default() -> Self {
        Self::identity()
    }
}

/// Haar-uniform rotation from a normalized Gaussian quaternion.
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> Rotation3 {
    loop {
        let w: f64 = rng.sample(StandardNormal);
        let x: f64 = rng.sample(StandardNormal);
        let y: f64 = rng.sample(StandardNormal);
        let z: f64 = rng.sample(StandardNormal);
        if w * w + x * x + y * y + z * z > 1e-12 {
            return Rotation3::from_quaternion(w, x, y, z);
        }
    }
}

/// 6×6 matrix acting on Mandel vectors.
pub type Mandel66 = [[f64; 6]; 6];

pub fn mat66_vec(m: &Mandel66, v: &[f64; 6]) -> [f64; 6] {
    let mut out = [0.0; 6];
    for (o, row) in out.iter_mut().zip(m.iter()) {
        *o = row.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
    }
    out
}
