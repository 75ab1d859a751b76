use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scaler::{Affine, EnergyScalers};
use super::TannError;

/// Potential represented by the network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Potential {
    /// Strain-driven; response is `+∂Ψ/∂drive` (stress).
    #[default]
    Helmholtz,
    /// Force-driven; response is `−∂Φ/∂drive` (displacement).
    Gibbs,
}

impl Potential {
    pub fn sign(&self) -> f64 {
        match self {
            Potential::Helmholtz => 1.0,
            Potential::Gibbs => -1.0,
        }
    }
}

/// `g(Z) = ½ Zᵀ Q Z + qᵀ Z` in physical energy units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZQuadratic {
    /// Row-major `r × r`, symmetric.
    pub q_mat: Vec<f64>,
    pub lin: Vec<f64>,
}

impl ZQuadratic {
    pub fn zero(r: usize) -> Self {
        Self {
            q_mat: vec![0.0; r * r],
            lin: vec![0.0; r],
        }
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R, r: usize, scale: f64) -> Self {
        let mut q = vec![0.0; r * r];
        for i in 0..r {
            for j in i..r {
                let v = scale * rng.random_range(-1.0..1.0);
                q[i * r + j] = v;
                q[j * r + i] = v;
            }
        }
        Self {
            q_mat: q,
            lin: (0..r).map(|_| scale * rng.random_range(-1.0..1.0)).collect(),
        }
    }

    pub fn value(&self, z: &[f64]) -> f64 {
        let r = z.len();
        let mut v = 0.0;
        for i in 0..r {
            v += self.lin[i] * z[i];
            for j in 0..r {
                v += 0.5 * z[i] * self.q_mat[i * r + j] * z[j];
            }
        }
        v
    }

    pub fn gradient(&self, z: &[f64]) -> Vec<f64> {
        let r = z.len();
        (0..r)
            .map(|i| self.lin[i] + (0..r).map(|j| self.q_mat[i * r + j] * z[j]).sum::<f64>())
            .collect()
    }
}

/// Single-hidden-layer quadratic network for an energy potential.
///
/// With scaled input `x = [drive_s, z_s]` and scaled pristine input `x0`,
/// `Ψ̂_s(x) = Σ_j w_j [(W_j·x + b_j)² − (W_j·x0 + b_j)²]`, so `Ψ̂(0, 0) = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyModel {
    pub n_drive: usize,
    pub r: usize,
    pub hidden: usize,
    pub potential: Potential,
    /// `hidden × n_in`, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub scalers: EnergyScalers,
    pub basis_fingerprint: String,
    #[serde(default)]
    pub z_offset: Option<ZQuadratic>,
}

/// Physical-unit outputs at one state.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyEval {
    pub psi: f64,
    pub response: Vec<f64>,
    /// `∂Ψ/∂Z` in physical units.
    pub dpsi_dz: Vec<f64>,
}

/// Glorot-uniform draw for `n` weights.
pub(crate) fn glorot(rng: &mut ChaCha8Rng, n: usize, fan_in: usize, fan_out: usize) -> Vec<f64> {
    let lim = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..n).map(|_| rng.random_range(-lim..lim)).collect()
}

impl EnergyModel {
    /// Glorot-initialized network with identity scalers.
    pub fn init(n_drive: usize, r: usize, hidden: usize, seed: u64) -> Self {
        let n_in = n_drive + r;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w1 = glorot(&mut rng, hidden * n_in, n_in, hidden);
        let w2 = glorot(&mut rng, hidden, hidden, 1);
        Self {
            n_drive,
            r,
            hidden,
            potential: Potential::Helmholtz,
            w1,
            b1: vec![0.0; hidden],
            w2,
            scalers: EnergyScalers::identity(n_drive, r),
            basis_fingerprint: String::new(),
            z_offset: None,
        }
    }

    pub fn n_in(&self) -> usize {
        self.n_drive + self.r
    }

    pub fn n_params(&self) -> usize {
        self.hidden * self.n_in() + 2 * self.hidden
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.n_params());
        p.extend_from_slice(&self.w1);
        p.extend_from_slice(&self.b1);
        p.extend_from_slice(&self.w2);
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let a = self.w1.len();
        let h = self.hidden;
        self.w1.copy_from_slice(&p[..a]);
        self.b1.copy_from_slice(&p[a..a + h]);
        self.w2.copy_from_slice(&p[a + h..a + 2 * h]);
    }

    pub fn check_dims(&self, drive: &[f64], z: &[f64]) -> Result<(), TannError> {
        if drive.len() != self.n_drive || z.len() != self.r {
            return Err(TannError::DimensionMismatch {
                expected: (self.n_drive, self.r),
                got: (drive.len(), z.len()),
            });
        }
        Ok(())
    }

    pub fn scaled_input(&self, drive: &[f64], z: &[f64]) -> Vec<f64> {
        let mut x = self.scalers.drive.apply(drive);
        x.extend(self.scalers.z.apply(z));
        x
    }

    pub fn scaled_origin(&self) -> Vec<f64> {
        let mut x = self.scalers.drive.c.clone();
        x.extend_from_slice(&self.scalers.z.c);
        x
    }

    fn pre_activation(&self, x: &[f64], out: &mut [f64]) {
        let n = self.n_in();
        for (j, o) in out.iter_mut().enumerate() {
            let row = &self.w1[j * n..(j + 1) * n];
            *o = self.b1[j] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    /// Scaled energy and its gradient with respect to the scaled input.
    pub fn forward_scaled(&self, x: &[f64], x0: &[f64]) -> (f64, Vec<f64>) {
        let n = self.n_in();
        let mut r = vec![0.0; self.hidden];
        let mut r0 = vec![0.0; self.hidden];
        self.pre_activation(x, &mut r);
        self.pre_activation(x0, &mut r0);
        let mut psi = 0.0;
        let mut g = vec![0.0; n];
        for j in 0..self.hidden {
            psi += self.w2[j] * (r[j] * r[j] - r0[j] * r0[j]);
            let c = 2.0 * self.w2[j] * r[j];
            let row = &self.w1[j * n..(j + 1) * n];
            for (gk, wk) in g.iter_mut().zip(row) {
                *gk += c * wk;
            }
        }
        (psi, g)
    }

    /// Energy, response and `∂Ψ/∂Z` in physical units.
    pub fn evaluate(&self, drive: &[f64], z: &[f64]) -> Result<EnergyEval, TannError> {
        self.check_dims(drive, z)?;
        let x = self.scaled_input(drive, z);
        let (psi_s, g) = self.forward_scaled(&x, &self.scaled_origin());
        let s = &self.scalers;
        let sign = self.potential.sign();
        let response = (0..self.n_drive)
            .map(|k| sign * s.psi_scale * s.drive.a[k] * g[k])
            .collect();
        let mut dpsi_dz: Vec<f64> = (0..self.r)
            .map(|k| s.psi_scale * s.z.a[k] * g[self.n_drive + k])
            .collect();
        let mut psi = s.psi_scale * psi_s;
        if let Some(off) = &self.z_offset {
            psi += off.value(z);
            for (d, o) in dpsi_dz.iter_mut().zip(off.gradient(z)) {
                *d += o;
            }
        }
        Ok(EnergyEval {
            psi,
            response,
            dpsi_dz,
        })
    }

    pub fn forward_energy(&self, drive: &[f64], z: &[f64]) -> Result<f64, TannError> {
        Ok(self.evaluate(drive, z)?.psi)
    }

    /// Stress (Helmholtz) or displacement (Gibbs) in physical units.
    pub fn response(&self, drive: &[f64], z: &[f64]) -> Result<Vec<f64>, TannError> {
        Ok(self.evaluate(drive, z)?.response)
    }

    /// `−∂Ψ/∂Z · Ż` in physical units.
    pub fn dissipation(&self, drive: &[f64], z: &[f64], zdot: &[f64]) -> Result<f64, TannError> {
        if zdot.len() != self.r {
            return Err(TannError::DimensionMismatch {
                expected: (self.n_drive, self.r),
                got: (drive.len(), zdot.len()),
            });
        }
        let e = self.evaluate(drive, z)?;
        Ok(-e.dpsi_dz.iter().zip(zdot).map(|(a, b)| a * b).sum::<f64>())
    }

    /// Same network plus a drive-independent energy `g(Z)`.
    pub fn add_z_offset(&self, g: ZQuadratic) -> EnergyModel {
        let mut m = self.clone();
        m.z_offset = Some(match &self.z_offset {
            Some(prev) => ZQuadratic {
                q_mat: prev.q_mat.iter().zip(&g.q_mat).map(|(a, b)| a + b).collect(),
                lin: prev.lin.iter().zip(&g.lin).map(|(a, b)| a + b).collect(),
            },
            None => g,
        });
        m
    }

    pub fn with_scalers(mut self, scalers: EnergyScalers) -> Self {
        self.scalers = scalers;
        self
    }

    /// Scaled response target for a physical response.
    pub fn scale_response(&self, resp: &[f64]) -> Vec<f64> {
        self.scalers.response.apply(resp)
    }

    pub fn response_scaler(&self) -> &Affine {
        &self.scalers.response
    }
}
