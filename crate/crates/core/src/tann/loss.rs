use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::EnergyModel;
use crate::ensemble::TrainingSample;

const CHUNK: usize = 250;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LossVariant {
    /// Energy, response, dissipation and dissipation-sign terms.
    #[default]
    Full,
    /// Response and dissipation-sign terms only.
    Reduced,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub psi: f64,
    pub response: f64,
    pub d: f64,
    pub d_sign: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            psi: 1.0,
            response: 1.0,
            d: 1.0,
            d_sign: 1.0,
        }
    }
}

impl LossWeights {
    pub fn for_variant(&self, v: LossVariant) -> Self {
        match v {
            LossVariant::Full => *self,
            LossVariant::Reduced => Self {
                psi: 0.0,
                d: 0.0,
                ..*self
            },
        }
    }

    pub fn any_positive(&self) -> bool {
        [self.psi, self.response, self.d, self.d_sign].iter().any(|w| *w > 0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct LossTerms {
    pub psi: f64,
    pub response: f64,
    pub d: f64,
    pub d_sign: f64,
    pub total: f64,
}

impl LossTerms {
    fn add(&mut self, o: &LossTerms) {
        self.psi += o.psi;
        self.response += o.response;
        self.d += o.d;
        self.d_sign += o.d_sign;
        self.total += o.total;
    }

    fn scale(&mut self, s: f64) {
        self.psi *= s;
        self.response *= s;
        self.d *= s;
        self.d_sign *= s;
        self.total *= s;
    }

    pub fn is_finite(&self) -> bool {
        [self.psi, self.response, self.d, self.d_sign, self.total].iter().all(|v| v.is_finite())
    }
}

/// Sample pre-transformed to the model's scaled space.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub zdot: Vec<f64>,
    pub response_s: Vec<f64>,
    pub psi_s: f64,
    pub d_s: f64,
}

pub fn prepare(m: &EnergyModel, samples: &[TrainingSample]) -> Vec<Prepared> {
    let s = &m.scalers;
    samples
        .iter()
        .map(|t| Prepared {
            x: m.scaled_input(&t.drive, &t.z),
            z: t.z.clone(),
            zdot: t.zdot.clone(),
            response_s: s.response.apply(&t.response),
            psi_s: t.psi / s.psi_scale,
            d_s: t.d / s.d_scale,
        })
        .collect()
}

/// Scaled predictions of one prepared sample.
pub struct ScaledPrediction {
    pub psi_s: f64,
    pub response_s: Vec<f64>,
    pub d_s: f64,
    pub g: Vec<f64>,
}

pub fn predict_scaled(m: &EnergyModel, p: &Prepared, x0: &[f64]) -> ScaledPrediction {
    let s = &m.scalers;
    let nd = m.n_drive;
    let (mut psi_s, g) = m.forward_scaled(&p.x, x0);
    let sign = m.potential.sign();
    let response_s = (0..nd)
        .map(|k| s.response.a[k] * sign * s.psi_scale * s.drive.a[k] * g[k] + s.response.c[k])
        .collect();
    let mut d_s = -(s.psi_scale / s.d_scale)
        * (0..m.r).map(|k| s.z.a[k] * p.zdot[k] * g[nd + k]).sum::<f64>();
    if let Some(off) = &m.z_offset {
        psi_s += off.value(&p.z) / s.psi_scale;
        let dg = off.gradient(&p.z);
        d_s -= dg.iter().zip(&p.zdot).map(|(a, b)| a * b).sum::<f64>() / s.d_scale;
    }
    ScaledPrediction {
        psi_s,
        response_s,
        d_s,
        g,
    }
}

fn sample_terms(p: &Prepared, psi_s: f64, response_s: &[f64], d_s: f64) -> LossTerms {
    let e_psi = psi_s - p.psi_s;
    let resp = response_s
        .iter()
        .zip(&p.response_s)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / response_s.len() as f64;
    let e_d = d_s - p.d_s;
    let neg = (-d_s).max(0.0);
    LossTerms {
        psi: e_psi * e_psi,
        response: resp,
        d: e_d * e_d,
        d_sign: neg * neg,
        total: 0.0,
    }
}

/// Loss terms and parameter gradient of one chunk, as dense products.
///
/// With pre-activations `R = X W₁ᵀ + b₁` the scaled input gradient is
/// `G = 2 (R·diag w₂) W₁`; a cotangent `V` on `G` and `c` on the energy give
/// `∂/∂W₁ = 2 diag(w₂) [(diag(c) R + V W₁ᵀ)ᵀ X + Rᵀ V − Σc · r₀ x₀ᵀ]`.
#[allow(clippy::too_many_arguments)]
fn chunk_pass(
    m: &EnergyModel,
    w1: &DMatrix<f64>,
    r0: &[f64],
    x0: &[f64],
    chunk: &[&Prepared],
    w: &LossWeights,
    inv_b: f64,
    with_grad: bool,
) -> (LossTerms, Option<Vec<f64>>) {
    let s = &m.scalers;
    let (b, n, h, nd) = (chunk.len(), m.n_in(), m.hidden, m.n_drive);
    let sign = m.potential.sign();
    let ratio = s.psi_scale / s.d_scale;
    let x = DMatrix::from_fn(b, n, |i, k| chunk[i].x[k]);
    let mut pre = &x * w1.transpose();
    for j in 0..h {
        pre.column_mut(j).add_scalar_mut(m.b1[j]);
    }
    let mut wr = pre.clone();
    for j in 0..h {
        wr.column_mut(j).scale_mut(2.0 * m.w2[j]);
    }
    let g = &wr * w1;
    let psi0: f64 = (0..h).map(|j| m.w2[j] * r0[j] * r0[j]).sum();
    let resp_coef: Vec<f64> = (0..nd).map(|k| s.response.a[k] * sign * s.psi_scale * s.drive.a[k]).collect();

    let mut terms = LossTerms::default();
    let mut v = DMatrix::zeros(if with_grad { b } else { 0 }, n);
    let mut c_psi = vec![0.0; b];
    let mut response_s = vec![0.0; nd];
    for (i, p) in chunk.iter().enumerate() {
        let mut psi_s = (0..h).map(|j| m.w2[j] * pre[(i, j)] * pre[(i, j)]).sum::<f64>() - psi0;
        for k in 0..nd {
            response_s[k] = resp_coef[k] * g[(i, k)] + s.response.c[k];
        }
        let mut d_s = -ratio * (0..m.r).map(|k| s.z.a[k] * p.zdot[k] * g[(i, nd + k)]).sum::<f64>();
        if let Some(off) = &m.z_offset {
            psi_s += off.value(&p.z) / s.psi_scale;
            let dg = off.gradient(&p.z);
            d_s -= dg.iter().zip(&p.zdot).map(|(a, b)| a * b).sum::<f64>() / s.d_scale;
        }
        terms.add(&sample_terms(p, psi_s, &response_s, d_s));
        if with_grad {
            c_psi[i] = w.psi * 2.0 * (psi_s - p.psi_s) * inv_b;
            for k in 0..nd {
                v[(i, k)] = w.response * 2.0 * (response_s[k] - p.response_s[k]) * resp_coef[k] * inv_b / nd as f64;
            }
            let dd = (w.d * 2.0 * (d_s - p.d_s) - w.d_sign * 2.0 * (-d_s).max(0.0)) * inv_b;
            if dd != 0.0 {
                for k in 0..m.r {
                    v[(i, nd + k)] = -dd * ratio * s.z.a[k] * p.zdot[k];
                }
            }
        }
    }
    if !with_grad {
        return (terms, None);
    }
    let wv = &v * w1.transpose();
    let mut grad = vec![0.0; m.n_params()];
    let (gw1, rest) = grad.split_at_mut(h * n);
    let (gb1, gw2) = rest.split_at_mut(h);
    let mut a = wv.clone();
    for j in 0..h {
        let mut acc_w2 = 0.0;
        let mut acc_b1 = 0.0;
        for i in 0..b {
            let rij = pre[(i, j)];
            acc_w2 += c_psi[i] * (rij * rij - r0[j] * r0[j]) + 2.0 * rij * wv[(i, j)];
            acc_b1 += c_psi[i] * (rij - r0[j]) + wv[(i, j)];
            a[(i, j)] += c_psi[i] * rij;
        }
        gw2[j] = acc_w2;
        gb1[j] = 2.0 * m.w2[j] * acc_b1;
    }
    let gm = a.tr_mul(&x) + pre.tr_mul(&v);
    let sum_c: f64 = c_psi.iter().sum();
    for j in 0..h {
        let f = 2.0 * m.w2[j];
        for k in 0..n {
            gw1[j * n + k] = f * (gm[(j, k)] - sum_c * r0[j] * x0[k]);
        }
    }
    (terms, Some(grad))
}

/// Weighted loss terms over a batch and, if requested, the parameter gradient.
pub fn batch_loss(
    m: &EnergyModel,
    batch: &[&Prepared],
    weights: &LossWeights,
    with_grad: bool,
) -> (LossTerms, Option<Vec<f64>>) {
    let b = batch.len();
    if b == 0 {
        return (LossTerms::default(), with_grad.then(|| vec![0.0; m.n_params()]));
    }
    let inv_b = 1.0 / b as f64;
    let x0 = m.scaled_origin();
    let n = m.n_in();
    let w1 = DMatrix::from_row_slice(m.hidden, n, &m.w1);
    let r0: Vec<f64> = (0..m.hidden)
        .map(|j| m.b1[j] + (0..n).map(|k| m.w1[j * n + k] * x0[k]).sum::<f64>())
        .collect();
    let np = m.n_params();
    let parts: Vec<(LossTerms, Option<Vec<f64>>)> = batch
        .par_chunks(CHUNK)
        .map(|chunk| chunk_pass(m, &w1, &r0, &x0, chunk, weights, inv_b, with_grad))
        .collect();
    let mut terms = LossTerms::default();
    let mut grad = with_grad.then(|| vec![0.0; np]);
    for (t, g) in parts {
        terms.add(&t);
        if let (Some(acc), Some(g)) = (grad.as_mut(), g) {
            for (a, v) in acc.iter_mut().zip(g) {
                *a += v;
            }
        }
    }
    terms.scale(inv_b);
    terms.total = weights.psi * terms.psi
        + weights.response * terms.response
        + weights.d * terms.d
        + weights.d_sign * terms.d_sign;
    (terms, grad)
}

/// Loss on raw samples (prepares them against the model's scalers).
pub fn loss(m: &EnergyModel, samples: &[TrainingSample], weights: &LossWeights) -> LossTerms {
    let prepared = prepare(m, samples);
    let refs: Vec<&Prepared> = prepared.iter().collect();
    batch_loss(m, &refs, weights, false).0
}
