use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::glorot;
use super::optim::Nadam;
use super::scaler::Affine;
use super::train::split_paths;
use super::TannError;
use crate::ensemble::TrainingSample;

const CHUNK: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Quadratic,
    Tanh,
}

impl Activation {
    fn apply(&self, u: f64) -> (f64, f64) {
        match self {
            Activation::Quadratic => (u * u, 2.0 * u),
            Activation::Tanh => {
                let t = u.tanh();
                (t, 1.0 - t * t)
            }
        }
    }
}

/// Regressor `(E_prev, Z_prev, ΔE) → ΔZ` with one hidden layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolutionModel {
    pub n_drive: usize,
    pub r: usize,
    pub hidden: usize,
    pub activation: Activation,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `r × hidden`, row-major.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub input: Affine,
    pub output: Affine,
    pub basis_fingerprint: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvolutionConfig {
    pub hidden: usize,
    pub activation: Activation,
    pub learning_rate: f64,
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
    pub early_stop: Option<f64>,
    pub val_fraction: f64,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            hidden: 100,
            activation: Activation::Quadratic,
            learning_rate: 1e-3,
            batch: 1000,
            epochs: 200,
            seed: 0,
            early_stop: None,
            val_fraction: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvolutionOutcome {
    pub model: EvolutionModel,
    /// `(epoch, train MSE, validation MSE)`.
    pub curves: Vec<(usize, f64, Option<f64>)>,
}

fn raw_input(s: &TrainingSample) -> Vec<f64> {
    let mut y: Vec<f64> = s.drive.iter().zip(&s.d_drive).map(|(e, d)| e - d).collect();
    y.extend(s.z.iter().zip(&s.zdot).map(|(z, d)| z - d));
    y.extend_from_slice(&s.d_drive);
    y
}

impl EvolutionModel {
    pub fn init(n_drive: usize, r: usize, hidden: usize, activation: Activation, seed: u64) -> Self {
        let n_in = 2 * n_drive + r;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            n_drive,
            r,
            hidden,
            activation,
            w1: glorot(&mut rng, hidden * n_in, n_in, hidden),
            b1: vec![0.0; hidden],
            w2: glorot(&mut rng, r * hidden, hidden, r),
            b2: vec![0.0; r],
            input: Affine::identity(n_in),
            output: Affine::identity(r),
            basis_fingerprint: String::new(),
        }
    }

    pub fn n_in(&self) -> usize {
        2 * self.n_drive + self.r
    }

    fn n_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    fn params(&self) -> Vec<f64> {
        [&self.w1[..], &self.b1, &self.w2, &self.b2].concat()
    }

    fn set_params(&mut self, p: &[f64]) {
        let (a, rest) = p.split_at(self.w1.len());
        let (b, rest) = rest.split_at(self.b1.len());
        let (c, d) = rest.split_at(self.w2.len());
        self.w1.copy_from_slice(a);
        self.b1.copy_from_slice(b);
        self.w2.copy_from_slice(c);
        self.b2.copy_from_slice(d);
    }

    fn forward(&self, y: &[f64], u: &mut [f64], act: &mut [f64], dact: &mut [f64]) -> Vec<f64> {
        let n = self.n_in();
        for j in 0..self.hidden {
            let row = &self.w1[j * n..(j + 1) * n];
            u[j] = self.b1[j] + row.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
            let (v, dv) = self.activation.apply(u[j]);
            act[j] = v;
            dact[j] = dv;
        }
        (0..self.r)
            .map(|i| {
                let row = &self.w2[i * self.hidden..(i + 1) * self.hidden];
                self.b2[i] + row.iter().zip(act.iter()).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect()
    }

    /// ISV increment for a drive increment from the state `(e_prev, z_prev)`.
    pub fn predict(&self, e_prev: &[f64], z_prev: &[f64], de: &[f64]) -> Result<Vec<f64>, TannError> {
        if e_prev.len() != self.n_drive || de.len() != self.n_drive || z_prev.len() != self.r {
            return Err(TannError::DimensionMismatch {
                expected: (self.n_drive, self.r),
                got: (e_prev.len(), z_prev.len()),
            });
        }
        let mut raw = e_prev.to_vec();
        raw.extend_from_slice(z_prev);
        raw.extend_from_slice(de);
        let y = self.input.apply(&raw);
        let h = self.hidden;
        let (mut u, mut a, mut da) = (vec![0.0; h], vec![0.0; h], vec![0.0; h]);
        let o = self.forward(&y, &mut u, &mut a, &mut da);
        Ok(self.output.invert(&o))
    }

    fn batch(&self, data: &[&(Vec<f64>, Vec<f64>)], with_grad: bool) -> (f64, Option<Vec<f64>>) {
        let b = data.len().max(1);
        let scale = 1.0 / (b * self.r.max(1)) as f64;
        let np = self.n_params();
        let n = self.n_in();
        let h = self.hidden;
        let parts: Vec<(f64, Option<Vec<f64>>)> = data
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut loss = 0.0;
                let mut grad = with_grad.then(|| vec![0.0; np]);
                let (mut u, mut a, mut da) = (vec![0.0; h], vec![0.0; h], vec![0.0; h]);
                let mut delta_a = vec![0.0; h];
                for (y, t) in chunk.iter().map(|p| (&p.0, &p.1)) {
                    let o = self.forward(y, &mut u, &mut a, &mut da);
                    let err: Vec<f64> = o.iter().zip(t).map(|(p, q)| p - q).collect();
                    loss += err.iter().map(|e| e * e).sum::<f64>();
                    if let Some(g) = grad.as_mut() {
                        let (gw1, rest) = g.split_at_mut(h * n);
                        let (gb1, rest) = rest.split_at_mut(h);
                        let (gw2, gb2) = rest.split_at_mut(self.r * h);
                        delta_a.iter_mut().for_each(|v| *v = 0.0);
                        for i in 0..self.r {
                            let d = 2.0 * err[i] * scale;
                            gb2[i] += d;
                            let row = &self.w2[i * h..(i + 1) * h];
                            let grow = &mut gw2[i * h..(i + 1) * h];
                            for j in 0..h {
                                grow[j] += d * a[j];
                                delta_a[j] += d * row[j];
                            }
                        }
                        for j in 0..h {
                            let du = delta_a[j] * da[j];
                            gb1[j] += du;
                            let grow = &mut gw1[j * n..(j + 1) * n];
                            for k in 0..n {
                                grow[k] += du * y[k];
                            }
                        }
                    }
                }
                (loss, grad)
            })
            .collect();
        let mut loss = 0.0;
        let mut grad = with_grad.then(|| vec![0.0; np]);
        for (l, g) in parts {
            loss += l;
            if let (Some(acc), Some(g)) = (grad.as_mut(), g) {
                acc.iter_mut().zip(g).for_each(|(a, v)| *a += v);
            }
        }
        (loss * scale, grad)
    }
}

/// Fits the evolution regressor on `(E_prev, Z_prev, ΔE) → ΔZ` tuples.
pub fn train_evolution(samples: &[TrainingSample], cfg: &EvolutionConfig) -> Result<EvolutionOutcome, TannError> {
    let first = samples.first().ok_or(TannError::EmptyDataset)?;
    let (nd, r) = (first.drive.len(), first.z.len());
    if cfg.batch == 0 || cfg.hidden == 0 {
        return Err(TannError::InvalidConfig("batch and hidden must be positive".into()));
    }
    let (train_ids, val_ids) = split_paths(samples, cfg.val_fraction, cfg.seed);
    let mut model = EvolutionModel::init(nd, r, cfg.hidden, cfg.activation, cfg.seed);
    let pick = |ids: &[usize]| -> Vec<&TrainingSample> {
        samples.iter().filter(|s| ids.binary_search(&s.path).is_ok()).collect()
    };
    let tr = pick(&train_ids);
    let va = pick(&val_ids);
    let raw_tr: Vec<Vec<f64>> = tr.iter().map(|s| raw_input(s)).collect();
    model.input = Affine::min_max(model.n_in(), raw_tr.iter().map(|v| v.as_slice()));
    model.output = Affine::max_abs(r, tr.iter().map(|s| s.zdot.as_slice()));
    let pack = |set: &[&TrainingSample]| -> Vec<(Vec<f64>, Vec<f64>)> {
        set.iter()
            .map(|s| (model.input.apply(&raw_input(s)), model.output.apply(&s.zdot)))
            .collect()
    };
    let data_tr = pack(&tr);
    let data_va = pack(&va);
    let va_refs: Vec<&(Vec<f64>, Vec<f64>)> = data_va.iter().collect();
    let mut opt = Nadam::new(model.n_params());
    let mut params = model.params();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x0e70_0000_0000_0001);
    let mut order: Vec<usize> = (0..data_tr.len()).collect();
    let mut curves = Vec::new();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut acc = 0.0;
        for chunk in order.chunks(cfg.batch) {
            let batch: Vec<&(Vec<f64>, Vec<f64>)> = chunk.iter().map(|&i| &data_tr[i]).collect();
            let (l, g) = model.batch(&batch, true);
            let g = g.unwrap_or_default();
            if !l.is_finite() || g.iter().any(|v| !v.is_finite()) {
                return Err(TannError::Diverged { epoch });
            }
            acc += l * chunk.len() as f64 / data_tr.len() as f64;
            opt.step(&mut params, &g, cfg.learning_rate);
            model.set_params(&params);
        }
        let val = (!va_refs.is_empty()).then(|| model.batch(&va_refs, false).0);
        curves.push((epoch, acc, val));
        if let Some(th) = cfg.early_stop {
            if val.unwrap_or(acc) <= th {
                break;
            }
        }
    }
    Ok(EvolutionOutcome { model, curves })
}

impl EvolutionModel {
    /// Mean squared error in scaled units on arbitrary samples.
    pub fn mse(&self, samples: &[TrainingSample]) -> f64 {
        let data: Vec<(Vec<f64>, Vec<f64>)> = samples
            .iter()
            .map(|s| (self.input.apply(&raw_input(s)), self.output.apply(&s.zdot)))
            .collect();
        let refs: Vec<&(Vec<f64>, Vec<f64>)> = data.iter().collect();
        self.batch(&refs, false).0
    }

    /// Mean absolute ΔZ error in scaled output units.
    pub fn mae(&self, samples: &[TrainingSample]) -> Result<f64, TannError> {
        let mut acc = 0.0;
        let mut n = 0usize;
        for s in samples {
            let e_prev: Vec<f64> = s.drive.iter().zip(&s.d_drive).map(|(e, d)| e - d).collect();
            let z_prev: Vec<f64> = s.z.iter().zip(&s.zdot).map(|(z, d)| z - d).collect();
            let p = self.output.apply(&self.predict(&e_prev, &z_prev, &s.d_drive)?);
            let t = self.output.apply(&s.zdot);
            acc += p.iter().zip(&t).map(|(a, b)| (a - b).abs()).sum::<f64>();
            n += p.len();
        }
        Ok(acc / n.max(1) as f64)
    }

    /// Finite gradient check helper: flat parameters and batch loss gradient.
    pub fn loss_and_grad(&self, samples: &[TrainingSample]) -> (f64, Vec<f64>) {
        let data: Vec<(Vec<f64>, Vec<f64>)> = samples
            .iter()
            .map(|s| (self.input.apply(&raw_input(s)), self.output.apply(&s.zdot)))
            .collect();
        let refs: Vec<&(Vec<f64>, Vec<f64>)> = data.iter().collect();
        let (l, g) = self.batch(&refs, true);
        (l, g.unwrap_or_default())
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.params()
    }

    pub fn set_flat_params(&mut self, p: &[f64]) {
        self.set_params(p);
    }
}
