use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{batch_loss, prepare, LossTerms, LossVariant, LossWeights, Prepared};
use super::model::{EnergyModel, Potential};
use super::optim::Nadam;
use super::scaler::EnergyScalers;
use super::TannError;
use crate::ensemble::TrainingSample;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub variant: LossVariant,
    pub weights: LossWeights,
    pub learning_rate: f64,
    pub batch: usize,
    pub epochs: usize,
    pub hidden: usize,
    pub seed: u64,
    /// Stop once the validation (or training, without validation) loss drops to this.
    pub early_stop: Option<f64>,
    pub val_fraction: f64,
    pub potential: Potential,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            variant: LossVariant::Full,
            weights: LossWeights::default(),
            learning_rate: 5e-5,
            batch: 1000,
            epochs: 1000,
            hidden: 100,
            seed: 0,
            early_stop: None,
            val_fraction: 0.1,
            potential: Potential::Helmholtz,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train: LossTerms,
    pub val: Option<LossTerms>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub model: EnergyModel,
    pub curves: Vec<EpochRecord>,
    pub early_stopped: bool,
    pub train_paths: Vec<usize>,
    pub val_paths: Vec<usize>,
}

/// Splits path ids into (train, validation), holding out a `fraction` of
/// whole paths. With a single path nothing is held out.
pub fn split_paths(samples: &[TrainingSample], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let ids: Vec<usize> = samples.iter().map(|s| s.path).collect::<BTreeSet<_>>().into_iter().collect();
    if ids.len() < 2 || fraction <= 0.0 {
        return (ids, Vec::new());
    }
    let mut shuffled = ids.clone();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ split_tag()));
    let n_val = ((ids.len() as f64 * fraction).ceil() as usize).clamp(1, ids.len() - 1);
    let mut val: Vec<usize> = shuffled[..n_val].to_vec();
    let mut train: Vec<usize> = shuffled[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    (train, val)
}

// Keep the split and shuffling streams apart from the initialization stream.
fn split_tag() -> u64 {
    0x5eed_0000_0000_5717
}

fn shuffle_tag() -> u64 {
    0x5eed_0000_0000_0b47
}

fn select<'a>(samples: &'a [TrainingSample], ids: &[usize]) -> Vec<&'a TrainingSample> {
    samples.iter().filter(|s| ids.binary_search(&s.path).is_ok()).collect()
}

/// Trains an energy model on physical-unit samples. Scalers are fitted on
/// the training split.
pub fn train(samples: &[TrainingSample], cfg: &TrainConfig) -> Result<TrainOutcome, TannError> {
    let first = samples.first().ok_or(TannError::EmptyDataset)?;
    let n_drive = first.drive.len();
    let r = first.z.len();
    let weights = cfg.weights.for_variant(cfg.variant);
    if !weights.any_positive() {
        return Err(TannError::InvalidConfig("at least one loss weight must be positive".into()));
    }
    if cfg.batch == 0 || cfg.hidden == 0 {
        return Err(TannError::InvalidConfig("batch and hidden must be positive".into()));
    }
    let (train_ids, val_ids) = split_paths(samples, cfg.val_fraction, cfg.seed);
    let train_set: Vec<TrainingSample> = select(samples, &train_ids).into_iter().cloned().collect();
    let val_set: Vec<TrainingSample> = select(samples, &val_ids).into_iter().cloned().collect();

    let mut model = EnergyModel::init(n_drive, r, cfg.hidden, cfg.seed);
    model.potential = cfg.potential;
    model.scalers = EnergyScalers::fit(&train_set);

    let prepared_train = prepare(&model, &train_set);
    let prepared_val = prepare(&model, &val_set);
    let val_refs: Vec<&Prepared> = prepared_val.iter().collect();

    let mut opt = Nadam::new(model.n_params());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ shuffle_tag());
    let mut order: Vec<usize> = (0..prepared_train.len()).collect();
    let mut curves = Vec::with_capacity(cfg.epochs);
    let mut params = model.params();
    let mut early_stopped = false;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut acc = LossTerms::default();
        for chunk in order.chunks(cfg.batch) {
            let batch: Vec<&Prepared> = chunk.iter().map(|&i| &prepared_train[i]).collect();
            let (terms, grad) = batch_loss(&model, &batch, &weights, true);
            if !terms.is_finite() {
                return Err(TannError::Diverged { epoch });
            }
            let g = grad.unwrap_or_default();
            if g.iter().any(|v| !v.is_finite()) {
                return Err(TannError::Diverged { epoch });
            }
            let frac = chunk.len() as f64 / prepared_train.len() as f64;
            acc.psi += terms.psi * frac;
            acc.response += terms.response * frac;
            acc.d += terms.d * frac;
            acc.d_sign += terms.d_sign * frac;
            acc.total += terms.total * frac;
            opt.step(&mut params, &g, cfg.learning_rate);
            model.set_params(&params);
        }
        let val = (!val_refs.is_empty()).then(|| batch_loss(&model, &val_refs, &weights, false).0);
        if let Some(v) = &val {
            if !v.is_finite() {
                return Err(TannError::Diverged { epoch });
            }
        }
        let monitor = val.map_or(acc.total, |v| v.total);
        curves.push(EpochRecord {
            epoch,
            train: acc,
            val,
        });
        if let Some(th) = cfg.early_stop {
            if monitor <= th {
                early_stopped = true;
                break;
            }
        }
    }
    Ok(TrainOutcome {
        model,
        curves,
        early_stopped,
        train_paths: train_ids,
        val_paths: val_ids,
    })
}
