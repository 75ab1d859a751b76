//! Thermodynamics-constrained energy networks.
//!
//! The network predicts a potential of the state `(drive, Z)`; the response
//! (stress, or displacement for the Gibbs form) and the dissipation
//! `−∂Ψ/∂Z · Ż` follow by exact differentiation, so the first law holds for
//! any weights. Non-negativity of dissipation is learned through a ReLU
//! penalty in the loss.

mod evolution;
mod infer;
mod loss;
mod model;
mod optim;
mod scaler;
mod train;

use thiserror::Error;

pub use evolution::{train_evolution, Activation, EvolutionConfig, EvolutionModel, EvolutionOutcome};
pub use infer::{infer_path, InferMode, Prediction};
pub use loss::{batch_loss, loss, predict_scaled, prepare, LossTerms, LossVariant, LossWeights, Prepared, ScaledPrediction};
pub use model::{EnergyEval, EnergyModel, Potential, ZQuadratic};
pub use optim::Nadam;
pub use scaler::{Affine, EnergyScalers};
pub use train::{split_paths, train, EpochRecord, TrainConfig, TrainOutcome};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TannError {
    #[error("input dimensions {got:?} do not match the model {expected:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("autonomous inference requires an evolution model")]
    ModeMismatch,
    #[error("teacher-forced inference requires one recorded ISV vector per increment")]
    MissingIsv,
}
