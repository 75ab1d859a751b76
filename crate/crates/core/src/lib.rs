//! Reduced-order constitutive modelling: representative-cell plasticity,
//! proper orthogonal decomposition of internal state and thermodynamics-based
//! neural surrogates.

pub mod artifact;
pub mod ensemble;
pub mod macroelement;
pub mod plasticity;
pub mod pod;
pub mod random_field;
pub mod tann;
pub mod tensor;
