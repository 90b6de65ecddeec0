//! Counterfactual explanations guided by user feedback.
//!
//! The core is generic over the scalar type (`f32` or `f64`); the aliases at the
//! crate root fix it to `f64`.

pub mod bench;
pub mod data;
pub mod error;
pub mod explainer;
pub mod kdtree;
pub mod metrics;
pub mod mi;
pub mod model;
pub mod neighborhood;
pub mod plausibility;
pub mod scalar;

pub use error::{Result, UfceError};
pub use scalar::Scalar;

pub type Dataset = data::Dataset<f64>;
pub type Instance = data::Instance<f64>;
pub type Schema = data::Schema<f64>;
pub type LogisticModel = model::LogisticModel<f64>;
pub type FeaturePredictor = model::FeaturePredictor<f64>;
pub type CandidateCE = explainer::CandidateCE<f64>;
pub type PerturbationMap = neighborhood::PerturbationMap<f64>;
pub type Subspace = neighborhood::Subspace<f64>;
pub type Ufce = explainer::Ufce<f64>;
