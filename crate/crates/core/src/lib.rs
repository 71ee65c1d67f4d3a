//! Evaluation and training utilities for measuring how consistently
//! grammatical error correction systems behave when the context around an
//! error is perturbed.

pub mod align;
pub mod analysis;
pub mod cpr;
pub mod error;
pub mod formats;
pub mod metrics;
pub mod perturb;
pub mod report;
pub mod scalar;
pub mod types;

pub use error::{Error, ErrorClass, Result};
pub use scalar::Scalar;
pub use types::{Annotation, Edit, FrequencyTable, GecCase, GecSample, HypothesisSet, Origin, TokenSeq};

pub type Prf64 = metrics::Prf<f64>;
pub type Prf32 = metrics::Prf<f32>;
pub type Distribution64 = cpr::TokenDistribution<f64>;
pub type Distribution32 = cpr::TokenDistribution<f32>;
pub type CprLoss64 = cpr::CprLoss<f64>;
pub type CprLoss32 = cpr::CprLoss<f32>;
