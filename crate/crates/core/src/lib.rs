//! Gradient estimation for categorical features.
//!
//! Parameters of a categorical model are grouped by the input symbol that
//! owns them. Within a batch, each symbol-owned group is scaled by the number
//! of observations that carry the symbol, and groups whose symbol is absent
//! from the batch receive no optimizer step at all: a missing gradient is
//! not the same thing as a zero gradient.
//!
//! Module map:
//!
//! * [`data`]: schemas, CSV ingestion, one-hot layout, symbol groups,
//!   batching and synthetic data.
//! * [`model`]: symbol-keyed parameter storage and the product, MLP and
//!   residual models with analytic gradients.
//! * [`estimator`]: per-batch accumulation and classic / GCE finalization.
//! * [`optim`]: SGD, AdaGrad and Adam restricted to an update mask.
//! * [`theory`]: the categorical loss, unbiasedness and stopping-time checks.
//! * [`harness`]: training loop, sweeps, output files and the CLI.
//!
//! The numeric core is generic over [`Scalar`]; the aliases below fix it to
//! `f64` (the precision every check is calibrated for) or `f32`.

pub mod data;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod model;
pub mod optim;
pub mod scalar;
pub mod theory;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type ParamStore64 = model::ParamStore<f64>;
pub type ParamStore32 = model::ParamStore<f32>;
pub type Gradients64 = model::Gradients<f64>;
pub type GradAccumulator64 = estimator::GradAccumulator<f64>;
pub type ScaledGradient64 = estimator::ScaledGradient<f64>;
pub type OptimizerState64 = optim::OptimizerState<f64>;
pub type OptimizerState32 = optim::OptimizerState<f32>;
pub type Trainer64 = harness::Trainer<f64>;
pub type Trainer32 = harness::Trainer<f32>;
