//! Loss- and uncertainty-based sampling for streaming SGD on linear
//! classifiers: constant-weight Bernoulli sampling, adaptive-weight sampling
//! whose expected step is a stochastic Polyak step, loss estimators, a
//! streaming engine, and numerical checks of the convergence bounds.

pub mod data;
pub mod engine;
pub mod error;
pub mod estimators;
pub mod losses;
pub mod model;
pub mod sampling;
pub mod theory;

pub use data::Dataset;
pub use engine::{run_stream, run_stream_on, DatasetRef, RunConfig, RunResult, RunSummary};
pub use error::{Error, Result};
pub use estimators::EstimatorKind;
pub use losses::LossKind;
pub use model::{Example, ModelParams, ProjectionBall, Task};
pub use sampling::{PiSpec, StepPolicy};
pub use theory::{BoundReport, VerifyOptions};
