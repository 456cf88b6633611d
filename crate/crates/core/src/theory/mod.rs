//! Closed-form bounds and the numerical checks that compare them with runs.

pub mod bounds;
pub mod equivalent;
pub mod reference;
pub mod stats;
pub mod verify;

pub use bounds::*;
pub use equivalent::{equivalent_loss_check, EquivalentLossReport};
pub use reference::{fit_reference, Objective, ReferenceFit};
pub use stats::{loglog_slope, MeanSe};
pub use verify::{run_suite, BoundKind, BoundReport, VerifyOptions, SUITES};
