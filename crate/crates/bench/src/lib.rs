//! Shared fixtures for the criterion benchmarks.

use aws_sgd::data::{gen_margin_dataset, MarginSpec};
use aws_sgd::{Dataset, DatasetRef, LossKind, PiSpec, RunConfig, StepPolicy};

pub fn margin_dataset(n: usize, d: usize) -> Dataset {
    gen_margin_dataset(&MarginSpec { n, d, rho_star: 0.05, r: 1.0, seed: 0 }).expect("valid spec").0
}

/// Adaptive-weight sampling proportional to the absolute error.
pub fn aws_config() -> RunConfig {
    let dataset = DatasetRef::Margin { n: 0, d: 0, rho_star: 0.05, r: 1.0, seed: 0 };
    let mut cfg = RunConfig::new(
        dataset,
        LossKind::Logistic,
        StepPolicy::AdaptiveWeight { beta: 1.0, rho: 1.0, pi: PiSpec::AbsErrorProportional { omega: 1.0 } },
    );
    cfg.record_rows = false;
    cfg
}
