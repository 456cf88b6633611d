//! Exact check of the equivalent-loss identity on a finite dataset.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{invalid, Result};
use crate::losses::{LossKind, PointEval};
use crate::model::ModelParams;
use crate::sampling::PiSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalentLossReport {
    /// `mean_i pi(l_i) grad l_i`.
    pub sampled_gradient: Vec<f64>,
    /// Central differences of `mean_i Pi(l_i)`.
    pub finite_difference: Vec<f64>,
    /// `max |a - b| / max(|a|_inf, |b|_inf)`, zero when both vanish.
    pub max_rel_error: f64,
}

fn mean_primitive(pi: &PiSpec, loss: LossKind, ds: &Dataset, theta: &ModelParams) -> Result<f64> {
    let mut total = 0.0;
    for ex in &ds.examples {
        total += pi.primitive(PointEval::new(theta, ex)?.value(loss)?)?;
    }
    Ok(total / ds.len() as f64)
}

/// Compares the expected sampled gradient with the numerical gradient of
/// the mean of `Pi(loss)`, enumerating every point of `ds` (each point is
/// its own conditional distribution, so the conditional expected loss is
/// the loss itself).
pub fn equivalent_loss_check(
    pi: &PiSpec,
    loss: LossKind,
    ds: &Dataset,
    theta: &ModelParams,
    fd_step: f64,
) -> Result<EquivalentLossReport> {
    if ds.is_empty() {
        return Err(invalid("dataset", "dataset is empty"));
    }
    if !(fd_step > 0.0) {
        return Err(invalid("fd_step", format!("must be positive, got {fd_step}")));
    }
    if !pi.is_scalar() {
        return Err(invalid("pi", "needs a sampling function of the loss value"));
    }
    let p = theta.theta.len();
    let mut analytic = vec![0.0; p];
    for ex in &ds.examples {
        let point = PointEval::new(theta, ex)?;
        let w = pi.eval_scalar(point.value(loss)?);
        for (a, g) in analytic.iter_mut().zip(point.gradient(loss, &ex.features)?) {
            *a += w * g;
        }
    }
    analytic.iter_mut().for_each(|a| *a /= ds.len() as f64);
    let mut numeric = vec![0.0; p];
    for j in 0..p {
        let mut plus = theta.clone();
        plus.theta[j] += fd_step;
        let mut minus = theta.clone();
        minus.theta[j] -= fd_step;
        numeric[j] = (mean_primitive(pi, loss, ds, &plus)? - mean_primitive(pi, loss, ds, &minus)?) / (2.0 * fd_step);
    }
    let scale = analytic.iter().chain(&numeric).fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = analytic.iter().zip(&numeric).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let max_rel_error = if diff == 0.0 { 0.0 } else { diff / scale };
    Ok(EquivalentLossReport { sampled_gradient: analytic, finite_difference: numeric, max_rel_error })
}
