//! Reference minimizers and measured problem constants.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::losses::{smoothness_constant, LossKind, PointEval};
use crate::model::{norm, norm_sq, project_in_place, ModelParams, ProjectionBall};
use crate::sampling::PiSpec;

/// What to minimize: the mean loss, or the mean of `Pi(loss)` (the loss
/// whose gradient is the expected sampled gradient).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Objective {
    Loss { loss: LossKind },
    Equivalent { loss: LossKind, pi: PiSpec },
}

impl Objective {
    fn loss(&self) -> LossKind {
        match *self {
            Objective::Loss { loss } | Objective::Equivalent { loss, .. } => loss,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceFit {
    pub theta: ModelParams,
    pub value: f64,
    /// Norm of the last projected-gradient step divided by the step size.
    pub residual: f64,
    pub iterations: usize,
}

/// Mean objective value and gradient over the dataset.
pub fn objective_value_grad(ds: &Dataset, obj: &Objective, theta: &ModelParams) -> Result<(f64, Vec<f64>)> {
    if ds.is_empty() {
        return Err(invalid("dataset", "dataset is empty"));
    }
    let loss = obj.loss();
    let p = theta.theta.len();
    let (v, g) = ds
        .examples
        .par_chunks(512)
        .map(|chunk| -> Result<(f64, Vec<f64>)> {
            let mut v = 0.0;
            let mut g = vec![0.0; p];
            for ex in chunk {
                let point = PointEval::new(theta, ex)?;
                let l = point.value(loss)?;
                let gi = point.gradient(loss, &ex.features)?;
                let (w, value) = match obj {
                    Objective::Loss { .. } => (1.0, l),
                    Objective::Equivalent { pi, .. } => (pi.eval_scalar(l), pi.primitive(l)?),
                };
                v += value;
                g.iter_mut().zip(&gi).for_each(|(a, b)| *a += w * b);
            }
            Ok((v, g))
        })
        .try_reduce(|| (0.0, vec![0.0; p]), |(va, mut ga), (vb, gb)| {
            ga.iter_mut().zip(&gb).for_each(|(a, b)| *a += b);
            Ok((va + vb, ga))
        })?;
    let n = ds.len() as f64;
    Ok((v / n, g.into_iter().map(|x| x / n).collect()))
}

/// Mean squared feature norm.
pub fn second_moment(ds: &Dataset) -> f64 {
    if ds.is_empty() {
        return 0.0;
    }
    ds.examples.iter().map(|e| norm_sq(&e.features)).sum::<f64>() / ds.len() as f64
}

/// Upper bound on the curvature of the objective along any margin:
/// `sup l''` for the loss itself, `sup (pi'(l) l'^2 + pi(l) l'')` over
/// `|u| <= u_max` for the equivalent loss.
pub fn margin_curvature(obj: &Objective, u_max: f64) -> Result<f64> {
    match *obj {
        Objective::Loss { loss } => smoothness_constant(loss, 1.0),
        Objective::Equivalent { loss, pi } => {
            if !loss.is_margin_loss() {
                return Err(Error::Unsupported(format!("{} has no scalar margin form", loss.name())));
            }
            sup_on_grid(-u_max, u_max, |u| {
                let l = loss.value(u)?;
                let d1 = loss.derivative(u)?;
                Ok(pi.derivative(l)? * d1 * d1 + pi.eval_scalar(l) * loss.second_derivative(u)?)
            })
        }
    }
}

/// `sup_u pi(l(u)) l'(u)^2` over `|u| <= u_max`; times `E||x||^2` this bounds
/// the second moment of the sampled gradient.
pub fn sampled_gradient_scale(loss: LossKind, pi: &PiSpec, u_max: f64) -> Result<f64> {
    sup_on_grid(-u_max, u_max, |u| {
        let d1 = loss.derivative(u)?;
        Ok(pi.eval_scalar(loss.value(u)?) * d1 * d1)
    })
}

fn sup_on_grid(lo: f64, hi: f64, f: impl Fn(f64) -> Result<f64>) -> Result<f64> {
    const STEPS: usize = 20_000;
    let mut best = f64::NEG_INFINITY;
    for i in 0..=STEPS {
        let u = lo + (hi - lo) * i as f64 / STEPS as f64;
        best = best.max(f(u)?);
    }
    Ok(best)
}

/// Projected accelerated gradient descent with adaptive restart, step
/// `1/L` where `L` is the margin curvature times the mean squared feature
/// norm. Stops when the gradient-mapping norm falls below `tol`.
pub fn fit_reference(
    ds: &Dataset,
    obj: &Objective,
    projection: &ProjectionBall,
    max_iter: usize,
    tol: f64,
) -> Result<ReferenceFit> {
    projection.validate()?;
    let u_max = match projection.radius {
        Some(r) => r * ds.max_norm() + projection.center.as_deref().map_or(0.0, norm) * ds.max_norm(),
        None => 60.0,
    };
    let lip = margin_curvature(obj, u_max)? * second_moment(ds) * ds.task.blocks() as f64;
    if !(lip > 0.0) {
        return Err(Error::Precondition("objective has zero curvature bound".into()));
    }
    let step = 1.0 / lip;
    let mut x = ModelParams::zeros(ds.task, ds.d);
    project_in_place(&mut x.theta, projection);
    let (mut fx, _) = objective_value_grad(ds, obj, &x)?;
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    for k in 0..max_iter {
        iterations = k + 1;
        let (_, g) = objective_value_grad(ds, obj, &y)?;
        let mut next = y.clone();
        next.theta.iter_mut().zip(&g).for_each(|(v, gi)| *v -= step * gi);
        project_in_place(&mut next.theta, projection);
        let (fn_, _) = objective_value_grad(ds, obj, &next)?;
        residual = next.theta.iter().zip(&y.theta).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() / step;
        if fn_ > fx {
            y = x.clone();
            t = 1.0;
            continue;
        }
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let mom = (t - 1.0) / t_next;
        let mut ny = next.clone();
        ny.theta.iter_mut().zip(next.theta.iter().zip(&x.theta)).for_each(|(v, (a, b))| *v = a + mom * (a - b));
        x = next;
        fx = fn_;
        y = ny;
        t = t_next;
        if residual < tol {
            break;
        }
    }
    Ok(ReferenceFit { theta: x, value: fx, residual, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_logistic_dataset, LogisticSpec};

    #[test]
    fn reference_fit_reaches_stationarity() {
        let (ds, _) = gen_logistic_dataset(&LogisticSpec { n: 2000, d: 3, r: 1.0, weight_norm: 2.0, seed: 4 }).unwrap();
        let obj = Objective::Loss { loss: LossKind::Logistic };
        let fit = fit_reference(&ds, &obj, &ProjectionBall::unbounded(), 5000, 1e-9).unwrap();
        let (_, g) = objective_value_grad(&ds, &obj, &fit.theta).unwrap();
        assert!(norm(&g) < 1e-7, "gradient norm {}", norm(&g));
    }

    #[test]
    fn curvature_of_plain_logistic() {
        let c = margin_curvature(&Objective::Loss { loss: LossKind::Logistic }, 10.0).unwrap();
        assert_eq!(c, 0.25);
        let e = Objective::Equivalent { loss: LossKind::Logistic, pi: PiSpec::Constant { p: 0.5 } };
        assert!((margin_curvature(&e, 10.0).unwrap() - 0.125).abs() < 1e-6);
    }
}
