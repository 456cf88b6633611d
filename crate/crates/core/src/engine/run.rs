//! The streaming projected-SGD loop with progressive validation.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimators::{EstimatorState, LossEstimate};
use crate::losses::{LossKind, PointEval};
use crate::model::{accumulate_mean, project_in_place, score_gap, sigmoid, softmax, Example, GapStatistic, ModelParams};
use crate::sampling::{step_from_uniform, zeta_polyak, PiSpec, SamplingInput, StepPolicy};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub t: usize,
    pub sampled: bool,
    pub pi: f64,
    pub step_size: f64,
    pub cumulative_samples: usize,
    /// Norm of the iterate after this step.
    pub theta_norm: f64,
    /// Progressive losses under the pre-update iterate, one per eval loss.
    pub losses: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossSummary {
    pub loss: String,
    pub average: f64,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub n: usize,
    pub total_samples: usize,
    pub sampling_rate: f64,
    /// Sum of the sampling probabilities used.
    pub expected_samples: f64,
    pub progressive: Vec<LossSummary>,
    pub wall_time_seconds: f64,
}

impl RunSummary {
    pub fn average(&self, kind: LossKind) -> Option<f64> {
        let name = kind.name();
        self.progressive.iter().find(|l| l.loss == name).map(|l| l.average)
    }

    pub fn total(&self, kind: LossKind) -> Option<f64> {
        let name = kind.name();
        self.progressive.iter().find(|l| l.loss == name).map(|l| l.total)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub rows: Vec<MetricsRow>,
    pub final_theta: ModelParams,
    /// Mean of the iterates `theta_1..theta_n` used at each step.
    pub averaged_theta: ModelParams,
    pub summary: RunSummary,
}

/// Derives independent stream seeds from a run seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_ORDER: u64 = 1;
const STREAM_SAMPLING: u64 = 2;
const STREAM_ESTIMATOR: u64 = 3;

/// Loads the configured dataset and runs the stream.
pub fn run_stream(cfg: &RunConfig) -> Result<RunResult> {
    let ds = cfg.load_dataset()?;
    run_stream_on(cfg, &ds)
}

fn stream_order(cfg: &RunConfig, ds: &Dataset, n: usize) -> Vec<usize> {
    let len = ds.len();
    let mut order = Vec::with_capacity(n);
    let mut epoch = 0u64;
    while order.len() < n {
        let mut idx: Vec<usize> = (0..len).collect();
        if cfg.shuffle {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_ORDER + 16 * epoch));
            rand::seq::SliceRandom::shuffle(idx.as_mut_slice(), &mut rng);
        }
        order.extend(idx.into_iter().take(n - order.len()));
        epoch += 1;
    }
    order
}

/// Prediction fed to learned estimators as an extra feature.
fn prediction(point: &PointEval) -> f64 {
    if point.scores.len() == 1 {
        sigmoid(point.scores[0])
    } else {
        softmax(&point.scores).into_iter().fold(0.0, f64::max)
    }
}

/// Runs `cfg` on an already loaded dataset. Deterministic given the seed.
pub fn run_stream_on(cfg: &RunConfig, ds: &Dataset) -> Result<RunResult> {
    cfg.validate()?;
    let start = Instant::now();
    let n = cfg.n_iterations.unwrap_or(ds.len());
    if n > ds.len() && !cfg.multi_epoch {
        return Err(Error::InvalidParameter {
            name: "n_iterations",
            reason: format!("{n} iterations exceed the {} available points; set multi_epoch to allow repeats", ds.len()),
        });
    }
    if n > 0 && ds.is_empty() {
        return Err(Error::InvalidParameter { name: "dataset", reason: "dataset is empty".into() });
    }
    let mut theta = match &cfg.theta_init {
        Some(t) => ModelParams::new(t.clone(), ds.task)?,
        None => ModelParams::zeros(ds.task, ds.d),
    };
    if theta.dim() != ds.d {
        return Err(Error::DimensionMismatch { expected: ds.d * ds.task.blocks(), got: theta.theta.len() });
    }
    let order = stream_order(cfg, ds, n);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_SAMPLING));
    let mut estimator = EstimatorState::new(cfg.estimator, derive_seed(cfg.seed, STREAM_ESTIMATOR))?;
    let policy = cfg.step_policy;
    let pi_spec = *policy.pi();
    let gap_stat = match pi_spec {
        PiSpec::UncertaintyMulticlass { gap, .. } => gap,
        _ => GapStatistic::Top2,
    };
    let uses_loss = pi_spec.uses_loss();
    let needs_true = cfg.estimator.needs_true_loss();

    let mut avg = theta.clone();
    let mut rows = Vec::with_capacity(if cfg.record_rows { n } else { 0 });
    let mut totals = vec![0.0; cfg.eval_losses.len()];
    let mut samples = 0usize;
    let mut expected_samples = 0.0;

    for (t, &i) in order.iter().enumerate() {
        let ex: &Example = &ds.examples[i];
        let point = PointEval::new(&theta, ex)?;
        let mut losses = Vec::with_capacity(cfg.eval_losses.len());
        for (k, kind) in cfg.eval_losses.iter().enumerate() {
            let v = point.value(*kind)?;
            totals[k] += v;
            losses.push(v);
        }
        if t > 0 {
            accumulate_mean(&mut avg.theta, t, &theta.theta);
        }

        let psi = point.psi(cfg.train_loss)?;
        let mut input = SamplingInput {
            loss: 0.0,
            margin: point.margin,
            gap: score_gap(&point.scores, gap_stat),
            psi,
        };
        let p = prediction(&point);
        let mut pi_override = None;
        if uses_loss {
            let truth = if needs_true { Some(point.value(cfg.sampling_loss)?) } else { None };
            match estimator.estimate(&ex.features, p, truth)? {
                LossEstimate::Loss(v) => input.loss = v,
                LossEstimate::WarmUp(q) => pi_override = Some(q),
            }
        } else {
            input.loss = point.value(cfg.sampling_loss)?;
        }
        let mut pi = pi_override.unwrap_or_else(|| pi_spec.eval(&input));
        if let StepPolicy::AdaptiveWeight { beta, rho, .. } = policy {
            if cfg.pi_floor > 0.0 && zeta_polyak(psi, beta, rho) > 0.0 {
                pi = pi.max(cfg.pi_floor);
            }
        }
        let u: f64 = rng.random();
        let draw = step_from_uniform(&policy, pi, psi, u)?;
        expected_samples += if matches!(policy, StepPolicy::AdaptiveWeight { .. }) && draw.expected_step == 0.0 {
            0.0
        } else {
            pi
        };

        if draw.sampled {
            samples += 1;
            if draw.step_size > 0.0 {
                let g = point.gradient(cfg.train_loss, &ex.features)?;
                for (th, gi) in theta.theta.iter_mut().zip(&g) {
                    *th -= draw.step_size * gi;
                }
                project_in_place(&mut theta.theta, &cfg.projection);
                if !theta.theta.iter().all(|v| v.is_finite()) {
                    return Err(Error::Precondition(format!("iterate diverged at t = {}", t + 1)));
                }
            }
            if uses_loss {
                let realized = point.value(cfg.sampling_loss)?.clamp(0.0, 1.0);
                estimator.observe(&ex.features, p, realized)?;
            }
        }
        if cfg.record_rows {
            rows.push(MetricsRow {
                t: t + 1,
                sampled: draw.sampled,
                pi,
                step_size: draw.step_size,
                cumulative_samples: samples,
                theta_norm: theta.norm(),
                losses,
            });
        }
    }

    let progressive = cfg
        .eval_losses
        .iter()
        .zip(&totals)
        .map(|(k, tot)| LossSummary { loss: k.name(), average: if n > 0 { tot / n as f64 } else { 0.0 }, total: *tot })
        .collect();
    let summary = RunSummary {
        n,
        total_samples: samples,
        sampling_rate: if n > 0 { samples as f64 / n as f64 } else { 0.0 },
        expected_samples,
        progressive,
        wall_time_seconds: start.elapsed().as_secs_f64(),
    };
    if n == 0 {
        avg = theta.clone();
    }
    Ok(RunResult { rows, final_theta: theta, averaged_theta: avg, summary })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HoldoutSummary {
    pub n: usize,
    pub accuracy: f64,
    pub mean_losses: Vec<LossSummary>,
}

/// Mean losses and accuracy (fraction of strictly positive margins).
pub fn evaluate_holdout(params: &ModelParams, test: &Dataset, losses: &[LossKind]) -> Result<HoldoutSummary> {
    if test.is_empty() {
        return Err(Error::InvalidParameter { name: "test", reason: "hold-out set is empty".into() });
    }
    let mut totals = vec![0.0; losses.len()];
    let mut correct = 0usize;
    for ex in &test.examples {
        let point = PointEval::new(params, ex)?;
        if point.margin > 0.0 {
            correct += 1;
        }
        for (k, kind) in losses.iter().enumerate() {
            totals[k] += point.value(*kind)?;
        }
    }
    let n = test.len() as f64;
    Ok(HoldoutSummary {
        n: test.len(),
        accuracy: correct as f64 / n,
        mean_losses: losses
            .iter()
            .zip(totals)
            .map(|(k, t)| LossSummary { loss: k.name(), average: t / n, total: t })
            .collect(),
    })
}
