//! Uniform random search over configuration parameters, each candidate
//! optionally calibrated to a target sampling rate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::calibrate::calibrate_beta;
use super::config::{set_path_value, RunConfig};
use super::run::{derive_seed, run_stream_on};
use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::losses::LossKind;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamRange {
    /// Dot-separated path into the run configuration, e.g. `step_policy.rho`.
    pub key: String,
    pub lo: f64,
    pub hi: f64,
    /// Sample uniformly in log space.
    #[serde(default)]
    pub log: bool,
}

fn default_tol() -> f64 {
    0.01
}
fn default_max_iter() -> usize {
    30
}
fn default_rank_by() -> LossKind {
    LossKind::Logistic
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub params: Vec<ParamRange>,
    pub budget: usize,
    #[serde(default)]
    pub target_rate: Option<f64>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Loss whose average progressive value ranks the candidates.
    #[serde(default = "default_rank_by")]
    pub rank_by: LossKind,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub index: usize,
    pub values: Vec<(String, f64)>,
    pub config: RunConfig,
    pub sampling_rate: f64,
    pub loss: f64,
    #[serde(default)]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    /// Sorted by increasing loss; failed candidates last.
    pub leaderboard: Vec<SweepEntry>,
}

impl SweepResult {
    pub fn best(&self) -> Option<&SweepEntry> {
        self.leaderboard.iter().find(|e| e.error.is_none())
    }
}

fn sample_values(spec: &SweepSpec, index: usize) -> Vec<(String, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, 1000 + index as u64));
    spec.params
        .iter()
        .map(|p| {
            let u: f64 = rng.random();
            let v = if p.log { (p.lo.ln() + u * (p.hi.ln() - p.lo.ln())).exp() } else { p.lo + u * (p.hi - p.lo) };
            (p.key.clone(), v)
        })
        .collect()
}

fn candidate(base: &Value, values: &[(String, f64)], rank_by: LossKind) -> Result<RunConfig> {
    let mut doc = base.clone();
    for (k, v) in values {
        set_path_value(&mut doc, k, Value::from(*v))?;
    }
    let mut cfg = RunConfig::from_value(doc)?;
    if !cfg.eval_losses.contains(&rank_by) {
        cfg.eval_losses.push(rank_by);
    }
    cfg.record_rows = false;
    Ok(cfg)
}

fn evaluate(cfg: RunConfig, ds: &Dataset, spec: &SweepSpec) -> Result<(RunConfig, f64, f64)> {
    let cfg = match spec.target_rate {
        Some(t) => calibrate_beta(&cfg, ds, t, spec.tol, spec.max_iter)?.config,
        None => cfg,
    };
    let res = run_stream_on(&cfg, ds)?;
    let loss = res.summary.average(spec.rank_by).ok_or_else(|| Error::Unsupported("ranking loss missing".into()))?;
    Ok((cfg, res.summary.sampling_rate, loss))
}

/// Evaluates `budget` random candidates (in parallel on the current rayon
/// pool), all with the base config's seed, and ranks them.
pub fn sweep(base: &RunConfig, ds: &Dataset, spec: &SweepSpec) -> Result<SweepResult> {
    if spec.budget == 0 {
        return Err(invalid("budget", "must be at least 1"));
    }
    for p in &spec.params {
        if !(p.lo <= p.hi) || (p.log && p.lo <= 0.0) {
            return Err(invalid("params", format!("bad range for `{}`: [{}, {}]", p.key, p.lo, p.hi)));
        }
    }
    let base_doc = base.to_value();
    let mut entries: Vec<SweepEntry> = (0..spec.budget)
        .into_par_iter()
        .map(|i| {
            let values = sample_values(spec, i);
            let outcome = candidate(&base_doc, &values, spec.rank_by).and_then(|c| evaluate(c, ds, spec));
            match outcome {
                Ok((config, rate, loss)) => SweepEntry { index: i, values, config, sampling_rate: rate, loss, error: None },
                Err(e) => SweepEntry {
                    index: i,
                    values,
                    config: base.clone(),
                    sampling_rate: f64::NAN,
                    loss: f64::INFINITY,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    entries.sort_by(|a, b| {
        a.error.is_some().cmp(&b.error.is_some()).then(a.loss.total_cmp(&b.loss)).then(a.index.cmp(&b.index))
    });
    Ok(SweepResult { leaderboard: entries })
}
