//! Run configuration: the JSON document that fully determines a run.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::{self, CategoricalSpec, Dataset, LabelMap, LibsvmOptions, LogisticSpec, MarginSpec};
use crate::error::{invalid, Error, Result};
use crate::estimators::EstimatorKind;
use crate::losses::LossKind;
use crate::model::ProjectionBall;
use crate::sampling::{PiSpec, StepPolicy};

/// Where the stream comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetRef {
    Libsvm {
        path: String,
        #[serde(default)]
        dim: Option<usize>,
        #[serde(default)]
        labels: LabelMap,
    },
    Csv {
        path: String,
        #[serde(default)]
        labels: LabelMap,
    },
    Margin {
        n: usize,
        d: usize,
        rho_star: f64,
        r: f64,
        seed: u64,
    },
    MulticlassMargin {
        n: usize,
        d: usize,
        rho_star: f64,
        r: f64,
        k: usize,
        seed: u64,
    },
    Logistic {
        n: usize,
        d: usize,
        r: f64,
        weight_norm: f64,
        seed: u64,
    },
    /// One-hot categorical data; fields left out take the mushroom-shaped
    /// defaults.
    Categorical {
        #[serde(default)]
        n: Option<usize>,
        #[serde(default)]
        cardinalities: Option<Vec<usize>>,
        #[serde(default)]
        prototypes: Option<usize>,
        #[serde(default)]
        mutation: Option<f64>,
        seed: u64,
    },
    Tictactoe,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RbfConfig {
    /// Landmark count; defaults to `min(n, 300)`.
    #[serde(default)]
    pub landmarks: Option<usize>,
    /// Kernel width; defaults to the median heuristic.
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

fn default_eval_losses() -> Vec<LossKind> {
    vec![LossKind::Logistic]
}
fn default_sampling_loss() -> LossKind {
    LossKind::AbsError
}
fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetRef,
    #[serde(default)]
    pub rbf: Option<RbfConfig>,
    /// Per-column z-scoring of the features (off by default).
    #[serde(default)]
    pub standardize: bool,
    pub train_loss: LossKind,
    #[serde(default = "default_eval_losses")]
    pub eval_losses: Vec<LossKind>,
    /// Loss fed to loss-valued sampling functions and to estimators.
    #[serde(default = "default_sampling_loss")]
    pub sampling_loss: LossKind,
    pub step_policy: StepPolicy,
    #[serde(default)]
    pub estimator: EstimatorKind,
    #[serde(default)]
    pub projection: ProjectionBall,
    #[serde(default)]
    pub theta_init: Option<Vec<f64>>,
    /// Defaults to the dataset size (one pass).
    #[serde(default)]
    pub n_iterations: Option<usize>,
    #[serde(default = "default_true")]
    pub shuffle: bool,
    /// Allow more iterations than points by cycling over reshuffled epochs.
    #[serde(default)]
    pub multi_epoch: bool,
    #[serde(default)]
    pub seed: u64,
    /// Lower bound on the adaptive-weight sampling probability whenever the
    /// expected step is positive.
    #[serde(default)]
    pub pi_floor: f64,
    /// Keep per-iteration rows in the result.
    #[serde(default = "default_true")]
    pub record_rows: bool,
}

impl RunConfig {
    pub fn new(dataset: DatasetRef, train_loss: LossKind, step_policy: StepPolicy) -> Self {
        RunConfig {
            dataset,
            rbf: None,
            standardize: false,
            train_loss,
            eval_losses: default_eval_losses(),
            sampling_loss: default_sampling_loss(),
            step_policy,
            estimator: EstimatorKind::Oracle,
            projection: ProjectionBall::default(),
            theta_init: None,
            n_iterations: None,
            shuffle: true,
            multi_epoch: false,
            seed: 0,
            pi_floor: 0.0,
            record_rows: true,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.train_loss.validate()?;
        if !self.train_loss.is_differentiable() {
            return Err(invalid(
                "train_loss",
                format!("{} has no gradient; use it as a sampling or evaluation loss", self.train_loss.name()),
            ));
        }
        for l in &self.eval_losses {
            l.validate()?;
        }
        self.sampling_loss.validate()?;
        self.step_policy.validate()?;
        self.estimator.validate()?;
        self.projection.validate()?;
        if !(0.0..=1.0).contains(&self.pi_floor) {
            return Err(invalid("pi_floor", format!("must lie in [0, 1], got {}", self.pi_floor)));
        }
        let pi = self.step_policy.pi();
        if !matches!(self.estimator, EstimatorKind::Oracle) && !pi.uses_loss() {
            return Err(invalid("estimator", "loss estimators only apply to loss-valued sampling functions"));
        }
        if matches!(self.estimator, EstimatorKind::Knn { .. } | EstimatorKind::Forest { .. } | EstimatorKind::BetaNoise { .. })
            && !matches!(self.sampling_loss, LossKind::AbsError | LossKind::ZeroOne)
        {
            return Err(invalid("sampling_loss", "estimators model a loss in [0, 1]: use abs_error or zero_one"));
        }
        if let (StepPolicy::AdaptiveWeight { beta, rho, .. }, PiSpec::PowerOfZeta { beta: pb, rho: pr, .. }) =
            (&self.step_policy, pi)
        {
            if beta != pb || rho != pr {
                return Err(Error::InconsistentPolicy(format!(
                    "power-of-zeta sampling uses (beta, rho) = ({pb}, {pr}) but the step policy uses ({beta}, {rho})"
                )));
            }
        }
        Ok(())
    }

    /// Loads, featurizes and (optionally) standardizes the dataset.
    pub fn load_dataset(&self) -> Result<Dataset> {
        let mut ds = match &self.dataset {
            DatasetRef::Libsvm { path, dim, labels } => {
                data::load_libsvm(path, LibsvmOptions { dim: *dim, labels: *labels })?
            }
            DatasetRef::Csv { path, labels } => data::load_csv(path, *labels)?,
            DatasetRef::Margin { n, d, rho_star, r, seed } => {
                data::gen_margin_dataset(&MarginSpec { n: *n, d: *d, rho_star: *rho_star, r: *r, seed: *seed })?.0
            }
            DatasetRef::MulticlassMargin { n, d, rho_star, r, k, seed } => {
                let spec = MarginSpec { n: *n, d: *d, rho_star: *rho_star, r: *r, seed: *seed };
                data::gen_multiclass_margin_dataset(&spec, *k)?.0
            }
            DatasetRef::Logistic { n, d, r, weight_norm, seed } => {
                let spec = LogisticSpec { n: *n, d: *d, r: *r, weight_norm: *weight_norm, seed: *seed };
                data::gen_logistic_dataset(&spec)?.0
            }
            DatasetRef::Categorical { n, cardinalities, prototypes, mutation, seed } => {
                let d = CategoricalSpec::mushroom_like(*seed);
                data::gen_categorical_dataset(&CategoricalSpec {
                    n: n.unwrap_or(d.n),
                    cardinalities: cardinalities.clone().unwrap_or(d.cardinalities),
                    prototypes: prototypes.unwrap_or(d.prototypes),
                    mutation: mutation.unwrap_or(d.mutation),
                    seed: *seed,
                })?
            }
            DatasetRef::Tictactoe => data::tictactoe(),
        };
        if self.standardize {
            ds = data::standardize(&ds, &[]).0;
        }
        if let Some(rbf) = &self.rbf {
            let m = rbf.landmarks.unwrap_or_else(|| ds.len().min(300));
            ds = data::rbf_featurize(&ds, m, rbf.gamma, rbf.seed)?.0;
        }
        Ok(ds)
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn from_value(v: Value) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_value(v)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Sets `key` (dot-separated object path) in a JSON document, creating
/// intermediate objects. `raw` is parsed as JSON, falling back to a string.
pub fn set_path(doc: &mut Value, key: &str, raw: &str) -> Result<()> {
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    set_path_value(doc, key, value)
}

pub fn set_path_value(doc: &mut Value, key: &str, value: Value) -> Result<()> {
    if key.is_empty() {
        return Err(invalid("key", "empty override key"));
    }
    let mut cur = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| invalid("key", format!("`{}` is not an object", parts[..i].join("."))))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> &'static str {
        r#"{
            "dataset": {"source": "margin", "n": 50, "d": 3, "rho_star": 0.1, "r": 1.0, "seed": 1},
            "train_loss": {"kind": "logistic"},
            "step_policy": {"kind": "adaptive_weight", "beta": 1.0, "rho": 1.0,
                            "pi": {"family": "abs_error_proportional", "omega": 1.0}},
            "seed": 3
        }"#
    }

    #[test]
    fn parses_with_defaults() {
        let cfg = RunConfig::from_json(sample()).unwrap();
        assert_eq!(cfg.eval_losses, vec![LossKind::Logistic]);
        assert!(cfg.shuffle && cfg.record_rows);
        assert_eq!(cfg.load_dataset().unwrap().len(), 50);
    }

    #[test]
    fn rejects_unknown_keys() {
        let mut v: Value = serde_json::from_str(sample()).unwrap();
        set_path(&mut v, "step_policy.bogus", "1").unwrap();
        assert!(RunConfig::from_value(v).is_err());
    }

    #[test]
    fn override_sets_nested_value() {
        let mut v: Value = serde_json::from_str(sample()).unwrap();
        set_path(&mut v, "step_policy.pi.omega", "0.25").unwrap();
        let cfg = RunConfig::from_value(v).unwrap();
        assert_eq!(*cfg.step_policy.pi(), PiSpec::AbsErrorProportional { omega: 0.25 });
    }

    #[test]
    fn rejects_non_differentiable_training_loss() {
        let mut v: Value = serde_json::from_str(sample()).unwrap();
        set_path(&mut v, "train_loss.kind", "zero_one").unwrap();
        assert!(RunConfig::from_value(v).is_err());
    }
}
