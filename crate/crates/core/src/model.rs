//! Linear binary and multi-class predictors: margins, probabilities,
//! Euclidean projection onto a ball and running iterate averages.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Prediction task. Multi-class parameters are stored as `k` contiguous
/// blocks of length `d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Task {
    Binary,
    Multiclass { k: usize },
}

impl Task {
    pub fn blocks(&self) -> usize {
        match self {
            Task::Binary => 1,
            Task::Multiclass { k } => *k,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    /// `+1` or `-1`.
    Binary(i8),
    /// Class index in `0..k`.
    Class(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub features: Vec<f64>,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
}

impl Example {
    pub fn binary(features: Vec<f64>, y: f64) -> Result<Self> {
        let label = if y == 1.0 {
            Label::Binary(1)
        } else if y == -1.0 {
            Label::Binary(-1)
        } else {
            return Err(Error::InvalidLabel(format!("binary label must be +1 or -1, got {y}")));
        };
        let ex = Example { features, label, id: None };
        ex.check_finite()?;
        Ok(ex)
    }

    pub fn class(features: Vec<f64>, class: usize) -> Result<Self> {
        let ex = Example { features, label: Label::Class(class), id: None };
        ex.check_finite()?;
        Ok(ex)
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = Some(id.into());
        self
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }

    /// The `±1` label of a binary example.
    pub fn y(&self) -> Result<f64> {
        match self.label {
            Label::Binary(s) => Ok(s as f64),
            Label::Class(_) => Err(Error::InvalidLabel("expected a binary label".into())),
        }
    }

    pub fn class_index(&self) -> Result<usize> {
        match self.label {
            Label::Class(c) => Ok(c),
            Label::Binary(_) => Err(Error::InvalidLabel("expected a class label".into())),
        }
    }

    fn check_finite(&self) -> Result<()> {
        if self.features.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidParameter {
                name: "features",
                reason: "feature vector contains NaN or infinite values".into(),
            })
        }
    }

    /// Checks finiteness and label validity for the task.
    pub fn validate(&self, task: Task) -> Result<()> {
        self.check_finite()?;
        match (task, self.label) {
            (Task::Binary, Label::Binary(s)) if s == 1 || s == -1 => Ok(()),
            (Task::Multiclass { k }, Label::Class(c)) if c < k => Ok(()),
            (task, label) => Err(Error::InvalidLabel(format!("{label:?} is not valid for {task:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub theta: Vec<f64>,
    pub task: Task,
}

impl ModelParams {
    pub fn new(theta: Vec<f64>, task: Task) -> Result<Self> {
        let blocks = task.blocks();
        if blocks == 0 || theta.len() % blocks != 0 {
            return Err(invalid_len(theta.len(), blocks));
        }
        if !theta.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "theta",
                reason: "parameter vector is not finite".into(),
            });
        }
        Ok(ModelParams { theta, task })
    }

    pub fn zeros(task: Task, d: usize) -> Self {
        ModelParams { theta: vec![0.0; d * task.blocks()], task }
    }

    /// Feature dimension `d`.
    pub fn dim(&self) -> usize {
        self.theta.len() / self.task.blocks()
    }

    pub fn block(&self, class: usize) -> &[f64] {
        let d = self.dim();
        &self.theta[class * d..(class + 1) * d]
    }

    pub fn norm(&self) -> f64 {
        norm(&self.theta)
    }
}

fn invalid_len(len: usize, blocks: usize) -> Error {
    Error::InvalidParameter {
        name: "theta",
        reason: format!("length {len} is not a multiple of the class count {blocks}"),
    }
}

/// Euclidean ball `{v : ||v - center|| <= radius}`. `radius = None` means no
/// projection; `center = None` is the origin.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectionBall {
    #[serde(default)]
    pub center: Option<Vec<f64>>,
    #[serde(default)]
    pub radius: Option<f64>,
}

impl ProjectionBall {
    pub fn unbounded() -> Self {
        ProjectionBall::default()
    }

    pub fn centered(radius: f64) -> Self {
        ProjectionBall { center: None, radius: Some(radius) }
    }

    pub fn validate(&self) -> Result<()> {
        match self.radius {
            Some(r) if !(r >= 0.0) => Err(Error::InvalidParameter {
                name: "projection.radius",
                reason: format!("radius must be nonnegative, got {r}"),
            }),
            _ => Ok(()),
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Logistic function; exact symmetry `sigmoid(-z) = 1 - sigmoid(z)` up to
/// rounding and no overflow for any finite `z`.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

/// Per-class scores `x^T theta_c`.
pub fn class_scores(params: &ModelParams, x: &[f64]) -> Result<Vec<f64>> {
    check_dim(params.dim(), x.len())?;
    Ok((0..params.task.blocks()).map(|c| dot(params.block(c), x)).collect())
}

/// Largest competitor score and the set of classes attaining it.
pub(crate) fn competitors(scores: &[f64], y: usize) -> (f64, Vec<usize>) {
    let max = scores
        .iter()
        .enumerate()
        .filter(|(c, _)| *c != y)
        .map(|(_, s)| *s)
        .fold(f64::NEG_INFINITY, f64::max);
    let tied = scores
        .iter()
        .enumerate()
        .filter(|(c, s)| *c != y && **s == max)
        .map(|(c, _)| c)
        .collect();
    (max, tied)
}

/// Binary: `y x^T theta`. Multi-class: `x^T theta_y - max_{y' != y} x^T theta_{y'}`.
pub fn margin(params: &ModelParams, ex: &Example) -> Result<f64> {
    match params.task {
        Task::Binary => {
            check_dim(params.theta.len(), ex.dim())?;
            Ok(ex.y()? * dot(&params.theta, &ex.features))
        }
        Task::Multiclass { k } => {
            let y = ex.class_index()?;
            if y >= k {
                return Err(Error::InvalidLabel(format!("class {y} out of range for k = {k}")));
            }
            let scores = class_scores(params, &ex.features)?;
            let (max, _) = competitors(&scores, y);
            Ok(scores[y] - max)
        }
    }
}

/// Probability of the positive class, `sigmoid(x^T theta)`.
pub fn predict_prob(params: &ModelParams, x: &[f64]) -> Result<f64> {
    match params.task {
        Task::Binary => {
            check_dim(params.theta.len(), x.len())?;
            Ok(sigmoid(dot(&params.theta, x)))
        }
        Task::Multiclass { .. } => Err(Error::Unsupported(
            "predict_prob is defined for binary models; use softmax for multi-class".into(),
        )),
    }
}

/// Numerically stable softmax over class scores.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Which order statistics define the multi-class uncertainty gap.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapStatistic {
    /// Best minus second best score.
    #[default]
    Top2,
    /// Best minus worst score.
    TopK,
}

pub fn score_gap(scores: &[f64], stat: GapStatistic) -> f64 {
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    match (stat, sorted.len()) {
        (_, 0 | 1) => 0.0,
        (GapStatistic::Top2, _) => sorted[0] - sorted[1],
        (GapStatistic::TopK, n) => sorted[0] - sorted[n - 1],
    }
}

pub fn project_in_place(theta: &mut [f64], ball: &ProjectionBall) {
    let Some(radius) = ball.radius else { return };
    if !radius.is_finite() {
        return;
    }
    let dist = match &ball.center {
        Some(c) => dist_sq(theta, c).sqrt(),
        None => norm(theta),
    };
    if dist <= radius {
        return;
    }
    let scale = radius / dist;
    match &ball.center {
        Some(c) => {
            for (t, ci) in theta.iter_mut().zip(c) {
                *t = ci + (*t - ci) * scale;
            }
        }
        None => theta.iter_mut().for_each(|t| *t *= scale),
    }
}

/// Euclidean projection onto the ball; identity inside or when unbounded.
pub fn project(params: &ModelParams, ball: &ProjectionBall) -> ModelParams {
    let mut out = params.clone();
    project_in_place(&mut out.theta, ball);
    out
}

/// Mean of `t` previous iterates (`avg`) extended by one more iterate.
pub fn running_average(avg: &ModelParams, t: usize, new: &ModelParams) -> Result<ModelParams> {
    check_dim(avg.theta.len(), new.theta.len())?;
    if t == 0 {
        return Err(Error::Precondition("running_average requires t >= 1".into()));
    }
    let mut out = avg.clone();
    accumulate_mean(&mut out.theta, t, &new.theta);
    Ok(out)
}

pub(crate) fn accumulate_mean(avg: &mut [f64], count_before: usize, new: &[f64]) {
    let w = 1.0 / (count_before as f64 + 1.0);
    for (a, n) in avg.iter_mut().zip(new) {
        *a += (n - *a) * w;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary(theta: Vec<f64>) -> ModelParams {
        ModelParams::new(theta, Task::Binary).unwrap()
    }

    #[test]
    fn binary_margin_examples() {
        let p = binary(vec![1.0, 0.0]);
        let pos = Example::binary(vec![2.0, 3.0], 1.0).unwrap();
        let neg = Example::binary(vec![2.0, 3.0], -1.0).unwrap();
        assert_eq!(margin(&p, &pos).unwrap(), 2.0);
        assert_eq!(margin(&p, &neg).unwrap(), -2.0);
    }

    #[test]
    fn multiclass_margin_example() {
        let p = ModelParams::new(vec![1.0, 2.0, 0.0], Task::Multiclass { k: 3 }).unwrap();
        let ex = Example::class(vec![1.0], 1).unwrap();
        assert_eq!(margin(&p, &ex).unwrap(), 1.0);
    }

    #[test]
    fn margin_dimension_mismatch() {
        let p = binary(vec![1.0, 0.0]);
        let ex = Example::binary(vec![1.0], 1.0).unwrap();
        assert!(matches!(margin(&p, &ex), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn predict_prob_examples() {
        let p = binary(vec![1.0]);
        assert_eq!(predict_prob(&p, &[0.0]).unwrap(), 0.5);
        assert!((predict_prob(&p, &[800.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((predict_prob(&p, &[3f64.ln()]).unwrap() - 0.75).abs() < 1e-15);
        assert!(predict_prob(&p, &[-700.0]).unwrap() >= 0.0);
        let m = ModelParams::zeros(Task::Multiclass { k: 3 }, 1);
        assert!(predict_prob(&m, &[1.0]).is_err());
    }

    #[test]
    fn projection_examples() {
        let p = binary(vec![3.0, 4.0]);
        assert_eq!(project(&p, &ProjectionBall::centered(10.0)).theta, vec![3.0, 4.0]);
        assert_eq!(project(&p, &ProjectionBall::centered(5.0)).theta, vec![3.0, 4.0]);
        let q = project(&p, &ProjectionBall::centered(1.0));
        assert!((q.theta[0] - 0.6).abs() < 1e-15 && (q.theta[1] - 0.8).abs() < 1e-15);
        assert_eq!(project(&p, &ProjectionBall::unbounded()).theta, vec![3.0, 4.0]);
    }

    #[test]
    fn projection_with_center() {
        let p = binary(vec![4.0, 0.0]);
        let ball = ProjectionBall { center: Some(vec![1.0, 0.0]), radius: Some(1.0) };
        assert_eq!(project(&p, &ball).theta, vec![2.0, 0.0]);
    }

    #[test]
    fn running_average_examples() {
        let a = binary(vec![0.0]);
        assert_eq!(running_average(&a, 1, &binary(vec![2.0])).unwrap().theta, vec![1.0]);
        assert_eq!(running_average(&binary(vec![1.0]), 2, &binary(vec![4.0])).unwrap().theta, vec![2.0]);
        assert_eq!(running_average(&binary(vec![5.0]), 1, &binary(vec![5.0])).unwrap().theta, vec![5.0]);
        assert!(running_average(&a, 1, &binary(vec![1.0, 2.0])).is_err());
    }

    #[test]
    fn multiclass_length_must_divide() {
        assert!(ModelParams::new(vec![0.0; 5], Task::Multiclass { k: 2 }).is_err());
    }

    #[test]
    fn gap_statistics() {
        let s = [3.0, 1.0, 2.5, -1.0];
        assert_eq!(score_gap(&s, GapStatistic::Top2), 0.5);
        assert_eq!(score_gap(&s, GapStatistic::TopK), 4.0);
    }

    #[test]
    fn rejects_bad_labels_and_features() {
        assert!(Example::binary(vec![1.0], 0.0).is_err());
        assert!(Example::binary(vec![f64::NAN], 1.0).is_err());
        let ex = Example::class(vec![1.0], 3).unwrap();
        assert!(ex.validate(Task::Multiclass { k: 3 }).is_err());
    }
}
