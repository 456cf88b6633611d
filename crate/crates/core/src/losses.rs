//! Training and evaluation losses, their gradients, the Polyak ratio `psi`,
//! and the logistic ratio function `h` with its two upper bounds.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{class_scores, competitors, norm_sq, sigmoid, softmax, softplus, Example, ModelParams, Task};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LossKind {
    /// `max(1 - u, 0)^2 / 2`
    SquaredHinge,
    /// `max(1 - u, 0)`
    Hinge,
    /// C^1 interpolation between squared hinge (`a = 1`) and hinge (`a -> inf`).
    GenSmoothHinge { a: f64 },
    /// Binary cross-entropy `-log sigmoid(u)`.
    Logistic,
    /// `1{u <= 0}`
    ZeroOne,
    /// `1 - sigmoid(u)`, the absolute error of a probabilistic predictor.
    AbsError,
    /// `|y - sgn(x^T theta)|`, taking values 0, 1 (at `u = 0`) and 2.
    SignAbsError,
    /// Softmax cross-entropy over `k` class scores.
    MultiCrossEntropy,
}

impl LossKind {
    pub fn validate(&self) -> Result<()> {
        match self {
            LossKind::GenSmoothHinge { a } if !(a.is_finite() && *a >= 1.0) => {
                Err(invalid("a", format!("generalized smooth hinge requires a >= 1, got {a}")))
            }
            _ => Ok(()),
        }
    }

    /// Short identifier used in metric column names.
    pub fn name(&self) -> String {
        match self {
            LossKind::SquaredHinge => "squared_hinge".into(),
            LossKind::Hinge => "hinge".into(),
            LossKind::GenSmoothHinge { a } => format!("gen_smooth_hinge_a{a}"),
            LossKind::Logistic => "logistic".into(),
            LossKind::ZeroOne => "zero_one".into(),
            LossKind::AbsError => "abs_error".into(),
            LossKind::SignAbsError => "sign_abs_error".into(),
            LossKind::MultiCrossEntropy => "multi_cross_entropy".into(),
        }
    }

    pub fn is_margin_loss(&self) -> bool {
        !matches!(self, LossKind::MultiCrossEntropy)
    }

    /// Whether a gradient step on this loss is meaningful.
    pub fn is_differentiable(&self) -> bool {
        !matches!(self, LossKind::ZeroOne | LossKind::AbsError | LossKind::SignAbsError)
    }

    pub fn is_convex(&self) -> bool {
        self.is_differentiable()
    }

    /// `inf_theta l(x, y, theta)`; zero for every supported kind.
    pub fn inf_value(&self) -> f64 {
        0.0
    }

    /// Loss as a function of the margin.
    pub fn value(&self, u: f64) -> Result<f64> {
        Ok(match *self {
            LossKind::SquaredHinge => {
                let r = (1.0 - u).max(0.0);
                0.5 * r * r
            }
            LossKind::Hinge => (1.0 - u).max(0.0),
            LossKind::GenSmoothHinge { a } => gsh_value(a, u),
            LossKind::Logistic => softplus(-u),
            LossKind::ZeroOne => indicator(u <= 0.0),
            LossKind::AbsError => sigmoid(-u),
            LossKind::SignAbsError => 2.0 * indicator(u < 0.0) + indicator(u == 0.0),
            LossKind::MultiCrossEntropy => return Err(not_margin()),
        })
    }

    /// `l'(u)`; zero for the non-differentiable evaluation losses.
    pub fn derivative(&self, u: f64) -> Result<f64> {
        Ok(match *self {
            LossKind::SquaredHinge => -(1.0 - u).max(0.0),
            LossKind::Hinge => -indicator(u < 1.0),
            LossKind::GenSmoothHinge { a } => gsh_derivative(a, u),
            LossKind::Logistic => -sigmoid(-u),
            LossKind::ZeroOne | LossKind::AbsError | LossKind::SignAbsError => 0.0,
            LossKind::MultiCrossEntropy => return Err(not_margin()),
        })
    }

    /// `l''(u)` for the smooth margin losses (right-continuous at breakpoints).
    pub fn second_derivative(&self, u: f64) -> Result<f64> {
        match *self {
            LossKind::SquaredHinge => Ok(indicator(u < 1.0)),
            LossKind::GenSmoothHinge { a } => Ok(if (0.0..1.0).contains(&u) { a * u.powf(a - 1.0) } else { 0.0 }),
            LossKind::Logistic => Ok(sigmoid(u) * sigmoid(-u)),
            other => Err(Error::Unsupported(format!("{} has no second derivative", other.name()))),
        }
    }
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn not_margin() -> Error {
    Error::Unsupported("multi-class cross-entropy is not a function of the margin".into())
}

fn gsh_value(a: f64, u: f64) -> f64 {
    let head = a / (a + 1.0);
    if u <= 0.0 {
        head - u
    } else if u <= 1.0 {
        (head - u + u.powf(a + 1.0) / (a + 1.0)).max(0.0)
    } else {
        0.0
    }
}

fn gsh_derivative(a: f64, u: f64) -> f64 {
    if u <= 0.0 {
        -1.0
    } else if u <= 1.0 {
        -(1.0 - u.powf(a))
    } else {
        0.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossEval {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub inf_value: f64,
}

/// Scores and margin of one example under one parameter vector, computed once
/// and shared by every loss evaluated at that point.
#[derive(Clone, Debug)]
pub struct PointEval {
    pub margin: f64,
    /// Binary: `[x^T theta]`; multi-class: per-class scores.
    pub scores: Vec<f64>,
    pub(crate) label: usize,
    pub(crate) tied: Vec<usize>,
    pub(crate) y_sign: f64,
    pub(crate) x_norm_sq: f64,
    pub(crate) binary: bool,
}

impl PointEval {
    pub fn new(params: &ModelParams, ex: &Example) -> Result<Self> {
        let x_norm_sq = norm_sq(&ex.features);
        match params.task {
            Task::Binary => {
                let y = ex.y()?;
                let s = class_scores(params, &ex.features)?[0];
                Ok(PointEval { margin: y * s, scores: vec![s], label: 0, tied: Vec::new(), y_sign: y, x_norm_sq, binary: true })
            }
            Task::Multiclass { k } => {
                let y = ex.class_index()?;
                if y >= k {
                    return Err(Error::InvalidLabel(format!("class {y} out of range for k = {k}")));
                }
                let scores = class_scores(params, &ex.features)?;
                let (max, tied) = competitors(&scores, y);
                Ok(PointEval { margin: scores[y] - max, scores, label: y, tied, y_sign: 1.0, x_norm_sq, binary: false })
            }
        }
    }

    pub fn value(&self, kind: LossKind) -> Result<f64> {
        match kind {
            LossKind::MultiCrossEntropy => {
                if self.binary {
                    return Err(Error::Unsupported("multi-class cross-entropy on a binary model".into()));
                }
                let max = self.scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + self.scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
                Ok((lse - self.scores[self.label]).max(0.0))
            }
            k => k.value(self.margin),
        }
    }

    /// Squared gradient norm without materializing the gradient.
    pub fn gradient_norm_sq(&self, kind: LossKind) -> Result<f64> {
        match kind {
            LossKind::MultiCrossEntropy => {
                let p = self.softmax_residual()?;
                Ok(self.x_norm_sq * norm_sq(&p))
            }
            k => {
                let d = k.derivative(self.margin)?;
                let margin_grad_sq = if self.binary { 1.0 } else { 1.0 + 1.0 / self.tied.len() as f64 };
                Ok(d * d * margin_grad_sq * self.x_norm_sq)
            }
        }
    }

    fn softmax_residual(&self) -> Result<Vec<f64>> {
        if self.binary {
            return Err(Error::Unsupported("multi-class cross-entropy on a binary model".into()));
        }
        let mut p = softmax(&self.scores);
        p[self.label] -= 1.0;
        Ok(p)
    }

    /// `grad_theta l`. For multi-class margin losses the competitor gradient is
    /// averaged over the set of classes tied at the maximum score.
    pub fn gradient(&self, kind: LossKind, x: &[f64]) -> Result<Vec<f64>> {
        let d = x.len();
        let blocks = self.scores.len();
        let mut g = vec![0.0; d * blocks];
        match kind {
            LossKind::MultiCrossEntropy => {
                let p = self.softmax_residual()?;
                for (c, pc) in p.iter().enumerate() {
                    axpy(&mut g[c * d..(c + 1) * d], *pc, x);
                }
            }
            k => {
                let lp = k.derivative(self.margin)?;
                if lp == 0.0 {
                    return Ok(g);
                }
                if self.binary {
                    axpy(&mut g, lp * self.y_sign, x);
                } else {
                    let y = self.label;
                    axpy(&mut g[y * d..(y + 1) * d], lp, x);
                    let w = -lp / self.tied.len() as f64;
                    for &c in &self.tied {
                        axpy(&mut g[c * d..(c + 1) * d], w, x);
                    }
                }
            }
        }
        Ok(g)
    }

    /// `||grad l||^2 / (l - inf l)`, or `None` when the gradient vanishes.
    pub fn psi(&self, kind: LossKind) -> Result<Option<f64>> {
        if kind == LossKind::Logistic && self.binary {
            return Ok(Some(h_logistic(self.margin) * self.x_norm_sq));
        }
        let g2 = self.gradient_norm_sq(kind)?;
        if g2 == 0.0 {
            return Ok(None);
        }
        let excess = self.value(kind)? - kind.inf_value();
        Ok(Some(if excess > 0.0 { g2 / excess } else { f64::INFINITY }))
    }
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn loss_value(kind: LossKind, ex: &Example, params: &ModelParams) -> Result<f64> {
    PointEval::new(params, ex)?.value(kind)
}

pub fn loss_gradient(kind: LossKind, ex: &Example, params: &ModelParams) -> Result<Vec<f64>> {
    PointEval::new(params, ex)?.gradient(kind, &ex.features)
}

pub fn loss_eval(kind: LossKind, ex: &Example, params: &ModelParams) -> Result<LossEval> {
    let p = PointEval::new(params, ex)?;
    Ok(LossEval { value: p.value(kind)?, gradient: p.gradient(kind, &ex.features)?, inf_value: kind.inf_value() })
}

pub fn psi(kind: LossKind, ex: &Example, params: &ModelParams) -> Result<Option<f64>> {
    PointEval::new(params, ex)?.psi(kind)
}

/// `h(u) = 1 / ((1 + e^u)^2 log(1 + e^{-u}))`, the ratio `l'(u)^2 / l(u)` of
/// the logistic loss.
///
/// Written as `sigmoid(-u) / D(u)` with `D(u) = (1 + e^u) log(1 + e^{-u})`.
/// For large `u` the product in `D` is replaced by its expansion
/// `1 + t/2 - t^2/6` in `t = e^{-u}`, which keeps `D >= 1` and so
/// `h(u) <= 1 - sigmoid(u)` holds in floating point as well.
pub fn h_logistic(u: f64) -> f64 {
    let d = if u > 30.0 {
        let t = (-u).exp();
        1.0 + t * (0.5 - t / 6.0)
    } else {
        (1.0 + u.exp()) * softplus(-u)
    };
    sigmoid(-u) / d
}

/// Binary entropy `a log(1/a) + (1 - a) log(1/(1 - a))` in nats.
pub fn binary_entropy(a: f64) -> f64 {
    let term = |p: f64| if p <= 0.0 { 0.0 } else { -p * p.ln() };
    term(a) + term(1.0 - a)
}

/// The two upper bounds on `h(u)`: `1 - sigmoid(u)` and
/// `1 / (H(a) + (1 - a)|u|)`.
pub fn h_upper_bounds(u: f64, a: f64) -> Result<(f64, f64)> {
    if !(a > 0.0 && a <= 0.5) {
        return Err(invalid("a", format!("must lie in (0, 1/2], got {a}")));
    }
    Ok((sigmoid(-u), 1.0 / (binary_entropy(a) + (1.0 - a) * u.abs())))
}

/// Per-example smoothness constant for features of norm at most `r`.
pub fn smoothness_constant(kind: LossKind, r: f64) -> Result<f64> {
    let r2 = r * r;
    match kind {
        LossKind::SquaredHinge => Ok(r2),
        LossKind::Logistic => Ok(r2 / 4.0),
        LossKind::GenSmoothHinge { a } => Ok(a * r2),
        LossKind::MultiCrossEntropy => Ok(r2 / 2.0),
        other => Err(Error::Unsupported(format!("{} is not smooth", other.name()))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary(theta: Vec<f64>) -> ModelParams {
        ModelParams::new(theta, Task::Binary).unwrap()
    }

    #[test]
    fn value_examples() {
        assert_eq!(LossKind::SquaredHinge.value(0.0).unwrap(), 0.5);
        assert_eq!(LossKind::GenSmoothHinge { a: 1.0 }.value(0.0).unwrap(), 0.5);
        assert!((LossKind::Logistic.value(0.0).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert_eq!(LossKind::ZeroOne.value(0.0).unwrap(), 1.0);
        assert_eq!(LossKind::ZeroOne.value(1e-9).unwrap(), 0.0);
        assert_eq!(LossKind::SignAbsError.value(0.0).unwrap(), 1.0);
        assert_eq!(LossKind::SignAbsError.value(-3.0).unwrap(), 2.0);
    }

    #[test]
    fn gradient_examples() {
        let ex = Example::binary(vec![1.0, 0.0], 1.0).unwrap();
        let g = loss_gradient(LossKind::SquaredHinge, &ex, &binary(vec![0.0, 0.0])).unwrap();
        assert_eq!(g, vec![-1.0, 0.0]);
        let g = loss_gradient(LossKind::Hinge, &ex, &binary(vec![2.0, 0.0])).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
        let ex1 = Example::binary(vec![1.0], 1.0).unwrap();
        assert_eq!(loss_gradient(LossKind::Logistic, &ex1, &binary(vec![0.0])).unwrap(), vec![-0.5]);
    }

    #[test]
    fn psi_examples() {
        let ex = Example::binary(vec![1.0], 1.0).unwrap();
        let p = psi(LossKind::Logistic, &ex, &binary(vec![0.0])).unwrap().unwrap();
        assert!((p - 0.25 / 2f64.ln()).abs() < 1e-14);
        let ex2 = Example::binary(vec![2.0], 1.0).unwrap();
        let p2 = psi(LossKind::Logistic, &ex2, &binary(vec![0.0])).unwrap().unwrap();
        assert!((p2 / p - 4.0).abs() < 1e-12);
        assert_eq!(psi(LossKind::Hinge, &ex, &binary(vec![2.0])).unwrap(), None);
    }

    #[test]
    fn h_examples() {
        assert!((h_logistic(0.0) - 1.0 / (4.0 * 2f64.ln())).abs() < 1e-15);
        assert!((h_logistic(30.0) / sigmoid(-30.0) - 1.0).abs() < 0.01);
        assert!((h_logistic(-100.0) * 100.0 - 1.0).abs() < 0.02);
        assert!(h_logistic(700.0) > 0.0 && h_logistic(-700.0).is_finite());
    }

    #[test]
    fn h_bound_examples() {
        let (b1, b2) = h_upper_bounds(0.0, 0.5).unwrap();
        assert_eq!(b1, 0.5);
        assert!((b2 - 1.0 / 2f64.ln()).abs() < 1e-15);
        let (_, b2) = h_upper_bounds(-10.0, 0.5).unwrap();
        assert!((b2 - 1.0 / (2f64.ln() + 5.0)).abs() < 1e-15);
        assert!(b2 >= h_logistic(-10.0));
        assert!(h_upper_bounds(0.0, 0.6).is_err());
        assert!(h_upper_bounds(0.0, 0.0).is_err());
    }

    #[test]
    fn smoothness_examples() {
        assert_eq!(smoothness_constant(LossKind::Logistic, 1.0).unwrap(), 0.25);
        assert_eq!(smoothness_constant(LossKind::SquaredHinge, 2.0).unwrap(), 4.0);
        assert_eq!(smoothness_constant(LossKind::GenSmoothHinge { a: 2.0 }, 1.0).unwrap(), 2.0);
        assert!(smoothness_constant(LossKind::Hinge, 1.0).is_err());
    }

    #[test]
    fn gsh_is_continuous_at_breakpoints() {
        for a in [1.0, 2.0, 5.5] {
            let k = LossKind::GenSmoothHinge { a };
            assert!((k.value(1.0).unwrap()).abs() < 1e-15);
            assert!((k.value(1e-12).unwrap() - a / (a + 1.0)).abs() < 1e-11);
            assert_eq!(k.derivative(0.0).unwrap(), -1.0);
            assert_eq!(k.derivative(1.0).unwrap(), 0.0);
        }
        assert!(LossKind::GenSmoothHinge { a: 0.5 }.validate().is_err());
    }

    #[test]
    fn multiclass_tie_gradient_is_averaged() {
        let p = ModelParams::new(vec![0.0, 1.0, 1.0], Task::Multiclass { k: 3 }).unwrap();
        let ex = Example::class(vec![1.0], 0).unwrap();
        let g = loss_gradient(LossKind::SquaredHinge, &ex, &p).unwrap();
        // margin -1, l'(-1) = -2
        assert_eq!(g, vec![-2.0, 1.0, 1.0]);
    }

    #[test]
    fn serde_round_trip() {
        let k = LossKind::GenSmoothHinge { a: 3.0 };
        let s = serde_json::to_string(&k).unwrap();
        assert_eq!(s, r#"{"kind":"gen_smooth_hinge","a":3.0}"#);
        assert_eq!(serde_json::from_str::<LossKind>(&s).unwrap(), k);
    }
}
