//! Sampling-probability functions, their primitives and inverses, the
//! adaptive expected step `zeta`, the stochastic step draw, and pointwise
//! checkers for the sampling conditions behind the convergence bounds.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::losses::{binary_entropy, LossKind, PointEval};
use crate::model::{score_gap, sigmoid, Example, GapStatistic, ModelParams};

/// Quantities a sampling probability may depend on, all evaluated at the
/// current point before its label is used for an update.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SamplingInput {
    /// Value (or estimate) of the sampling loss.
    pub loss: f64,
    pub margin: f64,
    /// Score gap between the top class and its runner-up (or the last class).
    pub gap: f64,
    /// Polyak ratio of the training loss; `None` when its gradient vanishes.
    pub psi: Option<f64>,
}

impl SamplingInput {
    pub fn from_loss(loss: f64) -> Self {
        SamplingInput { loss, ..Default::default() }
    }

    pub fn from_margin(margin: f64) -> Self {
        SamplingInput { margin, ..Default::default() }
    }

    pub fn at(point: &PointEval, sampling_loss: LossKind, train_loss: LossKind, gap: GapStatistic) -> Result<Self> {
        Ok(SamplingInput {
            loss: point.value(sampling_loss)?,
            margin: point.margin,
            gap: score_gap(&point.scores, gap),
            psi: point.psi(train_loss)?,
        })
    }
}

/// A sampling-probability function family with its parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum PiSpec {
    /// `1 - e^{-x}`
    ExpSaturating,
    /// `min{x, 1}`
    ClampLinear,
    /// `min{(x/b)^a, 1}`
    ClampPower { a: f64, b: f64 },
    /// `1 - 1/(1 + mu x)`
    Ratio { mu: f64 },
    /// `1 - 1/(1 + mu sqrt(x))`
    RatioSqrt { mu: f64 },
    /// `(beta/2)(1 - 1/(1 + mu sqrt(l)))` of the squared hinge loss.
    StarSquaredHinge { beta: f64, mu: f64 },
    /// `beta l(u) / ((-l'(u))(rho - u))` for the generalized smooth hinge.
    StarGsh { a: f64, beta: f64, rho: f64 },
    /// `omega x` of the absolute error.
    AbsErrorProportional { omega: f64 },
    /// `omega x` of the zero-one loss.
    ZeroOneProportional { omega: f64 },
    /// Uncertainty sampling on the binary margin.
    UncertaintyBinary { a: f64, beta: f64, c: f64, rho: f64, r: f64 },
    /// Uncertainty sampling on the multi-class score gap.
    UncertaintyMulticlass {
        a: f64,
        beta: f64,
        c: f64,
        rho: f64,
        r: f64,
        k: usize,
        #[serde(default)]
        gap: GapStatistic,
    },
    /// `zeta^eta` with `zeta = beta min{1/psi, rho}`.
    PowerOfZeta { eta: f64, beta: f64, rho: f64 },
    Constant { p: f64 },
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("must be positive and finite, got {v}")))
    }
}

fn in_range(name: &'static str, v: f64, lo_open: f64, hi_closed: f64) -> Result<()> {
    if v > lo_open && v <= hi_closed {
        Ok(())
    } else {
        Err(invalid(name, format!("must lie in ({lo_open}, {hi_closed}], got {v}")))
    }
}

fn series_x_minus_log1p(t: f64) -> f64 {
    // sum_{k>=2} (-1)^k t^k / k
    let mut term = t * t;
    let mut sum = 0.0;
    for k in 2..40 {
        let s = if k % 2 == 0 { 1.0 } else { -1.0 };
        sum += s * term / k as f64;
        term *= t;
    }
    sum
}

/// `t - log(1 + t)` without cancellation for small `t`.
fn x_minus_log1p(t: f64) -> f64 {
    if t < 0.1 {
        series_x_minus_log1p(t)
    } else {
        t - t.ln_1p()
    }
}

/// `s^2/2 - s + log(1 + s)` without cancellation for small `s`.
fn ratio_sqrt_kernel(s: f64) -> f64 {
    if s < 0.1 {
        // sum_{k>=3} (-1)^{k+1} s^k / k
        let mut term = s * s * s;
        let mut sum = 0.0;
        for k in 3..40 {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            sum += sign * term / k as f64;
            term *= s;
        }
        sum
    } else {
        0.5 * s * s - s + s.ln_1p()
    }
}

/// `x + e^{-x} - 1` without cancellation for small `x`.
fn exp_saturating_primitive(x: f64) -> f64 {
    if x < 0.1 {
        let mut term = x * x / 2.0;
        let mut sum = 0.0;
        for k in 2..30 {
            sum += term;
            term *= -x / (k + 1) as f64;
        }
        sum
    } else {
        x + (-x).exp_m1()
    }
}

/// `(1 - u)/(1 - u^a)` for `u` in `[0, 1)`.
fn gsh_ratio(a: f64, u: f64) -> f64 {
    if u == 0.0 {
        1.0
    } else {
        (1.0 - u) / -(a * u.ln()).exp_m1()
    }
}

/// The sampling function of the generalized smooth hinge theorem.
pub fn gsh_star(a: f64, beta: f64, rho: f64, u: f64) -> f64 {
    let head = a / (a + 1.0);
    if u <= 0.0 {
        beta * (head - u) / (rho - u)
    } else if u < 1.0 {
        let num = head * gsh_ratio(a, u) - u / (a + 1.0);
        beta * num.max(0.0) / (rho - u)
    } else {
        0.0
    }
}

impl PiSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PiSpec::ExpSaturating | PiSpec::ClampLinear => Ok(()),
            PiSpec::ClampPower { a, b } => positive("a", a).and(positive("b", b)),
            PiSpec::Ratio { mu } | PiSpec::RatioSqrt { mu } => positive("mu", mu),
            PiSpec::StarSquaredHinge { beta, mu } => in_range("beta", beta, 0.0, 2.0).and(positive("mu", mu)),
            PiSpec::StarGsh { a, beta, rho } => {
                if !(a.is_finite() && a >= 1.0) {
                    return Err(invalid("a", format!("must be at least 1, got {a}")));
                }
                in_range("beta", beta, 0.0, 1.0)?;
                if !(rho.is_finite() && rho > 1.0) {
                    return Err(invalid("rho", format!("must exceed 1, got {rho}")));
                }
                Ok(())
            }
            PiSpec::AbsErrorProportional { omega } => positive("omega", omega),
            PiSpec::ZeroOneProportional { omega } => in_range("omega", omega, 0.0, 1.0),
            PiSpec::UncertaintyBinary { a, beta, c, rho, r } => uncertainty_params(a, beta, c, rho, r),
            PiSpec::UncertaintyMulticlass { a, beta, c, rho, r, k, .. } => {
                if k < 2 {
                    return Err(invalid("k", format!("need at least two classes, got {k}")));
                }
                uncertainty_params(a, beta, c, rho, r)
            }
            PiSpec::PowerOfZeta { eta, beta, rho } => {
                if !(eta.is_finite() && eta >= 0.0) {
                    return Err(invalid("eta", format!("must be nonnegative, got {eta}")));
                }
                positive("beta", beta).and(positive("rho", rho))
            }
            PiSpec::Constant { p } => {
                if (0.0..=1.0).contains(&p) {
                    Ok(())
                } else {
                    Err(invalid("p", format!("must lie in [0, 1], got {p}")))
                }
            }
        }
    }

    /// Whether the family is a function of a scalar loss value.
    pub fn is_scalar(&self) -> bool {
        matches!(
            self,
            PiSpec::ExpSaturating
                | PiSpec::ClampLinear
                | PiSpec::ClampPower { .. }
                | PiSpec::Ratio { .. }
                | PiSpec::RatioSqrt { .. }
                | PiSpec::StarSquaredHinge { .. }
                | PiSpec::AbsErrorProportional { .. }
                | PiSpec::ZeroOneProportional { .. }
                | PiSpec::Constant { .. }
        )
    }

    /// Whether the probability depends on the (estimated) loss, so that an
    /// estimator can stand in for the true value.
    pub fn uses_loss(&self) -> bool {
        self.is_scalar() && !matches!(self, PiSpec::Constant { .. })
    }

    /// Sampling probability, clamped to `[0, 1]`.
    pub fn eval(&self, input: &SamplingInput) -> f64 {
        let raw = match *self {
            PiSpec::StarGsh { a, beta, rho } => gsh_star(a, beta, rho, input.margin),
            PiSpec::UncertaintyBinary { a, beta, c, rho, r } => {
                let h = 1.0 / (binary_entropy(a) + (1.0 - a) * input.margin.abs());
                beta / (2.0 * (1.0 - c)) * (rho * r * r * h).min(1.0)
            }
            PiSpec::UncertaintyMulticlass { a, beta, c, rho, r, k, .. } => {
                let h = h_star_multiclass(a, k, input.gap);
                beta / (2.0 * (1.0 - c)) * (2.0 * rho * r * r * h).min(1.0)
            }
            PiSpec::PowerOfZeta { eta, beta, rho } => zeta_polyak(input.psi, beta, rho).powf(eta),
            _ => self.scalar_raw(input.loss),
        };
        clamp01(raw)
    }

    /// Probability as a function of a scalar loss value; margin- and
    /// gap-based families read `x` as their own argument.
    pub fn eval_scalar(&self, x: f64) -> f64 {
        match self {
            PiSpec::StarGsh { .. } | PiSpec::UncertaintyBinary { .. } => self.eval(&SamplingInput::from_margin(x)),
            PiSpec::UncertaintyMulticlass { .. } => self.eval(&SamplingInput { gap: x, ..Default::default() }),
            PiSpec::PowerOfZeta { .. } => {
                self.eval(&SamplingInput { psi: if x > 0.0 { Some(x) } else { None }, ..Default::default() })
            }
            _ => clamp01(self.scalar_raw(x)),
        }
    }

    fn scalar_raw(&self, x: f64) -> f64 {
        let x = x.max(0.0);
        match *self {
            PiSpec::ExpSaturating => -(-x).exp_m1(),
            PiSpec::ClampLinear => x.min(1.0),
            PiSpec::ClampPower { a, b } => (x / b).powf(a).min(1.0),
            PiSpec::Ratio { mu } => mu * x / (1.0 + mu * x),
            PiSpec::RatioSqrt { mu } => {
                let s = mu * x.sqrt();
                s / (1.0 + s)
            }
            PiSpec::StarSquaredHinge { beta, mu } => {
                let s = mu * x.sqrt();
                beta / 2.0 * s / (1.0 + s)
            }
            PiSpec::AbsErrorProportional { omega } | PiSpec::ZeroOneProportional { omega } => (omega * x).min(1.0),
            PiSpec::Constant { p } => p,
            _ => f64::NAN,
        }
    }

    /// `pi'(x)` for the scalar families.
    pub fn derivative(&self, x: f64) -> Result<f64> {
        let x = x.max(0.0);
        Ok(match *self {
            PiSpec::ExpSaturating => (-x).exp(),
            PiSpec::ClampLinear => if x < 1.0 { 1.0 } else { 0.0 },
            PiSpec::ClampPower { a, b } => {
                if x < b {
                    a / b * (x / b).powf(a - 1.0)
                } else {
                    0.0
                }
            }
            PiSpec::Ratio { mu } => mu / (1.0 + mu * x).powi(2),
            PiSpec::RatioSqrt { mu } => ratio_sqrt_derivative(mu, x),
            PiSpec::StarSquaredHinge { beta, mu } => beta / 2.0 * ratio_sqrt_derivative(mu, x),
            PiSpec::AbsErrorProportional { omega } | PiSpec::ZeroOneProportional { omega } => {
                if omega * x < 1.0 {
                    omega
                } else {
                    0.0
                }
            }
            PiSpec::Constant { .. } => 0.0,
            _ => return Err(self.no_scalar("derivative")),
        })
    }

    fn no_scalar(&self, what: &str) -> Error {
        Error::Unsupported(format!("{what} is only defined for loss-valued sampling functions, not {self:?}"))
    }

    /// Primitive `Pi(x) = int_0^x pi`.
    pub fn primitive(&self, x: f64) -> Result<f64> {
        if !(x >= 0.0) {
            return Err(invalid("x", format!("primitive needs x >= 0, got {x}")));
        }
        Ok(match *self {
            PiSpec::ExpSaturating => exp_saturating_primitive(x),
            PiSpec::ClampLinear => {
                if x <= 1.0 {
                    0.5 * x * x
                } else {
                    x - 0.5
                }
            }
            PiSpec::ClampPower { a, b } => {
                if x <= b {
                    (x / b).powf(a) * x / (1.0 + a)
                } else {
                    x - a * b / (1.0 + a)
                }
            }
            PiSpec::Ratio { mu } => x_minus_log1p(mu * x) / mu,
            PiSpec::RatioSqrt { mu } => 2.0 / (mu * mu) * ratio_sqrt_kernel(mu * x.sqrt()),
            PiSpec::StarSquaredHinge { beta, mu } => beta / 2.0 * 2.0 / (mu * mu) * ratio_sqrt_kernel(mu * x.sqrt()),
            PiSpec::AbsErrorProportional { omega } | PiSpec::ZeroOneProportional { omega } => {
                if omega * x <= 1.0 {
                    0.5 * omega * x * x
                } else {
                    x - 0.5 / omega
                }
            }
            PiSpec::Constant { p } => p * x,
            _ => return Err(self.no_scalar("primitive")),
        })
    }

    /// `Pi^{-1}(y)`: closed form where available, bisection otherwise.
    pub fn inverse(&self, y: f64) -> Result<f64> {
        if !(y >= 0.0) {
            return Err(invalid("y", format!("inverse needs y >= 0, got {y}")));
        }
        Ok(match *self {
            PiSpec::ClampLinear => {
                if y <= 0.5 {
                    (2.0 * y).sqrt()
                } else {
                    y + 0.5
                }
            }
            PiSpec::ClampPower { a, b } => {
                if y <= b / (1.0 + a) {
                    b.powf(a / (1.0 + a)) * (1.0 + a).powf(1.0 / (1.0 + a)) * y.powf(1.0 / (1.0 + a))
                } else {
                    y + a * b / (1.0 + a)
                }
            }
            PiSpec::AbsErrorProportional { omega } | PiSpec::ZeroOneProportional { omega } => {
                if y <= 0.5 / omega {
                    (2.0 * y / omega).sqrt()
                } else {
                    y + 0.5 / omega
                }
            }
            PiSpec::Constant { p } => {
                if y == 0.0 {
                    0.0
                } else if p == 0.0 {
                    f64::INFINITY
                } else {
                    y / p
                }
            }
            PiSpec::ExpSaturating | PiSpec::Ratio { .. } | PiSpec::RatioSqrt { .. } | PiSpec::StarSquaredHinge { .. } => {
                self.bisect_inverse(y)?
            }
            _ => return Err(self.no_scalar("inverse")),
        })
    }

    fn bisect_inverse(&self, y: f64) -> Result<f64> {
        if y == 0.0 {
            return Ok(0.0);
        }
        let mut hi = 1.0;
        let mut doublings = 0;
        while self.primitive(hi)? < y {
            hi *= 2.0;
            doublings += 1;
            if doublings > 1100 {
                return Err(Error::Unsupported(format!("Pi^-1({y}) is out of range for {self:?}")));
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            if hi - lo <= 1e-12 * hi.min(1.0) {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.primitive(mid)? < y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    pub fn is_concave(&self) -> bool {
        match self {
            PiSpec::ClampPower { a, .. } => *a <= 1.0,
            s => s.is_scalar(),
        }
    }

    /// Some `K` with `pi(x) <= min{K x, 1}`, if one exists.
    pub fn linear_bound(&self) -> Option<f64> {
        match *self {
            PiSpec::ExpSaturating | PiSpec::ClampLinear => Some(1.0),
            PiSpec::ClampPower { a, b } if a >= 1.0 => Some(1.0 / b),
            PiSpec::Ratio { mu } => Some(mu),
            PiSpec::AbsErrorProportional { omega } | PiSpec::ZeroOneProportional { omega } => Some(omega),
            _ => None,
        }
    }

    /// The parameter that scales the sampling rate, used by calibration.
    pub fn scale(&self) -> Option<f64> {
        match *self {
            PiSpec::StarSquaredHinge { beta, .. }
            | PiSpec::StarGsh { beta, .. }
            | PiSpec::UncertaintyBinary { beta, .. }
            | PiSpec::UncertaintyMulticlass { beta, .. }
            | PiSpec::PowerOfZeta { beta, .. } => Some(beta),
            PiSpec::AbsErrorProportional { omega } | PiSpec::ZeroOneProportional { omega } => Some(omega),
            PiSpec::Constant { p } => Some(p),
            PiSpec::Ratio { mu } | PiSpec::RatioSqrt { mu } => Some(mu),
            PiSpec::ClampPower { b, .. } => Some(1.0 / b),
            PiSpec::ExpSaturating | PiSpec::ClampLinear => None,
        }
    }

    pub fn with_scale(&self, s: f64) -> Result<PiSpec> {
        let mut out = *self;
        match &mut out {
            PiSpec::StarSquaredHinge { beta, .. }
            | PiSpec::StarGsh { beta, .. }
            | PiSpec::UncertaintyBinary { beta, .. }
            | PiSpec::UncertaintyMulticlass { beta, .. }
            | PiSpec::PowerOfZeta { beta, .. } => *beta = s,
            PiSpec::AbsErrorProportional { omega } | PiSpec::ZeroOneProportional { omega } => *omega = s,
            PiSpec::Constant { p } => *p = s,
            PiSpec::Ratio { mu } | PiSpec::RatioSqrt { mu } => *mu = s,
            PiSpec::ClampPower { b, .. } => *b = 1.0 / s,
            PiSpec::ExpSaturating | PiSpec::ClampLinear => {
                return Err(Error::Unsupported(format!("{self:?} has no scale parameter")))
            }
        }
        Ok(out)
    }

    /// Largest admissible value of the scale parameter.
    pub fn max_scale(&self) -> f64 {
        match self {
            PiSpec::StarSquaredHinge { .. } => 2.0,
            PiSpec::StarGsh { .. } | PiSpec::ZeroOneProportional { .. } | PiSpec::Constant { .. } => 1.0,
            _ => f64::INFINITY,
        }
    }
}

fn ratio_sqrt_derivative(mu: f64, x: f64) -> f64 {
    if x == 0.0 {
        return f64::INFINITY;
    }
    let r = x.sqrt();
    mu / (2.0 * r * (1.0 + mu * r).powi(2))
}

fn uncertainty_params(a: f64, beta: f64, c: f64, rho: f64, r: f64) -> Result<()> {
    in_range("a", a, 0.0, 0.5)?;
    positive("beta", beta)?;
    if !(c > 0.0 && c < 1.0) {
        return Err(invalid("c", format!("must lie in (0, 1), got {c}")));
    }
    positive("rho", rho)?;
    positive("r", r)
}

fn clamp01(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

/// `h*(g) = 1/(H(a) + (1 - a) max{g - log(k - 1), 0})`.
pub fn h_star_multiclass(a: f64, k: usize, g: f64) -> f64 {
    let shift = ((k - 1) as f64).ln();
    1.0 / (binary_entropy(a) + (1.0 - a) * (g - shift).max(0.0))
}

/// `beta min{1/psi, rho}`, and zero when the gradient vanishes.
pub fn zeta_polyak(psi: Option<f64>, beta: f64, rho: f64) -> f64 {
    match psi {
        None => 0.0,
        Some(p) => beta * (1.0 / p).min(rho),
    }
}

pub fn zeta_for(kind: LossKind, ex: &Example, params: &ModelParams, beta: f64, rho: f64) -> Result<f64> {
    Ok(zeta_polyak(crate::losses::psi(kind, ex, params)?, beta, rho))
}

/// The stochastic step-size law.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepPolicy {
    /// `z = gamma` with probability `pi`, else 0.
    ConstantWeight { gamma: f64, pi: PiSpec },
    /// `z = zeta/pi` with probability `pi`, else 0.
    AdaptiveWeight { beta: f64, rho: f64, pi: PiSpec },
}

impl StepPolicy {
    pub fn pi(&self) -> &PiSpec {
        match self {
            StepPolicy::ConstantWeight { pi, .. } | StepPolicy::AdaptiveWeight { pi, .. } => pi,
        }
    }

    pub fn pi_mut(&mut self) -> &mut PiSpec {
        match self {
            StepPolicy::ConstantWeight { pi, .. } | StepPolicy::AdaptiveWeight { pi, .. } => pi,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            StepPolicy::ConstantWeight { gamma, pi } => {
                positive("gamma", gamma)?;
                pi.validate()
            }
            StepPolicy::AdaptiveWeight { beta, rho, pi } => {
                positive("beta", beta)?;
                positive("rho", rho)?;
                pi.validate()
            }
        }
    }

    /// Expected step at a point: `gamma pi` or `zeta`.
    pub fn expected_step(&self, pi: f64, psi: Option<f64>) -> f64 {
        match *self {
            StepPolicy::ConstantWeight { gamma, .. } => gamma * pi,
            StepPolicy::AdaptiveWeight { beta, rho, .. } => zeta_polyak(psi, beta, rho),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepDraw {
    pub sampled: bool,
    pub step_size: f64,
    pub pi_used: f64,
    pub expected_step: f64,
}

/// Decides the step from a uniform draw in `[0, 1)`: sampled iff `u < pi`.
/// Adaptive weight with `zeta = 0` never samples.
pub fn step_from_uniform(policy: &StepPolicy, pi: f64, psi: Option<f64>, u: f64) -> Result<StepDraw> {
    let expected = policy.expected_step(pi, psi);
    match policy {
        StepPolicy::ConstantWeight { gamma, .. } => {
            let sampled = u < pi;
            Ok(StepDraw { sampled, step_size: if sampled { *gamma } else { 0.0 }, pi_used: pi, expected_step: expected })
        }
        StepPolicy::AdaptiveWeight { .. } => {
            if expected == 0.0 {
                return Ok(StepDraw { sampled: false, step_size: 0.0, pi_used: pi, expected_step: 0.0 });
            }
            if pi <= 0.0 {
                return Err(Error::InconsistentPolicy(format!(
                    "sampling probability is zero while the expected step is {expected}"
                )));
            }
            let sampled = u < pi;
            Ok(StepDraw {
                sampled,
                step_size: if sampled { expected / pi } else { 0.0 },
                pi_used: pi,
                expected_step: expected,
            })
        }
    }
}

/// Draws the stochastic step for a point. No random number is consumed when
/// an adaptive-weight step has zero mean.
pub fn draw_step<R: Rng + ?Sized>(policy: &StepPolicy, input: &SamplingInput, rng: &mut R) -> Result<StepDraw> {
    let pi = policy.pi().eval(input);
    if let StepPolicy::AdaptiveWeight { beta, rho, .. } = policy {
        if zeta_polyak(input.psi, *beta, *rho) == 0.0 {
            return step_from_uniform(policy, pi, input.psi, 1.0);
        }
    }
    let u: f64 = rng.random();
    step_from_uniform(policy, pi, input.psi, u)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub holds: bool,
    pub checked: usize,
    pub violations: usize,
    /// Smallest `lhs - rhs` over the checked points (negative on violation).
    pub worst_slack: f64,
    /// Point (margin or sample index) attaining the worst slack.
    pub worst_at: f64,
}

impl ConditionReport {
    fn new() -> Self {
        ConditionReport { holds: true, checked: 0, violations: 0, worst_slack: f64::INFINITY, worst_at: f64::NAN }
    }

    /// Records `lhs >= rhs` with a relative tolerance of `1e-12`.
    fn record(&mut self, lhs: f64, rhs: f64, at: f64) {
        self.checked += 1;
        let slack = lhs - rhs;
        if slack < self.worst_slack {
            self.worst_slack = slack;
            self.worst_at = at;
        }
        if slack < -1e-12 * rhs.abs().max(lhs.abs()).max(1.0) || slack.is_nan() {
            self.violations += 1;
            self.holds = false;
        }
    }
}

/// Checks `pi >= beta/(2(1-c)) min{rho psi, 1}` at every sample whose
/// training-loss gradient is nonzero.
pub fn check_aws_condition(
    spec: &PiSpec,
    train_loss: LossKind,
    sampling_loss: LossKind,
    beta: f64,
    rho: f64,
    c: f64,
    samples: &[(Example, ModelParams)],
) -> Result<ConditionReport> {
    if !(c > 0.0 && c < 1.0) {
        return Err(invalid("c", format!("must lie in (0, 1), got {c}")));
    }
    let gap = match spec {
        PiSpec::UncertaintyMulticlass { gap, .. } => *gap,
        _ => GapStatistic::Top2,
    };
    let mut report = ConditionReport::new();
    for (i, (ex, params)) in samples.iter().enumerate() {
        let point = PointEval::new(params, ex)?;
        let input = SamplingInput::at(&point, sampling_loss, train_loss, gap)?;
        let Some(psi) = input.psi else { continue };
        let rhs = beta / (2.0 * (1.0 - c)) * (rho * psi).min(1.0);
        report.record(spec.eval(&input), rhs, i as f64);
    }
    Ok(report)
}

/// Inputs of the pointwise margin conditions
/// `pi(u) l'(u)^2 R^2 m <= alpha l~(u)` and
/// `pi(u) (-l'(u)) (rho* - u) >= beta l~(u)`,
/// where `m` is 1 for binary and 2 for multi-class margins.
#[derive(Clone, Debug)]
pub struct AlphaBetaCheck<'a> {
    pub pi: PiSpec,
    /// Loss whose value feeds loss-valued sampling functions.
    pub sampling_loss: LossKind,
    pub train_loss: LossKind,
    pub eval_loss: LossKind,
    pub alpha: f64,
    pub beta: f64,
    pub rho_star: f64,
    pub r: f64,
    pub multiclass: bool,
    pub grid: &'a [f64],
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AlphaBetaReport {
    pub holds: bool,
    pub upper: ConditionReport,
    pub lower: ConditionReport,
}

pub fn check_alpha_beta_conditions(chk: &AlphaBetaCheck) -> Result<AlphaBetaReport> {
    if chk.grid.is_empty() {
        return Err(invalid("grid", "margin grid is empty"));
    }
    let factor = if chk.multiclass { 2.0 } else { 1.0 };
    let mut upper = ConditionReport::new();
    let mut lower = ConditionReport::new();
    for &u in chk.grid {
        let input = SamplingInput { loss: chk.sampling_loss.value(u)?, margin: u, gap: u.abs(), psi: None };
        let pi = chk.pi.eval(&input);
        let lp = chk.train_loss.derivative(u)?;
        let lt = chk.eval_loss.value(u)?;
        upper.record(chk.alpha * lt, pi * lp * lp * chk.r * chk.r * factor, u);
        lower.record(pi * (-lp) * (chk.rho_star - u), chk.beta * lt, u);
    }
    Ok(AlphaBetaReport { holds: upper.holds && lower.holds, upper, lower })
}

/// Absolute error `1 - sigmoid(u)` as used by loss estimators.
pub fn abs_error_of_margin(u: f64) -> f64 {
    sigmoid(-u)
}
