//! Closed-form convergence and sample-count bounds.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::sampling::PiSpec;

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, format!("must be positive and finite, got {v}")))
    }
}

fn nonnegative(name: &'static str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, format!("must be nonnegative and finite, got {v}")))
    }
}

/// Average squared-hinge loss bound `R^2 S^2 / (beta n)`.
pub fn bound_sqhinge_loss(r: f64, s: f64, beta: f64, n: f64) -> Result<f64> {
    positive("r", r)?;
    nonnegative("s", s)?;
    positive("n", n)?;
    if !(beta > 0.0 && beta <= 2.0) {
        return Err(invalid("beta", format!("must lie in (0, 2], got {beta}")));
    }
    Ok(r * r * s * s / (beta * n))
}

/// Expected sample count bound `min{RS mu sqrt(beta n) / 2, beta n / 2}`.
pub fn bound_sqhinge_samples(r: f64, s: f64, mu: f64, beta: f64, n: f64) -> Result<f64> {
    positive("r", r)?;
    nonnegative("s", s)?;
    positive("mu", mu)?;
    positive("beta", beta)?;
    positive("n", n)?;
    Ok((0.5 * r * s * mu * (beta * n).sqrt()).min(0.5 * beta * n))
}

/// Step size for zero-one (`absloss = false`) or sign absolute-error
/// sampling. The absolute-error case halves the zero-one step: the admissible
/// `alpha` doubles while `beta` is unchanged, and the step is `beta/alpha`.
pub fn perceptron_step(c1: f64, c2: f64, r: f64, rho_star: f64, absloss: bool) -> Result<f64> {
    positive("c1", c1)?;
    positive("c2", c2)?;
    positive("r", r)?;
    positive("rho_star", rho_star)?;
    let g = c1 * rho_star / (c2 * c2 * r * r);
    Ok(if absloss { g / 2.0 } else { g })
}

/// Expected mistake bound `c2^2 R^2 S^2 / (c1^2 omega rho*^2)`, doubled for
/// absolute-error sampling.
pub fn bound_perceptron(c1: f64, c2: f64, r: f64, s: f64, omega: f64, rho_star: f64, absloss: bool) -> Result<f64> {
    positive("c1", c1)?;
    positive("c2", c2)?;
    positive("r", r)?;
    nonnegative("s", s)?;
    positive("omega", omega)?;
    positive("rho_star", rho_star)?;
    let b = c2 * c2 * r * r * s * s / (c1 * c1 * omega * rho_star * rho_star);
    Ok(if absloss { 2.0 * b } else { b })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CARho {
    /// `a / (a (rho - 1) + 1)`.
    pub closed_form: f64,
    /// `sup_{u in [0,1]} (1 - u^a) / (rho - u)` by golden-section search.
    pub numeric: f64,
    pub argmax: f64,
}

fn f_a(a: f64, rho: f64, u: f64) -> f64 {
    (1.0 - u.powf(a)) / (rho - u)
}

/// The generalized-smooth-hinge constant, both as the closed-form upper
/// bound and as the numeric supremum it bounds.
pub fn c_a_rho(a: f64, rho: f64) -> Result<CARho> {
    if !(a >= 1.0 && a.is_finite()) {
        return Err(invalid("a", format!("must be at least 1, got {a}")));
    }
    if !(rho > 1.0 && rho.is_finite()) {
        return Err(invalid("rho", format!("must exceed 1, got {rho}")));
    }
    let closed_form = a / (a * (rho - 1.0) + 1.0);
    // f_a is unimodal on [0, 1]: f_a' has a single sign change.
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let (mut f1, mut f2) = (f_a(a, rho, x1), f_a(a, rho, x2));
    while hi - lo > 1e-12 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = f_a(a, rho, x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = f_a(a, rho, x1);
        }
    }
    let mut argmax = 0.5 * (lo + hi);
    let mut numeric = f_a(a, rho, argmax);
    let f0 = f_a(a, rho, 0.0);
    if f0 >= numeric {
        argmax = 0.0;
        numeric = f0;
    }
    Ok(CARho { closed_form, numeric, argmax })
}

/// Exact supremum where it has a closed form: `1/rho` for `a = 1` and
/// `2 (rho - sqrt(rho^2 - 1))` for `a = 2` (the maximizer solves
/// `u^2 - 2 rho u + 1 = 0`, and the supremum equals `a u^{a-1}` there).
pub fn c_a_rho_exact(a: f64, rho: f64) -> Option<f64> {
    if !(rho > 1.0) {
        return None;
    }
    if a == 1.0 {
        Some(1.0 / rho)
    } else if a == 2.0 {
        Some(2.0 * (rho - (rho * rho - 1.0).sqrt()))
    } else {
        None
    }
}

/// Average loss bound `c R^2 S^2 / (beta n)` for the generalized smooth
/// hinge; `c` is the closed form for the matched sampling function and `2a`
/// for any `pi` between it and `beta`.
pub fn bound_gsh_loss(a: f64, rho: f64, r: f64, s: f64, beta: f64, n: f64, pi_is_star: bool) -> Result<f64> {
    let c = if pi_is_star { c_a_rho(a, rho)?.closed_form } else { 2.0 * a };
    check_gsh_common(a, rho, r, s, beta, n)?;
    Ok(c * r * r * s * s / (beta * n))
}

fn check_gsh_common(a: f64, rho: f64, r: f64, s: f64, beta: f64, n: f64) -> Result<()> {
    if !(a >= 1.0) {
        return Err(invalid("a", format!("must be at least 1, got {a}")));
    }
    if !(rho > 1.0) {
        return Err(invalid("rho", format!("must exceed 1, got {rho}")));
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(invalid("beta", format!("must lie in (0, 1], got {beta}")));
    }
    positive("r", r)?;
    nonnegative("s", s)?;
    positive("n", n)
}

/// The two shapes `sqrt(beta c) R S sqrt(n) / ((rho - 1) sqrt(a))` and
/// `c R^2 S^2 / (rho - 1)` of the sample-count bound, without its unknown
/// constant factor. Requires `n > ((a + 1)/a) c R^2 S^2 / beta`.
pub fn bound_gsh_samples_scaling(a: f64, rho: f64, r: f64, s: f64, beta: f64, n: f64) -> Result<(f64, f64)> {
    check_gsh_common(a, rho, r, s, beta, n)?;
    let c = c_a_rho(a, rho)?.closed_form;
    let min_n = (a + 1.0) / a * c * r * r * s * s / beta;
    if !(n > min_n) {
        return Err(Error::Precondition(format!("need n > {min_n}, got {n}")));
    }
    let sqrt_term = (beta * c).sqrt() * r * s / ((rho - 1.0) * a.sqrt()) * n.sqrt();
    let const_term = c * r * r * s * s / (rho - 1.0);
    Ok((sqrt_term, const_term))
}

/// `beta min{1/(2L), rho}`.
pub fn aws_kappa(beta: f64, rho: f64, l: f64) -> f64 {
    beta * (1.0 / (2.0 * l)).min(rho)
}

/// Average excess loss bound
/// `rho beta Lambda* / (c kappa) + ||theta_1 - theta*||^2 / (2 c kappa n)`.
pub fn bound_aws(beta: f64, rho: f64, c: f64, l: f64, lambda_star: f64, dist0_sq: f64, n: f64) -> Result<f64> {
    positive("beta", beta)?;
    positive("rho", rho)?;
    positive("l", l)?;
    nonnegative("lambda_star", lambda_star)?;
    nonnegative("dist0_sq", dist0_sq)?;
    positive("n", n)?;
    if !(c > 0.0 && c < 1.0) {
        return Err(invalid("c", format!("must lie in (0, 1), got {c}")));
    }
    let kappa = aws_kappa(beta, rho, l);
    Ok(rho * beta * lambda_star / (c * kappa) + dist0_sq / (2.0 * c * kappa * n))
}

/// The same bound at `rho = 1/(2L)`: `Lambda*/c + (L/(c beta)) dist0_sq / n`.
pub fn bound_aws_matched(beta: f64, c: f64, l: f64, lambda_star: f64, dist0_sq: f64, n: f64) -> Result<f64> {
    positive("beta", beta)?;
    positive("l", l)?;
    positive("n", n)?;
    if !(c > 0.0 && c < 1.0) {
        return Err(invalid("c", format!("must lie in (0, 1), got {c}")));
    }
    Ok(lambda_star / c + l / (c * beta) * dist0_sq / n)
}

/// Admissible range `[beta / (4 (1 - c) L'), 1]` of the absolute-error
/// proportionality constant, `L'` being the smoothness of the loss in the
/// margin. Empty (`None`) when the lower end exceeds one.
pub fn omega_range(beta: f64, c: f64, l_margin: f64) -> Option<(f64, f64)> {
    let lo = beta / (4.0 * (1.0 - c) * l_margin);
    (lo <= 1.0).then_some((lo, 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexSmoothTerms {
    /// `Pi^{-1}(sqrt(2) S sigma / sqrt(n))`.
    pub variance_term: f64,
    /// `Pi^{-1}(L S^2 / n)`.
    pub smoothness_term: f64,
}

impl ConvexSmoothTerms {
    pub fn total(&self) -> f64 {
        self.variance_term + self.smoothness_term
    }
}

/// The two computable terms of the constant-weight bound for a convex loss
/// with `L`-smooth equivalent loss; the `inf` term is added by the caller.
pub fn bound_convexsmooth(l: f64, s: f64, sigma_pi: f64, n: f64, pi: &PiSpec) -> Result<ConvexSmoothTerms> {
    nonnegative("l", l)?;
    nonnegative("s", s)?;
    nonnegative("sigma_pi", sigma_pi)?;
    positive("n", n)?;
    Ok(ConvexSmoothTerms {
        variance_term: pi.inverse(2f64.sqrt() * s * sigma_pi / n.sqrt())?,
        smoothness_term: pi.inverse(l * s * s / n)?,
    })
}

/// Smallest `n` for the closed-form specialization with `pi(x) = 1 - e^{-x}`:
/// both arguments of `Pi^{-1}` must be at most `(3/4)^2`, where
/// `Pi^{-1}(y) <= 2 sqrt(y)`.
pub fn convexsmooth_exp_min_n(l: f64, s: f64, sigma_pi: f64) -> f64 {
    let k = 16.0 / 9.0;
    (k * k * 2.0 * s * s * sigma_pi * sigma_pi).max(k * l * s * s)
}

/// `2^{5/4} sqrt(S sigma) / n^{1/4} + 2 sqrt(L) S / sqrt(n)`, the closed-form
/// upper bound on the two terms for `pi(x) = 1 - e^{-x}`.
pub fn bound_convexsmooth_exp(l: f64, s: f64, sigma_pi: f64, n: f64) -> Result<ConvexSmoothTerms> {
    nonnegative("l", l)?;
    nonnegative("s", s)?;
    nonnegative("sigma_pi", sigma_pi)?;
    positive("n", n)?;
    let min_n = convexsmooth_exp_min_n(l, s, sigma_pi);
    if n < min_n {
        return Err(Error::Precondition(format!("need n >= {min_n}, got {n}")));
    }
    Ok(ConvexSmoothTerms {
        variance_term: 2f64.powf(1.25) * (s * sigma_pi).sqrt() / n.powf(0.25),
        smoothness_term: 2.0 * l.sqrt() * s / n.sqrt(),
    })
}

/// Step size `1 / (L + (sigma / D) sqrt(n / 2))` for a feasible set of
/// diameter `D`.
pub fn convexsmooth_step(l: f64, sigma_pi: f64, diameter: f64, n: f64) -> Result<f64> {
    nonnegative("l", l)?;
    nonnegative("sigma_pi", sigma_pi)?;
    positive("diameter", diameter)?;
    positive("n", n)?;
    let denom = l + sigma_pi / diameter * (n / 2.0).sqrt();
    if !(denom > 0.0) {
        return Err(invalid("l", "L and sigma cannot both be zero"));
    }
    Ok(1.0 / denom)
}

/// Bound on the expected number of samples from a bound on the average
/// loss: `pi(mean) n` for concave `pi`, `min{K mean n, n}` when
/// `pi(x) <= min{K x, 1}`. With both available the smaller is returned.
pub fn bound_sample_count(pi: &PiSpec, mean_loss: f64, n: f64, k: Option<f64>) -> Result<f64> {
    nonnegative("mean_loss", mean_loss)?;
    nonnegative("n", n)?;
    let concave = (pi.is_scalar() && pi.is_concave()).then(|| pi.eval_scalar(mean_loss) * n);
    let lipschitz = match k {
        Some(k) => {
            positive("k", k)?;
            Some((k * mean_loss * n).min(n))
        }
        None => None,
    };
    match (concave, lipschitz) {
        (Some(a), Some(b)) => Ok(a.min(b)),
        (Some(a), None) | (None, Some(a)) => Ok(a),
        (None, None) => Err(Error::Precondition(format!("{pi:?} is not concave and no linear bound K was given"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqhinge_examples() {
        assert!((bound_sqhinge_loss(1.0, 1.0, 2.0, 100.0).unwrap() - 0.005).abs() < 1e-15);
        let b = bound_sqhinge_samples(1.0, 1.0, 2f64.sqrt(), 2.0, 10_000.0).unwrap();
        assert!((b - 100.0).abs() < 1e-9);
        assert_eq!(bound_sqhinge_samples(1.0, 100.0, 1.0, 2.0, 4.0).unwrap(), 4.0);
        assert!(bound_sqhinge_loss(1.0, 1.0, 2.5, 10.0).is_err());
    }

    #[test]
    fn perceptron_examples() {
        assert!((bound_perceptron(0.5, 1.0, 1.0, 1.0, 1.0, 0.5, false).unwrap() - 16.0).abs() < 1e-12);
        assert!((bound_perceptron(0.5, 1.0, 1.0, 1.0, 1.0, 0.5, true).unwrap() - 32.0).abs() < 1e-12);
        assert!((bound_perceptron(0.5, 1.0, 1.0, 1.0, 1.0, 1.0, false).unwrap() - 4.0).abs() < 1e-12);
        let g = perceptron_step(0.5, 1.0, 1.0, 0.5, false).unwrap();
        assert_eq!(perceptron_step(0.5, 1.0, 1.0, 0.5, true).unwrap(), g / 2.0);
    }

    #[test]
    fn c_a_rho_values() {
        let c1 = c_a_rho(1.0, 2.0).unwrap();
        assert!((c1.numeric - 0.5).abs() < 1e-12);
        assert!((c1.closed_form - 0.5).abs() < 1e-15);
        let c2 = c_a_rho(2.0, 1.25).unwrap();
        assert!((c2.numeric - 1.0).abs() < 1e-9);
        assert!((c2.argmax - 0.5).abs() < 1e-5);
        assert!((c_a_rho_exact(2.0, 1.25).unwrap() - 1.0).abs() < 1e-15);
        for a in [1.0, 1.5, 2.0, 4.0, 16.0, 100.0] {
            for rho in [1.01, 1.25, 2.0, 5.0] {
                let c = c_a_rho(a, rho).unwrap();
                assert!(c.numeric <= c.closed_form * (1.0 + 1e-12), "a={a} rho={rho}");
                assert!(c.numeric >= 1.0 / rho - 1e-12 && c.numeric <= 1.0 / (rho - 1.0) + 1e-12);
            }
        }
    }

    #[test]
    fn gsh_examples() {
        let b = bound_gsh_loss(1.0, 2.0, 1.0, 1.0, 1.0, 100.0, true).unwrap();
        assert!((b - 0.005).abs() < 1e-15);
        let g = bound_gsh_loss(3.0, 2.0, 1.0, 1.0, 1.0, 1.0, false).unwrap();
        assert!((g - 6.0).abs() < 1e-15);
        let (s1, k1) = bound_gsh_samples_scaling(1.0, 2.0, 1.0, 1.0, 1.0, 100.0).unwrap();
        let (s4, k4) = bound_gsh_samples_scaling(1.0, 2.0, 1.0, 1.0, 1.0, 400.0).unwrap();
        assert!((s4 / s1 - 2.0).abs() < 1e-12);
        assert_eq!(k1, k4);
        assert!((s1 - (0.5f64).sqrt() * 10.0).abs() < 1e-12);
        assert!(bound_gsh_samples_scaling(1.0, 2.0, 1.0, 1.0, 1.0, 0.5).is_err());
    }

    #[test]
    fn aws_paths_agree() {
        let l = 0.25;
        let direct = bound_aws(0.5, 1.0 / (2.0 * l), 0.5, l, 0.3, 4.0, 1000.0).unwrap();
        let matched = bound_aws_matched(0.5, 0.5, l, 0.3, 4.0, 1000.0).unwrap();
        assert!((direct - matched).abs() < 1e-12);
        let sep = bound_aws(0.5, 1.0, 0.5, l, 0.0, 4.0, 1000.0).unwrap();
        assert!((sep - 4.0 / (2.0 * 0.5 * aws_kappa(0.5, 1.0, l) * 1000.0)).abs() < 1e-15);
        assert_eq!(omega_range(0.5, 0.5, 0.25), Some((1.0, 1.0)));
        assert_eq!(omega_range(0.9, 0.5, 0.25), None);
    }

    #[test]
    fn convexsmooth_examples() {
        let t = bound_convexsmooth_exp(1.0, 1.0, 1.0, 1e4).unwrap();
        assert!((t.total() - (2f64.powf(1.25) / 10.0 + 0.02)).abs() < 1e-12);
        assert!((t.total() - 0.2579).abs() < 1e-3);
        assert!(bound_convexsmooth_exp(1.0, 1.0, 1.0, 5.0).is_err());
        let lin = bound_convexsmooth(1.0, 1.0, 0.0, 1.0, &PiSpec::ClampLinear).unwrap();
        assert_eq!(lin.smoothness_term, 1.5);
        let e = bound_convexsmooth(0.005, 1.0, 0.0, 1.0, &PiSpec::ExpSaturating).unwrap();
        assert!((e.smoothness_term - 0.1).abs() / 0.1 < 0.02);
    }

    #[test]
    fn sample_count_examples() {
        let b = bound_sample_count(&PiSpec::ExpSaturating, 0.1, 100.0, None).unwrap();
        assert!((b - (1.0 - (-0.1f64).exp()) * 100.0).abs() < 1e-12);
        assert!((b - 9.516).abs() < 1e-3);
        let p = PiSpec::ClampPower { a: 2.0, b: 1.0 };
        assert!((bound_sample_count(&p, 0.3, 100.0, Some(1.0)).unwrap() - 30.0).abs() < 1e-12);
        assert_eq!(bound_sample_count(&p, 3.0, 100.0, Some(1.0)).unwrap(), 100.0);
        assert!(bound_sample_count(&p, 0.3, 100.0, None).is_err());
    }
}
