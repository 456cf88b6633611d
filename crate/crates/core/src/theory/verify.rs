//! Seeded empirical checks of every bound, plus pointwise condition and
//! identity checks, grouped into named suites.

use std::f64::consts::SQRT_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::bounds::*;
use super::equivalent::equivalent_loss_check;
use super::reference::{fit_reference, margin_curvature, sampled_gradient_scale, second_moment, Objective};
use super::stats::{loglog_slope, MeanSe};
use crate::data::{
    gen_logistic_dataset, gen_margin_dataset, gen_multiclass_margin_dataset, Dataset, LogisticSpec, MarginSpec,
};
use crate::engine::{derive_seed, evaluate_holdout, run_stream_on, DatasetRef, RunConfig, RunResult};
use crate::error::{Error, Result};
use crate::losses::{h_logistic, h_upper_bounds, LossKind};
use crate::model::{norm_sq, Example, GapStatistic, ModelParams, ProjectionBall, Task};
use crate::sampling::{
    check_alpha_beta_conditions, check_aws_condition, AlphaBetaCheck, ConditionReport, PiSpec, StepPolicy,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    /// `empirical <= theoretical + tolerance`.
    Upper,
    /// `empirical >= theoretical - tolerance`.
    Lower,
    /// `|empirical - theoretical| <= tolerance`.
    Near,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub suite: String,
    pub bound_name: String,
    pub kind: BoundKind,
    pub theoretical_value: f64,
    pub empirical_value: f64,
    /// Statistical allowance, three standard errors for seeded means.
    pub tolerance: f64,
    pub holds: bool,
    /// Distance to failing; negative when the check fails.
    pub slack: f64,
    pub config: Value,
}

const REL_TOL: f64 = 1e-9;

impl BoundReport {
    pub fn new(suite: &str, name: &str, kind: BoundKind, theoretical: f64, empirical: f64, tolerance: f64, config: Value) -> Self {
        let slack = match kind {
            BoundKind::Upper => theoretical + REL_TOL * theoretical.abs() + tolerance - empirical,
            BoundKind::Lower => empirical - theoretical + REL_TOL * theoretical.abs() + tolerance,
            BoundKind::Near => tolerance - (empirical - theoretical).abs(),
        };
        BoundReport {
            suite: suite.to_string(),
            bound_name: name.to_string(),
            kind,
            theoretical_value: theoretical,
            empirical_value: empirical,
            tolerance,
            holds: slack >= 0.0,
            slack,
            config,
        }
    }

    fn upper_mean(suite: &str, name: &str, theoretical: f64, samples: &[f64], mut config: Value) -> Self {
        let m = MeanSe::of(samples);
        config["replications"] = json!(m.count);
        config["standard_error"] = json!(m.se);
        BoundReport::new(suite, name, BoundKind::Upper, theoretical, m.mean, 3.0 * m.se, config)
    }

    fn condition(suite: &str, name: &str, rep: &ConditionReport, mut config: Value) -> Self {
        config["checked"] = json!(rep.checked);
        config["worst_slack"] = json!(rep.worst_slack);
        config["worst_at"] = json!(rep.worst_at);
        BoundReport::new(suite, name, BoundKind::Upper, 0.0, rep.violations as f64, 0.0, config)
    }

    /// A negative control: the checker must flag the deliberately violated
    /// condition.
    fn violation_detected(suite: &str, name: &str, rep: &ConditionReport, mut config: Value) -> Self {
        config["violations"] = json!(rep.violations);
        config["checked"] = json!(rep.checked);
        let found = if rep.violations > 0 { 1.0 } else { 0.0 };
        BoundReport::new(suite, name, BoundKind::Near, 1.0, found, 0.0, config)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    /// Replications for bound-vs-mean checks.
    pub seeds: usize,
    /// Replications per grid point for growth-rate fits.
    pub slope_seeds: usize,
    /// Stream lengths for growth-rate fits.
    pub slope_grid: Vec<usize>,
    pub base_seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { seeds: 30, slope_seeds: 10, slope_grid: vec![1_000, 10_000, 100_000], base_seed: 0 }
    }
}

impl VerifyOptions {
    /// Fewer replications, for smoke tests.
    pub fn quick() -> Self {
        VerifyOptions { seeds: 6, slope_seeds: 3, ..Self::default() }
    }
}

pub const SUITES: &[&str] = &[
    "thm-squared-hinge",
    "thm-perceptron",
    "thm-gsh",
    "thm-gsh-sampling",
    "thm-convex-smooth",
    "lemma-sample-count",
    "thm-aws",
    "aws-conditions",
    "lemma-alpha-beta",
    "lemma-h-bounds",
    "equivalent-loss",
];

/// Runs one suite by name, or every suite for `"all"`.
pub fn run_suite(name: &str, opts: &VerifyOptions) -> Result<Vec<BoundReport>> {
    if opts.seeds < 2 || opts.slope_seeds < 1 || opts.slope_grid.len() < 2 {
        return Err(Error::InvalidParameter {
            name: "verify options",
            reason: "need at least 2 seeds, 1 slope seed and 2 grid points".into(),
        });
    }
    match name {
        "all" => {
            let mut out = Vec::new();
            for s in SUITES {
                out.extend(run_suite(s, opts)?);
            }
            Ok(out)
        }
        "thm-squared-hinge" => squared_hinge(opts),
        "thm-perceptron" => perceptron(opts),
        "thm-gsh" => gsh(opts),
        "thm-gsh-sampling" => gsh_sampling(opts),
        "thm-convex-smooth" => convex_smooth(opts),
        "lemma-sample-count" => sample_count(opts),
        "thm-aws" => aws(opts),
        "aws-conditions" => aws_conditions(opts),
        "lemma-alpha-beta" => alpha_beta(),
        "lemma-h-bounds" => h_bounds(),
        "equivalent-loss" => equivalent_loss(opts),
        other => Err(Error::InvalidParameter {
            name: "suite",
            reason: format!("unknown suite `{other}`; expected `all` or one of {}", SUITES.join(", ")),
        }),
    }
}

fn replicate<T: Send>(
    opts: &VerifyOptions,
    count: usize,
    stream: u64,
    f: impl Fn(u64) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    (0..count as u64).into_par_iter().map(|i| f(derive_seed(opts.base_seed, stream * 1_000_003 + i))).collect()
}

fn margin_run(spec: MarginSpec, train: LossKind, policy: StepPolicy, sampling: LossKind, eval: LossKind) -> Result<RunResult> {
    let ds = gen_margin_dataset(&spec)?.0;
    let dataset = DatasetRef::Margin { n: spec.n, d: spec.d, rho_star: spec.rho_star, r: spec.r, seed: spec.seed };
    run_quiet(&ds, dataset, train, policy, sampling, eval, spec.seed)
}

fn run_quiet(
    ds: &Dataset,
    dataset: DatasetRef,
    train: LossKind,
    policy: StepPolicy,
    sampling: LossKind,
    eval: LossKind,
    seed: u64,
) -> Result<RunResult> {
    let mut cfg = RunConfig::new(dataset, train, policy);
    cfg.sampling_loss = sampling;
    cfg.eval_losses = vec![eval];
    cfg.seed = seed;
    cfg.record_rows = false;
    run_stream_on(&cfg, ds)
}

fn avg(res: &RunResult) -> f64 {
    res.summary.progressive[0].average
}

fn total(res: &RunResult) -> f64 {
    res.summary.progressive[0].total
}

fn samples(res: &RunResult) -> f64 {
    res.summary.total_samples as f64
}

/// Mean of `f` over `slope_seeds` replications at each grid length, and the
/// log-log slope of those means.
fn growth(
    opts: &VerifyOptions,
    stream: u64,
    f: impl Fn(usize, u64) -> Result<f64> + Sync + Send,
) -> Result<(Vec<f64>, Option<f64>)> {
    let mut means = Vec::new();
    for (k, &n) in opts.slope_grid.iter().enumerate() {
        let xs = replicate(opts, opts.slope_seeds, stream + 100 * k as u64, |seed| f(n, seed))?;
        means.push(MeanSe::of(&xs).mean);
    }
    let ns: Vec<f64> = opts.slope_grid.iter().map(|&n| n as f64).collect();
    let slope = loglog_slope(&ns, &means);
    Ok((means, slope))
}

// Linearly separable data: points in the unit ball with geometric margin
// `m` about a unit separator, so margin `rho*` in the loss's units is
// reached by scaling the separator to norm `S = rho*/m` (and `theta_1 = 0`).
const D: usize = 20;
const R: f64 = 1.0;

fn squared_hinge(opts: &VerifyOptions) -> Result<Vec<BoundReport>> {
    const SUITE: &str = "thm-squared-hinge";
    // A small geometric margin keeps the whole slope grid in the regime
    // where the sqrt(n) term of the sample bound is the active one.
    let (m, rho_star, beta, n) = (0.02, 2.0, 2.0, 5_000usize);
    let s = rho_star / m;
    let mu = SQRT_2 / (rho_star - 1.0);
    let gamma = 1.0 / (R * R);
    let policy = StepPolicy::ConstantWeight { gamma, pi: PiSpec::StarSquaredHinge { beta, mu } };
    let run = |m: f64, n: usize, seed: u64| {
        let spec = MarginSpec { n, d: D, rho_star: m, r: R, seed };
        margin_run(spec, LossKind::SquaredHinge, policy, LossKind::SquaredHinge, LossKind::SquaredHinge)
    };
    let results = replicate(opts, opts.seeds, 1, |seed| run(m, n, seed))?;
    let config = json!({"d": D, "R": R, "geometric_margin": m, "rho_star": rho_star, "S": s, "beta": beta, "mu": mu, "gamma": gamma, "n": n});
    let losses: Vec<f64> = results.iter().map(avg).collect();
    let counts: Vec<f64> = results.iter().map(samples).collect();
    let mut out = vec![
        BoundReport::upper_mean(SUITE, "average squared-hinge loss", bound_sqhinge_loss(R, s, beta, n as f64)?, &losses, config.clone()),
        BoundReport::upper_mean(
            SUITE,
            "expected number of samples",
            bound_sqhinge_samples(R, s, mu, beta, n as f64)?,
            &counts,
            config.clone(),
        ),
    ];
    let (means, slope) = growth(opts, 2, |n, seed| run(m, n, seed).map(|r| samples(&r)))?;
    let mut c = config.clone();
    c["grid"] = json!(opts.slope_grid);
    c["mean_samples"] = json!(means);
    out.push(BoundReport::new(SUITE, "sample count growth exponent", BoundKind::Near, 0.5, slope.unwrap_or(f64::NAN), 0.1, c));
    // With a wide margin the iterates separate the data early and the
    // counts flatten out well below the sqrt(n) envelope.
    let wide = 0.2;
    let (means, slope) = growth(opts, 3, |n, seed| run(wide, n, seed).map(|r| samples(&r)))?;
    let mut c = config;
    c["geometric_margin"] = json!(wide);
    c["S"] = json!(rho_star / wide);
    c["grid"] = json!(opts.slope_grid);
    c["mean_samples"] = json!(means);
    out.push(BoundReport::new(
        SUITE,
        "sample count grows no faster than sqrt(n), wide margin",
        BoundKind::Upper,
        0.5,
        slope.unwrap_or(f64::NAN),
        0.1,
        c,
    ));
    Ok(out)
}

fn perceptron(opts: &VerifyOptions) -> Result<Vec<BoundReport>> {
    const SUITE: &str = "thm-perceptron";
    // Logistic loss: l'(0) = -1/2 and l' -> -1, so c1 = 1/2, c2 = 1.
    let (c1, c2, rho_star, s, n) = (0.5, 1.0, 0.1, 1.0, 5_000usize);
    let mut out = Vec::new();
    for (absloss, omega) in [(false, 1.0), (true, 0.5)] {
        let gamma = perceptron_step(c1, c2, R, rho_star, absloss)?;
        let (pi, sampling) = if absloss {
            (PiSpec::AbsErrorProportional { omega }, LossKind::SignAbsError)
        } else {
            (PiSpec::ZeroOneProportional { omega }, LossKind::ZeroOne)
        };
        let policy = StepPolicy::ConstantWeight { gamma, pi };
        let results = replicate(opts, opts.seeds, 10 + absloss as u64, |seed| {
            margin_run(MarginSpec { n, d: D, rho_star, r: R, seed }, LossKind::Logistic, policy, sampling, LossKind::ZeroOne)
        })?;
        let mistakes: Vec<f64> = results.iter().map(total).collect();
        let counts: Vec<f64> = results.iter().map(samples).collect();
        let config = json!({"d": D, "R": R, "rho_star": rho_star, "S": s, "c1": c1, "c2": c2, "omega": omega, "gamma": gamma, "n": n, "sampling_loss": sampling.name()});
        let label = if absloss { "absolute-error" } else { "zero-one" };
        out.push(BoundReport::upper_mean(
            SUITE,
            &format!("expected mistakes, {label} sampling"),
            bound_perceptron(c1, c2, R, s, omega, rho_star, absloss)?,
            &mistakes,
            config.clone(),
        ));
        let sample_bound = (c2 / c1).powi(2) * R * R * s * s / (rho_star * rho_star) * if absloss { 4.0 } else { 1.0 };
        out.push(BoundReport::upper_mean(SUITE, &format!("expected samples, {label} sampling"), sample_bound, &counts, config));
    }
    Ok(out)
}

fn gsh(opts: &VerifyOptions) -> Result<Vec<BoundReport>> {
    const SUITE: &str = "thm-gsh";
    let (m, rho_star, beta, n) = (0.2, 2.0, 1.0, 5_000usize);
    let s = rho_star / m;
    let rho = rho_star;
    let mut out = Vec::new();
    for (i, a) in [1.0, 2.0, 8.0].into_iter().enumerate() {
        let c = c_a_rho(a, rho)?.closed_form;
        let gamma = 1.0 / (c * R * R);
        let loss = LossKind::GenSmoothHinge { a };
        let policy = StepPolicy::ConstantWeight { gamma, pi: PiSpec::StarGsh { a, beta, rho } };
        let results = replicate(opts, opts.seeds, 20 + i as u64, |seed| {
            margin_run(MarginSpec { n, d: D, rho_star: m, r: R, seed }, loss, policy, loss, loss)
        })?;
        let losses: Vec<f64> = results.iter().map(avg).collect();
        let config = json!({"a": a, "rho": rho, "rho_star": rho_star, "S": s, "beta": beta, "c": c, "gamma": gamma, "n": n});
        out.push(BoundReport::upper_mean(
            SUITE,
            &format!("average loss, a = {a}, matched sampling"),
            bound_gsh_loss(a, rho, R, s, beta, n as f64, true)?,
            &losses,
            config,
        ));
    }
    // Any pi between the matched function and beta, here pi = beta.
    let a = 2.0;
    let loss = LossKind::GenSmoothHinge { a };
    let gamma = 1.0 / (2.0 * a * R * R);
    let policy = StepPolicy::ConstantWeight { gamma, pi: PiSpec::Constant { p: beta } };
    let results = replicate(opts, opts.seeds, 29, |seed| {
        margin_run(MarginSpec { n, d: D, rho_star: m, r: R, seed }, loss, policy, loss, loss)
    })?;
    let losses: Vec<f64> = results.iter().map(avg).collect();
    out.push(BoundReport::upper_mean(
        SUITE,
        "average loss, a = 2, constant sampling at beta",
        bound_gsh_loss(a, rho, R, s, beta, n as f64, false)?,
        &losses,
        json!({"a": a, "rho": rho, "S": s, "beta": beta, "c": 2.0 * a, "gamma": gamma, "n": n}),
    ));
    for (a, r) in [(1.0, 2.0), (2.0, 1.25), (2.0, 2.0)] {
        let c = c_a_rho(a, r)?;
        let exact = c_a_rho_exact(a, r).expect("closed form exists for a = 1, 2");
        out.push(BoundReport::new(
            SUITE,
            &format!("constant c: numeric supremum vs closed form, a = {a}, rho = {r}"),
            BoundKind::Near,
            exact,
            c.numeric,
            1e-6,
            json!({"argmax": c.argmax}),
        ));
    }
    let mut worst_ratio = 0.0f64;
    let mut worst_interval = f64::NEG_INFINITY;
    for a in [1.0, 1.5, 2.0, 3.0, 8.0, 32.0, 1000.0] {
        for r in [1.05, 1.25, 1.5, 2.0, 4.0] {
            let c = c_a_rho(a, r)?;
            worst_ratio = worst_ratio.max(c.numeric / c.closed_form);
            worst_interval = worst_interval.max((1.0 / r - c.numeric).max(c.numeric - 1.0 / (r - 1.0)));
        }
    }
    out.push(BoundReport::new(SUITE, "constant c: supremum below closed form", BoundKind::Upper, 1.0, worst_ratio, 1e-12, json!({})));
    out.push(BoundReport::new(
        SUITE,
        "constant c: within [1/rho, 1/(rho-1)]",
        BoundKind::Upper,
        0.0,
        worst_interval,
        1e-12,
        json!({}),
    ));
    Ok(out)
}

fn gsh_sampling(opts: &VerifyOptions) -> Result<Vec<BoundReport>> {
    const SUITE: &str = "thm-gsh-sampling";
    let (m, rho_star, beta) = (0.2, 2.0, 1.0);
    let s = rho_star / m;
    let rho = rho_star;
    let ns: Vec<f64> = opts.slope_grid.iter().map(|&n| n as f64).collect();
    let mut out = Vec::new();
    for (i, a) in [1.0, 8.0].into_iter().enumerate() {
        let c = c_a_rho(a, rho)?.closed_form;
        let loss = LossKind::GenSmoothHinge { a };
        let policy = StepPolicy::ConstantWeight { gamma: 1.0 / (c * R * R), pi: PiSpec::StarGsh { a, beta, rho } };
        let shape: Vec<f64> = ns
            .iter()
            .map(|&n| bound_gsh_samples_scaling(a, rho, R, s, beta, n).map(|(x, y)| x.max(y)))
            .collect::<Result<_>>()?;
        let (means, slope) = growth(opts, 30 + 10 * i as u64, |n, seed| {
            margin_run(MarginSpec { n, d: D, rho_star: m, r: R, seed }, loss, policy, loss, loss).map(|r| samples(&r))
        })?;
        let shape_slope = loglog_slope(&ns, &shape).unwrap_or(f64::NAN);
        let ratios: Vec<f64> = means.iter().zip(&shape).map(|(e, b)| e / b).collect();
        out.push(BoundReport::new(
            SUITE,
            &format!("sample count grows no faster than the bound shape, a = {a}"),
            BoundKind::Upper,
            shape_slope,
            slope.unwrap_or(f64::NAN),
            0.1,
            json!({"a": a, "rho": rho, "S": s, "beta": beta, "grid": opts.slope_grid, "mean_samples": means, "shape": shape, "ratio": ratios}),
        ));
    }
    Ok(out)
}

// Noisy but well-specified logistic data in the unit ball of R^5: the
// generating weight vector has norm 3, and a large independent sample
// stands in for the population when measuring constants.
const LOGISTIC_D: usize = 5;
const LOGISTIC_W: f64 = 3.0;
const REFERENCE_N: usize = 20_000;

fn logistic_data(n: usize, seed: u64) -> Result<(Dataset, DatasetRef)> {
    let spec = LogisticSpec { n, d: LOGISTIC_D, r: R, weight_norm: LOGISTIC_W, seed };
    let dref = DatasetRef::Logistic { n, d: LOGISTIC_D, r: R, weight_norm: LOGISTIC_W, seed };
    Ok((gen_logistic_dataset(&spec)?.0, dref))
}

fn reference_sample(opts: &VerifyOptions) -> Result<Dataset> {
    Ok(logistic_data(REFERENCE_N, derive_seed(opts.base_seed, 0xFEED))?.0)
}

struct ConvexSmoothSetup {
    pi: PiSpec,
    s: f64,
    l: f64,
    sigma: f64,
    gamma: f64,
    inf_term: f64,
    n: usize,
    config: Value,
}

fn convex_smooth_setup(opts: &VerifyOptions) -> Result<(ConvexSmoothSetup, Dataset)> {
    let pi = PiSpec::ExpSaturating;
    let (s, n) = (5.0, 10_000usize);
    let reference = reference_sample(opts)?;
    let m2 = second_moment(&reference);
    let obj = Objective::Equivalent { loss: LossKind::Logistic, pi };
    let u_max = s * R;
    let l = margin_curvature(&obj, u_max)? * m2;
    let sigma = (sampled_gradient_scale(LossKind::Logistic, &pi, u_max)? * m2).sqrt();
    // Theta_0 is the ball of radius S about theta_1 = 0; its radius plays
    // the role of the set size in the step size.
    let gamma = convexsmooth_step(l, sigma, s, n as f64)?;
    let fit = fit_reference(&reference, &obj, &ProjectionBall::centered(s), 3_000, 1e-6)?;
    let inf_term = pi.inverse(fit.value)?;
    let config = json!({
        "d": LOGISTIC_D, "weight_norm": LOGISTIC_W, "S": s, "n": n, "L": l, "sigma_pi": sigma,
        "second_moment": m2, "gamma": gamma, "inf_equivalent_loss": fit.value, "inf_term": inf_term,
    });
    Ok((ConvexSmoothSetup { pi, s, l, sigma, gamma, inf_term, n, config }, reference))
}

fn convex_smooth_runs(opts: &VerifyOptions, st: &ConvexSmoothSetup, reference: &Dataset) -> Result<Vec<(RunResult, f64)>> {
    replicate(opts, opts.seeds, 40, |seed| {
        let (ds, dref) = logistic_data(st.n, seed)?;
        let mut cfg = RunConfig::new(dref, LossKind::Logistic, StepPolicy::ConstantWeight { gamma: st.gamma, pi: st.pi });
        cfg.sampling_loss = LossKind::Logistic;
        cfg.eval_losses = vec![LossKind::Logistic];
        cfg.projection = ProjectionBall::centered(st.s);
        cfg.seed = seed;
        cfg.record_rows = false;
        let res = run_stream_on(&cfg, &ds)?;
        let avg_loss = evaluate_holdout(&res.averaged_theta, reference, &[LossKind::Logistic])?.mean_losses[0].average;
        Ok((res, avg_loss))
    })
}

fn convex_smooth(opts: &VerifyOptions) -> Result<Vec<BoundReport>> {
    const SUITE: &str = "thm-convex-smooth";
    let (st, reference) = convex_smooth_setup(opts)?;
    let runs = convex_smooth_runs(opts, &st, &reference)?;
    let n = st.n as f64;
    let terms = bound_convexsmooth(st.l, st.s, st.sigma, n, &st.pi)?;
    let closed = bound_convexsmooth_exp(st.l, st.s, st.sigma, n)?;
    let progressive: Vec<f64> = runs.iter().map(|(r, _)| avg(r)).collect();
    let averaged: Vec<f64> = runs.iter().map(|(_, a)| *a).collect();
    let mut c = st.config.clone();
    c["variance_term"] = json!(terms.variance_term);
    c["smoothness_term"] = json!(terms.smoothness_term);
    let mut cc = st.config.clone();
    cc["min_n"] = json!(convexsmooth_exp_min_n(st.l, st.s, st.sigma));
    Ok(vec![
        BoundReport::upper_mean(SUITE, "average loss along the stream", st.inf_term + terms.total(), &progressive, c.clone()),
        BoundReport::upper_mean(SUITE, "loss of the averaged iterate", st.inf_term + terms.total(), &averaged, c),
        BoundReport::upper_mean(
            SUITE,
            "average loss, closed form for pi(x) = 1 - exp(-x)",
            st.inf_term + closed.total(),
            &progressive,
            cc,
        ),
        BoundReport::new(
            SUITE,
            "closed-form terms dominate the inverse-primitive terms",
            BoundKind::Upper,
            closed.total(),
            terms.total(),
            0.0,
            json!({}),
        ),
    ])
}

fn sample_count(opts: &VerifyOptions) -> Result<Vec<BoundReport>> {
    const SUITE: &str = "lemma-sample-count";
    let (st, reference) = convex_smooth_setup(opts)?;
    let runs = convex_smooth_runs(opts, &st, &reference)?;
    let n = st.n as f64;
    let counts: Vec<f64> = runs.iter().map(|(r, _)| samples(r)).collect();
    let mean_loss = MeanSe::of(&runs.iter().map(|(r, _)| avg(r)).collect::<Vec<_>>()).mean;
    let config = json!({"pi": "exp_saturating", "n": st.n, "mean_loss": mean_loss});
    Ok(vec![
        BoundReport::upper_mean(
            SUITE,
            "concave pi: samples at most pi(mean loss) n",
            bound_sample_count(&st.pi, mean_loss, n, None)?,
            &counts,
            config.clone(),
        ),
        BoundReport::upper_mean(
            SUITE,
            "linearly bounded pi (K = 1): samples at most min{K total loss, n}",
            (mean_loss * n).min(n),
            &counts,
            config,
        ),
    ])
}

/// AWS with sampling proportional to absolute error at `rho = 1/(2L)`.
struct AwsSetup {
    beta: f64,
    c: f64,
    l: f64,
    rho: f64,
    omega: f64,
}

impl AwsSetup {
    fn new() -> Self {
        let (beta, c) = (0.5, 0.5);
        // Logistic loss is 1/4-smooth in the margin.
        let l_margin = 0.25;
        let l = l_margin * R * R;
        // The largest admissible omega, 1, samples most and steps least.
        let (_, hi) = omega_range(beta, c, l_margin).expect("admissible");
        AwsSetup { beta, c, l, rho: 1.0 / (2.0 * l), omega: hi }
    }

    fn policy(&self) -> StepPolicy {
        StepPolicy::AdaptiveWeight { beta: self.beta, rho: self.rho, pi: PiSpec::AbsErrorProportional { omega: self.omega } }
    }
}

fn aws(opts: &VerifyOptions) -> Result<Vec<BoundReport>> {
    const SUITE: &str = "thm-aws";
    let st = AwsSetup::new();
    let n = 10_000usize;
    let reference = reference_sample(opts)?;
    let fit = fit_reference(&reference, &Objective::Loss { loss: LossKind::Logistic }, &ProjectionBall::unbounded(), 5_000, 1e-7)?;
    let lambda_star = fit.value;
    let dist0_sq = norm_sq(&fit.theta.theta);
    let runs = replicate(opts, opts.seeds, 50, |seed| {
        let (ds, dref) = logistic_data(n, seed)?;
        run_quiet(&ds, dref, LossKind::Logistic, st.policy(), LossKind::AbsError, LossKind::Logistic, seed)
    })?;
    let losses: Vec<f64> = runs.iter().map(avg).collect();
    let bound = bound_aws(st.beta, st.rho, st.c, st.l, lambda_star, dist0_sq, n as f64)?;
    let matched = bound_aws_matched(st.beta, st.c, st.l, lambda_star, dist0_sq, n as f64)?;
    let config = json!({
        "d": LOGISTIC_D, "weight_norm": LOGISTIC_W, "n": n, "beta": st.beta, "c": st.c, "L": st.l, "rho": st.rho,
        "omega": st.omega, "lambda_star": lambda_star, "dist0_sq": dist0_sq, "reference_residual": fit.residual,
    });
    let mut out = vec![
        BoundReport::upper_mean(SUITE, "average loss", bound, &losses, config.clone()),
        BoundReport::new(SUITE, "bound at rho = 1/(2L) matches its simplified form", BoundKind::Near, matched, bound, 1e-12, json!({})),
    ];
    let pairs = condition_samples(&reference, 400, 7)?;
    let rep = check_aws_condition(&st.policy().pi().clone(), LossKind::Logistic, LossKind::AbsError, st.beta, st.rho, st.c, &pairs)?;
    out.push(BoundReport::condition(SUITE, "sampling condition, absolute-error sampling", &rep, config));

    // Without a finite minimizer the bound decays like (log n)^2 / n; the
    // log factor flattens the fitted exponent more for small margins.
    let m = 0.2;
    let policy = st.policy();
    let (means, slope) = growth(opts, 60, |n, seed| {
        margin_run(MarginSpec { n, d: D, rho_star: m, r: R, seed }, LossKind::Logistic, policy, LossKind::AbsError, LossKind::Logistic)
            .map(|r| avg(&r))
    })?;
    out.push(BoundReport::new(
        SUITE,
        "separable data: average loss decay exponent",
        BoundKind::Upper,
        -0.8,
        slope.unwrap_or(f64::NAN),
        0.0,
        json!({"d": D, "geometric_margin": m, "grid": opts.slope_grid, "mean_average_loss": means}),
    ));
    Ok(out)
}

/// Points paired with random parameters of norms from 0 to 20, so the
/// margins cover both signs and a wide range.
fn condition_samples(ds: &Dataset, count: usize, seed: u64) -> Result<Vec<(Example, ModelParams)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = ds.d * ds.task.blocks();
    let scales = [0.0, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0];
    let mut out = Vec::new();
    for ex in ds.examples.iter().take(count) {
        for &s in &scales {
            let v: Vec<f64> = (0..p).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let nv = norm_sq(&v).sqrt().max(f64::MIN_POSITIVE);
            let theta = ModelParams::new(v.into_iter().map(|x| x * s / nv).collect(), ds.task)?;
            out.push((ex.clone(), theta));
        }
    }
    Ok(out)
}

fn aws_conditions(opts: &VerifyOptions) -> Result<Vec<BoundReport>> {
    const SUITE: &str = "aws-conditions";
    let reference = reference_sample(opts)?;
    let pairs = condition_samples(&reference, 300, 11)?;
    let l = 0.25 * R * R;
    let rho = 1.0 / (2.0 * l);
    let (beta, c) = (0.5, 0.5);
    let mut out = Vec::new();
    let check = |pi: PiSpec, beta: f64, rho: f64, c: f64, sampling: LossKind| {
        check_aws_condition(&pi, LossKind::Logistic, sampling, beta, rho, c, &pairs)
    };

    let a = 0.25;
    let pi = PiSpec::UncertaintyBinary { a, beta, c, rho, r: R };
    out.push(BoundReport::condition(
        SUITE,
        "uncertainty sampling",
        &check(pi, beta, rho, c, LossKind::AbsError)?,
        json!({"a": a, "beta": beta, "c": c, "rho": rho}),
    ));

    let eta = 0.5;
    let lhs = beta.powf(1.0 - eta);
    let rhs = 2.0 * (1.0 - c) * (1.0 / (2.0 * l)).powf(eta);
    let pi = PiSpec::PowerOfZeta { eta, beta, rho };
    out.push(BoundReport::condition(
        SUITE,
        "power of the expected step",
        &check(pi, beta, rho, c, LossKind::AbsError)?,
        json!({"eta": eta, "beta": beta, "rho": rho, "c": c, "requirement_lhs": lhs, "requirement_rhs": rhs}),
    ));
    let c_bad = 0.9;
    out.push(BoundReport::violation_detected(
        SUITE,
        "power of the expected step, requirement broken (negative control)",
        &check(pi, beta, rho, c_bad, LossKind::AbsError)?,
        json!({"eta": eta, "beta": beta, "rho": rho, "c": c_bad, "requirement_rhs": 2.0 * (1.0 - c_bad) * (1.0 / (2.0 * l)).powf(eta)}),
    ));

    let kappa = beta * (1.0 / (2.0 * l)).min(rho);
    let p = beta / (2.0 * (1.0 - c));
    out.push(BoundReport::condition(
        SUITE,
        "constant sampling probability",
        &check(PiSpec::Constant { p }, beta, rho, c, LossKind::AbsError)?,
        json!({"p": p, "kappa": kappa, "kappa_limit": 2.0 * (1.0 - c)}),
    ));

    let st = AwsSetup::new();
    out.push(BoundReport::condition(
        SUITE,
        "absolute-error sampling",
        &check(PiSpec::AbsErrorProportional { omega: st.omega }, st.beta, st.rho, st.c, LossKind::AbsError)?,
        json!({"omega": st.omega, "beta": st.beta, "rho": st.rho, "c": st.c}),
    ));

    let k = 3;
    let spec = MarginSpec { n: 300, d: 5, rho_star: 0.1, r: R, seed: derive_seed(opts.base_seed, 0xC1A55) };
    let (mc, _) = gen_multiclass_margin_dataset(&spec, k)?;
    let mc_pairs = condition_samples(&mc, 300, 13)?;
    let l_mc = 0.5 * R * R;
    let rho_mc = 1.0 / (2.0 * l_mc);
    let pi = PiSpec::UncertaintyMulticlass { a, beta, c, rho: rho_mc, r: R, k, gap: GapStatistic::Top2 };
    let rep = check_aws_condition(&pi, LossKind::MultiCrossEntropy, LossKind::MultiCrossEntropy, beta, rho_mc, c, &mc_pairs)?;
    out.push(BoundReport::condition(
        SUITE,
        "multi-class uncertainty sampling",
        &rep,
        json!({"k": k, "a": a, "beta": beta, "c": c, "rho": rho_mc}),
    ));
    Ok(out)
}

fn alpha_beta() -> Result<Vec<BoundReport>> {
    const SUITE: &str = "lemma-alpha-beta";
    let grid: Vec<f64> = (0..=5000).map(|i| -20.0 + 25.0 * i as f64 / 5000.0).collect();
    let mut out = Vec::new();
    let push = |name: &str, chk: AlphaBetaCheck, expect_hold: bool, out: &mut Vec<BoundReport>| -> Result<()> {
        let rep = check_alpha_beta_conditions(&chk)?;
        let merged = ConditionReport {
            holds: rep.holds,
            checked: rep.upper.checked + rep.lower.checked,
            violations: rep.upper.violations + rep.lower.violations,
            worst_slack: rep.upper.worst_slack.min(rep.lower.worst_slack),
            worst_at: if rep.upper.worst_slack <= rep.lower.worst_slack { rep.upper.worst_at } else { rep.lower.worst_at },
        };
        let config = json!({"alpha": chk.alpha, "beta": chk.beta, "rho_star": chk.rho_star, "R": chk.r, "multiclass": chk.multiclass});
        out.push(if expect_hold {
            BoundReport::condition(SUITE, name, &merged, config)
        } else {
            BoundReport::violation_detected(SUITE, name, &merged, config)
        });
        Ok(())
    };

    let (rho_star, beta) = (2.0, 2.0);
    let sq = AlphaBetaCheck {
        pi: PiSpec::StarSquaredHinge { beta, mu: SQRT_2 / (rho_star - 1.0) },
        sampling_loss: LossKind::SquaredHinge,
        train_loss: LossKind::SquaredHinge,
        eval_loss: LossKind::SquaredHinge,
        alpha: beta * R * R,
        beta,
        rho_star,
        r: R,
        multiclass: false,
        grid: &grid,
    };
    push("squared hinge with matched sampling", sq.clone(), true, &mut out)?;
    push(
        "squared hinge, multi-class margin with doubled alpha",
        AlphaBetaCheck { multiclass: true, alpha: 2.0 * sq.alpha, ..sq.clone() },
        true,
        &mut out,
    )?;
    push(
        "squared hinge, multi-class margin without the factor 2 (negative control)",
        AlphaBetaCheck { multiclass: true, ..sq.clone() },
        false,
        &mut out,
    )?;

    let (c1, c2, rho_p) = (0.5, 1.0, 0.5);
    let omega = 1.0;
    push(
        "logistic training, zero-one sampling",
        AlphaBetaCheck {
            pi: PiSpec::ZeroOneProportional { omega },
            sampling_loss: LossKind::ZeroOne,
            train_loss: LossKind::Logistic,
            eval_loss: LossKind::ZeroOne,
            alpha: omega * c2 * c2 * R * R,
            beta: omega * c1 * rho_p,
            rho_star: rho_p,
            r: R,
            multiclass: false,
            grid: &grid,
        },
        true,
        &mut out,
    )?;
    let omega = 0.5;
    push(
        "logistic training, absolute-error sampling",
        AlphaBetaCheck {
            pi: PiSpec::AbsErrorProportional { omega },
            sampling_loss: LossKind::SignAbsError,
            train_loss: LossKind::Logistic,
            eval_loss: LossKind::ZeroOne,
            alpha: 2.0 * omega * c2 * c2 * R * R,
            beta: omega * c1 * rho_p,
            rho_star: rho_p,
            r: R,
            multiclass: false,
            grid: &grid,
        },
        true,
        &mut out,
    )?;

    for a in [1.0, 2.0, 8.0] {
        let (rho, b) = (2.0, 1.0);
        let c = c_a_rho(a, rho)?.closed_form;
        let loss = LossKind::GenSmoothHinge { a };
        push(
            &format!("generalized smooth hinge, a = {a}"),
            AlphaBetaCheck {
                pi: PiSpec::StarGsh { a, beta: b, rho },
                sampling_loss: loss,
                train_loss: loss,
                eval_loss: loss,
                alpha: c * b * R * R,
                beta: b,
                rho_star: rho,
                r: R,
                multiclass: false,
                grid: &grid,
            },
            true,
            &mut out,
        )?;
    }
    Ok(out)
}

fn h_bounds() -> Result<Vec<BoundReport>> {
    const SUITE: &str = "lemma-h-bounds";
    let grid: Vec<f64> = (0..=10_000).map(|i| -50.0 + i as f64 * 0.01).collect();
    let mut worst_abs = 0.0f64;
    let mut out = Vec::new();
    for &u in &grid {
        worst_abs = worst_abs.max(h_logistic(u) / h_upper_bounds(u, 0.5)?.0);
    }
    out.push(BoundReport::new(SUITE, "h(u) <= 1 - sigmoid(u) on [-50, 50]", BoundKind::Upper, 1.0, worst_abs, 0.0, json!({"step": 0.01})));
    for a in [0.05, 0.1, 0.25, 0.5] {
        let mut worst = 0.0f64;
        for &u in &grid {
            worst = worst.max(h_logistic(u) / h_upper_bounds(u, a)?.1);
        }
        out.push(BoundReport::new(
            SUITE,
            &format!("h(u) <= 1/(H(a) + (1-a)|u|), a = {a}"),
            BoundKind::Upper,
            1.0,
            worst,
            0.0,
            json!({"step": 0.01}),
        ));
    }
    out.push(BoundReport::new(
        SUITE,
        "h(u) / (1 - sigmoid(u)) at u = 100",
        BoundKind::Near,
        1.0,
        h_logistic(100.0) / h_upper_bounds(100.0, 0.5)?.0,
        0.02,
        json!({}),
    ));
    out.push(BoundReport::new(SUITE, "|u| h(u) at u = -100", BoundKind::Near, 1.0, 100.0 * h_logistic(-100.0), 0.02, json!({})));
    Ok(out)
}

/// The sampling families with closed-form primitives, at fixed parameters.
pub fn primitive_families() -> Vec<PiSpec> {
    vec![
        PiSpec::ExpSaturating,
        PiSpec::ClampLinear,
        PiSpec::ClampPower { a: 1.5, b: 2.0 },
        PiSpec::Ratio { mu: 2.0 },
        PiSpec::RatioSqrt { mu: 2.0 },
    ]
}

/// A random 5-point binary dataset in `R^3` and a random parameter.
pub fn random_small_problem(seed: u64) -> Result<(Dataset, ModelParams)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = 3;
    let mut examples = Vec::new();
    for _ in 0..5 {
        let x: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let y = if rng.random::<bool>() { 1.0 } else { -1.0 };
        examples.push(Example::binary(x, y)?);
    }
    let theta: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    Ok((Dataset::new("random-5", Task::Binary, d, examples)?, ModelParams::new(theta, Task::Binary)?))
}

fn equivalent_loss(opts: &VerifyOptions) -> Result<Vec<BoundReport>> {
    const SUITE: &str = "equivalent-loss";
    let fd = 1e-6;
    let mut out = Vec::new();
    for pi in primitive_families() {
        let mut worst = 0.0f64;
        for i in 0..20 {
            let (ds, theta) = random_small_problem(derive_seed(opts.base_seed, 0xE0 + i))?;
            worst = worst.max(equivalent_loss_check(&pi, LossKind::Logistic, &ds, &theta, fd)?.max_rel_error);
        }
        out.push(BoundReport::new(
            SUITE,
            &format!("sampled gradient equals gradient of mean Pi(loss), {pi:?}"),
            BoundKind::Upper,
            1e-5,
            worst,
            0.0,
            json!({"datasets": 20, "points": 5, "fd_step": fd}),
        ));
    }
    Ok(out)
}
