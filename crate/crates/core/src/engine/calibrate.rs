//! Bisection on the sampling-scale parameter to hit a target sampling rate.

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::run::run_stream_on;
use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::sampling::{PiSpec, StepPolicy};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub scale: f64,
    pub achieved_rate: f64,
    /// `(scale, rate)` for every probe run, in order.
    pub probes: Vec<(f64, f64)>,
    pub config: RunConfig,
}

/// Copy of `cfg` with the sampling scale set to `s`. For power-of-zeta
/// sampling under adaptive weights the policy's `beta` follows along.
pub fn with_scale(cfg: &RunConfig, s: f64) -> Result<RunConfig> {
    let mut out = cfg.clone();
    let pi = out.step_policy.pi().with_scale(s)?;
    *out.step_policy.pi_mut() = pi;
    if let (StepPolicy::AdaptiveWeight { beta, .. }, PiSpec::PowerOfZeta { .. }) = (&mut out.step_policy, pi) {
        *beta = s;
    }
    Ok(out)
}

pub fn sampling_rate(cfg: &RunConfig, ds: &Dataset) -> Result<f64> {
    let mut probe = cfg.clone();
    probe.record_rows = false;
    Ok(run_stream_on(&probe, ds)?.summary.sampling_rate)
}

/// Mean sampling rate of `cfg` over runs with the given seeds.
pub fn mean_sampling_rate(cfg: &RunConfig, ds: &Dataset, seeds: &[u64]) -> Result<f64> {
    if seeds.is_empty() {
        return Err(invalid("seeds", "need at least one seed"));
    }
    let rates = seeds
        .par_iter()
        .map(|&seed| {
            let mut c = cfg.clone();
            c.seed = seed;
            sampling_rate(&c, ds)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(rates.iter().sum::<f64>() / rates.len() as f64)
}

struct Prober<'a> {
    cfg: &'a RunConfig,
    ds: &'a Dataset,
    seeds: &'a [u64],
    probes: Vec<(f64, f64)>,
}

impl Prober<'_> {
    fn rate(&mut self, s: f64) -> Result<f64> {
        let r = mean_sampling_rate(&with_scale(self.cfg, s)?, self.ds, self.seeds)?;
        debug!("calibration probe scale={s:.6e} rate={r:.6}");
        self.probes.push((s, r));
        Ok(r)
    }

    fn finish(self, target: f64) -> Result<Calibration> {
        let &(scale, achieved_rate) = self
            .probes
            .iter()
            .min_by(|a, b| (a.1 - target).abs().total_cmp(&(b.1 - target).abs()))
            .expect("at least one probe");
        let config = with_scale(self.cfg, scale)?;
        Ok(Calibration { scale, achieved_rate, probes: self.probes, config })
    }
}

const MAX_DOUBLINGS: usize = 60;

/// Finds the sampling scale whose run on `ds` (with the config's fixed seed)
/// has empirical sampling rate within `tol` of `target`. The bracket is grown
/// by doubling/halving from the configured scale, then bisected
/// geometrically. Returns the closest probe if `max_iter` is exhausted.
pub fn calibrate_beta(cfg: &RunConfig, ds: &Dataset, target: f64, tol: f64, max_iter: usize) -> Result<Calibration> {
    calibrate_beta_seeds(cfg, ds, &[cfg.seed], target, tol, max_iter)
}

/// Like [`calibrate_beta`], matching the rate averaged over runs with `seeds`.
pub fn calibrate_beta_seeds(
    cfg: &RunConfig,
    ds: &Dataset,
    seeds: &[u64],
    target: f64,
    tol: f64,
    max_iter: usize,
) -> Result<Calibration> {
    if !(target > 0.0 && target < 1.0) {
        return Err(invalid("target_rate", format!("must lie in (0, 1), got {target}")));
    }
    if !(tol > 0.0) {
        return Err(invalid("tol", format!("must be positive, got {tol}")));
    }
    cfg.validate()?;
    let pi = *cfg.step_policy.pi();
    let s0 = pi
        .scale()
        .ok_or_else(|| Error::Calibration(format!("{pi:?} has no scale parameter to calibrate")))?;
    let max_scale = pi.max_scale();
    let mut prober = Prober { cfg, ds, seeds, probes: Vec::new() };
    if let PiSpec::Constant { .. } = pi {
        prober.rate(target)?;
        return prober.finish(target);
    }

    let close = |r: f64| (r - target).abs() <= tol;
    let r0 = prober.rate(s0)?;
    if close(r0) {
        return prober.finish(target);
    }
    let (mut lo, mut hi);
    if r0 < target {
        lo = s0;
        hi = s0;
        let mut found = false;
        for _ in 0..MAX_DOUBLINGS {
            if hi >= max_scale {
                break;
            }
            hi = (hi * 2.0).min(max_scale);
            let r = prober.rate(hi)?;
            if close(r) {
                return prober.finish(target);
            }
            if r >= target {
                found = true;
                break;
            }
            lo = hi;
        }
        if !found {
            return Err(Error::Calibration(format!(
                "no scale up to {hi:e} reaches sampling rate {target} (last probes: {:?})",
                &prober.probes[prober.probes.len().saturating_sub(3)..]
            )));
        }
    } else {
        hi = s0;
        lo = s0;
        let mut found = false;
        for _ in 0..MAX_DOUBLINGS {
            lo /= 2.0;
            let r = prober.rate(lo)?;
            if close(r) {
                return prober.finish(target);
            }
            if r <= target {
                found = true;
                break;
            }
            hi = lo;
        }
        if !found {
            return Err(Error::Calibration(format!("no scale down to {lo:e} brings the sampling rate below {target}")));
        }
    }
    for _ in 0..max_iter {
        let mid = (lo * hi).sqrt();
        let r = prober.rate(mid)?;
        if close(r) {
            return prober.finish(target);
        }
        if r < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let out = prober.finish(target)?;
    warn!("calibration stopped after {max_iter} bisection steps at rate {} (target {target})", out.achieved_rate);
    Ok(out)
}
