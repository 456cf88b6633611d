//! Loss estimators for loss-based sampling when the label of a point is not
//! known at decision time: the exact oracle, a synthetic Beta-noise oracle,
//! k-nearest-neighbour regression and a bagged regression forest.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::dist_sq;

fn default_warmup_probability() -> f64 {
    0.5
}
fn default_max_depth() -> usize {
    8
}
fn default_min_leaf() -> usize {
    2
}
fn default_refit_every() -> usize {
    1
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EstimatorKind {
    /// The true sampling loss.
    #[default]
    Oracle,
    /// Unbiased Beta-distributed perturbation of the true loss.
    BetaNoise { alpha: f64 },
    Knn {
        k: usize,
        #[serde(default)]
        warmup_steps: usize,
        #[serde(default = "default_warmup_probability")]
        warmup_probability: f64,
    },
    Forest {
        trees: usize,
        #[serde(default)]
        warmup_steps: usize,
        #[serde(default = "default_max_depth")]
        max_depth: usize,
        #[serde(default = "default_min_leaf")]
        min_leaf: usize,
        /// Refit after this many new observations (1 = every sampling step).
        #[serde(default = "default_refit_every")]
        refit_every: usize,
        #[serde(default = "default_warmup_probability")]
        warmup_probability: f64,
    },
}

impl EstimatorKind {
    pub fn forest(trees: usize, warmup_steps: usize) -> Self {
        EstimatorKind::Forest {
            trees,
            warmup_steps,
            max_depth: default_max_depth(),
            min_leaf: default_min_leaf(),
            refit_every: default_refit_every(),
            warmup_probability: default_warmup_probability(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            EstimatorKind::Oracle => Ok(()),
            EstimatorKind::BetaNoise { alpha } => {
                if alpha.is_finite() && alpha > 0.0 {
                    Ok(())
                } else {
                    Err(invalid("alpha", format!("must be positive, got {alpha}")))
                }
            }
            EstimatorKind::Knn { k, warmup_probability, .. } => {
                if k == 0 {
                    return Err(invalid("k", "must be at least 1"));
                }
                probability("warmup_probability", warmup_probability)
            }
            EstimatorKind::Forest { trees, min_leaf, refit_every, warmup_probability, .. } => {
                if trees == 0 {
                    return Err(invalid("trees", "must be at least 1"));
                }
                if min_leaf == 0 {
                    return Err(invalid("min_leaf", "must be at least 1"));
                }
                if refit_every == 0 {
                    return Err(invalid("refit_every", "must be at least 1"));
                }
                probability("warmup_probability", warmup_probability)
            }
        }
    }

    /// Whether the estimate is computed from the true loss (and thus needs it).
    pub fn needs_true_loss(&self) -> bool {
        matches!(self, EstimatorKind::Oracle | EstimatorKind::BetaNoise { .. })
    }
}

fn probability(name: &'static str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(invalid(name, format!("must lie in [0, 1], got {p}")))
    }
}

/// Shapes of the Beta distribution with mean `mean` and variance
/// `mean (1 - mean) / (alpha + mean)`.
pub fn beta_params_for_mean(mean: f64, alpha: f64) -> Result<(f64, f64)> {
    if !(mean > 0.0 && mean < 1.0) {
        return Err(invalid("mean", format!("must lie in (0, 1), got {mean}")));
    }
    if !(alpha > 0.0) {
        return Err(invalid("alpha", format!("must be positive, got {alpha}")));
    }
    let s = alpha + mean - 1.0;
    if s <= 0.0 {
        return Err(Error::Precondition(format!("alpha + mean must exceed 1 (alpha = {alpha}, mean = {mean})")));
    }
    Ok((mean * s, (1.0 - mean) * s))
}

/// An estimate of the sampling loss, or the constant probability to use
/// while a learned estimator is still warming up.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LossEstimate {
    Loss(f64),
    WarmUp(f64),
}

#[derive(Clone, Debug)]
pub struct EstimatorState {
    pub kind: EstimatorKind,
    pool_x: Vec<Vec<f64>>,
    pool_y: Vec<f64>,
    forest: Option<Forest>,
    pending: usize,
    pub steps_seen: usize,
    rng: ChaCha8Rng,
}

impl EstimatorState {
    pub fn new(kind: EstimatorKind, seed: u64) -> Result<Self> {
        kind.validate()?;
        Ok(EstimatorState {
            kind,
            pool_x: Vec::new(),
            pool_y: Vec::new(),
            forest: None,
            pending: 0,
            steps_seen: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn pool_len(&self) -> usize {
        self.pool_y.len()
    }

    pub fn is_fitted(&self) -> bool {
        match self.kind {
            EstimatorKind::Forest { .. } => self.forest.is_some(),
            EstimatorKind::Knn { .. } => !self.pool_y.is_empty(),
            _ => true,
        }
    }

    fn warming_up(&self, warmup_steps: usize) -> bool {
        self.pool_y.len() < warmup_steps.max(1) || !self.is_fitted()
    }

    /// Estimates the sampling loss at `features` given the model prediction
    /// `p`. Oracle and Beta-noise need the true loss; learned estimators must
    /// not receive it.
    pub fn estimate(&mut self, features: &[f64], p: f64, true_loss: Option<f64>) -> Result<LossEstimate> {
        match self.kind {
            EstimatorKind::Oracle => true_loss
                .map(LossEstimate::Loss)
                .ok_or_else(|| Error::Precondition("the oracle estimator needs the true loss".into())),
            EstimatorKind::BetaNoise { alpha } => {
                let m = true_loss.ok_or_else(|| Error::Precondition("Beta-noise estimator needs the true loss".into()))?;
                if m <= 0.0 || m >= 1.0 {
                    return Ok(LossEstimate::Loss(m.clamp(0.0, 1.0)));
                }
                let (a, b) = beta_params_for_mean(m, alpha)?;
                let dist = Beta::new(a, b).map_err(|e| Error::Precondition(format!("Beta({a}, {b}): {e}")))?;
                // The Beta law lives on the open interval; keep underflowed
                // draws there so a positive loss never estimates to zero.
                let v: f64 = dist.sample(&mut self.rng);
                Ok(LossEstimate::Loss(v.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)))
            }
            EstimatorKind::Knn { k, warmup_steps, warmup_probability } => {
                no_peek(true_loss)?;
                if self.warming_up(warmup_steps) {
                    return Ok(LossEstimate::WarmUp(warmup_probability));
                }
                let q = augment(features, p);
                Ok(LossEstimate::Loss(knn_predict(&self.pool_x, &self.pool_y, &q, k).clamp(0.0, 1.0)))
            }
            EstimatorKind::Forest { warmup_steps, warmup_probability, .. } => {
                no_peek(true_loss)?;
                if self.warming_up(warmup_steps) {
                    return Ok(LossEstimate::WarmUp(warmup_probability));
                }
                let q = augment(features, p);
                let forest = self.forest.as_ref().expect("fitted forest");
                Ok(LossEstimate::Loss(forest.predict(&q).clamp(0.0, 1.0)))
            }
        }
    }

    /// Records the realized loss of a labeled point and refits learned
    /// estimators.
    pub fn observe(&mut self, features: &[f64], p: f64, realized: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&realized) {
            return Err(invalid("realized_abs_loss", format!("must lie in [0, 1], got {realized}")));
        }
        self.steps_seen += 1;
        match self.kind {
            EstimatorKind::Oracle | EstimatorKind::BetaNoise { .. } => {}
            EstimatorKind::Knn { .. } => {
                self.pool_x.push(augment(features, p));
                self.pool_y.push(realized);
            }
            EstimatorKind::Forest { trees, warmup_steps, max_depth, min_leaf, refit_every, .. } => {
                self.pool_x.push(augment(features, p));
                self.pool_y.push(realized);
                self.pending += 1;
                let ready = self.pool_y.len() >= warmup_steps.max(1);
                if ready && (self.forest.is_none() || self.pending >= refit_every) {
                    let seed = self.rng.random();
                    let params = TreeParams { max_depth, min_leaf };
                    self.forest = Some(Forest::fit(&self.pool_x, &self.pool_y, trees, params, seed));
                    self.pending = 0;
                }
            }
        }
        Ok(())
    }
}

fn no_peek(true_loss: Option<f64>) -> Result<()> {
    match true_loss {
        None => Ok(()),
        Some(_) => Err(Error::Precondition("learned estimators must not see the true loss".into())),
    }
}

fn augment(features: &[f64], p: f64) -> Vec<f64> {
    let mut v = Vec::with_capacity(features.len() + 1);
    v.extend_from_slice(features);
    v.push(p);
    v
}

fn knn_predict(xs: &[Vec<f64>], ys: &[f64], q: &[f64], k: usize) -> f64 {
    let mut d: Vec<(f64, usize)> = xs.iter().enumerate().map(|(i, x)| (dist_sq(x, q), i)).collect();
    let k = k.min(d.len());
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d[..k].iter().map(|(_, i)| ys[*i]).sum::<f64>() / k as f64
}

#[derive(Clone, Copy, Debug)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
}

#[derive(Clone, Debug)]
enum Node {
    Leaf(f64),
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

/// CART regression tree grown by variance reduction.
#[derive(Clone, Debug)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

/// Training state of one tree: every feature's ordering of the sample
/// positions, kept partitioned so each node owns a contiguous range.
struct Grower<'a> {
    xs: &'a [Vec<f64>],
    ys: &'a [f64],
    rows: &'a [usize],
    sorted: Vec<Vec<u32>>,
    goes_left: Vec<bool>,
    scratch: Vec<u32>,
    params: TreeParams,
}

impl Grower<'_> {
    fn x(&self, pos: u32, f: usize) -> f64 {
        self.xs[self.rows[pos as usize]][f]
    }

    fn y(&self, pos: u32) -> f64 {
        self.ys[self.rows[pos as usize]]
    }

    /// Feature, threshold and left-child size of the split with the largest
    /// reduction in squared error over positions `lo..hi`, or `None` when no
    /// split improves on the parent.
    fn best_split(&self, lo: usize, hi: usize) -> Option<(usize, f64, usize)> {
        let n = hi - lo;
        let min_leaf = self.params.min_leaf;
        let total: f64 = self.sorted[0][lo..hi].iter().map(|&p| self.y(p)).sum();
        let parent = total * total / n as f64;
        let mut best: Option<(f64, usize, f64, usize)> = None;
        for (f, order) in self.sorted.iter().enumerate() {
            let order = &order[lo..hi];
            let mut left_sum = 0.0;
            for i in 1..n {
                left_sum += self.y(order[i - 1]);
                if i < min_leaf || n - i < min_leaf {
                    continue;
                }
                let a = self.x(order[i - 1], f);
                let b = self.x(order[i], f);
                if a >= b {
                    continue;
                }
                let right_sum = total - left_sum;
                let score = left_sum * left_sum / i as f64 + right_sum * right_sum / (n - i) as f64;
                if score > parent + 1e-12 * parent.abs().max(1e-300) && best.is_none_or(|bst| score > bst.0) {
                    let mut threshold = 0.5 * (a + b);
                    if threshold >= b {
                        threshold = a;
                    }
                    best = Some((score, f, threshold, i));
                }
            }
        }
        best.map(|(_, f, t, i)| (f, t, i))
    }

    fn grow(&mut self, tree: &mut RegressionTree, lo: usize, hi: usize, depth: usize) -> usize {
        let n = hi - lo;
        let mean = self.sorted[0][lo..hi].iter().map(|&p| self.y(p)).sum::<f64>() / n as f64;
        let at = tree.nodes.len();
        tree.nodes.push(Node::Leaf(mean));
        if depth >= self.params.max_depth || n < 2 * self.params.min_leaf {
            return at;
        }
        let Some((feature, threshold, n_left)) = self.best_split(lo, hi) else {
            return at;
        };
        for &p in &self.sorted[feature][lo..hi] {
            self.goes_left[p as usize] = false;
        }
        for &p in &self.sorted[feature][lo..lo + n_left] {
            self.goes_left[p as usize] = true;
        }
        for f in 0..self.sorted.len() {
            let order = &mut self.sorted[f][lo..hi];
            self.scratch.clear();
            let mut k = 0;
            for i in 0..order.len() {
                let p = order[i];
                if self.goes_left[p as usize] {
                    order[k] = p;
                    k += 1;
                } else {
                    self.scratch.push(p);
                }
            }
            order[k..].copy_from_slice(&self.scratch);
        }
        let mid = lo + n_left;
        let left = self.grow(tree, lo, mid, depth + 1);
        let right = self.grow(tree, mid, hi, depth + 1);
        tree.nodes[at] = Node::Split { feature, threshold, left, right };
        at
    }
}

impl RegressionTree {
    /// Fits on the rows `idx` of `xs` (repeats allowed, as in a bootstrap
    /// sample).
    pub fn fit(xs: &[Vec<f64>], ys: &[f64], idx: &[usize], params: TreeParams) -> Self {
        let mut tree = RegressionTree { nodes: Vec::new() };
        let m = idx.len();
        let d = idx.first().map_or(0, |&i| xs[i].len());
        if d == 0 {
            let mean = if m == 0 { 0.0 } else { idx.iter().map(|&i| ys[i]).sum::<f64>() / m as f64 };
            tree.nodes.push(Node::Leaf(mean));
            return tree;
        }
        let sorted = (0..d)
            .map(|f| {
                let mut o: Vec<u32> = (0..m as u32).collect();
                o.sort_by(|&a, &b| xs[idx[a as usize]][f].total_cmp(&xs[idx[b as usize]][f]));
                o
            })
            .collect();
        let mut g = Grower { xs, ys, rows: idx, sorted, goes_left: vec![false; m], scratch: Vec::with_capacity(m), params };
        g.grow(&mut tree, 0, m, 0);
        tree
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf(v) => return *v,
                Node::Split { feature, threshold, left, right } => {
                    at = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

/// Bootstrap-aggregated regression trees.
#[derive(Clone, Debug)]
pub struct Forest {
    trees: Vec<RegressionTree>,
}

impl Forest {
    /// Deterministic given `seed`; trees are grown in parallel.
    pub fn fit(xs: &[Vec<f64>], ys: &[f64], trees: usize, params: TreeParams, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let seeds: Vec<u64> = (0..trees).map(|_| rng.random()).collect();
        let n = ys.len();
        let trees = seeds
            .into_par_iter()
            .map(|s| {
                let mut r = ChaCha8Rng::seed_from_u64(s);
                let idx: Vec<usize> = (0..n).map(|_| r.random_range(0..n)).collect();
                RegressionTree::fit(xs, ys, &idx, params)
            })
            .collect();
        Forest { trees }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_params_examples() {
        assert_eq!(beta_params_for_mean(0.5, 100.0).unwrap(), (49.75, 49.75));
        let (a, b) = beta_params_for_mean(0.3, 1.0).unwrap();
        assert!((a - 0.09).abs() < 1e-15 && (b - 0.21).abs() < 1e-15);
        assert!((a / (a + b) - 0.3).abs() < 1e-15);
        assert!(matches!(beta_params_for_mean(0.5, 0.4), Err(Error::Precondition(_))));
    }

    #[test]
    fn oracle_returns_true_loss() {
        let mut s = EstimatorState::new(EstimatorKind::Oracle, 0).unwrap();
        assert_eq!(s.estimate(&[1.0], 0.5, Some(0.3)).unwrap(), LossEstimate::Loss(0.3));
        assert!(s.estimate(&[1.0], 0.5, None).is_err());
    }

    #[test]
    fn forest_warms_up_then_fits_constant_targets() {
        let mut s = EstimatorState::new(EstimatorKind::forest(5, 3), 1).unwrap();
        assert_eq!(s.estimate(&[0.0], 0.5, None).unwrap(), LossEstimate::WarmUp(0.5));
        for i in 0..6 {
            s.observe(&[i as f64], 0.2, 0.37).unwrap();
        }
        assert_eq!(s.steps_seen, 6);
        match s.estimate(&[10.0], 0.9, None).unwrap() {
            LossEstimate::Loss(v) => assert!((v - 0.37).abs() < 1e-9),
            other => panic!("{other:?}"),
        }
        assert!(s.estimate(&[10.0], 0.9, Some(0.1)).is_err());
    }

    #[test]
    fn knn_recovers_observed_point() {
        let kind = EstimatorKind::Knn { k: 1, warmup_steps: 0, warmup_probability: 0.5 };
        let mut s = EstimatorState::new(kind, 0).unwrap();
        s.observe(&[1.0, 2.0], 0.3, 0.7).unwrap();
        s.observe(&[5.0, 5.0], 0.9, 0.1).unwrap();
        assert_eq!(s.estimate(&[1.0, 2.0], 0.3, None).unwrap(), LossEstimate::Loss(0.7));
    }

    #[test]
    fn tree_splits_step_function() {
        let xs: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64]).collect();
        let ys: Vec<f64> = (0..40).map(|i| if i < 20 { 0.1 } else { 0.9 }).collect();
        let idx: Vec<usize> = (0..40).collect();
        let t = RegressionTree::fit(&xs, &ys, &idx, TreeParams { max_depth: 3, min_leaf: 2 });
        assert!((t.predict(&[3.0]) - 0.1).abs() < 1e-12);
        assert!((t.predict(&[33.0]) - 0.9).abs() < 1e-12);
    }

    #[test]
    fn observe_rejects_out_of_range() {
        let mut s = EstimatorState::new(EstimatorKind::Oracle, 0).unwrap();
        assert!(s.observe(&[0.0], 0.5, 1.5).is_err());
    }
}
