//! Dataset ingestion (LIBSVM, CSV), synthetic separable data with an exact
//! margin, the tic-tac-toe endgame set, RBF landmark features and
//! deterministic shuffling/splitting.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{dist_sq, dot, norm, sigmoid, Example, Label, Task};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub task: Task,
    pub d: usize,
    pub examples: Vec<Example>,
}

impl Dataset {
    /// Builds a dataset, checking dimensions and labels of every example.
    pub fn new(name: impl Into<String>, task: Task, d: usize, examples: Vec<Example>) -> Result<Self> {
        for ex in &examples {
            if ex.dim() != d {
                return Err(Error::DimensionMismatch { expected: d, got: ex.dim() });
            }
            ex.validate(task)?;
        }
        Ok(Dataset { name: name.into(), task, d, examples })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Largest feature norm.
    pub fn max_norm(&self) -> f64 {
        self.examples.iter().map(|e| norm(&e.features)).fold(0.0, f64::max)
    }

    pub fn positive_fraction(&self) -> f64 {
        let pos = self.examples.iter().filter(|e| e.label == Label::Binary(1)).count();
        pos as f64 / self.len().max(1) as f64
    }

    /// Copy with every feature vector multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Dataset {
        let mut out = self.clone();
        for e in &mut out.examples {
            e.features.iter_mut().for_each(|v| *v *= s);
        }
        out
    }
}

/// How raw numeric labels map to the task's labels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LabelMap {
    /// Binary: `{-1,+1}` as is, `{0,1}` and `{1,2}` mapped to `{-1,+1}`.
    #[default]
    Auto,
    /// Integer class labels `first..first+k`.
    Multiclass { k: usize, first: i64 },
}

fn map_labels(raw: &[(usize, f64)], map: LabelMap) -> Result<(Task, Vec<Label>)> {
    match map {
        LabelMap::Auto => {
            let set: BTreeSet<i64> = raw.iter().map(|(_, y)| *y as i64).collect();
            for (line, y) in raw {
                if y.fract() != 0.0 {
                    return Err(Error::Parse { line: *line, reason: format!("non-integer label {y}") });
                }
            }
            let neg = if set.iter().all(|v| *v == -1 || *v == 1) {
                -1
            } else if set.iter().all(|v| *v == 0 || *v == 1) {
                0
            } else if set.iter().all(|v| *v == 1 || *v == 2) {
                1
            } else {
                return Err(Error::InvalidLabel(format!("cannot map label set {set:?} to a binary task")));
            };
            let labels = raw.iter().map(|(_, y)| Label::Binary(if *y as i64 == neg { -1 } else { 1 })).collect();
            Ok((Task::Binary, labels))
        }
        LabelMap::Multiclass { k, first } => {
            let mut labels = Vec::with_capacity(raw.len());
            for (line, y) in raw {
                let c = *y as i64 - first;
                if y.fract() != 0.0 || c < 0 || c >= k as i64 {
                    return Err(Error::Parse { line: *line, reason: format!("label {y} outside {first}..{}", first + k as i64) });
                }
                labels.push(Label::Class(c as usize));
            }
            Ok((Task::Multiclass { k }, labels))
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LibsvmOptions {
    /// Feature dimension; defaults to the largest index present.
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default)]
    pub labels: LabelMap,
}

/// Parses LIBSVM text: `label idx:val idx:val ...` with 1-based, strictly
/// increasing indices. Blank lines and `#` comments are skipped.
pub fn parse_libsvm(text: &str, name: &str, opts: LibsvmOptions) -> Result<Dataset> {
    let mut raw_labels = Vec::new();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut max_idx = 0;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().unwrap_or_default();
        let label: f64 = label_tok
            .parse()
            .map_err(|_| Error::Parse { line: line_no, reason: format!("bad label `{label_tok}`") })?;
        let mut row = Vec::new();
        let mut last = 0;
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| Error::Parse { line: line_no, reason: format!("expected idx:val, got `{tok}`") })?;
            let idx: usize =
                idx.parse().map_err(|_| Error::Parse { line: line_no, reason: format!("bad index `{idx}`") })?;
            let val: f64 =
                val.parse().map_err(|_| Error::Parse { line: line_no, reason: format!("bad value `{val}`") })?;
            if idx == 0 {
                return Err(Error::Parse { line: line_no, reason: "indices are 1-based".into() });
            }
            if idx <= last {
                return Err(Error::Parse { line: line_no, reason: format!("index {idx} not increasing") });
            }
            if !val.is_finite() {
                return Err(Error::Parse { line: line_no, reason: format!("non-finite value `{val}`") });
            }
            last = idx;
            row.push((idx, val));
        }
        max_idx = max_idx.max(last);
        raw_labels.push((line_no, label));
        rows.push(row);
    }
    let d = match opts.dim {
        Some(d) if d < max_idx => {
            return Err(invalid("dim", format!("dimension {d} is smaller than the largest index {max_idx}")))
        }
        Some(d) => d,
        None => max_idx,
    };
    if rows.is_empty() {
        let task = match opts.labels {
            LabelMap::Auto => Task::Binary,
            LabelMap::Multiclass { k, .. } => Task::Multiclass { k },
        };
        return Dataset::new(name, task, d, Vec::new());
    }
    let (task, labels) = map_labels(&raw_labels, opts.labels)?;
    let examples = rows
        .into_iter()
        .zip(labels)
        .map(|(row, label)| {
            let mut features = vec![0.0; d];
            for (idx, val) in row {
                features[idx - 1] = val;
            }
            Example { features, label, id: None }
        })
        .collect();
    Dataset::new(name, task, d, examples)
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

pub fn load_libsvm(path: impl AsRef<Path>, opts: LibsvmOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let text = read_text(path)?;
    parse_libsvm(&text, &file_stem(path), opts)
}

fn file_stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn label_text(label: Label) -> String {
    match label {
        Label::Binary(s) => format!("{s:+}"),
        Label::Class(c) => c.to_string(),
    }
}

/// LIBSVM text with nonzero features written at 17 significant digits.
pub fn to_libsvm(ds: &Dataset) -> String {
    let mut out = String::new();
    for ex in &ds.examples {
        out.push_str(&label_text(ex.label));
        for (i, v) in ex.features.iter().enumerate() {
            if *v != 0.0 {
                let _ = write!(out, " {}:{:.16e}", i + 1, v);
            }
        }
        out.push('\n');
    }
    out
}

pub fn write_libsvm(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_libsvm(ds))?;
    Ok(())
}

/// Reads CSV with a header row; the `label` column holds labels and every
/// other column is a numeric feature.
pub fn load_csv(path: impl AsRef<Path>, labels: LabelMap) -> Result<Dataset> {
    let path = path.as_ref();
    let text = read_text(path)?;
    parse_csv(&text, &file_stem(path), labels)
}

pub fn parse_csv(text: &str, name: &str, labels: LabelMap) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| Error::Parse { line: 1, reason: e.to_string() })?.clone();
    let label_col = headers
        .iter()
        .position(|h| h == "label")
        .ok_or_else(|| Error::Parse { line: 1, reason: "no `label` column in header".into() })?;
    let d = headers.len() - 1;
    let mut raw = Vec::new();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Error::Parse { line, reason: e.to_string() })?;
        let mut features = Vec::with_capacity(d);
        let mut label = 0.0;
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Parse { line, reason: format!("bad number `{field}`") })?;
            if !v.is_finite() {
                return Err(Error::Parse { line, reason: format!("non-finite value `{field}`") });
            }
            if j == label_col {
                label = v;
            } else {
                features.push(v);
            }
        }
        raw.push((line, label));
        rows.push(features);
    }
    if rows.is_empty() {
        return Dataset::new(name, Task::Binary, d, Vec::new());
    }
    let (task, labels) = map_labels(&raw, labels)?;
    let examples = rows.into_iter().zip(labels).map(|(features, label)| Example { features, label, id: None }).collect();
    Dataset::new(name, task, d, examples)
}

/// Synthetic linearly separable data with a geometric margin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarginSpec {
    pub n: usize,
    pub d: usize,
    pub rho_star: f64,
    pub r: f64,
    pub seed: u64,
}

const MAX_REJECTIONS: usize = 1_000_000;

fn unit_vector<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&v);
        if n > 0.0 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn uniform_in_ball<R: Rng>(rng: &mut R, d: usize, r: f64) -> Vec<f64> {
    let dir = unit_vector(rng, d);
    let u: f64 = rng.random();
    let radius = r * u.powf(1.0 / d as f64);
    dir.into_iter().map(|x| x * radius).collect()
}

/// Draws points uniformly in the `R`-ball, keeping those with
/// `|x^T theta*| >= rho_star` for a random unit `theta*`; labels are
/// `sgn(x^T theta*)`. Returns the data and `theta*`.
pub fn gen_margin_dataset(spec: &MarginSpec) -> Result<(Dataset, Vec<f64>)> {
    if !(spec.r > 0.0) || spec.d == 0 {
        return Err(invalid("r", "radius and dimension must be positive"));
    }
    if !(spec.rho_star >= 0.0 && spec.rho_star < spec.r) {
        return Err(invalid("rho_star", format!("need 0 <= rho_star < R, got rho_star = {}, R = {}", spec.rho_star, spec.r)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let theta = unit_vector(&mut rng, spec.d);
    let mut examples = Vec::with_capacity(spec.n);
    while examples.len() < spec.n {
        let mut rejected = 0;
        let x = loop {
            let x = uniform_in_ball(&mut rng, spec.d, spec.r);
            if dot(&x, &theta).abs() >= spec.rho_star && norm(&x) <= spec.r {
                break x;
            }
            rejected += 1;
            if rejected >= MAX_REJECTIONS {
                return Err(Error::Precondition(format!(
                    "{MAX_REJECTIONS} consecutive rejections; rho_star/R = {} is too close to 1 for d = {}",
                    spec.rho_star / spec.r,
                    spec.d
                )));
            }
        };
        let y = if dot(&x, &theta) > 0.0 { 1.0 } else { -1.0 };
        examples.push(Example::binary(x, y)?);
    }
    let ds = Dataset::new(format!("margin-d{}-rho{}", spec.d, spec.rho_star), Task::Binary, spec.d, examples)?;
    Ok((ds, theta))
}

/// Points uniform in the `R`-ball with labels drawn from a logistic model:
/// `P(y = +1 | x) = sigmoid(x^T w)` with `w = weight_norm * e_1`. The seed
/// only affects the sample, so different seeds draw from one distribution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogisticSpec {
    pub n: usize,
    pub d: usize,
    pub r: f64,
    pub weight_norm: f64,
    pub seed: u64,
}

/// Returns the data and the generating `w`, which minimizes the population
/// logistic loss.
pub fn gen_logistic_dataset(spec: &LogisticSpec) -> Result<(Dataset, Vec<f64>)> {
    if !(spec.r > 0.0) || spec.d == 0 {
        return Err(invalid("r", "radius and dimension must be positive"));
    }
    if !(spec.weight_norm >= 0.0 && spec.weight_norm.is_finite()) {
        return Err(invalid("weight_norm", format!("must be finite and nonnegative, got {}", spec.weight_norm)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut w = vec![0.0; spec.d];
    w[0] = spec.weight_norm;
    let mut examples = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let x = uniform_in_ball(&mut rng, spec.d, spec.r);
        let u: f64 = rng.random();
        let y = if u < sigmoid(dot(&x, &w)) { 1.0 } else { -1.0 };
        examples.push(Example::binary(x, y)?);
    }
    let ds = Dataset::new(format!("logistic-d{}-w{}", spec.d, spec.weight_norm), Task::Binary, spec.d, examples)?;
    Ok((ds, w))
}

/// Multi-class analogue: `k` random unit class vectors, label = argmax score,
/// keeping points whose best score beats the runner-up by `rho_star`.
pub fn gen_multiclass_margin_dataset(spec: &MarginSpec, k: usize) -> Result<(Dataset, Vec<f64>)> {
    if k < 2 {
        return Err(invalid("k", "need at least two classes"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let thetas: Vec<Vec<f64>> = (0..k).map(|_| unit_vector(&mut rng, spec.d)).collect();
    let mut examples = Vec::with_capacity(spec.n);
    while examples.len() < spec.n {
        let mut rejected = 0;
        loop {
            let x = uniform_in_ball(&mut rng, spec.d, spec.r);
            let mut scores: Vec<(f64, usize)> = thetas.iter().enumerate().map(|(c, t)| (dot(&x, t), c)).collect();
            scores.sort_by(|a, b| b.0.total_cmp(&a.0));
            if scores[0].0 - scores[1].0 >= spec.rho_star {
                examples.push(Example::class(x, scores[0].1)?);
                break;
            }
            rejected += 1;
            if rejected >= MAX_REJECTIONS {
                return Err(Error::Precondition(format!("{MAX_REJECTIONS} consecutive rejections")));
            }
        }
    }
    let theta = thetas.concat();
    let ds = Dataset::new(format!("multiclass-margin-k{k}"), Task::Multiclass { k }, spec.d, examples)?;
    Ok((ds, theta))
}

/// Attribute cardinalities of the UCI mushroom table (22 attributes).
pub const MUSHROOM_CARDINALITIES: [usize; 22] = [6, 4, 10, 2, 9, 2, 2, 2, 12, 2, 5, 4, 4, 9, 9, 1, 4, 3, 5, 9, 6, 7];

/// Synthetic one-hot categorical data. Attribute values are drawn with
/// probabilities proportional to `1/(v+1)`. A hidden additive score, with
/// per-attribute weights shrinking geometrically, sets the labels by a
/// median split. With `prototypes > 0` rows are noisy copies of that many
/// random prototype rows (each attribute resampled with probability
/// `mutation`) and inherit the prototype's label, giving the clustered,
/// species-like structure of the mushroom table; otherwise every row is
/// drawn independently and labeled by its own score, which is linearly
/// separable in the one-hot encoding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategoricalSpec {
    pub n: usize,
    pub cardinalities: Vec<usize>,
    #[serde(default)]
    pub prototypes: usize,
    #[serde(default)]
    pub mutation: f64,
    pub seed: u64,
}

impl CategoricalSpec {
    /// Mushroom-shaped: 8124 rows over the mushroom attribute cardinalities,
    /// 23 prototypes (the table's species count), 20% resampling.
    pub fn mushroom_like(seed: u64) -> Self {
        CategoricalSpec { n: 8124, cardinalities: MUSHROOM_CARDINALITIES.to_vec(), prototypes: 23, mutation: 0.2, seed }
    }
}

pub fn gen_categorical_dataset(spec: &CategoricalSpec) -> Result<Dataset> {
    if spec.cardinalities.is_empty() || spec.cardinalities.contains(&0) {
        return Err(invalid("cardinalities", "need at least one attribute, each with at least one value"));
    }
    if !(0.0..=1.0).contains(&spec.mutation) {
        return Err(invalid("mutation", format!("must lie in [0, 1], got {}", spec.mutation)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    // Importance follows a shuffled rank so the dominant attribute is not
    // always the first column.
    let mut rank: Vec<usize> = (0..spec.cardinalities.len()).collect();
    rank.shuffle(&mut rng);
    let weights: Vec<Vec<f64>> = spec
        .cardinalities
        .iter()
        .zip(&rank)
        .map(|(&c, &r)| {
            let scale = 0.7f64.powi(r as i32);
            (0..c).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
        })
        .collect();
    let value_dists: Vec<WeightedIndex<f64>> = spec
        .cardinalities
        .iter()
        .map(|&c| WeightedIndex::new((1..=c).map(|v| 1.0 / v as f64)).expect("positive weights"))
        .collect();
    let draw_row = |rng: &mut ChaCha8Rng| -> Vec<usize> { value_dists.iter().map(|d| d.sample(rng)).collect() };
    let score = |row: &[usize]| -> f64 { row.iter().zip(&weights).map(|(&v, w)| w[v]).sum() };
    let median_split = |scores: &[f64]| -> f64 {
        let mut s = scores.to_vec();
        s.sort_by(f64::total_cmp);
        s.get(s.len() / 2).copied().unwrap_or(0.0)
    };

    let rows: Vec<(Vec<usize>, f64)> = if spec.prototypes > 0 {
        let protos: Vec<Vec<usize>> = (0..spec.prototypes).map(|_| draw_row(&mut rng)).collect();
        let scores: Vec<f64> = protos.iter().map(|p| score(p)).collect();
        let median = median_split(&scores);
        (0..spec.n)
            .map(|_| {
                let k = rng.random_range(0..protos.len());
                let row = protos[k]
                    .iter()
                    .zip(&value_dists)
                    .map(|(&v, d)| if rng.random::<f64>() < spec.mutation { d.sample(&mut rng) } else { v })
                    .collect();
                (row, if scores[k] >= median { 1.0 } else { -1.0 })
            })
            .collect()
    } else {
        let raw: Vec<Vec<usize>> = (0..spec.n).map(|_| draw_row(&mut rng)).collect();
        let scores: Vec<f64> = raw.iter().map(|r| score(r)).collect();
        let median = median_split(&scores);
        raw.into_iter().zip(scores).map(|(r, s)| (r, if s >= median { 1.0 } else { -1.0 })).collect()
    };

    let d: usize = spec.cardinalities.iter().sum();
    let examples = rows
        .into_iter()
        .map(|(row, y)| {
            let mut f = vec![0.0; d];
            let mut offset = 0;
            for (&v, &c) in row.iter().zip(&spec.cardinalities) {
                f[offset + v] = 1.0;
                offset += c;
            }
            Example::binary(f, y)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(format!("categorical-{}x{}", spec.n, spec.cardinalities.len()), Task::Binary, d, examples)
}

/// All 958 legal end positions of tic-tac-toe with `x` moving first,
/// one-hot encoded per square (x, o, blank); positive iff `x` has three in a
/// row.
pub fn tictactoe() -> Dataset {
    fn winner(b: &[u8; 9]) -> u8 {
        const LINES: [[usize; 3]; 8] =
            [[0, 1, 2], [3, 4, 5], [6, 7, 8], [0, 3, 6], [1, 4, 7], [2, 5, 8], [0, 4, 8], [2, 4, 6]];
        for l in LINES {
            if b[l[0]] != 0 && b[l[0]] == b[l[1]] && b[l[1]] == b[l[2]] {
                return b[l[0]];
            }
        }
        0
    }
    fn walk(b: &mut [u8; 9], player: u8, out: &mut BTreeSet<[u8; 9]>) {
        if winner(b) != 0 || b.iter().all(|&c| c != 0) {
            out.insert(*b);
            return;
        }
        for i in 0..9 {
            if b[i] == 0 {
                b[i] = player;
                walk(b, 3 - player, out);
                b[i] = 0;
            }
        }
    }
    let mut boards = BTreeSet::new();
    walk(&mut [0; 9], 1, &mut boards);
    let examples = boards
        .iter()
        .map(|b| {
            let mut f = vec![0.0; 27];
            for (i, &c) in b.iter().enumerate() {
                let slot = match c {
                    1 => 0,
                    2 => 1,
                    _ => 2,
                };
                f[3 * i + slot] = 1.0;
            }
            let id: String = b.iter().map(|&c| ['b', 'x', 'o'][c as usize]).collect();
            Example { features: f, label: Label::Binary(if winner(b) == 1 { 1 } else { -1 }), id: Some(id) }
        })
        .collect();
    Dataset { name: "tictactoe".into(), task: Task::Binary, d: 27, examples }
}

/// Gaussian landmark feature map `phi_j(x) = exp(-gamma ||x - c_j||^2)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RbfMap {
    pub landmarks: Vec<Vec<f64>>,
    pub gamma: f64,
}

impl RbfMap {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.landmarks.iter().map(|c| (-self.gamma * dist_sq(x, c)).exp().max(f64::MIN_POSITIVE)).collect()
    }

    pub fn transform(&self, ds: &Dataset) -> Result<Dataset> {
        let examples = ds
            .examples
            .iter()
            .map(|e| Example { features: self.apply(&e.features), label: e.label, id: e.id.clone() })
            .collect();
        Dataset::new(format!("{}-rbf", ds.name), ds.task, self.landmarks.len(), examples)
    }
}

/// Median heuristic: `1 / median` of pairwise squared distances over a
/// subsample of at most 500 points.
pub fn median_gamma(ds: &Dataset, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = ds.len().min(500);
    let idx = rand::seq::index::sample(&mut rng, ds.len(), m).into_vec();
    let mut d2 = Vec::with_capacity(m * m.saturating_sub(1) / 2);
    for i in 0..m {
        for j in i + 1..m {
            d2.push(dist_sq(&ds.examples[idx[i]].features, &ds.examples[idx[j]].features));
        }
    }
    if d2.is_empty() {
        return 1.0;
    }
    let mid = d2.len() / 2;
    d2.select_nth_unstable_by(mid, f64::total_cmp);
    let med = d2[mid];
    if med > 0.0 {
        1.0 / med
    } else {
        1.0
    }
}

/// Builds an RBF map from `m` landmarks drawn without replacement and applies
/// it to `ds`. `gamma = None` uses the median heuristic.
pub fn rbf_featurize(ds: &Dataset, m: usize, gamma: Option<f64>, seed: u64) -> Result<(Dataset, RbfMap)> {
    if m > ds.len() {
        return Err(invalid("landmarks", format!("{m} landmarks requested from {} points", ds.len())));
    }
    if let Some(g) = gamma {
        if !(g > 0.0) {
            return Err(invalid("gamma", format!("must be positive, got {g}")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let idx = rand::seq::index::sample(&mut rng, ds.len(), m).into_vec();
    let landmarks = idx.iter().map(|&i| ds.examples[i].features.clone()).collect();
    let gamma = gamma.unwrap_or_else(|| median_gamma(ds, seed.wrapping_add(1)));
    let map = RbfMap { landmarks, gamma };
    Ok((map.transform(ds)?, map))
}

/// Deterministic Fisher-Yates shuffle.
pub fn shuffled(ds: &Dataset, seed: u64) -> Dataset {
    let mut out = ds.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    out.examples.shuffle(&mut rng);
    out
}

/// Shuffles and splits into `ceil(n (1 - f))` training and remaining test
/// examples.
pub fn shuffle_split(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(invalid("test_fraction", format!("must lie in [0, 1), got {test_fraction}")));
    }
    let all = shuffled(ds, seed);
    let n_train = ((ds.len() as f64) * (1.0 - test_fraction)).ceil() as usize;
    let n_train = n_train.min(ds.len());
    let mut train = all.clone();
    let test_examples = train.examples.split_off(n_train);
    let test = Dataset { examples: test_examples, ..all };
    Ok((train, test))
}

/// Per-column z-scores fitted on `train` and applied to `train` and `others`.
pub fn standardize(train: &Dataset, others: &[&Dataset]) -> (Dataset, Vec<Dataset>) {
    let n = train.len().max(1) as f64;
    let mut mean = vec![0.0; train.d];
    for e in &train.examples {
        for (m, v) in mean.iter_mut().zip(&e.features) {
            *m += v / n;
        }
    }
    let mut sd = vec![0.0; train.d];
    for e in &train.examples {
        for ((s, v), m) in sd.iter_mut().zip(&e.features).zip(&mean) {
            *s += (v - m) * (v - m) / n;
        }
    }
    let sd: Vec<f64> = sd.into_iter().map(|v| if v > 0.0 { v.sqrt() } else { 1.0 }).collect();
    let apply = |ds: &Dataset| {
        let mut out = ds.clone();
        for e in &mut out.examples {
            for ((v, m), s) in e.features.iter_mut().zip(&mean).zip(&sd) {
                *v = (*v - m) / s;
            }
        }
        out
    };
    (apply(train), others.iter().map(|d| apply(d)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn libsvm_examples() {
        let ds = parse_libsvm("+1 1:0.5 3:2\n", "t", LibsvmOptions { dim: Some(3), ..Default::default() }).unwrap();
        assert_eq!(ds.examples[0].features, vec![0.5, 0.0, 2.0]);
        assert_eq!(ds.examples[0].label, Label::Binary(1));
        let empty = parse_libsvm("", "e", LibsvmOptions::default()).unwrap();
        assert_eq!((empty.len(), empty.d), (0, 0));
        assert!(matches!(parse_libsvm("1 2:a", "b", LibsvmOptions::default()), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_libsvm("1 1:1\n1 3:1 2:1", "b", LibsvmOptions::default()), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn libsvm_label_maps() {
        let ds = parse_libsvm("0 1:1\n1 1:2\r\n", "t", LibsvmOptions::default()).unwrap();
        assert_eq!(ds.examples[0].label, Label::Binary(-1));
        assert_eq!(ds.examples[1].label, Label::Binary(1));
        let ds = parse_libsvm("2 1:1\n1 1:2\n", "t", LibsvmOptions::default()).unwrap();
        assert_eq!(ds.examples[0].label, Label::Binary(1));
        let opts = LibsvmOptions { dim: None, labels: LabelMap::Multiclass { k: 3, first: 1 } };
        let ds = parse_libsvm("3 1:1\n1 1:2\n", "t", opts).unwrap();
        assert_eq!(ds.examples[0].label, Label::Class(2));
    }

    #[test]
    fn csv_parsing() {
        let ds = parse_csv("a,label,b\n1.5,1,2\n0,-1,3\n", "c", LabelMap::Auto).unwrap();
        assert_eq!(ds.d, 2);
        assert_eq!(ds.examples[1].features, vec![0.0, 3.0]);
        assert!(parse_csv("a,b\n1,2\n", "c", LabelMap::Auto).is_err());
        assert!(matches!(parse_csv("a,label\nx,1\n", "c", LabelMap::Auto), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn tictactoe_counts() {
        let ds = tictactoe();
        assert_eq!(ds.len(), 958);
        let pos = ds.examples.iter().filter(|e| e.label == Label::Binary(1)).count();
        assert_eq!(pos, 626);
    }

    #[test]
    fn margin_generator_rejects_impossible_margin() {
        let spec = MarginSpec { n: 10, d: 3, rho_star: 1.0, r: 1.0, seed: 0 };
        assert!(gen_margin_dataset(&spec).is_err());
    }

    #[test]
    fn rbf_examples() {
        let spec = MarginSpec { n: 50, d: 3, rho_star: 0.1, r: 1.0, seed: 4 };
        let (ds, _) = gen_margin_dataset(&spec).unwrap();
        let (f, map) = rbf_featurize(&ds, 10, None, 1).unwrap();
        assert_eq!(f.d, 10);
        assert_eq!(map.apply(&map.landmarks[3].clone())[3], 1.0);
        assert!(rbf_featurize(&ds, 51, None, 1).is_err());
        let sharp = RbfMap { landmarks: vec![vec![0.0; 3]], gamma: 1e300 };
        assert!(sharp.apply(&[1.0, 0.0, 0.0])[0] <= f64::MIN_POSITIVE);
    }

    #[test]
    fn split_sizes() {
        let ds = tictactoe();
        let (tr, te) = shuffle_split(&ds, 0.0, 3).unwrap();
        assert_eq!((tr.len(), te.len()), (958, 0));
        let (tr, te) = shuffle_split(&ds, 0.25, 3).unwrap();
        assert_eq!(tr.len(), (958.0f64 * 0.75).ceil() as usize);
        assert_eq!(tr.len() + te.len(), 958);
    }
}
