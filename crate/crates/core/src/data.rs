//! Sparse labeled data: parsing, serialization, [0, 1] feature scaling,
//! deterministic splits and cross-validation folds.
//!
//! The text format is the usual sparse classification exchange format,
//! one instance per line:
//!
//! ```text
//! <label> <index>:<value> <index>:<value> ...
//! ```
//!
//! with 1-based, strictly increasing indices.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{LdmError, Result};
use crate::rng;

/// Format a real with 17 significant digits, enough to round-trip any
/// binary64 value exactly.
pub fn format_real(x: f64) -> String {
    format!("{x:.16e}")
}

/// Binary class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn sign(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => -1.0,
        }
    }

    /// Sign rule shared by every predictor: a score of exactly zero is `+1`.
    pub fn from_score(score: f64) -> Self {
        if score >= 0.0 {
            Label::Positive
        } else {
            Label::Negative
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Label::Positive => Label::Negative,
            Label::Negative => Label::Positive,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Positive => "+1",
            Label::Negative => "-1",
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Sparse feature vector with 1-based, strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector {
    entries: Vec<(usize, f64)>,
}

impl SparseVector {
    pub fn new(entries: Vec<(usize, f64)>) -> Result<Self> {
        let mut prev = 0usize;
        for &(idx, val) in &entries {
            if idx == 0 {
                return Err(LdmError::InvalidParameter("feature indices are 1-based".into()));
            }
            if idx <= prev {
                return Err(LdmError::InvalidParameter(format!(
                    "feature indices must be strictly increasing ({idx} after {prev})"
                )));
            }
            if !val.is_finite() {
                return Err(LdmError::InvalidParameter(format!(
                    "non-finite value at feature {idx}"
                )));
            }
            prev = idx;
        }
        Ok(Self { entries })
    }

    /// Build from a dense slice; element `k` becomes feature `k + 1` and
    /// zeros are left implicit.
    pub fn from_dense(values: &[f64]) -> Result<Self> {
        Self::new(
            values
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(k, v)| (k + 1, *v))
                .collect(),
        )
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn max_index(&self) -> usize {
        self.entries.last().map_or(0, |e| e.0)
    }

    /// Value of feature `index` (1-based); absent features are zero.
    pub fn get(&self, index: usize) -> f64 {
        self.entries
            .binary_search_by_key(&index, |e| e.0)
            .map_or(0.0, |k| self.entries[k].1)
    }

    pub fn norm_sq(&self) -> f64 {
        self.entries.iter().map(|e| e.1 * e.1).sum()
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (a, b) = (&self.entries, &other.entries);
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += a[i].1 * b[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    /// Dot product with a dense vector whose element `k` is feature `k + 1`.
    /// Features beyond the dense length contribute zero.
    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.entries
            .iter()
            .take_while(|e| e.0 <= dense.len())
            .map(|&(idx, v)| v * dense[idx - 1])
            .sum()
    }

    /// `dense += scale * self`, ignoring features beyond the dense length.
    pub fn axpy_into(&self, scale: f64, dense: &mut [f64]) {
        let n = dense.len();
        for &(idx, v) in self.entries.iter().take_while(|e| e.0 <= n) {
            dense[idx - 1] += scale * v;
        }
    }

    /// Squared Euclidean distance, computed on the merged index sets so it
    /// is never negative.
    pub fn squared_distance(&self, other: &SparseVector) -> f64 {
        let (a, b) = (&self.entries, &other.entries);
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        while i < a.len() || j < b.len() {
            let d = if j == b.len() || (i < a.len() && a[i].0 < b[j].0) {
                i += 1;
                a[i - 1].1
            } else if i == a.len() || b[j].0 < a[i].0 {
                j += 1;
                -b[j - 1].1
            } else {
                i += 1;
                j += 1;
                a[i - 1].1 - b[j - 1].1
            };
            acc += d * d;
        }
        acc
    }

    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        self.axpy_into(1.0, &mut out);
        out
    }
}

/// Instances with binary labels; the input to every solver.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    instances: Vec<SparseVector>,
    labels: Vec<Label>,
    dimension: usize,
}

impl LabeledDataset {
    pub fn new(instances: Vec<SparseVector>, labels: Vec<Label>) -> Result<Self> {
        if instances.len() != labels.len() {
            return Err(LdmError::LengthMismatch {
                left: instances.len(),
                right: labels.len(),
            });
        }
        if instances.is_empty() {
            return Err(LdmError::DegenerateData("dataset has no instances".into()));
        }
        let dimension = instances.iter().map(SparseVector::max_index).max().unwrap_or(0);
        Ok(Self {
            instances,
            labels,
            dimension,
        })
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn instances(&self) -> &[SparseVector] {
        &self.instances
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    /// Labels as `±1.0`.
    pub fn signs(&self) -> Vec<f64> {
        self.labels.iter().map(|l| l.sign()).collect()
    }

    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|l| **l == Label::Positive).count();
        (pos, self.labels.len() - pos)
    }

    pub fn has_both_classes(&self) -> bool {
        let (pos, neg) = self.class_counts();
        pos > 0 && neg > 0
    }

    pub fn require_both_classes(&self) -> Result<()> {
        if self.has_both_classes() {
            Ok(())
        } else {
            Err(LdmError::DegenerateData(
                "training data must contain both classes".into(),
            ))
        }
    }

    /// Instances at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        Self::new(
            indices.iter().map(|&i| self.instances[i].clone()).collect(),
            indices.iter().map(|&i| self.labels[i]).collect(),
        )
    }

    /// Write the dataset in the sparse text format.
    pub fn to_sparse_text(&self) -> String {
        let mut out = String::new();
        for (x, y) in self.instances.iter().zip(&self.labels) {
            out.push_str(y.as_str());
            for &(idx, v) in x.entries() {
                let _ = write!(out, " {idx}:{}", format_real(v));
            }
            out.push('\n');
        }
        out
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_sparse_text())?;
        Ok(())
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self> {
        parse_sparse(&std::fs::read_to_string(path)?)
    }
}

fn is_signed_unit(raw: &str) -> bool {
    matches!(raw, "1" | "+1" | "-1")
}

/// Parse the sparse text format.
///
/// Labels spelled `1`, `+1` or `-1` are taken literally. Any other pair of
/// raw labels is mapped by lexicographic order: the smaller string becomes
/// `-1` and the larger `+1`.
pub fn parse_sparse(text: &str) -> Result<LabeledDataset> {
    let mut raw_labels: Vec<&str> = Vec::new();
    let mut instances = Vec::new();
    let mut line_numbers = Vec::new();

    for (lineno, line) in text.lines().enumerate().map(|(k, l)| (k + 1, l)) {
        let mut tokens = line.split_whitespace();
        let Some(label) = tokens.next() else {
            continue;
        };
        let mut entries = Vec::new();
        let mut prev = 0usize;
        for tok in tokens {
            let err = |message: String| LdmError::Parse { line: lineno, message };
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| err(format!("expected <index>:<value>, found `{tok}`")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| err(format!("bad feature index `{idx}`")))?;
            let val: f64 = val.parse().map_err(|_| err(format!("bad feature value `{val}`")))?;
            if idx == 0 {
                return Err(err("feature indices are 1-based".into()));
            }
            if idx <= prev {
                return Err(err(format!("index {idx} does not increase (after {prev})")));
            }
            if !val.is_finite() {
                return Err(err(format!("non-finite value at feature {idx}")));
            }
            prev = idx;
            entries.push((idx, val));
        }
        raw_labels.push(label);
        instances.push(SparseVector { entries });
        line_numbers.push(lineno);
    }

    let labels = if raw_labels.iter().all(|l| is_signed_unit(l)) {
        raw_labels
            .iter()
            .map(|l| if *l == "-1" { Label::Negative } else { Label::Positive })
            .collect()
    } else {
        let distinct: BTreeSet<&str> = raw_labels.iter().copied().collect();
        if distinct.len() > 2 {
            let shown: Vec<&str> = distinct.iter().take(5).copied().collect();
            return Err(LdmError::TooManyLabels {
                labels: shown.join(", "),
            });
        }
        let smallest = *distinct.iter().next().expect("at least one instance");
        raw_labels
            .iter()
            .map(|l| if *l == smallest { Label::Negative } else { Label::Positive })
            .collect()
    };

    LabeledDataset::new(instances, labels)
}

/// Per-feature `(min, max)` over a fitting set, implicit zeros included.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationMap {
    ranges: Vec<(f64, f64)>,
}

impl NormalizationMap {
    pub fn from_ranges(ranges: Vec<(f64, f64)>) -> Result<Self> {
        for (k, &(lo, hi)) in ranges.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(LdmError::InvalidParameter(format!(
                    "bad range for feature {}: [{lo}, {hi}]",
                    k + 1
                )));
            }
        }
        Ok(Self { ranges })
    }

    /// `(min, max)` for 1-based feature indices `1..=dimension`.
    pub fn ranges(&self) -> &[(f64, f64)] {
        &self.ranges
    }

    pub fn dimension(&self) -> usize {
        self.ranges.len()
    }

    fn scale(&self, idx: usize, v: f64) -> f64 {
        match self.ranges.get(idx - 1) {
            Some(&(lo, hi)) if hi > lo => ((v - lo) / (hi - lo)).clamp(0.0, 1.0),
            _ => 0.0,
        }
    }

    /// Scale one vector. Stored entries are mapped and clamped to [0, 1];
    /// degenerate or unseen features map to 0 and are dropped. Features whose
    /// fitted minimum is negative get an explicit entry for their implicit
    /// zeros, since those no longer map to 0.
    pub fn apply_vector(&self, x: &SparseVector) -> SparseVector {
        let mut out = Vec::with_capacity(x.nnz());
        let mut stored = x.entries().iter().peekable();
        let mut push = |idx: usize, v: f64| {
            if v != 0.0 {
                out.push((idx, v));
            }
        };
        for (k, &(lo, hi)) in self.ranges.iter().enumerate() {
            let idx = k + 1;
            while let Some(&&(j, v)) = stored.peek() {
                if j >= idx {
                    break;
                }
                push(j, self.scale(j, v));
                stored.next();
            }
            match stored.peek() {
                Some(&&(j, v)) if j == idx => {
                    push(j, self.scale(j, v));
                    stored.next();
                }
                _ if lo < 0.0 && hi > lo => push(idx, self.scale(idx, 0.0)),
                _ => {}
            }
        }
        for &(j, v) in stored {
            push(j, self.scale(j, v));
        }
        SparseVector { entries: out }
    }

    pub fn apply(&self, d: &LabeledDataset) -> LabeledDataset {
        LabeledDataset {
            instances: d.instances.iter().map(|x| self.apply_vector(x)).collect(),
            labels: d.labels.clone(),
            dimension: d.dimension,
        }
        .with_recomputed_dimension()
    }
}

impl LabeledDataset {
    fn with_recomputed_dimension(mut self) -> Self {
        self.dimension = self.instances.iter().map(SparseVector::max_index).max().unwrap_or(0);
        self
    }
}

/// Fit per-feature min/max. A feature missing from some instance has an
/// implicit 0 that takes part in its range.
pub fn fit_normalizer(d: &LabeledDataset) -> NormalizationMap {
    let dim = d.dimension();
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    let mut count = vec![0usize; dim];
    for x in d.instances() {
        for &(idx, v) in x.entries() {
            lo[idx - 1] = lo[idx - 1].min(v);
            hi[idx - 1] = hi[idx - 1].max(v);
            count[idx - 1] += 1;
        }
    }
    let ranges = (0..dim)
        .map(|k| {
            if count[k] < d.len() {
                (lo[k].min(0.0), hi[k].max(0.0))
            } else {
                (lo[k], hi[k])
            }
        })
        .collect();
    NormalizationMap { ranges }
}

pub fn apply_normalizer(map: &NormalizationMap, d: &LabeledDataset) -> LabeledDataset {
    map.apply(d)
}

/// Assignment of instances to `k` cross-validation folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    k: usize,
    assignment: Vec<usize>,
    seed: u64,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// `(training indices, held-out indices)` for `fold`, both ascending.
    pub fn split(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        (0..self.assignment.len()).partition(|&i| self.assignment[i] != fold)
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Shuffled round-robin fold assignment.
pub fn make_folds(m: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(LdmError::InvalidParameter(format!("need at least 2 folds, got {k}")));
    }
    if k > m {
        return Err(LdmError::InvalidParameter(format!(
            "cannot make {k} folds from {m} instances"
        )));
    }
    let perm = rng::permutation(m, &mut rng::seeded(seed));
    let mut assignment = vec![0; m];
    for (pos, &i) in perm.iter().enumerate() {
        assignment[i] = pos % k;
    }
    Ok(FoldPlan { k, assignment, seed })
}

/// Indices of a seeded `(train, test)` partition with `ceil(fraction * m)`
/// training instances. Both lists are ascending.
pub fn random_split_indices(m: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(LdmError::InvalidParameter(format!(
            "split fraction must lie in (0, 1), got {fraction}"
        )));
    }
    // Guard the ceiling against products like 0.7 * 10 = 7.000000000000001.
    let n_train = ((fraction * m as f64) - 1e-9).ceil().max(0.0) as usize;
    let perm = rng::permutation(m, &mut rng::seeded(seed));
    let mut train = perm[..n_train].to_vec();
    let mut test = perm[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn random_split(
    d: &LabeledDataset,
    fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    let (train_idx, test_idx) = random_split_indices(d.len(), fraction, seed)?;
    if train_idx.is_empty() || test_idx.is_empty() {
        return Err(LdmError::DegenerateData(format!(
            "split of {} instances at fraction {fraction} leaves an empty side",
            d.len()
        )));
    }
    let train = d.subset(&train_idx)?;
    if !train.has_both_classes() {
        return Err(LdmError::DegenerateData(
            "training split is missing a class; try another seed".into(),
        ));
    }
    Ok((train, d.subset(&test_idx)?))
}
