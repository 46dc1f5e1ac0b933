//! Scalar observability measures and memoized set functions built on them.

use std::sync::atomic::{AtomicU64, Ordering};

use dashmap::DashMap;
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sysmodel::{check_psd, ContributionGramians, GramianMatrix};

pub const DEFAULT_LOGDET_EPSILON: f64 = 1e-10;
pub const DEFAULT_RANK_REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Trace,
    Logdet,
    Rank,
}

impl std::str::FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trace" => Ok(MetricKind::Trace),
            "logdet" => Ok(MetricKind::Logdet),
            "rank" => Ok(MetricKind::Rank),
            other => Err(Error::invalid("metric", format!("unknown metric `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub kind: MetricKind,
    /// Regularization added to every eigenvalue for `logdet`.
    pub epsilon: f64,
    /// Relative eigenvalue threshold for `rank`.
    pub rank_rel_tol: f64,
}

impl Metric {
    pub fn new(kind: MetricKind, epsilon: f64, rank_rel_tol: f64) -> Result<Self> {
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::invalid("epsilon", "must be finite and >= 0"));
        }
        if !(rank_rel_tol > 0.0 && rank_rel_tol < 1.0) {
            return Err(Error::invalid("rank_rel_tol", "must lie in (0, 1)"));
        }
        Ok(Self {
            kind,
            epsilon,
            rank_rel_tol,
        })
    }

    pub fn of_kind(kind: MetricKind) -> Self {
        Self {
            kind,
            epsilon: DEFAULT_LOGDET_EPSILON,
            rank_rel_tol: DEFAULT_RANK_REL_TOL,
        }
    }

    pub fn trace() -> Self {
        Self::of_kind(MetricKind::Trace)
    }

    pub fn logdet(epsilon: f64) -> Self {
        Self {
            epsilon,
            ..Self::of_kind(MetricKind::Logdet)
        }
    }

    pub fn rank() -> Self {
        Self::of_kind(MetricKind::Rank)
    }

    /// Metric value of the zero Gramian of dimension `n_x`.
    pub fn empty_value(&self, n_x: usize) -> f64 {
        match self.kind {
            MetricKind::Trace | MetricKind::Rank => 0.0,
            MetricKind::Logdet if n_x == 0 => 0.0,
            MetricKind::Logdet if self.epsilon > 0.0 => n_x as f64 * self.epsilon.ln(),
            MetricKind::Logdet => f64::NEG_INFINITY,
        }
    }
}

/// Evaluates `m` on a validated Gramian.
pub fn measure(w: &GramianMatrix, m: &Metric) -> Result<f64> {
    check_psd(&w.w)?;
    Ok(evaluate(&w.w, m))
}

/// Evaluates `m` on a symmetric matrix without validation.
///
/// `logdet` with `ε > 0` goes through a Cholesky factor of `W + εI`, falling back to the
/// eigendecomposition when the factorization fails. A singular matrix under `ε = 0`
/// yields `-∞`.
pub fn evaluate(w: &DMatrix<f64>, m: &Metric) -> f64 {
    match m.kind {
        MetricKind::Trace => w.trace(),
        MetricKind::Logdet => {
            if w.is_empty() {
                return 0.0;
            }
            if m.epsilon > 0.0 {
                let n = w.nrows();
                let shifted = w + DMatrix::<f64>::identity(n, n) * m.epsilon;
                if let Some(chol) = shifted.cholesky() {
                    let l = chol.l_dirty();
                    return 2.0 * (0..n).map(|i| l[(i, i)].ln()).sum::<f64>();
                }
            }
            let eig = SymmetricEigen::new(w.clone_owned()).eigenvalues;
            let mut total = 0.0;
            for &lambda in eig.iter() {
                let shifted = lambda + m.epsilon;
                if shifted <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                total += shifted.ln();
            }
            total
        }
        MetricKind::Rank => {
            if w.is_empty() {
                return 0.0;
            }
            let eig = SymmetricEigen::new(w.clone_owned()).eigenvalues;
            let max = eig.max().max(f64::EPSILON);
            let threshold = m.rank_rel_tol * max;
            eig.iter().filter(|&&l| l > threshold).count() as f64
        }
    }
}

/// A set function over the ground set `{0, …, n-1}`.
///
/// Sets are passed as strictly increasing index slices.
pub trait SetFunction: Sync {
    fn ground_size(&self) -> usize;

    fn value(&self, set: &[usize]) -> f64;

    /// `f(set ∪ {elem}) − f(set)` for `elem ∉ set`.
    fn gain(&self, set: &[usize], elem: usize) -> f64 {
        let with = with_element(set, elem);
        self.value(&with) - self.value(set)
    }

    /// Number of distinct evaluations performed so far (cache misses).
    fn evaluations(&self) -> u64 {
        0
    }
}

impl<T: SetFunction + ?Sized> SetFunction for &T {
    fn ground_size(&self) -> usize {
        (**self).ground_size()
    }
    fn value(&self, set: &[usize]) -> f64 {
        (**self).value(set)
    }
    fn gain(&self, set: &[usize], elem: usize) -> f64 {
        (**self).gain(set, elem)
    }
    fn evaluations(&self) -> u64 {
        (**self).evaluations()
    }
}

/// Sorted copy of `set` with `elem` inserted.
pub fn with_element(set: &[usize], elem: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(set.len() + 1);
    let pos = set.partition_point(|&x| x < elem);
    out.extend_from_slice(&set[..pos]);
    if set.get(pos) != Some(&elem) {
        out.push(elem);
    }
    out.extend_from_slice(&set[pos..]);
    out
}

/// Sorted copy of `set` with `elem` removed.
pub fn without_element(set: &[usize], elem: usize) -> Vec<usize> {
    set.iter().copied().filter(|&x| x != elem).collect()
}

/// Canonical bitset encoding of a subset.
pub type SubsetKey = Box<[u64]>;

pub fn subset_key(set: &[usize], ground: usize) -> SubsetKey {
    let mut words = vec![0u64; ground.div_ceil(64).max(1)];
    for &i in set {
        words[i / 64] |= 1 << (i % 64);
    }
    words.into_boxed_slice()
}

/// Concurrent memo table with a miss counter.
#[derive(Debug, Default)]
pub struct Memo {
    table: DashMap<SubsetKey, f64>,
    misses: AtomicU64,
}

impl Memo {
    pub fn new() -> Self {
        Self::default()
    }

    /// Looks up `set`, computing and storing it on a miss. Each key is computed at most once.
    pub fn get_or_compute(&self, set: &[usize], ground: usize, compute: impl FnOnce() -> f64) -> f64 {
        let key = subset_key(set, ground);
        if let Some(v) = self.table.get(&key) {
            return *v;
        }
        *self.table.entry(key).or_insert_with(|| {
            self.misses.fetch_add(1, Ordering::Relaxed);
            compute()
        })
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

/// `f(R) = m(Σ_{v∈R} W(v)) − m(0)`, memoized.
pub struct GramianSetFunction<'a> {
    contribs: &'a ContributionGramians,
    metric: Metric,
    offset: f64,
    memo: Memo,
}

impl<'a> GramianSetFunction<'a> {
    pub fn new(contribs: &'a ContributionGramians, metric: Metric) -> Self {
        let empty = metric.empty_value(contribs.n_x());
        Self {
            contribs,
            metric,
            // Without a finite f(∅) (logdet, ε = 0) values are reported unshifted.
            offset: if empty.is_finite() { empty } else { 0.0 },
            memo: Memo::new(),
        }
    }

    pub fn metric(&self) -> &Metric {
        &self.metric
    }

    pub fn contribs(&self) -> &'a ContributionGramians {
        self.contribs
    }

    /// The normalization offset subtracted from raw metric values.
    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Unshifted metric value of the selection's Gramian.
    pub fn raw_value(&self, set: &[usize]) -> f64 {
        self.value(set) + self.offset
    }

    fn compute(&self, set: &[usize]) -> f64 {
        if set.is_empty() {
            return 0.0;
        }
        evaluate(&self.contribs.sum_of(set), &self.metric) - self.offset
    }
}

impl SetFunction for GramianSetFunction<'_> {
    fn ground_size(&self) -> usize {
        self.contribs.len()
    }

    fn value(&self, set: &[usize]) -> f64 {
        self.memo
            .get_or_compute(set, self.contribs.len(), || self.compute(set))
    }

    fn evaluations(&self) -> u64 {
        self.memo.misses()
    }
}

pub fn make_set_function(contribs: &ContributionGramians, m: Metric) -> GramianSetFunction<'_> {
    GramianSetFunction::new(contribs, m)
}

/// Memoized set function backed by a closure; used for synthetic objectives.
pub struct FnSetFunction<F> {
    ground: usize,
    eval: F,
    memo: Memo,
}

impl<F: Fn(&[usize]) -> f64 + Sync> FnSetFunction<F> {
    pub fn new(ground: usize, eval: F) -> Self {
        Self {
            ground,
            eval,
            memo: Memo::new(),
        }
    }
}

impl<F: Fn(&[usize]) -> f64 + Sync + Send> SetFunction for FnSetFunction<F> {
    fn ground_size(&self) -> usize {
        self.ground
    }

    fn value(&self, set: &[usize]) -> f64 {
        self.memo.get_or_compute(set, self.ground, || (self.eval)(set))
    }

    fn evaluations(&self) -> u64 {
        self.memo.misses()
    }
}
