//! Submodular maximization under matroid constraints: eager and lazy greedy, the sampled
//! multilinear extension and its gradient, continuous greedy, and rounding.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matroids::{Independence, PartitionMatroid};
use crate::measures::{without_element, SetFunction};
use crate::seed;

/// Relative tolerance under which two marginal gains are considered tied.
pub const TIE_REL_TOL: f64 = 1e-10;

/// Coordinates within this distance of 0 or 1 are treated as integral.
pub const INTEGRAL_TOL: f64 = 1e-12;

fn tie_tol(best: f64) -> f64 {
    TIE_REL_TOL * best.abs().max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rounding {
    Randomized,
    Pipage,
}

impl std::str::FromStr for Rounding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "randomized" => Ok(Rounding::Randomized),
            "pipage" => Ok(Rounding::Pipage),
            other => Err(Error::invalid("rounding", format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Greedy,
    Continuous,
}

impl std::str::FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(Solver::Greedy),
            "continuous" => Ok(Solver::Continuous),
            other => Err(Error::invalid("solver", format!("unknown solver `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Continuous-greedy step count `T`.
    pub steps: usize,
    /// Monte Carlo samples per estimate.
    pub samples: usize,
    pub seed: u64,
    pub rounding: Rounding,
    pub lazy: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            steps: 10,
            samples: 100,
            seed: 0,
            rounding: Rounding::Pipage,
            lazy: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::invalid("steps", "must be at least 1"));
        }
        if self.samples == 0 {
            return Err(Error::invalid("samples", "must be at least 1"));
        }
        Ok(())
    }
}

/// Per-iteration record of a solver run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveTrace {
    /// Objective after each iteration (estimated `F(x)` for continuous greedy).
    pub objective: Vec<f64>,
    /// Marginal gain of the chosen element, or the total gradient weight of the chosen
    /// direction for continuous greedy.
    pub gains: Vec<f64>,
    /// Cumulative distinct set-function evaluations after each iteration.
    pub evaluations: Vec<u64>,
    #[serde(skip)]
    pub elapsed: Duration,
}

impl SolveTrace {
    fn record(&mut self, objective: f64, gain: f64, evaluations: u64) {
        self.objective.push(objective);
        self.gains.push(gain);
        self.evaluations.push(evaluations);
    }

    pub fn iterations(&self) -> usize {
        self.objective.len()
    }
}

/// Fractional point in `[0,1]^n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FractionalPoint {
    pub x: Vec<f64>,
    pub steps: usize,
}

impl FractionalPoint {
    pub fn zeros(n: usize) -> Self {
        Self {
            x: vec![0.0; n],
            steps: 0,
        }
    }

    pub fn from_vec(x: Vec<f64>) -> Result<Self> {
        if let Some(bad) = x.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid("x", format!("coordinate {bad} outside [0, 1]")));
        }
        Ok(Self { x, steps: 0 })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Elements whose coordinate is 1.
    pub fn support(&self) -> Vec<usize> {
        (0..self.x.len())
            .filter(|&i| self.x[i] >= 1.0 - INTEGRAL_TOL)
            .collect()
    }

    pub fn is_integral(&self) -> bool {
        self.x
            .iter()
            .all(|&v| v <= INTEGRAL_TOL || v >= 1.0 - INTEGRAL_TOL)
    }

    /// Whether every block's coordinate sum is within its capacity.
    pub fn is_feasible(&self, m: &PartitionMatroid) -> bool {
        m.blocks()
            .iter()
            .zip(m.capacities())
            .all(|(block, &cap)| block.iter().map(|&e| self.x[e]).sum::<f64>() <= cap as f64 + 1e-9)
    }
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
}

fn mean_and_stderr(values: impl ExactSizeIterator<Item = f64> + Clone) -> Estimate {
    let n = values.len() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = if n > 1.0 {
        values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Estimate {
        mean,
        std_error: (var / n).sqrt(),
    }
}

/// Random set for sample `index`: element `s` is included iff its uniform draw is below
/// `x[s]`. One uniform is drawn per element regardless of `x`, so sets for different points
/// share randomness.
fn sample_set(x: &[f64], seed: u64, index: usize) -> Vec<usize> {
    let mut rng = seed::rng(seed::derive(seed, index as u64));
    (0..x.len())
        .filter(|&s| {
            let u: f64 = rng.gen();
            u < x[s]
        })
        .collect()
}

/// Monte Carlo estimate of the multilinear extension `F(x) = E[f(S_x)]`.
pub fn multilinear_estimate<F: SetFunction + ?Sized>(
    f: &F,
    x: &FractionalPoint,
    samples: usize,
    seed: u64,
) -> Estimate {
    let values: Vec<f64> = (0..samples.max(1))
        .into_par_iter()
        .map(|i| f.value(&sample_set(&x.x, seed, i)))
        .collect();
    mean_and_stderr(values.iter().copied())
}

/// Monte Carlo estimate of `∂F/∂x_s = E[f(S_x ∪ {s}) − f(S_x \ {s})]` for every `s`, one
/// random set per sample shared across coordinates.
pub fn gradient_estimate<F: SetFunction + ?Sized>(
    f: &F,
    x: &FractionalPoint,
    samples: usize,
    seed: u64,
) -> GradientEstimate {
    let n = x.len();
    let rows: Vec<Vec<f64>> = (0..samples.max(1))
        .into_par_iter()
        .map(|i| {
            let set = sample_set(&x.x, seed, i);
            (0..n)
                .map(|s| match set.binary_search(&s) {
                    Ok(_) => f.gain(&without_element(&set, s), s),
                    Err(_) => f.gain(&set, s),
                })
                .collect()
        })
        .collect();
    let mut mean = Vec::with_capacity(n);
    let mut std_error = Vec::with_capacity(n);
    for s in 0..n {
        let est = mean_and_stderr(rows.iter().map(|r| r[s]));
        mean.push(est.mean);
        std_error.push(est.std_error);
    }
    GradientEstimate { mean, std_error }
}

/// Greedy maximization; ties go to the lowest element index.
pub fn greedy<F, M>(f: &F, m: &M, lazy: bool) -> (Vec<usize>, SolveTrace)
where
    F: SetFunction + ?Sized,
    M: Independence + ?Sized,
{
    greedy_with_tiebreak(f, m, lazy, &|_, _| 0)
}

/// Greedy maximization with a caller-defined tie rule: among elements whose gains are tied
/// with the best (within [`TIE_REL_TOL`]), the one minimizing `(tiebreak(set, e), e)` wins.
///
/// Stops when no feasible element has positive gain. With `lazy`, stale gains are kept as
/// upper bounds in a max-heap and only elements that might still be tied with the best are
/// re-evaluated; for submodular `f` this selects the same set as the eager pass.
pub fn greedy_with_tiebreak<F, M>(
    f: &F,
    m: &M,
    lazy: bool,
    tiebreak: &(dyn Fn(&[usize], usize) -> u64 + Sync),
) -> (Vec<usize>, SolveTrace)
where
    F: SetFunction + ?Sized,
    M: Independence + ?Sized,
{
    let start = Instant::now();
    let mut trace = if lazy {
        lazy_greedy(f, m, tiebreak)
    } else {
        eager_greedy(f, m, tiebreak)
    };
    trace.1.elapsed = start.elapsed();
    trace
}

fn pick_tied(
    candidates: &[(usize, f64)],
    set: &[usize],
    tiebreak: &(dyn Fn(&[usize], usize) -> u64 + Sync),
) -> Option<(usize, f64)> {
    let best = candidates
        .iter()
        .map(|&(_, g)| g)
        .filter(|g| !g.is_nan())
        .fold(f64::NEG_INFINITY, f64::max);
    if !(best > 0.0) {
        return None;
    }
    let tol = tie_tol(best);
    candidates
        .iter()
        .filter(|&&(_, g)| g >= best - tol)
        .min_by_key(|&&(e, _)| (tiebreak(set, e), e))
        .copied()
}

fn eager_greedy<F, M>(
    f: &F,
    m: &M,
    tiebreak: &(dyn Fn(&[usize], usize) -> u64 + Sync),
) -> (Vec<usize>, SolveTrace)
where
    F: SetFunction + ?Sized,
    M: Independence + ?Sized,
{
    let n = f.ground_size();
    let mut set: Vec<usize> = Vec::new();
    let mut trace = SolveTrace::default();
    let mut value = f.value(&set);
    loop {
        let candidates: Vec<(usize, f64)> = (0..n)
            .into_par_iter()
            .filter(|&e| m.can_add(&set, e))
            .map(|e| (e, f.gain(&set, e)))
            .collect();
        let Some((e, gain)) = pick_tied(&candidates, &set, tiebreak) else {
            break;
        };
        let pos = set.partition_point(|&x| x < e);
        set.insert(pos, e);
        value += gain;
        trace.record(value, gain, f.evaluations());
    }
    (set, trace)
}

#[derive(Debug, Clone, Copy)]
struct Bound {
    gain: f64,
    elem: usize,
}

impl PartialEq for Bound {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Bound {}

impl PartialOrd for Bound {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Bound {
    fn cmp(&self, other: &Self) -> Ordering {
        self.gain
            .total_cmp(&other.gain)
            .then_with(|| other.elem.cmp(&self.elem))
    }
}

fn lazy_greedy<F, M>(
    f: &F,
    m: &M,
    tiebreak: &(dyn Fn(&[usize], usize) -> u64 + Sync),
) -> (Vec<usize>, SolveTrace)
where
    F: SetFunction + ?Sized,
    M: Independence + ?Sized,
{
    let n = f.ground_size();
    let mut set: Vec<usize> = Vec::new();
    let mut trace = SolveTrace::default();
    let mut value = f.value(&set);

    let initial: Vec<Bound> = (0..n)
        .into_par_iter()
        .filter(|&e| m.can_add(&set, e))
        .map(|e| Bound {
            gain: f.gain(&set, e),
            elem: e,
        })
        .collect();
    // Gains evaluated against the current set; everything left in the heap is stale.
    let mut fresh: Vec<(usize, f64)> = initial.iter().map(|b| (b.elem, b.gain)).collect();
    let mut heap: BinaryHeap<Bound> = BinaryHeap::new();

    loop {
        // Pull stale entries until none could tie with the best fresh gain.
        loop {
            let best = fresh.iter().map(|&(_, g)| g).fold(f64::NEG_INFINITY, f64::max);
            let Some(top) = heap.peek().copied() else {
                break;
            };
            if !fresh.is_empty() && top.gain.is_finite() && best.is_finite() && top.gain < best - 2.0 * tie_tol(best) {
                break;
            }
            heap.pop();
            if !m.can_add(&set, top.elem) {
                continue;
            }
            fresh.push((top.elem, f.gain(&set, top.elem)));
        }

        let chosen = pick_tied(&fresh, &set, tiebreak);
        let Some((e, gain)) = chosen else {
            break;
        };
        let pos = set.partition_point(|&x| x < e);
        set.insert(pos, e);
        value += gain;
        trace.record(value, gain, f.evaluations());

        for (elem, g) in fresh.drain(..) {
            if elem != e {
                heap.push(Bound { gain: g, elem });
            }
        }
        // Drop entries that can never be added again.
        if heap.iter().any(|b| !m.can_add(&set, b.elem)) {
            heap.retain(|b| m.can_add(&set, b.elem));
        }
    }
    (set, trace)
}

/// Continuous greedy over a partition matroid: `T` steps of size `1/T` along the
/// max-weight independent set of the sampled gradient (negative entries never selected),
/// clipping coordinates at 1.
pub fn continuous_greedy<F: SetFunction + ?Sized>(
    f: &F,
    m: &PartitionMatroid,
    cfg: &SolverConfig,
) -> Result<(FractionalPoint, SolveTrace)> {
    cfg.validate()?;
    if f.ground_size() != m.ground_size() {
        return Err(Error::Dimension {
            field: "matroid ground set".into(),
            expected: f.ground_size().to_string(),
            found: m.ground_size().to_string(),
        });
    }
    let start = Instant::now();
    let step = 1.0 / cfg.steps as f64;
    let mut x = FractionalPoint::zeros(f.ground_size());
    let mut trace = SolveTrace::default();
    for t in 0..cfg.steps {
        let grad = gradient_estimate(f, &x, cfg.samples, seed::derive(cfg.seed, 2 * t as u64));
        let direction = m.max_weight_independent(&grad.mean);
        for &s in &direction {
            x.x[s] = (x.x[s] + step).min(1.0);
        }
        x.steps += 1;
        let weight: f64 = direction.iter().map(|&s| grad.mean[s]).sum();
        let value = multilinear_estimate(f, &x, cfg.samples, seed::derive(cfg.seed, 2 * t as u64 + 1));
        trace.record(value.mean, weight, f.evaluations());
    }
    trace.elapsed = start.elapsed();
    Ok((x, trace))
}

/// Rounds a fractional point to an independent set of `m`.
///
/// `Randomized` draws one element per block with probability equal to its coordinate
/// (none with the leftover mass) and needs every capacity to be at most 1. `Pipage` moves
/// mass between the two largest fractional coordinates of a block towards whichever
/// endpoint has the larger estimated extension, then settles any lone fractional
/// coordinate the same way.
pub fn round<F: SetFunction + ?Sized>(
    x: &FractionalPoint,
    m: &PartitionMatroid,
    method: Rounding,
    f: &F,
    samples: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    if x.len() != m.ground_size() {
        return Err(Error::Dimension {
            field: "x".into(),
            expected: m.ground_size().to_string(),
            found: x.len().to_string(),
        });
    }
    match method {
        Rounding::Randomized => randomized_round(x, m, seed),
        Rounding::Pipage => Ok(pipage_round(x, m, f, samples.max(1), seed)),
    }
}

fn randomized_round(x: &FractionalPoint, m: &PartitionMatroid, seed: u64) -> Result<Vec<usize>> {
    if let Some(cap) = m.capacities().iter().find(|&&c| c > 1) {
        return Err(Error::invalid(
            "rounding",
            format!("randomized rounding needs capacities <= 1, found {cap}"),
        ));
    }
    let mut rng = seed::rng(seed);
    let mut out = Vec::new();
    for (block, &cap) in m.blocks().iter().zip(m.capacities()) {
        let u: f64 = rng.gen();
        if cap == 0 {
            continue;
        }
        let mut acc = 0.0;
        for &e in block {
            acc += x.x[e];
            if u < acc {
                out.push(e);
                break;
            }
        }
    }
    out.sort_unstable();
    Ok(out)
}

/// Average of `f` over the `2^k` inclusion patterns of `fixed`, with the remaining
/// coordinates sampled from `x`. Pattern bit `j` is the inclusion of `fixed[j]`.
fn conditional_means<F: SetFunction + ?Sized>(
    f: &F,
    x: &[f64],
    fixed: &[usize],
    samples: usize,
    seed: u64,
) -> Vec<f64> {
    let mut base = x.to_vec();
    for &e in fixed {
        base[e] = 0.0;
    }
    let patterns = 1usize << fixed.len();
    let rows: Vec<Vec<f64>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let others = sample_set(&base, seed, i);
            (0..patterns)
                .map(|p| {
                    let mut set = others.clone();
                    for (j, &e) in fixed.iter().enumerate() {
                        if p >> j & 1 == 1 {
                            set.push(e);
                        }
                    }
                    set.sort_unstable();
                    f.value(&set)
                })
                .collect()
        })
        .collect();
    (0..patterns)
        .map(|p| rows.iter().map(|r| r[p]).sum::<f64>() / samples as f64)
        .collect()
}

fn pipage_round<F: SetFunction + ?Sized>(
    x: &FractionalPoint,
    m: &PartitionMatroid,
    f: &F,
    samples: usize,
    seed: u64,
) -> Vec<usize> {
    let mut y: Vec<f64> = x
        .x
        .iter()
        .map(|&v| snap(v))
        .collect();
    let mut counter = 0u64;
    for block in m.blocks() {
        loop {
            let mut fractional: Vec<usize> = block
                .iter()
                .copied()
                .filter(|&e| y[e] > 0.0 && y[e] < 1.0)
                .collect();
            if fractional.is_empty() {
                break;
            }
            let stream = seed::derive(seed, counter);
            counter += 1;
            if fractional.len() == 1 {
                let a = fractional[0];
                let h = conditional_means(f, &y, &[a], samples, stream);
                let used: usize = block.iter().filter(|&&e| y[e] >= 1.0).count();
                let cap = m.capacities()[m.block_of(a)];
                y[a] = if used < cap && h[1] >= h[0] { 1.0 } else { 0.0 };
                continue;
            }
            fractional.sort_by(|&p, &q| y[q].total_cmp(&y[p]).then(p.cmp(&q)));
            let (a, b) = (fractional[0], fractional[1]);
            let h = conditional_means(f, &y, &[a, b], samples, stream);
            let value = |ya: f64, yb: f64| {
                (1.0 - ya) * (1.0 - yb) * h[0]
                    + ya * (1.0 - yb) * h[1]
                    + (1.0 - ya) * yb * h[2]
                    + ya * yb * h[3]
            };
            let up = (1.0 - y[a]).min(y[b]);
            let down = y[a].min(1.0 - y[b]);
            let toward_a = (y[a] + up, y[b] - up);
            let toward_b = (y[a] - down, y[b] + down);
            let (na, nb) = if value(toward_a.0, toward_a.1) >= value(toward_b.0, toward_b.1) {
                toward_a
            } else {
                toward_b
            };
            y[a] = snap(na);
            y[b] = snap(nb);
        }
    }
    (0..y.len()).filter(|&e| y[e] >= 1.0).collect()
}

fn snap(v: f64) -> f64 {
    if v <= INTEGRAL_TOL {
        0.0
    } else if v >= 1.0 - INTEGRAL_TOL {
        1.0
    } else {
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::FnSetFunction;

    fn modular(weights: Vec<f64>) -> FnSetFunction<impl Fn(&[usize]) -> f64 + Sync + Send> {
        let n = weights.len();
        FnSetFunction::new(n, move |s: &[usize]| s.iter().map(|&i| weights[i]).sum())
    }

    fn coverage(sets: Vec<Vec<u32>>) -> FnSetFunction<impl Fn(&[usize]) -> f64 + Sync + Send> {
        let n = sets.len();
        FnSetFunction::new(n, move |s: &[usize]| {
            let mut covered: Vec<u32> = s.iter().flat_map(|&i| sets[i].iter().copied()).collect();
            covered.sort_unstable();
            covered.dedup();
            covered.len() as f64
        })
    }

    #[test]
    fn greedy_modular_uniform() {
        let f = modular(vec![3.0, 1.0, 2.0]);
        for lazy in [false, true] {
            let (set, trace) = greedy(&f, &PartitionMatroid::uniform(3, 2), lazy);
            assert_eq!(set, vec![0, 2]);
            assert_eq!(*trace.objective.last().unwrap(), 5.0);
        }
    }

    #[test]
    fn greedy_modular_partition() {
        let f = modular(vec![3.0, 5.0, 2.0]);
        let m = PartitionMatroid::over_states(3, vec![vec![0, 1], vec![2]], vec![1, 1]).unwrap();
        for lazy in [false, true] {
            assert_eq!(greedy(&f, &m, lazy).0, vec![1, 2]);
        }
    }

    #[test]
    fn greedy_coverage_pair() {
        let f = coverage(vec![vec![1, 2, 3], vec![3, 4], vec![4, 5]]);
        let m = PartitionMatroid::uniform(3, 2);
        let opt = [[0, 1], [0, 2], [1, 2]]
            .iter()
            .map(|p| f.value(p))
            .fold(0.0, f64::max);
        assert_eq!(opt, 5.0);
        for lazy in [false, true] {
            let (set, _) = greedy(&f, &m, lazy);
            assert_eq!(set, vec![0, 2]);
            assert!(f.value(&set) >= 0.5 * opt);
        }
    }

    #[test]
    fn greedy_ties_go_to_lowest_index() {
        let f = modular(vec![1.0, 1.0, 1.0, 1.0]);
        let (set, _) = greedy(&f, &PartitionMatroid::uniform(4, 2), true);
        assert_eq!(set, vec![0, 1]);
        let (set, _) = greedy_with_tiebreak(&f, &PartitionMatroid::uniform(4, 2), false, &|_, e| {
            (3 - e) as u64
        });
        assert_eq!(set, vec![2, 3]);
    }

    #[test]
    fn greedy_stops_without_positive_gain() {
        let f = modular(vec![0.0, -1.0, 2.0]);
        let (set, _) = greedy(&f, &PartitionMatroid::uniform(3, 3), false);
        assert_eq!(set, vec![2]);
    }

    #[test]
    fn multilinear_cardinality() {
        let f = FnSetFunction::new(2, |s: &[usize]| s.len() as f64);
        let x = FractionalPoint::from_vec(vec![0.5, 0.5]).unwrap();
        let est = multilinear_estimate(&f, &x, 400, 3);
        assert!((est.mean - 1.0).abs() <= 3.0 * est.std_error);
        assert_eq!(est, multilinear_estimate(&f, &x, 400, 3));
    }

    #[test]
    fn multilinear_integral_point_is_exact() {
        let f = coverage(vec![vec![1, 2], vec![2, 3], vec![4]]);
        let x = FractionalPoint::from_vec(vec![1.0, 0.0, 1.0]).unwrap();
        let est = multilinear_estimate(&f, &x, 50, 9);
        assert_eq!(est.mean, 3.0);
        assert_eq!(est.std_error, 0.0);
    }

    #[test]
    fn gradient_of_modular_is_exact() {
        let w = vec![0.7, 2.5, 1.25];
        let f = modular(w.clone());
        let x = FractionalPoint::from_vec(vec![0.2, 0.9, 0.4]).unwrap();
        let g = gradient_estimate(&f, &x, 64, 5);
        for s in 0..3 {
            assert!((g.mean[s] - w[s]).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_of_overlap_at_corners() {
        let f = coverage(vec![vec![1], vec![1]]);
        let g = gradient_estimate(&f, &FractionalPoint::zeros(2), 32, 1);
        assert_eq!(g.mean, vec![1.0, 1.0]);
        let x = FractionalPoint::from_vec(vec![1.0, 0.0]).unwrap();
        let g = gradient_estimate(&f, &x, 32, 1);
        assert!(g.mean[1].abs() <= 3.0 * g.std_error[1] + 1e-15);
    }

    #[test]
    fn continuous_greedy_modular_is_integral() {
        let f = modular(vec![3.0, 5.0, 2.0, 0.5]);
        let m = PartitionMatroid::over_states(4, vec![vec![0, 1], vec![2, 3]], vec![1, 1]).unwrap();
        let cfg = SolverConfig {
            samples: 20,
            ..Default::default()
        };
        let (x, trace) = continuous_greedy(&f, &m, &cfg).unwrap();
        assert!(x.is_integral());
        assert_eq!(trace.iterations(), 10);
        for method in [Rounding::Randomized, Rounding::Pipage] {
            let set = round(&x, &m, method, &f, 20, 1).unwrap();
            assert_eq!(set, greedy(&f, &m, false).0);
        }
    }

    #[test]
    fn randomized_rounding_frequencies() {
        let m = PartitionMatroid::over_states(2, vec![vec![0, 1]], vec![1]).unwrap();
        let f = modular(vec![1.0, 1.0]);
        let x = FractionalPoint::from_vec(vec![0.3, 0.7]).unwrap();
        let draws = 10_000;
        let mut count_a = 0;
        for i in 0..draws {
            let set = round(&x, &m, Rounding::Randomized, &f, 1, i).unwrap();
            assert_eq!(set.len(), 1);
            if set == [0] {
                count_a += 1;
            }
        }
        let freq = count_a as f64 / draws as f64;
        assert!((freq - 0.3).abs() <= 0.02, "frequency {freq}");
    }

    #[test]
    fn randomized_rounding_rejects_large_capacity() {
        let m = PartitionMatroid::uniform(3, 2);
        let f = modular(vec![1.0; 3]);
        let x = FractionalPoint::from_vec(vec![0.5; 3]).unwrap();
        assert!(round(&x, &m, Rounding::Randomized, &f, 1, 0).is_err());
    }

    #[test]
    fn pipage_does_not_lose_value_on_modular() {
        let w = vec![1.0, 4.0, 2.5, 0.5, 3.0];
        let f = modular(w.clone());
        let m = PartitionMatroid::over_states(5, vec![vec![0, 1, 2], vec![3, 4]], vec![2, 1]).unwrap();
        let x = FractionalPoint::from_vec(vec![0.6, 0.7, 0.4, 0.5, 0.3]).unwrap();
        let exact: f64 = x.x.iter().zip(&w).map(|(a, b)| a * b).sum();
        let set = round(&x, &m, Rounding::Pipage, &f, 16, 3).unwrap();
        assert!(m.is_independent(&set));
        assert!(f.value(&set) >= exact - 1e-9);
    }

    #[test]
    fn integral_points_round_to_support() {
        let f = modular(vec![1.0, 2.0, 3.0]);
        let m = PartitionMatroid::over_states(3, vec![vec![0, 1], vec![2]], vec![1, 1]).unwrap();
        let x = FractionalPoint::from_vec(vec![0.0, 1.0, 1.0]).unwrap();
        for method in [Rounding::Randomized, Rounding::Pipage] {
            assert_eq!(round(&x, &m, method, &f, 8, 0).unwrap(), vec![1, 2]);
        }
    }

    #[test]
    fn config_validation() {
        let cfg = SolverConfig {
            steps: 0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        assert_eq!("pipage".parse::<Rounding>().unwrap(), Rounding::Pipage);
        assert_eq!("continuous".parse::<Solver>().unwrap(), Solver::Continuous);
    }
}
