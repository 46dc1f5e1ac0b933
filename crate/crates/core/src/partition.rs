//! Partitioning the measurable states into `κ` subsystems.
//!
//! A partition is encoded as a subset of the extended ground set `X = C × V`: choosing
//! `(i, v)` assigns state `v` to subsystem `i`. The partition matroid with one capacity-1
//! block per state keeps assignments exclusive, and the objective
//! `f(S) = Σ_i f_i({v | (i, v) ∈ S})` is a sum of per-subsystem observability measures.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matroids::PartitionMatroid;
use crate::maximize::{self, continuous_greedy, greedy_with_tiebreak, SolveTrace, Solver, SolverConfig};
use crate::measures::{GramianSetFunction, Metric, SetFunction};
use crate::seed;
use crate::sysmodel::ContributionGramians;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    P2Solver,
    Spectral,
    Manual,
}

/// `κ` disjoint blocks covering the states `0..n`. Blocks are sorted; empty blocks are
/// allowed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub kappa: usize,
    pub blocks: Vec<Vec<usize>>,
    pub provenance: Provenance,
}

/// On-disk partition: `{"blocks": [[indices]]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionFile {
    pub blocks: Vec<Vec<usize>>,
}

impl Partition {
    pub fn new(blocks: Vec<Vec<usize>>, n: usize, provenance: Provenance) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::invalid("blocks", "a partition needs at least one block"));
        }
        let mut seen = vec![false; n];
        let blocks: Vec<Vec<usize>> = blocks
            .into_iter()
            .map(|mut b| {
                b.sort_unstable();
                b
            })
            .collect();
        for &v in blocks.iter().flatten() {
            if v >= n {
                return Err(Error::IndexOutOfRange {
                    what: "state set",
                    index: v,
                    size: n,
                });
            }
            if seen[v] {
                return Err(Error::invalid("blocks", format!("state {v} appears in two blocks")));
            }
            seen[v] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::invalid("blocks", format!("state {missing} is not assigned")));
        }
        Ok(Self {
            kappa: blocks.len(),
            blocks,
            provenance,
        })
    }

    /// Single block holding every state.
    pub fn whole(n: usize) -> Self {
        Self {
            kappa: 1,
            blocks: vec![(0..n).collect()],
            provenance: Provenance::Manual,
        }
    }

    pub fn from_file(file: PartitionFile, n: usize) -> Result<Self> {
        Self::new(file.blocks, n, Provenance::Manual)
    }

    pub fn to_file(&self) -> PartitionFile {
        PartitionFile {
            blocks: self.blocks.clone(),
        }
    }

    /// Number of states covered.
    pub fn n(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }

    /// Block index of every state.
    pub fn labels(&self) -> Vec<usize> {
        let mut labels = vec![0; self.n()];
        for (i, block) in self.blocks.iter().enumerate() {
            for &v in block {
                labels[v] = i;
            }
        }
        labels
    }

    /// Builds a partition from a label per state.
    pub fn from_labels(labels: &[usize], kappa: usize, provenance: Provenance) -> Result<Self> {
        let mut blocks = vec![Vec::new(); kappa];
        for (v, &i) in labels.iter().enumerate() {
            if i >= kappa {
                return Err(Error::IndexOutOfRange {
                    what: "block labels",
                    index: i,
                    size: kappa,
                });
            }
            blocks[i].push(v);
        }
        Self::new(blocks, labels.len(), provenance)
    }
}

/// Index of `(block, state)` in the extended ground set.
pub fn assignment_index(block: usize, state: usize, kappa: usize) -> usize {
    state * kappa + block
}

/// Subset of `X` encoding `partition`.
pub fn encode_p1(partition: &Partition) -> Vec<usize> {
    let mut out: Vec<usize> = partition
        .blocks
        .iter()
        .enumerate()
        .flat_map(|(i, block)| block.iter().map(move |&v| assignment_index(i, v, partition.kappa)))
        .collect();
    out.sort_unstable();
    out
}

/// `(block, state)` pairs of the encoding, ordered by state.
pub fn encode_pairs(partition: &Partition) -> Vec<(usize, usize)> {
    encode_p1(partition)
        .into_iter()
        .map(|e| (e % partition.kappa, e / partition.kappa))
        .collect()
}

/// Inverse of [`encode_p1`]; `set` must pick exactly one copy of every state.
pub fn decode_p2(set: &[usize], n_y: usize, kappa: usize) -> Result<Partition> {
    let labels = assignment_labels(set, n_y, kappa)?;
    if let Some(v) = labels.iter().position(Option::is_none) {
        return Err(Error::Infeasible(format!("state {v} is not assigned to any subsystem")));
    }
    let labels: Vec<usize> = labels.into_iter().map(Option::unwrap).collect();
    Partition::from_labels(&labels, kappa, Provenance::P2Solver)
}

/// Subsystem chosen for each state by `set`, if any. Fails when a state is chosen twice.
fn assignment_labels(set: &[usize], n_y: usize, kappa: usize) -> Result<Vec<Option<usize>>> {
    let mut labels = vec![None; n_y];
    for &e in set {
        let (i, v) = (e % kappa, e / kappa);
        if v >= n_y {
            return Err(Error::IndexOutOfRange {
                what: "extended ground set",
                index: e,
                size: n_y * kappa,
            });
        }
        if labels[v].is_some() {
            return Err(Error::Infeasible(format!("state {v} is assigned to two subsystems")));
        }
        labels[v] = Some(i);
    }
    Ok(labels)
}

/// `f(S) = Σ_i g(S_i)` over the extended ground set, where `g` is the normalized
/// observability measure on states. A single memo of `g` serves every subsystem.
pub struct P2Objective<'a> {
    g: GramianSetFunction<'a>,
    kappa: usize,
}

impl<'a> P2Objective<'a> {
    pub fn new(contribs: &'a ContributionGramians, kappa: usize, metric: Metric) -> Self {
        Self {
            g: GramianSetFunction::new(contribs, metric),
            kappa,
        }
    }

    pub fn kappa(&self) -> usize {
        self.kappa
    }

    pub fn n_y(&self) -> usize {
        self.g.ground_size()
    }

    pub fn subsystem_function(&self) -> &GramianSetFunction<'a> {
        &self.g
    }

    /// States assigned to each subsystem by `set` (duplicates across subsystems allowed).
    pub fn blocks_of(&self, set: &[usize]) -> Vec<Vec<usize>> {
        let mut blocks = vec![Vec::new(); self.kappa];
        for &e in set {
            blocks[e % self.kappa].push(e / self.kappa);
        }
        blocks
    }

    fn block_of(&self, set: &[usize], block: usize) -> Vec<usize> {
        set.iter()
            .filter(|&&e| e % self.kappa == block)
            .map(|&e| e / self.kappa)
            .collect()
    }
}

impl SetFunction for P2Objective<'_> {
    fn ground_size(&self) -> usize {
        self.g.ground_size() * self.kappa
    }

    fn value(&self, set: &[usize]) -> f64 {
        self.blocks_of(set).iter().map(|b| self.g.value(b)).sum()
    }

    fn gain(&self, set: &[usize], elem: usize) -> f64 {
        let block = self.block_of(set, elem % self.kappa);
        self.g.gain(&block, elem / self.kappa)
    }

    fn evaluations(&self) -> u64 {
        self.g.evaluations()
    }
}

pub fn build_p2_objective(contribs: &ContributionGramians, kappa: usize, m: Metric) -> P2Objective<'_> {
    P2Objective::new(contribs, kappa, m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionReport {
    pub kappa: usize,
    pub metric: Metric,
    pub solver: Solver,
    /// Normalized measure `f_i(S_i)` of every block.
    pub block_values: Vec<f64>,
    /// Sum of `block_values`.
    pub total: f64,
    /// Sum of unnormalized block measures.
    pub raw_total: f64,
    /// States placed by the completion pass after rounding.
    pub completed_states: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modularity: Option<f64>,
    pub evaluations: u64,
    pub trace: SolveTrace,
    #[serde(skip)]
    pub elapsed: Duration,
}

/// Per-block values, total, and raw total of a partition under `metric`.
pub fn evaluate_partition(
    contribs: &ContributionGramians,
    partition: &Partition,
    metric: Metric,
) -> (Vec<f64>, f64, f64) {
    let g = GramianSetFunction::new(contribs, metric);
    block_summary(&g, &partition.blocks)
}

fn block_summary(g: &GramianSetFunction<'_>, blocks: &[Vec<usize>]) -> (Vec<f64>, f64, f64) {
    let values: Vec<f64> = blocks.iter().map(|b| g.value(b)).collect();
    let total = values.iter().sum();
    let raw_total = values.iter().map(|v| v + g.offset()).sum();
    (values, total, raw_total)
}

/// Solves the partitioning problem with the chosen solver.
///
/// Continuous greedy is rounded with `cfg.rounding`; states left unassigned afterwards (a
/// state's copies can carry total mass below 1, and greedy stops at zero gain) are placed,
/// in increasing order, into the subsystem of largest marginal gain, ties going to the
/// emptiest subsystem and then the lowest index.
pub fn solve_partition(
    contribs: &ContributionGramians,
    kappa: usize,
    metric: Metric,
    solver: Solver,
    cfg: &SolverConfig,
) -> Result<(Partition, PartitionReport)> {
    if kappa == 0 {
        return Err(Error::invalid("kappa", "must be at least 1"));
    }
    if contribs.is_empty() {
        return Err(Error::invalid("system", "no measurable outputs"));
    }
    cfg.validate()?;
    let start = Instant::now();
    let n_y = contribs.len();
    let matroid = PartitionMatroid::extended(n_y, kappa)?;
    let f = P2Objective::new(contribs, kappa, metric);

    let (selected, trace) = match solver {
        Solver::Greedy => {
            let emptiest = |set: &[usize], e: usize| {
                let block = e % kappa;
                set.iter().filter(|&&s| s % kappa == block).count() as u64
            };
            greedy_with_tiebreak(&f, &matroid, cfg.lazy, &emptiest)
        }
        Solver::Continuous => {
            let (x, trace) = continuous_greedy(&f, &matroid, cfg)?;
            let set = maximize::round(
                &x,
                &matroid,
                cfg.rounding,
                &f,
                cfg.samples,
                seed::derive(cfg.seed, u64::MAX),
            )?;
            (set, trace)
        }
    };

    let labels = assignment_labels(&selected, n_y, kappa)?;
    let mut blocks = vec![Vec::new(); kappa];
    for (v, label) in labels.iter().enumerate() {
        if let Some(i) = label {
            blocks[*i].push(v);
        }
    }
    let g = f.subsystem_function();
    let mut completed_states = Vec::new();
    for v in (0..n_y).filter(|&v| labels[v].is_none()) {
        let gains: Vec<f64> = blocks.iter().map(|b| g.gain(b, v)).collect();
        let best = gains.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tol = maximize::TIE_REL_TOL * best.abs().max(1.0);
        let target = (0..kappa)
            .filter(|&i| gains[i] >= best - tol || gains[i].is_nan() && best.is_nan())
            .min_by_key(|&i| (blocks[i].len(), i))
            .unwrap_or(0);
        let pos = blocks[target].partition_point(|&x| x < v);
        blocks[target].insert(pos, v);
        completed_states.push(v);
    }

    let partition = Partition::new(blocks, n_y, Provenance::P2Solver)?;
    let (block_values, total, raw_total) = block_summary(g, &partition.blocks);
    let report = PartitionReport {
        kappa,
        metric,
        solver,
        block_values,
        total,
        raw_total,
        completed_states,
        modularity: None,
        evaluations: f.evaluations(),
        trace,
        elapsed: start.elapsed(),
    };
    Ok((partition, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sysmodel::{contribution_gramians, LtiSystem};
    use nalgebra::DMatrix;

    fn decoupled(n: usize) -> ContributionGramians {
        let sys = LtiSystem::new(DMatrix::zeros(n, n), DMatrix::identity(n, n)).unwrap();
        contribution_gramians(&sys, 4).unwrap()
    }

    #[test]
    fn partition_validation() {
        assert!(Partition::new(vec![vec![0, 1], vec![2]], 3, Provenance::Manual).is_ok());
        assert!(Partition::new(vec![vec![0, 1], vec![1, 2]], 3, Provenance::Manual).is_err());
        assert!(Partition::new(vec![vec![0], vec![2]], 3, Provenance::Manual).is_err());
        assert!(Partition::new(vec![vec![0, 1, 2], vec![]], 3, Provenance::Manual).is_ok());
        assert!(Partition::new(vec![], 0, Provenance::Manual).is_err());
    }

    #[test]
    fn fig5_worked_example() {
        // S_1 = {1,3,4}, S_2 = {2,5,6}, written zero-based.
        let p = Partition::new(vec![vec![0, 2, 3], vec![1, 4, 5]], 6, Provenance::Manual).unwrap();
        let pairs: Vec<(usize, usize)> = encode_pairs(&p).iter().map(|&(i, v)| (i + 1, v + 1)).collect();
        assert_eq!(pairs, vec![(1, 1), (2, 2), (1, 3), (1, 4), (2, 5), (2, 6)]);
        let back = decode_p2(&encode_p1(&p), 6, 2).unwrap();
        assert_eq!(back.blocks, p.blocks);
    }

    #[test]
    fn single_state_single_block() {
        let p = Partition::whole(1);
        assert_eq!(encode_p1(&p), vec![0]);
        assert_eq!(encode_pairs(&p), vec![(0, 0)]);
    }

    #[test]
    fn decode_rejects_infeasible() {
        // state 0 in both subsystems
        assert!(decode_p2(&[0, 1, 2], 2, 2).is_err());
        // state 1 missing
        assert!(decode_p2(&[0], 2, 2).is_err());
    }

    #[test]
    fn p2_objective_collapses_for_single_subsystem() {
        let g = decoupled(3);
        let f = build_p2_objective(&g, 1, Metric::logdet(1e-10));
        let plain = GramianSetFunction::new(&g, Metric::logdet(1e-10));
        assert_eq!(f.value(&[0, 2]), plain.value(&[0, 2]));
        assert_eq!(f.gain(&[0], 1), plain.gain(&[0], 1));
    }

    #[test]
    fn decoupled_greedy_alternates() {
        let g = decoupled(4);
        for metric in [Metric::trace(), Metric::logdet(1e-10), Metric::rank()] {
            for lazy in [false, true] {
                let cfg = SolverConfig {
                    lazy,
                    ..Default::default()
                };
                let (p, report) = solve_partition(&g, 2, metric, Solver::Greedy, &cfg).unwrap();
                assert_eq!(p.blocks, vec![vec![0, 2], vec![1, 3]], "{metric:?}");
                assert!((report.total - report.block_values.iter().sum::<f64>()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn single_subsystem_takes_everything() {
        let g = decoupled(3);
        for solver in [Solver::Greedy, Solver::Continuous] {
            let cfg = SolverConfig {
                samples: 10,
                ..Default::default()
            };
            let (p, report) = solve_partition(&g, 1, Metric::trace(), solver, &cfg).unwrap();
            assert_eq!(p.blocks, vec![vec![0, 1, 2]]);
            assert!((report.total - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn completion_pass_covers_zero_gain_states() {
        // Output 2 sees nothing, so greedy never selects it.
        let sys = LtiSystem::new(
            DMatrix::zeros(3, 3),
            DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]),
        )
        .unwrap();
        let g = contribution_gramians(&sys, 2).unwrap();
        let (p, report) =
            solve_partition(&g, 2, Metric::trace(), Solver::Greedy, &SolverConfig::default()).unwrap();
        assert_eq!(report.completed_states, vec![2]);
        assert_eq!(p.n(), 3);
    }
}
