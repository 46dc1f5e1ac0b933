//! Sensor placement over a partitioned system.
//!
//! Sensors are chosen from the measurable states under a partition matroid whose blocks are
//! the subsystems and whose capacities are the per-subsystem budgets. The global objective
//! measures the Gramian of all selected sensors together; the local objective sums the
//! measures of each subsystem's own selection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matroids::PartitionMatroid;
use crate::maximize::{self, continuous_greedy, greedy, SolveTrace, Solver, SolverConfig};
use crate::measures::{evaluate, GramianSetFunction, Metric, MetricKind, SetFunction};
use crate::partition::Partition;
use crate::seed;
use crate::sysmodel::ContributionGramians;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveMode {
    Global,
    Local,
}

impl std::str::FromStr for ObjectiveMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(ObjectiveMode::Global),
            "local" => Ok(ObjectiveMode::Local),
            other => Err(Error::invalid("mode", format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorConfig {
    pub selected: Vec<usize>,
    pub budgets: Vec<usize>,
    pub mode: ObjectiveMode,
    /// Normalized objective value under `mode`.
    pub value: f64,
    /// Unnormalized objective value under `mode`.
    pub raw_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundDiagnostic {
    pub metric: MetricKind,
    /// `m(W_R)`.
    pub global: f64,
    /// `Σ_i m(W_{R ∩ S_i})`.
    pub local_sum: f64,
    /// Trace: equality within tolerance. Rank: `global ≤ local_sum`. Logdet:
    /// `global ≥ local_sum`, reported but not guaranteed.
    pub holds: bool,
    /// `global − local_sum`.
    pub gap: f64,
}

/// Splits `total` sensors across blocks in proportion to block size, by largest remainder.
///
/// Remainder ties go to the larger block, then the lower index.
pub fn budgets_from_total(partition: &Partition, total: usize) -> Result<Vec<usize>> {
    let n = partition.n();
    if total > n {
        return Err(Error::Infeasible(format!(
            "requested {total} sensors but only {n} states are measurable"
        )));
    }
    let sizes: Vec<usize> = partition.blocks.iter().map(Vec::len).collect();
    if total == 0 || n == 0 {
        return Ok(vec![0; sizes.len()]);
    }
    let quotas: Vec<f64> = sizes
        .iter()
        .map(|&s| total as f64 * s as f64 / n as f64)
        .collect();
    let mut budgets: Vec<usize> = quotas
        .iter()
        .zip(&sizes)
        .map(|(q, &s)| (q.floor() as usize).min(s))
        .collect();
    let mut remaining = total - budgets.iter().sum::<usize>();

    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra)
            .then(sizes[b].cmp(&sizes[a]))
            .then(a.cmp(&b))
    });
    for &i in &order {
        if remaining == 0 {
            break;
        }
        if budgets[i] < sizes[i] {
            budgets[i] += 1;
            remaining -= 1;
        }
    }
    // Residue left by capped blocks goes to the largest blocks with room.
    let mut by_size: Vec<usize> = (0..sizes.len()).collect();
    by_size.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]).then(a.cmp(&b)));
    while remaining > 0 {
        let Some(&i) = by_size.iter().find(|&&i| budgets[i] < sizes[i]) else {
            break;
        };
        budgets[i] += 1;
        remaining -= 1;
    }
    Ok(budgets)
}

fn check_budgets(partition: &Partition, budgets: &[usize]) -> Result<()> {
    if budgets.len() != partition.blocks.len() {
        return Err(Error::Infeasible(format!(
            "{} budgets given for {} subsystems",
            budgets.len(),
            partition.blocks.len()
        )));
    }
    for (i, (&b, block)) in budgets.iter().zip(&partition.blocks).enumerate() {
        if b > block.len() {
            return Err(Error::Infeasible(format!(
                "budget {b} for subsystem {i} exceeds its {} states",
                block.len()
            )));
        }
    }
    Ok(())
}

/// `Σ_i g(R ∩ S_i)`; a marginal query touches only the subsystem of the added sensor.
pub struct LocalObjective<'a> {
    g: GramianSetFunction<'a>,
    labels: Vec<usize>,
    kappa: usize,
}

impl<'a> LocalObjective<'a> {
    pub fn new(contribs: &'a ContributionGramians, partition: &Partition, metric: Metric) -> Self {
        Self {
            g: GramianSetFunction::new(contribs, metric),
            labels: partition.labels(),
            kappa: partition.kappa,
        }
    }

    fn split(&self, set: &[usize]) -> Vec<Vec<usize>> {
        let mut parts = vec![Vec::new(); self.kappa];
        for &v in set {
            parts[self.labels[v]].push(v);
        }
        parts
    }

    /// Unnormalized value, counting `m(0)` for subsystems without sensors.
    pub fn raw_value(&self, set: &[usize]) -> f64 {
        self.value(set) + self.kappa as f64 * self.g.offset()
    }
}

impl SetFunction for LocalObjective<'_> {
    fn ground_size(&self) -> usize {
        self.labels.len()
    }

    fn value(&self, set: &[usize]) -> f64 {
        self.split(set).iter().map(|p| self.g.value(p)).sum()
    }

    fn gain(&self, set: &[usize], elem: usize) -> f64 {
        let block = self.labels[elem];
        let part: Vec<usize> = set.iter().copied().filter(|&v| self.labels[v] == block).collect();
        self.g.gain(&part, elem)
    }

    fn evaluations(&self) -> u64 {
        self.g.evaluations()
    }
}

/// Maximizes the placement objective under per-subsystem budgets.
pub fn solve_placement(
    contribs: &ContributionGramians,
    partition: &Partition,
    budgets: &[usize],
    mode: ObjectiveMode,
    metric: Metric,
    solver: Solver,
    cfg: &SolverConfig,
) -> Result<(SensorConfig, SolveTrace)> {
    if partition.n() != contribs.len() {
        return Err(Error::Dimension {
            field: "partition".into(),
            expected: format!("{} states", contribs.len()),
            found: format!("{} states", partition.n()),
        });
    }
    check_budgets(partition, budgets)?;
    cfg.validate()?;
    let matroid =
        PartitionMatroid::over_states(contribs.len(), partition.blocks.clone(), budgets.to_vec())?;
    match mode {
        ObjectiveMode::Global => {
            let f = GramianSetFunction::new(contribs, metric);
            let (selected, trace) = run_solver(&f, &matroid, solver, cfg)?;
            let value = f.value(&selected);
            Ok((
                SensorConfig {
                    raw_value: f.raw_value(&selected),
                    selected,
                    budgets: budgets.to_vec(),
                    mode,
                    value,
                },
                trace,
            ))
        }
        ObjectiveMode::Local => {
            let f = LocalObjective::new(contribs, partition, metric);
            let (selected, trace) = run_solver(&f, &matroid, solver, cfg)?;
            let value = f.value(&selected);
            Ok((
                SensorConfig {
                    raw_value: f.raw_value(&selected),
                    selected,
                    budgets: budgets.to_vec(),
                    mode,
                    value,
                },
                trace,
            ))
        }
    }
}

fn run_solver<F: SetFunction>(
    f: &F,
    matroid: &PartitionMatroid,
    solver: Solver,
    cfg: &SolverConfig,
) -> Result<(Vec<usize>, SolveTrace)> {
    match solver {
        Solver::Greedy => Ok(greedy(f, matroid, cfg.lazy)),
        Solver::Continuous => {
            let (x, trace) = continuous_greedy(f, matroid, cfg)?;
            let set = maximize::round(
                &x,
                matroid,
                cfg.rounding,
                f,
                cfg.samples,
                seed::derive(cfg.seed, u64::MAX),
            )?;
            Ok((set, trace))
        }
    }
}

/// Compares the measure of the combined sensor Gramian against the sum of per-subsystem
/// measures, using unnormalized metric values.
pub fn bound_check(
    contribs: &ContributionGramians,
    partition: &Partition,
    selected: &[usize],
    metric: Metric,
) -> Result<BoundDiagnostic> {
    let labels = partition.labels();
    if let Some(&bad) = selected.iter().find(|&&v| v >= labels.len() || v >= contribs.len()) {
        return Err(Error::IndexOutOfRange {
            what: "state set",
            index: bad,
            size: labels.len().min(contribs.len()),
        });
    }
    let global = evaluate(&contribs.sum_of(selected), &metric);
    let local_sum: f64 = partition
        .blocks
        .iter()
        .map(|block| {
            let part: Vec<usize> = selected.iter().copied().filter(|v| block.contains(v)).collect();
            evaluate(&contribs.sum_of(&part), &metric)
        })
        .sum();
    let gap = if global == local_sum {
        0.0
    } else {
        global - local_sum
    };
    let holds = match metric.kind {
        MetricKind::Trace => gap.abs() <= 1e-9 * global.abs().max(1.0),
        MetricKind::Rank => global <= local_sum,
        MetricKind::Logdet => global >= local_sum,
    };
    Ok(BoundDiagnostic {
        metric: metric.kind,
        global,
        local_sum,
        holds,
        gap,
    })
}
