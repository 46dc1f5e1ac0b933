//! Exhaustive baselines for small instances.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{GramianSetFunction, Metric, SetFunction};
use crate::partition::{Partition, Provenance};
use crate::placement::{LocalObjective, ObjectiveMode, SensorConfig};
use crate::sysmodel::ContributionGramians;

pub const ENUMERATION_LIMIT: f64 = 1e6;
pub const MAX_CHECK_GROUND: usize = 12;
/// Violations beyond this many are counted but not stored.
pub const MAX_WITNESSES: usize = 1000;
pub const CHECK_SLACK: f64 = 1e-9;

const TIE_TOL: f64 = 1e-12;

fn better(candidate: f64, incumbent: f64) -> bool {
    candidate > incumbent + TIE_TOL * incumbent.abs().max(1.0)
}

/// Best labeled assignment of the states to `kappa` subsystems. Ties go to the
/// lexicographically smallest label vector.
pub fn brute_partition(
    contribs: &ContributionGramians,
    kappa: usize,
    metric: Metric,
) -> Result<(Partition, f64)> {
    if kappa == 0 {
        return Err(Error::invalid("kappa", "must be at least 1"));
    }
    let n = contribs.len();
    let count = (kappa as f64).powi(n as i32);
    if count > ENUMERATION_LIMIT {
        return Err(Error::GuardExceeded {
            count,
            limit: ENUMERATION_LIMIT,
        });
    }
    let g = GramianSetFunction::new(contribs, metric);
    let mut labels = vec![0usize; n];
    let mut best: Option<(f64, Vec<usize>)> = None;
    loop {
        let mut blocks = vec![Vec::new(); kappa];
        for (v, &i) in labels.iter().enumerate() {
            blocks[i].push(v);
        }
        let value: f64 = blocks.iter().map(|b| g.value(b)).sum();
        if best.as_ref().is_none_or(|(b, _)| better(value, *b)) {
            best = Some((value, labels.clone()));
        }
        // odometer, last state fastest
        let mut pos = n;
        loop {
            if pos == 0 {
                let (value, labels) = best.expect("at least one assignment");
                let partition = Partition::from_labels(&labels, kappa, Provenance::Manual)?;
                return Ok((partition, value));
            }
            pos -= 1;
            labels[pos] += 1;
            if labels[pos] < kappa {
                break;
            }
            labels[pos] = 0;
        }
    }
}

fn subsets_up_to(items: &[usize], max: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &item in items {
        let extended: Vec<Vec<usize>> = out
            .iter()
            .filter(|s| s.len() < max)
            .map(|s| {
                let mut t = s.clone();
                t.push(item);
                t
            })
            .collect();
        out.extend(extended);
    }
    out
}

fn binomial_prefix(n: usize, max: usize) -> f64 {
    let mut total = 0.0;
    let mut c = 1.0;
    for k in 0..=max.min(n) {
        total += c;
        c = c * (n - k) as f64 / (k + 1) as f64;
    }
    total
}

/// Best sensor set within the budgets. Ties go to the lexicographically smallest set.
pub fn brute_placement(
    contribs: &ContributionGramians,
    partition: &Partition,
    budgets: &[usize],
    mode: ObjectiveMode,
    metric: Metric,
) -> Result<(SensorConfig, f64)> {
    if budgets.len() != partition.blocks.len() {
        return Err(Error::Infeasible(format!(
            "{} budgets given for {} subsystems",
            budgets.len(),
            partition.blocks.len()
        )));
    }
    let count: f64 = partition
        .blocks
        .iter()
        .zip(budgets)
        .map(|(b, &r)| binomial_prefix(b.len(), r))
        .product();
    if count > ENUMERATION_LIMIT {
        return Err(Error::GuardExceeded {
            count,
            limit: ENUMERATION_LIMIT,
        });
    }
    let per_block: Vec<Vec<Vec<usize>>> = partition
        .blocks
        .iter()
        .zip(budgets)
        .map(|(b, &r)| subsets_up_to(b, r))
        .collect();

    let global = GramianSetFunction::new(contribs, metric);
    let local = LocalObjective::new(contribs, partition, metric);
    let objective: &dyn SetFunction = match mode {
        ObjectiveMode::Global => &global,
        ObjectiveMode::Local => &local,
    };

    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut idx = vec![0usize; per_block.len()];
    loop {
        let mut set: Vec<usize> = idx
            .iter()
            .enumerate()
            .flat_map(|(j, &k)| per_block[j][k].iter().copied())
            .collect();
        set.sort_unstable();
        let value = objective.value(&set);
        let replace = match &best {
            None => true,
            Some((b, s)) => better(value, *b) || (!better(*b, value) && set < *s),
        };
        if replace {
            best = Some((value, set));
        }
        let mut j = per_block.len();
        loop {
            if j == 0 {
                let (value, selected) = best.expect("at least the empty set");
                let raw_value = match mode {
                    ObjectiveMode::Global => global.raw_value(&selected),
                    ObjectiveMode::Local => local.raw_value(&selected),
                };
                return Ok((
                    SensorConfig {
                        selected,
                        budgets: budgets.to_vec(),
                        mode,
                        value,
                        raw_value,
                    },
                    value,
                ));
            }
            j -= 1;
            idx[j] += 1;
            if idx[j] < per_block[j].len() {
                break;
            }
            idx[j] = 0;
        }
    }
}

/// A failed diminishing-returns or monotonicity check; sets are bitmasks over the ground.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Violation {
    /// `f(A ∪ {s}) − f(A) < f(B ∪ {s}) − f(B)` with `A ⊆ B`, `s ∉ B`.
    Submodularity { a: u32, b: u32, s: usize },
    /// `f(A) > f(B)` with `A ⊆ B`.
    Monotonicity { a: u32, b: u32 },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    /// The first [`MAX_WITNESSES`] violations in enumeration order.
    pub witnesses: Vec<Violation>,
    pub total: usize,
    pub triples_checked: usize,
}

impl ViolationReport {
    pub fn is_clean(&self) -> bool {
        self.total == 0
    }

    fn push(&mut self, v: Violation) {
        self.total += 1;
        if self.witnesses.len() < MAX_WITNESSES {
            self.witnesses.push(v);
        }
    }
}

/// Members of a bitmask, ascending.
pub fn mask_members(mask: u32) -> Vec<usize> {
    (0..32).filter(|&i| mask >> i & 1 == 1).collect()
}

/// Exhaustively checks submodularity and monotonicity of `f` on a ground of size `n`.
///
/// Enumerates `B` by increasing bitmask, then `A ⊆ B` by increasing bitmask, then `s ∉ B`
/// ascending, so the first witness is the smallest in that order.
pub fn check_submodular_monotone<F: SetFunction + ?Sized>(f: &F, n: usize) -> Result<ViolationReport> {
    if n > MAX_CHECK_GROUND {
        return Err(Error::GuardExceeded {
            count: n as f64,
            limit: MAX_CHECK_GROUND as f64,
        });
    }
    let full: u32 = if n == 0 { 0 } else { (1u32 << n) - 1 };
    let table: Vec<f64> = (0..=full).map(|mask| f.value(&mask_members(mask))).collect();
    let mut report = ViolationReport::default();
    for b in 0..=full {
        // submasks of b in increasing order
        let mut subs = Vec::new();
        let mut a = b;
        loop {
            subs.push(a);
            if a == 0 {
                break;
            }
            a = (a - 1) & b;
        }
        subs.reverse();
        for &a in &subs {
            if table[a as usize] > table[b as usize] + CHECK_SLACK {
                report.push(Violation::Monotonicity { a, b });
            }
            for s in (0..n).filter(|&s| b >> s & 1 == 0) {
                let bit = 1u32 << s;
                let gain_a = table[(a | bit) as usize] - table[a as usize];
                let gain_b = table[(b | bit) as usize] - table[b as usize];
                report.triples_checked += 1;
                if gain_a + CHECK_SLACK < gain_b {
                    report.push(Violation::Submodularity { a, b, s });
                }
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::FnSetFunction;
    use crate::sysmodel::{contribution_gramians, LtiSystem};
    use nalgebra::DMatrix;

    #[test]
    fn modular_and_coverage_are_clean() {
        let w = [1.0, 2.5, 0.0, 4.0];
        let f = FnSetFunction::new(4, |s: &[usize]| s.iter().map(|&i| w[i]).sum());
        assert!(check_submodular_monotone(&f, 4).unwrap().is_clean());

        let sets = [vec![1, 2, 3], vec![3, 4], vec![4, 5], vec![1, 5]];
        let cover = FnSetFunction::new(4, |s: &[usize]| {
            let mut c: Vec<u32> = s.iter().flat_map(|&i| sets[i].iter().copied()).collect();
            c.sort_unstable();
            c.dedup();
            c.len() as f64
        });
        assert!(check_submodular_monotone(&cover, 4).unwrap().is_clean());
    }

    #[test]
    fn squared_cardinality_is_flagged() {
        let f = FnSetFunction::new(2, |s: &[usize]| (s.len() * s.len()) as f64);
        let report = check_submodular_monotone(&f, 2).unwrap();
        assert!(!report.is_clean());
        // (∅, {0}, 1): gain 1 at ∅ but 3 at {0}
        assert_eq!(report.witnesses[0], Violation::Submodularity { a: 0, b: 0b01, s: 1 });
    }

    #[test]
    fn non_monotone_is_flagged() {
        let f = FnSetFunction::new(2, |s: &[usize]| if s.len() == 2 { 0.0 } else { s.len() as f64 });
        let report = check_submodular_monotone(&f, 2).unwrap();
        assert!(report
            .witnesses
            .iter()
            .any(|v| matches!(v, Violation::Monotonicity { .. })));
    }

    #[test]
    fn guard_enforced() {
        let f = FnSetFunction::new(13, |s: &[usize]| s.len() as f64);
        assert!(check_submodular_monotone(&f, 13).is_err());
        let sys = LtiSystem::new(DMatrix::zeros(21, 21), DMatrix::identity(21, 21)).unwrap();
        let g = contribution_gramians(&sys, 1).unwrap();
        assert!(matches!(
            brute_partition(&g, 2, Metric::trace()),
            Err(Error::GuardExceeded { .. })
        ));
    }

    #[test]
    fn trace_partition_ties_resolve_lexicographically() {
        let a = DMatrix::from_row_slice(3, 3, &[0.2, 0.1, 0.0, 0.0, 0.3, 0.1, 0.1, 0.0, 0.4]);
        let sys = LtiSystem::new(a, DMatrix::identity(3, 3)).unwrap();
        let g = contribution_gramians(&sys, 30).unwrap();
        let (p, value) = brute_partition(&g, 2, Metric::trace()).unwrap();
        assert_eq!(p.labels(), vec![0, 0, 0]);
        let full = g.sum_of(&[0, 1, 2]).trace();
        assert!((value - full).abs() < 1e-12);

        let (p, _) = brute_partition(&g, 1, Metric::logdet(1e-10)).unwrap();
        assert_eq!(p.blocks, vec![vec![0, 1, 2]]);
    }

    #[test]
    fn placement_oracle_examples() {
        let sys = LtiSystem::new(
            DMatrix::zeros(3, 3),
            DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 3.0, 2.0])),
        )
        .unwrap();
        let g = contribution_gramians(&sys, 1).unwrap();
        let p = Partition::new(vec![vec![0, 1], vec![2]], 3, Provenance::Manual).unwrap();
        let (cfg, value) =
            brute_placement(&g, &p, &[2, 1], ObjectiveMode::Global, Metric::logdet(1e-10)).unwrap();
        assert_eq!(cfg.selected, vec![0, 1, 2]);
        assert!(value > 0.0);
        let single = Partition::whole(3);
        let (cfg, _) = brute_placement(&g, &single, &[1], ObjectiveMode::Global, Metric::trace()).unwrap();
        assert_eq!(cfg.selected, vec![1]);
    }
}
