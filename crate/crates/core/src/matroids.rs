//! Ground sets and partition matroids.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Descriptor of a ground-set element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Element {
    /// A measurable state `v`.
    State(usize),
    /// State `state` assigned to subsystem `block` (an element of the extended ground set).
    Assignment { block: usize, state: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundSet {
    elements: Vec<Element>,
    kappa: Option<usize>,
}

impl GroundSet {
    /// States `0..n`.
    pub fn states(n: usize) -> Self {
        Self {
            elements: (0..n).map(Element::State).collect(),
            kappa: None,
        }
    }

    /// Extended ground set of `kappa` copies of every state. The element `(i, v)` has index
    /// `v·κ + i`, so the copies of one state are contiguous.
    pub fn extended(n_y: usize, kappa: usize) -> Self {
        let elements = (0..n_y)
            .flat_map(|state| (0..kappa).map(move |block| Element::Assignment { block, state }))
            .collect();
        Self {
            elements,
            kappa: Some(kappa),
        }
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn element(&self, index: usize) -> Element {
        self.elements[index]
    }

    /// Index of `(block, state)` in an extended ground set.
    pub fn assignment_index(&self, block: usize, state: usize) -> Option<usize> {
        let kappa = self.kappa?;
        if block >= kappa {
            return None;
        }
        let idx = state * kappa + block;
        (idx < self.elements.len()).then_some(idx)
    }
}

/// Independence oracle over a ground set of indices `0..n`.
pub trait Independence: Sync {
    fn ground_size(&self) -> usize;

    /// `set` must be sorted and free of duplicates.
    fn is_independent(&self, set: &[usize]) -> bool;

    /// Whether `set ∪ {elem}` is independent, given that `set` is.
    fn can_add(&self, set: &[usize], elem: usize) -> bool {
        let with = crate::measures::with_element(set, elem);
        with.len() > set.len() && self.is_independent(&with)
    }
}

/// Partition matroid: at most `capacities[j]` elements from block `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionMatroid {
    ground: GroundSet,
    blocks: Vec<Vec<usize>>,
    capacities: Vec<usize>,
    block_of: Vec<usize>,
}

impl PartitionMatroid {
    pub fn new(ground: GroundSet, blocks: Vec<Vec<usize>>, capacities: Vec<usize>) -> Result<Self> {
        if blocks.len() != capacities.len() {
            return Err(Error::Dimension {
                field: "capacities".into(),
                expected: format!("{} entries", blocks.len()),
                found: format!("{} entries", capacities.len()),
            });
        }
        let n = ground.len();
        let mut block_of = vec![usize::MAX; n];
        for (j, block) in blocks.iter().enumerate() {
            for &e in block {
                if e >= n {
                    return Err(Error::IndexOutOfRange {
                        what: "ground set",
                        index: e,
                        size: n,
                    });
                }
                if block_of[e] != usize::MAX {
                    return Err(Error::invalid(
                        "blocks",
                        format!("element {e} appears in more than one block"),
                    ));
                }
                block_of[e] = j;
            }
        }
        if let Some(missing) = block_of.iter().position(|&b| b == usize::MAX) {
            return Err(Error::invalid(
                "blocks",
                format!("element {missing} is not covered by any block"),
            ));
        }
        let blocks = blocks
            .into_iter()
            .map(|mut b| {
                b.sort_unstable();
                b
            })
            .collect();
        Ok(Self {
            ground,
            blocks,
            capacities,
            block_of,
        })
    }

    /// Uniform matroid `|S| ≤ capacity` over `n` states.
    pub fn uniform(n: usize, capacity: usize) -> Self {
        Self::new(GroundSet::states(n), vec![(0..n).collect()], vec![capacity])
            .expect("single covering block is valid")
    }

    /// Matroid on the extended ground set allowing each state in at most one subsystem.
    pub fn extended(n_y: usize, kappa: usize) -> Result<Self> {
        if n_y == 0 || kappa == 0 {
            return Err(Error::invalid("kappa", "n_y and kappa must both be at least 1"));
        }
        let ground = GroundSet::extended(n_y, kappa);
        let blocks = (0..n_y)
            .map(|v| (v * kappa..(v + 1) * kappa).collect())
            .collect();
        Self::new(ground, blocks, vec![1; n_y])
    }

    /// Partition matroid over states whose blocks are the given subsystems.
    pub fn over_states(n: usize, blocks: Vec<Vec<usize>>, capacities: Vec<usize>) -> Result<Self> {
        Self::new(GroundSet::states(n), blocks, capacities)
    }

    pub fn ground(&self) -> &GroundSet {
        &self.ground
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn capacities(&self) -> &[usize] {
        &self.capacities
    }

    pub fn block_of(&self, elem: usize) -> usize {
        self.block_of[elem]
    }

    /// Selects, per block, the `capacity` elements of largest positive weight; ties go to the
    /// lowest index. Non-positive and NaN weights are never selected.
    pub fn max_weight_independent(&self, weights: &[f64]) -> Vec<usize> {
        assert_eq!(weights.len(), self.ground.len(), "one weight per ground element");
        let mut chosen = Vec::new();
        for (block, &cap) in self.blocks.iter().zip(&self.capacities) {
            let mut candidates: Vec<usize> =
                block.iter().copied().filter(|&e| weights[e] > 0.0).collect();
            candidates.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
            chosen.extend(candidates.into_iter().take(cap));
        }
        chosen.sort_unstable();
        chosen
    }

    /// Number of elements of `set` per block.
    pub fn block_counts(&self, set: &[usize]) -> Vec<usize> {
        let mut counts = vec![0; self.blocks.len()];
        for &e in set {
            counts[self.block_of[e]] += 1;
        }
        counts
    }
}

impl Independence for PartitionMatroid {
    fn ground_size(&self) -> usize {
        self.ground.len()
    }

    fn is_independent(&self, set: &[usize]) -> bool {
        if set.iter().any(|&e| e >= self.ground.len()) {
            return false;
        }
        self.block_counts(set)
            .iter()
            .zip(&self.capacities)
            .all(|(count, cap)| count <= cap)
    }

    fn can_add(&self, set: &[usize], elem: usize) -> bool {
        if elem >= self.ground.len() || set.binary_search(&elem).is_ok() {
            return false;
        }
        let block = self.block_of[elem];
        let used = set.iter().filter(|&&e| self.block_of[e] == block).count();
        used < self.capacities[block]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn subsets(n: usize) -> impl Iterator<Item = Vec<usize>> {
        (0u32..1 << n).map(move |mask| (0..n).filter(|&i| mask >> i & 1 == 1).collect())
    }

    #[test]
    fn extended_layout() {
        let m = PartitionMatroid::extended(2, 2).unwrap();
        assert_eq!(m.blocks(), &[vec![0, 1], vec![2, 3]]);
        assert_eq!(m.capacities(), &[1, 1]);
        assert_eq!(m.ground().element(1), Element::Assignment { block: 1, state: 0 });
        assert_eq!(m.ground().assignment_index(1, 1), Some(3));

        let m = PartitionMatroid::extended(6, 2).unwrap();
        assert_eq!(m.blocks().len(), 6);
        assert!(m.blocks().iter().all(|b| b.len() == 2));

        let m = PartitionMatroid::extended(1, 3).unwrap();
        assert_eq!(m.blocks(), &[vec![0, 1, 2]]);
        assert_eq!(m.capacities(), &[1]);
        assert!(PartitionMatroid::extended(0, 3).is_err());
    }

    #[test]
    fn independence_examples() {
        let m = PartitionMatroid::extended(2, 2).unwrap();
        assert!(m.is_independent(&[]));
        let a = m.ground().assignment_index(0, 0).unwrap();
        let b = m.ground().assignment_index(1, 0).unwrap();
        assert!(!m.is_independent(&[a, b]));

        let m = PartitionMatroid::over_states(4, vec![vec![0, 1, 2], vec![3]], vec![2, 1]).unwrap();
        assert!(m.is_independent(&[0, 2, 3]));
        assert!(!m.is_independent(&[0, 1, 2]));
        assert!(m.can_add(&[0, 3], 1));
        assert!(!m.can_add(&[0, 2], 1));
        assert!(!m.can_add(&[0, 2], 0));
    }

    #[test]
    fn construction_errors() {
        assert!(PartitionMatroid::over_states(3, vec![vec![0, 1], vec![1, 2]], vec![1, 1]).is_err());
        assert!(PartitionMatroid::over_states(3, vec![vec![0, 1]], vec![1]).is_err());
        assert!(PartitionMatroid::over_states(3, vec![vec![0, 1, 2]], vec![1, 1]).is_err());
        assert!(PartitionMatroid::over_states(2, vec![vec![0, 5]], vec![1]).is_err());
    }

    #[test]
    fn max_weight_examples() {
        let m = PartitionMatroid::over_states(3, vec![vec![0, 1], vec![2]], vec![1, 1]).unwrap();
        assert_eq!(m.max_weight_independent(&[3.0, 5.0, 2.0]), vec![1, 2]);
        assert_eq!(m.max_weight_independent(&[4.0, 4.0, 0.0]), vec![0]);
        assert_eq!(m.max_weight_independent(&[-1.0, f64::NAN, 1.0]), vec![2]);
    }

    #[test]
    fn max_weight_matches_brute_force() {
        use rand::Rng;
        let mut rng = crate::seed::rng(11);
        let m = PartitionMatroid::over_states(7, vec![vec![0, 2, 4, 6], vec![1, 3, 5]], vec![2, 1])
            .unwrap();
        for _ in 0..50 {
            let w: Vec<f64> = (0..7).map(|_| rng.gen_range(-1.0..3.0)).collect();
            let best = subsets(7)
                .filter(|s| m.is_independent(s))
                .map(|s| s.iter().map(|&i| w[i]).sum::<f64>())
                .fold(f64::NEG_INFINITY, f64::max);
            let got = m.max_weight_independent(&w);
            assert!(m.is_independent(&got));
            let val: f64 = got.iter().map(|&i| w[i]).sum();
            assert!((val - best).abs() < 1e-12);
        }
    }

    #[test]
    fn matroid_axioms_hold() {
        let instances = [
            PartitionMatroid::extended(3, 2).unwrap(),
            PartitionMatroid::uniform(6, 3),
            PartitionMatroid::over_states(8, vec![vec![0, 1, 2], vec![3, 4], vec![5, 6, 7]], vec![2, 0, 1])
                .unwrap(),
        ];
        for m in &instances {
            let n = m.ground_size();
            assert!(m.is_independent(&[]));
            let independent: Vec<Vec<usize>> = subsets(n).filter(|s| m.is_independent(s)).collect();
            for s in &independent {
                // heredity
                for t in subsets(s.len()) {
                    let sub: Vec<usize> = t.iter().map(|&i| s[i]).collect();
                    assert!(m.is_independent(&sub));
                }
            }
            // augmentation
            for a in &independent {
                for b in &independent {
                    if a.len() < b.len() {
                        let ok = b
                            .iter()
                            .filter(|e| !a.contains(e))
                            .any(|&e| m.can_add(a, e));
                        assert!(ok, "augmentation fails for {a:?} {b:?}");
                    }
                }
            }
        }
    }
}
