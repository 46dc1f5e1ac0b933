//! Interaction graphs, Newman modularity, and the spectral clustering baseline.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

use crate::error::{Error, Result};
use crate::partition::{Partition, Provenance};
use crate::seed;
use crate::sysmodel::LtiSystem;

/// Eigenvalues at or below this are treated as zero.
pub const ZERO_EIGENVALUE_TOL: f64 = 1e-10;
pub const KMEANS_RESTARTS: usize = 20;
pub const KMEANS_ITERATIONS: usize = 100;

/// Undirected 0/1 graph without self loops.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionGraph {
    adj: DMatrix<u8>,
    degrees: Vec<usize>,
    edges: usize,
}

impl InteractionGraph {
    pub fn from_adjacency(adj: DMatrix<u8>) -> Result<Self> {
        let n = adj.nrows();
        if adj.ncols() != n {
            return Err(Error::Dimension {
                field: "adjacency".into(),
                expected: format!("{n}x{n}"),
                found: format!("{}x{}", adj.nrows(), adj.ncols()),
            });
        }
        for i in 0..n {
            for j in 0..n {
                if adj[(i, j)] > 1 || adj[(i, j)] != adj[(j, i)] || (i == j && adj[(i, j)] != 0) {
                    return Err(Error::Adjacency { row: i, col: j });
                }
            }
        }
        let degrees: Vec<usize> = (0..n)
            .map(|i| adj.row(i).iter().map(|&a| a as usize).sum())
            .collect();
        let edges = degrees.iter().sum::<usize>() / 2;
        Ok(Self { adj, degrees, edges })
    }

    /// Graph of a system: its adjacency if given, otherwise co-participation in reactions.
    pub fn from_system(sys: &LtiSystem) -> Option<Result<Self>> {
        if let Some(adj) = sys.adjacency() {
            return Some(Self::from_adjacency(adj.clone()));
        }
        sys.reactions()
            .map(|r| adjacency_from_reactions(r, sys.n_x()))
    }

    pub fn n(&self) -> usize {
        self.degrees.len()
    }

    pub fn edges(&self) -> usize {
        self.edges
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[(i, j)] == 1
    }

    pub fn adjacency(&self) -> &DMatrix<u8> {
        &self.adj
    }
}

/// Connects every pair of distinct species that appear together in a reaction.
pub fn adjacency_from_reactions(reactions: &[Vec<usize>], n: usize) -> Result<InteractionGraph> {
    let mut adj = DMatrix::<u8>::zeros(n, n);
    for reaction in reactions {
        for &i in reaction {
            if i >= n {
                return Err(Error::IndexOutOfRange {
                    what: "reaction participants",
                    index: i,
                    size: n,
                });
            }
        }
        for &i in reaction {
            for &j in reaction {
                if i != j {
                    adj[(i, j)] = 1;
                }
            }
        }
    }
    InteractionGraph::from_adjacency(adj)
}

/// `Q = (1/2m) Σ_ij [A_ij − a_i a_j / 2m] δ(b_i, b_j)`.
pub fn modularity(g: &InteractionGraph, p: &Partition) -> Result<f64> {
    if g.edges == 0 {
        return Err(Error::EmptyGraph);
    }
    if p.n() != g.n() {
        return Err(Error::Dimension {
            field: "partition".into(),
            expected: format!("{} nodes", g.n()),
            found: format!("{} nodes", p.n()),
        });
    }
    let two_m = 2.0 * g.edges as f64;
    let mut q = 0.0;
    for block in &p.blocks {
        let internal: usize = block
            .iter()
            .flat_map(|&i| block.iter().map(move |&j| (i, j)))
            .filter(|&(i, j)| g.has_edge(i, j))
            .count();
        let degree: usize = block.iter().map(|&i| g.degrees[i]).sum();
        q += internal as f64 / two_m - (degree as f64 / two_m).powi(2);
    }
    Ok(q)
}

/// Normalized-Laplacian spectral clustering into `kappa` blocks.
///
/// Isolated nodes become singleton blocks first. The remaining nodes are embedded with the
/// eigenvectors of the `κ'` smallest eigenvalues of `D^{-1/2}(D − A)D^{-1/2}`, rows are
/// normalized, and k-means++ (best of [`KMEANS_RESTARTS`] seeded restarts) assigns the
/// clusters. Blocks are ordered by smallest member, empty blocks last.
pub fn spectral_partition(g: &InteractionGraph, kappa: usize, seed: u64) -> Result<Partition> {
    let isolated: Vec<usize> = (0..g.n()).filter(|&i| g.degrees[i] == 0).collect();
    if kappa < isolated.len() + 1 {
        return Err(Error::invalid(
            "kappa",
            format!(
                "{kappa} blocks cannot hold {} isolated nodes plus the connected remainder",
                isolated.len()
            ),
        ));
    }
    let active: Vec<usize> = (0..g.n()).filter(|&i| g.degrees[i] > 0).collect();
    let k = kappa - isolated.len();
    if k > active.len().max(1) {
        return Err(Error::invalid(
            "kappa",
            format!("{k} clusters requested for {} connected nodes", active.len()),
        ));
    }

    let mut blocks: Vec<Vec<usize>> = isolated.iter().map(|&i| vec![i]).collect();
    if !active.is_empty() {
        let embedding = spectral_embedding(g, &active, k);
        let labels = kmeans(&embedding, k, seed);
        let mut clusters = vec![Vec::new(); k];
        for (row, &label) in labels.iter().enumerate() {
            clusters[label].push(active[row]);
        }
        blocks.extend(clusters);
    }
    while blocks.len() < kappa {
        blocks.push(Vec::new());
    }
    blocks.sort_by_key(|b| b.first().copied().unwrap_or(usize::MAX));
    Partition::new(blocks, g.n(), Provenance::Spectral)
}

fn spectral_embedding(g: &InteractionGraph, nodes: &[usize], k: usize) -> Vec<Vec<f64>> {
    let n = nodes.len();
    let inv_sqrt: Vec<f64> = nodes
        .iter()
        .map(|&i| 1.0 / (g.degrees[i] as f64).sqrt())
        .collect();
    let laplacian = DMatrix::from_fn(n, n, |r, c| {
        let a = g.adj[(nodes[r], nodes[c])] as f64;
        if r == c {
            1.0
        } else {
            -a * inv_sqrt[r] * inv_sqrt[c]
        }
    });
    let eig = SymmetricEigen::new(laplacian);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        clamp_zero(eig.eigenvalues[a])
            .total_cmp(&clamp_zero(eig.eigenvalues[b]))
            .then(a.cmp(&b))
    });
    (0..n)
        .map(|r| {
            let mut row: Vec<f64> = order[..k].iter().map(|&j| eig.eigenvectors[(r, j)]).collect();
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|v| *v /= norm);
            }
            row
        })
        .collect()
}

fn clamp_zero(v: f64) -> f64 {
    if v.abs() <= ZERO_EIGENVALUE_TOL {
        0.0
    } else {
        v
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let d = sq_dist(point, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Seeded k-means with k-means++ initialization; returns one label per point.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Vec<usize> {
    let mut best: Option<(f64, Vec<usize>)> = None;
    for restart in 0..KMEANS_RESTARTS {
        let mut rng = seed::rng(seed::derive(seed, restart as u64));
        let (inertia, labels) = kmeans_once(points, k, &mut rng);
        if best.as_ref().is_none_or(|(b, _)| inertia < *b) {
            best = Some((inertia, labels));
        }
    }
    best.map(|(_, l)| l).unwrap_or_default()
}

fn kmeans_once(points: &[Vec<f64>], k: usize, rng: &mut impl Rng) -> (f64, Vec<usize>) {
    let n = points.len();
    if n == 0 || k == 0 {
        return (0.0, vec![0; n]);
    }
    let mut centers = vec![points[rng.gen_range(0..n)].clone()];
    while centers.len() < k {
        let weights: Vec<f64> = points.iter().map(|p| nearest(p, &centers).1).collect();
        let total: f64 = weights.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            weights
                .iter()
                .position(|w| {
                    acc += w;
                    acc > target
                })
                .unwrap_or(n - 1)
        } else {
            rng.gen_range(0..n)
        };
        centers.push(points[pick].clone());
    }

    let mut labels = vec![usize::MAX; n];
    for _ in 0..KMEANS_ITERATIONS {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let (c, _) = nearest(p, &centers);
            if labels[i] != c {
                labels[i] = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let dim = points[0].len();
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            sums[l].iter_mut().zip(p).for_each(|(s, v)| *s += v);
        }
        for c in 0..k {
            // empty clusters keep their center
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    let inertia = points
        .iter()
        .zip(&labels)
        .map(|(p, &l)| sq_dist(p, &centers[l]))
        .sum();
    (inertia, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cliques(k: usize, size: usize) -> InteractionGraph {
        let reactions: Vec<Vec<usize>> = (0..k).map(|c| (c * size..(c + 1) * size).collect()).collect();
        adjacency_from_reactions(&reactions, k * size).unwrap()
    }

    /// Direct double sum over all node pairs.
    fn modularity_oracle(g: &InteractionGraph, labels: &[usize]) -> f64 {
        let n = g.n();
        let two_m = 2.0 * g.edges() as f64;
        let mut q = 0.0;
        for i in 0..n {
            for j in 0..n {
                if labels[i] == labels[j] {
                    let a = if g.has_edge(i, j) { 1.0 } else { 0.0 };
                    q += a - (g.degrees()[i] * g.degrees()[j]) as f64 / two_m;
                }
            }
        }
        q / two_m
    }

    #[test]
    fn reactions_to_edges() {
        let g = adjacency_from_reactions(&[vec![0, 1], vec![1, 2]], 3).unwrap();
        assert_eq!(g.edges(), 2);
        assert!(g.has_edge(0, 1) && g.has_edge(1, 2) && !g.has_edge(0, 2));
        assert_eq!(adjacency_from_reactions(&[vec![0]], 2).unwrap().edges(), 0);
        assert_eq!(adjacency_from_reactions(&[vec![0, 1, 2]], 3).unwrap().edges(), 3);
        assert!(adjacency_from_reactions(&[vec![0, 3]], 3).is_err());
    }

    #[test]
    fn modularity_identities() {
        let g = adjacency_from_reactions(&[vec![0, 1], vec![1, 2], vec![2, 3], vec![0, 3]], 4).unwrap();
        assert!(modularity(&g, &Partition::whole(4)).unwrap().abs() < 1e-12);

        let g = cliques(2, 3);
        let p = Partition::new(vec![vec![0, 1, 2], vec![3, 4, 5]], 6, Provenance::Manual).unwrap();
        assert!((modularity(&g, &p).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn triangle_split_matches_oracle() {
        let g = cliques(1, 3);
        let p = Partition::new(vec![vec![0], vec![1, 2]], 3, Provenance::Manual).unwrap();
        let q = modularity(&g, &p).unwrap();
        let oracle = modularity_oracle(&g, &p.labels());
        assert!((q - oracle).abs() < 1e-12);
        assert!((q + 2.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn modularity_errors() {
        let g = adjacency_from_reactions(&[], 3).unwrap();
        assert!(matches!(modularity(&g, &Partition::whole(3)), Err(Error::EmptyGraph)));
        let g = cliques(1, 3);
        assert!(modularity(&g, &Partition::whole(2)).is_err());
    }

    #[test]
    fn spectral_recovers_triangles() {
        let g = cliques(2, 3);
        let p = spectral_partition(&g, 2, 7).unwrap();
        assert_eq!(p.blocks, vec![vec![0, 1, 2], vec![3, 4, 5]]);
        assert_eq!(p.provenance, Provenance::Spectral);
    }

    #[test]
    fn spectral_single_block() {
        let g = cliques(1, 4);
        let p = spectral_partition(&g, 1, 0).unwrap();
        assert_eq!(p.blocks, vec![vec![0, 1, 2, 3]]);
    }

    #[test]
    fn spectral_path_matches_fiedler_split() {
        let g = adjacency_from_reactions(&[vec![0, 1], vec![1, 2], vec![2, 3]], 4).unwrap();
        // Fiedler-vector sign split of the normalized Laplacian.
        let lap = DMatrix::from_fn(4, 4, |r, c| {
            if r == c {
                1.0
            } else {
                -(g.adjacency()[(r, c)] as f64)
                    / ((g.degrees()[r] * g.degrees()[c]) as f64).sqrt()
            }
        });
        let eig = SymmetricEigen::new(lap);
        let mut idx: Vec<usize> = (0..4).collect();
        idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let fiedler = eig.eigenvectors.column(idx[1]);
        let side: Vec<bool> = (0..4).map(|i| fiedler[i] > 0.0).collect();
        let mut oracle = vec![
            (0..4).filter(|&i| side[i]).collect::<Vec<_>>(),
            (0..4).filter(|&i| !side[i]).collect::<Vec<_>>(),
        ];
        oracle.sort();
        assert_eq!(oracle, vec![vec![0, 1], vec![2, 3]]);

        let p = spectral_partition(&g, 2, 3).unwrap();
        assert_eq!(p.blocks, oracle);
    }

    #[test]
    fn isolated_nodes_become_singletons() {
        let g = adjacency_from_reactions(&[vec![0, 1, 2], vec![4, 5, 6], vec![3]], 7).unwrap();
        let p = spectral_partition(&g, 3, 1).unwrap();
        assert_eq!(p.blocks, vec![vec![0, 1, 2], vec![3], vec![4, 5, 6]]);
        assert!(spectral_partition(&g, 1, 1).is_err());
    }

    #[test]
    fn spectral_is_deterministic() {
        let g = adjacency_from_reactions(
            &[vec![0, 1, 2], vec![2, 3], vec![3, 4, 5], vec![5, 6], vec![6, 7, 8], vec![8, 0]],
            9,
        )
        .unwrap();
        let a = spectral_partition(&g, 3, 42).unwrap();
        let b = spectral_partition(&g, 3, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.kappa, 3);
    }
}
