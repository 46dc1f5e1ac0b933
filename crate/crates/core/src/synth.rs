//! Seeded synthetic systems and partitions for tests, benchmarks and demos.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::partition::{Partition, Provenance};
use crate::seed;
use crate::sysmodel::{spectral_radius, LtiSystem};

/// Random `A` with the given fraction of nonzero off-diagonal entries (the diagonal is always
/// populated), rescaled to spectral radius `rho`.
pub fn random_dynamics(n: usize, density: f64, rho: f64, seed: u64) -> DMatrix<f64> {
    let mut rng = seed::rng(seed);
    let mut a = DMatrix::from_fn(n, n, |i, j| {
        let keep = i == j || rng.gen::<f64>() < density;
        let z: f64 = StandardNormal.sample(&mut rng);
        if keep {
            z
        } else {
            0.0
        }
    });
    let current = spectral_radius(&a);
    if current > 0.0 {
        a *= rho / current;
    }
    a
}

/// Stable system with `n_y` distinct measured states and an adjacency matrix taken from the
/// symmetrized sparsity pattern of `A`.
pub fn random_stable_system(n_x: usize, n_y: usize, density: f64, rho: f64, seed: u64) -> Result<LtiSystem> {
    let a = random_dynamics(n_x, density, rho, seed::derive(seed, 0));
    let mut rng = seed::rng(seed::derive(seed, 1));
    let mut states: Vec<usize> = (0..n_x).collect();
    states.shuffle(&mut rng);
    let mut measured = states[..n_y.min(n_x)].to_vec();
    measured.sort_unstable();
    let mut c = DMatrix::zeros(measured.len(), n_x);
    for (row, &s) in measured.iter().enumerate() {
        c[(row, s)] = 1.0;
    }
    let adjacency = DMatrix::from_fn(n_x, n_x, |i, j| {
        u8::from(i != j && (a[(i, j)] != 0.0 || a[(j, i)] != 0.0))
    });
    LtiSystem::with_parts(None, a, c, None, Some(adjacency), None)
}

/// Block-diagonal `A` with dense random blocks of the given sizes, each rescaled to spectral
/// radius `rho`. Block `b` gets `sensors[b]` outputs: dense random rows supported on that
/// block only. With `sensors = None` every state is measured directly (`C = I`).
pub fn block_diagonal_system(
    sizes: &[usize],
    sensors: Option<&[usize]>,
    rho: f64,
    seed: u64,
) -> Result<LtiSystem> {
    let n: usize = sizes.iter().sum();
    let mut a = DMatrix::zeros(n, n);
    let mut offsets = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for (b, &size) in sizes.iter().enumerate() {
        let block = random_dynamics(size, 1.0, rho, seed::derive(seed, b as u64));
        a.view_mut((start, start), (size, size)).copy_from(&block);
        offsets.push(start);
        start += size;
    }
    let c = match sensors {
        None => DMatrix::identity(n, n),
        Some(counts) => {
            let mut rng = seed::rng(seed::derive(seed, u64::MAX));
            let rows: usize = counts.iter().sum();
            let mut c = DMatrix::zeros(rows, n);
            let mut row = 0;
            for (b, &count) in counts.iter().enumerate() {
                for _ in 0..count {
                    for j in 0..sizes[b] {
                        c[(row, offsets[b] + j)] = StandardNormal.sample(&mut rng);
                    }
                    row += 1;
                }
            }
            c
        }
    };
    let adjacency = DMatrix::from_fn(n, n, |i, j| {
        u8::from(i != j && (a[(i, j)] != 0.0 || a[(j, i)] != 0.0))
    });
    LtiSystem::with_parts(None, a, c, None, Some(adjacency), None)
}

/// Random labeled partition of `0..n` into `kappa` blocks (some possibly empty).
pub fn random_partition(n: usize, kappa: usize, seed: u64) -> Partition {
    let mut rng = seed::rng(seed);
    let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..kappa)).collect();
    Partition::from_labels(&labels, kappa, Provenance::Manual).expect("labels are in range")
}
