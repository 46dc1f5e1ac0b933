//! LTI system model and observability Gramians.
//!
//! The system is `x[k+1] = A x[k]`, `y[k] = C x[k]`. Each row `c_v` of `C` is a candidate
//! sensor. Its contribution Gramian `W(v) = Σ_k (A^k)ᵀ c_vᵀ c_v A^k` is additive: the
//! Gramian of any sensor subset is the sum of the contributions of its members.

use std::fmt;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Default iteration cap for the Smith doubling solver.
pub const SMITH_MAX_DOUBLINGS: usize = 200;

/// Stability margin: systems with spectral radius at or above `1 - STABILITY_MARGIN` are
/// rejected by the infinite-horizon solver.
pub const STABILITY_MARGIN: f64 = 1e-9;

/// On-disk representation of a system.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SystemFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adjacency: Option<Vec<Vec<u8>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reactions: Option<Vec<Vec<usize>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LtiSystem {
    pub name: Option<String>,
    a: DMatrix<f64>,
    c: DMatrix<f64>,
    state_labels: Vec<String>,
    adjacency: Option<DMatrix<u8>>,
    reactions: Option<Vec<Vec<usize>>>,
}

impl LtiSystem {
    /// Builds a system from `A` and `C` with default labels.
    pub fn new(a: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        Self::with_parts(None, a, c, None, None, None)
    }

    pub fn with_parts(
        name: Option<String>,
        a: DMatrix<f64>,
        c: DMatrix<f64>,
        state_labels: Option<Vec<String>>,
        adjacency: Option<DMatrix<u8>>,
        reactions: Option<Vec<Vec<usize>>>,
    ) -> Result<Self> {
        let n_x = a.nrows();
        if a.ncols() != n_x {
            return Err(Error::Dimension {
                field: "A".into(),
                expected: format!("{n_x}x{n_x}"),
                found: format!("{}x{}", a.nrows(), a.ncols()),
            });
        }
        if c.ncols() != n_x {
            return Err(Error::Dimension {
                field: "C".into(),
                expected: format!("{}x{n_x}", c.nrows()),
                found: format!("{}x{}", c.nrows(), c.ncols()),
            });
        }
        let n_y = c.nrows();
        let state_labels = match state_labels {
            Some(labels) if labels.len() != n_y => {
                return Err(Error::Dimension {
                    field: "state_labels".into(),
                    expected: format!("{n_y} labels"),
                    found: format!("{} labels", labels.len()),
                })
            }
            Some(labels) => labels,
            None => (0..n_y).map(|i| format!("x{i}")).collect(),
        };
        if let Some(adj) = &adjacency {
            if adj.nrows() != n_x || adj.ncols() != n_x {
                return Err(Error::Dimension {
                    field: "adjacency".into(),
                    expected: format!("{n_x}x{n_x}"),
                    found: format!("{}x{}", adj.nrows(), adj.ncols()),
                });
            }
            for i in 0..n_x {
                if adj[(i, i)] != 0 {
                    return Err(Error::Adjacency { row: i, col: i });
                }
                for j in 0..n_x {
                    if adj[(i, j)] > 1 || adj[(i, j)] != adj[(j, i)] {
                        return Err(Error::Adjacency { row: i, col: j });
                    }
                }
            }
        }
        if let Some(reactions) = &reactions {
            for &idx in reactions.iter().flatten() {
                if idx >= n_x {
                    return Err(Error::IndexOutOfRange {
                        what: "reaction participants",
                        index: idx,
                        size: n_x,
                    });
                }
            }
        }
        Ok(Self {
            name,
            a,
            c,
            state_labels,
            adjacency,
            reactions,
        })
    }

    pub fn from_file_repr(file: SystemFile) -> Result<Self> {
        let a = rows_to_matrix("A", &file.a, None)?;
        let c = rows_to_matrix("C", &file.c, Some(a.nrows()))?;
        let adjacency = match &file.adjacency {
            Some(rows) => {
                let m = rows_to_matrix(
                    "adjacency",
                    &rows
                        .iter()
                        .map(|r| r.iter().map(|&x| x as f64).collect())
                        .collect::<Vec<Vec<f64>>>(),
                    Some(a.nrows()),
                )?;
                Some(m.map(|x| x as u8))
            }
            None => None,
        };
        Self::with_parts(file.name, a, c, file.state_labels, adjacency, file.reactions)
    }

    pub fn to_file_repr(&self) -> SystemFile {
        let rows = |m: &DMatrix<f64>| {
            (0..m.nrows())
                .map(|i| m.row(i).iter().copied().collect())
                .collect()
        };
        SystemFile {
            name: self.name.clone(),
            a: rows(&self.a),
            c: rows(&self.c),
            state_labels: Some(self.state_labels.clone()),
            adjacency: self.adjacency.as_ref().map(|adj| {
                (0..adj.nrows())
                    .map(|i| adj.row(i).iter().copied().collect())
                    .collect()
            }),
            reactions: self.reactions.clone(),
        }
    }

    pub fn n_x(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_y(&self) -> usize {
        self.c.nrows()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn state_labels(&self) -> &[String] {
        &self.state_labels
    }

    pub fn adjacency(&self) -> Option<&DMatrix<u8>> {
        self.adjacency.as_ref()
    }

    pub fn reactions(&self) -> Option<&[Vec<usize>]> {
        self.reactions.as_deref()
    }

    pub fn spectral_radius(&self) -> f64 {
        spectral_radius(&self.a)
    }
}

fn rows_to_matrix(field: &str, rows: &[Vec<f64>], ncols: Option<usize>) -> Result<DMatrix<f64>> {
    let width = ncols.unwrap_or(rows.len());
    for (i, row) in rows.iter().enumerate() {
        if row.len() != width {
            return Err(Error::Dimension {
                field: field.into(),
                expected: format!("rows of length {width}"),
                found: format!("row {i} has length {}", row.len()),
            });
        }
    }
    Ok(DMatrix::from_fn(rows.len(), width, |i, j| rows[i][j]))
}

/// Reads and validates a system JSON file.
pub fn load_system(path: impl AsRef<Path>) -> Result<LtiSystem> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_system(&text)
}

pub fn parse_system(text: &str) -> Result<LtiSystem> {
    let file: SystemFile = serde_json::from_str(text)?;
    LtiSystem::from_file_repr(file)
}

pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone_owned()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Observation horizon of a Gramian.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Horizon {
    Finite(usize),
    Infinite,
}

impl fmt::Display for Horizon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Horizon::Finite(n) => write!(f, "{n}"),
            Horizon::Infinite => f.write_str("infinite"),
        }
    }
}

impl std::str::FromStr for Horizon {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "infinite" | "inf" => Ok(Horizon::Infinite),
            t => t
                .parse::<usize>()
                .map(Horizon::Finite)
                .map_err(|_| Error::invalid("horizon", format!("expected a step count or `infinite`, got `{t}`"))),
        }
    }
}

impl Serialize for Horizon {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Horizon::Finite(n) => serializer.serialize_u64(*n as u64),
            Horizon::Infinite => serializer.serialize_str("infinite"),
        }
    }
}

impl<'de> Deserialize<'de> for Horizon {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            N(usize),
            S(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::N(n) => Ok(Horizon::Finite(n)),
            Repr::S(s) if s == "infinite" => Ok(Horizon::Infinite),
            Repr::S(s) => Err(serde::de::Error::custom(format!("unknown horizon `{s}`"))),
        }
    }
}

/// A symmetric PSD Gramian together with the sensor selection it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct GramianMatrix {
    pub w: DMatrix<f64>,
    pub horizon: Horizon,
    pub selection: Vec<usize>,
}

/// Per-output contribution Gramians, one per row of `C`.
#[derive(Debug, Clone)]
pub struct ContributionGramians {
    horizon: Horizon,
    n_x: usize,
    contribs: Vec<DMatrix<f64>>,
}

impl ContributionGramians {
    /// Wraps precomputed contributions. All matrices must be `n_x × n_x`.
    pub fn from_matrices(horizon: Horizon, n_x: usize, contribs: Vec<DMatrix<f64>>) -> Result<Self> {
        for (v, w) in contribs.iter().enumerate() {
            if w.nrows() != n_x || w.ncols() != n_x {
                return Err(Error::Dimension {
                    field: format!("contribs[{v}]"),
                    expected: format!("{n_x}x{n_x}"),
                    found: format!("{}x{}", w.nrows(), w.ncols()),
                });
            }
        }
        Ok(Self {
            horizon,
            n_x,
            contribs,
        })
    }

    pub fn horizon(&self) -> Horizon {
        self.horizon
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    /// Number of ground elements (sensors).
    pub fn len(&self) -> usize {
        self.contribs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contribs.is_empty()
    }

    pub fn get(&self, v: usize) -> &DMatrix<f64> {
        &self.contribs[v]
    }

    pub fn iter(&self) -> impl Iterator<Item = &DMatrix<f64>> {
        self.contribs.iter()
    }

    /// Sum of contributions over `selection`, summed in the given order. Indices are not
    /// checked.
    pub fn sum_of(&self, selection: &[usize]) -> DMatrix<f64> {
        let mut w = DMatrix::zeros(self.n_x, self.n_x);
        for &v in selection {
            w += &self.contribs[v];
        }
        w
    }
}

/// Contribution Gramians over a finite horizon of `horizon` steps.
///
/// Each contribution is accumulated from the row recursion `p_{k+1} = p_k A`, `p_0 = c_v`,
/// stacking the rows into an `N × n_x` matrix `P` so that `W(v) = Pᵀ P`. `A^k` is never formed.
pub fn contribution_gramians(sys: &LtiSystem, horizon: usize) -> Result<ContributionGramians> {
    if horizon == 0 {
        return Err(Error::invalid("horizon", "must be at least 1"));
    }
    let n_x = sys.n_x();
    let contribs = (0..sys.n_y())
        .into_par_iter()
        .map(|v| {
            let mut rows = DMatrix::<f64>::zeros(horizon, n_x);
            let mut p = sys.c.row(v).clone_owned();
            for k in 0..horizon {
                rows.set_row(k, &p);
                if k + 1 < horizon {
                    p = &p * &sys.a;
                }
            }
            symmetrize(rows.tr_mul(&rows))
        })
        .collect();
    Ok(ContributionGramians {
        horizon: Horizon::Finite(horizon),
        n_x,
        contribs,
    })
}

/// Infinite-horizon contribution Gramians, one Lyapunov solve per output row.
pub fn contribution_gramians_infinite(sys: &LtiSystem, tol: f64) -> Result<ContributionGramians> {
    check_stable(&sys.a)?;
    let n_x = sys.n_x();
    let contribs = (0..sys.n_y())
        .into_par_iter()
        .map(|v| {
            let c = sys.c.row(v);
            let q = c.tr_mul(&c);
            smith_solve(&sys.a, &q, tol, SMITH_MAX_DOUBLINGS)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ContributionGramians {
        horizon: Horizon::Infinite,
        n_x,
        contribs,
    })
}

/// Sum of the contributions in `selection`; the empty selection gives the zero matrix.
pub fn full_gramian(contribs: &ContributionGramians, selection: &[usize]) -> Result<GramianMatrix> {
    let mut sel = selection.to_vec();
    sel.sort_unstable();
    sel.dedup();
    if let Some(&bad) = sel.iter().find(|&&v| v >= contribs.len()) {
        return Err(Error::IndexOutOfRange {
            what: "ground set",
            index: bad,
            size: contribs.len(),
        });
    }
    Ok(GramianMatrix {
        w: contribs.sum_of(&sel),
        horizon: contribs.horizon,
        selection: sel,
    })
}

/// Infinite-horizon Gramian solving `AᵀWA − W + CᵀC = 0` by Smith doubling.
pub fn lyapunov_gramian(sys: &LtiSystem, tol: f64) -> Result<GramianMatrix> {
    check_stable(&sys.a)?;
    let q = sys.c.tr_mul(&sys.c);
    let w = smith_solve(&sys.a, &q, tol, SMITH_MAX_DOUBLINGS)?;
    Ok(GramianMatrix {
        w,
        horizon: Horizon::Infinite,
        selection: (0..sys.n_y()).collect(),
    })
}

fn check_stable(a: &DMatrix<f64>) -> Result<()> {
    let rho = spectral_radius(a);
    let limit = 1.0 - STABILITY_MARGIN;
    if !(rho < limit) {
        return Err(Error::Unstable {
            spectral_radius: rho,
            limit,
        });
    }
    Ok(())
}

/// Solves `W = AᵀWA + Q` by the doubling recursion `W ← W + A_kᵀ W A_k`, `A_k ← A_k²`.
/// Stops once the Frobenius norm of an update falls below `tol`.
pub fn smith_solve(
    a: &DMatrix<f64>,
    q: &DMatrix<f64>,
    tol: f64,
    max_doublings: usize,
) -> Result<DMatrix<f64>> {
    let mut w = q.clone_owned();
    let mut ak = a.clone_owned();
    let mut last = f64::INFINITY;
    for _ in 0..max_doublings {
        let update = ak.tr_mul(&w) * &ak;
        last = update.norm();
        w += update;
        if !last.is_finite() {
            break;
        }
        if last < tol {
            return Ok(symmetrize(w));
        }
        ak = &ak * &ak;
    }
    Err(Error::NoConvergence {
        iterations: max_doublings,
        update_norm: last,
    })
}

/// Frobenius norm of `AᵀWA − W + Q`.
pub fn lyapunov_residual(a: &DMatrix<f64>, w: &DMatrix<f64>, q: &DMatrix<f64>) -> f64 {
    (a.tr_mul(w) * a - w + q).norm()
}

pub fn symmetrize(w: DMatrix<f64>) -> DMatrix<f64> {
    let wt = w.transpose();
    (w + wt) * 0.5
}

/// Checks symmetry within `1e-9` relative Frobenius tolerance and that no eigenvalue is
/// below `-1e-9 · λ_max`.
pub fn check_psd(w: &DMatrix<f64>) -> Result<()> {
    if !w.is_square() {
        return Err(Error::NotPsd(format!("not square: {}x{}", w.nrows(), w.ncols())));
    }
    let scale = w.norm().max(f64::MIN_POSITIVE);
    let asym = (w - w.transpose()).norm();
    if asym > 1e-9 * scale {
        return Err(Error::NotPsd(format!(
            "asymmetry {asym:e} exceeds tolerance relative to norm {scale:e}"
        )));
    }
    let eig = nalgebra::SymmetricEigen::new(symmetrize(w.clone_owned())).eigenvalues;
    let max = eig.max();
    let min = eig.min();
    if min < -1e-9 * max.max(0.0) {
        return Err(Error::NotPsd(format!("eigenvalue {min:e} below tolerance (max {max:e})")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn naive_contribs(a: &DMatrix<f64>, c: &DMatrix<f64>, n: usize) -> Vec<DMatrix<f64>> {
        let nx = a.nrows();
        (0..c.nrows())
            .map(|v| {
                let cv = c.row(v).clone_owned();
                let mut ak = DMatrix::<f64>::identity(nx, nx);
                let mut w = DMatrix::zeros(nx, nx);
                for _ in 0..n {
                    let term = ak.transpose() * cv.transpose() * &cv * &ak;
                    w += term;
                    ak = &ak * a;
                }
                w
            })
            .collect()
    }

    #[test]
    fn parse_defaults_labels() {
        let sys = parse_system(r#"{"A": [[0,0],[0,0]], "C": [[1,0],[0,1]]}"#).unwrap();
        assert_eq!((sys.n_x(), sys.n_y()), (2, 2));
        assert_eq!(sys.state_labels(), &["x0".to_string(), "x1".to_string()]);
    }

    #[test]
    fn parse_shapes_with_labels() {
        let sys = parse_system(
            r#"{"A": [[0,0,0],[0,0,0],[0,0,0]], "C": [[1,0,0],[0,1,0]], "state_labels": ["a","b"]}"#,
        )
        .unwrap();
        assert_eq!((sys.n_x(), sys.n_y()), (3, 2));
        assert_eq!(sys.state_labels()[1], "b");
    }

    #[test]
    fn parse_rejects_bad_c() {
        let err = parse_system(r#"{"A": [[0,0],[0,0]], "C": [[1,0,0]]}"#).unwrap_err();
        match err {
            Error::Dimension { field, .. } => assert_eq!(field, "C"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_rejects_asymmetric_adjacency() {
        let err = parse_system(
            r#"{"A": [[0,0],[0,0]], "C": [[1,0]], "adjacency": [[0,1],[0,0]]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Adjacency { .. }));
    }

    #[test]
    fn parse_rejects_bad_reaction_index() {
        let err =
            parse_system(r#"{"A": [[0,0],[0,0]], "C": [[1,0]], "reactions": [[0,2]]}"#).unwrap_err();
        assert!(matches!(err, Error::IndexOutOfRange { index: 2, .. }));
    }

    #[test]
    fn parse_rejects_label_count() {
        let err = parse_system(r#"{"A": [[0]], "C": [[1]], "state_labels": ["a","b"]}"#).unwrap_err();
        assert!(matches!(err, Error::Dimension { .. }));
    }

    #[test]
    fn zero_dynamics_contributions() {
        let sys = LtiSystem::new(DMatrix::zeros(2, 2), DMatrix::identity(2, 2)).unwrap();
        let g = contribution_gramians(&sys, 5).unwrap();
        assert_eq!(g.get(0), &DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0])));
        assert_eq!(g.get(1), &DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 1.0])));
    }

    #[test]
    fn identity_dynamics_contributions() {
        let sys = LtiSystem::new(DMatrix::identity(2, 2), DMatrix::identity(2, 2)).unwrap();
        let g = contribution_gramians(&sys, 3).unwrap();
        assert_eq!(g.get(0)[(0, 0)], 3.0);
        assert_eq!(g.get(0)[(1, 1)], 0.0);
        assert_eq!(g.get(1)[(1, 1)], 3.0);
        let full = full_gramian(&g, &[0, 1]).unwrap();
        assert_eq!(full.w, DMatrix::identity(2, 2) * 3.0);
        let empty = full_gramian(&g, &[]).unwrap();
        assert_eq!(empty.w, DMatrix::zeros(2, 2));
    }

    #[test]
    fn recursion_matches_matrix_powers() {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.2, 0.1, 0.3]);
        let sys = LtiSystem::new(a.clone(), DMatrix::identity(2, 2)).unwrap();
        let g = contribution_gramians(&sys, 4).unwrap();
        let oracle = naive_contribs(&a, sys.c(), 4);
        for v in 0..2 {
            assert!((g.get(v) - &oracle[v]).norm() < 1e-12);
        }
    }

    #[test]
    fn selection_sums_contributions() {
        let a = DMatrix::from_row_slice(
            4,
            4,
            &[0.3, 0.1, 0.0, 0.0, 0.2, 0.4, 0.1, 0.0, 0.0, 0.1, 0.5, 0.2, 0.1, 0.0, 0.1, 0.2],
        );
        let sys = LtiSystem::new(a, DMatrix::identity(4, 4)).unwrap();
        let g = contribution_gramians(&sys, 20).unwrap();
        let sel = full_gramian(&g, &[2, 0]).unwrap();
        assert_eq!(sel.selection, vec![0, 2]);
        assert_eq!(sel.w, g.get(0) + g.get(2));
        assert!(full_gramian(&g, &[4]).is_err());
    }

    #[test]
    fn horizon_zero_rejected() {
        let sys = LtiSystem::new(DMatrix::zeros(1, 1), DMatrix::identity(1, 1)).unwrap();
        assert!(contribution_gramians(&sys, 0).is_err());
    }

    #[test]
    fn lyapunov_trivial_cases() {
        let sys = LtiSystem::new(DMatrix::zeros(2, 2), DMatrix::identity(2, 2)).unwrap();
        let w = lyapunov_gramian(&sys, 1e-12).unwrap();
        assert_eq!(w.w, DMatrix::identity(2, 2));

        let sys = LtiSystem::new(DMatrix::from_element(1, 1, 0.5), DMatrix::from_element(1, 1, 1.0))
            .unwrap();
        let w = lyapunov_gramian(&sys, 1e-14).unwrap();
        assert!((w.w[(0, 0)] - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn lyapunov_rejects_unstable() {
        let sys = LtiSystem::new(DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 1.0))
            .unwrap();
        match lyapunov_gramian(&sys, 1e-12) {
            Err(Error::Unstable { spectral_radius, .. }) => assert!((spectral_radius - 1.0).abs() < 1e-12),
            other => panic!("expected instability, got {other:?}"),
        }
    }

    #[test]
    fn smith_reports_non_convergence() {
        let a = DMatrix::from_element(1, 1, 0.999);
        let q = DMatrix::from_element(1, 1, 1.0);
        assert!(matches!(
            smith_solve(&a, &q, 1e-300, 3),
            Err(Error::NoConvergence { iterations: 3, .. })
        ));
    }

    #[test]
    fn horizon_serde() {
        assert_eq!(serde_json::to_string(&Horizon::Finite(5)).unwrap(), "5");
        assert_eq!(serde_json::to_string(&Horizon::Infinite).unwrap(), "\"infinite\"");
        let h: Horizon = serde_json::from_str("\"infinite\"").unwrap();
        assert_eq!(h, Horizon::Infinite);
    }

    #[test]
    fn psd_check() {
        assert!(check_psd(&DMatrix::identity(3, 3)).is_ok());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(check_psd(&asym).is_err());
        let indef = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(check_psd(&indef).is_err());
    }
}
