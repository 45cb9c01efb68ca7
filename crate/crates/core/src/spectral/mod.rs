//! Discrete eigenproblems: the dense generalised symmetric solver for `p = 2` and the
//! Rayleigh-quotient minimiser for the first eigenvalue at general `p`.

mod minimize;

use faer::linalg::solvers::Solve;
use faer::{Mat, MatRef, Side};
use serde::{Deserialize, Serialize};

use crate::assembly::{
    build_discretization, FracParams, GagliardoDiscretization, MassMatrix, StiffnessMatrix, Variant,
    DEFAULT_QUAD_ORDER,
};
use crate::domain::Grid1D;
use crate::error::{FracError, Result};

pub use minimize::{min_rayleigh_p, minimize_quotient, MinimizerOptions, Minimum, QuotientProblem};

/// Relative gap below which neighbouring eigenvalues are reported as one cluster.
pub const CLUSTER_TOL: f64 = 1e-9;

/// Identifies the problem a spectrum belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemTag {
    pub variant: Variant,
    pub s: f64,
    pub p: f64,
    pub weight: String,
}

/// Ascending eigenvalues with mass-orthonormal eigenvectors over the free dofs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<Vec<f64>>,
    pub tag: ProblemTag,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Index groups of eigenvalues whose consecutive relative gaps are below `rel_tol`.
    pub fn clusters(&self, rel_tol: f64) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = Vec::new();
        for (k, &lam) in self.eigenvalues.iter().enumerate() {
            match out.last_mut() {
                Some(group) if {
                    let prev = self.eigenvalues[*group.last().unwrap()];
                    (lam - prev).abs() <= rel_tol * lam.abs().max(prev.abs())
                } =>
                {
                    group.push(k)
                }
                _ => out.push(vec![k]),
            }
        }
        out
    }

    /// Largest `|A v - lambda M v| / (||A||_F ||v||)` over the stored pairs.
    pub fn max_relative_residual(&self, a: MatRef<'_, f64>, m: MatRef<'_, f64>) -> f64 {
        let norm_a = a.norm_l2();
        self.eigenvalues
            .iter()
            .zip(&self.eigenvectors)
            .map(|(&lam, v)| {
                let av = mat_vec(a, v);
                let mv = mat_vec(m, v);
                let r: f64 = av.iter().zip(&mv).map(|(x, y)| (x - lam * y).powi(2)).sum();
                r.sqrt() / (norm_a * norm2(v))
            })
            .fold(0.0, f64::max)
    }

    /// `max |v_i^T M v_j - delta_ij|`.
    pub fn orthonormality_defect(&self, m: MatRef<'_, f64>) -> f64 {
        let mv: Vec<Vec<f64>> = self.eigenvectors.iter().map(|v| mat_vec(m, v)).collect();
        let mut worst = 0.0f64;
        for (i, vi) in self.eigenvectors.iter().enumerate() {
            for (j, mvj) in mv.iter().enumerate() {
                let ip: f64 = vi.iter().zip(mvj).map(|(a, b)| a * b).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((ip - target).abs());
            }
        }
        worst
    }
}

pub(crate) fn mat_vec(a: MatRef<'_, f64>, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.nrows()];
    for (j, &vj) in v.iter().enumerate() {
        if vj == 0.0 {
            continue;
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o += a[(i, j)] * vj;
        }
    }
    out
}

pub(crate) fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn symmetrize(c: &mut Mat<f64>) {
    let n = c.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let avg = 0.5 * (c[(i, j)] + c[(j, i)]);
            c[(i, j)] = avg;
            c[(j, i)] = avg;
        }
    }
}

/// Dense `A x = lambda B x` with `B` symmetric positive definite, by Cholesky reduction
/// `C = L^{-1} A L^{-T}`. Returns all eigenvalues ascending and, when requested, the
/// `B`-orthonormal eigenvectors as columns.
pub fn dense_gevp(a: MatRef<'_, f64>, b: MatRef<'_, f64>, vectors: bool) -> Result<(Vec<f64>, Option<Mat<f64>>)> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || b.ncols() != n {
        return Err(FracError::invalid("generalised eigenproblem needs square matrices of equal size"));
    }
    let llt = b
        .llt(Side::Lower)
        .map_err(|e| FracError::Numerical(format!("mass matrix is not positive definite: {e:?}")))?;
    let l = llt.L();
    let mut x = a.to_owned();
    l.solve_lower_triangular_in_place(x.as_mut());
    let mut c = x.transpose().to_owned();
    l.solve_lower_triangular_in_place(c.as_mut());
    symmetrize(&mut c);
    if !vectors {
        let vals = c
            .self_adjoint_eigenvalues(Side::Lower)
            .map_err(|e| FracError::Numerical(format!("eigendecomposition failed: {e:?}")))?;
        return Ok((vals, None));
    }
    let evd = c
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| FracError::Numerical(format!("eigendecomposition failed: {e:?}")))?;
    let vals: Vec<f64> = (0..n).map(|i| evd.S()[i]).collect();
    let mut v = evd.U().to_owned();
    l.transpose().solve_upper_triangular_in_place(v.as_mut());
    Ok((vals, Some(v)))
}

/// First `k` eigenpairs of `A v = lambda M v`, with `A` optionally shifted by an extra
/// mass form (the `|u|^{p-2} u` term of the Neumann problem).
pub fn solve_linear_gevp(
    a: &StiffnessMatrix,
    shift: Option<&MassMatrix>,
    m: &MassMatrix,
    k: usize,
) -> Result<Spectrum> {
    let dim = a.dim();
    if m.dim() != dim || shift.is_some_and(|s| s.dim() != dim) {
        return Err(FracError::invalid("stiffness and mass matrices have different sizes"));
    }
    if k == 0 || k > dim {
        return Err(FracError::invalid(format!("k = {k} outside 1..={dim}")));
    }
    let mut lhs = a.matrix.clone();
    if let Some(sh) = shift {
        lhs += sh.to_dense();
    }
    let (vals, vecs) = dense_gevp(lhs.as_ref(), m.to_dense().as_ref(), true)?;
    let vecs = vecs.expect("vectors requested");
    let eigenvectors = (0..k).map(|j| (0..dim).map(|i| vecs[(i, j)]).collect()).collect();
    Ok(Spectrum {
        eigenvalues: vals[..k].to_vec(),
        eigenvectors,
        tag: ProblemTag { variant: a.variant, s: f64::NAN, p: 2.0, weight: String::new() },
    })
}

/// Cholesky factor of an SPD matrix kept for repeated solves.
pub(crate) struct SpdSolver {
    llt: faer::linalg::solvers::Llt<f64>,
}

impl SpdSolver {
    pub(crate) fn new(m: MatRef<'_, f64>) -> Result<Self> {
        let llt = m
            .llt(Side::Lower)
            .map_err(|e| FracError::Numerical(format!("matrix is not positive definite: {e:?}")))?;
        Ok(Self { llt })
    }

    pub(crate) fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = Mat::from_fn(rhs.len(), 1, |i, _| rhs[i]);
        self.llt.solve_in_place(x.as_mut());
        (0..rhs.len()).map(|i| x[(i, 0)]).collect()
    }
}

/// Unit-weight Dirichlet eigenvalues `mu_k`.
#[derive(Debug, Clone)]
pub enum DirichletMu {
    /// `p = 2`: the first `K` eigenpairs.
    Linear(Spectrum),
    /// General `p`: only the first eigenpair is variational-computable.
    First { value: f64, vector: Vec<f64> },
}

impl DirichletMu {
    pub fn first(&self) -> f64 {
        match self {
            DirichletMu::Linear(s) => s.eigenvalues[0],
            DirichletMu::First { value, .. } => *value,
        }
    }
}

/// Unit-weight Dirichlet problem on `grid`: full spectrum for `p = 2`, first pair otherwise.
pub fn dirichlet_mu(grid: &Grid1D, params: FracParams, k: usize, opts: &MinimizerOptions) -> Result<DirichletMu> {
    let disc = build_discretization(grid, params, Variant::DirichletExterior, DEFAULT_QUAD_ORDER)?;
    let mass = MassMatrix::unit(grid, params.p(), Variant::DirichletExterior)?;
    if params.is_quadratic() {
        let mut spec = solve_linear_gevp(&disc.assemble_form_p2()?, None, &mass, k)?;
        spec.tag = ProblemTag {
            variant: Variant::DirichletExterior,
            s: params.s(),
            p: 2.0,
            weight: "const:1".into(),
        };
        Ok(DirichletMu::Linear(spec))
    } else {
        let min = min_rayleigh_p(&disc, &mass, params, opts)?;
        Ok(DirichletMu::First { value: min.value, vector: min.vector })
    }
}

/// Spectrum of a discretisation against a mass with the problem tag filled in.
pub fn linear_spectrum(
    disc: &GagliardoDiscretization,
    a: &StiffnessMatrix,
    mass: &MassMatrix,
    weight: &str,
    k: usize,
) -> Result<Spectrum> {
    let shift = match disc.variant() {
        Variant::RegionalNeumann => Some(MassMatrix::unit(disc.grid(), 2.0, Variant::RegionalNeumann)?),
        Variant::DirichletExterior => None,
    };
    let mut spec = solve_linear_gevp(a, shift.as_ref(), mass, k)?;
    spec.tag = ProblemTag {
        variant: disc.variant(),
        s: disc.params().s(),
        p: 2.0,
        weight: weight.to_string(),
    };
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::make_grid;

    fn diag(v: &[f64]) -> Mat<f64> {
        Mat::from_fn(v.len(), v.len(), |i, j| if i == j { v[i] } else { 0.0 })
    }

    #[test]
    fn diagonal_pencil() {
        let (vals, vecs) = dense_gevp(diag(&[3.0, 2.0]).as_ref(), diag(&[1.0, 1.0]).as_ref(), true).unwrap();
        assert_eq!(vals, vec![2.0, 3.0]);
        let v = vecs.unwrap();
        assert!((v[(1, 0)].abs() - 1.0).abs() < 1e-15 && v[(0, 0)].abs() < 1e-15);
        assert!((v[(0, 1)].abs() - 1.0).abs() < 1e-15 && v[(1, 1)].abs() < 1e-15);
    }

    #[test]
    fn scaled_identity_mass() {
        let a = Mat::from_fn(4, 4, |i, j| if i == j { 4.0 } else { 1.0 / (1.0 + (i + j) as f64) });
        let ident = diag(&[1.0; 4]);
        let c = 2.5;
        let (plain, _) = dense_gevp(a.as_ref(), ident.as_ref(), false).unwrap();
        let (scaled, _) = dense_gevp(a.as_ref(), (&ident * faer::Scale(c)).as_ref(), false).unwrap();
        for (x, y) in plain.iter().zip(&scaled) {
            assert!((x / c - y).abs() < 1e-14 * x);
        }
    }

    #[test]
    fn indefinite_mass_is_numerical_error() {
        let a = diag(&[1.0, 1.0]);
        let b = diag(&[1.0, -1.0]);
        assert!(matches!(dense_gevp(a.as_ref(), b.as_ref(), true), Err(FracError::Numerical(_))));
    }

    #[test]
    fn clusters_group_close_values() {
        let spec = Spectrum {
            eigenvalues: vec![1.0, 2.0, 2.0 + 1e-12, 3.0],
            eigenvectors: vec![],
            tag: ProblemTag { variant: Variant::DirichletExterior, s: 0.5, p: 2.0, weight: String::new() },
        };
        assert_eq!(spec.clusters(CLUSTER_TOL), vec![vec![0], vec![1, 2], vec![3]]);
    }

    #[test]
    fn fractional_pencil_invariants() {
        let grid = make_grid(0.0, 1.0, 64).unwrap();
        let params = FracParams::new(0.5, 2.0).unwrap();
        for variant in [Variant::DirichletExterior, Variant::RegionalNeumann] {
            let disc = build_discretization(&grid, params, variant, DEFAULT_QUAD_ORDER).unwrap();
            let a = disc.assemble_form_p2().unwrap();
            let m = MassMatrix::unit(&grid, 2.0, variant).unwrap();
            let spec = linear_spectrum(&disc, &a, &m, "const:1", 10).unwrap();
            let mut lhs = a.matrix.clone();
            if variant == Variant::RegionalNeumann {
                lhs += m.to_dense();
            }
            assert!(spec.max_relative_residual(lhs.as_ref(), m.to_dense().as_ref()) < 1e-8);
            assert!(spec.orthonormality_defect(m.to_dense().as_ref()) < 1e-8);
            assert!(spec.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn k_out_of_range() {
        let grid = make_grid(0.0, 1.0, 8).unwrap();
        let params = FracParams::new(0.5, 2.0).unwrap();
        let disc = build_discretization(&grid, params, Variant::DirichletExterior, 4).unwrap();
        let a = disc.assemble_form_p2().unwrap();
        let m = MassMatrix::unit(&grid, 2.0, Variant::DirichletExterior).unwrap();
        assert!(solve_linear_gevp(&a, None, &m, 8).is_err());
        assert!(solve_linear_gevp(&a, None, &m, 0).is_err());
        assert_eq!(solve_linear_gevp(&a, None, &m, 7).unwrap().len(), 7);
    }
}
