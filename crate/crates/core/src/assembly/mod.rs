//! Piecewise-linear Galerkin discretisation of the Gagliardo p-energy and of the weighted
//! `L^p` mass.
//!
//! For `u` vanishing outside `(a, b)` the full-space seminorm splits as
//!
//! ```text
//! [u]^p_{W^{s,p}(R)} = \int\int_{(a,b)^2} |u(x) - u(y)|^p / |x - y|^{1+sp}  +  2 \int_a^b |u|^p kappa
//! ```
//!
//! with the exterior density `kappa(x) = ((x - a)^{-sp} + (b - x)^{-sp}) / (sp)`. The regional
//! (Neumann) variant keeps only the first term.

mod cache;
mod gagliardo;
mod mass;
mod power;

use serde::{Deserialize, Serialize};

use crate::error::{FracError, Result};

pub use cache::{cache_file_name, load_or_build, CACHE_VERSION};
pub use gagliardo::{build_discretization, GagliardoDiscretization, StiffnessMatrix, DEFAULT_QUAD_ORDER};
pub use mass::{assemble_mass, cell_lp_integral, p1_mass_dense, MassMatrix};
pub(crate) use power::Power;

/// Fractional order `s` and integrability exponent `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FracParams {
    s: f64,
    p: f64,
}

impl FracParams {
    pub fn new(s: f64, p: f64) -> Result<Self> {
        if !(s > 0.0 && s < 1.0) {
            return Err(FracError::invalid(format!("s = {s} must lie in (0, 1)")));
        }
        if !(p > 1.0 && p.is_finite()) {
            return Err(FracError::invalid(format!("p = {p} must lie in (1, inf)")));
        }
        Ok(Self { s, p })
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn sp(&self) -> f64 {
        self.s * self.p
    }

    pub fn is_quadratic(&self) -> bool {
        self.p == 2.0
    }

    /// Same `s`, exponent 2.
    pub fn quadratic(&self) -> Self {
        Self { s: self.s, p: 2.0 }
    }

    /// The Neumann rate and boundary-layer estimates need `s > 1/p`.
    pub fn require_trace_regime(&self) -> Result<()> {
        if self.s * self.p > 1.0 {
            Ok(())
        } else {
            Err(FracError::Hypothesis(format!(
                "requires s > 1/p, got s = {} and 1/p = {:.6}",
                self.s,
                1.0 / self.p
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// `u = 0` outside the interval; boundary nodes are constrained.
    DirichletExterior,
    /// Double integral over the interval only; all nodes free.
    RegionalNeumann,
}

impl Variant {
    pub fn label(self) -> &'static str {
        match self {
            Variant::DirichletExterior => "dirichlet",
            Variant::RegionalNeumann => "neumann",
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Map between free degrees of freedom and the full nodal vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DofLayout {
    n_nodes: usize,
    variant: Variant,
}

impl DofLayout {
    pub fn new(n_cells: usize, variant: Variant) -> Self {
        Self { n_nodes: n_cells + 1, variant }
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    /// Node index of the first free dof.
    pub fn offset(&self) -> usize {
        match self.variant {
            Variant::DirichletExterior => 1,
            Variant::RegionalNeumann => 0,
        }
    }

    pub fn dim(&self) -> usize {
        match self.variant {
            Variant::DirichletExterior => self.n_nodes - 2,
            Variant::RegionalNeumann => self.n_nodes,
        }
    }

    pub fn check(&self, u: &[f64]) -> Result<()> {
        if u.len() == self.dim() {
            Ok(())
        } else {
            Err(FracError::invalid(format!(
                "vector has length {}, expected {} free dofs",
                u.len(),
                self.dim()
            )))
        }
    }

    /// Full nodal vector with constrained nodes set to zero.
    pub fn embed(&self, u: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.n_nodes];
        full[self.offset()..self.offset() + u.len()].copy_from_slice(u);
        full
    }

    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        full[self.offset()..self.offset() + self.dim()].to_vec()
    }

    /// Free-dof index of `node`, if the node is free.
    pub fn free_index(&self, node: usize) -> Option<usize> {
        let off = self.offset();
        (node >= off && node - off < self.dim()).then(|| node - off)
    }
}

/// Closed form of `\int_{R \ (a,b)} |x - y|^{-(1+sp)} dy` for `a < x < b`.
pub fn exterior_density(x: f64, params: FracParams, a: f64, b: f64) -> Result<f64> {
    if !(x > a && x < b) {
        return Err(FracError::Domain(format!("x = {x} outside ({a}, {b})")));
    }
    let sp = params.sp();
    Ok(((x - a).powf(-sp) + (b - x).powf(-sp)) / sp)
}
