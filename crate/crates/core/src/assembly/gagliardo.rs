use faer::Mat;
use rayon::prelude::*;

use super::{DofLayout, FracParams, Power, Variant};
use crate::domain::Grid1D;
use crate::error::{FracError, Result};
use crate::quadrature::GaussRule;

pub const DEFAULT_QUAD_ORDER: usize = 6;

/// Number of independent partial sums used for the far-field loops. Fixed so that the
/// reduction order, and hence the result, does not depend on the thread count.
const FAR_CHUNKS: usize = 8;

/// Cached quadrature for the discrete Gagliardo p-energy on a uniform grid.
///
/// Element pairs are classified by their offset `d = |I - J|`:
///
/// * `d = 0`: the interpolant is linear on the element, so the integral is closed-form,
///   `|u_{I+1} - u_I|^p * 2 / ((p - sp)(p - sp + 1))`.
/// * `d = 1`: a Duffy split at the shared node integrates the radial direction exactly
///   (`\int_0^1 r^{p - sp} dr`) and leaves a smooth one-dimensional angular integral.
/// * `d >= 2`: tensor Gauss rule against `|x - y|^{-(1+sp)}`, one weight table per offset.
///
/// The pieces whose nearest kernel singularity sits one element away (the angular rule of
/// touching pairs, offset 2, and the exterior density) use a rule of twice the order.
///
/// All weights carry the factor `h^{1-sp}`, and ordered pairs `(I, J)`, `(J, I)` are folded
/// into a factor 2.
#[derive(Debug, Clone)]
pub struct GagliardoDiscretization {
    grid: Grid1D,
    params: FracParams,
    variant: Variant,
    quad_order: usize,
    rule: GaussRule,
    near_rule: GaussRule,
    layout: DofLayout,
    pub(super) far: Vec<Vec<f64>>,
    pub(super) touch: Vec<(f64, f64)>,
    pub(super) self_weight: f64,
    pub(super) exterior: Option<Exterior>,
}

#[derive(Debug, Clone, PartialEq)]
pub(super) struct Exterior {
    /// `n_cells * 2 quad_order` weights against `|u|^p` at the near-rule Gauss points.
    pub(super) cell_weights: Vec<f64>,
    /// Weight of `|u_1|^p` and `|u_{N-1}|^p` from the singular end of the two boundary cells.
    pub(super) endpoint_weight: f64,
}

/// Dense symmetric matrix of the quadratic (`p = 2`) form over the free dofs.
#[derive(Debug, Clone)]
pub struct StiffnessMatrix {
    pub matrix: Mat<f64>,
    pub variant: Variant,
}

impl StiffnessMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n).map(|i| (0..n).map(|j| self.matrix[(i, j)] * u[j]).sum()).collect()
    }

    pub fn quadratic_form(&self, u: &[f64]) -> f64 {
        self.apply(u).iter().zip(u).map(|(a, b)| a * b).sum()
    }

    pub fn max_abs(&self) -> f64 {
        let n = self.dim();
        let mut m = 0.0f64;
        for j in 0..n {
            for i in 0..n {
                m = m.max(self.matrix[(i, j)].abs());
            }
        }
        m
    }
}

pub fn build_discretization(
    grid: &Grid1D,
    params: FracParams,
    variant: Variant,
    quad_order: usize,
) -> Result<GagliardoDiscretization> {
    GagliardoDiscretization::new(grid, params, variant, quad_order)
}

impl GagliardoDiscretization {
    pub fn new(grid: &Grid1D, params: FracParams, variant: Variant, quad_order: usize) -> Result<Self> {
        if quad_order < 3 {
            return Err(FracError::invalid(format!("quad_order = {quad_order}, need at least 3")));
        }
        let n = grid.n_cells();
        let q = quad_order;
        let rule = GaussRule::new(q);
        let near_rule = GaussRule::new(near_order(q));
        let (p, sp) = (params.p(), params.sp());
        let alpha = 1.0 + sp;
        let hs = grid.h().powf(1.0 - sp);

        let far: Vec<Vec<f64>> = (2..n)
            .map(|d| {
                let df = d as f64;
                let r = if d == 2 { &near_rule } else { &rule };
                let mut w = Vec::with_capacity(r.len() * r.len());
                for (xi, gx) in r.iter() {
                    for (eta, gy) in r.iter() {
                        w.push(2.0 * hs * gx * gy * (df + eta - xi).powf(-alpha));
                    }
                }
                w
            })
            .collect();

        let radial = 1.0 / (p - sp + 1.0);
        let touch = near_rule
            .iter()
            .map(|(tau, g)| (tau, 2.0 * hs * g * radial * (1.0 + tau).powf(-alpha)))
            .collect();

        let self_weight = hs * 2.0 / ((p - sp) * (p - sp + 1.0));

        let exterior = match variant {
            Variant::RegionalNeumann => None,
            Variant::DirichletExterior => {
                let nf = n as f64;
                let mut cell_weights = Vec::with_capacity(n * near_rule.len());
                for c in 0..n {
                    let cf = c as f64;
                    for (xi, g) in near_rule.iter() {
                        let left = if c == 0 { 0.0 } else { (cf + xi).powf(-sp) };
                        let right = if c == n - 1 { 0.0 } else { (nf - cf - xi).powf(-sp) };
                        cell_weights.push(2.0 * hs * g * (left + right) / sp);
                    }
                }
                Some(Exterior {
                    cell_weights,
                    endpoint_weight: 2.0 * hs * radial / sp,
                })
            }
        };

        Ok(Self {
            grid: grid.clone(),
            params,
            variant,
            quad_order,
            rule,
            near_rule,
            layout: DofLayout::new(n, variant),
            far,
            touch,
            self_weight,
            exterior,
        })
    }

    pub(super) fn from_tables(
        grid: &Grid1D,
        params: FracParams,
        variant: Variant,
        quad_order: usize,
        far: Vec<Vec<f64>>,
        touch: Vec<(f64, f64)>,
        self_weight: f64,
        exterior: Option<Exterior>,
    ) -> Self {
        Self {
            grid: grid.clone(),
            params,
            variant,
            quad_order,
            rule: GaussRule::new(quad_order),
            near_rule: GaussRule::new(near_order(quad_order)),
            layout: DofLayout::new(grid.n_cells(), variant),
            far,
            touch,
            self_weight,
            exterior,
        }
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn params(&self) -> FracParams {
        self.params
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn quad_order(&self) -> usize {
        self.quad_order
    }

    pub fn layout(&self) -> DofLayout {
        self.layout
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    /// Sum of all kernel-weighted weights over separated pairs (`|I - J| >= 2`, both orders).
    pub fn far_kernel_mass(&self) -> f64 {
        let n = self.grid.n_cells();
        self.far
            .iter()
            .enumerate()
            .map(|(i, w)| (n - (i + 2)) as f64 * w.iter().sum::<f64>())
            .sum()
    }

    /// True when every stored weight is finite and strictly positive.
    pub fn weights_are_positive(&self) -> bool {
        let ok = |w: f64| w.is_finite() && w > 0.0;
        self.far.iter().flatten().all(|&w| ok(w))
            && self.touch.iter().all(|&(_, w)| ok(w))
            && ok(self.self_weight)
            && self.exterior.as_ref().is_none_or(|e| {
                e.cell_weights.iter().all(|&w| ok(w)) && ok(e.endpoint_weight)
            })
    }

    fn element_values(&self, full: &[f64]) -> ElementValues {
        let at = |rule: &GaussRule| {
            let mut vals = Vec::with_capacity(self.grid.n_cells() * rule.len());
            for c in 0..self.grid.n_cells() {
                let (l, r) = (full[c], full[c + 1]);
                for &xi in &rule.nodes {
                    vals.push(l * (1.0 - xi) + r * xi);
                }
            }
            vals
        };
        ElementValues { base: at(&self.rule), near: at(&self.near_rule) }
    }

    fn far_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let m = self.far.len();
        let chunk = m.div_ceil(FAR_CHUNKS).max(1);
        (0..m).step_by(chunk).map(|s| s..(s + chunk).min(m)).collect()
    }

    /// Gauss values and order used by the far table with index `idx` (offset `idx + 2`).
    fn far_values<'a>(&self, vals: &'a ElementValues, idx: usize) -> (&'a [f64], usize) {
        if idx == 0 {
            (&vals.near, self.near_rule.len())
        } else {
            (&vals.base, self.rule.len())
        }
    }

    fn far_energy(&self, vals: &ElementValues, pw: Power, range: std::ops::Range<usize>) -> f64 {
        let n = self.grid.n_cells();
        let mut total = 0.0;
        for idx in range {
            let d = idx + 2;
            let (v, q) = self.far_values(vals, idx);
            let w = &self.far[idx];
            let mut sum = 0.0;
            for i in 0..n - d {
                let ui = &v[i * q..(i + 1) * q];
                let uj = &v[(i + d) * q..(i + d + 1) * q];
                for (k, &a) in ui.iter().enumerate() {
                    let row = &w[k * q..(k + 1) * q];
                    for (&b, &wk) in uj.iter().zip(row) {
                        sum += wk * pw.abs_pow(a - b);
                    }
                }
            }
            total += sum;
        }
        total
    }

    fn near_energy(&self, full: &[f64], pw: Power) -> f64 {
        let n = self.grid.n_cells();
        let mut e = 0.0;
        for c in 0..n {
            e += self.self_weight * pw.abs_pow(full[c + 1] - full[c]);
        }
        for c in 0..n - 1 {
            let gl = full[c + 1] - full[c];
            let gr = full[c + 2] - full[c + 1];
            for &(tau, w) in &self.touch {
                e += w * (pw.abs_pow(gl + gr * tau) + pw.abs_pow(gr + gl * tau));
            }
        }
        e
    }

    fn exterior_energy(&self, full: &[f64], vals: &ElementValues, pw: Power) -> f64 {
        let Some(ext) = &self.exterior else { return 0.0 };
        let n = self.grid.n_cells();
        let cells: f64 = ext
            .cell_weights
            .iter()
            .zip(&vals.near)
            .map(|(w, v)| w * pw.abs_pow(*v))
            .sum();
        cells + ext.endpoint_weight * (pw.abs_pow(full[1]) + pw.abs_pow(full[n - 1]))
    }

    fn regional_full(&self, full: &[f64], vals: &ElementValues, pw: Power) -> f64 {
        let parts: Vec<f64> = self
            .far_ranges()
            .into_par_iter()
            .map(|r| self.far_energy(vals, pw, r))
            .collect();
        self.near_energy(full, pw) + parts.iter().sum::<f64>()
    }

    /// Discrete p-energy of the interpolant of the free-dof vector `u`: the regional double
    /// integral plus, for the Dirichlet variant, the exterior term.
    pub fn energy(&self, u: &[f64]) -> Result<f64> {
        self.layout.check(u)?;
        let pw = Power::new(self.params.p());
        let full = self.layout.embed(u);
        let vals = self.element_values(&full);
        Ok(self.regional_full(&full, &vals, pw) + self.exterior_energy(&full, &vals, pw))
    }

    /// Only the double integral over the interval, `[u]^p_{W^{s,p}(a,b)}`.
    pub fn regional_energy(&self, u: &[f64]) -> Result<f64> {
        self.layout.check(u)?;
        let pw = Power::new(self.params.p());
        let full = self.layout.embed(u);
        let vals = self.element_values(&full);
        Ok(self.regional_full(&full, &vals, pw))
    }

    /// Only the exterior term `2 \int |u|^p kappa` (zero for the regional variant).
    pub fn exterior_part(&self, u: &[f64]) -> Result<f64> {
        self.layout.check(u)?;
        let pw = Power::new(self.params.p());
        let full = self.layout.embed(u);
        let vals = self.element_values(&full);
        Ok(self.exterior_energy(&full, &vals, pw))
    }

    /// Gradient of [`Self::energy`] with respect to the free dofs.
    pub fn energy_gradient(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.smoothed_gradient(u, 0.0)
    }

    /// Gradient with `|t|^{p-2} t` replaced by `(t^2 + eta^2)^{(p-2)/2} t`. Only differs from
    /// the exact gradient for `p < 2` and `eta > 0`.
    pub fn smoothed_gradient(&self, u: &[f64], eta: f64) -> Result<Vec<f64>> {
        self.layout.check(u)?;
        let pw = Power::new(self.params.p());
        let n = self.grid.n_cells();
        let full = self.layout.embed(u);
        let vals = self.element_values(&full);
        let dphi = |t: f64| pw.smoothed_derivative(t, eta);

        let partials: Vec<ElementValues> = self
            .far_ranges()
            .into_par_iter()
            .map(|range| {
                let mut dv = ElementValues {
                    base: vec![0.0; vals.base.len()],
                    near: vec![0.0; vals.near.len()],
                };
                for idx in range {
                    let d = idx + 2;
                    let (v, q) = self.far_values(&vals, idx);
                    let out = if idx == 0 { &mut dv.near } else { &mut dv.base };
                    let w = &self.far[idx];
                    for i in 0..n - d {
                        let j = i + d;
                        for k in 0..q {
                            let a = v[i * q + k];
                            let row = &w[k * q..(k + 1) * q];
                            let mut acc = 0.0;
                            for l in 0..q {
                                let g = row[l] * dphi(a - v[j * q + l]);
                                acc += g;
                                out[j * q + l] -= g;
                            }
                            out[i * q + k] += acc;
                        }
                    }
                }
                dv
            })
            .collect();
        let mut dv = ElementValues {
            base: vec![0.0; vals.base.len()],
            near: vec![0.0; vals.near.len()],
        };
        for part in &partials {
            for (acc, v) in dv.base.iter_mut().zip(&part.base) {
                *acc += v;
            }
            for (acc, v) in dv.near.iter_mut().zip(&part.near) {
                *acc += v;
            }
        }

        let mut grad = vec![0.0; n + 1];
        if let Some(ext) = &self.exterior {
            for (acc, (w, v)) in dv.near.iter_mut().zip(ext.cell_weights.iter().zip(&vals.near)) {
                *acc += w * dphi(*v);
            }
            grad[1] += ext.endpoint_weight * dphi(full[1]);
            grad[n - 1] += ext.endpoint_weight * dphi(full[n - 1]);
        }
        for (rule, dvals) in [(&self.rule, &dv.base), (&self.near_rule, &dv.near)] {
            let q = rule.len();
            for c in 0..n {
                for (k, &xi) in rule.nodes.iter().enumerate() {
                    grad[c] += dvals[c * q + k] * (1.0 - xi);
                    grad[c + 1] += dvals[c * q + k] * xi;
                }
            }
        }
        for c in 0..n {
            let g = self.self_weight * dphi(full[c + 1] - full[c]);
            grad[c + 1] += g;
            grad[c] -= g;
        }
        for c in 0..n - 1 {
            let gl = full[c + 1] - full[c];
            let gr = full[c + 2] - full[c + 1];
            let (mut dgl, mut dgr) = (0.0, 0.0);
            for &(tau, w) in &self.touch {
                let f1 = w * dphi(gl + gr * tau);
                let f2 = w * dphi(gr + gl * tau);
                dgl += f1 + tau * f2;
                dgr += tau * f1 + f2;
            }
            grad[c + 1] += dgl - dgr;
            grad[c] -= dgl;
            grad[c + 2] += dgr;
        }
        Ok(self.layout.restrict(&grad))
    }

    /// Matrix `A` of the quadratic form, `u^T A u = energy(u)` for `p = 2`.
    pub fn assemble_form_p2(&self) -> Result<StiffnessMatrix> {
        if !self.params.is_quadratic() {
            return Err(FracError::invalid(format!(
                "quadratic form requested for p = {}",
                self.params.p()
            )));
        }
        let n = self.grid.n_cells();
        let mut full = Mat::<f64>::zeros(n + 1, n + 1);

        for c in 0..n {
            let w = self.self_weight;
            full[(c, c)] += w;
            full[(c + 1, c + 1)] += w;
            full[(c, c + 1)] -= w;
            full[(c + 1, c)] -= w;
        }

        let mut touch_block = [[0.0; 3]; 3];
        for &(tau, w) in &self.touch {
            let l1 = [-1.0, 1.0 - tau, tau];
            let l2 = [-tau, tau - 1.0, 1.0];
            for a in 0..3 {
                for b in 0..3 {
                    touch_block[a][b] += w * (l1[a] * l1[b] + l2[a] * l2[b]);
                }
            }
        }
        for c in 0..n - 1 {
            for a in 0..3 {
                for b in 0..3 {
                    full[(c + a, c + b)] += touch_block[a][b];
                }
            }
        }

        for (idx, w) in self.far.iter().enumerate() {
            let d = idx + 2;
            let xi = if idx == 0 { &self.near_rule.nodes } else { &self.rule.nodes };
            let q = xi.len();
            let mut block = [[0.0; 4]; 4];
            for k in 0..q {
                for l in 0..q {
                    let wk = w[k * q + l];
                    let ell = [1.0 - xi[k], xi[k], -(1.0 - xi[l]), -xi[l]];
                    for a in 0..4 {
                        for b in 0..4 {
                            block[a][b] += wk * ell[a] * ell[b];
                        }
                    }
                }
            }
            for i in 0..n - d {
                let nodes = [i, i + 1, i + d, i + d + 1];
                for a in 0..4 {
                    for b in 0..4 {
                        full[(nodes[a], nodes[b])] += block[a][b];
                    }
                }
            }
        }

        if let Some(ext) = &self.exterior {
            let xi = &self.near_rule.nodes;
            let q = xi.len();
            for c in 0..n {
                let mut block = [[0.0; 2]; 2];
                for k in 0..q {
                    let w = ext.cell_weights[c * q + k];
                    let ell = [1.0 - xi[k], xi[k]];
                    for a in 0..2 {
                        for b in 0..2 {
                            block[a][b] += w * ell[a] * ell[b];
                        }
                    }
                }
                for a in 0..2 {
                    for b in 0..2 {
                        full[(c + a, c + b)] += block[a][b];
                    }
                }
            }
            full[(1, 1)] += ext.endpoint_weight;
            full[(n - 1, n - 1)] += ext.endpoint_weight;
        }

        let off = self.layout.offset();
        let dim = self.layout.dim();
        let mut matrix = Mat::<f64>::zeros(dim, dim);
        for j in 0..dim {
            for i in 0..dim {
                matrix[(i, j)] = full[(i + off, j + off)];
            }
        }
        // Exact symmetry; the scatter above is symmetric up to summation order only.
        for j in 0..dim {
            for i in (j + 1)..dim {
                let avg = 0.5 * (matrix[(i, j)] + matrix[(j, i)]);
                matrix[(i, j)] = avg;
                matrix[(j, i)] = avg;
            }
        }
        Ok(StiffnessMatrix { matrix, variant: self.variant })
    }
}

/// Gauss order used for the near-field pieces.
pub(super) fn near_order(quad_order: usize) -> usize {
    2 * quad_order
}

/// Interpolant values at the Gauss points of both rules, cell-major.
struct ElementValues {
    base: Vec<f64>,
    near: Vec<f64>,
}
