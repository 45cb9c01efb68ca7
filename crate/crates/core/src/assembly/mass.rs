use faer::Mat;

use super::{DofLayout, Variant};
use crate::domain::{Grid1D, WeightField};
use crate::error::{FracError, Result};
use crate::quadrature::GaussRule;

/// Weighted `L^p` functional `N_p(u) = sum_c rho_c \int_c |Pi u|^p` over piecewise-linear
/// interpolants, with the consistent mass matrix as its `p = 2` form.
#[derive(Debug, Clone)]
pub struct MassMatrix {
    h: f64,
    weights: Vec<f64>,
    layout: DofLayout,
    p: f64,
}

pub fn assemble_mass(grid: &Grid1D, field: &WeightField, p: f64, variant: Variant) -> Result<MassMatrix> {
    if field.grid() != grid {
        return Err(FracError::invalid("weight field lives on a different grid"));
    }
    MassMatrix::from_cell_weights(grid, field.cell_values().to_vec(), p, variant)
}

impl MassMatrix {
    pub fn from_cell_weights(grid: &Grid1D, weights: Vec<f64>, p: f64, variant: Variant) -> Result<Self> {
        if weights.len() != grid.n_cells() {
            return Err(FracError::invalid(format!(
                "{} cell weights for {} cells",
                weights.len(),
                grid.n_cells()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(FracError::invalid("cell weights must be finite and non-negative"));
        }
        if !(p > 1.0 && p.is_finite()) {
            return Err(FracError::invalid(format!("p = {p} must lie in (1, inf)")));
        }
        Ok(Self { h: grid.h(), weights, layout: DofLayout::new(grid.n_cells(), variant), p })
    }

    /// Unit weight on every cell.
    pub fn unit(grid: &Grid1D, p: f64, variant: Variant) -> Result<Self> {
        Self::from_cell_weights(grid, vec![1.0; grid.n_cells()], p, variant)
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn layout(&self) -> DofLayout {
        self.layout
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn cell_weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            weights: self.weights.iter().map(|w| w * factor).collect(),
            ..self.clone()
        }
    }

    /// Same functional with the weight zeroed on cells where `keep` is false.
    pub fn masked(&self, keep: impl Fn(usize) -> bool) -> Self {
        Self {
            weights: self
                .weights
                .iter()
                .enumerate()
                .map(|(c, w)| if keep(c) { *w } else { 0.0 })
                .collect(),
            ..self.clone()
        }
    }

    /// Same cell weights with a different exponent.
    pub fn with_exponent(&self, p: f64) -> Self {
        Self { p, ..self.clone() }
    }

    /// `N_p(u)`.
    pub fn lp_value(&self, u: &[f64]) -> Result<f64> {
        self.layout.check(u)?;
        let full = self.layout.embed(u);
        Ok(self
            .weights
            .iter()
            .enumerate()
            .map(|(c, w)| w * self.h * cell_lp_integral(full[c], full[c + 1], self.p))
            .sum())
    }

    /// `grad N_p(u)` over the free dofs.
    pub fn lp_gradient(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.layout.check(u)?;
        let full = self.layout.embed(u);
        let mut grad = vec![0.0; full.len()];
        for (c, w) in self.weights.iter().enumerate() {
            let (ga, gb) = cell_lp_gradient(full[c], full[c + 1], self.p);
            grad[c] += w * self.h * ga;
            grad[c + 1] += w * self.h * gb;
        }
        Ok(self.layout.restrict(&grad))
    }

    /// Dense weighted consistent mass matrix over the free dofs.
    pub fn to_dense(&self) -> Mat<f64> {
        p1_mass_dense(self.h, &self.weights, self.layout)
    }

    /// `u^T M v` with the `p = 2` mass matrix.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        let fu = self.layout.embed(u);
        let fv = self.layout.embed(v);
        self.weights
            .iter()
            .enumerate()
            .map(|(c, w)| {
                let (a0, a1, b0, b1) = (fu[c], fu[c + 1], fv[c], fv[c + 1]);
                w * self.h / 6.0 * (2.0 * a0 * b0 + a0 * b1 + a1 * b0 + 2.0 * a1 * b1)
            })
            .sum()
    }

    /// `M u` with the `p = 2` mass matrix.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let full = self.layout.embed(u);
        let mut out = vec![0.0; full.len()];
        for (c, w) in self.weights.iter().enumerate() {
            let m = w * self.h / 6.0;
            out[c] += m * (2.0 * full[c] + full[c + 1]);
            out[c + 1] += m * (full[c] + 2.0 * full[c + 1]);
        }
        self.layout.restrict(&out)
    }
}

/// Consistent P1 mass matrix `sum_c w_c h/6 [[2, 1], [1, 2]]` restricted to the free dofs.
/// The weights may have any sign.
pub fn p1_mass_dense(h: f64, weights: &[f64], layout: DofLayout) -> Mat<f64> {
    let n = weights.len();
    let mut full = Mat::<f64>::zeros(n + 1, n + 1);
    for (c, w) in weights.iter().enumerate() {
        let m = w * h / 6.0;
        full[(c, c)] += 2.0 * m;
        full[(c + 1, c + 1)] += 2.0 * m;
        full[(c, c + 1)] += m;
        full[(c + 1, c)] += m;
    }
    let off = layout.offset();
    let dim = layout.dim();
    Mat::from_fn(dim, dim, |i, j| full[(i + off, j + off)])
}

fn near_equal(a: f64, b: f64) -> bool {
    (b - a).abs() <= 1e-3 * a.abs().max(b.abs())
}

/// `\int_0^1 |a (1 - t) + b t|^p dt`.
pub fn cell_lp_integral(a: f64, b: f64, p: f64) -> f64 {
    if p == 2.0 {
        return (a * a + a * b + b * b) / 3.0;
    }
    if a == b {
        return a.abs().powf(p);
    }
    if near_equal(a, b) {
        let rule = GaussRule::new(6);
        return rule.integrate(|t| (a + (b - a) * t).abs().powf(p));
    }
    let f = |t: f64| t.abs().powf(p) * t / (p + 1.0);
    (f(b) - f(a)) / (b - a)
}

/// Partial derivatives of [`cell_lp_integral`] in `a` and `b`.
fn cell_lp_gradient(a: f64, b: f64, p: f64) -> (f64, f64) {
    if p == 2.0 {
        return ((2.0 * a + b) / 3.0, (a + 2.0 * b) / 3.0);
    }
    if near_equal(a, b) {
        let rule = GaussRule::new(6);
        let dphi = |x: f64| if x == 0.0 { 0.0 } else { p * x.abs().powf(p - 1.0) * x.signum() };
        let ga = rule.integrate(|t| dphi(a + (b - a) * t) * (1.0 - t));
        let gb = rule.integrate(|t| dphi(a + (b - a) * t) * t);
        return (ga, gb);
    }
    let i = cell_lp_integral(a, b, p);
    ((i - a.abs().powf(p)) / (b - a), (b.abs().powf(p) - i) / (b - a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{make_grid, PeriodicWeight, Scale};

    #[test]
    fn unit_mass_of_constant() {
        let g = make_grid(0.0, 1.0, 10).unwrap();
        let m = MassMatrix::unit(&g, 2.0, Variant::RegionalNeumann).unwrap();
        let ones = vec![1.0; m.dim()];
        assert!((m.inner(&ones, &ones) - 1.0).abs() < 1e-14);
        assert!((m.lp_value(&ones).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn weight_two_doubles() {
        let g = make_grid(0.0, 1.0, 12).unwrap();
        let one = MassMatrix::unit(&g, 2.0, Variant::DirichletExterior).unwrap();
        let w = PeriodicWeight::constant(2.0).unwrap();
        let f = crate::domain::sample_weight(&w, &g, Scale::Eps(0.5)).unwrap();
        let two = assemble_mass(&g, &f, 2.0, Variant::DirichletExterior).unwrap();
        let u: Vec<f64> = (0..one.dim()).map(|i| (i as f64 * 0.7).sin()).collect();
        assert_eq!(two.inner(&u, &u), 2.0 * one.inner(&u, &u));
    }

    #[test]
    fn hat_function_p3() {
        let g = make_grid(0.0, 1.0, 8).unwrap();
        let rho = 1.7;
        let m = MassMatrix::from_cell_weights(&g, vec![rho; 8], 3.0, Variant::DirichletExterior).unwrap();
        let mut hat = vec![0.0; m.dim()];
        hat[3] = 1.0;
        let want = 2.0 * g.h() * 0.25 * rho;
        assert!((m.lp_value(&hat).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn closed_form_matches_quadrature() {
        let rule = GaussRule::new(40);
        for &(a, b) in &[(0.3, 1.2), (-0.5, 0.8), (1.0, 1.0005), (-2.0, -0.1), (0.0, 1.0)] {
            for p in [1.5, 2.0, 2.7, 3.0] {
                let f = |t: f64| (a + (b - a) * t).abs().powf(p);
                let want = if a * b <= 0.0 {
                    // Substitute x = L r^8 on each side of the zero to flatten the endpoint singularity.
                    let side = |len: f64| {
                        len.powf(p + 1.0) * rule.integrate(|r| 8.0 * r.powf(8.0 * p + 7.0))
                    };
                    (side(a.abs()) + side(b.abs())) / (b - a)
                } else {
                    rule.integrate(f)
                };
                let got = cell_lp_integral(a, b, p);
                assert!((got - want).abs() <= 1e-13 * want, "a={a} b={b} p={p}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn gradient_matches_differences() {
        let g = make_grid(0.0, 1.0, 9).unwrap();
        for p in [1.5, 2.0, 3.0, 3.5] {
            let weights: Vec<f64> = (0..9).map(|c| 1.0 + 0.1 * c as f64).collect();
            let m = MassMatrix::from_cell_weights(&g, weights, p, Variant::RegionalNeumann).unwrap();
            let u: Vec<f64> = (0..m.dim()).map(|i| (1.3 * i as f64).cos()).collect();
            let grad = m.lp_gradient(&u).unwrap();
            for i in 0..m.dim() {
                let t = 1e-6;
                let mut up = u.clone();
                up[i] += t;
                let mut um = u.clone();
                um[i] -= t;
                let fd = (m.lp_value(&up).unwrap() - m.lp_value(&um).unwrap()) / (2.0 * t);
                assert!((fd - grad[i]).abs() <= 1e-7 * grad[i].abs().max(1e-3), "p={p} i={i}: {fd} vs {}", grad[i]);
            }
        }
    }

    #[test]
    fn dense_matches_inner() {
        let g = make_grid(0.0, 2.0, 7).unwrap();
        let weights: Vec<f64> = (0..7).map(|c| 1.0 + c as f64).collect();
        let m = MassMatrix::from_cell_weights(&g, weights, 2.0, Variant::DirichletExterior).unwrap();
        let dense = m.to_dense();
        let u: Vec<f64> = (0..m.dim()).map(|i| i as f64 - 2.0).collect();
        let mut via_dense = 0.0;
        for i in 0..m.dim() {
            for j in 0..m.dim() {
                via_dense += u[i] * dense[(i, j)] * u[j];
            }
        }
        assert!((via_dense - m.inner(&u, &u)).abs() < 1e-13);
        assert!((m.lp_value(&u).unwrap() - m.inner(&u, &u)).abs() < 1e-13);
        let mu = m.apply(&u);
        let dot: f64 = mu.iter().zip(&u).map(|(a, b)| a * b).sum();
        assert!((dot - via_dense).abs() < 1e-13);
    }

    #[test]
    fn grid_mismatch() {
        let g = make_grid(0.0, 1.0, 8).unwrap();
        let other = make_grid(0.0, 1.0, 16).unwrap();
        let f = WeightField::constant(&other, 1.0).unwrap();
        assert!(assemble_mass(&g, &f, 2.0, Variant::RegionalNeumann).is_err());
    }
}
