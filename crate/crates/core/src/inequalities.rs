//! Numerical versions of the auxiliary inequalities: Poincare on small intervals, the
//! oscillating-integral bounds, the boundary-layer estimate and the pointwise convexity
//! inequality for `|x|^p`.

use std::io::Write;

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assembly::{
    assemble_mass, build_discretization, cell_lp_integral, p1_mass_dense, DofLayout, FracParams,
    GagliardoDiscretization, MassMatrix, Variant, DEFAULT_QUAD_ORDER,
};
use crate::domain::{make_grid, sample_weight, Grid1D, PeriodicWeight, Scale, WeightField};
use crate::error::{FracError, Result};
use crate::homogenize::{fit_rate, RateFit};
use crate::report::{fmt_float, write_csv};
use crate::spectral::{dense_gevp, linear_spectrum, minimize_quotient, MinimizerOptions, QuotientProblem};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstantRow {
    pub param: f64,
    pub constant: f64,
    pub normalized_constant: f64,
}

/// Best-constant estimates over a decreasing parameter sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstantReport {
    pub method: String,
    pub s: f64,
    pub p: f64,
    pub rows: Vec<ConstantRow>,
    pub fit: Option<RateFit>,
    pub notes: Vec<String>,
}

impl ConstantReport {
    fn new(method: &str, params: FracParams, rows: Vec<ConstantRow>, notes: Vec<String>) -> Result<Self> {
        if rows.windows(2).any(|w| !(w[1].param < w[0].param)) {
            return Err(FracError::invalid("sweep values must be strictly decreasing"));
        }
        let pairs: Vec<(f64, f64)> = rows.iter().map(|r| (r.param, r.constant)).collect();
        let fit = fit_rate(&pairs).ok();
        Ok(Self { method: method.into(), s: params.s(), p: params.p(), rows, fit, notes })
    }

    /// `max / min` of the normalised constants (`None` if one of them is zero).
    pub fn normalized_spread(&self) -> Option<f64> {
        let vals = self.rows.iter().map(|r| r.normalized_constant);
        let (lo, hi) = vals.fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
        (lo > 0.0).then(|| hi / lo)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let rows = self.rows.iter().map(|r| vec![fmt_float(r.param), fmt_float(r.constant), fmt_float(r.normalized_constant)]);
        write_csv(out, &["param", "constant", "normalized_constant"], rows)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// `C_P = sup ||u - mean(u)||_p / [u]_{W^{s,p}(0, eps)}` over the grid `(0, eps, n_cells)`.
pub fn poincare_constant(n_cells: usize, params: FracParams, eps: f64, opts: &MinimizerOptions) -> Result<f64> {
    if n_cells < 16 {
        return Err(FracError::invalid(format!("n_cells = {n_cells}, need at least 16")));
    }
    let grid = make_grid(0.0, eps, n_cells)?;
    let disc = build_discretization(&grid, params, Variant::RegionalNeumann, DEFAULT_QUAD_ORDER)?;
    let mass = MassMatrix::unit(&grid, params.p(), Variant::RegionalNeumann)?;
    if params.is_quadratic() {
        // Eigenvectors past the constant one are M-orthogonal to constants, i.e. mean-zero.
        let a = disc.assemble_form_p2()?;
        let (vals, _) = dense_gevp(a.matrix.as_ref(), mass.to_dense().as_ref(), false)?;
        return Ok(vals[1].powf(-0.5));
    }
    let constraint = mass.apply(&vec![1.0; disc.dim()]);
    let problem = QuotientProblem { disc: &disc, mass: &mass, extra: None, constraint: Some(constraint) };
    Ok(minimize_quotient(&problem, opts)?.value.powf(-1.0 / params.p()))
}

pub fn poincare_report(n_cells: usize, params: FracParams, eps_list: &[f64], opts: &MinimizerOptions) -> Result<ConstantReport> {
    let rows = eps_list
        .iter()
        .map(|&eps| {
            let c = poincare_constant(n_cells, params, eps, opts)?;
            Ok(ConstantRow { param: eps, constant: c, normalized_constant: c / eps.powf(params.s()) })
        })
        .collect::<Result<Vec<_>>>()?;
    let method = if params.is_quadratic() { "eigenvalue" } else { "constrained minimisation" };
    ConstantReport::new(&format!("poincare/{method}"), params, rows, vec![])
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeValue {
    pub label: String,
    pub ratio: f64,
}

/// Oscillating-integral ratio at one scale: the exact discrete supremum when `p = 2`, and
/// the best probe otherwise.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OscillationEstimate {
    pub eps: f64,
    pub ratio: f64,
    pub exact: Option<f64>,
    pub probes: Vec<ProbeValue>,
}

/// Oscillating part `g = rho - rho_bar` sampled like the weight itself.
fn oscillating_part(w: &PeriodicWeight, grid: &Grid1D, eps: f64) -> Result<Vec<f64>> {
    let field = sample_weight(w, grid, Scale::Eps(eps))?;
    let mean = w.mean();
    Ok(field.cell_values().iter().map(|v| v - mean).collect())
}

struct RatioParts<'a> {
    disc: &'a GagliardoDiscretization,
    regional: &'a GagliardoDiscretization,
    unit: MassMatrix,
    g: Vec<f64>,
}

impl RatioParts<'_> {
    fn ratio(&self, v: &[f64]) -> Result<f64> {
        let p = self.disc.params().p();
        let layout = self.disc.layout();
        let full = layout.embed(v);
        let h = self.disc.grid().h();
        let num: f64 = self.g.iter().enumerate().map(|(c, g)| g * h * cell_lp_integral(full[c], full[c + 1], p)).sum();
        let lp = self.unit.lp_value(v)?;
        let seminorm = self.regional_energy(v)?;
        let den = match self.disc.variant() {
            Variant::DirichletExterior => seminorm.powf(1.0 / p) * lp.powf((p - 1.0) / p),
            Variant::RegionalNeumann => lp + seminorm,
        };
        Ok(if num == 0.0 { 0.0 } else { num.abs() / den })
    }

    fn regional_energy(&self, v: &[f64]) -> Result<f64> {
        if self.disc.variant() == self.regional.variant() {
            return self.regional.regional_energy(v);
        }
        self.regional.regional_energy(&self.disc.layout().embed(v))
    }
}

/// `max_v |\int g(x/eps) |v|^p| / D(v)` with `g = rho - rho_bar`. For the Dirichlet variant
/// `D(v) = [v]_{W^{s,p}(Omega)} ||v||_p^{p-1}`; for the Neumann variant
/// `D(v) = ||v||_{W^{s,p}(Omega)}^p = ||v||_p^p + [v]^p`.
///
/// Probes: `probe_count` seeded random vectors, the first five `p = 2` eigenvectors, and
/// `phi_1 (1 + tau eps^s g / max|g|)` for a few `tau`. For `p = 2` the exact supremum of
/// the discrete problem is computed as well.
pub fn oscillation_ratio(
    w: &PeriodicWeight,
    eps: f64,
    disc: &GagliardoDiscretization,
    probe_count: usize,
    seed: u64,
) -> Result<OscillationEstimate> {
    let grid = disc.grid();
    let params = disc.params();
    let g = oscillating_part(w, grid, eps)?;
    let owned_regional;
    let regional = if disc.variant() == Variant::RegionalNeumann {
        disc
    } else {
        owned_regional = build_discretization(grid, params, Variant::RegionalNeumann, disc.quad_order())?;
        &owned_regional
    };
    let parts = RatioParts { disc, regional, unit: MassMatrix::unit(grid, params.p(), disc.variant())?, g };
    let dim = disc.dim();
    let mut probes = Vec::new();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..probe_count {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        probes.push(ProbeValue { label: format!("random {i}"), ratio: parts.ratio(&v)? });
    }

    let quad = build_discretization(grid, params.quadratic(), disc.variant(), disc.quad_order())?;
    let unit2 = MassMatrix::unit(grid, 2.0, disc.variant())?;
    let spec = linear_spectrum(&quad, &quad.assemble_form_p2()?, &unit2, "const:1", 5.min(dim))?;
    for (k, v) in spec.eigenvectors.iter().enumerate() {
        probes.push(ProbeValue { label: format!("eigenvector {}", k + 1), ratio: parts.ratio(v)? });
    }
    let gmax = parts.g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if gmax > 0.0 {
        let layout = disc.layout();
        let osc: Vec<f64> = grid.nodes().iter().map(|&x| (w.eval(x / eps) - w.mean()) / gmax).collect();
        let osc = layout.restrict(&osc);
        for tau in [0.25, 0.5, 1.0, 2.0] {
            let t = tau * eps.powf(params.s());
            let v: Vec<f64> = spec.eigenvectors[0].iter().zip(&osc).map(|(phi, o)| phi * (1.0 + t * o)).collect();
            probes.push(ProbeValue { label: format!("modulated tau={tau}"), ratio: parts.ratio(&v)? });
        }
    }

    let exact = if params.is_quadratic() && gmax > 0.0 { Some(exact_ratio_p2(&parts)?) } else { None };
    let best_probe = probes.iter().map(|p| p.ratio).fold(0.0, f64::max);
    let ratio = exact.map_or(best_probe, |e| e.max(best_probe));
    Ok(OscillationEstimate { eps, ratio, exact, probes })
}

/// The oscillation quotient of a single nodal vector `v` (free dofs of `disc`).
pub fn oscillation_quotient(w: &PeriodicWeight, eps: f64, disc: &GagliardoDiscretization, v: &[f64]) -> Result<f64> {
    disc.layout().check(v)?;
    let grid = disc.grid();
    let regional = build_discretization(grid, disc.params(), Variant::RegionalNeumann, disc.quad_order())?;
    let parts = RatioParts {
        disc,
        regional: &regional,
        unit: MassMatrix::unit(grid, disc.params().p(), disc.variant())?,
        g: oscillating_part(w, grid, eps)?,
    };
    parts.ratio(v)
}

/// Largest `|lambda|` of `G x = lambda B x`.
fn max_abs_eig(g: &Mat<f64>, b: &Mat<f64>) -> Result<f64> {
    let (vals, _) = dense_gevp(g.as_ref(), b.as_ref(), false)?;
    Ok(vals[0].abs().max(vals[vals.len() - 1].abs()))
}

/// Exact discrete supremum for `p = 2`. Neumann: one pencil `(G, A + M)`. Dirichlet: by
/// `1 / sqrt(ab) = max_a 2 / (alpha a + b / alpha)` the supremum is
/// `max_alpha 2 lambda_max(G; alpha A + M / alpha)`, maximised over `log alpha`.
fn exact_ratio_p2(parts: &RatioParts<'_>) -> Result<f64> {
    let disc = parts.disc;
    let layout: DofLayout = disc.layout();
    let gm = p1_mass_dense(disc.grid().h(), &parts.g, layout);
    let m = parts.unit.to_dense();
    let full_a = parts.regional.assemble_form_p2()?.matrix;
    let off = layout.offset();
    let a = Mat::from_fn(layout.dim(), layout.dim(), |i, j| full_a[(i + off, j + off)]);
    if disc.variant() == Variant::RegionalNeumann {
        return max_abs_eig(&gm, &(&a + &m));
    }
    let (am, _) = dense_gevp(a.as_ref(), m.as_ref(), false)?;
    let (lo, hi) = (am[0], am[am.len() - 1]);
    let f = |log_alpha: f64| -> Result<f64> {
        let alpha = log_alpha.exp();
        let b = &a * faer::Scale(alpha) + &m * faer::Scale(1.0 / alpha);
        Ok(2.0 * max_abs_eig(&gm, &b)?)
    };
    let (x0, x1) = ((0.1 / hi.sqrt()).ln(), (10.0 / lo.sqrt()).ln());
    let n_scan = 24;
    let xs: Vec<f64> = (0..=n_scan).map(|i| x0 + (x1 - x0) * i as f64 / n_scan as f64).collect();
    let vals = xs.iter().map(|&x| f(x)).collect::<Result<Vec<_>>>()?;
    let (ib, _) = vals.iter().enumerate().fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    let (mut lo_x, mut hi_x) = (xs[ib.saturating_sub(1)], xs[(ib + 1).min(n_scan)]);
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi_x - ratio * (hi_x - lo_x);
    let mut d = lo_x + ratio * (hi_x - lo_x);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    for _ in 0..30 {
        if fc > fd {
            hi_x = d;
            d = c;
            fd = fc;
            c = hi_x - ratio * (hi_x - lo_x);
            fc = f(c)?;
        } else {
            lo_x = c;
            c = d;
            fc = fd;
            d = lo_x + ratio * (hi_x - lo_x);
            fd = f(d)?;
        }
    }
    Ok(vals[ib].max(fc).max(fd))
}

pub fn oscillation_report(
    w: &PeriodicWeight,
    eps_list: &[f64],
    disc: &GagliardoDiscretization,
    probe_count: usize,
    seed: u64,
) -> Result<(ConstantReport, Vec<OscillationEstimate>)> {
    let s = disc.params().s();
    let estimates = eps_list
        .iter()
        .map(|&eps| oscillation_ratio(w, eps, disc, probe_count, seed))
        .collect::<Result<Vec<_>>>()?;
    let rows = estimates
        .iter()
        .map(|e| ConstantRow { param: e.eps, constant: e.ratio, normalized_constant: e.ratio / e.eps.powf(s) })
        .collect();
    let method = format!(
        "oscillation/{}/{}",
        disc.variant(),
        if disc.params().is_quadratic() { "exact" } else { "probes" }
    );
    let notes = vec![format!("{probe_count} random probes, 5 eigenvectors, 4 modulated probes, seed {seed}")];
    Ok((ConstantReport::new(&method, disc.params(), rows, notes)?, estimates))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BoundaryLayer {
    pub delta: f64,
    /// `sup ||u||^p_{L^p(G_delta)} / ||u||^p_{W^{s,p}}`.
    pub sigma: f64,
    /// `sigma^{1/p}`, the constant of the norm inequality.
    pub constant: f64,
}

/// Boundary-layer quotient on `grid` with `G_delta` the cells whose midpoint lies within
/// `delta` of the boundary (exact when `delta` is a multiple of `h`).
pub fn boundary_layer_constant(
    grid: &Grid1D,
    delta: f64,
    params: FracParams,
    opts: &MinimizerOptions,
) -> Result<BoundaryLayer> {
    params.require_trace_regime()?;
    if !(delta > 0.0 && delta <= 0.5 * grid.length() * (1.0 + 1e-12)) {
        return Err(FracError::invalid(format!("delta = {delta} outside (0, |Omega| / 2]")));
    }
    if delta < grid.h() {
        return Err(FracError::Resolution(format!("delta = {delta} is below the cell width {}", grid.h())));
    }
    let disc = build_discretization(grid, params, Variant::RegionalNeumann, DEFAULT_QUAD_ORDER)?;
    let unit = MassMatrix::unit(grid, params.p(), Variant::RegionalNeumann)?;
    let (a, b) = (grid.a(), grid.b());
    let layer = unit.masked(|c| {
        let m = grid.midpoint(c);
        (m - a).min(b - m) < delta
    });
    let sigma = if params.is_quadratic() {
        let form = disc.assemble_form_p2()?.matrix + unit.to_dense();
        let (vals, _) = dense_gevp(layer.to_dense().as_ref(), form.as_ref(), false)?;
        vals[vals.len() - 1]
    } else {
        let problem = QuotientProblem { disc: &disc, mass: &layer, extra: Some(&unit), constraint: None };
        1.0 / minimize_quotient(&problem, opts)?.value
    };
    Ok(BoundaryLayer { delta, sigma, constant: sigma.powf(1.0 / params.p()) })
}

pub fn boundary_layer_report(grid: &Grid1D, deltas: &[f64], params: FracParams, opts: &MinimizerOptions) -> Result<ConstantReport> {
    let rows = deltas
        .iter()
        .map(|&d| {
            let bl = boundary_layer_constant(grid, d, params, opts)?;
            Ok(ConstantRow { param: d, constant: bl.sigma, normalized_constant: bl.sigma / d })
        })
        .collect::<Result<Vec<_>>>()?;
    ConstantReport::new("boundary-layer/sigma", params, rows, vec![])
}

/// `|x|^p - |y|^p <= p |x|^{p-2} x . (x - y)`, allowing a few ulps of rounding.
pub fn pointwise_p_inequality(x: &[f64], y: &[f64], p: f64) -> bool {
    let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    let lhs = nx.powf(p) - ny.powf(p);
    let rhs = if nx == 0.0 {
        0.0
    } else {
        let diff: f64 = x.iter().zip(y).map(|(a, b)| a * (a - b)).sum();
        p * nx.powf(p - 2.0) * diff
    };
    let scale = nx.powf(p) + ny.powf(p) + rhs.abs();
    lhs <= rhs + 8.0 * f64::EPSILON * scale
}

/// Violations among `samples` seeded random triples `(x, y, p)` with `x, y` in `[-2, 2]^dim`
/// and `p` drawn from `exponents`.
pub fn pointwise_violations(samples: usize, dim: usize, exponents: &[f64], seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = 0;
    for _ in 0..samples {
        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let p = exponents[rng.random_range(0..exponents.len())];
        if !pointwise_p_inequality(&x, &y, p) {
            bad += 1;
        }
    }
    bad
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FamilyRecord {
    pub label: String,
    pub errors: Vec<f64>,
}

/// Eigenvalue errors along a weight family against its declared weak* limit. No rate is
/// claimed; `converged` means the last member's relative errors are below `threshold` and
/// smaller than the first member's.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightConvergence {
    pub limit: Vec<f64>,
    pub records: Vec<FamilyRecord>,
    pub converged: bool,
}

pub fn general_weight_convergence(
    family: &[WeightField],
    limit: &WeightField,
    disc: &GagliardoDiscretization,
    k: usize,
    threshold: f64,
    opts: &MinimizerOptions,
) -> Result<WeightConvergence> {
    if family.is_empty() {
        return Err(FracError::invalid("empty weight family"));
    }
    let params = disc.params();
    let grid = disc.grid();
    let k = if params.is_quadratic() { k } else { 1 };
    let form = if params.is_quadratic() { Some(disc.assemble_form_p2()?) } else { None };
    let solve = |field: &WeightField| -> Result<Vec<f64>> {
        let mass = assemble_mass(grid, field, params.p(), disc.variant())?;
        match &form {
            Some(a) => Ok(linear_spectrum(disc, a, &mass, "", k)?.eigenvalues),
            None => {
                let extra = match disc.variant() {
                    Variant::RegionalNeumann => Some(MassMatrix::unit(grid, params.p(), disc.variant())?),
                    Variant::DirichletExterior => None,
                };
                let problem = QuotientProblem { disc, mass: &mass, extra: extra.as_ref(), constraint: None };
                Ok(vec![minimize_quotient(&problem, opts)?.value])
            }
        }
    };
    let lim = solve(limit)?;
    let records = family
        .iter()
        .map(|f| {
            let vals = solve(f)?;
            let errors = vals.iter().zip(&lim).map(|(v, l)| (v - l).abs()).collect();
            Ok(FamilyRecord { label: f.scale().to_string(), errors })
        })
        .collect::<Result<Vec<FamilyRecord>>>()?;
    let rel = |r: &FamilyRecord| r.errors.iter().zip(&lim).map(|(e, l)| e / l).fold(0.0, f64::max);
    let first = rel(&records[0]);
    let last = rel(records.last().unwrap());
    let converged = last <= threshold && (last < first || last <= 1e-12);
    Ok(WeightConvergence { limit: lim, records, converged })
}

/// `2 + sin(2 pi x / eps) (1 + x) / 2` on `(0, 1)`: not periodic, weak* limit `2`.
pub fn modulated_sine_field(grid: &Grid1D, eps: f64) -> Result<WeightField> {
    WeightField::from_fn(grid, Scale::Eps(eps), (1.0, 3.0), |x| {
        2.0 + 0.5 * (2.0 * std::f64::consts::PI * x / eps).sin() * (1.0 + x)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pointwise_examples() {
        assert!(pointwise_p_inequality(&[2.0], &[1.0], 2.0));
        assert!(pointwise_p_inequality(&[1.0], &[0.0], 3.0));
        assert!(pointwise_p_inequality(&[0.0, 0.0], &[1.0, -1.0], 1.5));
        assert!(pointwise_p_inequality(&[1.0, 1.0], &[1.0, 1.0], 2.5));
    }

    #[test]
    fn pointwise_randomised() {
        assert_eq!(pointwise_violations(20_000, 3, &[1.5, 2.0, 3.0, 4.0], 3), 0);
    }

    #[test]
    fn reversed_inequality_fails() {
        // |y|^p - |x|^p <= p|x|^{p-2} x (y - x) is false here, so the check must reject it.
        let (x, y) = ([1.0], [3.0]);
        let lhs = 3.0f64.powi(2) - 1.0;
        let rhs = 2.0 * 1.0 * (3.0 - 1.0);
        assert!(lhs > rhs);
        assert!(pointwise_p_inequality(&y, &x, 2.0));
    }

    #[test]
    fn constant_weight_has_zero_ratio() {
        let grid = make_grid(0.0, 1.0, 64).unwrap();
        let params = FracParams::new(0.5, 2.0).unwrap();
        let disc = build_discretization(&grid, params, Variant::DirichletExterior, DEFAULT_QUAD_ORDER).unwrap();
        let w = PeriodicWeight::constant(3.0).unwrap();
        let est = oscillation_ratio(&w, 0.25, &disc, 4, 1).unwrap();
        assert_eq!(est.ratio, 0.0);
        assert!(est.probes.iter().all(|p| p.ratio == 0.0));
    }

    #[test]
    fn full_window_boundary_layer_is_one() {
        let grid = make_grid(0.0, 1.0, 64).unwrap();
        let params = FracParams::new(0.75, 2.0).unwrap();
        let bl = boundary_layer_constant(&grid, 0.5, params, &MinimizerOptions::default()).unwrap();
        assert!((bl.sigma - 1.0).abs() < 1e-10, "{}", bl.sigma);
        let low = FracParams::new(0.4, 2.0).unwrap();
        assert!(matches!(
            boundary_layer_constant(&grid, 0.25, low, &MinimizerOptions::default()),
            Err(FracError::Hypothesis(_))
        ));
    }

    #[test]
    fn modulated_family_stays_in_bounds() {
        let grid = make_grid(0.0, 1.0, 256).unwrap();
        let f = modulated_sine_field(&grid, 1.0 / 16.0).unwrap();
        assert!(f.cell_values().iter().all(|v| (1.0..=3.0).contains(v)));
    }
}
