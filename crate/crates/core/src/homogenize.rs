//! Sweeps over the oscillation scale, rate regression and the eigenvalue bound checks.

use std::io::Write;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::{
    assemble_mass, load_or_build, FracParams, GagliardoDiscretization, MassMatrix, StiffnessMatrix, Variant,
    DEFAULT_QUAD_ORDER,
};
use crate::domain::{make_grid, sample_weight, Grid1D, PeriodicWeight, Scale, WeightField};
use crate::error::{FracError, Result};
use crate::report::{fmt_float, write_csv};
use crate::spectral::{dense_gevp, min_rayleigh_p, MinimizerOptions, Spectrum};

/// Errors below this are treated as solver noise and left out of rate fits.
pub const NOISE_FLOOR: f64 = 1e-13;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    pub a: f64,
    pub b: f64,
    pub n_cells: usize,
    pub params: FracParams,
    pub variant: Variant,
    pub weight: PeriodicWeight,
    pub eps_list: Vec<f64>,
    /// Number of eigenvalues; only the first is computed when `p != 2`.
    pub k: usize,
    pub seed: u64,
    pub quad_order: usize,
    pub minimizer: MinimizerOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
}

impl SweepConfig {
    pub fn new(n_cells: usize, params: FracParams, variant: Variant, weight: PeriodicWeight, eps_list: Vec<f64>, k: usize) -> Self {
        Self {
            a: 0.0,
            b: 1.0,
            n_cells,
            params,
            variant,
            weight,
            eps_list,
            k,
            seed: 0,
            quad_order: DEFAULT_QUAD_ORDER,
            minimizer: MinimizerOptions::default(),
            cache_dir: None,
        }
    }

    /// Number of eigenvalues actually computed.
    pub fn effective_k(&self) -> usize {
        if self.params.is_quadratic() {
            self.k
        } else {
            1
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(FracError::invalid("k must be at least 1"));
        }
        if self.eps_list.is_empty() {
            return Err(FracError::invalid("eps list is empty"));
        }
        if self.eps_list.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(FracError::invalid("eps list must be strictly decreasing"));
        }
        let min_eps = *self.eps_list.last().unwrap();
        if (self.n_cells as f64) * min_eps / (self.b - self.a) < 16.0 - 1e-9 {
            return Err(FracError::Resolution(format!(
                "{} cells resolve eps = {min_eps} with fewer than 16 cells per period",
                self.n_cells
            )));
        }
        if self.variant == Variant::RegionalNeumann {
            self.params.require_trace_regime()?;
        }
        if self.k > self.n_cells - 1 {
            return Err(FracError::invalid(format!("k = {} exceeds the number of dofs", self.k)));
        }
        if !self.params.is_quadratic() && self.k > 1 {
            log::warn!("p = {} != 2: only the first eigenvalue is computed", self.params.p());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRecord {
    pub k: usize,
    pub eps: f64,
    pub lambda_eps: f64,
    pub lambda_limit: f64,
    pub error: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepFailure {
    pub eps: f64,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub pairs_used: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KFit {
    pub k: usize,
    pub fit: Option<RateFit>,
    /// Why the fit is missing, if it is.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub passed: bool,
    /// Largest violation relative to `mu_k` (negative means slack).
    pub worst_margin: f64,
}

/// `C(eps) = max_k error / (eps^s prefactor(mu_k))` over the sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Envelope {
    pub prefactor: String,
    pub per_eps: Vec<(f64, f64)>,
    /// Fitted constant, the maximum of `C(eps)`.
    pub constant: f64,
    /// `max C / min C` over the sweep (`None` when every error is at noise level).
    pub spread: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundVerdicts {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sandwich: Option<Verdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub neumann_le_dirichlet: Option<Verdict>,
    pub envelope: Envelope,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub config: SweepConfig,
    pub records: Vec<SweepRecord>,
    pub limit: Vec<f64>,
    /// Unit-weight Dirichlet eigenvalues used in the prefactors.
    pub mu: Vec<f64>,
    pub fits: Vec<KFit>,
    pub verdicts: BoundVerdicts,
    pub failures: Vec<SweepFailure>,
}

impl SweepReport {
    /// `lambda_k^eps` for 1-based `k`.
    pub fn value(&self, k: usize, eps: f64) -> Option<f64> {
        self.records.iter().find(|r| r.k == k && r.eps == eps).map(|r| r.lambda_eps)
    }

    /// Errors for 1-based `k` in sweep order.
    pub fn errors(&self, k: usize) -> Vec<(f64, f64)> {
        self.records.iter().filter(|r| r.k == k).map(|r| (r.eps, r.error)).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let c = &self.config;
        let rows = self.records.iter().map(|r| {
            vec![
                c.variant.label().to_string(),
                fmt_float(c.params.s()),
                fmt_float(c.params.p()),
                r.k.to_string(),
                fmt_float(r.eps),
                fmt_float(r.lambda_eps),
                fmt_float(r.lambda_limit),
                fmt_float(r.error),
            ]
        });
        write_csv(out, &["variant", "s", "p", "k", "eps", "lambda_eps", "lambda_limit", "error"], rows)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Least-squares line through `(log eps, log error)`, skipping errors below [`NOISE_FLOOR`].
pub fn fit_rate(pairs: &[(f64, f64)]) -> Result<RateFit> {
    let pts: Vec<(f64, f64)> = pairs
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y >= NOISE_FLOOR && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(FracError::InsufficientData(format!(
            "{} usable pairs, need at least 3",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(FracError::InsufficientData("all abscissae coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy <= 1e-30 * (1.0 + my * my) { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(RateFit { slope, intercept, r_squared, pairs_used: pts.len() })
}

/// Shared form data of a sweep: one discretisation for all `eps`.
struct Problem {
    grid: Grid1D,
    disc: GagliardoDiscretization,
    form: Option<StiffnessMatrix>,
    shift: Option<MassMatrix>,
}

impl Problem {
    fn new(config: &SweepConfig, variant: Variant) -> Result<Self> {
        let grid = make_grid(config.a, config.b, config.n_cells)?;
        let disc = load_or_build(config.cache_dir.as_deref(), &grid, config.params, variant, config.quad_order)?;
        let form = if config.params.is_quadratic() { Some(disc.assemble_form_p2()?) } else { None };
        let shift = match variant {
            Variant::RegionalNeumann => Some(MassMatrix::unit(&grid, config.params.p(), variant)?),
            Variant::DirichletExterior => None,
        };
        Ok(Self { grid, disc, form, shift })
    }

    /// First `k` eigenvalues for the given weight field.
    fn eigenvalues(&self, field: &WeightField, k: usize, opts: &MinimizerOptions) -> Result<Vec<f64>> {
        let params = self.disc.params();
        let mass = assemble_mass(&self.grid, field, params.p(), self.disc.variant())?;
        match &self.form {
            Some(a) => {
                let mut lhs = a.matrix.clone();
                if let Some(sh) = &self.shift {
                    lhs += sh.to_dense();
                }
                let (vals, _) = dense_gevp(lhs.as_ref(), mass.to_dense().as_ref(), false)?;
                Ok(vals[..k].to_vec())
            }
            None => Ok(vec![min_rayleigh_p(&self.disc, &mass, params, opts)?.value]),
        }
    }
}

fn prefactor(variant: Variant, p: f64, mu: f64) -> f64 {
    match variant {
        Variant::DirichletExterior => mu.powf(1.0 + 1.0 / p),
        Variant::RegionalNeumann => mu * mu,
    }
}

/// Unit-weight Dirichlet eigenvalues on the sweep grid.
pub fn unit_dirichlet_mu(config: &SweepConfig) -> Result<Vec<f64>> {
    let problem = Problem::new(config, Variant::DirichletExterior)?;
    let unit = WeightField::constant(&problem.grid, 1.0)?;
    problem.eigenvalues(&unit, config.effective_k(), &config.minimizer)
}

/// Runs the sweep: the limit problem with the mean weight, then every `eps` concurrently.
pub fn sweep(config: &SweepConfig) -> Result<SweepReport> {
    config.validate()?;
    let k = config.effective_k();
    let problem = Problem::new(config, config.variant)?;
    let limit_field = sample_weight(&config.weight, &problem.grid, Scale::Limit)?;
    let limit = problem.eigenvalues(&limit_field, k, &config.minimizer)?;
    let mu = if config.variant == Variant::DirichletExterior {
        let unit = WeightField::constant(&problem.grid, 1.0)?;
        problem.eigenvalues(&unit, k, &config.minimizer)?
    } else {
        unit_dirichlet_mu(config)?
    };

    let outcomes: Vec<(f64, Result<Vec<f64>>)> = config
        .eps_list
        .par_iter()
        .map(|&eps| {
            let res = sample_weight(&config.weight, &problem.grid, Scale::Eps(eps))
                .and_then(|f| problem.eigenvalues(&f, k, &config.minimizer));
            (eps, res)
        })
        .collect();

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (eps, res) in outcomes {
        match res {
            Ok(vals) => {
                for (i, (&le, &ll)) in vals.iter().zip(&limit).enumerate() {
                    records.push(SweepRecord { k: i + 1, eps, lambda_eps: le, lambda_limit: ll, error: (le - ll).abs() });
                }
            }
            Err(e) => {
                log::warn!("eps = {eps}: {e}");
                failures.push(SweepFailure { eps, message: e.to_string() });
            }
        }
    }
    if records.is_empty() {
        return Err(FracError::Numerical("no eps value produced an eigenvalue".into()));
    }
    records.sort_by(|x, y| x.k.cmp(&y.k).then(y.eps.partial_cmp(&x.eps).unwrap()));

    let fits = (1..=k)
        .map(|kk| {
            let pairs: Vec<(f64, f64)> = records.iter().filter(|r| r.k == kk).map(|r| (r.eps, r.error)).collect();
            match fit_rate(&pairs) {
                Ok(fit) => KFit { k: kk, fit: Some(fit), note: None },
                Err(e) => KFit { k: kk, fit: None, note: Some(e.to_string()) },
            }
        })
        .collect();

    let mut report = SweepReport {
        config: config.clone(),
        records,
        limit,
        mu: mu.clone(),
        fits,
        verdicts: BoundVerdicts { sandwich: None, neumann_le_dirichlet: None, envelope: Envelope::default() },
        failures,
    };
    let bounds = (config.weight.rho_minus(), config.weight.rho_plus());
    report.verdicts = check_bounds(&report, &mu, bounds, None)?;
    Ok(report)
}

impl Default for Envelope {
    fn default() -> Self {
        Self { prefactor: String::new(), per_eps: Vec::new(), constant: 0.0, spread: None }
    }
}

/// Sandwich `mu_k / rho_plus <= lambda_k <= mu_k / rho_minus` (Dirichlet only), the ordering
/// `Lambda_k <= lambda_k` against a `companion` report of the other variant, and the rate
/// envelope. Tolerance `1e-8 mu_k` (resp. `1e-8 lambda_k`).
pub fn check_bounds(
    report: &SweepReport,
    mu: &[f64],
    rho_bounds: (f64, f64),
    companion: Option<&SweepReport>,
) -> Result<BoundVerdicts> {
    let c = &report.config;
    if mu.len() < report.limit.len() {
        return Err(FracError::invalid("fewer mu values than computed eigenvalues"));
    }
    let (rho_minus, rho_plus) = rho_bounds;
    let s = c.params.s();

    let sandwich = (c.variant == Variant::DirichletExterior).then(|| {
        let mut worst = f64::NEG_INFINITY;
        let limit_records = report.limit.iter().enumerate().map(|(i, &l)| (i + 1, l));
        for (k, lam) in report.records.iter().map(|r| (r.k, r.lambda_eps)).chain(limit_records) {
            let m = mu[k - 1];
            worst = worst.max((m / rho_plus - lam) / m).max((lam - m / rho_minus) / m);
        }
        Verdict { passed: worst <= 1e-8, worst_margin: worst }
    });

    let neumann_le_dirichlet = match companion {
        None => None,
        Some(other) => {
            let same = other.config.n_cells == c.n_cells
                && other.config.a == c.a
                && other.config.b == c.b
                && other.config.params == c.params;
            if !same || other.config.variant == c.variant {
                return Err(FracError::invalid("companion report must be the other variant on the same grid"));
            }
            let (neu, dir) = if c.variant == Variant::RegionalNeumann { (report, other) } else { (other, report) };
            let mut worst = f64::NEG_INFINITY;
            for r in &neu.records {
                if let Some(l) = dir.value(r.k, r.eps) {
                    worst = worst.max((r.lambda_eps - l) / l);
                }
            }
            for (nl, dl) in neu.limit.iter().zip(&dir.limit) {
                worst = worst.max((nl - dl) / dl);
            }
            Some(Verdict { passed: worst <= 1e-8, worst_margin: worst })
        }
    };

    let mut per_eps: Vec<(f64, f64)> = Vec::new();
    for r in &report.records {
        let value = r.error / (r.eps.powf(s) * prefactor(c.variant, c.params.p(), mu[r.k - 1]));
        match per_eps.iter_mut().find(|(e, _)| *e == r.eps) {
            Some(entry) => entry.1 = entry.1.max(value),
            None => per_eps.push((r.eps, value)),
        }
    }
    per_eps.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap());
    let constant = per_eps.iter().map(|p| p.1).fold(0.0, f64::max);
    let max_err = report.records.iter().map(|r| r.error).fold(0.0, f64::max);
    let min_c = per_eps.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let spread = (max_err >= NOISE_FLOOR && min_c > 0.0).then(|| constant / min_c);
    let prefactor = match c.variant {
        Variant::DirichletExterior => format!("mu^(1+1/p), p = {}", c.params.p()),
        Variant::RegionalNeumann => "mu^2".to_string(),
    };
    Ok(BoundVerdicts { sandwich, neumann_le_dirichlet, envelope: Envelope { prefactor, per_eps, constant, spread } })
}

/// Slope of `log mu_k` against `log k` for `k` in `k_range` (1-based, inclusive).
pub fn weyl_fit(mu: &Spectrum, k_range: (usize, usize), n_cells: usize) -> Result<RateFit> {
    let (lo, hi) = k_range;
    if lo == 0 || hi < lo + 2 {
        return Err(FracError::invalid(format!("k range {lo}..={hi} needs at least 3 indices starting at 1")));
    }
    if hi > n_cells / 8 {
        return Err(FracError::Resolution(format!(
            "k = {hi} is not resolved by {n_cells} cells (limit n_cells / 8 = {})",
            n_cells / 8
        )));
    }
    if hi > mu.len() {
        return Err(FracError::invalid(format!("spectrum holds {} eigenvalues, k range ends at {hi}", mu.len())));
    }
    let pairs: Vec<(f64, f64)> = (lo..=hi).map(|k| (k as f64, mu.eigenvalues[k - 1])).collect();
    fit_rate(&pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law() {
        let fit = fit_rate(&[(0.1, 0.01), (0.01, 0.001), (1.0, 0.1)]).unwrap();
        assert!((fit.slope - 1.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        let half: Vec<(f64, f64)> = [0.25, 1.0 / 16.0, 1.0 / 64.0].iter().map(|&e: &f64| (e, e.sqrt())).collect();
        assert!((fit_rate(&half).unwrap().slope - 0.5).abs() < 1e-12);
    }

    #[test]
    fn constant_errors_have_zero_slope() {
        let fit = fit_rate(&[(0.5, 0.2), (0.25, 0.2), (0.125, 0.2)]).unwrap();
        assert_eq!(fit.slope, 0.0);
        assert_eq!(fit.r_squared, 1.0);
    }

    #[test]
    fn noise_level_pairs_are_dropped() {
        assert!(matches!(
            fit_rate(&[(0.5, 1e-3), (0.25, 1e-14), (0.125, 1e-4)]),
            Err(FracError::InsufficientData(_))
        ));
    }

    #[test]
    fn config_validation() {
        let params = FracParams::new(0.5, 2.0).unwrap();
        let w = PeriodicWeight::sinusoid(2.0, 1.0).unwrap();
        let ok = SweepConfig::new(256, params, Variant::DirichletExterior, w.clone(), vec![0.25, 0.125, 0.0625], 3);
        assert!(ok.validate().is_ok());
        let coarse = SweepConfig { eps_list: vec![0.25, 1.0 / 32.0], ..ok.clone() };
        assert!(matches!(coarse.validate(), Err(FracError::Resolution(_))));
        let unsorted = SweepConfig { eps_list: vec![0.125, 0.25], ..ok.clone() };
        assert!(unsorted.validate().is_err());
        let neumann = SweepConfig {
            variant: Variant::RegionalNeumann,
            params: FracParams::new(0.3, 3.0).unwrap(),
            ..ok.clone()
        };
        assert!(matches!(neumann.validate(), Err(FracError::Hypothesis(_))));
        let p3 = SweepConfig { params: FracParams::new(0.5, 3.0).unwrap(), ..ok };
        assert_eq!(p3.effective_k(), 1);
    }
}
