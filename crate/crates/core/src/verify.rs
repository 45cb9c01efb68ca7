//! The acceptance checks, runnable from tests and from the command line.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assembly::{build_discretization, assemble_mass, FracParams, MassMatrix, Variant, DEFAULT_QUAD_ORDER};
use crate::domain::{make_grid, sample_weight, PeriodicWeight, Scale, WeightField};
use crate::error::{FracError, Result};
use crate::homogenize::{check_bounds, sweep, weyl_fit, SweepConfig, SweepReport};
use crate::inequalities::{boundary_layer_report, oscillation_report, poincare_constant, pointwise_violations};
use crate::spectral::{dirichlet_mu, linear_spectrum, min_rayleigh_p, DirichletMu, MinimizerOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Full,
    /// Coarser grids and shorter sweeps; same thresholds.
    Quick,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckResult {
    pub id: usize,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl std::fmt::Display for CheckResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "[{}] {:>2} {:<28} {:>7.1}s  {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.seconds,
            self.detail
        )
    }
}

pub const CHECK_NAMES: [&str; 12] = [
    "constant-weight identity",
    "dirichlet rate",
    "neumann rate",
    "general-p convergence",
    "sandwich bound",
    "neumann <= dirichlet",
    "weyl growth",
    "poincare scaling",
    "oscillating integral",
    "boundary layer",
    "pointwise p-inequality",
    "numerical hygiene",
];

/// Runs check `id` (1-based). Errors inside a check are reported as a failure.
pub fn run_check(id: usize, mode: Mode) -> Result<CheckResult> {
    let name = CHECK_NAMES
        .get(id.wrapping_sub(1))
        .ok_or_else(|| FracError::invalid(format!("no check {id}, expected 1..=12")))?;
    let start = Instant::now();
    let outcome = match id {
        1 => constant_weight(mode),
        2 => dirichlet_rate(mode),
        3 => neumann_rate(mode),
        4 => general_p(mode),
        5 => sandwich(mode),
        6 => ordering(mode),
        7 => weyl(mode),
        8 => poincare(mode),
        9 => oscillation(mode),
        10 => boundary_layer(mode),
        11 => pointwise(mode),
        _ => hygiene(mode),
    };
    let (passed, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
    Ok(CheckResult { id, name: name.to_string(), passed, detail, seconds: start.elapsed().as_secs_f64() })
}

pub fn run_all(mode: Mode) -> Vec<CheckResult> {
    (1..=CHECK_NAMES.len()).map(|id| run_check(id, mode).expect("valid id")).collect()
}

type Outcome = Result<(bool, String)>;

/// `1/4, 1/8, ...` with `count` entries.
fn dyadic(count: usize) -> Vec<f64> {
    (0..count).map(|i| 0.25 / 2f64.powi(i as i32)).collect()
}

fn pick<T>(mode: Mode, full: T, quick: T) -> T {
    match mode {
        Mode::Full => full,
        Mode::Quick => quick,
    }
}

fn sine() -> Result<PeriodicWeight> {
    PeriodicWeight::sinusoid(2.0, 1.0)
}

fn p2(s: f64) -> Result<FracParams> {
    FracParams::new(s, 2.0)
}

fn fmt_list(vals: impl IntoIterator<Item = f64>) -> String {
    let parts: Vec<String> = vals.into_iter().map(|v| format!("{v:.3}")).collect();
    parts.join(",")
}

fn constant_weight(mode: Mode) -> Outcome {
    let n = pick(mode, 512, 256);
    let c = 3.0;
    let mut worst: f64 = 0.0;
    for s in [0.25, 0.5, 0.75] {
        let cfg = SweepConfig::new(n, p2(s)?, Variant::DirichletExterior, PeriodicWeight::constant(c)?, dyadic(3), 10);
        let report = sweep(&cfg)?;
        for r in &report.records {
            let mu = report.mu[r.k - 1];
            worst = worst.max((r.lambda_eps - mu / c).abs() / (mu / c));
        }
    }
    Ok((worst <= 1e-10, format!("max rel err {worst:.2e} (tol 1e-10)")))
}

/// Rate verdict shared by the Dirichlet and Neumann checks.
fn rate_verdict(report: &SweepReport, k: usize, slack: f64, monotone: bool) -> (bool, String) {
    let s = report.config.params.s();
    let mut ok = true;
    let mut slopes = Vec::new();
    for kk in 1..=k {
        let errs = report.errors(kk);
        if monotone && errs.windows(2).any(|w| !(w[1].1 < w[0].1)) {
            ok = false;
        }
        match report.fits[kk - 1].fit {
            Some(f) => {
                ok &= f.slope >= s - slack;
                slopes.push(f.slope);
            }
            None => ok = false,
        }
    }
    let spread = report.verdicts.envelope.spread;
    ok &= spread.is_some_and(|x| x <= 10.0);
    let mono = if monotone {
        let bad: Vec<String> = (1..=k)
            .filter(|&kk| report.errors(kk).windows(2).any(|w| !(w[1].1 < w[0].1)))
            .map(|kk| kk.to_string())
            .collect();
        if bad.is_empty() { String::new() } else { format!(" non-monotone k={}", bad.join(",")) }
    } else {
        String::new()
    };
    let spread = spread.map_or("none".to_string(), |x| format!("{x:.2}"));
    (ok, format!("s={s}: slopes {} spread {spread}{mono}", fmt_list(slopes)))
}

fn rate_check(mode: Mode, variant: Variant, s_list: &[f64], monotone: bool) -> Outcome {
    let n = pick(mode, 1024, 256);
    let eps = pick(mode, dyadic(5), dyadic(3));
    let mut ok = true;
    let mut parts = Vec::new();
    for &s in s_list {
        let report = sweep(&SweepConfig::new(n, p2(s)?, variant, sine()?, eps.clone(), 5))?;
        let (pass, text) = rate_verdict(&report, 5, 0.1, monotone);
        ok &= pass;
        parts.push(text);
    }
    Ok((ok, parts.join("; ")))
}

fn dirichlet_rate(mode: Mode) -> Outcome {
    rate_check(mode, Variant::DirichletExterior, &[0.3, 0.5, 0.7], true)
}

fn neumann_rate(mode: Mode) -> Outcome {
    rate_check(mode, Variant::RegionalNeumann, &[0.6, 0.8], false)
}

fn general_p(mode: Mode) -> Outcome {
    let n = pick(mode, 512, 128);
    let eps = pick(mode, dyadic(4), dyadic(2));
    let params = FracParams::new(0.5, 3.0)?;
    let report = sweep(&SweepConfig::new(n, params, Variant::DirichletExterior, sine()?, eps, 1))?;
    let errs = report.errors(1);
    let decreasing = errs.windows(2).all(|w| w[1].1 < w[0].1);
    let slope = report.fits[0].fit.map(|f| f.slope);
    let rate_ok = match mode {
        Mode::Full => slope.is_some_and(|x| x >= 0.5 - 0.15),
        Mode::Quick => true,
    };

    let grid = make_grid(0.0, 1.0, pick(mode, 256, 64))?;
    let disc = build_discretization(&grid, p2(0.5)?, Variant::DirichletExterior, DEFAULT_QUAD_ORDER)?;
    let field = sample_weight(&sine()?, &grid, Scale::Eps(0.125))?;
    let mass = assemble_mass(&grid, &field, 2.0, Variant::DirichletExterior)?;
    let linear = linear_spectrum(&disc, &disc.assemble_form_p2()?, &mass, "", 1)?.eigenvalues[0];
    let min = min_rayleigh_p(&disc, &mass, p2(0.5)?, &MinimizerOptions::default())?.value;
    let cross = (min - linear).abs() / linear;

    let ok = decreasing && rate_ok && cross <= 1e-6;
    let slope = slope.map_or("none".into(), |x| format!("{x:.3}"));
    Ok((ok, format!("p=3 slope {slope} decreasing {decreasing}; p=2 minimizer vs GEVP {cross:.1e}")))
}

fn sandwich(mode: Mode) -> Outcome {
    let n = pick(mode, 1024, 256);
    let w = PeriodicWeight::checkerboard(1.0, 3.0)?;
    let mut worst = f64::NEG_INFINITY;
    for s in [0.25, 0.5, 0.75] {
        let report = sweep(&SweepConfig::new(n, p2(s)?, Variant::DirichletExterior, w.clone(), dyadic(pick(mode, 5, 3)), 10))?;
        let v = report.verdicts.sandwich.ok_or_else(|| FracError::Numerical("no sandwich verdict".into()))?;
        worst = worst.max(v.worst_margin);
    }
    Ok((worst <= 1e-8, format!("worst margin {worst:.3e} (tol 1e-8)")))
}

fn ordering(mode: Mode) -> Outcome {
    let n = pick(mode, 1024, 256);
    let mut worst = f64::NEG_INFINITY;
    for s in [0.6, 0.8] {
        let base = SweepConfig::new(n, p2(s)?, Variant::DirichletExterior, sine()?, dyadic(pick(mode, 5, 3)), 10);
        let dir = sweep(&base)?;
        let neu = sweep(&SweepConfig { variant: Variant::RegionalNeumann, ..base })?;
        let v = check_bounds(&neu, &neu.mu, (1.0, 3.0), Some(&dir))?
            .neumann_le_dirichlet
            .ok_or_else(|| FracError::Numerical("no ordering verdict".into()))?;
        worst = worst.max(v.worst_margin);
    }
    Ok((worst <= 1e-8, format!("max (Lambda - lambda)/lambda {worst:.3e}")))
}

fn weyl(mode: Mode) -> Outcome {
    let n = pick(mode, 2048, 512);
    let grid = make_grid(0.0, 1.0, n)?;
    let mut ok = true;
    let mut parts = Vec::new();
    for s in [0.25, 0.5, 0.75] {
        let DirichletMu::Linear(spec) = dirichlet_mu(&grid, p2(s)?, 40, &MinimizerOptions::default())? else {
            return Err(FracError::Numerical("expected a linear spectrum".into()));
        };
        let slope = weyl_fit(&spec, (5, 40), n)?.slope;
        ok &= (slope - 2.0 * s).abs() <= 0.15 * 2.0 * s;
        parts.push(format!("{slope:.3}/{:.2}", 2.0 * s));
    }
    Ok((ok, format!("slope/target {}", parts.join(" "))))
}

fn poincare(mode: Mode) -> Outcome {
    let opts = MinimizerOptions::default();
    let mut worst: f64 = 0.0;
    for s in [0.3, 0.5, 0.7] {
        for p in [2.0, 3.0] {
            let params = FracParams::new(s, p)?;
            let n = pick(mode, 32, 16);
            let c1 = poincare_constant(n, params, 1.0, &opts)?;
            for eps in [0.25, 1.0 / 16.0, 1.0 / 64.0] {
                let ce = poincare_constant(n, params, eps, &opts)?;
                worst = worst.max((ce - eps.powf(s) * c1).abs() / (eps.powf(s) * c1));
            }
        }
    }
    Ok((worst <= 1e-10, format!("max rel deviation from eps^s C_P(1): {worst:.2e}")))
}

fn oscillation(mode: Mode) -> Outcome {
    let grid = make_grid(0.0, 1.0, pick(mode, 1024, 256))?;
    let eps = pick(mode, dyadic(5), dyadic(3));
    let probes = 8;
    let mut ok = true;
    let mut parts = Vec::new();
    for (s, variant) in [(0.5, Variant::DirichletExterior), (0.75, Variant::RegionalNeumann)] {
        let disc = build_discretization(&grid, p2(s)?, variant, DEFAULT_QUAD_ORDER)?;
        let (report, _) = oscillation_report(&sine()?, &eps, &disc, probes, 1)?;
        let spread = report.normalized_spread();
        ok &= spread.is_some_and(|x| x <= 10.0);
        let zero = oscillation_report(&PeriodicWeight::constant(2.0)?, &eps[..1], &disc, probes, 1)?.0.rows[0].constant;
        ok &= zero == 0.0;
        let spread = spread.map_or("none".into(), |x| format!("{x:.2}"));
        parts.push(format!("{variant} s={s}: spread {spread}, constant weight {zero}"));
    }
    Ok((ok, parts.join("; ")))
}

fn boundary_layer(mode: Mode) -> Outcome {
    let grid = make_grid(0.0, 1.0, pick(mode, 512, 256))?;
    let deltas = [0.125, 0.0625, 1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0];
    let report = boundary_layer_report(&grid, &deltas, p2(0.75)?, &MinimizerOptions::default())?;
    let monotone = report.rows.windows(2).all(|w| w[1].constant <= w[0].constant);
    let slope = report.fit.map(|f| f.slope);
    let ok = monotone && slope.is_some_and(|x| x >= 0.9);
    let slope = slope.map_or("none".into(), |x| format!("{x:.3}"));
    Ok((ok, format!("slope {slope}, monotone {monotone}")))
}

fn pointwise(mode: Mode) -> Outcome {
    let samples = pick(mode, 100_000, 10_000);
    let bad = pointwise_violations(samples, 3, &[1.5, 2.0, 3.0, 4.0], 2024);
    Ok((bad == 0, format!("{bad} violations in {samples} samples")))
}

fn hygiene(mode: Mode) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n = pick(mode, 64, 32);
    let grid = make_grid(0.0, 1.0, n)?;
    let t = 1e-5;
    let mut grad_err: f64 = 0.0;
    let mut grad_parts = Vec::new();
    for p in [1.5, 2.0, 3.0] {
        for variant in [Variant::DirichletExterior, Variant::RegionalNeumann] {
            let mut worst: f64 = 0.0;
            let disc = build_discretization(&grid, FracParams::new(0.5, p)?, variant, DEFAULT_QUAD_ORDER)?;
            let u: Vec<f64> = (0..disc.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let g = disc.energy_gradient(&u)?;
            let gnorm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            for _ in 0..100 {
                let d: Vec<f64> = (0..disc.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
                let shift = |sign: f64| -> Vec<f64> { u.iter().zip(&d).map(|(a, b)| a + sign * t * b).collect() };
                let fd = (disc.energy(&shift(1.0))? - disc.energy(&shift(-1.0))?) / (2.0 * t);
                let exact: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
                let dnorm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
                worst = worst.max((fd - exact).abs() / exact.abs().max(1e-3 * gnorm * dnorm));
            }
            grad_err = grad_err.max(worst);
            grad_parts.push(format!("p={p} {variant} {worst:.1e}"));
        }
    }

    let params = p2(0.5)?;
    let lo = build_discretization(&grid, params, Variant::DirichletExterior, DEFAULT_QUAD_ORDER)?;
    let hi = build_discretization(&grid, params, Variant::DirichletExterior, 2 * DEFAULT_QUAD_ORDER)?;
    let (al, ah) = (lo.assemble_form_p2()?, hi.assemble_form_p2()?);
    let mut quad_err: f64 = 0.0;
    for _ in 0..20 {
        let u: Vec<f64> = (0..lo.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (el, eh) = (lo.energy(&u)?, hi.energy(&u)?);
        quad_err = quad_err.max((el - eh).abs() / eh);
    }
    let unit = MassMatrix::unit(&grid, 2.0, Variant::DirichletExterior)?;
    let sl = linear_spectrum(&lo, &al, &unit, "", 10)?;
    let sh = linear_spectrum(&hi, &ah, &unit, "", 10)?;
    for (a, b) in sl.eigenvalues.iter().zip(&sh.eigenvalues) {
        quad_err = quad_err.max((a - b).abs() / b);
    }

    let mut residual: f64 = 0.0;
    for variant in [Variant::DirichletExterior, Variant::RegionalNeumann] {
        let disc = build_discretization(&grid, p2(0.75)?, variant, DEFAULT_QUAD_ORDER)?;
        let field: WeightField = sample_weight(&sine()?, &grid, Scale::Eps(0.25))?;
        let mass = assemble_mass(&grid, &field, 2.0, variant)?;
        let mut a = disc.assemble_form_p2()?;
        let spec = linear_spectrum(&disc, &a, &mass, "", 10)?;
        if variant == Variant::RegionalNeumann {
            a.matrix += MassMatrix::unit(&grid, 2.0, variant)?.to_dense();
        }
        residual = residual.max(spec.max_relative_residual(a.matrix.as_ref(), mass.to_dense().as_ref()));
    }

    let ok = grad_err <= 1e-6 && quad_err <= 1e-8 && residual <= 1e-8;
    Ok((ok, format!(
        "gradient [{}], quad doubling {quad_err:.1e}, residual {residual:.1e}",
        grad_parts.join(", ")
    )))
}
