use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use fraclab_core::assembly::{assemble_mass, load_or_build, MassMatrix, Variant};
use fraclab_core::domain::{make_grid, sample_weight, Scale};
use fraclab_core::homogenize::{sweep, weyl_fit, SweepConfig};
use fraclab_core::inequalities::{boundary_layer_report, oscillation_report, poincare_report, ConstantReport};
use fraclab_core::report::{fmt_float, write_csv};
use fraclab_core::spectral::{linear_spectrum, min_rayleigh_p, MinimizerOptions};
use fraclab_core::verify::{run_check, Mode, CHECK_NAMES};
use serde_json::{json, Value};

use crate::config::{RunConfig, VerifyConfig};
use crate::manifest::sibling;
use crate::CliError;

/// What a command produced: files written, CSV column names and a summary for the manifest.
pub struct Outcome {
    pub outputs: Vec<String>,
    pub columns: Vec<&'static str>,
    pub summary: Value,
    /// Exit with the runtime-failure code even though artifacts were written.
    pub failed: bool,
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn write_json(path: &Path, text: String) -> Result<String, CliError> {
    fs::write(path, text + "\n").map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    Ok(path.display().to_string())
}

fn constant_report(cfg: &RunConfig, report: &ConstantReport, extra: Option<Value>) -> Result<Outcome, CliError> {
    report.write_csv(create(&cfg.out)?)?;
    let mut body = serde_json::to_value(report).map_err(|e| CliError::Runtime(e.to_string()))?;
    if let Some(extra) = extra {
        body["details"] = extra;
    }
    let json_path = sibling(&cfg.out, ".json");
    let text = serde_json::to_string_pretty(&body).map_err(|e| CliError::Runtime(e.to_string()))?;
    let outputs = vec![cfg.out.display().to_string(), write_json(&json_path, text)?];
    for row in &report.rows {
        println!("{:>12.6e}  {:>14.8e}  {:>14.8e}", row.param, row.constant, row.normalized_constant);
    }
    if let Some(fit) = report.fit {
        println!("slope {:.4} (R^2 {:.4})", fit.slope, fit.r_squared);
    }
    Ok(Outcome {
        outputs,
        columns: vec!["param", "constant", "normalized_constant"],
        summary: json!({ "method": report.method, "fit": report.fit, "spread": report.normalized_spread() }),
        failed: false,
    })
}

pub fn spectrum(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let params = cfg.params()?;
    let variant = cfg.variant()?;
    let weight = cfg.periodic_weight()?;
    let scale = match cfg.eps_list()?.as_slice() {
        [] => Scale::Limit,
        [eps] => Scale::Eps(*eps),
        _ => return Err(CliError::Usage("spectrum takes a single --eps value or \"limit\"".into())),
    };
    let grid = make_grid(0.0, 1.0, cfg.cells)?;
    let disc = load_or_build(cfg.cache_dir.as_deref(), &grid, params, variant, cfg.quad_order)?;
    let field = sample_weight(&weight, &grid, scale)?;
    let mass = assemble_mass(&grid, &field, params.p(), variant)?;
    let values = if params.is_quadratic() {
        let k = cfg.k.min(disc.dim());
        linear_spectrum(&disc, &disc.assemble_form_p2()?, &mass, &cfg.weight, k)?.eigenvalues
    } else {
        if cfg.k > 1 {
            log::warn!("p = {} != 2: only the first eigenvalue is computed", params.p());
        }
        let opts = MinimizerOptions { seed: cfg.seed, ..MinimizerOptions::default() };
        vec![min_rayleigh_p(&disc, &mass, params, &opts)?.value]
    };
    let rows = values.iter().enumerate().map(|(i, v)| vec![(i + 1).to_string(), fmt_float(*v)]);
    write_csv(create(&cfg.out)?, &["k", "eigenvalue"], rows)?;
    for (i, v) in values.iter().enumerate() {
        println!("{:>4}  {v:.12e}", i + 1);
    }
    Ok(Outcome {
        outputs: vec![cfg.out.display().to_string()],
        columns: vec!["k", "eigenvalue"],
        summary: json!({ "eigenvalues": values }),
        failed: false,
    })
}

pub fn sweep_cmd(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let eps = cfg.eps_list()?;
    if eps.is_empty() {
        return Err(CliError::Usage("sweep needs --eps values".into()));
    }
    let mut config = SweepConfig::new(cfg.cells, cfg.params()?, cfg.variant()?, cfg.periodic_weight()?, eps, cfg.k);
    config.seed = cfg.seed;
    config.quad_order = cfg.quad_order;
    config.minimizer.seed = cfg.seed;
    config.cache_dir = cfg.cache_dir.clone();
    let report = sweep(&config)?;
    report.write_csv(create(&cfg.out)?)?;
    let json_path = write_json(&sibling(&cfg.out, ".json"), report.to_json()?)?;
    for f in &report.fits {
        match f.fit {
            Some(fit) => println!("k={:<3} slope {:.4}  R^2 {:.4}", f.k, fit.slope, fit.r_squared),
            None => println!("k={:<3} no fit: {}", f.k, f.note.as_deref().unwrap_or("")),
        }
    }
    let env = &report.verdicts.envelope;
    match env.spread {
        Some(spread) => println!("envelope constant {:.4e}, spread {spread:.3}", env.constant),
        None => println!("envelope constant {:.4e}, errors at noise level", env.constant),
    }
    if let Some(v) = report.verdicts.sandwich {
        println!("sandwich {} (worst margin {:.3e})", if v.passed { "holds" } else { "VIOLATED" }, v.worst_margin);
    }
    for f in &report.failures {
        eprintln!("eps = {}: {}", f.eps, f.message);
    }
    Ok(Outcome {
        outputs: vec![cfg.out.display().to_string(), json_path],
        columns: vec!["variant", "s", "p", "k", "eps", "lambda_eps", "lambda_limit", "error"],
        summary: json!({ "fits": report.fits, "verdicts": report.verdicts, "failures": report.failures }),
        failed: false,
    })
}

pub fn poincare(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let eps = cfg.eps_list()?;
    let opts = MinimizerOptions { seed: cfg.seed, ..MinimizerOptions::default() };
    let report = poincare_report(cfg.cells, cfg.params()?, &eps, &opts)?;
    constant_report(cfg, &report, None)
}

pub fn oscillation(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let eps = cfg.eps_list()?;
    let grid = make_grid(0.0, 1.0, cfg.cells)?;
    let disc = load_or_build(cfg.cache_dir.as_deref(), &grid, cfg.params()?, cfg.variant()?, cfg.quad_order)?;
    let (report, estimates) = oscillation_report(&cfg.periodic_weight()?, &eps, &disc, cfg.probes, cfg.seed)?;
    let details = serde_json::to_value(&estimates).map_err(|e| CliError::Runtime(e.to_string()))?;
    constant_report(cfg, &report, Some(details))
}

pub fn boundary_layer(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let deltas = cfg.delta_list()?;
    let grid = make_grid(0.0, 1.0, cfg.cells)?;
    let opts = MinimizerOptions { seed: cfg.seed, ..MinimizerOptions::default() };
    let report = boundary_layer_report(&grid, &deltas, cfg.params()?, &opts)?;
    constant_report(cfg, &report, None)
}

pub fn weyl(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let (lo, hi) = cfg.k_range()?;
    let params = cfg.params()?;
    let grid = make_grid(0.0, 1.0, cfg.cells)?;
    let disc = load_or_build(cfg.cache_dir.as_deref(), &grid, params, Variant::DirichletExterior, cfg.quad_order)?;
    let unit = MassMatrix::unit(&grid, 2.0, Variant::DirichletExterior)?;
    let spec = linear_spectrum(&disc, &disc.assemble_form_p2()?, &unit, "const:1", hi.min(disc.dim()))?;
    let fit = weyl_fit(&spec, (lo, hi), cfg.cells)?;
    let rows = spec.eigenvalues.iter().enumerate().map(|(i, v)| vec![(i + 1).to_string(), fmt_float(*v)]);
    write_csv(create(&cfg.out)?, &["k", "mu"], rows)?;
    let target = 2.0 * params.s();
    println!("slope {:.4} over k = {lo}..={hi}, target 2s = {target:.4}", fit.slope);
    Ok(Outcome {
        outputs: vec![cfg.out.display().to_string()],
        columns: vec!["k", "mu"],
        summary: json!({ "fit": fit, "target": target, "relative_deviation": (fit.slope - target).abs() / target }),
        failed: false,
    })
}

pub fn verify_all(cfg: &VerifyConfig) -> Result<Outcome, CliError> {
    let mode = if cfg.quick { Mode::Quick } else { Mode::Full };
    let ids: Vec<usize> = if cfg.only.is_empty() { (1..=CHECK_NAMES.len()).collect() } else { cfg.only.clone() };
    let mut results = Vec::new();
    for id in ids {
        let result = run_check(id, mode).map_err(|e| CliError::Usage(e.to_string()))?;
        println!("{result}");
        results.push(result);
    }
    let passed = results.iter().filter(|r| r.passed).count();
    println!("{passed}/{} checks passed", results.len());
    let rows = results
        .iter()
        .map(|r| vec![r.id.to_string(), r.name.clone(), r.passed.to_string(), r.detail.clone()]);
    write_csv(create(&cfg.out)?, &["id", "name", "passed", "detail"], rows)?;
    Ok(Outcome {
        outputs: vec![cfg.out.display().to_string()],
        columns: vec!["id", "name", "passed", "detail"],
        summary: json!({ "mode": mode, "passed": passed, "total": results.len(), "checks": results }),
        failed: passed < results.len(),
    })
}
