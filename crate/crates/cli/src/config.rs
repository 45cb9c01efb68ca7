use std::fs;
use std::path::{Path, PathBuf};

use fraclab_core::{FracError, FracParams, PeriodicWeight, Variant};
use serde::{Deserialize, Serialize};

use crate::args::{ProblemArgs, VerifyArgs};
use crate::CliError;

/// Values read from `--config`; every key mirrors a long flag.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FileConfig {
    pub bc: Option<String>,
    pub s: Option<f64>,
    pub p: Option<f64>,
    pub cells: Option<usize>,
    pub weight: Option<String>,
    pub eps: Option<String>,
    pub k: Option<usize>,
    pub seed: Option<u64>,
    pub quad_order: Option<usize>,
    pub probes: Option<usize>,
    pub delta: Option<String>,
    pub krange: Option<String>,
    pub out: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub quick: Option<bool>,
    pub only: Option<Vec<usize>>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("--config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("--config {}: {e}", path.display())))
    }
}

/// Fully resolved problem settings, serialised into the manifest with flag names as keys.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct RunConfig {
    pub bc: String,
    pub s: f64,
    pub p: f64,
    pub cells: usize,
    pub weight: String,
    pub eps: String,
    pub k: usize,
    pub seed: u64,
    pub quad_order: usize,
    pub probes: usize,
    pub delta: String,
    pub krange: String,
    pub out: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct VerifyConfig {
    pub quick: bool,
    pub only: Vec<usize>,
    pub out: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
}

pub struct Defaults {
    pub cells: usize,
    pub eps: &'static str,
    pub out: &'static str,
}

pub fn defaults(command: &str) -> Defaults {
    let (cells, eps) = match command {
        "spectrum" => (256, "limit"),
        "poincare" => (64, "1:1/64"),
        "boundary-layer" => (512, "1/4:1/64"),
        "weyl" => (2048, "1/4:1/64"),
        _ => (1024, "1/4:1/64"),
    };
    let out = match command {
        "spectrum" => "spectrum.csv",
        "sweep" => "sweep.csv",
        "poincare" => "poincare.csv",
        "oscillation" => "oscillation.csv",
        "boundary-layer" => "boundary_layer.csv",
        "weyl" => "weyl.csv",
        _ => "verify.csv",
    };
    Defaults { cells, eps, out }
}

impl RunConfig {
    pub fn resolve(command: &str, flags: &ProblemArgs, file: FileConfig, jobs: Option<usize>) -> Self {
        let d = defaults(command);
        Self {
            bc: flags.bc.clone().or(file.bc).unwrap_or_else(|| "dirichlet".into()),
            s: flags.s.or(file.s).unwrap_or(0.5),
            p: flags.p.or(file.p).unwrap_or(2.0),
            cells: flags.cells.or(file.cells).unwrap_or(d.cells),
            weight: flags.weight.clone().or(file.weight).unwrap_or_else(|| "sin:base=2,amp=1".into()),
            eps: flags.eps.clone().or(file.eps).unwrap_or_else(|| d.eps.into()),
            k: flags.k.or(file.k).unwrap_or(5),
            seed: flags.seed.or(file.seed).unwrap_or(0),
            quad_order: flags.quad_order.or(file.quad_order).unwrap_or(fraclab_core::assembly::DEFAULT_QUAD_ORDER),
            probes: flags.probes.or(file.probes).unwrap_or(8),
            delta: flags.delta.clone().or(file.delta).unwrap_or_else(|| "1/8:1/128".into()),
            krange: flags.krange.clone().or(file.krange).unwrap_or_else(|| "5:40".into()),
            out: flags.out.clone().or(file.out).unwrap_or_else(|| d.out.into()),
            cache_dir: flags.cache_dir.clone().or(file.cache_dir),
            jobs: jobs.or(file.jobs),
        }
    }

    pub fn variant(&self) -> Result<Variant, CliError> {
        match self.bc.to_ascii_lowercase().as_str() {
            "dirichlet" => Ok(Variant::DirichletExterior),
            "neumann" => Ok(Variant::RegionalNeumann),
            other => Err(CliError::Usage(format!("--bc {other:?}: expected dirichlet or neumann"))),
        }
    }

    pub fn params(&self) -> Result<FracParams, CliError> {
        FracParams::new(self.s, self.p).map_err(|e| CliError::Usage(format!("--s/--p: {e}")))
    }

    pub fn periodic_weight(&self) -> Result<PeriodicWeight, CliError> {
        self.weight.parse().map_err(|e: FracError| CliError::Usage(format!("--weight {:?}: {e}", self.weight)))
    }

    pub fn eps_list(&self) -> Result<Vec<f64>, CliError> {
        parse_scales(&self.eps).map_err(|e| CliError::Usage(format!("--eps {:?}: {e}", self.eps)))
    }

    pub fn delta_list(&self) -> Result<Vec<f64>, CliError> {
        parse_scales(&self.delta).map_err(|e| CliError::Usage(format!("--delta {:?}: {e}", self.delta)))
    }

    pub fn k_range(&self) -> Result<(usize, usize), CliError> {
        let bad = || CliError::Usage(format!("--krange {:?}: expected LO:HI", self.krange));
        let (lo, hi) = self.krange.split_once(':').ok_or_else(bad)?;
        Ok((lo.trim().parse().map_err(|_| bad())?, hi.trim().parse().map_err(|_| bad())?))
    }

    /// Hypotheses that must hold before the command runs.
    pub fn validate(&self, command: &str) -> Result<(), CliError> {
        let params = self.params()?;
        let variant = self.variant()?;
        self.periodic_weight()?;
        if self.cells < 2 {
            return Err(CliError::Usage("--cells must be at least 2".into()));
        }
        if self.k == 0 {
            return Err(CliError::Usage("--k must be at least 1".into()));
        }
        let needs_trace = command == "boundary-layer"
            || (variant == Variant::RegionalNeumann && matches!(command, "sweep" | "oscillation"));
        if needs_trace {
            params.require_trace_regime().map_err(|e| CliError::Usage(e.to_string()))?;
        }
        if command == "weyl" && !params.is_quadratic() {
            return Err(CliError::Usage("weyl needs --p 2".into()));
        }
        Ok(())
    }
}

impl VerifyConfig {
    pub fn resolve(flags: &VerifyArgs, file: FileConfig, jobs: Option<usize>) -> Self {
        let only = if flags.only.is_empty() { file.only.unwrap_or_default() } else { flags.only.clone() };
        Self {
            quick: flags.quick || file.quick.unwrap_or(false),
            only,
            out: flags.out.clone().or(file.out).unwrap_or_else(|| defaults("verify-all").out.into()),
            jobs: jobs.or(file.jobs),
        }
    }
}

fn parse_value(text: &str) -> Result<f64, String> {
    let text = text.trim();
    let value = match text.split_once('/') {
        Some((n, d)) => {
            let n: f64 = n.trim().parse().map_err(|_| format!("bad numerator in {text:?}"))?;
            let d: f64 = d.trim().parse().map_err(|_| format!("bad denominator in {text:?}"))?;
            n / d
        }
        None => text.parse().map_err(|_| format!("not a number: {text:?}"))?,
    };
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(format!("{text:?} is not positive"))
    }
}

/// `"a:b"` halves from `a` down to `b`; `"a,b,c"` is an explicit list. The result must be
/// strictly decreasing. `"limit"` gives an empty list.
pub fn parse_scales(text: &str) -> Result<Vec<f64>, String> {
    if text.trim() == "limit" {
        return Ok(Vec::new());
    }
    let list = if let Some((a, b)) = text.split_once(':') {
        let (hi, lo) = (parse_value(a)?, parse_value(b)?);
        if lo > hi {
            return Err("range must run from the larger to the smaller value".into());
        }
        let mut out = vec![hi];
        while out.last().unwrap() / 2.0 >= lo * (1.0 - 1e-12) {
            out.push(out.last().unwrap() / 2.0);
        }
        out
    } else {
        text.split(',').map(parse_value).collect::<Result<Vec<_>, _>>()?
    };
    if list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err("values must be strictly decreasing".into());
    }
    Ok(list)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_ranges() {
        assert_eq!(parse_scales("1/4:1/64").unwrap(), vec![0.25, 0.125, 0.0625, 0.03125, 0.015625]);
        assert_eq!(parse_scales("0.5,0.1").unwrap(), vec![0.5, 0.1]);
        assert_eq!(parse_scales("1/8").unwrap(), vec![0.125]);
        assert!(parse_scales("limit").unwrap().is_empty());
        assert!(parse_scales("0.1,0.5").is_err());
        assert!(parse_scales("1/64:1/4").is_err());
        assert!(parse_scales("-1").is_err());
        assert!(parse_scales("x").is_err());
    }

    #[test]
    fn flags_override_file() {
        let file: FileConfig = serde_json::from_str(r#"{"s": 0.3, "cells": 128, "bc": "neumann"}"#).unwrap();
        let flags = ProblemArgs { s: Some(0.7), ..Default::default() };
        let cfg = RunConfig::resolve("sweep", &flags, file, None);
        assert_eq!(cfg.s, 0.7);
        assert_eq!(cfg.cells, 128);
        assert_eq!(cfg.bc, "neumann");
        assert_eq!(cfg.p, 2.0);
    }

    #[test]
    fn unknown_file_key_rejected() {
        assert!(serde_json::from_str::<FileConfig>(r#"{"cels": 3}"#).is_err());
    }
}
