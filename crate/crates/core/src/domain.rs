//! Grids, periodic weights and the sampled weight fields `rho(x / eps)`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{FracError, Result};

/// Uniform partition of the interval `(a, b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    a: f64,
    b: f64,
    n_cells: usize,
    nodes: Vec<f64>,
    h: f64,
}

impl Grid1D {
    pub fn new(a: f64, b: f64, n_cells: usize) -> Result<Self> {
        if !a.is_finite() || !b.is_finite() {
            return Err(FracError::invalid(format!("non-finite endpoints ({a}, {b})")));
        }
        if b <= a {
            return Err(FracError::invalid(format!("empty interval: b = {b} <= a = {a}")));
        }
        if n_cells < 2 {
            return Err(FracError::invalid(format!("n_cells = {n_cells}, need at least 2")));
        }
        let h = (b - a) / n_cells as f64;
        let mut nodes: Vec<f64> = (0..=n_cells).map(|i| a + i as f64 * h).collect();
        nodes[n_cells] = b;
        Ok(Self { a, b, n_cells, nodes, h })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn n_nodes(&self) -> usize {
        self.n_cells + 1
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn length(&self) -> f64 {
        self.b - self.a
    }

    pub fn midpoint(&self, cell: usize) -> f64 {
        self.a + (cell as f64 + 0.5) * self.h
    }

    /// Point at local coordinate `xi` in `[0, 1]` of `cell`.
    pub fn point(&self, cell: usize, xi: f64) -> f64 {
        self.a + (cell as f64 + xi) * self.h
    }
}

/// Shorthand for [`Grid1D::new`].
pub fn make_grid(a: f64, b: f64, n_cells: usize) -> Result<Grid1D> {
    Grid1D::new(a, b, n_cells)
}

/// Shape of the unit-cell function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightKind {
    Constant { value: f64 },
    /// `base + amp * sin(2 pi x)`.
    Sinusoid { base: f64, amp: f64 },
    /// `steps` equal sub-intervals alternating `lo, hi, lo, ...`, right-continuous at the jumps.
    Checkerboard { lo: f64, hi: f64, steps: usize },
    /// Piecewise constant on `samples.len()` equal sub-intervals.
    Tabulated { samples: Vec<f64> },
}

/// A 1-periodic weight `rho` with `0 < rho_minus <= rho <= rho_plus`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicWeight {
    kind: WeightKind,
    rho_minus: f64,
    rho_plus: f64,
}

impl PeriodicWeight {
    pub fn new(kind: WeightKind) -> Result<Self> {
        let (lo, hi) = match &kind {
            WeightKind::Constant { value } => (*value, *value),
            WeightKind::Sinusoid { base, amp } => (base - amp.abs(), base + amp.abs()),
            WeightKind::Checkerboard { lo, hi, steps } => {
                if *steps < 2 || steps % 2 != 0 {
                    return Err(FracError::invalid(format!(
                        "checkerboard needs an even step count >= 2, got {steps}"
                    )));
                }
                (lo.min(*hi), lo.max(*hi))
            }
            WeightKind::Tabulated { samples } => {
                if samples.is_empty() {
                    return Err(FracError::invalid("tabulated weight has no samples"));
                }
                samples
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                        (lo.min(v), hi.max(v))
                    })
            }
        };
        if !lo.is_finite() || !hi.is_finite() {
            return Err(FracError::invalid("weight parameters must be finite"));
        }
        if lo <= 0.0 {
            return Err(FracError::Hypothesis(format!(
                "weight must be bounded away from zero (rho_minus = {lo} <= 0)"
            )));
        }
        Ok(Self { kind, rho_minus: lo, rho_plus: hi })
    }

    pub fn constant(value: f64) -> Result<Self> {
        Self::new(WeightKind::Constant { value })
    }

    pub fn sinusoid(base: f64, amp: f64) -> Result<Self> {
        Self::new(WeightKind::Sinusoid { base, amp })
    }

    pub fn checkerboard(lo: f64, hi: f64) -> Result<Self> {
        Self::new(WeightKind::Checkerboard { lo, hi, steps: 2 })
    }

    pub fn tabulated(samples: Vec<f64>) -> Result<Self> {
        Self::new(WeightKind::Tabulated { samples })
    }

    /// Reads a one-column CSV of unit-cell samples. A non-numeric first row is treated as a header.
    pub fn from_table_file(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path.as_ref())?;
        let mut samples = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record?;
            let Some(field) = record.get(0) else { continue };
            if field.is_empty() {
                continue;
            }
            match field.parse::<f64>() {
                Ok(v) => samples.push(v),
                Err(_) if row == 0 => continue,
                Err(_) => {
                    return Err(FracError::invalid(format!(
                        "{}: row {} is not a number: {field:?}",
                        path.as_ref().display(),
                        row + 1
                    )))
                }
            }
        }
        Self::tabulated(samples)
    }

    pub fn kind(&self) -> &WeightKind {
        &self.kind
    }

    pub fn rho_minus(&self) -> f64 {
        self.rho_minus
    }

    pub fn rho_plus(&self) -> f64 {
        self.rho_plus
    }

    /// Evaluates the 1-periodic extension at `x`.
    pub fn eval(&self, x: f64) -> f64 {
        let t = x - x.floor();
        match &self.kind {
            WeightKind::Constant { value } => *value,
            WeightKind::Sinusoid { base, amp } => base + amp * (2.0 * std::f64::consts::PI * t).sin(),
            WeightKind::Checkerboard { lo, hi, steps } => {
                let idx = ((t * *steps as f64).floor() as usize).min(steps - 1);
                if idx % 2 == 0 {
                    *lo
                } else {
                    *hi
                }
            }
            WeightKind::Tabulated { samples } => {
                let m = samples.len();
                let idx = ((t * m as f64).floor() as usize).min(m - 1);
                samples[idx]
            }
        }
    }

    /// Exact average over the unit cell.
    pub fn mean(&self) -> f64 {
        match &self.kind {
            WeightKind::Constant { value } => *value,
            WeightKind::Sinusoid { base, .. } => *base,
            WeightKind::Checkerboard { lo, hi, .. } => 0.5 * (lo + hi),
            WeightKind::Tabulated { samples } => samples.iter().sum::<f64>() / samples.len() as f64,
        }
    }

    /// Composite midpoint rule for the cell average with `quad_cells` sub-intervals.
    pub fn weight_mean(&self, quad_cells: usize) -> Result<f64> {
        if quad_cells == 0 {
            return Err(FracError::invalid("quad_cells must be positive"));
        }
        let n = quad_cells as f64;
        Ok((0..quad_cells).map(|i| self.eval((i as f64 + 0.5) / n)).sum::<f64>() / n)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let kind = match &self.kind {
            WeightKind::Constant { value } => WeightKind::Constant { value: value * factor },
            WeightKind::Sinusoid { base, amp } => WeightKind::Sinusoid {
                base: base * factor,
                amp: amp * factor,
            },
            WeightKind::Checkerboard { lo, hi, steps } => WeightKind::Checkerboard {
                lo: lo * factor,
                hi: hi * factor,
                steps: *steps,
            },
            WeightKind::Tabulated { samples } => WeightKind::Tabulated {
                samples: samples.iter().map(|v| v * factor).collect(),
            },
        };
        Self::new(kind)
    }
}

impl fmt::Display for PeriodicWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            WeightKind::Constant { value } => write!(f, "const:{value}"),
            WeightKind::Sinusoid { base, amp } => write!(f, "sin:base={base},amp={amp}"),
            WeightKind::Checkerboard { lo, hi, steps } if *steps == 2 => write!(f, "checker:lo={lo},hi={hi}"),
            WeightKind::Checkerboard { lo, hi, steps } => write!(f, "checker:lo={lo},hi={hi},steps={steps}"),
            WeightKind::Tabulated { samples } => write!(f, "table:<{} samples>", samples.len()),
        }
    }
}

fn parse_kv(body: &str) -> Result<Vec<(String, f64)>> {
    body.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|pair| {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| FracError::invalid(format!("expected key=value, got {pair:?}")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| FracError::invalid(format!("not a number in {pair:?}")))?;
            Ok((k.trim().to_string(), v))
        })
        .collect()
}

fn take(kv: &[(String, f64)], key: &str, default: Option<f64>) -> Result<f64> {
    kv.iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| *v)
        .or(default)
        .ok_or_else(|| FracError::invalid(format!("missing parameter {key:?}")))
}

fn reject_unknown(kv: &[(String, f64)], allowed: &[&str]) -> Result<()> {
    match kv.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
        Some((k, _)) => Err(FracError::invalid(format!("unknown weight parameter {k:?}"))),
        None => Ok(()),
    }
}

/// Weight mini-language: `const:3`, `sin:base=2,amp=1`, `checker:lo=1,hi=3[,steps=2]`,
/// `table:<path.csv>`.
impl FromStr for PeriodicWeight {
    type Err = FracError;

    fn from_str(spec: &str) -> Result<Self> {
        let (tag, body) = spec
            .split_once(':')
            .ok_or_else(|| FracError::invalid(format!("weight spec {spec:?} lacks a kind prefix")))?;
        match tag.trim() {
            "const" => {
                let value: f64 = body
                    .trim()
                    .parse()
                    .map_err(|_| FracError::invalid(format!("bad constant in {spec:?}")))?;
                Self::constant(value)
            }
            "sin" => {
                let kv = parse_kv(body)?;
                reject_unknown(&kv, &["base", "amp"])?;
                Self::sinusoid(take(&kv, "base", None)?, take(&kv, "amp", None)?)
            }
            "checker" => {
                let kv = parse_kv(body)?;
                reject_unknown(&kv, &["lo", "hi", "steps"])?;
                let steps = take(&kv, "steps", Some(2.0))?;
                if steps.fract() != 0.0 || steps < 0.0 {
                    return Err(FracError::invalid("steps must be a non-negative integer"));
                }
                Self::new(WeightKind::Checkerboard {
                    lo: take(&kv, "lo", None)?,
                    hi: take(&kv, "hi", None)?,
                    steps: steps as usize,
                })
            }
            "table" => Self::from_table_file(body.trim()),
            other => Err(FracError::invalid(format!("unknown weight kind {other:?}"))),
        }
    }
}

/// Oscillation scale of a sampled field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Eps(f64),
    /// Homogenised limit: the constant field at the cell average.
    Limit,
}

impl Scale {
    pub fn eps(self) -> Option<f64> {
        match self {
            Scale::Eps(e) => Some(e),
            Scale::Limit => None,
        }
    }

    /// True when `1/eps` is an integer (to 1e-9).
    pub fn is_reciprocal_integer(self) -> bool {
        match self {
            Scale::Eps(e) => {
                let m = 1.0 / e;
                (m - m.round()).abs() <= 1e-9 * m.max(1.0)
            }
            Scale::Limit => true,
        }
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scale::Eps(e) => write!(f, "{e}"),
            Scale::Limit => f.write_str("limit"),
        }
    }
}

/// Cellwise-constant weight on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightField {
    grid: Grid1D,
    cell_values: Vec<f64>,
    scale: Scale,
    rho_minus: f64,
    rho_plus: f64,
}

impl WeightField {
    pub fn constant(grid: &Grid1D, value: f64) -> Result<Self> {
        if !(value > 0.0 && value.is_finite()) {
            return Err(FracError::Hypothesis(format!("constant weight {value} is not positive")));
        }
        Ok(Self {
            grid: grid.clone(),
            cell_values: vec![value; grid.n_cells()],
            scale: Scale::Limit,
            rho_minus: value,
            rho_plus: value,
        })
    }

    /// Midpoint sampling of an arbitrary weight, e.g. a non-periodic family member.
    /// Every sample must lie in `bounds`.
    pub fn from_fn(grid: &Grid1D, scale: Scale, bounds: (f64, f64), f: impl Fn(f64) -> f64) -> Result<Self> {
        let (lo, hi) = bounds;
        if !(lo > 0.0 && hi >= lo) {
            return Err(FracError::Hypothesis(format!("invalid weight bounds ({lo}, {hi})")));
        }
        let cell_values: Vec<f64> = (0..grid.n_cells()).map(|c| f(grid.midpoint(c))).collect();
        if let Some(bad) = cell_values.iter().find(|v| !(**v >= lo && **v <= hi)) {
            return Err(FracError::Hypothesis(format!("weight sample {bad} outside [{lo}, {hi}]")));
        }
        Ok(Self { grid: grid.clone(), cell_values, scale, rho_minus: lo, rho_plus: hi })
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn cell_values(&self) -> &[f64] {
        &self.cell_values
    }

    pub fn scale(&self) -> Scale {
        self.scale
    }

    pub fn rho_minus(&self) -> f64 {
        self.rho_minus
    }

    pub fn rho_plus(&self) -> f64 {
        self.rho_plus
    }

    /// Multiplies every cell value (and the bounds) by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0) {
            return Err(FracError::invalid("weight scale factor must be positive"));
        }
        Ok(Self {
            grid: self.grid.clone(),
            cell_values: self.cell_values.iter().map(|v| v * factor).collect(),
            scale: self.scale,
            rho_minus: self.rho_minus * factor,
            rho_plus: self.rho_plus * factor,
        })
    }
}

/// Samples `rho(x / eps)` at cell midpoints, or the constant mean field for [`Scale::Limit`].
pub fn sample_weight(w: &PeriodicWeight, grid: &Grid1D, scale: Scale) -> Result<WeightField> {
    let cell_values = match scale {
        Scale::Limit => vec![w.mean(); grid.n_cells()],
        Scale::Eps(eps) => {
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(FracError::invalid(format!("eps must be positive, got {eps}")));
            }
            if eps > 1.0 {
                return Err(FracError::invalid(format!("eps must not exceed 1, got {eps}")));
            }
            if grid.h() > 0.5 * eps {
                return Err(FracError::UnderResolved { h: grid.h(), half_eps: 0.5 * eps });
            }
            if grid.h() > eps / 16.0 {
                log::warn!(
                    "eps = {eps} is resolved by only {:.1} cells per period",
                    eps / grid.h()
                );
            }
            if !scale.is_reciprocal_integer() {
                log::warn!("eps = {eps} is not the reciprocal of an integer");
            }
            (0..grid.n_cells()).map(|c| w.eval(grid.midpoint(c) / eps)).collect()
        }
    };
    Ok(WeightField {
        grid: grid.clone(),
        cell_values,
        scale,
        rho_minus: w.rho_minus(),
        rho_plus: w.rho_plus(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_examples() {
        let g = make_grid(0.0, 1.0, 4).unwrap();
        assert_eq!(g.nodes(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(g.h(), 0.25);
        assert_eq!(make_grid(0.0, 1.0, 2).unwrap().nodes(), &[0.0, 0.5, 1.0]);
        assert_eq!(make_grid(-1.0, 1.0, 4).unwrap().h(), 0.5);
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert!(make_grid(1.0, 1.0, 4).is_err());
        assert!(make_grid(0.0, f64::NAN, 4).is_err());
        assert!(make_grid(0.0, f64::INFINITY, 4).is_err());
        assert!(make_grid(0.0, 1.0, 1).is_err());
    }

    #[test]
    fn grid_is_uniform() {
        let g = make_grid(-0.3, 2.7, 1000).unwrap();
        for w in g.nodes().windows(2) {
            assert!(w[1] > w[0]);
            assert!(((w[1] - w[0]) - g.h()).abs() < 1e-13);
        }
        assert_eq!(*g.nodes().last().unwrap(), 2.7);
    }

    #[test]
    fn means() {
        let c = PeriodicWeight::constant(3.0).unwrap();
        assert_eq!(c.weight_mean(7).unwrap(), 3.0);
        let s = PeriodicWeight::sinusoid(2.0, 1.0).unwrap();
        assert!((s.weight_mean(64).unwrap() - 2.0).abs() < 1e-14);
        let ch = PeriodicWeight::checkerboard(1.0, 3.0).unwrap();
        assert_eq!(ch.weight_mean(8).unwrap(), 2.0);
        assert_eq!(ch.mean(), 2.0);
    }

    #[test]
    fn checkerboard_sampling() {
        let ch = PeriodicWeight::checkerboard(1.0, 3.0).unwrap();
        let g = make_grid(0.0, 1.0, 8).unwrap();
        let f = sample_weight(&ch, &g, Scale::Eps(0.5)).unwrap();
        assert_eq!(f.cell_values(), &[1.0, 1.0, 3.0, 3.0, 1.0, 1.0, 3.0, 3.0]);
    }

    #[test]
    fn checkerboard_is_right_continuous() {
        let ch = PeriodicWeight::checkerboard(1.0, 3.0).unwrap();
        assert_eq!(ch.eval(0.5), 3.0);
        assert_eq!(ch.eval(0.0), 1.0);
        assert_eq!(ch.eval(1.0), 1.0);
        assert_eq!(ch.eval(-0.25), 3.0);
    }

    #[test]
    fn limit_and_constant_fields() {
        let g = make_grid(0.0, 1.0, 16).unwrap();
        let s = PeriodicWeight::sinusoid(2.0, 1.0).unwrap();
        let f = sample_weight(&s, &g, Scale::Limit).unwrap();
        assert!(f.cell_values().iter().all(|v| (v - 2.0).abs() < 1e-14));
        let c = PeriodicWeight::constant(3.0).unwrap();
        let f = sample_weight(&c, &g, Scale::Eps(0.25)).unwrap();
        assert!(f.cell_values().iter().all(|v| *v == 3.0));
    }

    #[test]
    fn sampling_errors() {
        let g = make_grid(0.0, 1.0, 8).unwrap();
        let s = PeriodicWeight::sinusoid(2.0, 1.0).unwrap();
        assert!(matches!(sample_weight(&s, &g, Scale::Eps(0.0)), Err(FracError::InvalidArgument(_))));
        assert!(matches!(sample_weight(&s, &g, Scale::Eps(0.2)), Err(FracError::UnderResolved { .. })));
        assert!(sample_weight(&s, &g, Scale::Eps(0.25)).is_ok());
    }

    #[test]
    fn periodic_repetition() {
        let g = make_grid(0.0, 1.0, 64).unwrap();
        let s = PeriodicWeight::sinusoid(2.0, 0.7).unwrap();
        let f = sample_weight(&s, &g, Scale::Eps(0.25)).unwrap();
        let v = f.cell_values();
        for i in 0..48 {
            assert!((v[i] - v[i + 16]).abs() < 1e-12);
        }
    }

    #[test]
    fn weight_spec_language() {
        assert_eq!(
            "const:3".parse::<PeriodicWeight>().unwrap().kind(),
            &WeightKind::Constant { value: 3.0 }
        );
        assert_eq!(
            "sin:base=2,amp=1".parse::<PeriodicWeight>().unwrap().kind(),
            &WeightKind::Sinusoid { base: 2.0, amp: 1.0 }
        );
        let ch: PeriodicWeight = "checker:lo=1,hi=3".parse().unwrap();
        assert_eq!((ch.rho_minus(), ch.rho_plus()), (1.0, 3.0));
        assert!(matches!(
            "checker:lo=0,hi=1".parse::<PeriodicWeight>(),
            Err(FracError::Hypothesis(_))
        ));
        assert!("sin:base=1,amp=1".parse::<PeriodicWeight>().is_err());
        assert!("wave:1".parse::<PeriodicWeight>().is_err());
        assert!("sin:base=2,amp=1,phase=3".parse::<PeriodicWeight>().is_err());
        assert!("const".parse::<PeriodicWeight>().is_err());
    }

    #[test]
    fn table_weight_from_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.csv");
        std::fs::write(&path, "rho\n1.0\n2.0\n3.0\n2.0\n").unwrap();
        let w: PeriodicWeight = format!("table:{}", path.display()).parse().unwrap();
        assert_eq!(w.mean(), 2.0);
        assert_eq!(w.eval(0.3), 2.0);
        assert_eq!((w.rho_minus(), w.rho_plus()), (1.0, 3.0));
    }

    #[test]
    fn display_round_trips() {
        for spec in ["const:3", "sin:base=2,amp=1", "checker:lo=1,hi=3", "checker:lo=1,hi=3,steps=4"] {
            let w: PeriodicWeight = spec.parse().unwrap();
            assert_eq!(w.to_string(), spec);
        }
    }
}
