use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::CliError;

/// `dir/stem.ext` for an output path `dir/stem.csv`.
pub fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("fraclab");
    out.with_file_name(format!("{stem}{suffix}"))
}

#[derive(Serialize)]
pub struct Manifest<'a, C: Serialize> {
    pub command: &'a str,
    pub argv: Vec<String>,
    pub config: &'a C,
    pub versions: Value,
    pub seed: u64,
    pub wall_time_seconds: f64,
    pub outputs: Vec<String>,
    /// Column number (1-based, gnuplot style) to name for the CSV output.
    pub columns: Vec<(usize, &'a str)>,
    pub summary: Value,
}

impl<C: Serialize> Manifest<'_, C> {
    pub fn write(&self, out: &Path) -> Result<PathBuf, CliError> {
        let path = sibling(out, ".manifest.json");
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Runtime(e.to_string()))?;
        fs::write(&path, text + "\n").map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}

pub fn versions() -> Value {
    json!({
        "fraclab": env!("CARGO_PKG_VERSION"),
        "pair_cache_format": fraclab_core::assembly::CACHE_VERSION,
    })
}
