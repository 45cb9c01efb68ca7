use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "fraclab", version, about = "Homogenisation experiments for weighted fractional p-Laplacian eigenvalues")]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    pub verbose: u8,

    /// JSON file with default values; keys mirror the long flag names.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Worker threads for concurrent sweeps.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Eigenvalues of one weighted problem.
    Spectrum(ProblemArgs),
    /// Eigenvalue errors over a sweep of oscillation scales.
    Sweep(ProblemArgs),
    /// Poincare constants on (0, eps).
    Poincare(ProblemArgs),
    /// Oscillating-integral ratios.
    Oscillation(ProblemArgs),
    /// Boundary-layer constants over a sweep of layer widths.
    BoundaryLayer(ProblemArgs),
    /// Growth of the unit-weight Dirichlet eigenvalues.
    Weyl(ProblemArgs),
    /// Run the acceptance checks and print a pass/fail table.
    VerifyAll(VerifyArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Spectrum(_) => "spectrum",
            Command::Sweep(_) => "sweep",
            Command::Poincare(_) => "poincare",
            Command::Oscillation(_) => "oscillation",
            Command::BoundaryLayer(_) => "boundary-layer",
            Command::Weyl(_) => "weyl",
            Command::VerifyAll(_) => "verify-all",
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct ProblemArgs {
    /// Boundary condition: dirichlet or neumann.
    #[arg(long)]
    pub bc: Option<String>,
    #[arg(long)]
    pub s: Option<f64>,
    #[arg(long)]
    pub p: Option<f64>,
    /// Number of grid cells on (0, 1).
    #[arg(long)]
    pub cells: Option<usize>,
    /// Periodic weight, e.g. "sin:base=2,amp=1", "checker:lo=1,hi=3", "const:2", "table:w.csv".
    #[arg(long)]
    pub weight: Option<String>,
    /// Scales: "1/4:1/64" (halving), "0.25,0.1" (list), a single value, or "limit".
    #[arg(long)]
    pub eps: Option<String>,
    /// Number of eigenvalues (only the first when p != 2).
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Gauss points per direction for separated cell pairs.
    #[arg(long)]
    pub quad_order: Option<usize>,
    /// Random probes for the oscillation ratio.
    #[arg(long)]
    pub probes: Option<usize>,
    /// Layer widths for boundary-layer, same syntax as --eps.
    #[arg(long)]
    pub delta: Option<String>,
    /// Index range "5:40" for the Weyl fit.
    #[arg(long)]
    pub krange: Option<String>,
    /// CSV output; JSON and manifest files are written next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, env = "FRACLAB_CACHE_DIR")]
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct VerifyArgs {
    /// Smaller grids and shorter sweeps.
    #[arg(long)]
    pub quick: bool,
    /// Run only these criteria, e.g. "1,5,11".
    #[arg(long, value_delimiter = ',')]
    pub only: Vec<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
