//! Numerical laboratory for the homogenisation of weighted fractional p-Laplacian
//! eigenvalues on an interval.

pub mod assembly;
pub mod domain;
pub mod error;
pub mod homogenize;
pub mod inequalities;
pub mod quadrature;
pub mod report;
pub mod spectral;
pub mod verify;

pub use error::{FracError, Result};

pub use assembly::{FracParams, Variant};
pub use domain::{Grid1D, PeriodicWeight, WeightField};
pub use homogenize::{SweepConfig, SweepReport};
pub use inequalities::ConstantReport;
pub use spectral::{MinimizerOptions, Spectrum};
pub use verify::{CheckResult, Mode};
