//! Shared fixtures for the benchmarks.

use fraclab_core::assembly::{assemble_mass, build_discretization, GagliardoDiscretization, MassMatrix};
use fraclab_core::domain::{make_grid, sample_weight, PeriodicWeight, Scale};
use fraclab_core::{FracParams, Variant};

pub fn discretization(n_cells: usize, s: f64, p: f64, variant: Variant) -> GagliardoDiscretization {
    let grid = make_grid(0.0, 1.0, n_cells).expect("valid grid");
    let params = FracParams::new(s, p).expect("valid parameters");
    build_discretization(&grid, params, variant, fraclab_core::assembly::DEFAULT_QUAD_ORDER).expect("assembly")
}

/// `2 + sin(2 pi x / eps)` mass on the grid of `disc`.
pub fn sine_mass(disc: &GagliardoDiscretization, eps: f64) -> MassMatrix {
    let w = PeriodicWeight::sinusoid(2.0, 1.0).expect("valid weight");
    let field = sample_weight(&w, disc.grid(), Scale::Eps(eps)).expect("resolved weight");
    assemble_mass(disc.grid(), &field, disc.params().p(), disc.variant()).expect("mass")
}

pub fn smooth_vector(dim: usize) -> Vec<f64> {
    (0..dim).map(|i| ((i as f64 + 1.0) * 0.61).sin() + 0.3).collect()
}
