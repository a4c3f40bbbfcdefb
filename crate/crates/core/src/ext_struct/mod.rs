//! Structural extensions: a non-uniform state prior and non-uniform signal
//! noise.

pub mod noise;
pub mod prior;

pub use noise::{
    solve_noise_equilibrium, solve_noise_equilibrium_with, FocReport, NoiseEquilibrium,
    NoiseOptions, NoiseSolver,
};
pub use prior::{
    build_prior_max_rule, consistency_in_range, k_minus, prior_mimic_value, prior_phi_slope_limit,
    prior_phi_small_m, solve_mbar, solve_mbar_grid, PriorMimicReport, PriorMimicSolution,
};
