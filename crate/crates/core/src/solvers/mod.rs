//! Nonlinear drivers: classical Galerkin Picard, the fine-mesh reference and
//! the residual-free bubble linearizations.

mod composite;
mod galerkin;
mod picard;
mod rfb;

pub use composite::{CompositeSolution, CompositeSpace, Provenance};
pub use galerkin::{galerkin_energy, galerkin_residual, solve_fine_reference, solve_galerkin, GalerkinEnergy};
pub use picard::{InitialGuess, PicardConfig, SolveReport};
pub use rfb::{
    composite_energy, composite_residual, composite_space, condensed_elements, freeze_composite, solve_linear_rfb, solve_rfb, solve_rfb_coupled,
    solve_rfb_decoupled, solve_rfb_reduced, ElementCondensed, ReducedMode, Scheme,
};
