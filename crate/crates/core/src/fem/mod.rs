//! P1 finite-element machinery.

mod assembly;
mod linsolve;
mod norms;
mod quadrature;
mod sparse;

pub use assembly::{
    assemble_load, assemble_stiffness_with, assemble_weighted_stiffness, element_quadrature_points,
    element_stiffness, p1_gradients, rule_for_scale,
};
pub use linsolve::{
    bicgstab, pcg, solve_dense_general, solve_dense_spd, solve_general, solve_spd, solve_spd_auto, SolveStats,
    DENSE_LIMIT,
};
pub use norms::{error_norms, h1_seminorm, l2_norm, DiscreteFunction};
pub use quadrature::{quad_rule, QuadRule};
pub use sparse::{CsrMatrix, DofMap, SparseSystem};
