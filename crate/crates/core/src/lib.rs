//! Residual-free bubble (RFB) finite elements for nonlinear multiscale
//! elliptic problems
//!
//! ```text
//!     -div(alpha_eps(x) b(u) grad u) = f   in the unit square,
//!                                   u = 0   on the boundary.
//! ```
//!
//! The crate is organised bottom-up:
//!
//! - [`mesh`]: structured triangulations, uniform refinement, per-element
//!   sub-meshes carrying the bubble degrees of freedom, nested transfer.
//! - [`coefficients`]: oscillatory diffusion fields and nonlinearities with
//!   their Kirchhoff antiderivatives.
//! - [`fem`]: P1 quadrature, sparse assembly, linear solvers and norms.
//! - [`bubble`]: local lift problems, static condensation and the
//!   residual-free check.
//! - [`solvers`]: Picard drivers for classical Galerkin, the fine-mesh
//!   reference and the coupled, decoupled and reduced RFB linearizations.
//! - [`kirchhoff`]: the linear transformed problem used as an independent
//!   oracle, and manufactured right-hand sides.
//! - [`analysis`]: convergence studies, Céa ratios and CSV output.
//! - [`config`]: the flat `key = value` run configuration.
//! - [`acceptance`]: the built-in verification suite.

pub mod acceptance;
pub mod analysis;
pub mod bubble;
pub mod coefficients;
pub mod config;
pub mod error;
pub mod fem;
pub mod kirchhoff;
pub mod mesh;
pub mod problem;
pub mod solvers;

pub use error::{Error, Result};
