use std::time::{Duration, Instant};

use crate::{Error, Result};

/// Starting point of a Picard iteration.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum InitialGuess {
    #[default]
    Zero,
    /// Nodal values on the mesh being solved on (the coarse mesh for RFB
    /// schemes, whose initial bubbles are zero).
    Given(Vec<f64>),
    /// Warm start from the classical coarse Galerkin solution (RFB schemes).
    Galerkin,
}

impl InitialGuess {
    pub fn label(&self) -> &'static str {
        match self {
            InitialGuess::Zero => "zero",
            InitialGuess::Given(_) => "given",
            InitialGuess::Galerkin => "galerkin",
        }
    }
}

/// Stopping rule and start of the fixed-point iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct PicardConfig {
    /// Stop when `|u^n - u^{n-1}|_{H1} <= tol |u^n|_{H1}`.
    pub tol: f64,
    pub max_iter: usize,
    pub initial_guess: InitialGuess,
    /// Relative residual for the iterative linear solves inside each step.
    pub linear_tol: f64,
}

impl Default for PicardConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 50,
            initial_guess: InitialGuess::Zero,
            linear_tol: 1e-12,
        }
    }
}

impl PicardConfig {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::invalid(format!("Picard tolerance must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("Picard max_iter must be at least 1"));
        }
        if !(self.linear_tol > 0.0) {
            return Err(Error::invalid("linear tolerance must be positive"));
        }
        Ok(())
    }
}

/// Iteration history of one nonlinear solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub converged: bool,
    pub iterations: usize,
    /// `|u^n - u^{n-1}|_{H1}` per iteration.
    pub increment_history: Vec<f64>,
    /// Successive increment ratios, from the second increment on.
    pub contraction_estimates: Vec<f64>,
    pub wall_time: Duration,
}

impl SolveReport {
    /// Last measured contraction ratio, if at least two increments exist.
    pub fn final_ratio(&self) -> Option<f64> {
        self.contraction_estimates.last().copied()
    }
}

/// Generic fixed-point loop. `step` maps the previous iterate to the next,
/// `measure` returns `(|next - prev|, |next|)`. When `linear` is set the
/// frozen coefficient does not depend on the iterate and one step is exact.
pub(crate) fn iterate<S>(
    cfg: &PicardConfig,
    initial: S,
    linear: bool,
    mut step: impl FnMut(&S) -> Result<S>,
    measure: impl Fn(&S, &S) -> (f64, f64),
) -> Result<(S, SolveReport)> {
    cfg.validate()?;
    let start = Instant::now();
    let mut current = initial;
    let mut increments = Vec::new();
    let mut converged = false;
    for _ in 0..cfg.max_iter {
        let next = step(&current)?;
        let (inc, size) = measure(&next, &current);
        increments.push(inc);
        current = next;
        if linear || inc <= cfg.tol * size {
            converged = true;
            break;
        }
    }
    let contraction_estimates = increments
        .windows(2)
        .map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 })
        .collect();
    let report = SolveReport {
        converged,
        iterations: increments.len(),
        increment_history: increments,
        contraction_estimates,
        wall_time: start.elapsed(),
    };
    Ok((current, report))
}
