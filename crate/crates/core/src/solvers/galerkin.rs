use std::sync::Arc;

use super::picard::{iterate, InitialGuess, PicardConfig, SolveReport};
use crate::fem::{
    assemble_load, assemble_stiffness_with, h1_seminorm, quad_rule, rule_for_scale, solve_spd_auto, DiscreteFunction,
    DofMap,
};
use crate::mesh::Mesh;
use crate::problem::Problem;
use crate::{Error, Result};

fn initial_values(mesh: &Mesh, guess: &InitialGuess) -> Result<Vec<f64>> {
    match guess {
        InitialGuess::Zero | InitialGuess::Galerkin => Ok(vec![0.0; mesh.num_nodes()]),
        InitialGuess::Given(v) if v.len() == mesh.num_nodes() => {
            let mut v = v.clone();
            for &b in mesh.boundary_nodes() {
                v[b] = 0.0;
            }
            Ok(v)
        }
        InitialGuess::Given(v) => Err(Error::invalid(format!(
            "initial guess has {} values, mesh has {} nodes",
            v.len(),
            mesh.num_nodes()
        ))),
    }
}

/// Classical P1 Galerkin with the Picard linearization
/// `-div(alpha b(u^{n-1}) grad u^n) = f`.
pub fn solve_galerkin(mesh: &Arc<Mesh>, problem: &Problem, cfg: &PicardConfig) -> Result<(DiscreteFunction, SolveReport)> {
    cfg.validate()?;
    let rule = quad_rule(rule_for_scale(mesh.h(), problem.alpha.epsilon()))?;
    let dofs = DofMap::dirichlet(mesh);
    let f = problem.f.clone();
    let load = assemble_load(mesh, |x| f(x), &rule, &dofs);
    let u0 = initial_values(mesh, &cfg.initial_guess)?;
    let linear = problem.b.is_constant();
    let step = |prev: &Vec<f64>| -> Result<Vec<f64>> {
        let a = assemble_stiffness_with(mesh, &dofs, &rule, |t, l, x| {
            let tri = mesh.triangles()[t];
            let u = l[0] * prev[tri[0]] + l[1] * prev[tri[1]] + l[2] * prev[tri[2]];
            Ok(problem.alpha.checked_value(x)? * problem.b.checked_b(u)?)
        })?;
        if dofs.is_empty() {
            return Ok(vec![0.0; mesh.num_nodes()]);
        }
        Ok(dofs.expand(&solve_spd_auto(&a, &load, cfg.linear_tol)?))
    };
    let measure = |next: &Vec<f64>, prev: &Vec<f64>| {
        let d: Vec<f64> = next.iter().zip(prev).map(|(a, b)| a - b).collect();
        (h1_seminorm(mesh, &d), h1_seminorm(mesh, next))
    };
    let (u, report) = iterate(cfg, u0, linear, step, measure)?;
    Ok((DiscreteFunction::new(mesh.clone(), u)?, report))
}

/// Galerkin solve on a mesh fine enough to resolve the oscillations; warns
/// when `h > eps / 4`.
pub fn solve_fine_reference(
    mesh: &Arc<Mesh>,
    problem: &Problem,
    cfg: &PicardConfig,
) -> Result<(DiscreteFunction, SolveReport)> {
    let eps = problem.alpha.epsilon();
    if mesh.h() > eps / 4.0 {
        log::warn!("reference mesh h = {:.3e} does not resolve eps = {:.3e} (h > eps/4)", mesh.h(), eps);
    }
    solve_galerkin(mesh, problem, cfg)
}

/// Quantities entering the a-priori energy bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GalerkinEnergy {
    /// `alpha_0 b_0 |u|_{H1}^2`
    pub coercive: f64,
    /// `(f, u)` with the assembly quadrature
    pub work: f64,
}

impl GalerkinEnergy {
    /// `coercive <= work (1 + rel)`.
    pub fn holds(&self, rel: f64) -> bool {
        self.coercive <= self.work * (1.0 + rel) + f64::MIN_POSITIVE
    }
}

pub fn galerkin_energy(u: &DiscreteFunction, problem: &Problem) -> GalerkinEnergy {
    let mesh = u.mesh();
    let rule = quad_rule(rule_for_scale(mesh.h(), problem.alpha.epsilon())).expect("rule");
    let dofs = DofMap::all(mesh);
    let f = problem.f.clone();
    let load = assemble_load(mesh, |x| f(x), &rule, &dofs);
    let work = load.iter().zip(u.values()).map(|(a, b)| a * b).sum();
    let s = u.h1_seminorm();
    GalerkinEnergy {
        coercive: problem.coercivity() * s * s,
        work,
    }
}

/// `||A(u) u - F|| / ||F||` over the free DOFs, with `A(u)` frozen at `u`.
pub fn galerkin_residual(u: &DiscreteFunction, problem: &Problem) -> Result<f64> {
    let mesh = u.mesh();
    let rule = quad_rule(rule_for_scale(mesh.h(), problem.alpha.epsilon()))?;
    let dofs = DofMap::dirichlet(mesh);
    let vals = u.values();
    let a = assemble_stiffness_with(mesh, &dofs, &rule, |t, l, x| {
        let tri = mesh.triangles()[t];
        let uq = l[0] * vals[tri[0]] + l[1] * vals[tri[1]] + l[2] * vals[tri[2]];
        Ok(problem.alpha.checked_value(x)? * problem.b.checked_b(uq)?)
    })?;
    let f = problem.f.clone();
    let load = assemble_load(mesh, |x| f(x), &rule, &dofs);
    let au = a.mul_vec(&dofs.restrict(vals));
    let r: f64 = au.iter().zip(&load).map(|(a, f)| (a - f).powi(2)).sum::<f64>().sqrt();
    let fnorm = load.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(if fnorm > 0.0 { r / fnorm } else { r })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{CoefficientField, Nonlinearity};
    use crate::fem::error_norms;
    use crate::mesh::generate_structured;
    use crate::problem::ExactSolution;

    #[test]
    fn zero_load_gives_zero() {
        let mesh = Arc::new(generate_structured(8).unwrap());
        let p = Problem::new(CoefficientField::constant(1.0).unwrap(), Nonlinearity::sin(), |_| 0.0);
        let (u, rep) = solve_galerkin(&mesh, &p, &PicardConfig::default()).unwrap();
        assert!(u.values().iter().all(|&v| v == 0.0));
        assert!(rep.converged);
        assert!(rep.iterations <= 1);
    }

    #[test]
    fn constant_b_single_step_and_poisson_convergence() {
        let exact = ExactSolution::sin_sin(1.0);
        let p = Problem::manufactured(CoefficientField::constant(1.0).unwrap(), Nonlinearity::constant(1.0).unwrap(), exact.clone());
        let mut errs = Vec::new();
        for n in [8, 16, 32] {
            let mesh = Arc::new(generate_structured(n).unwrap());
            let (u, rep) = solve_galerkin(&mesh, &p, &PicardConfig::default()).unwrap();
            assert_eq!(rep.iterations, 1);
            let (u_ex, g_ex) = (exact.u.clone(), exact.grad.clone());
            errs.push(error_norms(&u, |x| u_ex(x), |x| g_ex(x)));
        }
        for w in errs.windows(2) {
            assert!((w[0].0 / w[1].0).log2() > 1.8);
            assert!((w[0].1 / w[1].1).log2() > 0.9);
        }
    }

    #[test]
    fn nonlinear_fixed_point_and_energy() {
        let alpha = CoefficientField::periodic(1.0, 0.5, 0.25).unwrap();
        let p = Problem::new(alpha, Nonlinearity::sin(), |_| 1.0);
        let mesh = Arc::new(generate_structured(16).unwrap());
        let cfg = PicardConfig::with_tol(1e-10);
        let (u, rep) = solve_galerkin(&mesh, &p, &cfg).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.increment_history.len(), rep.iterations);
        assert!(galerkin_residual(&u, &p).unwrap() <= 10.0 * cfg.tol);
        assert!(galerkin_energy(&u, &p).holds(1e-6));
    }

    #[test]
    fn bad_initial_guess_length() {
        let mesh = Arc::new(generate_structured(2).unwrap());
        let p = Problem::new(CoefficientField::constant(1.0).unwrap(), Nonlinearity::sin(), |_| 1.0);
        let cfg = PicardConfig {
            initial_guess: InitialGuess::Given(vec![0.0; 3]),
            ..PicardConfig::default()
        };
        assert!(solve_galerkin(&mesh, &p, &cfg).is_err());
    }
}
