//! Kirchhoff-transform oracle: `U = btilde(u)` turns the quasilinear problem
//! into `-div(alpha grad U) = f`, which is solved once and mapped back
//! nodewise.

use std::sync::Arc;

use rayon::prelude::*;

use crate::coefficients::{CoefficientField, Nonlinearity};
use crate::fem::{assemble_load, assemble_stiffness_with, quad_rule, rule_for_scale, solve_spd_auto, DiscreteFunction, DofMap};
use crate::mesh::Mesh;
use crate::problem::{ExactSolution, Problem, ScalarFn};
use crate::Result;

/// Source term for which `exact` solves `-div(alpha b(u) grad u) = f`:
/// `f = -grad alpha . (b(u) grad u) - alpha (b'(u) |grad u|^2 + b(u) lap u)`.
pub fn manufacture_f(exact: &ExactSolution, alpha: &CoefficientField, b: &Nonlinearity) -> ScalarFn {
    let (e, a, b) = (exact.clone(), *alpha, b.clone());
    Arc::new(move |p| {
        let u = (e.u)(p);
        let g = (e.grad)(p);
        let h = (e.hess)(p);
        let ga = a.gradient(p);
        -(ga[0] * g[0] + ga[1] * g[1]) * b.b(u) - a.value(p) * (b.db(u) * (g[0] * g[0] + g[1] * g[1]) + b.b(u) * (h[0] + h[2]))
    })
}

/// Linear transformed solution `U_h` and its nodewise inverse `u_h`.
#[derive(Debug, Clone)]
pub struct KirchhoffSolution {
    pub transformed: DiscreteFunction,
    pub u: DiscreteFunction,
}

/// Solves `-div(alpha grad U) = f` on `mesh` and returns both `U_h` and
/// `btilde^{-1}(U_h)` at the nodes.
pub fn solve_kirchhoff_pair(mesh: &Arc<Mesh>, problem: &Problem, linear_tol: f64) -> Result<KirchhoffSolution> {
    let rule = quad_rule(rule_for_scale(mesh.h(), problem.alpha.epsilon()))?;
    let dofs = DofMap::dirichlet(mesh);
    let a = assemble_stiffness_with(mesh, &dofs, &rule, |_, _, x| problem.alpha.checked_value(x))?;
    let f = problem.f.clone();
    let load = assemble_load(mesh, |x| f(x), &rule, &dofs);
    let big_u = if dofs.is_empty() {
        vec![0.0; mesh.num_nodes()]
    } else {
        dofs.expand(&solve_spd_auto(&a, &load, linear_tol)?)
    };
    let u = big_u
        .par_iter()
        .map(|&s| problem.b.btilde_inv(s))
        .collect::<Result<Vec<_>>>()?;
    Ok(KirchhoffSolution {
        transformed: DiscreteFunction::new(mesh.clone(), big_u)?,
        u: DiscreteFunction::new(mesh.clone(), u)?,
    })
}

/// Oracle approximation of `u` on `mesh`.
pub fn solve_kirchhoff(mesh: &Arc<Mesh>, problem: &Problem, linear_tol: f64) -> Result<DiscreteFunction> {
    solve_kirchhoff_pair(mesh, problem, linear_tol).map(|s| s.u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{error_norms, l2_norm};
    use crate::mesh::generate_structured;
    use crate::solvers::{solve_fine_reference, solve_galerkin, PicardConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn sin_problem() -> Problem {
        Problem::manufactured(CoefficientField::constant(1.0).unwrap(), Nonlinearity::sin(), ExactSolution::sin_sin(1.0))
    }

    #[test]
    fn manufactured_f_simple_cases() {
        let zero = ExactSolution {
            u: Arc::new(|_| 0.0),
            grad: Arc::new(|_| [0.0, 0.0]),
            hess: Arc::new(|_| [0.0; 3]),
        };
        let one = CoefficientField::constant(1.0).unwrap();
        let f = manufacture_f(&zero, &one, &Nonlinearity::sin());
        assert_eq!(f([0.3, 0.7]), 0.0);
        let f = manufacture_f(&ExactSolution::sin_sin(1.0), &one, &Nonlinearity::constant(1.0).unwrap());
        for p in [[0.25, 0.5], [0.1, 0.9]] {
            let want = 2.0 * PI * PI * (PI * p[0]).sin() * (PI * p[1]).sin();
            assert!((f(p) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn manufactured_f_matches_flux_divergence() {
        let exact = ExactSolution::sin_sin(1.0);
        let cases = [CoefficientField::constant(1.0).unwrap(), CoefficientField::periodic(1.0, 0.4, 0.5).unwrap()];
        let b = Nonlinearity::sin();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        // absolute 1e-5 for the constant field, relative 1e-5 for the
        // oscillating one whose flux has larger third derivatives
        for (alpha, scale) in cases.into_iter().zip([0.0, 1.0]) {
            let f = manufacture_f(&exact, &alpha, &b);
            let flux = |p: [f64; 2]| {
                let g = (exact.grad)(p);
                let k = alpha.value(p) * b.b((exact.u)(p));
                [k * g[0], k * g[1]]
            };
            let h = 1e-4;
            for _ in 0..100 {
                let p = [rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95)];
                let div = (flux([p[0] + h, p[1]])[0] - flux([p[0] - h, p[1]])[0]) / (2.0 * h)
                    + (flux([p[0], p[1] + h])[1] - flux([p[0], p[1] - h])[1]) / (2.0 * h);
                assert!((f(p) + div).abs() < 1e-5 * (1.0 + scale * div.abs()), "{} vs {}", f(p), -div);
            }
        }
    }

    #[test]
    fn constant_b_matches_galerkin() {
        let b = Nonlinearity::constant(3.0).unwrap();
        let alpha = CoefficientField::periodic(1.0, 0.5, 0.25).unwrap();
        let p = Problem::new(alpha, b, |x| 1.0 + x[1]);
        let mesh = Arc::new(generate_structured(16).unwrap());
        let k = solve_kirchhoff(&mesh, &p, 1e-13).unwrap();
        let (g, rep) = solve_galerkin(&mesh, &p, &PicardConfig::default()).unwrap();
        assert_eq!(rep.iterations, 1);
        for (a, b) in k.values().iter().zip(g.values()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_load_and_round_trip() {
        let mesh = Arc::new(generate_structured(8).unwrap());
        let p = Problem::new(CoefficientField::constant(2.0).unwrap(), Nonlinearity::sin(), |_| 0.0);
        assert!(solve_kirchhoff(&mesh, &p, 1e-12).unwrap().values().iter().all(|&v| v == 0.0));

        let pair = solve_kirchhoff_pair(&mesh, &sin_problem(), 1e-12).unwrap();
        for (u, big_u) in pair.u.values().iter().zip(pair.transformed.values()) {
            assert!((Nonlinearity::sin().btilde(*u) - big_u).abs() < 1e-11);
        }
    }

    #[test]
    fn agrees_with_picard_reference_at_second_order() {
        let p = sin_problem();
        let cfg = PicardConfig::with_tol(1e-10);
        let mut gaps = Vec::new();
        let mut errors = Vec::new();
        for n in [8, 16, 32] {
            let mesh = Arc::new(generate_structured(n).unwrap());
            let k = solve_kirchhoff(&mesh, &p, 1e-13).unwrap();
            let (r, _) = solve_fine_reference(&mesh, &p, &cfg).unwrap();
            let d: Vec<f64> = k.values().iter().zip(r.values()).map(|(a, b)| a - b).collect();
            gaps.push(l2_norm(&mesh, &d));
            let exact = p.exact.clone().unwrap();
            let (l2, _) = error_norms(&k, |x| (exact.u)(x), |x| (exact.grad)(x));
            errors.push(l2);
        }
        for w in gaps.windows(2) {
            assert!((w[0] / w[1]).log2() > 1.8, "{gaps:?}");
        }
        for w in errors.windows(2) {
            assert!(w[1] <= 1.5 * w[0] / 4.0, "{errors:?}");
        }
    }
}
