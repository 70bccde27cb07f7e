use std::sync::Arc;

use proptest::prelude::*;
use rfb_core::analysis::estimate_rate;
use rfb_core::bubble::{condense, solve_local_lifts, BubbleLifts, LocalCoefficient, LocalSystem, SnapshotId};
use rfb_core::coefficients::{CoefficientField, Nonlinearity};
use rfb_core::fem::{h1_seminorm, quad_rule};
use rfb_core::mesh::{build_submesh, generate_structured, interpolate_coarse_on_fine, refine_uniform};
use rfb_core::solvers::CompositeSpace;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn submesh_counts_and_area(n in 1usize..4, m in 3usize..16, pick in 0usize..1000) {
        let mesh = generate_structured(n).unwrap();
        let k = pick % mesh.num_triangles();
        let sub = build_submesh(&mesh, k, m).unwrap();
        prop_assert_eq!(sub.num_nodes(), (m + 1) * (m + 2) / 2);
        prop_assert_eq!(sub.num_interior(), (m - 1) * (m - 2) / 2);
        prop_assert_eq!(sub.triangles().len(), m * m);
        let area: f64 = (0..m * m).map(|t| sub.area(t)).sum();
        prop_assert!((area - mesh.area(k)).abs() < 1e-14);
    }

    #[test]
    fn refinement_preserves_interpolated_functions(n in 1usize..5, levels in 1usize..3, c in prop::collection::vec(-1.0f64..1.0, 3)) {
        let coarse = generate_structured(n).unwrap();
        let fine = refine_uniform(&coarse, levels).unwrap();
        prop_assert_eq!(fine.num_nodes(), (n * (1 << levels) + 1).pow(2));
        prop_assert!((fine.total_area() - 1.0).abs() < 1e-13);
        let vals: Vec<f64> = coarse.nodes().iter().map(|p| c[0] + c[1] * p[0] * p[1] + c[2] * p[1]).collect();
        let up = interpolate_coarse_on_fine(&vals, &coarse, &fine).unwrap();
        prop_assert!((h1_seminorm(&coarse, &vals) - h1_seminorm(&fine, &up)).abs() < 1e-12);
    }

    #[test]
    fn lifts_have_zero_trace_and_nsd_correction(m in 3usize..9, seed in prop::collection::vec(0.1f64..5.0, 8)) {
        let mesh = generate_structured(1).unwrap();
        let sub = build_submesh(&mesh, 0, m).unwrap();
        let rule = quad_rule(2).unwrap();
        let kappa = LocalCoefficient::sample(&sub, &rule, SnapshotId::fresh(), |t, l, _| {
            Ok(seed[t % seed.len()] * (1.0 + 0.5 * l[0]))
        }).unwrap();
        let f: Vec<f64> = (0..sub.triangles().len() * rule.len()).map(|i| seed[i % seed.len()] - 2.0).collect();
        let sys = LocalSystem::assemble(&sub, &rule, &kappa, &f);
        let lifts = solve_local_lifts(&sys).unwrap();
        for v in std::iter::once(&lifts.b_f).chain(lifts.b_basis.iter()) {
            let full = BubbleLifts::to_full(&sub, v);
            prop_assert!(sub.boundary_nodes().iter().all(|&b| full[b] == 0.0));
        }
        let c = condense(&lifts, &sys).unwrap();
        let mat = nalgebra::Matrix3::from_fn(|i, j| c.matrix[i][j]);
        prop_assert!((mat - mat.transpose()).abs().max() < 1e-10 * (1.0 + mat.abs().max()));
        let sym = (mat + mat.transpose()) * 0.5;
        let eig = sym.symmetric_eigenvalues();
        prop_assert!(eig.iter().all(|&e| e <= 1e-10 * (1.0 + mat.abs().max())));
    }

    #[test]
    fn kirchhoff_inverse_round_trip(s in -50.0f64..50.0, c in 0.5f64..4.0) {
        for b in [Nonlinearity::sin(), Nonlinearity::constant(c).unwrap()] {
            let t = b.btilde_inv(s).unwrap();
            prop_assert!((b.btilde(t) - s).abs() < 1e-10 * (1.0 + s.abs()));
        }
    }

    #[test]
    fn coefficient_bounds_hold(x in 0.0f64..1.0, y in 0.0f64..1.0, rho in 0.0f64..0.99, k in 1u32..32) {
        let eps = 1.0 / k as f64;
        for field in [CoefficientField::periodic(1.5, rho, eps).unwrap(), CoefficientField::layered(rho, eps).unwrap()] {
            let v = field.value([x, y]);
            prop_assert!(v >= field.alpha0() - 1e-12 && v <= field.alpha1() + 1e-12);
        }
    }

    #[test]
    fn rates_recover_power_laws(p in 0.5f64..4.0, c in 0.01f64..10.0) {
        let hs = [0.2, 0.1, 0.05];
        let errors: Vec<f64> = hs.iter().map(|h: &f64| c * h.powf(p)).collect();
        for r in estimate_rate(&errors, &hs).unwrap() {
            prop_assert!((r - p).abs() < 1e-10);
        }
    }

    #[test]
    fn union_mesh_is_exact_for_composites(n in 1usize..4, m in 3usize..7, scale in -2.0f64..2.0) {
        let coarse = Arc::new(generate_structured(n).unwrap());
        let space = CompositeSpace::new(coarse.clone(), m, quad_rule(2).unwrap()).unwrap();
        prop_assert_eq!(space.union_mesh().num_nodes(), (n * m + 1).pow(2));
        let c: Vec<f64> = coarse.nodes().iter().map(|q| scale * q[0] * (1.0 - q[0]) * q[1] * (1.0 - q[1])).collect();
        let b: Vec<Vec<f64>> = space.submeshes().iter().map(|s| (0..s.num_interior()).map(|i| scale * (i as f64 * 0.37).sin()).collect()).collect();
        let u = space.to_union(&c, &b).unwrap();
        prop_assert!((h1_seminorm(space.union_mesh(), u.values()) - space.h1_seminorm(&c, &b)).abs() < 1e-10);
        let reference = Arc::new(generate_structured(n * m * 2).unwrap());
        let fine = interpolate_coarse_on_fine(u.values(), space.union_mesh(), &reference).unwrap();
        prop_assert!((h1_seminorm(&reference, &fine) - space.h1_seminorm(&c, &b)).abs() < 1e-10);
    }
}
