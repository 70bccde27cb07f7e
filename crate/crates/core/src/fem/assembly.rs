use rayon::prelude::*;

use super::quadrature::QuadRule;
use super::sparse::{CsrMatrix, DofMap};
use crate::mesh::{signed_area, Mesh, Point};
use crate::{Error, Result};

/// Gradients of the three barycentric basis functions and the area.
pub fn p1_gradients(vs: [Point; 3]) -> ([[f64; 2]; 3], f64) {
    let [a, b, c] = vs;
    let area = signed_area(a, b, c);
    let s = 1.0 / (2.0 * area);
    (
        [
            [(b[1] - c[1]) * s, (c[0] - b[0]) * s],
            [(c[1] - a[1]) * s, (a[0] - c[0]) * s],
            [(a[1] - b[1]) * s, (b[0] - a[0]) * s],
        ],
        area,
    )
}

/// Local P1 stiffness for a coefficient whose integral over the element is
/// `kappa_integral` (gradients are constant per element).
pub fn element_stiffness(grads: &[[f64; 2]; 3], kappa_integral: f64) -> [[f64; 3]; 3] {
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = kappa_integral * (grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1]);
        }
    }
    k
}

/// Physical coordinates of the quadrature points of a triangle.
pub fn element_quadrature_points(vs: [Point; 3], rule: &QuadRule) -> Vec<Point> {
    rule.points()
        .iter()
        .map(|l| {
            [
                l[0] * vs[0][0] + l[1] * vs[1][0] + l[2] * vs[2][0],
                l[0] * vs[0][1] + l[1] * vs[1][1] + l[2] * vs[2][1],
            ]
        })
        .collect()
}

/// Quadrature order for a coefficient oscillating at scale `eps` on
/// elements of size `h`: degree 4 when `eps < 2h`, degree 2 otherwise.
pub fn rule_for_scale(h: f64, eps: f64) -> usize {
    if eps < 2.0 * h {
        4
    } else {
        2
    }
}

pub(crate) fn check_positive(value: f64, p: Point) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonPositiveCoefficient {
            x: p[0],
            y: p[1],
            value,
        })
    }
}

/// Stiffness matrix `A_ij = sum_K int_K kappa grad phi_j . grad phi_i` over
/// the DOFs of `dofs`. `kappa(t, l, x)` receives the triangle index, the
/// barycentric coordinates and the position of each quadrature point.
pub fn assemble_stiffness_with<F>(mesh: &Mesh, dofs: &DofMap, rule: &QuadRule, kappa: F) -> Result<CsrMatrix>
where
    F: Fn(usize, &[f64; 3], Point) -> Result<f64> + Sync,
{
    let locals: Vec<[[f64; 3]; 3]> = (0..mesh.num_triangles())
        .into_par_iter()
        .map(|t| {
            let vs = mesh.vertices(t);
            let (grads, area) = p1_gradients(vs);
            let pts = element_quadrature_points(vs, rule);
            let mut kint = 0.0;
            for ((l, w), &x) in rule.iter().zip(&pts) {
                kint += w * check_positive(kappa(t, l, x)?, x)?;
            }
            Ok(element_stiffness(&grads, kint * area))
        })
        .collect::<Result<_>>()?;
    let mut a = CsrMatrix::pattern_from_mesh(mesh, dofs);
    for (tri, local) in mesh.triangles().iter().zip(&locals) {
        for (li, &ni) in tri.iter().enumerate() {
            let Some(i) = dofs.dof(ni) else { continue };
            for (lj, &nj) in tri.iter().enumerate() {
                if let Some(j) = dofs.dof(nj) {
                    a.add(i, j, local[li][lj]);
                }
            }
        }
    }
    Ok(a)
}

/// Stiffness matrix for a coefficient given as a function of position.
pub fn assemble_weighted_stiffness(
    mesh: &Mesh,
    kappa: impl Fn(Point) -> f64 + Sync,
    rule: &QuadRule,
    dofs: &DofMap,
) -> Result<CsrMatrix> {
    assemble_stiffness_with(mesh, dofs, rule, |_, _, x| Ok(kappa(x)))
}

/// Load vector `b_i = sum_K int_K f phi_i`.
pub fn assemble_load(mesh: &Mesh, f: impl Fn(Point) -> f64 + Sync, rule: &QuadRule, dofs: &DofMap) -> Vec<f64> {
    let locals: Vec<[f64; 3]> = (0..mesh.num_triangles())
        .into_par_iter()
        .map(|t| {
            let vs = mesh.vertices(t);
            let area = signed_area(vs[0], vs[1], vs[2]);
            let pts = element_quadrature_points(vs, rule);
            let mut out = [0.0; 3];
            for ((l, w), &x) in rule.iter().zip(&pts) {
                let fx = f(x);
                for i in 0..3 {
                    out[i] += area * w * fx * l[i];
                }
            }
            out
        })
        .collect();
    let mut b = vec![0.0; dofs.len()];
    for (tri, local) in mesh.triangles().iter().zip(&locals) {
        for (li, &n) in tri.iter().enumerate() {
            if let Some(i) = dofs.dof(n) {
                b[i] += local[li];
            }
        }
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::quad_rule;
    use crate::mesh::{generate_structured, Mesh};

    #[test]
    fn unit_right_triangle_stiffness() {
        let (g, area) = p1_gradients([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        let k = element_stiffness(&g, area);
        let want = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((k[i][j] - want[i][j]).abs() < 1e-15);
            }
        }
        let mesh = Mesh::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]]).unwrap();
        let rule = quad_rule(2).unwrap();
        let dofs = DofMap::all(&mesh);
        let one = assemble_weighted_stiffness(&mesh, |_| 1.0, &rule, &dofs).unwrap();
        let two = assemble_weighted_stiffness(&mesh, |_| 2.0, &rule, &dofs).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((one.get(i, j) - want[i][j]).abs() < 1e-15);
                assert_eq!(two.get(i, j), 2.0 * one.get(i, j));
            }
        }
    }

    #[test]
    fn constants_in_kernel_and_symmetry() {
        let mesh = generate_structured(5).unwrap();
        let rule = quad_rule(4).unwrap();
        let dofs = DofMap::all(&mesh);
        let a = assemble_weighted_stiffness(&mesh, |p| 1.0 + p[0] * p[1], &rule, &dofs).unwrap();
        let y = a.mul_vec(&vec![1.0; mesh.num_nodes()]);
        assert!(y.iter().all(|v| v.abs() < 1e-13));
        assert_eq!(a.asymmetry(), 0.0);
        let free = DofMap::dirichlet(&mesh);
        let a = assemble_weighted_stiffness(&mesh, |_| 1.0, &rule, &free).unwrap();
        assert!(a.diagonal().iter().all(|&d| d > 0.0));
    }

    #[test]
    fn nonpositive_coefficient_names_point() {
        let mesh = generate_structured(2).unwrap();
        let rule = quad_rule(1).unwrap();
        let err = assemble_weighted_stiffness(&mesh, |p| p[0] - 0.5, &rule, &DofMap::all(&mesh)).unwrap_err();
        match err {
            Error::NonPositiveCoefficient { x, value, .. } => {
                assert!(value <= 0.0);
                assert!(x <= 0.5);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn load_vector_values() {
        let mesh = generate_structured(4).unwrap();
        let rule = quad_rule(2).unwrap();
        let dofs = DofMap::all(&mesh);
        assert!(assemble_load(&mesh, |_| 0.0, &rule, &dofs).iter().all(|&v| v == 0.0));
        let ones = assemble_load(&mesh, |_| 1.0, &rule, &dofs);
        assert!((ones.iter().sum::<f64>() - 1.0).abs() < 1e-14);

        // n = 1: nodes (0,0),(1,0),(0,1),(1,1); the diagonal nodes touch both
        // triangles (patch area 1), the other two one triangle (area 1/2).
        let mesh = generate_structured(1).unwrap();
        let b = assemble_load(&mesh, |_| 1.0, &rule, &DofMap::all(&mesh));
        let want = [1.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 3.0];
        for (got, want) in b.iter().zip(want) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn scale_rule_choice() {
        assert_eq!(rule_for_scale(0.1, 1.0 / 16.0), 4);
        assert_eq!(rule_for_scale(0.01, 1.0 / 16.0), 2);
        assert_eq!(rule_for_scale(0.1, f64::INFINITY), 2);
    }
}
