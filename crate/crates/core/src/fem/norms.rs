use std::sync::Arc;

use super::assembly::{element_quadrature_points, p1_gradients};
use super::quadrature::quad_rule;
use crate::mesh::{Mesh, Point};
use crate::{Error, Result};

/// P1 function given by its nodal values on a mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteFunction {
    mesh: Arc<Mesh>,
    values: Vec<f64>,
}

impl DiscreteFunction {
    pub fn new(mesh: Arc<Mesh>, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.num_nodes() {
            return Err(Error::invalid(format!(
                "{} nodal values for a mesh with {} nodes",
                values.len(),
                mesh.num_nodes()
            )));
        }
        Ok(Self { mesh, values })
    }

    pub fn zero(mesh: Arc<Mesh>) -> Self {
        let values = vec![0.0; mesh.num_nodes()];
        Self { mesh, values }
    }

    pub fn interpolate(mesh: Arc<Mesh>, f: impl Fn(Point) -> f64) -> Self {
        let values = mesh.nodes().iter().map(|&p| f(p)).collect();
        Self { mesh, values }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn h1_seminorm(&self) -> f64 {
        h1_seminorm(&self.mesh, &self.values)
    }

    pub fn l2_norm(&self) -> f64 {
        l2_norm(&self.mesh, &self.values)
    }
}

/// `||grad u||_{L2}`, exact for P1.
pub fn h1_seminorm(mesh: &Mesh, values: &[f64]) -> f64 {
    let mut s = 0.0;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let (g, area) = p1_gradients(mesh.vertices(t));
        let (mut gx, mut gy) = (0.0, 0.0);
        for k in 0..3 {
            gx += values[tri[k]] * g[k][0];
            gy += values[tri[k]] * g[k][1];
        }
        s += area * (gx * gx + gy * gy);
    }
    s.sqrt()
}

/// `||u||_{L2}`, exact for P1 (degree-2 rule).
pub fn l2_norm(mesh: &Mesh, values: &[f64]) -> f64 {
    let rule = quad_rule(2).expect("degree-2 rule");
    let mut s = 0.0;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let area = mesh.area(t);
        for (l, w) in rule.iter() {
            let u: f64 = (0..3).map(|k| l[k] * values[tri[k]]).sum();
            s += area * w * u * u;
        }
    }
    s.sqrt()
}

/// `(||u - u_exact||_{L2}, ||grad(u - u_exact)||_{L2})` with the degree-4
/// rule.
pub fn error_norms(
    u: &DiscreteFunction,
    exact: impl Fn(Point) -> f64,
    exact_grad: impl Fn(Point) -> [f64; 2],
) -> (f64, f64) {
    let rule = quad_rule(4).expect("degree-4 rule");
    let mesh = u.mesh();
    let values = u.values();
    let (mut l2, mut h1) = (0.0, 0.0);
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let vs = mesh.vertices(t);
        let (g, area) = p1_gradients(vs);
        let (mut gx, mut gy) = (0.0, 0.0);
        for k in 0..3 {
            gx += values[tri[k]] * g[k][0];
            gy += values[tri[k]] * g[k][1];
        }
        let pts = element_quadrature_points(vs, &rule);
        for ((l, w), &x) in rule.iter().zip(&pts) {
            let uh: f64 = (0..3).map(|k| l[k] * values[tri[k]]).sum();
            let e = uh - exact(x);
            let ge = exact_grad(x);
            l2 += area * w * e * e;
            h1 += area * w * ((gx - ge[0]).powi(2) + (gy - ge[1]).powi(2));
        }
    }
    (l2.sqrt(), h1.sqrt())
}
