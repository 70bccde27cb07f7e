//! Problem data bundled for the solvers.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::coefficients::{CoefficientField, Nonlinearity};
use crate::kirchhoff::manufacture_f;
use crate::mesh::Point;

pub type ScalarFn = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(Point) -> [f64; 2] + Send + Sync>;
/// Hessian as `[u_xx, u_xy, u_yy]`.
pub type HessianFn = Arc<dyn Fn(Point) -> [f64; 3] + Send + Sync>;

/// Analytic solution with the derivatives needed to manufacture `f`.
#[derive(Clone)]
pub struct ExactSolution {
    pub u: ScalarFn,
    pub grad: VectorFn,
    pub hess: HessianFn,
}

impl ExactSolution {
    /// `scale * sin(pi x) sin(pi y)`.
    pub fn sin_sin(scale: f64) -> Self {
        Self {
            u: Arc::new(move |[x, y]| scale * (PI * x).sin() * (PI * y).sin()),
            grad: Arc::new(move |[x, y]| {
                [
                    scale * PI * (PI * x).cos() * (PI * y).sin(),
                    scale * PI * (PI * x).sin() * (PI * y).cos(),
                ]
            }),
            hess: Arc::new(move |[x, y]| {
                let s = scale * PI * PI;
                [
                    -s * (PI * x).sin() * (PI * y).sin(),
                    s * (PI * x).cos() * (PI * y).cos(),
                    -s * (PI * x).sin() * (PI * y).sin(),
                ]
            }),
        }
    }
}

/// `-div(alpha b(u) grad u) = f` with homogeneous Dirichlet data.
#[derive(Clone)]
pub struct Problem {
    pub alpha: CoefficientField,
    pub b: Nonlinearity,
    pub f: ScalarFn,
    pub exact: Option<ExactSolution>,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("alpha", &self.alpha)
            .field("b", &self.b)
            .field("manufactured", &self.exact.is_some())
            .finish()
    }
}

impl Problem {
    pub fn new(alpha: CoefficientField, b: Nonlinearity, f: impl Fn(Point) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            alpha,
            b,
            f: Arc::new(f),
            exact: None,
        }
    }

    /// Right-hand side manufactured so that `exact` solves the problem.
    pub fn manufactured(alpha: CoefficientField, b: Nonlinearity, exact: ExactSolution) -> Self {
        let f = manufacture_f(&exact, &alpha, &b);
        Self {
            alpha,
            b,
            f,
            exact: Some(exact),
        }
    }

    /// Lower bound of the frozen coefficient `alpha b(.)`.
    pub fn coercivity(&self) -> f64 {
        self.alpha.alpha0() * self.b.b0()
    }
}
