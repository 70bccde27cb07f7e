//! Diffusion fields `alpha_eps(x)` and nonlinearities `b(u)`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::mesh::Point;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
enum FieldKind {
    Constant { a0: f64 },
    Periodic { a0: f64, rho: f64, eps: f64 },
    Layered { p: f64, eps: f64 },
}

/// Scalar diffusion field with known bounds `alpha0 <= alpha <= alpha1` and
/// oscillation scale `epsilon` (infinite for non-oscillatory fields).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientField {
    kind: FieldKind,
}

impl CoefficientField {
    pub fn constant(a0: f64) -> Result<Self> {
        if !(a0 > 0.0 && a0.is_finite()) {
            return Err(Error::invalid(format!("constant coefficient must be positive, got {a0}")));
        }
        Ok(Self {
            kind: FieldKind::Constant { a0 },
        })
    }

    /// `a0 (1 + rho sin(2 pi x / eps) sin(2 pi y / eps))`.
    pub fn periodic(a0: f64, rho: f64, eps: f64) -> Result<Self> {
        if !(a0 > 0.0 && a0.is_finite()) {
            return Err(Error::invalid(format!("a0 must be positive, got {a0}")));
        }
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::invalid(format!(
                "rho must lie in [0, 1) to keep the field positive, got {rho}"
            )));
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::invalid(format!("eps must be positive, got {eps}")));
        }
        if rho == 0.0 {
            return Self::constant(a0);
        }
        Ok(Self {
            kind: FieldKind::Periodic { a0, rho, eps },
        })
    }

    /// `1 / (2 + p sin(2 pi x / eps))`, oscillating in `x` only.
    pub fn layered(p: f64, eps: f64) -> Result<Self> {
        if !(0.0..2.0).contains(&p) {
            return Err(Error::invalid(format!("layered amplitude must lie in [0, 2), got {p}")));
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::invalid(format!("eps must be positive, got {eps}")));
        }
        Ok(Self {
            kind: FieldKind::Layered { p, eps },
        })
    }

    pub fn value(&self, p: Point) -> f64 {
        let [x, y] = p;
        match self.kind {
            FieldKind::Constant { a0 } => a0,
            FieldKind::Periodic { a0, rho, eps } => {
                let k = 2.0 * PI / eps;
                a0 * (1.0 + rho * (k * x).sin() * (k * y).sin())
            }
            FieldKind::Layered { p, eps } => 1.0 / (2.0 + p * (2.0 * PI * x / eps).sin()),
        }
    }

    pub fn gradient(&self, p: Point) -> [f64; 2] {
        let [x, y] = p;
        match self.kind {
            FieldKind::Constant { .. } => [0.0, 0.0],
            FieldKind::Periodic { a0, rho, eps } => {
                let k = 2.0 * PI / eps;
                let (sx, cx) = (k * x).sin_cos();
                let (sy, cy) = (k * y).sin_cos();
                [a0 * rho * k * cx * sy, a0 * rho * k * sx * cy]
            }
            FieldKind::Layered { p, eps } => {
                let k = 2.0 * PI / eps;
                let d = 2.0 + p * (k * x).sin();
                [-p * k * (k * x).cos() / (d * d), 0.0]
            }
        }
    }

    pub fn alpha0(&self) -> f64 {
        match self.kind {
            FieldKind::Constant { a0 } => a0,
            FieldKind::Periodic { a0, rho, .. } => a0 * (1.0 - rho),
            FieldKind::Layered { p, .. } => 1.0 / (2.0 + p),
        }
    }

    pub fn alpha1(&self) -> f64 {
        match self.kind {
            FieldKind::Constant { a0 } => a0,
            FieldKind::Periodic { a0, rho, .. } => a0 * (1.0 + rho),
            FieldKind::Layered { p, .. } => 1.0 / (2.0 - p),
        }
    }

    pub fn epsilon(&self) -> f64 {
        match self.kind {
            FieldKind::Constant { .. } => f64::INFINITY,
            FieldKind::Periodic { eps, .. } | FieldKind::Layered { eps, .. } => eps,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.kind, FieldKind::Constant { .. })
    }

    /// Evaluates the field and enforces the declared bounds.
    pub fn checked_value(&self, p: Point) -> Result<f64> {
        let v = self.value(p);
        let (lo, hi) = (self.alpha0(), self.alpha1());
        let slack = 1e-12 * hi;
        if !(v >= lo - slack && v <= hi + slack) {
            return Err(Error::CoefficientOutOfBounds {
                x: p[0],
                y: p[1],
                value: v,
                lower: lo,
                upper: hi,
            });
        }
        Ok(v)
    }
}

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum NonlinearityKind {
    Sin,
    Constant(f64),
    Custom { b: RealFn, db: RealFn },
}

/// Nonlinearity `b` with `b >= b0 > 0`, its derivative and the Kirchhoff
/// antiderivative `btilde(t) = int_0^t b`.
#[derive(Clone)]
pub struct Nonlinearity {
    kind: NonlinearityKind,
    b0: f64,
}

impl fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match &self.kind {
            NonlinearityKind::Sin => "sin".to_string(),
            NonlinearityKind::Constant(c) => format!("constant({c})"),
            NonlinearityKind::Custom { .. } => "custom".to_string(),
        };
        f.debug_struct("Nonlinearity")
            .field("kind", &name)
            .field("b0", &self.b0)
            .finish()
    }
}

const INVERSE_TOL: f64 = 1e-13;
const INVERSE_MAX_ITER: usize = 100;
const QUADRATURE_TOL: f64 = 1e-12;

impl Nonlinearity {
    /// `b(t) = 2 + sin t`, `b0 = 1`.
    pub fn sin() -> Self {
        Self {
            kind: NonlinearityKind::Sin,
            b0: 1.0,
        }
    }

    pub fn constant(c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::invalid(format!("constant nonlinearity must be positive, got {c}")));
        }
        Ok(Self {
            kind: NonlinearityKind::Constant(c),
            b0: c,
        })
    }

    /// A user-supplied `b` with derivative `db` and lower bound `b0`. The
    /// antiderivative is computed by adaptive Gauss quadrature.
    pub fn custom(
        b: impl Fn(f64) -> f64 + Send + Sync + 'static,
        db: impl Fn(f64) -> f64 + Send + Sync + 'static,
        b0: f64,
    ) -> Result<Self> {
        if !(b0 > 0.0 && b0.is_finite()) {
            return Err(Error::invalid(format!("b0 must be positive, got {b0}")));
        }
        Ok(Self {
            kind: NonlinearityKind::Custom {
                b: Arc::new(b),
                db: Arc::new(db),
            },
            b0,
        })
    }

    pub fn b(&self, t: f64) -> f64 {
        match &self.kind {
            NonlinearityKind::Sin => 2.0 + t.sin(),
            NonlinearityKind::Constant(c) => *c,
            NonlinearityKind::Custom { b, .. } => b(t),
        }
    }

    pub fn db(&self, t: f64) -> f64 {
        match &self.kind {
            NonlinearityKind::Sin => t.cos(),
            NonlinearityKind::Constant(_) => 0.0,
            NonlinearityKind::Custom { db, .. } => db(t),
        }
    }

    pub fn b0(&self) -> f64 {
        self.b0
    }

    /// True when `b` does not depend on its argument.
    pub fn is_constant(&self) -> bool {
        matches!(self.kind, NonlinearityKind::Constant(_))
    }

    /// `b(t)`, failing if the value drops below `b0`.
    pub fn checked_b(&self, t: f64) -> Result<f64> {
        let v = self.b(t);
        if !(v >= self.b0 * (1.0 - 1e-12)) {
            return Err(Error::NonlinearityBelowBound { t, value: v, b0: self.b0 });
        }
        Ok(v)
    }

    pub fn btilde(&self, t: f64) -> f64 {
        match &self.kind {
            NonlinearityKind::Sin => 2.0 * t + 1.0 - t.cos(),
            NonlinearityKind::Constant(c) => c * t,
            NonlinearityKind::Custom { b, .. } => adaptive_gauss(&**b, 0.0, t, QUADRATURE_TOL),
        }
    }

    /// Inverse of `btilde`, by Newton's method safeguarded with bisection on
    /// the bracket `|t| <= |s| / b0`.
    pub fn btilde_inv(&self, s: f64) -> Result<f64> {
        if let NonlinearityKind::Constant(c) = self.kind {
            return Ok(s / c);
        }
        if s == 0.0 {
            return Ok(0.0);
        }
        let bound = s.abs() / self.b0;
        let (mut lo, mut hi) = (-bound, bound);
        let mut t = s / self.b(0.0).max(self.b0);
        for _ in 0..INVERSE_MAX_ITER {
            let r = self.btilde(t) - s;
            if r == 0.0 {
                return Ok(t);
            }
            if r > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            let slope = self.b(t);
            let mut next = t - r / slope;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            if (next - t).abs() <= INVERSE_TOL || hi - lo <= INVERSE_TOL {
                return Ok(next);
            }
            t = next;
        }
        Err(Error::Inversion(s))
    }
}

const GL7_NODES: [f64; 7] = [
    -0.949_107_912_342_758_5,
    -0.741_531_185_599_394_4,
    -0.405_845_151_377_397_2,
    0.0,
    0.405_845_151_377_397_2,
    0.741_531_185_599_394_4,
    0.949_107_912_342_758_5,
];
const GL7_WEIGHTS: [f64; 7] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
    0.381_830_050_505_118_9,
    0.279_705_391_489_276_7,
    0.129_484_966_168_869_7,
];

fn gauss7(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    half * GL7_NODES
        .iter()
        .zip(GL7_WEIGHTS)
        .map(|(x, w)| w * f(mid + half * x))
        .sum::<f64>()
}

fn adaptive_gauss(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn recurse(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let mid = 0.5 * (a + b);
        let (left, right) = (gauss7(f, a, mid), gauss7(f, mid, b));
        if depth == 0 || (left + right - whole).abs() <= tol {
            return left + right;
        }
        recurse(f, a, mid, left, 0.5 * tol, depth - 1) + recurse(f, mid, b, right, 0.5 * tol, depth - 1)
    }
    if a == b {
        return 0.0;
    }
    recurse(f, a, b, gauss7(f, a, b), tol, 40)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn periodic_special_values() {
        let c = CoefficientField::periodic(1.5, 0.0, 0.1).unwrap();
        assert_eq!(c.value([0.3, 0.7]), 1.5);
        assert_eq!((c.alpha0(), c.alpha1()), (1.5, 1.5));

        let eps = 1.0 / 16.0;
        let c = CoefficientField::periodic(1.0, 0.9, eps).unwrap();
        assert!((c.value([eps / 4.0, eps / 4.0]) - 1.9).abs() < 1e-14);
        assert!(CoefficientField::periodic(1.0, 1.0, eps).is_err());
    }

    #[test]
    fn dense_sampling_respects_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let fields = [
            CoefficientField::periodic(1.0, 0.9, 1.0 / 16.0).unwrap(),
            CoefficientField::layered(1.8, 1.0 / 8.0).unwrap(),
        ];
        for c in fields {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for _ in 0..1_000_000 {
                let v = c.value([rng.gen(), rng.gen()]);
                lo = lo.min(v);
                hi = hi.max(v);
            }
            assert!(lo >= c.alpha0() - 1e-12);
            assert!(hi <= c.alpha1() + 1e-12);
        }
    }

    #[test]
    fn field_gradients_match_differences() {
        let h = 1e-6;
        let fields = [
            CoefficientField::periodic(1.2, 0.5, 0.3).unwrap(),
            CoefficientField::layered(1.0, 0.25).unwrap(),
            CoefficientField::constant(2.0).unwrap(),
        ];
        for c in fields {
            for k in 0..50 {
                let p = [0.013 * k as f64 + 0.1, 0.017 * k as f64 + 0.05];
                let g = c.gradient(p);
                let gx = (c.value([p[0] + h, p[1]]) - c.value([p[0] - h, p[1]])) / (2.0 * h);
                let gy = (c.value([p[0], p[1] + h]) - c.value([p[0], p[1] - h])) / (2.0 * h);
                assert!((g[0] - gx).abs() < 1e-5 * (1.0 + gx.abs()));
                assert!((g[1] - gy).abs() < 1e-5 * (1.0 + gy.abs()));
            }
        }
    }

    #[test]
    fn checked_value_rejects_out_of_bounds() {
        let c = CoefficientField::constant(1.0).unwrap();
        assert!(c.checked_value([0.5, 0.5]).is_ok());
        assert!(CoefficientField::constant(0.0).is_err());
    }

    #[test]
    fn sin_antiderivative_values() {
        let b = Nonlinearity::sin();
        assert_eq!(b.btilde(0.0), 0.0);
        assert!((b.btilde(PI) - (2.0 * PI + 2.0)).abs() < 1e-14);
        assert!((b.btilde_inv(b.btilde(1.7)).unwrap() - 1.7).abs() < 1e-12);
    }

    #[test]
    fn constant_nonlinearity() {
        let one = Nonlinearity::constant(1.0).unwrap();
        assert_eq!(one.btilde(3.25), 3.25);
        let two = Nonlinearity::constant(2.0).unwrap();
        assert_eq!(two.btilde_inv(6.0).unwrap(), 3.0);
        assert!((-5..=5).all(|t| two.db(t as f64) == 0.0));
        assert!(Nonlinearity::constant(0.0).is_err());
        assert!(Nonlinearity::constant(-1.0).is_err());
    }

    fn grid() -> impl Iterator<Item = f64> {
        (0..100).map(|k| -5.0 + 10.0 * k as f64 / 99.0)
    }

    #[test]
    fn derivatives_match_central_differences() {
        let h = 1e-6;
        let custom = Nonlinearity::custom(|t: f64| 2.0 + t.sin(), |t: f64| t.cos(), 1.0).unwrap();
        for b in [Nonlinearity::sin(), Nonlinearity::constant(2.5).unwrap(), custom] {
            for t in grid() {
                let dbt = (b.btilde(t + h) - b.btilde(t - h)) / (2.0 * h);
                assert!((dbt - b.b(t)).abs() < 1e-6, "btilde' at {t}");
                let db = (b.b(t + h) - b.b(t - h)) / (2.0 * h);
                assert!((db - b.db(t)).abs() < 1e-6, "b' at {t}");
            }
        }
    }

    #[test]
    fn inverse_roundtrip_on_interval() {
        let custom = Nonlinearity::custom(|t: f64| 1.5 + t.tanh(), |t: f64| 1.0 / t.cosh().powi(2), 0.5).unwrap();
        for b in [Nonlinearity::sin(), custom] {
            for k in 0..=400 {
                let t = -10.0 + 20.0 * k as f64 / 400.0;
                let back = b.btilde_inv(b.btilde(t)).unwrap();
                assert!((back - t).abs() < 1e-12, "{t} -> {back}");
            }
        }
    }

    #[test]
    fn quadrature_antiderivative_matches_closed_form() {
        let custom = Nonlinearity::custom(|t: f64| 2.0 + t.sin(), |t: f64| t.cos(), 1.0).unwrap();
        let sin = Nonlinearity::sin();
        for t in grid() {
            assert!((custom.btilde(t) - sin.btilde(t)).abs() < 1e-12);
        }
    }

    #[test]
    fn sin_is_bounded_below() {
        let b = Nonlinearity::sin();
        assert!(grid().all(|t| b.checked_b(t).is_ok()));
        let bad = Nonlinearity::custom(|t: f64| t, |_| 1.0, 1.0).unwrap();
        assert!(bad.checked_b(0.5).is_err());
    }
}
