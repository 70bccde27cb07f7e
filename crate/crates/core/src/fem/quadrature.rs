use crate::{Error, Result};

/// Symmetric quadrature on triangles, in barycentric coordinates. Weights sum
/// to one and are scaled by the element area at use.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadRule {
    order: usize,
    points: Vec<[f64; 3]>,
    weights: Vec<f64>,
}

impl QuadRule {
    /// Polynomial degree integrated exactly.
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64; 3], f64)> {
        self.points.iter().zip(self.weights.iter().copied())
    }
}

fn orbit3(a: f64) -> [[f64; 3]; 3] {
    let b = 1.0 - 2.0 * a;
    [[a, a, b], [a, b, a], [b, a, a]]
}

/// Rule exact for polynomials of total degree `order` (1, 2 or 4).
pub fn quad_rule(order: usize) -> Result<QuadRule> {
    let (points, weights): (Vec<[f64; 3]>, Vec<f64>) = match order {
        1 => (vec![[1.0 / 3.0; 3]], vec![1.0]),
        2 => (orbit3(1.0 / 6.0).to_vec(), vec![1.0 / 3.0; 3]),
        4 => {
            // Dunavant's six-point rule.
            let (a, wa) = (0.445_948_490_915_964_9, 0.223_381_589_678_011_5);
            let (b, wb) = (0.091_576_213_509_770_74, 0.109_951_743_655_321_9);
            let mut pts = orbit3(a).to_vec();
            pts.extend_from_slice(&orbit3(b));
            (pts, vec![wa, wa, wa, wb, wb, wb])
        }
        _ => return Err(Error::invalid(format!("unsupported quadrature order {order}; use 1, 2 or 4"))),
    };
    Ok(QuadRule { order, points, weights })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    /// Exact integral of x^p y^q over the reference triangle (0,0),(1,0),(0,1).
    fn monomial_integral(p: u32, q: u32) -> f64 {
        factorial(p) * factorial(q) / factorial(p + q + 2)
    }

    fn apply(rule: &QuadRule, f: impl Fn(f64, f64) -> f64) -> f64 {
        // Reference triangle has area 1/2; point = l1 * (1,0) + l2 * (0,1).
        0.5 * rule.iter().map(|(l, w)| w * f(l[1], l[2])).sum::<f64>()
    }

    #[test]
    fn weights_positive_and_normalised() {
        for order in [1, 2, 4] {
            let r = quad_rule(order).unwrap();
            assert!(r.weights().iter().all(|&w| w > 0.0));
            assert!((r.weights().iter().sum::<f64>() - 1.0).abs() < 1e-15);
            for p in r.points() {
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            }
        }
        assert!(quad_rule(3).is_err());
    }

    #[test]
    fn named_values() {
        assert!((apply(&quad_rule(1).unwrap(), |_, _| 1.0) - 0.5).abs() < 1e-15);
        assert!((apply(&quad_rule(2).unwrap(), |x, _| x) - 1.0 / 6.0).abs() < 1e-15);
        assert!((apply(&quad_rule(4).unwrap(), |x, y| x * x * y * y) - 1.0 / 180.0).abs() < 1e-15);
    }

    #[test]
    fn exact_on_monomial_basis() {
        for order in [1u32, 2, 4] {
            let rule = quad_rule(order as usize).unwrap();
            for p in 0..=order {
                for q in 0..=(order - p) {
                    let got = apply(&rule, |x, y| x.powi(p as i32) * y.powi(q as i32));
                    let want = monomial_integral(p, q);
                    assert!((got - want).abs() < 1e-14, "order {order}: x^{p} y^{q}: {got} vs {want}");
                }
            }
        }
    }
}
