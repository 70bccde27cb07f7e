use nalgebra::{DMatrix, DVector};

use super::sparse::{CsrMatrix, SparseSystem};
use crate::{Error, Result};

/// Largest system handled by the dense factorization paths.
pub const DENSE_LIMIT: usize = 2000;

/// Systems at or below this size go straight to dense factorization in the
/// automatic solvers.
const AUTO_DENSE: usize = 600;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn jacobi(a: &CsrMatrix) -> Result<Vec<f64>> {
    a.diagonal()
        .into_iter()
        .map(|d| if d > 0.0 { Ok(1.0 / d) } else { Err(Error::NotPositiveDefinite) })
        .collect()
}

/// Conjugate gradients with diagonal preconditioning, from a zero initial
/// guess, stopping at `||Ax - b|| <= tol ||b||`.
pub fn pcg(a: &CsrMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<(Vec<f64>, SolveStats)> {
    let n = a.nrows();
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((
            x,
            SolveStats {
                iterations: 0,
                relative_residual: 0.0,
            },
        ));
    }
    let inv_diag = jacobi(a)?;
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut res = 1.0;
    for it in 1..=max_iter {
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::NotPositiveDefinite);
        }
        let step = rz / pap;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        res = norm(&r) / bnorm;
        if res <= tol {
            return Ok((
                x,
                SolveStats {
                    iterations: it,
                    relative_residual: res,
                },
            ));
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::LinearSolver {
        iterations: max_iter,
        residual: res,
    })
}

/// Solves the SPD system by preconditioned conjugate gradients.
pub fn solve_spd(system: &SparseSystem, tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    pcg(&system.matrix, &system.rhs, tol, max_iter).map(|(x, _)| x)
}

/// Dense Cholesky solve; the reference path for small systems.
pub fn solve_dense_spd(a: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>> {
    if a.nrows() > DENSE_LIMIT {
        return Err(Error::invalid(format!(
            "dense solve limited to {DENSE_LIMIT} unknowns, got {}",
            a.nrows()
        )));
    }
    let chol = a.to_dense().cholesky().ok_or(Error::NotPositiveDefinite)?;
    Ok(chol.solve(&DVector::from_column_slice(b)).as_slice().to_vec())
}

/// Dense LU solve for general square systems.
pub fn solve_dense_general(a: &DMatrix<f64>, b: &[f64]) -> Result<Vec<f64>> {
    a.clone()
        .lu()
        .solve(&DVector::from_column_slice(b))
        .map(|x| x.as_slice().to_vec())
        .ok_or_else(|| Error::invalid("singular matrix"))
}

/// Dense Cholesky for small systems, PCG otherwise.
pub fn solve_spd_auto(a: &CsrMatrix, b: &[f64], tol: f64) -> Result<Vec<f64>> {
    if a.nrows() <= AUTO_DENSE {
        solve_dense_spd(a, b)
    } else {
        pcg(a, b, tol, 20 * a.nrows() + 1000).map(|(x, _)| x)
    }
}

/// Jacobi-preconditioned BiCGSTAB for nonsymmetric systems.
pub fn bicgstab(a: &CsrMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<(Vec<f64>, SolveStats)> {
    let n = a.nrows();
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((
            x,
            SolveStats {
                iterations: 0,
                relative_residual: 0.0,
            },
        ));
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .into_iter()
        .map(|d| if d != 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let precond = |v: &[f64]| -> Vec<f64> { v.iter().zip(&inv_diag).map(|(v, d)| v * d).collect() };
    let mut r = b.to_vec();
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut res = 1.0;
    for it in 1..=max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        let y = precond(&p);
        v = a.mul_vec(&y);
        alpha = rho / dot(&r_hat, &v);
        let s: Vec<f64> = r.iter().zip(&v).map(|(r, v)| r - alpha * v).collect();
        if norm(&s) / bnorm <= tol {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            return Ok((
                x,
                SolveStats {
                    iterations: it,
                    relative_residual: norm(&s) / bnorm,
                },
            ));
        }
        let z = precond(&s);
        let t = a.mul_vec(&z);
        omega = dot(&t, &s) / dot(&t, &t);
        for i in 0..n {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        res = norm(&r) / bnorm;
        if res <= tol {
            return Ok((
                x,
                SolveStats {
                    iterations: it,
                    relative_residual: res,
                },
            ));
        }
        if omega == 0.0 {
            break;
        }
    }
    Err(Error::LinearSolver {
        iterations: max_iter,
        residual: res,
    })
}

/// Dense LU for small systems, BiCGSTAB otherwise.
pub fn solve_general(a: &CsrMatrix, b: &[f64], tol: f64) -> Result<Vec<f64>> {
    if a.nrows() <= AUTO_DENSE {
        solve_dense_general(&a.to_dense(), b)
    } else {
        bicgstab(a, b, tol, 20 * a.nrows() + 1000).map(|(x, _)| x)
    }
}
