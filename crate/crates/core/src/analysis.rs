//! Convergence studies against a fine reference solution.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use crate::bubble::{LocalSystem, SnapshotId};
use crate::coefficients::{CoefficientField, Nonlinearity};
use crate::fem::{h1_seminorm, l2_norm, p1_gradients, DiscreteFunction};
use crate::mesh::{barycentric, generate_structured, interpolate_coarse_on_fine, Mesh, PointLocator};
use crate::problem::{ExactSolution, Problem};
use crate::solvers::{
    composite_space, solve_fine_reference, solve_galerkin, solve_linear_rfb, solve_rfb, CompositeSpace, PicardConfig, Scheme,
};
use crate::{Error, Result};

/// Diffusion coefficient family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlphaKind {
    Constant,
    Periodic,
    Layered,
}

/// Nonlinearity family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BKind {
    /// `b(t) = 2 + sin t`
    Sin,
    Constant(f64),
}

/// Right-hand side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    /// Manufactured from `u = sin(pi x) sin(pi y)`.
    Manufactured,
    One,
    /// `0.1 * 2 pi^2 sin(pi x) sin(pi y)`.
    Small,
    Zero,
}

/// Problem description with `eps` left free.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemSpec {
    pub alpha: AlphaKind,
    pub a0: f64,
    /// Oscillation amplitude (`P` for the layered field).
    pub rho: f64,
    pub b: BKind,
    pub source: Source,
}

impl ProblemSpec {
    pub fn coefficient(&self, eps: f64) -> Result<CoefficientField> {
        match self.alpha {
            AlphaKind::Constant => CoefficientField::constant(self.a0),
            AlphaKind::Periodic => CoefficientField::periodic(self.a0, self.rho, eps),
            AlphaKind::Layered => CoefficientField::layered(self.rho, eps),
        }
    }

    pub fn build(&self, eps: f64) -> Result<Problem> {
        let alpha = self.coefficient(eps)?;
        let b = match self.b {
            BKind::Sin => Nonlinearity::sin(),
            BKind::Constant(c) => Nonlinearity::constant(c)?,
        };
        Ok(match self.source {
            Source::Manufactured => Problem::manufactured(alpha, b, ExactSolution::sin_sin(1.0)),
            Source::One => Problem::new(alpha, b, |_| 1.0),
            Source::Small => Problem::new(alpha, b, |[x, y]| 0.2 * PI * PI * (PI * x).sin() * (PI * y).sin()),
            Source::Zero => Problem::new(alpha, b, |_| 0.0),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub schemes: Vec<Scheme>,
    pub ns: Vec<usize>,
    pub m: usize,
    pub eps: Vec<f64>,
    pub problem: ProblemSpec,
    pub picard: PicardConfig,
    /// Reference mesh: `max(ns) * 2^ref_levels` cells per side.
    pub ref_levels: usize,
}

impl StudyConfig {
    pub fn reference_size(&self) -> usize {
        self.ns.iter().copied().max().unwrap_or(0) << self.ref_levels
    }

    pub fn validate(&self) -> Result<()> {
        if self.schemes.is_empty() || self.ns.is_empty() || self.eps.is_empty() {
            return Err(Error::invalid("study needs at least one scheme, mesh size and eps"));
        }
        if self.ns.contains(&0) {
            return Err(Error::invalid("mesh sizes must be positive"));
        }
        if self.eps.iter().any(|&e| !(e > 0.0)) {
            return Err(Error::invalid("eps values must be positive"));
        }
        let nref = self.reference_size();
        for &n in &self.ns {
            let needed = if self.schemes.iter().any(|s| s.is_rfb()) { n * self.m } else { n };
            if nref % needed != 0 {
                return Err(Error::NonNested(format!(
                    "reference mesh {nref} is not a refinement of the n = {n}, m = {} composite mesh",
                    self.m
                )));
            }
        }
        self.picard.validate()
    }
}

/// One (scheme, n, eps) result. Failed runs carry `failure` and NaN fields.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub scheme: String,
    pub n: usize,
    pub eps: f64,
    pub dofs: usize,
    pub iterations: usize,
    pub converged: bool,
    pub l2_error: f64,
    pub h1_error: f64,
    pub rate_l2: f64,
    pub rate_h1: f64,
    pub cea_ratio: f64,
    pub wall_time_s: f64,
    pub failure: Option<String>,
}

impl StudyRow {
    /// Equality ignoring wall time; NaN fields compare equal.
    pub fn same_result(&self, other: &StudyRow) -> bool {
        let eq = |a: f64, b: f64| a == b || (a.is_nan() && b.is_nan());
        self.scheme == other.scheme
            && self.n == other.n
            && eq(self.eps, other.eps)
            && self.dofs == other.dofs
            && self.iterations == other.iterations
            && self.converged == other.converged
            && eq(self.l2_error, other.l2_error)
            && eq(self.h1_error, other.h1_error)
            && eq(self.rate_l2, other.rate_l2)
            && eq(self.rate_h1, other.rate_h1)
            && eq(self.cea_ratio, other.cea_ratio)
            && self.failure == other.failure
    }
}

/// `rate_k = log(e_{k-1}/e_k) / log(h_{k-1}/h_k)` for `k >= 1`; NaN where an
/// error is zero or not finite.
pub fn estimate_rate(errors: &[f64], hs: &[f64]) -> Result<Vec<f64>> {
    if errors.len() != hs.len() || errors.len() < 2 {
        return Err(Error::invalid("rate estimation needs two or more (error, h) pairs of equal length"));
    }
    if hs.iter().any(|&h| !(h > 0.0)) || errors.iter().any(|&e| e < 0.0) {
        return Err(Error::invalid("mesh sizes must be positive and errors nonnegative"));
    }
    Ok(errors
        .windows(2)
        .zip(hs.windows(2))
        .map(|(e, h)| {
            if e[0] > 0.0 && e[1] > 0.0 && e[0].is_finite() && e[1].is_finite() {
                (e[0] / e[1]).ln() / (h[0] / h[1]).ln()
            } else {
                f64::NAN
            }
        })
        .collect())
}

/// `(L2, H1-seminorm)` distance between a P1 function on a mesh nested in
/// the reference mesh and the reference.
pub fn reference_errors(reference: &DiscreteFunction, mesh: &Mesh, values: &[f64]) -> Result<(f64, f64)> {
    let fine = interpolate_coarse_on_fine(values, mesh, reference.mesh())?;
    let d: Vec<f64> = fine.iter().zip(reference.values()).map(|(a, b)| a - b).collect();
    Ok((l2_norm(reference.mesh(), &d), h1_seminorm(reference.mesh(), &d)))
}

/// Best approximation of the reference in the composite space: the
/// H1-seminorm projection, computed by one condensed linear solve. The
/// reference mesh must refine the union mesh of `space`.
pub fn best_approximation(space: &CompositeSpace, reference: &DiscreteFunction) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let coarse = space.coarse();
    let locator = PointLocator::new(coarse);
    let fine = reference.mesh();
    let vals = reference.values();
    // per sub-triangle: area covered and integral of grad u_ref
    let mut acc: Vec<Vec<(f64, [f64; 2])>> = space.submeshes().iter().map(|s| vec![(0.0, [0.0; 2]); s.triangles().len()]).collect();
    for (t, tri) in fine.triangles().iter().enumerate() {
        let vs = fine.vertices(t);
        let c = [(vs[0][0] + vs[1][0] + vs[2][0]) / 3.0, (vs[0][1] + vs[1][1] + vs[2][1]) / 3.0];
        let (k, l) = locator
            .locate(coarse, c)
            .ok_or_else(|| Error::NonNested(format!("reference triangle {t} lies outside the coarse mesh")))?;
        let sub = space.submesh(k);
        let st = sub.locate(l[1], l[2]);
        let [a, b, cc] = sub.vertices(st);
        for v in vs {
            if barycentric(a, b, cc, v).iter().any(|&w| w < -1e-9) {
                return Err(Error::NonNested(format!("reference triangle {t} crosses a sub-mesh edge")));
            }
        }
        let (g, area) = p1_gradients(vs);
        let mut grad = [0.0; 2];
        for i in 0..3 {
            grad[0] += vals[tri[i]] * g[i][0];
            grad[1] += vals[tri[i]] * g[i][1];
        }
        let slot = &mut acc[k][st];
        slot.0 += area;
        slot.1[0] += area * grad[0];
        slot.1[1] += area * grad[1];
    }
    let systems: Vec<LocalSystem> = space
        .submeshes()
        .iter()
        .zip(&acc)
        .map(|(sub, acc)| {
            let n = sub.num_nodes();
            let mut s = nalgebra::DMatrix::zeros(n, n);
            let mut rhs = nalgebra::DVector::zeros(n);
            for (t, tri) in sub.triangles().iter().enumerate() {
                let (g, area) = p1_gradients(sub.vertices(t));
                let (covered, gu) = acc[t];
                if (covered - area).abs() > 1e-9 * area {
                    return Err(Error::NonNested("reference mesh does not cover the sub-mesh".into()));
                }
                for a in 0..3 {
                    rhs[tri[a]] += gu[0] * g[a][0] + gu[1] * g[a][1];
                    for b in 0..3 {
                        s[(tri[a], tri[b])] += area * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
                    }
                }
            }
            Ok(LocalSystem::from_parts(sub, SnapshotId::fresh(), s, rhs))
        })
        .collect::<Result<_>>()?;
    solve_linear_rfb(space, &systems, 1e-13)
}

struct Reference {
    eps: f64,
    problem: Problem,
    solution: std::result::Result<DiscreteFunction, String>,
}

enum Task {
    Galerkin,
    Rfb(Arc<CompositeSpace>),
}

fn run_row(cfg: &StudyConfig, scheme: Scheme, n: usize, r: &Reference, best_h1: Option<f64>) -> StudyRow {
    let start = Instant::now();
    let mut row = StudyRow {
        scheme: scheme.name().to_string(),
        n,
        eps: r.eps,
        dofs: 0,
        iterations: 0,
        converged: false,
        l2_error: f64::NAN,
        h1_error: f64::NAN,
        rate_l2: f64::NAN,
        rate_h1: f64::NAN,
        cea_ratio: f64::NAN,
        wall_time_s: 0.0,
        failure: None,
    };
    let outcome = (|| -> Result<()> {
        let reference = r.solution.as_ref().map_err(|e| Error::invalid(format!("reference solve failed: {e}")))?;
        let coarse = Arc::new(generate_structured(n)?);
        let task = if scheme.is_rfb() {
            Task::Rfb(composite_space(&coarse, cfg.m, &r.problem)?)
        } else {
            Task::Galerkin
        };
        let (mesh, values, dofs, report) = match task {
            Task::Galerkin => {
                let (u, rep) = solve_galerkin(&coarse, &r.problem, &cfg.picard)?;
                let dofs = crate::fem::DofMap::dirichlet(&coarse).len();
                (coarse.clone(), u.into_values(), dofs, rep)
            }
            Task::Rfb(space) => {
                let dofs = space.num_dofs();
                let (sol, rep) = solve_rfb(space, &r.problem, &cfg.picard, scheme)?;
                let u = sol.to_union()?;
                (u.mesh().clone(), u.into_values(), dofs, rep)
            }
        };
        row.dofs = dofs;
        row.iterations = report.iterations;
        row.converged = report.converged;
        let (l2, h1) = reference_errors(reference, &mesh, &values)?;
        row.l2_error = l2;
        row.h1_error = h1;
        if let Some(b) = best_h1 {
            row.cea_ratio = if b > 0.0 { h1 / b } else { f64::NAN };
        }
        Ok(())
    })();
    if let Err(e) = outcome {
        log::error!("{} n={} eps={}: {e}", row.scheme, n, r.eps);
        row.failure = Some(e.to_string());
    }
    row.wall_time_s = start.elapsed().as_secs_f64();
    row
}

/// Runs every (scheme, n, eps) combination. Rows are ordered by eps, then
/// scheme, then n; rates compare consecutive n for fixed scheme and eps.
pub fn run_study(cfg: &StudyConfig) -> Result<Vec<StudyRow>> {
    cfg.validate()?;
    let nref = cfg.reference_size();
    let fine = Arc::new(generate_structured(nref)?);
    let references: Vec<Reference> = cfg
        .eps
        .iter()
        .map(|&eps| {
            let problem = cfg.problem.build(eps)?;
            let solution = match solve_fine_reference(&fine, &problem, &cfg.picard) {
                Ok((u, rep)) => {
                    if !rep.converged {
                        log::warn!("reference for eps = {eps} stopped after {} iterations", rep.iterations);
                    }
                    Ok(u)
                }
                Err(e) => Err(e.to_string()),
            };
            Ok(Reference { eps, problem, solution })
        })
        .collect::<Result<_>>()?;

    // best composite approximation per (eps, n), shared by all schemes
    let pairs: Vec<(usize, usize)> = (0..references.len()).flat_map(|e| cfg.ns.iter().map(move |&n| (e, n))).collect();
    let best: Vec<Option<f64>> = pairs
        .par_iter()
        .map(|&(e, n)| {
            let r = &references[e];
            let reference = r.solution.as_ref().ok()?;
            let coarse = Arc::new(generate_structured(n).ok()?);
            let space = composite_space(&coarse, cfg.m, &r.problem).ok()?;
            let (c, b) = best_approximation(&space, reference)
                .map_err(|err| log::error!("projection n={n} eps={}: {err}", r.eps))
                .ok()?;
            let w = space.to_union(&c, &b).ok()?;
            reference_errors(reference, w.mesh(), w.values()).ok().map(|(_, h1)| h1)
        })
        .collect();

    let mut ns = cfg.ns.clone();
    ns.sort_unstable();
    ns.dedup();
    let mut jobs = Vec::new();
    for e in 0..references.len() {
        for &scheme in &cfg.schemes {
            for &n in &ns {
                jobs.push((e, scheme, n));
            }
        }
    }
    let mut rows: Vec<StudyRow> = jobs
        .par_iter()
        .map(|&(e, scheme, n)| {
            let b = pairs.iter().position(|&p| p == (e, n)).and_then(|i| best[i]);
            run_row(cfg, scheme, n, &references[e], b)
        })
        .collect();

    for group in rows.chunk_by_mut(|a, b| a.scheme == b.scheme && a.eps == b.eps) {
        if group.len() < 2 {
            continue;
        }
        let hs: Vec<f64> = group.iter().map(|r| 1.0 / r.n as f64).collect();
        let l2: Vec<f64> = group.iter().map(|r| if r.l2_error.is_nan() { 0.0 } else { r.l2_error }).collect();
        let h1: Vec<f64> = group.iter().map(|r| if r.h1_error.is_nan() { 0.0 } else { r.h1_error }).collect();
        let rl2 = estimate_rate(&l2, &hs)?;
        let rh1 = estimate_rate(&h1, &hs)?;
        for (k, row) in group.iter_mut().enumerate().skip(1) {
            row.rate_l2 = rl2[k - 1];
            row.rate_h1 = rh1[k - 1];
        }
    }
    Ok(rows)
}

pub const CSV_HEADER: &str = "scheme,n,eps,dofs,iters,l2_error,h1_error,rate_l2,rate_h1,cea_ratio,wall_time_s";

fn real(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        "NaN".to_string()
    }
}

/// Writes the rows as CSV with 17 significant digits.
pub fn write_csv<W: Write>(rows: &[StudyRow], mut w: W) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.scheme,
            r.n,
            real(r.eps),
            r.dofs,
            r.iterations,
            real(r.l2_error),
            real(r.h1_error),
            real(r.rate_l2),
            real(r.rate_h1),
            real(r.cea_ratio),
            real(r.wall_time_s)
        )?;
    }
    Ok(())
}
