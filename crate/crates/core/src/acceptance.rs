//! Built-in acceptance suite shared by the `verify` command and the test
//! target.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::analysis::{run_study, AlphaKind, BKind, ProblemSpec, Source, StudyConfig};
use crate::bubble::{monolithic_solve, residual_free_check, LOCAL_SOLVER_TOL};
use crate::coefficients::{CoefficientField, Nonlinearity};
use crate::fem::{error_norms, l2_norm, DiscreteFunction};
use crate::kirchhoff::solve_kirchhoff;
use crate::mesh::{generate_structured, Mesh};
use crate::problem::{ExactSolution, Problem};
use crate::solvers::{
    composite_energy, composite_space, condensed_elements, freeze_composite, galerkin_energy, solve_fine_reference,
    solve_galerkin, solve_linear_rfb, solve_rfb, CompositeSolution, GalerkinEnergy, PicardConfig, ReducedMode, Scheme,
    SolveReport,
};
use crate::Result;

#[derive(Debug, Clone)]
pub struct CriterionResult {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {}. {} ({:.2} s): {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.elapsed.as_secs_f64(),
            self.detail
        )
    }
}

/// Energy bound evaluated on one converged solve.
#[derive(Debug, Clone)]
struct EnergyRecord {
    label: String,
    energy: GalerkinEnergy,
}

#[derive(Default)]
struct Log {
    energy: Vec<EnergyRecord>,
}

impl Log {
    fn galerkin(&mut self, label: impl Into<String>, u: &DiscreteFunction, p: &Problem, rep: &SolveReport) {
        if rep.converged {
            self.energy.push(EnergyRecord {
                label: label.into(),
                energy: galerkin_energy(u, p),
            });
        }
    }

    fn composite(&mut self, label: impl Into<String>, u: &CompositeSolution, p: &Problem, rep: &SolveReport) {
        if rep.converged {
            self.energy.push(EnergyRecord {
                label: label.into(),
                energy: composite_energy(u, p),
            });
        }
    }
}

type Check = fn(&mut Log) -> Result<(bool, String)>;

const CRITERIA: [(usize, &str, u64, Check); 8] = [
    (1, "Kirchhoff equivalence", 60, kirchhoff_equivalence),
    (2, "constant-coefficient collapse", 5, constant_collapse),
    (3, "static condensation equivalence", 5, condensation_equivalence),
    (4, "manufactured-solution rates", 60, manufactured_rates),
    (5, "Picard contraction", 30, picard_contraction),
    (6, "residual-free property", 30, residual_free),
    (7, "multiscale advantage", 300, multiscale_advantage),
    (8, "scheme agreement", 60, scheme_agreement),
];

fn mesh(n: usize) -> Arc<Mesh> {
    Arc::new(generate_structured(n).expect("structured mesh"))
}

fn smooth_nonlinear() -> Problem {
    let alpha = CoefficientField::periodic(1.0, 0.3, 1.0).expect("field");
    Problem::manufactured(alpha, Nonlinearity::sin(), ExactSolution::sin_sin(1.0))
}

fn fmt_list(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn kirchhoff_equivalence(log: &mut Log) -> Result<(bool, String)> {
    let p = Problem::manufactured(CoefficientField::constant(1.0)?, Nonlinearity::sin(), ExactSolution::sin_sin(1.0));
    let exact = p.exact.clone().expect("manufactured");
    let cfg = PicardConfig::with_tol(1e-10);
    let (mut gaps, mut err_ref, mut err_kir) = (Vec::new(), Vec::new(), Vec::new());
    for n in [32, 64, 128] {
        let m = mesh(n);
        let (r, rep) = solve_fine_reference(&m, &p, &cfg)?;
        log.galerkin(format!("C1 reference n={n}"), &r, &p, &rep);
        let k = solve_kirchhoff(&m, &p, 1e-13)?;
        let d: Vec<f64> = r.values().iter().zip(k.values()).map(|(a, b)| a - b).collect();
        gaps.push(l2_norm(&m, &d));
        err_ref.push(error_norms(&r, |x| (exact.u)(x), |x| (exact.grad)(x)).0);
        err_kir.push(error_norms(&k, |x| (exact.u)(x), |x| (exact.grad)(x)).0);
    }
    let rates: Vec<f64> = gaps.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let decay = |e: &[f64]| e.windows(2).all(|w| w[1] <= 1.5 * w[0] / 4.0);
    let ok = rates.iter().all(|&r| r >= 1.8) && decay(&err_ref) && decay(&err_kir);
    Ok((
        ok,
        format!(
            "gap rates {}, reference L2 errors {}, oracle L2 errors {}",
            fmt_list(&rates),
            fmt_list(&err_ref),
            fmt_list(&err_kir)
        ),
    ))
}

fn constant_collapse(log: &mut Log) -> Result<(bool, String)> {
    let p = Problem::new(CoefficientField::constant(1.0)?, Nonlinearity::constant(2.0)?, |x| 1.0 + x[0] - 0.5 * x[1]);
    let coarse = mesh(8);
    let cfg = PicardConfig::default();
    let (g, grep) = solve_galerkin(&coarse, &p, &cfg)?;
    log.galerkin("C2 galerkin", &g, &p, &grep);
    let (r, rrep) = solve_rfb(composite_space(&coarse, 4, &p)?, &p, &cfg, Scheme::RfbCoupled)?;
    log.composite("C2 rfb_coupled", &r, &p, &rrep);
    let diff = g.values().iter().zip(r.coarse.values()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let corr = condensed_elements(&r, &p)?.iter().fold(0.0f64, |m, e| m.max(e.correction.max_abs()));
    Ok((
        diff <= 1e-8 && corr <= 1e-10,
        format!("max nodal difference {diff:.3e} (<= 1e-8), max correction {corr:.3e} (<= 1e-10)"),
    ))
}

fn condensation_equivalence(_: &mut Log) -> Result<(bool, String)> {
    let alpha = CoefficientField::periodic(1.0, 0.9, 0.125)?;
    let p = Problem::new(alpha, Nonlinearity::sin(), |[x, y]| 1.0 + x * y);
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    // the two-element mesh, then a mesh with a free coarse node
    for n in [1, 2] {
        let space = composite_space(&mesh(n), 4, &p)?;
        let coarse: Vec<f64> = space.coarse().nodes().iter().map(|q| (PI * q[0]).sin() * (PI * q[1]).sin()).collect();
        let bubbles: Vec<Vec<f64>> = space
            .submeshes()
            .iter()
            .map(|s| (0..s.num_interior()).map(|i| 0.1 * (i as f64 + 1.0)).collect())
            .collect();
        let systems = freeze_composite(&space, &p, &coarse, &bubbles)?;
        let (c1, b1) = solve_linear_rfb(&space, &systems, 1e-14)?;
        let (c2, b2) = monolithic_solve(space.coarse(), &systems)?;
        let d = c1
            .iter()
            .zip(&c2)
            .chain(b1.iter().flatten().zip(b2.iter().flatten()))
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        parts.push(format!("{} elements: {d:.3e}", space.coarse().num_triangles()));
        worst = worst.max(d);
    }
    Ok((worst <= 1e-10, format!("max DOF difference {} (<= 1e-10)", parts.join(", "))))
}

fn manufactured_rates(log: &mut Log) -> Result<(bool, String)> {
    let p = smooth_nonlinear();
    let exact = p.exact.clone().expect("manufactured");
    let cfg = PicardConfig::with_tol(1e-10);
    let (mut l2, mut h1) = (Vec::new(), Vec::new());
    for n in [16, 32, 64] {
        let (u, rep) = solve_fine_reference(&mesh(n), &p, &cfg)?;
        log.galerkin(format!("C4 reference n={n}"), &u, &p, &rep);
        let (a, b) = error_norms(&u, |x| (exact.u)(x), |x| (exact.grad)(x));
        l2.push(a);
        h1.push(b);
    }
    let rate = |e: &[f64]| e.windows(2).map(|w| (w[0] / w[1]).log2()).collect::<Vec<_>>();
    let (rl2, rh1) = (rate(&l2), rate(&h1));
    let ok = rh1.iter().all(|r| (0.85..=1.15).contains(r)) && rl2.iter().all(|r| (1.8..=2.2).contains(r));
    Ok((ok, format!("rate_h1 {} in [0.85, 1.15], rate_l2 {} in [1.8, 2.2]", fmt_list(&rh1), fmt_list(&rl2))))
}

fn picard_contraction(log: &mut Log) -> Result<(bool, String)> {
    let p = Problem::new(CoefficientField::constant(1.0)?, Nonlinearity::sin(), |[x, y]| {
        0.1 * 2.0 * PI * PI * (PI * x).sin() * (PI * y).sin()
    });
    let cfg = PicardConfig::with_tol(1e-10);
    let coarse = mesh(16);
    let mut ok = true;
    let mut parts = Vec::new();
    let mut judge = |name: &str, rep: &SolveReport| {
        let r = &rep.contraction_estimates;
        let last = r.last().copied().unwrap_or(f64::NAN);
        let tail = &r[r.len().saturating_sub(3)..];
        let monotone = tail.len() == 3 && tail.windows(2).all(|w| w[1] <= w[0]);
        let pass = rep.converged && last <= 0.9 && monotone;
        ok &= pass;
        parts.push(format!("{name}: final {last:.3e}, last three {}{}", fmt_list(tail), if pass { "" } else { " FAIL" }));
    };
    let (g, rep) = solve_galerkin(&coarse, &p, &cfg)?;
    log.galerkin("C5 galerkin", &g, &p, &rep);
    judge("galerkin", &rep);
    for scheme in [
        Scheme::RfbCoupled,
        Scheme::RfbDecoupled,
        Scheme::RfbReduced(ReducedMode::Field),
        Scheme::RfbReduced(ReducedMode::ElementAverage),
        Scheme::RfbReduced(ReducedMode::PointSample),
    ] {
        let (s, rep) = solve_rfb(composite_space(&coarse, 4, &p)?, &p, &cfg, scheme)?;
        log.composite(format!("C5 {}", s.provenance.scheme), &s, &p, &rep);
        judge(&s.provenance.scheme, &rep);
    }
    Ok((ok, parts.join("; ")))
}

fn residual_free(log: &mut Log) -> Result<(bool, String)> {
    let alpha = CoefficientField::periodic(1.0, 0.9, 1.0 / 16.0)?;
    let p = Problem::new(alpha, Nonlinearity::sin(), |_| 1.0);
    let cfg = PicardConfig::with_tol(1e-10);
    let (s, rep) = solve_rfb(composite_space(&mesh(8), 16, &p)?, &p, &cfg, Scheme::RfbCoupled)?;
    log.composite("C6 rfb_coupled", &s, &p, &rep);
    let systems = freeze_composite(&s.space, &p, s.coarse.values(), &s.bubbles)?;
    let worst = systems
        .iter()
        .enumerate()
        .map(|(k, sys)| residual_free_check(sys, &s.local_values(k)))
        .fold(0.0f64, f64::max);
    let bound = 10.0 * LOCAL_SOLVER_TOL;
    Ok((
        rep.converged && worst <= bound,
        format!("{} elements, max normalised local residual {worst:.3e} (<= {bound:e})", systems.len()),
    ))
}

fn multiscale_advantage(_: &mut Log) -> Result<(bool, String)> {
    let cfg = StudyConfig {
        schemes: vec![Scheme::Galerkin, Scheme::RfbCoupled],
        ns: vec![8],
        m: 16,
        eps: vec![1.0 / 16.0],
        problem: ProblemSpec {
            alpha: AlphaKind::Periodic,
            a0: 1.0,
            rho: 0.9,
            b: BKind::Sin,
            source: Source::One,
        },
        picard: PicardConfig::with_tol(1e-8),
        ref_levels: 5,
    };
    let rows = run_study(&cfg)?;
    let (g, r) = (&rows[0], &rows[1]);
    if let Some(e) = g.failure.as_ref().or(r.failure.as_ref()) {
        return Ok((false, format!("solve failed: {e}")));
    }
    let ratio = r.h1_error / g.h1_error;
    Ok((
        g.converged && r.converged && ratio <= 0.7 && r.cea_ratio <= 20.0,
        format!(
            "h1 errors galerkin {:.4e}, rfb_coupled {:.4e}, ratio {ratio:.3} (<= 0.7); cea_ratio {:.3} (<= 20)",
            g.h1_error, r.h1_error, r.cea_ratio
        ),
    ))
}

fn scheme_agreement(log: &mut Log) -> Result<(bool, String)> {
    let p = smooth_nonlinear();
    let cfg = PicardConfig::with_tol(1e-8);
    let coarse = mesh(16);
    let mut sols = Vec::new();
    for scheme in [Scheme::RfbCoupled, Scheme::RfbDecoupled, Scheme::RfbReduced(ReducedMode::Field)] {
        let (s, rep) = solve_rfb(composite_space(&coarse, 4, &p)?, &p, &cfg, scheme)?;
        log.composite(format!("C8 {}", s.provenance.scheme), &s, &p, &rep);
        if !rep.converged {
            return Ok((false, format!("{} did not converge", s.provenance.scheme)));
        }
        sols.push(s);
    }
    let dist = |a: &CompositeSolution, b: &CompositeSolution| {
        let dc: Vec<f64> = a.coarse.values().iter().zip(b.coarse.values()).map(|(x, y)| x - y).collect();
        let db: Vec<Vec<f64>> = a
            .bubbles
            .iter()
            .zip(&b.bubbles)
            .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p - q).collect())
            .collect();
        a.space.h1_seminorm(&dc, &db) / a.h1_seminorm()
    };
    let bound = 10.0 * cfg.tol;
    let pairs = [(0, 1), (0, 2), (1, 2)];
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, j) in pairs {
        let d = dist(&sols[i], &sols[j]);
        ok &= d <= bound;
        parts.push(format!("{}-{} {d:.3e}", sols[i].provenance.scheme, sols[j].provenance.scheme));
    }
    Ok((ok, format!("relative H1 distances {} (<= {bound:e})", parts.join(", "))))
}

fn energy_summary(log: &Log) -> (bool, String) {
    let failures: Vec<String> = log
        .energy
        .iter()
        .filter(|r| !r.energy.holds(1e-6))
        .map(|r| format!("{} ({:.6e} > {:.6e})", r.label, r.energy.coercive, r.energy.work))
        .collect();
    if failures.is_empty() {
        (!log.energy.is_empty(), format!("{} converged solutions satisfy the bound", log.energy.len()))
    } else {
        (false, format!("violations: {}", failures.join(", ")))
    }
}

/// Runs criteria 1 to 9 in order. A criterion also fails when it exceeds
/// its runtime budget or returns an error.
pub fn run_all() -> Vec<CriterionResult> {
    let mut log = Log::default();
    let mut out = Vec::new();
    let start_all = Instant::now();
    for (id, name, budget, check) in CRITERIA {
        let start = Instant::now();
        let result = check(&mut log);
        let elapsed = start.elapsed();
        let (passed, mut detail) = match result {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        let in_time = elapsed <= Duration::from_secs(budget);
        if !in_time {
            detail.push_str(&format!("; exceeded runtime budget of {budget} s"));
        }
        out.push(CriterionResult {
            id,
            name,
            passed: passed && in_time,
            detail,
            elapsed,
        });
    }
    let (passed, detail) = energy_summary(&log);
    out.push(CriterionResult {
        id: 9,
        name: "energy bound",
        passed,
        detail,
        elapsed: start_all.elapsed(),
    });
    out
}
