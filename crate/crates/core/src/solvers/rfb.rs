use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DVector;
use rayon::prelude::*;

use super::composite::{CompositeSolution, CompositeSpace, Provenance};
use super::galerkin::{solve_galerkin, GalerkinEnergy};
use super::picard::{iterate, InitialGuess, PicardConfig, SolveReport};
use crate::bubble::{
    condense, recover_bubble, sample_at_quadrature, solve_local_lifts, BubbleLifts, CondensedContribution,
    LocalCoefficient, LocalSystem, SnapshotId,
};
use crate::fem::{quad_rule, rule_for_scale, solve_general, solve_spd_auto, CsrMatrix, DiscreteFunction};
use crate::mesh::Mesh;
use crate::problem::Problem;
use crate::{Error, Result};

/// Coefficient used in the local problems of the reduced scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReducedMode {
    /// `alpha b(u_h)` pointwise.
    #[default]
    Field,
    /// `alpha b(mean of u_h over K)`.
    ElementAverage,
    /// `alpha b(u_h(centroid))`.
    PointSample,
}

impl ReducedMode {
    pub fn name(self) -> &'static str {
        match self {
            ReducedMode::Field => "field",
            ReducedMode::ElementAverage => "element_average",
            ReducedMode::PointSample => "point_sample",
        }
    }
}

impl FromStr for ReducedMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "field" => Ok(ReducedMode::Field),
            "element_average" => Ok(ReducedMode::ElementAverage),
            "point_sample" => Ok(ReducedMode::PointSample),
            _ => Err(Error::invalid(format!("unknown reduced mode '{s}'"))),
        }
    }
}

/// Discretization scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Galerkin,
    RfbCoupled,
    RfbDecoupled,
    RfbReduced(ReducedMode),
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Galerkin => "galerkin",
            Scheme::RfbCoupled => "rfb_coupled",
            Scheme::RfbDecoupled => "rfb_decoupled",
            Scheme::RfbReduced(_) => "rfb_reduced",
        }
    }

    pub fn is_rfb(self) -> bool {
        !matches!(self, Scheme::Galerkin)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    /// Parses `galerkin`, `rfb_coupled`, `rfb_decoupled`, `rfb_reduced`
    /// (field mode); the reduced mode may be appended as `rfb_reduced:<mode>`.
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            Some(("rfb_reduced", mode)) => Ok(Scheme::RfbReduced(mode.parse()?)),
            Some(_) => Err(Error::invalid(format!("unknown scheme '{s}'"))),
            None => match s {
                "galerkin" => Ok(Scheme::Galerkin),
                "rfb_coupled" => Ok(Scheme::RfbCoupled),
                "rfb_decoupled" => Ok(Scheme::RfbDecoupled),
                "rfb_reduced" => Ok(Scheme::RfbReduced(ReducedMode::Field)),
                _ => Err(Error::invalid(format!("unknown scheme '{s}'"))),
            },
        }
    }
}

/// Coefficient and load at the sub-mesh quadrature points, per element.
struct ElementData {
    alpha: Vec<Vec<f64>>,
    f: Vec<Vec<f64>>,
}

impl ElementData {
    fn new(space: &CompositeSpace, problem: &Problem) -> Result<Self> {
        let rule = space.rule();
        let alpha = space
            .submeshes()
            .par_iter()
            .map(|s| {
                let coef = LocalCoefficient::sample(s, rule, SnapshotId::fresh(), |_, _, x| problem.alpha.checked_value(x))?;
                Ok(coef.values().to_vec())
            })
            .collect::<Result<_>>()?;
        let f = space
            .submeshes()
            .par_iter()
            .map(|s| sample_at_quadrature(s, rule, |x| (problem.f)(x)))
            .collect();
        Ok(Self { alpha, f })
    }

    /// `alpha b(u)` from values of `u` at the quadrature points of element `k`.
    fn frozen(&self, k: usize, problem: &Problem, u_qp: &[f64]) -> Result<LocalCoefficient> {
        let values = self.alpha[k]
            .iter()
            .zip(u_qp)
            .map(|(a, &u)| Ok(a * problem.b.checked_b(u)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(LocalCoefficient::from_values(SnapshotId::fresh(), values))
    }

    fn system<'a>(&self, space: &'a CompositeSpace, k: usize, problem: &Problem, u_qp: &[f64]) -> Result<LocalSystem<'a>> {
        let kappa = self.frozen(k, problem, u_qp)?;
        Ok(LocalSystem::assemble(space.submesh(k), space.rule(), &kappa, &self.f[k]))
    }
}

fn local_error(k: usize) -> impl Fn(Error) -> Error {
    move |e| Error::LocalSolve {
        element: k,
        source: Box::new(e),
    }
}

#[derive(Debug, Clone, PartialEq)]
struct State {
    coarse: Vec<f64>,
    bubbles: Vec<Vec<f64>>,
}

impl State {
    fn zero(space: &CompositeSpace) -> Self {
        Self {
            coarse: vec![0.0; space.coarse().num_nodes()],
            bubbles: space.submeshes().iter().map(|s| vec![0.0; s.num_interior()]).collect(),
        }
    }

    fn local(&self, space: &CompositeSpace, k: usize) -> Vec<f64> {
        space.local_values(k, &self.coarse, &self.bubbles[k])
    }

    fn composite_qp(&self, space: &CompositeSpace, k: usize) -> Vec<f64> {
        space.at_quadrature(k, &self.local(space, k))
    }
}

/// Assembles per-element 3x3 blocks into the free coarse DOFs and solves.
fn coarse_solve(space: &CompositeSpace, blocks: &[([[f64; 3]; 3], [f64; 3])], symmetric: bool, tol: f64) -> Result<Vec<f64>> {
    let mesh = space.coarse();
    let dofs = space.coarse_dofs();
    if dofs.is_empty() {
        return Ok(vec![0.0; mesh.num_nodes()]);
    }
    let mut a = CsrMatrix::pattern_from_mesh(mesh, dofs);
    let mut rhs = vec![0.0; dofs.len()];
    for (tri, (block, load)) in mesh.triangles().iter().zip(blocks) {
        for i in 0..3 {
            let Some(gi) = dofs.dof(tri[i]) else { continue };
            rhs[gi] += load[i];
            for j in 0..3 {
                if let Some(gj) = dofs.dof(tri[j]) {
                    a.add(gi, gj, block[i][j]);
                }
            }
        }
    }
    let x = if symmetric {
        solve_spd_auto(&a, &rhs, tol)?
    } else {
        solve_general(&a, &rhs, tol)?
    };
    Ok(dofs.expand(&x))
}

fn add_correction(block: [[f64; 3]; 3], load: [f64; 3], c: &CondensedContribution) -> ([[f64; 3]; 3], [f64; 3]) {
    (
        std::array::from_fn(|i| std::array::from_fn(|j| block[i][j] + c.matrix[i][j])),
        std::array::from_fn(|i| load[i] + c.rhs[i]),
    )
}

/// Standard block, condensation correction and lifts of one element.
#[derive(Debug, Clone)]
pub struct ElementCondensed {
    pub block: [[f64; 3]; 3],
    pub load: [f64; 3],
    pub correction: CondensedContribution,
    pub lifts: BubbleLifts,
}

fn condense_systems(systems: &[LocalSystem]) -> Result<Vec<ElementCondensed>> {
    systems
        .par_iter()
        .enumerate()
        .map(|(k, sys)| {
            let lifts = solve_local_lifts(sys).map_err(local_error(k))?;
            let correction = condense(&lifts, sys).map_err(local_error(k))?;
            let (block, load) = sys.standard_block();
            Ok(ElementCondensed {
                block,
                load,
                correction,
                lifts,
            })
        })
        .collect()
}

/// One linear RFB solve by static condensation for the given local systems
/// (one per coarse element, in element order). Returns the coarse nodal
/// values and the interior bubble vectors.
pub fn solve_linear_rfb(space: &CompositeSpace, systems: &[LocalSystem], linear_tol: f64) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    if systems.len() != space.submeshes().len() {
        return Err(Error::invalid("one local system per coarse element is required"));
    }
    let elems = condense_systems(systems)?;
    let blocks: Vec<_> = elems.iter().map(|e| add_correction(e.block, e.load, &e.correction)).collect();
    let coarse = coarse_solve(space, &blocks, true, linear_tol)?;
    let bubbles = elems
        .par_iter()
        .enumerate()
        .map(|(k, e)| recover_bubble(&e.lifts, space.coarse_local(k, &coarse)))
        .collect();
    Ok((coarse, bubbles))
}

/// Local systems with the coefficient frozen at the composite function
/// `coarse + bubbles`.
pub fn freeze_composite<'a>(
    space: &'a CompositeSpace,
    problem: &Problem,
    coarse: &[f64],
    bubbles: &[Vec<f64>],
) -> Result<Vec<LocalSystem<'a>>> {
    let data = ElementData::new(space, problem)?;
    let state = State {
        coarse: coarse.to_vec(),
        bubbles: bubbles.to_vec(),
    };
    (0..space.submeshes().len())
        .into_par_iter()
        .map(|k| data.system(space, k, problem, &state.composite_qp(space, k)))
        .collect()
}

/// Condensed element data with the coefficient frozen at a composite
/// solution.
pub fn condensed_elements(sol: &CompositeSolution, problem: &Problem) -> Result<Vec<ElementCondensed>> {
    let systems = freeze_composite(&sol.space, problem, sol.coarse.values(), &sol.bubbles)?;
    condense_systems(&systems)
}

fn coupled_step(space: &CompositeSpace, data: &ElementData, problem: &Problem, prev: &State, tol: f64) -> Result<State> {
    let systems = (0..space.submeshes().len())
        .into_par_iter()
        .map(|k| data.system(space, k, problem, &prev.composite_qp(space, k)))
        .collect::<Result<Vec<_>>>()?;
    let (coarse, bubbles) = solve_linear_rfb(space, &systems, tol)?;
    Ok(State { coarse, bubbles })
}

fn decoupled_step(space: &CompositeSpace, data: &ElementData, problem: &Problem, prev: &State, tol: f64) -> Result<State> {
    let nk = space.submeshes().len();
    let blocks = (0..nk)
        .into_par_iter()
        .map(|k| {
            let sys = data.system(space, k, problem, &prev.composite_qp(space, k))?;
            let (block, load) = sys.standard_block();
            let c = sys.coarse_coupling(&prev.bubbles[k]);
            Ok((block, std::array::from_fn(|i| load[i] - c[i])))
        })
        .collect::<Result<Vec<_>>>()?;
    let coarse = coarse_solve(space, &blocks, true, tol)?;
    let bubbles = (0..nk)
        .into_par_iter()
        .map(|k| {
            let mixed = space.local_values(k, &coarse, &prev.bubbles[k]);
            let sys = data.system(space, k, problem, &space.at_quadrature(k, &mixed))?;
            sys.solve_bubble(&space.coarse_on_submesh(k, &coarse), 1.0).map_err(local_error(k))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(State { coarse, bubbles })
}

/// Argument of `b` in the local problems of the reduced scheme, at the
/// quadrature points of element `k`.
fn reduced_local_arg(space: &CompositeSpace, k: usize, coarse: &[f64], mode: ReducedMode) -> Vec<f64> {
    let uh_qp = space.at_quadrature(k, &space.coarse_on_submesh(k, coarse));
    match mode {
        ReducedMode::Field => uh_qp,
        ReducedMode::ElementAverage => {
            let sub = space.submesh(k);
            let rule = space.rule();
            let nq = rule.len();
            let (mut mean, mut area) = (0.0, 0.0);
            for t in 0..sub.triangles().len() {
                let a = sub.area(t);
                area += a;
                mean += a * rule.weights().iter().zip(&uh_qp[t * nq..(t + 1) * nq]).map(|(w, u)| w * u).sum::<f64>();
            }
            vec![mean / area; uh_qp.len()]
        }
        ReducedMode::PointSample => {
            let u = space.coarse_local(k, coarse);
            vec![(u[0] + u[1] + u[2]) / 3.0; uh_qp.len()]
        }
    }
}

fn reduced_step(
    space: &CompositeSpace,
    data: &ElementData,
    problem: &Problem,
    mode: ReducedMode,
    prev: &State,
    tol: f64,
) -> Result<State> {
    let nk = space.submeshes().len();
    let elems = (0..nk)
        .into_par_iter()
        .map(|k| {
            let global = data.system(space, k, problem, &prev.composite_qp(space, k))?;
            let local_arg = reduced_local_arg(space, k, &prev.coarse, mode);
            let local = data.system(space, k, problem, &local_arg)?;
            let lifts = solve_local_lifts(&local).map_err(local_error(k))?;
            let (block, load) = global.standard_block();
            let cols: [[f64; 3]; 3] = std::array::from_fn(|j| global.coarse_coupling(&lifts.b_basis[j]));
            let cf = global.coarse_coupling(&lifts.b_f);
            let block = std::array::from_fn(|i| std::array::from_fn(|j| block[i][j] + cols[j][i]));
            let load = std::array::from_fn(|i| load[i] - cf[i]);
            Ok(((block, load), lifts))
        })
        .collect::<Result<Vec<_>>>()?;
    let blocks: Vec<_> = elems.iter().map(|(b, _)| *b).collect();
    let coarse = coarse_solve(space, &blocks, problem.b.is_constant(), tol)?;
    let bubbles = elems
        .par_iter()
        .enumerate()
        .map(|(k, (_, lifts))| recover_bubble(lifts, space.coarse_local(k, &coarse)))
        .collect();
    Ok(State { coarse, bubbles })
}

/// Composite space on `coarse` with `m` subdivisions and the quadrature
/// order the coarse assembly would use for this coefficient.
pub fn composite_space(coarse: &Arc<Mesh>, m: usize, problem: &Problem) -> Result<Arc<CompositeSpace>> {
    let rule = quad_rule(rule_for_scale(coarse.h(), problem.alpha.epsilon()))?;
    Ok(Arc::new(CompositeSpace::new(coarse.clone(), m, rule)?))
}

fn initial_state(space: &Arc<CompositeSpace>, problem: &Problem, cfg: &PicardConfig) -> Result<State> {
    let mut state = State::zero(space);
    let mesh = space.coarse();
    match &cfg.initial_guess {
        InitialGuess::Zero => {}
        InitialGuess::Given(v) => {
            if v.len() != mesh.num_nodes() {
                return Err(Error::invalid(format!(
                    "initial guess has {} values, coarse mesh has {} nodes",
                    v.len(),
                    mesh.num_nodes()
                )));
            }
            state.coarse = v.clone();
            for &b in mesh.boundary_nodes() {
                state.coarse[b] = 0.0;
            }
        }
        InitialGuess::Galerkin => {
            let start = PicardConfig {
                initial_guess: InitialGuess::Zero,
                ..cfg.clone()
            };
            state.coarse = solve_galerkin(mesh, problem, &start)?.0.into_values();
        }
    }
    Ok(state)
}

fn run(
    space: Arc<CompositeSpace>,
    problem: &Problem,
    cfg: &PicardConfig,
    scheme: Scheme,
) -> Result<(CompositeSolution, SolveReport)> {
    cfg.validate()?;
    let data = ElementData::new(&space, problem)?;
    let init = initial_state(&space, problem, cfg)?;
    let linear = problem.b.is_constant() && scheme != Scheme::RfbDecoupled;
    let tol = cfg.linear_tol;
    let step = |prev: &State| match scheme {
        Scheme::RfbCoupled => coupled_step(&space, &data, problem, prev, tol),
        Scheme::RfbDecoupled => decoupled_step(&space, &data, problem, prev, tol),
        Scheme::RfbReduced(mode) => reduced_step(&space, &data, problem, mode, prev, tol),
        Scheme::Galerkin => Err(Error::invalid("galerkin is not a composite scheme")),
    };
    let measure = |next: &State, prev: &State| {
        let (mut inc, mut size) = (0.0, 0.0);
        for k in 0..space.submeshes().len() {
            let a = next.local(&space, k);
            let b = prev.local(&space, k);
            let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
            inc += space.local_seminorm_sq(k, &d);
            size += space.local_seminorm_sq(k, &a);
        }
        (inc.sqrt(), size.sqrt())
    };
    let (state, report) = iterate(cfg, init, linear, step, measure)?;
    let provenance = Provenance {
        scheme: match scheme {
            Scheme::RfbReduced(mode) => format!("rfb_reduced:{}", mode.name()),
            s => s.name().to_string(),
        },
        iterations: report.iterations,
        initial_guess: cfg.initial_guess.label().to_string(),
    };
    let coarse = DiscreteFunction::new(space.coarse().clone(), state.coarse)?;
    Ok((
        CompositeSolution {
            space,
            coarse,
            bubbles: state.bubbles,
            provenance,
        },
        report,
    ))
}

/// Picard with the coefficient frozen at `u_h^{n-1} + u_b^{n-1}` and one
/// condensed linear RFB solve per iteration.
pub fn solve_rfb_coupled(coarse: &Arc<Mesh>, m: usize, problem: &Problem, cfg: &PicardConfig) -> Result<(CompositeSolution, SolveReport)> {
    run(composite_space(coarse, m, problem)?, problem, cfg, Scheme::RfbCoupled)
}

/// Block Gauss-Seidel: coarse step with the previous bubble as data, then
/// local steps with the updated coarse part. Starts from a zero bubble.
pub fn solve_rfb_decoupled(coarse: &Arc<Mesh>, m: usize, problem: &Problem, cfg: &PicardConfig) -> Result<(CompositeSolution, SolveReport)> {
    run(composite_space(coarse, m, problem)?, problem, cfg, Scheme::RfbDecoupled)
}

/// Local problems frozen at the coarse part only (linear in the bubble),
/// global step frozen at the full composite.
pub fn solve_rfb_reduced(
    coarse: &Arc<Mesh>,
    m: usize,
    problem: &Problem,
    cfg: &PicardConfig,
    mode: ReducedMode,
) -> Result<(CompositeSolution, SolveReport)> {
    run(composite_space(coarse, m, problem)?, problem, cfg, Scheme::RfbReduced(mode))
}

/// Runs an RFB scheme on a prepared space.
pub fn solve_rfb(
    space: Arc<CompositeSpace>,
    problem: &Problem,
    cfg: &PicardConfig,
    scheme: Scheme,
) -> Result<(CompositeSolution, SolveReport)> {
    run(space, problem, cfg, scheme)
}

/// Relative residual of the discrete nonlinear equations of the scheme that
/// produced `sol`, tested against every coarse and bubble basis function.
/// The coarse equations use `alpha b(u_h + u_b)`; the bubble equations use
/// the same coefficient except for the reduced scheme, whose local problems
/// are frozen at the coarse part.
pub fn composite_residual(sol: &CompositeSolution, problem: &Problem) -> Result<f64> {
    let space = &sol.space;
    let scheme: Scheme = sol.provenance.scheme.parse()?;
    let systems = freeze_composite(space, problem, sol.coarse.values(), &sol.bubbles)?;
    let local_systems = match scheme {
        Scheme::RfbReduced(mode) => {
            let data = ElementData::new(space, problem)?;
            Some(
                (0..space.submeshes().len())
                    .into_par_iter()
                    .map(|k| data.system(space, k, problem, &reduced_local_arg(space, k, sol.coarse.values(), mode)))
                    .collect::<Result<Vec<_>>>()?,
            )
        }
        _ => None,
    };
    let dofs = space.coarse_dofs();
    let mut coarse_r = vec![0.0; dofs.len()];
    let mut coarse_f = vec![0.0; dofs.len()];
    let (mut bubble_r, mut bubble_f) = (0.0, 0.0);
    for (k, sys) in systems.iter().enumerate() {
        let u = DVector::from_vec(sol.local_values(k));
        let r = sys.stiffness() * &u - sys.load();
        let sub = space.submesh(k);
        let tri = space.coarse().triangles()[k];
        for n in 0..sub.num_nodes() {
            let l = sub.coarse_basis(n);
            for i in 0..3 {
                if let Some(g) = dofs.dof(tri[i]) {
                    coarse_r[g] += l[i] * r[n];
                    coarse_f[g] += l[i] * sys.load()[n];
                }
            }
        }
        let r_local = match &local_systems {
            Some(ls) => ls[k].stiffness() * &u - ls[k].load(),
            None => r,
        };
        for &n in sub.interior_nodes() {
            bubble_r += r_local[n] * r_local[n];
            bubble_f += sys.load()[n] * sys.load()[n];
        }
    }
    let num = (coarse_r.iter().map(|v| v * v).sum::<f64>() + bubble_r).sqrt();
    let den = (coarse_f.iter().map(|v| v * v).sum::<f64>() + bubble_f).sqrt();
    Ok(if den > 0.0 { num / den } else { num })
}

/// Energy-bound quantities of a composite solution; `(f, u)` uses the
/// sub-mesh quadrature.
pub fn composite_energy(sol: &CompositeSolution, problem: &Problem) -> GalerkinEnergy {
    let space = &sol.space;
    let rule = space.rule();
    let nq = rule.len();
    let mut work = 0.0;
    for k in 0..space.submeshes().len() {
        let sub = space.submesh(k);
        let u = space.at_quadrature(k, &sol.local_values(k));
        let f = sample_at_quadrature(sub, rule, |x| (problem.f)(x));
        for t in 0..sub.triangles().len() {
            let a = sub.area(t);
            for q in 0..nq {
                work += a * rule.weights()[q] * f[t * nq + q] * u[t * nq + q];
            }
        }
    }
    let s = sol.h1_seminorm();
    GalerkinEnergy {
        coercive: problem.coercivity() * s * s,
        work,
    }
}
