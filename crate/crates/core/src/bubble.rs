//! Local residual-free bubble problems and static condensation.
//!
//! On a coarse element `K` every quantity lives on the sub-mesh: the frozen
//! coefficient is sampled at sub-mesh quadrature points, the local stiffness
//! `S` and load `g` are assembled over all sub-mesh nodes, and the three
//! coarse basis functions are the sub-mesh vectors `Lambda_i` of coarse
//! barycentric coordinates. Splitting the nodes into interior (`I`, the
//! bubble unknowns) and boundary, the two-level system on `K` reads
//!
//! ```text
//!   [ Lambda' S Lambda    (Lambda' S)_I ] [u_h]   [ Lambda' g ]
//!   [ (S Lambda)_I        S_II          ] [u_b] = [ g_I       ]
//! ```
//!
//! and eliminating `u_b` gives the condensed element contribution.

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{DMatrix, DVector};

use crate::fem::{element_quadrature_points, p1_gradients, CsrMatrix, DofMap, QuadRule};
use crate::mesh::{Mesh, Point, SubMesh};
use crate::{Error, Result};

/// Nominal accuracy of the local solves; the dense path is exact up to
/// rounding, the iterative path stops at this relative residual.
pub const LOCAL_SOLVER_TOL: f64 = 1e-10;

/// Interior-DOF count from which local problems switch to CG.
const LOCAL_DENSE_LIMIT: usize = 500;

/// Identifies one frozen-coefficient evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SnapshotId(u64);

impl SnapshotId {
    pub fn fresh() -> Self {
        static NEXT: AtomicU64 = AtomicU64::new(1);
        SnapshotId(NEXT.fetch_add(1, Ordering::Relaxed))
    }

    pub fn value(self) -> u64 {
        self.0
    }
}

/// Frozen coefficient at the quadrature points of a sub-mesh, stored
/// triangle-major.
#[derive(Debug, Clone)]
pub struct LocalCoefficient {
    snapshot: SnapshotId,
    values: Vec<f64>,
}

impl LocalCoefficient {
    /// Samples `kappa(t, l, x)` at every quadrature point (`t` sub-mesh
    /// triangle, `l` barycentric coordinates in it, `x` position).
    pub fn sample(
        submesh: &SubMesh,
        rule: &QuadRule,
        snapshot: SnapshotId,
        mut kappa: impl FnMut(usize, &[f64; 3], Point) -> Result<f64>,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(submesh.triangles().len() * rule.len());
        for t in 0..submesh.triangles().len() {
            let pts = element_quadrature_points(submesh.vertices(t), rule);
            for (l, &x) in rule.points().iter().zip(&pts) {
                let v = kappa(t, l, x)?;
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::NonPositiveCoefficient { x: x[0], y: x[1], value: v });
                }
                values.push(v);
            }
        }
        Ok(Self { snapshot, values })
    }

    pub fn from_values(snapshot: SnapshotId, values: Vec<f64>) -> Self {
        Self { snapshot, values }
    }

    pub fn snapshot(&self) -> SnapshotId {
        self.snapshot
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Values of `f` at the sub-mesh quadrature points, triangle-major.
pub fn sample_at_quadrature(submesh: &SubMesh, rule: &QuadRule, f: impl Fn(Point) -> f64) -> Vec<f64> {
    (0..submesh.triangles().len())
        .flat_map(|t| element_quadrature_points(submesh.vertices(t), rule))
        .map(f)
        .collect()
}

/// Local stiffness and load over all sub-mesh nodes of one coarse element,
/// for one coefficient snapshot.
#[derive(Debug, Clone)]
pub struct LocalSystem<'a> {
    submesh: &'a SubMesh,
    snapshot: SnapshotId,
    stiffness: DMatrix<f64>,
    load: DVector<f64>,
    basis: DMatrix<f64>,
}

impl<'a> LocalSystem<'a> {
    /// Assembles `S_jk = int_K kappa grad psi_k . grad psi_j` and
    /// `g_j = int_K f psi_j` from quadrature-point samples.
    pub fn assemble(submesh: &'a SubMesh, rule: &QuadRule, kappa: &LocalCoefficient, f_at_qp: &[f64]) -> Self {
        let nq = rule.len();
        let n = submesh.num_nodes();
        let mut stiffness = DMatrix::zeros(n, n);
        let mut load = DVector::zeros(n);
        for (t, tri) in submesh.triangles().iter().enumerate() {
            let (g, area) = p1_gradients(submesh.vertices(t));
            let kq = &kappa.values[t * nq..(t + 1) * nq];
            let fq = &f_at_qp[t * nq..(t + 1) * nq];
            let kint: f64 = area * rule.weights().iter().zip(kq).map(|(w, k)| w * k).sum::<f64>();
            for a in 0..3 {
                for b in 0..3 {
                    stiffness[(tri[a], tri[b])] += kint * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
                }
                load[tri[a]] += area * rule.iter().zip(fq).map(|((l, w), f)| w * f * l[a]).sum::<f64>();
            }
        }
        Self::from_parts(submesh, kappa.snapshot, stiffness, load)
    }

    /// Wraps an externally assembled stiffness and load.
    pub fn from_parts(submesh: &'a SubMesh, snapshot: SnapshotId, stiffness: DMatrix<f64>, load: DVector<f64>) -> Self {
        let n = submesh.num_nodes();
        let basis = DMatrix::from_fn(n, 3, |node, i| submesh.coarse_basis(node)[i]);
        Self {
            submesh,
            snapshot,
            stiffness,
            load,
            basis,
        }
    }

    pub fn submesh(&self) -> &'a SubMesh {
        self.submesh
    }

    pub fn snapshot(&self) -> SnapshotId {
        self.snapshot
    }

    pub fn stiffness(&self) -> &DMatrix<f64> {
        &self.stiffness
    }

    pub fn load(&self) -> &DVector<f64> {
        &self.load
    }

    /// `Lambda' S Lambda` and `Lambda' g`: the coarse element matrix and
    /// load integrated on the sub-mesh.
    pub fn standard_block(&self) -> ([[f64; 3]; 3], [f64; 3]) {
        let sl = &self.stiffness * &self.basis;
        let a = self.basis.transpose() * sl;
        let f = self.basis.transpose() * &self.load;
        (
            std::array::from_fn(|i| std::array::from_fn(|j| a[(i, j)])),
            std::array::from_fn(|i| f[i]),
        )
    }

    /// `(Lambda' S)_{i, I}` applied to an interior vector.
    pub fn coarse_coupling(&self, interior: &[f64]) -> [f64; 3] {
        let c = self.coupling_matrix();
        std::array::from_fn(|i| (0..c.ncols()).map(|k| c[(i, k)] * interior[k]).sum())
    }

    fn coupling_matrix(&self) -> DMatrix<f64> {
        // (3 x n_I): rows Lambda_i' S restricted to interior columns
        let lt_s = self.basis.transpose() * &self.stiffness;
        let interior = self.submesh.interior_nodes();
        DMatrix::from_fn(3, interior.len(), |i, k| lt_s[(i, interior[k])])
    }

    fn interior_block(&self) -> DMatrix<f64> {
        let interior = self.submesh.interior_nodes();
        DMatrix::from_fn(interior.len(), interior.len(), |a, b| self.stiffness[(interior[a], interior[b])])
    }

    /// `(S v)_I - g_I` for a full sub-mesh vector `v`.
    fn interior_residual(&self, full: &[f64]) -> Vec<f64> {
        let sv = &self.stiffness * DVector::from_column_slice(full);
        self.submesh
            .interior_nodes()
            .iter()
            .map(|&n| sv[n] - self.load[n])
            .collect()
    }

    /// Solves `S_II x = rhs_I - (S w)_I` for the bubble of a given coarse
    /// part `w` (full nodal vector) with a right-hand side scaled by
    /// `load_scale` (1 to include the load, 0 to drop it).
    pub fn solve_bubble(&self, coarse_full: &[f64], load_scale: f64) -> Result<Vec<f64>> {
        let sw = &self.stiffness * DVector::from_column_slice(coarse_full);
        let rhs: Vec<f64> = self
            .submesh
            .interior_nodes()
            .iter()
            .map(|&n| load_scale * self.load[n] - sw[n])
            .collect();
        let sol = solve_interior(&self.interior_block(), &[rhs])?;
        Ok(sol.into_iter().next().expect("one right-hand side"))
    }
}

fn solve_interior(a: &DMatrix<f64>, rhs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = a.nrows();
    if n == 0 {
        return Err(Error::EmptyBubbleSpace { m: 0 });
    }
    if n < LOCAL_DENSE_LIMIT {
        let chol = a.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
        Ok(rhs
            .iter()
            .map(|r| chol.solve(&DVector::from_column_slice(r)).as_slice().to_vec())
            .collect())
    } else {
        let csr = CsrMatrix::from_dense(a);
        rhs.iter()
            .map(|r| crate::fem::pcg(&csr, r, LOCAL_SOLVER_TOL * 1e-2, 10 * n + 100).map(|(x, _)| x))
            .collect()
    }
}

/// Responses of the local solution operator on one coarse element: to the
/// load (`b_f`) and to each coarse basis function (`b_basis[i]`), stored on
/// the interior nodes only. Boundary values are zero by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct BubbleLifts {
    parent: usize,
    snapshot: SnapshotId,
    pub b_f: Vec<f64>,
    pub b_basis: [Vec<f64>; 3],
}

impl BubbleLifts {
    pub fn parent(&self) -> usize {
        self.parent
    }

    pub fn snapshot(&self) -> SnapshotId {
        self.snapshot
    }

    /// Embeds an interior vector into a full sub-mesh vector with exact
    /// zeros on the boundary nodes.
    pub fn to_full(submesh: &SubMesh, interior: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; submesh.num_nodes()];
        for (k, &n) in submesh.interior_nodes().iter().enumerate() {
            full[n] = interior[k];
        }
        full
    }
}

/// Solves `S_II B_f = g_I` and `S_II B_i = -(S Lambda_i)_I`, so that
/// `phi_i + B_i` is the discrete local lift of the coarse basis function.
pub fn solve_local_lifts(system: &LocalSystem) -> Result<BubbleLifts> {
    let sub = system.submesh;
    if sub.num_interior() == 0 {
        return Err(Error::EmptyBubbleSpace { m: sub.resolution() });
    }
    let interior = sub.interior_nodes();
    let sl = &system.stiffness * &system.basis;
    let mut rhs = vec![interior.iter().map(|&n| system.load[n]).collect::<Vec<_>>()];
    for i in 0..3 {
        rhs.push(interior.iter().map(|&n| -sl[(n, i)]).collect());
    }
    let mut sols = solve_interior(&system.interior_block(), &rhs)?.into_iter();
    let b_f = sols.next().expect("load lift");
    let b_basis = [
        sols.next().expect("lift 0"),
        sols.next().expect("lift 1"),
        sols.next().expect("lift 2"),
    ];
    Ok(BubbleLifts {
        parent: sub.parent(),
        snapshot: system.snapshot,
        b_f,
        b_basis,
    })
}

/// Element correction of the coarse system produced by eliminating the
/// bubble unknowns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CondensedContribution {
    pub matrix: [[f64; 3]; 3],
    pub rhs: [f64; 3],
}

impl CondensedContribution {
    pub fn max_abs(&self) -> f64 {
        self.matrix
            .iter()
            .flatten()
            .chain(self.rhs.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// `M_ij = int_K kappa grad B_j . grad phi_i`, `r_i = -int_K kappa grad B_f . grad phi_i`.
pub fn condense(lifts: &BubbleLifts, system: &LocalSystem) -> Result<CondensedContribution> {
    if lifts.snapshot != system.snapshot || lifts.parent != system.submesh.parent() {
        return Err(Error::SnapshotMismatch {
            lifts: lifts.snapshot.0,
            system: system.snapshot.0,
        });
    }
    let c = system.coupling_matrix();
    let mut matrix = [[0.0; 3]; 3];
    let mut rhs = [0.0; 3];
    for i in 0..3 {
        for j in 0..3 {
            matrix[i][j] = (0..c.ncols()).map(|k| c[(i, k)] * lifts.b_basis[j][k]).sum();
        }
        rhs[i] = -(0..c.ncols()).map(|k| c[(i, k)] * lifts.b_f[k]).sum::<f64>();
    }
    Ok(CondensedContribution { matrix, rhs })
}

/// `u_b = B_f + sum_i uh_i B_i` on the interior nodes.
pub fn recover_bubble(lifts: &BubbleLifts, uh_local: [f64; 3]) -> Vec<f64> {
    let mut out = lifts.b_f.clone();
    for (i, &u) in uh_local.iter().enumerate() {
        for (o, b) in out.iter_mut().zip(&lifts.b_basis[i]) {
            *o += u * b;
        }
    }
    out
}

/// `|psi_j|_{H1}` for every interior hat function of the sub-mesh.
pub fn bubble_basis_seminorms(submesh: &SubMesh) -> Vec<f64> {
    let mut sq = vec![0.0; submesh.num_nodes()];
    for (t, tri) in submesh.triangles().iter().enumerate() {
        let (g, area) = p1_gradients(submesh.vertices(t));
        for a in 0..3 {
            sq[tri[a]] += area * (g[a][0] * g[a][0] + g[a][1] * g[a][1]);
        }
    }
    submesh.interior_nodes().iter().map(|&n| sq[n].sqrt()).collect()
}

/// Largest normalised residual `|int kappa grad u . grad psi - int f psi| / |psi|_{H1}`
/// over the interior hat functions, for a full local composite vector
/// `u = u_h + u_b`.
pub fn residual_free_check(system: &LocalSystem, local_values: &[f64]) -> f64 {
    let r = system.interior_residual(local_values);
    let norms = bubble_basis_seminorms(system.submesh);
    r.iter().zip(&norms).fold(0.0f64, |m, (r, n)| m.max(r.abs() / n))
}

/// Verification path: solves the full two-level system without
/// condensation, by dense Cholesky. Returns the coarse nodal values and the
/// interior bubble vectors per element.
pub fn monolithic_solve(coarse: &Mesh, systems: &[LocalSystem]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let dofs = DofMap::dirichlet(coarse);
    let nc = dofs.len();
    let mut offsets = Vec::with_capacity(systems.len());
    let mut total = nc;
    for s in systems {
        offsets.push(total);
        total += s.submesh.num_interior();
    }
    let mut a = DMatrix::<f64>::zeros(total, total);
    let mut rhs = DVector::<f64>::zeros(total);
    for (s, &off) in systems.iter().zip(&offsets) {
        let k = s.submesh.parent();
        let tri = coarse.triangles()[k];
        let coarse_dof: [Option<usize>; 3] = std::array::from_fn(|i| dofs.dof(tri[i]));
        let (block, load) = s.standard_block();
        let coupling = s.coupling_matrix();
        let interior = s.interior_block();
        for i in 0..3 {
            let Some(gi) = coarse_dof[i] else { continue };
            rhs[gi] += load[i];
            for j in 0..3 {
                if let Some(gj) = coarse_dof[j] {
                    a[(gi, gj)] += block[i][j];
                }
            }
            for kk in 0..coupling.ncols() {
                a[(gi, off + kk)] += coupling[(i, kk)];
                a[(off + kk, gi)] += coupling[(i, kk)];
            }
        }
        for (p, &n) in s.submesh.interior_nodes().iter().enumerate() {
            rhs[off + p] += s.load[n];
            for q in 0..interior.ncols() {
                a[(off + p, off + q)] += interior[(p, q)];
            }
        }
    }
    let x = a.cholesky().ok_or(Error::NotPositiveDefinite)?.solve(&rhs);
    let coarse_values = dofs.expand(&x.as_slice()[..nc]);
    let bubbles = systems
        .iter()
        .zip(&offsets)
        .map(|(s, &off)| x.as_slice()[off..off + s.submesh.num_interior()].to_vec())
        .collect();
    Ok((coarse_values, bubbles))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::quad_rule;
    use crate::mesh::{build_submesh, generate_structured, Mesh};

    fn unit_triangle() -> Mesh {
        Mesh::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]]).unwrap()
    }

    fn system<'a>(sub: &'a SubMesh, kappa: impl Fn(Point) -> f64, f: impl Fn(Point) -> f64) -> LocalSystem<'a> {
        let rule = quad_rule(2).unwrap();
        let k = LocalCoefficient::sample(sub, &rule, SnapshotId::fresh(), |_, _, x| Ok(kappa(x))).unwrap();
        let fq = sample_at_quadrature(sub, &rule, f);
        LocalSystem::assemble(sub, &rule, &k, &fq)
    }

    #[test]
    fn constant_coefficient_lifts_vanish() {
        let mesh = generate_structured(2).unwrap();
        let sub = build_submesh(&mesh, 3, 6).unwrap();
        let s = system(&sub, |_| 2.5, |p| 1.0 + p[0]);
        let lifts = solve_local_lifts(&s).unwrap();
        for b in &lifts.b_basis {
            assert!(b.iter().all(|v| v.abs() < 1e-13));
        }
        assert!(lifts.b_f.iter().any(|v| v.abs() > 1e-6));
        let c = condense(&lifts, &s).unwrap();
        assert!(c.max_abs() < 1e-12, "{c:?}");
    }

    #[test]
    fn zero_load_gives_zero_lift() {
        let mesh = unit_triangle();
        let sub = build_submesh(&mesh, 0, 5).unwrap();
        let s = system(&sub, |p| 1.0 + p[0] * p[1], |_| 0.0);
        let lifts = solve_local_lifts(&s).unwrap();
        assert!(lifts.b_f.iter().all(|&v| v == 0.0));
        let zero = BubbleLifts {
            b_f: vec![0.0; sub.num_interior()],
            b_basis: std::array::from_fn(|_| vec![0.0; sub.num_interior()]),
            ..lifts
        };
        assert_eq!(condense(&zero, &s).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn load_lift_matches_dense_elimination() {
        let mesh = unit_triangle();
        let sub = build_submesh(&mesh, 0, 4).unwrap();
        let s = system(&sub, |_| 1.0, |_| 1.0);
        let lifts = solve_local_lifts(&s).unwrap();
        // Independent path: LU on the interior block of the stiffness.
        let interior = sub.interior_nodes();
        let a = DMatrix::from_fn(interior.len(), interior.len(), |i, j| s.stiffness()[(interior[i], interior[j])]);
        let b = DVector::from_iterator(interior.len(), interior.iter().map(|&n| s.load()[n]));
        let x = a.lu().solve(&b).unwrap();
        for (got, want) in lifts.b_f.iter().zip(x.iter()) {
            assert!((got - want).abs() < 1e-10);
        }
    }

    #[test]
    fn correction_is_symmetric_negative_semidefinite() {
        let mesh = generate_structured(2).unwrap();
        let sub = build_submesh(&mesh, 1, 8).unwrap();
        let s = system(&sub, |p| 1.0 + 0.9 * (40.0 * p[0]).sin() * (37.0 * p[1]).cos(), |_| 1.0);
        let c = condense(&solve_local_lifts(&s).unwrap(), &s).unwrap();
        let m = nalgebra::Matrix3::from_fn(|i, j| c.matrix[i][j]);
        assert!((m - m.transpose()).abs().max() < 1e-12);
        let eig = nalgebra::SymmetricEigen::new(0.5 * (m + m.transpose())).eigenvalues;
        assert!(eig.iter().all(|&l| l <= 1e-12), "{eig}");
        assert!(eig.iter().any(|&l| l < -1e-8));
    }

    #[test]
    fn snapshot_mismatch_is_rejected() {
        let mesh = unit_triangle();
        let sub = build_submesh(&mesh, 0, 4).unwrap();
        let s1 = system(&sub, |_| 1.0, |_| 1.0);
        let s2 = system(&sub, |_| 1.0, |_| 1.0);
        let lifts = solve_local_lifts(&s1).unwrap();
        assert!(matches!(condense(&lifts, &s2), Err(Error::SnapshotMismatch { .. })));
    }

    #[test]
    fn recovery_is_affine() {
        let mesh = unit_triangle();
        let sub = build_submesh(&mesh, 0, 6).unwrap();
        let s = system(&sub, |p| 2.0 + p[0].sin(), |p| p[1]);
        let lifts = solve_local_lifts(&s).unwrap();
        assert_eq!(recover_bubble(&lifts, [0.0; 3]), lifts.b_f);
        let uh = [0.3, -1.2, 0.7];
        let one = recover_bubble(&lifts, uh);
        let two = recover_bubble(&lifts, uh.map(|u| 2.0 * u));
        for k in 0..sub.num_interior() {
            let lin: f64 = (0..3).map(|i| uh[i] * lifts.b_basis[i][k]).sum();
            assert!((two[k] - one[k] - lin).abs() < 1e-14);
        }
        let full = BubbleLifts::to_full(&sub, &one);
        assert!(sub.boundary_nodes().iter().all(|&n| full[n] == 0.0));
    }

    #[test]
    fn residual_free_probe() {
        let mesh = unit_triangle();
        let sub = build_submesh(&mesh, 0, 6).unwrap();
        let s = system(&sub, |p| 1.0 + 0.5 * (9.0 * p[0]).sin(), |_| 1.0);
        let lifts = solve_local_lifts(&s).unwrap();
        let uh = [0.0, 0.4, -0.2];
        let ub = recover_bubble(&lifts, uh);
        let mut local: Vec<f64> = (0..sub.num_nodes())
            .map(|n| (0..3).map(|i| uh[i] * sub.coarse_basis(n)[i]).sum())
            .collect();
        for (k, &n) in sub.interior_nodes().iter().enumerate() {
            local[n] += ub[k];
        }
        assert!(residual_free_check(&s, &local) <= 10.0 * LOCAL_SOLVER_TOL);
        local[sub.interior_nodes()[2]] += 1e-3;
        assert!(residual_free_check(&s, &local) > 10.0 * LOCAL_SOLVER_TOL);

        let s0 = system(&sub, |_| 3.0, |_| 0.0);
        assert!(residual_free_check(&s0, &vec![0.0; sub.num_nodes()]) < 1e-15);
    }

    #[test]
    fn solve_bubble_agrees_with_lifts() {
        let mesh = unit_triangle();
        let sub = build_submesh(&mesh, 0, 5).unwrap();
        let s = system(&sub, |p| 1.5 + p[0] * p[1], |p| p[0] - p[1]);
        let lifts = solve_local_lifts(&s).unwrap();
        let uh = [0.2, 0.9, -0.4];
        let coarse: Vec<f64> = (0..sub.num_nodes())
            .map(|n| (0..3).map(|i| uh[i] * sub.coarse_basis(n)[i]).sum())
            .collect();
        let direct = s.solve_bubble(&coarse, 1.0).unwrap();
        for (a, b) in direct.iter().zip(recover_bubble(&lifts, uh)) {
            assert!((a - b).abs() < 1e-12);
        }
        let c = s.coarse_coupling(&lifts.b_f);
        let r = condense(&lifts, &s).unwrap().rhs;
        for i in 0..3 {
            assert!((c[i] + r[i]).abs() < 1e-14);
        }
    }
}
