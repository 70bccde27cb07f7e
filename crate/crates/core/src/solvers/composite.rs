use std::sync::Arc;

use crate::fem::{p1_gradients, DiscreteFunction, DofMap, QuadRule};
use crate::mesh::{build_submesh, Mesh, Point, PointLocator, SubMesh};
use crate::{Error, Result};

/// Coarse P1 space enriched with one bubble space per coarse element.
///
/// Holds the sub-meshes, the coarse DOF numbering, the quadrature rule used
/// on the sub-meshes and the union mesh on which composite functions are
/// exactly representable as P1 functions.
#[derive(Debug)]
pub struct CompositeSpace {
    coarse: Arc<Mesh>,
    m: usize,
    rule: QuadRule,
    submeshes: Vec<SubMesh>,
    dofs: DofMap,
    gradients: Vec<Vec<([[f64; 2]; 3], f64)>>,
    union: Arc<Mesh>,
    local_to_union: Vec<Vec<usize>>,
    locator: PointLocator,
}

impl CompositeSpace {
    pub fn new(coarse: Arc<Mesh>, m: usize, rule: QuadRule) -> Result<Self> {
        let submeshes = (0..coarse.num_triangles())
            .map(|k| build_submesh(&coarse, k, m))
            .collect::<Result<Vec<_>>>()?;
        let gradients = submeshes
            .iter()
            .map(|s| (0..s.triangles().len()).map(|t| p1_gradients(s.vertices(t))).collect())
            .collect();
        let (union, local_to_union) = union_mesh(&coarse, &submeshes, m)?;
        Ok(Self {
            dofs: DofMap::dirichlet(&coarse),
            locator: PointLocator::new(&coarse),
            coarse,
            m,
            rule,
            submeshes,
            gradients,
            union: Arc::new(union),
            local_to_union,
        })
    }

    pub fn coarse(&self) -> &Arc<Mesh> {
        &self.coarse
    }

    pub fn resolution(&self) -> usize {
        self.m
    }

    pub fn rule(&self) -> &QuadRule {
        &self.rule
    }

    pub fn submeshes(&self) -> &[SubMesh] {
        &self.submeshes
    }

    pub fn submesh(&self, k: usize) -> &SubMesh {
        &self.submeshes[k]
    }

    pub fn coarse_dofs(&self) -> &DofMap {
        &self.dofs
    }

    pub fn union_mesh(&self) -> &Arc<Mesh> {
        &self.union
    }

    /// Union-mesh node of each sub-mesh node of element `k`.
    pub fn local_to_union(&self, k: usize) -> &[usize] {
        &self.local_to_union[k]
    }

    /// Total number of unknowns (free coarse plus bubble).
    pub fn num_dofs(&self) -> usize {
        self.dofs.len() + self.submeshes.iter().map(SubMesh::num_interior).sum::<usize>()
    }

    pub(crate) fn coarse_local(&self, k: usize, coarse: &[f64]) -> [f64; 3] {
        self.coarse.triangles()[k].map(|n| coarse[n])
    }

    /// Full sub-mesh vector of the coarse part on element `k`.
    pub fn coarse_on_submesh(&self, k: usize, coarse: &[f64]) -> Vec<f64> {
        let u = self.coarse_local(k, coarse);
        let sub = &self.submeshes[k];
        (0..sub.num_nodes())
            .map(|n| {
                let l = sub.coarse_basis(n);
                l[0] * u[0] + l[1] * u[1] + l[2] * u[2]
            })
            .collect()
    }

    /// Full sub-mesh vector of `u_h + u_b` on element `k`.
    pub fn local_values(&self, k: usize, coarse: &[f64], bubble: &[f64]) -> Vec<f64> {
        let mut v = self.coarse_on_submesh(k, coarse);
        for (&n, b) in self.submeshes[k].interior_nodes().iter().zip(bubble) {
            v[n] += b;
        }
        v
    }

    /// Values of a local nodal vector at the quadrature points, triangle-major.
    pub(crate) fn at_quadrature(&self, k: usize, local: &[f64]) -> Vec<f64> {
        let sub = &self.submeshes[k];
        let mut out = Vec::with_capacity(sub.triangles().len() * self.rule.len());
        for tri in sub.triangles() {
            for l in self.rule.points() {
                out.push(l[0] * local[tri[0]] + l[1] * local[tri[1]] + l[2] * local[tri[2]]);
            }
        }
        out
    }

    /// `|v|_{H1(K)}^2` of a local nodal vector.
    pub(crate) fn local_seminorm_sq(&self, k: usize, local: &[f64]) -> f64 {
        let sub = &self.submeshes[k];
        sub.triangles()
            .iter()
            .zip(&self.gradients[k])
            .map(|(tri, (g, area))| {
                let (mut gx, mut gy) = (0.0, 0.0);
                for a in 0..3 {
                    gx += local[tri[a]] * g[a][0];
                    gy += local[tri[a]] * g[a][1];
                }
                area * (gx * gx + gy * gy)
            })
            .sum()
    }

    /// `|u_h + u_b|_{H1}` over the whole domain.
    pub fn h1_seminorm(&self, coarse: &[f64], bubbles: &[Vec<f64>]) -> f64 {
        (0..self.submeshes.len())
            .map(|k| self.local_seminorm_sq(k, &self.local_values(k, coarse, &bubbles[k])))
            .sum::<f64>()
            .sqrt()
    }

    /// Nodal values of `u_h + u_b` on the union mesh.
    pub fn to_union(&self, coarse: &[f64], bubbles: &[Vec<f64>]) -> Result<DiscreteFunction> {
        if coarse.len() != self.coarse.num_nodes() || bubbles.len() != self.submeshes.len() {
            return Err(Error::invalid("composite data does not match the space"));
        }
        let mut values = vec![0.0; self.union.num_nodes()];
        for k in 0..self.submeshes.len() {
            let local = self.local_values(k, coarse, &bubbles[k]);
            for (&u, v) in self.local_to_union[k].iter().zip(local) {
                values[u] = v;
            }
        }
        DiscreteFunction::new(self.union.clone(), values)
    }

    /// Point value of `u_h + u_b`; `None` outside the coarse mesh.
    pub fn evaluate(&self, coarse: &[f64], bubbles: &[Vec<f64>], p: Point) -> Option<f64> {
        let (k, _) = self.locator.locate(&self.coarse, p)?;
        let sub = &self.submeshes[k];
        let [a, b, c] = self.coarse.vertices(k);
        let l = crate::mesh::barycentric(a, b, c, p);
        let t = sub.locate(l[1], l[2]);
        let [p0, p1, p2] = sub.vertices(t);
        let w = crate::mesh::barycentric(p0, p1, p2, p);
        let local = self.local_values(k, coarse, &bubbles[k]);
        let tri = sub.triangles()[t];
        Some((0..3).map(|i| w[i] * local[tri[i]]).sum())
    }
}

/// Conforming union of all sub-meshes. Coarse vertices keep their indices,
/// edge nodes are numbered per coarse edge, interior nodes per element.
fn union_mesh(coarse: &Mesh, subs: &[SubMesh], m: usize) -> Result<(Mesh, Vec<Vec<usize>>)> {
    let (edges, edge_index) = coarse.edges();
    let nc = coarse.num_nodes();
    let edge_base = |e: usize| nc + e * (m - 1);
    let mut next = nc + edges.len() * (m - 1);
    let mut nodes = vec![[0.0; 2]; next];
    nodes[..nc].copy_from_slice(coarse.nodes());
    let mut maps = Vec::with_capacity(subs.len());
    for (k, sub) in subs.iter().enumerate() {
        let tri = coarse.triangles()[k];
        let mut map = vec![0; sub.num_nodes()];
        for (node, slot) in map.iter_mut().enumerate() {
            let (i, j) = sub.grid(node);
            let w = [m - i - j, i, j];
            let nonzero: Vec<usize> = (0..3).filter(|&v| w[v] != 0).collect();
            *slot = match nonzero.len() {
                1 => tri[nonzero[0]],
                2 => {
                    let (p, q) = (tri[nonzero[0]], tri[nonzero[1]]);
                    let (lo, hi, w_hi) = if p < q {
                        (p, q, w[nonzero[1]])
                    } else {
                        (q, p, w[nonzero[0]])
                    };
                    let e = edge_index[&(lo, hi)];
                    let id = edge_base(e) + w_hi - 1;
                    nodes[id] = sub.nodes()[node];
                    id
                }
                _ => {
                    nodes.push(sub.nodes()[node]);
                    next += 1;
                    next - 1
                }
            };
        }
        maps.push(map);
    }
    let triangles = subs
        .iter()
        .zip(&maps)
        .flat_map(|(s, map)| s.triangles().iter().map(move |t| t.map(|n| map[n])))
        .collect();
    Ok((Mesh::new(nodes, triangles)?, maps))
}

/// Which scheme produced a solution and how it was started.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub scheme: String,
    pub iterations: usize,
    pub initial_guess: String,
}

/// `u_h + u_b`: coarse nodal values and interior bubble vectors per element.
#[derive(Debug, Clone)]
pub struct CompositeSolution {
    pub space: Arc<CompositeSpace>,
    pub coarse: DiscreteFunction,
    pub bubbles: Vec<Vec<f64>>,
    pub provenance: Provenance,
}

impl CompositeSolution {
    pub fn local_values(&self, k: usize) -> Vec<f64> {
        self.space.local_values(k, self.coarse.values(), &self.bubbles[k])
    }

    pub fn to_union(&self) -> Result<DiscreteFunction> {
        self.space.to_union(self.coarse.values(), &self.bubbles)
    }

    pub fn evaluate(&self, p: Point) -> Option<f64> {
        self.space.evaluate(self.coarse.values(), &self.bubbles, p)
    }

    pub fn h1_seminorm(&self) -> f64 {
        self.space.h1_seminorm(self.coarse.values(), &self.bubbles)
    }
}
