use nalgebra::DMatrix;

use crate::mesh::Mesh;

/// Numbering of the unknowns: mesh node <-> degree of freedom.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    node_to_dof: Vec<Option<usize>>,
    dof_to_node: Vec<usize>,
}

impl DofMap {
    /// Free nodes only; homogeneous Dirichlet nodes are eliminated.
    pub fn dirichlet(mesh: &Mesh) -> Self {
        Self::from_filter(mesh.num_nodes(), |i| !mesh.is_boundary(i))
    }

    /// Every node is a degree of freedom (no elimination).
    pub fn all(mesh: &Mesh) -> Self {
        Self::from_filter(mesh.num_nodes(), |_| true)
    }

    fn from_filter(n: usize, keep: impl Fn(usize) -> bool) -> Self {
        let mut node_to_dof = vec![None; n];
        let mut dof_to_node = Vec::new();
        for (i, slot) in node_to_dof.iter_mut().enumerate() {
            if keep(i) {
                *slot = Some(dof_to_node.len());
                dof_to_node.push(i);
            }
        }
        Self { node_to_dof, dof_to_node }
    }

    pub fn len(&self) -> usize {
        self.dof_to_node.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dof_to_node.is_empty()
    }

    pub fn num_nodes(&self) -> usize {
        self.node_to_dof.len()
    }

    pub fn dof(&self, node: usize) -> Option<usize> {
        self.node_to_dof[node]
    }

    pub fn node(&self, dof: usize) -> usize {
        self.dof_to_node[dof]
    }

    /// Nodal vector from free values, zero on eliminated nodes.
    pub fn expand(&self, free: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_nodes()];
        for (d, &node) in self.dof_to_node.iter().enumerate() {
            out[node] = free[d];
        }
        out
    }

    pub fn restrict(&self, nodal: &[f64]) -> Vec<f64> {
        self.dof_to_node.iter().map(|&n| nodal[n]).collect()
    }
}

/// Compressed sparse row matrix with a fixed pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Zero matrix whose pattern couples every pair of DOFs sharing a
    /// triangle.
    pub fn pattern_from_mesh(mesh: &Mesh, dofs: &DofMap) -> Self {
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); dofs.len()];
        for tri in mesh.triangles() {
            let d: Vec<usize> = tri.iter().filter_map(|&n| dofs.dof(n)).collect();
            for &i in &d {
                rows[i].extend_from_slice(&d);
            }
        }
        Self::from_rows(rows)
    }

    /// Zero matrix with the given column lists (duplicates allowed).
    pub fn from_rows(mut rows: Vec<Vec<usize>>) -> Self {
        let nrows = rows.len();
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for (i, r) in rows.iter_mut().enumerate() {
            r.push(i);
            r.sort_unstable();
            r.dedup();
            col_idx.extend_from_slice(r);
            row_ptr.push(col_idx.len());
        }
        let values = vec![0.0; col_idx.len()];
        Self {
            nrows,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::from_rows(vec![Vec::new(); n]);
        for i in 0..n {
            m.add(i, i, 1.0);
        }
        m
    }

    pub fn from_dense(a: &DMatrix<f64>) -> Self {
        let rows = (0..a.nrows())
            .map(|i| (0..a.ncols()).filter(|&j| a[(i, j)] != 0.0).collect())
            .collect();
        let mut m = Self::from_rows(rows);
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                if a[(i, j)] != 0.0 {
                    m.add(i, j, a[(i, j)]);
                }
            }
        }
        m
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    fn position(&self, i: usize, j: usize) -> Option<usize> {
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.col_idx[lo..hi].binary_search(&j).ok().map(|k| lo + k)
    }

    /// Adds `v` at `(i, j)`; the entry must be in the pattern.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self
            .position(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) is not in the sparsity pattern"));
        self.values[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |k| self.values[k])
    }

    pub fn clear(&mut self) {
        self.values.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.col_idx[lo..hi].iter().copied().zip(self.values[lo..hi].iter().copied())
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
            let mut s = 0.0;
            for k in lo..hi {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *yi = s;
        }
    }

    /// Largest `|a_ij - a_ji|` over stored entries.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.nrows, self.nrows);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                a[(i, j)] = v;
            }
        }
        a
    }
}

/// Linear system over the free DOFs.
#[derive(Debug, Clone)]
pub struct SparseSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub dofs: DofMap,
}
