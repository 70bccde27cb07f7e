//! Triangulations of the unit square, uniform refinement, per-element
//! sub-meshes and nested P1 transfer.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::{Error, Result};

pub type Point = [f64; 2];

/// Signed area of the triangle `(a, b, c)`; positive for counter-clockwise.
pub fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

/// Barycentric coordinates of `p` with respect to `(a, b, c)`.
pub fn barycentric(a: Point, b: Point, c: Point, p: Point) -> [f64; 3] {
    let area = signed_area(a, b, c);
    let l0 = signed_area(p, b, c) / area;
    let l1 = signed_area(a, p, c) / area;
    [l0, l1, 1.0 - l0 - l1]
}

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// A conforming triangulation with counter-clockwise triangles.
///
/// The same type serves as coarse mesh, fine reference mesh and the glued
/// union of sub-meshes; all of them are immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    nodes: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary_nodes: Vec<usize>,
    on_boundary: Vec<bool>,
    h: f64,
}

impl Mesh {
    /// Builds a mesh and derives the boundary from edges used by a single
    /// triangle.
    pub fn new(nodes: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        Self::build(nodes, triangles, None)
    }

    /// Builds a mesh with an explicit boundary node list, which must match
    /// the set of nodes incident to boundary edges.
    pub fn with_boundary(
        nodes: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        boundary: Vec<usize>,
    ) -> Result<Self> {
        Self::build(nodes, triangles, Some(boundary))
    }

    fn build(
        nodes: Vec<Point>,
        mut triangles: Vec<[usize; 3]>,
        boundary: Option<Vec<usize>>,
    ) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::InvalidMesh("mesh has no triangles".into()));
        }
        let n = nodes.len();
        let mut h: f64 = 0.0;
        for (t, tri) in triangles.iter_mut().enumerate() {
            if tri.iter().any(|&i| i >= n) {
                return Err(Error::InvalidMesh(format!(
                    "triangle {t} references a node outside 0..{n}"
                )));
            }
            let [a, b, c] = tri.map(|i| nodes[i]);
            let diam = dist(a, b).max(dist(b, c)).max(dist(c, a));
            let area = signed_area(a, b, c);
            if area.abs() <= 1e-14 * diam * diam || !area.is_finite() {
                return Err(Error::InvalidMesh(format!(
                    "triangle {t} is degenerate (area {area:e})"
                )));
            }
            if area < 0.0 {
                tri.swap(1, 2);
            }
            h = h.max(diam);
        }

        let mut edge_count: HashMap<(usize, usize), usize> = HashMap::new();
        for tri in &triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                *edge_count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        let mut on_boundary = vec![false; n];
        for (&(a, b), &count) in &edge_count {
            if count > 2 {
                return Err(Error::InvalidMesh(format!(
                    "edge ({a}, {b}) is shared by {count} triangles"
                )));
            }
            if count == 1 {
                on_boundary[a] = true;
                on_boundary[b] = true;
            }
        }
        let derived: Vec<usize> = (0..n).filter(|&i| on_boundary[i]).collect();
        if let Some(mut given) = boundary {
            given.sort_unstable();
            given.dedup();
            if given != derived {
                return Err(Error::InvalidMesh(
                    "boundary node list does not match the nodes on boundary edges".into(),
                ));
            }
        }
        Ok(Mesh {
            nodes,
            triangles,
            boundary_nodes: derived,
            on_boundary,
            h,
        })
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    /// Sorted indices of nodes on the domain boundary.
    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary_nodes
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.on_boundary[node]
    }

    /// Maximum element diameter.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertices(&self, t: usize) -> [Point; 3] {
        self.triangles[t].map(|i| self.nodes[i])
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.vertices(t);
        signed_area(a, b, c)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_triangles()).map(|t| self.area(t)).sum()
    }

    /// Unique undirected edges, each as `(low, high)` node pair, together
    /// with the index of every edge by pair.
    pub fn edges(&self) -> (Vec<(usize, usize)>, HashMap<(usize, usize), usize>) {
        let mut list = Vec::new();
        let mut index = HashMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                index.entry(key).or_insert_with(|| {
                    list.push(key);
                    list.len() - 1
                });
            }
        }
        (list, index)
    }

    /// Reads the plain-text mesh format: a `nodes N triangles T` header,
    /// `N` coordinate lines, `T` index lines and one boundary line.
    pub fn read_text<R: BufRead>(reader: R) -> Result<Mesh> {
        let (mesh, _) = read_mesh_lines(&mut numbered_lines(reader)?.into_iter(), false)?;
        Ok(mesh)
    }

    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "nodes {} triangles {}",
            self.num_nodes(),
            self.num_triangles()
        )?;
        for p in &self.nodes {
            writeln!(w, "{} {}", p[0], p[1])?;
        }
        for t in &self.triangles {
            writeln!(w, "{} {} {}", t[0], t[1], t[2])?;
        }
        let line: Vec<String> = self.boundary_nodes.iter().map(|i| i.to_string()).collect();
        writeln!(w, "{}", line.join(" "))?;
        Ok(())
    }
}

fn numbered_lines<R: BufRead>(reader: R) -> Result<Vec<(usize, String)>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

fn parse_fields<T: std::str::FromStr>(line: usize, text: &str, count: usize) -> Result<Vec<T>> {
    let fields: Vec<&str> = text.split_whitespace().collect();
    if fields.len() != count {
        return Err(Error::Parse {
            line,
            message: format!("expected {count} fields, found {}", fields.len()),
        });
    }
    fields
        .iter()
        .map(|f| {
            f.parse::<T>().map_err(|_| Error::Parse {
                line,
                message: format!("cannot parse `{f}`"),
            })
        })
        .collect()
}

fn read_mesh_lines(
    lines: &mut impl Iterator<Item = (usize, String)>,
    with_values: bool,
) -> Result<(Mesh, Vec<f64>)> {
    let eof = || Error::Parse {
        line: 0,
        message: "unexpected end of file".into(),
    };
    let (ln, header) = lines.next().ok_or_else(eof)?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 4 || parts[0] != "nodes" || parts[2] != "triangles" {
        return Err(Error::Parse {
            line: ln,
            message: "expected header `nodes <N> triangles <T>`".into(),
        });
    }
    let count = |s: &str| {
        s.parse::<usize>().map_err(|_| Error::Parse {
            line: ln,
            message: format!("bad count `{s}`"),
        })
    };
    let (n, t) = (count(parts[1])?, count(parts[3])?);
    let mut nodes = Vec::with_capacity(n);
    for _ in 0..n {
        let (ln, text) = lines.next().ok_or_else(eof)?;
        let v: Vec<f64> = parse_fields(ln, &text, 2)?;
        nodes.push([v[0], v[1]]);
    }
    let mut triangles = Vec::with_capacity(t);
    for _ in 0..t {
        let (ln, text) = lines.next().ok_or_else(eof)?;
        let v: Vec<usize> = parse_fields(ln, &text, 3)?;
        triangles.push([v[0], v[1], v[2]]);
    }
    let (ln, text) = lines.next().ok_or_else(eof)?;
    let boundary = text
        .split_whitespace()
        .map(|f| {
            f.parse::<usize>().map_err(|_| Error::Parse {
                line: ln,
                message: format!("cannot parse boundary index `{f}`"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mesh = Mesh::with_boundary(nodes, triangles, boundary)?;
    let mut values = Vec::new();
    if with_values {
        for _ in 0..n {
            let (ln, text) = lines.next().ok_or_else(eof)?;
            let v: Vec<f64> = parse_fields(ln, &text, 1)?;
            values.push(v[0]);
        }
    }
    Ok((mesh, values))
}

/// Writes a solution dump: the mesh text format followed by one nodal value
/// per line.
pub fn write_solution<W: Write>(mesh: &Mesh, values: &[f64], mut w: W) -> Result<()> {
    if values.len() != mesh.num_nodes() {
        return Err(Error::invalid("value count does not match node count"));
    }
    mesh.write_text(&mut w)?;
    for v in values {
        writeln!(w, "{v}")?;
    }
    Ok(())
}

pub fn read_solution<R: BufRead>(reader: R) -> Result<(Mesh, Vec<f64>)> {
    read_mesh_lines(&mut numbered_lines(reader)?.into_iter(), true)
}

/// Uniform `n x n` grid of the unit square, each cell cut along its
/// `(0,0)-(1,1)` diagonal.
pub fn generate_structured(n: usize) -> Result<Mesh> {
    if n == 0 {
        return Err(Error::invalid("structured mesh needs n >= 1"));
    }
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let mut nodes = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            nodes.push([i as f64 / n as f64, j as f64 / n as f64]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    Mesh::new(nodes, triangles)
}

/// Splits every triangle into four through its edge midpoints, `levels`
/// times.
pub fn refine_uniform(mesh: &Mesh, levels: usize) -> Result<Mesh> {
    let mut current = mesh.clone();
    for _ in 0..levels {
        let mut nodes = current.nodes.clone();
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, nodes: &mut Vec<Point>| -> usize {
            *midpoint.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let (p, q) = (nodes[a], nodes[b]);
                nodes.push([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]);
                nodes.len() - 1
            })
        };
        let mut triangles = Vec::with_capacity(4 * current.num_triangles());
        for &[a, b, c] in &current.triangles {
            let ab = mid(a, b, &mut nodes);
            let bc = mid(b, c, &mut nodes);
            let ca = mid(c, a, &mut nodes);
            triangles.push([a, ab, ca]);
            triangles.push([ab, b, bc]);
            triangles.push([ca, bc, c]);
            triangles.push([ab, bc, ca]);
        }
        current = Mesh::new(nodes, triangles)?;
    }
    Ok(current)
}

/// Barycentric-grid refinement of one coarse triangle.
///
/// Node `(i, j)` with `i + j <= m` sits at `v0 + (i/m)(v1 - v0) + (j/m)(v2 - v0)`,
/// so the coarse barycentric coordinates of every node are exact multiples
/// of `1/m`. Interior nodes carry the bubble degrees of freedom.
#[derive(Debug, Clone)]
pub struct SubMesh {
    parent: usize,
    m: usize,
    nodes: Vec<Point>,
    grid: Vec<(usize, usize)>,
    triangles: Vec<[usize; 3]>,
    interior_nodes: Vec<usize>,
    boundary_nodes: Vec<usize>,
    interior_index: Vec<Option<usize>>,
    up: Vec<usize>,
    down: Vec<usize>,
}

impl SubMesh {
    pub fn parent(&self) -> usize {
        self.parent
    }

    /// Subdivisions per coarse edge.
    pub fn resolution(&self) -> usize {
        self.m
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior_nodes
    }

    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary_nodes
    }

    /// Position of `node` among the interior (bubble) unknowns.
    pub fn interior_index(&self, node: usize) -> Option<usize> {
        self.interior_index[node]
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_interior(&self) -> usize {
        self.interior_nodes.len()
    }

    /// Grid coordinates `(i, j)` of a node.
    pub fn grid(&self, node: usize) -> (usize, usize) {
        self.grid[node]
    }

    /// Coarse barycentric coordinates of a node, i.e. the values of the
    /// three local coarse basis functions there.
    pub fn coarse_basis(&self, node: usize) -> [f64; 3] {
        let (i, j) = self.grid[node];
        let m = self.m as f64;
        let (l1, l2) = (i as f64 / m, j as f64 / m);
        [((self.m - i - j) as f64) / m, l1, l2]
    }

    pub fn vertices(&self, t: usize) -> [Point; 3] {
        self.triangles[t].map(|i| self.nodes[i])
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.vertices(t);
        signed_area(a, b, c)
    }

    fn node_index(m: usize, i: usize, j: usize) -> usize {
        j * (m + 1) - j * (j.saturating_sub(1)) / 2 + i
    }

    /// Fine triangle containing the point with coarse barycentric
    /// coordinates `(l1, l2)` (weights of the second and third vertex).
    pub fn locate(&self, l1: f64, l2: f64) -> usize {
        let m = self.m;
        let (s, t) = (l1 * m as f64, l2 * m as f64);
        let j = (t.floor().max(0.0) as usize).min(m - 1);
        let i = (s.floor().max(0.0) as usize).min(m - 1 - j);
        let (fs, ft) = (s - i as f64, t - j as f64);
        let node = Self::node_index(m, i, j);
        if fs + ft > 1.0 && i + j + 2 <= m {
            self.down[node]
        } else {
            self.up[node]
        }
    }
}

/// Sub-mesh of coarse triangle `k` with `m` subdivisions per edge.
///
/// `m < 3` leaves no interior node and is rejected.
pub fn build_submesh(mesh: &Mesh, k: usize, m: usize) -> Result<SubMesh> {
    if k >= mesh.num_triangles() {
        return Err(Error::invalid(format!("triangle index {k} out of range")));
    }
    if m < 3 {
        return Err(Error::EmptyBubbleSpace { m });
    }
    let [v0, v1, v2] = mesh.vertices(k);
    let mf = m as f64;
    let count = (m + 1) * (m + 2) / 2;
    let mut nodes = Vec::with_capacity(count);
    let mut grid = Vec::with_capacity(count);
    let mut interior_nodes = Vec::new();
    let mut boundary_nodes = Vec::new();
    let mut interior_index = Vec::with_capacity(count);
    for j in 0..=m {
        for i in 0..=(m - j) {
            let (a, b) = (i as f64 / mf, j as f64 / mf);
            nodes.push([
                v0[0] + a * (v1[0] - v0[0]) + b * (v2[0] - v0[0]),
                v0[1] + a * (v1[1] - v0[1]) + b * (v2[1] - v0[1]),
            ]);
            grid.push((i, j));
            let idx = nodes.len() - 1;
            if i == 0 || j == 0 || i + j == m {
                boundary_nodes.push(idx);
                interior_index.push(None);
            } else {
                interior_index.push(Some(interior_nodes.len()));
                interior_nodes.push(idx);
            }
        }
    }
    let at = |i, j| SubMesh::node_index(m, i, j);
    let mut triangles = Vec::with_capacity(m * m);
    let mut up = vec![usize::MAX; count];
    let mut down = vec![usize::MAX; count];
    for j in 0..m {
        for i in 0..(m - j) {
            up[at(i, j)] = triangles.len();
            triangles.push([at(i, j), at(i + 1, j), at(i, j + 1)]);
            if i + j + 2 <= m {
                down[at(i, j)] = triangles.len();
                triangles.push([at(i + 1, j), at(i + 1, j + 1), at(i, j + 1)]);
            }
        }
    }
    Ok(SubMesh {
        parent: k,
        m,
        nodes,
        grid,
        triangles,
        interior_nodes,
        boundary_nodes,
        interior_index,
        up,
        down,
    })
}

/// Bucket grid over triangle bounding boxes for point location.
#[derive(Debug, Clone)]
pub struct PointLocator {
    origin: Point,
    cell: [f64; 2],
    dims: [usize; 2],
    buckets: Vec<Vec<usize>>,
}

impl PointLocator {
    pub fn new(mesh: &Mesh) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in mesh.nodes() {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let side = (mesh.num_triangles() as f64).sqrt().ceil().max(1.0) as usize;
        let dims = [side, side];
        let cell = [
            ((hi[0] - lo[0]) / side as f64).max(f64::MIN_POSITIVE),
            ((hi[1] - lo[1]) / side as f64).max(f64::MIN_POSITIVE),
        ];
        let mut loc = PointLocator {
            origin: lo,
            cell,
            dims,
            buckets: vec![Vec::new(); side * side],
        };
        for t in 0..mesh.num_triangles() {
            let vs = mesh.vertices(t);
            let (mut a, mut b) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
            for v in vs {
                for d in 0..2 {
                    a[d] = a[d].min(v[d]);
                    b[d] = b[d].max(v[d]);
                }
            }
            let (i0, j0) = loc.cell_of(a);
            let (i1, j1) = loc.cell_of(b);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    loc.buckets[j * dims[0] + i].push(t);
                }
            }
        }
        loc
    }

    fn cell_of(&self, p: Point) -> (usize, usize) {
        let f = |d: usize| {
            let c = ((p[d] - self.origin[d]) / self.cell[d]).floor();
            (c.max(0.0) as usize).min(self.dims[d] - 1)
        };
        (f(0), f(1))
    }

    /// Triangle containing `p` (within a small tolerance) and the
    /// barycentric coordinates of `p` in it.
    pub fn locate(&self, mesh: &Mesh, p: Point) -> Option<(usize, [f64; 3])> {
        let (i, j) = self.cell_of(p);
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for &t in &self.buckets[j * self.dims[0] + i] {
            let [a, b, c] = mesh.vertices(t);
            let l = barycentric(a, b, c, p);
            let worst = l[0].min(l[1]).min(l[2]);
            if worst >= 0.0 {
                return Some((t, l));
            }
            if best.map_or(true, |(_, _, w)| worst > w) {
                best = Some((t, l, worst));
            }
        }
        best.filter(|&(_, _, w)| w > -1e-9).map(|(t, l, _)| (t, l))
    }
}

/// Nodal values on `fine` of the P1 function given by `coarse_values` on
/// `coarse`. Every fine triangle must lie inside a single coarse triangle.
pub fn interpolate_coarse_on_fine(coarse_values: &[f64], coarse: &Mesh, fine: &Mesh) -> Result<Vec<f64>> {
    if coarse_values.len() != coarse.num_nodes() {
        return Err(Error::invalid("coarse value count does not match node count"));
    }
    let locator = PointLocator::new(coarse);
    let mut out = vec![f64::NAN; fine.num_nodes()];
    for t in 0..fine.num_triangles() {
        let vs = fine.vertices(t);
        let centroid = [
            (vs[0][0] + vs[1][0] + vs[2][0]) / 3.0,
            (vs[0][1] + vs[1][1] + vs[2][1]) / 3.0,
        ];
        let (k, _) = locator
            .locate(coarse, centroid)
            .ok_or_else(|| Error::NonNested(format!("fine triangle {t} lies outside the coarse mesh")))?;
        let [a, b, c] = coarse.vertices(k);
        let tri = coarse.triangles()[k];
        for (local, &node) in fine.triangles()[t].iter().enumerate() {
            let l = barycentric(a, b, c, vs[local]);
            if l.iter().any(|&x| x < -1e-9) {
                return Err(Error::NonNested(format!(
                    "fine triangle {t} straddles coarse triangle {k}"
                )));
            }
            if out[node].is_nan() {
                out[node] = l[0] * coarse_values[tri[0]]
                    + l[1] * coarse_values[tri[1]]
                    + l[2] * coarse_values[tri[2]];
            }
        }
    }
    if out.iter().any(|v| v.is_nan()) {
        return Err(Error::NonNested("fine mesh has nodes outside every fine triangle".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn structured_counts() {
        let m1 = generate_structured(1).unwrap();
        assert_eq!((m1.num_nodes(), m1.num_triangles()), (4, 2));
        assert_eq!(m1.boundary_nodes().len(), 4);
        let m2 = generate_structured(2).unwrap();
        assert_eq!((m2.num_nodes(), m2.num_triangles()), (9, 8));
        assert_eq!(m2.num_nodes() - m2.boundary_nodes().len(), 1);
        let m4 = generate_structured(4).unwrap();
        assert_eq!((m4.num_nodes(), m4.num_triangles()), (25, 32));
        assert!((m4.h() - 2f64.sqrt() / 4.0).abs() < 1e-15);
        assert!(generate_structured(0).is_err());
    }

    #[test]
    fn refinement_counts() {
        let m1 = generate_structured(1).unwrap();
        assert_eq!(refine_uniform(&m1, 1).unwrap().num_triangles(), 8);
        assert_eq!(refine_uniform(&m1, 0).unwrap(), m1);
        let m2 = generate_structured(2).unwrap();
        let r = refine_uniform(&m2, 3).unwrap();
        assert_eq!(r.num_triangles(), 512);
        assert!((r.h() - m2.h() / 8.0).abs() < 1e-15);
        assert!((r.total_area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn submesh_counts() {
        let mesh = generate_structured(2).unwrap();
        assert!(matches!(build_submesh(&mesh, 0, 2), Err(Error::EmptyBubbleSpace { m: 2 })));
        let s3 = build_submesh(&mesh, 0, 3).unwrap();
        assert_eq!((s3.triangles().len(), s3.num_interior()), (9, 1));
        let s8 = build_submesh(&mesh, 3, 8).unwrap();
        assert_eq!((s8.triangles().len(), s8.num_interior()), (64, 21));
        assert!(build_submesh(&mesh, 8, 4).is_err());
    }

    #[test]
    fn submesh_tiles_parent() {
        let mesh = generate_structured(3).unwrap();
        for k in 0..mesh.num_triangles() {
            let s = build_submesh(&mesh, k, 5).unwrap();
            let sum: f64 = (0..s.triangles().len()).map(|t| s.area(t)).sum();
            assert!((sum - mesh.area(k)).abs() <= 1e-12 * mesh.area(k));
            assert!((0..s.triangles().len()).all(|t| s.area(t) > 0.0));
            assert_eq!(s.num_interior() + s.boundary_nodes().len(), s.num_nodes());
        }
    }

    #[test]
    fn submesh_locate_finds_containing_triangle() {
        let mesh = generate_structured(2).unwrap();
        let s = build_submesh(&mesh, 5, 6).unwrap();
        let [a, b, c] = mesh.vertices(5);
        for t in 0..s.triangles().len() {
            let vs = s.vertices(t);
            let cen = [
                (vs[0][0] + vs[1][0] + vs[2][0]) / 3.0,
                (vs[0][1] + vs[1][1] + vs[2][1]) / 3.0,
            ];
            let l = barycentric(a, b, c, cen);
            assert_eq!(s.locate(l[1], l[2]), t);
        }
    }

    #[test]
    fn rejects_degenerate_and_reorients() {
        let nodes = vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]];
        assert!(Mesh::new(nodes, vec![[0, 1, 2]]).is_err());
        let nodes = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let mesh = Mesh::new(nodes, vec![[0, 2, 1]]).unwrap();
        assert!(mesh.area(0) > 0.0);
    }

    #[test]
    fn interpolation_reproduces_linears() {
        let coarse = generate_structured(2).unwrap();
        let fine = refine_uniform(&coarse, 2).unwrap();
        let ones = vec![1.0; coarse.num_nodes()];
        let out = interpolate_coarse_on_fine(&ones, &coarse, &fine).unwrap();
        assert!(out.iter().all(|&v| (v - 1.0).abs() < 1e-14));
        let lin: Vec<f64> = coarse.nodes().iter().map(|p| p[0] + p[1]).collect();
        let out = interpolate_coarse_on_fine(&lin, &coarse, &fine).unwrap();
        for (p, v) in fine.nodes().iter().zip(&out) {
            assert!((p[0] + p[1] - v).abs() < 1e-14);
        }
    }

    #[test]
    fn interpolation_of_center_hat() {
        let coarse = generate_structured(2).unwrap();
        let fine = refine_uniform(&coarse, 1).unwrap();
        let center = coarse
            .nodes()
            .iter()
            .position(|p| (p[0] - 0.5).abs() < 1e-12 && (p[1] - 0.5).abs() < 1e-12)
            .unwrap();
        let mut hat = vec![0.0; coarse.num_nodes()];
        hat[center] = 1.0;
        let out = interpolate_coarse_on_fine(&hat, &coarse, &fine).unwrap();
        let (edges, _) = coarse.edges();
        for (a, b) in edges.into_iter().filter(|&(a, b)| a == center || b == center) {
            let (p, q) = (coarse.nodes()[a], coarse.nodes()[b]);
            let mid = [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
            let i = fine.nodes().iter().position(|x| dist(*x, mid) < 1e-12).unwrap();
            assert!((out[i] - 0.5).abs() < 1e-14);
        }
    }

    #[test]
    fn interpolation_rejects_non_nested() {
        let coarse = generate_structured(2).unwrap();
        let fine = generate_structured(3).unwrap();
        let v = vec![0.0; coarse.num_nodes()];
        assert!(matches!(
            interpolate_coarse_on_fine(&v, &coarse, &fine),
            Err(Error::NonNested(_))
        ));
    }

    #[test]
    fn text_roundtrip() {
        let mesh = refine_uniform(&generate_structured(2).unwrap(), 1).unwrap();
        let mut buf = Vec::new();
        mesh.write_text(&mut buf).unwrap();
        let back = Mesh::read_text(buf.as_slice()).unwrap();
        assert_eq!(back, mesh);

        let values: Vec<f64> = (0..mesh.num_nodes()).map(|i| i as f64 * 0.1).collect();
        let mut buf = Vec::new();
        write_solution(&mesh, &values, &mut buf).unwrap();
        let (m2, v2) = read_solution(buf.as_slice()).unwrap();
        assert_eq!(m2, mesh);
        assert_eq!(v2, values);
    }

    #[test]
    fn text_parse_errors() {
        assert!(matches!(Mesh::read_text("nodes 3\n".as_bytes()), Err(Error::Parse { .. })));
        let bad = "nodes 3 triangles 1\n0 0\n1 0\n0 1\n0 1 2\n0 1\n";
        assert!(matches!(Mesh::read_text(bad.as_bytes()), Err(Error::InvalidMesh(_))));
        let ok = "nodes 3 triangles 1\n0 0\n1 0\n0 1\n0 1 2\n0 1 2\n";
        assert_eq!(Mesh::read_text(ok.as_bytes()).unwrap().num_triangles(), 1);
    }
}
