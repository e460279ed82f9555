//! Conforming triangulations with refinement genealogy.
//!
//! Vertex indices are stable under refinement: a refined mesh keeps every
//! vertex of its parent at the same index and appends the new midpoints. This
//! makes the nested P1 spaces trivial to relate, since a coarse vertex `v` is
//! also vertex `v` of every descendant.
//!
//! Cells are stored as `[newest, a, b]`: the first vertex is the newest vertex
//! and `(a, b)` is the refinement edge used by newest-vertex bisection. All
//! cells are counter-clockwise.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

static NEXT_MESH_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_MESH_ID.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    UnitSquare,
    LShape,
    UnitCube,
}

impl DomainKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "unit_square" => Some(Self::UnitSquare),
            "l_shape" => Some(Self::LShape),
            "unit_cube" => Some(Self::UnitCube),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::UnitSquare => "unit_square",
            Self::LShape => "l_shape",
            Self::UnitCube => "unit_cube",
        }
    }

    /// Measure of the domain.
    pub fn area(&self) -> f64 {
        match self {
            Self::UnitSquare | Self::UnitCube => 1.0,
            Self::LShape => 3.0,
        }
    }

    /// Axis-aligned bounding box `(lower, upper)`.
    pub fn bounding_box(&self) -> (Point, Point) {
        match self {
            Self::UnitSquare | Self::UnitCube => ([0.0, 0.0], [1.0, 1.0]),
            Self::LShape => ([0.0, 0.0], [2.0, 2.0]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub kind: DomainKind,
    /// Cells per side of each unit square.
    pub initial_subdivision: usize,
}

impl DomainSpec {
    pub fn new(kind: DomainKind, initial_subdivision: usize) -> Self {
        Self {
            kind,
            initial_subdivision,
        }
    }
}

/// Where a vertex came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VertexParent {
    /// Vertex of the level-0 mesh.
    Original,
    /// Midpoint of the edge between two older vertices.
    Edge(usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    id: u64,
    /// `lineage[l]` is the id of the ancestor at level `l`; the last entry is `id`.
    lineage: Vec<u64>,
    vertices: Vec<Point>,
    cells: Vec<[usize; 3]>,
    boundary_facets: Vec<[usize; 2]>,
    level: usize,
    /// `cell_ancestry[l][c]` is the ancestor of cell `c` in the level-`l` mesh.
    cell_ancestry: Vec<Vec<usize>>,
    vertex_parents: Vec<VertexParent>,
    /// Number of vertices of the ancestor at each level `0..=level`.
    level_vertex_counts: Vec<usize>,
}

/// Fine cells grouped by the coarse cell that contains them.
#[derive(Debug, Clone, PartialEq)]
pub struct CellEmbedding {
    pub children: Vec<Vec<usize>>,
    pub parent: Vec<usize>,
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

fn signed_area(p: &[Point; 3]) -> f64 {
    0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]))
}

fn collect_boundary(cells: &[[usize; 3]]) -> Vec<[usize; 2]> {
    let mut count: HashMap<(usize, usize), (usize, [usize; 2])> =
        HashMap::with_capacity(cells.len() * 2);
    for c in cells {
        for (a, b) in [(c[0], c[1]), (c[1], c[2]), (c[2], c[0])] {
            let e = count.entry(edge_key(a, b)).or_insert((0, [a, b]));
            e.0 += 1;
        }
    }
    let mut facets: Vec<[usize; 2]> = count
        .into_values()
        .filter(|(n, _)| *n == 1)
        .map(|(_, f)| f)
        .collect();
    facets.sort_unstable();
    facets
}

struct MidpointTable {
    table: HashMap<(usize, usize), usize>,
}

impl MidpointTable {
    fn new(capacity: usize) -> Self {
        Self {
            table: HashMap::with_capacity(capacity),
        }
    }

    fn get_or_insert(
        &mut self,
        a: usize,
        b: usize,
        vertices: &mut Vec<Point>,
        parents: &mut Vec<VertexParent>,
    ) -> usize {
        let key = edge_key(a, b);
        *self.table.entry(key).or_insert_with(|| {
            let (pa, pb) = (vertices[a], vertices[b]);
            vertices.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
            parents.push(VertexParent::Edge(key.0, key.1));
            vertices.len() - 1
        })
    }

    fn contains(&self, a: usize, b: usize) -> bool {
        self.table.contains_key(&edge_key(a, b))
    }
}

/// Level-0 structured triangulation of the requested domain.
///
/// Each square sub-cell is split along its lower-left to upper-right diagonal.
/// The right-angle vertex is stored as newest vertex so that both triangles of a
/// square share their refinement edge.
type GridFilter = dyn Fn(usize, usize) -> bool;

pub fn build_initial_mesh(spec: &DomainSpec) -> Result<Mesh> {
    let n = spec.initial_subdivision;
    if n == 0 {
        return Err(Error::InvalidInput(
            "initial_subdivision must be at least 1".into(),
        ));
    }
    let (units, keep_vertex, keep_square): (usize, Box<GridFilter>, Box<GridFilter>) =
        match spec.kind {
            DomainKind::UnitCube => {
                return Err(Error::UnsupportedDimension(
                    "unit_cube needs the d=3 pipeline, which is disabled".into(),
                ))
            }
            DomainKind::UnitSquare => (1, Box::new(|_, _| true), Box::new(|_, _| true)),
            DomainKind::LShape => (
                2,
                Box::new(move |i, j| i <= n || j <= n),
                Box::new(move |i, j| i < n || j < n),
            ),
        };
    let side = units * n;
    let h = 1.0 / n as f64;
    let mut index = vec![usize::MAX; (side + 1) * (side + 1)];
    let mut vertices = Vec::new();
    for j in 0..=side {
        for i in 0..=side {
            if keep_vertex(i, j) {
                index[j * (side + 1) + i] = vertices.len();
                vertices.push([i as f64 * h, j as f64 * h]);
            }
        }
    }
    let at = |i: usize, j: usize| index[j * (side + 1) + i];
    let mut cells = Vec::new();
    for j in 0..side {
        for i in 0..side {
            if !keep_square(i, j) {
                continue;
            }
            let (p00, p10, p11, p01) = (at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1));
            cells.push([p10, p11, p00]);
            cells.push([p01, p00, p11]);
        }
    }
    let nv = vertices.len();
    let id = fresh_id();
    let mesh = Mesh {
        id,
        lineage: vec![id],
        boundary_facets: collect_boundary(&cells),
        vertices,
        cells,
        level: 0,
        cell_ancestry: Vec::new(),
        vertex_parents: vec![VertexParent::Original; nv],
        level_vertex_counts: vec![nv],
    };
    Ok(mesh)
}

impl Mesh {
    fn child(
        &self,
        vertices: Vec<Point>,
        cells: Vec<[usize; 3]>,
        parent: Vec<usize>,
        vertex_parents: Vec<VertexParent>,
    ) -> Mesh {
        let id = fresh_id();
        let mut lineage = self.lineage.clone();
        lineage.push(id);
        let mut cell_ancestry: Vec<Vec<usize>> = self
            .cell_ancestry
            .iter()
            .map(|anc| parent.iter().map(|&p| anc[p]).collect())
            .collect();
        cell_ancestry.push(parent);
        let mut level_vertex_counts = self.level_vertex_counts.clone();
        level_vertex_counts.push(vertices.len());
        Mesh {
            id,
            lineage,
            boundary_facets: collect_boundary(&cells),
            vertices,
            cells,
            level: self.level + 1,
            cell_ancestry,
            vertex_parents,
            level_vertex_counts,
        }
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn cells(&self) -> &[[usize; 3]] {
        &self.cells
    }

    pub fn boundary_facets(&self) -> &[[usize; 2]] {
        &self.boundary_facets
    }

    pub fn vertex_parents(&self) -> &[VertexParent] {
        &self.vertex_parents
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    /// Parent cell indices in the previous level, absent at level 0.
    pub fn parent_cell(&self) -> Option<&[usize]> {
        self.cell_ancestry.last().map(|v| v.as_slice())
    }

    pub fn cell_points(&self, c: usize) -> [Point; 3] {
        let [a, b, d] = self.cells[c];
        [self.vertices[a], self.vertices[b], self.vertices[d]]
    }

    pub fn cell_area(&self, c: usize) -> f64 {
        signed_area(&self.cell_points(c))
    }

    pub fn cell_diameter(&self, c: usize) -> f64 {
        let p = self.cell_points(c);
        let d = |a: Point, b: Point| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        d(p[0], p[1]).max(d(p[1], p[2])).max(d(p[2], p[0]))
    }

    pub fn max_diameter(&self) -> f64 {
        (0..self.n_cells())
            .map(|c| self.cell_diameter(c))
            .fold(0.0, f64::max)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_cells()).map(|c| self.cell_area(c)).sum()
    }

    /// `true` if `self` is `other` or was obtained from it by refinement.
    pub fn descends_from(&self, other: &Mesh) -> bool {
        self.lineage.get(other.level) == Some(&other.id)
    }

    /// Vertex count of the ancestor at `level`.
    pub fn vertex_count_at(&self, level: usize) -> Option<usize> {
        self.level_vertex_counts.get(level).copied()
    }

    /// Ancestor indices of every cell in the mesh at `level` (identity for own level).
    pub fn ancestors_at(&self, level: usize) -> Option<Vec<usize>> {
        if level == self.level {
            Some((0..self.n_cells()).collect())
        } else {
            self.cell_ancestry.get(level).cloned()
        }
    }

    /// Marks vertices lying on a boundary facet.
    pub fn boundary_vertex_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.n_vertices()];
        for f in &self.boundary_facets {
            mask[f[0]] = true;
            mask[f[1]] = true;
        }
        mask
    }

    /// Checks conformity, orientation and (if available) the parent tiling.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let mut count: HashMap<(usize, usize), usize> = HashMap::new();
        for (c, cell) in self.cells.iter().enumerate() {
            let area = self.cell_area(c);
            if !(area > 0.0) {
                return Err(format!("cell {c} has non-positive area {area:e}"));
            }
            for (a, b) in [(cell[0], cell[1]), (cell[1], cell[2]), (cell[2], cell[0])] {
                *count.entry(edge_key(a, b)).or_default() += 1;
            }
        }
        let boundary: std::collections::HashSet<(usize, usize)> = self
            .boundary_facets
            .iter()
            .map(|f| edge_key(f[0], f[1]))
            .collect();
        for (e, n) in &count {
            match n {
                2 if !boundary.contains(e) => {}
                1 if boundary.contains(e) => {}
                _ => return Err(format!("edge {e:?} is shared by {n} cells")),
            }
        }
        if boundary.len() != count.values().filter(|&&n| n == 1).count() {
            return Err("boundary facet list does not match the free edges".into());
        }
        // a free edge with a vertex at its midpoint hides a hanging node
        let by_coord: std::collections::HashSet<(u64, u64)> = self
            .vertices
            .iter()
            .map(|p| (p[0].to_bits(), p[1].to_bits()))
            .collect();
        for &(a, b) in &boundary {
            let (pa, pb) = (self.vertices[a], self.vertices[b]);
            let m = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])];
            if by_coord.contains(&(m[0].to_bits(), m[1].to_bits())) {
                return Err(format!("hanging node on edge ({a}, {b})"));
            }
        }
        Ok(())
    }

    /// Red refinement: every triangle is split into four similar children by
    /// joining its edge midpoints.
    pub fn refine_uniform(&self) -> Mesh {
        let mut vertices = self.vertices.clone();
        let mut vertex_parents = self.vertex_parents.clone();
        let mut mids = MidpointTable::new(self.cells.len() * 2);
        let mut cells = Vec::with_capacity(4 * self.cells.len());
        let mut parent = Vec::with_capacity(4 * self.cells.len());
        for (c, &[v0, v1, v2]) in self.cells.iter().enumerate() {
            let m01 = mids.get_or_insert(v0, v1, &mut vertices, &mut vertex_parents);
            let m12 = mids.get_or_insert(v1, v2, &mut vertices, &mut vertex_parents);
            let m20 = mids.get_or_insert(v2, v0, &mut vertices, &mut vertex_parents);
            cells.push([v0, m01, m20]);
            cells.push([m01, v1, m12]);
            cells.push([m20, m12, v2]);
            cells.push([m12, m20, m01]);
            parent.extend_from_slice(&[c; 4]);
        }
        self.child(vertices, cells, parent, vertex_parents)
    }

    /// Newest-vertex bisection of the marked cells followed by the conforming
    /// closure. An empty marking returns the mesh unchanged.
    pub fn refine_adaptive(&self, marked: &[usize]) -> Result<Mesh> {
        if marked.is_empty() {
            return Ok(self.clone());
        }
        let mut flag = vec![false; self.n_cells()];
        for &c in marked {
            if c >= self.n_cells() {
                return Err(Error::InvalidInput(format!(
                    "marked cell {c} out of range ({} cells)",
                    self.n_cells()
                )));
            }
            flag[c] = true;
        }
        let mut vertices = self.vertices.clone();
        let mut vertex_parents = self.vertex_parents.clone();
        let mut mids = MidpointTable::new(marked.len() * 4);
        let mut cells: Vec<[usize; 3]> = self.cells.clone();
        let mut parent: Vec<usize> = (0..self.n_cells()).collect();
        loop {
            let mut next_cells = Vec::with_capacity(cells.len() + 2 * marked.len());
            let mut next_parent = Vec::with_capacity(next_cells.capacity());
            let mut bisected = false;
            for (k, &[v0, v1, v2]) in cells.iter().enumerate() {
                if flag[k] {
                    let m = mids.get_or_insert(v1, v2, &mut vertices, &mut vertex_parents);
                    next_cells.push([m, v0, v1]);
                    next_cells.push([m, v2, v0]);
                    next_parent.push(parent[k]);
                    next_parent.push(parent[k]);
                    bisected = true;
                } else {
                    next_cells.push([v0, v1, v2]);
                    next_parent.push(parent[k]);
                }
            }
            cells = next_cells;
            parent = next_parent;
            if !bisected {
                break;
            }
            flag = cells
                .iter()
                .map(|&[a, b, c]| mids.contains(a, b) || mids.contains(b, c) || mids.contains(c, a))
                .collect();
            if !flag.iter().any(|&f| f) {
                break;
            }
        }
        Ok(self.child(vertices, cells, parent, vertex_parents))
    }

    /// Plain-text dump: `d nv nc`, then coordinates, then 0-based cells.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "2 {} {}", self.n_vertices(), self.n_cells());
        for p in &self.vertices {
            let _ = writeln!(out, "{:.16e} {:.16e}", p[0], p[1]);
        }
        for c in &self.cells {
            let _ = writeln!(out, "{} {} {}", c[0], c[1], c[2]);
        }
        out
    }
}

/// Groups the cells of `fine` by their ancestor in `coarse`.
pub fn nesting_map(coarse: &Mesh, fine: &Mesh) -> Result<CellEmbedding> {
    if !fine.descends_from(coarse) {
        return Err(Error::NotADescendant(format!(
            "mesh {} (level {}) is not a refinement of mesh {} (level {})",
            fine.id, fine.level, coarse.id, coarse.level
        )));
    }
    let parent = fine
        .ancestors_at(coarse.level)
        .expect("lineage implies ancestry");
    let mut children = vec![Vec::new(); coarse.n_cells()];
    for (f, &c) in parent.iter().enumerate() {
        children[c].push(f);
    }
    Ok(CellEmbedding { children, parent })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(n: usize) -> Mesh {
        build_initial_mesh(&DomainSpec::new(DomainKind::UnitSquare, n)).unwrap()
    }

    #[test]
    fn initial_mesh_counts() {
        let m = square(1);
        assert_eq!(
            (m.n_vertices(), m.n_cells(), m.boundary_facets().len()),
            (4, 2, 4)
        );
        let m = square(2);
        assert_eq!((m.n_vertices(), m.n_cells()), (9, 8));
        let l = build_initial_mesh(&DomainSpec::new(DomainKind::LShape, 1)).unwrap();
        assert_eq!((l.n_vertices(), l.n_cells()), (8, 6));
        assert!((l.total_area() - 3.0).abs() < 1e-12);
        l.check_invariants().unwrap();
    }

    #[test]
    fn unit_cube_is_rejected() {
        let err = build_initial_mesh(&DomainSpec::new(DomainKind::UnitCube, 1)).unwrap_err();
        assert!(matches!(err, Error::UnsupportedDimension(_)));
    }

    #[test]
    fn red_refinement_counts_and_diameter() {
        let m = square(1);
        let r1 = m.refine_uniform();
        assert_eq!((r1.n_vertices(), r1.n_cells()), (9, 8));
        let r2 = r1.refine_uniform();
        assert_eq!((r2.n_vertices(), r2.n_cells()), (25, 32));
        assert_eq!(r1.max_diameter(), 0.5 * m.max_diameter());
        assert_eq!(r2.max_diameter(), 0.25 * m.max_diameter());
        for mesh in [&r1, &r2] {
            mesh.check_invariants().unwrap();
            assert!((mesh.total_area() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn children_tile_parent() {
        let m = build_initial_mesh(&DomainSpec::new(DomainKind::LShape, 2)).unwrap();
        let f = m.refine_uniform().refine_adaptive(&[0, 5, 17]).unwrap();
        let emb = nesting_map(&m, &f).unwrap();
        for (c, kids) in emb.children.iter().enumerate() {
            let s: f64 = kids.iter().map(|&k| f.cell_area(k)).sum();
            assert!((s - m.cell_area(c)).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_marking_is_identity() {
        let m = square(2).refine_uniform();
        assert_eq!(m.refine_adaptive(&[]).unwrap(), m);
    }

    #[test]
    fn single_mark_closure_is_conforming() {
        let m = square(1);
        let r = m.refine_adaptive(&[0]).unwrap();
        r.check_invariants().unwrap();
        // the diagonal is shared, so the neighbour is bisected too
        assert_eq!(r.n_cells(), 4);
        assert_eq!(r.n_vertices(), 5);
        let emb = nesting_map(&m, &r).unwrap();
        assert!(emb.children.iter().all(|k| k.len() == 2));
    }

    #[test]
    fn mark_all_gives_two_children_each() {
        let m = square(3).refine_uniform();
        let all: Vec<usize> = (0..m.n_cells()).collect();
        let r = m.refine_adaptive(&all).unwrap();
        r.check_invariants().unwrap();
        let emb = nesting_map(&m, &r).unwrap();
        assert!(emb.children.iter().all(|k| k.len() >= 2));
    }

    #[test]
    fn nesting_map_cases() {
        let m = square(2);
        let same = nesting_map(&m, &m).unwrap();
        assert!(same.children.iter().enumerate().all(|(c, k)| k == &vec![c]));
        let r1 = m.refine_uniform();
        let r2 = r1.refine_uniform();
        assert!(nesting_map(&m, &r1)
            .unwrap()
            .children
            .iter()
            .all(|k| k.len() == 4));
        let e2 = nesting_map(&m, &r2).unwrap();
        for (c, kids) in e2.children.iter().enumerate() {
            assert_eq!(kids.len(), 16);
            let s: f64 = kids.iter().map(|&k| r2.cell_area(k)).sum();
            assert!((s - m.cell_area(c)).abs() < 1e-12);
        }
        let other = square(2).refine_uniform();
        assert!(matches!(
            nesting_map(&m, &other),
            Err(Error::NotADescendant(_))
        ));
        assert!(matches!(
            nesting_map(&r1, &m),
            Err(Error::NotADescendant(_))
        ));
    }

    #[test]
    fn coarse_vertices_survive_refinement() {
        let m = build_initial_mesh(&DomainSpec::new(DomainKind::LShape, 1)).unwrap();
        let f = m
            .refine_uniform()
            .refine_adaptive(&[3])
            .unwrap()
            .refine_uniform();
        for (v, p) in m.vertices().iter().enumerate() {
            assert_eq!(&f.vertices()[v], p);
        }
        assert_eq!(f.vertex_count_at(0), Some(m.n_vertices()));
    }

    #[test]
    fn repeated_adaptive_refinement_near_corner() {
        let mut m = build_initial_mesh(&DomainSpec::new(DomainKind::LShape, 2)).unwrap();
        for _ in 0..8 {
            let marked: Vec<usize> = (0..m.n_cells())
                .filter(|&c| {
                    let p = m.cell_points(c);
                    p.iter()
                        .any(|q| (q[0] - 1.0).abs() + (q[1] - 1.0).abs() < 1e-9)
                })
                .collect();
            m = m.refine_adaptive(&marked).unwrap();
            m.check_invariants().unwrap();
            assert!((m.total_area() - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dump_format() {
        let d = square(1).dump();
        let lines: Vec<&str> = d.lines().collect();
        assert_eq!(lines[0], "2 4 2");
        assert_eq!(lines.len(), 1 + 4 + 2);
        assert_eq!(lines[2], "1.0000000000000000e0 0.0000000000000000e0");
    }
}
