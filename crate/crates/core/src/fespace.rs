//! P1 Lagrange spaces with Dirichlet boundary elimination.

use std::fmt;
use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point, VertexParent};
use crate::sparse::SparseMatrix;

/// Slot index used for constrained (eliminated) couplings.
pub const NO_SLOT: usize = usize::MAX;

/// Sparsity pattern of all bilinear forms on a space plus the position of
/// every element-matrix entry in the value array.
#[derive(Debug)]
pub struct AssemblyPattern {
    pub row_ptr: Arc<Vec<usize>>,
    pub col_idx: Arc<Vec<usize>>,
    pub cell_slots: Vec<[[usize; 3]; 3]>,
}

impl AssemblyPattern {
    pub fn matrix(&self, n: usize, values: Vec<f64>) -> SparseMatrix {
        SparseMatrix::from_parts(n, n, self.row_ptr.clone(), self.col_idx.clone(), values)
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }
}

struct SpaceInner {
    mesh: Arc<Mesh>,
    interior_dofs: Vec<usize>,
    dof_of_vertex: Vec<Option<usize>>,
    pattern: OnceLock<Arc<AssemblyPattern>>,
}

#[derive(Clone)]
pub struct FeSpace {
    inner: Arc<SpaceInner>,
}

impl fmt::Debug for FeSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FeSpace")
            .field("mesh_id", &self.inner.mesh.id())
            .field("level", &self.inner.mesh.level())
            .field("n_dofs", &self.n_dofs())
            .finish()
    }
}

impl FeSpace {
    /// Space of P1 functions vanishing on the boundary.
    pub fn new(mesh: Arc<Mesh>) -> Self {
        let boundary = mesh.boundary_vertex_mask();
        Self::with_mask(mesh, &boundary)
    }

    /// Space over all vertices with no boundary elimination.
    pub fn unconstrained(mesh: Arc<Mesh>) -> Self {
        let n = mesh.n_vertices();
        Self::with_mask(mesh, &vec![false; n])
    }

    fn with_mask(mesh: Arc<Mesh>, constrained: &[bool]) -> Self {
        let mut interior_dofs = Vec::new();
        let mut dof_of_vertex = vec![None; mesh.n_vertices()];
        for (v, &c) in constrained.iter().enumerate() {
            if !c {
                dof_of_vertex[v] = Some(interior_dofs.len());
                interior_dofs.push(v);
            }
        }
        Self {
            inner: Arc::new(SpaceInner {
                mesh,
                interior_dofs,
                dof_of_vertex,
                pattern: OnceLock::new(),
            }),
        }
    }

    pub fn mesh(&self) -> &Mesh {
        &self.inner.mesh
    }

    pub fn mesh_arc(&self) -> &Arc<Mesh> {
        &self.inner.mesh
    }

    pub fn n_dofs(&self) -> usize {
        self.inner.interior_dofs.len()
    }

    pub fn n_total(&self) -> usize {
        self.inner.mesh.n_vertices()
    }

    pub fn interior_dofs(&self) -> &[usize] {
        &self.inner.interior_dofs
    }

    pub fn dof_of_vertex(&self) -> &[Option<usize>] {
        &self.inner.dof_of_vertex
    }

    pub fn cell_dofs(&self, c: usize) -> [Option<usize>; 3] {
        let cell = self.mesh().cells()[c];
        cell.map(|v| self.inner.dof_of_vertex[v])
    }

    pub fn same_as(&self, other: &FeSpace) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
            || (self.mesh().id() == other.mesh().id()
                && self.inner.interior_dofs == other.inner.interior_dofs)
    }

    /// Nodal values on all vertices (constrained vertices are zero).
    pub fn vertex_values(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_total()];
        for (&v, &c) in self.inner.interior_dofs.iter().zip(coeffs) {
            out[v] = c;
        }
        out
    }

    pub fn pattern(&self) -> Arc<AssemblyPattern> {
        self.inner
            .pattern
            .get_or_init(|| Arc::new(build_pattern(self)))
            .clone()
    }
}

fn build_pattern(space: &FeSpace) -> AssemblyPattern {
    let n = space.n_dofs();
    let mut rows: Vec<Vec<usize>> = vec![Vec::with_capacity(7); n];
    for c in 0..space.mesh().n_cells() {
        let dofs = space.cell_dofs(c);
        for a in dofs.iter().flatten() {
            for b in dofs.iter().flatten() {
                rows[*a].push(*b);
            }
        }
    }
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::new();
    row_ptr.push(0);
    for r in rows.iter_mut() {
        r.sort_unstable();
        r.dedup();
        col_idx.extend_from_slice(r);
        row_ptr.push(col_idx.len());
    }
    let find = |i: usize, j: usize| {
        let r = &col_idx[row_ptr[i]..row_ptr[i + 1]];
        row_ptr[i] + r.binary_search(&j).expect("coupling present in pattern")
    };
    let cell_slots = (0..space.mesh().n_cells())
        .map(|c| {
            let dofs = space.cell_dofs(c);
            let mut s = [[NO_SLOT; 3]; 3];
            for a in 0..3 {
                for b in 0..3 {
                    if let (Some(i), Some(j)) = (dofs[a], dofs[b]) {
                        s[a][b] = find(i, j);
                    }
                }
            }
            s
        })
        .collect();
    AssemblyPattern {
        row_ptr: Arc::new(row_ptr),
        col_idx: Arc::new(col_idx),
        cell_slots,
    }
}

/// Coefficient vector of a P1 function on `space`.
#[derive(Debug, Clone)]
pub struct CoeffVec {
    pub values: Vec<f64>,
    pub space: FeSpace,
}

impl CoeffVec {
    pub fn new(space: &FeSpace, values: Vec<f64>) -> Result<Self> {
        if values.len() != space.n_dofs() {
            return Err(Error::DimensionMismatch {
                expected: space.n_dofs(),
                got: values.len(),
            });
        }
        Ok(Self {
            values,
            space: space.clone(),
        })
    }

    pub fn zeros(space: &FeSpace) -> Self {
        Self {
            values: vec![0.0; space.n_dofs()],
            space: space.clone(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Nodal interpolant; boundary values are implicitly zero.
pub fn interpolate(space: &FeSpace, f: impl Fn(Point) -> f64) -> CoeffVec {
    let verts = space.mesh().vertices();
    let values = space.interior_dofs().iter().map(|&v| f(verts[v])).collect();
    CoeffVec {
        values,
        space: space.clone(),
    }
}

#[derive(Clone, Copy)]
struct Stencil {
    len: usize,
    entries: [(usize, f64); 3],
}

impl Stencil {
    fn single(v: usize) -> Self {
        Self {
            len: 1,
            entries: [(v, 1.0), (0, 0.0), (0, 0.0)],
        }
    }

    fn average(a: &Stencil, b: &Stencil) -> Self {
        let mut out = Stencil {
            len: 0,
            entries: [(0, 0.0); 3],
        };
        for s in [a, b] {
            for &(v, w) in &s.entries[..s.len] {
                match out.entries[..out.len].iter_mut().find(|e| e.0 == v) {
                    Some(e) => e.1 += 0.5 * w,
                    None => {
                        assert!(
                            out.len < 3,
                            "midpoint stencil spans more than one coarse cell"
                        );
                        out.entries[out.len] = (v, 0.5 * w);
                        out.len += 1;
                    }
                }
            }
        }
        out
    }
}

/// Exact injection of coarse P1 functions into a nested fine space.
///
/// Rows are fine DOFs, columns coarse DOFs. Couplings to constrained coarse
/// vertices are dropped (those nodal values are zero).
pub fn prolongation(coarse: &FeSpace, fine: &FeSpace) -> Result<SparseMatrix> {
    if !fine.mesh().descends_from(coarse.mesh()) {
        return Err(Error::NotADescendant(format!(
            "fine mesh {} does not descend from coarse mesh {}",
            fine.mesh().id(),
            coarse.mesh().id()
        )));
    }
    let nv_coarse = coarse.n_total();
    let parents = fine.mesh().vertex_parents();
    let mut stencils: Vec<Stencil> = Vec::with_capacity(fine.n_total());
    for v in 0..fine.n_total() {
        let s = if v < nv_coarse {
            Stencil::single(v)
        } else {
            match parents[v] {
                VertexParent::Edge(a, b) => Stencil::average(&stencils[a], &stencils[b]),
                VertexParent::Original => unreachable!("original vertex beyond the coarse count"),
            }
        };
        stencils.push(s);
    }
    let coarse_dof = coarse.dof_of_vertex();
    let mut row_ptr = Vec::with_capacity(fine.n_dofs() + 1);
    let mut col_idx = Vec::with_capacity(fine.n_dofs() * 2);
    let mut values = Vec::with_capacity(fine.n_dofs() * 2);
    row_ptr.push(0);
    let mut row: Vec<(usize, f64)> = Vec::with_capacity(3);
    for &v in fine.interior_dofs() {
        let s = &stencils[v];
        row.clear();
        row.extend(
            s.entries[..s.len]
                .iter()
                .filter_map(|&(cv, w)| coarse_dof[cv].map(|d| (d, w))),
        );
        row.sort_unstable_by_key(|e| e.0);
        for &(d, w) in &row {
            col_idx.push(d);
            values.push(w);
        }
        row_ptr.push(col_idx.len());
    }
    Ok(SparseMatrix::from_parts(
        fine.n_dofs(),
        coarse.n_dofs(),
        Arc::new(row_ptr),
        Arc::new(col_idx),
        values,
    ))
}
