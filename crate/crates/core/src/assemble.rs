//! Finite element forms: stiffness, potential and mass matrices, the
//! density-weighted mass matrix, and the iteration-invariant pieces of the
//! augmented-space eigenproblem (including the sparse tensor `T_H`).
//!
//! Every integral is computed exactly. Integrands over a fine cell are
//! products of at most four linear factors (or a quadratic potential times two
//! linear factors), so the degree-4 rule suffices everywhere.

use crate::error::{Error, Result};
use crate::exec::map_reduce_ordered;
use crate::fespace::{CoeffVec, FeSpace, NO_SLOT};
use crate::mesh::{nesting_map, Mesh, Point};
use crate::quadrature::{quad_rule, QuadRule};
use crate::sparse::SparseMatrix;
use crate::tensor::SparseTensor3;

/// Number of points of the degree-4 rule used for all nonlinear integrals.
pub(crate) const NQ: usize = 6;

#[derive(Debug, Clone, Copy)]
pub struct CellGeom {
    pub points: [Point; 3],
    pub area: f64,
    /// Gradients of the barycentric coordinates.
    pub grads: [[f64; 2]; 3],
}

impl CellGeom {
    pub fn new(points: [Point; 3]) -> Self {
        let [p0, p1, p2] = points;
        let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
        let grads = [
            [(p1[1] - p2[1]) / det, (p2[0] - p1[0]) / det],
            [(p2[1] - p0[1]) / det, (p0[0] - p2[0]) / det],
            [(p0[1] - p1[1]) / det, (p1[0] - p0[0]) / det],
        ];
        Self {
            points,
            area: 0.5 * det,
            grads,
        }
    }

    pub fn of(mesh: &Mesh, c: usize) -> Result<Self> {
        let g = Self::new(mesh.cell_points(c));
        if !(g.area > 0.0) || !g.area.is_finite() {
            return Err(Error::SingularGeometry {
                cell: c,
                area: g.area,
            });
        }
        Ok(g)
    }

    pub fn map(&self, bary: &[f64; 3]) -> Point {
        let p = &self.points;
        [
            bary[0] * p[0][0] + bary[1] * p[1][0] + bary[2] * p[2][0],
            bary[0] * p[0][1] + bary[1] * p[1][1] + bary[2] * p[2][1],
        ]
    }

    /// Barycentric coordinates of `x` with respect to this cell.
    pub fn barycentric(&self, x: Point) -> [f64; 3] {
        let d = [x[0] - self.points[0][0], x[1] - self.points[0][1]];
        let l1 = self.grads[1][0] * d[0] + self.grads[1][1] * d[1];
        let l2 = self.grads[2][0] * d[0] + self.grads[2][1] * d[1];
        [1.0 - l1 - l2, l1, l2]
    }
}

fn dot2(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// `∫ ∇φ_a·∇φ_b` on one triangle.
pub fn local_stiffness(g: &CellGeom) -> [[f64; 3]; 3] {
    let mut k = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            k[a][b] = g.area * dot2(g.grads[a], g.grads[b]);
        }
    }
    k
}

/// `∫ φ_a φ_b` on one triangle.
pub fn local_mass(g: &CellGeom) -> [[f64; 3]; 3] {
    let d = g.area / 6.0;
    let o = g.area / 12.0;
    [[d, o, o], [o, d, o], [o, o, d]]
}

/// `∫ W φ_a φ_b` (+ `ζ ρ² φ_a φ_b` when `density` is given) on one triangle.
fn local_reaction<W: Fn(Point) -> f64>(
    g: &CellGeom,
    rule: &QuadRule,
    w: &W,
    density: Option<(f64, [f64; 3])>,
) -> [[f64; 3]; 3] {
    let mut m = [[0.0; 3]; 3];
    for (q, &wt) in rule.points.iter().zip(&rule.weights) {
        let mut coef = w(g.map(q));
        if let Some((zeta, r)) = density {
            let rho = r[0] * q[0] + r[1] * q[1] + r[2] * q[2];
            coef += zeta * rho * rho;
        }
        let s = wt * g.area * coef;
        for a in 0..3 {
            for b in 0..3 {
                m[a][b] += s * q[a] * q[b];
            }
        }
    }
    m
}

fn local_weighted_mass(g: &CellGeom, rule: &QuadRule, zeta: f64, r: [f64; 3]) -> [[f64; 3]; 3] {
    let mut m = [[0.0; 3]; 3];
    for (q, &wt) in rule.points.iter().zip(&rule.weights) {
        let rho = r[0] * q[0] + r[1] * q[1] + r[2] * q[2];
        let s = wt * g.area * zeta * rho * rho;
        for a in 0..3 {
            for b in 0..3 {
                m[a][b] += s * q[a] * q[b];
            }
        }
    }
    m
}

/// Scatters element matrices into the space's shared pattern.
fn assemble_cells<F>(space: &FeSpace, local: F) -> Result<SparseMatrix>
where
    F: Fn(usize, &CellGeom) -> [[f64; 3]; 3] + Sync + Send,
{
    let mesh = space.mesh();
    let pattern = space.pattern();
    let mut values = vec![0.0; pattern.nnz()];
    let mut err = None;
    map_reduce_ordered(
        mesh.n_cells(),
        |c| CellGeom::of(mesh, c).map(|g| local(c, &g)),
        |c, res| match res {
            Ok(k) => {
                let slots = &pattern.cell_slots[c];
                for a in 0..3 {
                    for b in 0..3 {
                        if slots[a][b] != NO_SLOT {
                            values[slots[a][b]] += k[a][b];
                        }
                    }
                }
            }
            Err(e) => {
                err.get_or_insert(e);
            }
        },
    );
    match err {
        Some(e) => Err(e),
        None => Ok(pattern.matrix(space.n_dofs(), values)),
    }
}

fn cell_values(space: &FeSpace, vertex_values: &[f64], c: usize) -> [f64; 3] {
    space.mesh().cells()[c].map(|v| vertex_values[v])
}

/// `∫ (∇φ_i·∇φ_j + W φ_i φ_j)` over the space's DOFs.
pub fn assemble_stiffness_potential<W>(space: &FeSpace, w: W) -> Result<SparseMatrix>
where
    W: Fn(Point) -> f64 + Sync + Send,
{
    assemble_operator(space, w, 0.0, None)
}

/// `∫ (∇φ_i·∇φ_j + W φ_i φ_j + ζ ρ² φ_i φ_j)`, the operator of the auxiliary
/// linear problem. `density` holds the DOF coefficients of `ρ`.
pub fn assemble_operator<W>(
    space: &FeSpace,
    w: W,
    zeta: f64,
    density: Option<&[f64]>,
) -> Result<SparseMatrix>
where
    W: Fn(Point) -> f64 + Sync + Send,
{
    let rule = quad_rule(4)?;
    let rho = match density {
        Some(d) => {
            if d.len() != space.n_dofs() {
                return Err(Error::DimensionMismatch {
                    expected: space.n_dofs(),
                    got: d.len(),
                });
            }
            Some(space.vertex_values(d))
        }
        None => None,
    };
    assemble_cells(space, |c, g| {
        let mut k = local_stiffness(g);
        let dens = match (&rho, zeta != 0.0) {
            (Some(r), true) => Some((zeta, cell_values(space, r, c))),
            _ => None,
        };
        let m = local_reaction(g, &rule, &w, dens);
        for a in 0..3 {
            for b in 0..3 {
                k[a][b] += m[a][b];
            }
        }
        k
    })
}

pub fn assemble_mass(space: &FeSpace) -> Result<SparseMatrix> {
    assemble_cells(space, |_, g| local_mass(g))
}

/// `∫ ζ ρ² φ_i φ_j` with `ρ` the P1 function of `rho`.
pub fn assemble_weighted_mass(space: &FeSpace, rho: &CoeffVec, zeta: f64) -> Result<SparseMatrix> {
    if rho.values.len() != space.n_dofs() {
        return Err(Error::DimensionMismatch {
            expected: space.n_dofs(),
            got: rho.values.len(),
        });
    }
    weighted_mass_from(space, &rho.values, zeta)
}

pub(crate) fn weighted_mass_from(space: &FeSpace, rho: &[f64], zeta: f64) -> Result<SparseMatrix> {
    let rule = quad_rule(4)?;
    let r = space.vertex_values(rho);
    assemble_cells(space, |c, g| {
        local_weighted_mass(g, &rule, zeta, cell_values(space, &r, c))
    })
}

/// Local (a ≤ b ≤ c) index triples of one cell, in storage order.
pub(crate) const LOCAL_TRIPLES: [[usize; 3]; 10] = [
    [0, 0, 0],
    [0, 0, 1],
    [0, 0, 2],
    [0, 1, 1],
    [0, 1, 2],
    [0, 2, 2],
    [1, 1, 1],
    [1, 1, 2],
    [1, 2, 2],
    [2, 2, 2],
];

/// Data of one fine cell seen from the coarse cell containing it.
pub(crate) struct EmbeddedCell {
    pub area: f64,
    /// Coarse barycentric coordinates (= coarse basis values) at the fine quadrature points.
    pub phi: [[f64; 3]; NQ],
    /// Fine barycentric coordinates at the quadrature points.
    pub fine_bary: [[f64; 3]; NQ],
    /// Potential at the quadrature points.
    pub w: [f64; NQ],
    pub fine_grads: [[f64; 2]; 3],
}

/// Fine cells grouped by coarse cell, ready for coarse-basis quadrature.
pub(crate) struct Embedding {
    pub children: Vec<Vec<usize>>,
    pub coarse_geom: Vec<CellGeom>,
    pub weights: [f64; NQ],
}

impl Embedding {
    pub fn new(coarse: &FeSpace, fine: &FeSpace) -> Result<Self> {
        let emb = nesting_map(coarse.mesh(), fine.mesh())?;
        let coarse_geom = (0..coarse.mesh().n_cells())
            .map(|c| CellGeom::of(coarse.mesh(), c))
            .collect::<Result<Vec<_>>>()?;
        let rule = quad_rule(4)?;
        debug_assert_eq!(rule.points.len(), NQ);
        let mut weights = [0.0; NQ];
        weights.copy_from_slice(&rule.weights);
        Ok(Self {
            children: emb.children,
            coarse_geom,
            weights,
        })
    }

    pub fn cell<W: Fn(Point) -> f64>(
        &self,
        fine: &Mesh,
        coarse_cell: usize,
        f: usize,
        w: &W,
    ) -> Result<EmbeddedCell> {
        let rule_points = rule4_points();
        let g = CellGeom::of(fine, f)?;
        let cg = &self.coarse_geom[coarse_cell];
        let mut phi = [[0.0; 3]; NQ];
        let mut wv = [0.0; NQ];
        let mut fine_bary = [[0.0; 3]; NQ];
        for (q, bary) in rule_points.iter().enumerate() {
            let x = g.map(bary);
            phi[q] = cg.barycentric(x);
            wv[q] = w(x);
            fine_bary[q] = *bary;
        }
        Ok(EmbeddedCell {
            area: g.area,
            phi,
            fine_bary,
            w: wv,
            fine_grads: g.grads,
        })
    }
}

fn rule4_points() -> &'static [[f64; 3]] {
    use std::sync::OnceLock;
    static PTS: OnceLock<Vec<[f64; 3]>> = OnceLock::new();
    PTS.get_or_init(|| quad_rule(4).expect("degree-4 rule").points)
}

/// Everything of the bordered eigenproblem that stays fixed while the
/// nonlinear iteration runs.
#[derive(Debug, Clone)]
pub struct BorderStatics {
    /// `∫ ∇φ_i·∇φ_j + W φ_i φ_j` on the coarse space.
    pub a_h1: SparseMatrix,
    /// `∫ ζ ũ² φ_i φ_j`
    pub a_h23: SparseMatrix,
    /// `∫ ζ ũ φ_i φ_j φ_k`
    pub t_h: SparseTensor3,
    /// `∫ ∇ũ·∇φ_i + W ũ φ_i`
    pub b_hh1: Vec<f64>,
    /// `∫ ζ ũ³ φ_i`
    pub b_hh23: Vec<f64>,
    /// `∫ |∇ũ|² + W ũ²`
    pub d1: f64,
    /// `∫ ζ ũ⁴`
    pub xi_h: f64,
    pub m_h: SparseMatrix,
    /// `∫ ũ φ_i`
    pub c_hh: Vec<f64>,
    /// `∫ ũ²`
    pub gamma: f64,
    pub zeta: f64,
    pub u_tilde: CoeffVec,
    pub coarse_space: FeSpace,
    pub fine_space: FeSpace,
}

#[derive(Default)]
struct StaticsLocal {
    a23: [[f64; 3]; 3],
    t: [f64; 10],
    b1: [f64; 3],
    b23: [f64; 3],
    c: [f64; 3],
    d1: f64,
    xi: f64,
    gamma: f64,
}

/// Assembles [`BorderStatics`] by visiting each fine cell once, grouped by
/// its coarse ancestor. Cost is linear in the fine cell count.
pub fn assemble_border_statics<W>(
    coarse: &FeSpace,
    fine: &FeSpace,
    u_tilde: &CoeffVec,
    w: W,
    zeta: f64,
) -> Result<BorderStatics>
where
    W: Fn(Point) -> f64 + Sync + Send,
{
    if !u_tilde.space.same_as(fine) {
        return Err(Error::InvalidInput(
            "u_tilde must live on the fine space".into(),
        ));
    }
    let emb = Embedding::new(coarse, fine)?;
    let fine_mesh = fine.mesh();
    let ut = fine.vertex_values(&u_tilde.values);
    let nc = coarse.n_dofs();

    let a_h1 = assemble_stiffness_potential(coarse, &w)?;
    let m_h = assemble_mass(coarse)?;
    let pattern = coarse.pattern();
    let mut a23 = vec![0.0; pattern.nnz()];
    let mut tensor_raw = Vec::with_capacity(coarse.mesh().n_cells() * 10);
    let mut b_hh1 = vec![0.0; nc];
    let mut b_hh23 = vec![0.0; nc];
    let mut c_hh = vec![0.0; nc];
    let (mut d1, mut xi_h, mut gamma) = (0.0, 0.0, 0.0);
    let mut err = None;

    map_reduce_ordered(
        coarse.mesh().n_cells(),
        |cc| -> Result<StaticsLocal> {
            let mut loc = StaticsLocal::default();
            let cg = &emb.coarse_geom[cc];
            for &f in &emb.children[cc] {
                let e = emb.cell(fine_mesh, cc, f, &w)?;
                let uv = cell_values(fine, &ut, f);
                let grad_u = [
                    uv[0] * e.fine_grads[0][0]
                        + uv[1] * e.fine_grads[1][0]
                        + uv[2] * e.fine_grads[2][0],
                    uv[0] * e.fine_grads[0][1]
                        + uv[1] * e.fine_grads[1][1]
                        + uv[2] * e.fine_grads[2][1],
                ];
                loc.d1 += e.area * dot2(grad_u, grad_u);
                for a in 0..3 {
                    loc.b1[a] += e.area * dot2(grad_u, cg.grads[a]);
                }
                for q in 0..NQ {
                    let fb = &e.fine_bary[q];
                    let u = uv[0] * fb[0] + uv[1] * fb[1] + uv[2] * fb[2];
                    let s = emb.weights[q] * e.area;
                    let phi = &e.phi[q];
                    let (zu, zu2) = (zeta * u * s, zeta * u * u * s);
                    loc.gamma += s * u * u;
                    loc.d1 += s * e.w[q] * u * u;
                    loc.xi += zu2 * u * u;
                    for a in 0..3 {
                        loc.b1[a] += s * e.w[q] * u * phi[a];
                        loc.b23[a] += zu2 * u * phi[a];
                        loc.c[a] += s * u * phi[a];
                        for b in 0..3 {
                            loc.a23[a][b] += zu2 * phi[a] * phi[b];
                        }
                    }
                    for (t, [a, b, c]) in loc.t.iter_mut().zip(LOCAL_TRIPLES) {
                        *t += zu * phi[a] * phi[b] * phi[c];
                    }
                }
            }
            Ok(loc)
        },
        |cc, res| match res {
            Ok(loc) => {
                let dofs = coarse.cell_dofs(cc);
                let slots = &pattern.cell_slots[cc];
                for a in 0..3 {
                    if let Some(i) = dofs[a] {
                        b_hh1[i] += loc.b1[a];
                        b_hh23[i] += loc.b23[a];
                        c_hh[i] += loc.c[a];
                    }
                    for b in 0..3 {
                        if slots[a][b] != NO_SLOT {
                            a23[slots[a][b]] += loc.a23[a][b];
                        }
                    }
                }
                for (t, [a, b, c]) in loc.t.iter().zip(LOCAL_TRIPLES) {
                    if let (Some(i), Some(j), Some(k)) = (dofs[a], dofs[b], dofs[c]) {
                        tensor_raw.push(([i, j, k], *t));
                    }
                }
                d1 += loc.d1;
                xi_h += loc.xi;
                gamma += loc.gamma;
            }
            Err(e) => {
                err.get_or_insert(e);
            }
        },
    );
    if let Some(e) = err {
        return Err(e);
    }
    Ok(BorderStatics {
        a_h1,
        a_h23: pattern.matrix(nc, a23),
        t_h: SparseTensor3::from_entries(nc, tensor_raw),
        b_hh1,
        b_hh23,
        d1,
        xi_h,
        m_h,
        c_hh,
        gamma,
        zeta,
        u_tilde: u_tilde.clone(),
        coarse_space: coarse.clone(),
        fine_space: fine.clone(),
    })
}

/// Builds the tensor `T_H` alone.
pub fn assemble_tensor_th(
    coarse: &FeSpace,
    fine: &FeSpace,
    u_tilde: &CoeffVec,
    zeta: f64,
) -> Result<SparseTensor3> {
    Ok(assemble_border_statics(coarse, fine, u_tilde, |_| 0.0, zeta)?.t_h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigcore::dense_generalized_eigen;
    use crate::fespace::prolongation;
    use crate::mesh::{build_initial_mesh, DomainKind, DomainSpec};
    use rand::{Rng, SeedableRng};
    use std::sync::Arc;

    fn square(n: usize) -> Arc<Mesh> {
        Arc::new(build_initial_mesh(&DomainSpec::new(DomainKind::UnitSquare, n)).unwrap())
    }

    fn reference_triangle_space() -> FeSpace {
        // one cell of the 2-triangle mesh is the reference triangle up to vertex order;
        // use its own geometry for the local checks instead
        FeSpace::unconstrained(square(1))
    }

    #[test]
    fn reference_triangle_element_matrices() {
        let g = CellGeom::new([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        let k = local_stiffness(&g);
        let expect = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for a in 0..3 {
            for b in 0..3 {
                assert!((k[a][b] - expect[a][b]).abs() < 1e-15);
            }
        }
        let m = local_mass(&g);
        for a in 0..3 {
            for b in 0..3 {
                let e = if a == b { 2.0 } else { 1.0 } / 24.0;
                assert!((m[a][b] - e).abs() < 1e-16);
            }
        }
    }

    #[test]
    fn constants_in_kernel_and_total_mass() {
        let s = FeSpace::unconstrained(Arc::new(square(3).refine_uniform()));
        let k = assemble_stiffness_potential(&s, |_| 0.0).unwrap();
        let ones = vec![1.0; s.n_dofs()];
        assert!(k.mul_vec(&ones).iter().all(|r| r.abs() < 1e-12));
        let m = assemble_mass(&s).unwrap();
        assert!((m.bilinear(&ones, &ones) - 1.0).abs() < 1e-12);
        assert!(m.values().iter().all(|&v| v >= 0.0));
        assert!(m.is_symmetric() && k.is_symmetric());
        let l = FeSpace::unconstrained(Arc::new(
            build_initial_mesh(&DomainSpec::new(DomainKind::LShape, 2)).unwrap(),
        ));
        let ml = assemble_mass(&l).unwrap();
        let ones = vec![1.0; l.n_dofs()];
        assert!((ml.bilinear(&ones, &ones) - 3.0).abs() < 1e-12);
        let _ = reference_triangle_space();
    }

    #[test]
    fn weighted_mass_special_cases() {
        let s = FeSpace::unconstrained(square(2));
        let m = assemble_mass(&s).unwrap();
        let ones = CoeffVec::new(&s, vec![1.0; s.n_dofs()]).unwrap();
        let wm = assemble_weighted_mass(&s, &ones, 2.5).unwrap();
        assert!(wm.max_abs_diff(&m.scaled(2.5)) < 1e-15);
        let z = assemble_weighted_mass(&s, &ones, 0.0).unwrap();
        assert_eq!(z.max_abs(), 0.0);
    }

    /// Independent per-cell oracle: tensor-product Gauss-Legendre on the
    /// collapsed square, exact for far higher degree than needed.
    fn collapsed_gauss(g: &CellGeom, f: impl Fn([f64; 3]) -> f64) -> f64 {
        let x = [
            -0.906179845938664,
            -0.538469310105683,
            0.0,
            0.538469310105683,
            0.906179845938664,
        ];
        let w = [
            0.236926885056189,
            0.478628670499366,
            0.568888888888889,
            0.478628670499366,
            0.236926885056189,
        ];
        let mut s = 0.0;
        for i in 0..5 {
            for j in 0..5 {
                let (u, v) = (0.5 * (x[i] + 1.0), 0.5 * (x[j] + 1.0));
                let (l1, l2) = (u, v * (1.0 - u));
                s += 0.25 * w[i] * w[j] * (1.0 - u) * f([1.0 - l1 - l2, l1, l2]);
            }
        }
        2.0 * g.area * s
    }

    #[test]
    fn weighted_mass_matches_independent_quadrature() {
        let s = FeSpace::unconstrained(square(1));
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        let rho: Vec<f64> = (0..s.n_dofs())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let wm = assemble_weighted_mass(&s, &CoeffVec::new(&s, rho.clone()).unwrap(), 3.0).unwrap();
        let mut oracle = vec![vec![0.0; 4]; 4];
        for c in 0..2 {
            let g = CellGeom::of(s.mesh(), c).unwrap();
            let cell = s.mesh().cells()[c];
            let r = cell.map(|v| rho[v]);
            for a in 0..3 {
                for b in 0..3 {
                    oracle[cell[a]][cell[b]] += collapsed_gauss(&g, |l| {
                        let p = r[0] * l[0] + r[1] * l[1] + r[2] * l[2];
                        3.0 * p * p * l[a] * l[b]
                    });
                }
            }
        }
        // the 5-point oracle nodes carry 15 digits, so compare at 1e-13
        for i in 0..4 {
            for j in 0..4 {
                assert!((wm.get(i, j) - oracle[i][j]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn harmonic_trap_eigenvalue_matches_dense_oracle() {
        let s = FeSpace::new(square(4));
        let k = assemble_stiffness_potential(&s, |x| x[0] * x[0] + x[1] * x[1]).unwrap();
        let m = assemble_mass(&s).unwrap();
        let (lam, x) = dense_generalized_eigen(&k.to_dense(), &m.to_dense()).unwrap();
        let kd = k.to_dense();
        let md = m.to_dense();
        // independent route: eigenvalues of M^{-1/2} K M^{-1/2}
        let es = md.clone().symmetric_eigen();
        let mut inv_sqrt = es.eigenvectors.clone();
        for j in 0..inv_sqrt.ncols() {
            let s = 1.0 / es.eigenvalues[j].sqrt();
            for i in 0..inv_sqrt.nrows() {
                inv_sqrt[(i, j)] *= s;
            }
        }
        let b = inv_sqrt.transpose() * &kd * &inv_sqrt;
        let oracle = b.symmetric_eigen().eigenvalues.min();
        assert!((lam - oracle).abs() < 1e-10);
        let xv = nalgebra::DVector::from_column_slice(&x);
        let rq = (xv.transpose() * &kd * &xv)[0] / (xv.transpose() * &md * &xv)[0];
        assert!((rq - oracle).abs() < 1e-10);
    }

    #[test]
    fn degenerate_cell_is_reported() {
        let g = CellGeom::new([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]);
        assert_eq!(g.area, 0.0);
    }

    fn random_coeffs(space: &FeSpace, seed: u64) -> Vec<f64> {
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        (0..space.n_dofs())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect()
    }

    #[test]
    fn statics_with_zero_interaction() {
        let coarse = FeSpace::new(square(3));
        let fine = FeSpace::new(Arc::new(coarse.mesh().refine_uniform()));
        let ut = CoeffVec::new(&fine, random_coeffs(&fine, 3)).unwrap();
        let st = assemble_border_statics(&coarse, &fine, &ut, |_| 0.0, 0.0).unwrap();
        assert_eq!(st.a_h23.max_abs(), 0.0);
        assert!(st.b_hh23.iter().all(|&v| v == 0.0));
        assert_eq!(st.xi_h, 0.0);
        assert_eq!(st.t_h.n_stored(), 0);
        let kf = assemble_stiffness_potential(&fine, |_| 0.0).unwrap();
        assert!((st.d1 - kf.bilinear(&ut.values, &ut.values)).abs() < 1e-12);
    }

    #[test]
    fn statics_for_prolonged_coarse_function() {
        let coarse = FeSpace::new(square(3));
        let fine = FeSpace::new(Arc::new(coarse.mesh().refine_uniform().refine_uniform()));
        let w = random_coeffs(&coarse, 5);
        let p = prolongation(&coarse, &fine).unwrap();
        let ut = CoeffVec::new(&fine, p.mul_vec(&w)).unwrap();
        let st = assemble_border_statics(&coarse, &fine, &ut, |x| x[0] * x[0], 1.0).unwrap();
        let mw = st.m_h.mul_vec(&w);
        for i in 0..coarse.n_dofs() {
            assert!((st.c_hh[i] - mw[i]).abs() < 1e-12);
        }
        assert!((st.gamma - st.m_h.bilinear(&w, &w)).abs() < 1e-12);
    }

    #[test]
    fn quartic_moment_matches_per_cell_integration() {
        let coarse = FeSpace::new(square(2));
        let fine = FeSpace::new(Arc::new(coarse.mesh().refine_uniform()));
        let vals = random_coeffs(&fine, 11);
        let ut = CoeffVec::new(&fine, vals.clone()).unwrap();
        let st = assemble_border_statics(&coarse, &fine, &ut, |_| 0.0, 2.0).unwrap();
        // ∫ λ^α = 2·area·α!/(|α|+2)!, and the multinomial 4!/α! cancels α!
        let uv = fine.vertex_values(&vals);
        let mut oracle = 0.0;
        for c in 0..fine.mesh().n_cells() {
            let g = CellGeom::of(fine.mesh(), c).unwrap();
            let u = fine.mesh().cells()[c].map(|v| uv[v]);
            let mut s = 0.0;
            for i in 0..=4 {
                for j in 0..=(4 - i) {
                    let k = 4 - i - j;
                    s += u[0].powi(i) * u[1].powi(j) * u[2].powi(k);
                }
            }
            oracle += 2.0 * g.area * 24.0 / 720.0 * s;
        }
        assert!(st.xi_h >= 0.0);
        assert!((st.xi_h - 2.0 * oracle).abs() < 1e-13);
        let zero = CoeffVec::zeros(&fine);
        let st0 = assemble_border_statics(&coarse, &fine, &zero, |_| 0.0, 2.0).unwrap();
        assert_eq!(st0.xi_h, 0.0);
        assert_eq!(st0.t_h.n_stored(), 0);
    }
}
