//! Nonlinear iteration on the augmented space `V_H + span{ũ}`.
//!
//! Each iteration only touches coarse-sized data: the density-dependent
//! blocks come from the statics plus contractions of `T_H`.

use nalgebra::{DMatrix, DVector};

use crate::assemble::{weighted_mass_from, BorderStatics, Embedding, NQ};
use crate::eigcore::{dense_eigen_with_factor, fix_sign, Eigenpair, ScfConfig};
use crate::error::{Error, Result};
use crate::exec::map_reduce_ordered;
use crate::fespace::{prolongation, CoeffVec, NO_SLOT};
use crate::mesh::Point;
use crate::mixing::Mixer;
use crate::sparse::{dot, SparseMatrix};

/// Relative threshold on the border pivot of the mass block.
pub const MASS_PIVOT_TOL: f64 = 1e-12;

/// Relative shift below the previous eigenvalue used for inverse iteration.
const SHIFT_FRACTION: f64 = 0.05;
const INVERSE_ITERS: usize = 60;
const INVERSE_TOL: f64 = 1e-14;

#[derive(Debug, Clone)]
pub struct BorderedSystem {
    pub a_h: SparseMatrix,
    pub b_hh: Vec<f64>,
    pub xi: f64,
    pub m_h: SparseMatrix,
    pub c_hh: Vec<f64>,
    pub gamma: f64,
}

fn bordered_dense(a: &SparseMatrix, b: &[f64], d: f64) -> DMatrix<f64> {
    let n = a.n_rows();
    let mut full = DMatrix::zeros(n + 1, n + 1);
    for i in 0..n {
        for (j, v) in a.row(i) {
            full[(i, j)] = v;
        }
        full[(i, n)] = b[i];
        full[(n, i)] = b[i];
    }
    full[(n, n)] = d;
    full
}

impl BorderedSystem {
    pub fn stiffness_block(&self) -> DMatrix<f64> {
        bordered_dense(&self.a_h, &self.b_hh, self.xi)
    }

    pub fn mass_block(&self) -> DMatrix<f64> {
        bordered_dense(&self.m_h, &self.c_hh, self.gamma)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSolution {
    pub lambda: f64,
    pub u_h: Vec<f64>,
    pub alpha: f64,
    pub iters: usize,
}

/// Density-dependent part of the bordered system from the statics and `T_H`.
pub fn update_dynamic(st: &BorderStatics, u_h: &[f64], alpha: f64) -> Result<BorderedSystem> {
    let n = st.coarse_space.n_dofs();
    if u_h.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: u_h.len(),
        });
    }
    let a21 = weighted_mass_from(&st.coarse_space, u_h, st.zeta)?;
    let a22 = st.t_h.contract_mode3_on(&st.a_h1, u_h)?;
    let a_h = SparseMatrix::linear_combination(&[
        (1.0, &st.a_h1),
        (1.0, &a21),
        (2.0 * alpha, &a22),
        (alpha * alpha, &st.a_h23),
    ]);
    let b21 = a22.mul_vec(u_h);
    debug_assert!({
        let other = st.t_h.contract_mode32(u_h)?;
        let scale = b21.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        b21.iter()
            .zip(&other)
            .all(|(a, b)| (a - b).abs() <= 1e-12 * scale)
    });
    let b22 = st.a_h23.mul_vec(u_h);
    let b_hh: Vec<f64> = (0..n)
        .map(|i| st.b_hh1[i] + b21[i] + 2.0 * alpha * b22[i] + alpha * alpha * st.b_hh23[i])
        .collect();
    let d2 = dot(u_h, &b22) + 2.0 * alpha * dot(u_h, &st.b_hh23) + alpha * alpha * st.xi_h;
    Ok(BorderedSystem {
        a_h,
        b_hh,
        xi: st.d1 + d2,
        m_h: st.m_h.clone(),
        c_hh: st.c_hh.clone(),
        gamma: st.gamma,
    })
}

/// Dense bordered eigensolver with the (iteration-invariant) mass block
/// factored once.
pub struct BorderedSolver {
    l: DMatrix<f64>,
    mass: DMatrix<f64>,
    ones_mass: Vec<f64>,
}

impl BorderedSolver {
    pub fn new(m_h: &SparseMatrix, c_hh: &[f64], gamma: f64) -> Result<Self> {
        let n = m_h.n_rows();
        if c_hh.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: c_hh.len(),
            });
        }
        let lh = nalgebra::Cholesky::new(m_h.to_dense())
            .ok_or(Error::IndefiniteMass)?
            .l();
        let l_c = lh
            .solve_lower_triangular(&DVector::from_column_slice(c_hh))
            .ok_or(Error::IndefiniteMass)?;
        let pivot = gamma - l_c.norm_squared();
        if !(pivot > MASS_PIVOT_TOL * gamma.abs()) {
            return Err(Error::MassBlockSingular { pivot });
        }
        let mut l = DMatrix::zeros(n + 1, n + 1);
        l.view_mut((0, 0), (n, n)).copy_from(&lh);
        for j in 0..n {
            l[(n, j)] = l_c[j];
        }
        l[(n, n)] = pivot.sqrt();
        let mass = bordered_dense(m_h, c_hh, gamma);
        let ones_mass = m_h.mul_vec(&vec![1.0; n]);
        Ok(Self { l, mass, ones_mass })
    }

    /// Smallest eigenpair, block-normalized, `α ≥ 0` (or nonnegative mean of `u_H` when `α ≈ 0`).
    pub fn solve(&self, stiffness: &DMatrix<f64>) -> Result<(f64, Vec<f64>, f64)> {
        let n = self.l.nrows() - 1;
        let (lam, x) = dense_eigen_with_factor(stiffness, &self.l)?;
        Ok(self.signed(lam, x.as_slice()[..n].to_vec(), x[n]))
    }

    /// Shifted inverse iteration from `(u0, a0)`. Returns `None` when
    /// `K - σM` is not positive definite (the shift is not below the smallest
    /// eigenvalue) or the iteration stalls; the caller then uses [`Self::solve`].
    pub fn solve_near(
        &self,
        stiffness: &DMatrix<f64>,
        u0: &[f64],
        a0: f64,
        shift: f64,
    ) -> Option<(f64, Vec<f64>, f64)> {
        let n = self.l.nrows() - 1;
        let shifted = stiffness - &self.mass * shift;
        let chol = nalgebra::Cholesky::new(shifted)?;
        let mut x = DVector::from_iterator(n + 1, u0.iter().copied().chain(std::iter::once(a0)));
        let scale = stiffness.norm();
        for _ in 0..INVERSE_ITERS {
            let mut y = chol.solve(&(&self.mass * &x));
            let my = &self.mass * &y;
            let nrm = y.dot(&my).sqrt();
            if !(nrm > 0.0) || !nrm.is_finite() {
                return None;
            }
            y /= nrm;
            let ky = stiffness * &y;
            let lam = y.dot(&ky);
            let res = (&ky - &my * (lam / nrm)).norm();
            x = y;
            if res <= INVERSE_TOL * scale * x.norm() {
                return Some(self.signed(lam, x.as_slice()[..n].to_vec(), x[n]));
            }
        }
        None
    }

    fn signed(&self, lam: f64, mut u: Vec<f64>, mut alpha: f64) -> (f64, Vec<f64>, f64) {
        let flip = if alpha.abs() > 1e-14 {
            alpha < 0.0
        } else {
            dot(&self.ones_mass, &u) < 0.0
        };
        if flip {
            alpha = -alpha;
            u.iter_mut().for_each(|v| *v = -*v);
        }
        (lam, u, alpha)
    }

    pub fn block_inner(&self, u: &[f64], a: f64, v: &[f64], b: f64) -> f64 {
        let n = u.len();
        let mut s = 0.0;
        for i in 0..n {
            let mut row = self.mass[(i, n)] * b;
            for j in 0..n {
                row += self.mass[(i, j)] * v[j];
            }
            s += u[i] * row;
        }
        for j in 0..n {
            s += a * self.mass[(n, j)] * v[j];
        }
        s + a * b * self.mass[(n, n)]
    }
}

pub fn solve_bordered(sys: &BorderedSystem) -> Result<(f64, Vec<f64>, f64)> {
    BorderedSolver::new(&sys.m_h, &sys.c_hh, sys.gamma)?.solve(&sys.stiffness_block())
}

/// Source of bordered systems for the augmented iteration.
pub trait BorderedAssembler {
    fn statics(&self) -> &BorderStatics;
    fn system_matrix(&self, u_h: &[f64], alpha: f64) -> Result<DMatrix<f64>>;
}

impl BorderedAssembler for BorderStatics {
    fn statics(&self) -> &BorderStatics {
        self
    }

    fn system_matrix(&self, u_h: &[f64], alpha: f64) -> Result<DMatrix<f64>> {
        let s = update_dynamic(self, u_h, alpha)?;
        Ok(bordered_dense(&s.a_h, &s.b_hh, s.xi))
    }
}

/// Comparison assembler: reintegrates `ζ(u_H + αũ)²` against every basis
/// pair on the fine mesh in each iteration.
pub struct FineReassembly<'a, W> {
    st: &'a BorderStatics,
    emb: Embedding,
    ut_vertex: Vec<f64>,
    w: W,
}

impl<'a, W> FineReassembly<'a, W>
where
    W: Fn(Point) -> f64 + Sync + Send,
{
    pub fn new(st: &'a BorderStatics, w: W) -> Result<Self> {
        Ok(Self {
            emb: Embedding::new(&st.coarse_space, &st.fine_space)?,
            ut_vertex: st.fine_space.vertex_values(&st.u_tilde.values),
            st,
            w,
        })
    }

    /// `(∫ζρ²φφ, ∫ζρ²ũφ, ∫ζρ²ũ²)` with `ρ = u_H + αũ`.
    pub fn nonlinear_blocks(
        &self,
        u_h: &[f64],
        alpha: f64,
    ) -> Result<(SparseMatrix, Vec<f64>, f64)> {
        let st = self.st;
        let coarse = &st.coarse_space;
        let n = coarse.n_dofs();
        if u_h.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: u_h.len(),
            });
        }
        let fine = &st.fine_space;
        let fine_mesh = fine.mesh();
        let pattern = coarse.pattern();
        let zeta = st.zeta;
        let mut vals = vec![0.0; pattern.nnz()];
        let mut b = vec![0.0; n];
        let mut xi = 0.0;
        let mut err = None;
        map_reduce_ordered(
            coarse.mesh().n_cells(),
            |cc| -> Result<([[f64; 3]; 3], [f64; 3], f64)> {
                let dofs = coarse.cell_dofs(cc);
                let uc = dofs.map(|d| d.map_or(0.0, |i| u_h[i]));
                let mut a = [[0.0; 3]; 3];
                let mut bl = [0.0; 3];
                let mut x = 0.0;
                for &f in &self.emb.children[cc] {
                    let e = self.emb.cell(fine_mesh, cc, f, &self.w)?;
                    let uv = fine_mesh.cells()[f].map(|v| self.ut_vertex[v]);
                    for q in 0..NQ {
                        let fb = &e.fine_bary[q];
                        let ut = uv[0] * fb[0] + uv[1] * fb[1] + uv[2] * fb[2];
                        let phi = &e.phi[q];
                        let rho = uc[0] * phi[0] + uc[1] * phi[1] + uc[2] * phi[2] + alpha * ut;
                        let s = self.emb.weights[q] * e.area * zeta * rho * rho;
                        x += s * ut * ut;
                        for i in 0..3 {
                            bl[i] += s * ut * phi[i];
                            for j in 0..3 {
                                a[i][j] += s * phi[i] * phi[j];
                            }
                        }
                    }
                }
                Ok((a, bl, x))
            },
            |cc, r| match r {
                Ok((a, bl, x)) => {
                    let dofs = coarse.cell_dofs(cc);
                    let slots = &pattern.cell_slots[cc];
                    for i in 0..3 {
                        if let Some(d) = dofs[i] {
                            b[d] += bl[i];
                        }
                        for j in 0..3 {
                            if slots[i][j] != NO_SLOT {
                                vals[slots[i][j]] += a[i][j];
                            }
                        }
                    }
                    xi += x;
                }
                Err(e) => {
                    err.get_or_insert(e);
                }
            },
        );
        if let Some(e) = err {
            return Err(e);
        }
        Ok((pattern.matrix(n, vals), b, xi))
    }
}

impl<W> BorderedAssembler for FineReassembly<'_, W>
where
    W: Fn(Point) -> f64 + Sync + Send,
{
    fn statics(&self) -> &BorderStatics {
        self.st
    }

    fn system_matrix(&self, u_h: &[f64], alpha: f64) -> Result<DMatrix<f64>> {
        let (a_nl, b_nl, xi_nl) = self.nonlinear_blocks(u_h, alpha)?;
        let a = SparseMatrix::linear_combination(&[(1.0, &self.st.a_h1), (1.0, &a_nl)]);
        let b: Vec<f64> = self
            .st
            .b_hh1
            .iter()
            .zip(&b_nl)
            .map(|(p, q)| p + q)
            .collect();
        Ok(bordered_dense(&a, &b, self.st.d1 + xi_nl))
    }
}

/// Damped fixed-point iteration on the augmented space.
///
/// `init = None` starts from `(u_H, α) = (0, 1)`, i.e. from `ũ` itself.
pub fn augmented_scf<A: BorderedAssembler + ?Sized>(
    asm: &A,
    init: Option<(&[f64], f64)>,
    cfg: &ScfConfig,
) -> Result<AugmentedSolution> {
    cfg.validate()?;
    let st = asm.statics();
    let n = st.coarse_space.n_dofs();
    let solver = BorderedSolver::new(&st.m_h, &st.c_hh, st.gamma)?;
    let (mut u, mut alpha) = match init {
        Some((u0, a0)) => {
            if u0.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: u0.len(),
                });
            }
            if solver.block_inner(u0, a0, u0, a0) > 0.0 {
                (u0.to_vec(), a0)
            } else {
                (vec![0.0; n], 1.0)
            }
        }
        None => (vec![0.0; n], 1.0),
    };
    let normalize = |u: &mut Vec<f64>, a: &mut f64| {
        let s = solver.block_inner(u, *a, u, *a).sqrt();
        u.iter_mut().for_each(|v| *v /= s);
        *a /= s;
    };
    normalize(&mut u, &mut alpha);
    let mut mixer = Mixer::new(cfg.damping, cfg.anderson_depth);
    let mut prev: Option<(f64, Vec<f64>, f64)> = None;
    for it in 1..=cfg.max_iters {
        let k = asm.system_matrix(&u, alpha)?;
        let near = prev.as_ref().and_then(|(lp, up, ap)| {
            solver.solve_near(&k, up, *ap, lp - SHIFT_FRACTION * lp.abs())
        });
        let (lam, mut uh, mut ah) = match near {
            Some(r) => r,
            None => solver.solve(&k)?,
        };
        if solver.block_inner(&uh, ah, &u, alpha) < 0.0 {
            uh.iter_mut().for_each(|v| *v = -*v);
            ah = -ah;
        }
        let done = if st.zeta == 0.0 {
            true
        } else if let Some((lp, up, ap)) = &prev {
            let d: Vec<f64> = uh.iter().zip(up).map(|(a, b)| a - b).collect();
            let da = ah - ap;
            let du = solver.block_inner(&d, da, &d, da).max(0.0).sqrt();
            (lam - lp).abs() <= cfg.tol_lambda && du <= cfg.tol_u
        } else {
            false
        };
        if done {
            if ah < 0.0 || (ah.abs() <= 1e-14 && dot(&solver.ones_mass, &uh) < 0.0) {
                uh.iter_mut().for_each(|v| *v = -*v);
                ah = -ah;
            }
            return Ok(AugmentedSolution {
                lambda: lam,
                u_h: uh,
                alpha: ah,
                iters: it,
            });
        }
        u.push(alpha);
        uh.push(ah);
        let mut next = mixer.step(&u, &uh);
        uh.pop();
        alpha = next.pop().unwrap();
        u = next;
        normalize(&mut u, &mut alpha);
        if let Some((lp, _, _)) = &prev {
            if it == cfg.max_iters {
                return Err(Error::ScfNotConverged {
                    iters: it,
                    change: (lam - lp).abs(),
                });
            }
        }
        prev = Some((lam, uh, ah));
    }
    Err(Error::ScfNotConverged {
        iters: cfg.max_iters,
        change: f64::INFINITY,
    })
}

/// `u_h = P u_H + α ũ` on the fine space, renormalized in the fine mass.
pub fn reconstruct(sol: &AugmentedSolution, st: &BorderStatics) -> Result<Eigenpair> {
    let p = prolongation(&st.coarse_space, &st.fine_space)?;
    let m = crate::assemble::assemble_mass(&st.fine_space)?;
    reconstruct_with(sol, st, &p, &m)
}

/// [`reconstruct`] with precomputed prolongation and fine mass matrix.
pub fn reconstruct_with(
    sol: &AugmentedSolution,
    st: &BorderStatics,
    p: &SparseMatrix,
    m_fine: &SparseMatrix,
) -> Result<Eigenpair> {
    let mut u = p.try_mul_vec(&sol.u_h)?;
    for (ui, ti) in u.iter_mut().zip(&st.u_tilde.values) {
        *ui += sol.alpha * ti;
    }
    let nrm = m_fine.bilinear(&u, &u).sqrt();
    if nrm > 0.0 {
        u.iter_mut().for_each(|v| *v /= nrm);
    }
    fix_sign(&mut u, m_fine);
    Ok(Eigenpair {
        lambda: sol.lambda,
        coeffs: CoeffVec::new(&st.fine_space, u)?,
    })
}
