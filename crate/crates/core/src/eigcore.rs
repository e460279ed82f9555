//! Smallest eigenpairs of symmetric-definite pencils and the damped SCF
//! iteration for the discrete GPE on one space.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::assemble::{assemble_mass, assemble_operator};
use crate::error::{Error, Result};
use crate::fespace::{interpolate, CoeffVec, FeSpace};
use crate::mesh::Point;
use crate::mglinear::{build_prolongations, Jacobi, MgHierarchy, Preconditioner};
use crate::mixing::Mixer;
use crate::sparse::{dot, norm2, SparseMatrix};

/// Size up to which pencils are solved densely.
pub const DENSE_LIMIT: usize = 500;
/// Relative residual required from the iterative eigensolver.
pub const EIG_TOL: f64 = 1e-10;
const LOBPCG_MAX_ITERS: usize = 3000;

#[derive(Debug, Clone)]
pub struct Eigenpair {
    pub lambda: f64,
    pub coeffs: CoeffVec,
}

impl Eigenpair {
    pub fn space(&self) -> &FeSpace {
        &self.coeffs.space
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScfConfig {
    pub damping: f64,
    pub tol_lambda: f64,
    pub tol_u: f64,
    pub max_iters: usize,
    /// History length of the Anderson extrapolation; 0 gives the plain damped update.
    #[serde(default = "default_depth")]
    pub anderson_depth: usize,
}

fn default_depth() -> usize {
    5
}

impl Default for ScfConfig {
    fn default() -> Self {
        Self {
            damping: 0.5,
            tol_lambda: 1e-10,
            tol_u: 1e-8,
            max_iters: 500,
            anderson_depth: default_depth(),
        }
    }
}

impl ScfConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "damping must lie in (0, 1], got {}",
                self.damping
            )));
        }
        if !(self.tol_lambda > 0.0 && self.tol_u > 0.0) {
            return Err(Error::InvalidInput(
                "SCF tolerances must be positive".into(),
            ));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidInput("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

fn m_norm(m: &SparseMatrix, x: &[f64]) -> f64 {
    m.bilinear(x, x).max(0.0).sqrt()
}

/// Flips `x` so that `Σ x·(M·1) ≥ 0`.
pub fn fix_sign(x: &mut [f64], m: &SparseMatrix) {
    let ones = vec![1.0; x.len()];
    if m.bilinear(&ones, x) < 0.0 {
        x.iter_mut().for_each(|v| *v = -*v);
    }
}

fn fix_sign_dense(x: &mut [f64], m: &DMatrix<f64>) {
    let s: f64 = (0..x.len()).map(|i| m.row(i).sum() * x[i]).sum();
    if s < 0.0 {
        x.iter_mut().for_each(|v| *v = -*v);
    }
}

/// Lower Cholesky factor of an SPD matrix.
pub fn dense_cholesky(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    nalgebra::Cholesky::new(m.clone())
        .map(|c| c.l())
        .ok_or(Error::IndefiniteMass)
}

/// Smallest eigenpair of `(A, LLᵀ)`; the vector is returned `M`-normalized
/// but without a sign convention.
pub fn dense_eigen_with_factor(a: &DMatrix<f64>, l: &DMatrix<f64>) -> Result<(f64, DVector<f64>)> {
    let n = a.nrows();
    if a.ncols() != n || l.nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: l.nrows(),
        });
    }
    let y = l.solve_lower_triangular(a).ok_or(Error::IndefiniteMass)?;
    let c = l
        .solve_lower_triangular(&y.transpose())
        .ok_or(Error::IndefiniteMass)?;
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let (k, lam) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, &v)| (k, v))
        .ok_or(Error::InvalidInput("empty pencil".into()))?;
    if !lam.is_finite() {
        return Err(Error::NotConverged {
            iters: 0,
            residual: f64::NAN,
        });
    }
    let z = eig.eigenvectors.column(k).into_owned();
    let x = l
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or(Error::IndefiniteMass)?;
    Ok((lam, x))
}

/// Smallest eigenpair of a dense symmetric-definite pencil.
pub fn dense_generalized_eigen(a: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<(f64, Vec<f64>)> {
    if a.nrows() == 0 {
        return Err(Error::InvalidInput("empty eigenproblem".into()));
    }
    let l = dense_cholesky(m)?;
    let (lam, x) = dense_eigen_with_factor(a, &l)?;
    let mut x: Vec<f64> = x.as_slice().to_vec();
    fix_sign_dense(&mut x, m);
    Ok((lam, x))
}

/// Smallest eigenpair of `(A, M)`: dense for small pencils, preconditioned
/// LOBPCG otherwise. `x` satisfies `xᵀMx = 1` and `Σ x·(M·1) ≥ 0`.
pub fn smallest_eigpair(a: &SparseMatrix, m: &SparseMatrix) -> Result<(f64, Vec<f64>)> {
    if a.n_rows() <= DENSE_LIMIT {
        return dense_generalized_eigen(&a.to_dense(), &m.to_dense());
    }
    let jac = Jacobi::new(a);
    let (lam, x, _) = lobpcg(a, m, &jac, None, EIG_TOL, LOBPCG_MAX_ITERS)?;
    Ok((lam, x))
}

/// Same as [`smallest_eigpair`] with a caller-supplied preconditioner and start vector.
pub fn smallest_eigpair_with(
    a: &SparseMatrix,
    m: &SparseMatrix,
    prec: &dyn Preconditioner,
    x0: Option<&[f64]>,
) -> Result<(f64, Vec<f64>)> {
    if a.n_rows() <= DENSE_LIMIT {
        return dense_generalized_eigen(&a.to_dense(), &m.to_dense());
    }
    let (lam, x, _) = lobpcg(a, m, prec, x0, EIG_TOL, LOBPCG_MAX_ITERS)?;
    Ok((lam, x))
}

struct Triple {
    v: Vec<f64>,
    av: Vec<f64>,
    mv: Vec<f64>,
}

impl Triple {
    fn axpy(&mut self, c: f64, o: &Triple) {
        for ((a, b), (c1, d)) in self
            .v
            .iter_mut()
            .zip(&o.v)
            .zip(self.av.iter_mut().zip(&o.av))
        {
            *a += c * b;
            *c1 += c * d;
        }
        for (a, b) in self.mv.iter_mut().zip(&o.mv) {
            *a += c * b;
        }
    }

    fn scale(&mut self, c: f64) {
        for x in self
            .v
            .iter_mut()
            .chain(self.av.iter_mut())
            .chain(self.mv.iter_mut())
        {
            *x *= c;
        }
    }
}

fn combine(basis: &[Triple], c: &[f64], skip_first: bool) -> Triple {
    let n = basis[0].v.len();
    let mut t = Triple {
        v: vec![0.0; n],
        av: vec![0.0; n],
        mv: vec![0.0; n],
    };
    for (k, b) in basis.iter().enumerate() {
        if skip_first && k == 0 {
            continue;
        }
        t.axpy(c[k], b);
    }
    t
}

/// Single-vector LOBPCG for the smallest eigenpair.
pub fn lobpcg(
    a: &SparseMatrix,
    m: &SparseMatrix,
    prec: &dyn Preconditioner,
    x0: Option<&[f64]>,
    tol: f64,
    max_iters: usize,
) -> Result<(f64, Vec<f64>, usize)> {
    let n = a.n_rows();
    if m.n_rows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: m.n_rows(),
        });
    }
    if m.diagonal().iter().any(|&d| !(d > 0.0)) {
        return Err(Error::IndefiniteMass);
    }
    let mut x = match x0 {
        Some(v) if v.len() == n && norm2(v) > 0.0 => v.to_vec(),
        Some(v) if v.len() != n => {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: v.len(),
            })
        }
        _ => {
            let ones = vec![1.0; n];
            prec.apply(&ones)
        }
    };
    let nx = m_norm(m, &x);
    if !(nx > 0.0) {
        return Err(Error::IndefiniteMass);
    }
    x.iter_mut().for_each(|v| *v /= nx);
    let mut p: Option<Triple> = None;
    let mut res = f64::INFINITY;
    for it in 0..max_iters {
        let mx = m.mul_vec(&x);
        let ax = a.mul_vec(&x);
        let xm = dot(&x, &mx);
        let lam = dot(&x, &ax) / xm;
        let r: Vec<f64> = ax.iter().zip(&mx).map(|(p, q)| p - lam * q).collect();
        res = norm2(&r) / norm2(&ax).max(f64::MIN_POSITIVE);
        if res <= tol {
            let s = 1.0 / xm.sqrt();
            x.iter_mut().for_each(|v| *v *= s);
            fix_sign(&mut x, m);
            return Ok((lam, x, it));
        }
        let mut basis = vec![Triple {
            v: x.clone(),
            av: ax,
            mv: mx,
        }];
        basis[0].scale(1.0 / xm.sqrt());
        let w = prec.apply(&r);
        let w = Triple {
            av: a.mul_vec(&w),
            mv: m.mul_vec(&w),
            v: w,
        };
        for cand in std::iter::once(w).chain(p.take()) {
            let mut c = cand;
            let n0 = dot(&c.v, &c.mv).max(0.0).sqrt();
            if !(n0 > 0.0) {
                continue;
            }
            c.scale(1.0 / n0);
            for _ in 0..2 {
                for q in &basis {
                    let h = dot(&q.v, &c.mv);
                    c.axpy(-h, q);
                }
            }
            let nn = dot(&c.v, &c.mv);
            if nn < 0.0 && nn.abs() > 1e-10 {
                return Err(Error::IndefiniteMass);
            }
            if nn.max(0.0).sqrt() < 1e-10 {
                continue;
            }
            c.scale(1.0 / nn.sqrt());
            basis.push(c);
        }
        let k = basis.len();
        let s = DMatrix::from_fn(k, k, |i, j| {
            0.5 * (dot(&basis[i].v, &basis[j].av) + dot(&basis[j].v, &basis[i].av))
        });
        let eig = SymmetricEigen::new(s);
        let (kmin, _) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        let c: Vec<f64> = eig.eigenvectors.column(kmin).iter().copied().collect();
        let xn = combine(&basis, &c, false);
        if k > 1 {
            p = Some(combine(&basis, &c, true));
        }
        x = xn.v;
    }
    Err(Error::NotConverged {
        iters: max_iters,
        residual: res,
    })
}

/// Positive start function: bubble over the domain's bounding box.
pub fn initial_guess(space: &FeSpace, m: &SparseMatrix) -> Vec<f64> {
    let ([x0, y0], [x1, y1]) = bounding_box(space);
    let mut u = interpolate(space, |p: Point| {
        (p[0] - x0) * (x1 - p[0]) * (p[1] - y0) * (y1 - p[1])
    })
    .values;
    let s = m_norm(m, &u);
    if s > 0.0 {
        u.iter_mut().for_each(|v| *v /= s);
    }
    u
}

fn bounding_box(space: &FeSpace) -> (Point, Point) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in space.mesh().vertices() {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    (lo, hi)
}

/// Iteration count and convergence record of an SCF run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScfStats {
    pub iters: usize,
    pub change_lambda: f64,
    pub change_u: f64,
}

/// Damped SCF on a single space. Large spaces use a Jacobi-preconditioned
/// eigensolver; prefer [`scf_solve_multilevel`] when a hierarchy exists.
pub fn scf_solve<W>(
    space: &FeSpace,
    w: W,
    zeta: f64,
    cfg: &ScfConfig,
    init: Option<&Eigenpair>,
) -> Result<(Eigenpair, usize)>
where
    W: Fn(Point) -> f64 + Sync + Send,
{
    scf_solve_multilevel(std::slice::from_ref(space), None, w, zeta, cfg, init)
        .map(|(e, s)| (e, s.iters))
}

/// Damped SCF on the finest of `spaces`, preconditioning the inner
/// eigensolves with a multigrid V-cycle over the whole hierarchy.
pub fn scf_solve_multilevel<W>(
    spaces: &[FeSpace],
    prolongations: Option<&[SparseMatrix]>,
    w: W,
    zeta: f64,
    cfg: &ScfConfig,
    init: Option<&Eigenpair>,
) -> Result<(Eigenpair, ScfStats)>
where
    W: Fn(Point) -> f64 + Sync + Send,
{
    cfg.validate()?;
    let space = spaces
        .last()
        .ok_or(Error::InvalidInput("no space given".into()))?;
    if space.n_dofs() == 0 {
        return Err(Error::InvalidInput(
            "space has no interior degrees of freedom".into(),
        ));
    }
    let owned;
    let prolongations = match prolongations {
        Some(p) => p,
        None => {
            owned = build_prolongations(spaces)?;
            &owned
        }
    };
    let m = assemble_mass(space)?;
    let mut u = match init {
        Some(e) if e.space().same_as(space) => {
            let mut v = e.coeffs.values.clone();
            let s = m_norm(&m, &v);
            if s > 0.0 {
                v.iter_mut().for_each(|x| *x /= s);
                v
            } else {
                initial_guess(space, &m)
            }
        }
        Some(_) => {
            return Err(Error::InvalidInput(
                "initial pair lives on another space".into(),
            ))
        }
        None => initial_guess(space, &m),
    };
    let mut prev: Option<(f64, Vec<f64>)> = None;
    let mut mixer = Mixer::new(cfg.damping, cfg.anderson_depth);
    for it in 1..=cfg.max_iters {
        let a = assemble_operator(space, &w, zeta, Some(&u))?;
        let (lam, mut uh) = if a.n_rows() <= DENSE_LIMIT {
            dense_generalized_eigen(&a.to_dense(), &m.to_dense())?
        } else {
            let start = prev.as_ref().map(|p| p.1.as_slice()).unwrap_or(&u);
            if spaces.len() > 1 {
                let h = MgHierarchy::from_fine_matrix(
                    spaces.to_vec(),
                    prolongations.to_vec(),
                    a.clone(),
                )?;
                smallest_eigpair_with(&a, &m, &h, Some(start))?
            } else {
                smallest_eigpair_with(&a, &m, &Jacobi::new(&a), Some(start))?
            }
        };
        if m.bilinear(&uh, &u) < 0.0 {
            uh.iter_mut().for_each(|v| *v = -*v);
        }
        if zeta == 0.0 {
            fix_sign(&mut uh, &m);
            return Ok((
                Eigenpair {
                    lambda: lam,
                    coeffs: CoeffVec::new(space, uh)?,
                },
                ScfStats {
                    iters: 1,
                    change_lambda: 0.0,
                    change_u: 0.0,
                },
            ));
        }
        if let Some((lp, up)) = &prev {
            let dl = (lam - lp).abs();
            let d: Vec<f64> = uh.iter().zip(up).map(|(a, b)| a - b).collect();
            let du = m_norm(&m, &d);
            if dl <= cfg.tol_lambda && du <= cfg.tol_u {
                fix_sign(&mut uh, &m);
                return Ok((
                    Eigenpair {
                        lambda: lam,
                        coeffs: CoeffVec::new(space, uh)?,
                    },
                    ScfStats {
                        iters: it,
                        change_lambda: dl,
                        change_u: du,
                    },
                ));
            }
            if it == cfg.max_iters {
                return Err(Error::ScfNotConverged {
                    iters: it,
                    change: dl.max(du),
                });
            }
        }
        u = mixer.step(&u, &uh);
        let s = m_norm(&m, &u);
        u.iter_mut().for_each(|v| *v /= s);
        prev = Some((lam, uh));
    }
    Err(Error::ScfNotConverged {
        iters: cfg.max_iters,
        change: f64::INFINITY,
    })
}
