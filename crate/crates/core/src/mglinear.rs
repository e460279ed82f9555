//! Geometric multigrid for the SPD systems of the auxiliary linear problem.
//!
//! Symmetric Gauss-Seidel smoothing, Galerkin coarse operators and a dense
//! Cholesky solve on the coarsest level.

use nalgebra::{Cholesky, DVector, Dyn};

use crate::assemble::assemble_operator;
use crate::error::{Error, Result};
use crate::fespace::{prolongation, FeSpace};
use crate::mesh::Point;
use crate::sparse::{norm2, SparseMatrix};

/// Anything that approximately inverts a system matrix.
pub trait Preconditioner {
    fn apply(&self, r: &[f64]) -> Vec<f64>;
}

/// Diagonal scaling.
pub struct Jacobi {
    inv_diag: Vec<f64>,
}

impl Jacobi {
    pub fn new(a: &SparseMatrix) -> Self {
        Self {
            inv_diag: a
                .diagonal()
                .iter()
                .map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 })
                .collect(),
        }
    }
}

impl Preconditioner for Jacobi {
    fn apply(&self, r: &[f64]) -> Vec<f64> {
        r.iter().zip(&self.inv_diag).map(|(a, b)| a * b).collect()
    }
}

#[derive(Debug, Clone)]
pub struct MgHierarchy {
    /// Coarsest first.
    pub spaces: Vec<FeSpace>,
    pub matrices: Vec<SparseMatrix>,
    /// `prolongations[l]` maps level `l` to level `l + 1`.
    pub prolongations: Vec<SparseMatrix>,
    pub smoother_sweeps: usize,
    pub coarse_direct_threshold: usize,
    coarse_factor: Option<Cholesky<f64, Dyn>>,
}

pub const DEFAULT_SWEEPS: usize = 2;
pub const DEFAULT_COARSE_DIRECT: usize = 500;
pub const DEFAULT_MAX_CYCLES: usize = 100;

/// Prolongation operators between consecutive spaces.
pub fn build_prolongations(spaces: &[FeSpace]) -> Result<Vec<SparseMatrix>> {
    spaces
        .windows(2)
        .map(|w| {
            prolongation(&w[0], &w[1]).map_err(|e| match e {
                Error::NotADescendant(m) => Error::NotNested(m),
                e => e,
            })
        })
        .collect()
}

/// Hierarchy for `-Δ + W + ζ ρ²` with `ρ` given on the finest space.
pub fn build_hierarchy<W>(
    spaces: &[FeSpace],
    w: W,
    zeta: f64,
    density: Option<&[f64]>,
) -> Result<MgHierarchy>
where
    W: Fn(Point) -> f64 + Sync + Send,
{
    if spaces.is_empty() {
        return Err(Error::InvalidInput("empty hierarchy".into()));
    }
    let prolongations = build_prolongations(spaces)?;
    let fine = assemble_operator(spaces.last().unwrap(), w, zeta, density)?;
    MgHierarchy::from_fine_matrix(spaces.to_vec(), prolongations, fine)
}

impl MgHierarchy {
    /// Builds the coarse operators by Galerkin projection of `fine`.
    pub fn from_fine_matrix(
        spaces: Vec<FeSpace>,
        prolongations: Vec<SparseMatrix>,
        fine: SparseMatrix,
    ) -> Result<Self> {
        if prolongations.len() + 1 != spaces.len() {
            return Err(Error::NotNested(format!(
                "{} spaces but {} prolongations",
                spaces.len(),
                prolongations.len()
            )));
        }
        for (l, p) in prolongations.iter().enumerate() {
            if p.n_rows() != spaces[l + 1].n_dofs() || p.n_cols() != spaces[l].n_dofs() {
                return Err(Error::NotNested(format!(
                    "prolongation {l} has wrong shape"
                )));
            }
        }
        if fine.n_rows() != spaces.last().unwrap().n_dofs() {
            return Err(Error::DimensionMismatch {
                expected: spaces.last().unwrap().n_dofs(),
                got: fine.n_rows(),
            });
        }
        let mut matrices = vec![fine];
        for p in prolongations.iter().rev() {
            let next = matrices.last().unwrap().galerkin(p);
            matrices.push(next);
        }
        matrices.reverse();
        let mut h = Self {
            spaces,
            matrices,
            prolongations,
            smoother_sweeps: DEFAULT_SWEEPS,
            coarse_direct_threshold: DEFAULT_COARSE_DIRECT,
            coarse_factor: None,
        };
        h.factor_coarse();
        Ok(h)
    }

    fn factor_coarse(&mut self) {
        let a0 = &self.matrices[0];
        self.coarse_factor = if a0.n_rows() <= self.coarse_direct_threshold && a0.n_rows() > 0 {
            Cholesky::new(a0.to_dense())
        } else {
            None
        };
    }

    pub fn n_levels(&self) -> usize {
        self.matrices.len()
    }

    pub fn finest(&self) -> &SparseMatrix {
        self.matrices.last().unwrap()
    }

    pub fn with_sweeps(mut self, sweeps: usize) -> Self {
        self.smoother_sweeps = sweeps;
        self
    }

    pub fn with_coarse_threshold(mut self, threshold: usize) -> Self {
        self.coarse_direct_threshold = threshold;
        self.factor_coarse();
        self
    }

    fn level_cycle(&self, l: usize, b: &[f64], x: &mut [f64]) {
        let a = &self.matrices[l];
        if l == 0 {
            if let Some(ch) = &self.coarse_factor {
                let sol = ch.solve(&DVector::from_column_slice(b));
                x.copy_from_slice(sol.as_slice());
            } else {
                for _ in 0..20 * self.smoother_sweeps.max(1) {
                    sgs_sweep(a, b, x);
                }
            }
            return;
        }
        for _ in 0..self.smoother_sweeps {
            sgs_sweep(a, b, x);
        }
        let mut r = b.to_vec();
        let ax = a.mul_vec(x);
        for (ri, axi) in r.iter_mut().zip(&ax) {
            *ri -= axi;
        }
        let p = &self.prolongations[l - 1];
        let rc = p.mul_vec_transpose(&r);
        let mut ec = vec![0.0; rc.len()];
        self.level_cycle(l - 1, &rc, &mut ec);
        let e = p.mul_vec(&ec);
        for (xi, ei) in x.iter_mut().zip(&e) {
            *xi += ei;
        }
        for _ in 0..self.smoother_sweeps {
            sgs_sweep(a, b, x);
        }
    }

    /// Runs up to `max_cycles` V-cycles until `‖b − Ax‖₂ ≤ tol·‖b‖₂`.
    pub fn solve(
        &self,
        rhs: &[f64],
        x0: &[f64],
        tol: f64,
        max_cycles: usize,
    ) -> Result<(Vec<f64>, usize)> {
        let a = self.finest();
        check_len(a.n_rows(), rhs.len())?;
        check_len(a.n_rows(), x0.len())?;
        let bnorm = norm2(rhs);
        let mut x = x0.to_vec();
        let target = tol * bnorm;
        let mut res = residual_norm(a, rhs, &x);
        let mut cycles = 0;
        while res > target {
            if cycles == max_cycles {
                return Err(Error::MaxCyclesExceeded {
                    cycles,
                    residual: res / bnorm.max(f64::MIN_POSITIVE),
                });
            }
            self.level_cycle(self.n_levels() - 1, rhs, &mut x);
            cycles += 1;
            res = residual_norm(a, rhs, &x);
        }
        Ok((x, cycles))
    }
}

impl Preconditioner for MgHierarchy {
    fn apply(&self, r: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; r.len()];
        self.level_cycle(self.n_levels() - 1, r, &mut x);
        x
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

pub fn residual_norm(a: &SparseMatrix, b: &[f64], x: &[f64]) -> f64 {
    let ax = a.mul_vec(x);
    b.iter()
        .zip(&ax)
        .map(|(bi, ai)| (bi - ai) * (bi - ai))
        .sum::<f64>()
        .sqrt()
}

/// One forward then one backward Gauss-Seidel pass.
pub fn sgs_sweep(a: &SparseMatrix, b: &[f64], x: &mut [f64]) {
    let (rp, ci, v) = (a.row_ptr(), a.col_idx(), a.values());
    let n = a.n_rows();
    let relax = |i: usize, x: &mut [f64]| {
        let mut s = b[i];
        let mut d = 0.0;
        for k in rp[i]..rp[i + 1] {
            let j = ci[k];
            if j == i {
                d = v[k];
            } else {
                s -= v[k] * x[j];
            }
        }
        if d != 0.0 {
            x[i] = s / d;
        }
    };
    for i in 0..n {
        relax(i, x);
    }
    for i in (0..n).rev() {
        relax(i, x);
    }
}

/// One V-cycle on the finest level starting from `x0`.
pub fn vcycle(h: &MgHierarchy, rhs: &[f64], x0: &[f64]) -> Result<Vec<f64>> {
    check_len(h.finest().n_rows(), rhs.len())?;
    check_len(h.finest().n_rows(), x0.len())?;
    let mut x = x0.to_vec();
    h.level_cycle(h.n_levels() - 1, rhs, &mut x);
    Ok(x)
}

/// Solves `A ũ = λ_k M u_k` starting from `u_k` to relative residual `tol`.
pub fn solve_aux(
    h: &MgHierarchy,
    lambda_k: f64,
    u_k_fine: &[f64],
    mass_fine: &SparseMatrix,
    tol: f64,
) -> Result<(Vec<f64>, usize)> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let mut rhs = mass_fine.try_mul_vec(u_k_fine)?;
    for r in &mut rhs {
        *r *= lambda_k;
    }
    h.solve(&rhs, u_k_fine, tol, DEFAULT_MAX_CYCLES)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assemble::{assemble_mass, assemble_stiffness_potential};
    use crate::mesh::{build_initial_mesh, DomainKind, DomainSpec};
    use rand::{Rng, SeedableRng};
    use std::sync::Arc;

    fn spaces(levels: usize) -> Vec<FeSpace> {
        let mut m = build_initial_mesh(&DomainSpec::new(DomainKind::UnitSquare, 2)).unwrap();
        let mut out = vec![FeSpace::new(Arc::new(m.clone()))];
        for _ in 1..levels {
            m = m.refine_uniform();
            out.push(FeSpace::new(Arc::new(m.clone())));
        }
        out
    }

    fn a_norm(a: &SparseMatrix, e: &[f64]) -> f64 {
        a.bilinear(e, e).sqrt()
    }

    #[test]
    fn zero_rhs_is_fixed() {
        let h = build_hierarchy(&spaces(3), |_| 0.0, 0.0, None).unwrap();
        let n = h.finest().n_rows();
        assert!(vcycle(&h, &vec![0.0; n], &vec![0.0; n])
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn finest_matrix_and_galerkin_coherence() {
        let sp = spaces(3);
        let w = |x: Point| x[0] * x[0] + x[1] * x[1];
        let h = build_hierarchy(&sp, w, 0.0, None).unwrap();
        let direct = assemble_stiffness_potential(&sp[2], w).unwrap();
        assert!(h.finest().max_abs_diff(&direct) < 1e-14);
        for l in 0..2 {
            let g = h.matrices[l + 1].galerkin(&h.prolongations[l]);
            assert!(g.max_abs_diff(&h.matrices[l]) < 1e-12);
            let d = assemble_stiffness_potential(&sp[l], w).unwrap();
            assert!(d.max_abs_diff(&h.matrices[l]) < 1e-12);
        }
    }

    #[test]
    fn every_level_is_spd() {
        let h = build_hierarchy(&spaces(3), |_| 1.0, 0.0, None).unwrap();
        for a in &h.matrices {
            let ev = a.to_dense().symmetric_eigen().eigenvalues;
            assert!(ev.min() > 0.0);
        }
    }

    #[test]
    fn not_nested_rejected() {
        let a = FeSpace::new(Arc::new(
            build_initial_mesh(&DomainSpec::new(DomainKind::UnitSquare, 2)).unwrap(),
        ));
        let b = FeSpace::new(Arc::new(
            build_initial_mesh(&DomainSpec::new(DomainKind::UnitSquare, 3)).unwrap(),
        ));
        assert!(matches!(
            build_hierarchy(&[a, b], |_| 0.0, 0.0, None),
            Err(Error::NotNested(_))
        ));
    }

    #[test]
    fn manufactured_solution_ten_cycles() {
        let h = build_hierarchy(&spaces(4), |_| 0.0, 0.0, None).unwrap();
        let a = h.finest();
        let mut rng = rand::rngs::StdRng::seed_from_u64(1);
        let xs: Vec<f64> = (0..a.n_rows())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let b = a.mul_vec(&xs);
        let mut x = vec![0.0; a.n_rows()];
        let e0 = a_norm(a, &xs);
        for _ in 0..10 {
            x = vcycle(&h, &b, &x).unwrap();
        }
        let e: Vec<f64> = x.iter().zip(&xs).map(|(p, q)| p - q).collect();
        assert!(a_norm(a, &e) <= 1e-6 * e0);
    }

    #[test]
    fn smoother_does_not_increase_energy_error() {
        let sp = spaces(2);
        let a = assemble_stiffness_potential(&sp[1], |_| 2.0).unwrap();
        let mut rng = rand::rngs::StdRng::seed_from_u64(4);
        let xs: Vec<f64> = (0..a.n_rows())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let b = a.mul_vec(&xs);
        let mut x: Vec<f64> = (0..a.n_rows())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        // dense A-norm via the explicit matrix
        let ad = a.to_dense();
        let energy = |x: &[f64]| {
            let e = DVector::from_iterator(x.len(), x.iter().zip(&xs).map(|(p, q)| p - q));
            (e.transpose() * &ad * &e)[0]
        };
        let mut prev = energy(&x);
        for _ in 0..5 {
            sgs_sweep(&a, &b, &mut x);
            let cur = energy(&x);
            assert!(cur <= prev * (1.0 + 1e-14));
            prev = cur;
        }
    }

    #[test]
    fn aux_fixed_point_for_discrete_eigenpair() {
        let sp = spaces(3);
        let h = build_hierarchy(&sp, |_| 0.0, 0.0, None).unwrap();
        let m = assemble_mass(&sp[2]).unwrap();
        let (lam, u) = crate::eigcore::smallest_eigpair(h.finest(), &m).unwrap();
        let (ut, cycles) = solve_aux(&h, lam, &u, &m, 1e-8).unwrap();
        assert!(cycles <= 1);
        let diff: f64 = ut
            .iter()
            .zip(&u)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-7);
        let rhs: Vec<f64> = m.mul_vec(&u).iter().map(|v| lam * v).collect();
        let (x, _) = h.solve(&rhs, &vec![0.0; u.len()], 1e-10, 100).unwrap();
        assert!(residual_norm(h.finest(), &rhs, &x) <= 1e-10 * norm2(&rhs));
    }

    #[test]
    fn cap_reports_max_cycles() {
        let h = build_hierarchy(&spaces(3), |_| 0.0, 0.0, None)
            .unwrap()
            .with_sweeps(0);
        let n = h.finest().n_rows();
        let err = h.solve(&vec![1.0; n], &vec![0.0; n], 1e-12, 3).unwrap_err();
        assert!(matches!(err, Error::MaxCyclesExceeded { cycles: 3, .. }));
    }
}
