use std::sync::Arc;

use gpemg::assemble::{assemble_border_statics, assemble_mass, assemble_operator, BorderStatics};
use gpemg::augmented::{
    augmented_scf, reconstruct, solve_bordered, update_dynamic, AugmentedSolution, BorderedSystem,
    FineReassembly,
};
use gpemg::eigcore::{dense_generalized_eigen, scf_solve, ScfConfig};
use gpemg::fespace::{interpolate, prolongation, FeSpace};
use gpemg::mesh::{build_initial_mesh, DomainKind, DomainSpec, Point};
use gpemg::sparse::SparseMatrix;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};

fn w(x: Point) -> f64 {
    x[0] * x[0] + x[1] * x[1]
}

fn setup(sub: usize, refinements: usize, zeta: f64) -> (FeSpace, FeSpace, BorderStatics) {
    let m = build_initial_mesh(&DomainSpec::new(DomainKind::UnitSquare, sub)).unwrap();
    let coarse = FeSpace::new(Arc::new(m.clone()));
    let mut f = m;
    for _ in 0..refinements {
        f = f.refine_uniform();
    }
    let fine = FeSpace::new(Arc::new(f));
    let ut = interpolate(&fine, |x| {
        x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1]) * (1.0 + 3.0 * x[0] * x[1]).exp()
    });
    let st = assemble_border_statics(&coarse, &fine, &ut, w, zeta).unwrap();
    (coarse, fine, st)
}

/// `[P | ũ]` as a dense fine-by-(N_H+1) matrix.
fn basis(coarse: &FeSpace, fine: &FeSpace, st: &BorderStatics) -> DMatrix<f64> {
    let p = prolongation(coarse, fine).unwrap().to_dense();
    let (nf, nc) = (fine.n_dofs(), coarse.n_dofs());
    let mut q = DMatrix::zeros(nf, nc + 1);
    q.view_mut((0, 0), (nf, nc)).copy_from(&p);
    for i in 0..nf {
        q[(i, nc)] = st.u_tilde.values[i];
    }
    q
}

fn rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1.0)
}

fn monolithic(
    coarse: &FeSpace,
    fine: &FeSpace,
    st: &BorderStatics,
    u_h: &[f64],
    alpha: f64,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let q = basis(coarse, fine, st);
    let mut coef = u_h.to_vec();
    coef.push(alpha);
    let rho = &q * nalgebra::DVector::from_vec(coef);
    let a = assemble_operator(fine, w, st.zeta, Some(rho.as_slice()))
        .unwrap()
        .to_dense();
    let m = assemble_mass(fine).unwrap().to_dense();
    (q.transpose() * a * &q, q.transpose() * m * &q)
}

#[test]
fn blocks_match_monolithic_fine_assembly() {
    let (coarse, fine, st) = setup(4, 2, 7.0);
    let mut rng = rand::rngs::StdRng::seed_from_u64(11);
    for _ in 0..5 {
        let u: Vec<f64> = (0..coarse.n_dofs())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let alpha = rng.random_range(-2.0..2.0);
        let sys = update_dynamic(&st, &u, alpha).unwrap();
        let (k, m) = monolithic(&coarse, &fine, &st, &u, alpha);
        assert!(rel_diff(&sys.stiffness_block(), &k) <= 1e-11);
        assert!(rel_diff(&sys.mass_block(), &m) <= 1e-11);
        let fr = FineReassembly::new(&st, w).unwrap();
        use gpemg::augmented::BorderedAssembler;
        assert!(rel_diff(&fr.system_matrix(&u, alpha).unwrap(), &k) <= 1e-11);
    }
}

#[test]
fn substitution_special_cases() {
    let (coarse, _, st) = setup(4, 1, 3.0);
    let n = coarse.n_dofs();
    let sys = update_dynamic(&st, &vec![0.0; n], 1.0).unwrap();
    let a = SparseMatrix::linear_combination(&[(1.0, &st.a_h1), (1.0, &st.a_h23)]);
    assert!(sys.a_h.to_dense().relative_eq(&a.to_dense(), 1e-14, 1e-14));
    for i in 0..n {
        assert!((sys.b_hh[i] - st.b_hh1[i] - st.b_hh23[i]).abs() < 1e-14);
    }
    assert!((sys.xi - st.d1 - st.xi_h).abs() < 1e-13);

    let u: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
    let sys = update_dynamic(&st, &u, 0.0).unwrap();
    let a21 = gpemg::assemble::assemble_weighted_mass(
        &coarse,
        &gpemg::fespace::CoeffVec::new(&coarse, u.clone()).unwrap(),
        3.0,
    )
    .unwrap();
    let a = SparseMatrix::linear_combination(&[(1.0, &st.a_h1), (1.0, &a21)]);
    assert!((sys.a_h.to_dense() - a.to_dense()).amax() < 1e-13);
    let expect = st.d1 + st.a_h23.bilinear(&u, &u);
    assert!((sys.xi - expect).abs() < 1e-13 * expect.abs().max(1.0));
}

fn sys_from_dense(a: DMatrix<f64>, m: DMatrix<f64>) -> BorderedSystem {
    let n = a.nrows() - 1;
    let block = |x: &DMatrix<f64>| SparseMatrix::from_dense(&x.view((0, 0), (n, n)).into_owned());
    BorderedSystem {
        a_h: block(&a),
        b_hh: (0..n).map(|i| a[(i, n)]).collect(),
        xi: a[(n, n)],
        m_h: block(&m),
        c_hh: (0..n).map(|i| m[(i, n)]).collect(),
        gamma: m[(n, n)],
    }
}

#[test]
fn bordered_examples() {
    let a = DMatrix::from_row_slice(3, 3, &[2.0, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0, 1.0]);
    let (lam, u, alpha) = solve_bordered(&sys_from_dense(a, DMatrix::identity(3, 3))).unwrap();
    assert!((lam - 1.0).abs() < 1e-14);
    assert!(u.iter().all(|v| v.abs() < 1e-14));
    assert!((alpha - 1.0).abs() < 1e-14);

    let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 5.0]);
    let (lam, u, alpha) = solve_bordered(&sys_from_dense(a, DMatrix::identity(2, 2))).unwrap();
    assert!((lam - 2.0).abs() < 1e-14);
    assert!(alpha.abs() < 1e-14 && u[0] > 0.0);
}

#[test]
fn bordered_matches_dense_oracle() {
    let mut rng = rand::rngs::StdRng::seed_from_u64(5);
    for n in [2usize, 4, 7] {
        let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let a = &g * g.transpose() + DMatrix::identity(n, n) * 0.5;
        let h = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let m = &h * h.transpose() + DMatrix::identity(n, n) * (n as f64);
        let sys = sys_from_dense(a.clone(), m.clone());
        let (lam, u, alpha) = solve_bordered(&sys).unwrap();
        let oracle = nalgebra::SymmetricEigen::new({
            let l = m.clone().cholesky().unwrap();
            let li = l.l().try_inverse().unwrap();
            &li * &a * li.transpose()
        });
        let lmin = oracle.eigenvalues.min();
        assert!((lam - lmin).abs() <= 1e-10 * lmin.abs().max(1.0));
        let mut x = nalgebra::DVector::from_vec(u);
        x = x.push(alpha);
        let r = &a * &x - &m * &x * lam;
        assert!(r.amax() < 1e-9);
        assert!(((x.transpose() * &m * &x)[(0, 0)] - 1.0).abs() < 1e-12);
        assert!(alpha >= 0.0);
        let _ = dense_generalized_eigen(&a, &m).unwrap();
    }
}

#[test]
fn reconstruction_gram_identity() {
    let (coarse, fine, st) = setup(4, 2, 1.0);
    let q = basis(&coarse, &fine, &st);
    let m = assemble_mass(&fine).unwrap().to_dense();
    let g = q.transpose() * m * &q;
    let mut rng = rand::rngs::StdRng::seed_from_u64(3);
    let u: Vec<f64> = (0..coarse.n_dofs())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let alpha = 0.8;
    let mut c = u.clone();
    c.push(alpha);
    let c = nalgebra::DVector::from_vec(c);
    let block = (c.transpose() * &g * &c)[(0, 0)];
    let fine_vec = &q * &c;
    let fine_norm =
        (fine_vec.transpose() * assemble_mass(&fine).unwrap().to_dense() * &fine_vec)[(0, 0)];
    assert!((block - fine_norm).abs() <= 1e-11 * block.max(1.0));

    let sol = AugmentedSolution {
        lambda: 1.0,
        u_h: vec![0.0; coarse.n_dofs()],
        alpha: 1.0,
        iters: 0,
    };
    let pair = reconstruct(&sol, &st).unwrap();
    let mf = assemble_mass(&fine).unwrap();
    let nt = mf.bilinear(&st.u_tilde.values, &st.u_tilde.values).sqrt();
    for (a, b) in pair.coeffs.values.iter().zip(&st.u_tilde.values) {
        assert!((a - b / nt).abs() < 1e-12);
    }
    assert!((mf.bilinear(&pair.coeffs.values, &pair.coeffs.values) - 1.0).abs() < 1e-10);
}

#[test]
fn linear_case_is_one_iteration() {
    let (_, _, st) = setup(4, 1, 0.0);
    let sol = augmented_scf(&st, None, &ScfConfig::default()).unwrap();
    assert_eq!(sol.iters, 1);
    let sys = update_dynamic(&st, &sol.u_h, sol.alpha).unwrap();
    let (lam, _, _) = solve_bordered(&sys).unwrap();
    assert!((lam - sol.lambda).abs() < 1e-12);
}

#[test]
fn converged_fine_solution_is_a_fixed_point() {
    let m = build_initial_mesh(&DomainSpec::new(DomainKind::UnitSquare, 4)).unwrap();
    let coarse = FeSpace::new(Arc::new(m.clone()));
    let fine = FeSpace::new(Arc::new(m.refine_uniform().refine_uniform()));
    let cfg = ScfConfig::default();
    let (pair, _) = scf_solve(&fine, w, 10.0, &cfg, None).unwrap();
    let st = assemble_border_statics(&coarse, &fine, &pair.coeffs, w, 10.0).unwrap();
    let sol = augmented_scf(&st, None, &cfg).unwrap();
    assert!(
        (sol.lambda - pair.lambda).abs() <= 10.0 * cfg.tol_lambda,
        "{} vs {}",
        sol.lambda,
        pair.lambda
    );
    assert!(sol.u_h.iter().all(|v| v.abs() < 1e-6));
    let tensor = sol.lambda;
    let base = augmented_scf(&FineReassembly::new(&st, w).unwrap(), None, &cfg).unwrap();
    assert!((base.lambda - tensor).abs() < 1e-10);
}

#[test]
fn block_rayleigh_quotient_matches_fine() {
    let (coarse, fine, st) = setup(4, 2, 5.0);
    let sol = augmented_scf(&st, None, &ScfConfig::default()).unwrap();
    let pair = reconstruct(&sol, &st).unwrap();
    let sys = update_dynamic(&st, &sol.u_h, sol.alpha).unwrap();
    let mut c = sol.u_h.clone();
    c.push(sol.alpha);
    let c = nalgebra::DVector::from_vec(c);
    let rq_block = (c.transpose() * sys.stiffness_block() * &c)[(0, 0)]
        / (c.transpose() * sys.mass_block() * &c)[(0, 0)];
    let p = prolongation(&coarse, &fine).unwrap();
    let mut rho = p.mul_vec(&sol.u_h);
    for (r, t) in rho.iter_mut().zip(&st.u_tilde.values) {
        *r += sol.alpha * t;
    }
    let a = assemble_operator(&fine, w, 5.0, Some(&rho)).unwrap();
    let m = assemble_mass(&fine).unwrap();
    let u = &pair.coeffs.values;
    let rq_fine = a.bilinear(u, u) / m.bilinear(u, u);
    assert!((rq_block - rq_fine).abs() <= 1e-10 * rq_fine.abs());
    assert!((rq_block - sol.lambda).abs() <= 1e-9 * sol.lambda);
}

#[test]
fn dependent_border_is_rejected() {
    let m = build_initial_mesh(&DomainSpec::new(DomainKind::UnitSquare, 4)).unwrap();
    let coarse = FeSpace::new(Arc::new(m.clone()));
    let fine = FeSpace::new(Arc::new(m.refine_uniform()));
    let f = |x: Point| x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1]);
    let uc = interpolate(&coarse, f);
    let ut = gpemg::fespace::CoeffVec::new(
        &fine,
        prolongation(&coarse, &fine).unwrap().mul_vec(&uc.values),
    )
    .unwrap();
    let st = assemble_border_statics(&coarse, &fine, &ut, w, 1.0).unwrap();
    let err = augmented_scf(&st, None, &ScfConfig::default()).unwrap_err();
    assert!(
        matches!(err, gpemg::Error::MassBlockSingular { .. }),
        "{err:?}"
    );
}
