//! End-to-end pipelines: the multilevel correction scheme (with the tensor
//! or the fine-reassembly nonlinear solver) and the direct fine-space solve.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::assemble::{assemble_border_statics, assemble_mass, assemble_operator};
use crate::augmented::{augmented_scf, reconstruct_with, AugmentedSolution, FineReassembly};
use crate::eigcore::{scf_solve_multilevel, Eigenpair, ScfConfig};
use crate::error::{Error, Result};
use crate::fespace::{prolongation, CoeffVec, FeSpace};
use crate::mesh::{build_initial_mesh, DomainKind, DomainSpec, Mesh};
use crate::mglinear::{build_prolongations, solve_aux, MgHierarchy, DEFAULT_MAX_CYCLES};
use crate::problem::{GpeProblem, Potential};
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Tensor,
    Baseline,
    Direct,
}

impl Method {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "tensor" => Some(Self::Tensor),
            "baseline" => Some(Self::Baseline),
            "direct" => Some(Self::Direct),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Tensor => "tensor",
            Self::Baseline => "baseline",
            Self::Direct => "direct",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Domain and subdivision of the coarse mesh `T_H`.
    pub domain: DomainSpec,
    pub n_levels: usize,
    pub zeta: f64,
    /// Coefficients of `W(x) = Σ γᵢ xᵢ²`.
    pub gammas: Vec<f64>,
    pub scf: ScfConfig,
    pub c_sigma: f64,
    pub method: Method,
    /// Uniform refinements from `T_H` to the first level `T_{h_1}`.
    pub h1_refinements: usize,
    /// Correction steps per level; steps after the first restart on the level itself.
    #[serde(default = "one")]
    pub corrections_per_level: usize,
    pub reference_lambda: Option<f64>,
}

fn one() -> usize {
    1
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            domain: DomainSpec::new(DomainKind::UnitSquare, 8),
            n_levels: 4,
            zeta: 0.0,
            gammas: vec![0.0, 0.0],
            scf: ScfConfig::default(),
            c_sigma: 0.1,
            method: Method::Tensor,
            h1_refinements: 0,
            corrections_per_level: 1,
            reference_lambda: None,
        }
    }
}

impl SolverConfig {
    pub fn problem(&self) -> GpeProblem {
        GpeProblem::new(
            Potential {
                gammas: self.gammas.clone(),
            },
            self.zeta,
        )
    }

    pub fn validate(&self) -> Result<()> {
        self.scf.validate()?;
        if self.n_levels < 1 || (self.method != Method::Direct && self.n_levels < 2) {
            return Err(Error::InvalidInput(
                "n_levels must be at least 2 for multilevel methods".into(),
            ));
        }
        if !(self.zeta >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "zeta must be nonnegative, got {}",
                self.zeta
            )));
        }
        if !(self.c_sigma > 0.0) {
            return Err(Error::InvalidInput("c_sigma must be positive".into()));
        }
        if self.gammas.len() != 2 {
            return Err(Error::UnsupportedDimension(format!(
                "{} potential coefficients given",
                self.gammas.len()
            )));
        }
        if self.corrections_per_level == 0 {
            return Err(Error::InvalidInput(
                "corrections_per_level must be at least 1".into(),
            ));
        }
        if self.domain.initial_subdivision == 0 {
            return Err(Error::InvalidInput(
                "initial_subdivision must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRecord {
    pub level: usize,
    pub n_dofs: usize,
    pub lambda: f64,
    pub scf_iters: usize,
    pub mg_cycles: usize,
    pub t_linear: f64,
    pub t_nonlinear: f64,
    pub t_total: f64,
    pub err_lambda: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub config: SolverConfig,
    pub levels: Vec<LevelRecord>,
    pub final_lambda: f64,
    pub final_coeffs: Vec<f64>,
    pub wall_clock: f64,
    #[serde(skip)]
    pub final_pair: Option<Eigenpair>,
}

impl SolveReport {
    pub fn final_level(&self) -> &LevelRecord {
        self.levels.last().expect("report without levels")
    }
}

/// Nested spaces of one run: the coarse space `V_H` and `V_{h_1} ⊂ … ⊂ V_{h_n}`.
#[derive(Debug, Clone)]
pub struct LevelSpaces {
    pub coarse: FeSpace,
    pub levels: Vec<FeSpace>,
    /// `prolongations[k]` maps level `k` to level `k + 1`.
    pub prolongations: Vec<SparseMatrix>,
}

impl LevelSpaces {
    pub fn uniform(domain: &DomainSpec, h1_refinements: usize, n_levels: usize) -> Result<Self> {
        let mut mesh: Mesh = build_initial_mesh(domain)?;
        let coarse_mesh = Arc::new(mesh.clone());
        for _ in 0..h1_refinements {
            mesh = mesh.refine_uniform();
        }
        let mut levels = Vec::with_capacity(n_levels);
        let coarse = FeSpace::new(coarse_mesh.clone());
        for k in 0..n_levels {
            if k > 0 {
                mesh = mesh.refine_uniform();
            }
            if k == 0 && h1_refinements == 0 {
                levels.push(coarse.clone());
            } else {
                levels.push(FeSpace::new(Arc::new(mesh.clone())));
            }
        }
        let prolongations = build_prolongations(&levels)?;
        Ok(Self {
            coarse,
            levels,
            prolongations,
        })
    }
}

/// Result of one correction step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub pair: Eigenpair,
    pub u_tilde: CoeffVec,
    pub solution: AugmentedSolution,
    pub mg_cycles: usize,
    pub t_linear: f64,
    pub t_nonlinear: f64,
    pub t_total: f64,
}

/// Nonlinear solver used on the augmented space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AugmentedKind {
    Tensor,
    FineReassembly,
}

/// One correction step from `pair_k` to the finest space of `hierarchy`.
/// `pair_k` may live on any space the finest one descends from.
#[allow(clippy::too_many_arguments)]
pub fn one_correction_step(
    coarse: &FeSpace,
    pair_k: &Eigenpair,
    hierarchy: &[FeSpace],
    prolongations: &[SparseMatrix],
    tol: f64,
    problem: &GpeProblem,
    scf: &ScfConfig,
    kind: AugmentedKind,
) -> Result<StepOutcome> {
    let t0 = Instant::now();
    let fine = hierarchy
        .last()
        .ok_or(Error::InvalidInput("empty hierarchy".into()))?;
    let u_k = if pair_k.space().same_as(fine) {
        pair_k.coeffs.values.clone()
    } else if hierarchy.len() >= 2 && pair_k.space().same_as(&hierarchy[hierarchy.len() - 2]) {
        prolongations
            .last()
            .unwrap()
            .try_mul_vec(&pair_k.coeffs.values)?
    } else {
        prolongation(pair_k.space(), fine)?.try_mul_vec(&pair_k.coeffs.values)?
    };
    let w = problem.w();
    let a = assemble_operator(fine, &w, problem.zeta, Some(&u_k))?;
    let h = MgHierarchy::from_fine_matrix(hierarchy.to_vec(), prolongations.to_vec(), a)?;
    let m = assemble_mass(fine)?;
    let (ut, cycles) = solve_aux(&h, pair_k.lambda, &u_k, &m, tol)?;
    drop(h);
    let ut = CoeffVec::new(fine, ut)?;
    let st = assemble_border_statics(coarse, fine, &ut, &w, problem.zeta)?;
    let t1 = Instant::now();
    let sol = match kind {
        AugmentedKind::Tensor => augmented_scf(&st, None, scf)?,
        AugmentedKind::FineReassembly => augmented_scf(&FineReassembly::new(&st, &w)?, None, scf)?,
    };
    let t2 = Instant::now();
    let p = prolongation(coarse, fine)?;
    let pair = reconstruct_with(&sol, &st, &p, &m)?;
    if pair.lambda > 1.1 * pair_k.lambda.abs().max(f64::MIN_POSITIVE) {
        return Err(Error::CorrectionDiverged {
            from: pair_k.lambda,
            to: pair.lambda,
        });
    }
    let t3 = Instant::now();
    Ok(StepOutcome {
        pair,
        u_tilde: ut,
        solution: sol,
        mg_cycles: cycles,
        t_linear: (t1 - t0).as_secs_f64() + (t3 - t2).as_secs_f64(),
        t_nonlinear: (t2 - t1).as_secs_f64(),
        t_total: (t3 - t0).as_secs_f64(),
    })
}

/// `ς = c_σ h²` for a space.
pub fn linear_tolerance(c_sigma: f64, space: &FeSpace) -> f64 {
    let h = space.mesh().max_diameter();
    c_sigma * h * h
}

fn err_of(cfg: &SolverConfig, lambda: f64) -> Option<f64> {
    cfg.reference_lambda.map(|r| (lambda - r).abs())
}

fn multilevel(cfg: &SolverConfig, kind: AugmentedKind) -> Result<SolveReport> {
    cfg.validate()?;
    let start = Instant::now();
    let problem = cfg.problem();
    let ls = LevelSpaces::uniform(&cfg.domain, cfg.h1_refinements, cfg.n_levels)?;
    let t0 = Instant::now();
    let (mut pair, stats) = scf_solve_multilevel(
        &ls.levels[..1],
        Some(&[]),
        problem.w(),
        problem.zeta,
        &cfg.scf,
        None,
    )?;
    let t_first = t0.elapsed().as_secs_f64();
    let mut levels = vec![LevelRecord {
        level: 1,
        n_dofs: ls.levels[0].n_dofs(),
        lambda: pair.lambda,
        scf_iters: stats.iters,
        mg_cycles: 0,
        t_linear: 0.0,
        t_nonlinear: t_first,
        t_total: t_first,
        err_lambda: err_of(cfg, pair.lambda),
    }];
    for k in 1..cfg.n_levels {
        let fine = &ls.levels[k];
        let tol = linear_tolerance(cfg.c_sigma, fine);
        let mut rec = LevelRecord {
            level: k + 1,
            n_dofs: fine.n_dofs(),
            lambda: 0.0,
            scf_iters: 0,
            mg_cycles: 0,
            t_linear: 0.0,
            t_nonlinear: 0.0,
            t_total: 0.0,
            err_lambda: None,
        };
        for _ in 0..cfg.corrections_per_level {
            let out = one_correction_step(
                &ls.coarse,
                &pair,
                &ls.levels[..=k],
                &ls.prolongations[..k],
                tol,
                &problem,
                &cfg.scf,
                kind,
            )?;
            rec.scf_iters += out.solution.iters;
            rec.mg_cycles += out.mg_cycles;
            rec.t_linear += out.t_linear;
            rec.t_nonlinear += out.t_nonlinear;
            rec.t_total += out.t_total;
            pair = out.pair;
        }
        rec.lambda = pair.lambda;
        rec.err_lambda = err_of(cfg, pair.lambda);
        levels.push(rec);
    }
    Ok(SolveReport {
        config: cfg.clone(),
        levels,
        final_lambda: pair.lambda,
        final_coeffs: pair.coeffs.values.clone(),
        wall_clock: start.elapsed().as_secs_f64(),
        final_pair: Some(pair),
    })
}

/// Multilevel correction with the tensor-based augmented iteration.
pub fn multigrid_gpe(cfg: &SolverConfig) -> Result<SolveReport> {
    multilevel(cfg, AugmentedKind::Tensor)
}

/// Same scheme with the nonlinear terms reintegrated on the fine mesh in
/// every augmented iteration.
pub fn baseline_multilevel(cfg: &SolverConfig) -> Result<SolveReport> {
    multilevel(cfg, AugmentedKind::FineReassembly)
}

/// SCF directly on the finest space, preconditioned by multigrid over the
/// level hierarchy.
pub fn direct_fine_solve(cfg: &SolverConfig) -> Result<SolveReport> {
    cfg.validate()?;
    let start = Instant::now();
    let problem = cfg.problem();
    let ls = LevelSpaces::uniform(&cfg.domain, cfg.h1_refinements, cfg.n_levels)?;
    let (pair, stats) = scf_solve_multilevel(
        &ls.levels,
        Some(&ls.prolongations),
        problem.w(),
        problem.zeta,
        &cfg.scf,
        None,
    )?;
    let t = start.elapsed().as_secs_f64();
    let fine = ls.levels.last().unwrap();
    Ok(SolveReport {
        config: cfg.clone(),
        levels: vec![LevelRecord {
            level: cfg.n_levels,
            n_dofs: fine.n_dofs(),
            lambda: pair.lambda,
            scf_iters: stats.iters,
            mg_cycles: 0,
            t_linear: 0.0,
            t_nonlinear: t,
            t_total: t,
            err_lambda: err_of(cfg, pair.lambda),
        }],
        final_lambda: pair.lambda,
        final_coeffs: pair.coeffs.values.clone(),
        wall_clock: t,
        final_pair: Some(pair),
    })
}

/// Timing reference: on every level, assemble `-Δ + W` and solve
/// `(-Δ + W) x = M 1` by V-cycles to the level's tolerance `ς`.
pub fn linear_reference(cfg: &SolverConfig) -> Result<SolveReport> {
    cfg.validate()?;
    let start = Instant::now();
    let problem = cfg.problem();
    let w = problem.w();
    let ls = LevelSpaces::uniform(&cfg.domain, cfg.h1_refinements, cfg.n_levels)?;
    let mut levels = Vec::with_capacity(cfg.n_levels);
    let mut x = Vec::new();
    for k in 0..cfg.n_levels {
        let t0 = Instant::now();
        let fine = &ls.levels[k];
        let a = assemble_operator(fine, &w, 0.0, None)?;
        let h = MgHierarchy::from_fine_matrix(
            ls.levels[..=k].to_vec(),
            ls.prolongations[..k].to_vec(),
            a,
        )?;
        let rhs = assemble_mass(fine)?.try_mul_vec(&vec![1.0; fine.n_dofs()])?;
        let (sol, cycles) = h.solve(
            &rhs,
            &vec![0.0; fine.n_dofs()],
            linear_tolerance(cfg.c_sigma, fine),
            DEFAULT_MAX_CYCLES,
        )?;
        let t = t0.elapsed().as_secs_f64();
        x = sol;
        levels.push(LevelRecord {
            level: k + 1,
            n_dofs: fine.n_dofs(),
            lambda: f64::NAN,
            scf_iters: 0,
            mg_cycles: cycles,
            t_linear: t,
            t_nonlinear: 0.0,
            t_total: t,
            err_lambda: None,
        });
    }
    Ok(SolveReport {
        config: cfg.clone(),
        levels,
        final_lambda: f64::NAN,
        final_coeffs: x,
        wall_clock: start.elapsed().as_secs_f64(),
        final_pair: None,
    })
}

/// Dispatches on `cfg.method`.
pub fn solve(cfg: &SolverConfig) -> Result<SolveReport> {
    match cfg.method {
        Method::Tensor => multigrid_gpe(cfg),
        Method::Baseline => baseline_multilevel(cfg),
        Method::Direct => direct_fine_solve(cfg),
    }
}
