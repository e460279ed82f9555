//! Residual a posteriori estimator, Dörfler marking and the adaptive
//! multilevel loop.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::assemble::CellGeom;
use crate::driver::{one_correction_step, AugmentedKind, SolverConfig};
use crate::eigcore::{scf_solve_multilevel, Eigenpair};
use crate::error::{Error, Result};
use crate::exec::map_reduce_ordered;
use crate::fespace::{prolongation, FeSpace};
use crate::mesh::{build_initial_mesh, Mesh, Point};
use crate::quadrature::quad_rule;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorField {
    pub eta_sq: Vec<f64>,
    pub total_eta: f64,
}

impl EstimatorField {
    pub fn new(eta_sq: Vec<f64>) -> Self {
        let total_eta = eta_sq.iter().sum::<f64>().sqrt();
        Self { eta_sq, total_eta }
    }
}

/// Element residual plus edge jump estimator for the P1 pair on `space`.
pub fn estimate<W>(space: &FeSpace, pair: &Eigenpair, w: W, zeta: f64) -> Result<EstimatorField>
where
    W: Fn(Point) -> f64 + Sync,
{
    if !pair.space().same_as(space) {
        return Err(Error::InvalidInput(
            "eigenpair does not live on the estimator space".into(),
        ));
    }
    let mesh = space.mesh();
    let nodal = space.vertex_values(&pair.coeffs.values);
    let rule = quad_rule(6)?;
    let lambda = pair.lambda;
    let mut eta_sq = vec![0.0; mesh.n_cells()];
    let mut grads = vec![[0.0; 2]; mesh.n_cells()];
    let mut failure = None;
    map_reduce_ordered(
        mesh.n_cells(),
        |c| -> Result<(f64, [f64; 2])> {
            let g = CellGeom::of(mesh, c)?;
            let cell = mesh.cells()[c];
            let u = [nodal[cell[0]], nodal[cell[1]], nodal[cell[2]]];
            let grad = [
                u[0] * g.grads[0][0] + u[1] * g.grads[1][0] + u[2] * g.grads[2][0],
                u[0] * g.grads[0][1] + u[1] * g.grads[1][1] + u[2] * g.grads[2][1],
            ];
            let r2 = rule.integrate(g.area, |b| {
                let uq = b[0] * u[0] + b[1] * u[1] + b[2] * u[2];
                let r = lambda * uq - w(g.map(b)) * uq - zeta * uq * uq * uq;
                r * r
            });
            let h = mesh.cell_diameter(c);
            Ok((h * h * r2, grad))
        },
        |c, r| match r {
            Ok((v, g)) => {
                eta_sq[c] = v;
                grads[c] = g;
            }
            Err(e) => {
                failure.get_or_insert(e);
            }
        },
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let mut first_side: HashMap<(usize, usize), usize> = HashMap::with_capacity(2 * mesh.n_cells());
    let verts = mesh.vertices();
    for (c, cell) in mesh.cells().iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (cell[k], cell[(k + 1) % 3]);
            let key = (a.min(b), a.max(b));
            if let Some(other) = first_side.remove(&key) {
                let (pa, pb) = (verts[key.0], verts[key.1]);
                let t = [pb[0] - pa[0], pb[1] - pa[1]];
                let len = (t[0] * t[0] + t[1] * t[1]).sqrt();
                let nu = [t[1] / len, -t[0] / len];
                let d = [grads[c][0] - grads[other][0], grads[c][1] - grads[other][1]];
                let jump = d[0] * nu[0] + d[1] * nu[1];
                let term = len * len * jump * jump;
                eta_sq[c] += term;
                eta_sq[other] += term;
            } else {
                first_side.insert(key, c);
            }
        }
    }
    Ok(EstimatorField::new(eta_sq))
}

/// Smallest prefix of cells, sorted by descending `η²` then ascending index,
/// whose sum reaches `theta_mark · Σ η²`.
pub fn mark_dorfler(est: &EstimatorField, theta_mark: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..est.eta_sq.len()).collect();
    order.sort_by(|&a, &b| est.eta_sq[b].total_cmp(&est.eta_sq[a]).then(a.cmp(&b)));
    let total: f64 = order.iter().map(|&c| est.eta_sq[c]).sum();
    if !(total > 0.0) {
        return Vec::new();
    }
    // slack for the rounding of the running sum
    let target = theta_mark * total - 1e-14 * total;
    let mut acc = 0.0;
    let mut marked = Vec::new();
    for c in order {
        if acc >= target {
            break;
        }
        acc += est.eta_sq[c];
        marked.push(c);
    }
    marked
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptConfig {
    pub theta_mark: f64,
    pub max_dofs: usize,
    pub max_iters: usize,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            theta_mark: 0.5,
            max_dofs: 20_000,
            max_iters: 60,
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta_mark > 0.0 && self.theta_mark <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "theta_mark must lie in (0, 1], got {}",
                self.theta_mark
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidInput("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptRow {
    pub iter: usize,
    pub n_dofs: usize,
    pub lambda: f64,
    pub total_eta: f64,
    pub scf_iters: usize,
    pub n_marked: usize,
    pub t_total: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdaptReport {
    pub config: SolverConfig,
    pub adapt: AdaptConfig,
    pub rows: Vec<AdaptRow>,
    pub final_lambda: f64,
    pub wall_clock: f64,
    /// Centroids of the cells marked in each iteration.
    #[serde(skip)]
    pub marked_centroids: Vec<Vec<Point>>,
    #[serde(skip)]
    pub final_pair: Option<Eigenpair>,
}

/// Indices of the spaces used as multigrid levels: the newest, then going
/// back each space with at most half the DOFs of the last one kept, and the
/// first space.
fn select_levels(spaces: &[FeSpace]) -> Vec<usize> {
    let mut kept = vec![spaces.len() - 1];
    let mut last = spaces[spaces.len() - 1].n_dofs();
    for j in (0..spaces.len() - 1).rev() {
        let n = spaces[j].n_dofs();
        if j == 0 || 2 * n <= last {
            kept.push(j);
            last = n;
        }
    }
    kept.dedup();
    kept.reverse();
    kept
}

fn centroid(mesh: &Mesh, c: usize) -> Point {
    let p = mesh.cell_points(c);
    [
        (p[0][0] + p[1][0] + p[2][0]) / 3.0,
        (p[0][1] + p[1][1] + p[2][1]) / 3.0,
    ]
}

/// Adaptive multilevel loop on a fixed coarse space `V_H`: correction step on
/// the current mesh, estimate, mark, bisect. Stops once the space reaches
/// `max_dofs` or after `max_iters` refinements.
pub fn adaptive_loop(cfg: &SolverConfig, adapt: &AdaptConfig) -> Result<AdaptReport> {
    cfg.scf.validate()?;
    adapt.validate()?;
    let start = Instant::now();
    let problem = cfg.problem();
    let w = problem.w();
    let zeta = problem.zeta;
    let area = cfg.domain.kind.area();

    let coarse_mesh = build_initial_mesh(&cfg.domain)?;
    let coarse = FeSpace::new(Arc::new(coarse_mesh.clone()));
    let mut mesh = coarse_mesh;
    for _ in 0..cfg.h1_refinements {
        mesh = mesh.refine_uniform();
    }
    let first = if cfg.h1_refinements == 0 {
        coarse.clone()
    } else {
        FeSpace::new(Arc::new(mesh))
    };

    let t0 = Instant::now();
    let (mut pair, stats) = scf_solve_multilevel(
        std::slice::from_ref(&first),
        Some(&[]),
        &w,
        zeta,
        &cfg.scf,
        None,
    )?;
    let mut est = estimate(&first, &pair, &w, zeta)?;
    let mut spaces = vec![first];
    let mut rows = vec![AdaptRow {
        iter: 0,
        n_dofs: spaces[0].n_dofs(),
        lambda: pair.lambda,
        total_eta: est.total_eta,
        scf_iters: stats.iters,
        n_marked: 0,
        t_total: t0.elapsed().as_secs_f64(),
    }];
    let mut marked_centroids = Vec::new();

    while spaces.last().unwrap().n_dofs() < adapt.max_dofs && rows.len() <= adapt.max_iters {
        let t0 = Instant::now();
        let current = spaces.last().unwrap().clone();
        let marked = mark_dorfler(&est, adapt.theta_mark);
        if marked.is_empty() {
            break;
        }
        marked_centroids.push(
            marked
                .iter()
                .map(|&c| centroid(current.mesh(), c))
                .collect(),
        );
        let next_mesh = current.mesh().refine_adaptive(&marked)?;
        next_mesh
            .check_invariants()
            .map_err(|e| Error::InvalidInput(format!("adaptive mesh broke an invariant: {e}")))?;
        let next = FeSpace::new(Arc::new(next_mesh));
        spaces.push(next.clone());

        let kept = select_levels(&spaces);
        let hierarchy: Vec<FeSpace> = kept.iter().map(|&j| spaces[j].clone()).collect();
        let prolongations = hierarchy
            .windows(2)
            .map(|p| prolongation(&p[0], &p[1]))
            .collect::<Result<Vec<_>>>()?;
        let tol = cfg.c_sigma * area / next.n_dofs() as f64;
        let mut scf_iters = 0;
        for _ in 0..cfg.corrections_per_level {
            let out = one_correction_step(
                &coarse,
                &pair,
                &hierarchy,
                &prolongations,
                tol,
                &problem,
                &cfg.scf,
                AugmentedKind::Tensor,
            )?;
            scf_iters += out.solution.iters;
            pair = out.pair;
        }
        est = estimate(&next, &pair, &w, zeta)?;
        rows.push(AdaptRow {
            iter: rows.len(),
            n_dofs: next.n_dofs(),
            lambda: pair.lambda,
            total_eta: est.total_eta,
            scf_iters,
            n_marked: marked.len(),
            t_total: t0.elapsed().as_secs_f64(),
        });
    }
    Ok(AdaptReport {
        config: cfg.clone(),
        adapt: adapt.clone(),
        final_lambda: pair.lambda,
        rows,
        wall_clock: start.elapsed().as_secs_f64(),
        marked_centroids,
        final_pair: Some(pair),
    })
}
