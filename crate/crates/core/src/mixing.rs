//! Damped fixed-point updates with optional Anderson extrapolation.
//!
//! With depth 0 the update is the plain damped step `x + θ(F(x) − x)`.
//! When the fixed-point residual grows well beyond the best one seen, the
//! mixing parameter is halved and the history dropped; the fixed point is
//! unaffected.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::sparse::dot;

/// Coefficients larger than this indicate an ill-conditioned history.
const MAX_COEFF: f64 = 1e4;
/// Residual growth (relative to the best residual) that triggers a backoff.
const GROWTH: f64 = 2.0;
const MAX_BACKOFFS: u32 = 8;
/// Steps without a new best residual that also trigger a backoff.
const STALL: usize = 12;

#[derive(Debug, Clone)]
pub struct Mixer {
    theta: f64,
    depth: usize,
    dx: VecDeque<Vec<f64>>,
    dg: VecDeque<Vec<f64>>,
    last: Option<(Vec<f64>, Vec<f64>)>,
    best: f64,
    since_best: usize,
    backoffs: u32,
}

impl Mixer {
    pub fn new(theta: f64, depth: usize) -> Self {
        Self {
            theta,
            depth,
            dx: VecDeque::new(),
            dg: VecDeque::new(),
            last: None,
            best: f64::INFINITY,
            since_best: 0,
            backoffs: 0,
        }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn reset(&mut self) {
        self.dx.clear();
        self.dg.clear();
        self.last = None;
        self.best = f64::INFINITY;
    }

    /// Next iterate from the current one and its image under the map.
    pub fn step(&mut self, x: &[f64], fx: &[f64]) -> Vec<f64> {
        let g: Vec<f64> = fx.iter().zip(x).map(|(a, b)| a - b).collect();
        let rn = dot(&g, &g).sqrt();
        if rn < self.best {
            self.best = rn;
            self.since_best = 0;
        } else {
            self.since_best += 1;
        }
        if (rn > GROWTH * self.best || self.since_best >= STALL) && self.backoffs < MAX_BACKOFFS {
            self.theta *= 0.5;
            self.backoffs += 1;
            self.dx.clear();
            self.dg.clear();
            self.last = None;
            self.best = rn;
            self.since_best = 0;
        }
        if self.depth > 0 {
            if let Some((xl, gl)) = self.last.take() {
                self.dx
                    .push_back(x.iter().zip(&xl).map(|(a, b)| a - b).collect());
                self.dg
                    .push_back(g.iter().zip(&gl).map(|(a, b)| a - b).collect());
                if self.dx.len() > self.depth {
                    self.dx.pop_front();
                    self.dg.pop_front();
                }
            }
            self.last = Some((x.to_vec(), g.clone()));
        }
        let theta = self.theta;
        let mut next: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a + theta * b).collect();
        let m = self.dg.len();
        if m == 0 {
            return next;
        }
        let mut gram = DMatrix::from_fn(m, m, |i, j| dot(&self.dg[i], &self.dg[j]));
        let rhs = DVector::from_fn(m, |i, _| dot(&self.dg[i], &g));
        let scale = (0..m).map(|i| gram[(i, i)]).fold(0.0, f64::max);
        for i in 0..m {
            gram[(i, i)] += 1e-12 * scale;
        }
        let gamma = match nalgebra::Cholesky::new(gram).map(|c| c.solve(&rhs)) {
            Some(gm) if gm.iter().all(|v| v.is_finite() && v.abs() < MAX_COEFF) => gm,
            _ => {
                self.dx.clear();
                self.dg.clear();
                return next;
            }
        };
        for (j, gj) in gamma.iter().enumerate() {
            for ((n, a), b) in next.iter_mut().zip(&self.dx[j]).zip(&self.dg[j]) {
                *n -= gj * (a + theta * b);
            }
        }
        next
    }
}
