//! Problem data: the trapping potential and the interaction strength.

use serde::{Deserialize, Serialize};

use crate::mesh::Point;

/// Harmonic trap `W(x) = Σ γᵢ xᵢ²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    pub gammas: Vec<f64>,
}

impl Potential {
    pub fn zero() -> Self {
        Self {
            gammas: vec![0.0, 0.0],
        }
    }

    pub fn harmonic(g1: f64, g2: f64) -> Self {
        Self {
            gammas: vec![g1, g2],
        }
    }

    pub fn eval(&self, x: Point) -> f64 {
        self.gammas
            .iter()
            .zip(x.iter())
            .map(|(g, xi)| g * xi * xi)
            .sum()
    }

    pub fn is_zero(&self) -> bool {
        self.gammas.iter().all(|&g| g == 0.0)
    }
}

/// `-Δu + W u + ζ|u|²u = λu` with `u = 0` on the boundary and `‖u‖₀ = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpeProblem {
    pub potential: Potential,
    pub zeta: f64,
}

impl GpeProblem {
    pub fn new(potential: Potential, zeta: f64) -> Self {
        Self { potential, zeta }
    }

    pub fn is_linear(&self) -> bool {
        self.zeta == 0.0
    }

    pub fn w(&self) -> impl Fn(Point) -> f64 + Sync + '_ {
        move |x| self.potential.eval(x)
    }
}
