//! Symmetric quadrature rules on the reference triangle.
//!
//! Points are barycentric; weights sum to one, so a rule integrates the mean of
//! a function and the caller multiplies by the cell area.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct QuadRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub exact_degree: usize,
}

fn orbit3(a: f64, w: f64, points: &mut Vec<[f64; 3]>, weights: &mut Vec<f64>) {
    let b = 1.0 - 2.0 * a;
    for p in [[b, a, a], [a, b, a], [a, a, b]] {
        points.push(p);
        weights.push(w);
    }
}

fn orbit6(a: f64, b: f64, w: f64, points: &mut Vec<[f64; 3]>, weights: &mut Vec<f64>) {
    let c = 1.0 - a - b;
    for p in [
        [a, b, c],
        [a, c, b],
        [b, a, c],
        [b, c, a],
        [c, a, b],
        [c, b, a],
    ] {
        points.push(p);
        weights.push(w);
    }
}

/// Lowest-order available rule integrating polynomials of `exact_degree` exactly.
///
/// Degree 3 is served by the degree-4 rule (the classical 4-point degree-3
/// rule has a negative weight).
pub fn quad_rule(exact_degree: usize) -> Result<QuadRule> {
    let mut points = Vec::new();
    let mut weights = Vec::new();
    let degree = match exact_degree {
        0 | 1 => {
            points.push([1.0 / 3.0; 3]);
            weights.push(1.0);
            1
        }
        2 => {
            for p in [[0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]] {
                points.push(p);
                weights.push(1.0 / 3.0);
            }
            2
        }
        3 | 4 => {
            orbit3(
                0.445948490915964886319,
                0.223381589678011465945,
                &mut points,
                &mut weights,
            );
            orbit3(
                0.091576213509770743460,
                0.109951743655321867389,
                &mut points,
                &mut weights,
            );
            4
        }
        5 => {
            points.push([1.0 / 3.0; 3]);
            weights.push(0.225);
            orbit3(
                0.470142064105115089770,
                0.132394152788506181075,
                &mut points,
                &mut weights,
            );
            orbit3(
                0.101286507323456338800,
                0.125939180544827152595,
                &mut points,
                &mut weights,
            );
            5
        }
        6 => {
            orbit3(
                0.249286745170910421136,
                0.116786275726379366030,
                &mut points,
                &mut weights,
            );
            orbit3(
                0.063089014491502228340,
                0.050844906370206816921,
                &mut points,
                &mut weights,
            );
            orbit6(
                0.053145049844816947353,
                0.310352451033784405416,
                0.082851075618373575194,
                &mut points,
                &mut weights,
            );
            6
        }
        d => return Err(Error::DegreeUnsupported(d)),
    };
    Ok(QuadRule {
        points,
        weights,
        exact_degree: degree,
    })
}

impl QuadRule {
    /// Integral of `f` (given in barycentric coordinates) over a triangle of `area`.
    pub fn integrate(&self, area: f64, f: impl Fn(&[f64; 3]) -> f64) -> f64 {
        area * self
            .points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * f(p))
            .sum::<f64>()
    }
}
