//! Quadrature rules for the conductance path integral over alpha in [0, 1].
//!
//! `steps` always means the number of path evaluations, regardless of rule.

use serde::{Deserialize, Serialize};

use super::AttributionError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureRule {
    /// Left endpoints of a uniform grid. First-order; used by the brute-force
    /// oracle at very high step counts.
    RiemannLeft,
    /// Uniform trapezoid rule over `steps` points (`steps - 1` intervals).
    RiemannTrapezoid,
    /// Gauss-Legendre nodes mapped from [-1, 1] to [0, 1]. Default.
    GaussLegendre,
}

impl QuadratureRule {
    pub fn name(&self) -> &'static str {
        match self {
            QuadratureRule::RiemannLeft => "riemann_left",
            QuadratureRule::RiemannTrapezoid => "riemann_trapezoid",
            QuadratureRule::GaussLegendre => "gauss_legendre",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub rule: QuadratureRule,
    pub steps: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            rule: QuadratureRule::GaussLegendre,
            steps: 50,
        }
    }
}

/// Nodes and weights on [0, 1]. Weights sum to 1 for every rule, so a
/// constant integrand is integrated exactly.
pub fn nodes_weights(rule: QuadratureRule, steps: usize) -> Result<Vec<(f64, f64)>, AttributionError> {
    if steps < 2 {
        return Err(AttributionError::InvalidSteps(steps));
    }
    Ok(match rule {
        QuadratureRule::RiemannLeft => {
            let n = steps as f64;
            (0..steps).map(|k| (k as f64 / n, 1.0 / n)).collect()
        }
        QuadratureRule::RiemannTrapezoid => {
            let intervals = (steps - 1) as f64;
            (0..steps)
                .map(|k| {
                    let w = if k == 0 || k == steps - 1 {
                        0.5 / intervals
                    } else {
                        1.0 / intervals
                    };
                    (k as f64 / intervals, w)
                })
                .collect()
        }
        QuadratureRule::GaussLegendre => gauss_legendre_unit(steps),
    })
}

/// Gauss-Legendre nodes/weights mapped to [0, 1].
fn gauss_legendre_unit(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for k in 1..=n {
        // Initial guess (Abramowitz & Stegun 25.4.30 neighborhood), then
        // Newton on P_n.
        let mut x = (std::f64::consts::PI * (k as f64 - 0.25) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let delta = p / d;
            x -= delta;
            if delta.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // Map from [-1, 1] to [0, 1]; emit in ascending alpha order.
        out.push((0.5 * (1.0 - x), 0.5 * w));
    }
    out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    out
}

/// Evaluate P_n and P_n' at x via the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p_prev = 1.0;
    let mut p = x;
    for m in 2..=n {
        let mf = m as f64;
        let p_next = ((2.0 * mf - 1.0) * x * p - (mf - 1.0) * p_prev) / mf;
        p_prev = p;
        p = p_next;
    }
    let d = n as f64 * (x * p - p_prev) / (x * x - 1.0);
    (p, d)
}
