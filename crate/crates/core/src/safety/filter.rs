//! The scalar-input CBF(-CLF) quadratic program and its infeasibility protocol.

use serde::{Deserialize, Serialize};

use super::{AffineConstraint, SafetyError};
use crate::numerics::{solve_qp, Matrix, NumericsError, QpProblem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputBox {
    pub lower: f64,
    pub upper: f64,
}

impl InputBox {
    pub fn symmetric(limit: f64) -> Self {
        Self {
            lower: -limit,
            upper: limit,
        }
    }

    pub fn validate(&self) -> Result<(), SafetyError> {
        if self.lower.is_finite() && self.upper.is_finite() && self.lower < self.upper {
            Ok(())
        } else {
            Err(SafetyError::InvalidInputBox {
                lower: self.lower,
                upper: self.upper,
            })
        }
    }

    pub fn clamp(&self, u: f64) -> f64 {
        u.clamp(self.lower, self.upper)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Optimal,
    /// The CLF row had to be dropped to restore feasibility.
    ClfDropped,
    /// No input satisfies every barrier; the logged input is a saturated fallback.
    Infeasible,
}

impl QpStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            QpStatus::Optimal => "optimal",
            QpStatus::ClfDropped => "clf_dropped",
            QpStatus::Infeasible => "infeasible",
        }
    }
}

/// Soft decrease constraint `constant + slope · u ≤ δ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClfRow {
    pub constant: f64,
    pub slope: f64,
    pub slack_weight: f64,
}

/// `min weight (u - k_nom)² + slack_weight δ²` subject to every barrier row
/// `constant + slope · u ≥ 0`, the optional CLF row, and the input box.
#[derive(Debug, Clone)]
pub struct FilterProblem<'a> {
    pub nominal: f64,
    pub weight: f64,
    pub barriers: &'a [AffineConstraint],
    pub clf: Option<ClfRow>,
    pub input_box: Option<InputBox>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutcome {
    pub u: f64,
    pub slack: f64,
    pub status: QpStatus,
    /// Each barrier row evaluated at `u`.
    pub margins: Vec<f64>,
}

/// Solves the filter QP, dropping the CLF and then saturating when infeasible.
///
/// The input is rescaled by the box half-width (or `|k_nom|`) and each row
/// normalized, so the solver sees unit-scale data whatever the plant units.
pub fn filter_control(p: &FilterProblem<'_>) -> Result<ControlOutcome, SafetyError> {
    if let Some(b) = &p.input_box {
        b.validate()?;
    }
    if !(p.weight > 0.0) || !p.weight.is_finite() {
        return Err(NumericsError::NotPositiveDefinite.into());
    }
    let scale = match p.input_box {
        Some(b) => b.lower.abs().max(b.upper.abs()),
        None => p.nominal.abs().max(1.0),
    };
    let outcome = |u: f64, slack: f64, status| ControlOutcome {
        u,
        slack,
        status,
        margins: p.barriers.iter().map(|c| c.at(u)).collect(),
    };

    if let Some(clf) = p.clf {
        match solve_scaled(p, Some(clf), scale) {
            Ok((u, slack)) => return Ok(outcome(u, slack, QpStatus::Optimal)),
            Err(NumericsError::Infeasible) => {}
            Err(e) => return Err(e.into()),
        }
    }
    match solve_scaled(p, None, scale) {
        Ok((u, _)) => {
            let status = if p.clf.is_some() {
                QpStatus::ClfDropped
            } else {
                QpStatus::Optimal
            };
            Ok(outcome(u, 0.0, status))
        }
        Err(NumericsError::Infeasible) => {
            Ok(outcome(saturated_fallback(p), 0.0, QpStatus::Infeasible))
        }
        Err(e) => Err(e.into()),
    }
}

fn solve_scaled(
    p: &FilterProblem<'_>,
    clf: Option<ClfRow>,
    scale: f64,
) -> Result<(f64, f64), NumericsError> {
    // Decision vector (ũ, δ̃) with u = scale ũ; δ scaled by the CLF row norm.
    let n = if clf.is_some() { 2 } else { 1 };
    let w = p.weight * scale * scale;
    let mut hess = vec![0.0; n * n];
    let mut lin = vec![0.0; n];
    hess[0] = 2.0 * w;
    lin[0] = -2.0 * w * p.nominal / scale;
    let mut slack_scale = 1.0;
    if let Some(c) = clf {
        // δ = slack_scale δ̃ keeps δ̃ on the same scale as the CLF row.
        slack_scale = (c.slope.abs() * scale).max(c.constant.abs()).max(1e-12);
        let s = slack_scale;
        hess[3] = 2.0 * c.slack_weight * s * s;
        if !(hess[3] > 0.0) {
            return Err(NumericsError::NotPositiveDefinite);
        }
    }
    let norm = hess[0].max(if n == 2 { hess[3] } else { 0.0 });
    let hess: Vec<f64> = hess.iter().map(|v| v / norm).collect();
    let lin: Vec<f64> = lin.iter().map(|v| v / norm).collect();
    let mut qp = QpProblem::new(Matrix::from_row_major(n, n, hess)?, lin);
    for b in p.barriers {
        let a = b.slope * scale;
        let r = a.abs().max(b.constant.abs()).max(1e-300);
        let mut coeffs = vec![0.0; n];
        coeffs[0] = a / r;
        qp = qp.with_constraint(coeffs, -b.constant / r);
    }
    if let Some(c) = clf {
        // slack_scale δ̃ - slope scale ũ ≥ constant
        let a = -c.slope * scale;
        let r = a.abs().max(slack_scale).max(c.constant.abs());
        qp = qp.with_constraint(vec![a / r, slack_scale / r], c.constant / r);
    }
    if let Some(b) = p.input_box {
        qp = qp.with_bounds(0, Some(b.lower / scale), Some(b.upper / scale));
    }
    let sol = solve_qp(&qp)?;
    let mut u = sol.point[0] * scale;
    if let Some(b) = p.input_box {
        u = b.clamp(u);
    }
    if (u - p.nominal).abs() <= 1e-12 * p.nominal.abs().max(scale) {
        u = p.nominal;
    }
    let slack = if n == 2 {
        sol.point[1] * slack_scale
    } else {
        0.0
    };
    Ok((u, slack))
}

/// Box end (or the nominal input when unbounded) maximizing the worst barrier row.
fn saturated_fallback(p: &FilterProblem<'_>) -> f64 {
    let worst = |u: f64| {
        p.barriers
            .iter()
            .map(|c| c.at(u))
            .fold(f64::INFINITY, f64::min)
    };
    match p.input_box {
        Some(b) => {
            if worst(b.upper) >= worst(b.lower) {
                b.upper
            } else {
                b.lower
            }
        }
        None => p.nominal,
    }
}
