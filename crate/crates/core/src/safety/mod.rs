//! Barrier and Lyapunov constraints, the robustified barrier derivative, and
//! the QP safety filters built on them.

mod controllers;
mod dob;
mod filter;

pub use controllers::{
    clf_row, dob_cbf_control, esor_qp_control, estimated_rate, nominal_cbf_qp_control,
    nominal_rate, ControlAffine, ControllerContext, SafeControl,
};
pub use dob::{dob_rate, dob_update, DobState};
pub use filter::{filter_control, ClfRow, ControlOutcome, FilterProblem, InputBox, QpStatus};

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{BoundsError, ErrorBoundSet};
use crate::numerics::{dot, Matrix, NumericsError};
use crate::observer::{ChannelModel, ObserverError};

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type GradientFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
pub type HessianFn = Arc<dyn Fn(&[f64]) -> Matrix + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SafetyError {
    #[error("strict robust mode needs a Lipschitz constant for the barrier gradient `{0}`")]
    MissingLipschitz(String),
    #[error("barrier `{0}` is not relative degree two")]
    NotSecondOrder(String),
    #[error("barrier `{0}` must be lifted before it can constrain the input")]
    NotLifted(String),
    #[error("class-K gains must be positive, got {0}")]
    InvalidGain(f64),
    #[error("input box [{lower}, {upper}] is empty or not finite")]
    InvalidInputBox { lower: f64, upper: f64 },
    #[error("{what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Observer(#[from] ObserverError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
}

#[derive(Clone)]
pub enum BarrierOrder {
    First,
    /// `ψ₁ = ḣ + α₁ h` is a first-order barrier with gain `α₂`.
    Second {
        alpha1: f64,
        alpha2: f64,
        hessian: HessianFn,
        /// Lipschitz constant of the gradient of `ψ₁`.
        lifted_lipschitz: Option<f64>,
    },
}

#[derive(Clone)]
pub struct BarrierSpec {
    pub name: String,
    pub value: ScalarFn,
    pub gradient: GradientFn,
    /// Linear class-K gain `β(s) = gain · s`.
    pub gain: f64,
    pub order: BarrierOrder,
    /// Lipschitz constant of `h_x` over the operating box.
    pub lipschitz: Option<f64>,
}

impl fmt::Debug for BarrierSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let order = match &self.order {
            BarrierOrder::First => "first".to_string(),
            BarrierOrder::Second { alpha1, alpha2, .. } => {
                format!("second(α₁={alpha1}, α₂={alpha2})")
            }
        };
        f.debug_struct("BarrierSpec")
            .field("name", &self.name)
            .field("gain", &self.gain)
            .field("order", &order)
            .field("lipschitz", &self.lipschitz)
            .finish_non_exhaustive()
    }
}

impl BarrierSpec {
    pub fn first_order(
        name: impl Into<String>,
        value: ScalarFn,
        gradient: GradientFn,
        gain: f64,
    ) -> Self {
        Self {
            name: name.into(),
            value,
            gradient,
            gain,
            order: BarrierOrder::First,
            lipschitz: None,
        }
    }

    pub fn h(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    pub fn h_x(&self, x: &[f64]) -> Vec<f64> {
        (self.gradient)(x)
    }

    pub fn validate(&self) -> Result<(), SafetyError> {
        let positive = |g: f64| {
            if g > 0.0 && g.is_finite() {
                Ok(())
            } else {
                Err(SafetyError::InvalidGain(g))
            }
        };
        match &self.order {
            BarrierOrder::First => positive(self.gain),
            BarrierOrder::Second { alpha1, alpha2, .. } => positive(*alpha1).and(positive(*alpha2)),
        }
    }
}

#[derive(Clone)]
pub struct LyapunovSpec {
    pub value: ScalarFn,
    pub gradient: GradientFn,
    /// Required exponential decay rate `λ` in `V̇ ≤ -λ V + δ`.
    pub rate: f64,
    /// Quadratic penalty on the slack `δ`.
    pub slack_weight: f64,
}

impl fmt::Debug for LyapunovSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LyapunovSpec")
            .field("rate", &self.rate)
            .field("slack_weight", &self.slack_weight)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RobustMode {
    /// Full worst-case penalty, with Lipschitz inflation of the unknown `h_x(x)`.
    Strict,
    /// Only the disturbance-estimate error on the top chain coordinate.
    #[default]
    SteadyState,
}

/// State rate as an affine function of the scalar input: `ẋ = constant + slope · u`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineRate {
    pub constant: Vec<f64>,
    pub slope: Vec<f64>,
}

/// Scalar `constant + slope · u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineConstraint {
    pub constant: f64,
    pub slope: f64,
}

impl AffineConstraint {
    pub fn at(&self, u: f64) -> f64 {
        self.constant + self.slope * u
    }

    pub fn shifted(self, by: f64) -> Self {
        Self {
            constant: self.constant + by,
            slope: self.slope,
        }
    }
}

/// Worst-case shortfall of the certainty-equivalent barrier derivative.
pub fn robust_penalty(
    spec: &BarrierSpec,
    x_hat: &[f64],
    channels: &[ChannelModel],
    bounds: &ErrorBoundSet,
    mode: RobustMode,
) -> Result<f64, SafetyError> {
    if bounds.channels.len() != channels.len() {
        return Err(SafetyError::DimensionMismatch {
            what: "bound channels",
            expected: channels.len(),
            found: bounds.channels.len(),
        });
    }
    let hx = spec.h_x(x_hat);
    let mut penalty = 0.0;
    match mode {
        RobustMode::SteadyState => {
            for (m, b) in channels.iter().zip(&bounds.channels) {
                penalty += hx[m.top_index()].abs() * b.gamma;
            }
        }
        RobustMode::Strict => {
            let lip = spec
                .lipschitz
                .ok_or_else(|| SafetyError::MissingLipschitz(spec.name.clone()))?;
            let drift = lip * bounds.state_bound_norm();
            for (m, b) in channels.iter().zip(&bounds.channels) {
                for (j, &idx) in m.state_indices.iter().enumerate() {
                    penalty += (hx[idx].abs() + drift) * (b.h_l1[j] + b.lcg_l1[j]) * b.gamma;
                }
            }
            penalty += drift * bounds.phi.value;
        }
    }
    Ok(penalty)
}

/// `Ψ_h` as an affine function of `u`.
///
/// `rate` is the estimated state rate with the disturbance estimates already
/// added on each channel's top coordinate (see [`estimated_rate`]).
pub fn psi_h_affine(
    spec: &BarrierSpec,
    x_hat: &[f64],
    rate: &AffineRate,
    channels: &[ChannelModel],
    bounds: &ErrorBoundSet,
    mode: RobustMode,
) -> Result<AffineConstraint, SafetyError> {
    if !matches!(spec.order, BarrierOrder::First) {
        return Err(SafetyError::NotLifted(spec.name.clone()));
    }
    let hx = spec.h_x(x_hat);
    if hx.len() != rate.constant.len() || hx.len() != rate.slope.len() {
        return Err(SafetyError::DimensionMismatch {
            what: "barrier gradient",
            expected: rate.constant.len(),
            found: hx.len(),
        });
    }
    let penalty = robust_penalty(spec, x_hat, channels, bounds, mode)?;
    Ok(AffineConstraint {
        constant: dot(&hx, &rate.constant) - penalty,
        slope: dot(&hx, &rate.slope),
    })
}

pub fn psi_h(
    spec: &BarrierSpec,
    x_hat: &[f64],
    rate: &AffineRate,
    u: f64,
    channels: &[ChannelModel],
    bounds: &ErrorBoundSet,
    mode: RobustMode,
) -> Result<f64, SafetyError> {
    Ok(psi_h_affine(spec, x_hat, rate, channels, bounds, mode)?.at(u))
}

/// First-order barrier `ψ₁ = ḣ + α₁ h` for an `h` of relative degree two.
///
/// `h` must depend only on the lower chain coordinates of `channel`, so that
/// `ḣ = Σ_j h_x[z_j] z_{j+1}` involves neither the input nor the disturbance.
/// The lifted barrier carries gain `α₂`.
pub fn hocbf_lift(spec: &BarrierSpec, channel: &ChannelModel) -> Result<BarrierSpec, SafetyError> {
    let BarrierOrder::Second {
        alpha1,
        alpha2,
        hessian,
        lifted_lipschitz,
    } = &spec.order
    else {
        return Err(SafetyError::NotSecondOrder(spec.name.clone()));
    };
    spec.validate()?;
    let idx = channel.state_indices.clone();
    let (alpha1, value, gradient, hessian) = (
        *alpha1,
        spec.value.clone(),
        spec.gradient.clone(),
        hessian.clone(),
    );

    let grad_v = gradient.clone();
    let idx_v = idx.clone();
    let psi: ScalarFn = Arc::new(move |x: &[f64]| {
        let hx = grad_v(x);
        let hdot: f64 = idx_v.windows(2).map(|w| hx[w[0]] * x[w[1]]).sum();
        hdot + alpha1 * value(x)
    });
    let psi_grad: GradientFn = Arc::new(move |x: &[f64]| {
        let hx = gradient(x);
        let hess = hessian(x);
        let mut g: Vec<f64> = hx.iter().map(|v| alpha1 * v).collect();
        for w in idx.windows(2) {
            for (k, gk) in g.iter_mut().enumerate() {
                *gk += hess[(w[0], k)] * x[w[1]];
            }
            g[w[1]] += hx[w[0]];
        }
        g
    });
    Ok(BarrierSpec {
        name: format!("{}_lifted", spec.name),
        value: psi,
        gradient: psi_grad,
        gain: *alpha2,
        order: BarrierOrder::First,
        lipschitz: *lifted_lipschitz,
    })
}
