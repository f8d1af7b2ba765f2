//! Controllers: the observer-based robust QP and three comparison baselines.

use super::dob::DobState;
use super::{
    filter_control, psi_h_affine, AffineConstraint, AffineRate, BarrierSpec, ClfRow,
    ControlOutcome, FilterProblem, InputBox, LyapunovSpec, RobustMode, SafetyError,
};
use crate::bounds::ErrorBoundSet;
use crate::numerics::dot;
use crate::observer::ChannelModel;

/// Nominal model `ẋ = f(x, t) + g(x) u`, disturbances excluded.
pub trait ControlAffine: Send + Sync {
    fn state_dim(&self) -> usize;
    fn drift(&self, x: &[f64], t: f64) -> Vec<f64>;
    fn input_gain(&self, x: &[f64]) -> Vec<f64>;
}

/// `f(x, t) + d` and `g(x)`.
pub fn nominal_rate(
    model: &dyn ControlAffine,
    x: &[f64],
    t: f64,
    disturbance: &[f64],
) -> AffineRate {
    let mut constant = model.drift(x, t);
    for (c, d) in constant.iter_mut().zip(disturbance) {
        *c += d;
    }
    AffineRate {
        constant,
        slope: model.input_gain(x),
    }
}

/// Rate seen by the observers: each channel's top coordinate follows
/// `b(x̂) + a(x̂) u + f̂`, the rest follow the nominal model at `x̂`.
pub fn estimated_rate(
    model: &dyn ControlAffine,
    channels: &[ChannelModel],
    x_hat: &[f64],
    measurement: &[f64],
    f_hat: &[f64],
    t: f64,
) -> Result<AffineRate, SafetyError> {
    if f_hat.len() != channels.len() {
        return Err(SafetyError::DimensionMismatch {
            what: "disturbance estimates",
            expected: channels.len(),
            found: f_hat.len(),
        });
    }
    let mut rate = nominal_rate(model, x_hat, t, &[]);
    for (m, &f) in channels.iter().zip(f_hat) {
        let k = m.top_index();
        rate.constant[k] = m.b(x_hat, measurement) + f;
        rate.slope[k] = match m.control_index {
            Some(_) => m.a(x_hat, measurement)?,
            None => 0.0,
        };
    }
    Ok(rate)
}

/// `V_x · ẋ + λ V + extra ≤ δ` as a filter row.
pub fn clf_row(clf: &LyapunovSpec, x: &[f64], rate: &AffineRate, extra: f64) -> ClfRow {
    let vx = (clf.gradient)(x);
    ClfRow {
        constant: dot(&vx, &rate.constant) + clf.rate * (clf.value)(x) + extra,
        slope: dot(&vx, &rate.slope),
        slack_weight: clf.slack_weight,
    }
}

/// Shared controller settings.
#[derive(Clone, Copy)]
pub struct ControllerContext<'a> {
    pub model: &'a dyn ControlAffine,
    /// First-order (already lifted) barriers.
    pub barriers: &'a [BarrierSpec],
    pub clf: Option<&'a LyapunovSpec>,
    pub input_box: Option<InputBox>,
    /// Weight on `(u - k_nom)²`.
    pub weight: f64,
}

/// Filter result plus the barrier-derivative lower bound at the applied input.
#[derive(Debug, Clone, PartialEq)]
pub struct SafeControl {
    pub outcome: ControlOutcome,
    /// `Ψ_h(u*)` per barrier (for baselines, their own derivative estimate).
    pub psi: Vec<f64>,
}

fn solve(
    ctx: &ControllerContext<'_>,
    derivs: Vec<AffineConstraint>,
    h: &[f64],
    clf: Option<ClfRow>,
    k_nom: f64,
) -> Result<SafeControl, SafetyError> {
    let rows: Vec<AffineConstraint> = derivs
        .iter()
        .zip(ctx.barriers)
        .zip(h)
        .map(|((d, b), &hv)| d.shifted(b.gain * hv))
        .collect();
    let outcome = filter_control(&FilterProblem {
        nominal: k_nom,
        weight: ctx.weight,
        barriers: &rows,
        clf,
        input_box: ctx.input_box,
    })?;
    let psi = derivs.iter().map(|d| d.at(outcome.u)).collect();
    Ok(SafeControl { outcome, psi })
}

/// Robust observer-based QP: `Ψ_h + β(h(x̂)) ≥ 0` for every barrier.
pub fn esor_qp_control(
    ctx: &ControllerContext<'_>,
    channels: &[ChannelModel],
    bounds: &ErrorBoundSet,
    mode: RobustMode,
    x_hat: &[f64],
    measurement: &[f64],
    f_hat: &[f64],
    t: f64,
    k_nom: f64,
) -> Result<SafeControl, SafetyError> {
    let rate = estimated_rate(ctx.model, channels, x_hat, measurement, f_hat, t)?;
    let derivs = ctx
        .barriers
        .iter()
        .map(|b| psi_h_affine(b, x_hat, &rate, channels, bounds, mode))
        .collect::<Result<Vec<_>, _>>()?;
    let h: Vec<f64> = ctx.barriers.iter().map(|b| b.h(x_hat)).collect();
    let clf = ctx.clf.map(|c| clf_row(c, x_hat, &rate, 0.0));
    solve(ctx, derivs, &h, clf, k_nom)
}

/// Certainty-equivalent QP on the true state with a known disturbance
/// vector (the true one, or zeros for the uncertainty-blind baseline).
pub fn nominal_cbf_qp_control(
    ctx: &ControllerContext<'_>,
    x: &[f64],
    disturbance: &[f64],
    t: f64,
    k_nom: f64,
) -> Result<SafeControl, SafetyError> {
    let rate = nominal_rate(ctx.model, x, t, disturbance);
    let derivs = ctx
        .barriers
        .iter()
        .map(|b| {
            let hx = b.h_x(x);
            AffineConstraint {
                constant: dot(&hx, &rate.constant),
                slope: dot(&hx, &rate.slope),
            }
        })
        .collect();
    let h: Vec<f64> = ctx.barriers.iter().map(|b| b.h(x)).collect();
    let clf = ctx.clf.map(|c| clf_row(c, x, &rate, 0.0));
    solve(ctx, derivs, &h, clf, k_nom)
}

/// QP with `a_e(x, u) + b̂_e - b_h/k_b + β(h) ≥ 0` per barrier, each barrier
/// carrying its own observer; the CLF row uses `clf_dob`'s estimate.
pub fn dob_cbf_control(
    ctx: &ControllerContext<'_>,
    x: &[f64],
    t: f64,
    k_nom: f64,
    dobs: &[DobState],
    clf_dob: Option<&DobState>,
) -> Result<SafeControl, SafetyError> {
    if dobs.len() != ctx.barriers.len() {
        return Err(SafetyError::DimensionMismatch {
            what: "barrier observers",
            expected: ctx.barriers.len(),
            found: dobs.len(),
        });
    }
    let rate = nominal_rate(ctx.model, x, t, &[]);
    let derivs = ctx
        .barriers
        .iter()
        .zip(dobs)
        .map(|(b, d)| {
            let hx = b.h_x(x);
            AffineConstraint {
                constant: dot(&hx, &rate.constant) + d.estimate - d.margin,
                slope: dot(&hx, &rate.slope),
            }
        })
        .collect();
    let h: Vec<f64> = ctx.barriers.iter().map(|b| b.h(x)).collect();
    let clf = ctx
        .clf
        .map(|c| clf_row(c, x, &rate, clf_dob.map_or(0.0, |d| d.estimate)));
    solve(ctx, derivs, &h, clf, k_nom)
}
