//! First-order disturbance observer on a measured scalar `σ` with
//! `σ̇ = a_e + b_e`, `a_e` known and `b_e` unknown.
//!
//! Estimate `b̂_e = z + k_b σ` with `ż = -k_b (z + k_b σ) - k_b a_e`, so that
//! `d/dt b̂_e = k_b (b_e - b̂_e)`. A rate bound `|ḃ_e| ≤ b_h` then caps the
//! steady-state error at `b_h / k_b`.

use super::SafetyError;
use crate::numerics::rk4_step;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DobState {
    pub z: f64,
    pub gain: f64,
    /// `z + k_b σ` at the most recent measurement.
    pub estimate: f64,
    /// Worst-case steady-state error `b_h / k_b`.
    pub margin: f64,
}

impl DobState {
    /// Starts with `b̂_e = 0`.
    pub fn new(gain: f64, rate_bound: f64, sigma0: f64) -> Result<Self, SafetyError> {
        if !(gain > 0.0) || !gain.is_finite() {
            return Err(SafetyError::InvalidGain(gain));
        }
        Ok(Self {
            z: -gain * sigma0,
            gain,
            estimate: 0.0,
            margin: rate_bound / gain,
        })
    }

    pub fn estimate_at(&self, sigma: f64) -> f64 {
        self.z + self.gain * sigma
    }
}

/// `ż` for co-integration with the plant.
pub fn dob_rate(z: f64, gain: f64, sigma: f64, a_e: f64) -> f64 {
    -gain * (z + gain * sigma) - gain * a_e
}

/// Refreshes the estimate at the current `σ`, then advances `z` one RK4 step
/// with `a_e` held. Inside the step `σ` is predicted from `σ̇ = a_e + b̂_e`.
pub fn dob_update(s: &DobState, sigma: f64, a_e: f64, dt: f64) -> Result<DobState, SafetyError> {
    let estimate = s.estimate_at(sigma);
    let k = s.gain;
    let next = rk4_step(
        |_, v| {
            let b_hat = v[0] + k * v[1];
            vec![dob_rate(v[0], k, v[1], a_e), a_e + b_hat]
        },
        &[s.z, sigma],
        0.0,
        dt,
    )?;
    Ok(DobState {
        z: next[0],
        estimate,
        ..*s
    })
}
