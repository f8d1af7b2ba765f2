//! Extended state observers for single-output normal-form channels.
//!
//! Each measured output `y_i` is the head of an integrator chain of length
//! `r` whose last row carries `b(z) + a(z) u_i` plus an unknown total
//! disturbance `f_i`. Appending `f_i` to the chain gives an `(r+1)`-state
//! augmented system that is observable from `y_i` alone; the observer here
//! estimates the chain and `f_i` together.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::numerics::{
    characteristic_polynomial, linear_solve, rk4_step, try_rk4_step, Matrix, NumericsError,
};

/// `a` and `b` of a channel, evaluated on the full plant state (estimated or
/// true) and the current measurement vector.
pub type ChannelFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// Input gains below this magnitude are rejected on controlled channels.
pub const MIN_INPUT_GAIN: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ObserverError {
    #[error("relative degree must be at least 1")]
    InvalidRelativeDegree,
    #[error("continuous bandwidth must be positive and finite, got {0}")]
    InvalidBandwidth(f64),
    #[error("discrete pole must lie in [0, 1), got {0}")]
    InvalidPole(f64),
    #[error("sample period must be positive and finite, got {0}")]
    InvalidPeriod(f64),
    #[error("channel `{channel}` input gain {value:e} vanishes")]
    VanishingInputGain { channel: String, value: f64 },
    #[error("observability matrix is numerically singular")]
    ObservabilityLoss,
    #[error("gain placement check failed: coefficient {index} is {got}, expected {want}")]
    PlacementMismatch { index: usize, got: f64, want: f64 },
    #[error("observer gains are for {expected} mode")]
    WrongMode { expected: &'static str },
    #[error("estimate has length {found}, channel needs {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// One SISO channel in normal form.
#[derive(Clone)]
pub struct ChannelModel {
    pub name: String,
    pub relative_degree: usize,
    /// Index of `y_i` in the measurement vector.
    pub output_index: usize,
    /// Input component driving the chain; `None` for uncontrolled channels.
    pub control_index: Option<usize>,
    /// Full-state indices of the chain coordinates `z_1..z_r`.
    pub state_indices: Vec<usize>,
    pub input_gain: ChannelFn,
    pub drift: ChannelFn,
}

impl fmt::Debug for ChannelModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChannelModel")
            .field("name", &self.name)
            .field("relative_degree", &self.relative_degree)
            .field("output_index", &self.output_index)
            .field("control_index", &self.control_index)
            .field("state_indices", &self.state_indices)
            .finish_non_exhaustive()
    }
}

impl ChannelModel {
    /// Full-state index of the top chain coordinate, where `f_i` enters.
    pub fn top_index(&self) -> usize {
        self.state_indices[self.relative_degree - 1]
    }

    /// `a(x)`, checked against [`MIN_INPUT_GAIN`] on controlled channels.
    pub fn a(&self, state: &[f64], measurement: &[f64]) -> Result<f64, ObserverError> {
        let value = (self.input_gain)(state, measurement);
        if self.control_index.is_some() && !(value.abs() >= MIN_INPUT_GAIN) {
            return Err(ObserverError::VanishingInputGain {
                channel: self.name.clone(),
                value,
            });
        }
        Ok(value)
    }

    pub fn b(&self, state: &[f64], measurement: &[f64]) -> f64 {
        (self.drift)(state, measurement)
    }

    /// Total disturbance `f = b(x) - b(x̂) + (a(x) - a(x̂)) u + d` as seen by an
    /// observer running at `estimate`.
    pub fn total_disturbance(
        &self,
        truth: &[f64],
        estimate: &[f64],
        measurement: &[f64],
        u: f64,
        d: f64,
    ) -> f64 {
        let db = self.b(truth, measurement) - self.b(estimate, measurement);
        let da = (self.input_gain)(truth, measurement) - (self.input_gain)(estimate, measurement);
        db + da * u + d
    }

    fn check(&self) -> Result<(), ObserverError> {
        if self.relative_degree == 0 || self.state_indices.len() != self.relative_degree {
            return Err(ObserverError::InvalidRelativeDegree);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EsoMode {
    Continuous { bandwidth: f64 },
    Discrete { pole: f64, period: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EsoGains {
    /// `L`, length `r + 1`.
    pub gains: Vec<f64>,
    pub mode: EsoMode,
}

impl EsoGains {
    pub fn relative_degree(&self) -> usize {
        self.gains.len() - 1
    }

    /// Gains of the equivalent continuous observer (`L / T` in discrete mode).
    pub fn continuous_equivalent(&self) -> Vec<f64> {
        match self.mode {
            EsoMode::Continuous { .. } => self.gains.clone(),
            EsoMode::Discrete { period, .. } => self.gains.iter().map(|g| g / period).collect(),
        }
    }
}

/// Augmented estimate `(x̂_1..x̂_r, f̂)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EsoState {
    pub estimate: Vec<f64>,
    pub time: f64,
}

impl EsoState {
    /// First measurement in the position slot, zeros elsewhere, zero disturbance.
    pub fn from_measurement(relative_degree: usize, y0: f64, t0: f64) -> Self {
        let mut estimate = vec![0.0; relative_degree + 1];
        estimate[0] = y0;
        Self { estimate, time: t0 }
    }

    pub fn chain(&self) -> &[f64] {
        &self.estimate[..self.estimate.len() - 1]
    }

    pub fn disturbance(&self) -> f64 {
        self.estimate[self.estimate.len() - 1]
    }
}

/// `(A, B, C, D)` of the augmented channel.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSystem {
    pub a: Matrix,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
}

impl AugmentedSystem {
    /// Integrator chain with the disturbance as its last, constant state.
    pub fn continuous(relative_degree: usize) -> Self {
        let n = relative_degree + 1;
        let mut a = Matrix::zeros(n, n);
        for i in 0..n - 1 {
            a[(i, i + 1)] = 1.0;
        }
        let mut b = vec![0.0; n];
        b[n - 2] = 1.0;
        let mut c = vec![0.0; n];
        c[0] = 1.0;
        let mut d = vec![0.0; n];
        d[n - 1] = 1.0;
        Self { a, b, c, d }
    }

    /// Euler discretization `I + T A`, `T B` of [`AugmentedSystem::continuous`];
    /// the disturbance state keeps its unit self-transition.
    pub fn discrete(relative_degree: usize, period: f64) -> Self {
        let cont = Self::continuous(relative_degree);
        let n = relative_degree + 1;
        let a = Matrix::identity(n)
            .add(&cont.a.scale(period))
            .expect("same shape");
        Self {
            a,
            b: cont.b.iter().map(|v| v * period).collect(),
            c: cont.c,
            d: cont.d,
        }
    }

    pub fn observability_matrix(&self) -> Matrix {
        let n = self.c.len();
        let mut obs = Matrix::zeros(n, n);
        let mut row = self.c.clone();
        for i in 0..n {
            for j in 0..n {
                obs[(i, j)] = row[j];
            }
            // next row = row * A
            row = (0..n)
                .map(|j| (0..n).map(|k| row[k] * self.a[(k, j)]).sum())
                .collect();
        }
        obs
    }

    /// `A - L C`.
    pub fn error_dynamics(&self, gains: &[f64]) -> Matrix {
        let n = self.c.len();
        let mut m = self.a.clone();
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] -= gains[i] * self.c[j];
            }
        }
        m
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Coefficients of `(s - root)^n`, highest power first.
fn repeated_root_polynomial(root: f64, n: usize) -> Vec<f64> {
    (0..=n)
        .map(|j| binomial(n, j) * (-root).powi(j as i32))
        .collect()
}

fn verify_placement(
    system: &AugmentedSystem,
    gains: &[f64],
    root: f64,
) -> Result<(), ObserverError> {
    let got = characteristic_polynomial(&system.error_dynamics(gains))?;
    let want = repeated_root_polynomial(root, gains.len());
    for (index, (&g, &w)) in got.iter().zip(&want).enumerate() {
        if (g - w).abs() > 1e-9 * w.abs().max(1.0) {
            return Err(ObserverError::PlacementMismatch {
                index,
                got: g,
                want: w,
            });
        }
    }
    Ok(())
}

/// Gains placing every eigenvalue of `A - LC` at `-bandwidth`:
/// `L_j = C(r+1, j) ω^j`.
pub fn continuous_gains(relative_degree: usize, bandwidth: f64) -> Result<EsoGains, ObserverError> {
    if relative_degree == 0 {
        return Err(ObserverError::InvalidRelativeDegree);
    }
    if !(bandwidth > 0.0) || !bandwidth.is_finite() {
        return Err(ObserverError::InvalidBandwidth(bandwidth));
    }
    let n = relative_degree + 1;
    let gains: Vec<f64> = (1..=n)
        .map(|j| binomial(n, j) * bandwidth.powi(j as i32))
        .collect();
    verify_placement(
        &AugmentedSystem::continuous(relative_degree),
        &gains,
        -bandwidth,
    )?;
    Ok(EsoGains {
        gains,
        mode: EsoMode::Continuous { bandwidth },
    })
}

/// Gains placing every eigenvalue of the discrete `A - LC` at `pole`, by
/// Ackermann's formula `L = φ(A) O⁻¹ e_{r+1}` with `φ(z) = (z - pole)^{r+1}`.
///
/// The observability matrix of the Euler chain scales its columns by powers
/// of `period`, so the solve is done on the column-equilibrated matrix.
pub fn discrete_gains(
    relative_degree: usize,
    pole: f64,
    period: f64,
) -> Result<EsoGains, ObserverError> {
    if relative_degree == 0 {
        return Err(ObserverError::InvalidRelativeDegree);
    }
    if !(0.0..1.0).contains(&pole) {
        return Err(ObserverError::InvalidPole(pole));
    }
    if !(period > 0.0) || !period.is_finite() {
        return Err(ObserverError::InvalidPeriod(period));
    }
    let n = relative_degree + 1;
    let system = AugmentedSystem::discrete(relative_degree, period);

    let obs = system.observability_matrix();
    let scales: Vec<f64> = (0..n)
        .map(|j| obs.column(j).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    if scales.contains(&0.0) {
        return Err(ObserverError::ObservabilityLoss);
    }
    let mut balanced = obs.clone();
    for i in 0..n {
        for j in 0..n {
            balanced[(i, j)] /= scales[j];
        }
    }
    let mut e_last = vec![0.0; n];
    e_last[n - 1] = 1.0;
    let w = linear_solve(&balanced, &e_last).map_err(|e| match e {
        NumericsError::SingularMatrix { .. } => ObserverError::ObservabilityLoss,
        other => other.into(),
    })?;
    let v: Vec<f64> = w.iter().zip(&scales).map(|(wi, s)| wi / s).collect();

    let shifted = system.a.sub(&Matrix::identity(n).scale(pole))?;
    let phi = shifted.pow(n as u32)?;
    let gains = phi.mul_vec(&v)?;
    verify_placement(&system, &gains, pole)?;
    Ok(EsoGains {
        gains,
        mode: EsoMode::Discrete { pole, period },
    })
}

/// Discrete pole matching a continuous bandwidth under `z = e^{sT}`.
pub fn omega_to_discrete(bandwidth: f64, period: f64) -> Result<f64, ObserverError> {
    if !(bandwidth > 0.0) || !bandwidth.is_finite() {
        return Err(ObserverError::InvalidBandwidth(bandwidth));
    }
    if !(period > 0.0) || !period.is_finite() {
        return Err(ObserverError::InvalidPeriod(period));
    }
    Ok((-bandwidth * period).exp())
}

/// Plant-level context the channel evaluators see.
#[derive(Debug, Clone, Copy)]
pub struct EsoEnv<'a> {
    /// Full-state estimate. The channel's own coordinates are overwritten
    /// with the observer's chain before `a` and `b` are evaluated.
    pub estimate: &'a [f64],
    pub measurement: &'a [f64],
}

fn with_chain(env: &EsoEnv<'_>, model: &ChannelModel, chain: &[f64]) -> Vec<f64> {
    let mut full = env.estimate.to_vec();
    for (&idx, &z) in model.state_indices.iter().zip(chain) {
        full[idx] = z;
    }
    full
}

/// Right-hand side of the continuous observer
/// `d/dt [x̂; f̂] = A [x̂; f̂] + B (b(x̂) + a(x̂) u) + L (y - x̂_1)`.
pub fn eso_derivative(
    model: &ChannelModel,
    gains: &[f64],
    estimate: &[f64],
    y: f64,
    u: f64,
    env: &EsoEnv<'_>,
) -> Result<Vec<f64>, ObserverError> {
    let r = model.relative_degree;
    if estimate.len() != r + 1 || gains.len() != r + 1 {
        return Err(ObserverError::DimensionMismatch {
            expected: r + 1,
            found: estimate.len().min(gains.len()),
        });
    }
    let full = with_chain(env, model, &estimate[..r]);
    let forcing = model.b(&full, env.measurement) + model.a(&full, env.measurement)? * u;
    let innovation = y - estimate[0];
    let mut out = vec![0.0; r + 1];
    for i in 0..r {
        out[i] = estimate[i + 1] + gains[i] * innovation;
    }
    out[r - 1] += forcing;
    out[r] = gains[r] * innovation;
    Ok(out)
}

/// Advances the continuous observer by one RK4 step with `y` and `u` held.
pub fn eso_step_continuous(
    state: &EsoState,
    y: f64,
    u: f64,
    dt: f64,
    model: &ChannelModel,
    gains: &EsoGains,
    env: &EsoEnv<'_>,
) -> Result<EsoState, ObserverError> {
    model.check()?;
    if !matches!(gains.mode, EsoMode::Continuous { .. }) {
        return Err(ObserverError::WrongMode {
            expected: "continuous",
        });
    }
    let next = try_rk4_step(
        |_, z| eso_derivative(model, &gains.gains, z, y, u, env),
        &state.estimate,
        state.time,
        dt,
    )?;
    Ok(EsoState {
        estimate: next,
        time: state.time + dt,
    })
}

/// One update `[x̂; f̂](k+1) = A_d [x̂; f̂](k) + B_d (b + a u) + L (y(k) - x̂_1(k))`.
pub fn eso_step_discrete(
    state: &EsoState,
    y: f64,
    u: f64,
    model: &ChannelModel,
    gains: &EsoGains,
    env: &EsoEnv<'_>,
) -> Result<EsoState, ObserverError> {
    model.check()?;
    let EsoMode::Discrete { period, .. } = gains.mode else {
        return Err(ObserverError::WrongMode {
            expected: "discrete",
        });
    };
    let r = model.relative_degree;
    if state.estimate.len() != r + 1 || gains.gains.len() != r + 1 {
        return Err(ObserverError::DimensionMismatch {
            expected: r + 1,
            found: state.estimate.len(),
        });
    }
    if !y.is_finite() || !u.is_finite() {
        return Err(NumericsError::NonFinite.into());
    }
    let z = &state.estimate;
    let full = with_chain(env, model, &z[..r]);
    let forcing = model.b(&full, env.measurement) + model.a(&full, env.measurement)? * u;
    let innovation = y - z[0];
    let mut next = z.clone();
    for i in 0..r {
        next[i] += period * z[i + 1];
    }
    next[r - 1] += period * forcing;
    for (n, l) in next.iter_mut().zip(&gains.gains) {
        *n += l * innovation;
    }
    if next.iter().any(|v| !v.is_finite()) {
        return Err(NumericsError::NonFinite.into());
    }
    Ok(EsoState {
        estimate: next,
        time: state.time + period,
    })
}

/// Integrates the chain `z_1' = z_2, …, z_r' = b + a u + d` of a channel on
/// its own (used by tests and examples that drive a single channel).
pub fn chain_step(
    model: &ChannelModel,
    chain: &[f64],
    u: f64,
    d: impl Fn(f64) -> f64,
    t: f64,
    dt: f64,
    env: &EsoEnv<'_>,
) -> Result<Vec<f64>, ObserverError> {
    let r = model.relative_degree;
    let step = rk4_step(
        |t, z| {
            let full = with_chain(env, model, z);
            let mut out = vec![0.0; r];
            out[..r - 1].copy_from_slice(&z[1..r]);
            out[r - 1] = model.b(&full, env.measurement)
                + (model.input_gain)(&full, env.measurement) * u
                + d(t);
            out
        },
        chain,
        t,
        dt,
    )?;
    Ok(step)
}
