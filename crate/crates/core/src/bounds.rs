//! Worst-case estimation error bounds for the extended state observer.
//!
//! Everything here is precomputed once per scenario: the `p(k)` series and
//! its sum, the disturbance error bound `γ`, entrywise L1 norms of the
//! error transfer functions, and the state-derivative bound `φ`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{norm2, rk4_step, Matrix, NumericsError};
use crate::observer::{
    omega_to_discrete, AugmentedSystem, ChannelModel, EsoGains, EsoMode, ObserverError,
};

pub const DEFAULT_SUM_TOL: f64 = 1e-12;
pub const DEFAULT_L1_TOL: f64 = 1e-10;

/// More terms than this means the pole is too close to the unit circle to sum.
const MAX_SERIES_TERMS: usize = 50_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundsError {
    #[error("discrete pole must lie in [0, 1), got {0}")]
    InvalidPole(f64),
    #[error("series did not converge after {terms} terms")]
    NonConvergent { terms: usize },
    #[error("disturbance bounds must be non-negative and finite (l_f = {l_f}, b_f = {b_f})")]
    InvalidDisturbanceBound { l_f: f64, b_f: f64 },
    #[error("sample period must be positive and finite, got {0}")]
    InvalidPeriod(f64),
    #[error("error dynamics are not Hurwitz")]
    NotHurwitz,
    #[error("grid needs at least 2 points per dimension, got {0}")]
    GridTooCoarse(usize),
    #[error("box dimension {index} has lower bound above upper bound")]
    InvalidBox { index: usize },
    #[error("{channels} channels but {found} {what}")]
    ChannelCount {
        channels: usize,
        found: usize,
        what: &'static str,
    },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Observer(#[from] ObserverError),
}

/// `p(k)` for the error response of an `(r+1)`-state discrete observer with
/// all poles at `pole`.
///
/// For `k ≤ r+1` this is one. Beyond that it is
/// `Σ_{i=1}^{r+1} C(k-1, i-1) (1-ω)^{i-1} ω^{k-i}`, evaluated by term ratios.
pub fn p_value(k: usize, r: usize, pole: f64) -> Result<f64, BoundsError> {
    if !(0.0..1.0).contains(&pole) {
        return Err(BoundsError::InvalidPole(pole));
    }
    assert!(k >= 1, "p(k) is indexed from 1");
    Ok(p_unchecked(k, r, pole))
}

fn p_unchecked(k: usize, r: usize, pole: f64) -> f64 {
    if k <= r + 1 {
        return 1.0;
    }
    if pole == 0.0 {
        return 0.0;
    }
    let ratio = (1.0 - pole) / pole;
    let mut term = pole.powi((k - 1) as i32);
    let mut sum = term;
    for i in 1..=r {
        term *= (k - i) as f64 / i as f64 * ratio;
        sum += term;
    }
    sum
}

/// `Σ_{k≥1} p(k)`, truncated once a geometric envelope of the tail drops
/// below `tol`.
pub fn p_sum(r: usize, pole: f64, tol: f64) -> Result<f64, BoundsError> {
    if !(0.0..1.0).contains(&pole) {
        return Err(BoundsError::InvalidPole(pole));
    }
    let mut sum = (r + 1) as f64;
    if pole == 0.0 {
        return Ok(sum);
    }
    for k in (r + 2)..(r + 2 + MAX_SERIES_TERMS) {
        let p = p_unchecked(k, r, pole);
        sum += p;
        // Each term of p(k) grows by ω k / (k - i + 1) ≤ ω k / (k - r) per
        // step, which is decreasing in k; once below one it bounds the tail.
        let rho = pole * k as f64 / (k - r) as f64;
        if rho < 1.0 && p * rho / (1.0 - rho) < tol {
            return Ok(sum);
        }
    }
    Err(BoundsError::NonConvergent {
        terms: MAX_SERIES_TERMS,
    })
}

/// `γ = (Σ p(k)) · l_f · T`, the bound on `|f - f̂|`.
pub fn gamma(r: usize, pole: f64, period: f64, l_f: f64) -> Result<f64, BoundsError> {
    if !(period > 0.0) || !period.is_finite() {
        return Err(BoundsError::InvalidPeriod(period));
    }
    if !(l_f >= 0.0) || !l_f.is_finite() {
        return Err(BoundsError::InvalidDisturbanceBound { l_f, b_f: 0.0 });
    }
    Ok(p_sum(r, pole, DEFAULT_SUM_TOL)? * l_f * period)
}

/// Entrywise L1 norms of the impulse responses of `(sI - A)⁻¹ b` and of
/// `A (sI - A)⁻¹ b + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferL1 {
    pub g: Vec<f64>,
    pub h: Vec<f64>,
}

/// Integrates `x' = A x` from `x(0) = b` and accumulates `∫|x_i|` and
/// `∫|(A x)_i|`, the latter plus the `|b_i|` feedthrough impulse.
///
/// Trapezoid sums carry the Euler–Maclaurin endpoint correction; kinks at
/// zero crossings stay second order but there are few of them.
pub fn transfer_l1(a: &Matrix, b: &[f64], tol: f64) -> Result<TransferL1, BoundsError> {
    let n = b.len();
    if !a.is_square() || a.rows() != n {
        return Err(NumericsError::DimensionMismatch {
            expected: n,
            found: a.rows(),
        }
        .into());
    }
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        return Ok(TransferL1 {
            g: vec![0.0; n],
            h: vec![0.0; n],
        });
    }
    let inv = a.inverse().map_err(|_| BoundsError::NotHurwitz)?;
    let t_slow = inv.inf_norm();
    let scale = a.inf_norm();
    let dt = (0.01 / scale).min(1e-4);
    let t_min = 5.0 * t_slow;
    let t_max = 2000.0 * t_slow.max(dt);

    let a2 = a.mul(a)?;
    let deriv = |x: &[f64]| a.mul_vec(x).expect("conforming");
    let slope = |x: &[f64], dx: &[f64], i: usize| x[i].signum() * dx[i];

    let mut x = b.to_vec();
    let mut ax = deriv(&x);
    let ax0 = ax.clone();
    let a2x0 = a2.mul_vec(b)?;
    let mut g = vec![0.0; n];
    let mut h = vec![0.0; n];
    let mut t = 0.0;
    loop {
        let next = rk4_step(|_, z| deriv(z), &x, t, dt)?;
        let a_next = deriv(&next);
        for i in 0..n {
            g[i] += 0.5 * dt * (x[i].abs() + next[i].abs());
            h[i] += 0.5 * dt * (ax[i].abs() + a_next[i].abs());
        }
        x = next;
        ax = a_next;
        t += dt;
        let x_norm = norm2(&x);
        if t >= t_min && x_norm < tol * b_norm {
            break;
        }
        if t > t_max || x_norm > 1e6 * b_norm {
            return Err(BoundsError::NotHurwitz);
        }
    }
    let a2x = a2.mul_vec(&x)?;
    let c = dt * dt / 12.0;
    for i in 0..n {
        g[i] -= c * (slope(&x, &ax, i) - slope(b, &ax0, i));
        h[i] -= c * (slope(&ax, &a2x, i) - slope(&ax0, &a2x0, i));
        h[i] += b[i].abs();
    }
    Ok(TransferL1 { g, h })
}

/// Largest `‖f(x) + g(x) u‖₂ + b_f` over a grid of the `X × U` box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhiBound {
    pub value: f64,
    pub grid_n: usize,
}

/// Axis-aligned box, one `(lower, upper)` per coordinate.
pub type BoxBounds = [(f64, f64)];

/// Evaluates `dynamics(x, u)` on a `grid_n`-point-per-axis lattice that
/// includes every corner of `X × U`.
pub fn phi_bound(
    dynamics: &dyn Fn(&[f64], &[f64]) -> Vec<f64>,
    x_box: &BoxBounds,
    u_box: &BoxBounds,
    b_f: f64,
    grid_n: usize,
) -> Result<PhiBound, BoundsError> {
    if grid_n < 2 {
        return Err(BoundsError::GridTooCoarse(grid_n));
    }
    let axes: Vec<(f64, f64)> = x_box.iter().chain(u_box).copied().collect();
    for (index, &(lo, hi)) in axes.iter().enumerate() {
        if !(lo <= hi) {
            return Err(BoundsError::InvalidBox { index });
        }
    }
    let nx = x_box.len();
    let mut counter = vec![0usize; axes.len()];
    let mut point = vec![0.0; axes.len()];
    let mut best = 0.0f64;
    loop {
        for (d, (&c, &(lo, hi))) in counter.iter().zip(&axes).enumerate() {
            point[d] = lo + (hi - lo) * c as f64 / (grid_n - 1) as f64;
        }
        let v = norm2(&dynamics(&point[..nx], &point[nx..]));
        if v.is_nan() {
            return Err(NumericsError::NonFinite.into());
        }
        best = best.max(v);
        let mut d = 0;
        loop {
            if d == counter.len() {
                return Ok(PhiBound {
                    value: best + b_f,
                    grid_n,
                });
            }
            counter[d] += 1;
            if counter[d] < grid_n {
                break;
            }
            counter[d] = 0;
            d += 1;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceBound {
    /// Bound on the rate of change of the total disturbance.
    pub l_f: f64,
    /// Bound on the magnitude of the total disturbance.
    pub b_f: f64,
}

impl DisturbanceBound {
    fn check(&self) -> Result<(), BoundsError> {
        let ok = |v: f64| v >= 0.0 && v.is_finite();
        if ok(self.l_f) && ok(self.b_f) {
            Ok(())
        } else {
            Err(BoundsError::InvalidDisturbanceBound {
                l_f: self.l_f,
                b_f: self.b_f,
            })
        }
    }
}

/// One [`DisturbanceBound`] per observed channel.
pub type DisturbanceBoundSpec = Vec<DisturbanceBound>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelErrorBound {
    pub channel: String,
    /// Pole used in the series sum.
    pub pole: f64,
    pub p_sum: f64,
    pub gamma: f64,
    /// Entrywise `‖G(s) B₀‖₁` over the chain coordinates.
    pub g_l1: Vec<f64>,
    /// Entrywise `‖H(s) B₀‖₁`.
    pub h_l1: Vec<f64>,
    /// Entrywise `‖L₀ C₀ G(s) B₀‖₁`.
    pub lcg_l1: Vec<f64>,
    /// `g_l1 · γ`.
    pub state_bound: Vec<f64>,
    /// `h_l1 · γ`.
    pub derivative_bound: Vec<f64>,
}

impl ChannelErrorBound {
    /// Euclidean norm of the per-coordinate state bound.
    pub fn state_bound_norm(&self) -> f64 {
        norm2(&self.state_bound)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorBoundSet {
    pub period: f64,
    pub channels: Vec<ChannelErrorBound>,
    pub phi: PhiBound,
}

impl ErrorBoundSet {
    /// Euclidean norm of all state bounds stacked together.
    pub fn state_bound_norm(&self) -> f64 {
        self.channels
            .iter()
            .map(|c| c.state_bound_norm().powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Same bound set with every `γ` (and everything proportional to it)
    /// multiplied by `factor`, `φ` left unchanged.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for c in &mut out.channels {
            c.gamma *= factor;
            c.state_bound.iter_mut().for_each(|v| *v *= factor);
            c.derivative_bound.iter_mut().for_each(|v| *v *= factor);
        }
        out
    }

    /// Every bound zero; used for certainty-equivalent controllers.
    pub fn zero(channels: &[ChannelModel]) -> Self {
        Self {
            period: 0.0,
            channels: channels
                .iter()
                .map(|m| {
                    let r = m.relative_degree;
                    ChannelErrorBound {
                        channel: m.name.clone(),
                        pole: 0.0,
                        p_sum: 0.0,
                        gamma: 0.0,
                        g_l1: vec![0.0; r],
                        h_l1: vec![0.0; r],
                        lcg_l1: vec![0.0; r],
                        state_bound: vec![0.0; r],
                        derivative_bound: vec![0.0; r],
                    }
                })
                .collect(),
            phi: PhiBound {
                value: 0.0,
                grid_n: 0,
            },
        }
    }
}

/// Inputs of the `φ` computation.
pub struct PhiProblem<'a> {
    pub dynamics: &'a dyn Fn(&[f64], &[f64]) -> Vec<f64>,
    pub x_box: &'a BoxBounds,
    pub u_box: &'a BoxBounds,
    pub grid_n: usize,
}

/// Per-channel error-bound quantities for one observer.
///
/// `pole` overrides the series pole; otherwise it is the discrete pole in
/// discrete mode and `e^{-ω T}` in continuous mode.
pub fn channel_error_bound(
    model: &ChannelModel,
    gains: &EsoGains,
    disturbance: &DisturbanceBound,
    period: f64,
    pole: Option<f64>,
) -> Result<ChannelErrorBound, BoundsError> {
    disturbance.check()?;
    let r = model.relative_degree;
    if gains.relative_degree() != r {
        return Err(ObserverError::DimensionMismatch {
            expected: r + 1,
            found: gains.gains.len(),
        }
        .into());
    }
    let pole = match (pole, gains.mode) {
        (Some(p), _) => p,
        (None, EsoMode::Continuous { bandwidth }) => omega_to_discrete(bandwidth, period)?,
        (None, EsoMode::Discrete { pole, .. }) => pole,
    };
    let sum = p_sum(r, pole, DEFAULT_SUM_TOL)?;
    let gamma = gamma(r, pole, period, disturbance.l_f)?;

    // A₀ - L₀C₀ on the r-dimensional chain.
    let cont = gains.continuous_equivalent();
    let chain = AugmentedSystem::continuous(r);
    let mut a_cl = Matrix::zeros(r, r);
    for i in 0..r {
        for j in 0..r {
            a_cl[(i, j)] = chain.a[(i, j)];
        }
        a_cl[(i, 0)] -= cont[i];
    }
    let b0: Vec<f64> = chain.b[..r].to_vec();
    let l1 = transfer_l1(&a_cl, &b0, DEFAULT_L1_TOL)?;
    let lcg_l1: Vec<f64> = cont[..r].iter().map(|l| l.abs() * l1.g[0]).collect();
    Ok(ChannelErrorBound {
        channel: model.name.clone(),
        pole,
        p_sum: sum,
        gamma,
        state_bound: l1.g.iter().map(|v| v * gamma).collect(),
        derivative_bound: l1.h.iter().map(|v| v * gamma).collect(),
        g_l1: l1.g,
        h_l1: l1.h,
        lcg_l1,
    })
}

/// Bounds for every observed channel plus the global `φ`.
pub fn assemble_error_bounds(
    channels: &[ChannelModel],
    gains: &[EsoGains],
    spec: &DisturbanceBoundSpec,
    period: f64,
    pole: Option<f64>,
    phi: &PhiProblem<'_>,
) -> Result<ErrorBoundSet, BoundsError> {
    for (found, what) in [
        (gains.len(), "gain vectors"),
        (spec.len(), "disturbance bounds"),
    ] {
        if found != channels.len() {
            return Err(BoundsError::ChannelCount {
                channels: channels.len(),
                found,
                what,
            });
        }
    }
    let channel_bounds = channels
        .iter()
        .zip(gains)
        .zip(spec)
        .map(|((m, g), d)| channel_error_bound(m, g, d, period, pole))
        .collect::<Result<Vec<_>, _>>()?;
    let b_f = spec.iter().map(|d| d.b_f * d.b_f).sum::<f64>().sqrt();
    let phi = phi_bound(phi.dynamics, phi.x_box, phi.u_box, b_f, phi.grid_n)?;
    Ok(ErrorBoundSet {
        period,
        channels: channel_bounds,
        phi,
    })
}
