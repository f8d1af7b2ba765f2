//! Classical fourth-order Runge–Kutta stepping.

use super::NumericsError;

/// One RK4 step of `x' = f(t, x)` for a fallible vector field.
///
/// The error type only needs to absorb [`NumericsError`], so plant models can
/// surface their own domain errors through the same call.
pub fn try_rk4_step<E, F>(mut f: F, x: &[f64], t: f64, dt: f64) -> Result<Vec<f64>, E>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>, E>,
    E: From<NumericsError>,
{
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(NumericsError::InvalidStep(dt).into());
    }
    let n = x.len();
    let stage = |k: Vec<f64>, t: f64| -> Result<Vec<f64>, E> {
        if k.len() != n {
            return Err(NumericsError::DimensionMismatch {
                expected: n,
                found: k.len(),
            }
            .into());
        }
        if k.iter().any(|v| !v.is_finite()) {
            return Err(NumericsError::NonFiniteDerivative { t }.into());
        }
        Ok(k)
    };
    let half = 0.5 * dt;
    let k1 = stage(f(t, x)?, t)?;
    let x2: Vec<f64> = x.iter().zip(&k1).map(|(xi, ki)| xi + half * ki).collect();
    let k2 = stage(f(t + half, &x2)?, t + half)?;
    let x3: Vec<f64> = x.iter().zip(&k2).map(|(xi, ki)| xi + half * ki).collect();
    let k3 = stage(f(t + half, &x3)?, t + half)?;
    let x4: Vec<f64> = x.iter().zip(&k3).map(|(xi, ki)| xi + dt * ki).collect();
    let k4 = stage(f(t + dt, &x4)?, t + dt)?;
    Ok((0..n)
        .map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

/// One RK4 step of `x' = f(t, x)`.
pub fn rk4_step<F>(mut f: F, x: &[f64], t: f64, dt: f64) -> Result<Vec<f64>, NumericsError>
where
    F: FnMut(f64, &[f64]) -> Vec<f64>,
{
    try_rk4_step(|t, x| Ok::<_, NumericsError>(f(t, x)), x, t, dt)
}
