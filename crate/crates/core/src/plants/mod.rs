//! Ground-truth plants, their normal-form channel splits, and disturbance signals.

mod acc;
mod segway;

pub use acc::{acc_channels, acc_dynamics, AccParams, AccPlant, LeadProfile, LeadSegment};
pub use segway::{segway_channels, segway_dynamics, segway_nominal, SegwayParams, SegwayPlant};

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::DisturbanceBoundSpec;
use crate::observer::ChannelModel;
use crate::safety::ControlAffine;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlantError {
    #[error("pitch angle {phi} rad is outside the model domain |φ| < π/2")]
    ModelDomain { phi: f64 },
    #[error("invalid plant parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DisturbanceSignal {
    /// `amplitude · sin(2π t / period + phase)`.
    Sinusoid {
        amplitude: f64,
        period: f64,
        phase: f64,
    },
    Constant {
        value: f64,
    },
    Zero {},
}

impl Default for DisturbanceSignal {
    fn default() -> Self {
        Self::Zero {}
    }
}

impl DisturbanceSignal {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Self::Sinusoid {
                amplitude,
                period,
                phase,
            } => amplitude * (2.0 * PI * t / period + phase).sin(),
            Self::Constant { value } => value,
            Self::Zero {} => 0.0,
        }
    }

    pub fn rate(&self, t: f64) -> f64 {
        match *self {
            Self::Sinusoid {
                amplitude,
                period,
                phase,
            } => amplitude * 2.0 * PI / period * (2.0 * PI * t / period + phase).cos(),
            Self::Constant { .. } | Self::Zero {} => 0.0,
        }
    }

    /// Exact `sup |ḋ|`.
    pub fn rate_bound(&self) -> f64 {
        match *self {
            Self::Sinusoid {
                amplitude, period, ..
            } => amplitude.abs() * 2.0 * PI / period,
            Self::Constant { .. } | Self::Zero {} => 0.0,
        }
    }

    /// Exact `sup |d|`.
    pub fn magnitude_bound(&self) -> f64 {
        match *self {
            Self::Sinusoid { amplitude, .. } => amplitude.abs(),
            Self::Constant { value } => value.abs(),
            Self::Zero {} => 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        match *self {
            Self::Sinusoid {
                amplitude,
                period,
                phase,
            } if !(period > 0.0)
                || !amplitude.is_finite()
                || !phase.is_finite()
                || !period.is_finite() =>
            {
                Err(PlantError::InvalidParameter(format!(
                    "sinusoid period {period}, amplitude {amplitude}"
                )))
            }
            Self::Constant { value } if !value.is_finite() => Err(PlantError::InvalidParameter(
                "constant disturbance is not finite".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// A simulated plant: nominal model, additive disturbance, sensors, and the
/// channels its observers run on.
pub trait Plant: ControlAffine {
    fn name(&self) -> &'static str;

    /// Additive disturbance in state coordinates (unknown to the nominal model).
    fn disturbance(&self, t: f64) -> Vec<f64>;

    fn check_domain(&self, _x: &[f64]) -> Result<(), PlantError> {
        Ok(())
    }

    /// True dynamics `f(x, t) + g(x) u + d(t)`.
    fn dynamics(&self, x: &[f64], u: f64, t: f64) -> Result<Vec<f64>, PlantError> {
        self.check_domain(x)?;
        let mut dx = self.drift(x, t);
        let g = self.input_gain(x);
        let d = self.disturbance(t);
        for i in 0..dx.len() {
            dx[i] += g[i] * u + d[i];
        }
        Ok(dx)
    }

    /// Output vector `y`.
    fn measure(&self, x: &[f64]) -> Vec<f64>;

    /// Channels with an observer in the configured setup.
    fn observed_channels(&self) -> Vec<ChannelModel>;

    /// External disturbance entering each observed channel's top row.
    fn channel_disturbances(&self, t: f64) -> Vec<f64>;

    /// Declared `(l_f, b_f)` for each observed channel.
    fn disturbance_bounds(&self) -> DisturbanceBoundSpec;

    /// `ẋ` used for the state-derivative bound, with `w = (u, exogenous…)`.
    fn bound_dynamics(&self, x: &[f64], w: &[f64]) -> Vec<f64>;

    /// Ranges of the exogenous entries of `w` after the input.
    fn exogenous_box(&self) -> Vec<(f64, f64)> {
        Vec::new()
    }

    /// Nominal (performance) control evaluated at a state or estimate.
    fn nominal_control(&self, x: &[f64]) -> f64;

    /// Signed deviation from the nominal controller's target.
    fn tracking_error(&self, x: &[f64]) -> f64;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn declared_bounds_dominate_sampled_signal() {
        let signals = [
            DisturbanceSignal::Sinusoid {
                amplitude: 0.2 * 9.81,
                period: 10.0,
                phase: 0.0,
            },
            DisturbanceSignal::Sinusoid {
                amplitude: -2.0,
                period: 10.0,
                phase: PI / 2.0,
            },
            DisturbanceSignal::Constant { value: -3.0 },
            DisturbanceSignal::Zero {},
        ];
        for s in signals {
            let (mut dmax, mut rmax) = (0.0f64, 0.0f64);
            for k in 0..200_000 {
                let t = k as f64 * 1e-4;
                dmax = dmax.max(s.value(t).abs());
                let fd = (s.value(t + 1e-6) - s.value(t - 1e-6)) / 2e-6;
                rmax = rmax.max(fd.abs());
            }
            assert!(dmax <= s.magnitude_bound() + 1e-12);
            assert!(rmax <= s.rate_bound() * (1.0 + 1e-6) + 1e-9);
        }
    }

    #[test]
    fn sinusoid_examples() {
        let d0 = DisturbanceSignal::Sinusoid {
            amplitude: 0.2 * 9.81,
            period: 10.0,
            phase: 0.0,
        };
        assert!((d0.value(2.5) - 1.962).abs() < 1e-12);
        assert!((d0.rate_bound() - 0.2 * 9.81 * 2.0 * PI / 10.0).abs() < 1e-15);
        let d2 = DisturbanceSignal::Sinusoid {
            amplitude: 2.0,
            period: 10.0,
            phase: PI / 2.0,
        };
        assert!((d2.value(1.3) - 2.0 * (2.0 * PI * 1.3 / 10.0).cos()).abs() < 1e-12);
    }

    #[test]
    fn invalid_signal() {
        let s = DisturbanceSignal::Sinusoid {
            amplitude: 1.0,
            period: 0.0,
            phase: 0.0,
        };
        assert!(s.validate().is_err());
    }

    #[test]
    fn signal_serde_roundtrip() {
        let s: DisturbanceSignal =
            toml::from_str("kind = \"sinusoid\"\namplitude = 2.0\nperiod = 10.0\nphase = 0.5")
                .unwrap();
        assert_eq!(
            s,
            DisturbanceSignal::Sinusoid {
                amplitude: 2.0,
                period: 10.0,
                phase: 0.5
            }
        );
        assert!(toml::from_str::<DisturbanceSignal>("kind = \"zero\"\nextra = 1").is_err());
    }
}
