//! Adaptive cruise control: ego speed `v_f` and gap `D` behind a lead car.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{DisturbanceSignal, Plant, PlantError};
use crate::bounds::{DisturbanceBound, DisturbanceBoundSpec};
use crate::observer::ChannelModel;
use crate::safety::ControlAffine;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AccParams {
    pub mass: f64,
    pub f0: f64,
    pub f1: f64,
    pub f2: f64,
    pub desired_speed: f64,
    pub headway: f64,
    pub gravity: f64,
    /// Input limit as a fraction of `m g`.
    pub input_fraction: f64,
}

impl Default for AccParams {
    fn default() -> Self {
        Self {
            mass: 1650.0,
            f0: 0.1,
            f1: 5.0,
            f2: 0.25,
            desired_speed: 24.0,
            headway: 1.8,
            gravity: 9.81,
            input_fraction: 0.3,
        }
    }
}

impl AccParams {
    pub fn drag(&self, v: f64) -> f64 {
        self.f0 + self.f1 * v + self.f2 * v * v
    }

    pub fn input_limit(&self) -> f64 {
        self.input_fraction * self.mass * self.gravity
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        let bad = |what: &str| Err(PlantError::InvalidParameter(what.into()));
        if !(self.mass > 0.0) {
            return bad("mass must be positive");
        }
        if !(self.headway > 0.0) {
            return bad("headway must be positive");
        }
        if !(self.input_fraction > 0.0) || !(self.gravity > 0.0) {
            return bad("input box must be symmetric and non-empty");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeadSegment {
    pub start: f64,
    pub accel: f64,
}

/// Piecewise-constant-acceleration lead-car speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LeadProfile {
    pub initial_speed: f64,
    /// Acceleration switches, sorted by `start`; the speed is constant before the first.
    pub segments: Vec<LeadSegment>,
    /// Declared bound on `|v̇_l|`.
    pub rate_bound: f64,
    /// Whether the ego car measures `v_l` directly.
    pub known: bool,
}

impl Default for LeadProfile {
    fn default() -> Self {
        Self {
            initial_speed: 14.0,
            segments: vec![
                LeadSegment {
                    start: 12.0,
                    accel: -0.5,
                },
                LeadSegment {
                    start: 18.0,
                    accel: 0.0,
                },
                LeadSegment {
                    start: 22.0,
                    accel: 1.0,
                },
                LeadSegment {
                    start: 26.0,
                    accel: 0.0,
                },
            ],
            rate_bound: 4.0,
            known: true,
        }
    }
}

impl LeadProfile {
    pub fn speed(&self, t: f64) -> f64 {
        let mut v = self.initial_speed;
        for (i, s) in self.segments.iter().enumerate() {
            if t <= s.start {
                break;
            }
            let end = self.segments.get(i + 1).map_or(t, |n| n.start.min(t));
            v += s.accel * (end - s.start);
        }
        v
    }

    pub fn accel(&self, t: f64) -> f64 {
        self.segments
            .iter()
            .rev()
            .find(|s| t > s.start)
            .map_or(0.0, |s| s.accel)
    }

    /// Speed range over all time (extremes sit at switch points).
    pub fn speed_range(&self) -> (f64, f64) {
        let mut lo = self.initial_speed;
        let mut hi = self.initial_speed;
        for s in &self.segments {
            let v = self.speed(s.start);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if let Some(last) = self.segments.last() {
            if last.accel != 0.0 {
                return if last.accel > 0.0 {
                    (lo, f64::INFINITY)
                } else {
                    (f64::NEG_INFINITY, hi)
                };
            }
        }
        (lo, hi)
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        if self.segments.windows(2).any(|w| w[1].start < w[0].start) {
            return Err(PlantError::InvalidParameter(
                "lead segments must be sorted by start".into(),
            ));
        }
        if let Some(s) = self
            .segments
            .iter()
            .find(|s| s.accel.abs() > self.rate_bound)
        {
            return Err(PlantError::InvalidParameter(format!(
                "lead acceleration {} exceeds declared rate bound {}",
                s.accel, self.rate_bound
            )));
        }
        let (lo, _) = self.speed_range();
        if lo < 0.0 {
            return Err(PlantError::InvalidParameter(
                "lead speed becomes negative".into(),
            ));
        }
        Ok(())
    }
}

/// `(−F_r(v_f)/m + u/m + d₀, −v_f + v_l)`.
pub fn acc_dynamics(x: &[f64], u: f64, d0: f64, v_l: f64, p: &AccParams) -> Vec<f64> {
    vec![-p.drag(x[0]) / p.mass + u / p.mass + d0, -x[0] + v_l]
}

/// Speed channel (driven by `u`, drag on the measured speed) and gap channel
/// (uncontrolled, `−y₁` feedthrough, lead speed as its disturbance).
pub fn acc_channels(p: &AccParams) -> [ChannelModel; 2] {
    let p1 = *p;
    let speed = ChannelModel {
        name: "speed".into(),
        relative_degree: 1,
        output_index: 0,
        control_index: Some(0),
        state_indices: vec![0],
        input_gain: Arc::new(move |_, _| 1.0 / p1.mass),
        drift: Arc::new(move |_, y| -p1.drag(y[0]) / p1.mass),
    };
    let gap = ChannelModel {
        name: "gap".into(),
        relative_degree: 1,
        output_index: 1,
        control_index: None,
        state_indices: vec![1],
        input_gain: Arc::new(|_, _| 0.0),
        drift: Arc::new(|_, y| -y[0]),
    };
    [speed, gap]
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccPlant {
    pub params: AccParams,
    pub disturbance: DisturbanceSignal,
    pub lead: LeadProfile,
}

impl AccPlant {
    pub fn new(
        params: AccParams,
        disturbance: DisturbanceSignal,
        lead: LeadProfile,
    ) -> Result<Self, PlantError> {
        params.validate()?;
        disturbance.validate()?;
        lead.validate()?;
        Ok(Self {
            params,
            disturbance,
            lead,
        })
    }

    pub fn barrier_value(&self, x: &[f64]) -> f64 {
        x[1] - self.params.headway * x[0]
    }
}

impl ControlAffine for AccPlant {
    fn state_dim(&self) -> usize {
        2
    }

    fn drift(&self, x: &[f64], t: f64) -> Vec<f64> {
        let v_l = if self.lead.known {
            self.lead.speed(t)
        } else {
            0.0
        };
        vec![-self.params.drag(x[0]) / self.params.mass, -x[0] + v_l]
    }

    fn input_gain(&self, _x: &[f64]) -> Vec<f64> {
        vec![1.0 / self.params.mass, 0.0]
    }
}

impl Plant for AccPlant {
    fn name(&self) -> &'static str {
        "acc"
    }

    fn disturbance(&self, t: f64) -> Vec<f64> {
        let v_l = if self.lead.known {
            0.0
        } else {
            self.lead.speed(t)
        };
        vec![self.disturbance.value(t), v_l]
    }

    fn measure(&self, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }

    fn observed_channels(&self) -> Vec<ChannelModel> {
        let [speed, gap] = acc_channels(&self.params);
        if self.lead.known {
            vec![speed]
        } else {
            vec![speed, gap]
        }
    }

    fn channel_disturbances(&self, t: f64) -> Vec<f64> {
        let d = self.disturbance(t);
        if self.lead.known {
            vec![d[0]]
        } else {
            d
        }
    }

    fn disturbance_bounds(&self) -> DisturbanceBoundSpec {
        let mut out = vec![DisturbanceBound {
            l_f: self.disturbance.rate_bound(),
            b_f: self.disturbance.magnitude_bound(),
        }];
        if !self.lead.known {
            let (lo, hi) = self.lead.speed_range();
            out.push(DisturbanceBound {
                l_f: self.lead.rate_bound,
                b_f: lo.abs().max(hi.abs()),
            });
        }
        out
    }

    fn bound_dynamics(&self, x: &[f64], w: &[f64]) -> Vec<f64> {
        vec![
            -self.params.drag(x[0]) / self.params.mass + w[0] / self.params.mass,
            -x[0] + w[1],
        ]
    }

    fn exogenous_box(&self) -> Vec<(f64, f64)> {
        let (lo, hi) = self.lead.speed_range();
        vec![(lo.max(0.0), hi.min(1e3))]
    }

    fn nominal_control(&self, x: &[f64]) -> f64 {
        self.params.drag(x[0])
    }

    fn tracking_error(&self, x: &[f64]) -> f64 {
        x[0] - self.params.desired_speed
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plant(known: bool) -> AccPlant {
        let lead = LeadProfile {
            known,
            ..LeadProfile::default()
        };
        AccPlant::new(
            AccParams::default(),
            DisturbanceSignal::Sinusoid {
                amplitude: 0.2 * 9.81,
                period: 10.0,
                phase: 0.0,
            },
            lead,
        )
        .unwrap()
    }

    #[test]
    fn force_balance_at_matched_speed() {
        let p = AccParams::default();
        let v = 17.0;
        let dx = acc_dynamics(&[v, 40.0], p.drag(v), 0.0, v, &p);
        assert_eq!(dx, vec![0.0, 0.0]);
    }

    #[test]
    fn static_drag() {
        let p = AccParams::default();
        let dx = acc_dynamics(&[0.0, 10.0], 0.0, 0.0, 0.0, &p);
        assert_eq!(dx[0], -p.f0 / p.mass);
    }

    #[test]
    fn disturbance_peak_contribution() {
        let pl = plant(true);
        let with = pl.dynamics(&[10.0, 50.0], 0.0, 2.5).unwrap();
        let base = acc_dynamics(&[10.0, 50.0], 0.0, 0.0, pl.lead.speed(2.5), &pl.params);
        assert!((with[0] - base[0] - 1.962).abs() < 1e-12);
    }

    #[test]
    fn known_and_unknown_lead_give_same_truth() {
        let a = plant(true);
        let b = plant(false);
        for t in [0.0, 13.0, 20.5, 27.0] {
            let x = [18.0, 60.0];
            let da = a.dynamics(&x, 300.0, t).unwrap();
            let db = b.dynamics(&x, 300.0, t).unwrap();
            assert!((da[0] - db[0]).abs() < 1e-15 && (da[1] - db[1]).abs() < 1e-12);
        }
        assert_eq!(a.observed_channels().len(), 1);
        assert_eq!(b.observed_channels().len(), 2);
        assert_eq!(b.disturbance_bounds()[1].l_f, 4.0);
    }

    #[test]
    fn lead_profile_integrates_segments() {
        let lead = LeadProfile::default();
        assert_eq!(lead.speed(5.0), 14.0);
        assert!((lead.speed(15.0) - 12.5).abs() < 1e-12);
        assert!((lead.speed(20.0) - 11.0).abs() < 1e-12);
        assert!((lead.speed(30.0) - 15.0).abs() < 1e-12);
        assert_eq!(lead.speed_range(), (11.0, 15.0));
        assert_eq!(lead.accel(13.0), -0.5);
        // finite-difference speed agrees with accel
        for t in [3.0, 13.0, 19.0, 23.0, 29.0] {
            let fd = (lead.speed(t + 1e-6) - lead.speed(t - 1e-6)) / 2e-6;
            assert!((fd - lead.accel(t)).abs() < 1e-6);
        }
    }

    #[test]
    fn lead_profile_validation() {
        let mut lead = LeadProfile::default();
        lead.segments[0].accel = -5.0;
        assert!(lead.validate().is_err());
        let lead = LeadProfile {
            segments: vec![
                LeadSegment {
                    start: 0.0,
                    accel: -1.0,
                },
                LeadSegment {
                    start: 20.0,
                    accel: 0.0,
                },
            ],
            ..LeadProfile::default()
        };
        assert!(lead.validate().is_err());
    }

    #[test]
    fn total_disturbance_of_speed_channel_is_external() {
        let p = AccParams::default();
        let [speed, _] = acc_channels(&p);
        let truth = [20.0, 80.0];
        let estimate = [19.3, 80.0];
        let f = speed.total_disturbance(&truth, &estimate, &truth, 1200.0, 0.7);
        assert_eq!(f, 0.7);
    }

    #[test]
    fn barrier_gradient_by_finite_differences() {
        let pl = plant(true);
        let x = [18.0, 55.0];
        let e = 1e-6;
        let g0 =
            (pl.barrier_value(&[x[0] + e, x[1]]) - pl.barrier_value(&[x[0] - e, x[1]])) / (2.0 * e);
        let g1 =
            (pl.barrier_value(&[x[0], x[1] + e]) - pl.barrier_value(&[x[0], x[1] - e])) / (2.0 * e);
        assert!((g0 + 1.8).abs() < 1e-6 && (g1 - 1.0).abs() < 1e-6);
    }
}
