//! Two-wheeled inverted pendulum driven by a DC motor voltage.
//!
//! Lagrangian model with wheel position `p`, pitch `φ`, and their rates
//! `υ`, `ω`. Using `M_p = m_w + J_w/R² + m_b` and `I_φ = m_b l² + J_b`,
//!
//! ```text
//! [ M_p          m_b l cos φ ] [υ̇]   [ m_b l sin φ ω² + τ/R ]
//! [ m_b l cos φ  I_φ         ] [ω̇] = [ m_b g l sin φ − τ    ]
//! ```
//!
//! with motor torque `τ = k_u u − b_t (υ/R − ω)` acting between wheel and body.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{DisturbanceSignal, Plant, PlantError};
use crate::bounds::{DisturbanceBound, DisturbanceBoundSpec};
use crate::observer::ChannelModel;
use crate::safety::ControlAffine;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegwayParams {
    pub wheel_mass: f64,
    pub wheel_inertia: f64,
    pub wheel_radius: f64,
    pub body_mass: f64,
    pub body_inertia: f64,
    /// Wheel axle to body center of mass.
    pub com_height: f64,
    /// Torque per volt.
    pub motor_gain: f64,
    /// Back-EMF and viscous friction on the relative wheel rate.
    pub motor_damping: f64,
    pub gravity: f64,
    pub k_p: f64,
    pub k_v: f64,
    pub k_phi: f64,
    pub k_omega: f64,
    pub target: f64,
}

impl Default for SegwayParams {
    fn default() -> Self {
        Self {
            wheel_mass: 5.7,
            wheel_inertia: 0.037,
            wheel_radius: 0.26,
            body_mass: 55.6,
            body_inertia: 10.8,
            com_height: 0.8,
            motor_gain: 8.26,
            motor_damping: 4.58,
            gravity: 9.81,
            k_p: 4.0,
            k_v: 8.0,
            k_phi: 40.0,
            k_omega: 10.0,
            target: 1.0,
        }
    }
}

impl SegwayParams {
    fn translational_mass(&self) -> f64 {
        self.wheel_mass
            + self.wheel_inertia / (self.wheel_radius * self.wheel_radius)
            + self.body_mass
    }

    fn pitch_inertia(&self) -> f64 {
        self.body_mass * self.com_height * self.com_height + self.body_inertia
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        let positive = [
            ("wheel_mass", self.wheel_mass),
            ("wheel_inertia", self.wheel_inertia),
            ("wheel_radius", self.wheel_radius),
            ("body_mass", self.body_mass),
            ("body_inertia", self.body_inertia),
            ("com_height", self.com_height),
            ("motor_gain", self.motor_gain),
            ("gravity", self.gravity),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(PlantError::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !(self.motor_damping >= 0.0) {
            return Err(PlantError::InvalidParameter(
                "motor_damping must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// `(f_υ, f_ω)` and `(g_υ, g_ω)` at `(φ, υ, ω)`.
    pub fn accelerations(&self, phi: f64, v: f64, w: f64) -> ([f64; 2], [f64; 2]) {
        let (s, c) = phi.sin_cos();
        let mp = self.translational_mass();
        let ip = self.pitch_inertia();
        let ml = self.body_mass * self.com_height;
        let r = self.wheel_radius;
        let det = mp * ip - ml * ml * c * c;
        let solve = |a: f64, b: f64| [(ip * a - ml * c * b) / det, (mp * b - ml * c * a) / det];
        let friction = -self.motor_damping * (v / r - w);
        let f = solve(
            ml * s * w * w + friction / r,
            ml * self.gravity * s - friction,
        );
        let g = solve(self.motor_gain / r, -self.motor_gain);
        (f, g)
    }

    /// Kinetic plus potential energy, zero potential at the axle.
    pub fn energy(&self, x: &[f64]) -> f64 {
        let (phi, v, w) = (x[1], x[2], x[3]);
        let ml = self.body_mass * self.com_height;
        0.5 * self.translational_mass() * v * v
            + ml * phi.cos() * v * w
            + 0.5 * self.pitch_inertia() * w * w
            + ml * self.gravity * phi.cos()
    }
}

fn check_pitch(phi: f64) -> Result<(), PlantError> {
    if phi.abs() < std::f64::consts::FRAC_PI_2 {
        Ok(())
    } else {
        Err(PlantError::ModelDomain { phi })
    }
}

/// `(υ, ω, f_υ + g_υ u + d₁, f_ω + g_ω u + d₂)`.
pub fn segway_dynamics(
    x: &[f64],
    u: f64,
    d: [f64; 2],
    p: &SegwayParams,
) -> Result<Vec<f64>, PlantError> {
    check_pitch(x[1])?;
    let (f, g) = p.accelerations(x[1], x[2], x[3]);
    Ok(vec![
        x[2],
        x[3],
        f[0] + g[0] * u + d[0],
        f[1] + g[1] * u + d[1],
    ])
}

/// Position channel on `(p, υ)` and pitch channel on `(φ, ω)`, sharing the
/// single voltage input.
pub fn segway_channels(p: &SegwayParams) -> [ChannelModel; 2] {
    let make = |name: &str, output: usize, states: [usize; 2], row: usize| {
        let (pa, pb) = (*p, *p);
        ChannelModel {
            name: name.into(),
            relative_degree: 2,
            output_index: output,
            control_index: Some(0),
            state_indices: states.to_vec(),
            input_gain: Arc::new(move |x, _| pa.accelerations(x[1], x[2], x[3]).1[row]),
            drift: Arc::new(move |x, _| pb.accelerations(x[1], x[2], x[3]).0[row]),
        }
    };
    [make("position", 0, [0, 2], 0), make("pitch", 1, [1, 3], 1)]
}

/// `K_p (p − p_d) + K_υ υ + K_φ φ + K_ω ω`.
pub fn segway_nominal(x: &[f64], p: &SegwayParams) -> f64 {
    p.k_p * (x[0] - p.target) + p.k_v * x[2] + p.k_phi * x[1] + p.k_omega * x[3]
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegwayPlant {
    pub params: SegwayParams,
    pub d1: DisturbanceSignal,
    pub d2: DisturbanceSignal,
}

impl SegwayPlant {
    pub fn new(
        params: SegwayParams,
        d1: DisturbanceSignal,
        d2: DisturbanceSignal,
    ) -> Result<Self, PlantError> {
        params.validate()?;
        d1.validate()?;
        d2.validate()?;
        Ok(Self { params, d1, d2 })
    }
}

impl ControlAffine for SegwayPlant {
    fn state_dim(&self) -> usize {
        4
    }

    fn drift(&self, x: &[f64], _t: f64) -> Vec<f64> {
        let (f, _) = self.params.accelerations(x[1], x[2], x[3]);
        vec![x[2], x[3], f[0], f[1]]
    }

    fn input_gain(&self, x: &[f64]) -> Vec<f64> {
        let (_, g) = self.params.accelerations(x[1], x[2], x[3]);
        vec![0.0, 0.0, g[0], g[1]]
    }
}

impl Plant for SegwayPlant {
    fn name(&self) -> &'static str {
        "segway"
    }

    fn disturbance(&self, t: f64) -> Vec<f64> {
        vec![0.0, 0.0, self.d1.value(t), self.d2.value(t)]
    }

    fn check_domain(&self, x: &[f64]) -> Result<(), PlantError> {
        check_pitch(x[1])
    }

    fn measure(&self, x: &[f64]) -> Vec<f64> {
        vec![x[0], x[1]]
    }

    fn observed_channels(&self) -> Vec<ChannelModel> {
        segway_channels(&self.params).to_vec()
    }

    fn channel_disturbances(&self, t: f64) -> Vec<f64> {
        vec![self.d1.value(t), self.d2.value(t)]
    }

    fn disturbance_bounds(&self) -> DisturbanceBoundSpec {
        [self.d1, self.d2]
            .iter()
            .map(|d| DisturbanceBound {
                l_f: d.rate_bound(),
                b_f: d.magnitude_bound(),
            })
            .collect()
    }

    fn bound_dynamics(&self, x: &[f64], w: &[f64]) -> Vec<f64> {
        let mut dx = self.drift(x, 0.0);
        let g = self.input_gain(x);
        for (d, gi) in dx.iter_mut().zip(&g) {
            *d += gi * w[0];
        }
        dx
    }

    fn nominal_control(&self, x: &[f64]) -> f64 {
        segway_nominal(x, &self.params)
    }

    fn tracking_error(&self, x: &[f64]) -> f64 {
        x[0] - self.params.target
    }
}
