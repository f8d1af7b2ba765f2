//! Turns a [`ScenarioConfig`] into a plant, observers, bounds, barrier, and
//! controller settings.

use std::f64::consts::PI;
use std::sync::Arc;

use super::{ControllerKind, HarnessError, ObserverKind, PlantKind, ScenarioConfig};
use crate::bounds::{assemble_error_bounds, ErrorBoundSet, PhiProblem};
use crate::numerics::Matrix;
use crate::observer::{
    continuous_gains, discrete_gains, omega_to_discrete, ChannelModel, EsoGains,
};
use crate::plants::{AccPlant, Plant, SegwayPlant};
use crate::safety::{hocbf_lift, BarrierOrder, BarrierSpec, InputBox, LyapunovSpec};

/// Everything the loop needs, fully resolved.
pub struct Scenario {
    pub config: ScenarioConfig,
    pub plant: Box<dyn Plant>,
    pub channels: Vec<ChannelModel>,
    /// Gains the observers run with.
    pub gains: Vec<EsoGains>,
    /// Bounds the robust controller uses (zero when `zero_bounds` is set).
    pub bounds: ErrorBoundSet,
    /// The safety function as specified.
    pub barrier: BarrierSpec,
    /// The first-order barrier the QP constrains (equal to `barrier` when
    /// that is already first order).
    pub constraint: BarrierSpec,
    pub clf: Option<LyapunovSpec>,
    pub input_box: InputBox,
    /// Weight on `(u - k_nom)²`.
    pub weight: f64,
    pub x0: Vec<f64>,
    /// `sup |ḃ_e|` for the barrier disturbance observer.
    pub dob_rate_bound: f64,
    /// Sub-steps between discrete observer updates.
    pub eso_stride: usize,
}

impl std::fmt::Debug for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Scenario")
            .field("plant", &self.plant.name())
            .field("controller", &self.config.controller)
            .field("constraint", &self.constraint)
            .finish_non_exhaustive()
    }
}

fn acc_barrier(headway: f64, gain: f64) -> BarrierSpec {
    let mut b = BarrierSpec::first_order(
        "headway",
        Arc::new(move |x: &[f64]| x[1] - headway * x[0]),
        Arc::new(move |_: &[f64]| vec![-headway, 1.0]),
        gain,
    );
    b.lipschitz = Some(0.0);
    b
}

/// `h = π/10 − φ²`, lifted through the pitch channel.
fn segway_barrier(alpha1: f64, alpha2: f64) -> BarrierSpec {
    let limit = PI / 10.0;
    BarrierSpec {
        name: "tilt".into(),
        value: Arc::new(move |x: &[f64]| limit - x[1] * x[1]),
        gradient: Arc::new(|x: &[f64]| vec![0.0, -2.0 * x[1], 0.0, 0.0]),
        gain: alpha2,
        order: BarrierOrder::Second {
            alpha1,
            alpha2,
            hessian: Arc::new(|_: &[f64]| {
                let mut h = Matrix::zeros(4, 4);
                h[(1, 1)] = -2.0;
                h
            }),
            // ∇ψ₁ = (0, −2ω − 2α₁φ, 0, −2φ); its Jacobian on (φ, ω) is
            // [[−2α₁, −2], [−2, 0]] with spectral norm α₁ + √(α₁² + 4).
            lifted_lipschitz: Some(alpha1 + (alpha1 * alpha1 + 4.0).sqrt()),
        },
        lipschitz: Some(2.0),
    }
}

fn speed_clf(target: f64, rate: f64, slack_weight: f64) -> LyapunovSpec {
    LyapunovSpec {
        value: Arc::new(move |x: &[f64]| (x[0] - target).powi(2)),
        gradient: Arc::new(move |x: &[f64]| vec![2.0 * (x[0] - target), 0.0]),
        rate,
        slack_weight,
    }
}

fn abs_max(r: [f64; 2]) -> f64 {
    r[0].abs().max(r[1].abs())
}

/// Observer gains for every channel in the configured mode.
fn observer_gains(
    cfg: &ScenarioConfig,
    channels: &[ChannelModel],
) -> Result<Vec<EsoGains>, HarnessError> {
    let o = &cfg.observer;
    channels
        .iter()
        .map(|m| match o.mode {
            ObserverKind::Continuous => continuous_gains(m.relative_degree, o.bandwidth),
            ObserverKind::Discrete => {
                let pole = omega_to_discrete(o.bandwidth, o.bound_period)?;
                discrete_gains(m.relative_degree, pole, o.bound_period)
            }
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(Into::into)
}

fn make_plant(cfg: &ScenarioConfig) -> Result<Box<dyn Plant>, HarnessError> {
    Ok(match cfg.plant {
        PlantKind::Acc => Box::new(AccPlant::new(
            cfg.acc.params,
            cfg.acc.disturbance,
            cfg.acc.lead.clone(),
        )?),
        PlantKind::Segway => Box::new(SegwayPlant::new(
            cfg.segway.params,
            cfg.segway.d1,
            cfg.segway.d2,
        )?),
    })
}

fn input_box(cfg: &ScenarioConfig) -> InputBox {
    match cfg.plant {
        PlantKind::Acc => InputBox::symmetric(cfg.acc.params.input_limit()),
        PlantKind::Segway => InputBox::symmetric(cfg.segway.input_limit),
    }
}

fn state_box(cfg: &ScenarioConfig) -> Vec<(f64, f64)> {
    match cfg.plant {
        PlantKind::Acc => cfg.acc.state_box.iter().map(|r| (r[0], r[1])).collect(),
        PlantKind::Segway => cfg.segway.state_box.iter().map(|r| (r[0], r[1])).collect(),
    }
}

fn error_bounds(
    cfg: &ScenarioConfig,
    plant: &dyn Plant,
    channels: &[ChannelModel],
    gains: &[EsoGains],
) -> Result<ErrorBoundSet, HarnessError> {
    let ib = input_box(cfg);
    let mut w_box = vec![(ib.lower, ib.upper)];
    w_box.extend(plant.exogenous_box());
    let declared = match cfg.plant {
        PlantKind::Acc => cfg.acc.disturbance_bounds.clone(),
        PlantKind::Segway => cfg.segway.disturbance_bounds.clone(),
    };
    let spec = declared.unwrap_or_else(|| plant.disturbance_bounds());
    let x_box = state_box(cfg);
    let dynamics = |x: &[f64], w: &[f64]| plant.bound_dynamics(x, w);
    let phi = PhiProblem {
        dynamics: &dynamics,
        x_box: &x_box,
        u_box: &w_box,
        grid_n: cfg.control.phi_grid,
    };
    Ok(assemble_error_bounds(
        channels,
        gains,
        &spec,
        cfg.observer.bound_period,
        cfg.observer.bound_pole,
        &phi,
    )?)
}

/// The error-bound set implied by a configuration (ignores `zero_bounds`).
pub fn scenario_bounds(cfg: &ScenarioConfig) -> Result<ErrorBoundSet, HarnessError> {
    cfg.validate()?;
    let plant = make_plant(cfg)?;
    let channels = plant.observed_channels();
    let gains = observer_gains(cfg, &channels)?;
    error_bounds(cfg, plant.as_ref(), &channels, &gains)
}

pub fn build_scenario(cfg: &ScenarioConfig) -> Result<Scenario, HarnessError> {
    cfg.validate()?;
    let plant = make_plant(cfg)?;
    let channels = plant.observed_channels();
    let gains = observer_gains(cfg, &channels)?;
    let bounds = if cfg.control.zero_bounds {
        ErrorBoundSet::zero(&channels)
    } else {
        error_bounds(cfg, plant.as_ref(), &channels, &gains)?
    };

    let eso_stride = match cfg.observer.mode {
        ObserverKind::Continuous => 1,
        ObserverKind::Discrete => {
            let s = &cfg.simulation;
            let stride = cfg.observer.bound_period / s.dt_sim;
            let per_tick = s.dt_ctrl / cfg.observer.bound_period;
            let whole = |v: f64| v >= 1.0 - 1e-9 && (v - v.round()).abs() <= 1e-9 * v;
            if !whole(stride) || !whole(per_tick) {
                return Err(HarnessError::Config(format!(
                    "discrete observer period {} must be a multiple of dt_sim and divide dt_ctrl",
                    cfg.observer.bound_period
                )));
            }
            stride.round() as usize
        }
    };

    let c = &cfg.control;
    let (barrier, constraint, clf, weight, x0, dob_rate_bound) = match cfg.plant {
        PlantKind::Acc => {
            let p = &cfg.acc.params;
            let b = acc_barrier(p.headway, c.gamma_cbf);
            let mut rate = p.headway * cfg.acc.disturbance.rate_bound();
            if !cfg.acc.lead.known {
                rate += cfg.acc.lead.rate_bound;
            }
            (
                b.clone(),
                b,
                Some(speed_clf(p.desired_speed, c.clf_rate, c.slack_weight)),
                1.0 / (p.mass * p.mass),
                cfg.acc.initial_state.to_vec(),
                rate,
            )
        }
        PlantKind::Segway => {
            let b = segway_barrier(c.alpha1, c.alpha2);
            let lifted = hocbf_lift(&b, &channels[1])?;
            let s = &cfg.segway;
            // b_e = −2φ d₂, so |ḃ_e| ≤ 2|ω| |d₂| + 2|φ| |ḋ₂|.
            let rate = 2.0 * abs_max(s.state_box[3]) * s.d2.magnitude_bound()
                + 2.0 * abs_max(s.state_box[1]) * s.d2.rate_bound();
            (b, lifted, None, 1.0, s.initial_state.to_vec(), rate)
        }
    };
    constraint.validate()?;
    plant.check_domain(&x0)?;
    if cfg.controller == ControllerKind::EsorQp
        && c.robust_mode == crate::safety::RobustMode::Strict
        && constraint.lipschitz.is_none()
    {
        return Err(crate::safety::SafetyError::MissingLipschitz(constraint.name.clone()).into());
    }

    Ok(Scenario {
        config: cfg.clone(),
        input_box: input_box(cfg),
        plant,
        channels,
        gains,
        bounds,
        barrier,
        constraint,
        clf,
        weight,
        x0,
        dob_rate_bound,
        eso_stride,
    })
}
