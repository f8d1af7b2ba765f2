//! The fixed-step closed loop.
//!
//! Each controller tick samples the plant, reads the observers, solves the
//! configured QP, and logs. The input is then held while the plant is
//! integrated with RK4 at `dt_sim`. Continuous observers and the barrier
//! disturbance observers are integrated jointly with the plant, so they see
//! the measurement as a continuous signal; discrete observers update from
//! samples every `bound_period`.

use super::{
    ControllerKind, HarnessError, LogRow, ObserverKind, Scenario, ScenarioConfig, TrajectoryLog,
};
use crate::numerics::{dot, try_rk4_step};
use crate::observer::{eso_derivative, eso_step_discrete, EsoEnv, EsoState};
use crate::safety::{
    dob_cbf_control, dob_rate, esor_qp_control, nominal_cbf_qp_control, nominal_rate,
    ControlAffine, ControllerContext, DobState, SafeControl,
};

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<TrajectoryLog, HarnessError> {
    simulate(&super::build_scenario(cfg)?)
}

/// Overwrites each channel's coordinates of the true state with its chain
/// estimate; coordinates without an observer are measured directly.
fn assemble_estimate(s: &Scenario, x: &[f64], chains: &[&[f64]]) -> Vec<f64> {
    let mut x_hat = x.to_vec();
    for (m, c) in s.channels.iter().zip(chains) {
        for (&idx, &v) in m.state_indices.iter().zip(*c) {
            x_hat[idx] = v;
        }
    }
    x_hat
}

/// Offsets of the observer blocks in the joint state.
struct Layout {
    n: usize,
    eso: Vec<(usize, usize)>,
    dob: Option<usize>,
    clf_dob: Option<usize>,
    len: usize,
}

impl Layout {
    fn new(s: &Scenario, joint_eso: bool, dob: bool) -> Self {
        let n = s.plant.state_dim();
        let mut at = n;
        let mut eso = Vec::new();
        if joint_eso {
            for m in &s.channels {
                let w = m.relative_degree + 1;
                eso.push((at, at + w));
                at += w;
            }
        }
        let (mut d, mut c) = (None, None);
        if dob {
            d = Some(at);
            at += 1;
            if s.clf.is_some() {
                c = Some(at);
                at += 1;
            }
        }
        Self {
            n,
            eso,
            dob: d,
            clf_dob: c,
            len: at,
        }
    }
}

/// `(∇h · (f + g u), ∇V · (f + g u))` at the true state, disturbance excluded.
fn known_rates(s: &Scenario, x: &[f64], t: f64, u: f64) -> (f64, f64) {
    let rate = nominal_rate(s.plant.as_ref(), x, t, &[]);
    let xdot: Vec<f64> = rate
        .constant
        .iter()
        .zip(&rate.slope)
        .map(|(c, g)| c + g * u)
        .collect();
    let a_h = dot(&s.constraint.h_x(x), &xdot);
    let a_v = s.clf.as_ref().map_or(0.0, |c| dot(&(c.gradient)(x), &xdot));
    (a_h, a_v)
}

fn joint_rhs(
    s: &Scenario,
    lay: &Layout,
    t: f64,
    z: &[f64],
    u: f64,
) -> Result<Vec<f64>, HarnessError> {
    let x = &z[..lay.n];
    let mut dz = s.plant.dynamics(x, u, t)?;
    dz.reserve(lay.len - lay.n);
    if !lay.eso.is_empty() {
        let y = s.plant.measure(x);
        let chains: Vec<&[f64]> = lay
            .eso
            .iter()
            .zip(&s.channels)
            .map(|(&(a, _), m)| &z[a..a + m.relative_degree])
            .collect();
        let x_hat = assemble_estimate(s, x, &chains);
        let env = EsoEnv {
            estimate: &x_hat,
            measurement: &y,
        };
        for ((m, g), &(a, b)) in s.channels.iter().zip(&s.gains).zip(&lay.eso) {
            dz.extend(eso_derivative(
                m,
                &g.gains,
                &z[a..b],
                y[m.output_index],
                u,
                &env,
            )?);
        }
    }
    if let Some(i) = lay.dob {
        let k = s.config.control.dob_gain;
        let (a_h, a_v) = known_rates(s, x, t, u);
        dz.push(dob_rate(z[i], k, s.constraint.h(x), a_h));
        if let (Some(j), Some(clf)) = (lay.clf_dob, s.clf.as_ref()) {
            dz.push(dob_rate(z[j], k, (clf.value)(x), a_v));
        }
    }
    Ok(dz)
}

pub fn simulate(s: &Scenario) -> Result<TrajectoryLog, HarnessError> {
    let cfg = &s.config;
    let plant = s.plant.as_ref();
    let model: &dyn ControlAffine = plant;
    let (dt_ctrl, dt_sim) = (cfg.simulation.dt_ctrl, cfg.simulation.dt_sim);
    let substeps = cfg.substeps();
    let continuous = cfg.observer.mode == ObserverKind::Continuous;
    let uses_dob = cfg.controller == ControllerKind::DobCbfQp;
    let lay = Layout::new(s, continuous, uses_dob);
    let k_b = cfg.control.dob_gain;

    let mut x = s.x0.clone();
    let y0 = plant.measure(&x);
    let mut esos: Vec<EsoState> = s
        .channels
        .iter()
        .map(|m| EsoState::from_measurement(m.relative_degree, y0[m.output_index], 0.0))
        .collect();
    let mut dob = DobState::new(k_b, s.dob_rate_bound, s.constraint.h(&x))?;
    let mut clf_dob = match &s.clf {
        Some(c) => Some(DobState::new(k_b, 0.0, (c.value)(&x))?),
        None => None,
    };

    let ctx = ControllerContext {
        model,
        barriers: std::slice::from_ref(&s.constraint),
        clf: s.clf.as_ref(),
        input_box: Some(s.input_box),
        weight: s.weight,
    };

    let ticks = cfg.ticks();
    let mut log = TrajectoryLog {
        channels: s.channels.iter().map(|m| m.name.clone()).collect(),
        rows: Vec::with_capacity(ticks + 1),
    };
    let gamma: Vec<f64> = s.bounds.channels.iter().map(|b| b.gamma).collect();

    for k in 0..=ticks {
        let t = k as f64 * dt_ctrl;
        let y = plant.measure(&x);
        let chains: Vec<&[f64]> = esos.iter().map(|e| e.chain()).collect();
        let x_hat = assemble_estimate(s, &x, &chains);
        let f_hat: Vec<f64> = esos.iter().map(|e| e.disturbance()).collect();

        let SafeControl { outcome, psi } = match cfg.controller {
            ControllerKind::EsorQp => esor_qp_control(
                &ctx,
                &s.channels,
                &s.bounds,
                cfg.control.robust_mode,
                &x_hat,
                &y,
                &f_hat,
                t,
                plant.nominal_control(&x_hat),
            )?,
            ControllerKind::TrueDQp => nominal_cbf_qp_control(
                &ctx,
                &x,
                &plant.disturbance(t),
                t,
                plant.nominal_control(&x),
            )?,
            ControllerKind::NominalQp => {
                nominal_cbf_qp_control(&ctx, &x, &[], t, plant.nominal_control(&x))?
            }
            ControllerKind::DobCbfQp => {
                dob.estimate = dob.estimate_at(s.constraint.h(&x));
                if let (Some(d), Some(c)) = (clf_dob.as_mut(), s.clf.as_ref()) {
                    d.estimate = d.estimate_at((c.value)(&x));
                }
                dob_cbf_control(
                    &ctx,
                    &x,
                    t,
                    plant.nominal_control(&x),
                    &[dob],
                    clf_dob.as_ref(),
                )?
            }
        };
        let u = outcome.u;

        let d = plant.channel_disturbances(t);
        let f_true: Vec<f64> = s
            .channels
            .iter()
            .zip(&d)
            .map(|(m, &di)| m.total_disturbance(&x, &x_hat, &y, u, di))
            .collect();
        log.rows.push(LogRow {
            t,
            x: x.clone(),
            y: y.clone(),
            x_hat: x_hat.clone(),
            f_hat,
            f_true,
            gamma: gamma.clone(),
            u,
            h: s.barrier.h(&x),
            h_lifted: s.constraint.h(&x),
            psi_h: psi[0],
            slack: outcome.slack,
            status: outcome.status,
            tracking_error: plant.tracking_error(&x),
        });
        if k == ticks {
            break;
        }

        for j in 0..substeps {
            let tj = t + j as f64 * dt_sim;
            if !continuous && j % s.eso_stride == 0 {
                let yj = plant.measure(&x);
                let chains: Vec<&[f64]> = esos.iter().map(|e| e.chain()).collect();
                let x_hat = assemble_estimate(s, &x, &chains);
                let env = EsoEnv {
                    estimate: &x_hat,
                    measurement: &yj,
                };
                esos = esos
                    .iter()
                    .zip(&s.channels)
                    .zip(&s.gains)
                    .map(|((e, m), g)| eso_step_discrete(e, yj[m.output_index], u, m, g, &env))
                    .collect::<Result<Vec<_>, _>>()?;
            }

            let mut z = Vec::with_capacity(lay.len);
            z.extend_from_slice(&x);
            if continuous {
                for e in &esos {
                    z.extend_from_slice(&e.estimate);
                }
            }
            if uses_dob {
                z.push(dob.z);
                if let Some(c) = &clf_dob {
                    z.push(c.z);
                }
            }
            let next = try_rk4_step(|tt, zz| joint_rhs(s, &lay, tt, zz, u), &z, tj, dt_sim)?;
            if next.iter().any(|v| !v.is_finite()) {
                return Err(HarnessError::NonFinite { t: tj + dt_sim });
            }
            x.copy_from_slice(&next[..lay.n]);
            for (e, &(a, b)) in esos.iter_mut().zip(&lay.eso) {
                e.estimate.copy_from_slice(&next[a..b]);
                e.time = tj + dt_sim;
            }
            if let Some(i) = lay.dob {
                dob.z = next[i];
            }
            if let (Some(i), Some(c)) = (lay.clf_dob, clf_dob.as_mut()) {
                c.z = next[i];
            }
        }
        plant.check_domain(&x)?;
    }
    Ok(log)
}
