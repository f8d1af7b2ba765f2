//! Fixtures shared by the benchmarks.

use esor_core::harness::ScenarioConfig;
use esor_core::numerics::{Matrix, QpProblem};
use esor_core::plants::segway_channels;
use esor_core::{continuous_gains, ChannelModel, EsoGains, SegwayParams};

/// A filter-sized QP: input and slack, one barrier row, one CLF row, a box.
pub fn filter_qp() -> QpProblem {
    let mut h = Matrix::zeros(2, 2);
    h[(0, 0)] = 2.0;
    h[(1, 1)] = 200.0;
    QpProblem::new(h, vec![-1.4, 0.0])
        .with_constraint(vec![-0.8, 0.0], -0.3)
        .with_constraint(vec![-0.5, 1.0], 0.2)
        .with_bounds(0, Some(-1.0), Some(1.0))
}

/// Segway pitch channel with continuous gains at bandwidth 20.
pub fn pitch_channel() -> (ChannelModel, EsoGains) {
    let [_, pitch] = segway_channels(&SegwayParams::default());
    let gains = continuous_gains(pitch.relative_degree, 20.0).expect("valid bandwidth");
    (pitch, gains)
}

/// Default scenario cut to `horizon` seconds.
pub fn short_scenario(segway: bool, horizon: f64) -> ScenarioConfig {
    let mut cfg = if segway {
        ScenarioConfig::segway_default()
    } else {
        ScenarioConfig::acc_default()
    };
    cfg.simulation.horizon = Some(horizon);
    cfg
}
