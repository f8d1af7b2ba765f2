//! Observer-based robust safety filters.
//!
//! Extended state observers estimate the lumped disturbance on each
//! normal-form channel; rigorous bounds on their estimation error robustify
//! a control-barrier-function QP. The crate also carries the two case-study
//! plants (adaptive cruise control and a Segway), comparison controllers,
//! and a scenario harness that logs, scores, and verifies closed-loop runs.

pub mod bounds;
pub mod harness;
pub mod numerics;
pub mod observer;
pub mod plants;
pub mod safety;

pub use bounds::{
    assemble_error_bounds, gamma, p_sum, p_value, transfer_l1, ChannelErrorBound, DisturbanceBound,
    ErrorBoundSet, PhiBound,
};
pub use harness::{
    compute_metrics, run_scenario, sweep, verify_bounds, ControllerKind, HarnessError, Metrics,
    PlantKind, ScenarioConfig, TrajectoryLog,
};
pub use numerics::{solve_qp, Matrix, NumericsError, QpProblem, QpSolution};
pub use observer::{continuous_gains, discrete_gains, ChannelModel, EsoGains, EsoMode, EsoState};
pub use plants::{AccParams, AccPlant, DisturbanceSignal, Plant, SegwayParams, SegwayPlant};
pub use safety::{BarrierSpec, InputBox, LyapunovSpec, QpStatus, RobustMode};
