//! Scenario orchestration: configuration, the fixed-step simulation loop,
//! trajectory logs, metrics, bound verification, sweeps, and CSV export.

mod config;
mod log;
mod metrics;
mod run;
mod scenario;
mod sweep;

pub use config::{
    AccConfig, ControlConfig, ControllerKind, ObserverConfig, ObserverKind, OutputConfig,
    PlantKind, ScenarioConfig, SegwayConfig, SimulationConfig,
};
pub use log::{write_bounds_csv, LogRow, TrajectoryLog};
pub use metrics::{
    compute_metrics, sufficiency_samples, verify_bounds, write_metrics_csv, FlaggedSample, Metrics,
    RunStatus, SufficiencySample, VerificationReport, SUFFICIENCY_REL_TOL,
};
pub use run::{run_scenario, simulate};
pub use scenario::{build_scenario, scenario_bounds, Scenario};
pub use sweep::{parse_values, sweep, write_sweep_csv, SweepRow};

use std::path::PathBuf;

use thiserror::Error;

use crate::bounds::BoundsError;
use crate::numerics::NumericsError;
use crate::observer::ObserverError;
use crate::plants::PlantError;
use crate::safety::SafetyError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{}: {message}", path.display())]
    Io { path: PathBuf, message: String },
    #[error("malformed trajectory log: {0}")]
    Log(String),
    #[error("state became non-finite at t = {t}")]
    NonFinite { t: f64 },
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Observer(#[from] ObserverError),
    #[error(transparent)]
    Safety(#[from] SafetyError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

impl HarnessError {
    pub(crate) fn io(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }
}
