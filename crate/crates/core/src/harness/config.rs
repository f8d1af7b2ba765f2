//! Scenario configuration, read from TOML or JSON. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::bounds::DisturbanceBound;
use crate::plants::{AccParams, DisturbanceSignal, LeadProfile, SegwayParams};
use crate::safety::RobustMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantKind {
    Acc,
    Segway,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    #[default]
    EsorQp,
    TrueDQp,
    NominalQp,
    DobCbfQp,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 4] =
        [Self::EsorQp, Self::TrueDQp, Self::NominalQp, Self::DobCbfQp];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::EsorQp => "esor_qp",
            Self::TrueDQp => "true_d_qp",
            Self::NominalQp => "nominal_qp",
            Self::DobCbfQp => "dob_cbf_qp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ObserverKind {
    #[default]
    Continuous,
    Discrete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    /// Defaults to 30 s for the cruise-control plant and 20 s for the Segway.
    pub horizon: Option<f64>,
    pub dt_ctrl: f64,
    pub dt_sim: f64,
    /// Samples before this time are excluded from rate metrics.
    pub transient: f64,
    /// Only consumed by randomized test batteries; nominal scenarios are deterministic.
    pub seed: Option<u64>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            horizon: None,
            dt_ctrl: 1e-3,
            dt_sim: 1e-4,
            transient: 1.0,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObserverConfig {
    /// Continuous bandwidth `ω_o` (rad/s); the discrete pole is `e^{-ω_o dt_sim}`.
    pub bandwidth: f64,
    pub mode: ObserverKind,
    /// Sample period `T` used in the error-bound series.
    pub bound_period: f64,
    /// Fixes the series pole instead of deriving it from `bandwidth` and `bound_period`.
    pub bound_pole: Option<f64>,
}

impl Default for ObserverConfig {
    fn default() -> Self {
        Self {
            bandwidth: 20.0,
            mode: ObserverKind::Continuous,
            bound_period: 1e-4,
            bound_pole: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlConfig {
    /// Class-K gain of first-order barriers.
    pub gamma_cbf: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub robust_mode: RobustMode,
    pub clf_rate: f64,
    pub slack_weight: f64,
    pub dob_gain: f64,
    /// Replace every error bound by zero (certainty-equivalent ESO control).
    pub zero_bounds: bool,
    /// Grid points per axis for the state-derivative bound.
    pub phi_grid: usize,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            gamma_cbf: 0.2,
            alpha1: 5.0,
            alpha2: 5.0,
            robust_mode: RobustMode::SteadyState,
            clf_rate: 5.0,
            slack_weight: 100.0,
            dob_gain: 10.0,
            zero_bounds: false,
            phi_grid: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AccConfig {
    pub params: AccParams,
    pub disturbance: DisturbanceSignal,
    pub lead: LeadProfile,
    /// `(v_f, D)`.
    pub initial_state: [f64; 2],
    /// Operating box for the state-derivative bound.
    pub state_box: [[f64; 2]; 2],
    /// Per-channel `(l_f, b_f)` on the total disturbance; derived from the
    /// external signals when absent.
    pub disturbance_bounds: Option<Vec<DisturbanceBound>>,
}

impl Default for AccConfig {
    fn default() -> Self {
        Self {
            // 0.2 g
            disturbance: DisturbanceSignal::Sinusoid {
                amplitude: 1.962,
                period: 10.0,
                phase: 0.0,
            },
            params: AccParams::default(),
            lead: LeadProfile::default(),
            initial_state: [20.0, 100.0],
            state_box: [[0.0, 40.0], [0.0, 200.0]],
            disturbance_bounds: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegwayConfig {
    pub params: SegwayParams,
    pub d1: DisturbanceSignal,
    pub d2: DisturbanceSignal,
    /// `(p, φ, υ, ω)`.
    pub initial_state: [f64; 4],
    pub state_box: [[f64; 2]; 4],
    /// Symmetric voltage limit.
    pub input_limit: f64,
    /// Per-channel `(l_f, b_f)` on the total disturbance; derived from the
    /// external signals when absent.
    pub disturbance_bounds: Option<Vec<DisturbanceBound>>,
}

impl Default for SegwayConfig {
    fn default() -> Self {
        Self {
            params: SegwayParams::default(),
            d1: DisturbanceSignal::Sinusoid {
                amplitude: 2.0,
                period: 10.0,
                phase: 0.0,
            },
            d2: DisturbanceSignal::Sinusoid {
                amplitude: 2.0,
                period: 10.0,
                phase: std::f64::consts::FRAC_PI_2,
            },
            initial_state: [0.0; 4],
            state_box: [[-3.0, 5.0], [-0.6, 0.6], [-3.0, 3.0], [-1.5, 1.5]],
            input_limit: 20.0,
            disturbance_bounds: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub plant: PlantKind,
    #[serde(default)]
    pub controller: ControllerKind,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub observer: ObserverConfig,
    #[serde(default)]
    pub control: ControlConfig,
    #[serde(default)]
    pub acc: AccConfig,
    #[serde(default)]
    pub segway: SegwayConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ScenarioConfig {
    pub fn acc_default() -> Self {
        Self::with_plant(PlantKind::Acc)
    }

    pub fn segway_default() -> Self {
        Self::with_plant(PlantKind::Segway)
    }

    pub fn with_plant(plant: PlantKind) -> Self {
        Self {
            plant,
            controller: ControllerKind::default(),
            simulation: SimulationConfig::default(),
            observer: ObserverConfig::default(),
            control: ControlConfig::default(),
            acc: AccConfig::default(),
            segway: SegwayConfig::default(),
            output: OutputConfig::default(),
        }
    }

    pub fn horizon(&self) -> f64 {
        self.simulation.horizon.unwrap_or(match self.plant {
            PlantKind::Acc => 30.0,
            PlantKind::Segway => 20.0,
        })
    }

    /// Plant sub-steps per controller tick.
    pub fn substeps(&self) -> usize {
        (self.simulation.dt_ctrl / self.simulation.dt_sim).round() as usize
    }

    /// Controller ticks after the initial one.
    pub fn ticks(&self) -> usize {
        (self.horizon() / self.simulation.dt_ctrl + 1e-9).floor() as usize
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        let s = &self.simulation;
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.horizon()) {
            return bad(format!("horizon must be positive, got {}", self.horizon()));
        }
        if !positive(s.dt_ctrl) || !positive(s.dt_sim) {
            return bad("dt_ctrl and dt_sim must be positive".into());
        }
        if s.dt_sim > s.dt_ctrl {
            return bad(format!("dt_sim {} exceeds dt_ctrl {}", s.dt_sim, s.dt_ctrl));
        }
        let ratio = s.dt_ctrl / s.dt_sim;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio {
            return bad(format!(
                "dt_ctrl {} is not an integer multiple of dt_sim {}",
                s.dt_ctrl, s.dt_sim
            ));
        }
        if !(s.transient >= 0.0) {
            return bad("transient must be non-negative".into());
        }
        if !positive(self.observer.bandwidth) || !positive(self.observer.bound_period) {
            return bad("observer bandwidth and bound_period must be positive".into());
        }
        if let Some(p) = self.observer.bound_pole {
            if !(0.0..1.0).contains(&p) {
                return bad(format!("bound_pole must lie in [0, 1), got {p}"));
            }
        }
        let c = &self.control;
        for (name, v) in [
            ("gamma_cbf", c.gamma_cbf),
            ("alpha1", c.alpha1),
            ("alpha2", c.alpha2),
            ("clf_rate", c.clf_rate),
            ("slack_weight", c.slack_weight),
            ("dob_gain", c.dob_gain),
        ] {
            if !positive(v) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if c.phi_grid < 2 {
            return bad("phi_grid must be at least 2".into());
        }
        if !positive(self.segway.input_limit) {
            return bad("segway input_limit must be positive".into());
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(s).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_str(s: &str) -> Result<Self, HarnessError> {
        let cfg: Self = serde_json::from_str(s).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses by extension; anything but `.json` is read as TOML.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json_str(&text),
            _ => Self::from_toml_str(&text),
        }
    }

    /// Returns a copy with the dotted `axis` (e.g. `observer.bandwidth`) set
    /// to `value`, parsed as a number when possible and a string otherwise.
    pub fn with_override(&self, axis: &str, value: &str) -> Result<Self, HarnessError> {
        let mut tree =
            serde_json::to_value(self).map_err(|e| HarnessError::Config(e.to_string()))?;
        let mut node = &mut tree;
        for key in axis.split('.') {
            node = node
                .as_object_mut()
                .and_then(|m| m.get_mut(key))
                .ok_or_else(|| HarnessError::Config(format!("unknown sweep axis `{axis}`")))?;
        }
        *node = match value.trim().parse::<f64>() {
            Ok(v) if node.is_u64() && v.fract() == 0.0 && v >= 0.0 => serde_json::json!(v as u64),
            Ok(v) => serde_json::json!(v),
            Err(_) => match value.trim() {
                "true" => serde_json::Value::Bool(true),
                "false" => serde_json::Value::Bool(false),
                s => serde_json::Value::String(s.to_string()),
            },
        };
        let cfg: Self = serde_json::from_value(tree)
            .map_err(|e| HarnessError::Config(format!("{axis} = {value}: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
