//! One-axis parameter sweeps, run in parallel and reported in input order.

use rayon::prelude::*;

use super::metrics::{metric_values, METRIC_FIELDS};
use super::{build_scenario, compute_metrics, simulate, HarnessError, Metrics, ScenarioConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: String,
    pub metrics: Metrics,
    /// `γ_i` per channel used by the run.
    pub gamma: Vec<f64>,
    pub channels: Vec<String>,
}

/// Splits `"1e-3, 5e-4"` into trimmed, non-empty entries.
pub fn parse_values(list: &str) -> Vec<String> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

pub fn sweep(
    template: &ScenarioConfig,
    axis: &str,
    values: &[String],
) -> Result<Vec<SweepRow>, HarnessError> {
    // Resolve every config first so a typo fails before any run starts.
    let configs = values
        .iter()
        .map(|v| template.with_override(axis, v))
        .collect::<Result<Vec<_>, _>>()?;
    configs
        .par_iter()
        .zip(values.par_iter())
        .map(|(cfg, v)| {
            let s = build_scenario(cfg)?;
            let log = simulate(&s)?;
            Ok(SweepRow {
                value: v.clone(),
                metrics: compute_metrics(&log, cfg.simulation.transient),
                gamma: s.bounds.channels.iter().map(|b| b.gamma).collect(),
                channels: log.channels,
            })
        })
        .collect()
}

/// Axis value, metric columns, then `gamma_<channel>` columns.
pub fn write_sweep_csv<W: std::io::Write>(
    axis: &str,
    rows: &[SweepRow],
    out: W,
) -> Result<(), HarnessError> {
    let err = |e: csv::Error| HarnessError::Log(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    let channels = rows.first().map(|r| r.channels.clone()).unwrap_or_default();
    let mut header = vec![axis.to_string()];
    header.extend(METRIC_FIELDS.iter().map(|s| s.to_string()));
    header.extend(channels.iter().map(|c| format!("gamma_{c}")));
    w.write_record(&header).map_err(err)?;
    for r in rows {
        let mut rec = vec![r.value.clone()];
        rec.extend(metric_values(&r.metrics));
        rec.extend(r.gamma.iter().map(f64::to_string));
        w.write_record(&rec).map_err(err)?;
    }
    w.flush().map_err(|e| HarnessError::Log(e.to_string()))
}
