//! Scalar run metrics and the empirical check of the error bounds.

use serde::Serialize;

use super::{HarnessError, TrajectoryLog};
use crate::bounds::ErrorBoundSet;
use crate::safety::QpStatus;

/// Relative tolerance in `ḣ ≥ Ψ_h − tol · (|ḣ| + 1)`.
pub const SUFFICIENCY_REL_TOL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub samples: usize,
    pub min_h: f64,
    pub mean_h: f64,
    /// Samples with `h < 0`.
    pub violations: usize,
    pub tracking_rmse: f64,
    pub max_abs_u: f64,
    /// Post-transient fraction with `|f_i − f̂_i| ≤ γ_i` on every channel.
    pub containment_rate: f64,
    /// Post-transient fraction with finite-difference `ḣ ≥ Ψ_h − tol`.
    pub sufficiency_rate: f64,
    /// Post-transient mean of `ḣ − Ψ_h`.
    pub mean_sufficiency_gap: f64,
    pub infeasible_samples: usize,
    pub clf_dropped_samples: usize,
}

/// Outcome classes mapped to process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Ok,
    SafetyViolation,
    InfeasibleSamples,
}

impl RunStatus {
    pub fn from_metrics(m: &Metrics) -> Self {
        if m.violations > 0 {
            Self::SafetyViolation
        } else if m.infeasible_samples > 0 {
            Self::InfeasibleSamples
        } else {
            Self::Ok
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Self::Ok => 0,
            Self::SafetyViolation => 2,
            Self::InfeasibleSamples => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SufficiencySample {
    pub index: usize,
    pub t: f64,
    /// Central difference of the constrained barrier over adjacent ticks.
    pub hdot: f64,
    pub psi_h: f64,
}

impl SufficiencySample {
    pub fn holds(&self) -> bool {
        self.hdot >= self.psi_h - SUFFICIENCY_REL_TOL * (self.hdot.abs() + 1.0)
    }
}

/// Interior post-transient ticks with their finite-difference derivative.
pub fn sufficiency_samples(log: &TrajectoryLog, transient: f64) -> Vec<SufficiencySample> {
    let r = &log.rows;
    (1..r.len().saturating_sub(1))
        .filter(|&k| r[k].t >= transient)
        .map(|k| SufficiencySample {
            index: k,
            t: r[k].t,
            hdot: (r[k + 1].h_lifted - r[k - 1].h_lifted) / (r[k + 1].t - r[k - 1].t),
            psi_h: r[k].psi_h,
        })
        .collect()
}

fn rate(hits: usize, total: usize) -> f64 {
    if total == 0 {
        1.0
    } else {
        hits as f64 / total as f64
    }
}

pub fn compute_metrics(log: &TrajectoryLog, transient: f64) -> Metrics {
    let rows = &log.rows;
    let n = rows.len();
    let min_h = rows.iter().map(|r| r.h).fold(f64::INFINITY, f64::min);
    let mean_h = if n == 0 {
        f64::NAN
    } else {
        rows.iter().map(|r| r.h).sum::<f64>() / n as f64
    };
    let post: Vec<_> = rows.iter().filter(|r| r.t >= transient).collect();
    let contained = post
        .iter()
        .filter(|r| {
            r.f_true
                .iter()
                .zip(&r.f_hat)
                .zip(&r.gamma)
                .all(|((f, fh), g)| (f - fh).abs() <= *g)
        })
        .count();
    let suff = sufficiency_samples(log, transient);
    let gap = if suff.is_empty() {
        0.0
    } else {
        suff.iter().map(|s| s.hdot - s.psi_h).sum::<f64>() / suff.len() as f64
    };
    Metrics {
        samples: n,
        min_h,
        mean_h,
        violations: rows.iter().filter(|r| r.h < 0.0).count(),
        tracking_rmse: if n == 0 {
            f64::NAN
        } else {
            (rows.iter().map(|r| r.tracking_error.powi(2)).sum::<f64>() / n as f64).sqrt()
        },
        max_abs_u: rows.iter().map(|r| r.u.abs()).fold(0.0, f64::max),
        containment_rate: rate(contained, post.len()),
        sufficiency_rate: rate(suff.iter().filter(|s| s.holds()).count(), suff.len()),
        mean_sufficiency_gap: gap,
        infeasible_samples: rows
            .iter()
            .filter(|r| r.status == QpStatus::Infeasible)
            .count(),
        clf_dropped_samples: rows
            .iter()
            .filter(|r| r.status == QpStatus::ClfDropped)
            .count(),
    }
}

/// Header row plus one row per labelled metrics record.
pub fn write_metrics_csv<W: std::io::Write>(
    records: &[(String, Metrics)],
    out: W,
) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| HarnessError::Log(e.to_string());
    w.write_record(std::iter::once("label").chain(METRIC_FIELDS))
        .map_err(err)?;
    for (label, m) in records {
        let mut rec = vec![label.clone()];
        rec.extend(metric_values(m));
        w.write_record(&rec).map_err(err)?;
    }
    w.flush().map_err(|e| HarnessError::Log(e.to_string()))
}

pub(crate) const METRIC_FIELDS: [&str; 11] = [
    "samples",
    "min_h",
    "mean_h",
    "violations",
    "tracking_rmse",
    "max_abs_u",
    "containment_rate",
    "sufficiency_rate",
    "mean_sufficiency_gap",
    "infeasible_samples",
    "clf_dropped_samples",
];

pub(crate) fn metric_values(m: &Metrics) -> Vec<String> {
    vec![
        m.samples.to_string(),
        m.min_h.to_string(),
        m.mean_h.to_string(),
        m.violations.to_string(),
        m.tracking_rmse.to_string(),
        m.max_abs_u.to_string(),
        m.containment_rate.to_string(),
        m.sufficiency_rate.to_string(),
        m.mean_sufficiency_gap.to_string(),
        m.infeasible_samples.to_string(),
        m.clf_dropped_samples.to_string(),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlaggedSample {
    pub index: usize,
    pub t: f64,
    pub channel: String,
    pub error: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub containment_rate: f64,
    pub sufficiency_rate: f64,
    /// `max |f − f̂| / γ` over post-transient samples and channels.
    pub max_normalized_exceedance: f64,
    /// Samples where some channel left its bound.
    pub flagged: Vec<FlaggedSample>,
    /// Tick indices where the sufficiency inequality failed.
    pub sufficiency_failures: Vec<usize>,
}

impl VerificationReport {
    pub fn passes(&self, required_rate: f64) -> bool {
        self.containment_rate >= required_rate && self.sufficiency_rate >= required_rate
    }
}

/// Checks a log against a bound set (which may differ from the one used
/// during the run).
pub fn verify_bounds(
    log: &TrajectoryLog,
    bounds: &ErrorBoundSet,
    transient: f64,
) -> Result<VerificationReport, HarnessError> {
    if bounds.channels.len() != log.channels.len() {
        return Err(HarnessError::Log(format!(
            "log has {} channels, bounds have {}",
            log.channels.len(),
            bounds.channels.len()
        )));
    }
    let mut flagged = Vec::new();
    let mut post = 0usize;
    let mut bad_rows = 0usize;
    let mut worst = 0.0f64;
    for (k, r) in log
        .rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r.t >= transient)
    {
        post += 1;
        let mut ok = true;
        for (i, b) in bounds.channels.iter().enumerate() {
            let e = (r.f_true[i] - r.f_hat[i]).abs();
            let ratio = if b.gamma > 0.0 {
                e / b.gamma
            } else if e == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            worst = worst.max(ratio);
            if e > b.gamma {
                ok = false;
                flagged.push(FlaggedSample {
                    index: k,
                    t: r.t,
                    channel: b.channel.clone(),
                    error: e,
                    gamma: b.gamma,
                });
            }
        }
        if !ok {
            bad_rows += 1;
        }
    }
    let suff = sufficiency_samples(log, transient);
    let failures: Vec<usize> = suff
        .iter()
        .filter(|s| !s.holds())
        .map(|s| s.index)
        .collect();
    Ok(VerificationReport {
        containment_rate: rate(post - bad_rows, post),
        sufficiency_rate: rate(suff.len() - failures.len(), suff.len()),
        max_normalized_exceedance: worst,
        flagged,
        sufficiency_failures: failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{ChannelErrorBound, PhiBound};
    use crate::harness::LogRow;

    fn constant_log(h: f64, n: usize) -> TrajectoryLog {
        TrajectoryLog {
            channels: vec!["c".into()],
            rows: (0..n)
                .map(|k| LogRow {
                    t: k as f64 * 0.5,
                    x: vec![0.0],
                    y: vec![0.0],
                    x_hat: vec![0.0],
                    f_hat: vec![1.0],
                    f_true: vec![1.0],
                    gamma: vec![0.1],
                    u: if k == 1 { -3.0 } else { 1.0 },
                    h,
                    h_lifted: h,
                    psi_h: 0.0,
                    slack: 0.0,
                    status: QpStatus::Optimal,
                    tracking_error: 2.0,
                })
                .collect(),
        }
    }

    fn bound(gamma: f64) -> ErrorBoundSet {
        ErrorBoundSet {
            period: 1e-4,
            channels: vec![ChannelErrorBound {
                channel: "c".into(),
                pole: 0.9,
                p_sum: 10.0,
                gamma,
                g_l1: vec![1.0],
                h_l1: vec![2.0],
                lcg_l1: vec![1.0],
                state_bound: vec![gamma],
                derivative_bound: vec![2.0 * gamma],
            }],
            phi: PhiBound {
                value: 1.0,
                grid_n: 3,
            },
        }
    }

    #[test]
    fn constant_h() {
        let m = compute_metrics(&constant_log(0.7, 10), 1.0);
        assert_eq!(m.min_h, 0.7);
        assert!((m.mean_h - 0.7).abs() < 1e-15);
        assert_eq!(m.violations, 0);
        assert_eq!(m.tracking_rmse, 2.0);
        assert_eq!(m.max_abs_u, 3.0);
        assert_eq!(m.containment_rate, 1.0);
        assert_eq!(m.sufficiency_rate, 1.0);
        assert_eq!(RunStatus::from_metrics(&m), RunStatus::Ok);
    }

    #[test]
    fn single_violation_counted() {
        let mut log = constant_log(0.7, 10);
        log.rows[4].h = -1e-9;
        let m = compute_metrics(&log, 1.0);
        assert_eq!(m.violations, 1);
        assert_eq!(m.min_h, -1e-9);
        assert_eq!(RunStatus::from_metrics(&m).exit_code(), 2);
    }

    #[test]
    fn infeasible_status_maps_to_exit_three() {
        let mut log = constant_log(0.7, 10);
        log.rows[3].status = QpStatus::Infeasible;
        let m = compute_metrics(&log, 1.0);
        assert_eq!(m.infeasible_samples, 1);
        assert_eq!(RunStatus::from_metrics(&m).exit_code(), 3);
    }

    #[test]
    fn perfect_estimates_verify() {
        let r = verify_bounds(&constant_log(1.0, 10), &bound(0.1), 1.0).unwrap();
        assert_eq!(r.containment_rate, 1.0);
        assert_eq!(r.sufficiency_rate, 1.0);
        assert_eq!(r.max_normalized_exceedance, 0.0);
        assert!(r.flagged.is_empty());
    }

    #[test]
    fn spikes_are_flagged() {
        let mut log = constant_log(1.0, 10);
        log.rows[5].f_hat[0] = 1.5;
        log.rows[7].f_hat[0] = 0.8;
        let r = verify_bounds(&log, &bound(0.1), 1.0).unwrap();
        let idx: Vec<usize> = r.flagged.iter().map(|f| f.index).collect();
        assert_eq!(idx, vec![5, 7]);
        assert!((r.max_normalized_exceedance - 5.0).abs() < 1e-12);
        assert!((r.containment_rate - 6.0 / 8.0).abs() < 1e-15);
    }

    #[test]
    fn sufficiency_detects_shortfall() {
        let mut log = constant_log(1.0, 10);
        // h rises by 1 per second, so ḣ = 1 everywhere.
        for r in &mut log.rows {
            r.h_lifted = r.t;
            r.psi_h = 0.9;
        }
        log.rows[6].psi_h = 1.5;
        let s = sufficiency_samples(&log, 1.0);
        assert!(s.iter().all(|x| (x.hdot - 1.0).abs() < 1e-12));
        let m = compute_metrics(&log, 1.0);
        assert!((m.sufficiency_rate - 6.0 / 7.0).abs() < 1e-12);
        let r = verify_bounds(&log, &bound(0.1), 1.0).unwrap();
        assert_eq!(r.sufficiency_failures, vec![6]);
    }

    #[test]
    fn metrics_csv_layout() {
        let m = compute_metrics(&constant_log(0.5, 4), 0.0);
        let mut buf = Vec::new();
        write_metrics_csv(&[("run".into(), m)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("label,samples,min_h,mean_h,violations"));
        assert!(lines[1].starts_with("run,4,0.5,0.5,0,"));
    }
}
