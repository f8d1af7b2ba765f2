//! Per-tick trajectory log with a fixed CSV schema.
//!
//! Columns: `t`, `x0..`, `y0..`, `xhat0..`, then `fhat_<c>`, `f_<c>`,
//! `gamma_<c>` for each observed channel `c`, then `u`, `h`, `h_lifted`,
//! `psi_h`, `slack`, `status`, `tracking_error`. Floats use the shortest
//! decimal form that round-trips.

use std::path::Path;

use super::HarnessError;
use crate::bounds::ErrorBoundSet;
use crate::safety::QpStatus;

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Full-state estimate the controller saw.
    pub x_hat: Vec<f64>,
    pub f_hat: Vec<f64>,
    /// Total disturbance at the applied input.
    pub f_true: Vec<f64>,
    pub gamma: Vec<f64>,
    pub u: f64,
    /// Safety function at the true state.
    pub h: f64,
    /// Constrained first-order barrier at the true state.
    pub h_lifted: f64,
    /// Lower bound on the derivative of `h_lifted` used by the controller.
    pub psi_h: f64,
    pub slack: f64,
    pub status: QpStatus,
    pub tracking_error: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryLog {
    pub channels: Vec<String>,
    pub rows: Vec<LogRow>,
}

fn parse_status(s: &str) -> Option<QpStatus> {
    [
        QpStatus::Optimal,
        QpStatus::ClfDropped,
        QpStatus::Infeasible,
    ]
    .into_iter()
    .find(|q| q.as_str() == s)
}

impl TrajectoryLog {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(|r| r.t)
    }

    pub fn header(&self) -> Vec<String> {
        let (n, m) = self.rows.first().map_or((0, 0), |r| (r.x.len(), r.y.len()));
        let mut h = vec!["t".to_string()];
        h.extend((0..n).map(|i| format!("x{i}")));
        h.extend((0..m).map(|i| format!("y{i}")));
        h.extend((0..n).map(|i| format!("xhat{i}")));
        for c in &self.channels {
            h.push(format!("fhat_{c}"));
            h.push(format!("f_{c}"));
            h.push(format!("gamma_{c}"));
        }
        for s in [
            "u",
            "h",
            "h_lifted",
            "psi_h",
            "slack",
            "status",
            "tracking_error",
        ] {
            h.push(s.to_string());
        }
        h
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<(), HarnessError> {
        let log_err = |e: csv::Error| HarnessError::Log(e.to_string());
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.header()).map_err(log_err)?;
        for r in &self.rows {
            let mut rec: Vec<String> = vec![r.t.to_string()];
            rec.extend(r.x.iter().chain(&r.y).chain(&r.x_hat).map(f64::to_string));
            for i in 0..self.channels.len() {
                rec.push(r.f_hat[i].to_string());
                rec.push(r.f_true[i].to_string());
                rec.push(r.gamma[i].to_string());
            }
            rec.extend(
                [r.u, r.h, r.h_lifted, r.psi_h, r.slack]
                    .iter()
                    .map(f64::to_string),
            );
            rec.push(r.status.as_str().to_string());
            rec.push(r.tracking_error.to_string());
            w.write_record(&rec).map_err(log_err)?;
        }
        w.flush().map_err(|e| HarnessError::Log(e.to_string()))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String, HarnessError> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| HarnessError::Log(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        let f = std::fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self, HarnessError> {
        let bad = |m: String| HarnessError::Log(m);
        let mut rd = csv::Reader::from_reader(input);
        let header: Vec<String> = rd
            .headers()
            .map_err(|e| bad(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let count = |prefix: &str| {
            header
                .iter()
                .filter(|h| {
                    h.strip_prefix(prefix)
                        .is_some_and(|s| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit()))
                })
                .count()
        };
        let (n, m) = (count("x"), count("y"));
        let channels: Vec<String> = header
            .iter()
            .filter_map(|h| h.strip_prefix("fhat_").map(str::to_string))
            .collect();
        let mut log = Self {
            channels,
            rows: Vec::new(),
        };
        if header != log.header_for(n, m) {
            return Err(bad(format!(
                "unexpected column layout: {}",
                header.join(",")
            )));
        }
        for (line, rec) in rd.records().enumerate() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let num = |i: usize| -> Result<f64, HarnessError> {
                rec.get(i)
                    .ok_or_else(|| bad(format!("row {line}: missing column {i}")))?
                    .parse::<f64>()
                    .map_err(|e| bad(format!("row {line}, column {}: {e}", header[i])))
            };
            let mut i = 0;
            let mut take = |k: usize| -> Result<Vec<f64>, HarnessError> {
                let v = (i..i + k).map(num).collect::<Result<Vec<_>, _>>()?;
                i += k;
                Ok(v)
            };
            let t = take(1)?[0];
            let x = take(n)?;
            let y = take(m)?;
            let x_hat = take(n)?;
            let (mut f_hat, mut f_true, mut gamma) = (Vec::new(), Vec::new(), Vec::new());
            for _ in 0..log.channels.len() {
                let v = take(3)?;
                f_hat.push(v[0]);
                f_true.push(v[1]);
                gamma.push(v[2]);
            }
            let tail = take(5)?;
            let status_col = i;
            let status = rec
                .get(status_col)
                .and_then(parse_status)
                .ok_or_else(|| bad(format!("row {line}: bad status")))?;
            let tracking_error = num(status_col + 1)?;
            log.rows.push(LogRow {
                t,
                x,
                y,
                x_hat,
                f_hat,
                f_true,
                gamma,
                u: tail[0],
                h: tail[1],
                h_lifted: tail[2],
                psi_h: tail[3],
                slack: tail[4],
                status,
                tracking_error,
            });
        }
        if log.rows.windows(2).any(|w| !(w[1].t > w[0].t)) {
            return Err(bad("time column is not strictly increasing".into()));
        }
        Ok(log)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let f = std::fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(f))
    }

    fn header_for(&self, n: usize, m: usize) -> Vec<String> {
        let probe = TrajectoryLog {
            channels: self.channels.clone(),
            rows: vec![LogRow {
                t: 0.0,
                x: vec![0.0; n],
                y: vec![0.0; m],
                x_hat: vec![0.0; n],
                f_hat: Vec::new(),
                f_true: Vec::new(),
                gamma: Vec::new(),
                u: 0.0,
                h: 0.0,
                h_lifted: 0.0,
                psi_h: 0.0,
                slack: 0.0,
                status: QpStatus::Optimal,
                tracking_error: 0.0,
            }],
        };
        probe.header()
    }
}

/// One row per channel coordinate; channel-level fields repeat on each.
pub fn write_bounds_csv<W: std::io::Write>(
    bounds: &ErrorBoundSet,
    out: W,
) -> Result<(), HarnessError> {
    let err = |e: csv::Error| HarnessError::Log(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "channel",
        "coordinate",
        "period",
        "pole",
        "p_sum",
        "gamma",
        "g_l1",
        "h_l1",
        "lcg_l1",
        "state_bound",
        "derivative_bound",
        "phi",
        "phi_grid_n",
    ])
    .map_err(err)?;
    for c in &bounds.channels {
        for j in 0..c.g_l1.len() {
            w.write_record([
                c.channel.clone(),
                (j + 1).to_string(),
                bounds.period.to_string(),
                c.pole.to_string(),
                c.p_sum.to_string(),
                c.gamma.to_string(),
                c.g_l1[j].to_string(),
                c.h_l1[j].to_string(),
                c.lcg_l1[j].to_string(),
                c.state_bound[j].to_string(),
                c.derivative_bound[j].to_string(),
                bounds.phi.value.to_string(),
                bounds.phi.grid_n.to_string(),
            ])
            .map_err(err)?;
        }
    }
    w.flush().map_err(|e| HarnessError::Log(e.to_string()))?;
    Ok(())
}
