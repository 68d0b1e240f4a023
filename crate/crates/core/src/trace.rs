//! Per-iteration run records and their CSV form.

use std::fmt::Write as _;
use std::path::Path;

use crate::{Error, Result};

/// One row per completed outer iteration (row `t = 0` is the initial state).
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: usize,
    /// Consensus rounds spent in this iteration.
    pub consensus_rounds: u32,
    pub mean_error: f64,
    pub max_error: f64,
    /// Mean over nodes of `||Q_c - Q_i||_F` against the lockstep centralized run.
    pub mean_drift: f64,
    /// Cumulative sends per node.
    pub p2p: Vec<u64>,
    pub simulated_seconds: f64,
    pub wall_seconds: f64,
}

impl TraceRow {
    pub fn p2p_mean(&self) -> f64 {
        if self.p2p.is_empty() {
            0.0
        } else {
            self.p2p.iter().sum::<u64>() as f64 / self.p2p.len() as f64
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunTrace {
    pub rows: Vec<TraceRow>,
    /// Max over nodes of `||Q_c - Q_i||_F`, aligned with `rows`.
    pub max_drift: Vec<f64>,
}

pub const CSV_HEADER: &str =
    "t,consensus_rounds,mean_error,max_error,mean_drift,p2p_mean,p2p_per_node,simulated_seconds,wall_seconds";

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

impl RunTrace {
    pub fn push(&mut self, row: TraceRow, max_drift: f64) {
        self.rows.push(row);
        self.max_drift.push(max_drift);
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    pub fn final_p2p(&self) -> Vec<u64> {
        self.last().map(|r| r.p2p.clone()).unwrap_or_default()
    }

    pub fn total_rounds(&self) -> u64 {
        self.rows.iter().map(|r| u64::from(r.consensus_rounds)).sum()
    }

    /// CSV text. Wall-clock times are written as zero unless `include_wall`,
    /// so reruns produce identical bytes.
    pub fn to_csv(&self, include_wall: bool) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            let per_node: Vec<String> = row.p2p.iter().map(u64::to_string).collect();
            let wall = if include_wall { row.wall_seconds } else { 0.0 };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                row.t,
                row.consensus_rounds,
                fmt_f64(row.mean_error),
                fmt_f64(row.max_error),
                fmt_f64(row.mean_drift),
                fmt_f64(row.p2p_mean()),
                per_node.join(";"),
                fmt_f64(row.simulated_seconds),
                fmt_f64(wall),
            );
        }
        out
    }

    pub fn save_csv(&self, path: impl AsRef<Path>, include_wall: bool) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv(include_wall)).map_err(|e| Error::io(path, e))
    }

    /// Parses the output of [`RunTrace::to_csv`]. `max_drift` is not stored
    /// in the CSV and comes back empty.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(text.as_bytes());
        let mut trace = RunTrace::default();
        for (k, record) in reader.records().enumerate() {
            let line = k + 2;
            let record = record.map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?;
            if record.len() != 9 {
                return Err(Error::RaggedRows {
                    line,
                    expected: 9,
                    found: record.len(),
                });
            }
            let bad = |what: &str| Error::Parse {
                line,
                message: format!("bad {what}"),
            };
            let float = |i: usize, what: &str| record[i].parse::<f64>().map_err(|_| bad(what));
            let p2p = if record[6].is_empty() {
                Vec::new()
            } else {
                record[6]
                    .split(';')
                    .map(|s| s.parse::<u64>().map_err(|_| bad("p2p_per_node")))
                    .collect::<Result<_>>()?
            };
            trace.rows.push(TraceRow {
                t: record[0].parse().map_err(|_| bad("t"))?,
                consensus_rounds: record[1].parse().map_err(|_| bad("consensus_rounds"))?,
                mean_error: float(2, "mean_error")?,
                max_error: float(3, "max_error")?,
                mean_drift: float(4, "mean_drift")?,
                p2p,
                simulated_seconds: float(7, "simulated_seconds")?,
                wall_seconds: float(8, "wall_seconds")?,
            });
        }
        Ok(trace)
    }
}
