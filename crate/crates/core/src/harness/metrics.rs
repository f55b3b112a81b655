use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::EpisodeMetrics;
use crate::baselines::EvalRecord;
use crate::error::{Error, Result};

/// Where a metric row came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    /// One training episode.
    Train,
    /// One evaluation trace.
    Eval,
    /// One sweep cell, averaged over the test traces.
    Sweep,
}

/// One line of a metrics CSV. All commands share this schema; `param` and
/// `value` are empty outside sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub run_id: String,
    pub kind: RowKind,
    pub policy: String,
    pub param: String,
    pub value: String,
    pub seed: u64,
    /// Episode index for training rows, trace index for evaluation rows.
    pub index: Option<usize>,
    pub mean_reward: f64,
    pub mean_qoe: f64,
    pub hfqoe: f64,
    pub success_rate: f64,
    pub t_u: f64,
    pub t_e: f64,
    pub t_d: f64,
    pub t_r: f64,
    /// Time-averaged QoE per user, `;`-separated.
    pub user_qoe: String,
}

fn join(values: &[f64]) -> String {
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
}

impl MetricRow {
    pub fn from_episode(run_id: &str, policy: &str, seed: u64, m: &EpisodeMetrics) -> Self {
        let [t_u, t_e, t_d, t_r] = m.mean_delays;
        MetricRow {
            run_id: run_id.to_string(),
            kind: RowKind::Train,
            policy: policy.to_string(),
            param: String::new(),
            value: String::new(),
            seed,
            index: Some(m.episode),
            mean_reward: m.mean_reward,
            mean_qoe: m.mean_qoe,
            hfqoe: m.hfqoe,
            success_rate: m.success_rate,
            t_u,
            t_e,
            t_d,
            t_r,
            user_qoe: join(&m.per_user_qoe),
        }
    }

    pub fn from_eval(run_id: &str, policy: &str, r: &EvalRecord) -> Self {
        let [t_u, t_e, t_d, t_r] = r.mean_delays;
        MetricRow {
            run_id: run_id.to_string(),
            kind: RowKind::Eval,
            policy: policy.to_string(),
            param: String::new(),
            value: String::new(),
            seed: r.seed,
            index: Some(r.trace),
            mean_reward: r.mean_reward,
            mean_qoe: r.mean_qoe,
            hfqoe: r.hfqoe,
            success_rate: r.success_rate,
            t_u,
            t_e,
            t_d,
            t_r,
            user_qoe: join(&r.per_user_qoe),
        }
    }

    /// Averages evaluation records of one `(policy, value, seed)` cell.
    pub fn sweep_cell(
        run_id: &str,
        policy: &str,
        param: &str,
        value: &str,
        seed: u64,
        records: &[&EvalRecord],
    ) -> Self {
        let n = records.len().max(1) as f64;
        let avg = |f: &dyn Fn(&EvalRecord) -> f64| records.iter().map(|r| f(r)).sum::<f64>() / n;
        let users = records.first().map_or(0, |r| r.per_user_qoe.len());
        let per_user: Vec<f64> = (0..users).map(|k| avg(&|r| r.per_user_qoe[k])).collect();
        MetricRow {
            run_id: run_id.to_string(),
            kind: RowKind::Sweep,
            policy: policy.to_string(),
            param: param.to_string(),
            value: value.to_string(),
            seed,
            index: None,
            mean_reward: avg(&|r| r.mean_reward),
            mean_qoe: avg(&|r| r.mean_qoe),
            hfqoe: avg(&|r| r.hfqoe),
            success_rate: avg(&|r| r.success_rate),
            t_u: avg(&|r| r.mean_delays[0]),
            t_e: avg(&|r| r.mean_delays[1]),
            t_d: avg(&|r| r.mean_delays[2]),
            t_r: avg(&|r| r.mean_delays[3]),
            user_qoe: join(&per_user),
        }
    }
}

/// Streams rows into a CSV file with a header line.
pub struct MetricWriter {
    inner: csv::Writer<fs::File>,
    path: std::path::PathBuf,
}

impl MetricWriter {
    /// Creates (truncating) `path`.
    pub fn create(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(MetricWriter { inner: csv::Writer::from_writer(file), path: path.to_path_buf() })
    }

    pub fn write(&mut self, row: &MetricRow) -> Result<()> {
        self.inner.serialize(row).map_err(|e| self.csv_error(e))
    }

    pub fn flush(&mut self) -> Result<()> {
        self.inner.flush().map_err(|e| Error::io(&self.path, e))
    }

    fn csv_error(&self, e: csv::Error) -> Error {
        Error::Csv { path: self.path.clone(), message: e.to_string() }
    }
}

pub fn write_rows(path: &Path, rows: &[MetricRow]) -> Result<()> {
    let mut w = MetricWriter::create(path)?;
    for r in rows {
        w.write(r)?;
    }
    w.flush()
}

pub fn read_rows(path: &Path) -> Result<Vec<MetricRow>> {
    let mut reader =
        csv::Reader::from_path(path).map_err(|e| Error::Csv { path: path.to_path_buf(), message: e.to_string() })?;
    reader
        .deserialize()
        .map(|r| r.map_err(|e| Error::Csv { path: path.to_path_buf(), message: e.to_string() }))
        .collect()
}
