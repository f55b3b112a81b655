use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::metrics::{read_rows, MetricRow, RowKind};
use crate::error::{Error, Result};

/// Groups with fewer samples than this get a low-confidence flag.
pub const MIN_CONFIDENT_SAMPLES: usize = 3;

pub const METRICS: [&str; 8] = ["mean_reward", "mean_qoe", "hfqoe", "success_rate", "t_u", "t_e", "t_d", "t_r"];

fn metric(row: &MetricRow, name: &str) -> f64 {
    match name {
        "mean_reward" => row.mean_reward,
        "mean_qoe" => row.mean_qoe,
        "hfqoe" => row.hfqoe,
        "success_rate" => row.success_rate,
        "t_u" => row.t_u,
        "t_e" => row.t_e,
        "t_d" => row.t_d,
        _ => row.t_r,
    }
}

/// Sample statistics with a two-sided 95% Student-t interval for the mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricStats {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub std: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub low_confidence: bool,
}

impl MetricStats {
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        let n = samples.len();
        if n == 0 {
            return Err(Error::domain("no samples"));
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let median = if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) };
        let (std, half) = if n > 1 {
            let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let t =
                StudentsT::new(0.0, 1.0, (n - 1) as f64).map_err(|e| Error::domain(e.to_string()))?.inverse_cdf(0.975);
            (var.sqrt(), t * var.sqrt() / (n as f64).sqrt())
        } else {
            (0.0, 0.0)
        };
        Ok(MetricStats {
            n,
            mean,
            median,
            std,
            ci_low: mean - half,
            ci_high: mean + half,
            low_confidence: n < MIN_CONFIDENT_SAMPLES,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub policy: String,
    pub kind: RowKind,
    pub param: String,
    pub value: String,
    pub metrics: BTreeMap<String, MetricStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub sources: Vec<String>,
    pub groups: Vec<GroupSummary>,
}

/// One line of the plot-ready long table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongRow {
    pub policy: String,
    pub kind: RowKind,
    pub param: String,
    pub value: String,
    pub metric: String,
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub std: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub low_confidence: bool,
}

impl Summary {
    pub fn from_rows(sources: Vec<String>, rows: &[MetricRow]) -> Result<Self> {
        let mut groups: BTreeMap<(String, RowKind, String, String), Vec<&MetricRow>> = BTreeMap::new();
        for r in rows {
            groups.entry((r.policy.clone(), r.kind, r.param.clone(), r.value.clone())).or_default().push(r);
        }
        let groups = groups
            .into_iter()
            .map(|((policy, kind, param, value), members)| {
                let metrics = METRICS
                    .iter()
                    .map(|&m| {
                        let samples: Vec<f64> = members.iter().map(|r| metric(r, m)).collect();
                        Ok((m.to_string(), MetricStats::from_samples(&samples)?))
                    })
                    .collect::<Result<_>>()?;
                Ok(GroupSummary { policy, kind, param, value, metrics })
            })
            .collect::<Result<_>>()?;
        Ok(Summary { sources, groups })
    }

    pub fn long_rows(&self) -> Vec<LongRow> {
        self.groups
            .iter()
            .flat_map(|g| {
                g.metrics.iter().map(move |(name, s)| LongRow {
                    policy: g.policy.clone(),
                    kind: g.kind,
                    param: g.param.clone(),
                    value: g.value.clone(),
                    metric: name.clone(),
                    n: s.n,
                    mean: s.mean,
                    median: s.median,
                    std: s.std,
                    ci_low: s.ci_low,
                    ci_high: s.ci_high,
                    low_confidence: s.low_confidence,
                })
            })
            .collect()
    }

    pub fn group(&self, policy: &str, kind: RowKind) -> Option<&GroupSummary> {
        self.groups.iter().find(|g| g.policy == policy && g.kind == kind)
    }
}

/// Aggregates metric CSVs per `(policy, kind, param, value)`.
pub fn export_summary(paths: &[&Path]) -> Result<Summary> {
    if paths.is_empty() {
        return Err(Error::Usage("no metric files given".into()));
    }
    let mut rows = Vec::new();
    for p in paths {
        let mut r = read_rows(p)?;
        if r.is_empty() {
            return Err(Error::Csv { path: p.to_path_buf(), message: "no rows".into() });
        }
        rows.append(&mut r);
    }
    Summary::from_rows(paths.iter().map(|p| p.display().to_string()).collect(), &rows)
}

/// Writes `summary.json` and the long table `summary_long.csv` into `dir`.
pub fn write_summary(summary: &Summary, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let json = dir.join("summary.json");
    fs::write(&json, serde_json::to_string_pretty(summary)?).map_err(|e| Error::io(&json, e))?;
    let long = dir.join("summary_long.csv");
    let csv_err = |e: csv::Error| Error::Csv { path: long.clone(), message: e.to_string() };
    let mut w = csv::Writer::from_path(&long).map_err(csv_err)?;
    for r in summary.long_rows() {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(&long, e))
}

#[cfg(test)]
mod tests {
    use super::super::metrics::write_rows;
    use super::*;

    fn row(policy: &str, seed: u64, reward: f64, success: f64) -> MetricRow {
        MetricRow {
            run_id: "fixture".into(),
            kind: RowKind::Eval,
            policy: policy.into(),
            param: String::new(),
            value: String::new(),
            seed,
            index: Some(0),
            mean_reward: reward,
            mean_qoe: reward / 4.0,
            hfqoe: 0.8,
            success_rate: success,
            t_u: 0.01,
            t_e: 0.0,
            t_d: 0.03,
            t_r: 0.06,
            user_qoe: String::new(),
        }
    }

    #[test]
    fn single_row_equals_row() {
        let s = Summary::from_rows(vec![], &[row("a", 1, 1.25, 0.9)]).unwrap();
        let m = &s.groups[0].metrics["mean_reward"];
        assert_eq!((m.n, m.mean, m.median, m.ci_low, m.ci_high), (1, 1.25, 1.25, 1.25, 1.25));
        assert!(m.low_confidence);
        assert_eq!(s.groups[0].metrics["success_rate"].mean, 0.9);
    }

    #[test]
    fn two_seeds_flagged() {
        let s = Summary::from_rows(vec![], &[row("a", 1, 1.0, 1.0), row("a", 2, 3.0, 1.0)]).unwrap();
        let m = &s.groups[0].metrics["mean_reward"];
        assert_eq!(m.n, 2);
        assert!(m.low_confidence);
        // t(0.975, 1) = tan(0.475 pi); sd = sqrt(2); half width = t * sd / sqrt(2) = t
        let t = (0.475 * std::f64::consts::PI).tan();
        assert!((m.ci_high - (2.0 + t)).abs() < 1e-6 * t);
    }

    #[test]
    fn fixture_hand_means() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        write_rows(&a, &[row("p", 1, 1.0, 1.0), row("q", 1, 10.0, 0.5)]).unwrap();
        write_rows(&b, &[row("p", 2, 2.0, 0.5), row("p", 3, 6.0, 0.0), row("q", 2, 20.0, 1.0)]).unwrap();
        let s = export_summary(&[a.as_path(), b.as_path()]).unwrap();
        let p = &s.group("p", RowKind::Eval).unwrap().metrics;
        assert_eq!(p["mean_reward"].mean, 3.0);
        assert_eq!(p["mean_reward"].median, 2.0);
        assert_eq!(p["success_rate"].mean, 0.5);
        assert!(!p["mean_reward"].low_confidence);
        let sd = ((4.0 + 1.0 + 9.0) / 2.0f64).sqrt();
        assert!((p["mean_reward"].std - sd).abs() < 1e-12);
        // t(0.975, 2) = 4.302652729...
        assert!((p["mean_reward"].ci_high - (3.0 + 4.302652729749464 * sd / 3f64.sqrt())).abs() < 1e-9);
        let q = &s.group("q", RowKind::Eval).unwrap().metrics;
        assert_eq!(q["mean_reward"].mean, 15.0);
        assert_eq!(q["mean_reward"].median, 15.0);
        assert_eq!(s.long_rows().len(), 2 * METRICS.len());
        write_summary(&s, dir.path()).unwrap();
        let back: Summary =
            serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn empty_and_malformed_inputs() {
        assert!(export_summary(&[]).is_err());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        fs::write(&p, "not,a,metrics,file\n1,2,3,4\n").unwrap();
        assert!(matches!(export_summary(&[p.as_path()]), Err(Error::Csv { .. })));
    }
}
