//! Metric records and their append-only JSONL/CSV sinks.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarMetrics {
    pub m2_theta: f64,
    pub m2_grad: f64,
    pub eta: f64,
    /// Amos decay factors and L2 strength, averaged over the slot shape.
    pub mean_c: Option<f64>,
    pub mean_d: Option<f64>,
    pub mean_gamma: Option<f64>,
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    /// Number of completed optimizer steps.
    pub step: u64,
    pub train_loss: f64,
    pub eval_loss: f64,
    pub vars: BTreeMap<String, VarMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_s: Option<f64>,
}

const VAR_FIELDS: [&str; 7] = ["m2_theta", "m2_grad", "eta", "mean_c", "mean_d", "mean_gamma", "ratio"];

fn csv_header(vars: &[String]) -> Vec<String> {
    let mut cols = vec!["step".to_string(), "train_loss".into(), "eval_loss".into()];
    for v in vars {
        for f in VAR_FIELDS {
            cols.push(format!("{v}:{f}"));
        }
    }
    cols.push("wall_clock_s".into());
    cols
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn csv_row(r: &MetricRecord, vars: &[String]) -> Vec<String> {
    let mut row = vec![r.step.to_string(), r.train_loss.to_string(), r.eval_loss.to_string()];
    for v in vars {
        match r.vars.get(v) {
            Some(m) => row.extend([
                m.m2_theta.to_string(),
                m.m2_grad.to_string(),
                m.eta.to_string(),
                opt(m.mean_c),
                opt(m.mean_d),
                opt(m.mean_gamma),
                opt(m.ratio),
            ]),
            None => row.extend(std::iter::repeat_n(String::new(), VAR_FIELDS.len())),
        }
    }
    row.push(opt(r.wall_clock_s));
    row
}

/// Appends records to `metrics.jsonl` and `metrics.csv` in a directory.
pub struct MetricsSink {
    jsonl: File,
    csv: csv::Writer<File>,
    vars: Vec<String>,
}

impl MetricsSink {
    pub fn jsonl_path(dir: &Path) -> PathBuf {
        dir.join("metrics.jsonl")
    }

    pub fn csv_path(dir: &Path) -> PathBuf {
        dir.join("metrics.csv")
    }

    /// Opens both files for appending; `truncate` starts them afresh.
    pub fn open(dir: &Path, vars: Vec<String>, truncate: bool) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let open = |p: PathBuf| -> Result<File> {
            let mut o = OpenOptions::new();
            o.create(true);
            if truncate {
                o.write(true).truncate(true);
            } else {
                o.append(true);
            }
            o.open(&p).with_context(|| format!("opening {}", p.display()))
        };
        let csv_path = Self::csv_path(dir);
        let jsonl = open(Self::jsonl_path(dir))?;
        let csv_file = open(csv_path.clone())?;
        let fresh = csv_file.metadata()?.len() == 0;
        let mut csv = csv::WriterBuilder::new().has_headers(false).from_writer(csv_file);
        if fresh {
            csv.write_record(csv_header(&vars))?;
            csv.flush()?;
        }
        Ok(Self { jsonl, csv, vars })
    }

    pub fn write(&mut self, record: &MetricRecord) -> Result<()> {
        let line = serde_json::to_string(record)?;
        writeln!(self.jsonl, "{line}")?;
        self.jsonl.flush()?;
        self.csv.write_record(csv_row(record, &self.vars))?;
        self.csv.flush()?;
        Ok(())
    }
}

pub fn read_jsonl(path: &Path) -> Result<Vec<MetricRecord>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    BufReader::new(f)
        .lines()
        .filter(|l| l.as_ref().map(|s| !s.trim().is_empty()).unwrap_or(true))
        .map(|l| Ok(serde_json::from_str(&l?)?))
        .collect()
}
