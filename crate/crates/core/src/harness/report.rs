use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{format_epsilon, Pipeline};
use crate::error::{Error, Result};

/// One `(ε, k, trial)` cell. Column order is the CSV layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub dataset: String,
    pub pipeline: Pipeline,
    pub epsilon: f64,
    pub k: usize,
    pub trial: usize,
    pub seed: u64,
    pub accuracy: f64,
    /// True positives over all queries.
    pub tp_rate: f64,
    /// True negatives over all queries.
    pub tn_rate: f64,
    pub unparsed: usize,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub dataset: String,
    pub epsilon: f64,
    pub trial: usize,
    pub model: String,
    pub accuracy: f64,
}

/// Mean and population standard deviation over trials of one `(ε, k)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub epsilon: f64,
    pub k: usize,
    pub trials: usize,
    pub mean: f64,
    pub std: f64,
    pub mean_tp: f64,
    pub mean_tn: f64,
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Cells in first-seen order of `rows`.
pub fn summarize(rows: &[TrialRow]) -> Vec<CellSummary> {
    let mut order: Vec<(u64, usize)> = Vec::new();
    let mut cells: BTreeMap<(u64, usize), Vec<&TrialRow>> = BTreeMap::new();
    for r in rows {
        let key = (r.epsilon.to_bits(), r.k);
        if !cells.contains_key(&key) {
            order.push(key);
        }
        cells.entry(key).or_default().push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let rs = &cells[&key];
            let acc: Vec<f64> = rs.iter().map(|r| r.accuracy).collect();
            let (mean, std) = mean_std(&acc);
            let tp: Vec<f64> = rs.iter().map(|r| r.tp_rate).collect();
            let tn: Vec<f64> = rs.iter().map(|r| r.tn_rate).collect();
            CellSummary {
                epsilon: f64::from_bits(key.0),
                k: key.1,
                trials: rs.len(),
                mean,
                std,
                mean_tp: mean_std(&tp).0,
                mean_tn: mean_std(&tn).0,
            }
        })
        .collect()
}

/// Aligned text table: one row per `k`, one column per `ε`, cells `mean ± std`.
pub fn render_table(title: &str, summaries: &[CellSummary]) -> String {
    let mut eps: Vec<f64> = Vec::new();
    let mut ks: Vec<usize> = Vec::new();
    for s in summaries {
        if !eps.iter().any(|e| e.to_bits() == s.epsilon.to_bits()) {
            eps.push(s.epsilon);
        }
        if !ks.contains(&s.k) {
            ks.push(s.k);
        }
    }
    let cell = |e: f64, k: usize| {
        summaries
            .iter()
            .find(|s| s.epsilon.to_bits() == e.to_bits() && s.k == k)
            .map(|s| format!("{:.3} ± {:.3}", s.mean, s.std))
            .unwrap_or_else(|| "-".into())
    };
    let mut grid: Vec<Vec<String>> = vec![std::iter::once("k \\ ε".to_string())
        .chain(eps.iter().map(|&e| format_epsilon(e)))
        .collect()];
    for &k in &ks {
        grid.push(
            std::iter::once(k.to_string())
                .chain(eps.iter().map(|&e| cell(e, k)))
                .collect(),
        );
    }
    let widths: Vec<usize> = (0..grid[0].len())
        .map(|c| grid.iter().map(|row| row[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    let _ = writeln!(out, "{title}");
    for row in &grid {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (text, &w))| {
                let pad = w - text.chars().count();
                if i == 0 {
                    format!("{text}{}", " ".repeat(pad))
                } else {
                    format!("{}{text}", " ".repeat(pad))
                }
            })
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
    }
    out
}

fn write_rows<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::InvalidArgument(format!("{other:?}")),
    })?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_trials_csv(rows: &[TrialRow], path: &Path) -> Result<()> {
    if rows.is_empty() {
        std::fs::write(
            path,
            "dataset,pipeline,epsilon,k,trial,seed,accuracy,tp_rate,tn_rate,unparsed,wall_ms\n",
        )
        .map_err(|e| Error::io(path, e))
    } else {
        write_rows(rows, path)
    }
}

pub fn write_baselines_csv(rows: &[BaselineRow], path: &Path) -> Result<()> {
    write_rows(rows, path)
}

pub fn read_trials_csv(path: &Path) -> Result<Vec<TrialRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::InvalidArgument(format!("{other:?}")),
    })?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
