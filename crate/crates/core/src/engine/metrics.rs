//! Per-step evaluation metrics and their CSV form.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CampaignState, Reference};
use crate::error::{Error, Result};
use crate::io::write_atomic;

pub const METRICS_HEADER: [&str; 4] = ["step", "total_cost", "avg_log_likelihood", "l1_mean_error"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: u64,
    pub total_cost: f64,
    pub avg_log_likelihood: f64,
    pub l1_mean_error: f64,
}

/// Average log-likelihood of every reference outcome under the dropout-off
/// prediction of its pair, and the mean absolute error of predicted means.
pub fn compute_metrics(state: &CampaignState, reference: &Reference) -> Result<MetricsRow> {
    if reference.num_policies != state.num_policies() || reference.num_tasks != state.num_tasks() {
        return Err(Error::MissingReference {
            policy: reference.num_policies.min(state.num_policies()),
            task: reference.num_tasks.min(state.num_tasks()),
        });
    }
    let params = state.surrogate().predict_grid(state.table())?;
    let mut ll_sum = 0.0;
    let mut count = 0usize;
    let mut l1 = 0.0;
    for ((p, outcomes), truth) in params.iter().zip(&reference.outcomes).zip(&reference.true_means) {
        ll_sum += outcomes.iter().map(|&x| p.log_likelihood(x)).sum::<f64>();
        count += outcomes.len();
        l1 += (truth - p.mean()).abs();
    }
    Ok(MetricsRow {
        step: state.step(),
        total_cost: state.total_cost(),
        avg_log_likelihood: ll_sum / count as f64,
        l1_mean_error: l1 / params.len() as f64,
    })
}

pub fn write_metrics_csv(rows: &[MetricsRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(METRICS_HEADER)?;
    for r in rows {
        w.write_record([
            r.step.to_string(),
            r.total_cost.to_string(),
            r.avg_log_likelihood.to_string(),
            r.l1_mean_error.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    write_atomic(path, &bytes)
}

/// Reads a metrics CSV, rejecting files whose header differs.
pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_metrics(file).map_err(|e| match e {
        Error::InvalidConfig(msg) => Error::InvalidConfig(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn parse_metrics(input: impl Read) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != METRICS_HEADER {
        return Err(Error::InvalidConfig(format!(
            "unexpected metrics columns {header:?}, expected {METRICS_HEADER:?}"
        )));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
