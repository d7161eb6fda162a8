//! Aggregation of metric curves across seeds.
//!
//! Runs are compared on cost, not step: each run's metric is linearly
//! interpolated against `total_cost` onto a grid shared by all seeds of a
//! strategy, and the seeds are summarized as a mean with a min/max envelope.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::engine::MetricsRow;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    AvgLogLikelihood,
    L1MeanError,
}

impl Metric {
    pub const ALL: [Metric; 2] = [Metric::AvgLogLikelihood, Metric::L1MeanError];

    pub fn name(self) -> &'static str {
        match self {
            Metric::AvgLogLikelihood => "avg_log_likelihood",
            Metric::L1MeanError => "l1_mean_error",
        }
    }

    pub fn of(self, row: &MetricsRow) -> f64 {
        match self {
            Metric::AvgLogLikelihood => row.avg_log_likelihood,
            Metric::L1MeanError => row.l1_mean_error,
        }
    }
}

/// One metrics curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Run {
    pub strategy: String,
    pub seed: u64,
    pub rows: Vec<MetricsRow>,
}

/// Mean and envelope of one metric for one strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub strategy: String,
    pub metric: Metric,
    pub seeds: Vec<u64>,
    pub cost: Vec<f64>,
    pub mean: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

/// Metric at `cost` by linear interpolation on `total_cost`. Outside the
/// run's cost range the value is `None`. Where several rows share a cost the
/// last one counts.
pub fn value_at(rows: &[MetricsRow], metric: Metric, cost: f64) -> Option<f64> {
    let first = rows.first()?;
    let last = rows.last()?;
    if cost < first.total_cost || cost > last.total_cost {
        return None;
    }
    // First row with total_cost > cost; its predecessor is at or below cost.
    let hi = rows.partition_point(|r| r.total_cost <= cost);
    if hi == rows.len() {
        return Some(metric.of(last));
    }
    let (a, b) = (&rows[hi - 1], &rows[hi]);
    if a.total_cost == cost {
        return Some(metric.of(a));
    }
    let t = (cost - a.total_cost) / (b.total_cost - a.total_cost);
    Some(metric.of(a) + t * (metric.of(b) - metric.of(a)))
}

/// Every cost observed in any run, restricted to the range all runs cover.
pub fn common_grid(runs: &[&[MetricsRow]]) -> Vec<f64> {
    let lo = runs.iter().filter_map(|r| r.first()).map(|r| r.total_cost).fold(f64::NEG_INFINITY, f64::max);
    let hi = runs.iter().filter_map(|r| r.last()).map(|r| r.total_cost).fold(f64::INFINITY, f64::min);
    let mut grid: Vec<f64> = runs
        .iter()
        .flat_map(|r| r.iter().map(|row| row.total_cost))
        .filter(|c| *c >= lo && *c <= hi)
        .collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

fn check_rows(run: &Run) -> Result<()> {
    if run.rows.is_empty() {
        return Err(Error::InvalidConfig(format!("run {} seed {} has no rows", run.strategy, run.seed)));
    }
    if run.rows.windows(2).any(|w| w[1].total_cost < w[0].total_cost) {
        return Err(Error::InvalidConfig(format!(
            "run {} seed {}: total_cost decreases",
            run.strategy, run.seed
        )));
    }
    Ok(())
}

/// Per-strategy, per-metric mean and min/max envelope over seeds.
pub fn aggregate(runs: &[Run]) -> Result<Vec<Curve>> {
    let mut by_strategy: BTreeMap<&str, Vec<&Run>> = BTreeMap::new();
    for run in runs {
        check_rows(run)?;
        by_strategy.entry(run.strategy.as_str()).or_default().push(run);
    }
    let mut curves = Vec::new();
    for (strategy, group) in by_strategy {
        let rows: Vec<&[MetricsRow]> = group.iter().map(|r| r.rows.as_slice()).collect();
        let grid = common_grid(&rows);
        for metric in Metric::ALL {
            let mut curve = Curve {
                strategy: strategy.to_owned(),
                metric,
                seeds: group.iter().map(|r| r.seed).collect(),
                cost: grid.clone(),
                mean: Vec::with_capacity(grid.len()),
                min: Vec::with_capacity(grid.len()),
                max: Vec::with_capacity(grid.len()),
            };
            for &c in &grid {
                let values: Vec<f64> = rows
                    .iter()
                    .map(|r| value_at(r, metric, c).expect("grid lies inside every run"))
                    .collect();
                curve.mean.push(values.iter().sum::<f64>() / values.len() as f64);
                curve.min.push(values.iter().copied().fold(f64::INFINITY, f64::min));
                curve.max.push(values.iter().copied().fold(f64::NEG_INFINITY, f64::max));
            }
            curves.push(curve);
        }
    }
    Ok(curves)
}

/// Long-format CSV: one line per (strategy, metric, cost).
pub fn curves_csv(curves: &[Curve]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["strategy", "metric", "cost", "mean", "min", "max", "seeds"])?;
    for c in curves {
        for k in 0..c.cost.len() {
            w.write_record([
                c.strategy.clone(),
                c.metric.name().to_owned(),
                c.cost[k].to_string(),
                c.mean[k].to_string(),
                c.min[k].to_string(),
                c.max[k].to_string(),
                c.seeds.len().to_string(),
            ])?;
        }
    }
    w.into_inner().map_err(|e| Error::InvalidConfig(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(points: &[(f64, f64)]) -> Vec<MetricsRow> {
        points
            .iter()
            .enumerate()
            .map(|(k, &(c, v))| MetricsRow {
                step: k as u64,
                total_cost: c,
                avg_log_likelihood: v,
                l1_mean_error: -v,
            })
            .collect()
    }

    fn run(seed: u64, points: &[(f64, f64)]) -> Run {
        Run {
            strategy: "random_task".into(),
            seed,
            rows: rows(points),
        }
    }

    #[test]
    fn single_run_envelope_is_the_curve() {
        let r = run(0, &[(1.0, 0.5), (2.0, 0.7), (4.0, 0.1)]);
        let curves = aggregate(std::slice::from_ref(&r)).unwrap();
        let ll = &curves[0];
        assert_eq!(ll.metric, Metric::AvgLogLikelihood);
        assert_eq!(ll.cost, vec![1.0, 2.0, 4.0]);
        assert_eq!(ll.mean, vec![0.5, 0.7, 0.1]);
        assert_eq!(ll.min, ll.mean);
        assert_eq!(ll.max, ll.mean);
        assert_eq!(curves[1].mean, vec![-0.5, -0.7, -0.1]);
    }

    #[test]
    fn constant_seeds_have_zero_width() {
        let runs: Vec<Run> = (0..3).map(|s| run(s, &[(0.0, 0.4), (1.5 + s as f64, 0.4), (9.0, 0.4)])).collect();
        let c = &aggregate(&runs).unwrap()[0];
        assert!(c.mean.iter().all(|&m| (m - 0.4).abs() < 1e-15));
        assert_eq!(c.min, c.max);
    }

    #[test]
    fn two_seeds_interpolate_on_the_shared_grid() {
        // Seed A: costs [0,1,2] values [0,1,2]; seed B: costs [0,2,4] values [0,4,8].
        let a = run(0, &[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)]);
        let b = run(1, &[(0.0, 0.0), (2.0, 4.0), (4.0, 8.0)]);
        let c = &aggregate(&[a, b]).unwrap()[0];
        assert_eq!(c.cost, vec![0.0, 1.0, 2.0]);
        // At cost 1, B is halfway between 0 and 4.
        assert_eq!(c.mean, vec![0.0, 1.5, 3.0]);
        assert_eq!(c.min, vec![0.0, 1.0, 2.0]);
        assert_eq!(c.max, vec![0.0, 2.0, 4.0]);
    }

    #[test]
    fn value_at_handles_edges_and_ties() {
        let r = rows(&[(1.0, 10.0), (2.0, 20.0), (2.0, 30.0), (4.0, 50.0)]);
        assert_eq!(value_at(&r, Metric::AvgLogLikelihood, 0.5), None);
        assert_eq!(value_at(&r, Metric::AvgLogLikelihood, 1.0), Some(10.0));
        assert_eq!(value_at(&r, Metric::AvgLogLikelihood, 2.0), Some(30.0));
        assert_eq!(value_at(&r, Metric::AvgLogLikelihood, 3.0), Some(40.0));
        assert_eq!(value_at(&r, Metric::AvgLogLikelihood, 4.0), Some(50.0));
        assert_eq!(value_at(&r, Metric::AvgLogLikelihood, 4.5), None);
    }

    #[test]
    fn strategies_are_grouped_and_bad_runs_rejected() {
        let mut other = run(0, &[(0.0, 1.0), (3.0, 1.0)]);
        other.strategy = "cost_eig".into();
        let curves = aggregate(&[run(0, &[(0.0, 0.0), (1.0, 1.0)]), other]).unwrap();
        assert_eq!(curves.len(), 4);
        assert_eq!(curves[0].strategy, "cost_eig");
        assert!(aggregate(&[run(0, &[])]).is_err());
        assert!(aggregate(&[run(0, &[(2.0, 0.0), (1.0, 0.0)])]).is_err());
        let csv = String::from_utf8(curves_csv(&curves).unwrap()).unwrap();
        assert!(csv.starts_with("strategy,metric,cost,mean,min,max,seeds\n"));
        assert_eq!(csv.lines().count(), 1 + 2 * 2 + 2 * 2);
    }
}
