//! Simulated outcome sources for replay and the reference data used by metrics.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{self, stream};
use crate::types::OutcomeKind;

fn default_std() -> f64 {
    0.1
}

/// True outcome distribution of one (policy, task) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroundTruthCell {
    /// Recorded outcomes, resampled uniformly with replacement.
    EmpiricalPool { outcomes: Vec<f64> },
    BernoulliGen { p: f64 },
    /// Normal draws clipped to `[0, 1]`.
    GaussianGen {
        mean: f64,
        #[serde(default = "default_std")]
        std: f64,
    },
}

impl GroundTruthCell {
    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        match self {
            GroundTruthCell::EmpiricalPool { outcomes } => outcomes[rng.random_range(0..outcomes.len())],
            GroundTruthCell::BernoulliGen { p } => {
                if rng.random::<f64>() < *p {
                    1.0
                } else {
                    0.0
                }
            }
            GroundTruthCell::GaussianGen { mean, std } => {
                let z: f64 = rng.sample(StandardNormal);
                (mean + std * z).clamp(0.0, 1.0)
            }
        }
    }

    /// Pool mean or generator mean.
    pub fn true_mean(&self) -> f64 {
        match self {
            GroundTruthCell::EmpiricalPool { outcomes } => outcomes.iter().sum::<f64>() / outcomes.len() as f64,
            GroundTruthCell::BernoulliGen { p } => *p,
            GroundTruthCell::GaussianGen { mean, .. } => *mean,
        }
    }

    fn validate(&self, kind: OutcomeKind) -> std::result::Result<(), String> {
        match self {
            GroundTruthCell::EmpiricalPool { outcomes } => {
                if outcomes.is_empty() {
                    return Err("outcome pool is empty".into());
                }
                kind.validate(outcomes).map_err(|e| e.to_string())
            }
            GroundTruthCell::BernoulliGen { p } => {
                if kind != OutcomeKind::Binary {
                    return Err("Bernoulli generator in a continuous campaign".into());
                }
                if !(0.0..=1.0).contains(p) {
                    return Err(format!("p = {p} outside [0, 1]"));
                }
                Ok(())
            }
            GroundTruthCell::GaussianGen { mean, std } => {
                if kind != OutcomeKind::Continuous {
                    return Err("Gaussian generator in a binary campaign".into());
                }
                if !(*std > 0.0 && std.is_finite() && mean.is_finite()) {
                    return Err(format!("invalid Gaussian generator (mean {mean}, std {std})"));
                }
                Ok(())
            }
        }
    }
}

/// Ground truth for every pair, policy-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthModel {
    pub num_policies: usize,
    pub num_tasks: usize,
    pub cells: Vec<GroundTruthCell>,
}

impl GroundTruthModel {
    /// Builds from a `[policy][task]` grid.
    pub fn from_grid(grid: Vec<Vec<GroundTruthCell>>, kind: OutcomeKind) -> Result<Self> {
        let num_policies = grid.len();
        let num_tasks = grid.first().map_or(0, Vec::len);
        if let Some(row) = grid.iter().find(|r| r.len() != num_tasks) {
            return Err(Error::DimensionMismatch {
                expected: num_tasks,
                found: row.len(),
            });
        }
        let model = Self {
            num_policies,
            num_tasks,
            cells: grid.into_iter().flatten().collect(),
        };
        model.validate(kind)?;
        Ok(model)
    }

    pub fn validate(&self, kind: OutcomeKind) -> Result<()> {
        if self.cells.len() != self.num_policies * self.num_tasks {
            return Err(Error::DimensionMismatch {
                expected: self.num_policies * self.num_tasks,
                found: self.cells.len(),
            });
        }
        for (idx, cell) in self.cells.iter().enumerate() {
            cell.validate(kind).map_err(|msg| {
                Error::InvalidConfig(format!(
                    "ground_truth[{}][{}]: {msg}",
                    idx / self.num_tasks,
                    idx % self.num_tasks
                ))
            })?;
        }
        Ok(())
    }

    pub fn cell(&self, policy: usize, task: usize) -> &GroundTruthCell {
        &self.cells[policy * self.num_tasks + task]
    }

    pub fn true_means(&self) -> Vec<f64> {
        self.cells.iter().map(GroundTruthCell::true_mean).collect()
    }

    /// Reference outcomes: pools as recorded, generators with
    /// `samples_per_pair` seeded draws.
    pub fn reference(&self, samples_per_pair: usize, base_seed: u64) -> Result<Reference> {
        let outcomes = self
            .cells
            .iter()
            .enumerate()
            .map(|(idx, cell)| match cell {
                GroundTruthCell::EmpiricalPool { outcomes } => outcomes.clone(),
                _ => {
                    let mut rng = seed::rng(seed::derive(base_seed, &[stream::REFERENCE, idx as u64]));
                    (0..samples_per_pair).map(|_| cell.sample(&mut rng)).collect()
                }
            })
            .collect();
        Reference::new(self.num_policies, self.num_tasks, outcomes, self.true_means())
    }
}

/// Held-out outcomes and true means for every pair, policy-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub num_policies: usize,
    pub num_tasks: usize,
    pub outcomes: Vec<Vec<f64>>,
    pub true_means: Vec<f64>,
}

impl Reference {
    pub fn new(num_policies: usize, num_tasks: usize, outcomes: Vec<Vec<f64>>, true_means: Vec<f64>) -> Result<Self> {
        let pairs = num_policies * num_tasks;
        let missing = outcomes.len().min(true_means.len());
        if outcomes.len() != pairs || true_means.len() != pairs || outcomes.iter().any(Vec::is_empty) {
            let idx = outcomes.iter().position(Vec::is_empty).unwrap_or(missing);
            return Err(Error::MissingReference {
                policy: idx / num_tasks.max(1),
                task: idx % num_tasks.max(1),
            });
        }
        Ok(Self {
            num_policies,
            num_tasks,
            outcomes,
            true_means,
        })
    }

    /// Groups a dataset by pair; true means are the empirical pair means.
    pub fn from_dataset(dataset: &crate::types::EvalDataset, num_policies: usize, num_tasks: usize) -> Result<Self> {
        let mut outcomes = vec![Vec::new(); num_policies * num_tasks];
        for r in dataset.records() {
            if r.policy_index >= num_policies || r.task_index >= num_tasks {
                return Err(Error::InvalidConfig(format!(
                    "record references pair ({}, {}) outside {num_policies}x{num_tasks}",
                    r.policy_index, r.task_index
                )));
            }
            outcomes[r.policy_index * num_tasks + r.task_index].push(r.outcome);
        }
        let means = outcomes
            .iter()
            .map(|o: &Vec<f64>| if o.is_empty() { f64::NAN } else { o.iter().sum::<f64>() / o.len() as f64 })
            .collect();
        Self::new(num_policies, num_tasks, outcomes, means)
    }

    /// All reference outcomes as a dataset (used to fit learned embeddings).
    pub fn to_dataset(&self, kind: OutcomeKind) -> Result<crate::types::EvalDataset> {
        crate::types::EvalDataset::from_outcomes(
            kind,
            self.outcomes.iter().enumerate().flat_map(|(idx, o)| {
                let (i, j) = (idx / self.num_tasks, idx % self.num_tasks);
                o.iter().map(move |&x| (i, j, x))
            }),
        )
    }

    /// The first `per_pair` outcomes of every pair (all when 0).
    pub fn subsample(&self, per_pair: usize) -> Self {
        let mut out = self.clone();
        if per_pair > 0 {
            out.outcomes.iter_mut().for_each(|o| o.truncate(per_pair));
        }
        out
    }

    pub fn len(&self) -> usize {
        self.outcomes.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_respect_domains() {
        let mut rng = seed::rng(1);
        let g = GroundTruthCell::GaussianGen { mean: 0.95, std: 0.1 };
        let b = GroundTruthCell::BernoulliGen { p: 0.3 };
        let mut hits = 0;
        for _ in 0..2000 {
            let x = g.sample(&mut rng);
            assert!((0.0..=1.0).contains(&x));
            let y = b.sample(&mut rng);
            assert!(y == 0.0 || y == 1.0);
            hits += y as usize;
        }
        assert!((hits as f64 / 2000.0 - 0.3).abs() < 0.04);
    }

    #[test]
    fn pool_sampling_stays_in_pool() {
        let pool = GroundTruthCell::EmpiricalPool {
            outcomes: vec![0.1, 0.4],
        };
        let mut rng = seed::rng(2);
        assert!((0..100).all(|_| [0.1, 0.4].contains(&pool.sample(&mut rng))));
        assert!((pool.true_mean() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn grid_validation() {
        let bad = vec![vec![GroundTruthCell::GaussianGen { mean: 0.5, std: 0.1 }]];
        let err = GroundTruthModel::from_grid(bad, OutcomeKind::Binary).unwrap_err();
        assert!(err.to_string().contains("ground_truth[0][0]"));
        let ragged = vec![
            vec![GroundTruthCell::BernoulliGen { p: 0.5 }],
            vec![],
        ];
        assert!(GroundTruthModel::from_grid(ragged, OutcomeKind::Binary).is_err());
        let json = r#"{"kind":"gaussian_gen","mean":0.4}"#;
        let cell: GroundTruthCell = serde_json::from_str(json).unwrap();
        assert_eq!(cell, GroundTruthCell::GaussianGen { mean: 0.4, std: 0.1 });
    }

    #[test]
    fn reference_is_seeded_and_complete() {
        let gt = GroundTruthModel::from_grid(
            vec![vec![GroundTruthCell::BernoulliGen { p: 0.2 }, GroundTruthCell::EmpiricalPool { outcomes: vec![1.0] }]],
            OutcomeKind::Binary,
        )
        .unwrap();
        let a = gt.reference(5, 9).unwrap();
        assert_eq!(a, gt.reference(5, 9).unwrap());
        assert_eq!(a.outcomes[0].len(), 5);
        assert_eq!(a.outcomes[1], vec![1.0]);
        assert_eq!(a.true_means, vec![0.2, 1.0]);
        assert!(matches!(
            Reference::new(1, 2, vec![vec![1.0], vec![]], vec![1.0, 0.0]),
            Err(Error::MissingReference { policy: 0, task: 1 })
        ));
    }
}
