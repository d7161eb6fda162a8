//! Acquisition: BALD expected information gain from MC-dropout parameter samples,
//! the multiplicative switch-cost discount, and epsilon-greedy selection.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{binary_entropy, binned_entropy, DistributionParams, DEFAULT_BINS};
use crate::error::{Error, Result};
use crate::types::OutcomeKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Random,
    Eig,
    CostAwareEig,
    RandomTask,
    TaskEig,
    CostAwareTaskEig,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::Random,
        Strategy::Eig,
        Strategy::CostAwareEig,
        Strategy::RandomTask,
        Strategy::TaskEig,
        Strategy::CostAwareTaskEig,
    ];

    /// Task strategies select a task and run every policy on it.
    pub fn is_task_strategy(self) -> bool {
        matches!(self, Strategy::RandomTask | Strategy::TaskEig | Strategy::CostAwareTaskEig)
    }

    pub fn uses_eig(self) -> bool {
        !matches!(self, Strategy::Random | Strategy::RandomTask)
    }

    pub fn is_cost_aware(self) -> bool {
        matches!(self, Strategy::CostAwareEig | Strategy::CostAwareTaskEig)
    }

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::Eig => "eig",
            Strategy::CostAwareEig => "cost_eig",
            Strategy::RandomTask => "random_task",
            Strategy::TaskEig => "task_eig",
            Strategy::CostAwareTaskEig => "cost_task_eig",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Ok(match key.as_str() {
            "random" => Strategy::Random,
            "eig" => Strategy::Eig,
            "cost_eig" | "cost_aware_eig" => Strategy::CostAwareEig,
            "random_task" => Strategy::RandomTask,
            "task_eig" => Strategy::TaskEig,
            "cost_task_eig" | "cost_aware_task_eig" => Strategy::CostAwareTaskEig,
            _ => return Err(Error::InvalidConfig(format!("unknown strategy '{s}'"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcquisitionConfig {
    pub strategy: Strategy,
    /// Cost sensitivity of the switch-cost discount.
    pub lambda: f64,
    pub epsilon: f64,
    pub mc_samples: usize,
    pub n_bins: usize,
    pub trials_per_query: usize,
    pub seed: u64,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::CostAwareEig,
            lambda: 1.0,
            epsilon: 0.1,
            mc_samples: 10,
            n_bins: DEFAULT_BINS,
            trials_per_query: 3,
            seed: 0,
        }
    }
}

impl AcquisitionConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad(format!("epsilon must lie in [0, 1], got {}", self.epsilon));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be finite and non-negative, got {}", self.lambda));
        }
        if self.strategy.uses_eig() && self.mc_samples < 2 {
            return bad(format!("EIG strategies need at least 2 MC samples, got {}", self.mc_samples));
        }
        if self.n_bins < 2 {
            return bad(format!("n_bins must be at least 2, got {}", self.n_bins));
        }
        if self.trials_per_query == 0 {
            return bad("trials_per_query must be at least 1".into());
        }
        Ok(())
    }
}

/// Information gain split into its two entropy terms (nats).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigBreakdown {
    pub eig: f64,
    pub marginal_entropy: f64,
    pub conditional_entropy: f64,
}

/// BALD information gain of a set of parameter samples for one pair.
///
/// Binary outcomes use the closed-form two-point entropy; continuous outcomes
/// bin each sample over `[0, 1]`. Identical samples give exactly zero.
pub fn eig(samples: &[DistributionParams], kind: OutcomeKind, n_bins: usize) -> Result<EigBreakdown> {
    if samples.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: samples.len(),
        });
    }
    let binary = kind == OutcomeKind::Binary;
    if samples.iter().any(|s| s.is_bernoulli() != binary) {
        return Err(Error::MixedVariants);
    }
    let s = samples.len() as f64;

    let (marginal, conditional) = if binary {
        let ps: Vec<f64> = samples
            .iter()
            .map(|d| match d {
                DistributionParams::Bernoulli { p } => *p,
                _ => unreachable!("variants checked above"),
            })
            .collect();
        let p_bar = ps.iter().sum::<f64>() / s;
        let cond = ps.iter().map(|&p| binary_entropy(p)).sum::<f64>() / s;
        (binary_entropy(p_bar), cond)
    } else {
        let masses = samples
            .iter()
            .map(|d| d.binned_masses(n_bins))
            .collect::<Result<Vec<_>>>()?;
        let mut mean = vec![0.0; n_bins];
        for m in &masses {
            mean.iter_mut().zip(m).for_each(|(a, b)| *a += b / s);
        }
        let cond = masses.iter().map(|m| binned_entropy(m)).sum::<f64>() / s;
        (binned_entropy(&mean), cond)
    };

    let eig = if samples.iter().all(|d| d == &samples[0]) {
        0.0
    } else {
        (marginal - conditional).max(0.0)
    };
    Ok(EigBreakdown {
        eig,
        marginal_entropy: marginal,
        conditional_entropy: conditional,
    })
}

/// Information gain discounted by the cost of switching to the pair's task.
pub fn cost_aware_score(eig_value: f64, c_switch: f64, lambda: f64) -> f64 {
    eig_value / (lambda * c_switch + 1.0)
}

/// Scores for every pair (policy-major, `i * num_tasks + j`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreGrid {
    pub strategy: Strategy,
    pub num_policies: usize,
    pub num_tasks: usize,
    /// Per-pair acquisition scores.
    pub scores: Vec<f64>,
    /// Per-task scores; used for selection by task strategies.
    pub task_scores: Vec<f64>,
    pub eig: Vec<f64>,
    pub marginal_entropy: Vec<f64>,
    pub conditional_entropy: Vec<f64>,
}

impl ScoreGrid {
    pub fn score(&self, policy: usize, task: usize) -> f64 {
        self.scores[policy * self.num_tasks + task]
    }

    pub fn eig_at(&self, policy: usize, task: usize) -> f64 {
        self.eig[policy * self.num_tasks + task]
    }

    /// Builds a grid directly from pair scores, deriving task scores by column sums.
    pub fn from_scores(strategy: Strategy, num_policies: usize, num_tasks: usize, scores: Vec<f64>) -> Self {
        assert_eq!(scores.len(), num_policies * num_tasks, "score count");
        let task_scores = column_sums(&scores, num_policies, num_tasks);
        let zeros = vec![0.0; scores.len()];
        Self {
            strategy,
            num_policies,
            num_tasks,
            scores,
            task_scores,
            eig: zeros.clone(),
            marginal_entropy: zeros.clone(),
            conditional_entropy: zeros,
        }
    }
}

fn column_sums(values: &[f64], m: usize, n: usize) -> Vec<f64> {
    (0..n).map(|j| (0..m).map(|i| values[i * n + j]).sum()).collect()
}

/// Builds the score grid for `cfg.strategy`.
///
/// `samples` holds MC samples per pair (policy-major) and may be empty for the
/// random strategies. `switch_costs[j]` is the cost of moving from the current
/// task to task `j`.
pub fn score_grid(
    samples: &[Vec<DistributionParams>],
    num_policies: usize,
    num_tasks: usize,
    kind: OutcomeKind,
    cfg: &AcquisitionConfig,
    switch_costs: &[f64],
) -> Result<ScoreGrid> {
    let pairs = num_policies * num_tasks;
    if switch_costs.len() != num_tasks {
        return Err(Error::DimensionMismatch {
            expected: num_tasks,
            found: switch_costs.len(),
        });
    }
    let strategy = cfg.strategy;
    if !strategy.uses_eig() {
        let mut grid = ScoreGrid::from_scores(strategy, num_policies, num_tasks, vec![1.0 / pairs as f64; pairs]);
        if strategy == Strategy::RandomTask {
            grid.task_scores = vec![1.0 / num_tasks as f64; num_tasks];
        }
        return Ok(grid);
    }

    let mut eigs = Vec::with_capacity(pairs);
    let mut marginal = Vec::with_capacity(pairs);
    let mut conditional = Vec::with_capacity(pairs);
    for idx in 0..pairs {
        let pair_samples = samples.get(idx).filter(|s| !s.is_empty()).ok_or(Error::MissingSamples {
            policy: idx / num_tasks,
            task: idx % num_tasks,
        })?;
        let b = eig(pair_samples, kind, cfg.n_bins)?;
        eigs.push(b.eig);
        marginal.push(b.marginal_entropy);
        conditional.push(b.conditional_entropy);
    }
    let scores: Vec<f64> = if strategy.is_cost_aware() {
        eigs.iter()
            .enumerate()
            .map(|(idx, &e)| cost_aware_score(e, switch_costs[idx % num_tasks], cfg.lambda))
            .collect()
    } else {
        eigs.clone()
    };
    let task_scores = column_sums(&scores, num_policies, num_tasks);
    Ok(ScoreGrid {
        strategy,
        num_policies,
        num_tasks,
        scores,
        task_scores,
        eig: eigs,
        marginal_entropy: marginal,
        conditional_entropy: conditional,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Selection {
    Pair { policy: usize, task: usize },
    Task { task: usize },
}

impl Selection {
    pub fn task(self) -> usize {
        match self {
            Selection::Pair { task, .. } | Selection::Task { task } => task,
        }
    }
}

/// Index of a maximum of `values`, ties broken uniformly with `rng`.
fn argmax_uniform_ties(values: &[f64], rng: &mut impl Rng) -> usize {
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ties: Vec<usize> = values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v == best)
        .map(|(i, _)| i)
        .collect();
    if ties.len() == 1 {
        ties[0]
    } else {
        ties[rng.random_range(0..ties.len())]
    }
}

/// Epsilon-greedy choice over the strategy's selection space.
pub fn select_next(grid: &ScoreGrid, epsilon: f64, rng: &mut impl Rng) -> Selection {
    let explore = rng.random::<f64>() < epsilon;
    if grid.strategy.is_task_strategy() {
        let task = if explore {
            rng.random_range(0..grid.num_tasks)
        } else {
            argmax_uniform_ties(&grid.task_scores, rng)
        };
        Selection::Task { task }
    } else {
        let idx = if explore {
            rng.random_range(0..grid.scores.len())
        } else {
            argmax_uniform_ties(&grid.scores, rng)
        };
        Selection::Pair {
            policy: idx / grid.num_tasks,
            task: idx % grid.num_tasks,
        }
    }
}
