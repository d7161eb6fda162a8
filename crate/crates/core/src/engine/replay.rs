//! Offline replay: the query loop driven by simulated outcomes.

use serde::{Deserialize, Serialize};

use super::{compute_metrics, CampaignConfig, CampaignState, GroundTruthModel, MetricsRow, Reference, Suggestion};
use crate::error::{Error, Result};
use crate::seed::{self, stream};
use crate::types::{OutcomeKind, PolicyRef, TaskSpec};

/// When a replay stops.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    /// Query steps after the warm start.
    Steps(u64),
    /// Trials in the dataset, warm start included. Stops at the first step
    /// reaching the count.
    Trials(usize),
    /// Ledger total. Stops at the first step reaching the amount.
    Cost(f64),
}

impl Budget {
    fn exhausted(self, state: &CampaignState) -> bool {
        match self {
            Budget::Steps(n) => state.step() >= n,
            Budget::Trials(n) => state.dataset().len() >= n,
            Budget::Cost(c) => state.total_cost() >= c,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReplayOutput {
    /// One row after the warm start, then one per query step.
    pub rows: Vec<MetricsRow>,
    pub state: CampaignState,
}

/// Seeded outcomes for a suggestion.
pub fn simulate_outcomes(ground_truth: &GroundTruthModel, suggestion: &Suggestion, campaign_seed: u64) -> Vec<f64> {
    let mut rng = seed::rng(seed::derive(campaign_seed, &[stream::OUTCOMES, suggestion.step]));
    suggestion
        .trials
        .iter()
        .map(|t| ground_truth.cell(t.policy, t.task).sample(&mut rng))
        .collect()
}

/// Runs the warm start and then query steps until `budget` is met, recording
/// metrics against `reference` after every retraining.
pub fn replay(
    policies: Vec<PolicyRef>,
    tasks: Vec<TaskSpec>,
    outcome_kind: OutcomeKind,
    ground_truth: &GroundTruthModel,
    reference: &Reference,
    config: &CampaignConfig,
    budget: Budget,
) -> Result<ReplayOutput> {
    if ground_truth.num_policies != policies.len() || ground_truth.num_tasks != tasks.len() {
        return Err(Error::DimensionMismatch {
            expected: policies.len() * tasks.len(),
            found: ground_truth.cells.len(),
        });
    }
    ground_truth.validate(outcome_kind)?;
    if let Budget::Cost(c) = budget {
        if !(c.is_finite() && config.cost.eval_cost > 0.0) {
            return Err(Error::InvalidConfig(
                "a cost budget needs a finite amount and a positive eval_cost".into(),
            ));
        }
    }
    let mut state = CampaignState::new(policies, tasks, outcome_kind, config)?;
    let seed = state.config().seed;

    let warm = state.pending_warm_start().expect("fresh campaign");
    state.record_outcomes(&warm, &simulate_outcomes(ground_truth, &warm, seed))?;
    let mut rows = vec![compute_metrics(&state, reference)?];
    while !budget.exhausted(&state) {
        let suggestion = state.suggest_next()?;
        let outcomes = simulate_outcomes(ground_truth, &suggestion, seed);
        state.record_outcomes(&suggestion, &outcomes)?;
        rows.push(compute_metrics(&state, reference)?);
    }
    Ok(ReplayOutput { rows, state })
}
