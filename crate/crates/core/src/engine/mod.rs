//! Campaign engine: warm start, the suggest/record query loop, switch-cost
//! accounting, retraining, and evaluation metrics.
//!
//! A campaign is a plain value. [`CampaignState::suggest_next`] is pure; only
//! [`CampaignState::record_outcomes`] mutates, and every mutation bumps the
//! version that suggestion tokens are checked against.

mod ground_truth;
mod metrics;
mod replay;
mod spec;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

pub use ground_truth::{GroundTruthCell, GroundTruthModel, Reference};
pub use metrics::{compute_metrics, read_metrics_csv, write_metrics_csv, MetricsRow};
pub use replay::{replay, simulate_outcomes, Budget, ReplayOutput};
pub use spec::{DatasetSpec, PolicySpec, ResolvedDataset};

use crate::acquisition::{self, AcquisitionConfig, ScoreGrid, Selection, Strategy};
use crate::cost::{self, CostConfig, CostLedger};
use crate::dist::DistributionParams;
use crate::embedding::EmbeddingConfig;
use crate::error::{Error, Result};
use crate::seed::{self, stream};
use crate::surrogate::{EmbeddingTable, OptimalFit, SurrogateConfig, SurrogateModel};
use crate::types::{EvalDataset, OutcomeKind, PolicyRef, TaskSpec, TrialRecord};

/// Every setting of a campaign. `seed` drives all randomness; it overrides the
/// seeds of the nested configurations.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CampaignConfig {
    pub seed: u64,
    pub surrogate: SurrogateConfig,
    pub acquisition: AcquisitionConfig,
    pub cost: CostConfig,
    pub embedding: EmbeddingConfig,
    /// Fitting of learned embeddings for the optimal representation.
    pub optimal: OptimalFit,
}

impl CampaignConfig {
    /// Copy with `seed` propagated into the nested configurations.
    pub fn seeded(&self) -> Self {
        let mut c = self.clone();
        c.surrogate.seed = c.seed;
        c.acquisition.seed = c.seed;
        c.embedding.seed = c.seed;
        c
    }

    pub fn validate(&self) -> Result<()> {
        self.surrogate.validate()?;
        self.acquisition.validate()?;
        self.cost.validate()?;
        self.embedding.validate()
    }
}

/// One trial the experimenter is asked to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialRequest {
    pub policy: usize,
    pub task: usize,
}

/// Next batch of trials. Outcomes must be reported in `trials` order together
/// with `token`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub token: String,
    /// Query step the outcomes will be recorded under (0 for the warm start).
    pub step: u64,
    pub warm_start: bool,
    pub strategy: Strategy,
    pub task: usize,
    /// Set for pair strategies.
    pub policy: Option<usize>,
    pub trials: Vec<TrialRequest>,
}

/// Result of applying one suggestion's outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecordSummary {
    pub step: u64,
    pub total_cost: f64,
    pub charged: f64,
    pub switch_cost: f64,
    pub trials_recorded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairEstimate {
    pub policy: usize,
    pub task: usize,
    pub params: DistributionParams,
    pub mean: f64,
    pub eig: f64,
    pub trial_count: usize,
}

/// Current surrogate view of the whole grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimates {
    pub step: u64,
    pub version: u64,
    pub total_cost: f64,
    pub current_task: usize,
    pub strategy: Strategy,
    pub lambda: f64,
    pub epsilon: f64,
    pub policies: Vec<String>,
    pub tasks: Vec<String>,
    /// Policy-major cells.
    pub cells: Vec<PairEstimate>,
    /// Cost of switching from the current task to each task.
    pub switch_costs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignState {
    config: CampaignConfig,
    policies: Vec<PolicyRef>,
    tasks: Vec<TaskSpec>,
    table: EmbeddingTable,
    dataset: EvalDataset,
    surrogate: SurrogateModel,
    ledger: CostLedger,
    current_task: usize,
    warm_task: usize,
    warm_started: bool,
    step: u64,
    version: u64,
}

fn check_unique<'a>(ids: impl Iterator<Item = &'a str>, kind: &str) -> Result<()> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(Error::InvalidConfig(format!("duplicate {kind} id '{id}'")));
        }
    }
    Ok(())
}

impl CampaignState {
    /// Validates inputs and picks the warm-start task. Warm-start outcomes are
    /// requested through [`Self::pending_warm_start`].
    pub fn new(
        policies: Vec<PolicyRef>,
        tasks: Vec<TaskSpec>,
        outcome_kind: OutcomeKind,
        config: &CampaignConfig,
    ) -> Result<Self> {
        if policies.is_empty() {
            return Err(Error::EmptyPolicySet);
        }
        if tasks.is_empty() {
            return Err(Error::EmptyTaskSet);
        }
        let mut config = config.seeded();
        config.surrogate.outcome_kind = outcome_kind;
        config.validate()?;
        check_unique(policies.iter().map(|p| p.id.as_str()), "policy")?;
        check_unique(tasks.iter().map(|t| t.id.as_str()), "task")?;
        if let Some((k, p)) = policies.iter().enumerate().find(|(k, p)| p.index != *k) {
            return Err(Error::InvalidConfig(format!("policy '{}' has index {} at position {k}", p.id, p.index)));
        }
        if let Some((k, t)) = tasks.iter().enumerate().find(|(k, t)| t.index != *k) {
            return Err(Error::InvalidConfig(format!("task '{}' has index {} at position {k}", t.id, t.index)));
        }

        let table = EmbeddingTable::new(
            policies.iter().map(|p| p.embedding.clone()).collect(),
            tasks.iter().map(|t| t.embedding.clone()).collect(),
        )?;
        if table.policy_dim() == 0 || table.task_dim() == 0 {
            return Err(Error::InvalidConfig("policy and task embeddings must be non-empty".into()));
        }
        let surrogate = SurrogateModel::new(config.surrogate.clone(), table.input_dim())?;

        let warm_task = {
            use rand::Rng;
            let mut rng = seed::rng(seed::derive(config.seed, &[stream::WARM_START]));
            rng.random_range(0..tasks.len())
        };
        Ok(Self {
            config,
            policies,
            tasks,
            table,
            dataset: EvalDataset::new(outcome_kind),
            surrogate,
            ledger: CostLedger::new(),
            current_task: warm_task,
            warm_task,
            warm_started: false,
            step: 0,
            version: 0,
        })
    }

    pub fn config(&self) -> &CampaignConfig {
        &self.config
    }

    pub fn policies(&self) -> &[PolicyRef] {
        &self.policies
    }

    pub fn tasks(&self) -> &[TaskSpec] {
        &self.tasks
    }

    pub fn num_policies(&self) -> usize {
        self.policies.len()
    }

    pub fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn outcome_kind(&self) -> OutcomeKind {
        self.dataset.outcome_kind()
    }

    pub fn table(&self) -> &EmbeddingTable {
        &self.table
    }

    pub fn dataset(&self) -> &EvalDataset {
        &self.dataset
    }

    pub fn surrogate(&self) -> &SurrogateModel {
        &self.surrogate
    }

    pub fn ledger(&self) -> &CostLedger {
        &self.ledger
    }

    pub fn total_cost(&self) -> f64 {
        self.ledger.total()
    }

    pub fn current_task(&self) -> usize {
        self.current_task
    }

    pub fn warm_task(&self) -> usize {
        self.warm_task
    }

    pub fn is_warm_started(&self) -> bool {
        self.warm_started
    }

    /// Query steps completed after the warm start.
    pub fn step(&self) -> u64 {
        self.step
    }

    /// Number of applied mutations.
    pub fn version(&self) -> u64 {
        self.version
    }

    /// Token a suggestion must carry to be recorded against the current state.
    pub fn token(&self) -> String {
        let tag = seed::derive(self.config.seed, &[stream::TOKEN, self.version]);
        format!("{}-{:08x}", self.version, tag as u32)
    }

    fn trials_on_task(&self, task: usize, policies: impl Iterator<Item = usize>) -> Vec<TrialRequest> {
        let d = self.config.acquisition.trials_per_query;
        policies
            .flat_map(|policy| std::iter::repeat_n(TrialRequest { policy, task }, d))
            .collect()
    }

    /// Trials of the warm start while its outcomes are outstanding.
    pub fn pending_warm_start(&self) -> Option<Suggestion> {
        (!self.warm_started).then(|| Suggestion {
            token: self.token(),
            step: 0,
            warm_start: true,
            strategy: self.config.acquisition.strategy,
            task: self.warm_task,
            policy: None,
            trials: self.trials_on_task(self.warm_task, 0..self.num_policies()),
        })
    }

    /// Switch costs from the current task to every task.
    pub fn switch_costs(&self) -> Vec<f64> {
        cost::switch_costs_from(&self.tasks[self.current_task], &self.tasks, &self.config.cost)
    }

    /// Score grid for the next query step.
    pub fn score_grid(&self) -> Result<ScoreGrid> {
        let acq = &self.config.acquisition;
        let samples = if acq.strategy.uses_eig() {
            let mc_seed = seed::derive(self.config.seed, &[stream::MC_DROPOUT, self.step]);
            self.surrogate.mc_sample_grid(&self.table, acq.mc_samples, mc_seed)?
        } else {
            Vec::new()
        };
        acquisition::score_grid(
            &samples,
            self.num_policies(),
            self.num_tasks(),
            self.outcome_kind(),
            acq,
            &self.switch_costs(),
        )
    }

    /// Builds the suggestion for a given score grid with the step's selection stream.
    pub fn suggestion_from_grid(&self, grid: &ScoreGrid) -> Result<Suggestion> {
        if !self.warm_started {
            return Err(Error::NotWarmStarted);
        }
        let mut rng = seed::rng(seed::derive(self.config.seed, &[stream::SELECT, self.step]));
        let selection = acquisition::select_next(grid, self.config.acquisition.epsilon, &mut rng);
        let (policy, task, trials) = match selection {
            Selection::Pair { policy, task } => (Some(policy), task, self.trials_on_task(task, std::iter::once(policy))),
            Selection::Task { task } => (None, task, self.trials_on_task(task, 0..self.num_policies())),
        };
        Ok(Suggestion {
            token: self.token(),
            step: self.step + 1,
            warm_start: false,
            strategy: self.config.acquisition.strategy,
            task,
            policy,
            trials,
        })
    }

    /// Next query. Pure: repeated calls return the same suggestion until
    /// outcomes are recorded.
    pub fn suggest_next(&self) -> Result<Suggestion> {
        if !self.warm_started {
            return Err(Error::NotWarmStarted);
        }
        self.suggestion_from_grid(&self.score_grid()?)
    }

    /// The pending warm start, or the next query once it is recorded.
    pub fn current_suggestion(&self) -> Result<Suggestion> {
        match self.pending_warm_start() {
            Some(warm) => Ok(warm),
            None => self.suggest_next(),
        }
    }

    /// Applies the outcomes of `suggestion`, charges costs, and retrains.
    pub fn record_outcomes(&mut self, suggestion: &Suggestion, outcomes: &[f64]) -> Result<RecordSummary> {
        let current = self.token();
        if suggestion.token != current {
            return Err(Error::StaleSuggestion {
                token: suggestion.token.clone(),
                current: self.version,
            });
        }
        // A matching token pins the state; the payload must also be unedited.
        let expected = match (suggestion.warm_start, self.warm_started) {
            (true, false) => self.pending_warm_start().expect("warm start pending"),
            (false, true) => {
                let canonical = self.suggest_next()?;
                if canonical != *suggestion {
                    return Err(Error::InvalidConfig(
                        "suggestion payload does not match the campaign's current suggestion".into(),
                    ));
                }
                canonical
            }
            _ => {
                return Err(Error::StaleSuggestion {
                    token: suggestion.token.clone(),
                    current: self.version,
                })
            }
        };
        if outcomes.len() != expected.trials.len() {
            return Err(Error::WrongOutcomeCount {
                expected: expected.trials.len(),
                got: outcomes.len(),
            });
        }
        self.outcome_kind().validate(outcomes)?;

        let eval_cost = self.config.cost.eval_cost;
        let d = self.config.acquisition.trials_per_query;
        let step = if expected.warm_start { 0 } else { self.step + 1 };
        let task = expected.task;
        let switch = if expected.warm_start || task == self.current_task {
            None
        } else {
            Some(cost::switch_cost(&self.tasks[self.current_task], &self.tasks[task], &self.config.cost))
        };

        let before = self.ledger.total();
        let mut next_dataset = self.dataset.clone();
        for (k, (trial, &x)) in expected.trials.iter().zip(outcomes).enumerate() {
            let extra = if k == 0 { switch.unwrap_or(0.0) } else { 0.0 };
            next_dataset.push(TrialRecord {
                policy_index: trial.policy,
                task_index: trial.task,
                outcome: x,
                step,
                cost_charged: eval_cost + extra,
            })?;
        }
        let task_id = self.tasks[task].id.clone();
        let mut next_ledger = self.ledger.clone();
        for _ in 0..expected.trials.len() / d {
            next_ledger.charge_eval(step, d as f64 * eval_cost, &task_id)?;
        }
        if let Some(c) = switch {
            let from = self.tasks[self.current_task].id.clone();
            next_ledger.charge_switch(step, c, &from, &task_id)?;
        }

        let epochs = if expected.warm_start {
            self.config.surrogate.epochs_initial
        } else {
            self.config.surrogate.epochs_per_update
        };
        self.surrogate.train_epochs(&next_dataset, &self.table, epochs)?;
        self.dataset = next_dataset;
        self.ledger = next_ledger;
        self.current_task = task;
        if expected.warm_start {
            self.warm_started = true;
        } else {
            self.step += 1;
        }
        self.version += 1;
        Ok(RecordSummary {
            step: self.step,
            total_cost: self.ledger.total(),
            charged: self.ledger.total() - before,
            switch_cost: switch.unwrap_or(0.0),
            trials_recorded: outcomes.len(),
        })
    }

    /// Dropout-off predictions, fresh seeded EIG, and switch costs for every pair.
    pub fn estimates(&self) -> Result<Estimates> {
        let acq = &self.config.acquisition;
        let params = self.surrogate.predict_grid(&self.table)?;
        let samples = self.surrogate.mc_sample_grid(
            &self.table,
            acq.mc_samples.max(2),
            seed::derive(self.config.seed, &[stream::ESTIMATES, self.version]),
        )?;
        let n = self.num_tasks();
        let mut counts = vec![0usize; params.len()];
        for r in self.dataset.records() {
            counts[r.policy_index * n + r.task_index] += 1;
        }
        let cells = params
            .into_iter()
            .zip(&samples)
            .enumerate()
            .map(|(idx, (p, s))| {
                Ok(PairEstimate {
                    policy: idx / n,
                    task: idx % n,
                    mean: p.mean(),
                    params: p,
                    eig: acquisition::eig(s, self.outcome_kind(), acq.n_bins)?.eig,
                    trial_count: counts[idx],
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Estimates {
            step: self.step,
            version: self.version,
            total_cost: self.ledger.total(),
            current_task: self.current_task,
            strategy: acq.strategy,
            lambda: acq.lambda,
            epsilon: acq.epsilon,
            policies: self.policies.iter().map(|p| p.id.clone()).collect(),
            tasks: self.tasks.iter().map(|t| t.id.clone()).collect(),
            cells,
            switch_costs: self.switch_costs(),
        })
    }
}
