//! Domain types shared by every part of the engine.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whether trial outcomes are binary success flags or normalized scores in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Binary,
    Continuous,
}

impl OutcomeKind {
    pub fn name(self) -> &'static str {
        match self {
            OutcomeKind::Binary => "binary",
            OutcomeKind::Continuous => "continuous",
        }
    }

    pub fn contains(self, x: f64) -> bool {
        match self {
            OutcomeKind::Binary => x == 0.0 || x == 1.0,
            OutcomeKind::Continuous => (0.0..=1.0).contains(&x),
        }
    }

    /// Checks every outcome, reporting the first one outside the domain.
    pub fn validate(self, outcomes: &[f64]) -> Result<()> {
        match outcomes.iter().position(|&x| !self.contains(x)) {
            Some(index) => Err(Error::OutOfDomainOutcome {
                index,
                value: outcomes[index],
                kind: self.name(),
            }),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRef {
    pub id: String,
    pub index: usize,
    pub embedding: Vec<f64>,
}

/// Scene attributes compared by the switching-cost rules.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CostAttributes {
    #[serde(default = "default_tag")]
    pub task_type: String,
    #[serde(default = "default_tag")]
    pub primary_object: String,
    #[serde(default = "default_tag")]
    pub embodiment: String,
}

fn default_tag() -> String {
    "default".to_owned()
}

impl Default for CostAttributes {
    fn default() -> Self {
        Self {
            task_type: default_tag(),
            primary_object: default_tag(),
            embodiment: default_tag(),
        }
    }
}

impl CostAttributes {
    pub fn new(
        task_type: impl Into<String>,
        primary_object: impl Into<String>,
        embodiment: impl Into<String>,
    ) -> Self {
        let tag = |s: String| if s.is_empty() { default_tag() } else { s };
        Self {
            task_type: tag(task_type.into()),
            primary_object: tag(primary_object.into()),
            embodiment: tag(embodiment.into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: String,
    pub index: usize,
    pub description: String,
    #[serde(default)]
    pub verb_phrase: String,
    pub embedding: Vec<f64>,
    #[serde(default)]
    pub cost_attrs: CostAttributes,
}

/// One observed trial outcome together with the cost charged alongside it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub policy_index: usize,
    pub task_index: usize,
    pub outcome: f64,
    pub step: u64,
    pub cost_charged: f64,
}

/// Append-only list of trial records in acquisition order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalDataset {
    records: Vec<TrialRecord>,
    outcome_kind: OutcomeKind,
}

impl EvalDataset {
    pub fn new(outcome_kind: OutcomeKind) -> Self {
        Self {
            records: Vec::new(),
            outcome_kind,
        }
    }

    pub fn push(&mut self, record: TrialRecord) -> Result<()> {
        self.outcome_kind.validate(&[record.outcome])?;
        self.records.push(record);
        Ok(())
    }

    pub fn records(&self) -> &[TrialRecord] {
        &self.records
    }

    pub fn outcome_kind(&self) -> OutcomeKind {
        self.outcome_kind
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Builds a dataset from `(policy, task, outcome)` triples, all tagged with step 0.
    pub fn from_outcomes(
        outcome_kind: OutcomeKind,
        outcomes: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut ds = Self::new(outcome_kind);
        for (policy_index, task_index, outcome) in outcomes {
            ds.push(TrialRecord {
                policy_index,
                task_index,
                outcome,
                step: 0,
                cost_charged: 0.0,
            })?;
        }
        Ok(ds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_domain_is_exactly_zero_or_one() {
        assert!(OutcomeKind::Binary.contains(0.0));
        assert!(OutcomeKind::Binary.contains(1.0));
        assert!(!OutcomeKind::Binary.contains(0.5));
        assert!(!OutcomeKind::Binary.contains(2.0));
    }

    #[test]
    fn continuous_domain_is_unit_interval() {
        assert!(OutcomeKind::Continuous.contains(0.0));
        assert!(OutcomeKind::Continuous.contains(0.37));
        assert!(!OutcomeKind::Continuous.contains(-0.2));
        assert!(!OutcomeKind::Continuous.contains(1.3));
        assert!(!OutcomeKind::Continuous.contains(f64::NAN));
    }

    #[test]
    fn dataset_rejects_out_of_domain_records() {
        let err = EvalDataset::from_outcomes(OutcomeKind::Binary, [(0, 0, 1.0), (0, 1, 0.4)])
            .unwrap_err();
        assert!(matches!(err, Error::OutOfDomainOutcome { index: 0, .. }));
    }

    #[test]
    fn empty_tags_become_default() {
        let attrs = CostAttributes::new("", "drawer", "");
        assert_eq!(attrs.task_type, "default");
        assert_eq!(attrs.primary_object, "drawer");
        assert_eq!(attrs.embodiment, "default");
    }
}
