//! Dataset spec files: policies, task manifest, ground truth, and costs.

use std::path::Path;

use log::info;
use serde::{Deserialize, Serialize};

use super::{CampaignConfig, GroundTruthCell, GroundTruthModel, Reference};
use crate::cost::CostConfig;
use crate::embedding::{
    embed_manifest, extract_verb_phrase, init_policy_embedding, validate_manifest, EmbeddingClient, ManifestEntry,
    PcaModel, Representation,
};
use crate::error::{Error, Result};
use crate::io::read_json;
use crate::surrogate::fit_optimal_embeddings;
use crate::types::{OutcomeKind, PolicyRef, TaskSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub id: String,
    /// Fixed embedding; generated from the id when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
}

fn default_reference_samples() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub outcome_kind: OutcomeKind,
    pub policies: Vec<PolicySpec>,
    pub tasks: Vec<ManifestEntry>,
    /// `[policy][task]`; needed for replay, optional for live campaigns.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<Vec<Vec<GroundTruthCell>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_config: Option<CostConfig>,
    /// Draws per pair for generator cells in the metrics reference.
    #[serde(default = "default_reference_samples")]
    pub reference_samples: usize,
}

/// A spec with embeddings computed for one configuration.
#[derive(Debug, Clone)]
pub struct ResolvedDataset {
    pub outcome_kind: OutcomeKind,
    pub policies: Vec<PolicyRef>,
    pub tasks: Vec<TaskSpec>,
    pub ground_truth: Option<GroundTruthModel>,
    pub reference: Option<Reference>,
    pub pca: Option<PcaModel>,
    pub cost_config: Option<CostConfig>,
}

impl ResolvedDataset {
    /// `base` with the dataset's cost rules, when the spec defines them.
    pub fn campaign_config(&self, base: &CampaignConfig) -> CampaignConfig {
        let mut c = base.clone();
        if let Some(cost) = &self.cost_config {
            c.cost = cost.clone();
        }
        c
    }
}

impl DatasetSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let spec: Self = read_json(path)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn num_policies(&self) -> usize {
        self.policies.len()
    }

    pub fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.policies.is_empty() {
            return Err(Error::EmptyPolicySet);
        }
        if self.tasks.is_empty() {
            return Err(Error::EmptyTaskSet);
        }
        super::check_unique(self.policies.iter().map(|p| p.id.as_str()), "policy")?;
        validate_manifest(&self.tasks)?;
        for (k, t) in self.tasks.iter().enumerate() {
            if t.description.trim().is_empty() {
                return Err(Error::InvalidConfig(format!("tasks[{k}].description: must be non-empty")));
            }
        }
        if let Some(cost) = &self.cost_config {
            cost.validate()?;
        }
        if let Some(grid) = &self.ground_truth {
            if grid.len() != self.policies.len() {
                return Err(Error::InvalidConfig(format!(
                    "ground_truth: {} rows for {} policies",
                    grid.len(),
                    self.policies.len()
                )));
            }
            if let Some((i, row)) = grid.iter().enumerate().find(|(_, r)| r.len() != self.tasks.len()) {
                return Err(Error::InvalidConfig(format!(
                    "ground_truth[{i}]: {} cells for {} tasks",
                    row.len(),
                    self.tasks.len()
                )));
            }
            GroundTruthModel::from_grid(grid.clone(), self.outcome_kind)?;
        }
        Ok(())
    }

    pub fn ground_truth_model(&self) -> Result<Option<GroundTruthModel>> {
        self.ground_truth
            .clone()
            .map(|g| GroundTruthModel::from_grid(g, self.outcome_kind))
            .transpose()
    }

    /// Computes policy and task embeddings for `config` (seeded by its campaign
    /// seed) and the metrics reference. The optimal representation learns both
    /// tables from the reference outcomes.
    pub fn resolve(&self, config: &CampaignConfig, client: Option<&EmbeddingClient>) -> Result<ResolvedDataset> {
        self.validate()?;
        let config = config.seeded();
        let emb = &config.embedding;
        let ground_truth = self.ground_truth_model()?;
        let reference = ground_truth
            .as_ref()
            .map(|g| g.reference(self.reference_samples, config.seed))
            .transpose()?;

        let mut entries = self.tasks.clone();
        let mut pca = None;
        let mut policy_embeddings: Vec<Vec<f64>> = self
            .policies
            .iter()
            .map(|p| p.embedding.clone().unwrap_or_else(|| init_policy_embedding(&p.id, emb)))
            .collect();

        match emb.representation {
            Representation::Optimal => {
                let reference = reference.as_ref().ok_or_else(|| {
                    Error::InvalidConfig("the optimal representation needs ground_truth outcomes".into())
                })?;
                let fit = &config.optimal;
                let data = reference.subsample(fit.samples_per_pair).to_dataset(self.outcome_kind)?;
                let mut surrogate_cfg = config.surrogate.clone();
                surrogate_cfg.outcome_kind = self.outcome_kind;
                let (table, _) = fit_optimal_embeddings(
                    &data,
                    &surrogate_cfg,
                    self.num_policies(),
                    self.num_tasks(),
                    (emb.policy_dim, emb.target_dim),
                    fit,
                )?;
                policy_embeddings = table.policy_embeddings;
                for (e, v) in entries.iter_mut().zip(table.task_embeddings) {
                    e.embedding = Some(v);
                }
            }
            _ if entries.iter().all(|e| e.embedding.is_some()) && emb.representation != Representation::Random => {
                info!("using precomputed task embeddings from the spec");
            }
            _ => {
                if client.is_none() && emb.representation != Representation::Random {
                    if let Some(k) = entries.iter().position(|e| e.raw_description_embedding.is_none()) {
                        return Err(Error::InvalidConfig(format!(
                            "tasks[{k}].raw_description_embedding: missing and no embedding endpoint configured"
                        )));
                    }
                    if let Some(k) = entries.iter().position(|e| e.raw_verb_embedding.is_none()) {
                        return Err(Error::InvalidConfig(format!(
                            "tasks[{k}].raw_verb_embedding: missing and no embedding endpoint configured"
                        )));
                    }
                }
                pca = embed_manifest(&mut entries, emb, client)?;
            }
        }

        let task_dim = entries[0].embedding.as_ref().map_or(0, Vec::len);
        let tasks = entries
            .into_iter()
            .enumerate()
            .map(|(index, e)| {
                let embedding = e.embedding.expect("every branch fills embeddings");
                if embedding.len() != task_dim {
                    return Err(Error::InvalidConfig(format!(
                        "tasks[{index}].embedding: dimension {} differs from {task_dim}",
                        embedding.len()
                    )));
                }
                let verb_phrase = match e.verb_phrase {
                    Some(v) => v,
                    None => extract_verb_phrase(&e.description, None)?,
                };
                Ok(TaskSpec {
                    id: e.task_id,
                    index,
                    description: e.description,
                    verb_phrase,
                    embedding,
                    cost_attrs: e.cost_attrs,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let policies = self
            .policies
            .iter()
            .zip(policy_embeddings)
            .enumerate()
            .map(|(index, (p, embedding))| PolicyRef {
                id: p.id.clone(),
                index,
                embedding,
            })
            .collect();
        Ok(ResolvedDataset {
            outcome_kind: self.outcome_kind,
            policies,
            tasks,
            ground_truth,
            reference,
            pca,
            cost_config: self.cost_config.clone(),
        })
    }
}
