//! Task and policy representations.
//!
//! Task embeddings start from raw sentence embeddings of the task description and
//! of its verb phrase. Both are reduced jointly with PCA and then combined as
//! `verb_weight * verb + task_weight * task + noise_scale * z`, where `z` is a
//! standard normal vector drawn once per task. Policy embeddings are fixed random
//! identifiers derived from the policy id.

mod pca;
mod provider;

use std::collections::HashSet;

use log::info;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use pca::{fit_pca, PcaModel};
pub use provider::{fetch_raw_embeddings, EmbeddingClient, ENDPOINT_ENV};

use crate::error::{Error, Result};
use crate::seed::{self, stream};
use crate::types::CostAttributes;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    Random,
    Language,
    Verb,
    Optimal,
}

impl std::str::FromStr for Representation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(Representation::Random),
            "language" | "lang" => Ok(Representation::Language),
            "verb" => Ok(Representation::Verb),
            "optimal" => Ok(Representation::Optimal),
            other => Err(Error::InvalidConfig(format!("unknown representation '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingConfig {
    pub verb_weight: f64,
    pub task_weight: f64,
    pub noise_scale: f64,
    pub target_dim: usize,
    pub policy_dim: usize,
    pub representation: Representation,
    pub seed: u64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            verb_weight: 0.8,
            task_weight: 0.2,
            noise_scale: 0.1,
            target_dim: 32,
            policy_dim: 32,
            representation: Representation::Verb,
            seed: 0,
        }
    }
}

impl EmbeddingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.verb_weight < 0.0 || self.task_weight < 0.0 || self.noise_scale < 0.0 {
            return Err(Error::InvalidConfig(
                "embedding weights and noise scale must be non-negative".into(),
            ));
        }
        if self.target_dim == 0 || self.policy_dim == 0 {
            return Err(Error::InvalidConfig("embedding dimensions must be positive".into()));
        }
        Ok(())
    }
}

fn standard_normal(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = seed::rng(seed);
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

/// Combines reduced verb and description embeddings into the task embedding used
/// by the surrogate. The noise vector depends only on `(cfg.seed, task_seed)`.
pub fn compose_task_embedding(
    verb_emb: &[f64],
    task_emb: &[f64],
    cfg: &EmbeddingConfig,
    task_seed: u64,
) -> Result<Vec<f64>> {
    let noise_seed = seed::derive(cfg.seed, &[stream::TASK_NOISE, task_seed]);
    match cfg.representation {
        Representation::Random => Ok(standard_normal(cfg.target_dim, noise_seed)),
        Representation::Language => Ok(task_emb.to_vec()),
        Representation::Verb => {
            if verb_emb.len() != task_emb.len() {
                return Err(Error::DimensionMismatch {
                    expected: task_emb.len(),
                    found: verb_emb.len(),
                });
            }
            let noise = standard_normal(task_emb.len(), noise_seed);
            Ok(verb_emb
                .iter()
                .zip(task_emb)
                .zip(noise)
                .map(|((v, t), z)| cfg.verb_weight * v + cfg.task_weight * t + cfg.noise_scale * z)
                .collect())
        }
        Representation::Optimal => Err(Error::InvalidConfig(
            "optimal embeddings are learned from outcome data, not composed".into(),
        )),
    }
}

/// Verb phrase for a task: the manifest override when given, otherwise the first
/// word of the (imperative) instruction, lowercased and stripped of punctuation.
pub fn extract_verb_phrase(description: &str, manifest_override: Option<&str>) -> Result<String> {
    if description.trim().is_empty() {
        return Err(Error::EmptyDescription);
    }
    if let Some(phrase) = manifest_override.map(str::trim).filter(|p| !p.is_empty()) {
        return Ok(phrase.to_owned());
    }
    description
        .split_whitespace()
        .map(|tok| {
            tok.chars()
                .filter(|c| c.is_alphanumeric())
                .flat_map(char::to_lowercase)
                .collect::<String>()
        })
        .find(|tok| !tok.is_empty())
        .ok_or(Error::EmptyDescription)
}

pub fn init_policy_embedding(policy_id: &str, cfg: &EmbeddingConfig) -> Vec<f64> {
    let s = seed::derive(cfg.seed, &[stream::POLICY_EMBEDDING, seed::hash_str(policy_id)]);
    standard_normal(cfg.policy_dim, s)
}

/// One task of an embedding manifest file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub task_id: String,
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verb_phrase: Option<String>,
    #[serde(flatten)]
    pub cost_attrs: CostAttributes,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_description_embedding: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_verb_embedding: Option<Vec<f64>>,
    /// Final reduced task embedding, filled in by [`embed_manifest`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
}

impl ManifestEntry {
    pub fn new(task_id: impl Into<String>, description: impl Into<String>) -> Self {
        Self {
            task_id: task_id.into(),
            description: description.into(),
            verb_phrase: None,
            cost_attrs: CostAttributes::default(),
            raw_description_embedding: None,
            raw_verb_embedding: None,
            embedding: None,
        }
    }
}

/// Checks id uniqueness and that all raw vectors share one dimension.
pub fn validate_manifest(entries: &[ManifestEntry]) -> Result<()> {
    let mut seen = HashSet::new();
    for e in entries {
        if !seen.insert(e.task_id.as_str()) {
            return Err(Error::InvalidConfig(format!("duplicate task_id '{}'", e.task_id)));
        }
    }
    let mut dims = entries
        .iter()
        .flat_map(|e| [e.raw_description_embedding.as_ref(), e.raw_verb_embedding.as_ref()])
        .flatten()
        .map(Vec::len);
    if let Some(first) = dims.next() {
        if let Some(bad) = dims.find(|&d| d != first) {
            return Err(Error::DimensionMismatch {
                expected: first,
                found: bad,
            });
        }
    }
    Ok(())
}

/// Resolves verb phrases, fetches any missing raw embeddings through `client`,
/// fits PCA jointly over description and verb vectors, and writes the composed
/// embedding into every entry. Returns the fitted PCA model (None for the
/// Random representation, which ignores language).
pub fn embed_manifest(
    entries: &mut [ManifestEntry],
    cfg: &EmbeddingConfig,
    client: Option<&EmbeddingClient>,
) -> Result<Option<PcaModel>> {
    cfg.validate()?;
    validate_manifest(entries)?;

    if cfg.representation == Representation::Random {
        for e in entries.iter_mut() {
            e.embedding = Some(compose_task_embedding(&[], &[], cfg, seed::hash_str(&e.task_id))?);
        }
        return Ok(None);
    }

    for e in entries.iter_mut() {
        if e.verb_phrase.as_deref().is_none_or(|p| p.trim().is_empty()) {
            let phrase = extract_verb_phrase(&e.description, None)?;
            info!("task {}: verb phrase '{}' from first-token heuristic", e.task_id, phrase);
            e.verb_phrase = Some(phrase);
        }
    }

    let missing: Vec<String> = entries
        .iter()
        .flat_map(|e| {
            let desc = e.raw_description_embedding.is_none().then(|| e.description.clone());
            let verb = e.raw_verb_embedding.is_none().then(|| e.verb_phrase.clone().unwrap_or_default());
            [desc, verb]
        })
        .flatten()
        .collect();
    if !missing.is_empty() {
        let client = client.ok_or_else(|| Error::ServiceUnavailable {
            attempts: 0,
            message: format!(
                "{} raw embeddings missing and no embedding endpoint configured",
                missing.len()
            ),
        })?;
        let fetched = fetch_raw_embeddings(&missing, client)?;
        let mut it = fetched.into_iter();
        for e in entries.iter_mut() {
            if e.raw_description_embedding.is_none() {
                e.raw_description_embedding = it.next();
            }
            if e.raw_verb_embedding.is_none() {
                e.raw_verb_embedding = it.next();
            }
        }
    }
    validate_manifest(entries)?;

    let raw: Vec<Vec<f64>> = entries
        .iter()
        .flat_map(|e| {
            [
                e.raw_description_embedding.clone().expect("filled above"),
                e.raw_verb_embedding.clone().expect("filled above"),
            ]
        })
        .collect();
    let pca = fit_pca(&raw, cfg.target_dim)?;
    for e in entries.iter_mut() {
        let task = pca.project(e.raw_description_embedding.as_ref().expect("filled above"))?;
        let verb = pca.project(e.raw_verb_embedding.as_ref().expect("filled above"))?;
        e.embedding = Some(compose_task_embedding(&verb, &task, cfg, seed::hash_str(&e.task_id))?);
    }
    Ok(Some(pca))
}
