//! Cost-aware active testing for multi-task robot policy evaluation.

pub mod acquisition;
pub mod cost;
pub mod dist;
pub mod embedding;
pub mod engine;
pub mod error;
pub mod io;
pub mod seed;
pub mod surrogate;
pub mod report;
pub mod synthetic;
pub mod types;

pub use acquisition::{AcquisitionConfig, ScoreGrid, Selection, Strategy};
pub use cost::{CostConfig, CostLedger, RuleStyle};
pub use dist::DistributionParams;
pub use embedding::{EmbeddingConfig, Representation};
pub use engine::{CampaignConfig, CampaignState, DatasetSpec, MetricsRow, Suggestion};
pub use surrogate::{SurrogateConfig, SurrogateModel};
pub use error::{Error, Result};
pub use types::{CostAttributes, EvalDataset, OutcomeKind, PolicyRef, TaskSpec, TrialRecord};
