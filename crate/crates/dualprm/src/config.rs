//! Run configuration: one JSON file describing a whole pipeline run.
//!
//! Every command loads the same [`RunConfig`], applies command-line
//! overrides, then calls [`RunConfig::finalize`] — which derives all
//! component seeds from `global_seed` and validates every field — before
//! doing any work. Validation errors carry the dotted path of the
//! offending field (e.g. `world.step_error_prob`) so a bad config is
//! diagnosable from the message alone.
//!
//! Determinism contract: the seed fields inside the `world` and `train`
//! sections are *derived* (`derive_subseed(global_seed, "world")`,
//! `…, "train"`) and any values given for them in the JSON are replaced.
//! Changing `global_seed` (or passing `--seed`) therefore re-seeds every
//! component coherently, and two runs with identical config and seed
//! produce byte-identical artifacts.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendConfig, BackendError};
use crate::fusion::{Aggregation, FusionOrder, FusionStrategy};
use crate::rewardnet::{HardLabelPolicy, TrainConfig, TrainError, TrainMode};
use crate::seeds::derive_subseed;
use crate::synthworld::{WorldConfig, WorldError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config {path} is not valid JSON: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {path}: {message}")]
    Invalid { path: String, message: String },
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        path: path.into(),
        message: message.into(),
    }
}

/// How Monte-Carlo rollouts are produced during labeling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompleterKind {
    /// Continue prefixes inside the synthetic world (no network).
    Synthetic,
    /// Continue prefixes through the configured chat backend.
    Backend,
}

/// Which scorer produces step rewards during evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    /// The trained checkpoint (the normal path).
    Model,
    /// Filtering posterior over the synthetic world's observation cues.
    OraclePosterior,
    /// The world's hidden state read directly (upper bound / debugging).
    OracleLatent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McConfig {
    /// Rollouts per step when estimating reach-the-answer fractions.
    pub num_rollouts: usize,
    /// Threshold rollout fractions to hard 0/1 labels.
    pub hard_potential: bool,
    pub completer: CompleterKind,
    /// Source of correctness pseudo-labels during labeling.
    pub scorer: ScorerKind,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            num_rollouts: 64,
            hard_potential: false,
            completer: CompleterKind::Synthetic,
            scorer: ScorerKind::OraclePosterior,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Scoring strategies to benchmark side by side.
    pub strategies: Vec<FusionStrategy>,
    /// Candidate solutions sampled per problem.
    pub n_candidates: usize,
    pub aggregation: Aggregation,
    pub fusion_order: FusionOrder,
    pub scorer: ScorerKind,
    /// Also write per-candidate reward pairs as CSV.
    pub emit_scatter: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            strategies: FusionStrategy::ALL.to_vec(),
            n_candidates: 16,
            aggregation: Aggregation::MinStep,
            fusion_order: FusionOrder::FusePerStep,
            scorer: ScorerKind::Model,
            emit_scatter: false,
        }
    }
}

/// Artifact locations. Anything left unset lands under `out_dir` with a
/// standard name.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub problems: Option<PathBuf>,
    pub trajectories: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub loss_history: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub scatter: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed; every component seed is derived from it by name.
    pub global_seed: u64,
    pub out_dir: PathBuf,
    pub world: WorldConfig,
    pub mc: McConfig,
    pub train: TrainConfig,
    pub eval: EvalSection,
    pub backend: Option<BackendConfig>,
    pub paths: PathsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            global_seed: 0,
            out_dir: PathBuf::from("out"),
            world: WorldConfig::default(),
            mc: McConfig::default(),
            train: TrainConfig::default(),
            eval: EvalSection::default(),
            backend: None,
            paths: PathsConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let raw = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&raw).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Derives component seeds and fills defaulted paths, then validates.
    /// Must run (and succeed) before the config is used for anything.
    pub fn finalize(&mut self) -> Result<(), ConfigError> {
        self.world.seed = derive_subseed(self.global_seed, "world");
        self.train.seed = derive_subseed(self.global_seed, "train");
        if let Some(backend) = &mut self.backend {
            if backend.audit_path.is_none() {
                backend.audit_path = Some(self.out_dir.join("audit.jsonl"));
            }
        }
        self.validate()
    }

    /// Seed for the Monte-Carlo labeling completer.
    pub fn mc_seed(&self) -> u64 {
        derive_subseed(self.global_seed, "mc")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.out_dir.as_os_str().is_empty() {
            return Err(invalid("out_dir", "must not be empty"));
        }
        self.world.validate().map_err(|e| match e {
            WorldError::InvalidConfig { field, message } => {
                invalid(format!("world.{field}"), message)
            }
            other => invalid("world", other.to_string()),
        })?;
        if self.mc.num_rollouts == 0 {
            return Err(invalid("mc.num_rollouts", "must be at least 1"));
        }
        if self.mc.completer == CompleterKind::Backend && self.backend.is_none() {
            return Err(invalid(
                "mc.completer",
                "completer \"backend\" requires a backend section",
            ));
        }
        self.train.validate().map_err(|e| match e {
            TrainError::InvalidConfig { field, message } => {
                invalid(format!("train.{field}"), message)
            }
            other => invalid("train", other.to_string()),
        })?;
        // A product-label model fed hard 0/1 potential labels collapses:
        // the product target is 0 for almost every step, so the head
        // learns the constant 0 and ranks nothing. Reject the combination
        // up front unless the policy explicitly allows hard labels.
        if self.train.mode == TrainMode::SingleHeadProduct
            && self.mc.hard_potential
            && self.train.hard_label_policy == HardLabelPolicy::Strict
        {
            return Err(invalid(
                "train.mode",
                "single_head_product with mc.hard_potential would suffer reward collapse \
                 (product of hard 0/1 labels is almost always 0); use soft labels or set \
                 train.hard_label_policy = \"allow\"",
            ));
        }
        if self.eval.strategies.is_empty() {
            return Err(invalid("eval.strategies", "must list at least one strategy"));
        }
        if self.eval.n_candidates == 0 {
            return Err(invalid("eval.n_candidates", "must be at least 1"));
        }
        if self.eval.scorer != ScorerKind::Model && self.world.feature_dim == 0 {
            // Unreachable while WorldConfig enforces feature_dim >= 1,
            // but keeps the invariant local.
            return Err(invalid("eval.scorer", "oracle scorers need world features"));
        }
        if let Some(backend) = &self.backend {
            backend.validate().map_err(|e| match e {
                BackendError::InvalidConfig { field, message } => {
                    invalid(format!("backend.{field}"), message)
                }
                other => invalid("backend", other.to_string()),
            })?;
        }
        Ok(())
    }

    fn artifact(&self, explicit: &Option<PathBuf>, name: &str) -> PathBuf {
        explicit.clone().unwrap_or_else(|| self.out_dir.join(name))
    }

    pub fn problems_path(&self) -> PathBuf {
        self.artifact(&self.paths.problems, "problems.jsonl")
    }

    pub fn trajectories_path(&self) -> PathBuf {
        self.artifact(&self.paths.trajectories, "trajectories.jsonl")
    }

    pub fn dataset_path(&self) -> PathBuf {
        self.artifact(&self.paths.dataset, "dataset.jsonl")
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.artifact(&self.paths.checkpoint, "checkpoint.json")
    }

    pub fn loss_history_path(&self) -> PathBuf {
        self.artifact(&self.paths.loss_history, "loss_history.csv")
    }

    pub fn report_path(&self) -> PathBuf {
        self.artifact(&self.paths.report, "report.json")
    }

    pub fn scatter_path(&self) -> PathBuf {
        self.artifact(&self.paths.scatter, "scatter.csv")
    }
}
