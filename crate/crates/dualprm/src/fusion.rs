//! Combining the two step rewards into one ranking signal.
//!
//! A step that is *correct so far* with probability `rc` and *leads to the
//! right answer* with probability `rp` supports the compound event "sound
//! and going somewhere" with probability `rc·rp` — [`compound`]. A
//! trajectory's K per-step scores then collapse to one solution-level
//! score via an [`Aggregation`]; the default takes the weakest step, since
//! a chain of reasoning is no more trustworthy than its worst link.
//!
//! Everything here is a pure function over scores in `[0, 1]`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Trajectory;
use crate::labeling::{ScorerError, StepScorer};
use crate::rewardnet::RewardVector;

/// Which reward channel(s) drive ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionStrategy {
    /// Rank by the correctness reward alone.
    CorrectnessOnly,
    /// Rank by the potential reward alone.
    PotentialOnly,
    /// Rank by the per-step product of both rewards.
    Compound,
    /// Rank by the single output of a product-label-trained model. By
    /// convention that model's prediction travels in the correctness
    /// channel of its reward vectors.
    ProductLabelModel,
}

impl FusionStrategy {
    pub const ALL: [FusionStrategy; 4] = [
        FusionStrategy::CorrectnessOnly,
        FusionStrategy::PotentialOnly,
        FusionStrategy::Compound,
        FusionStrategy::ProductLabelModel,
    ];

    pub fn id(self) -> &'static str {
        match self {
            FusionStrategy::CorrectnessOnly => "correctness_only",
            FusionStrategy::PotentialOnly => "potential_only",
            FusionStrategy::Compound => "compound",
            FusionStrategy::ProductLabelModel => "product_label_model",
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.id() == id)
    }

    /// The scalar this strategy reads out of one step's reward vector.
    pub fn step_score(self, v: &RewardVector) -> f64 {
        match self {
            FusionStrategy::CorrectnessOnly | FusionStrategy::ProductLabelModel => v.r_correctness,
            FusionStrategy::PotentialOnly => v.r_potential,
            FusionStrategy::Compound => v.r_compound,
        }
    }
}

impl std::fmt::Display for FusionStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.id())
    }
}

/// How K per-step scores become one solution-level score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    MinStep,
    ProductSteps,
    LastStep,
    MeanStep,
}

impl Aggregation {
    pub const ALL: [Aggregation; 4] = [
        Aggregation::MinStep,
        Aggregation::ProductSteps,
        Aggregation::LastStep,
        Aggregation::MeanStep,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Aggregation::MinStep => "min_step",
            Aggregation::ProductSteps => "product_steps",
            Aggregation::LastStep => "last_step",
            Aggregation::MeanStep => "mean_step",
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.id() == id)
    }
}

impl std::fmt::Display for Aggregation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.id())
    }
}

/// Whether the two rewards are multiplied per step and then aggregated
/// (the default, matching the step-level meaning of the compound score)
/// or each channel is aggregated first and the two summaries multiplied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionOrder {
    FusePerStep,
    AggregateThenFuse,
}

impl FusionOrder {
    pub fn id(self) -> &'static str {
        match self {
            FusionOrder::FusePerStep => "fuse_per_step",
            FusionOrder::AggregateThenFuse => "aggregate_then_fuse",
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        match id {
            "fuse_per_step" => Some(FusionOrder::FusePerStep),
            "aggregate_then_fuse" => Some(FusionOrder::AggregateThenFuse),
            _ => None,
        }
    }
}

impl Default for FusionOrder {
    fn default() -> Self {
        FusionOrder::FusePerStep
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum FusionError {
    #[error("{name} = {value} is outside [0, 1]")]
    RangeError { name: &'static str, value: f64 },
    #[error("cannot aggregate an empty score list")]
    EmptyScores,
}

fn check_unit(name: &'static str, value: f64) -> Result<f64, FusionError> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(FusionError::RangeError { name, value })
    }
}

/// Probability that a step is both correct so far and on a path to the
/// right answer, assuming the two assessments multiply.
pub fn compound(rc: f64, rp: f64) -> Result<f64, FusionError> {
    Ok(check_unit("rc", rc)? * check_unit("rp", rp)?)
}

/// Per-step products of two independently trained scorers — fusing models
/// that were never trained together.
pub fn mix_two_models(
    scorer_a: &dyn StepScorer,
    scorer_b: &dyn StepScorer,
    trajectory: &Trajectory,
) -> Result<Vec<f64>, ScorerError> {
    (0..trajectory.len())
        .map(|i| {
            let a = scorer_a.score(trajectory, i)?;
            let b = scorer_b.score(trajectory, i)?;
            Ok(a * b)
        })
        .collect()
}

/// Collapses per-step scores (each in `[0, 1]`) into one scalar.
pub fn aggregate(step_scores: &[f64], method: Aggregation) -> Result<f64, FusionError> {
    if step_scores.is_empty() {
        return Err(FusionError::EmptyScores);
    }
    for &s in step_scores {
        check_unit("step score", s)?;
    }
    Ok(match method {
        Aggregation::MinStep => step_scores.iter().copied().fold(f64::INFINITY, f64::min),
        Aggregation::ProductSteps => step_scores.iter().product(),
        Aggregation::LastStep => *step_scores.last().expect("nonempty"),
        Aggregation::MeanStep => step_scores.iter().sum::<f64>() / step_scores.len() as f64,
    })
}

/// One solution-level score for a candidate's reward sequence.
pub fn solution_score(
    rewards: &[RewardVector],
    strategy: FusionStrategy,
    aggregation: Aggregation,
    order: FusionOrder,
) -> Result<f64, FusionError> {
    if rewards.is_empty() {
        return Err(FusionError::EmptyScores);
    }
    match (strategy, order) {
        // Single-channel strategies are order-independent.
        (FusionStrategy::Compound, FusionOrder::AggregateThenFuse) => {
            let rc: Vec<f64> = rewards.iter().map(|v| v.r_correctness).collect();
            let rp: Vec<f64> = rewards.iter().map(|v| v.r_potential).collect();
            compound(aggregate(&rc, aggregation)?, aggregate(&rp, aggregation)?)
        }
        _ => {
            let scores: Vec<f64> = rewards.iter().map(|v| strategy.step_score(v)).collect();
            aggregate(&scores, aggregation)
        }
    }
}
