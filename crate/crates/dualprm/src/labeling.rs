//! Step-level label construction.
//!
//! Two label families are built per trajectory:
//!
//! * **potential** — for each proper prefix, the fraction of `N` sampled
//!   completions whose final answer matches gold ([`mc_potential_labels`]).
//!   The last step needs no rollouts: the trajectory already committed an
//!   answer, so its label is the direct comparison against gold;
//! * **correctness** — a per-step score in `[0, 1]` from a
//!   [`StepScorer`] judging whether the reasoning is still sound
//!   ([`correctness_pseudo_labels`]).
//!
//! [`build_dataset`] runs both over a corpus and packages the results as
//! labeled records; it stops at the first failing record so partial label
//! files are never produced silently.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::corpus::{
    AnswerComparator, CorpusError, DualLabels, LabeledTrajectory, Problem, Provenance, Trajectory,
};

/// Extends a trajectory prefix to a full solution attempt.
///
/// `rollout_index` addresses the sampling stream: equal indices must
/// reproduce equal completions, distinct indices should be independent.
pub trait Completer {
    fn complete(&self, prefix: &Trajectory, rollout_index: u64) -> Result<Trajectory, CompleterError>;
}

/// Scores one step of a trajectory in `[0, 1]`.
pub trait StepScorer {
    fn score(&self, trajectory: &Trajectory, step_index: usize) -> Result<f64, ScorerError>;
}

#[derive(Debug, Error)]
#[error("{0}")]
pub struct CompleterError(pub String);

#[derive(Debug, Error)]
#[error("{0}")]
pub struct ScorerError(pub String);

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("completion of {prefix_len}-step prefix (rollout {rollout_index}) failed: {source}")]
    CompleterFailure {
        prefix_len: usize,
        rollout_index: u64,
        source: CompleterError,
    },
    #[error("scoring step {step_index} failed: {source}")]
    ScorerFailure { step_index: usize, source: ScorerError },
    #[error("score {value} at step {step_index} is outside [0, 1]")]
    ScoreOutOfRange { step_index: usize, value: f64 },
    #[error("rollout count must be at least 1, got {0}")]
    InvalidRolloutCount(usize),
    #[error("trajectory references unknown problem {problem_id}")]
    UnknownProblem { problem_id: String },
    #[error("labeling record problem={problem_id} generator={generator_id} failed: {source}")]
    Record {
        problem_id: String,
        generator_id: String,
        source: Box<LabelError>,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Monte-Carlo potential labels for every step of `trajectory`.
///
/// Step `i < K−1` gets the fraction of `num_rollouts` completions of the
/// `(i+1)`-step prefix that reach `gold_answer` under `comparator`. The
/// final step is graded directly from the trajectory's committed answer —
/// its label is exactly 0 or 1 and consumes no rollouts.
///
/// With `hard`, fractional prefix labels collapse to reachability
/// indicators: positive fractions become 1, zero stays 0.
pub fn mc_potential_labels(
    trajectory: &Trajectory,
    gold_answer: &str,
    completer: &dyn Completer,
    num_rollouts: usize,
    comparator: AnswerComparator,
    hard: bool,
) -> Result<Vec<f64>, LabelError> {
    if num_rollouts == 0 {
        return Err(LabelError::InvalidRolloutCount(0));
    }
    let k = trajectory.len();
    let mut labels = Vec::with_capacity(k);
    for i in 0..k - 1 {
        let prefix = trajectory.prefix(i + 1)?;
        let mut hits = 0usize;
        for rollout_index in 0..num_rollouts as u64 {
            let completed = completer.complete(&prefix, rollout_index).map_err(|source| {
                LabelError::CompleterFailure {
                    prefix_len: prefix.len(),
                    rollout_index,
                    source,
                }
            })?;
            if comparator.matches_opt(completed.final_answer.as_deref(), gold_answer) {
                hits += 1;
            }
        }
        let fraction = hits as f64 / num_rollouts as f64;
        labels.push(if hard && fraction > 0.0 { 1.0 } else { fraction });
    }
    let committed = comparator.matches_opt(trajectory.final_answer.as_deref(), gold_answer);
    labels.push(if committed { 1.0 } else { 0.0 });
    Ok(labels)
}

/// Correctness labels for every step, validated to lie in `[0, 1]`.
pub fn correctness_pseudo_labels(
    trajectory: &Trajectory,
    scorer: &dyn StepScorer,
) -> Result<Vec<f64>, LabelError> {
    (0..trajectory.len())
        .map(|step_index| {
            let value = scorer
                .score(trajectory, step_index)
                .map_err(|source| LabelError::ScorerFailure { step_index, source })?;
            if !value.is_finite() || !(0.0..=1.0).contains(&value) {
                return Err(LabelError::ScoreOutOfRange { step_index, value });
            }
            Ok(value)
        })
        .collect()
}

/// Index of the first step judged incorrect (score below 0.5), if any.
pub fn derive_first_error(correctness: &[f64]) -> Option<usize> {
    correctness.iter().position(|&c| c < 0.5)
}

/// Labels a whole corpus: correctness from `scorer`, potential from
/// `num_rollouts` completions per proper prefix, packaged per record.
///
/// Every trajectory must reference a problem present in `problems`.
/// Processing aborts on the first failure, naming the offending record.
pub fn build_dataset(
    problems: &BTreeMap<String, Problem>,
    trajectories: &[Trajectory],
    completer: &dyn Completer,
    scorer: &dyn StepScorer,
    num_rollouts: usize,
    comparator: AnswerComparator,
    hard_potential: bool,
) -> Result<Vec<LabeledTrajectory>, LabelError> {
    let wrap = |trajectory: &Trajectory, source: LabelError| LabelError::Record {
        problem_id: trajectory.problem_id.clone(),
        generator_id: trajectory.generator_id.clone(),
        source: Box::new(source),
    };
    trajectories
        .iter()
        .map(|trajectory| {
            let problem = problems
                .get(&trajectory.problem_id)
                .ok_or_else(|| LabelError::UnknownProblem {
                    problem_id: trajectory.problem_id.clone(),
                })
                .map_err(|e| wrap(trajectory, e))?;
            let correctness = correctness_pseudo_labels(trajectory, scorer)
                .map_err(|e| wrap(trajectory, e))?;
            let potential = mc_potential_labels(
                trajectory,
                &problem.gold_answer,
                completer,
                num_rollouts,
                comparator,
                hard_potential,
            )
            .map_err(|e| wrap(trajectory, e))?;
            let first_error = derive_first_error(&correctness);
            let labels = DualLabels::new(correctness, potential, first_error)
                .map_err(|e| wrap(trajectory, LabelError::Corpus(e)))?;
            LabeledTrajectory::new(
                problem.clone(),
                trajectory.clone(),
                labels,
                Provenance::PseudoLabel,
            )
            .map_err(|e| wrap(trajectory, LabelError::Corpus(e)))
        })
        .collect()
}
