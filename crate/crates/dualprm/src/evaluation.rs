//! Evaluation protocols and analysis exports.
//!
//! Two protocols measure a reward signal's usefulness:
//!
//! * **selection** — among N candidate solutions per problem, rank by a
//!   [`FusionStrategy`] and keep the best ([`best_of_n`]); compared against
//!   majority voting and the pass@k upper bound;
//! * **error detection** — predict the earliest incorrect step from
//!   per-step scores with a fixed 0.5 threshold ([`detect_first_error`]),
//!   scored by the harmonic mean of the two subset accuracies
//!   ([`error_detection_f1`]).
//!
//! [`run_benchmark`] runs both over a corpus for every requested strategy
//! and adds the correlation between the two reward channels, overall and
//! split by candidate correctness. [`export_reward_scatter`] dumps the
//! chosen-best rewards for external plotting.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{normalize_answer, AnswerComparator, CorpusError, DualLabels, Problem, Trajectory};
use crate::fusion::{aggregate, solution_score, Aggregation, FusionError, FusionOrder, FusionStrategy};
use crate::labeling::{ScorerError, StepScorer};
use crate::rewardnet::RewardVector;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("candidate set for problem {problem_id} is empty")]
    EmptyCandidateSet { problem_id: String },
    #[error("candidate belongs to problem {got}, set belongs to {expected}")]
    ProblemMismatch { expected: String, got: String },
    #[error(
        "candidate {candidate_index} of problem {problem_id} has {scored} reward vectors for {steps} steps"
    )]
    UnscoredCandidate {
        problem_id: String,
        candidate_index: usize,
        scored: usize,
        steps: usize,
    },
    #[error("paired lists differ in length: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least {needed} data points, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("variance is zero; correlation is undefined")]
    DegenerateVariance,
    #[error("evaluation corpus is empty")]
    EmptyCorpus,
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// One candidate solution with its per-step rewards and, when available,
/// ground-truth labels for detection scoring.
#[derive(Debug, Clone)]
pub struct ScoredCandidate {
    pub trajectory: Trajectory,
    pub rewards: Vec<RewardVector>,
    pub oracle: Option<DualLabels>,
}

impl ScoredCandidate {
    pub fn new(
        trajectory: Trajectory,
        rewards: Vec<RewardVector>,
        oracle: Option<DualLabels>,
    ) -> Result<Self, EvalError> {
        if let Some(labels) = &oracle {
            if labels.len() != trajectory.len() {
                return Err(EvalError::LengthMismatch {
                    left: labels.len(),
                    right: trajectory.len(),
                });
            }
        }
        Ok(ScoredCandidate {
            trajectory,
            rewards,
            oracle,
        })
    }
}

/// All candidates generated for one problem.
#[derive(Debug, Clone)]
pub struct CandidateSet {
    pub problem: Problem,
    pub candidates: Vec<ScoredCandidate>,
}

impl CandidateSet {
    pub fn new(problem: Problem, candidates: Vec<ScoredCandidate>) -> Result<Self, EvalError> {
        if candidates.is_empty() {
            return Err(EvalError::EmptyCandidateSet {
                problem_id: problem.id.clone(),
            });
        }
        for c in &candidates {
            if c.trajectory.problem_id != problem.id {
                return Err(EvalError::ProblemMismatch {
                    expected: problem.id.clone(),
                    got: c.trajectory.problem_id.clone(),
                });
            }
        }
        Ok(CandidateSet { problem, candidates })
    }
}

/// Builds per-step reward vectors by running a scorer per channel.
pub fn reward_vectors(
    correctness: &dyn StepScorer,
    potential: &dyn StepScorer,
    trajectory: &Trajectory,
) -> Result<Vec<RewardVector>, ScorerError> {
    (0..trajectory.len())
        .map(|i| {
            Ok(RewardVector::new(
                correctness.score(trajectory, i)?,
                potential.score(trajectory, i)?,
            ))
        })
        .collect()
}

/// Shared evaluation knobs.
#[derive(Debug, Clone)]
pub struct EvalParams {
    pub aggregation: Aggregation,
    pub order: FusionOrder,
    pub comparator: AnswerComparator,
}

impl Default for EvalParams {
    fn default() -> Self {
        EvalParams {
            aggregation: Aggregation::MinStep,
            order: FusionOrder::FusePerStep,
            comparator: AnswerComparator::default(),
        }
    }
}

/// Outcome of best-of-N selection on one problem.
#[derive(Debug, Clone, PartialEq)]
pub struct BestOfN {
    pub candidate_index: usize,
    pub score: f64,
    pub correct: bool,
}

fn require_scored(set: &CandidateSet, index: usize) -> Result<(), EvalError> {
    let c = &set.candidates[index];
    if c.rewards.len() != c.trajectory.len() {
        return Err(EvalError::UnscoredCandidate {
            problem_id: set.problem.id.clone(),
            candidate_index: index,
            scored: c.rewards.len(),
            steps: c.trajectory.len(),
        });
    }
    Ok(())
}

/// Picks the highest-scoring candidate under a strategy; ties go to the
/// lowest index. The returned flag grades the chosen final answer.
pub fn best_of_n(
    set: &CandidateSet,
    strategy: FusionStrategy,
    params: &EvalParams,
) -> Result<BestOfN, EvalError> {
    let mut best: Option<(usize, f64)> = None;
    for index in 0..set.candidates.len() {
        require_scored(set, index)?;
        let score = solution_score(
            &set.candidates[index].rewards,
            strategy,
            params.aggregation,
            params.order,
        )?;
        let better = match best {
            None => true,
            Some((_, s)) => score > s,
        };
        if better {
            best = Some((index, score));
        }
    }
    let (candidate_index, score) = best.expect("candidate sets are nonempty");
    let chosen = &set.candidates[candidate_index];
    let correct = params.comparator.matches_opt(
        chosen.trajectory.final_answer.as_deref(),
        &set.problem.gold_answer,
    );
    Ok(BestOfN {
        candidate_index,
        score,
        correct,
    })
}

/// The most frequent non-null answer, after comparator canonicalization.
///
/// Ties go to the group whose first representative has the lowest
/// candidate index. Null answers form their own bucket and never win
/// while any candidate committed an answer.
pub fn majority_vote(set: &CandidateSet, comparator: AnswerComparator) -> Option<String> {
    let canonical = |s: &str| match comparator {
        AnswerComparator::NormalizedExact => normalize_answer(s),
        AnswerComparator::Exact => s.to_string(),
    };
    // (key, count, first index) per non-null answer group, in first-seen order.
    let mut groups: Vec<(String, usize, usize)> = Vec::new();
    for (index, candidate) in set.candidates.iter().enumerate() {
        let Some(answer) = candidate.trajectory.final_answer.as_deref() else {
            continue;
        };
        let key = canonical(answer);
        match groups.iter_mut().find(|(k, _, _)| *k == key) {
            Some((_, count, _)) => *count += 1,
            None => groups.push((key, 1, index)),
        }
    }
    groups
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.2.cmp(&a.2)))
        .map(|(key, _, _)| key)
}

/// Whether any candidate committed the gold answer.
pub fn pass_at_k(set: &CandidateSet, comparator: AnswerComparator) -> bool {
    set.candidates.iter().any(|c| {
        comparator.matches_opt(c.trajectory.final_answer.as_deref(), &set.problem.gold_answer)
    })
}

/// Fraction of candidates that committed the gold answer — the expected
/// accuracy of sampling a single candidate.
pub fn pass_at_1(set: &CandidateSet, comparator: AnswerComparator) -> f64 {
    let hits = set
        .candidates
        .iter()
        .filter(|c| {
            comparator.matches_opt(c.trajectory.final_answer.as_deref(), &set.problem.gold_answer)
        })
        .count();
    hits as f64 / set.candidates.len() as f64
}

/// Earliest step whose score falls strictly below 0.5; absent means "all
/// steps correct". A score of exactly 0.5 counts as correct.
pub fn detect_first_error(step_scores: &[f64]) -> Option<usize> {
    step_scores.iter().position(|&s| s < 0.5)
}

/// Detection quality over a set of (prediction, gold) first-error pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Report {
    /// Harmonic mean of the two subset accuracies; when one subset is
    /// empty, the other subset's accuracy; absent when there are no items.
    pub f1: Option<f64>,
    /// Exact-match accuracy on items whose gold marks an error.
    pub acc_err: Option<f64>,
    /// Accuracy on items whose gold marks a fully correct trajectory.
    pub acc_corr: Option<f64>,
    /// True when either subset was empty (f1 degrades to one accuracy).
    pub degenerate: bool,
}

/// Scores first-error predictions against gold indices.
pub fn error_detection_f1(
    predictions: &[Option<usize>],
    gold: &[Option<usize>],
) -> Result<F1Report, EvalError> {
    if predictions.len() != gold.len() {
        return Err(EvalError::LengthMismatch {
            left: predictions.len(),
            right: gold.len(),
        });
    }
    let mut err_total = 0usize;
    let mut err_hits = 0usize;
    let mut corr_total = 0usize;
    let mut corr_hits = 0usize;
    for (p, g) in predictions.iter().zip(gold) {
        match g {
            Some(_) => {
                err_total += 1;
                if p == g {
                    err_hits += 1;
                }
            }
            None => {
                corr_total += 1;
                if p.is_none() {
                    corr_hits += 1;
                }
            }
        }
    }
    let acc_err = (err_total > 0).then(|| err_hits as f64 / err_total as f64);
    let acc_corr = (corr_total > 0).then(|| corr_hits as f64 / corr_total as f64);
    let (f1, degenerate) = match (acc_err, acc_corr) {
        (Some(e), Some(c)) => {
            let f1 = if e + c == 0.0 { 0.0 } else { 2.0 * e * c / (e + c) };
            (Some(f1), false)
        }
        (Some(e), None) => (Some(e), true),
        (None, Some(c)) => (Some(c), true),
        (None, None) => (None, true),
    };
    Ok(F1Report {
        f1,
        acc_err,
        acc_corr,
        degenerate,
    })
}

/// Sample Pearson correlation coefficient.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, EvalError> {
    if xs.len() != ys.len() {
        return Err(EvalError::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(EvalError::InsufficientData {
            needed: 2,
            got: xs.len(),
        });
    }
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        let dx = x - mean_x;
        let dy = y - mean_y;
        cov += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if var_x == 0.0 || var_y == 0.0 {
        return Err(EvalError::DegenerateVariance);
    }
    Ok(cov / (var_x.sqrt() * var_y.sqrt()))
}

/// Area under the ROC curve by the rank-sum formulation, with average
/// ranks on tied scores. Requires both classes present.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::DegenerateVariance);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));
    let mut ranks = vec![0.0f64; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1 ..= j+1 share their average.
        let avg = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    let pos_rank_sum: f64 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l)
        .map(|(r, _)| r)
        .sum();
    Ok((pos_rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0) / (n_pos * n_neg) as f64)
}

/// All benchmark metrics for one strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub strategy: String,
    pub aggregation: String,
    pub fusion_order: String,
    pub best_of_n_accuracy: f64,
    pub maj_at_k: f64,
    pub pass_at_k: f64,
    pub pass_at_1: f64,
    pub f1_overall: Option<f64>,
    pub acc_err: Option<f64>,
    pub acc_corr: Option<f64>,
    pub degenerate_split: bool,
    pub pearson_all: Option<f64>,
    pub pearson_correct: Option<f64>,
    pub pearson_incorrect: Option<f64>,
    pub n_problems: usize,
    pub n_candidates: usize,
}

/// Strategy-independent facts about one candidate set.
struct SetSummary {
    passed: bool,
    maj_correct: bool,
    single_sample_accuracy: f64,
    /// Per candidate: aggregated correctness channel, aggregated potential
    /// channel, correctness of the committed answer.
    channel_pairs: Vec<(f64, f64, bool)>,
}

fn summarize_set(set: &CandidateSet, params: &EvalParams) -> Result<SetSummary, EvalError> {
    let gold = &set.problem.gold_answer;
    let maj_correct = match majority_vote(set, params.comparator) {
        Some(answer) => params.comparator.matches(&answer, gold),
        None => false,
    };
    let mut channel_pairs = Vec::with_capacity(set.candidates.len());
    for index in 0..set.candidates.len() {
        require_scored(set, index)?;
        let candidate = &set.candidates[index];
        let rc: Vec<f64> = candidate.rewards.iter().map(|v| v.r_correctness).collect();
        let rp: Vec<f64> = candidate.rewards.iter().map(|v| v.r_potential).collect();
        let correct = params
            .comparator
            .matches_opt(candidate.trajectory.final_answer.as_deref(), gold);
        channel_pairs.push((
            aggregate(&rc, params.aggregation)?,
            aggregate(&rp, params.aggregation)?,
            correct,
        ));
    }
    Ok(SetSummary {
        passed: pass_at_k(set, params.comparator),
        maj_correct,
        single_sample_accuracy: pass_at_1(set, params.comparator),
        channel_pairs,
    })
}

fn pearson_or_none(xs: &[f64], ys: &[f64]) -> Option<f64> {
    pearson(xs, ys).ok()
}

/// Runs the full benchmark: one report per requested strategy, all over
/// the same candidate sets. Deterministic and order-insensitive over
/// problems (every metric is a mean of per-problem or per-candidate
/// terms).
pub fn run_benchmark(
    sets: &[CandidateSet],
    strategies: &[FusionStrategy],
    params: &EvalParams,
) -> Result<Vec<EvalReport>, EvalError> {
    if strategies.is_empty() {
        return Ok(Vec::new());
    }
    if sets.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let summaries: Vec<SetSummary> = sets
        .iter()
        .map(|set| summarize_set(set, params))
        .collect::<Result<_, _>>()?;
    let n_problems = sets.len();
    let n_candidates = sets
        .iter()
        .map(|s| s.candidates.len())
        .max()
        .expect("nonempty corpus");
    let rate = |count: usize| count as f64 / n_problems as f64;
    let pass_k = rate(summaries.iter().filter(|s| s.passed).count());
    let maj_k = rate(summaries.iter().filter(|s| s.maj_correct).count());
    let pass_1 =
        summaries.iter().map(|s| s.single_sample_accuracy).sum::<f64>() / n_problems as f64;

    let all_pairs: Vec<&(f64, f64, bool)> =
        summaries.iter().flat_map(|s| &s.channel_pairs).collect();
    let split = |keep: &dyn Fn(bool) -> bool| -> (Vec<f64>, Vec<f64>) {
        all_pairs
            .iter()
            .filter(|(_, _, c)| keep(*c))
            .map(|(rc, rp, _)| (*rc, *rp))
            .unzip()
    };
    let (rc_all, rp_all) = split(&|_| true);
    let (rc_correct, rp_correct) = split(&|c| c);
    let (rc_incorrect, rp_incorrect) = split(&|c| !c);
    let pearson_all = pearson_or_none(&rc_all, &rp_all);
    let pearson_correct = pearson_or_none(&rc_correct, &rp_correct);
    let pearson_incorrect = pearson_or_none(&rc_incorrect, &rp_incorrect);

    let mut reports = Vec::with_capacity(strategies.len());
    for &strategy in strategies {
        let mut bon_hits = 0usize;
        let mut predictions = Vec::new();
        let mut gold = Vec::new();
        for set in sets {
            if best_of_n(set, strategy, params)?.correct {
                bon_hits += 1;
            }
            for candidate in &set.candidates {
                let Some(labels) = &candidate.oracle else {
                    continue;
                };
                let scores: Vec<f64> =
                    candidate.rewards.iter().map(|v| strategy.step_score(v)).collect();
                predictions.push(detect_first_error(&scores));
                gold.push(labels.first_error_index);
            }
        }
        let detection = error_detection_f1(&predictions, &gold)?;
        reports.push(EvalReport {
            strategy: strategy.id().to_string(),
            aggregation: params.aggregation.id().to_string(),
            fusion_order: params.order.id().to_string(),
            best_of_n_accuracy: rate(bon_hits),
            maj_at_k: maj_k,
            pass_at_k: pass_k,
            pass_at_1: pass_1,
            f1_overall: detection.f1,
            acc_err: detection.acc_err,
            acc_corr: detection.acc_corr,
            degenerate_split: detection.degenerate,
            pearson_all,
            pearson_correct,
            pearson_incorrect,
            n_problems,
            n_candidates,
        });
    }
    Ok(reports)
}

/// Writes one CSV row per problem describing the best-of-N choice under
/// `strategy`: both aggregated reward channels, a chosen flag (always 1 —
/// only chosen candidates are exported), and the correctness flag.
/// Returns the number of data rows written.
pub fn export_reward_scatter(
    sets: &[CandidateSet],
    strategy: FusionStrategy,
    params: &EvalParams,
    path: &std::path::Path,
) -> Result<usize, EvalError> {
    let mut out = String::from("r_correctness,r_potential,chosen,correct\n");
    let mut rows = 0usize;
    for set in sets {
        let choice = best_of_n(set, strategy, params)?;
        let chosen = &set.candidates[choice.candidate_index];
        let rc: Vec<f64> = chosen.rewards.iter().map(|v| v.r_correctness).collect();
        let rp: Vec<f64> = chosen.rewards.iter().map(|v| v.r_potential).collect();
        out.push_str(&format!(
            "{:.6},{:.6},1,{}\n",
            aggregate(&rc, params.aggregation)?,
            aggregate(&rp, params.aggregation)?,
            u8::from(choice.correct),
        ));
        rows += 1;
    }
    crate::corpus::write_atomic(path, out.as_bytes())?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn problem(gold: &str) -> Problem {
        Problem::new("p1", "what is x", gold).unwrap()
    }

    /// Candidate with constant per-step rewards.
    fn candidate(
        answer: Option<&str>,
        rc: &[f64],
        rp: &[f64],
        oracle_first_error: Option<Option<usize>>,
    ) -> ScoredCandidate {
        let k = rc.len();
        let t = Trajectory::new(
            "p1",
            "g",
            (0..k).map(|i| format!("s{i}")).collect(),
            answer.map(str::to_string),
        )
        .unwrap();
        let rewards: Vec<RewardVector> = rc
            .iter()
            .zip(rp)
            .map(|(&c, &p)| RewardVector::new(c, p))
            .collect();
        let oracle = oracle_first_error.map(|first| {
            let correctness: Vec<f64> = (0..k)
                .map(|i| match first {
                    Some(j) if i >= j => 0.0,
                    _ => 1.0,
                })
                .collect();
            DualLabels::new(correctness, vec![0.5; k], first).unwrap()
        });
        ScoredCandidate::new(t, rewards, oracle).unwrap()
    }

    fn set(gold: &str, candidates: Vec<ScoredCandidate>) -> CandidateSet {
        CandidateSet::new(problem(gold), candidates).unwrap()
    }

    #[test]
    fn best_of_n_takes_argmax_with_low_tie() {
        let s = set(
            "9",
            vec![
                candidate(Some("1"), &[0.2], &[1.0], None),
                candidate(Some("9"), &[0.9], &[1.0], None),
                candidate(Some("2"), &[0.5], &[1.0], None),
            ],
        );
        let params = EvalParams::default();
        let choice = best_of_n(&s, FusionStrategy::CorrectnessOnly, &params).unwrap();
        assert_eq!(choice.candidate_index, 1);
        assert!(choice.correct);
        let tied = set(
            "9",
            vec![
                candidate(Some("3"), &[0.7], &[1.0], None),
                candidate(Some("9"), &[0.7], &[1.0], None),
            ],
        );
        let choice = best_of_n(&tied, FusionStrategy::CorrectnessOnly, &params).unwrap();
        assert_eq!(choice.candidate_index, 0, "ties break to the lowest index");
        assert!(!choice.correct);
    }

    #[test]
    fn unscored_candidates_are_rejected() {
        let mut c = candidate(Some("1"), &[0.5, 0.5], &[0.5, 0.5], None);
        c.rewards.pop();
        let s = set("1", vec![c]);
        assert!(matches!(
            best_of_n(&s, FusionStrategy::Compound, &EvalParams::default()),
            Err(EvalError::UnscoredCandidate { candidate_index: 0, .. })
        ));
    }

    #[test]
    fn candidate_set_validates_membership() {
        let stray = ScoredCandidate::new(
            Trajectory::new("other", "g", vec!["s".to_string()], None).unwrap(),
            vec![RewardVector::new(1.0, 1.0)],
            None,
        )
        .unwrap();
        assert!(matches!(
            CandidateSet::new(problem("1"), vec![stray]),
            Err(EvalError::ProblemMismatch { .. })
        ));
        assert!(matches!(
            CandidateSet::new(problem("1"), vec![]),
            Err(EvalError::EmptyCandidateSet { .. })
        ));
    }

    #[test]
    fn majority_vote_rules() {
        let answers = |list: Vec<Option<&str>>| {
            set(
                "4",
                list.into_iter()
                    .map(|a| candidate(a, &[1.0], &[1.0], None))
                    .collect(),
            )
        };
        let cmp = AnswerComparator::default();
        assert_eq!(
            majority_vote(&answers(vec![Some("4"), Some("4"), Some("7")]), cmp),
            Some("4".into())
        );
        assert_eq!(
            majority_vote(&answers(vec![Some("4"), Some("7")]), cmp),
            Some("4".into()),
            "tie goes to the earlier first occurrence"
        );
        assert_eq!(
            majority_vote(&answers(vec![Some("7"), Some("4"), Some("4"), Some("7")]), cmp),
            Some("7".into())
        );
        assert_eq!(
            majority_vote(&answers(vec![None, None, Some("9"), None]), cmp),
            Some("9".into()),
            "null answers never beat a committed one"
        );
        assert_eq!(majority_vote(&answers(vec![None, None]), cmp), None);
        assert_eq!(
            majority_vote(&answers(vec![Some("+4"), Some("4 "), Some("7")]), cmp),
            Some("4".into()),
            "normalization merges buckets"
        );
    }

    #[test]
    fn pass_rates() {
        let cmp = AnswerComparator::default();
        let s = set(
            "5",
            vec![
                candidate(Some("1"), &[1.0], &[1.0], None),
                candidate(Some("5"), &[1.0], &[1.0], None),
                candidate(None, &[1.0], &[1.0], None),
                candidate(Some("5"), &[1.0], &[1.0], None),
            ],
        );
        assert!(pass_at_k(&s, cmp));
        assert_eq!(pass_at_1(&s, cmp), 0.5);
        let miss = set("5", vec![candidate(Some("1"), &[1.0], &[1.0], None)]);
        assert!(!pass_at_k(&miss, cmp));
        assert_eq!(pass_at_1(&miss, cmp), 0.0);
    }

    #[test]
    fn first_error_threshold_is_strict() {
        assert_eq!(detect_first_error(&[0.9, 0.8, 0.3, 0.2]), Some(2));
        assert_eq!(detect_first_error(&[0.6, 0.51]), None);
        assert_eq!(detect_first_error(&[0.5]), None);
        assert_eq!(detect_first_error(&[0.499]), Some(0));
    }

    #[test]
    fn f1_combines_subset_accuracies() {
        // Two error items (one hit), two correct items (both hit).
        let predictions = vec![Some(1), Some(0), None, None];
        let gold = vec![Some(1), Some(2), None, None];
        let report = error_detection_f1(&predictions, &gold).unwrap();
        assert_eq!(report.acc_err, Some(0.5));
        assert_eq!(report.acc_corr, Some(1.0));
        assert!((report.f1.unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!(!report.degenerate);

        let perfect = error_detection_f1(&gold, &gold).unwrap();
        assert_eq!(perfect.f1, Some(1.0));

        // Predicting "no error" everywhere scores zero F1 when half the
        // gold items contain errors.
        let lazy = vec![None, None, None, None];
        let half = vec![Some(0), Some(1), None, None];
        let report = error_detection_f1(&lazy, &half).unwrap();
        assert_eq!(report.acc_err, Some(0.0));
        assert_eq!(report.acc_corr, Some(1.0));
        assert_eq!(report.f1, Some(0.0));

        // Off-by-one predictions on the error side count as misses.
        let near = error_detection_f1(&[Some(2)], &[Some(1)]).unwrap();
        assert_eq!(near.acc_err, Some(0.0));

        let degenerate = error_detection_f1(&[None, Some(0)], &[None, None]).unwrap();
        assert!(degenerate.degenerate);
        assert_eq!(degenerate.f1, Some(0.5), "falls back to the defined subset");
        assert!(matches!(
            error_detection_f1(&[None], &[None, None]),
            Err(EvalError::LengthMismatch { .. })
        ));
        let empty = error_detection_f1(&[], &[]).unwrap();
        assert_eq!(empty.f1, None);
        assert!(empty.degenerate);
    }

    #[test]
    fn pearson_matches_independent_computation() {
        let xs = [1.0, 2.0, 3.0];
        assert!((pearson(&xs, &[1.0, 2.0, 3.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&xs, &[-1.0, -2.0, -3.0]).unwrap() + 1.0).abs() < 1e-12);
        // Straight-line two-pass reference for a non-trivial pair.
        let ys = [2.0, 4.0, 6.5];
        let n = 3.0;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum::<f64>().sqrt();
        let sy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum::<f64>().sqrt();
        let expected = cov / (sx * sy);
        assert!((pearson(&xs, &ys).unwrap() - expected).abs() < 1e-12);
        assert!(matches!(
            pearson(&xs, &[1.0, 1.0, 1.0]),
            Err(EvalError::DegenerateVariance)
        ));
        assert!(matches!(pearson(&[1.0], &[1.0]), Err(EvalError::InsufficientData { .. })));
        assert!(matches!(pearson(&xs, &[1.0]), Err(EvalError::LengthMismatch { .. })));
    }

    #[test]
    fn auc_handles_separation_and_ties() {
        let perfect = auc(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap();
        assert_eq!(perfect, 1.0);
        let inverted = auc(&[0.1, 0.2, 0.8, 0.9], &[true, true, false, false]).unwrap();
        assert_eq!(inverted, 0.0);
        let uninformative = auc(&[0.5, 0.5, 0.5, 0.5], &[true, false, true, false]).unwrap();
        assert_eq!(uninformative, 0.5);
        // One positive above one negative, one tie pair: (1 + 0.5 + 1) / 4... computed by hand:
        // scores pos {0.8, 0.5}, neg {0.5, 0.2}: pairs: (0.8>0.5)=1, (0.8>0.2)=1,
        // (0.5=0.5)=0.5, (0.5>0.2)=1 → 3.5/4 = 0.875.
        let mixed = auc(&[0.8, 0.5, 0.5, 0.2], &[true, true, false, false]).unwrap();
        assert!((mixed - 0.875).abs() < 1e-12);
        assert!(matches!(
            auc(&[0.5, 0.6], &[true, true]),
            Err(EvalError::DegenerateVariance)
        ));
    }

    #[test]
    fn benchmark_reports_all_metrics() {
        let sets = vec![
            set(
                "9",
                vec![
                    candidate(Some("9"), &[0.9, 0.9], &[0.8, 0.8], Some(None)),
                    candidate(Some("1"), &[0.4, 0.3], &[0.5, 0.2], Some(Some(0))),
                ],
            ),
            set(
                "9",
                vec![
                    candidate(Some("2"), &[0.8, 0.2], &[0.9, 0.4], Some(Some(1))),
                    candidate(Some("2"), &[0.6, 0.4], &[0.7, 0.7], Some(Some(1))),
                ],
            ),
        ];
        let reports = run_benchmark(
            &sets,
            &[FusionStrategy::Compound, FusionStrategy::CorrectnessOnly],
            &EvalParams::default(),
        )
        .unwrap();
        assert_eq!(reports.len(), 2);
        let compound = &reports[0];
        assert_eq!(compound.strategy, "compound");
        assert_eq!(compound.n_problems, 2);
        assert_eq!(compound.n_candidates, 2);
        assert_eq!(compound.pass_at_k, 0.5);
        assert_eq!(compound.pass_at_1, 0.25);
        // Problem 1 ties 9-vs-1 and the earlier candidate's 9 wins (gold);
        // problem 2 settles on the wrong answer 2.
        assert_eq!(compound.maj_at_k, 0.5);
        assert_eq!(compound.best_of_n_accuracy, 0.5);
        // Detection under the correctness channel is exact for these
        // hand-built candidates: scores cross 0.5 exactly at gold indices.
        let correctness = &reports[1];
        assert_eq!(correctness.f1_overall, Some(1.0));
        assert!(compound.pearson_all.is_some());
        assert!(compound.pass_at_k >= compound.best_of_n_accuracy);
        assert!(compound.pass_at_k >= compound.maj_at_k);
        assert!(run_benchmark(&sets, &[], &EvalParams::default()).unwrap().is_empty());
        assert!(matches!(
            run_benchmark(&[], &[FusionStrategy::Compound], &EvalParams::default()),
            Err(EvalError::EmptyCorpus)
        ));
    }

    #[test]
    fn single_candidate_best_of_n_equals_pass_at_1() {
        let sets = vec![
            set("1", vec![candidate(Some("1"), &[0.2], &[0.2], None)]),
            set("1", vec![candidate(Some("2"), &[0.9], &[0.9], None)]),
            set("1", vec![candidate(None, &[0.9], &[0.9], None)]),
        ];
        let reports =
            run_benchmark(&sets, &[FusionStrategy::Compound], &EvalParams::default()).unwrap();
        assert_eq!(reports[0].best_of_n_accuracy, reports[0].pass_at_1);
        assert_eq!(reports[0].best_of_n_accuracy, 1.0 / 3.0);
    }

    #[test]
    fn scatter_export_writes_fixed_schema() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scatter.csv");
        let sets = vec![
            set(
                "9",
                vec![
                    candidate(Some("9"), &[0.875, 1.0], &[0.75, 1.0], None),
                    candidate(Some("1"), &[0.1, 0.1], &[0.1, 0.1], None),
                ],
            ),
            set("9", vec![candidate(Some("3"), &[0.4, 0.5], &[0.2, 0.9], None)]),
        ];
        let rows = export_reward_scatter(
            &sets,
            FusionStrategy::Compound,
            &EvalParams::default(),
            &path,
        )
        .unwrap();
        assert_eq!(rows, 2);
        let content = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = content.lines().collect();
        assert_eq!(lines[0], "r_correctness,r_potential,chosen,correct");
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1], "0.875000,0.750000,1,1");
        assert_eq!(lines[2], "0.400000,0.200000,1,0");
    }

    #[test]
    fn benchmark_is_permutation_invariant() {
        let a = set(
            "9",
            vec![
                candidate(Some("9"), &[0.9], &[0.9], Some(None)),
                candidate(Some("1"), &[0.2], &[0.4], Some(Some(0))),
            ],
        );
        let b = set(
            "9",
            vec![
                candidate(Some("4"), &[0.7], &[0.3], Some(Some(0))),
                candidate(Some("9"), &[0.6], &[0.8], Some(None)),
            ],
        );
        let params = EvalParams::default();
        let forward =
            run_benchmark(&[a.clone(), b.clone()], &[FusionStrategy::Compound], &params).unwrap();
        let backward = run_benchmark(&[b, a], &[FusionStrategy::Compound], &params).unwrap();
        assert_eq!(forward, backward);
    }

    proptest! {
        #[test]
        fn pass_at_k_upper_bounds_selectors(
            seed in 0u64..200,
            n_problems in 1usize..6,
            n_candidates in 1usize..6,
        ) {
            let mut rng = crate::seeds::derive_rng(seed, &["evalprop"]);
            use rand::Rng;
            let sets: Vec<CandidateSet> = (0..n_problems).map(|_| {
                let candidates = (0..n_candidates).map(|_| {
                    let answer = if rng.gen_bool(0.2) {
                        None
                    } else {
                        Some(rng.gen_range(0..3).to_string())
                    };
                    let k = rng.gen_range(1..4);
                    let rc: Vec<f64> = (0..k).map(|_| rng.gen()).collect();
                    let rp: Vec<f64> = (0..k).map(|_| rng.gen()).collect();
                    candidate(answer.as_deref(), &rc, &rp, None)
                }).collect();
                set("1", candidates)
            }).collect();
            for strategy in FusionStrategy::ALL {
                let reports = run_benchmark(&sets, &[strategy], &EvalParams::default()).unwrap();
                let r = &reports[0];
                prop_assert!(r.pass_at_k >= r.best_of_n_accuracy - 1e-12);
                prop_assert!(r.pass_at_k >= r.maj_at_k - 1e-12);
                prop_assert!(r.pass_at_k >= r.pass_at_1 - 1e-12);
            }
        }

        #[test]
        fn argmax_survives_monotone_transforms(
            seed in 0u64..200,
            n_candidates in 2usize..6,
        ) {
            let mut rng = crate::seeds::derive_rng(seed, &["monotone"]);
            use rand::Rng;
            let raw: Vec<Vec<f64>> = (0..n_candidates)
                .map(|_| (0..3).map(|_| rng.gen()).collect())
                .collect();
            let build = |transform: &dyn Fn(f64) -> f64| -> CandidateSet {
                set(
                    "1",
                    raw.iter()
                        .map(|scores| {
                            let rc: Vec<f64> = scores.iter().map(|&s| transform(s)).collect();
                            let rp = vec![1.0; rc.len()];
                            candidate(Some("1"), &rc, &rp, None)
                        })
                        .collect(),
                )
            };
            let params = EvalParams::default();
            let plain = best_of_n(&build(&|x| x), FusionStrategy::CorrectnessOnly, &params).unwrap();
            let squeezed = best_of_n(&build(&|x| x.sqrt()), FusionStrategy::CorrectnessOnly, &params).unwrap();
            prop_assert_eq!(plain.candidate_index, squeezed.candidate_index);
        }
    }
}
