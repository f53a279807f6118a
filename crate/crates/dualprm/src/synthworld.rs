//! A seeded stochastic reasoning world with an analytic oracle.
//!
//! The world stands in for an LLM generator at desk scale. Each trajectory
//! follows a two-state absorbing chain: a solution starts "on track" and at
//! every step independently derails with probability `step_error_prob`; a
//! derailed solution never re-enters the on-track state, but when the
//! answer is committed (as part of the last step) it may still land on the
//! gold answer with probability `recovery_prob` — modeling self-correction,
//! where erroneous intermediate steps still lead to a correct final
//! outcome.
//!
//! Because the chain is exactly solvable, every quantity the pipeline
//! estimates has a closed form here ([`World::true_potential`]), which is
//! what makes downstream claims checkable.
//!
//! Step texts carry three templated annotations:
//!
//! * a **check cue** and a **progress cue** — two *observation channels*
//!   that report the current latent state but are independently flipped
//!   with probability `obs_flip_prob`. Observation-limited scorers (the
//!   [`PosteriorCorrectnessScorer`] / [`PosteriorPotentialScorer`] pair)
//!   see only these. Giving the two signals disjoint evidence is what makes
//!   their product genuinely more informative than either factor;
//! * a **trace tag** — the exact latent state, which lets the completer
//!   resume the generative process mid-trajectory and gives label builders
//!   and tests an exact reference ([`LatentCorrectnessScorer`] /
//!   [`LatentPotentialScorer`]).
//!
//! All sampling is a pure function of `(config, problem, stream, index)`;
//! parallel callers draw from independent derived streams.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{extract_final_answer, DualLabels, LabeledTrajectory, Problem, Provenance, Trajectory};
use crate::labeling::{Completer, CompleterError, ScorerError, StepScorer};
use crate::rewardnet::RewardVector;
use crate::seeds;

/// Parameters of the synthetic world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldConfig {
    pub num_problems: usize,
    /// Steps per trajectory; the answer is committed as part of the last step.
    pub max_steps: usize,
    /// Per-step probability `e` of introducing the first error.
    pub step_error_prob: f64,
    /// Probability `rho` that a derailed trajectory still commits the gold
    /// answer.
    pub recovery_prob: f64,
    /// Probability that each observation cue misreports the latent state,
    /// independently per step and per channel. Zero makes the cues exact.
    pub obs_flip_prob: f64,
    pub answer_space_size: usize,
    pub feature_dim: usize,
    /// Scale of uniform additive noise on step features.
    pub feature_noise: f64,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            num_problems: 100,
            max_steps: 8,
            step_error_prob: 0.2,
            recovery_prob: 0.1,
            obs_flip_prob: 0.0,
            answer_space_size: 10,
            feature_dim: 8,
            feature_noise: 0.0,
            seed: 0,
        }
    }
}

impl WorldConfig {
    /// Checks every invariant; the error names the offending field.
    pub fn validate(&self) -> Result<(), WorldError> {
        let prob_fields = [
            ("step_error_prob", self.step_error_prob),
            ("recovery_prob", self.recovery_prob),
            ("obs_flip_prob", self.obs_flip_prob),
        ];
        for (field, value) in prob_fields {
            if !(0.0..=1.0).contains(&value) {
                return Err(WorldError::InvalidConfig {
                    field,
                    message: format!("{value} is not a probability in [0, 1]"),
                });
            }
        }
        if self.num_problems < 1 {
            return Err(WorldError::InvalidConfig {
                field: "num_problems",
                message: "must be at least 1".into(),
            });
        }
        if self.max_steps < 1 {
            return Err(WorldError::InvalidConfig {
                field: "max_steps",
                message: "must be at least 1".into(),
            });
        }
        if self.answer_space_size < 2 {
            return Err(WorldError::InvalidConfig {
                field: "answer_space_size",
                message: "must be at least 2".into(),
            });
        }
        if self.feature_dim < 1 {
            return Err(WorldError::InvalidConfig {
                field: "feature_dim",
                message: "must be at least 1".into(),
            });
        }
        if !(self.feature_noise >= 0.0 && self.feature_noise.is_finite()) {
            return Err(WorldError::InvalidConfig {
                field: "feature_noise",
                message: format!("{} is not a finite nonnegative scale", self.feature_noise),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("invalid world config: {field}: {message}")]
    InvalidConfig { field: &'static str, message: String },
    #[error("unknown problem {id}")]
    UnknownProblem { id: String },
    #[error("prefix of {len} steps cannot be extended beyond max_steps {max_steps}")]
    PrefixTooLong { len: usize, max_steps: usize },
    #[error("invalid latent state: {0}")]
    InvalidLatent(String),
    #[error("step {step} carries no parsable state annotations")]
    MissingStepMeta { step: usize },
    #[error("step index {index} outside 0..{len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("corpus error: {0}")]
    Corpus(#[from] crate::corpus::CorpusError),
}

/// The hidden state of one trajectory after some number of steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatentState {
    /// Whether the chain has derailed at or before the current step.
    pub error_occurred: bool,
    pub steps_taken: usize,
    /// The committed answer id; set exactly when `steps_taken == max_steps`.
    pub committed_answer: Option<usize>,
}

/// A sampled trajectory together with its exact labels and latent trace.
#[derive(Debug, Clone)]
pub struct SampledTrajectory {
    pub trajectory: Trajectory,
    /// Oracle labels: hard correctness indicators and analytic potentials.
    pub labels: DualLabels,
    /// Latent state after each step (`latent[i].steps_taken == i + 1`).
    pub latent: Vec<LatentState>,
}

/// Per-step annotations parsed back out of synthetic step text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepMeta {
    pub check_ok: bool,
    pub progress_ok: bool,
    pub trace_ok: bool,
}

const NARRATIVES: [&str; 8] = [
    "expand the brackets",
    "substitute the known values",
    "simplify the fraction",
    "factor the expression",
    "isolate the unknown",
    "apply the identity",
    "collect like terms",
    "rewrite the relation",
];

/// Parses the `(check: …, progress: …, trace: …)` annotation block.
///
/// Returns `None` when any of the three tags is missing, which marks text
/// that did not come from this world.
pub fn parse_step_meta(text: &str) -> Option<StepMeta> {
    let tag = |ok: &str, bad: &str| -> Option<bool> {
        if text.contains(ok) {
            Some(true)
        } else if text.contains(bad) {
            Some(false)
        } else {
            None
        }
    };
    Some(StepMeta {
        check_ok: tag("check: passed", "check: failed")?,
        progress_ok: tag("progress: steady", "progress: stalled")?,
        trace_ok: tag("trace: ok", "trace: err")?,
    })
}

/// One realized step of the generative process.
struct StepDraw {
    error_after: bool,
    check_ok: bool,
    progress_ok: bool,
    narrative: &'static str,
}

/// The synthetic reasoning world.
#[derive(Debug, Clone)]
pub struct World {
    cfg: WorldConfig,
}

impl World {
    pub fn new(cfg: WorldConfig) -> Result<Self, WorldError> {
        cfg.validate()?;
        Ok(World { cfg })
    }

    pub fn cfg(&self) -> &WorldConfig {
        &self.cfg
    }

    pub fn problem_id(index: usize) -> String {
        format!("synth-{index:05}")
    }

    /// Recovers the problem index from a world-issued problem id.
    pub fn problem_index_of(&self, problem_id: &str) -> Result<usize, WorldError> {
        let unknown = || WorldError::UnknownProblem {
            id: problem_id.to_string(),
        };
        let index: usize = problem_id
            .strip_prefix("synth-")
            .ok_or_else(unknown)?
            .parse()
            .map_err(|_| unknown())?;
        if index >= self.cfg.num_problems {
            return Err(unknown());
        }
        Ok(index)
    }

    /// The gold answer id for a problem, drawn from the problem's own stream.
    pub fn gold_answer_id(&self, index: usize) -> usize {
        let mut rng = seeds::derive_rng(self.cfg.seed, &["gold", &index.to_string()]);
        rng.gen_range(0..self.cfg.answer_space_size)
    }

    pub fn problem(&self, index: usize) -> Result<Problem, WorldError> {
        if index >= self.cfg.num_problems {
            return Err(WorldError::UnknownProblem {
                id: World::problem_id(index),
            });
        }
        let gold = self.gold_answer_id(index);
        Problem::new(
            World::problem_id(index),
            format!(
                "Work out the value of the quantity Q{index} by simplifying the \
                 given relation over {} admissible values.",
                self.cfg.answer_space_size
            ),
            gold.to_string(),
        )
        .map_err(WorldError::Corpus)
    }

    pub fn problems(&self) -> Result<Vec<Problem>, WorldError> {
        (0..self.cfg.num_problems).map(|i| self.problem(i)).collect()
    }

    /// Draws one step's worth of randomness, in a fixed order.
    fn draw_step(&self, error_before: bool, rng: &mut ChaCha8Rng) -> StepDraw {
        let error_after = if error_before {
            true
        } else {
            rng.gen::<f64>() < self.cfg.step_error_prob
        };
        let narrative = NARRATIVES[rng.gen_range(0..NARRATIVES.len())];
        let q = self.cfg.obs_flip_prob;
        let flip_check = rng.gen::<f64>() < q;
        let flip_progress = rng.gen::<f64>() < q;
        let truth_ok = !error_after;
        StepDraw {
            error_after,
            check_ok: truth_ok != flip_check,
            progress_ok: truth_ok != flip_progress,
            narrative,
        }
    }

    /// Draws the committed answer for the final step.
    fn draw_commit(&self, error: bool, gold: usize, rng: &mut ChaCha8Rng) -> usize {
        if !error || rng.gen::<f64>() < self.cfg.recovery_prob {
            gold
        } else {
            let offset = rng.gen_range(0..self.cfg.answer_space_size - 1);
            if offset >= gold {
                offset + 1
            } else {
                offset
            }
        }
    }

    fn step_text(&self, index: usize, draw: &StepDraw, committed: Option<usize>) -> String {
        let mut text = format!(
            "Step {}: {} (check: {}, progress: {}, trace: {})",
            index + 1,
            draw.narrative,
            if draw.check_ok { "passed" } else { "failed" },
            if draw.progress_ok { "steady" } else { "stalled" },
            if draw.error_after { "err" } else { "ok" },
        );
        if let Some(answer) = committed {
            text.push_str(&format!(" The answer is {answer}."));
        }
        text
    }

    /// Samples one complete trajectory with exact labels.
    ///
    /// `stream` namespaces corpora ("synth", "eval", ...); `sample_index`
    /// separates candidates within a stream. Identical inputs reproduce
    /// identical outputs.
    pub fn sample_trajectory(
        &self,
        problem_index: usize,
        stream: &str,
        sample_index: u64,
    ) -> Result<SampledTrajectory, WorldError> {
        if problem_index >= self.cfg.num_problems {
            return Err(WorldError::UnknownProblem {
                id: World::problem_id(problem_index),
            });
        }
        let problem_id = World::problem_id(problem_index);
        let gold = self.gold_answer_id(problem_index);
        let mut rng = seeds::derive_rng(
            self.cfg.seed,
            &["traj", &problem_id, stream, &sample_index.to_string()],
        );
        let k = self.cfg.max_steps;
        let mut error = false;
        let mut texts = Vec::with_capacity(k);
        let mut latent = Vec::with_capacity(k);
        let mut committed = None;
        for i in 0..k {
            let draw = self.draw_step(error, &mut rng);
            error = draw.error_after;
            let commit = if i + 1 == k {
                Some(self.draw_commit(error, gold, &mut rng))
            } else {
                None
            };
            committed = commit;
            texts.push(self.step_text(i, &draw, commit));
            latent.push(LatentState {
                error_occurred: error,
                steps_taken: i + 1,
                committed_answer: commit,
            });
        }
        let answer = committed.expect("max_steps >= 1 guarantees a commit");
        let trajectory = Trajectory::new(
            problem_id,
            format!("synthworld/{stream}#{sample_index}"),
            texts,
            Some(answer.to_string()),
        )?;
        let correctness: Vec<f64> = latent
            .iter()
            .map(|s| if s.error_occurred { 0.0 } else { 1.0 })
            .collect();
        let potential: Vec<f64> = latent.iter().map(|s| self.true_potential(s, gold)).collect();
        let first_error = latent.iter().position(|s| s.error_occurred);
        let labels = DualLabels::new(correctness, potential, first_error)?;
        Ok(SampledTrajectory {
            trajectory,
            labels,
            latent,
        })
    }

    /// Samples a trajectory and wraps it as an oracle-labeled record.
    pub fn sample_labeled(
        &self,
        problem_index: usize,
        stream: &str,
        sample_index: u64,
    ) -> Result<LabeledTrajectory, WorldError> {
        let problem = self.problem(problem_index)?;
        let sampled = self.sample_trajectory(problem_index, stream, sample_index)?;
        LabeledTrajectory::new(problem, sampled.trajectory, sampled.labels, Provenance::Oracle)
            .map_err(WorldError::Corpus)
    }

    /// Extends `prefix` to a full trajectory, continuing the generative
    /// process from `latent` using draws from `rng`.
    ///
    /// The prefix steps are preserved verbatim. Fails with
    /// [`WorldError::PrefixTooLong`] when the prefix is already complete.
    pub fn complete_prefix(
        &self,
        prefix: &Trajectory,
        latent: &LatentState,
        rng: &mut ChaCha8Rng,
    ) -> Result<Trajectory, WorldError> {
        let len = prefix.len();
        if len >= self.cfg.max_steps {
            return Err(WorldError::PrefixTooLong {
                len,
                max_steps: self.cfg.max_steps,
            });
        }
        if latent.steps_taken != len {
            return Err(WorldError::InvalidLatent(format!(
                "latent covers {} steps but prefix has {len}",
                latent.steps_taken
            )));
        }
        if latent.committed_answer.is_some() {
            return Err(WorldError::InvalidLatent(
                "latent already carries a committed answer".into(),
            ));
        }
        let index = self.problem_index_of(&prefix.problem_id)?;
        let gold = self.gold_answer_id(index);
        let k = self.cfg.max_steps;
        let mut error = latent.error_occurred;
        let mut texts = prefix.step_texts();
        let mut committed = None;
        for i in len..k {
            let draw = self.draw_step(error, rng);
            error = draw.error_after;
            let commit = if i + 1 == k {
                Some(self.draw_commit(error, gold, rng))
            } else {
                None
            };
            committed = commit;
            texts.push(self.step_text(i, &draw, commit));
        }
        let answer = committed.expect("completion always reaches the commit step");
        Ok(Trajectory::new(
            prefix.problem_id.clone(),
            prefix.generator_id.clone(),
            texts,
            Some(answer.to_string()),
        )?)
    }

    /// Reconstructs the latent state at the end of a synthetic prefix from
    /// its trace tags.
    pub fn latent_after_prefix(&self, prefix: &Trajectory) -> Result<LatentState, WorldError> {
        let len = prefix.len();
        let last = &prefix.steps[len - 1];
        let meta = parse_step_meta(&last.text).ok_or(WorldError::MissingStepMeta {
            step: len - 1,
        })?;
        let committed_answer = if len == self.cfg.max_steps {
            let answer = extract_final_answer(&last.text, "The answer is")
                .and_then(|a| a.parse::<usize>().ok())
                .ok_or_else(|| {
                    WorldError::InvalidLatent(
                        "complete trajectory carries no parsable committed answer".into(),
                    )
                })?;
            Some(answer)
        } else {
            None
        };
        Ok(LatentState {
            error_occurred: !meta.trace_ok,
            steps_taken: len,
            committed_answer,
        })
    }

    /// Exact probability that a trajectory in `latent` ends at `gold`.
    ///
    /// By dynamic programming over the remaining `m = max_steps −
    /// steps_taken` error draws: a committed trajectory succeeded iff its
    /// answer is gold; a derailed one recovers with probability `rho`; an
    /// on-track one stays clean through the commit with probability
    /// `(1−e)^m` and otherwise recovers:
    /// `(1−e)^m + (1 − (1−e)^m)·rho`.
    pub fn true_potential(&self, latent: &LatentState, gold: usize) -> f64 {
        if let Some(answer) = latent.committed_answer {
            return if answer == gold { 1.0 } else { 0.0 };
        }
        if latent.error_occurred {
            return self.cfg.recovery_prob;
        }
        let m = self.cfg.max_steps.saturating_sub(latent.steps_taken) as i32;
        let clean = (1.0 - self.cfg.step_error_prob).powi(m);
        clean + (1.0 - clean) * self.cfg.recovery_prob
    }

    /// Success probability of an on-track state with `m` error draws left,
    /// i.e. `true_potential` marginalized to the no-error branch.
    fn clean_potential(&self, m: usize) -> f64 {
        let clean = (1.0 - self.cfg.step_error_prob).powi(m as i32);
        clean + (1.0 - clean) * self.cfg.recovery_prob
    }

    /// Forward-filter posterior `P(no error through step i | cues 0..=i)`
    /// for one observation channel under this world's transition and flip
    /// probabilities. `cues_ok[i]` is the channel's reading at step i.
    pub fn posterior_no_error(&self, cues_ok: &[bool]) -> Vec<f64> {
        let e = self.cfg.step_error_prob;
        let q = self.cfg.obs_flip_prob;
        let mut p_ok = 1.0f64;
        let mut p_err = 0.0f64;
        let mut out = Vec::with_capacity(cues_ok.len());
        for &cue in cues_ok {
            let t_ok = p_ok * (1.0 - e);
            let t_err = p_ok * e + p_err;
            let (emit_ok, emit_err) = if cue { (1.0 - q, q) } else { (q, 1.0 - q) };
            p_ok = t_ok * emit_ok;
            p_err = t_err * emit_err;
            let total = p_ok + p_err;
            if total > 0.0 {
                p_ok /= total;
                p_err /= total;
            } else {
                // The observation is impossible under the model (only
                // reachable with hand-made cues at flip probability 0);
                // fall back to the transition prior.
                let prior = t_ok + t_err;
                p_ok = if prior > 0.0 { t_ok / prior } else { 0.0 };
                p_err = 1.0 - p_ok;
            }
            out.push(p_ok);
        }
        out
    }

    /// Maps a no-error posterior at `steps_taken` steps into the posterior
    /// mean success probability.
    pub fn potential_from_posterior(&self, p_ok: f64, steps_taken: usize) -> f64 {
        let m = self.cfg.max_steps.saturating_sub(steps_taken);
        p_ok * self.clean_potential(m) + (1.0 - p_ok) * self.cfg.recovery_prob
    }

    fn channel_cues(
        &self,
        trajectory: &Trajectory,
        upto: usize,
        check_channel: bool,
    ) -> Result<Vec<bool>, WorldError> {
        trajectory.steps[..=upto]
            .iter()
            .enumerate()
            .map(|(i, step)| {
                let meta =
                    parse_step_meta(&step.text).ok_or(WorldError::MissingStepMeta { step: i })?;
                Ok(if check_channel {
                    meta.check_ok
                } else {
                    meta.progress_ok
                })
            })
            .collect()
    }

    /// Both observation-posterior rewards for every step of a trajectory:
    /// the check-channel no-error posterior, the progress-channel potential,
    /// and their product.
    pub fn posterior_rewards(&self, trajectory: &Trajectory) -> Result<Vec<RewardVector>, WorldError> {
        let k = trajectory.len();
        let checks = self.channel_cues(trajectory, k - 1, true)?;
        let progresses = self.channel_cues(trajectory, k - 1, false)?;
        let rc = self.posterior_no_error(&checks);
        let pb = self.posterior_no_error(&progresses);
        Ok((0..k)
            .map(|i| {
                let rp = self.potential_from_posterior(pb[i], i + 1);
                RewardVector::new(rc[i], rp)
            })
            .collect())
    }

    /// Exact latent rewards for every step (correctness indicator, analytic
    /// potential, product), read from the trace tags.
    pub fn latent_rewards(&self, trajectory: &Trajectory) -> Result<Vec<RewardVector>, WorldError> {
        let index = self.problem_index_of(&trajectory.problem_id)?;
        let gold = self.gold_answer_id(index);
        let k = trajectory.len();
        (0..k)
            .map(|i| {
                let meta = parse_step_meta(&trajectory.steps[i].text)
                    .ok_or(WorldError::MissingStepMeta { step: i })?;
                let committed_answer = if i + 1 == self.cfg.max_steps {
                    extract_final_answer(&trajectory.steps[i].text, "The answer is")
                        .and_then(|a| a.parse::<usize>().ok())
                } else {
                    None
                };
                let latent = LatentState {
                    error_occurred: !meta.trace_ok,
                    steps_taken: i + 1,
                    committed_answer,
                };
                let rc = if meta.trace_ok { 1.0 } else { 0.0 };
                let rp = self.true_potential(&latent, gold);
                Ok(RewardVector::new(rc, rp))
            })
            .collect()
    }

    /// Deterministic informative features for one step.
    ///
    /// Layout (truncated or hash-padded to `feature_dim`):
    /// `[check cue, progress cue, running mean of check cues, running mean
    /// of progress cues, remaining-step fraction, position fraction,
    /// problem-hash coordinate, constant 1]`, cue readings encoded ±1
    /// (0 when a step carries no annotations), plus uniform noise of scale
    /// `feature_noise` drawn from the trajectory's own stream.
    pub fn step_features(
        &self,
        trajectory: &Trajectory,
        step_index: usize,
    ) -> Result<Vec<f64>, WorldError> {
        let k = trajectory.len();
        if step_index >= k {
            return Err(WorldError::IndexOutOfRange {
                index: step_index,
                len: k,
            });
        }
        let cue_value = |ok: Option<bool>| match ok {
            Some(true) => 1.0,
            Some(false) => -1.0,
            None => 0.0,
        };
        let metas: Vec<Option<StepMeta>> = trajectory.steps[..=step_index]
            .iter()
            .map(|s| parse_step_meta(&s.text))
            .collect();
        let checks: Vec<f64> = metas.iter().map(|m| cue_value(m.map(|m| m.check_ok))).collect();
        let progresses: Vec<f64> = metas
            .iter()
            .map(|m| cue_value(m.map(|m| m.progress_ok)))
            .collect();
        let n = checks.len() as f64;
        let max_steps = self.cfg.max_steps as f64;
        let remaining = (k - 1 - step_index) as f64 / max_steps;
        let position = (step_index + 1) as f64 / max_steps;
        let phash = {
            let digest = seeds::derive_seed(0, &["phash", &trajectory.problem_id]);
            let raw = u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"));
            raw as f64 / u64::MAX as f64 * 2.0 - 1.0
        };
        let base = [
            checks[step_index],
            progresses[step_index],
            checks.iter().sum::<f64>() / n,
            progresses.iter().sum::<f64>() / n,
            remaining,
            position,
            phash,
            1.0,
        ];
        let dim = self.cfg.feature_dim;
        let mut features: Vec<f64> = (0..dim)
            .map(|j| {
                if j < base.len() {
                    base[j]
                } else {
                    // Deterministic nuisance coordinates for wide layouts.
                    let digest = seeds::derive_seed(
                        self.cfg.seed,
                        &["featpad", &trajectory.problem_id, &j.to_string()],
                    );
                    let raw =
                        u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"));
                    raw as f64 / u64::MAX as f64 * 2.0 - 1.0
                }
            })
            .collect();
        if self.cfg.feature_noise > 0.0 {
            let mut rng = seeds::derive_rng(
                self.cfg.seed,
                &["featnoise", &trajectory.fingerprint(), &step_index.to_string()],
            );
            for f in &mut features {
                *f += self.cfg.feature_noise * (rng.gen::<f64>() * 2.0 - 1.0);
            }
        }
        Ok(features)
    }

    /// A total feature function for training and scoring over this world's
    /// trajectories (panics only on out-of-range indices, which the
    /// training and scoring loops never produce).
    pub fn feature_fn(&self) -> impl Fn(&Trajectory, usize) -> Vec<f64> + '_ {
        move |trajectory, step_index| {
            self.step_features(trajectory, step_index)
                .expect("step index in range")
        }
    }
}

/// Monte-Carlo completer backed by the world's own generative process.
///
/// Rollout streams are addressed by `(seed, prefix fingerprint, rollout
/// index)`, so rollouts are reproducible and order-independent under
/// parallel execution.
#[derive(Debug, Clone)]
pub struct SynthCompleter<'w> {
    world: &'w World,
    seed: u64,
}

impl<'w> SynthCompleter<'w> {
    pub fn new(world: &'w World, seed: u64) -> Self {
        SynthCompleter { world, seed }
    }
}

impl Completer for SynthCompleter<'_> {
    fn complete(&self, prefix: &Trajectory, rollout_index: u64) -> Result<Trajectory, CompleterError> {
        let latent = self
            .world
            .latent_after_prefix(prefix)
            .map_err(|e| CompleterError(e.to_string()))?;
        let mut rng = seeds::derive_rng(
            self.seed,
            &["mc-rollout", &prefix.fingerprint(), &rollout_index.to_string()],
        );
        self.world
            .complete_prefix(prefix, &latent, &mut rng)
            .map_err(|e| CompleterError(e.to_string()))
    }
}

/// Scores `P(no error so far)` from the check-cue channel alone.
#[derive(Debug, Clone)]
pub struct PosteriorCorrectnessScorer<'w> {
    pub world: &'w World,
}

impl StepScorer for PosteriorCorrectnessScorer<'_> {
    fn score(&self, trajectory: &Trajectory, step_index: usize) -> Result<f64, ScorerError> {
        let cues = self
            .world
            .channel_cues(trajectory, step_index, true)
            .map_err(|e| ScorerError(e.to_string()))?;
        Ok(*self
            .world
            .posterior_no_error(&cues)
            .last()
            .expect("at least one cue"))
    }
}

/// Scores `P(final answer will be gold)` from the progress-cue channel
/// alone, through the world's analytic potential map.
#[derive(Debug, Clone)]
pub struct PosteriorPotentialScorer<'w> {
    pub world: &'w World,
}

impl StepScorer for PosteriorPotentialScorer<'_> {
    fn score(&self, trajectory: &Trajectory, step_index: usize) -> Result<f64, ScorerError> {
        let cues = self
            .world
            .channel_cues(trajectory, step_index, false)
            .map_err(|e| ScorerError(e.to_string()))?;
        let p_ok = *self
            .world
            .posterior_no_error(&cues)
            .last()
            .expect("at least one cue");
        Ok(self.world.potential_from_posterior(p_ok, step_index + 1))
    }
}

/// Scores the exact latent no-error indicator from the trace tag.
#[derive(Debug, Clone)]
pub struct LatentCorrectnessScorer<'w> {
    pub world: &'w World,
}

impl StepScorer for LatentCorrectnessScorer<'_> {
    fn score(&self, trajectory: &Trajectory, step_index: usize) -> Result<f64, ScorerError> {
        let _ = self.world;
        let step = trajectory
            .steps
            .get(step_index)
            .ok_or_else(|| ScorerError(format!("step index {step_index} out of range")))?;
        let meta = parse_step_meta(&step.text)
            .ok_or_else(|| ScorerError(format!("step {step_index} carries no trace tag")))?;
        Ok(if meta.trace_ok { 1.0 } else { 0.0 })
    }
}

/// Scores the exact analytic potential from the trace tag (and, at the
/// commit step, the committed answer).
#[derive(Debug, Clone)]
pub struct LatentPotentialScorer<'w> {
    pub world: &'w World,
}

impl StepScorer for LatentPotentialScorer<'_> {
    fn score(&self, trajectory: &Trajectory, step_index: usize) -> Result<f64, ScorerError> {
        let rewards = self
            .world
            .latent_rewards(trajectory)
            .map_err(|e| ScorerError(e.to_string()))?;
        rewards
            .get(step_index)
            .map(|r| r.r_potential)
            .ok_or_else(|| ScorerError(format!("step index {step_index} out of range")))
    }
}
