//! A small two-head step reward model with exact analytic gradients.
//!
//! Architecture: shared tanh trunk `h = tanh(W1·x + b1)` feeding two
//! independent sigmoid heads — one predicting step correctness, one
//! predicting step potential. Training minimizes, per trajectory, the sum
//! over steps of the binary cross-entropies of the active heads, averaged
//! over the trajectories of a batch; plain minibatch SGD does the rest.
//!
//! Everything is hand-rolled on `Vec<f64>` on purpose: the gradients are
//! derived in closed form and checked against central finite differences,
//! so the training loop has no framework dependencies and no hidden state.
//! All randomness (init, data split, shuffles) comes from derived streams
//! of a single seed, which makes retraining bit-for-bit reproducible.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{self, LabeledTrajectory, Trajectory};
use crate::labeling::{ScorerError, StepScorer};
use crate::seeds;

const BCE_EPS: f64 = 1e-7;
pub const CHECKPOINT_VERSION: u32 = 1;

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy with the probability clamped to
/// `[1e-7, 1 - 1e-7]`, so the loss is finite for any prediction.
pub fn bce(prob: f64, label: f64) -> f64 {
    let p = prob.clamp(BCE_EPS, 1.0 - BCE_EPS);
    -(label * p.ln() + (1.0 - label) * (1.0 - p).ln())
}

/// d(bce)/dz for a sigmoid probability `r = sigmoid(z)`: `r − y` while the
/// clamp is inactive, zero once the clamp has flattened the loss.
fn bce_grad_z(r: f64, y: f64) -> f64 {
    if r <= BCE_EPS || r >= 1.0 - BCE_EPS {
        0.0
    } else {
        r - y
    }
}

/// Both step rewards and their product.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardVector {
    pub r_correctness: f64,
    pub r_potential: f64,
    pub r_compound: f64,
}

impl RewardVector {
    pub fn new(r_correctness: f64, r_potential: f64) -> Self {
        RewardVector {
            r_correctness,
            r_potential,
            r_compound: r_correctness * r_potential,
        }
    }
}

/// Which loss terms the trainer optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// Both heads, each against its own label channel.
    MultiHead,
    /// Correctness head only; the potential head stays at its 0.5 init.
    CorrectnessOnly,
    /// Potential head only; the correctness head stays at its 0.5 init.
    PotentialOnly,
    /// One head against the per-step product `correctness · potential`.
    /// The correctness head carries the prediction.
    SingleHeadProduct,
}

impl TrainMode {
    pub fn id(self) -> &'static str {
        match self {
            TrainMode::MultiHead => "multi_head",
            TrainMode::CorrectnessOnly => "correctness_only",
            TrainMode::PotentialOnly => "potential_only",
            TrainMode::SingleHeadProduct => "single_head_product",
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        match id {
            "multi_head" => Some(TrainMode::MultiHead),
            "correctness_only" => Some(TrainMode::CorrectnessOnly),
            "potential_only" => Some(TrainMode::PotentialOnly),
            "single_head_product" => Some(TrainMode::SingleHeadProduct),
            _ => None,
        }
    }

    /// (correctness head active, potential head active)
    fn active_heads(self) -> (bool, bool) {
        match self {
            TrainMode::MultiHead => (true, true),
            TrainMode::CorrectnessOnly | TrainMode::SingleHeadProduct => (true, false),
            TrainMode::PotentialOnly => (false, true),
        }
    }
}

impl std::fmt::Display for TrainMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.id())
    }
}

/// How the trainer treats an all-hard label set in product mode.
///
/// When every product label is exactly 0 or 1, a zero product no longer
/// says *which* factor vanished — a perfectly promising step inside an
/// already-wrong trajectory trains toward 0 exactly like a hopeless one.
/// `Strict` refuses such datasets; `Allow` trains anyway (useful for
/// demonstrating the failure mode).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HardLabelPolicy {
    Strict,
    Allow,
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid train config: {field}: {message}")]
    InvalidConfig { field: &'static str, message: String },
    #[error("training set is empty")]
    EmptyDataset,
    #[error("bad training example: {0}")]
    BadExample(String),
    #[error(
        "product-label training on an all-hard label set: every product label is exactly 0 or 1, \
         so zero products cannot attribute which reward vanished; provide fractional labels or \
         set hard_label_policy = \"allow\""
    )]
    HardLabelCollapse,
    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("failed to read checkpoint {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse checkpoint {path}: {message}")]
    Parse { path: String, message: String },
    #[error("unsupported checkpoint version {found} (expected {CHECKPOINT_VERSION})")]
    Version { found: u32 },
    #[error("inconsistent checkpoint: {0}")]
    Shape(String),
    #[error("checkpoint contains non-finite parameters")]
    NonFinite,
    #[error(transparent)]
    Corpus(#[from] corpus::CorpusError),
}

/// All weights of the model. Also doubles as the gradient container, since
/// gradients have the same shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardNetParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// `hidden_dim × input_dim`, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w_correctness: Vec<f64>,
    pub b_correctness: f64,
    pub w_potential: Vec<f64>,
    pub b_potential: f64,
}

impl RewardNetParams {
    /// Zero parameters of the given shape.
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        RewardNetParams {
            input_dim,
            hidden_dim,
            w1: vec![0.0; hidden_dim * input_dim],
            b1: vec![0.0; hidden_dim],
            w_correctness: vec![0.0; hidden_dim],
            b_correctness: 0.0,
            w_potential: vec![0.0; hidden_dim],
            b_potential: 0.0,
        }
    }

    /// Standard init: trunk weights uniform in `±1/√input_dim`, everything
    /// else zero — so both heads start out predicting exactly 0.5.
    pub fn init(input_dim: usize, hidden_dim: usize, rng: &mut impl Rng) -> Self {
        let mut params = RewardNetParams::zeros(input_dim, hidden_dim);
        let scale = 1.0 / (input_dim as f64).sqrt();
        for w in &mut params.w1 {
            *w = rng.gen_range(-scale..scale);
        }
        params
    }

    pub fn num_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w_correctness.len() + self.w_potential.len() + 2
    }

    /// All parameters as one flat vector, in a fixed order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.num_params());
        flat.extend_from_slice(&self.w1);
        flat.extend_from_slice(&self.b1);
        flat.extend_from_slice(&self.w_correctness);
        flat.push(self.b_correctness);
        flat.extend_from_slice(&self.w_potential);
        flat.push(self.b_potential);
        flat
    }

    /// Rebuilds parameters from [`Self::to_flat`] order.
    pub fn from_flat(input_dim: usize, hidden_dim: usize, flat: &[f64]) -> Result<Self, TrainError> {
        let mut params = RewardNetParams::zeros(input_dim, hidden_dim);
        if flat.len() != params.num_params() {
            return Err(TrainError::BadExample(format!(
                "flat vector has {} entries, shape needs {}",
                flat.len(),
                params.num_params()
            )));
        }
        let mut it = flat.iter().copied();
        params.w1.iter_mut().for_each(|w| *w = it.next().unwrap());
        params.b1.iter_mut().for_each(|b| *b = it.next().unwrap());
        params.w_correctness.iter_mut().for_each(|w| *w = it.next().unwrap());
        params.b_correctness = it.next().unwrap();
        params.w_potential.iter_mut().for_each(|w| *w = it.next().unwrap());
        params.b_potential = it.next().unwrap();
        Ok(params)
    }

    /// In-place `self += scale · other` over every parameter.
    fn axpy(&mut self, scale: f64, other: &RewardNetParams) {
        for (a, b) in self.w1.iter_mut().zip(&other.w1) {
            *a += scale * b;
        }
        for (a, b) in self.b1.iter_mut().zip(&other.b1) {
            *a += scale * b;
        }
        for (a, b) in self.w_correctness.iter_mut().zip(&other.w_correctness) {
            *a += scale * b;
        }
        self.b_correctness += scale * other.b_correctness;
        for (a, b) in self.w_potential.iter_mut().zip(&other.w_potential) {
            *a += scale * b;
        }
        self.b_potential += scale * other.b_potential;
    }

    pub fn max_abs(&self) -> f64 {
        self.to_flat().iter().fold(0.0f64, |m, &v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.to_flat().iter().all(|v| v.is_finite())
    }

    fn hidden(&self, x: &[f64]) -> Vec<f64> {
        (0..self.hidden_dim)
            .map(|j| {
                let row = &self.w1[j * self.input_dim..(j + 1) * self.input_dim];
                let z: f64 = row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + self.b1[j];
                z.tanh()
            })
            .collect()
    }

    fn head(&self, hidden: &[f64], correctness: bool) -> f64 {
        let (w, b) = if correctness {
            (&self.w_correctness, self.b_correctness)
        } else {
            (&self.w_potential, self.b_potential)
        };
        sigmoid(w.iter().zip(hidden).map(|(wi, hi)| wi * hi).sum::<f64>() + b)
    }

    /// Both head outputs for one step input.
    pub fn reward(&self, x: &[f64]) -> RewardVector {
        let h = self.hidden(x);
        RewardVector::new(self.head(&h, true), self.head(&h, false))
    }
}

/// One trajectory prepared for training: per-step inputs and both label
/// channels, validated to be consistent.
#[derive(Debug, Clone)]
pub struct TrainExample {
    pub features: Vec<Vec<f64>>,
    pub correctness: Vec<f64>,
    pub potential: Vec<f64>,
}

impl TrainExample {
    pub fn new(
        features: Vec<Vec<f64>>,
        correctness: Vec<f64>,
        potential: Vec<f64>,
    ) -> Result<Self, TrainError> {
        if features.is_empty() {
            return Err(TrainError::BadExample("no steps".into()));
        }
        if features.len() != correctness.len() || features.len() != potential.len() {
            return Err(TrainError::BadExample(format!(
                "{} feature rows vs {} correctness / {} potential labels",
                features.len(),
                correctness.len(),
                potential.len()
            )));
        }
        let dim = features[0].len();
        if dim == 0 {
            return Err(TrainError::BadExample("zero-dimensional features".into()));
        }
        for (i, row) in features.iter().enumerate() {
            if row.len() != dim {
                return Err(TrainError::BadExample(format!(
                    "step {i} has {} features, step 0 has {dim}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(TrainError::BadExample(format!(
                    "step {i} has non-finite features"
                )));
            }
        }
        Ok(TrainExample {
            features,
            correctness,
            potential,
        })
    }

    /// Builds the example by featurizing every step of a labeled record.
    pub fn from_labeled(
        record: &LabeledTrajectory,
        features: impl Fn(&Trajectory, usize) -> Vec<f64>,
    ) -> Result<Self, TrainError> {
        let t = &record.trajectory;
        TrainExample::new(
            (0..t.len()).map(|i| features(t, i)).collect(),
            record.labels.correctness.clone(),
            record.labels.potential.clone(),
        )
    }

    pub fn input_dim(&self) -> usize {
        self.features[0].len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub hidden_dim: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Fraction of trajectories held out of gradient updates for loss
    /// reporting.
    pub holdout_frac: f64,
    pub hard_label_policy: HardLabelPolicy,
    /// Any parameter magnitude beyond this aborts training as diverged.
    pub divergence_threshold: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: TrainMode::MultiHead,
            hidden_dim: 16,
            learning_rate: 0.05,
            epochs: 60,
            batch_size: 32,
            holdout_frac: 0.2,
            hard_label_policy: HardLabelPolicy::Strict,
            divergence_threshold: 1e4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |field: &'static str, message: String| TrainError::InvalidConfig { field, message };
        if self.hidden_dim < 1 {
            return Err(bad("hidden_dim", "must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(bad(
                "learning_rate",
                format!("{} is not a positive finite rate", self.learning_rate),
            ));
        }
        if self.epochs < 1 {
            return Err(bad("epochs", "must be at least 1".into()));
        }
        if self.batch_size < 1 {
            return Err(bad("batch_size", "must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.holdout_frac) {
            return Err(bad(
                "holdout_frac",
                format!("{} is not in [0, 1)", self.holdout_frac),
            ));
        }
        if !(self.divergence_threshold.is_finite() && self.divergence_threshold > 0.0) {
            return Err(bad(
                "divergence_threshold",
                format!("{} is not a positive finite bound", self.divergence_threshold),
            ));
        }
        Ok(())
    }
}

/// Per-step training targets for the active heads under a mode. A
/// product-label model trains its single head on exactly `y_c · y_p`.
pub fn step_targets(mode: TrainMode, y_c: f64, y_p: f64) -> (f64, f64) {
    match mode {
        TrainMode::SingleHeadProduct => (y_c * y_p, 0.0),
        _ => (y_c, y_p),
    }
}

/// Mean over trajectories of the per-trajectory summed step loss.
pub fn batch_loss(params: &RewardNetParams, examples: &[TrainExample], mode: TrainMode) -> f64 {
    let (use_c, use_p) = mode.active_heads();
    let total: f64 = examples
        .iter()
        .map(|ex| {
            ex.features
                .iter()
                .zip(ex.correctness.iter().zip(&ex.potential))
                .map(|(x, (&y_c, &y_p))| {
                    let r = params.reward(x);
                    let (t_c, t_p) = step_targets(mode, y_c, y_p);
                    let mut loss = 0.0;
                    if use_c {
                        loss += bce(r.r_correctness, t_c);
                    }
                    if use_p {
                        loss += bce(r.r_potential, t_p);
                    }
                    loss
                })
                .sum::<f64>()
        })
        .sum();
    total / examples.len() as f64
}

/// Analytic gradient of [`batch_loss`] with respect to every parameter,
/// plus the loss itself.
pub fn batch_gradients(
    params: &RewardNetParams,
    examples: &[TrainExample],
    mode: TrainMode,
) -> (f64, RewardNetParams) {
    let (use_c, use_p) = mode.active_heads();
    let d = params.input_dim;
    let mut grads = RewardNetParams::zeros(d, params.hidden_dim);
    let mut total_loss = 0.0;
    for ex in examples {
        for (x, (&y_c, &y_p)) in ex
            .features
            .iter()
            .zip(ex.correctness.iter().zip(&ex.potential))
        {
            let h = params.hidden(x);
            let r_c = params.head(&h, true);
            let r_p = params.head(&h, false);
            let (t_c, t_p) = step_targets(mode, y_c, y_p);
            let g_c = if use_c { bce_grad_z(r_c, t_c) } else { 0.0 };
            let g_p = if use_p { bce_grad_z(r_p, t_p) } else { 0.0 };
            if use_c {
                total_loss += bce(r_c, t_c);
            }
            if use_p {
                total_loss += bce(r_p, t_p);
            }
            for j in 0..params.hidden_dim {
                if use_c {
                    grads.w_correctness[j] += g_c * h[j];
                }
                if use_p {
                    grads.w_potential[j] += g_p * h[j];
                }
                let dh = g_c * params.w_correctness[j] + g_p * params.w_potential[j];
                let dz = dh * (1.0 - h[j] * h[j]);
                if dz != 0.0 {
                    let row = &mut grads.w1[j * d..(j + 1) * d];
                    for (gw, xi) in row.iter_mut().zip(x) {
                        *gw += dz * xi;
                    }
                    grads.b1[j] += dz;
                }
            }
            grads.b_correctness += g_c;
            grads.b_potential += g_p;
        }
    }
    let inv = 1.0 / examples.len() as f64;
    let mut scaled = RewardNetParams::zeros(d, params.hidden_dim);
    scaled.axpy(inv, &grads);
    (total_loss * inv, scaled)
}

/// Maximum relative disagreement between analytic and central
/// finite-difference gradients over every parameter, at step `h`.
pub fn gradient_check(
    params: &RewardNetParams,
    examples: &[TrainExample],
    mode: TrainMode,
    h: f64,
) -> f64 {
    let (_, analytic) = batch_gradients(params, examples, mode);
    let analytic = analytic.to_flat();
    let flat = params.to_flat();
    let mut worst = 0.0f64;
    for i in 0..flat.len() {
        let mut plus = flat.clone();
        plus[i] += h;
        let mut minus = flat.clone();
        minus[i] -= h;
        let lp = batch_loss(
            &RewardNetParams::from_flat(params.input_dim, params.hidden_dim, &plus).unwrap(),
            examples,
            mode,
        );
        let lm = batch_loss(
            &RewardNetParams::from_flat(params.input_dim, params.hidden_dim, &minus).unwrap(),
            examples,
            mode,
        );
        let fd = (lp - lm) / (2.0 * h);
        let a = analytic[i];
        let rel = (a - fd).abs() / (a.abs() + fd.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    worst
}

/// The result of a completed training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: RewardNetParams,
    pub mode: TrainMode,
    /// Post-epoch training loss, one entry per epoch run.
    pub loss_history: Vec<f64>,
    pub final_train_loss: f64,
    /// Loss on the held-out split, when one exists.
    pub holdout_loss: Option<f64>,
    pub train_count: usize,
    pub holdout_count: usize,
}

fn all_labels_hard(examples: &[TrainExample]) -> bool {
    examples.iter().all(|ex| {
        ex.correctness
            .iter()
            .chain(&ex.potential)
            .all(|&y| y == 0.0 || y == 1.0)
    })
}

/// The deterministic `(holdout, train)` index split used by [`train`]:
/// indices are permuted by the seed's `"split"` stream and the first
/// `floor(n · holdout_frac)` of them form the holdout. Since
/// `floor(n · frac) < n` for `frac < 1` (the range `validate` enforces),
/// the training side is never empty.
pub fn holdout_split(n: usize, seed: u64, holdout_frac: f64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeds::derive_rng(seed, &["split"]));
    let holdout_count = (n as f64 * holdout_frac).floor() as usize;
    let (holdout_idx, train_idx) = order.split_at(holdout_count);
    (holdout_idx.to_vec(), train_idx.to_vec())
}

/// Trains a fresh model on `examples` under `cfg`.
///
/// Deterministic in `(examples order, cfg)`. Fails with
/// [`TrainError::Diverged`] when any parameter leaves the finite band
/// `|w| ≤ divergence_threshold` or a loss stops being finite.
pub fn train(examples: &[TrainExample], cfg: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if examples.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let input_dim = examples[0].input_dim();
    for (i, ex) in examples.iter().enumerate() {
        if ex.input_dim() != input_dim {
            return Err(TrainError::BadExample(format!(
                "trajectory {i} has input dim {}, trajectory 0 has {input_dim}",
                ex.input_dim()
            )));
        }
    }
    if cfg.mode == TrainMode::SingleHeadProduct
        && cfg.hard_label_policy == HardLabelPolicy::Strict
        && all_labels_hard(examples)
    {
        return Err(TrainError::HardLabelCollapse);
    }

    let (holdout_idx, train_idx) = holdout_split(examples.len(), cfg.seed, cfg.holdout_frac);
    let train_set: Vec<TrainExample> = train_idx.iter().map(|&i| examples[i].clone()).collect();
    let holdout_set: Vec<TrainExample> = holdout_idx.iter().map(|&i| examples[i].clone()).collect();

    let mut params = RewardNetParams::init(
        input_dim,
        cfg.hidden_dim,
        &mut seeds::derive_rng(cfg.seed, &["init"]),
    );
    let mut loss_history = Vec::with_capacity(cfg.epochs);
    let mut perm: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 0..cfg.epochs {
        perm.shuffle(&mut seeds::derive_rng(cfg.seed, &["epoch", &epoch.to_string()]));
        for chunk in perm.chunks(cfg.batch_size) {
            let batch: Vec<TrainExample> = chunk.iter().map(|&i| train_set[i].clone()).collect();
            let (loss, grads) = batch_gradients(&params, &batch, cfg.mode);
            if !loss.is_finite() {
                return Err(TrainError::Diverged {
                    epoch,
                    detail: format!("batch loss became {loss}"),
                });
            }
            params.axpy(-cfg.learning_rate, &grads);
            let magnitude = params.max_abs();
            if !params.all_finite() || magnitude > cfg.divergence_threshold {
                return Err(TrainError::Diverged {
                    epoch,
                    detail: format!(
                        "parameter magnitude {magnitude:.3e} exceeded threshold {:.3e}",
                        cfg.divergence_threshold
                    ),
                });
            }
        }
        let epoch_loss = batch_loss(&params, &train_set, cfg.mode);
        if !epoch_loss.is_finite() {
            return Err(TrainError::Diverged {
                epoch,
                detail: format!("epoch loss became {epoch_loss}"),
            });
        }
        loss_history.push(epoch_loss);
    }
    let final_train_loss = *loss_history.last().expect("at least one epoch");
    let holdout_loss = if holdout_set.is_empty() {
        None
    } else {
        Some(batch_loss(&params, &holdout_set, cfg.mode))
    };
    Ok(TrainOutcome {
        params,
        mode: cfg.mode,
        loss_history,
        final_train_loss,
        holdout_loss,
        train_count: train_set.len(),
        holdout_count: holdout_set.len(),
    })
}

/// A trained model frozen to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub mode: TrainMode,
    pub seed: u64,
    pub params: RewardNetParams,
}

impl Checkpoint {
    pub fn new(mode: TrainMode, seed: u64, params: RewardNetParams) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            mode,
            seed,
            params,
        }
    }

    fn validate(&self) -> Result<(), CheckpointError> {
        if self.version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version { found: self.version });
        }
        let p = &self.params;
        let shape = |name: &str, got: usize, want: usize| {
            if got != want {
                Err(CheckpointError::Shape(format!(
                    "{name} has {got} entries, shape requires {want}"
                )))
            } else {
                Ok(())
            }
        };
        if p.input_dim == 0 || p.hidden_dim == 0 {
            return Err(CheckpointError::Shape("zero input or hidden dimension".into()));
        }
        shape("w1", p.w1.len(), p.hidden_dim * p.input_dim)?;
        shape("b1", p.b1.len(), p.hidden_dim)?;
        shape("w_correctness", p.w_correctness.len(), p.hidden_dim)?;
        shape("w_potential", p.w_potential.len(), p.hidden_dim)?;
        if !p.all_finite() {
            return Err(CheckpointError::NonFinite);
        }
        Ok(())
    }

    /// Serializes to pretty JSON; identical checkpoints produce identical
    /// bytes.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("checkpoint serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        self.validate()?;
        corpus::write_atomic(path, self.to_json().as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let raw = std::fs::read_to_string(path).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let checkpoint: Checkpoint =
            serde_json::from_str(&raw).map_err(|e| CheckpointError::Parse {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
        checkpoint.validate()?;
        Ok(checkpoint)
    }
}

/// Which model output a [`ModelStepScorer`] exposes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreHead {
    Correctness,
    Potential,
    Compound,
}

/// Adapts a trained model into a per-step scorer through a feature map.
pub struct ModelStepScorer<'a> {
    params: &'a RewardNetParams,
    features: Box<dyn Fn(&Trajectory, usize) -> Vec<f64> + 'a>,
    head: ScoreHead,
}

impl<'a> ModelStepScorer<'a> {
    pub fn new(
        params: &'a RewardNetParams,
        features: impl Fn(&Trajectory, usize) -> Vec<f64> + 'a,
        head: ScoreHead,
    ) -> Self {
        ModelStepScorer {
            params,
            features: Box::new(features),
            head,
        }
    }

    /// Full reward vectors for every step of a trajectory.
    pub fn rewards(&self, trajectory: &Trajectory) -> Result<Vec<RewardVector>, ScorerError> {
        (0..trajectory.len())
            .map(|i| {
                let x = (self.features)(trajectory, i);
                if x.len() != self.params.input_dim {
                    return Err(ScorerError(format!(
                        "feature dim {} does not match model input dim {}",
                        x.len(),
                        self.params.input_dim
                    )));
                }
                Ok(self.params.reward(&x))
            })
            .collect()
    }
}

impl StepScorer for ModelStepScorer<'_> {
    fn score(&self, trajectory: &Trajectory, step_index: usize) -> Result<f64, ScorerError> {
        if step_index >= trajectory.len() {
            return Err(ScorerError(format!(
                "step index {step_index} outside trajectory of {} steps",
                trajectory.len()
            )));
        }
        let x = (self.features)(trajectory, step_index);
        if x.len() != self.params.input_dim {
            return Err(ScorerError(format!(
                "feature dim {} does not match model input dim {}",
                x.len(),
                self.params.input_dim
            )));
        }
        let r = self.params.reward(&x);
        Ok(match self.head {
            ScoreHead::Correctness => r.r_correctness,
            ScoreHead::Potential => r.r_potential,
            ScoreHead::Compound => r.r_compound,
        })
    }
}
