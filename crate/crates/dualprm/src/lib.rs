//! Dual-signal process reward modeling at desk scale.
//!
//! The crate implements a complete pipeline for training and evaluating
//! step-level reward models that combine two probabilistic signals:
//!
//! * a **correctness** signal — the probability that a reasoning prefix
//!   contains no error so far, and
//! * a **potential** signal — the probability that the prefix will still
//!   reach the correct final answer.
//!
//! The two are fused into a single **compound** score by multiplication,
//! treating them as factors of a joint success probability.
//!
//! Modules, in pipeline order:
//!
//! * [`corpus`] — trajectory data model, canonical JSONL persistence, and a
//!   text adapter for step-delimited solution dumps.
//! * [`synthworld`] — a seeded two-state stochastic reasoning world with an
//!   analytic success-probability oracle; serves as generator, completer,
//!   and ground truth for every downstream claim.
//! * [`labeling`] — Monte-Carlo potential labels from rollouts, correctness
//!   pseudo-labels from a pluggable scorer, and first-error derivation.
//! * [`rewardnet`] — a small two-head network over per-step features with
//!   exact analytic gradients, four training modes, and JSON checkpoints.
//! * [`fusion`] — score fusion strategies and step-score aggregation.
//! * [`evaluation`] — best-of-N / majority-vote / pass@k protocols,
//!   earliest-error detection with F1, correlation stats, scatter exports.
//! * [`backend`] — an OpenAI-compatible chat-completions client with
//!   retries, a concurrency cap, an append-only audit log, and replay mode.
//! * [`config`] — the run configuration consumed by the `dualprm` binary.
//! * [`seeds`] — deterministic derivation of named RNG streams.

pub mod backend;
pub mod config;
pub mod corpus;
pub mod evaluation;
pub mod fusion;
pub mod labeling;
pub mod rewardnet;
pub mod seeds;
pub mod synthworld;
