//! Trajectory data model and canonical JSONL persistence.
//!
//! A [`Trajectory`] is one solution attempt: an ordered list of reasoning
//! steps plus an optional extracted final answer. [`DualLabels`] carries the
//! two per-step supervision signals (correctness and potential, both soft
//! probabilities in `[0, 1]`) and the derived index of the earliest
//! erroneous step. A [`LabeledTrajectory`] bundles a trajectory with its
//! labels, the problem it answers, and a provenance tag, and is the unit of
//! the on-disk dataset format.
//!
//! Canonical storage is JSONL, one flat record per line:
//!
//! ```json
//! {"problem_id": "...", "statement": "...", "gold_answer": "...",
//!  "generator_id": "...", "steps": ["...", "..."], "final_answer": "...",
//!  "labels": {"correctness": [...], "potential": [...],
//!             "first_error_index": 0}, "provenance": "oracle"}
//! ```
//!
//! Label values are quantized to six decimal places on construction, which
//! makes JSON round trips bit-exact.
//!
//! The module also ships a text adapter ([`parse_step_text`]) for corpora
//! stored as delimiter-separated step dumps, plus the answer normalization
//! and comparison helpers used by every grading site in the pipeline.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Errors raised by corpus construction, parsing, and persistence.
#[derive(Debug, Error)]
pub enum CorpusError {
    /// Input text could not be interpreted as a step sequence.
    #[error("malformed input: {0}")]
    MalformedInput(String),
    /// A delimited segment was empty or whitespace-only.
    #[error("empty step at segment {segment}")]
    EmptyStep { segment: usize },
    /// A type invariant was violated at construction.
    #[error("invalid record: {0}")]
    Invalid(String),
    /// A JSONL line failed schema validation.
    #[error("schema error at line {line}: {message}")]
    Schema { line: usize, message: String },
    /// An underlying filesystem failure.
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// One test problem: an id, a statement, and the canonical answer string.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Problem {
    pub id: String,
    pub statement: String,
    pub gold_answer: String,
}

impl Problem {
    pub fn new(
        id: impl Into<String>,
        statement: impl Into<String>,
        gold_answer: impl Into<String>,
    ) -> Result<Self, CorpusError> {
        let problem = Problem {
            id: id.into(),
            statement: statement.into(),
            gold_answer: gold_answer.into(),
        };
        if problem.id.is_empty() {
            return Err(CorpusError::Invalid("problem id is empty".into()));
        }
        if problem.gold_answer.is_empty() {
            return Err(CorpusError::Invalid(format!(
                "problem {} has an empty gold answer",
                problem.id
            )));
        }
        Ok(problem)
    }
}

/// One reasoning step: a 0-based index and its text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub index: usize,
    pub text: String,
}

/// One solution attempt for a problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub problem_id: String,
    pub steps: Vec<Step>,
    /// The answer extracted from the last step, when one was present.
    pub final_answer: Option<String>,
    /// Identifier of whatever produced this trajectory (world, model, ...).
    pub generator_id: String,
}

impl Trajectory {
    /// Builds a trajectory from raw step texts, assigning contiguous indices.
    ///
    /// Requires at least one step; every step text must contain
    /// non-whitespace content.
    pub fn new(
        problem_id: impl Into<String>,
        generator_id: impl Into<String>,
        step_texts: Vec<String>,
        final_answer: Option<String>,
    ) -> Result<Self, CorpusError> {
        if step_texts.is_empty() {
            return Err(CorpusError::Invalid(
                "trajectory must have at least one step".into(),
            ));
        }
        for (i, text) in step_texts.iter().enumerate() {
            if text.trim().is_empty() {
                return Err(CorpusError::EmptyStep { segment: i });
            }
        }
        Ok(Trajectory {
            problem_id: problem_id.into(),
            steps: step_texts
                .into_iter()
                .enumerate()
                .map(|(index, text)| Step { index, text })
                .collect(),
            final_answer,
            generator_id: generator_id.into(),
        })
    }

    /// Number of steps.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// The step texts, in order.
    pub fn step_texts(&self) -> Vec<String> {
        self.steps.iter().map(|s| s.text.clone()).collect()
    }

    /// The first `len` steps as a new trajectory with no final answer.
    ///
    /// Used to form rollout prefixes; `len` must be in `1..=self.len()`.
    pub fn prefix(&self, len: usize) -> Result<Trajectory, CorpusError> {
        if len == 0 || len > self.len() {
            return Err(CorpusError::Invalid(format!(
                "prefix length {len} outside 1..={}",
                self.len()
            )));
        }
        Trajectory::new(
            self.problem_id.clone(),
            self.generator_id.clone(),
            self.steps[..len].iter().map(|s| s.text.clone()).collect(),
            None,
        )
    }

    /// A stable hex digest of the trajectory's content.
    ///
    /// Two trajectories share a fingerprint exactly when problem id,
    /// generator id, step texts, and final answer all match; used to address
    /// per-trajectory RNG streams.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        let mut feed = |part: &str| {
            hasher.update((part.len() as u64).to_le_bytes());
            hasher.update(part.as_bytes());
        };
        feed(&self.problem_id);
        feed(&self.generator_id);
        for step in &self.steps {
            feed(&step.text);
        }
        feed(self.final_answer.as_deref().unwrap_or("\u{0}none"));
        let digest = hasher.finalize();
        let mut out = String::with_capacity(64);
        for byte in digest {
            out.push_str(&format!("{byte:02x}"));
        }
        out
    }
}

/// Per-step supervision: soft correctness, soft potential, first error.
///
/// Values are quantized to six decimal places at construction so that the
/// serialized form is short and round trips are exact. When
/// `first_error_index` is `Some(j)`, the correctness labels hard-thresholded
/// at 0.5 read "no error" strictly before `j` and "error" at `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualLabels {
    pub correctness: Vec<f64>,
    pub potential: Vec<f64>,
    pub first_error_index: Option<usize>,
}

/// Rounds a label to six decimal places.
pub fn quantize_label(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

impl DualLabels {
    pub fn new(
        correctness: Vec<f64>,
        potential: Vec<f64>,
        first_error_index: Option<usize>,
    ) -> Result<Self, CorpusError> {
        if correctness.is_empty() {
            return Err(CorpusError::Invalid("labels must cover at least one step".into()));
        }
        if correctness.len() != potential.len() {
            return Err(CorpusError::Invalid(format!(
                "correctness has {} entries but potential has {}",
                correctness.len(),
                potential.len()
            )));
        }
        let quantize_all = |name: &str, values: Vec<f64>| -> Result<Vec<f64>, CorpusError> {
            values
                .into_iter()
                .enumerate()
                .map(|(i, v)| {
                    if !(0.0..=1.0).contains(&v) {
                        return Err(CorpusError::Invalid(format!(
                            "{name}[{i}] = {v} outside [0, 1]"
                        )));
                    }
                    Ok(quantize_label(v))
                })
                .collect()
        };
        let correctness = quantize_all("correctness", correctness)?;
        let potential = quantize_all("potential", potential)?;
        if let Some(j) = first_error_index {
            if j >= correctness.len() {
                return Err(CorpusError::Invalid(format!(
                    "first_error_index {j} outside 0..{}",
                    correctness.len()
                )));
            }
            if correctness[j] >= 0.5 {
                return Err(CorpusError::Invalid(format!(
                    "first_error_index {j} but correctness[{j}] = {} >= 0.5",
                    correctness[j]
                )));
            }
            if let Some(i) = (0..j).find(|&i| correctness[i] < 0.5) {
                return Err(CorpusError::Invalid(format!(
                    "first_error_index {j} but correctness[{i}] = {} < 0.5",
                    correctness[i]
                )));
            }
        }
        Ok(DualLabels {
            correctness,
            potential,
            first_error_index,
        })
    }

    /// Number of labeled steps.
    pub fn len(&self) -> usize {
        self.correctness.len()
    }

    pub fn is_empty(&self) -> bool {
        self.correctness.is_empty()
    }
}

/// Where a record's labels came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    MonteCarlo,
    PseudoLabel,
    Oracle,
    Imported,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Provenance::MonteCarlo => "monte_carlo",
            Provenance::PseudoLabel => "pseudo_label",
            Provenance::Oracle => "oracle",
            Provenance::Imported => "imported",
        };
        f.write_str(name)
    }
}

/// A trajectory, its problem, its labels, and their provenance — one
/// dataset record.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTrajectory {
    pub problem: Problem,
    pub trajectory: Trajectory,
    pub labels: DualLabels,
    pub provenance: Provenance,
}

impl LabeledTrajectory {
    pub fn new(
        problem: Problem,
        trajectory: Trajectory,
        labels: DualLabels,
        provenance: Provenance,
    ) -> Result<Self, CorpusError> {
        if trajectory.problem_id != problem.id {
            return Err(CorpusError::Invalid(format!(
                "trajectory references problem {} but record carries problem {}",
                trajectory.problem_id, problem.id
            )));
        }
        if labels.len() != trajectory.len() {
            return Err(CorpusError::Invalid(format!(
                "{} labels for {} steps",
                labels.len(),
                trajectory.len()
            )));
        }
        Ok(LabeledTrajectory {
            problem,
            trajectory,
            labels,
            provenance,
        })
    }
}

/// The flat JSONL wire form of one record.
#[derive(Serialize, Deserialize)]
struct JsonRecord {
    problem_id: String,
    statement: String,
    gold_answer: String,
    generator_id: String,
    steps: Vec<String>,
    final_answer: Option<String>,
    labels: DualLabels,
    provenance: Provenance,
}

impl From<&LabeledTrajectory> for JsonRecord {
    fn from(rec: &LabeledTrajectory) -> Self {
        JsonRecord {
            problem_id: rec.problem.id.clone(),
            statement: rec.problem.statement.clone(),
            gold_answer: rec.problem.gold_answer.clone(),
            generator_id: rec.trajectory.generator_id.clone(),
            steps: rec.trajectory.step_texts(),
            final_answer: rec.trajectory.final_answer.clone(),
            labels: rec.labels.clone(),
            provenance: rec.provenance,
        }
    }
}

impl JsonRecord {
    fn into_labeled(self) -> Result<LabeledTrajectory, CorpusError> {
        let problem = Problem::new(self.problem_id, self.statement, self.gold_answer)?;
        let trajectory = Trajectory::new(
            problem.id.clone(),
            self.generator_id,
            self.steps,
            self.final_answer,
        )?;
        let labels = DualLabels::new(
            self.labels.correctness,
            self.labels.potential,
            self.labels.first_error_index,
        )?;
        LabeledTrajectory::new(problem, trajectory, labels, self.provenance)
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `content` to `path` atomically (temp file + rename).
///
/// Either the complete content lands at `path` or the path is untouched;
/// partial files are never observable.
pub fn write_atomic(path: &Path, content: &[u8]) -> Result<(), CorpusError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        fs::create_dir_all(dir).map_err(io_err(path))?;
    }
    let file_name = path
        .file_name()
        .ok_or_else(|| CorpusError::Invalid(format!("{} has no file name", path.display())))?;
    let tmp = path.with_file_name(format!(
        ".{}.tmp.{}",
        file_name.to_string_lossy(),
        std::process::id()
    ));
    let result = (|| {
        let mut file = fs::File::create(&tmp).map_err(io_err(&tmp))?;
        file.write_all(content).map_err(io_err(&tmp))?;
        file.sync_all().map_err(io_err(&tmp))?;
        fs::rename(&tmp, path).map_err(io_err(path))
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

/// Writes records as canonical JSONL; returns the number of lines written.
///
/// The write is atomic: on any failure the target path is left untouched.
pub fn write_jsonl(records: &[LabeledTrajectory], path: &Path) -> Result<usize, CorpusError> {
    let mut buf = Vec::new();
    for rec in records {
        let line = serde_json::to_string(&JsonRecord::from(rec))
            .map_err(|e| CorpusError::Invalid(format!("serialization failed: {e}")))?;
        buf.extend_from_slice(line.as_bytes());
        buf.push(b'\n');
    }
    write_atomic(path, &buf)?;
    Ok(records.len())
}

/// Reads canonical JSONL, validating every record invariant.
///
/// Any malformed line is reported as [`CorpusError::Schema`] with its
/// 1-based line number.
pub fn read_jsonl(path: &Path) -> Result<Vec<LabeledTrajectory>, CorpusError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        let number = idx + 1;
        let raw: JsonRecord = serde_json::from_str(&line).map_err(|e| CorpusError::Schema {
            line: number,
            message: e.to_string(),
        })?;
        let record = raw.into_labeled().map_err(|e| CorpusError::Schema {
            line: number,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

/// Writes problems as JSONL (`{"id", "statement", "gold_answer"}` per line).
pub fn write_problems_jsonl(problems: &[Problem], path: &Path) -> Result<usize, CorpusError> {
    let mut buf = Vec::new();
    for problem in problems {
        let line = serde_json::to_string(problem)
            .map_err(|e| CorpusError::Invalid(format!("serialization failed: {e}")))?;
        buf.extend_from_slice(line.as_bytes());
        buf.push(b'\n');
    }
    write_atomic(path, &buf)?;
    Ok(problems.len())
}

/// Reads a problems JSONL file written by [`write_problems_jsonl`].
pub fn read_problems_jsonl(path: &Path) -> Result<Vec<Problem>, CorpusError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let reader = BufReader::new(file);
    let mut problems = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        let raw: Problem = serde_json::from_str(&line).map_err(|e| CorpusError::Schema {
            line: idx + 1,
            message: e.to_string(),
        })?;
        let problem = Problem::new(raw.id, raw.statement, raw.gold_answer).map_err(|e| {
            CorpusError::Schema {
                line: idx + 1,
                message: e.to_string(),
            }
        })?;
        problems.push(problem);
    }
    Ok(problems)
}

/// Builds an id-keyed map, rejecting duplicate problem ids.
pub fn problem_map(problems: &[Problem]) -> Result<BTreeMap<String, Problem>, CorpusError> {
    let mut map = BTreeMap::new();
    for problem in problems {
        if map.insert(problem.id.clone(), problem.clone()).is_some() {
            return Err(CorpusError::Invalid(format!(
                "duplicate problem id {}",
                problem.id
            )));
        }
    }
    Ok(map)
}

/// How step-delimited solution text is segmented and graded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DelimiterConfig {
    /// Token separating steps; a trailing occurrence acts as a terminator.
    pub step_delimiter: String,
    /// Marker introducing the final answer inside the last step.
    pub answer_marker: String,
    /// When set, input without any delimiter is rejected instead of being
    /// treated as a single step.
    pub strict: bool,
}

impl Default for DelimiterConfig {
    fn default() -> Self {
        DelimiterConfig {
            step_delimiter: "ки".to_string(),
            answer_marker: "The answer is".to_string(),
            strict: true,
        }
    }
}

/// Extracts the text following `marker` in `text`, trimmed of surrounding
/// whitespace and one trailing period.
pub fn extract_final_answer(text: &str, marker: &str) -> Option<String> {
    let at = text.find(marker)?;
    let rest = text[at + marker.len()..].trim();
    let rest = rest.strip_suffix('.').unwrap_or(rest).trim();
    if rest.is_empty() {
        None
    } else {
        Some(rest.to_string())
    }
}

/// Parses delimiter-separated solution text into a [`Trajectory`].
///
/// Segments are trimmed; one empty trailing segment (the terminator
/// convention `step ки step ки`) is dropped. The final answer is whatever
/// follows `cfg.answer_marker` in the last step, when present.
///
/// Errors: [`CorpusError::MalformedInput`] on empty input, or on input with
/// no delimiter when `cfg.strict` is set; [`CorpusError::EmptyStep`] when an
/// interior segment is whitespace-only.
pub fn parse_step_text(
    raw: &str,
    cfg: &DelimiterConfig,
    problem_id: &str,
    generator_id: &str,
) -> Result<Trajectory, CorpusError> {
    if raw.trim().is_empty() {
        return Err(CorpusError::MalformedInput("empty input".into()));
    }
    if cfg.step_delimiter.is_empty() {
        return Err(CorpusError::MalformedInput("empty step delimiter".into()));
    }
    let mut segments: Vec<&str> = if raw.contains(&cfg.step_delimiter) {
        raw.split(&cfg.step_delimiter).collect()
    } else if cfg.strict {
        return Err(CorpusError::MalformedInput(format!(
            "no step delimiter {:?} found",
            cfg.step_delimiter
        )));
    } else {
        vec![raw]
    };
    if segments.len() > 1 && segments.last().is_some_and(|s| s.trim().is_empty()) {
        segments.pop();
    }
    let mut texts = Vec::with_capacity(segments.len());
    for (i, segment) in segments.iter().enumerate() {
        let trimmed = segment.trim();
        if trimmed.is_empty() {
            return Err(CorpusError::EmptyStep { segment: i });
        }
        texts.push(trimmed.to_string());
    }
    let final_answer = texts
        .last()
        .and_then(|last| extract_final_answer(last, &cfg.answer_marker));
    Trajectory::new(problem_id, generator_id, texts, final_answer)
}

/// Renders step texts back into delimited form (terminator convention).
///
/// `parse_step_text` of the result recovers the same step texts.
pub fn render_step_text(step_texts: &[String], cfg: &DelimiterConfig) -> String {
    let mut out = String::new();
    for text in step_texts {
        out.push_str(text);
        out.push(' ');
        out.push_str(&cfg.step_delimiter);
        out.push(' ');
    }
    out.trim_end().to_string()
}

/// Canonical answer normalization applied before any answer comparison:
/// trim, strip one leading `+`, collapse internal whitespace runs.
pub fn normalize_answer(s: &str) -> String {
    let trimmed = s.trim();
    let unsigned = trimmed.strip_prefix('+').unwrap_or(trimmed);
    unsigned.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Pluggable answer equivalence predicate, addressed by a stable id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerComparator {
    /// Equality after [`normalize_answer`] on both sides (default).
    NormalizedExact,
    /// Byte-for-byte equality.
    Exact,
}

impl AnswerComparator {
    pub fn from_id(id: &str) -> Option<Self> {
        match id {
            "normalized_exact" => Some(AnswerComparator::NormalizedExact),
            "exact" => Some(AnswerComparator::Exact),
            _ => None,
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            AnswerComparator::NormalizedExact => "normalized_exact",
            AnswerComparator::Exact => "exact",
        }
    }

    pub fn matches(&self, answer: &str, gold: &str) -> bool {
        match self {
            AnswerComparator::NormalizedExact => normalize_answer(answer) == normalize_answer(gold),
            AnswerComparator::Exact => answer == gold,
        }
    }

    /// An absent answer never matches.
    pub fn matches_opt(&self, answer: Option<&str>, gold: &str) -> bool {
        answer.is_some_and(|a| self.matches(a, gold))
    }
}

impl Default for AnswerComparator {
    fn default() -> Self {
        AnswerComparator::NormalizedExact
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_problem() -> Problem {
        Problem::new("p-1", "What is 2+2?", "4").unwrap()
    }

    fn sample_record(k: usize, provenance: Provenance) -> LabeledTrajectory {
        let problem = sample_problem();
        let texts = (0..k).map(|i| format!("step {i}")).collect();
        let trajectory =
            Trajectory::new("p-1", "unit-test", texts, Some("4".to_string())).unwrap();
        let labels = DualLabels::new(vec![1.0; k], vec![0.5; k], None).unwrap();
        LabeledTrajectory::new(problem, trajectory, labels, provenance).unwrap()
    }

    #[test]
    fn parse_two_segments_with_terminator() {
        let cfg = DelimiterConfig {
            step_delimiter: "<SEP>".into(),
            answer_marker: "answer is".into(),
            strict: true,
        };
        let t = parse_step_text(
            "Step 1: a=2 <SEP> Step 2: answer is 4 <SEP>",
            &cfg,
            "p-1",
            "g",
        )
        .unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.steps[0].text, "Step 1: a=2");
        assert_eq!(t.steps[1].text, "Step 2: answer is 4");
        assert_eq!(t.final_answer.as_deref(), Some("4"));
    }

    #[test]
    fn parse_empty_input_is_malformed() {
        let cfg = DelimiterConfig::default();
        assert!(matches!(
            parse_step_text("", &cfg, "p", "g"),
            Err(CorpusError::MalformedInput(_))
        ));
        assert!(matches!(
            parse_step_text("   \n ", &cfg, "p", "g"),
            Err(CorpusError::MalformedInput(_))
        ));
    }

    #[test]
    fn parse_no_delimiter_strict_vs_lenient() {
        let strict = DelimiterConfig::default();
        assert!(matches!(
            parse_step_text("single segment only", &strict, "p", "g"),
            Err(CorpusError::MalformedInput(_))
        ));
        let lenient = DelimiterConfig {
            strict: false,
            ..DelimiterConfig::default()
        };
        let t = parse_step_text("single segment only", &lenient, "p", "g").unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.final_answer, None);
    }

    #[test]
    fn parse_interior_empty_segment_rejected() {
        let cfg = DelimiterConfig::default();
        let err = parse_step_text("a ки   ки b ки", &cfg, "p", "g").unwrap_err();
        assert!(matches!(err, CorpusError::EmptyStep { segment: 1 }));
    }

    #[test]
    fn render_then_parse_round_trips() {
        let cfg = DelimiterConfig::default();
        let texts = vec![
            "first step".to_string(),
            "second step".to_string(),
            "The answer is 12".to_string(),
        ];
        let rendered = render_step_text(&texts, &cfg);
        let parsed = parse_step_text(&rendered, &cfg, "p", "g").unwrap();
        assert_eq!(parsed.step_texts(), texts);
        assert_eq!(parsed.final_answer.as_deref(), Some("12"));
    }

    #[test]
    fn answer_extraction_handles_period_and_absence() {
        assert_eq!(
            extract_final_answer("so The answer is 42.", "The answer is"),
            Some("42".to_string())
        );
        assert_eq!(extract_final_answer("no marker here", "The answer is"), None);
        assert_eq!(extract_final_answer("The answer is .", "The answer is"), None);
    }

    #[test]
    fn normalization_rules() {
        assert_eq!(normalize_answer("  42 "), "42");
        assert_eq!(normalize_answer("+42"), "42");
        assert_eq!(normalize_answer("+ 4   2"), "4 2");
        assert_eq!(normalize_answer("a\tb\n c"), "a b c");
    }

    #[test]
    fn comparators() {
        let norm = AnswerComparator::NormalizedExact;
        assert!(norm.matches(" +4", "4"));
        assert!(!norm.matches("5", "4"));
        let exact = AnswerComparator::Exact;
        assert!(!exact.matches(" +4", "4"));
        assert!(exact.matches("4", "4"));
        assert!(!norm.matches_opt(None, "4"));
        assert_eq!(AnswerComparator::from_id("normalized_exact"), Some(norm));
        assert_eq!(AnswerComparator::from_id("bogus"), None);
    }

    #[test]
    fn labels_validate_ranges_and_first_error() {
        assert!(DualLabels::new(vec![1.2], vec![0.5], None).is_err());
        assert!(DualLabels::new(vec![0.5], vec![-0.1], None).is_err());
        assert!(DualLabels::new(vec![0.5, 0.5], vec![0.5], None).is_err());
        // first_error points at a high-correctness step: invalid.
        assert!(DualLabels::new(vec![0.9, 0.9], vec![0.5, 0.5], Some(1)).is_err());
        // an earlier step is already sub-threshold: invalid.
        assert!(DualLabels::new(vec![0.1, 0.1], vec![0.5, 0.5], Some(1)).is_err());
        let ok = DualLabels::new(vec![0.9, 0.1], vec![0.5, 0.5], Some(1)).unwrap();
        assert_eq!(ok.first_error_index, Some(1));
    }

    #[test]
    fn labels_quantize_to_six_decimals() {
        let labels = DualLabels::new(vec![0.123_456_789], vec![1.0 / 3.0], None).unwrap();
        assert_eq!(labels.correctness[0], 0.123_457);
        assert_eq!(labels.potential[0], 0.333_333);
    }

    #[test]
    fn jsonl_round_trip_and_counts() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.jsonl");
        let records = vec![
            sample_record(3, Provenance::Oracle),
            sample_record(1, Provenance::PseudoLabel),
            sample_record(5, Provenance::MonteCarlo),
        ];
        assert_eq!(write_jsonl(&records, &path).unwrap(), 3);
        let back = read_jsonl(&path).unwrap();
        assert_eq!(back, records);
        // Zero records: empty file, count 0.
        let empty = dir.path().join("empty.jsonl");
        assert_eq!(write_jsonl(&[], &empty).unwrap(), 0);
        assert_eq!(std::fs::read(&empty).unwrap().len(), 0);
        assert_eq!(read_jsonl(&empty).unwrap().len(), 0);
    }

    #[test]
    fn jsonl_schema_error_carries_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        let good = serde_json::to_string(&JsonRecord::from(&sample_record(
            2,
            Provenance::Oracle,
        )))
        .unwrap();
        let bad = good.replace("\"correctness\":[1.0,1.0]", "\"correctness\":[1.2,1.0]");
        assert_ne!(good, bad, "replacement must have applied");
        std::fs::write(&path, format!("{good}\n{bad}\n")).unwrap();
        match read_jsonl(&path).unwrap_err() {
            CorpusError::Schema { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("outside [0, 1]"), "message: {message}");
            }
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn jsonl_missing_file_is_io_error() {
        assert!(matches!(
            read_jsonl(Path::new("/nonexistent/x.jsonl")),
            Err(CorpusError::Io { .. })
        ));
    }

    #[test]
    fn problems_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("problems.jsonl");
        let problems = vec![sample_problem(), Problem::new("p-2", "s", "7").unwrap()];
        assert_eq!(write_problems_jsonl(&problems, &path).unwrap(), 2);
        assert_eq!(read_problems_jsonl(&path).unwrap(), problems);
        let map = problem_map(&problems).unwrap();
        assert_eq!(map.len(), 2);
        let dup = vec![sample_problem(), sample_problem()];
        assert!(problem_map(&dup).is_err());
    }

    #[test]
    fn fingerprint_distinguishes_content() {
        let a = sample_record(3, Provenance::Oracle).trajectory;
        let mut b = a.clone();
        b.steps[2].text.push_str(" changed");
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint(), a.clone().fingerprint());
        let mut c = a.clone();
        c.final_answer = None;
        assert_ne!(a.fingerprint(), c.fingerprint());
    }

    #[test]
    fn prefix_truncates_and_validates() {
        let t = sample_record(4, Provenance::Oracle).trajectory;
        let p = t.prefix(2).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p.final_answer, None);
        assert_eq!(p.steps[1].text, t.steps[1].text);
        assert!(t.prefix(0).is_err());
        assert!(t.prefix(5).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_identity_over_generated_records(
            k in 1usize..8,
            seed_vals in proptest::collection::vec(0.0f64..=1.0, 1..8),
            has_error in proptest::bool::ANY,
            provenance_pick in 0usize..4,
        ) {
            let k = k.max(seed_vals.len().min(k));
            let mut correctness: Vec<f64> = (0..k)
                .map(|i| seed_vals[i % seed_vals.len()])
                .collect();
            let potential: Vec<f64> = (0..k)
                .map(|i| seed_vals[(i + 1) % seed_vals.len()])
                .collect();
            let first_error = if has_error {
                // Force a consistent first-error shape.
                let j = k / 2;
                for (i, c) in correctness.iter_mut().enumerate() {
                    if i < j {
                        *c = c.max(0.5);
                    } else if i == j {
                        *c = c.min(0.49);
                    }
                }
                Some(j)
            } else {
                None
            };
            let provenance = [
                Provenance::MonteCarlo,
                Provenance::PseudoLabel,
                Provenance::Oracle,
                Provenance::Imported,
            ][provenance_pick];
            let problem = Problem::new("p-7", "statement", "9").unwrap();
            let trajectory = Trajectory::new(
                "p-7",
                "gen",
                (0..k).map(|i| format!("text {i}")).collect(),
                if k % 2 == 0 { Some("9".into()) } else { None },
            ).unwrap();
            let labels = DualLabels::new(correctness, potential, first_error).unwrap();
            let record = LabeledTrajectory::new(problem, trajectory, labels, provenance).unwrap();

            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("prop.jsonl");
            write_jsonl(std::slice::from_ref(&record), &path).unwrap();
            let back = read_jsonl(&path).unwrap();
            prop_assert_eq!(&back[..], std::slice::from_ref(&record));
            // No precision escape: all labels stay in range after the trip.
            for v in back[0].labels.correctness.iter().chain(&back[0].labels.potential) {
                prop_assert!((0.0..=1.0).contains(v));
            }
        }
    }
}
