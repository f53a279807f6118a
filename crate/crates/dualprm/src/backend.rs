//! Client for OpenAI-compatible chat-completion services.
//!
//! The labeling pipeline talks to a generator through this client in two
//! shapes: sample `n` fresh candidate solutions for a problem
//! ([`BackendClient::generate_candidates`]) and extend a trajectory prefix
//! ([`BackendClient::complete_prefix_remote`], which backs a
//! [`Completer`]). Both build prompts from swappable text templates,
//! parse the returned text through the corpus step-delimiter adapter, and
//! validate the result — a malformed completion is an error, never a
//! silently truncated trajectory.
//!
//! Reliability model: every attempt of every request is appended to a
//! JSONL **audit log** (`{request_hash, request, response, timestamp,
//! attempt}`); failures are retried with exponential backoff up to
//! `max_retries`. **Replay mode** reads that log instead of the network:
//! each request is answered by the last successful recorded response with
//! the same request hash, making any pipeline run reproducible offline.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write as _};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{parse_step_text, render_step_text, DelimiterConfig, Problem, Trajectory};
use crate::labeling::{Completer, CompleterError};

const DEFAULT_GENERATE_TEMPLATE: &str = include_str!("../templates/generate.txt");
const DEFAULT_COMPLETE_TEMPLATE: &str = include_str!("../templates/complete.txt");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackendConfig {
    pub base_url: String,
    pub model_name: String,
    /// Environment variable holding the bearer token; empty disables auth.
    pub api_key_env: String,
    pub max_concurrency: usize,
    pub timeout_secs: f64,
    /// Additional attempts after the first failure.
    pub max_retries: u32,
    pub temperature: f64,
    /// First retry delay; attempt k waits `initial_backoff_ms · 2^k`.
    pub initial_backoff_ms: u64,
    /// Prompt template overrides; embedded defaults are used when absent.
    pub generate_template_path: Option<PathBuf>,
    pub complete_template_path: Option<PathBuf>,
    /// Step-text conventions for parsing completions.
    pub delimiter: DelimiterConfig,
    /// Where request/response attempts are appended (JSONL).
    pub audit_path: Option<PathBuf>,
    /// Answer requests from the audit log; no network traffic at all.
    pub replay: bool,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            base_url: "http://127.0.0.1:8080/v1".into(),
            model_name: "local-model".into(),
            api_key_env: String::new(),
            max_concurrency: 4,
            timeout_secs: 30.0,
            max_retries: 3,
            temperature: 0.7,
            initial_backoff_ms: 100,
            generate_template_path: None,
            complete_template_path: None,
            delimiter: DelimiterConfig::default(),
            audit_path: None,
            replay: false,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), BackendError> {
        let bad = |field: &'static str, message: String| BackendError::InvalidConfig { field, message };
        if self.base_url.trim().is_empty() {
            return Err(bad("base_url", "must not be empty".into()));
        }
        if self.model_name.trim().is_empty() {
            return Err(bad("model_name", "must not be empty".into()));
        }
        if self.max_concurrency < 1 {
            return Err(bad("max_concurrency", "must be at least 1".into()));
        }
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return Err(bad(
                "timeout_secs",
                format!("{} is not a positive duration", self.timeout_secs),
            ));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(bad(
                "temperature",
                format!("{} is not a nonnegative temperature", self.temperature),
            ));
        }
        if self.replay && self.audit_path.is_none() {
            return Err(bad(
                "audit_path",
                "replay mode needs an audit log to read from".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("invalid backend config: {field}: {message}")]
    InvalidConfig { field: &'static str, message: String },
    #[error("prompt template error: {0}")]
    Template(String),
    #[error("backend returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("backend request timed out: {0}")]
    Timeout(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("unparsable completion (candidate {index}): {message}")]
    ParseFailure { index: usize, message: String },
    #[error("backend rewrote prefix step {step}: expected {expected:?}, got {got:?}")]
    PrefixNotPreserved {
        step: usize,
        expected: String,
        got: String,
    },
    #[error("replay miss: no successful response recorded for request {request_hash}")]
    ReplayMiss { request_hash: String },
    #[error("audit log failure at {path}: {message}")]
    Audit { path: String, message: String },
    #[error("no problem {problem_id} available to prompt a completion")]
    UnknownProblem { problem_id: String },
}

/// One attempted network interaction, as stored in the audit log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditRecord {
    pub request_hash: String,
    pub request: Value,
    pub response: Value,
    pub timestamp: u64,
    pub attempt: u32,
}

impl AuditRecord {
    /// A record counts as successful when its response is a completion
    /// body (carries a `choices` array).
    pub fn is_success(&self) -> bool {
        self.response.get("choices").is_some_and(Value::is_array)
    }
}

/// Canonical hash identifying a request: sha256 over the endpoint and the
/// serialized body, whose object keys serde_json keeps sorted.
pub fn request_hash(url: &str, body: &Value) -> String {
    let mut hasher = Sha256::new();
    hasher.update(url.as_bytes());
    hasher.update(b"\n");
    hasher.update(serde_json::to_string(body).expect("JSON body serializes").as_bytes());
    let digest: [u8; 32] = hasher.finalize().into();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Debug, Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Debug, Deserialize)]
struct ChatMessage {
    content: String,
}

fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .unwrap_or_default()
        .as_secs()
}

fn truncate_body(body: &str) -> String {
    const LIMIT: usize = 400;
    if body.len() <= LIMIT {
        body.to_string()
    } else {
        let mut end = LIMIT;
        while !body.is_char_boundary(end) {
            end -= 1;
        }
        format!("{}…", &body[..end])
    }
}

/// Blocking client for an OpenAI-compatible `/chat/completions` endpoint,
/// with auditing, retries, and offline replay. Shareable across threads.
pub struct BackendClient {
    cfg: BackendConfig,
    http: reqwest::blocking::Client,
    api_key: Option<String>,
    generate_template: String,
    complete_template: String,
    audit: Option<Mutex<File>>,
    /// request hash → last successful response body (replay mode only).
    replay_map: Option<HashMap<String, Value>>,
}

impl BackendClient {
    pub fn new(cfg: BackendConfig) -> Result<Self, BackendError> {
        cfg.validate()?;
        let load_template = |path: &Option<PathBuf>, fallback: &str, placeholder: &str| {
            let text = match path {
                Some(p) => std::fs::read_to_string(p).map_err(|e| {
                    BackendError::Template(format!("cannot read {}: {e}", p.display()))
                })?,
                None => fallback.to_string(),
            };
            if !text.contains(placeholder) {
                return Err(BackendError::Template(format!(
                    "template is missing the {placeholder} placeholder"
                )));
            }
            Ok(text)
        };
        let generate_template =
            load_template(&cfg.generate_template_path, DEFAULT_GENERATE_TEMPLATE, "{statement}")?;
        let complete_template =
            load_template(&cfg.complete_template_path, DEFAULT_COMPLETE_TEMPLATE, "{prefix}")?;
        let api_key = if cfg.api_key_env.is_empty() {
            None
        } else {
            std::env::var(&cfg.api_key_env).ok()
        };
        let replay_map = if cfg.replay {
            let path = cfg.audit_path.as_ref().expect("validated above");
            Some(load_replay_map(path)?)
        } else {
            None
        };
        let audit = if cfg.replay {
            None
        } else if let Some(path) = &cfg.audit_path {
            let file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| BackendError::Audit {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })?;
            Some(Mutex::new(file))
        } else {
            None
        };
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(cfg.timeout_secs))
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok(BackendClient {
            cfg,
            http,
            api_key,
            generate_template,
            complete_template,
            audit,
            replay_map,
        })
    }

    pub fn cfg(&self) -> &BackendConfig {
        &self.cfg
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.cfg.base_url.trim_end_matches('/'))
    }

    fn audit_append(&self, record: &AuditRecord) -> Result<(), BackendError> {
        let Some(audit) = &self.audit else {
            return Ok(());
        };
        let path = self
            .cfg
            .audit_path
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_default();
        let line = serde_json::to_string(record).expect("audit record serializes");
        let mut file = audit.lock().unwrap_or_else(|e| e.into_inner());
        file.write_all(line.as_bytes())
            .and_then(|_| file.write_all(b"\n"))
            .and_then(|_| file.flush())
            .map_err(|e| BackendError::Audit {
                path,
                message: e.to_string(),
            })
    }

    /// One live POST. Returns the parsed response body on HTTP success.
    fn post_once(&self, url: &str, body: &Value) -> Result<Value, BackendError> {
        let classify = |e: reqwest::Error| {
            if e.is_timeout() {
                BackendError::Timeout(e.to_string())
            } else {
                BackendError::Transport(e.to_string())
            }
        };
        let mut request = self.http.post(url).json(body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(classify)?;
        let status = response.status().as_u16();
        let text = response.text().map_err(classify)?;
        if !(200..300).contains(&status) {
            return Err(BackendError::Http {
                status,
                body: truncate_body(&text),
            });
        }
        serde_json::from_str::<Value>(&text).map_err(|e| BackendError::ParseFailure {
            index: 0,
            message: format!("response body is not JSON: {e}"),
        })
    }

    /// Sends a request (or replays it) and parses the result, retrying
    /// every failure class — transport, HTTP status, and unparsable
    /// content alike — with exponential backoff. Every live attempt lands
    /// in the audit log.
    fn request<T>(
        &self,
        body: &Value,
        parse: impl Fn(&ChatResponse) -> Result<T, BackendError>,
    ) -> Result<T, BackendError> {
        let url = self.endpoint();
        let hash = request_hash(&url, body);
        if let Some(map) = &self.replay_map {
            let recorded = map
                .get(&hash)
                .ok_or_else(|| BackendError::ReplayMiss {
                    request_hash: hash.clone(),
                })?;
            let chat: ChatResponse =
                serde_json::from_value(recorded.clone()).map_err(|e| BackendError::ParseFailure {
                    index: 0,
                    message: format!("recorded response no longer parses: {e}"),
                })?;
            return parse(&chat);
        }
        let mut last_error = None;
        for attempt in 0..=self.cfg.max_retries {
            if attempt > 0 {
                let wait = self
                    .cfg
                    .initial_backoff_ms
                    .saturating_mul(1u64 << (attempt - 1).min(16));
                std::thread::sleep(Duration::from_millis(wait));
            }
            let outcome = self.post_once(&url, body);
            let (response_value, result) = match outcome {
                Ok(value) => {
                    let parsed = serde_json::from_value::<ChatResponse>(value.clone())
                        .map_err(|e| BackendError::ParseFailure {
                            index: 0,
                            message: format!("response lacks chat choices: {e}"),
                        })
                        .and_then(|chat| parse(&chat));
                    (value, parsed)
                }
                Err(e) => (json!({ "error": e.to_string() }), Err(e)),
            };
            self.audit_append(&AuditRecord {
                request_hash: hash.clone(),
                request: body.clone(),
                response: response_value,
                timestamp: now_unix(),
                attempt: attempt + 1,
            })?;
            match result {
                Ok(value) => return Ok(value),
                Err(e) => last_error = Some(e),
            }
        }
        Err(last_error.expect("at least one attempt ran"))
    }

    fn chat_body(&self, prompt: &str, n: usize, seed: Option<u64>) -> Value {
        let mut body = json!({
            "model": self.cfg.model_name,
            "messages": [{ "role": "user", "content": prompt }],
            "temperature": self.cfg.temperature,
            "n": n,
        });
        if let Some(seed) = seed {
            body["seed"] = json!(seed);
        }
        body
    }

    /// Samples `n` candidate solutions for a problem. `n = 0` asks for
    /// nothing and sends nothing.
    pub fn generate_candidates(
        &self,
        problem: &Problem,
        n: usize,
    ) -> Result<Vec<Trajectory>, BackendError> {
        if n == 0 {
            return Ok(Vec::new());
        }
        let prompt = self.generate_template.replace("{statement}", &problem.statement);
        let body = self.chat_body(&prompt, n, None);
        self.request(&body, |chat| {
            if chat.choices.len() != n {
                return Err(BackendError::ParseFailure {
                    index: chat.choices.len(),
                    message: format!("asked for {n} candidates, got {}", chat.choices.len()),
                });
            }
            chat.choices
                .iter()
                .enumerate()
                .map(|(index, choice)| {
                    parse_step_text(
                        &choice.message.content,
                        &self.cfg.delimiter,
                        &problem.id,
                        &format!("backend/{}#{index}", self.cfg.model_name),
                    )
                    .map_err(|e| BackendError::ParseFailure {
                        index,
                        message: e.to_string(),
                    })
                })
                .collect()
        })
    }

    /// Extends `prefix` with backend-sampled steps. The prompt echoes the
    /// prefix; the parsed completion must reproduce it verbatim and add at
    /// least one step, otherwise [`BackendError::PrefixNotPreserved`] /
    /// [`BackendError::ParseFailure`]. `seed` distinguishes independent
    /// rollouts of the same prefix (and keys them separately for replay).
    pub fn complete_prefix_remote(
        &self,
        problem: &Problem,
        prefix: &Trajectory,
        seed: Option<u64>,
    ) -> Result<Trajectory, BackendError> {
        let rendered_prefix = render_step_text(&prefix.step_texts(), &self.cfg.delimiter);
        let prompt = self
            .complete_template
            .replace("{statement}", &problem.statement)
            .replace("{prefix}", &rendered_prefix);
        let body = self.chat_body(&prompt, 1, seed);
        self.request(&body, |chat| {
            let choice = chat.choices.first().ok_or(BackendError::ParseFailure {
                index: 0,
                message: "completion carried no choices".into(),
            })?;
            let full = parse_step_text(
                &choice.message.content,
                &self.cfg.delimiter,
                &prefix.problem_id,
                &prefix.generator_id,
            )
            .map_err(|e| BackendError::ParseFailure {
                index: 0,
                message: e.to_string(),
            })?;
            if full.len() <= prefix.len() {
                return Err(BackendError::ParseFailure {
                    index: 0,
                    message: format!(
                        "completion has {} steps, prefix already has {}",
                        full.len(),
                        prefix.len()
                    ),
                });
            }
            for (step, expected) in prefix.steps.iter().enumerate() {
                let got = &full.steps[step].text;
                if got != &expected.text {
                    return Err(BackendError::PrefixNotPreserved {
                        step,
                        expected: expected.text.clone(),
                        got: got.clone(),
                    });
                }
            }
            Ok(full)
        })
    }
}

fn load_replay_map(path: &Path) -> Result<HashMap<String, Value>, BackendError> {
    let file = File::open(path).map_err(|e| BackendError::Audit {
        path: path.display().to_string(),
        message: format!("cannot open audit log for replay: {e}"),
    })?;
    let mut map = HashMap::new();
    for (number, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| BackendError::Audit {
            path: path.display().to_string(),
            message: format!("line {}: {e}", number + 1),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: AuditRecord = serde_json::from_str(&line).map_err(|e| BackendError::Audit {
            path: path.display().to_string(),
            message: format!("line {} is not an audit record: {e}", number + 1),
        })?;
        if record.is_success() {
            // Later successes win: the map holds the final answer given
            // for each distinct request.
            map.insert(record.request_hash, record.response);
        }
    }
    Ok(map)
}

/// Runs `f` over `items` with at most `max_workers` concurrent calls,
/// returning results in input order.
pub fn run_batch<T, R>(
    items: &[T],
    max_workers: usize,
    f: impl Fn(usize, &T) -> R + Sync,
) -> Vec<R>
where
    T: Sync,
    R: Send,
{
    let workers = max_workers.max(1).min(items.len());
    let cursor = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let index = cursor.fetch_add(1, Ordering::Relaxed);
                if index >= items.len() {
                    break;
                }
                let result = f(index, &items[index]);
                *slots[index].lock().unwrap_or_else(|e| e.into_inner()) = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| {
            slot.into_inner()
                .unwrap_or_else(|e| e.into_inner())
                .expect("every slot filled")
        })
        .collect()
}

/// [`Completer`] that extends prefixes through the backend. Rollout
/// indices become request seeds, so distinct rollouts stay distinct in
/// the audit log and under replay.
pub struct BackendCompleter<'c> {
    pub client: &'c BackendClient,
    pub problems: &'c BTreeMap<String, Problem>,
}

impl Completer for BackendCompleter<'_> {
    fn complete(&self, prefix: &Trajectory, rollout_index: u64) -> Result<Trajectory, CompleterError> {
        let problem = self
            .problems
            .get(&prefix.problem_id)
            .ok_or_else(|| {
                CompleterError(
                    BackendError::UnknownProblem {
                        problem_id: prefix.problem_id.clone(),
                    }
                    .to_string(),
                )
            })?;
        self.client
            .complete_prefix_remote(problem, prefix, Some(rollout_index))
            .map_err(|e| CompleterError(e.to_string()))
    }
}
