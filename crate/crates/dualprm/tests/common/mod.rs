//! Minimal in-process HTTP mock of an OpenAI-style chat endpoint, built on
//! `std::net::TcpListener` so the backend client can be exercised without
//! any real network dependency. Each connection is handled on its own
//! thread; the server tracks total hits and the peak number of requests
//! in flight, and records every request body it sees.

#![allow(dead_code)] // each integration test binary uses a subset

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use serde_json::{json, Value};

#[derive(Debug, Clone)]
pub struct RecordedRequest {
    pub body: Value,
    /// Value of the Authorization header, when the client sent one.
    pub authorization: Option<String>,
}

type Responder = dyn Fn(usize, &Value) -> (u16, String) + Send + Sync;

pub struct MockServer {
    port: u16,
    hits: Arc<AtomicUsize>,
    in_flight: Arc<AtomicUsize>,
    max_in_flight: Arc<AtomicUsize>,
    requests: Arc<Mutex<Vec<RecordedRequest>>>,
    shutdown: Arc<AtomicBool>,
    accept_handle: Option<JoinHandle<()>>,
}

impl MockServer {
    /// Starts a server whose `responder(hit_index, request_body)` decides
    /// the status and body of each response. `delay` is how long each
    /// request handler holds the request "in flight" before responding —
    /// nonzero values let tests observe true concurrency.
    pub fn start_with_delay(
        delay: Duration,
        responder: impl Fn(usize, &Value) -> (u16, String) + Send + Sync + 'static,
    ) -> MockServer {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind mock server");
        let port = listener.local_addr().expect("local addr").port();
        let hits = Arc::new(AtomicUsize::new(0));
        let in_flight = Arc::new(AtomicUsize::new(0));
        let max_in_flight = Arc::new(AtomicUsize::new(0));
        let requests = Arc::new(Mutex::new(Vec::new()));
        let shutdown = Arc::new(AtomicBool::new(false));
        let responder: Arc<Responder> = Arc::new(responder);

        let accept_handle = {
            let hits = hits.clone();
            let in_flight = in_flight.clone();
            let max_in_flight = max_in_flight.clone();
            let requests = requests.clone();
            let shutdown = shutdown.clone();
            std::thread::spawn(move || {
                let mut handlers = Vec::new();
                for stream in listener.incoming() {
                    if shutdown.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    let hits = hits.clone();
                    let in_flight = in_flight.clone();
                    let max_in_flight = max_in_flight.clone();
                    let requests = requests.clone();
                    let responder = responder.clone();
                    handlers.push(std::thread::spawn(move || {
                        handle_connection(
                            stream,
                            delay,
                            &hits,
                            &in_flight,
                            &max_in_flight,
                            &requests,
                            responder.as_ref(),
                        );
                    }));
                }
                for h in handlers {
                    let _ = h.join();
                }
            })
        };

        MockServer {
            port,
            hits,
            in_flight,
            max_in_flight,
            requests,
            shutdown,
            accept_handle: Some(accept_handle),
        }
    }

    pub fn start(
        responder: impl Fn(usize, &Value) -> (u16, String) + Send + Sync + 'static,
    ) -> MockServer {
        Self::start_with_delay(Duration::ZERO, responder)
    }

    /// Base URL for a `BackendConfig` pointing at this server.
    pub fn base_url(&self) -> String {
        format!("http://127.0.0.1:{}/v1", self.port)
    }

    pub fn port(&self) -> u16 {
        self.port
    }

    /// Total requests served so far.
    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }

    /// Peak number of requests that were in flight at the same time.
    pub fn max_concurrent(&self) -> usize {
        self.max_in_flight.load(Ordering::SeqCst)
    }

    pub fn requests(&self) -> Vec<RecordedRequest> {
        self.requests.lock().unwrap().clone()
    }

    /// Stops accepting connections and joins the server thread. The port
    /// stays closed afterwards, so further client calls need the network —
    /// and fail — which is exactly what replay tests assert against.
    pub fn stop(mut self) {
        self.shutdown_now();
    }

    fn shutdown_now(&mut self) {
        if self.accept_handle.is_none() {
            return;
        }
        self.shutdown.store(true, Ordering::SeqCst);
        // Unblock the accept loop with one throwaway connection.
        let _ = TcpStream::connect(("127.0.0.1", self.port));
        if let Some(handle) = self.accept_handle.take() {
            let _ = handle.join();
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.shutdown_now();
    }
}

fn handle_connection(
    mut stream: TcpStream,
    delay: Duration,
    hits: &AtomicUsize,
    in_flight: &AtomicUsize,
    max_in_flight: &AtomicUsize,
    requests: &Mutex<Vec<RecordedRequest>>,
    responder: &Responder,
) {
    let Some((headers, body)) = read_http_request(&mut stream) else {
        return;
    };
    let body: Value = match serde_json::from_slice(&body) {
        Ok(v) => v,
        Err(_) => Value::Null,
    };
    let authorization = headers
        .iter()
        .find(|h| h.to_ascii_lowercase().starts_with("authorization:"))
        .map(|h| h.splitn(2, ':').nth(1).unwrap_or("").trim().to_string());
    requests.lock().unwrap().push(RecordedRequest {
        body: body.clone(),
        authorization,
    });

    let hit_index = hits.fetch_add(1, Ordering::SeqCst);
    let now = in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    max_in_flight.fetch_max(now, Ordering::SeqCst);
    if !delay.is_zero() {
        std::thread::sleep(delay);
    }
    let (status, response_body) = responder(hit_index, &body);
    in_flight.fetch_sub(1, Ordering::SeqCst);

    let reason = if (200..300).contains(&status) { "OK" } else { "ERR" };
    let response = format!(
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{response_body}",
        response_body.len()
    );
    let _ = stream.write_all(response.as_bytes());
    let _ = stream.flush();
}

/// Reads one HTTP/1.1 request: header lines and a Content-Length body.
fn read_http_request(stream: &mut TcpStream) -> Option<(Vec<String>, Vec<u8>)> {
    let _ = stream.set_read_timeout(Some(Duration::from_secs(10)));
    let mut buf = Vec::new();
    let mut chunk = [0u8; 4096];
    let header_end = loop {
        if let Some(pos) = find_subslice(&buf, b"\r\n\r\n") {
            break pos;
        }
        let n = stream.read(&mut chunk).ok()?;
        if n == 0 {
            return None;
        }
        buf.extend_from_slice(&chunk[..n]);
    };
    let headers: Vec<String> = String::from_utf8_lossy(&buf[..header_end])
        .lines()
        .map(|l| l.to_string())
        .collect();
    let content_length = headers
        .iter()
        .find_map(|h| {
            let lower = h.to_ascii_lowercase();
            lower
                .strip_prefix("content-length:")
                .and_then(|v| v.trim().parse::<usize>().ok())
        })
        .unwrap_or(0);
    let mut body = buf[header_end + 4..].to_vec();
    while body.len() < content_length {
        let n = stream.read(&mut chunk).ok()?;
        if n == 0 {
            break;
        }
        body.extend_from_slice(&chunk[..n]);
    }
    body.truncate(content_length);
    Some((headers, body))
}

fn find_subslice(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    haystack
        .windows(needle.len())
        .position(|window| window == needle)
}

// --------------------------------------------------------------------
// Response builders
// --------------------------------------------------------------------

/// A 200 response whose choices carry the given contents.
pub fn chat_ok(contents: &[String]) -> (u16, String) {
    let choices: Vec<Value> = contents
        .iter()
        .map(|c| json!({ "message": { "content": c } }))
        .collect();
    (200, json!({ "choices": choices }).to_string())
}

/// A delimiter-formatted solution with `steps` steps committing `answer`.
pub fn solution_text(answer: &str, steps: usize) -> String {
    let mut out = String::new();
    for i in 1..=steps {
        if i == steps {
            out.push_str(&format!("Step {i}: wrap up. The answer is {answer}. ки"));
        } else {
            out.push_str(&format!("Step {i}: working part {i}. ки "));
        }
    }
    out
}

/// The user prompt inside a recorded chat request body.
pub fn prompt_of(body: &Value) -> String {
    body["messages"][0]["content"].as_str().unwrap_or("").to_string()
}

/// The `n` parameter of a recorded chat request body.
pub fn n_of(body: &Value) -> usize {
    body["n"].as_u64().unwrap_or(1) as usize
}

/// Extracts the echoed prefix block from a completion prompt built from
/// the default completion template.
pub fn prefix_in_prompt(prompt: &str) -> Option<String> {
    let start = prompt.find("Partial solution (keep it exactly as written):\n")?
        + "Partial solution (keep it exactly as written):\n".len();
    let end = prompt[start..].find("\n\nRepeat the partial solution")? + start;
    Some(prompt[start..end].to_string())
}

/// A completion that repeats `prefix_render` verbatim and adds one final
/// step committing `answer` — the well-behaved backend.
pub fn echo_completion(prefix_render: &str, answer: &str) -> String {
    format!("{prefix_render} Step 99: wrap up. The answer is {answer}. ки")
}

/// Invariants every backend-surfaced trajectory must satisfy.
pub fn assert_valid_trajectory(t: &dualprm::corpus::Trajectory, problem: &dualprm::corpus::Problem) {
    assert!(!t.steps.is_empty(), "trajectory has no steps");
    assert_eq!(t.problem_id, problem.id);
    assert!(!t.generator_id.is_empty());
    for (i, step) in t.steps.iter().enumerate() {
        assert!(!step.text.trim().is_empty(), "step text is blank");
        assert_eq!(step.text, step.text.trim(), "step text is untrimmed");
        assert_eq!(step.index, i, "step indices must be contiguous");
    }
    if let Some(answer) = &t.final_answer {
        assert!(
            t.steps.last().unwrap().text.contains(answer),
            "final answer not in last step"
        );
    }
}
