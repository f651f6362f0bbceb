//! The generator contract: reference generators for end-to-end testing and a
//! wire-protocol client for external seq2seq generators.
//!
//! External protocol, over both transports: request
//! `{"id":"<unique>","input":"<x_plus>"}`, response
//! `{"id":"<same>","output":"<mr string>"}`. Line-delimited JSON over a
//! subprocess's stdin/stdout, or the same objects as HTTP POST bodies.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augmentation::{split_augmented, AugmentationConfig, AugmentationError};
use crate::mr::{parse_mr, serialize_mr, MrChild, MrNode, MrTree};

#[derive(Debug, Error)]
pub enum GenerationError {
    #[error(transparent)]
    MalformedAugmentedQuery(#[from] AugmentationError),
    #[error("no gold entry for query {query:?}")]
    LookupMiss { query: String },
    #[error("query has {found} tokens but a span needs {needed}")]
    QueryTooShort { needed: usize, found: usize },
    #[error("request {id} timed out after {after_ms} ms")]
    ExternalTimeout { id: String, after_ms: u64 },
    #[error("external generator protocol error: {reason}")]
    ExternalProtocolError { reason: String },
    #[error("failed to spawn {command:?}: {source}")]
    SpawnFailed {
        command: String,
        #[source]
        source: std::io::Error,
    },
}

/// Transport for an external generator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "transport", rename_all = "snake_case")]
pub enum Transport {
    Subprocess { command: Vec<String> },
    Http { url: String },
}

/// External generator parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExternalSpec {
    #[serde(flatten)]
    pub transport: Transport,
    pub timeout_ms: u64,
    pub max_in_flight: usize,
}

impl ExternalSpec {
    pub fn validate(&self) -> Result<(), GenerationError> {
        if self.timeout_ms == 0 || self.max_in_flight == 0 {
            return Err(GenerationError::ExternalProtocolError {
                reason: "timeout_ms and max_in_flight must be positive".into(),
            });
        }
        Ok(())
    }
}

/// Which generator to run.
#[derive(Debug, Clone, PartialEq)]
pub enum GeneratorSpec {
    /// Return the first exemplar's MR verbatim.
    Echo,
    /// Copy the first exemplar's structure, refilling token spans from the
    /// query.
    TemplateCopy,
    /// Return the MR from a gold table keyed by the raw query.
    Lookup(BTreeMap<String, String>),
    /// Delegate over the wire.
    External(ExternalSpec),
}

/// The outcome of one generation call. `output_text` is always recorded;
/// `parsed` is present exactly when the output is a syntactically valid MR.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationResult {
    pub output_text: String,
    pub parsed: Option<MrTree>,
    pub valid: bool,
    pub latency_ms: u64,
}

fn finish(output_text: String, started: Instant) -> GenerationResult {
    let parsed = parse_mr(&output_text).ok();
    GenerationResult {
        valid: parsed.is_some(),
        parsed,
        output_text,
        latency_ms: started.elapsed().as_millis() as u64,
    }
}

/// A ready-to-call generator. Reference generators are pure; the external
/// client may be shared across threads and serializes transport writes.
pub enum Generator {
    Echo,
    TemplateCopy,
    Lookup(BTreeMap<String, String>),
    External(ExternalClient),
}

impl std::fmt::Debug for Generator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Generator::Echo => f.write_str("Echo"),
            Generator::TemplateCopy => f.write_str("TemplateCopy"),
            Generator::Lookup(t) => write!(f, "Lookup({} entries)", t.len()),
            Generator::External(_) => f.write_str("External"),
        }
    }
}

impl Generator {
    pub fn from_spec(spec: GeneratorSpec) -> Result<Self, GenerationError> {
        Ok(match spec {
            GeneratorSpec::Echo => Generator::Echo,
            GeneratorSpec::TemplateCopy => Generator::TemplateCopy,
            GeneratorSpec::Lookup(table) => Generator::Lookup(table),
            GeneratorSpec::External(spec) => Generator::External(ExternalClient::new(spec)?),
        })
    }

    /// Map an augmented query to an output MR.
    pub fn generate(
        &self,
        x_plus: &str,
        config: &AugmentationConfig,
    ) -> Result<GenerationResult, GenerationError> {
        let started = Instant::now();
        match self {
            Generator::Echo => {
                let split = split_augmented(x_plus, config)?;
                let (_, first_mr) = &split.exemplars[0];
                Ok(finish(serialize_mr(first_mr), started))
            }
            Generator::TemplateCopy => {
                let split = split_augmented(x_plus, config)?;
                let (_, first_mr) = &split.exemplars[0];
                let tokens: Vec<&str> = split.query.split_whitespace().collect();
                let filled = template_copy_fill(first_mr, &tokens)?;
                Ok(finish(serialize_mr(&filled), started))
            }
            Generator::Lookup(table) => {
                let split = split_augmented(x_plus, config)?;
                let output = table
                    .get(&split.query)
                    .ok_or(GenerationError::LookupMiss {
                        query: split.query.clone(),
                    })?;
                Ok(finish(output.clone(), started))
            }
            Generator::External(client) => {
                let output = client.request(x_plus)?;
                Ok(finish(output, started))
            }
        }
    }
}

/// Copy structure and labels from the exemplar MR, replacing each maximal
/// token span with the query token window of the same length that maximizes
/// word overlap with the exemplar span (leftmost on ties).
pub fn template_copy_fill(
    exemplar_mr: &MrTree,
    query_tokens: &[&str],
) -> Result<MrTree, GenerationError> {
    fn overlap(window: &[&str], span: &[&str]) -> usize {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for w in span {
            *counts.entry(w).or_insert(0) += 1;
        }
        let mut score = 0;
        for w in window {
            if let Some(c) = counts.get_mut(w) {
                if *c > 0 {
                    *c -= 1;
                    score += 1;
                }
            }
        }
        score
    }

    fn best_window<'q>(
        query_tokens: &[&'q str],
        span: &[&str],
    ) -> Result<Vec<&'q str>, GenerationError> {
        let len = span.len();
        if query_tokens.len() < len {
            return Err(GenerationError::QueryTooShort {
                needed: len,
                found: query_tokens.len(),
            });
        }
        let mut best_start = 0;
        let mut best_score = 0;
        for (start, window) in query_tokens.windows(len).enumerate() {
            let score = overlap(window, span);
            if score > best_score {
                best_score = score;
                best_start = start;
            }
        }
        Ok(query_tokens[best_start..best_start + len].to_vec())
    }

    fn fill(node: &MrNode, query_tokens: &[&str]) -> Result<MrNode, GenerationError> {
        let mut children = Vec::with_capacity(node.children.len());
        let mut i = 0;
        while i < node.children.len() {
            match &node.children[i] {
                MrChild::Node(n) => {
                    children.push(MrChild::Node(fill(n, query_tokens)?));
                    i += 1;
                }
                MrChild::Token(_) => {
                    let mut span: Vec<&str> = Vec::new();
                    while let Some(MrChild::Token(t)) = node.children.get(i) {
                        span.push(t);
                        i += 1;
                    }
                    for token in best_window(query_tokens, &span)? {
                        children.push(MrChild::Token(token.to_string()));
                    }
                }
            }
        }
        Ok(MrNode {
            kind: node.kind,
            label: node.label.clone(),
            children,
        })
    }

    Ok(MrTree::new(fill(&exemplar_mr.root, query_tokens)?))
}

// ---------------------------------------------------------------------------
// External client
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct WireRequest<'a> {
    id: &'a str,
    input: &'a str,
}

#[derive(Deserialize)]
struct WireResponse {
    id: String,
    output: Option<String>,
}

/// Counting semaphore bounding in-flight external requests.
struct Semaphore {
    permits: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn new(permits: usize) -> Self {
        Self {
            permits: Mutex::new(permits),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) {
        let mut permits = self.permits.lock().unwrap();
        while *permits == 0 {
            permits = self.cv.wait(permits).unwrap();
        }
        *permits -= 1;
    }

    fn release(&self) {
        *self.permits.lock().unwrap() += 1;
        self.cv.notify_one();
    }
}

type PendingMap = Arc<Mutex<HashMap<String, mpsc::Sender<String>>>>;

struct ProcessTransport {
    child: Mutex<Child>,
    stdin: Mutex<ChildStdin>,
    pending: PendingMap,
}

impl ProcessTransport {
    fn spawn(command: &[String]) -> Result<Self, GenerationError> {
        let display = command.join(" ");
        let (program, args) = command
            .split_first()
            .ok_or_else(|| GenerationError::ExternalProtocolError {
                reason: "empty subprocess command".into(),
            })?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|source| GenerationError::SpawnFailed {
                command: display,
                source,
            })?;
        let stdin = child.stdin.take().expect("stdin was piped");
        let stdout = child.stdout.take().expect("stdout was piped");
        let pending: PendingMap = Arc::new(Mutex::new(HashMap::new()));

        // Reader thread: route each response line to the waiting request by
        // id; unmatched or unparseable lines are dropped.
        let routing = Arc::clone(&pending);
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                let Ok(response) = serde_json::from_str::<WireResponse>(&line) else {
                    continue;
                };
                let sender = routing.lock().unwrap().remove(&response.id);
                if let (Some(sender), Some(output)) = (sender, response.output) {
                    let _ = sender.send(output);
                }
            }
        });

        Ok(Self {
            child: Mutex::new(child),
            stdin: Mutex::new(stdin),
            pending,
        })
    }

    fn request(&self, id: &str, input: &str, timeout: Duration) -> Result<String, GenerationError> {
        let (tx, rx) = mpsc::channel();
        self.pending.lock().unwrap().insert(id.to_string(), tx);
        let line = serde_json::to_string(&WireRequest { id, input }).expect("request serializes");
        {
            let mut stdin = self.stdin.lock().unwrap();
            let write = stdin
                .write_all(line.as_bytes())
                .and_then(|()| stdin.write_all(b"\n"))
                .and_then(|()| stdin.flush());
            if let Err(e) = write {
                self.pending.lock().unwrap().remove(id);
                return Err(GenerationError::ExternalProtocolError {
                    reason: format!("write to subprocess failed: {e}"),
                });
            }
        }
        match rx.recv_timeout(timeout) {
            Ok(output) => Ok(output),
            Err(_) => {
                // Release the slot so a late response cannot cross-assign.
                self.pending.lock().unwrap().remove(id);
                Err(GenerationError::ExternalTimeout {
                    id: id.to_string(),
                    after_ms: timeout.as_millis() as u64,
                })
            }
        }
    }
}

impl Drop for ProcessTransport {
    fn drop(&mut self) {
        if let Ok(mut child) = self.child.lock() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

struct HttpTransport {
    url: String,
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    fn new(url: String, timeout: Duration) -> Result<Self, GenerationError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| GenerationError::ExternalProtocolError {
                reason: format!("failed to build HTTP client: {e}"),
            })?;
        Ok(Self { url, client })
    }

    fn request(&self, id: &str, input: &str, timeout: Duration) -> Result<String, GenerationError> {
        let result = self
            .client
            .post(&self.url)
            .json(&WireRequest { id, input })
            .send();
        let response = match result {
            Ok(r) => r,
            Err(e) if e.is_timeout() => {
                return Err(GenerationError::ExternalTimeout {
                    id: id.to_string(),
                    after_ms: timeout.as_millis() as u64,
                })
            }
            Err(e) => {
                return Err(GenerationError::ExternalProtocolError {
                    reason: format!("HTTP request failed: {e}"),
                })
            }
        };
        if !response.status().is_success() {
            return Err(GenerationError::ExternalProtocolError {
                reason: format!("HTTP status {}", response.status()),
            });
        }
        let body: WireResponse =
            response
                .json()
                .map_err(|e| GenerationError::ExternalProtocolError {
                    reason: format!("bad response body: {e}"),
                })?;
        if body.id != id {
            return Err(GenerationError::ExternalProtocolError {
                reason: format!("response id {:?} does not match request id {id:?}", body.id),
            });
        }
        body.output
            .ok_or_else(|| GenerationError::ExternalProtocolError {
                reason: "response is missing the output field".into(),
            })
    }
}

enum ExternalTransport {
    Process(ProcessTransport),
    Http(HttpTransport),
}

/// Client for an external generator: matches responses to requests by id,
/// bounds concurrency to `max_in_flight`, and times out stuck requests.
pub struct ExternalClient {
    transport: ExternalTransport,
    timeout: Duration,
    semaphore: Semaphore,
    next_id: AtomicU64,
}

impl ExternalClient {
    pub fn new(spec: ExternalSpec) -> Result<Self, GenerationError> {
        spec.validate()?;
        let timeout = Duration::from_millis(spec.timeout_ms);
        let transport = match &spec.transport {
            Transport::Subprocess { command } => {
                ExternalTransport::Process(ProcessTransport::spawn(command)?)
            }
            Transport::Http { url } => {
                ExternalTransport::Http(HttpTransport::new(url.clone(), timeout)?)
            }
        };
        Ok(Self {
            transport,
            timeout,
            semaphore: Semaphore::new(spec.max_in_flight),
            next_id: AtomicU64::new(1),
        })
    }

    /// Send one augmented query and wait for the matching response.
    pub fn request(&self, input: &str) -> Result<String, GenerationError> {
        let id = format!("req-{}", self.next_id.fetch_add(1, Ordering::Relaxed));
        self.semaphore.acquire();
        let result = match &self.transport {
            ExternalTransport::Process(p) => p.request(&id, input, self.timeout),
            ExternalTransport::Http(h) => h.request(&id, input, self.timeout),
        };
        self.semaphore.release();
        result
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Read;
    use std::net::TcpListener;

    fn config() -> AugmentationConfig {
        AugmentationConfig::default()
    }

    #[test]
    fn echo_returns_first_exemplar_mr() {
        let generator = Generator::Echo;
        let result = generator
            .generate(
                "call mom @@ call dad ## [IN create call = [SL contact = dad]]",
                &config(),
            )
            .unwrap();
        assert_eq!(result.output_text, "[IN create call = [SL contact = dad]]");
        assert!(result.valid);
        assert!(result.parsed.is_some());
    }

    #[test]
    fn echo_rejects_malformed_input() {
        let generator = Generator::Echo;
        assert!(matches!(
            generator.generate("no separators", &config()),
            Err(GenerationError::MalformedAugmentedQuery(_))
        ));
    }

    #[test]
    fn template_copy_fills_spans_from_query() {
        // Span ["dad"], windows ["call"] and ["mom"] both overlap 0;
        // leftmost tie-break picks "call".
        let exemplar = parse_mr("[IN create call = [SL contact = dad]]").unwrap();
        let filled = template_copy_fill(&exemplar, &["call", "mom"]).unwrap();
        assert_eq!(
            serialize_mr(&filled),
            "[IN create call = [SL contact = call]]"
        );

        // Overlap wins over position.
        let exemplar = parse_mr("[IN create call = [SL contact = mom]]").unwrap();
        let filled = template_copy_fill(&exemplar, &["call", "mom"]).unwrap();
        assert_eq!(
            serialize_mr(&filled),
            "[IN create call = [SL contact = mom]]"
        );

        // No token spans: output equals the exemplar.
        let exemplar =
            parse_mr("[IN create call = [SL contact = [IN get contact = [SL relation = dad]]]]")
                .unwrap();
        let filled = template_copy_fill(&exemplar, &["call", "my", "father"]).unwrap();
        let expected = {
            let inner = template_copy_fill(&exemplar, &["call", "my", "father"]).unwrap();
            inner
        };
        assert_eq!(filled, expected);

        // Query shorter than the longest span.
        let exemplar = parse_mr("[IN a = one two three]").unwrap();
        assert!(matches!(
            template_copy_fill(&exemplar, &["only", "two"]),
            Err(GenerationError::QueryTooShort { needed: 3, found: 2 })
        ));
    }

    #[test]
    fn template_copy_preserves_template() {
        use crate::mr::template_of;
        let exemplar = parse_mr(
            "[IN create call = [SL contact = [IN get contact = [SL relation = dad]]] [SL name app = Whatsapp]]",
        )
        .unwrap();
        let query: Vec<&str> = "please call the brother of zoey on skype".split(' ').collect();
        let filled = template_copy_fill(&exemplar, &query).unwrap();
        assert_eq!(template_of(&filled), template_of(&exemplar));
    }

    #[test]
    fn template_copy_multi_token_spans_pick_best_window() {
        let exemplar = parse_mr("[IN get weather = [SL date time = for today]]").unwrap();
        let query: Vec<&str> = "weather for tomorrow please".split(' ').collect();
        // Spans of length 2: windows "weather for", "for tomorrow",
        // "tomorrow please"; overlap with "for today" is 1, 1, 0; leftmost
        // tie-break picks "weather for".
        let filled = template_copy_fill(&exemplar, &query).unwrap();
        assert_eq!(
            serialize_mr(&filled),
            "[IN get weather = [SL date time = weather for]]"
        );
    }

    #[test]
    fn lookup_hits_misses_and_invalid_passthrough() {
        let mut table = BTreeMap::new();
        table.insert(
            "call mom".to_string(),
            "[IN create call = [SL contact = mom]]".to_string(),
        );
        table.insert("broken".to_string(), "not a parse".to_string());
        let generator = Generator::Lookup(table);

        let result = generator
            .generate("call mom @@ call dad ## [IN a = b]", &config())
            .unwrap();
        assert!(result.valid);
        assert_eq!(result.output_text, "[IN create call = [SL contact = mom]]");

        let result = generator
            .generate("broken @@ call dad ## [IN a = b]", &config())
            .unwrap();
        assert!(!result.valid);
        assert!(result.parsed.is_none());
        assert_eq!(result.output_text, "not a parse");

        assert!(matches!(
            generator.generate("unknown @@ call dad ## [IN a = b]", &config()),
            Err(GenerationError::LookupMiss { .. })
        ));
    }

    /// Minimal single-use HTTP server fixture: answers every POST with the
    /// given status and body.
    fn http_stub(status: &'static str, body_for: impl Fn(String) -> String + Send + 'static) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { break };
                let mut buf = Vec::new();
                let mut chunk = [0u8; 1024];
                let request = loop {
                    let n = stream.read(&mut chunk).unwrap_or(0);
                    if n == 0 {
                        break String::new();
                    }
                    buf.extend_from_slice(&chunk[..n]);
                    let text = String::from_utf8_lossy(&buf).to_string();
                    if let Some(head_end) = text.find("\r\n\r\n") {
                        let content_length = text
                            .lines()
                            .find_map(|l| l.to_ascii_lowercase().strip_prefix("content-length:").map(str::trim).map(String::from))
                            .and_then(|v| v.parse::<usize>().ok())
                            .unwrap_or(0);
                        if buf.len() >= head_end + 4 + content_length {
                            break text[head_end + 4..head_end + 4 + content_length].to_string();
                        }
                    }
                };
                let body = body_for(request);
                let response = format!(
                    "HTTP/1.1 {status}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                );
                use std::io::Write;
                let _ = stream.write_all(response.as_bytes());
            }
        });
        format!("http://{addr}/v1/generate")
    }

    fn external_http(url: String) -> Generator {
        Generator::from_spec(GeneratorSpec::External(ExternalSpec {
            transport: Transport::Http { url },
            timeout_ms: 2_000,
            max_in_flight: 2,
        }))
        .unwrap()
    }

    #[test]
    fn http_generator_round_trip() {
        let url = http_stub("200 OK", |request| {
            let req: serde_json::Value = serde_json::from_str(&request).unwrap();
            serde_json::json!({
                "id": req["id"],
                "output": "[IN create call = [SL contact = dad]]",
            })
            .to_string()
        });
        let generator = external_http(url);
        let result = generator
            .generate("call mom @@ call dad ## [IN a = b]", &config())
            .unwrap();
        assert!(result.valid);
        assert_eq!(result.output_text, "[IN create call = [SL contact = dad]]");
    }

    #[test]
    fn http_generator_invalid_output_passes_through() {
        let url = http_stub("200 OK", |request| {
            let req: serde_json::Value = serde_json::from_str(&request).unwrap();
            serde_json::json!({"id": req["id"], "output": "not a parse"}).to_string()
        });
        let generator = external_http(url);
        let result = generator
            .generate("call mom @@ call dad ## [IN a = b]", &config())
            .unwrap();
        assert!(!result.valid);
        assert_eq!(result.output_text, "not a parse");
    }

    #[test]
    fn http_generator_protocol_errors() {
        let url = http_stub("500 Internal Server Error", |_| "{}".to_string());
        let generator = external_http(url);
        assert!(matches!(
            generator.generate("x @@ a ## [IN a = b]", &config()),
            Err(GenerationError::ExternalProtocolError { .. })
        ));

        let url = http_stub("200 OK", |request| {
            let req: serde_json::Value = serde_json::from_str(&request).unwrap();
            serde_json::json!({"id": req["id"]}).to_string()
        });
        let generator = external_http(url);
        assert!(matches!(
            generator.generate("x @@ a ## [IN a = b]", &config()),
            Err(GenerationError::ExternalProtocolError { reason }) if reason.contains("output")
        ));

        let url = http_stub("200 OK", |_| {
            serde_json::json!({"id": "wrong-id", "output": "[IN a = b]"}).to_string()
        });
        let generator = external_http(url);
        assert!(matches!(
            generator.generate("x @@ a ## [IN a = b]", &config()),
            Err(GenerationError::ExternalProtocolError { reason }) if reason.contains("id")
        ));
    }

    #[test]
    fn subprocess_generator_round_trip_and_out_of_order_ids() {
        // `cat` is not a JSON generator; use a tiny shell loop that echoes
        // valid responses with the request ids, answering pairs in reverse.
        let script = r#"
buffered=""
while IFS= read -r line; do
  id=$(printf '%s' "$line" | sed 's/.*"id":"\([^"]*\)".*/\1/')
  if [ -z "$buffered" ]; then
    buffered="$id"
  else
    printf '{"id":"%s","output":"[IN a = second]"}\n' "$id"
    printf '{"id":"%s","output":"[IN a = first]"}\n' "$buffered"
    buffered=""
  fi
done
"#;
        let generator = Generator::from_spec(GeneratorSpec::External(ExternalSpec {
            transport: Transport::Subprocess {
                command: vec!["sh".into(), "-c".into(), script.into()],
            },
            timeout_ms: 5_000,
            max_in_flight: 4,
        }))
        .unwrap();
        let Generator::External(client) = &generator else {
            panic!("external client expected");
        };
        // Issue two requests concurrently; responses come back reversed and
        // must still land on the right callers.
        std::thread::scope(|scope| {
            let first = scope.spawn(|| client.request("first input"));
            std::thread::sleep(Duration::from_millis(100));
            let second = scope.spawn(|| client.request("second input"));
            let first = first.join().unwrap().unwrap();
            let second = second.join().unwrap().unwrap();
            assert_eq!(first, "[IN a = first]");
            assert_eq!(second, "[IN a = second]");
        });
    }

    #[test]
    fn subprocess_timeout_releases_slot() {
        let generator = Generator::from_spec(GeneratorSpec::External(ExternalSpec {
            transport: Transport::Subprocess {
                command: vec!["sh".into(), "-c".into(), "while read line; do :; done".into()],
            },
            timeout_ms: 150,
            max_in_flight: 1,
        }))
        .unwrap();
        let started = Instant::now();
        assert!(matches!(
            generator.generate("x @@ a ## [IN a = b]", &config()),
            Err(GenerationError::ExternalTimeout { .. })
        ));
        // The single slot must be free again for the next request.
        assert!(matches!(
            generator.generate("x @@ a ## [IN a = b]", &config()),
            Err(GenerationError::ExternalTimeout { .. })
        ));
        assert!(started.elapsed() < Duration::from_secs(3));
    }

    #[test]
    fn spawn_failure_is_reported() {
        let result = Generator::from_spec(GeneratorSpec::External(ExternalSpec {
            transport: Transport::Subprocess {
                command: vec!["definitely-not-a-real-binary-xyz".into()],
            },
            timeout_ms: 100,
            max_in_flight: 1,
        }));
        assert!(matches!(result, Err(GenerationError::SpawnFailed { .. })));
    }
}
