//! LLM transport layer and the batch generation driver.
//!
//! A [`Transport`] sends one prompt and returns raw text. Exactly two
//! implementations exist: an HTTP-JSON client and a file-backed mock that
//! answers from canned per-record glosses, so the whole pipeline runs
//! offline. Both keep atomic call counters; only HTTP requests count as
//! network calls.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::corpus::SampleRecord;
use crate::error::{Error, Result};
use crate::llm::{build_prompt, normalize_gloss, parse_response, PromptSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LlmClientConfig {
    pub endpoint: String,
    pub model: String,
    pub timeout_secs: u64,
    pub max_retries: usize,
    /// Canned-response file; set for offline mock mode.
    pub mock_path: Option<PathBuf>,
    /// Slash-separated path to the text field in the response JSON.
    pub response_text_path: String,
}

impl Default for LlmClientConfig {
    fn default() -> Self {
        LlmClientConfig {
            endpoint: "http://localhost:8080/v1/chat/completions".to_string(),
            model: "gemini-1.5-pro".to_string(),
            timeout_secs: 30,
            max_retries: 2,
            mock_path: None,
            response_text_path: "choices/0/message/content".to_string(),
        }
    }
}

impl LlmClientConfig {
    pub fn validate(&self) -> Result<()> {
        if self.timeout_secs == 0 {
            return Err(Error::Config("llm.timeout_secs: must be at least 1".into()));
        }
        if self.endpoint.is_empty() {
            return Err(Error::Config("llm.endpoint: must not be empty".into()));
        }
        Ok(())
    }
}

/// Send a prompt, receive raw text. `record_ids` names the batch so canned
/// transports can answer per record; network transports ignore it.
pub trait Transport: Send + Sync {
    fn send(&self, prompt: &str, record_ids: &[&str]) -> Result<String>;

    /// Number of network requests performed so far.
    fn network_calls(&self) -> u64;
}

/// HTTP-JSON transport posting `{model, messages: [{role: "user",
/// content: <prompt>}]}` and extracting text at a configurable JSON path.
pub struct HttpTransport {
    endpoint: String,
    model: String,
    text_path: Vec<String>,
    client: reqwest::blocking::Client,
    calls: AtomicU64,
}

impl HttpTransport {
    pub fn new(config: &LlmClientConfig) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| Error::Transport(e.to_string()))?;
        Ok(HttpTransport {
            endpoint: config.endpoint.clone(),
            model: config.model.clone(),
            text_path: config
                .response_text_path
                .split('/')
                .map(str::to_string)
                .collect(),
            client,
            calls: AtomicU64::new(0),
        })
    }

    fn extract_text(&self, body: &serde_json::Value) -> Result<String> {
        let mut node = body;
        for segment in &self.text_path {
            node = match node {
                serde_json::Value::Array(items) => segment
                    .parse::<usize>()
                    .ok()
                    .and_then(|i| items.get(i))
                    .ok_or_else(|| {
                        Error::Transport(format!("response has no array index {segment}"))
                    })?,
                serde_json::Value::Object(map) => map.get(segment).ok_or_else(|| {
                    Error::Transport(format!("response has no field {segment:?}"))
                })?,
                _ => {
                    return Err(Error::Transport(format!(
                        "response path {segment:?} hits a scalar"
                    )))
                }
            };
        }
        node.as_str()
            .map(str::to_string)
            .ok_or_else(|| Error::Transport("response text field is not a string".into()))
    }
}

impl Transport for HttpTransport {
    fn send(&self, prompt: &str, _record_ids: &[&str]) -> Result<String> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let body = serde_json::json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
        });
        let response = self
            .client
            .post(&self.endpoint)
            .json(&body)
            .send()
            .map_err(|e| Error::Transport(e.to_string()))?;
        if !response.status().is_success() {
            return Err(Error::Transport(format!("HTTP {}", response.status())));
        }
        let parsed: serde_json::Value = response
            .json()
            .map_err(|e| Error::Transport(e.to_string()))?;
        self.extract_text(&parsed)
    }

    fn network_calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Deserialize)]
struct CannedLine {
    id: String,
    gloss: Vec<String>,
}

/// File-backed mock: JSON Lines of `{id, gloss: [...]}`. Renders one
/// bracketed group per requested record, in batch order, and performs no
/// network I/O.
pub struct MockTransport {
    responses: HashMap<String, Vec<String>>,
    lookups: AtomicU64,
}

impl MockTransport {
    pub fn from_file(path: &Path) -> Result<Self> {
        let file = BufReader::new(fs::File::open(path)?);
        let mut responses = HashMap::new();
        for (idx, line) in file.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: CannedLine =
                serde_json::from_str(&line).map_err(|e| Error::CorpusLine {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    reason: e.to_string(),
                })?;
            responses.insert(parsed.id, parsed.gloss);
        }
        Ok(MockTransport {
            responses,
            lookups: AtomicU64::new(0),
        })
    }

    pub fn from_map(responses: HashMap<String, Vec<String>>) -> Self {
        MockTransport {
            responses,
            lookups: AtomicU64::new(0),
        }
    }

    /// Number of mock lookups served (not network calls).
    pub fn lookups(&self) -> u64 {
        self.lookups.load(Ordering::SeqCst)
    }
}

impl Transport for MockTransport {
    fn send(&self, _prompt: &str, record_ids: &[&str]) -> Result<String> {
        self.lookups.fetch_add(1, Ordering::SeqCst);
        let mut lines = Vec::with_capacity(record_ids.len() + 1);
        lines.push("Output:".to_string());
        for &id in record_ids {
            let gloss = self
                .responses
                .get(id)
                .ok_or_else(|| Error::Transport(format!("no canned response for record {id}")))?;
            lines.push(format!("[{}]", gloss.join(" ")));
        }
        Ok(lines.join("\n"))
    }

    fn network_calls(&self) -> u64 {
        0
    }
}

/// Retry-aware wrapper around a transport.
pub struct LlmClient {
    transport: Box<dyn Transport>,
    max_retries: usize,
    backoff: Duration,
}

impl LlmClient {
    pub fn new(transport: Box<dyn Transport>, max_retries: usize) -> Self {
        LlmClient {
            transport,
            max_retries,
            backoff: Duration::from_millis(200),
        }
    }

    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    /// Build from config: mock mode when `mock_path` is set (no network
    /// objects are constructed at all), HTTP otherwise.
    pub fn from_config(config: &LlmClientConfig) -> Result<Self> {
        config.validate()?;
        let transport: Box<dyn Transport> = match &config.mock_path {
            Some(path) => Box::new(MockTransport::from_file(path)?),
            None => Box::new(HttpTransport::new(config)?),
        };
        Ok(LlmClient::new(transport, config.max_retries))
    }

    pub fn network_calls(&self) -> u64 {
        self.transport.network_calls()
    }

    /// Send with fixed-count retries and exponential backoff; a response
    /// that fails to parse counts as a retryable failure.
    fn request(
        &self,
        prompt: &str,
        record_ids: &[&str],
        expected: usize,
    ) -> Result<Vec<Vec<String>>> {
        let mut last_err = None;
        for attempt in 0..=self.max_retries {
            if attempt > 0 && !self.backoff.is_zero() {
                std::thread::sleep(self.backoff * (1u32 << (attempt - 1).min(16)));
            }
            match self
                .transport
                .send(prompt, record_ids)
                .and_then(|raw| parse_response(&raw, expected))
            {
                Ok(groups) => return Ok(groups),
                Err(e) => last_err = Some(e),
            }
        }
        Err(last_err.expect("at least one attempt"))
    }
}

/// Per-corpus generation outcome: how many records were filled and which
/// failed after retries, with reasons.
#[derive(Debug, Default)]
pub struct GenerateReport {
    pub filled: usize,
    pub failures: Vec<(String, String)>,
}

/// Fill `llm_gloss` on every record from the model (or mock), batching
/// `queries_per_call` records per request in corpus order. Per-record
/// failures are reported, never silently dropped: a failing multi-record
/// batch is retried as singletons so one bad record cannot sink its
/// neighbors.
pub fn generate(
    records: &mut [SampleRecord],
    spec: &PromptSpec,
    client: &LlmClient,
) -> Result<GenerateReport> {
    spec.validate()?;
    let convention = spec.convention()?;
    let mut report = GenerateReport::default();
    for batch in records.chunks_mut(spec.queries_per_call) {
        let queries: Vec<String> = batch.iter().map(|r| r.text.join(" ")).collect();
        let ids: Vec<&str> = batch.iter().map(|r| r.id.as_str()).collect();
        let prompt = build_prompt(spec, &queries)?;
        let outcome = client
            .request(&prompt, &ids, batch.len())
            .and_then(|groups| {
                groups
                    .iter()
                    .map(|tokens| normalize_gloss(tokens, convention))
                    .collect::<Result<Vec<_>>>()
            });
        match outcome {
            Ok(glosses) => {
                for (record, gloss) in batch.iter_mut().zip(glosses) {
                    record.llm_gloss = gloss;
                    report.filled += 1;
                }
            }
            Err(batch_err) if batch.len() > 1 => {
                log::warn!(
                    "batch of {} failed ({batch_err}), retrying singly",
                    batch.len()
                );
                for record in batch.iter_mut() {
                    let query = vec![record.text.join(" ")];
                    let prompt = build_prompt(spec, &query)?;
                    let single = client
                        .request(&prompt, &[record.id.as_str()], 1)
                        .and_then(|groups| normalize_gloss(&groups[0], convention));
                    match single {
                        Ok(gloss) => {
                            record.llm_gloss = gloss;
                            report.filled += 1;
                        }
                        Err(e) => report.failures.push((record.id.clone(), e.to_string())),
                    }
                }
            }
            Err(e) => {
                for record in batch.iter() {
                    report.failures.push((record.id.clone(), e.to_string()));
                }
            }
        }
    }
    Ok(report)
}
