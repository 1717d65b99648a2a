//! LLM-driven corpus augmentation over an OpenAI-compatible chat-completion
//! endpoint, plus a scripted local mock of that endpoint.
//!
//! The loop is generate -> label -> dedupe -> merge. Generation prompts ask
//! for two fenced blocks (comment, then code); labeling prompts ask for
//! exactly "Useful" or "Not Useful".

use std::collections::HashSet;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::{oneshot, Mutex};

use crate::corpus::{merge_with_stats, CodeCommentPair, Corpus, Label, Source};
use crate::error::{Error, Result};

pub const DEFAULT_TOPICS: [&str; 12] = [
    "string handling",
    "linked lists",
    "memory allocation",
    "file I/O",
    "sorting",
    "bit manipulation",
    "hash tables",
    "error handling",
    "parsing command-line arguments",
    "binary search",
    "ring buffers",
    "matrix arithmetic",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    /// Base URL; requests go to `{endpoint}/v1/chat/completions`.
    pub endpoint: String,
    pub model_name: String,
    pub api_key_env: String,
    pub count: usize,
    pub generation_temperature: f64,
    pub labeling_temperature: f64,
    pub max_tokens: u32,
    pub max_retries: u32,
    pub requests_in_flight: usize,
    pub timeout_secs: f64,
    /// First retry delay; doubles per attempt.
    pub backoff_ms: u64,
    pub language: String,
    pub topics: Vec<String>,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            endpoint: "https://api.openai.com".into(),
            model_name: "gpt-4o-mini".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            count: 1239,
            generation_temperature: 0.7,
            labeling_temperature: 0.0,
            max_tokens: 512,
            max_retries: 3,
            requests_in_flight: 4,
            timeout_secs: 30.0,
            backoff_ms: 500,
            language: "C".into(),
            topics: DEFAULT_TOPICS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::Config("count must be at least 1".into()));
        }
        if !(self.endpoint.starts_with("http://") || self.endpoint.starts_with("https://")) {
            return Err(Error::Config(format!("endpoint {:?} is not an http(s) URL", self.endpoint)));
        }
        for t in [self.generation_temperature, self.labeling_temperature] {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Error::Config("temperatures must be finite and non-negative".into()));
            }
        }
        if self.requests_in_flight == 0 {
            return Err(Error::Config("requests_in_flight must be positive".into()));
        }
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err(Error::Config("timeout must be positive".into()));
        }
        if self.topics.is_empty() {
            return Err(Error::Config("at least one topic is required".into()));
        }
        Ok(())
    }

    fn topic(&self, index: usize) -> &str {
        &self.topics[index % self.topics.len()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptTemplate {
    /// Placeholders: `{language}`, `{topic}`.
    pub generation_template: String,
    /// Placeholders: `{code}`, `{comment}`.
    pub labeling_template: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate {
            generation_template: "Write a short, realistic {language} function about {topic} and the \
comment a developer would place directly above it. Reply with exactly two fenced code blocks and \
nothing else: the first contains only the comment, the second contains only the function."
                .into(),
            labeling_template: "Decide whether the comment below is useful for understanding the code it \
accompanies. Answer with exactly one of: Useful, Not Useful.\n\nComment:\n{comment}\n\nCode:\n{code}\n"
                .into(),
        }
    }
}

impl PromptTemplate {
    pub fn validate(&self) -> Result<()> {
        for placeholder in ["{code}", "{comment}"] {
            if !self.labeling_template.contains(placeholder) {
                return Err(Error::Config(format!("labeling template lacks {placeholder}")));
            }
        }
        Ok(())
    }

    pub fn generation_prompt(&self, language: &str, topic: &str) -> String {
        render(&self.generation_template, &[("language", language), ("topic", topic)])
    }

    pub fn labeling_prompt(&self, pair: &CodeCommentPair) -> String {
        render(&self.labeling_template, &[("code", &pair.code), ("comment", &pair.comment)])
    }
}

/// Substitutes `{name}` placeholders in one pass, so substituted text is
/// never rescanned.
pub fn render(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open + 1..];
        let hit = tail.find('}').and_then(|close| {
            let name = &tail[..close];
            values
                .iter()
                .find(|(k, _)| *k == name)
                .map(|(_, v)| (close, *v))
        });
        match hit {
            Some((close, value)) => {
                out.push_str(value);
                rest = &tail[close + 1..];
            }
            None => {
                out.push('{');
                rest = tail;
            }
        }
    }
    out.push_str(rest);
    out
}

/// Splits a completion into (comment, code). Exactly two complete fenced
/// blocks are required; text outside the fences is ignored.
pub fn parse_completion(text: &str) -> std::result::Result<(String, String), String> {
    let mut blocks = Vec::new();
    let mut current: Option<Vec<&str>> = None;
    for line in text.lines() {
        let is_fence = line.trim_start().starts_with("```");
        match (&mut current, is_fence) {
            (None, true) => current = Some(Vec::new()),
            (Some(body), true) => {
                blocks.push(body.join("\n"));
                current = None;
            }
            (Some(body), false) => body.push(line),
            (None, false) => {}
        }
    }
    if current.is_some() {
        return Err("unterminated fenced block".into());
    }
    if blocks.len() != 2 {
        return Err(format!("expected 2 fenced blocks, found {}", blocks.len()));
    }
    let code = blocks.pop().expect("two blocks");
    let comment = blocks.pop().expect("two blocks");
    if comment.trim().is_empty() {
        return Err("comment block is empty".into());
    }
    if code.trim().is_empty() {
        return Err("code block is empty".into());
    }
    Ok((comment, code))
}

/// Exact, case-insensitive match of the trimmed response.
pub fn parse_label(text: &str) -> Option<Label> {
    match text.trim().to_lowercase().as_str() {
        "useful" => Some(Label::Useful),
        "not useful" => Some(Label::NotUseful),
        _ => None,
    }
}

/// The completion the mock returns for a known pair.
pub fn format_completion(comment: &str, code: &str) -> String {
    format!("```\n{comment}\n```\n```c\n{code}\n```\n")
}

struct Client {
    http: reqwest::Client,
    url: String,
    api_key: Option<String>,
    model: String,
    max_tokens: u32,
    max_retries: u32,
    backoff: Duration,
}

impl Client {
    fn new(config: &GenerationConfig) -> Result<Self> {
        let http = reqwest::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_secs))
            .build()
            .map_err(|e| Error::Transport(e.to_string()))?;
        Ok(Client {
            http,
            url: format!("{}/v1/chat/completions", config.endpoint.trim_end_matches('/')),
            api_key: std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty()),
            model: config.model_name.clone(),
            max_tokens: config.max_tokens,
            max_retries: config.max_retries,
            backoff: Duration::from_millis(config.backoff_ms),
        })
    }

    /// One completion, retrying transport failures, 429 and 5xx with
    /// exponential backoff.
    async fn complete(&self, prompt: &str, temperature: f64) -> Result<String> {
        let body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": temperature,
            "max_tokens": self.max_tokens,
        });
        let mut attempt = 0;
        loop {
            let mut request = self.http.post(&self.url).json(&body);
            if let Some(key) = &self.api_key {
                request = request.bearer_auth(key);
            }
            let failure = match request.send().await {
                Ok(response) => {
                    let status = response.status();
                    if status.is_success() {
                        let value: Value = response
                            .json()
                            .await
                            .map_err(|e| Error::Transport(format!("unreadable response body: {e}")))?;
                        return value["choices"][0]["message"]["content"]
                            .as_str()
                            .map(str::to_string)
                            .ok_or_else(|| Error::Transport("response has no choices[0].message.content".into()));
                    }
                    if status.as_u16() != 429 && !status.is_server_error() {
                        return Err(Error::Transport(format!("endpoint answered {status}")));
                    }
                    format!("endpoint answered {status}")
                }
                Err(e) => e.to_string(),
            };
            if attempt >= self.max_retries {
                return Err(Error::Transport(format!(
                    "{failure} (gave up after {} attempts)",
                    attempt + 1
                )));
            }
            let delay = self.backoff.saturating_mul(1 << attempt.min(16));
            log::debug!("retrying after {failure}; waiting {delay:?}");
            tokio::time::sleep(delay).await;
            attempt += 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationOutcome {
    pub pairs: Vec<CodeCommentPair>,
    /// Reasons for discarded completions, in request order.
    pub discarded: Vec<String>,
}

/// Requests `count` pairs. Returned pairs are Unlabeled with
/// `source = generated`; input order is preserved.
pub async fn generate_pairs(config: &GenerationConfig, template: &PromptTemplate) -> Result<GenerationOutcome> {
    config.validate()?;
    let client = Client::new(config)?;
    let client = &client;
    let completions: Vec<Result<String>> = stream::iter(0..config.count)
        .map(|i| {
            let prompt = template.generation_prompt(&config.language, config.topic(i));
            async move { client.complete(&prompt, config.generation_temperature).await }
        })
        .buffered(config.requests_in_flight)
        .collect()
        .await;
    let mut outcome = GenerationOutcome {
        pairs: Vec::new(),
        discarded: Vec::new(),
    };
    for (i, completion) in completions.into_iter().enumerate() {
        match parse_completion(&completion?) {
            Ok((comment, code)) => {
                outcome
                    .pairs
                    .push(CodeCommentPair::new(comment, code, Label::Unlabeled, Source::Generated));
            }
            Err(reason) => {
                log::warn!("discarding completion {}: {reason}", i + 1);
                outcome.discarded.push(reason);
            }
        }
    }
    if outcome.pairs.is_empty() {
        return Err(Error::GenerationFailed {
            requested: config.count,
        });
    }
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelingOutcome {
    pub pairs: Vec<CodeCommentPair>,
    /// Ids of pairs that never received a recognizable label.
    pub dropped: Vec<String>,
}

/// Labels each pair, retrying unrecognized answers up to `max_retries`.
pub async fn label_pairs(
    pairs: Vec<CodeCommentPair>,
    config: &GenerationConfig,
    template: &PromptTemplate,
) -> Result<LabelingOutcome> {
    template.validate()?;
    if let Some(p) = pairs.iter().find(|p| p.label.is_labeled()) {
        return Err(Error::Precondition(format!("pair {} is already labeled", p.id)));
    }
    if pairs.is_empty() {
        return Ok(LabelingOutcome {
            pairs,
            dropped: Vec::new(),
        });
    }
    let client = Client::new(config)?;
    let client = &client;
    let total = pairs.len();
    let answers: Vec<Result<Option<Label>>> = stream::iter(pairs.iter())
        .map(|pair| async move {
            let prompt = template.labeling_prompt(pair);
            for attempt in 0..=config.max_retries {
                let reply = client.complete(&prompt, config.labeling_temperature).await?;
                match parse_label(&reply) {
                    Some(label) => return Ok(Some(label)),
                    None => log::debug!("pair {} attempt {}: unrecognized label {reply:?}", pair.id, attempt + 1),
                }
            }
            Ok(None)
        })
        .buffered(config.requests_in_flight)
        .collect()
        .await;
    let mut outcome = LabelingOutcome {
        pairs: Vec::new(),
        dropped: Vec::new(),
    };
    for (mut pair, answer) in pairs.into_iter().zip(answers) {
        match answer? {
            Some(label) => {
                pair.label = label;
                outcome.pairs.push(pair);
            }
            None => {
                log::warn!(
                    "dropping pair {}: no recognizable label after {} attempts",
                    pair.id,
                    config.max_retries + 1
                );
                outcome.dropped.push(pair.id);
            }
        }
    }
    if outcome.pairs.is_empty() {
        return Err(Error::LabelingFailed { count: total });
    }
    Ok(outcome)
}

/// Counts from one augmentation run. `merged + deduped + dropped == generated`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentStats {
    pub requested: usize,
    pub generated: usize,
    pub discarded: usize,
    pub labeled: usize,
    pub dropped: usize,
    pub deduped: usize,
    pub merged: usize,
}

/// Generates, labels, dedupes against `base` (and within the batch) and
/// merges. `base` is left untouched.
pub async fn augment_corpus(
    base: &Corpus,
    config: &GenerationConfig,
    template: &PromptTemplate,
) -> Result<(Corpus, AugmentStats)> {
    template.validate()?;
    let generated = generate_pairs(config, template).await?;
    let mut stats = AugmentStats {
        requested: config.count,
        generated: generated.pairs.len(),
        discarded: generated.discarded.len(),
        ..AugmentStats::default()
    };
    let labeled = label_pairs(generated.pairs, config, template).await?;
    stats.labeled = labeled.pairs.len();
    stats.dropped = labeled.dropped.len();

    let mut seen = HashSet::new();
    let mut unique = Vec::with_capacity(labeled.pairs.len());
    for pair in labeled.pairs {
        if seen.insert(pair.content_hash()) {
            unique.push(pair);
        } else {
            stats.deduped += 1;
        }
    }
    let addition = Corpus::new("generated", unique)?;
    let (merged, merge_stats) = merge_with_stats(base, &addition)?;
    stats.deduped += merge_stats.deduped;
    stats.merged = merge_stats.added;
    Ok((merged, stats))
}

#[derive(Debug)]
pub struct AugmentRun {
    pub corpus: Corpus,
    pub stats: AugmentStats,
    /// Prompts the mock received, when a mock was used.
    pub prompts: Option<Vec<String>>,
}

/// Runs [`augment_corpus`] on a private runtime. With `mock`, a scripted
/// server is started on an ephemeral port and requests are serialized so
/// the transcript is reproducible.
pub fn augment_blocking(
    base: &Corpus,
    config: &GenerationConfig,
    template: &PromptTemplate,
    mock: Option<Vec<ScriptedResponse>>,
) -> Result<AugmentRun> {
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Error::Transport(format!("cannot start async runtime: {e}")))?;
    runtime.block_on(async {
        match mock {
            None => {
                let (corpus, stats) = augment_corpus(base, config, template).await?;
                Ok(AugmentRun {
                    corpus,
                    stats,
                    prompts: None,
                })
            }
            Some(script) => {
                let server = run_mock_server(script, 0).await?;
                let config = GenerationConfig {
                    endpoint: server.url(),
                    requests_in_flight: 1,
                    ..config.clone()
                };
                let result = augment_corpus(base, &config, template).await;
                let prompts = server.prompts().await;
                server.shutdown().await;
                let (corpus, stats) = result?;
                Ok(AugmentRun {
                    corpus,
                    stats,
                    prompts: Some(prompts),
                })
            }
        }
    })
}

/// One canned reply: completion text, or a bare HTTP status.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptedResponse {
    Completion(String),
    Status { status: u16 },
}

/// A script that makes the mock act as a cooperative model for `pairs`:
/// one well-formed completion per pair, then each pair's label.
pub fn cooperative_script(pairs: &[CodeCommentPair]) -> Vec<ScriptedResponse> {
    let completions = pairs
        .iter()
        .map(|p| ScriptedResponse::Completion(format_completion(&p.comment, &p.code)));
    let labels = pairs.iter().map(|p| {
        ScriptedResponse::Completion(p.label.as_str().unwrap_or("Not Useful").to_string())
    });
    completions.chain(labels).collect()
}

struct MockState {
    script: Vec<ScriptedResponse>,
    transcript: Mutex<Transcript>,
}

#[derive(Default)]
struct Transcript {
    served: usize,
    prompts: Vec<String>,
}

pub struct MockServer {
    addr: SocketAddr,
    state: Arc<MockState>,
    stop: Option<oneshot::Sender<()>>,
    task: tokio::task::JoinHandle<()>,
}

impl MockServer {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// User-message contents of every request received so far, in order.
    pub async fn prompts(&self) -> Vec<String> {
        self.state.transcript.lock().await.prompts.clone()
    }

    pub async fn shutdown(mut self) {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        let _ = (&mut self.task).await;
    }
}

/// Serves the chat-completion route on 127.0.0.1:`port` (0 picks a free
/// port). Replies follow `script` in order, then repeat its last entry; an
/// empty script answers every request with 500.
pub async fn run_mock_server(script: Vec<ScriptedResponse>, port: u16) -> Result<MockServer> {
    let listener = tokio::net::TcpListener::bind(("127.0.0.1", port))
        .await
        .map_err(Error::Bind)?;
    let addr = listener.local_addr().map_err(Error::Bind)?;
    let state = Arc::new(MockState {
        script,
        transcript: Mutex::new(Transcript::default()),
    });
    let app = Router::new()
        .route("/v1/chat/completions", post(mock_completion))
        .with_state(state.clone());
    let (stop, stopped) = oneshot::channel::<()>();
    let task = tokio::spawn(async move {
        let _ = axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = stopped.await;
            })
            .await;
    });
    Ok(MockServer {
        addr,
        state,
        stop: Some(stop),
        task,
    })
}

async fn mock_completion(State(state): State<Arc<MockState>>, Json(body): Json<Value>) -> Response {
    // Holding the lock for the whole request keeps the transcript ordered.
    let mut transcript = state.transcript.lock().await;
    let prompt = body["messages"]
        .as_array()
        .and_then(|messages| messages.iter().rev().find(|m| m["role"] == "user"))
        .and_then(|m| m["content"].as_str())
        .unwrap_or_default()
        .to_string();
    transcript.prompts.push(prompt);
    let Some(last) = state.script.len().checked_sub(1) else {
        return (
            StatusCode::INTERNAL_SERVER_ERROR,
            Json(json!({"error": {"message": "mock script is empty"}})),
        )
            .into_response();
    };
    let entry = &state.script[transcript.served.min(last)];
    transcript.served += 1;
    match entry {
        ScriptedResponse::Completion(text) => Json(json!({
            "id": format!("mock-{}", transcript.served),
            "object": "chat.completion",
            "created": 0,
            "model": body["model"],
            "choices": [{
                "index": 0,
                "message": {"role": "assistant", "content": text},
                "finish_reason": "stop",
            }],
        }))
        .into_response(),
        ScriptedResponse::Status { status } => {
            let code = StatusCode::from_u16(*status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
            (code, Json(json!({"error": {"message": "scripted failure"}}))).into_response()
        }
    }
}
