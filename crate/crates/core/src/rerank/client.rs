use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::OutputFormat;
use crate::corpus::AnnotationSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
        }
    }
}

/// What the caller is asking about. Remote clients ignore it; offline mocks
/// use it to answer without reading the prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestTag {
    pub requirement_id: String,
    pub candidate_ids: Vec<String>,
    pub k: usize,
    pub output_format: OutputFormat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub tag: RequestTag,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ChatError {
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("unexpected response: {0}")]
    Protocol(String),
}

/// A chat-completion backend.
pub trait ChatClient: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, ChatError>;

    /// Whether system instructions may be sent as a separate message.
    fn supports_roles(&self) -> bool {
        false
    }

    /// Upper bound on concurrent requests.
    fn max_in_flight(&self) -> usize {
        1
    }

    fn label(&self) -> &str;
}

fn format_ids(ids: &[String]) -> String {
    let quoted: Vec<String> = ids.iter().map(|i| format!("'{i}'")).collect();
    format!("[{}]", quoted.join(", "))
}

/// Returns fixed response text, optionally per requirement.
#[derive(Debug, Clone, Default)]
pub struct ScriptedClient {
    default: String,
    per_requirement: BTreeMap<String, String>,
}

impl ScriptedClient {
    pub fn constant(response: impl Into<String>) -> Self {
        Self {
            default: response.into(),
            per_requirement: BTreeMap::new(),
        }
    }

    pub fn with_response(mut self, requirement_id: impl Into<String>, response: impl Into<String>) -> Self {
        self.per_requirement.insert(requirement_id.into(), response.into());
        self
    }
}

impl ChatClient for ScriptedClient {
    fn complete(&self, request: &ChatRequest) -> Result<String, ChatError> {
        Ok(self
            .per_requirement
            .get(&request.tag.requirement_id)
            .unwrap_or(&self.default)
            .clone())
    }

    fn max_in_flight(&self) -> usize {
        4
    }

    fn label(&self) -> &str {
        "mock-scripted"
    }
}

/// The best possible re-ranker: answers with the gold candidates in
/// retriever order, padded with the best non-gold candidates up to `k`.
#[derive(Debug, Clone, Default)]
pub struct OracleClient {
    gold: BTreeMap<String, BTreeSet<String>>,
}

impl OracleClient {
    pub fn new(gold: BTreeMap<String, BTreeSet<String>>) -> Self {
        Self { gold }
    }

    pub fn from_annotations(annotations: &AnnotationSet) -> Self {
        Self::new(annotations.iter().map(|(k, v)| (k.clone(), v.clone())).collect())
    }

    pub fn select(&self, tag: &RequestTag) -> Vec<String> {
        let empty = BTreeSet::new();
        let gold = self.gold.get(&tag.requirement_id).unwrap_or(&empty);
        let (hits, misses): (Vec<&String>, Vec<&String>) = tag.candidate_ids.iter().partition(|id| gold.contains(*id));
        let mut seen = HashSet::new();
        hits.into_iter()
            .chain(misses)
            .filter(|id| seen.insert(id.as_str()))
            .take(tag.k)
            .cloned()
            .collect()
    }
}

impl ChatClient for OracleClient {
    fn complete(&self, request: &ChatRequest) -> Result<String, ChatError> {
        let ids = self.select(&request.tag);
        Ok(match request.tag.output_format {
            OutputFormat::Closed => format_ids(&ids),
            OutputFormat::Open => serde_json::json!({
                "explanation": "Gold-annotated candidates first, then the best-ranked remainder.",
                "answer": ids,
            })
            .to_string(),
        })
    }

    fn max_in_flight(&self) -> usize {
        4
    }

    fn label(&self) -> &str {
        "mock-oracle"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteChatConfig {
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub max_attempts: u32,
    pub backoff_ms: u64,
    pub max_in_flight: usize,
}

impl Default for RemoteChatConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4".into(),
            api_key_env: "AUDITMATCH_API_KEY".into(),
            timeout_secs: 120,
            max_attempts: 3,
            backoff_ms: 1000,
            max_in_flight: 2,
        }
    }
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    temperature: f64,
    messages: &'a [ChatMessage],
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<CompletionChoice>,
}

#[derive(Deserialize)]
struct CompletionChoice {
    message: CompletionMessage,
}

#[derive(Deserialize)]
struct CompletionMessage {
    content: Option<String>,
}

/// Counting gate for in-flight requests.
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn run<T>(&self, f: impl FnOnce() -> T) -> T {
        {
            let mut free = self.free.lock().unwrap();
            while *free == 0 {
                free = self.cv.wait(free).unwrap();
            }
            *free -= 1;
        }
        let out = f();
        *self.free.lock().unwrap() += 1;
        self.cv.notify_one();
        out
    }
}

/// Chat-completion client over HTTP: `{model, temperature, messages}` in,
/// `choices[0].message.content` out. Retries transport errors, 429 and 5xx
/// with exponential backoff.
pub struct RemoteChatClient {
    config: RemoteChatConfig,
    agent: ureq::Agent,
    api_key: Option<String>,
    gate: Gate,
}

impl RemoteChatClient {
    pub fn new(config: RemoteChatConfig) -> Self {
        let api_key = std::env::var(&config.api_key_env).ok();
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        let gate = Gate::new(config.max_in_flight);
        Self {
            config,
            agent,
            api_key,
            gate,
        }
    }

    fn attempt(&self, request: &ChatRequest) -> Result<String, (bool, String)> {
        let mut req = self.agent.post(&self.config.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(CompletionRequest {
                model: &self.config.model,
                temperature: request.temperature,
                messages: &request.messages,
            })
            .map_err(|e| (true, e.to_string()))?;
        let status = resp.status().as_u16();
        if status != 200 {
            return Err((status == 429 || status >= 500, format!("HTTP status {status}")));
        }
        let body: CompletionResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| (false, format!("bad completion body: {e}")))?;
        body.choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or((false, "completion has no message content".to_owned()))
    }
}

impl ChatClient for RemoteChatClient {
    fn complete(&self, request: &ChatRequest) -> Result<String, ChatError> {
        self.gate.run(|| {
            let mut delay = Duration::from_millis(self.config.backoff_ms);
            let mut attempts = 0;
            loop {
                attempts += 1;
                match self.attempt(request) {
                    Ok(text) => return Ok(text),
                    Err((true, msg)) if attempts < self.config.max_attempts => {
                        log::warn!("chat request failed (attempt {attempts}): {msg}; retrying");
                        std::thread::sleep(delay);
                        delay *= 2;
                    }
                    Err((true, message)) => return Err(ChatError::Transport { attempts, message }),
                    Err((false, message)) => return Err(ChatError::Protocol(message)),
                }
            }
        })
    }

    fn supports_roles(&self) -> bool {
        true
    }

    fn max_in_flight(&self) -> usize {
        self.config.max_in_flight.max(1)
    }

    fn label(&self) -> &str {
        &self.config.model
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tag(cands: &[&str], k: usize) -> RequestTag {
        RequestTag {
            requirement_id: "r".into(),
            candidate_ids: cands.iter().map(|s| s.to_string()).collect(),
            k,
            output_format: OutputFormat::Closed,
        }
    }

    #[test]
    fn oracle_puts_gold_first_then_pads() {
        let mut gold = BTreeMap::new();
        gold.insert(
            "r".to_string(),
            ["c4", "c2", "zz"].iter().map(|s| s.to_string()).collect(),
        );
        let oracle = OracleClient::new(gold);
        let got = oracle.select(&tag(&["c1", "c2", "c3", "c4", "c5", "c6"], 4));
        assert_eq!(got, ["c2", "c4", "c1", "c3"]);
    }

    #[test]
    fn oracle_response_formats() {
        let oracle = OracleClient::default();
        let mut req = ChatRequest {
            messages: vec![],
            temperature: 0.0,
            tag: tag(&["a", "b"], 5),
        };
        assert_eq!(oracle.complete(&req).unwrap(), "['a', 'b']");
        req.tag.output_format = OutputFormat::Open;
        let (_, ids) = crate::rerank::parse_open_response(&oracle.complete(&req).unwrap()).unwrap();
        assert_eq!(ids, ["a", "b"]);
    }

    #[test]
    fn scripted_per_requirement() {
        let c = ScriptedClient::constant("x").with_response("r", "y");
        let mut req = ChatRequest {
            messages: vec![],
            temperature: 0.0,
            tag: tag(&[], 1),
        };
        assert_eq!(c.complete(&req).unwrap(), "y");
        req.tag.requirement_id = "other".into();
        assert_eq!(c.complete(&req).unwrap(), "x");
    }
}
