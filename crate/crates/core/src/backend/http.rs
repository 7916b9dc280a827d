//! JSON-over-HTTP clients for a remote model server.
//!
//! Routes: `POST /v1/score`, `/v1/infill`, `/v1/extract`, `/v1/chat` and
//! `GET /health`. 429, 502, 503, 504 and connection failures are retried
//! with exponential backoff; other failures are permanent.

use std::thread::sleep;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::BackendError;
use crate::attribution::{ScoreRequest, ScoreResponse, Scorer, ScorerKind};
use crate::generation::{
    ExtractRequest, ExtractResponse, Extractor, Generator, InfillRequest, InfillResponse,
};
use crate::reflection::{Agent, ChatRequest, ChatResponse};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpConfig {
    pub base_url: String,
    #[serde(default, skip_serializing)]
    pub api_key: Option<String>,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub backoff_ms: u64,
}

impl HttpConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        HttpConfig {
            base_url: base_url.into(),
            api_key: None,
            timeout_secs: 60.0,
            max_retries: 3,
            backoff_ms: 250,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    #[serde(default)]
    pub models: serde_json::Map<String, serde_json::Value>,
}

/// Shared connection pool and retry policy for one server.
#[derive(Debug, Clone)]
pub struct SidecarClient {
    agent: ureq::Agent,
    config: HttpConfig,
}

fn retriable_status(code: u16) -> bool {
    matches!(code, 429 | 502 | 503 | 504)
}

impl SidecarClient {
    pub fn new(config: HttpConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        SidecarClient { agent, config }
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    fn url(&self, route: &str) -> String {
        format!("{}{route}", self.config.base_url.trim_end_matches('/'))
    }

    fn once<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        backend: &str,
        route: &str,
        body: Option<&Req>,
    ) -> Result<Resp, BackendError> {
        let url = self.url(route);
        let result = match body {
            Some(body) => {
                let mut req = self.agent.post(&url);
                if let Some(key) = &self.config.api_key {
                    req = req.header("Authorization", &format!("Bearer {key}"));
                }
                req.send_json(body)
            }
            None => self.agent.get(&url).call(),
        };
        let mut response = match result {
            Ok(r) => r,
            Err(
                e @ (ureq::Error::Io(_) | ureq::Error::Timeout(_) | ureq::Error::ConnectionFailed),
            ) => return Err(BackendError::transient(backend, format!("{url}: {e}"))),
            Err(e) => return Err(BackendError::permanent(backend, format!("{url}: {e}"))),
        };
        let status = response.status().as_u16();
        if retriable_status(status) {
            return Err(BackendError::transient(
                backend,
                format!("{url}: HTTP {status}"),
            ));
        }
        if !(200..300).contains(&status) {
            let text = response.body_mut().read_to_string().unwrap_or_default();
            return Err(BackendError::permanent(
                backend,
                format!("{url}: HTTP {status}: {}", text.trim()),
            ));
        }
        response.body_mut().read_json().map_err(|e| {
            BackendError::permanent(backend, format!("{url}: malformed response: {e}"))
        })
    }

    fn with_retries<Resp>(
        &self,
        mut call: impl FnMut() -> Result<Resp, BackendError>,
    ) -> Result<Resp, BackendError> {
        let mut attempt = 0;
        loop {
            match call() {
                Err(e) if e.is_retriable() && attempt < self.config.max_retries => {
                    let wait = self.config.backoff_ms.saturating_mul(1 << attempt.min(16));
                    log::warn!("{e}; retrying in {wait} ms");
                    sleep(Duration::from_millis(wait));
                    attempt += 1;
                }
                other => return other,
            }
        }
    }

    /// POSTs `body` as JSON to `route` and decodes the JSON reply.
    pub fn post<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        backend: &str,
        route: &str,
        body: &Req,
    ) -> Result<Resp, BackendError> {
        self.with_retries(|| self.once(backend, route, Some(body)))
    }

    pub fn health(&self) -> Result<Health, BackendError> {
        self.with_retries(|| self.once::<(), Health>("health", "/health", None))
    }
}

pub struct HttpScorer {
    client: SidecarClient,
    kind: ScorerKind,
    id: String,
}

impl HttpScorer {
    pub fn new(client: SidecarClient, kind: ScorerKind) -> Self {
        let id = format!("http-scorer-{kind}");
        HttpScorer { client, kind, id }
    }
}

impl Scorer for HttpScorer {
    fn id(&self) -> &str {
        &self.id
    }
    fn kind(&self) -> ScorerKind {
        self.kind
    }
    fn score(&self, request: &ScoreRequest) -> Result<f64, BackendError> {
        let r: ScoreResponse = self.client.post(&self.id, "/v1/score", request)?;
        if !r.score.is_finite() {
            return Err(BackendError::permanent(&self.id, "score is not finite"));
        }
        Ok(r.score)
    }
}

pub struct HttpGenerator {
    client: SidecarClient,
}

impl HttpGenerator {
    pub fn new(client: SidecarClient) -> Self {
        HttpGenerator { client }
    }
}

impl Generator for HttpGenerator {
    fn id(&self) -> &str {
        "http-generator"
    }
    fn infill(&self, request: &InfillRequest) -> Result<Vec<String>, BackendError> {
        let r: InfillResponse = self.client.post(self.id(), "/v1/infill", request)?;
        Ok(r.tokens)
    }
}

pub struct HttpExtractor {
    client: SidecarClient,
}

impl HttpExtractor {
    pub fn new(client: SidecarClient) -> Self {
        HttpExtractor { client }
    }
}

impl Extractor for HttpExtractor {
    fn id(&self) -> &str {
        "http-extractor"
    }
    fn extract(&self, request: &ExtractRequest) -> Result<String, BackendError> {
        let r: ExtractResponse = self.client.post(self.id(), "/v1/extract", request)?;
        Ok(r.structure_text)
    }
}

/// A chat agent served at `/v1/chat`. Several agents can share one server;
/// `model` is forwarded so it can route them.
pub struct HttpAgent {
    client: SidecarClient,
    id: String,
    model: Option<String>,
}

#[derive(Serialize)]
struct RoutedChat<'a> {
    #[serde(flatten)]
    request: &'a ChatRequest,
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<&'a str>,
}

impl HttpAgent {
    pub fn new(client: SidecarClient, id: impl Into<String>, model: Option<String>) -> Self {
        HttpAgent {
            client,
            id: id.into(),
            model,
        }
    }
}

impl Agent for HttpAgent {
    fn id(&self) -> &str {
        &self.id
    }
    fn chat(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let body = RoutedChat {
            request,
            model: self.model.as_deref(),
        };
        let r: ChatResponse = self.client.post(&self.id, "/v1/chat", &body)?;
        Ok(r.text)
    }
}
