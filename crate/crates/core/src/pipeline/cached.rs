//! Backends behind the shared response cache.

use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::attribution::{ScoreRequest, Scorer, ScorerKind};
use crate::backend::{fingerprint, BackendError, ResponseCache};
use crate::generation::{ExtractRequest, Extractor, Generator, InfillRequest};
use crate::reflection::{Agent, ChatRequest};

fn cached<Req: Serialize, Resp: Serialize + DeserializeOwned>(
    cache: &ResponseCache,
    backend: &str,
    request: &Req,
    seed: Option<u64>,
    call: impl FnOnce() -> Result<Resp, BackendError>,
) -> Result<Resp, BackendError> {
    let fp = fingerprint(backend, request, seed);
    let value = cache.get_or_try_insert(&fp, || {
        call().map(|r| serde_json::to_value(r).expect("responses serialize"))
    })?;
    serde_json::from_value(value)
        .map_err(|e| BackendError::permanent(backend, format!("cached response unreadable: {e}")))
}

/// Wraps any backend so identical requests reach it once.
pub struct Cached<B: ?Sized> {
    inner: Arc<B>,
    cache: Arc<ResponseCache>,
}

impl<B: ?Sized> Cached<B> {
    pub fn new(inner: Arc<B>, cache: Arc<ResponseCache>) -> Self {
        Cached { inner, cache }
    }
}

impl<B: Scorer + ?Sized> Scorer for Cached<B> {
    fn id(&self) -> &str {
        self.inner.id()
    }
    fn kind(&self) -> ScorerKind {
        self.inner.kind()
    }
    fn score(&self, request: &ScoreRequest) -> Result<f64, BackendError> {
        cached(&self.cache, self.inner.id(), request, None, || {
            self.inner.score(request)
        })
    }
}

impl<B: Generator + ?Sized> Generator for Cached<B> {
    fn id(&self) -> &str {
        self.inner.id()
    }
    fn infill(&self, request: &InfillRequest) -> Result<Vec<String>, BackendError> {
        cached(
            &self.cache,
            self.inner.id(),
            request,
            Some(request.seed),
            || self.inner.infill(request),
        )
    }
}

impl<B: Extractor + ?Sized> Extractor for Cached<B> {
    fn id(&self) -> &str {
        self.inner.id()
    }
    fn extract(&self, request: &ExtractRequest) -> Result<String, BackendError> {
        cached(&self.cache, self.inner.id(), request, None, || {
            self.inner.extract(request)
        })
    }
}

impl<B: Agent + ?Sized> Agent for Cached<B> {
    fn id(&self) -> &str {
        self.inner.id()
    }
    fn chat(&self, request: &ChatRequest) -> Result<String, BackendError> {
        cached(
            &self.cache,
            self.inner.id(),
            request,
            Some(request.seed),
            || self.inner.chat(request),
        )
    }
}
