//! Model-call abstraction: one [`Gateway`] per process, backed by either the
//! HTTP chat-completion adapter or the scripted [`MockBackend`].
//!
//! Every call names a [`ConfigKey`]; the gateway resolves it to a primary and a
//! fallback model and runs the retry ladder. Transport failures, timeouts and
//! non-success statuses are retried, then retried again on the fallback model.
//! Content problems are the caller's business.

mod config;
mod http;
mod mock;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use config::{ConfigError, GatewayConfig, ModelConfig};
pub use http::HttpBackend;
pub use mock::{
    CallRecord, MockBackend, MockScript, ModelSelector, Outcome, RequestMatcher, ScriptEntry,
    ScriptedFailure,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConfigKey {
    TextGeneration,
    MultiModalAnalysis,
}

impl ConfigKey {
    pub fn as_str(self) -> &'static str {
        match self {
            ConfigKey::TextGeneration => "TextGeneration",
            ConfigKey::MultiModalAnalysis => "MultiModalAnalysis",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MediaType {
    #[serde(rename = "image/png")]
    Png,
    #[serde(rename = "image/jpeg")]
    Jpeg,
}

impl MediaType {
    pub fn as_str(self) -> &'static str {
        match self {
            MediaType::Png => "image/png",
            MediaType::Jpeg => "image/jpeg",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "image/png" => Some(MediaType::Png),
            "image/jpeg" | "image/jpg" => Some(MediaType::Jpeg),
            _ => None,
        }
    }

    /// Detects PNG or JPEG from magic bytes.
    pub fn sniff(bytes: &[u8]) -> Option<Self> {
        if bytes.starts_with(&[0x89, b'P', b'N', b'G']) {
            Some(MediaType::Png)
        } else if bytes.starts_with(&[0xFF, 0xD8, 0xFF]) {
            Some(MediaType::Jpeg)
        } else {
            None
        }
    }
}

/// One pre-rasterized document page.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageImage {
    pub media_type: MediaType,
    #[serde(with = "serde_bytes_hex")]
    pub bytes: Vec<u8>,
}

mod serde_bytes_hex {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<Message>,
    #[serde(default)]
    pub images: Vec<PageImage>,
    pub config_key: ConfigKey,
}

impl ChatRequest {
    pub fn new(config_key: ConfigKey, messages: Vec<Message>) -> Self {
        Self {
            messages,
            images: Vec::new(),
            config_key,
        }
    }

    pub fn text(prompt: impl Into<String>) -> Self {
        Self::new(ConfigKey::TextGeneration, vec![Message::user(prompt)])
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.messages.is_empty() {
            return Err(GatewayError::InvalidRequest(
                "request has no messages".into(),
            ));
        }
        if !self.images.is_empty() && self.config_key != ConfigKey::MultiModalAnalysis {
            return Err(GatewayError::InvalidRequest(
                "images are only accepted for MultiModalAnalysis".into(),
            ));
        }
        Ok(())
    }

    /// `"<config key>:<16 hex digits>"`, hashing roles and message texts.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for m in &self.messages {
            hasher.update(format!("{:?}", m.role).as_bytes());
            hasher.update([0u8]);
            hasher.update(m.content.as_bytes());
            hasher.update([0u8]);
        }
        let digest = hasher.finalize();
        format!("{}:{}", self.config_key.as_str(), hex::encode(&digest[..8]))
    }

    /// All message texts joined, for substring matching.
    pub fn joined_text(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "data")]
pub enum StreamEvent {
    TokenChunk(String),
    Done(String),
    Error { code: String, message: String },
}

impl StreamEvent {
    pub fn is_terminal(&self) -> bool {
        !matches!(self, StreamEvent::TokenChunk(_))
    }
}

/// The model a backend call is aimed at.
#[derive(Debug, Clone, Copy)]
pub struct ModelTarget<'a> {
    pub model_id: &'a str,
    pub is_fallback: bool,
    pub config: &'a ModelConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum BackendError {
    #[error("request timed out")]
    Timeout,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("status {code}: {message}")]
    Status { code: u16, message: String },
    #[error("malformed response: {0}")]
    InvalidResponse(String),
    #[error("no scripted response for {0}")]
    Unscripted(String),
}

impl BackendError {
    pub fn code(&self) -> &'static str {
        match self {
            BackendError::Timeout => "timeout",
            BackendError::Transport(_) => "transport",
            BackendError::Status { .. } => "status",
            BackendError::InvalidResponse(_) => "invalid_response",
            BackendError::Unscripted(_) => "unscripted_request",
        }
    }
}

/// A chat-completion provider. `on_chunk` receives output text as it arrives;
/// the return value is the full text.
pub trait ChatBackend: Send + Sync {
    fn chat(
        &self,
        target: &ModelTarget<'_>,
        request: &ChatRequest,
        on_chunk: &mut dyn FnMut(&str),
    ) -> Result<String, BackendError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("unscripted request {0}")]
    UnscriptedRequest(String),
    #[error("all models failed after {calls} calls; last error: {last_error}")]
    AllModelsFailed {
        calls: u32,
        last_error: BackendError,
    },
    #[error("stream interrupted after partial output: {0}")]
    StreamInterrupted(BackendError),
}

impl GatewayError {
    pub fn code(&self) -> &'static str {
        match self {
            GatewayError::InvalidRequest(_) => "invalid_request",
            GatewayError::UnscriptedRequest(_) => "unscripted_request",
            GatewayError::AllModelsFailed { .. } => "all_models_failed",
            GatewayError::StreamInterrupted(_) => "stream_interrupted",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub model_id: String,
    pub used_fallback: bool,
    /// Backend calls made, including the successful one.
    pub calls: u32,
    /// Re-attempts on the same model; switching to the fallback is not a retry.
    pub retries: u32,
}

#[derive(Clone)]
pub struct Gateway {
    config: GatewayConfig,
    backend: Arc<dyn ChatBackend>,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl Gateway {
    pub fn new(config: GatewayConfig, backend: Arc<dyn ChatBackend>) -> Self {
        Self { config, backend }
    }

    /// A gateway over a scripted mock, returning the mock for inspection.
    pub fn mock(script: MockScript) -> (Self, Arc<MockBackend>) {
        let backend = Arc::new(MockBackend::new(script));
        (
            Self::new(GatewayConfig::default(), backend.clone()),
            backend,
        )
    }

    /// A gateway over the HTTP adapter.
    pub fn http(config: GatewayConfig) -> Self {
        Self::new(config, Arc::new(HttpBackend::new()))
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<Completion, GatewayError> {
        self.run(request, None)
    }

    /// Streams a request, reporting every event to `on_event`. Exactly one
    /// terminal event is reported.
    pub fn stream_with(
        &self,
        request: &ChatRequest,
        on_event: &mut dyn FnMut(&StreamEvent),
    ) -> Result<Completion, GatewayError> {
        let result = self.run(
            request,
            Some(&mut |chunk: &str| on_event(&StreamEvent::TokenChunk(chunk.to_string()))),
        );
        match &result {
            Ok(c) => on_event(&StreamEvent::Done(c.text.clone())),
            Err(e) => on_event(&StreamEvent::Error {
                code: e.code().to_string(),
                message: e.to_string(),
            }),
        }
        result
    }

    pub fn stream(&self, request: &ChatRequest) -> Vec<StreamEvent> {
        let mut events = Vec::new();
        let _ = self.stream_with(request, &mut |e| events.push(e.clone()));
        events
    }

    fn run(
        &self,
        request: &ChatRequest,
        mut sink: Option<&mut dyn FnMut(&str)>,
    ) -> Result<Completion, GatewayError> {
        request.validate()?;
        let config = self.config.for_key(request.config_key);
        let chain = [
            (config.model_id.as_str(), false),
            (config.fallback_model_id.as_str(), true),
        ];

        let mut calls = 0u32;
        let mut retries = 0u32;
        let mut last_error = None;
        for (model_id, is_fallback) in chain {
            for attempt in 0..=config.max_retries {
                if attempt > 0 {
                    retries += 1;
                }
                calls += 1;
                let target = ModelTarget {
                    model_id,
                    is_fallback,
                    config,
                };
                let mut emitted = false;
                let outcome = {
                    let mut forward = |chunk: &str| {
                        emitted = true;
                        if let Some(s) = sink.as_mut() {
                            s(chunk);
                        }
                    };
                    self.backend.chat(&target, request, &mut forward)
                };
                match outcome {
                    Ok(text) => {
                        return Ok(Completion {
                            text,
                            model_id: model_id.to_string(),
                            used_fallback: is_fallback,
                            calls,
                            retries,
                        })
                    }
                    Err(BackendError::Unscripted(fp)) => {
                        return Err(GatewayError::UnscriptedRequest(fp))
                    }
                    Err(e) if emitted && sink.is_some() => {
                        return Err(GatewayError::StreamInterrupted(e))
                    }
                    Err(e) => {
                        tracing::warn!(model = model_id, attempt, error = %e, "model call failed");
                        last_error = Some(e);
                    }
                }
            }
        }
        Err(GatewayError::AllModelsFailed {
            calls,
            last_error: last_error.unwrap_or(BackendError::Transport("no attempts made".into())),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fail(kind: ScriptedFailure) -> ScriptEntry {
        ScriptEntry::new(Outcome::Fail(kind))
    }

    #[test]
    fn primary_fails_twice_then_succeeds() {
        let script = MockScript::new(vec![
            fail(ScriptedFailure::Timeout),
            fail(ScriptedFailure::Status {
                code: 503,
                message: "busy".into(),
            }),
            ScriptEntry::respond("ok"),
        ]);
        let (gw, mock) = Gateway::mock(script);
        let c = gw.complete(&ChatRequest::text("hi")).unwrap();
        assert_eq!(c.text, "ok");
        assert_eq!(c.retries, 2);
        assert!(!c.used_fallback);
        assert_eq!(c.model_id, "glm-4.7");
        assert_eq!(mock.calls().len(), 3);
    }

    #[test]
    fn fallback_takes_over() {
        let script = MockScript::new(vec![
            ScriptEntry::new(Outcome::Fail(ScriptedFailure::Transport {
                message: "reset".into(),
            }))
            .for_model(ModelSelector::Primary)
            .repeating(),
            ScriptEntry::respond("from fallback").for_model(ModelSelector::Fallback),
        ]);
        let (gw, mock) = Gateway::mock(script);
        let c = gw.complete(&ChatRequest::text("hi")).unwrap();
        assert_eq!(c.text, "from fallback");
        assert!(c.used_fallback);
        assert_eq!(c.model_id, "glm-4.6");
        assert_eq!(c.calls, 4);
        assert_eq!(mock.calls().iter().filter(|r| !r.is_fallback).count(), 3);
    }

    #[test]
    fn exhaustion() {
        let script = MockScript::new(vec![fail(ScriptedFailure::Timeout).repeating()]);
        let (gw, mock) = Gateway::mock(script);
        match gw.complete(&ChatRequest::text("hi")) {
            Err(GatewayError::AllModelsFailed { calls, last_error }) => {
                assert_eq!(calls, 6);
                assert_eq!(last_error, BackendError::Timeout);
            }
            other => panic!("{other:?}"),
        }
        let max = gw.config().text_generation.max_retries;
        assert_eq!(mock.calls().len() as u32, 2 * (max + 1));
    }

    #[test]
    fn unscripted_is_not_retried() {
        let (gw, mock) = Gateway::mock(MockScript::new(vec![]));
        assert!(matches!(
            gw.complete(&ChatRequest::text("hi")),
            Err(GatewayError::UnscriptedRequest(_))
        ));
        assert_eq!(mock.calls().len(), 1);
    }

    #[test]
    fn stream_concatenation() {
        let script = MockScript::new(vec![ScriptEntry::new(Outcome::Chunks(vec![
            "<di".into(),
            "v>".into(),
            "</div>".into(),
        ]))]);
        let (gw, _) = Gateway::mock(script);
        let events = gw.stream(&ChatRequest::text("x"));
        assert_eq!(events.len(), 4);
        assert_eq!(
            events.last(),
            Some(&StreamEvent::Done("<div></div>".into()))
        );
        let joined: String = events
            .iter()
            .filter_map(|e| match e {
                StreamEvent::TokenChunk(c) => Some(c.as_str()),
                _ => None,
            })
            .collect();
        assert_eq!(joined, "<div></div>");
    }

    #[test]
    fn mid_stream_failure_terminates_with_error() {
        let script = MockScript::new(vec![ScriptEntry::new(Outcome::Partial {
            chunks: vec!["<p>".into()],
            error: ScriptedFailure::Transport {
                message: "dropped".into(),
            },
        })]);
        let (gw, mock) = Gateway::mock(script);
        let events = gw.stream(&ChatRequest::text("x"));
        assert_eq!(events[0], StreamEvent::TokenChunk("<p>".into()));
        assert!(matches!(events[1], StreamEvent::Error { .. }));
        assert_eq!(events.len(), 2);
        assert_eq!(events.iter().filter(|e| e.is_terminal()).count(), 1);
        assert_eq!(mock.calls().len(), 1);
    }

    #[test]
    fn empty_response_stream() {
        let (gw, _) = Gateway::mock(MockScript::new(vec![ScriptEntry::respond("")]));
        assert_eq!(
            gw.stream(&ChatRequest::text("x")),
            vec![StreamEvent::Done(String::new())]
        );
    }

    #[test]
    fn images_only_for_multimodal() {
        let mut req = ChatRequest::text("x");
        req.images.push(PageImage {
            media_type: MediaType::Png,
            bytes: vec![1],
        });
        assert!(matches!(
            req.validate(),
            Err(GatewayError::InvalidRequest(_))
        ));
        req.config_key = ConfigKey::MultiModalAnalysis;
        assert!(req.validate().is_ok());
        assert!(ChatRequest::new(ConfigKey::TextGeneration, vec![])
            .validate()
            .is_err());
    }

    #[test]
    fn fingerprint_depends_on_key_and_text() {
        let a = ChatRequest::text("hello");
        let mut b = a.clone();
        b.config_key = ConfigKey::MultiModalAnalysis;
        let c = ChatRequest::text("hello!");
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
        assert_eq!(a.fingerprint(), ChatRequest::text("hello").fingerprint());
        assert!(a.fingerprint().starts_with("TextGeneration:"));
    }

    #[test]
    fn media_sniffing() {
        assert_eq!(
            MediaType::sniff(&[0x89, b'P', b'N', b'G', 0x0D]),
            Some(MediaType::Png)
        );
        assert_eq!(
            MediaType::sniff(&[0xFF, 0xD8, 0xFF, 0xE0]),
            Some(MediaType::Jpeg)
        );
        assert_eq!(MediaType::sniff(b"GIF89a"), None);
    }
}
