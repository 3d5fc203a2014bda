//! Scripted backend for deterministic runs.
//!
//! A script is an ordered list of entries. Each call takes the first entry
//! that matches the request and has not been used yet (repeating entries are
//! never used up). A call no entry matches fails with
//! [`BackendError::Unscripted`] rather than inventing output.

use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{BackendError, ChatBackend, ChatRequest, ConfigKey, ModelTarget};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScriptedFailure {
    Timeout,
    Transport { message: String },
    Status { code: u16, message: String },
    InvalidResponse { message: String },
}

impl From<&ScriptedFailure> for BackendError {
    fn from(f: &ScriptedFailure) -> Self {
        match f {
            ScriptedFailure::Timeout => BackendError::Timeout,
            ScriptedFailure::Transport { message } => BackendError::Transport(message.clone()),
            ScriptedFailure::Status { code, message } => BackendError::Status {
                code: *code,
                message: message.clone(),
            },
            ScriptedFailure::InvalidResponse { message } => {
                BackendError::InvalidResponse(message.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// Whole text, delivered as one chunk.
    Respond(String),
    Chunks(Vec<String>),
    Fail(ScriptedFailure),
    /// Some chunks, then a failure.
    Partial {
        chunks: Vec<String>,
        error: ScriptedFailure,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSelector {
    Primary,
    Fallback,
    Id(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestMatcher {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_key: Option<ConfigKey>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fingerprint: Option<String>,
    /// Substring that must occur in some message.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSelector>,
}

impl RequestMatcher {
    pub fn matches(
        &self,
        target: &ModelTarget<'_>,
        request: &ChatRequest,
        fingerprint: &str,
    ) -> bool {
        if self.config_key.is_some_and(|k| k != request.config_key) {
            return false;
        }
        if self
            .fingerprint
            .as_deref()
            .is_some_and(|f| f != fingerprint)
        {
            return false;
        }
        if let Some(needle) = &self.contains {
            if !request
                .messages
                .iter()
                .any(|m| m.content.contains(needle.as_str()))
            {
                return false;
            }
        }
        match &self.model {
            None => true,
            Some(ModelSelector::Primary) => !target.is_fallback,
            Some(ModelSelector::Fallback) => target.is_fallback,
            Some(ModelSelector::Id(id)) => id == target.model_id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(default)]
    pub when: RequestMatcher,
    pub outcome: Outcome,
    #[serde(default)]
    pub repeat: bool,
}

impl ScriptEntry {
    pub fn new(outcome: Outcome) -> Self {
        Self {
            when: RequestMatcher::default(),
            outcome,
            repeat: false,
        }
    }

    pub fn respond(text: impl Into<String>) -> Self {
        Self::new(Outcome::Respond(text.into()))
    }

    pub fn fail(failure: ScriptedFailure) -> Self {
        Self::new(Outcome::Fail(failure))
    }

    pub fn repeating(mut self) -> Self {
        self.repeat = true;
        self
    }

    pub fn for_model(mut self, model: ModelSelector) -> Self {
        self.when.model = Some(model);
        self
    }

    pub fn for_key(mut self, key: ConfigKey) -> Self {
        self.when.config_key = Some(key);
        self
    }

    pub fn when_contains(mut self, needle: impl Into<String>) -> Self {
        self.when.contains = Some(needle.into());
        self
    }

    pub fn when_fingerprint(mut self, fingerprint: impl Into<String>) -> Self {
        self.when.fingerprint = Some(fingerprint.into());
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockScript {
    pub entries: Vec<ScriptEntry>,
}

impl MockScript {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        Self { entries }
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallRecord {
    pub fingerprint: String,
    pub config_key: ConfigKey,
    pub model_id: String,
    pub is_fallback: bool,
    pub prompt: String,
    /// Index of the script entry that answered, if any.
    pub entry: Option<usize>,
}

#[derive(Debug, Default)]
struct State {
    used: Vec<bool>,
    calls: Vec<CallRecord>,
}

#[derive(Debug)]
pub struct MockBackend {
    script: MockScript,
    state: Mutex<State>,
}

impl MockBackend {
    pub fn new(script: MockScript) -> Self {
        let used = vec![false; script.entries.len()];
        Self {
            script,
            state: Mutex::new(State {
                used,
                calls: Vec::new(),
            }),
        }
    }

    pub fn calls(&self) -> Vec<CallRecord> {
        self.state.lock().unwrap().calls.clone()
    }

    pub fn call_count(&self) -> usize {
        self.state.lock().unwrap().calls.len()
    }

    /// Non-repeating entries that were never used.
    pub fn unused_entries(&self) -> Vec<usize> {
        let state = self.state.lock().unwrap();
        (0..self.script.entries.len())
            .filter(|&i| !state.used[i] && !self.script.entries[i].repeat)
            .collect()
    }
}

impl ChatBackend for MockBackend {
    fn chat(
        &self,
        target: &ModelTarget<'_>,
        request: &ChatRequest,
        on_chunk: &mut dyn FnMut(&str),
    ) -> Result<String, BackendError> {
        let fingerprint = request.fingerprint();
        let outcome = {
            let mut state = self.state.lock().unwrap();
            let pick = self
                .script
                .entries
                .iter()
                .enumerate()
                .find(|(i, e)| {
                    (e.repeat || !state.used[*i]) && e.when.matches(target, request, &fingerprint)
                })
                .map(|(i, _)| i);
            if let Some(i) = pick {
                state.used[i] = true;
            }
            state.calls.push(CallRecord {
                fingerprint: fingerprint.clone(),
                config_key: request.config_key,
                model_id: target.model_id.to_string(),
                is_fallback: target.is_fallback,
                prompt: request.joined_text(),
                entry: pick,
            });
            pick.map(|i| self.script.entries[i].outcome.clone())
        };

        match outcome {
            None => Err(BackendError::Unscripted(fingerprint)),
            Some(Outcome::Respond(text)) => {
                if !text.is_empty() {
                    on_chunk(&text);
                }
                Ok(text)
            }
            Some(Outcome::Chunks(chunks)) => {
                for c in &chunks {
                    on_chunk(c);
                }
                Ok(chunks.concat())
            }
            Some(Outcome::Fail(f)) => Err((&f).into()),
            Some(Outcome::Partial { chunks, error }) => {
                for c in &chunks {
                    on_chunk(c);
                }
                Err((&error).into())
            }
        }
    }
}
