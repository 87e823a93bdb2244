//! Model backends.
//!
//! The run engine only sees [`Backend::complete`]: given the dialogue so far
//! and the tool schemas, produce a [`ModelDecision`]. Two backends ship: a
//! deterministic [`ScriptedBackend`] and an OpenAI-compatible [`HttpBackend`].

mod http;
mod scripted;

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{decode_completion, encode_request, HttpBackend, HttpBackendConfig};
pub use scripted::{parse_options, BackendScript, Matcher, MatchScope, ScriptError, ScriptStep, ScriptedBackend};

use crate::registry::{ArgumentMap, ToolSchema};

pub const LLM_BASE_URL_VAR: &str = "ATHENA_LLM_BASE_URL";
pub const LLM_API_KEY_VAR: &str = "ATHENA_LLM_API_KEY";
pub const LLM_MODEL_VAR: &str = "ATHENA_LLM_MODEL";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
            Role::Tool => "tool",
        })
    }
}

/// A model's request to call one tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCallRequest {
    pub call_id: String,
    pub tool_name: String,
    /// Raw arguments, before schema validation.
    pub arguments: ArgumentMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call_id: Option<String>,
    /// Calls requested by an assistant message.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ToolCallRequest>,
}

impl ChatMessage {
    fn plain(role: Role, content: impl Into<String>) -> Self {
        Self { role, content: content.into(), tool_call_id: None, tool_calls: Vec::new() }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self::plain(Role::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::plain(Role::User, content)
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self::plain(Role::Assistant, content)
    }

    pub fn assistant_tool_calls(calls: Vec<ToolCallRequest>) -> Self {
        Self { role: Role::Assistant, content: String::new(), tool_call_id: None, tool_calls: calls }
    }

    pub fn tool(call_id: impl Into<String>, content: impl Into<String>) -> Self {
        Self { role: Role::Tool, content: content.into(), tool_call_id: Some(call_id.into()), tool_calls: Vec::new() }
    }

    /// Checks the message invariants: tool messages name their call, and
    /// content may only be empty on an assistant message carrying calls.
    pub fn is_well_formed(&self) -> bool {
        let id_ok = (self.role == Role::Tool) == self.tool_call_id.is_some();
        let content_ok = !self.content.is_empty() || (self.role == Role::Assistant && !self.tool_calls.is_empty());
        let calls_ok = self.tool_calls.is_empty() || self.role == Role::Assistant;
        id_ok && content_ok && calls_ok
    }
}

/// One step's verdict: answer, or call tools.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelDecision {
    FinalText(String),
    ToolCalls(Vec<ToolCallRequest>),
}

impl ModelDecision {
    /// Checks the decision invariants and that every requested tool is one
    /// of the offered schemas.
    pub fn check(&self, schemas: &[ToolSchema]) -> Result<(), BackendError> {
        if let ModelDecision::ToolCalls(calls) = self {
            if calls.is_empty() {
                return Err(BackendError::Protocol("tool_calls must be nonempty".into()));
            }
            let mut ids = HashSet::new();
            for call in calls {
                if call.call_id.is_empty() || !ids.insert(call.call_id.as_str()) {
                    return Err(BackendError::Protocol(format!("duplicate or empty call id {:?}", call.call_id)));
                }
                if !schemas.iter().any(|s| s.name == call.tool_name) {
                    return Err(BackendError::UnknownToolRequested(call.tool_name.clone()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("model requested unknown tool {0:?}")]
    UnknownToolRequested(String),
}

pub trait Backend: Send + Sync {
    fn complete(&self, history: &[ChatMessage], schemas: &[ToolSchema]) -> Result<ModelDecision, BackendError>;
}

impl<B: Backend + ?Sized> Backend for std::sync::Arc<B> {
    fn complete(&self, history: &[ChatMessage], schemas: &[ToolSchema]) -> Result<ModelDecision, BackendError> {
        (**self).complete(history, schemas)
    }
}

pub(crate) fn check_history(history: &[ChatMessage]) -> Result<(), BackendError> {
    match history.last().map(|m| m.role) {
        Some(Role::User | Role::Tool) => Ok(()),
        other => Err(BackendError::Protocol(format!(
            "history must end with a user or tool message, not {}",
            other.map(|r| r.to_string()).unwrap_or_else(|| "nothing".into())
        ))),
    }
}
