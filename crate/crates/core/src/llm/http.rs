//! OpenAI-compatible chat-completions backend with native function calling.

use std::sync::Arc;
use std::time::Duration;

use serde_json::{json, Value};

use super::{check_history, Backend, BackendError, ChatMessage, ModelDecision, Role, ToolCallRequest};
use super::{LLM_API_KEY_VAR, LLM_BASE_URL_VAR, LLM_MODEL_VAR};
use crate::registry::{ArgumentMap, ToolSchema};
use crate::transport::{HttpRequest, LiveTransport, Transport, TransportError};

#[derive(Debug, Clone, PartialEq)]
pub struct HttpBackendConfig {
    pub base_url: String,
    pub api_key: Option<String>,
    pub model: String,
    pub timeout: Duration,
}

impl HttpBackendConfig {
    pub fn new(base_url: &str, model: &str) -> Self {
        Self { base_url: base_url.to_string(), api_key: None, model: model.to_string(), timeout: Duration::from_secs(60) }
    }

    /// Reads the base URL, key and model from the environment. The base URL
    /// and model are required.
    pub fn from_env() -> Result<Self, BackendError> {
        let var = |name: &str| std::env::var(name).ok().filter(|v| !v.trim().is_empty());
        let base_url = var(LLM_BASE_URL_VAR)
            .ok_or_else(|| BackendError::Unavailable(format!("{LLM_BASE_URL_VAR} is not set")))?;
        let model =
            var(LLM_MODEL_VAR).ok_or_else(|| BackendError::Unavailable(format!("{LLM_MODEL_VAR} is not set")))?;
        let mut config = Self::new(&base_url, &model);
        config.api_key = var(LLM_API_KEY_VAR);
        Ok(config)
    }

    fn endpoint(&self) -> Result<reqwest::Url, BackendError> {
        let url = format!("{}/chat/completions", self.base_url.trim_end_matches('/'));
        reqwest::Url::parse(&url).map_err(|e| BackendError::Unavailable(format!("bad base URL {url:?}: {e}")))
    }
}

pub struct HttpBackend {
    config: HttpBackendConfig,
    transport: Arc<dyn Transport>,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Self {
        Self::with_transport(config, Arc::new(LiveTransport::new()))
    }

    pub fn with_transport(config: HttpBackendConfig, transport: Arc<dyn Transport>) -> Self {
        Self { config, transport }
    }

    pub fn request(&self, history: &[ChatMessage], schemas: &[ToolSchema]) -> Result<HttpRequest, BackendError> {
        let body = encode_request(&self.config.model, history, schemas);
        let mut request = HttpRequest::post_json(self.config.endpoint()?, &body);
        if let Some(key) = &self.config.api_key {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        Ok(request)
    }
}

fn encode_message(m: &ChatMessage) -> Value {
    match m.role {
        Role::Tool => json!({
            "role": "tool",
            "tool_call_id": m.tool_call_id.clone().unwrap_or_default(),
            "content": m.content,
        }),
        Role::Assistant if !m.tool_calls.is_empty() => {
            let calls: Vec<Value> = m
                .tool_calls
                .iter()
                .map(|c| {
                    json!({
                        "id": c.call_id,
                        "type": "function",
                        "function": {"name": c.tool_name, "arguments": c.arguments.to_json().to_string()},
                    })
                })
                .collect();
            let content = if m.content.is_empty() { Value::Null } else { Value::String(m.content.clone()) };
            json!({"role": "assistant", "content": content, "tool_calls": calls})
        }
        role => json!({"role": role.to_string(), "content": m.content}),
    }
}

/// Builds the chat-completions request body.
pub fn encode_request(model: &str, history: &[ChatMessage], schemas: &[ToolSchema]) -> Value {
    let mut body = json!({
        "model": model,
        "messages": history.iter().map(encode_message).collect::<Vec<_>>(),
        "temperature": 0,
    });
    if !schemas.is_empty() {
        let tools: Vec<Value> = schemas
            .iter()
            .map(|s| {
                json!({
                    "type": "function",
                    "function": {
                        "name": s.name,
                        "description": s.description,
                        "parameters": s.parameters_json_schema(),
                    },
                })
            })
            .collect();
        body["tools"] = Value::Array(tools);
        body["tool_choice"] = Value::String("auto".into());
    }
    body
}

fn protocol(msg: impl Into<String>) -> BackendError {
    BackendError::Protocol(msg.into())
}

/// Decodes a chat-completions response body. Tool calls win over content;
/// a call naming a tool outside `schemas` is `UnknownToolRequested`.
pub fn decode_completion(body: &str, schemas: &[ToolSchema]) -> Result<ModelDecision, BackendError> {
    let value: Value = serde_json::from_str(body).map_err(|e| protocol(format!("response is not JSON: {e}")))?;
    if let Some(err) = value.get("error") {
        let msg = err.get("message").and_then(Value::as_str).map(str::to_string).unwrap_or_else(|| err.to_string());
        return Err(protocol(format!("provider error: {msg}")));
    }
    let message = value
        .get("choices")
        .and_then(Value::as_array)
        .and_then(|c| c.first())
        .and_then(|c| c.get("message"))
        .ok_or_else(|| protocol("response has no choices[0].message"))?;

    let calls = match message.get("tool_calls") {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::Array(calls)) => calls.clone(),
        Some(_) => return Err(protocol("tool_calls is not a list")),
    };
    if !calls.is_empty() {
        let mut out = Vec::with_capacity(calls.len());
        for (i, call) in calls.iter().enumerate() {
            let function = call.get("function").ok_or_else(|| protocol(format!("tool call {i} has no function")))?;
            let name = function
                .get("name")
                .and_then(Value::as_str)
                .filter(|n| !n.is_empty())
                .ok_or_else(|| protocol(format!("tool call {i} has no name")))?;
            let call_id = call
                .get("id")
                .and_then(Value::as_str)
                .filter(|id| !id.is_empty())
                .ok_or_else(|| protocol(format!("tool call {i} has no id")))?;
            let arguments = match function.get("arguments") {
                None | Some(Value::Null) => ArgumentMap::new(),
                Some(Value::String(s)) if s.trim().is_empty() => ArgumentMap::new(),
                Some(Value::String(s)) => {
                    let parsed: Value = serde_json::from_str(s)
                        .map_err(|e| protocol(format!("arguments of tool call {i} are not JSON: {e}")))?;
                    ArgumentMap::from_json(&parsed)
                        .ok_or_else(|| protocol(format!("arguments of tool call {i} are not an object")))?
                }
                Some(v) => ArgumentMap::from_json(v)
                    .ok_or_else(|| protocol(format!("arguments of tool call {i} are not an object")))?,
            };
            out.push(ToolCallRequest { call_id: call_id.to_string(), tool_name: name.to_string(), arguments });
        }
        let decision = ModelDecision::ToolCalls(out);
        decision.check(schemas)?;
        return Ok(decision);
    }
    match message.get("content") {
        Some(Value::String(s)) if !s.is_empty() => Ok(ModelDecision::FinalText(s.clone())),
        _ => Err(protocol("message has neither tool calls nor content")),
    }
}

impl Backend for HttpBackend {
    fn complete(&self, history: &[ChatMessage], schemas: &[ToolSchema]) -> Result<ModelDecision, BackendError> {
        check_history(history)?;
        let request = self.request(history, schemas)?;
        let response = self.transport.send(&request, self.config.timeout).map_err(|e| match e {
            TransportError::MissingFixture { .. } => protocol(e.to_string()),
            other => BackendError::Unavailable(other.to_string()),
        })?;
        match response.status {
            200..=299 => decode_completion(&response.body, schemas),
            429 | 500..=599 => Err(BackendError::Unavailable(format!("HTTP {}", response.status))),
            s => {
                let detail: String = response.body.chars().take(200).collect();
                Err(protocol(format!("HTTP {s}: {detail}")))
            }
        }
    }
}
