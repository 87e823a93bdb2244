//! Built-in toolkit: calculator, web search, arXiv lookup, weather and calendar.
//!
//! All tools implement [`Tool`]. Network tools share a [`Transport`] so that
//! a single configuration switch moves the whole toolkit between live calls
//! and recorded fixtures.

pub mod arxiv;
pub mod calc;
pub mod calendar;
pub mod search;
pub mod weather;

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::registry::{ArgumentMap, RegistryBuilder, RegistryError, ToolDescriptor, ToolSchema};
use crate::transport::{LiveTransport, RecordTransport, ReplayTransport, Transport, TransportError};

pub const SERPER_KEY_VAR: &str = "ATHENA_SERPER_API_KEY";
pub const OPENWEATHER_KEY_VAR: &str = "ATHENA_OPENWEATHER_API_KEY";
pub const WOLFRAM_APP_ID_VAR: &str = "ATHENA_WOLFRAM_APP_ID";

pub const DEFAULT_TOOL_TIMEOUT: Duration = Duration::from_secs(10);

/// Per-invocation context handed to a tool by the registry.
#[derive(Debug, Clone)]
pub struct CallContext {
    pub call_id: String,
    pub timeout: Duration,
}

impl Default for CallContext {
    fn default() -> Self {
        Self { call_id: "call_0".into(), timeout: DEFAULT_TOOL_TIMEOUT }
    }
}

/// An executable tool. Implementations receive arguments already validated
/// against [`Tool::schema`] and return the serialized result payload.
pub trait Tool: Send + Sync {
    fn schema(&self) -> ToolSchema;

    fn invoke(&self, args: &ArgumentMap, ctx: &CallContext) -> Result<String, ToolError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ToolError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("missing credential: set {0}")]
    MissingCredential(&'static str),
    #[error("upstream error{}: {detail}", status.map(|s| format!(" (HTTP {s})")).unwrap_or_default())]
    Upstream { status: Option<u16>, detail: String },
    #[error("request timed out")]
    Timeout,
    #[error("unknown location {0:?}")]
    UnknownLocation(String),
    #[error("invalid event: {0}")]
    InvalidEvent(String),
    #[error("calendar store error: {0}")]
    Store(String),
    #[error("{0}")]
    Calculation(String),
}

impl From<TransportError> for ToolError {
    fn from(e: TransportError) -> Self {
        match e {
            TransportError::Timeout => ToolError::Timeout,
            other => ToolError::Upstream { status: None, detail: other.to_string() },
        }
    }
}

/// Outcome of one tool call as it is folded back into the dialogue.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolResult {
    pub tool_name: String,
    pub call_id: String,
    pub content: String,
    pub is_error: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_message: Option<String>,
}

impl ToolResult {
    pub fn ok(tool_name: &str, call_id: &str, content: String) -> Self {
        if content.is_empty() {
            return Self::error(tool_name, call_id, "tool returned an empty result".into());
        }
        Self {
            tool_name: tool_name.to_string(),
            call_id: call_id.to_string(),
            content,
            is_error: false,
            error_message: None,
        }
    }

    pub fn error(tool_name: &str, call_id: &str, message: String) -> Self {
        Self {
            tool_name: tool_name.to_string(),
            call_id: call_id.to_string(),
            content: format!("error: {message}"),
            is_error: true,
            error_message: Some(message),
        }
    }
}

/// API credentials for the network tools.
#[derive(Debug, Clone, Default)]
pub struct Credentials {
    pub serper_api_key: Option<String>,
    pub openweather_api_key: Option<String>,
    pub wolfram_app_id: Option<String>,
}

impl Credentials {
    pub fn from_env() -> Self {
        let var = |name| std::env::var(name).ok().filter(|v: &String| !v.trim().is_empty());
        Self {
            serper_api_key: var(SERPER_KEY_VAR),
            openweather_api_key: var(OPENWEATHER_KEY_VAR),
            wolfram_app_id: var(WOLFRAM_APP_ID_VAR),
        }
    }
}

/// Returns the credential, or `MissingCredential` when a live transport
/// would need one. Replay transports get a placeholder since fixture keys
/// never include credentials.
pub(crate) fn credential<'a>(
    value: &'a Option<String>,
    var: &'static str,
    transport: &dyn Transport,
) -> Result<&'a str, ToolError> {
    match value.as_deref() {
        Some(v) => Ok(v),
        None if transport.is_live() => Err(ToolError::MissingCredential(var)),
        None => Ok("replay"),
    }
}

/// Where network tools send their requests.
#[derive(Debug, Clone, Default)]
pub enum TransportMode {
    #[default]
    Live,
    Replay(PathBuf),
    Record(PathBuf),
}

impl TransportMode {
    pub fn build(&self) -> Arc<dyn Transport> {
        match self {
            TransportMode::Live => Arc::new(LiveTransport::new()),
            TransportMode::Replay(dir) => Arc::new(ReplayTransport::new(dir)),
            TransportMode::Record(dir) => Arc::new(RecordTransport::new(dir)),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ToolkitConfig {
    pub transport: TransportMode,
    pub credentials: Credentials,
    /// Calendar store file; `None` keeps events in memory.
    pub calendar_path: Option<PathBuf>,
    /// Route calculator queries to the remote Wolfram|Alpha client instead of
    /// the local evaluator.
    pub remote_calculator: bool,
}

/// Registers the five built-in tools in their canonical order.
pub fn register_default_tools(builder: &mut RegistryBuilder, config: &ToolkitConfig) -> Result<(), RegistryError> {
    let transport = config.transport.build();
    let calculator = if config.remote_calculator {
        calc::CalculatorTool::remote(calc::WolframClient::new(transport.clone(), config.credentials.wolfram_app_id.clone()))
    } else {
        calc::CalculatorTool::local()
    };
    let store = match &config.calendar_path {
        Some(path) => calendar::CalendarStore::open(path).map_err(|e| RegistryError::InvalidSchema(e.to_string()))?,
        None => calendar::CalendarStore::in_memory(),
    };
    builder.register(ToolDescriptor::from_tool(calculator))?;
    builder.register(ToolDescriptor::from_tool(search::SearchTool::new(
        transport.clone(),
        config.credentials.serper_api_key.clone(),
    )))?;
    builder.register(ToolDescriptor::from_tool(arxiv::ArxivTool::new(transport.clone())))?;
    builder.register(ToolDescriptor::from_tool(weather::WeatherTool::new(
        transport,
        config.credentials.openweather_api_key.clone(),
    )))?;
    builder.register(ToolDescriptor::from_tool(calendar::CalendarTool::new(Arc::new(store))))?;
    Ok(())
}

/// A frozen registry holding only the built-in tools.
pub fn default_registry(config: &ToolkitConfig) -> Result<crate::Registry, RegistryError> {
    let mut builder = RegistryBuilder::new();
    register_default_tools(&mut builder, config)?;
    Ok(builder.freeze())
}

pub(crate) fn check_status(response: &crate::transport::HttpResponse) -> Result<(), ToolError> {
    if response.is_success() {
        Ok(())
    } else {
        let detail: String = response.body.chars().take(200).collect();
        Err(ToolError::Upstream { status: Some(response.status), detail })
    }
}

pub(crate) fn required_str<'a>(args: &'a ArgumentMap, name: &str) -> Result<&'a str, ToolError> {
    match args.str(name).map(str::trim) {
        Some(v) if !v.is_empty() => Ok(v),
        _ => Err(ToolError::InvalidInput(format!("{name} must be a nonempty string"))),
    }
}

pub(crate) fn max_results(args: &ArgumentMap, default: i64) -> Result<usize, ToolError> {
    let n = args.get("max_results").and_then(|v| v.as_i64()).unwrap_or(default);
    if n < 0 {
        return Err(ToolError::InvalidInput("max_results must not be negative".into()));
    }
    Ok(n.min(50) as usize)
}
