//! The run loop.
//!
//! A run starts `queued` with the session's history plus the new user
//! message. [`Engine::step_run`] consults the backend once; a final answer
//! completes the run and tool calls move it to `requires_action`, where
//! [`Engine::handle_required_action`] executes the calls and folds their
//! results back as tool messages. [`Engine::execute_run`] alternates the two
//! until the run is terminal.
//!
//! Every state change is an appended [`RunEvent`], so a run can be rebuilt
//! from its log with [`replay`].

mod event;
mod store;

use std::sync::Arc;
use std::time::Duration;

use chrono::Utc;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use event::{replay_events, CorruptLog, EventBody, FailureKind, RunEvent, RunFailure, RunSnapshot, RunStatus};
pub use store::{EventLog, Session, SessionStore, StoreError};

use crate::llm::{Backend, BackendError, ChatMessage, ModelDecision, ToolCallRequest};
use crate::par::{map_ordered, ExecutionMode};
use crate::registry::{Registry, ToolSchema};
use crate::tools::DEFAULT_TOOL_TIMEOUT;

pub const DEFAULT_MAX_ITERATIONS: u32 = 8;

pub const DEFAULT_SYSTEM_PROMPT: &str = "You are Athena, an assistant that answers questions by combining its own \
knowledge with external tools. When a tool would give a more accurate or more current answer, call it with \
precise arguments. When you have enough information, reply with the final answer.";

mod duration_ms {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        u64::deserialize(d).map(Duration::from_millis)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunConfig {
    pub max_iterations: u32,
    #[serde(rename = "tool_timeout_ms", with = "duration_ms")]
    pub tool_timeout: Duration,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { max_iterations: DEFAULT_MAX_ITERATIONS, tool_timeout: DEFAULT_TOOL_TIMEOUT }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Run {
    pub id: String,
    pub session_id: String,
    pub history: Vec<ChatMessage>,
    pub status: RunStatus,
    pub events: Vec<RunEvent>,
    pub iterations_used: u32,
    pub config: RunConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<RunFailure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_answer: Option<String>,
    /// History length before this run's user message.
    #[serde(skip)]
    context_len: usize,
}

impl Run {
    pub fn snapshot(&self) -> RunSnapshot {
        RunSnapshot { history: self.history.clone(), status: self.status, iterations_used: self.iterations_used }
    }

    /// Messages added by this run, starting with its user message.
    pub fn new_messages(&self) -> &[ChatMessage] {
        &self.history[self.context_len.min(self.history.len())..]
    }

    /// Calls awaiting execution while the run requires action.
    pub fn pending_calls(&self) -> Vec<ToolCallRequest> {
        if self.status != RunStatus::RequiresAction {
            return Vec::new();
        }
        self.history.last().map(|m| m.tool_calls.clone()).unwrap_or_default()
    }

    pub fn is_terminal(&self) -> bool {
        self.status.is_terminal()
    }

    /// Backend consultations that produced tool calls or an answer.
    pub fn consultations(&self) -> usize {
        self.events
            .iter()
            .filter(|e| {
                matches!(
                    e.body,
                    EventBody::StatusChanged { to: RunStatus::RequiresAction | RunStatus::Completed, .. }
                )
            })
            .count()
    }
}

/// Rebuilds a run from its event log. Identifiers are not part of the log,
/// so the result carries empty ids and the default config.
pub fn replay(events: &[RunEvent]) -> Result<Run, CorruptLog> {
    let (snap, failure, final_answer) = replay_events(events)?;
    Ok(Run {
        id: String::new(),
        session_id: String::new(),
        history: snap.history,
        status: snap.status,
        events: events.to_vec(),
        iterations_used: snap.iterations_used,
        config: RunConfig::default(),
        failure,
        final_answer,
        context_len: 0,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("input text must be nonempty")]
    InvalidInput,
    #[error("unknown session {0:?}")]
    UnknownSession(String),
    #[error("operation not allowed while run is {0}")]
    InvalidState(RunStatus),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Receives each event as it is recorded.
pub trait RunObserver: Send + Sync {
    fn on_event(&self, run: &Run, event: &RunEvent);
}

impl<F: Fn(&Run, &RunEvent) + Send + Sync> RunObserver for F {
    fn on_event(&self, run: &Run, event: &RunEvent) {
        self(run, event)
    }
}

struct NoObserver;

impl RunObserver for NoObserver {
    fn on_event(&self, _run: &Run, _event: &RunEvent) {}
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub run: RunConfig,
    /// Prepended to every run; not stored in the session.
    pub system_prompt: Option<String>,
    /// Append the prose rendering of every tool schema to the system prompt,
    /// for backends without structured function calling.
    pub schemas_in_prompt: bool,
    /// How the calls of one required action are executed.
    pub tool_execution: ExecutionMode,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            run: RunConfig::default(),
            system_prompt: Some(DEFAULT_SYSTEM_PROMPT.to_string()),
            schemas_in_prompt: false,
            tool_execution: ExecutionMode::default(),
        }
    }
}

pub struct Engine {
    registry: Arc<Registry>,
    backend: Arc<dyn Backend>,
    config: EngineConfig,
    schemas: Vec<ToolSchema>,
    sessions: SessionStore,
    log: Option<EventLog>,
}

impl Engine {
    pub fn new(registry: Arc<Registry>, backend: Arc<dyn Backend>, config: EngineConfig) -> Self {
        let schemas = registry.list_schemas();
        Self { registry, backend, config, schemas, sessions: SessionStore::in_memory(), log: None }
    }

    pub fn with_sessions(mut self, sessions: SessionStore) -> Self {
        self.sessions = sessions;
        self
    }

    pub fn with_event_log(mut self, log: EventLog) -> Self {
        self.log = Some(log);
        self
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn sessions(&self) -> &SessionStore {
        &self.sessions
    }

    pub fn event_log(&self) -> Option<&EventLog> {
        self.log.as_ref()
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn create_session(&self) -> Result<Session, EngineError> {
        Ok(self.sessions.create()?)
    }

    fn system_message(&self) -> Option<ChatMessage> {
        let mut prompt = self.config.system_prompt.clone().unwrap_or_default();
        if self.config.schemas_in_prompt && !self.schemas.is_empty() {
            if !prompt.is_empty() {
                prompt.push_str("\n\n");
            }
            prompt.push_str("Available tools:\n\n");
            let rendered: Vec<String> = self.schemas.iter().map(ToolSchema::render_text).collect();
            prompt.push_str(&rendered.join("\n\n"));
        }
        (!prompt.trim().is_empty()).then(|| ChatMessage::system(prompt))
    }

    pub fn submit_message(&self, session_id: &str, text: &str) -> Result<Run, EngineError> {
        self.submit_message_as(&uuid::Uuid::new_v4().to_string(), session_id, text)
    }

    /// Like [`Engine::submit_message`] with a caller-chosen run id.
    pub fn submit_message_as(&self, run_id: &str, session_id: &str, text: &str) -> Result<Run, EngineError> {
        if text.trim().is_empty() {
            return Err(EngineError::InvalidInput);
        }
        let prior = self.sessions.history(session_id).map_err(|e| match e {
            StoreError::UnknownSession(id) => EngineError::UnknownSession(id),
            other => EngineError::Store(other),
        })?;
        let mut run = Run {
            id: run_id.to_string(),
            session_id: session_id.to_string(),
            history: Vec::new(),
            status: RunStatus::Queued,
            events: Vec::new(),
            iterations_used: 0,
            config: self.config.run,
            failure: None,
            final_answer: None,
            context_len: 0,
        };
        // The log is self-contained: the context is recorded message by message.
        let context = self.system_message().into_iter().chain(prior);
        for message in context.chain(std::iter::once(ChatMessage::user(text))) {
            push_message(&mut run, message, &NoObserver);
        }
        run.context_len = run.history.len() - 1;
        Ok(run)
    }

    pub fn step_run(&self, run: &mut Run) -> Result<(), EngineError> {
        self.step_run_observed(run, &NoObserver)
    }

    pub fn step_run_observed(&self, run: &mut Run, obs: &dyn RunObserver) -> Result<(), EngineError> {
        match run.status {
            RunStatus::Queued => transition(run, RunStatus::InProgress, None, obs),
            RunStatus::InProgress => {}
            other => return Err(EngineError::InvalidState(other)),
        }
        if run.iterations_used >= run.config.max_iterations {
            let failure = RunFailure {
                kind: FailureKind::IterationLimit,
                message: format!("no final answer after {} backend consultations", run.iterations_used),
            };
            transition(run, RunStatus::Failed, Some(failure), obs);
            return Ok(());
        }
        run.iterations_used += 1;
        match self.backend.complete(&run.history, &self.schemas) {
            Ok(ModelDecision::FinalText(text)) if text.is_empty() => {
                let failure = RunFailure { kind: FailureKind::Protocol, message: "empty final answer".into() };
                transition(run, RunStatus::Failed, Some(failure), obs);
            }
            Ok(ModelDecision::FinalText(text)) => {
                push_message(run, ChatMessage::assistant(text.clone()), obs);
                transition(run, RunStatus::Completed, None, obs);
                run.final_answer = Some(text.clone());
                record(run, EventBody::FinalAnswer { text }, obs);
            }
            Ok(ModelDecision::ToolCalls(calls)) => {
                push_message(run, ChatMessage::assistant_tool_calls(calls.clone()), obs);
                transition(run, RunStatus::RequiresAction, None, obs);
                for call in calls {
                    record(run, EventBody::ToolCallIssued { call }, obs);
                }
            }
            Err(e) => {
                let kind = match e {
                    BackendError::Unavailable(_) => FailureKind::BackendUnavailable,
                    BackendError::Protocol(_) => FailureKind::Protocol,
                    BackendError::UnknownToolRequested(_) => FailureKind::UnknownToolRequested,
                };
                transition(run, RunStatus::Failed, Some(RunFailure { kind, message: e.to_string() }), obs);
            }
        }
        Ok(())
    }

    pub fn handle_required_action(&self, run: &mut Run) -> Result<(), EngineError> {
        self.handle_required_action_observed(run, &NoObserver)
    }

    pub fn handle_required_action_observed(&self, run: &mut Run, obs: &dyn RunObserver) -> Result<(), EngineError> {
        if run.status != RunStatus::RequiresAction {
            return Err(EngineError::InvalidState(run.status));
        }
        let calls = run.pending_calls();
        let timeout = run.config.tool_timeout;
        let results = map_ordered(self.config.tool_execution, &calls, |call| {
            self.registry.invoke(&call.tool_name, &call.call_id, &call.arguments, timeout)
        });
        for result in results {
            let message = ChatMessage::tool(result.call_id.clone(), result.content.clone());
            record(run, EventBody::ToolResultReceived { result }, obs);
            push_message(run, message, obs);
        }
        transition(run, RunStatus::InProgress, None, obs);
        Ok(())
    }

    /// Drives a queued run to a terminal state, then records it in the
    /// session and the event log.
    pub fn execute_run(&self, run: &mut Run) -> Result<(), EngineError> {
        self.execute_run_observed(run, &NoObserver)
    }

    pub fn execute_run_observed(&self, run: &mut Run, obs: &dyn RunObserver) -> Result<(), EngineError> {
        if run.status != RunStatus::Queued {
            return Err(EngineError::InvalidState(run.status));
        }
        // Context events were recorded before any observer could attach.
        for event in &run.events {
            obs.on_event(run, event);
        }
        while !run.is_terminal() {
            match run.status {
                RunStatus::RequiresAction => self.handle_required_action_observed(run, obs)?,
                _ => self.step_run_observed(run, obs)?,
            }
        }
        self.sessions.append(&run.session_id, run.new_messages())?;
        if let Some(log) = &self.log {
            log.append(&run.session_id, &run.events)?;
        }
        Ok(())
    }

    /// Submits and executes in one call.
    pub fn ask(&self, session_id: &str, text: &str) -> Result<Run, EngineError> {
        let mut run = self.submit_message(session_id, text)?;
        self.execute_run(&mut run)?;
        Ok(run)
    }
}

fn record(run: &mut Run, body: EventBody, obs: &dyn RunObserver) {
    let event = RunEvent { sequence_no: run.events.len() as u64, timestamp: Utc::now(), body };
    run.events.push(event);
    if let Some(e) = run.events.last() {
        obs.on_event(run, e);
    }
}

fn push_message(run: &mut Run, message: ChatMessage, obs: &dyn RunObserver) {
    run.history.push(message.clone());
    record(run, EventBody::MessageAdded { message }, obs);
}

fn transition(run: &mut Run, to: RunStatus, reason: Option<RunFailure>, obs: &dyn RunObserver) {
    debug_assert!(run.status.can_transition_to(to), "{} -> {to}", run.status);
    let from = run.status;
    run.status = to;
    run.failure = reason.clone();
    record(run, EventBody::StatusChanged { from, to, reason, iterations_used: run.iterations_used }, obs);
}
