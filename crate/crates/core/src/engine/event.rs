//! Run events and replay.

use std::collections::BTreeSet;
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{ChatMessage, Role, ToolCallRequest};
use crate::tools::ToolResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Queued,
    InProgress,
    RequiresAction,
    Completed,
    Failed,
}

impl RunStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, RunStatus::Completed | RunStatus::Failed)
    }

    pub fn can_transition_to(self, to: RunStatus) -> bool {
        use RunStatus::*;
        matches!(
            (self, to),
            (Queued, InProgress)
                | (InProgress, RequiresAction)
                | (InProgress, Completed)
                | (InProgress, Failed)
                | (RequiresAction, InProgress)
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Queued => "queued",
            RunStatus::InProgress => "in_progress",
            RunStatus::RequiresAction => "requires_action",
            RunStatus::Completed => "completed",
            RunStatus::Failed => "failed",
        }
    }
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    BackendUnavailable,
    Protocol,
    UnknownToolRequested,
    IterationLimit,
}

/// Why a run failed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunFailure {
    pub kind: FailureKind,
    pub message: String,
}

impl fmt::Display for RunFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            FailureKind::BackendUnavailable => "BackendUnavailable",
            FailureKind::Protocol => "ProtocolError",
            FailureKind::UnknownToolRequested => "UnknownToolRequested",
            FailureKind::IterationLimit => "IterationLimit",
        };
        write!(f, "{kind}: {}", self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum EventBody {
    MessageAdded {
        message: ChatMessage,
    },
    StatusChanged {
        from: RunStatus,
        to: RunStatus,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reason: Option<RunFailure>,
        /// Backend consultations so far.
        iterations_used: u32,
    },
    ToolCallIssued {
        call: ToolCallRequest,
    },
    ToolResultReceived {
        result: ToolResult,
    },
    FinalAnswer {
        text: String,
    },
}

impl EventBody {
    pub fn kind(&self) -> &'static str {
        match self {
            EventBody::MessageAdded { .. } => "message_added",
            EventBody::StatusChanged { .. } => "status_changed",
            EventBody::ToolCallIssued { .. } => "tool_call_issued",
            EventBody::ToolResultReceived { .. } => "tool_result_received",
            EventBody::FinalAnswer { .. } => "final_answer",
        }
    }

    /// The payload alone, as sent in a stream frame.
    pub fn payload_json(&self) -> serde_json::Value {
        serde_json::to_value(self)
            .ok()
            .and_then(|mut v| v.get_mut("payload").map(serde_json::Value::take))
            .unwrap_or(serde_json::Value::Null)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEvent {
    pub sequence_no: u64,
    pub timestamp: DateTime<Utc>,
    #[serde(flatten)]
    pub body: EventBody,
}

impl RunEvent {
    pub fn kind(&self) -> &'static str {
        self.body.kind()
    }

    /// Whether this event ends the run's stream.
    pub fn is_terminal(&self) -> bool {
        matches!(&self.body, EventBody::FinalAnswer { .. } | EventBody::StatusChanged { to: RunStatus::Failed, .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("corrupt event log at sequence {at}: {detail}")]
pub struct CorruptLog {
    pub at: u64,
    pub detail: String,
}

/// The replayable part of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSnapshot {
    pub history: Vec<ChatMessage>,
    pub status: RunStatus,
    pub iterations_used: u32,
}

/// Folds an event log into the state it describes, checking every
/// invariant along the way.
pub fn replay_events(events: &[RunEvent]) -> Result<(RunSnapshot, Option<RunFailure>, Option<String>), CorruptLog> {
    let corrupt = |at: u64, detail: String| CorruptLog { at, detail };
    let first = events.first().ok_or_else(|| corrupt(0, "empty log".into()))?;
    if !matches!(first.body, EventBody::MessageAdded { .. }) {
        return Err(corrupt(0, format!("log starts with {}, not message_added", first.kind())));
    }

    let mut snap = RunSnapshot { history: Vec::new(), status: RunStatus::Queued, iterations_used: 0 };
    let mut failure = None;
    let mut answer: Option<String> = None;
    let mut pending: BTreeSet<String> = BTreeSet::new();
    let mut issued_any = false;

    for (i, event) in events.iter().enumerate() {
        let at = event.sequence_no;
        if at != i as u64 {
            return Err(corrupt(at, format!("expected sequence {i}")));
        }
        if answer.is_some() {
            return Err(corrupt(at, "event after final_answer".into()));
        }
        match &event.body {
            EventBody::MessageAdded { message } => {
                if snap.status.is_terminal() {
                    return Err(corrupt(at, format!("message added to {} run", snap.status)));
                }
                if !message.is_well_formed() {
                    return Err(corrupt(at, "malformed message".into()));
                }
                if message.role == Role::Tool {
                    let id = message.tool_call_id.as_deref().unwrap_or_default();
                    if snap.status == RunStatus::RequiresAction && pending.contains(id) {
                        return Err(corrupt(at, format!("tool message for unresolved call {id}")));
                    }
                }
                snap.history.push(message.clone());
            }
            EventBody::StatusChanged { from, to, reason, iterations_used } => {
                if *from != snap.status {
                    return Err(corrupt(at, format!("transition from {from} but run is {}", snap.status)));
                }
                if !from.can_transition_to(*to) {
                    return Err(corrupt(at, format!("illegal transition {from} -> {to}")));
                }
                if !pending.is_empty() {
                    return Err(corrupt(at, format!("{} tool calls unresolved at status change", pending.len())));
                }
                if *to == RunStatus::InProgress && *from == RunStatus::RequiresAction && !issued_any {
                    return Err(corrupt(at, "required action resolved without any call".into()));
                }
                if *iterations_used < snap.iterations_used {
                    return Err(corrupt(at, "iteration count decreased".into()));
                }
                if (*to == RunStatus::Failed) != reason.is_some() {
                    return Err(corrupt(at, "failure reason must accompany exactly the failed status".into()));
                }
                snap.status = *to;
                snap.iterations_used = *iterations_used;
                failure = reason.clone();
                issued_any = false;
            }
            EventBody::ToolCallIssued { call } => {
                if snap.status != RunStatus::RequiresAction {
                    return Err(corrupt(at, format!("tool call issued while {}", snap.status)));
                }
                if !pending.insert(call.call_id.clone()) {
                    return Err(corrupt(at, format!("call {} issued twice", call.call_id)));
                }
                issued_any = true;
            }
            EventBody::ToolResultReceived { result } => {
                if snap.status != RunStatus::RequiresAction || !pending.remove(&result.call_id) {
                    return Err(corrupt(at, format!("result for unknown call {}", result.call_id)));
                }
            }
            EventBody::FinalAnswer { text } => {
                if snap.status != RunStatus::Completed {
                    return Err(corrupt(at, format!("final answer while {}", snap.status)));
                }
                answer = Some(text.clone());
            }
        }
    }
    if snap.status == RunStatus::Completed && answer.is_none() {
        return Err(corrupt(events.len() as u64, "completed run has no final_answer".into()));
    }
    Ok((snap, failure, answer))
}
