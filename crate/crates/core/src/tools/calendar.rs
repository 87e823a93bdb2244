//! Local calendar: a JSON-lines event store plus the `calendar` tool.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{CallContext, Tool, ToolError};
use crate::registry::{ArgumentMap, ParamKind, ToolParameter, ToolSchema};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalendarEvent {
    pub id: String,
    pub title: String,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    pub description: Option<String>,
}

impl CalendarEvent {
    pub fn new(title: &str, start: DateTime<Utc>, end: DateTime<Utc>) -> Self {
        Self { id: String::new(), title: title.to_string(), start, end, description: None }
    }

    fn overlaps(&self, start: DateTime<Utc>, end: DateTime<Utc>) -> bool {
        self.start < end && self.end > start
    }
}

#[derive(Debug)]
struct State {
    events: Vec<CalendarEvent>,
    path: Option<PathBuf>,
}

/// Event store. Writes are serialized by an internal lock; a file-backed
/// store appends one JSON document per event.
#[derive(Debug)]
pub struct CalendarStore {
    state: Mutex<State>,
}

impl CalendarStore {
    pub fn in_memory() -> Self {
        Self { state: Mutex::new(State { events: Vec::new(), path: None }) }
    }

    /// Opens (or lazily creates) a file-backed store.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, ToolError> {
        let path = path.as_ref().to_path_buf();
        let mut events = Vec::new();
        match std::fs::read_to_string(&path) {
            Ok(text) => {
                for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                    let event: CalendarEvent = serde_json::from_str(line)
                        .map_err(|e| ToolError::Store(format!("{}:{}: {e}", path.display(), i + 1)))?;
                    events.push(event);
                }
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(ToolError::Store(format!("{}: {e}", path.display()))),
        }
        Ok(Self { state: Mutex::new(State { events, path: Some(path) }) })
    }

    fn lock(&self) -> Result<std::sync::MutexGuard<'_, State>, ToolError> {
        self.state.lock().map_err(|_| ToolError::Store("store lock poisoned".into()))
    }

    /// Persists the event and returns its id. An empty id is replaced by a fresh one.
    pub fn create(&self, mut event: CalendarEvent) -> Result<CalendarEvent, ToolError> {
        if event.title.trim().is_empty() {
            return Err(ToolError::InvalidEvent("title must be nonempty".into()));
        }
        if event.start >= event.end {
            return Err(ToolError::InvalidEvent(format!("start {} is not before end {}", event.start, event.end)));
        }
        let mut state = self.lock()?;
        if event.id.is_empty() {
            event.id = uuid::Uuid::new_v4().to_string();
        } else if state.events.iter().any(|e| e.id == event.id) {
            return Err(ToolError::InvalidEvent(format!("duplicate id {:?}", event.id)));
        }
        if let Some(path) = &state.path {
            let line = serde_json::to_string(&event).map_err(|e| ToolError::Store(e.to_string()))?;
            OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .and_then(|mut f| writeln!(f, "{line}"))
                .map_err(|e| ToolError::Store(format!("{}: {e}", path.display())))?;
        }
        state.events.push(event.clone());
        Ok(event)
    }

    /// Events overlapping `[start, end)`, sorted by start then id.
    pub fn list(&self, start: DateTime<Utc>, end: DateTime<Utc>) -> Result<Vec<CalendarEvent>, ToolError> {
        if start >= end {
            return Err(ToolError::InvalidInput(format!("range start {start} is not before end {end}")));
        }
        let state = self.lock()?;
        let mut hits: Vec<CalendarEvent> = state.events.iter().filter(|e| e.overlaps(start, end)).cloned().collect();
        hits.sort_by(|a, b| a.start.cmp(&b.start).then_with(|| a.id.cmp(&b.id)));
        Ok(hits)
    }

    pub fn len(&self) -> usize {
        self.state.lock().map(|s| s.events.len()).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub struct CalendarTool {
    store: Arc<CalendarStore>,
}

impl CalendarTool {
    pub fn new(store: Arc<CalendarStore>) -> Self {
        Self { store }
    }
}

fn timestamp(args: &ArgumentMap, name: &str) -> Result<DateTime<Utc>, ToolError> {
    let raw = args
        .str(name)
        .ok_or_else(|| ToolError::InvalidInput(format!("{name} is required for this action")))?;
    DateTime::parse_from_rfc3339(raw.trim())
        .map(|t| t.with_timezone(&Utc))
        .map_err(|_| ToolError::InvalidInput(format!("{name} {raw:?} is not an RFC 3339 timestamp")))
}

impl Tool for CalendarTool {
    fn schema(&self) -> ToolSchema {
        ToolSchema::new(
            "calendar",
            "Creates calendar events or lists the events that overlap a time range.",
            vec![
                ToolParameter::one_of("action", "create an event or list events", true, &["create", "list"]),
                ToolParameter::optional("title", ParamKind::String, "event title (create)"),
                ToolParameter::optional("start", ParamKind::String, "RFC 3339 start of the event or of the range"),
                ToolParameter::optional("end", ParamKind::String, "RFC 3339 end of the event or of the range"),
                ToolParameter::optional("description", ParamKind::String, "event notes (create)"),
            ],
            "create: JSON object {id, event}; list: JSON list of events sorted by start",
        )
    }

    fn invoke(&self, args: &ArgumentMap, _ctx: &CallContext) -> Result<String, ToolError> {
        let start = timestamp(args, "start")?;
        let end = timestamp(args, "end")?;
        match args.str("action") {
            Some("create") => {
                let title = args.str("title").unwrap_or_default();
                let mut event = CalendarEvent::new(title, start, end);
                event.description = args.str("description").map(str::to_string);
                let event = self.store.create(event)?;
                Ok(serde_json::json!({ "id": event.id, "event": event }).to_string())
            }
            Some("list") => {
                let events = self.store.list(start, end)?;
                serde_json::to_string(&events).map_err(|e| ToolError::Store(e.to_string()))
            }
            other => Err(ToolError::InvalidInput(format!("unsupported action {other:?}"))),
        }
    }
}
