//! Session store and per-session event log files.

use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::event::RunEvent;
use crate::llm::ChatMessage;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StoreError {
    #[error("store I/O error: {0}")]
    Io(String),
    #[error("unknown session {0:?}")]
    UnknownSession(String),
    #[error("corrupt store record {path}: {detail}")]
    Corrupt { path: String, detail: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub created_at: DateTime<Utc>,
    pub message_history: Vec<ChatMessage>,
}

/// Sessions keyed by id. A directory-backed store keeps one JSON file per
/// session, rewritten atomically on every change.
#[derive(Debug)]
pub struct SessionStore {
    sessions: Mutex<HashMap<String, Session>>,
    dir: Option<PathBuf>,
}

impl Default for SessionStore {
    fn default() -> Self {
        Self::in_memory()
    }
}

impl SessionStore {
    pub fn in_memory() -> Self {
        Self { sessions: Mutex::new(HashMap::new()), dir: None }
    }

    /// Opens a directory-backed store, loading any sessions already there.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&dir).map_err(|e| StoreError::Io(format!("{}: {e}", dir.display())))?;
        let mut sessions = HashMap::new();
        let entries = std::fs::read_dir(&dir).map_err(|e| StoreError::Io(format!("{}: {e}", dir.display())))?;
        for entry in entries.flatten() {
            let path = entry.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let text = std::fs::read_to_string(&path).map_err(|e| StoreError::Io(format!("{}: {e}", path.display())))?;
            let session: Session = serde_json::from_str(&text)
                .map_err(|e| StoreError::Corrupt { path: path.display().to_string(), detail: e.to_string() })?;
            sessions.insert(session.id.clone(), session);
        }
        Ok(Self { sessions: Mutex::new(sessions), dir: Some(dir) })
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, HashMap<String, Session>> {
        self.sessions.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn persist(&self, session: &Session) -> Result<(), StoreError> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let path = dir.join(format!("{}.json", session.id));
        let tmp = dir.join(format!(".{}.json.tmp", session.id));
        let text = serde_json::to_string(session).map_err(|e| StoreError::Io(e.to_string()))?;
        std::fs::write(&tmp, text)
            .and_then(|_| std::fs::rename(&tmp, &path))
            .map_err(|e| StoreError::Io(format!("{}: {e}", path.display())))
    }

    pub fn create(&self) -> Result<Session, StoreError> {
        let session =
            Session { id: uuid::Uuid::new_v4().to_string(), created_at: Utc::now(), message_history: Vec::new() };
        self.persist(&session)?;
        self.lock().insert(session.id.clone(), session.clone());
        Ok(session)
    }

    pub fn get(&self, id: &str) -> Option<Session> {
        self.lock().get(id).cloned()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.lock().contains_key(id)
    }

    pub fn history(&self, id: &str) -> Result<Vec<ChatMessage>, StoreError> {
        self.lock()
            .get(id)
            .map(|s| s.message_history.clone())
            .ok_or_else(|| StoreError::UnknownSession(id.to_string()))
    }

    /// Appends messages to a session's history.
    pub fn append(&self, id: &str, messages: &[ChatMessage]) -> Result<(), StoreError> {
        let mut sessions = self.lock();
        let session = sessions.get_mut(id).ok_or_else(|| StoreError::UnknownSession(id.to_string()))?;
        let mut updated = session.clone();
        updated.message_history.extend_from_slice(messages);
        self.persist(&updated)?;
        *session = updated;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Append-only JSON-lines event log, one file per session. Runs follow one
/// another in the file; each starts again at sequence 0.
#[derive(Debug, Clone)]
pub struct EventLog {
    dir: PathBuf,
}

impl EventLog {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn path(&self, session_id: &str) -> PathBuf {
        self.dir.join(format!("{session_id}.jsonl"))
    }

    pub fn append(&self, session_id: &str, events: &[RunEvent]) -> Result<(), StoreError> {
        let path = self.path(session_id);
        let mut buf = String::new();
        for e in events {
            buf.push_str(&serde_json::to_string(e).map_err(|e| StoreError::Io(e.to_string()))?);
            buf.push('\n');
        }
        std::fs::create_dir_all(&self.dir)
            .and_then(|_| OpenOptions::new().create(true).append(true).open(&path))
            .and_then(|mut f| f.write_all(buf.as_bytes()))
            .map_err(|e| StoreError::Io(format!("{}: {e}", path.display())))
    }

    /// All runs recorded for a session, in order.
    pub fn read(&self, session_id: &str) -> Result<Vec<Vec<RunEvent>>, StoreError> {
        let path = self.path(session_id);
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(StoreError::Io(format!("{}: {e}", path.display()))),
        };
        let mut runs: Vec<Vec<RunEvent>> = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let event: RunEvent = serde_json::from_str(line).map_err(|e| StoreError::Corrupt {
                path: format!("{}:{}", path.display(), i + 1),
                detail: e.to_string(),
            })?;
            match runs.last_mut() {
                Some(run) if event.sequence_no != 0 => run.push(event),
                _ => runs.push(vec![event]),
            }
        }
        Ok(runs)
    }
}
