use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::dataset::EvalItem;
use super::extract::{extract_answer, ExtractError};
use super::prompt::format_prompt;
use super::report::{score, EvalRecord, EvalReport, RecordFailure, ReportError};
use crate::engine::{Engine, RunStatus};
use crate::par::{map_ordered, ExecutionMode};

/// Answers one prompt end to end. `Err` carries the reason a run failed.
pub trait QueryRunner: Send + Sync {
    fn run_query(&self, prompt: &str) -> Result<String, String>;
}

/// Runs each query in a fresh session of an in-process engine.
pub struct EngineRunner {
    engine: Arc<Engine>,
}

impl EngineRunner {
    pub fn new(engine: Arc<Engine>) -> Self {
        Self { engine }
    }
}

impl QueryRunner for EngineRunner {
    fn run_query(&self, prompt: &str) -> Result<String, String> {
        let session = self.engine.create_session().map_err(|e| e.to_string())?;
        let run = self.engine.ask(&session.id, prompt).map_err(|e| e.to_string())?;
        match (run.status, run.final_answer) {
            (RunStatus::Completed, Some(answer)) => Ok(answer),
            _ => Err(run.failure.map(|f| f.to_string()).unwrap_or_else(|| format!("run ended {}", run.status))),
        }
    }
}

/// Runs each query through a gateway over HTTP, polling until the run ends.
pub struct RemoteRunner {
    base_url: String,
    poll_interval: Duration,
    deadline: Duration,
    client: OnceLock<reqwest::blocking::Client>,
}

impl RemoteRunner {
    pub fn new(base_url: &str) -> Self {
        Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            poll_interval: Duration::from_millis(50),
            deadline: Duration::from_secs(300),
            client: OnceLock::new(),
        }
    }

    fn client(&self) -> &reqwest::blocking::Client {
        self.client.get_or_init(reqwest::blocking::Client::new)
    }

    fn post(&self, path: &str, body: Value) -> Result<Value, String> {
        let resp = self
            .client()
            .post(format!("{}{path}", self.base_url))
            .json(&body)
            .send()
            .map_err(|e| format!("gateway unreachable: {e}"))?;
        let status = resp.status();
        let value: Value = resp.json().map_err(|e| format!("bad gateway response: {e}"))?;
        if !status.is_success() {
            return Err(format!("gateway returned {status}: {value}"));
        }
        Ok(value)
    }
}

impl QueryRunner for RemoteRunner {
    fn run_query(&self, prompt: &str) -> Result<String, String> {
        let session = self.post("/v1/sessions", json!({}))?;
        let session_id = session["id"].as_str().ok_or("session response has no id")?.to_string();
        let accepted = self.post(&format!("/v1/sessions/{session_id}/messages"), json!({ "text": prompt }))?;
        let run_id = accepted["run_id"].as_str().ok_or("message response has no run_id")?.to_string();
        let started = Instant::now();
        loop {
            let run: Value = self
                .client()
                .get(format!("{}/v1/runs/{run_id}", self.base_url))
                .send()
                .and_then(|r| r.json())
                .map_err(|e| format!("polling run {run_id}: {e}"))?;
            match run["status"].as_str() {
                Some("completed") => {
                    return run["final_answer"].as_str().map(str::to_string).ok_or_else(|| "no final answer".into())
                }
                Some("failed") => return Err(run["failure"].to_string()),
                _ if started.elapsed() > self.deadline => return Err(format!("run {run_id} timed out")),
                _ => std::thread::sleep(self.poll_interval),
            }
        }
    }
}

fn record_for(item: &EvalItem, outcome: Result<String, String>) -> EvalRecord {
    let (raw_completion, extracted, failure, detail) = match outcome {
        Err(reason) => (String::new(), None, Some(RecordFailure::RunFailed), Some(reason)),
        Ok(text) => match extract_answer(&text) {
            Ok(letter) => (text, Some(letter), None, None),
            Err(e @ ExtractError::NoJson) => (text, None, Some(RecordFailure::NoJson), Some(e.to_string())),
            Err(e @ ExtractError::BadLetter(_)) => (text, None, Some(RecordFailure::BadLetter), Some(e.to_string())),
        },
    };
    EvalRecord { item_id: item.id.clone(), raw_completion, extracted, correct: false, failure, detail }
}

/// Runs every item once through `runner` and scores the results. Records
/// are assembled by item index, so completion order does not matter.
pub fn run_eval(items: &[EvalItem], runner: &dyn QueryRunner, mode: ExecutionMode) -> Result<EvalReport, ReportError> {
    let records = map_ordered(mode, items, |item| record_for(item, runner.run_query(&format_prompt(item))));
    score(items, records)
}
