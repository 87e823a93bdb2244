use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const LETTERS: [char; 4] = ['A', 'B', 'C', 'D'];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DatasetError {
    #[error("cannot read dataset {path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: parse error: {message}")]
    ParseError { line: usize, message: String },
    #[error("line {line}: {message}")]
    InvariantViolation { line: usize, message: String },
}

/// One multiple-choice question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalItem {
    pub id: String,
    pub question: String,
    /// Keyed by "A" through "D".
    pub options: BTreeMap<String, String>,
    pub answer: char,
    pub subject: String,
}

impl EvalItem {
    pub fn new(id: &str, question: &str, options: [&str; 4], answer: char, subject: &str) -> Self {
        Self {
            id: id.to_string(),
            question: question.to_string(),
            options: LETTERS.iter().zip(options).map(|(l, o)| (l.to_string(), o.to_string())).collect(),
            answer,
            subject: subject.to_string(),
        }
    }

    pub fn option(&self, letter: char) -> &str {
        self.options.get(letter.encode_utf8(&mut [0; 4]) as &str).map(String::as_str).unwrap_or_default()
    }

    pub fn check(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("id must be nonempty".into());
        }
        if self.question.trim().is_empty() {
            return Err("question must be nonempty".into());
        }
        for letter in LETTERS {
            if self.option(letter).trim().is_empty() {
                return Err(format!("option {letter} is missing or empty"));
            }
        }
        if self.options.len() != 4 {
            let extra: Vec<_> = self.options.keys().filter(|k| !matches!(k.as_str(), "A" | "B" | "C" | "D")).collect();
            return Err(format!("unexpected option keys {extra:?}"));
        }
        if !LETTERS.contains(&self.answer) {
            return Err(format!("answer {:?} is not one of A, B, C, D", self.answer));
        }
        Ok(())
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawItem {
    id: String,
    question: String,
    options: BTreeMap<String, String>,
    answer: String,
    subject: String,
}

/// Parses a JSON-lines dataset. Blank lines are skipped; items keep file order.
pub fn parse_dataset(text: &str) -> Result<Vec<EvalItem>, DatasetError> {
    let mut items = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawItem = serde_json::from_str(line)
            .map_err(|e| DatasetError::ParseError { line: line_no, message: e.to_string() })?;
        let violation = |message: String| DatasetError::InvariantViolation { line: line_no, message };
        let mut letters = raw.answer.trim().chars();
        let answer = match (letters.next(), letters.next()) {
            (Some(c), None) => c,
            _ => return Err(violation(format!("answer {:?} is not a single letter", raw.answer))),
        };
        let item = EvalItem { id: raw.id, question: raw.question, options: raw.options, answer, subject: raw.subject };
        item.check().map_err(violation)?;
        if !ids.insert(item.id.clone()) {
            return Err(violation(format!("duplicate id {:?}", item.id)));
        }
        items.push(item);
    }
    Ok(items)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<EvalItem>, DatasetError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| DatasetError::Io { path: path.display().to_string(), message: e.to_string() })?;
    parse_dataset(&text)
}

/// Item counts per subject.
pub fn subject_counts(items: &[EvalItem]) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for item in items {
        *counts.entry(item.subject.clone()).or_insert(0) += 1;
    }
    counts
}
