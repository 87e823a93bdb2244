use std::collections::BTreeMap;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::dataset::{subject_counts, EvalItem};

/// Display name of the framework row in comparison tables.
pub const FRAMEWORK_ROW: &str = "Athena Framework";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordFailure {
    NoJson,
    BadLetter,
    RunFailed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub item_id: String,
    pub raw_completion: String,
    pub extracted: Option<char>,
    pub correct: bool,
    pub failure: Option<RecordFailure>,
    /// Human-readable failure detail.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub records: Vec<EvalRecord>,
    pub accuracy: f64,
    pub per_subject: BTreeMap<String, f64>,
    pub subject_counts: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baselines: Option<IndexMap<String, f64>>,
}

impl EvalReport {
    pub fn correct(&self) -> usize {
        self.records.iter().filter(|r| r.correct).count()
    }

    pub fn table(&self) -> Option<String> {
        self.baselines.as_ref().and_then(|b| emit_comparison_table(self.accuracy, b).ok())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReportError {
    #[error("{items} items but {records} records")]
    CardinalityMismatch { items: usize, records: usize },
    #[error("record {index} is for item {found:?}, expected {expected:?}")]
    RecordMismatch { index: usize, expected: String, found: String },
    #[error("baselines must be nonempty")]
    EmptyBaselines,
    #[error("cannot read baselines {path}: {message}")]
    Baselines { path: String, message: String },
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Scores one record per item, in item order. A record only counts as
/// correct when its extracted letter is the gold answer.
pub fn score(items: &[EvalItem], records: Vec<EvalRecord>) -> Result<EvalReport, ReportError> {
    if items.len() != records.len() {
        return Err(ReportError::CardinalityMismatch { items: items.len(), records: records.len() });
    }
    let mut per: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    let mut records = records;
    for (i, (item, record)) in items.iter().zip(records.iter_mut()).enumerate() {
        if item.id != record.item_id {
            return Err(ReportError::RecordMismatch { index: i, expected: item.id.clone(), found: record.item_id.clone() });
        }
        record.correct = record.extracted == Some(item.answer);
        let slot = per.entry(item.subject.clone()).or_default();
        slot.0 += usize::from(record.correct);
        slot.1 += 1;
    }
    let correct = records.iter().filter(|r| r.correct).count();
    Ok(EvalReport {
        accuracy: ratio(correct, records.len()),
        per_subject: per.iter().map(|(s, &(c, n))| (s.clone(), ratio(c, n))).collect(),
        subject_counts: subject_counts(items),
        records,
        baselines: None,
    })
}

/// Renders `Model | Accuracy` rows: baselines in the given order, then the
/// framework row. Accuracies are printed to two decimals.
pub fn emit_comparison_table(framework_accuracy: f64, baselines: &IndexMap<String, f64>) -> Result<String, ReportError> {
    if baselines.is_empty() {
        return Err(ReportError::EmptyBaselines);
    }
    let rows: Vec<(&str, f64)> = baselines
        .iter()
        .map(|(m, &a)| (m.as_str(), a))
        .chain(std::iter::once((FRAMEWORK_ROW, framework_accuracy)))
        .collect();
    let width = rows.iter().map(|(m, _)| m.len()).max().unwrap_or(0).max("Model".len());
    let mut out = format!("{:<width$} | Accuracy\n", "Model");
    out.push_str(&format!("{}-|-{}\n", "-".repeat(width), "-".repeat("Accuracy".len())));
    for (model, acc) in rows {
        out.push_str(&format!("{model:<width$} | {acc:.2}\n"));
    }
    Ok(out)
}

/// Parses a rendered table back into `(model, accuracy text)` rows.
pub fn parse_table(table: &str) -> Vec<(String, String)> {
    table
        .lines()
        .skip(2)
        .filter_map(|l| l.split_once(" | "))
        .map(|(m, a)| (m.trim().to_string(), a.trim().to_string()))
        .collect()
}

/// Reads a JSON object mapping model name to accuracy, keeping file order.
pub fn load_baselines(path: impl AsRef<Path>) -> Result<IndexMap<String, f64>, ReportError> {
    let path = path.as_ref();
    let err = |message: String| ReportError::Baselines { path: path.display().to_string(), message };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    let map: IndexMap<String, f64> = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
    if let Some((m, a)) = map.iter().find(|(_, a)| !(0.0..=1.0).contains(*a)) {
        return Err(err(format!("accuracy {a} for {m} is outside [0, 1]")));
    }
    Ok(map)
}
