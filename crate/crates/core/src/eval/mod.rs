//! Multiple-choice evaluation harness.
//!
//! Items are loaded from JSON lines, rendered into a prompt that asks for a
//! JSON answer, run through a [`QueryRunner`], and scored by the letter
//! extracted from the final answer.

mod dataset;
mod extract;
mod prompt;
mod report;
mod runner;

pub use dataset::{load_dataset, parse_dataset, subject_counts, DatasetError, EvalItem, LETTERS};
pub use extract::{extract_answer, ExtractError};
pub use prompt::{format_options, format_prompt, JSON_INSTRUCTION};
pub use report::{
    emit_comparison_table, load_baselines, parse_table, score, EvalRecord, EvalReport, RecordFailure, ReportError,
    FRAMEWORK_ROW,
};
pub use runner::{run_eval, EngineRunner, QueryRunner, RemoteRunner};
