use super::dataset::{EvalItem, LETTERS};

/// The answer-format instruction appended to every question.
pub const JSON_INSTRUCTION: &str = "I want you to give me the output in the form of json.
Example:
'''json {
    \"answer\": \"<The right option (A, B, C, D)>\",
    \"value\": \"<Value of multiple choice answer>\",
} '''";

/// Renders `A) .. B) .. C) .. D) ..` on one line.
pub fn format_options(item: &EvalItem) -> String {
    LETTERS.iter().map(|&l| format!("{l}) {}", item.option(l))).collect::<Vec<_>>().join(" ")
}

pub fn format_prompt(item: &EvalItem) -> String {
    format!("{}\nOptions: {}\n{}", item.question, format_options(item), JSON_INSTRUCTION)
}
