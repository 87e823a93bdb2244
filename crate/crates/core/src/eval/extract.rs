//! Answer extraction from free-form completions.
//!
//! Strategy, first hit wins:
//! 1. the first JSON object (fenced or bare) with an `answer` key;
//! 2. the same after dropping trailing commas, which the example format
//!    in the prompt itself contains;
//! 3. a regex scan for a quoted `answer` key followed by a value.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "error", content = "value", rename_all = "snake_case")]
pub enum ExtractError {
    #[error("no JSON answer found")]
    NoJson,
    #[error("answer {0:?} is not one of A, B, C, D")]
    BadLetter(String),
}

fn answer_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r#"(?i)['"]answer['"]\s*[:=]\s*['"]?\s*\(?\s*([A-Za-z]+)"#).unwrap_or_else(|e| panic!("{e}"))
    })
}

/// Normalizes an answer value to a letter.
fn letter(raw: &str) -> Result<char, ExtractError> {
    let bad = || ExtractError::BadLetter(raw.to_string());
    let mut s = raw.trim().trim_matches(|c: char| c.is_whitespace() || "()[]'\"".contains(c));
    if let Some(rest) = s.get(..7).filter(|p| p.eq_ignore_ascii_case("option ")).and_then(|_| s.get(7..)) {
        s = rest.trim_start();
    }
    let mut chars = s.chars();
    let first = chars.next().ok_or_else(bad)?.to_ascii_uppercase();
    let rest = chars.as_str();
    // "B", "b.", "B) 391", "B: x = 4"
    let separated = rest.is_empty() || rest.starts_with(|c: char| c.is_whitespace() || ").:]".contains(c));
    if separated && matches!(first, 'A'..='D') {
        Ok(first)
    } else {
        Err(bad())
    }
}

fn from_value(v: &Value) -> Option<Result<char, ExtractError>> {
    let answer = v.as_object()?.get("answer")?;
    Some(match answer {
        Value::String(s) => letter(s),
        other => Err(ExtractError::BadLetter(other.to_string())),
    })
}

/// Span of the balanced `{...}` starting at `start`, honouring JSON strings.
fn balanced_object(text: &str, start: usize) -> Option<&str> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, c) in text[start..].char_indices() {
        if in_string {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..start + i + 1]);
                }
            }
            _ => {}
        }
    }
    None
}

/// Drops commas that directly precede a closing brace or bracket.
fn strip_trailing_commas(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut in_string = false;
    let mut escaped = false;
    let chars: Vec<char> = s.chars().collect();
    for (i, &c) in chars.iter().enumerate() {
        if in_string {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            out.push(c);
            continue;
        }
        if c == '"' {
            in_string = true;
        }
        if c == ',' {
            let next = chars[i + 1..].iter().find(|c| !c.is_whitespace());
            if matches!(next, Some('}') | Some(']')) {
                continue;
            }
        }
        out.push(c);
    }
    out
}

pub fn extract_answer(completion: &str) -> Result<char, ExtractError> {
    let starts: Vec<usize> = completion.match_indices('{').map(|(i, _)| i).collect();

    for &i in &starts {
        let mut stream = serde_json::Deserializer::from_str(&completion[i..]).into_iter::<Value>();
        if let Some(Ok(v)) = stream.next() {
            if let Some(r) = from_value(&v) {
                return r;
            }
        }
    }
    for &i in &starts {
        if let Some(span) = balanced_object(completion, i) {
            if let Ok(v) = serde_json::from_str::<Value>(&strip_trailing_commas(span)) {
                if let Some(r) = from_value(&v) {
                    return r;
                }
            }
        }
    }
    match answer_regex().captures(completion).and_then(|c| c.get(1)) {
        Some(m) => letter(m.as_str()),
        None => Err(ExtractError::NoJson),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn listing_shapes() {
        assert_eq!(extract_answer("```json {\"answer\": \"B\", \"value\": \"x = 4\"} ```"), Ok('B'));
        assert_eq!(extract_answer("{\"answer\":\"c\"}"), Ok('C'));
        assert_eq!(extract_answer("The answer is clearly B."), Err(ExtractError::NoJson));
        assert_eq!(
            extract_answer("'''json {\n    \"answer\": \"D\",\n    \"value\": \"17\",\n} '''"),
            Ok('D'),
            "trailing comma as in the example format"
        );
    }

    #[test]
    fn fallbacks_and_errors() {
        assert_eq!(extract_answer("{'answer': 'a', 'value': 3}"), Ok('A'));
        assert_eq!(extract_answer(r#"{"answer": "E"}"#), Err(ExtractError::BadLetter("E".into())));
        assert_eq!(extract_answer(r#"{"answer": 2}"#), Err(ExtractError::BadLetter("2".into())));
        assert_eq!(extract_answer(r#"{"answer": "B) 391"}"#), Ok('B'));
        assert_eq!(extract_answer(r#"{"answer": "Option C"}"#), Ok('C'));
        assert_eq!(extract_answer(r#"{"answer": "Because"}"#), Err(ExtractError::BadLetter("Because".into())));
        assert_eq!(extract_answer(r#"{"value": 3} then {"answer": "D"}"#), Ok('D'));
        assert_eq!(extract_answer(r#"{"result": {"answer": "A"}}"#), Ok('A'));
        assert_eq!(extract_answer(""), Err(ExtractError::NoJson));
        assert_eq!(extract_answer("{{{{"), Err(ExtractError::NoJson));
    }

    #[test]
    fn trailing_comma_stripping_respects_strings() {
        assert_eq!(strip_trailing_commas(r#"{"a": "x,}", "b": 1,}"#), r#"{"a": "x,}", "b": 1}"#);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]

        #[test]
        fn never_panics(s in "\\PC{0,80}") {
            let _ = extract_answer(&s);
        }

        #[test]
        fn never_panics_on_jsonish(s in r#"[{}\[\]",:' aAnswerBCD0-9\\é]{0,60}"#) {
            if let Ok(l) = extract_answer(&s) {
                prop_assert!(matches!(l, 'A'..='D'));
            }
        }
    }
}
