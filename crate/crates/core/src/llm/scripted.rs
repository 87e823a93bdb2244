//! Deterministic scripted backend.
//!
//! A script is an ordered list of steps, each pairing a matcher with a
//! decision. On every call the first step whose matcher fires decides;
//! when none fires the script's default final text is returned. The
//! backend holds no state, so its output is a pure function of the script
//! and the history.
//!
//! Script file format:
//!
//! ```json
//! {
//!   "steps": [
//!     {"match": {"kind": "regex", "pattern": "What is (?P<expr>[0-9*+ -]+)\\?"},
//!      "decision": {"tool_calls": [{"tool_name": "calculator", "arguments": {"expression": "{{expr}}"}}]}},
//!     {"match": {"kind": "substring", "pattern": "\"result\""},
//!      "decision": {"final_text": "done"}}
//!   ],
//!   "default_final_text": "I don't know."
//! }
//! ```
//!
//! `match.over` selects the text a matcher sees: `latest` (default, the last
//! user or tool message), `user` (the last user message) or `turn` (the last
//! user message and everything after it, newline-joined).
//!
//! Decision strings are templates. `{{name}}` or `{{1}}` expand to a capture
//! of the matching regex (`{{0}}` is the whole match). `{{choose:name}}`
//! expands to the option letter, taken from the `Options:` line of the last
//! user message, whose text equals the captured value (numerically when both
//! sides are numbers), or `?` when none does.

use std::path::Path;

use regex::Regex;
use serde::Deserialize;
use thiserror::Error;

use super::{check_history, Backend, BackendError, ChatMessage, ModelDecision, Role, ToolCallRequest};
use crate::registry::{ArgValue, ArgumentMap, ToolSchema};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScriptError {
    #[error("cannot read script {path}: {message}")]
    Io { path: String, message: String },
    #[error("script parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchScope {
    #[default]
    Latest,
    User,
    Turn,
}

#[derive(Debug, Clone)]
pub enum Matcher {
    Substring(String),
    Regex(Regex),
}

impl PartialEq for Matcher {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Matcher::Substring(a), Matcher::Substring(b)) => a == b,
            (Matcher::Regex(a), Matcher::Regex(b)) => a.as_str() == b.as_str(),
            _ => false,
        }
    }
}

impl Matcher {
    /// Capture texts when the matcher fires: index 0 is the whole match.
    fn captures(&self, text: &str) -> Option<Captures> {
        match self {
            Matcher::Substring(s) => text.contains(s.as_str()).then(|| Captures {
                positional: vec![Some(s.clone())],
                named: Vec::new(),
            }),
            Matcher::Regex(re) => {
                let caps = re.captures(text)?;
                let positional = caps.iter().map(|m| m.map(|m| m.as_str().to_string())).collect();
                let named = re
                    .capture_names()
                    .flatten()
                    .filter_map(|n| caps.name(n).map(|m| (n.to_string(), m.as_str().to_string())))
                    .collect();
                Some(Captures { positional, named })
            }
        }
    }
}

struct Captures {
    positional: Vec<Option<String>>,
    named: Vec<(String, String)>,
}

impl Captures {
    fn get(&self, key: &str) -> Option<&str> {
        if let Ok(i) = key.parse::<usize>() {
            return self.positional.get(i).and_then(|c| c.as_deref());
        }
        self.named.iter().find(|(n, _)| n == key).map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScriptStep {
    pub matcher: Matcher,
    pub scope: MatchScope,
    pub decision: ModelDecision,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackendScript {
    pub steps: Vec<ScriptStep>,
    pub default_final_text: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMatch {
    kind: String,
    pattern: String,
    #[serde(default)]
    over: MatchScope,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCall {
    tool_name: String,
    #[serde(default)]
    arguments: ArgumentMap,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDecision {
    final_text: Option<String>,
    tool_calls: Option<Vec<RawCall>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, try_from = "RawStepFields")]
struct RawStep(ScriptStep);

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStepFields {
    #[serde(rename = "match")]
    matcher: RawMatch,
    decision: RawDecision,
}

impl TryFrom<RawStepFields> for RawStep {
    type Error = String;

    fn try_from(raw: RawStepFields) -> Result<Self, String> {
        let matcher = match raw.matcher.kind.as_str() {
            "substring" => Matcher::Substring(raw.matcher.pattern),
            "regex" => Matcher::Regex(Regex::new(&raw.matcher.pattern).map_err(|e| format!("invalid regex: {e}"))?),
            other => return Err(format!("match kind must be \"substring\" or \"regex\", not {other:?}")),
        };
        let decision = match (raw.decision.final_text, raw.decision.tool_calls) {
            (Some(_), Some(_)) => return Err("decision must name exactly one of final_text and tool_calls".into()),
            (None, None) => return Err("decision must name one of final_text and tool_calls".into()),
            (Some(text), None) => ModelDecision::FinalText(text),
            (None, Some(calls)) if calls.is_empty() => return Err("tool_calls must be nonempty".into()),
            (None, Some(calls)) => ModelDecision::ToolCalls(
                calls
                    .into_iter()
                    .map(|c| ToolCallRequest { call_id: String::new(), tool_name: c.tool_name, arguments: c.arguments })
                    .collect(),
            ),
        };
        Ok(RawStep(ScriptStep { matcher, scope: raw.matcher.over, decision }))
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, try_from = "RawScriptFields")]
struct RawScript(BackendScript);

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScriptFields {
    steps: Vec<RawStep>,
    #[serde(default)]
    default_final_text: Option<String>,
}

impl TryFrom<RawScriptFields> for RawScript {
    type Error = String;

    fn try_from(raw: RawScriptFields) -> Result<Self, String> {
        if raw.steps.is_empty() {
            return Err("steps must be nonempty".into());
        }
        Ok(RawScript(BackendScript {
            steps: raw.steps.into_iter().map(|s| s.0).collect(),
            default_final_text: raw.default_final_text.unwrap_or_else(|| "I cannot answer that.".into()),
        }))
    }
}

impl BackendScript {
    pub fn parse(text: &str) -> Result<Self, ScriptError> {
        let script: RawScript = serde_json::from_str(text).map_err(|e| ScriptError::Parse {
            line: e.line(),
            column: e.column(),
            message: strip_position(&e.to_string()),
        })?;
        let script = script.0;
        for i in script.unreachable_steps() {
            log::warn!("script step {i} can never fire: an earlier step always matches first");
        }
        Ok(script)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScriptError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ScriptError::Io { path: path.display().to_string(), message: e.to_string() })?;
        Self::parse(&text)
    }

    /// Indices of steps shadowed by an earlier step with the same scope: an
    /// identical matcher, or a substring contained in the later substring.
    pub fn unreachable_steps(&self) -> Vec<usize> {
        (0..self.steps.len())
            .filter(|&j| {
                let later = &self.steps[j];
                self.steps[..j].iter().any(|earlier| {
                    earlier.scope == later.scope
                        && match (&earlier.matcher, &later.matcher) {
                            (Matcher::Substring(a), Matcher::Substring(b)) => b.contains(a.as_str()),
                            (a, b) => a == b,
                        }
                })
            })
            .collect()
    }
}

fn strip_position(message: &str) -> String {
    match message.rfind(" at line ") {
        Some(i) => message[..i].to_string(),
        None => message.to_string(),
    }
}

/// Splits an `Options: A) .. B) .. C) .. D) ..` line into its four texts.
pub fn parse_options(text: &str) -> Option<[(char, String); 4]> {
    let line = text.lines().rev().find_map(|l| l.trim_start().strip_prefix("Options:"))?;
    let mut rest = line.trim_start().strip_prefix("A)")?;
    let mut out: Vec<(char, String)> = Vec::with_capacity(4);
    for (letter, next) in [('A', Some(" B)")), ('B', Some(" C)")), ('C', Some(" D)")), ('D', None)] {
        let (value, tail) = match next {
            Some(marker) => {
                let i = rest.find(marker)?;
                (&rest[..i], &rest[i + marker.len()..])
            }
            None => (rest, ""),
        };
        out.push((letter, value.trim().to_string()));
        rest = tail;
    }
    out.try_into().ok()
}

fn same_value(a: &str, b: &str) -> bool {
    match (a.trim().parse::<f64>(), b.trim().parse::<f64>()) {
        (Ok(x), Ok(y)) => (x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1.0),
        _ => a.trim().eq_ignore_ascii_case(b.trim()),
    }
}

fn expand(template: &str, caps: &Captures, history: &[ChatMessage]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find("{{") {
        out.push_str(&rest[..open]);
        let after = &rest[open + 2..];
        let Some(close) = after.find("}}") else {
            out.push_str(&rest[open..]);
            return out;
        };
        let key = after[..close].trim();
        let value = match key.strip_prefix("choose:") {
            Some(name) => {
                let wanted = caps.get(name.trim()).unwrap_or_default();
                let options = history.iter().rev().find(|m| m.role == Role::User).and_then(|m| parse_options(&m.content));
                options
                    .and_then(|opts| opts.into_iter().find(|(_, text)| same_value(text, wanted)))
                    .map(|(letter, _)| letter.to_string())
                    .unwrap_or_else(|| "?".into())
            }
            None => caps.get(key).unwrap_or_default().to_string(),
        };
        out.push_str(&value);
        rest = &after[close + 2..];
    }
    out.push_str(rest);
    out
}

fn scope_text(history: &[ChatMessage], scope: MatchScope) -> String {
    match scope {
        MatchScope::Latest => history.last().map(|m| m.content.clone()).unwrap_or_default(),
        MatchScope::User => history.iter().rev().find(|m| m.role == Role::User).map(|m| m.content.clone()).unwrap_or_default(),
        MatchScope::Turn => {
            let start = history.iter().rposition(|m| m.role == Role::User).unwrap_or(0);
            history[start..].iter().map(|m| m.content.as_str()).collect::<Vec<_>>().join("\n")
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    script: BackendScript,
}

impl ScriptedBackend {
    pub fn new(script: BackendScript) -> Self {
        Self { script }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ScriptError> {
        Ok(Self::new(BackendScript::load(path)?))
    }

    /// A script that always answers with `text`.
    pub fn always(text: &str) -> Self {
        Self::new(BackendScript {
            steps: vec![ScriptStep {
                matcher: Matcher::Substring(String::new()),
                scope: MatchScope::Latest,
                decision: ModelDecision::FinalText(text.to_string()),
            }],
            default_final_text: text.to_string(),
        })
    }

    pub fn script(&self) -> &BackendScript {
        &self.script
    }
}

impl Backend for ScriptedBackend {
    fn complete(&self, history: &[ChatMessage], schemas: &[ToolSchema]) -> Result<ModelDecision, BackendError> {
        check_history(history)?;
        let fired = self.script.steps.iter().find_map(|step| {
            let text = scope_text(history, step.scope);
            step.matcher.captures(&text).map(|caps| (step, caps))
        });
        let Some((step, caps)) = fired else {
            return Ok(ModelDecision::FinalText(self.script.default_final_text.clone()));
        };
        let decision = match &step.decision {
            ModelDecision::FinalText(t) => ModelDecision::FinalText(expand(t, &caps, history)),
            ModelDecision::ToolCalls(calls) => ModelDecision::ToolCalls(
                calls
                    .iter()
                    .enumerate()
                    .map(|(i, call)| ToolCallRequest {
                        call_id: format!("call_{}_{}", history.len(), i),
                        tool_name: call.tool_name.clone(),
                        arguments: call
                            .arguments
                            .iter()
                            .map(|(k, v)| {
                                let v = match v {
                                    ArgValue::String(s) => ArgValue::String(expand(s, &caps, history)),
                                    other => other.clone(),
                                };
                                (k.to_string(), v)
                            })
                            .collect(),
                    })
                    .collect(),
            ),
        };
        decision.check(schemas)?;
        Ok(decision)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::{ParamKind, ToolParameter};

    fn calc_schema() -> Vec<ToolSchema> {
        vec![ToolSchema::new(
            "calculator",
            "calc",
            vec![ToolParameter::required("expression", ParamKind::String, "e")],
            "r",
        )]
    }

    const CALC_SCRIPT: &str = r#"{
  "steps": [
    {"match": {"kind": "regex", "pattern": "\"result\":(?P<v>-?[0-9.]+)"},
     "decision": {"final_text": "The answer is {{v}}."}},
    {"match": {"kind": "regex", "pattern": "[0-9]+\\*[0-9]+"},
     "decision": {"tool_calls": [{"tool_name": "calculator", "arguments": {"expression": "{{0}}"}}]}}
  ],
  "default_final_text": "no idea"
}"#;

    #[test]
    fn regex_step_issues_tool_call() {
        let backend = ScriptedBackend::new(BackendScript::parse(CALC_SCRIPT).unwrap());
        let history = vec![ChatMessage::user("what is 17*23")];
        let d = backend.complete(&history, &calc_schema()).unwrap();
        let ModelDecision::ToolCalls(calls) = d else { panic!("expected tool calls") };
        assert_eq!(calls.len(), 1);
        assert_eq!(calls[0].tool_name, "calculator");
        assert_eq!(calls[0].call_id, "call_1_0");
        assert_eq!(calls[0].arguments.str("expression"), Some("17*23"));
    }

    #[test]
    fn follow_up_and_default() {
        let backend = ScriptedBackend::new(BackendScript::parse(CALC_SCRIPT).unwrap());
        let history = vec![
            ChatMessage::user("what is 17*23"),
            ChatMessage::assistant_tool_calls(vec![]),
            ChatMessage::tool("call_1_0", r#"{"expression":"17*23","result":391}"#),
        ];
        assert_eq!(
            backend.complete(&history, &calc_schema()).unwrap(),
            ModelDecision::FinalText("The answer is 391.".into())
        );
        let history = vec![ChatMessage::user("hello")];
        assert_eq!(backend.complete(&history, &calc_schema()).unwrap(), ModelDecision::FinalText("no idea".into()));
    }

    #[test]
    fn unknown_tool_is_rejected_and_history_checked() {
        let backend = ScriptedBackend::new(BackendScript::parse(CALC_SCRIPT).unwrap());
        let history = vec![ChatMessage::user("what is 2*3")];
        assert_eq!(
            backend.complete(&history, &[]),
            Err(BackendError::UnknownToolRequested("calculator".into()))
        );
        assert!(matches!(backend.complete(&[ChatMessage::assistant("x")], &[]), Err(BackendError::Protocol(_))));
        assert!(matches!(backend.complete(&[], &[]), Err(BackendError::Protocol(_))));
    }

    #[test]
    fn load_keeps_file_order() {
        let script = BackendScript::parse(CALC_SCRIPT).unwrap();
        assert_eq!(script.steps.len(), 2);
        assert!(matches!(script.steps[0].decision, ModelDecision::FinalText(_)));
        assert!(matches!(script.steps[1].decision, ModelDecision::ToolCalls(_)));
    }

    #[test]
    fn empty_steps_and_exclusivity_are_parse_errors() {
        let err = BackendScript::parse("{\n  \"steps\": []\n}").unwrap_err();
        assert!(matches!(err, ScriptError::Parse { ref message, .. } if message == "steps must be nonempty"), "{err}");

        let both = "{\"steps\": [\n {\"match\": {\"kind\": \"substring\", \"pattern\": \"x\"},\n  \"decision\": {\"final_text\": \"a\", \"tool_calls\": [{\"tool_name\": \"t\"}]}}\n]}";
        let err = BackendScript::parse(both).unwrap_err();
        match err {
            ScriptError::Parse { line, message, .. } => {
                // serde reports the position just past the offending step
                assert_eq!(line, 4);
                assert!(message.contains("exactly one"), "{message}");
            }
            other => panic!("{other}"),
        }
        let bad_json = "{\"steps\": [\n  oops ]}";
        assert!(matches!(BackendScript::parse(bad_json), Err(ScriptError::Parse { line: 2, .. })));
        let bad_kind = r#"{"steps":[{"match":{"kind":"glob","pattern":"x"},"decision":{"final_text":"a"}}]}"#;
        assert!(BackendScript::parse(bad_kind).is_err());
        let bad_regex = r#"{"steps":[{"match":{"kind":"regex","pattern":"("},"decision":{"final_text":"a"}}]}"#;
        assert!(BackendScript::parse(bad_regex).is_err());
    }

    #[test]
    fn unreachable_steps_detected() {
        let text = r#"{"steps":[
            {"match":{"kind":"substring","pattern":"weather"},"decision":{"final_text":"a"}},
            {"match":{"kind":"substring","pattern":"weather in London"},"decision":{"final_text":"b"}},
            {"match":{"kind":"substring","pattern":"weather in London","over":"turn"},"decision":{"final_text":"c"}},
            {"match":{"kind":"regex","pattern":"x+"},"decision":{"final_text":"d"}},
            {"match":{"kind":"regex","pattern":"x+"},"decision":{"final_text":"e"}}
        ]}"#;
        assert_eq!(BackendScript::parse(text).unwrap().unreachable_steps(), vec![1, 4]);
    }

    #[test]
    fn choose_selects_matching_option() {
        let text = r#"{"steps":[
            {"match":{"kind":"regex","pattern":"\"result\":(?P<v>-?[0-9.]+)"},
             "decision":{"final_text":"{\"answer\": \"{{choose:v}}\", \"value\": \"{{v}}\"}"}}
        ]}"#;
        let backend = ScriptedBackend::new(BackendScript::parse(text).unwrap());
        let history = vec![
            ChatMessage::user("What is 17*23?\nOptions: A) 388 B) 391 C) 400 D) 17\nI want json"),
            ChatMessage::tool("c", r#"{"result":391}"#),
        ];
        assert_eq!(
            backend.complete(&history, &[]).unwrap(),
            ModelDecision::FinalText(r#"{"answer": "B", "value": "391"}"#.into())
        );
        let history = vec![ChatMessage::user("Options: A) 1 B) 2 C) 3 D) 4"), ChatMessage::tool("c", r#"{"result":9}"#)];
        assert_eq!(
            backend.complete(&history, &[]).unwrap(),
            ModelDecision::FinalText(r#"{"answer": "?", "value": "9"}"#.into())
        );
    }

    #[test]
    fn options_parsing() {
        let opts = parse_options("Q\nOptions: A) x = 4 B) 2.5 C) none D) all of the above\nmore").unwrap();
        assert_eq!(opts[0], ('A', "x = 4".to_string()));
        assert_eq!(opts[3], ('D', "all of the above".to_string()));
        assert!(parse_options("Options: A) 1 B) 2").is_none());
        assert!(parse_options("no options").is_none());
    }

    #[test]
    fn scopes() {
        let h = vec![
            ChatMessage::user("first"),
            ChatMessage::assistant("ok"),
            ChatMessage::user("second"),
            ChatMessage::tool("c", "tool out"),
        ];
        assert_eq!(scope_text(&h, MatchScope::Latest), "tool out");
        assert_eq!(scope_text(&h, MatchScope::User), "second");
        assert_eq!(scope_text(&h, MatchScope::Turn), "second\ntool out");
    }
}
