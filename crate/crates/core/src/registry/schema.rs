use std::collections::HashSet;
use std::fmt::{self, Write as _};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::RegistryError;

/// Scalar kinds a tool parameter may declare.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    Integer,
    Number,
    String,
    Boolean,
    Enum,
}

impl ParamKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ParamKind::Integer => "integer",
            ParamKind::Number => "number",
            ParamKind::String => "string",
            ParamKind::Boolean => "boolean",
            ParamKind::Enum => "enum",
        }
    }
}

impl fmt::Display for ParamKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolParameter {
    pub name: String,
    pub kind: ParamKind,
    pub description: String,
    pub required: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enum_values: Option<Vec<String>>,
}

impl ToolParameter {
    pub fn new(name: &str, kind: ParamKind, description: &str, required: bool) -> Self {
        Self {
            name: name.to_string(),
            kind,
            description: description.to_string(),
            required,
            enum_values: None,
        }
    }

    pub fn required(name: &str, kind: ParamKind, description: &str) -> Self {
        Self::new(name, kind, description, true)
    }

    pub fn optional(name: &str, kind: ParamKind, description: &str) -> Self {
        Self::new(name, kind, description, false)
    }

    pub fn one_of(name: &str, description: &str, required: bool, values: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            kind: ParamKind::Enum,
            description: description.to_string(),
            required,
            enum_values: Some(values.iter().map(|v| v.to_string()).collect()),
        }
    }
}

/// Machine-readable description of a tool: what it does, what it takes and
/// what it returns. Serialises to the tool manifest format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolSchema {
    pub name: String,
    pub description: String,
    pub parameters: Vec<ToolParameter>,
    pub returns: String,
}

pub(crate) fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase())
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

impl ToolSchema {
    pub fn new(name: &str, description: &str, parameters: Vec<ToolParameter>, returns: &str) -> Self {
        Self {
            name: name.to_string(),
            description: description.to_string(),
            parameters,
            returns: returns.to_string(),
        }
    }

    pub fn parameter(&self, name: &str) -> Option<&ToolParameter> {
        self.parameters.iter().find(|p| p.name == name)
    }

    /// Checks every structural invariant of the schema.
    pub fn check(&self) -> Result<(), RegistryError> {
        let invalid = |msg: String| Err(RegistryError::InvalidSchema(msg));
        if !is_identifier(&self.name) {
            return invalid(format!("tool name {:?} must match [a-z][a-z0-9_]*", self.name));
        }
        if self.description.trim().is_empty() {
            return invalid(format!("tool {:?} has an empty description", self.name));
        }
        let mut seen = HashSet::new();
        for p in &self.parameters {
            if !is_identifier(&p.name) {
                return invalid(format!(
                    "parameter {:?} of tool {:?} must match [a-z][a-z0-9_]*",
                    p.name, self.name
                ));
            }
            if !seen.insert(p.name.as_str()) {
                return invalid(format!("duplicate parameter {:?} in tool {:?}", p.name, self.name));
            }
            let has_values = p.enum_values.as_ref().is_some_and(|v| !v.is_empty());
            match (p.kind, has_values) {
                (ParamKind::Enum, false) => {
                    return invalid(format!("enum parameter {:?} has no enum_values", p.name))
                }
                (kind, _) if kind != ParamKind::Enum && p.enum_values.is_some() => {
                    return invalid(format!(
                        "parameter {:?} declares enum_values but is of kind {kind}",
                        p.name
                    ))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Plain-text rendering used when a backend reasons over prose rather
    /// than structured function declarations.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.name);
        let _ = writeln!(out, "{}", self.description);
        if self.parameters.is_empty() {
            out.push_str("no parameters\n");
        } else {
            out.push_str("Parameters:\n");
            for p in &self.parameters {
                let req = if p.required { "required" } else { "optional" };
                let _ = write!(out, "{} ({}, {}): {}", p.name, p.kind, req, p.description);
                if let Some(values) = &p.enum_values {
                    let _ = write!(out, " [one of: {}]", values.join(", "));
                }
                out.push('\n');
            }
        }
        let _ = writeln!(out, "Returns: {}", self.returns);
        out
    }

    /// JSON-Schema object describing the parameters, as expected by
    /// OpenAI-compatible function declarations.
    pub fn parameters_json_schema(&self) -> serde_json::Value {
        let mut properties = serde_json::Map::new();
        let mut required = Vec::new();
        for p in &self.parameters {
            let mut prop = serde_json::Map::new();
            let ty = match p.kind {
                ParamKind::Integer => "integer",
                ParamKind::Number => "number",
                ParamKind::String | ParamKind::Enum => "string",
                ParamKind::Boolean => "boolean",
            };
            prop.insert("type".into(), ty.into());
            prop.insert("description".into(), p.description.clone().into());
            if let Some(values) = &p.enum_values {
                prop.insert("enum".into(), values.clone().into());
            }
            properties.insert(p.name.clone(), prop.into());
            if p.required {
                required.push(serde_json::Value::from(p.name.clone()));
            }
        }
        serde_json::json!({
            "type": "object",
            "properties": properties,
            "required": required,
            "additionalProperties": false,
        })
    }
}

/// Reads a tool manifest: one JSON document per tool, concatenated
/// (whitespace or newlines between documents). Each schema is checked.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<ToolSchema>, RegistryError> {
    let mut text = String::new();
    std::fs::File::open(path.as_ref())
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| RegistryError::Manifest(format!("{}: {e}", path.as_ref().display())))?;
    parse_manifest(&text)
}

pub fn parse_manifest(text: &str) -> Result<Vec<ToolSchema>, RegistryError> {
    let mut schemas = Vec::new();
    for doc in serde_json::Deserializer::from_str(text).into_iter::<ToolSchema>() {
        let schema = doc.map_err(|e| RegistryError::Manifest(e.to_string()))?;
        schema.check()?;
        schemas.push(schema);
    }
    Ok(schemas)
}
