use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::schema::{ParamKind, ToolSchema};

/// A scalar argument value as produced by a model or after validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ArgValue {
    Boolean(bool),
    Integer(i64),
    Number(f64),
    String(String),
}

impl ArgValue {
    pub fn type_name(&self) -> &'static str {
        match self {
            ArgValue::Boolean(_) => "boolean",
            ArgValue::Integer(_) => "integer",
            ArgValue::Number(_) => "number",
            ArgValue::String(_) => "string",
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            ArgValue::String(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            ArgValue::Integer(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ArgValue::Integer(v) => Some(*v as f64),
            ArgValue::Number(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            ArgValue::Boolean(v) => Some(*v),
            _ => None,
        }
    }
}

impl fmt::Display for ArgValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArgValue::Boolean(v) => write!(f, "{v}"),
            ArgValue::Integer(v) => write!(f, "{v}"),
            ArgValue::Number(v) => write!(f, "{v}"),
            ArgValue::String(v) => write!(f, "{v:?}"),
        }
    }
}

impl From<&str> for ArgValue {
    fn from(v: &str) -> Self {
        ArgValue::String(v.to_string())
    }
}

impl From<String> for ArgValue {
    fn from(v: String) -> Self {
        ArgValue::String(v)
    }
}

impl From<i64> for ArgValue {
    fn from(v: i64) -> Self {
        ArgValue::Integer(v)
    }
}

impl From<f64> for ArgValue {
    fn from(v: f64) -> Self {
        ArgValue::Number(v)
    }
}

impl From<bool> for ArgValue {
    fn from(v: bool) -> Self {
        ArgValue::Boolean(v)
    }
}

/// Parameter name to scalar value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ArgumentMap(BTreeMap<String, ArgValue>);

impl ArgumentMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, value: impl Into<ArgValue>) -> Self {
        self.0.insert(name.to_string(), value.into());
        self
    }

    pub fn insert(&mut self, name: impl Into<String>, value: impl Into<ArgValue>) {
        self.0.insert(name.into(), value.into());
    }

    pub fn get(&self, name: &str) -> Option<&ArgValue> {
        self.0.get(name)
    }

    pub fn str(&self, name: &str) -> Option<&str> {
        self.get(name).and_then(ArgValue::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ArgValue)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Builds a raw map from a JSON object. `null` entries are dropped;
    /// arrays and objects are kept as their JSON text so validation can
    /// report them as type mismatches.
    pub fn from_json(value: &serde_json::Value) -> Option<Self> {
        let obj = value.as_object()?;
        let mut map = ArgumentMap::new();
        for (k, v) in obj {
            let arg = match v {
                serde_json::Value::Null => continue,
                serde_json::Value::Bool(b) => ArgValue::Boolean(*b),
                serde_json::Value::Number(n) => match n.as_i64() {
                    Some(i) => ArgValue::Integer(i),
                    None => ArgValue::Number(n.as_f64().unwrap_or(f64::NAN)),
                },
                serde_json::Value::String(s) => ArgValue::String(s.clone()),
                other => ArgValue::String(other.to_string()),
            };
            map.insert(k.clone(), arg);
        }
        Some(map)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).unwrap_or(serde_json::Value::Null)
    }
}

impl FromIterator<(String, ArgValue)> for ArgumentMap {
    fn from_iter<T: IntoIterator<Item = (String, ArgValue)>>(iter: T) -> Self {
        Self(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("missing required parameter {0:?}")]
    MissingParameter(String),
    #[error("unknown parameter {0:?}")]
    UnknownParameter(String),
    #[error("parameter {name:?} expected {expected}, got {got}")]
    TypeMismatch {
        name: String,
        expected: ParamKind,
        got: String,
    },
    #[error("parameter {name:?} must be one of the declared values, got {value:?}")]
    EnumViolation { name: String, value: String },
}

/// Checks `raw` against `schema` and returns the coerced argument map.
///
/// Unknown names are rejected before required parameters are checked.
/// Numeric strings become numbers, `"true"`/`"false"` (any case) become
/// booleans, and integral numbers are accepted for integer parameters.
pub fn validate_arguments(schema: &ToolSchema, raw: &ArgumentMap) -> Result<ArgumentMap, ValidationError> {
    if let Some(unknown) = raw.keys().find(|k| schema.parameter(k).is_none()) {
        return Err(ValidationError::UnknownParameter(unknown.to_string()));
    }
    let mut out = ArgumentMap::new();
    for p in &schema.parameters {
        let Some(value) = raw.get(&p.name) else {
            if p.required {
                return Err(ValidationError::MissingParameter(p.name.clone()));
            }
            continue;
        };
        let mismatch = || ValidationError::TypeMismatch {
            name: p.name.clone(),
            expected: p.kind,
            got: value.type_name().to_string(),
        };
        let coerced = match (p.kind, value) {
            (ParamKind::Integer, ArgValue::Integer(v)) => ArgValue::Integer(*v),
            (ParamKind::Integer, ArgValue::Number(v)) => integral(*v).ok_or_else(mismatch)?,
            (ParamKind::Integer, ArgValue::String(s)) => {
                let s = s.trim();
                match s.parse::<i64>() {
                    Ok(v) => ArgValue::Integer(v),
                    Err(_) => s.parse::<f64>().ok().and_then(integral).ok_or_else(mismatch)?,
                }
            }
            (ParamKind::Number, ArgValue::Integer(v)) => ArgValue::Number(*v as f64),
            (ParamKind::Number, ArgValue::Number(v)) if v.is_finite() => ArgValue::Number(*v),
            (ParamKind::Number, ArgValue::String(s)) => match s.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => ArgValue::Number(v),
                _ => return Err(mismatch()),
            },
            (ParamKind::Boolean, ArgValue::Boolean(v)) => ArgValue::Boolean(*v),
            (ParamKind::Boolean, ArgValue::String(s)) => match s.trim().to_ascii_lowercase().as_str() {
                "true" => ArgValue::Boolean(true),
                "false" => ArgValue::Boolean(false),
                _ => return Err(mismatch()),
            },
            (ParamKind::String, ArgValue::String(s)) => ArgValue::String(s.clone()),
            (ParamKind::Enum, ArgValue::String(s)) => {
                let allowed = p.enum_values.as_deref().unwrap_or_default();
                if !allowed.iter().any(|a| a == s) {
                    return Err(ValidationError::EnumViolation {
                        name: p.name.clone(),
                        value: s.clone(),
                    });
                }
                ArgValue::String(s.clone())
            }
            _ => return Err(mismatch()),
        };
        out.insert(p.name.clone(), coerced);
    }
    Ok(out)
}

fn integral(v: f64) -> Option<ArgValue> {
    (v.is_finite() && v.fract() == 0.0 && v.abs() < 9.0e15).then_some(ArgValue::Integer(v as i64))
}
