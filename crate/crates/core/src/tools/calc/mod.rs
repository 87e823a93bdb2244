//! Calculator tool: a local expression parser/evaluator, with an optional
//! remote Wolfram|Alpha client behind the same schema.

mod eval;
mod expr;
mod parser;

use std::sync::Arc;

use thiserror::Error;

pub use eval::{evaluate, EvalError};
pub use expr::{BinOp, Constant, Expr, Func};
pub use parser::{parse, ParseError};

use super::{check_status, credential, required_str, CallContext, Tool, ToolError, WOLFRAM_APP_ID_VAR};
use crate::registry::{ArgumentMap, ParamKind, ToolParameter, ToolSchema};
use crate::transport::{HttpRequest, Transport};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CalcError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Source text together with its parse tree.
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    pub source: String,
    pub ast: Expr,
}

impl Expression {
    pub fn parse(source: &str) -> Result<Self, ParseError> {
        Ok(Self { source: source.to_string(), ast: parse(source)? })
    }

    pub fn evaluate(&self) -> Result<f64, EvalError> {
        evaluate(&self.ast)
    }

    /// Canonical rendering of the tree.
    pub fn render(&self) -> String {
        self.ast.to_string()
    }
}

pub fn calculate(source: &str) -> Result<f64, CalcError> {
    Ok(Expression::parse(source)?.evaluate()?)
}

/// JSON number for a result; integral values print without a fraction.
pub fn number_json(v: f64) -> serde_json::Value {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        serde_json::Value::from(v as i64)
    } else {
        serde_json::Number::from_f64(v).map(serde_json::Value::Number).unwrap_or(serde_json::Value::Null)
    }
}

/// Wolfram|Alpha short-answers client. Returns the plaintext primary result.
pub struct WolframClient {
    transport: Arc<dyn Transport>,
    app_id: Option<String>,
    endpoint: String,
}

impl WolframClient {
    pub fn new(transport: Arc<dyn Transport>, app_id: Option<String>) -> Self {
        Self { transport, app_id, endpoint: "https://api.wolframalpha.com/v1/result".into() }
    }

    pub fn query(&self, input: &str, ctx: &CallContext) -> Result<String, ToolError> {
        let app_id = credential(&self.app_id, WOLFRAM_APP_ID_VAR, self.transport.as_ref())?;
        let url = reqwest::Url::parse_with_params(&self.endpoint, &[("i", input)])
            .map_err(|e| ToolError::InvalidInput(e.to_string()))?;
        let request = HttpRequest::get(url).secret_query("appid", app_id);
        let response = self.transport.send(&request, ctx.timeout)?;
        check_status(&response)?;
        let text = response.body.trim();
        if text.is_empty() {
            return Err(ToolError::Upstream { status: Some(response.status), detail: "empty answer".into() });
        }
        Ok(text.to_string())
    }
}

enum Engine {
    Local,
    Remote(WolframClient),
}

pub struct CalculatorTool {
    engine: Engine,
}

impl CalculatorTool {
    pub fn local() -> Self {
        Self { engine: Engine::Local }
    }

    pub fn remote(client: WolframClient) -> Self {
        Self { engine: Engine::Remote(client) }
    }
}

impl Tool for CalculatorTool {
    fn schema(&self) -> ToolSchema {
        ToolSchema::new(
            "calculator",
            "Evaluates an arithmetic expression. Supports + - * / ^, parentheses, \
             sqrt, abs, ln, log10, sin, cos, tan, exp, floor, ceil and the constants pi and e.",
            vec![ToolParameter::required("expression", ParamKind::String, "expression to evaluate, e.g. 17*23")],
            "JSON object {expression, result}",
        )
    }

    fn invoke(&self, args: &ArgumentMap, ctx: &CallContext) -> Result<String, ToolError> {
        let source = required_str(args, "expression")?;
        let result = match &self.engine {
            Engine::Local => number_json(calculate(source).map_err(|e| ToolError::Calculation(e.to_string()))?),
            Engine::Remote(client) => serde_json::Value::String(client.query(source, ctx)?),
        };
        Ok(serde_json::json!({ "expression": source, "result": result }).to_string())
    }
}
