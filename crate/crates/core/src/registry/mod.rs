//! Tool repository.
//!
//! Tools are registered on a [`RegistryBuilder`] during startup and the
//! builder is then frozen into an immutable [`Registry`], which is cheap to
//! share across threads. The registry owns argument validation and is the
//! single place where a tool is invoked, so every call produces a
//! [`ToolResult`] whatever happens inside the tool.

mod args;
mod schema;

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;

pub use args::{validate_arguments, ArgValue, ArgumentMap, ValidationError};
pub use schema::{load_manifest, parse_manifest, ParamKind, ToolParameter, ToolSchema};

use crate::tools::{CallContext, Tool, ToolResult};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("a tool named {0:?} is already registered")]
    DuplicateName(String),
    #[error("invalid tool schema: {0}")]
    InvalidSchema(String),
    #[error("cannot read tool manifest: {0}")]
    Manifest(String),
}

/// A schema bound to the implementation that serves it.
#[derive(Clone)]
pub struct ToolDescriptor {
    pub schema: ToolSchema,
    pub invoker: Arc<dyn Tool>,
    /// Lower ranks are listed first. `None` means "registration order".
    pub priority: Option<i64>,
}

impl ToolDescriptor {
    pub fn new(schema: ToolSchema, invoker: Arc<dyn Tool>) -> Self {
        Self { schema, invoker, priority: None }
    }

    /// Builds a descriptor from a tool that knows its own schema.
    pub fn from_tool<T: Tool + 'static>(tool: T) -> Self {
        let schema = tool.schema();
        Self::new(schema, Arc::new(tool))
    }

    pub fn with_priority(mut self, priority: i64) -> Self {
        self.priority = Some(priority);
        self
    }
}

impl std::fmt::Debug for ToolDescriptor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ToolDescriptor")
            .field("schema", &self.schema.name)
            .field("priority", &self.priority)
            .finish()
    }
}

#[derive(Debug, Default)]
pub struct RegistryBuilder {
    entries: Vec<ToolDescriptor>,
}

impl RegistryBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, descriptor: ToolDescriptor) -> Result<&mut Self, RegistryError> {
        descriptor.schema.check()?;
        if self.entries.iter().any(|d| d.schema.name == descriptor.schema.name) {
            return Err(RegistryError::DuplicateName(descriptor.schema.name));
        }
        self.entries.push(descriptor);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn freeze(self) -> Registry {
        let mut ranked: Vec<(i64, usize, ToolDescriptor)> = self
            .entries
            .into_iter()
            .enumerate()
            .map(|(i, d)| (d.priority.unwrap_or(i as i64), i, d))
            .collect();
        ranked.sort_by_key(|(p, i, _)| (*p, *i));
        let entries: Vec<ToolDescriptor> = ranked.into_iter().map(|(_, _, d)| d).collect();
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, d)| (d.schema.name.clone(), i))
            .collect();
        Registry { entries, index }
    }
}

/// Frozen, read-only tool repository.
#[derive(Debug, Default)]
pub struct Registry {
    entries: Vec<ToolDescriptor>,
    index: HashMap<String, usize>,
}

impl Registry {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Option<&ToolDescriptor> {
        self.index.get(name).map(|&i| &self.entries[i])
    }

    /// Schemas in priority order.
    pub fn list_schemas(&self) -> Vec<ToolSchema> {
        self.entries.iter().map(|d| d.schema.clone()).collect()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|d| d.schema.name.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Looks up, validates and invokes a tool. Never fails: unknown tools,
    /// invalid arguments, tool errors and panics all become error results.
    pub fn invoke(&self, tool_name: &str, call_id: &str, raw: &ArgumentMap, timeout: Duration) -> ToolResult {
        let Some(descriptor) = self.get(tool_name) else {
            return ToolResult::error(tool_name, call_id, format!("UnknownTool: no tool named {tool_name:?} is registered"));
        };
        let args = match validate_arguments(&descriptor.schema, raw) {
            Ok(args) => args,
            Err(e) => return ToolResult::error(tool_name, call_id, format!("invalid arguments: {e}")),
        };
        let ctx = CallContext { call_id: call_id.to_string(), timeout };
        match catch_unwind(AssertUnwindSafe(|| descriptor.invoker.invoke(&args, &ctx))) {
            Ok(Ok(content)) => ToolResult::ok(tool_name, call_id, content),
            Ok(Err(e)) => ToolResult::error(tool_name, call_id, e.to_string()),
            Err(_) => ToolResult::error(tool_name, call_id, "tool panicked".to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tools::ToolError;

    struct Adder;

    impl Tool for Adder {
        fn schema(&self) -> ToolSchema {
            ToolSchema::new(
                "add",
                "Adds a and b.",
                vec![
                    ToolParameter::required("a", ParamKind::Integer, "first int"),
                    ToolParameter::required("b", ParamKind::Integer, "second int"),
                ],
                "int",
            )
        }

        fn invoke(&self, args: &ArgumentMap, _ctx: &CallContext) -> Result<String, ToolError> {
            let a = args.get("a").and_then(ArgValue::as_i64).unwrap_or_default();
            let b = args.get("b").and_then(ArgValue::as_i64).unwrap_or_default();
            Ok((a + b).to_string())
        }
    }

    struct Named(&'static str);

    impl Tool for Named {
        fn schema(&self) -> ToolSchema {
            ToolSchema::new(self.0, "named tool", vec![], "nothing")
        }

        fn invoke(&self, _args: &ArgumentMap, _ctx: &CallContext) -> Result<String, ToolError> {
            if self.0 == "boom" {
                panic!("boom");
            }
            Ok(self.0.to_string())
        }
    }

    const T: Duration = Duration::from_secs(1);

    #[test]
    fn register_and_lookup_add() {
        let mut b = RegistryBuilder::new();
        b.register(ToolDescriptor::from_tool(Adder)).unwrap();
        let reg = b.freeze();
        let d = reg.get("add").unwrap();
        let kinds: Vec<_> = d.schema.parameters.iter().map(|p| (p.name.as_str(), p.kind)).collect();
        assert_eq!(kinds, vec![("a", ParamKind::Integer), ("b", ParamKind::Integer)]);
        let r = reg.invoke("add", "c1", &ArgumentMap::new().with("a", "3").with("b", 4i64), T);
        assert!(!r.is_error);
        assert_eq!(r.content, "7");
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut b = RegistryBuilder::new();
        b.register(ToolDescriptor::from_tool(Adder)).unwrap();
        assert_eq!(
            b.register(ToolDescriptor::from_tool(Adder)).unwrap_err(),
            RegistryError::DuplicateName("add".into())
        );
    }

    #[test]
    fn priority_order_with_registration_tiebreak() {
        let mut b = RegistryBuilder::new();
        b.register(ToolDescriptor::from_tool(Named("zeta")).with_priority(5)).unwrap();
        b.register(ToolDescriptor::from_tool(Named("alpha")).with_priority(1)).unwrap();
        b.register(ToolDescriptor::from_tool(Named("beta")).with_priority(5)).unwrap();
        b.register(ToolDescriptor::from_tool(Named("gamma"))).unwrap();
        let reg = b.freeze();
        let names: Vec<_> = reg.names().collect();
        assert_eq!(names, vec!["alpha", "gamma", "zeta", "beta"]);
        for name in names {
            assert_eq!(reg.get(name).unwrap().schema.name, name);
        }
    }

    #[test]
    fn failures_become_error_results() {
        let mut b = RegistryBuilder::new();
        b.register(ToolDescriptor::from_tool(Adder)).unwrap();
        b.register(ToolDescriptor::from_tool(Named("boom"))).unwrap();
        let reg = b.freeze();

        let r = reg.invoke("nope", "c1", &ArgumentMap::new(), T);
        assert!(r.is_error);
        assert!(r.content.contains("UnknownTool"));

        let r = reg.invoke("add", "c2", &ArgumentMap::new().with("a", 1i64), T);
        assert!(r.is_error);
        assert!(r.error_message.unwrap().contains("\"b\""));

        let r = reg.invoke("boom", "c3", &ArgumentMap::new(), T);
        assert!(r.is_error);
        assert_eq!(r.call_id, "c3");
    }

    #[test]
    fn rendered_texts_are_distinct() {
        let mut b = RegistryBuilder::new();
        for n in ["a1", "a2", "b"] {
            b.register(ToolDescriptor::from_tool(Named(n))).unwrap();
        }
        let reg = b.freeze();
        let texts: std::collections::HashSet<String> = reg.list_schemas().iter().map(ToolSchema::render_text).collect();
        assert_eq!(texts.len(), 3);
    }
}
