//! Athena: an orchestration runtime that lets a chat model answer queries by
//! calling registered tools through an iterative, event-sourced run loop.
//!
//! The crate is organised around the lifecycle of a query:
//!
//! - [`registry`] holds tool schemas and validates model-supplied arguments.
//! - [`tools`] implements the built-in toolkit (calculator, web search,
//!   arXiv lookup, weather, calendar).
//! - [`llm`] abstracts the chat model behind [`llm::Backend`], with a
//!   deterministic scripted backend and an OpenAI-compatible HTTP backend.
//! - [`engine`] drives a run through `queued -> in_progress -> requires_action
//!   -> ... -> completed | failed`, recording every step as a [`engine::RunEvent`].
//! - [`eval`] is the multiple-choice evaluation harness.

pub mod engine;
pub mod eval;
pub mod llm;
pub mod par;
pub mod registry;
#[cfg(any(test, feature = "testkit"))]
pub mod testkit;
pub mod tools;
pub mod transport;

pub use registry::{ArgValue, ArgumentMap, ParamKind, Registry, RegistryBuilder, ToolDescriptor, ToolParameter, ToolSchema};
pub use tools::{Tool, ToolResult};
pub use engine::{Engine, EngineConfig, Run, RunEvent, RunStatus};
pub use llm::{Backend, ChatMessage, ModelDecision};
