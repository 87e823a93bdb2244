//! Web search through the Serper Google Search API.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{check_status, credential, max_results, required_str, CallContext, Tool, ToolError, SERPER_KEY_VAR};
use crate::registry::{ArgumentMap, ParamKind, ToolParameter, ToolSchema};
use crate::transport::{HttpRequest, Transport};

pub const SERPER_ENDPOINT: &str = "https://google.serper.dev/search";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchHit {
    pub title: String,
    pub snippet: String,
    pub url: String,
}

#[derive(Deserialize)]
struct SerperResponse {
    #[serde(default)]
    organic: Vec<SerperOrganic>,
}

#[derive(Deserialize)]
struct SerperOrganic {
    #[serde(default)]
    title: String,
    #[serde(default)]
    link: String,
    #[serde(default)]
    snippet: String,
}

pub struct SearchTool {
    transport: Arc<dyn Transport>,
    api_key: Option<String>,
    endpoint: String,
}

impl SearchTool {
    pub fn new(transport: Arc<dyn Transport>, api_key: Option<String>) -> Self {
        Self { transport, api_key, endpoint: SERPER_ENDPOINT.into() }
    }

    pub fn request(&self, query: &str, max_results: usize) -> Result<HttpRequest, ToolError> {
        let url = reqwest::Url::parse(&self.endpoint).map_err(|e| ToolError::InvalidInput(e.to_string()))?;
        Ok(HttpRequest::post_json(url, &serde_json::json!({ "q": query, "num": max_results })))
    }

    pub fn search(&self, query: &str, max_results: usize, ctx: &CallContext) -> Result<Vec<SearchHit>, ToolError> {
        if query.trim().is_empty() {
            return Err(ToolError::InvalidInput("query must be nonempty".into()));
        }
        let key = credential(&self.api_key, SERPER_KEY_VAR, self.transport.as_ref())?;
        if max_results == 0 {
            return Ok(Vec::new());
        }
        let request = self.request(query, max_results)?.header("X-API-KEY", key);
        let response = self.transport.send(&request, ctx.timeout)?;
        check_status(&response)?;
        parse_response(&response.body, max_results)
    }
}

pub fn parse_response(body: &str, max_results: usize) -> Result<Vec<SearchHit>, ToolError> {
    let parsed: SerperResponse = serde_json::from_str(body)
        .map_err(|e| ToolError::Upstream { status: None, detail: format!("malformed search response: {e}") })?;
    Ok(parsed
        .organic
        .into_iter()
        .filter(|o| !o.link.is_empty())
        .take(max_results)
        .map(|o| SearchHit { title: o.title, snippet: o.snippet, url: o.link })
        .collect())
}

impl Tool for SearchTool {
    fn schema(&self) -> ToolSchema {
        ToolSchema::new(
            "search",
            "Searches the web and returns the top results with title, snippet and URL.",
            vec![
                ToolParameter::required("query", ParamKind::String, "search query"),
                ToolParameter::optional("max_results", ParamKind::Integer, "maximum number of results (default 5)"),
            ],
            "JSON list of {title, snippet, url}",
        )
    }

    fn invoke(&self, args: &ArgumentMap, ctx: &CallContext) -> Result<String, ToolError> {
        let query = required_str(args, "query")?;
        let hits = self.search(query, max_results(args, 5)?, ctx)?;
        Ok(serde_json::to_string(&hits).unwrap_or_else(|_| "[]".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::LiveTransport;

    #[test]
    fn empty_query_is_invalid() {
        let tool = SearchTool::new(Arc::new(LiveTransport::new()), Some("k".into()));
        assert!(matches!(tool.search("  ", 3, &CallContext::default()), Err(ToolError::InvalidInput(_))));
    }

    #[test]
    fn missing_key_fails_before_network() {
        let tool = SearchTool::new(Arc::new(LiveTransport::new()), None);
        assert_eq!(
            tool.search("rust", 3, &CallContext::default()),
            Err(ToolError::MissingCredential(SERPER_KEY_VAR))
        );
    }

    #[test]
    fn parse_truncates_and_rejects_garbage() {
        let body = r#"{"organic":[{"title":"a","link":"https://a","snippet":"s"},{"title":"b","link":"https://b","snippet":"t"}]}"#;
        assert_eq!(parse_response(body, 1).unwrap().len(), 1);
        assert_eq!(parse_response(r#"{"searchParameters":{}}"#, 5).unwrap(), vec![]);
        assert!(matches!(parse_response("<html>", 5), Err(ToolError::Upstream { .. })));
    }
}
