//! Scholarly article lookup through the public arXiv Atom API.

use std::sync::Arc;

use quick_xml::events::Event;
use quick_xml::Reader;
use serde::{Deserialize, Serialize};

use super::{check_status, max_results, required_str, CallContext, Tool, ToolError};
use crate::registry::{ArgumentMap, ParamKind, ToolParameter, ToolSchema};
use crate::transport::{HttpRequest, Transport};

pub const ARXIV_ENDPOINT: &str = "http://export.arxiv.org/api/query";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArxivRecord {
    pub title: String,
    pub authors: Vec<String>,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub identifier: String,
}

pub struct ArxivTool {
    transport: Arc<dyn Transport>,
    endpoint: String,
}

impl ArxivTool {
    pub fn new(transport: Arc<dyn Transport>) -> Self {
        Self { transport, endpoint: ARXIV_ENDPOINT.into() }
    }

    pub fn request(&self, query: &str, max_results: usize) -> Result<HttpRequest, ToolError> {
        let search = format!("all:{}", query.trim());
        let max = max_results.to_string();
        let url = reqwest::Url::parse_with_params(
            &self.endpoint,
            &[("search_query", search.as_str()), ("start", "0"), ("max_results", max.as_str())],
        )
        .map_err(|e| ToolError::InvalidInput(e.to_string()))?;
        Ok(HttpRequest::get(url))
    }

    pub fn lookup(&self, query: &str, max_results: usize, ctx: &CallContext) -> Result<Vec<ArxivRecord>, ToolError> {
        if query.trim().is_empty() {
            return Err(ToolError::InvalidInput("query must be nonempty".into()));
        }
        if max_results == 0 {
            return Ok(Vec::new());
        }
        let response = self.transport.send(&self.request(query, max_results)?, ctx.timeout)?;
        check_status(&response)?;
        let mut records = parse_feed(&response.body)?;
        records.truncate(max_results);
        Ok(records)
    }
}

fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn identifier_from_id(id: &str) -> String {
    let id = id.trim();
    match id.rfind("/abs/") {
        Some(i) => id[i + 5..].trim_matches('/').to_string(),
        None => id.to_string(),
    }
}

fn malformed(detail: impl std::fmt::Display) -> ToolError {
    ToolError::Upstream { status: None, detail: format!("malformed arXiv feed: {detail}") }
}

#[derive(Default)]
struct Entry {
    id: String,
    title: String,
    summary: String,
    authors: Vec<String>,
}

/// Parses an arXiv Atom feed. Anything that is not a well-formed `<feed>`
/// document is an upstream error.
pub fn parse_feed(body: &str) -> Result<Vec<ArxivRecord>, ToolError> {
    let mut reader = Reader::from_str(body);
    reader.config_mut().trim_text(true);

    let mut saw_feed = false;
    let mut entry: Option<Entry> = None;
    let mut in_author = false;
    let mut field: Option<&'static str> = None;
    let mut records = Vec::new();

    loop {
        match reader.read_event().map_err(malformed)? {
            Event::Start(e) => {
                let name = e.local_name();
                match name.as_ref() {
                    b"feed" => saw_feed = true,
                    b"entry" if saw_feed => entry = Some(Entry::default()),
                    b"author" if entry.is_some() => in_author = true,
                    b"name" if in_author => field = Some("name"),
                    b"id" if entry.is_some() && !in_author => field = Some("id"),
                    b"title" if entry.is_some() => field = Some("title"),
                    b"summary" if entry.is_some() => field = Some("summary"),
                    _ => field = None,
                }
            }
            Event::Text(t) => {
                if let (Some(f), Some(cur)) = (field, entry.as_mut()) {
                    let text = t.unescape().map_err(malformed)?;
                    let slot = match f {
                        "id" => &mut cur.id,
                        "title" => &mut cur.title,
                        "summary" => &mut cur.summary,
                        _ => {
                            cur.authors.push(normalize_ws(&text));
                            continue;
                        }
                    };
                    slot.push_str(&text);
                }
            }
            Event::CData(t) => {
                if let (Some(f @ ("title" | "summary")), Some(cur)) = (field, entry.as_mut()) {
                    let text = String::from_utf8_lossy(&t).into_owned();
                    if f == "title" {
                        cur.title.push_str(&text);
                    } else {
                        cur.summary.push_str(&text);
                    }
                }
            }
            Event::End(e) => {
                field = None;
                match e.local_name().as_ref() {
                    b"author" => in_author = false,
                    b"entry" => {
                        if let Some(cur) = entry.take() {
                            let record = ArxivRecord {
                                title: normalize_ws(&cur.title),
                                authors: cur.authors.into_iter().filter(|a| !a.is_empty()).collect(),
                                abstract_text: normalize_ws(&cur.summary),
                                identifier: identifier_from_id(&cur.id),
                            };
                            // The API reports query errors as a single entry titled "Error".
                            if record.title == "Error" && record.authors.is_empty() {
                                return Err(ToolError::Upstream { status: None, detail: record.abstract_text });
                            }
                            records.push(record);
                        }
                    }
                    _ => {}
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }
    if !saw_feed {
        return Err(malformed("no <feed> element"));
    }
    if entry.is_some() {
        return Err(malformed("unterminated <entry>"));
    }
    Ok(records)
}

impl Tool for ArxivTool {
    fn schema(&self) -> ToolSchema {
        ToolSchema::new(
            "arxiv",
            "Looks up scholarly articles on arXiv and returns their title, authors, abstract and identifier.",
            vec![
                ToolParameter::required("query", ParamKind::String, "keywords to search for"),
                ToolParameter::optional("max_results", ParamKind::Integer, "maximum number of articles (default 5)"),
            ],
            "JSON list of {title, authors, abstract, identifier}",
        )
    }

    fn invoke(&self, args: &ArgumentMap, ctx: &CallContext) -> Result<String, ToolError> {
        let query = required_str(args, "query")?;
        let records = self.lookup(query, max_results(args, 5)?, ctx)?;
        Ok(serde_json::to_string(&records).unwrap_or_else(|_| "[]".into()))
    }
}
