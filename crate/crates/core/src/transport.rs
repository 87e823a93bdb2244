//! HTTP plumbing shared by the network tools and the HTTP model backend.
//!
//! Every outbound request goes through a [`Transport`]. The live transport
//! talks to the network; the replay transport serves committed fixtures keyed
//! by a hash of the request, so the whole test suite runs offline; the record
//! transport forwards to the network and writes each response as a fixture.

use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Duration;

use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Get,
    Post,
}

impl Method {
    fn as_str(self) -> &'static str {
        match self {
            Method::Get => "GET",
            Method::Post => "POST",
        }
    }
}

#[derive(Debug, Clone)]
pub struct HttpRequest {
    pub method: Method,
    pub url: reqwest::Url,
    pub headers: Vec<(String, String)>,
    pub body: Option<String>,
    /// Query parameters that carry credentials. Excluded from the fixture key.
    pub secret_params: Vec<String>,
}

impl HttpRequest {
    pub fn get(url: reqwest::Url) -> Self {
        Self { method: Method::Get, url, headers: Vec::new(), body: None, secret_params: Vec::new() }
    }

    pub fn post_json(url: reqwest::Url, body: &serde_json::Value) -> Self {
        Self {
            method: Method::Post,
            url,
            headers: vec![("Content-Type".into(), "application/json".into())],
            body: Some(body.to_string()),
            secret_params: Vec::new(),
        }
    }

    pub fn header(mut self, name: &str, value: &str) -> Self {
        self.headers.push((name.to_string(), value.to_string()));
        self
    }

    pub fn secret_query(mut self, name: &str, value: &str) -> Self {
        self.url.query_pairs_mut().append_pair(name, value);
        self.secret_params.push(name.to_string());
        self
    }

    /// URL with credential parameters removed.
    pub fn redacted_url(&self) -> String {
        let mut url = self.url.clone();
        let kept: Vec<(String, String)> = self
            .url
            .query_pairs()
            .filter(|(k, _)| !self.secret_params.iter().any(|s| s == k))
            .map(|(k, v)| (k.into_owned(), v.into_owned()))
            .collect();
        if kept.is_empty() {
            url.set_query(None);
        } else {
            url.query_pairs_mut().clear().extend_pairs(kept);
        }
        url.to_string()
    }

    /// Stable fixture key: SHA-256 of method, redacted URL and body. Headers
    /// are not part of the key.
    pub fn fixture_key(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.method.as_str());
        hasher.update(" ");
        hasher.update(self.redacted_url());
        hasher.update("\n");
        hasher.update(self.body.as_deref().unwrap_or(""));
        hex::encode(hasher.finalize())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

impl HttpResponse {
    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("request timed out")]
    Timeout,
    #[error("network error: {0}")]
    Network(String),
    #[error("no recorded fixture {key} for {url}")]
    MissingFixture { key: String, url: String },
}

pub trait Transport: Send + Sync {
    fn send(&self, request: &HttpRequest, timeout: Duration) -> Result<HttpResponse, TransportError>;

    /// Whether requests leave the process. Credentials are only demanded
    /// for live transports.
    fn is_live(&self) -> bool;
}

/// Blocking reqwest transport. The client is created on first use so the
/// transport can be constructed from inside an async runtime.
#[derive(Debug, Default)]
pub struct LiveTransport {
    client: OnceLock<reqwest::blocking::Client>,
}

impl LiveTransport {
    pub fn new() -> Self {
        Self::default()
    }

    fn client(&self) -> &reqwest::blocking::Client {
        self.client.get_or_init(|| {
            reqwest::blocking::Client::builder()
                .user_agent(concat!("athena/", env!("CARGO_PKG_VERSION")))
                .build()
                .unwrap_or_else(|_| reqwest::blocking::Client::new())
        })
    }
}

impl Transport for LiveTransport {
    fn send(&self, request: &HttpRequest, timeout: Duration) -> Result<HttpResponse, TransportError> {
        let mut builder = match request.method {
            Method::Get => self.client().get(request.url.clone()),
            Method::Post => self.client().post(request.url.clone()),
        };
        for (k, v) in &request.headers {
            builder = builder.header(k, v);
        }
        if let Some(body) = &request.body {
            builder = builder.body(body.clone());
        }
        let response = builder.timeout(timeout).send().map_err(map_reqwest)?;
        let status = response.status().as_u16();
        let body = response.text().map_err(map_reqwest)?;
        Ok(HttpResponse { status, body })
    }

    fn is_live(&self) -> bool {
        true
    }
}

fn map_reqwest(e: reqwest::Error) -> TransportError {
    if e.is_timeout() {
        TransportError::Timeout
    } else {
        TransportError::Network(e.to_string())
    }
}

/// Serves `<dir>/<fixture_key>.body` as a 200 response.
#[derive(Debug, Clone)]
pub struct ReplayTransport {
    dir: PathBuf,
}

impl ReplayTransport {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn fixture_path(dir: &Path, request: &HttpRequest) -> PathBuf {
        dir.join(format!("{}.body", request.fixture_key()))
    }
}

impl Transport for ReplayTransport {
    fn send(&self, request: &HttpRequest, _timeout: Duration) -> Result<HttpResponse, TransportError> {
        let path = Self::fixture_path(&self.dir, request);
        match std::fs::read_to_string(&path) {
            Ok(body) => Ok(HttpResponse { status: 200, body }),
            Err(_) => Err(TransportError::MissingFixture {
                key: request.fixture_key(),
                url: request.redacted_url(),
            }),
        }
    }

    fn is_live(&self) -> bool {
        false
    }
}

/// Forwards to a live transport and stores every successful body as a fixture.
#[derive(Debug)]
pub struct RecordTransport {
    inner: LiveTransport,
    dir: PathBuf,
}

impl RecordTransport {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { inner: LiveTransport::new(), dir: dir.into() }
    }
}

impl Transport for RecordTransport {
    fn send(&self, request: &HttpRequest, timeout: Duration) -> Result<HttpResponse, TransportError> {
        let response = self.inner.send(request, timeout)?;
        if response.is_success() {
            let path = ReplayTransport::fixture_path(&self.dir, request);
            if let Err(e) = std::fs::create_dir_all(&self.dir).and_then(|_| std::fs::write(&path, &response.body)) {
                log::warn!("could not record fixture {}: {e}", path.display());
            }
        }
        Ok(response)
    }

    fn is_live(&self) -> bool {
        true
    }
}
