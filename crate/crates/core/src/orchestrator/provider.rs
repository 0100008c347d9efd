//! Provider abstraction and the HTTP implementation of the wire contract.
//!
//! Text providers receive a [`TextCall`] and answer `{"reply": "<raw text>"}`.
//! Image providers receive an [`ImageAgentRequest`] and answer
//! `{"png_base64": "..."}`. Binary fields travel as standard base64.

use std::collections::BTreeMap;
use std::time::Duration;

use async_trait::async_trait;
use base64::Engine as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::card::InstrumentKind;
use crate::cluster::SummaryRequest;
use crate::instruments::GenerationRequest;

/// Bytes that serialize as a base64 string.
#[derive(Clone, PartialEq, Eq, Default)]
pub struct Blob(pub Vec<u8>);

impl std::fmt::Debug for Blob {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Blob({} bytes)", self.0.len())
    }
}

impl Serialize for Blob {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&base64::engine::general_purpose::STANDARD.encode(&self.0))
    }
}

impl<'de> Deserialize<'de> for Blob {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        base64::engine::general_purpose::STANDARD.decode(s.as_bytes()).map(Blob).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "body", rename_all = "snake_case")]
pub enum CallPayload {
    Generation(Box<GenerationRequest>),
    Summary(SummaryRequest),
}

/// One text-agent call: rendered prompt plus the structured request behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextCall {
    pub template_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<InstrumentKind>,
    pub prompt: String,
    pub payload: CallPayload,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub images: Vec<Blob>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageMode {
    /// A sketch fixes the composition.
    SketchScaffold,
    /// Reference images anchor the content.
    ReferenceAnchor,
    /// Prompt only.
    Free,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageAgentRequest {
    pub consolidated_prompt: String,
    pub mode: ImageMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaffold: Option<Blob>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub references: Vec<Blob>,
    pub style_controls: String,
}

impl ImageAgentRequest {
    /// Checks that the mode has the inputs it needs.
    pub fn check_mode(&self) -> Result<(), String> {
        match self.mode {
            ImageMode::SketchScaffold if self.scaffold.is_none() => {
                Err("sketch_scaffold mode requires a scaffold".into())
            }
            ImageMode::ReferenceAnchor if self.references.is_empty() => {
                Err("reference_anchor mode requires at least one reference image".into())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderError {
    #[error("provider timed out after {0:?}")]
    Timeout(Duration),
    #[error("provider rate limited the request")]
    RateLimited { retry_after_secs: Option<u64> },
    #[error("provider returned HTTP {0}")]
    Status(u16),
    #[error("provider unreachable: {0}")]
    Transport(String),
    #[error("provider response malformed: {0}")]
    BadResponse(String),
}

#[async_trait]
pub trait TextProvider: Send + Sync {
    async fn complete(&self, call: &TextCall) -> Result<String, ProviderError>;
}

#[async_trait]
pub trait ImageProvider: Send + Sync {
    /// Returns PNG bytes.
    async fn render(&self, request: &ImageAgentRequest) -> Result<Vec<u8>, ProviderError>;
}

fn map_reqwest(e: reqwest::Error, timeout: Duration) -> ProviderError {
    if e.is_timeout() {
        ProviderError::Timeout(timeout)
    } else {
        ProviderError::Transport(e.without_url().to_string())
    }
}

async fn post_json<B: Serialize + ?Sized>(
    client: &reqwest::Client,
    url: &str,
    api_key: Option<&str>,
    body: &B,
    timeout: Duration,
) -> Result<serde_json::Value, ProviderError> {
    let mut req = client.post(url).timeout(timeout).json(body);
    if let Some(key) = api_key {
        req = req.bearer_auth(key);
    }
    let resp = req.send().await.map_err(|e| map_reqwest(e, timeout))?;
    let status = resp.status();
    if status.as_u16() == 429 {
        let retry_after_secs =
            resp.headers().get(reqwest::header::RETRY_AFTER).and_then(|v| v.to_str().ok()).and_then(|v| v.parse().ok());
        return Err(ProviderError::RateLimited { retry_after_secs });
    }
    if !status.is_success() {
        return Err(ProviderError::Status(status.as_u16()));
    }
    resp.json().await.map_err(|e| ProviderError::BadResponse(e.without_url().to_string()))
}

/// Text provider speaking the JSON wire contract, with optional per-instrument routes.
pub struct HttpTextProvider {
    client: reqwest::Client,
    default_url: String,
    routes: BTreeMap<InstrumentKind, String>,
    api_key: Option<String>,
    timeout: Duration,
}

impl HttpTextProvider {
    pub fn new(
        default_url: impl Into<String>,
        routes: BTreeMap<InstrumentKind, String>,
        api_key: Option<String>,
        timeout: Duration,
    ) -> Self {
        Self { client: reqwest::Client::new(), default_url: default_url.into(), routes, api_key, timeout }
    }

    fn url_for(&self, call: &TextCall) -> &str {
        call.mode.and_then(|m| self.routes.get(&m)).unwrap_or(&self.default_url)
    }
}

#[async_trait]
impl TextProvider for HttpTextProvider {
    async fn complete(&self, call: &TextCall) -> Result<String, ProviderError> {
        let body = post_json(&self.client, self.url_for(call), self.api_key.as_deref(), call, self.timeout).await?;
        body.get("reply")
            .and_then(|r| r.as_str())
            .map(str::to_owned)
            .ok_or_else(|| ProviderError::BadResponse("missing `reply` string".into()))
    }
}

pub struct HttpImageProvider {
    client: reqwest::Client,
    url: String,
    api_key: Option<String>,
    timeout: Duration,
}

impl HttpImageProvider {
    pub fn new(url: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Self {
        Self { client: reqwest::Client::new(), url: url.into(), api_key, timeout }
    }
}

#[async_trait]
impl ImageProvider for HttpImageProvider {
    async fn render(&self, request: &ImageAgentRequest) -> Result<Vec<u8>, ProviderError> {
        let body = post_json(&self.client, &self.url, self.api_key.as_deref(), request, self.timeout).await?;
        let encoded = body
            .get("png_base64")
            .and_then(|r| r.as_str())
            .ok_or_else(|| ProviderError::BadResponse("missing `png_base64` string".into()))?;
        base64::engine::general_purpose::STANDARD.decode(encoded).map_err(|e| ProviderError::BadResponse(e.to_string()))
    }
}
