//! Two-agent generation pipeline.
//!
//! A generation runs the text agent first; its reply (story, intention and
//! any sketch guidance) is folded into one consolidated prompt for the image
//! agent. Malformed text replies are retried with a corrective nudge up to
//! the configured limit. Every provider call is bounded by a timeout.

mod config;
pub mod mock;
pub mod provider;
mod reply;
mod template;

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::cluster::SummaryRequest;
use crate::instruments::{imaging, EncodedImage, GenerationPlan, ImageInputs};

pub use config::{ConfigError, ProviderConfig};
pub use provider::{
    Blob, CallPayload, HttpImageProvider, HttpTextProvider, ImageAgentRequest, ImageMode, ImageProvider, ProviderError,
    TextCall, TextProvider,
};
pub use reply::{
    parse_summary_reply, parse_text_reply, strip_fence, ReplyError, SummaryReply, TextAgentReply, INSUFFICIENT_MATERIAL,
};
pub use template::{has_marker, PromptTemplate, TemplateError, TemplateLibrary, KNOWN_SLOTS};

/// Appended to the prompt when the previous reply did not parse.
pub const RETRY_NUDGE: &str = "Respond with valid JSON only.";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OrchestratorError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("provider call exceeded {timeout:?} (elapsed {elapsed:?})")]
    ProviderTimeout { elapsed: Duration, timeout: Duration },
    #[error("provider rate limited the request")]
    RateLimited { retry_after_secs: Option<u64> },
    #[error("provider failure: {0}")]
    Provider(String),
    #[error("text agent reply invalid after {attempts} attempts: {cause}")]
    Schema { attempts: u32, cause: ReplyError },
    #[error("image request violates its mode: {0}")]
    ModeConstraintViolation(String),
    #[error("image agent returned an unusable image: {0}")]
    InvalidImage(String),
}

impl OrchestratorError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            OrchestratorError::Template(TemplateError::MissingSlot(_)) => "MissingSlot",
            OrchestratorError::Template(_) => "TemplateError",
            OrchestratorError::ProviderTimeout { .. } => "ProviderTimeout",
            OrchestratorError::RateLimited { .. } => "RateLimited",
            OrchestratorError::Provider(_) => "ProviderError",
            OrchestratorError::Schema { .. } => "SchemaError",
            OrchestratorError::ModeConstraintViolation(_) => "ModeConstraintViolation",
            OrchestratorError::InvalidImage(_) => "InvalidImage",
        }
    }

    fn from_provider(e: ProviderError, timeout: Duration, elapsed: Duration) -> Self {
        match e {
            ProviderError::Timeout(_) => OrchestratorError::ProviderTimeout { elapsed: elapsed.max(timeout), timeout },
            ProviderError::RateLimited { retry_after_secs } => OrchestratorError::RateLimited { retry_after_secs },
            other => OrchestratorError::Provider(other.to_string()),
        }
    }
}

/// Text reply plus the stored image for one plan.
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub reply: TextAgentReply,
    pub image: EncodedImage,
}

/// Image-agent mode implied by the inputs an instrument chose.
pub fn image_mode(inputs: &ImageInputs) -> ImageMode {
    if inputs.scaffold.is_some() {
        ImageMode::SketchScaffold
    } else if !inputs.references.is_empty() {
        ImageMode::ReferenceAnchor
    } else {
        ImageMode::Free
    }
}

/// Folds the text reply and style controls into the image prompt.
pub fn consolidate_prompt(reply: &TextAgentReply, mode: ImageMode, style_controls: &str) -> String {
    let mut out = format!("Intent: {}\nStory: {}", reply.intention.trim(), reply.story.trim());
    if reply.has_sketch() {
        out.push_str(&format!("\nLayout: {}", reply.sketch_information.trim()));
    }
    match mode {
        ImageMode::SketchScaffold => {
            out.push_str("\nComposition: keep the sketch's arrangement, render it fully; do not trace its lines")
        }
        ImageMode::ReferenceAnchor => {
            out.push_str("\nReferences: keep their key content recognizable; vary rather than copy them")
        }
        ImageMode::Free => {}
    }
    if !style_controls.trim().is_empty() {
        out.push_str(&format!("\nStyle: {}", style_controls.trim()));
    }
    out
}

pub fn image_request(reply: &TextAgentReply, inputs: &ImageInputs) -> ImageAgentRequest {
    let mode = image_mode(inputs);
    ImageAgentRequest {
        consolidated_prompt: consolidate_prompt(reply, mode, &inputs.style_controls),
        mode,
        scaffold: inputs.scaffold.clone().map(Blob),
        references: inputs.references.iter().cloned().map(Blob).collect(),
        style_controls: inputs.style_controls.clone(),
    }
}

#[derive(Clone)]
pub struct Orchestrator {
    text: Arc<dyn TextProvider>,
    image: Arc<dyn ImageProvider>,
    templates: Arc<TemplateLibrary>,
    timeout: Duration,
    retry_limit: u32,
}

impl std::fmt::Debug for Orchestrator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Orchestrator")
            .field("templates", &self.templates.version)
            .field("timeout", &self.timeout)
            .field("retry_limit", &self.retry_limit)
            .finish_non_exhaustive()
    }
}

impl Orchestrator {
    pub fn new(text: Arc<dyn TextProvider>, image: Arc<dyn ImageProvider>, templates: TemplateLibrary) -> Self {
        Self { text, image, templates: Arc::new(templates), timeout: Duration::from_secs(60), retry_limit: 2 }
    }

    /// Deterministic mock providers with the built-in templates.
    pub fn mock() -> Self {
        Self::new(
            Arc::new(mock::MockTextProvider),
            Arc::new(mock::MockImageProvider::default()),
            TemplateLibrary::builtin(),
        )
    }

    pub fn from_config(config: &ProviderConfig, templates: TemplateLibrary) -> Result<Self, ConfigError> {
        config.validate()?;
        let orch = if config.mock {
            let side = config.mock_image_side;
            Self::new(
                Arc::new(mock::MockTextProvider),
                Arc::new(mock::MockImageProvider { width: side, height: side }),
                templates,
            )
        } else {
            let key = config.api_key();
            let text = HttpTextProvider::new(
                config.text_endpoint.clone().unwrap_or_default(),
                config.text_routes.clone(),
                key.clone(),
                config.timeout(),
            );
            let image =
                HttpImageProvider::new(config.image_endpoint.clone().unwrap_or_default(), key, config.timeout());
            Self::new(Arc::new(text), Arc::new(image), templates)
        };
        Ok(orch.with_timeout(config.timeout()).with_retry_limit(config.retry_limit))
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn with_retry_limit(mut self, retry_limit: u32) -> Self {
        self.retry_limit = retry_limit;
        self
    }

    pub fn templates(&self) -> &TemplateLibrary {
        &self.templates
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    async fn call_text(&self, call: &TextCall) -> Result<String, OrchestratorError> {
        let start = Instant::now();
        match tokio::time::timeout(self.timeout, self.text.complete(call)).await {
            Ok(Ok(raw)) => Ok(raw),
            Ok(Err(e)) => Err(OrchestratorError::from_provider(e, self.timeout, start.elapsed())),
            Err(_) => Err(OrchestratorError::ProviderTimeout { elapsed: start.elapsed(), timeout: self.timeout }),
        }
    }

    /// Calls the text agent until `parse` accepts the reply or the retry
    /// budget runs out. Provider errors are not retried.
    async fn run_with_retries<T>(
        &self,
        mut call: TextCall,
        parse: impl Fn(&str) -> Result<T, ReplyError>,
    ) -> Result<T, OrchestratorError> {
        let base_prompt = call.prompt.clone();
        let attempts = self.retry_limit + 1;
        let mut last = None;
        for attempt in 0..attempts {
            if attempt > 0 {
                call.prompt = format!("{base_prompt}\n\n{RETRY_NUDGE}");
            }
            let raw = self.call_text(&call).await?;
            match parse(&raw) {
                Ok(v) => return Ok(v),
                Err(e) => {
                    tracing::debug!(attempt, code = e.code(), "text agent reply rejected");
                    last = Some(e);
                }
            }
        }
        Err(OrchestratorError::Schema { attempts, cause: last.expect("at least one attempt") })
    }

    pub async fn run_text_agent(&self, plan: &GenerationPlan) -> Result<TextAgentReply, OrchestratorError> {
        let prompt = self.templates.assemble_prompt(&plan.template_id, &plan.slots)?;
        let call = TextCall {
            template_id: plan.template_id.clone(),
            mode: Some(plan.request.mode),
            prompt,
            payload: CallPayload::Generation(Box::new(plan.request.clone())),
            images: plan.text_images.iter().cloned().map(Blob).collect(),
        };
        self.run_with_retries(call, parse_text_reply).await
    }

    pub async fn run_image_agent(&self, request: &ImageAgentRequest) -> Result<EncodedImage, OrchestratorError> {
        request.check_mode().map_err(OrchestratorError::ModeConstraintViolation)?;
        let start = Instant::now();
        let bytes = match tokio::time::timeout(self.timeout, self.image.render(request)).await {
            Ok(Ok(bytes)) => bytes,
            Ok(Err(e)) => return Err(OrchestratorError::from_provider(e, self.timeout, start.elapsed())),
            Err(_) => {
                return Err(OrchestratorError::ProviderTimeout { elapsed: start.elapsed(), timeout: self.timeout })
            }
        };
        let asset = imaging::describe_png(&bytes).map_err(|e| OrchestratorError::InvalidImage(e.to_string()))?;
        Ok(EncodedImage { asset, bytes })
    }

    /// Text agent, then image agent, for one plan.
    pub async fn generate(&self, plan: &GenerationPlan) -> Result<Generated, OrchestratorError> {
        let reply = self.run_text_agent(plan).await?;
        let image = self.run_image_agent(&image_request(&reply, &plan.image)).await?;
        Ok(Generated { reply, image })
    }

    /// Runs independent plans concurrently; fails if any plan fails.
    pub async fn generate_all(&self, plans: &[GenerationPlan]) -> Result<Vec<Generated>, OrchestratorError> {
        futures::future::try_join_all(plans.iter().map(|p| self.generate(p))).await
    }

    /// Asks the text agent for a structured element summary. Without any
    /// material the provider is not called.
    pub async fn summarize(&self, request: &SummaryRequest) -> Result<SummaryReply, OrchestratorError> {
        if request.segments.is_empty() && request.comments.is_empty() {
            let none = INSUFFICIENT_MATERIAL.to_owned();
            return Ok(SummaryReply { settings: none.clone(), description: none.clone(), plot: none });
        }
        let passages = request.segments.iter().map(|s| format!("- {}", s.snapshot)).collect::<Vec<_>>().join("\n");
        let comments = request.comments.iter().map(|c| format!("- {}", c.text)).collect::<Vec<_>>().join("\n");
        let slots: BTreeMap<String, String> = [
            ("text", passages),
            ("previous_text", comments),
            ("full_text", String::new()),
            ("global_theme", request.global_theme.clone()),
            (
                "instruction",
                format!(
                    "Summarize the {} \"{}\" in three sections.",
                    request.object.kind.as_str(),
                    request.object.name
                ),
            ),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_owned(), v))
        .collect();
        let call = TextCall {
            template_id: "summarize".into(),
            mode: None,
            prompt: self.templates.assemble_prompt("summarize", &slots)?,
            payload: CallPayload::Summary(request.clone()),
            images: Vec::new(),
        };
        self.run_with_retries(call, parse_summary_reply).await
    }
}
