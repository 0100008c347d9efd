use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::card::InstrumentKind;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("{0} must be set unless MOCK_MODE=1")]
    MissingEndpoint(&'static str),
    #[error("{name} is not an http(s) URL: {value}")]
    BadUrl { name: &'static str, value: String },
    #[error("timeout must be positive and finite")]
    BadTimeout,
    #[error("{name}: {message}")]
    BadValue { name: &'static str, message: String },
}

/// Provider endpoints, credentials and call policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub text_endpoint: Option<String>,
    pub image_endpoint: Option<String>,
    /// Name of the environment variable holding the bearer token. The token
    /// itself never lives in the config.
    pub api_key_env: String,
    /// Per-instrument text endpoints that override `text_endpoint`.
    #[serde(default)]
    pub text_routes: BTreeMap<InstrumentKind, String>,
    pub mock: bool,
    pub timeout_secs: f64,
    /// Extra text-agent attempts after a malformed reply.
    pub retry_limit: u32,
    pub mock_image_side: u32,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            text_endpoint: None,
            image_endpoint: None,
            api_key_env: "PROVIDER_API_KEY".into(),
            text_routes: BTreeMap::new(),
            mock: false,
            timeout_secs: 60.0,
            retry_limit: 2,
            mock_image_side: super::mock::DEFAULT_MOCK_IMAGE_SIDE,
        }
    }
}

fn truthy(v: &str) -> bool {
    matches!(v.trim().to_ascii_lowercase().as_str(), "1" | "true" | "yes" | "on")
}

impl ProviderConfig {
    pub fn mock() -> Self {
        Self { mock: true, ..Self::default() }
    }

    /// Reads `TEXT_PROVIDER_URL`, `IMAGE_PROVIDER_URL`, `MOCK_MODE`,
    /// `PROVIDER_TIMEOUT_SECS`, `PROVIDER_RETRY_LIMIT` and
    /// `TEXT_PROVIDER_URL_<INSTRUMENT>` (e.g. `TEXT_PROVIDER_URL_LASSO`).
    pub fn from_env() -> Result<Self, ConfigError> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn from_lookup(get: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let non_empty = |k: &str| get(k).filter(|v| !v.trim().is_empty());
        cfg.text_endpoint = non_empty("TEXT_PROVIDER_URL");
        cfg.image_endpoint = non_empty("IMAGE_PROVIDER_URL");
        cfg.mock = non_empty("MOCK_MODE").is_some_and(|v| truthy(&v));
        if let Some(t) = non_empty("PROVIDER_TIMEOUT_SECS") {
            cfg.timeout_secs = t.trim().parse().map_err(|_| ConfigError::BadTimeout)?;
        }
        if let Some(r) = non_empty("PROVIDER_RETRY_LIMIT") {
            cfg.retry_limit = r.trim().parse().map_err(|e: std::num::ParseIntError| ConfigError::BadValue {
                name: "PROVIDER_RETRY_LIMIT",
                message: e.to_string(),
            })?;
        }
        for kind in InstrumentKind::ALL {
            let key = format!("TEXT_PROVIDER_URL_{}", kind.as_str().to_ascii_uppercase());
            if let Some(url) = non_empty(&key) {
                cfg.text_routes.insert(kind, url);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return Err(ConfigError::BadTimeout);
        }
        if self.mock_image_side == 0 {
            return Err(ConfigError::BadValue { name: "mock_image_side", message: "must be positive".into() });
        }
        let check = |name: &'static str, url: &str| {
            if url.starts_with("http://") || url.starts_with("https://") {
                Ok(())
            } else {
                Err(ConfigError::BadUrl { name, value: url.to_owned() })
            }
        };
        for url in self.text_routes.values() {
            check("TEXT_PROVIDER_URL_<INSTRUMENT>", url)?;
        }
        if self.mock {
            return Ok(());
        }
        match &self.text_endpoint {
            Some(url) => check("TEXT_PROVIDER_URL", url)?,
            None => return Err(ConfigError::MissingEndpoint("TEXT_PROVIDER_URL")),
        }
        match &self.image_endpoint {
            Some(url) => check("IMAGE_PROVIDER_URL", url)?,
            None => return Err(ConfigError::MissingEndpoint("IMAGE_PROVIDER_URL")),
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }

    pub fn api_key(&self) -> Option<String> {
        std::env::var(&self.api_key_env).ok().filter(|k| !k.is_empty())
    }
}
