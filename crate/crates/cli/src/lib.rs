//! HTTP session service.
//!
//! Every mutating endpoint turns its body into one [`Command`] and appends
//! exactly one event on success. Reads are served from a consistent copy of
//! the session taken under its lock.
//!
//! [`Command`]: cardloom_core::Command

pub mod error;
mod routes;
pub mod state;

use std::path::Path;
use std::time::Duration;

use cardloom_core::orchestrator::{ConfigError, TemplateError, TemplateLibrary};
use cardloom_core::{Orchestrator, ProviderConfig};

pub use error::ApiError;
pub use routes::{router, Mutation};
pub use state::{spawn_sweeper, AppState};

#[derive(Debug, thiserror::Error)]
pub enum StartupError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Templates(#[from] TemplateError),
}

/// Builds the orchestrator from provider settings and an optional template directory.
pub fn build_orchestrator(config: &ProviderConfig, template_dir: Option<&Path>) -> Result<Orchestrator, StartupError> {
    let templates = match template_dir {
        Some(dir) => TemplateLibrary::load_dir(dir)?,
        None => TemplateLibrary::builtin(),
    };
    Ok(Orchestrator::from_config(config, templates)?)
}

/// Service state with mock providers, for tests and local runs.
pub fn mock_state(ttl: Duration) -> AppState {
    AppState::new(Orchestrator::mock(), ttl)
}
