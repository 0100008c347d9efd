use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::time::Duration;

use cardloom_core::ProviderConfig;
use cardloom_server::{build_orchestrator, router, spawn_sweeper, AppState};
use clap::Parser;
use tokio_util::sync::CancellationToken;

/// Serves the card session API.
#[derive(Debug, Parser)]
#[command(name = "cardloom", version)]
struct Args {
    #[arg(long, default_value_t = 8080, env = "PORT")]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: IpAddr,
    /// Use deterministic mock providers instead of the configured endpoints.
    #[arg(long)]
    mock: bool,
    /// Directory of prompt templates that override the built-in set.
    #[arg(long)]
    template_dir: Option<PathBuf>,
    /// Idle lifetime of a session, in seconds.
    #[arg(long, default_value_t = 3600)]
    session_ttl: u64,
}

async fn run(args: Args) -> Result<(), Box<dyn std::error::Error>> {
    // --mock wins over the environment, before endpoint validation runs.
    let config = ProviderConfig::from_lookup(|key| match key {
        "MOCK_MODE" if args.mock => Some("1".to_owned()),
        _ => std::env::var(key).ok(),
    })?;
    let orchestrator = build_orchestrator(&config, args.template_dir.as_deref())?;
    let state = AppState::new(orchestrator, Duration::from_secs(args.session_ttl.max(1)));

    let shutdown = CancellationToken::new();
    let sweeper = spawn_sweeper(state.clone(), shutdown.clone());
    let addr = SocketAddr::new(args.host, args.port);
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, mock = config.mock, "listening");

    let stop = shutdown.clone();
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async move {
            let _ = tokio::signal::ctrl_c().await;
            stop.cancel();
        })
        .await?;
    shutdown.cancel();
    sweeper.await?;
    Ok(())
}

#[tokio::main]
async fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .init();
    if let Err(e) = run(Args::parse()).await {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
