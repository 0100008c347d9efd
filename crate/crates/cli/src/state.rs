//! Session registry and the serialized mutation path.
//!
//! Each session sits behind its own async mutex. A mutation prepares under
//! the lock, releases it while the providers run, then re-locks to commit.
//! If another event landed in between, the commit is stale and the command
//! is prepared again against the newer state.

use std::collections::HashMap;
use std::sync::{Arc, Mutex as StdMutex, RwLock};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use axum::http::StatusCode;
use cardloom_core::instruments::imaging::EncodedImage;
use cardloom_core::session::{Applied, GlobalContext};
use cardloom_core::{Command, Orchestrator, Session, SessionError};
use tokio::sync::Mutex;
use tokio_util::sync::CancellationToken;

use crate::error::ApiError;

/// How many times a generative command is re-prepared after losing a race.
pub const STALE_RETRIES: usize = 3;

pub struct SessionSlot {
    pub session: Mutex<Session>,
    last_used: StdMutex<Instant>,
    /// Cancelled when the session is deleted or expires, aborting in-flight provider calls.
    pub cancel: CancellationToken,
}

impl SessionSlot {
    fn new(session: Session) -> Self {
        Self {
            session: Mutex::new(session),
            last_used: StdMutex::new(Instant::now()),
            cancel: CancellationToken::new(),
        }
    }

    fn touch(&self) {
        *self.last_used.lock().expect("clock lock") = Instant::now();
    }

    fn idle_for(&self, now: Instant) -> Duration {
        now.saturating_duration_since(*self.last_used.lock().expect("clock lock"))
    }
}

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    sessions: RwLock<HashMap<String, Arc<SessionSlot>>>,
    orchestrator: Orchestrator,
    ttl: Duration,
}

pub fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

impl AppState {
    pub fn new(orchestrator: Orchestrator, ttl: Duration) -> Self {
        Self { inner: Arc::new(Inner { sessions: RwLock::new(HashMap::new()), orchestrator, ttl }) }
    }

    pub fn orchestrator(&self) -> &Orchestrator {
        &self.inner.orchestrator
    }

    pub fn ttl(&self) -> Duration {
        self.inner.ttl
    }

    pub fn session_count(&self) -> usize {
        self.inner.sessions.read().expect("registry lock").len()
    }

    pub fn slot(&self, id: &str) -> Result<Arc<SessionSlot>, ApiError> {
        let slot = self.inner.sessions.read().expect("registry lock").get(id).cloned();
        let slot = slot.ok_or_else(|| ApiError::session_not_found(id))?;
        slot.touch();
        Ok(slot)
    }

    /// Creates a session whose first event records the initial context.
    pub async fn create(&self, context: GlobalContext) -> Result<Arc<SessionSlot>, ApiError> {
        let id = uuid::Uuid::new_v4().to_string();
        let mut session = Session::new(id.clone());
        session.execute(Command::Open { context }, &self.inner.orchestrator, Vec::new(), now_ms()).await?;
        self.insert(session)
    }

    /// Registers an existing session, e.g. one just imported.
    pub fn insert(&self, session: Session) -> Result<Arc<SessionSlot>, ApiError> {
        let id = session.id.clone();
        let mut sessions = self.inner.sessions.write().expect("registry lock");
        if sessions.contains_key(&id) {
            return Err(ApiError::new(StatusCode::CONFLICT, "SessionExists", format!("session `{id}` already exists"))
                .with_detail(serde_json::json!({ "session_id": id })));
        }
        let slot = Arc::new(SessionSlot::new(session));
        sessions.insert(id, slot.clone());
        Ok(slot)
    }

    pub fn remove(&self, id: &str) -> Result<(), ApiError> {
        let slot = self.inner.sessions.write().expect("registry lock").remove(id);
        let slot = slot.ok_or_else(|| ApiError::session_not_found(id))?;
        slot.cancel.cancel();
        Ok(())
    }

    /// Drops sessions idle for longer than the TTL. Returns how many went.
    pub fn sweep_expired(&self) -> usize {
        let now = Instant::now();
        let ttl = self.inner.ttl;
        let mut sessions = self.inner.sessions.write().expect("registry lock");
        let expired: Vec<String> =
            sessions.iter().filter(|(_, slot)| slot.idle_for(now) > ttl).map(|(id, _)| id.clone()).collect();
        for id in &expired {
            if let Some(slot) = sessions.remove(id) {
                slot.cancel.cancel();
                tracing::info!(session = %id, "session expired");
            }
        }
        expired.len()
    }

    /// Runs `command` against session `id` and returns what it changed
    /// along with the session state right after the commit.
    pub async fn mutate(
        &self,
        id: &str,
        command: Command,
        uploads: Vec<EncodedImage>,
    ) -> Result<(Applied, Session), ApiError> {
        let slot = self.slot(id)?;
        let orchestrator = &self.inner.orchestrator;
        for _ in 0..STALE_RETRIES {
            let prepared = {
                let mut session = slot.session.lock().await;
                let prepared = session.prepare(&command, &uploads)?;
                if prepared.plans.is_empty() {
                    // nothing to generate, so commit while still holding the lock
                    let applied = session.commit(command, prepared, Vec::new(), uploads, now_ms())?;
                    return Ok((applied, session.clone()));
                }
                prepared
            };

            let generated = tokio::select! {
                result = orchestrator.generate_all(&prepared.plans) => result.map_err(SessionError::from)?,
                _ = slot.cancel.cancelled() => return Err(ApiError::session_not_found(id)),
            };

            let mut session = slot.session.lock().await;
            if slot.cancel.is_cancelled() {
                return Err(ApiError::session_not_found(id));
            }
            match session.commit(command.clone(), prepared, generated, uploads.clone(), now_ms()) {
                Ok(applied) => return Ok((applied, session.clone())),
                Err(SessionError::Stale) => {
                    tracing::debug!(session = %id, command = command.name(), "stale commit, preparing again");
                    continue;
                }
                Err(e) => return Err(e.into()),
            }
        }
        Err(SessionError::Stale.into())
    }

    /// A consistent copy of the session for read-only endpoints.
    pub async fn snapshot(&self, id: &str) -> Result<Session, ApiError> {
        let slot = self.slot(id)?;
        let session = slot.session.lock().await;
        Ok(session.clone())
    }
}

/// Periodically expires idle sessions until `shutdown` fires.
pub fn spawn_sweeper(state: AppState, shutdown: CancellationToken) -> tokio::task::JoinHandle<()> {
    let period = (state.ttl() / 4).clamp(Duration::from_millis(50), Duration::from_secs(60));
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(period);
        loop {
            tokio::select! {
                _ = tick.tick() => { state.sweep_expired(); }
                _ = shutdown.cancelled() => break,
            }
        }
    })
}
