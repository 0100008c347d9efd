use axum::body::Bytes;
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, patch, post, put};
use axum::{Json, Router};
use base64::Engine as _;
use cardloom_core::instruments::imaging::{self, EncodedImage};
use cardloom_core::instruments::{CollageFrame, PlacementSource};
use cardloom_core::session::{
    export_session, import_session, Applied, CanvasNode, GenerationMode, GlobalContext, LassoSelection, StoryEdit,
};
use cardloom_core::{
    AssetId, Card, CardId, Command, FilterKind, Highlight, HighlightId, MultimodalIntent, NarrativeObject, ObjectKind,
    Session, Voice,
};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::ApiError;
use crate::state::AppState;

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session).delete(delete_session))
        .route("/sessions/{id}/context", put(set_context))
        .route("/sessions/{id}/events", get(events))
        .route("/sessions/{id}/generate", post(generate))
        .route("/sessions/{id}/collage", post(collage))
        .route("/sessions/{id}/cards/{cid}", delete(delete_card))
        .route("/sessions/{id}/cards/{cid}/lasso", post(lasso))
        .route("/sessions/{id}/cards/{cid}/collage", post(card_collage))
        .route("/sessions/{id}/cards/{cid}/filter", post(filter))
        .route("/sessions/{id}/cards/{cid}/perspective", post(perspective))
        .route("/sessions/{id}/cards/{cid}/story", patch(edit_story))
        .route("/sessions/{id}/cards/{cid}/objects", put(set_objects))
        .route("/sessions/{id}/cards/{cid}/node", patch(move_card))
        .route("/sessions/{id}/assets/{asset_id}", get(asset))
        .route("/sessions/{id}/highlights", post(add_highlight))
        .route("/sessions/{id}/highlights/{hid}", delete(remove_highlight))
        .route("/sessions/{id}/clusters", get(clusters))
        .route("/sessions/{id}/clusters/{kind}/{name}", get(cluster_entry))
        .route("/sessions/{id}/clusters/{kind}/{name}/summarize", post(summarize))
        .route("/sessions/{id}/metrics", get(metrics))
        .route("/sessions/{id}/export", get(export))
        .route("/import", post(import))
        // Flat forms that name the session in the body.
        .route("/cards/{cid}/story", patch(flat_edit_story))
        .route("/highlights", post(flat_add_highlight))
        .route("/clusters/{name}/summarize", post(flat_summarize))
        .with_state(state)
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> ApiResult<T> {
    payload.map(|Json(v)| v).map_err(ApiError::from)
}

/// Result of a mutating request.
#[derive(Debug, Serialize)]
pub struct Mutation {
    pub seq: u64,
    pub revision: u64,
    pub cards: Vec<Card>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub highlight: Option<Highlight>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub removed_highlights: Vec<HighlightId>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub orphaned: Vec<CardId>,
}

fn mutation_response(applied: Applied, session: &Session) -> Response {
    let cards: Vec<Card> = applied.created.iter().filter_map(|id| session.cards.get(id).cloned()).collect();
    let highlight = applied.highlight.as_ref().and_then(|h| session.highlights.get(h).cloned());
    let status = if cards.is_empty() && highlight.is_none() { StatusCode::OK } else { StatusCode::CREATED };
    let body = Mutation {
        seq: applied.seq,
        revision: session.revision(),
        cards,
        highlight,
        removed_highlights: applied.removed_highlights,
        orphaned: applied.orphaned,
    };
    (status, Json(body)).into_response()
}

async fn run(state: &AppState, id: &str, command: Command, uploads: Vec<EncodedImage>) -> ApiResult<Response> {
    let (applied, session) = state.mutate(id, command, uploads).await?;
    Ok(mutation_response(applied, &session))
}

fn parse_kind(kind: &str) -> ApiResult<ObjectKind> {
    kind.parse().map_err(|_| {
        ApiError::unprocessable("InvalidKind", format!("unknown object kind `{kind}`"))
            .with_detail(json!({ "expected": ObjectKind::ALL.map(ObjectKind::as_str) }))
    })
}

fn decode_upload(encoded: &str) -> ApiResult<EncodedImage> {
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(encoded.trim())
        .map_err(|e| ApiError::bad_request("InvalidBase64", format!("screenshot is not base64: {e}")))?;
    let asset = imaging::describe_png(&bytes)
        .map_err(|e| ApiError::unprocessable("InvalidUpload", format!("screenshot is not a PNG: {e}")))?;
    Ok(EncodedImage { asset, bytes })
}

// -- session lifecycle -------------------------------------------------------

#[derive(Debug, Serialize)]
struct Created {
    session_id: String,
    revision: u64,
}

async fn create_session(State(state): State<AppState>, payload: Option<Json<GlobalContext>>) -> ApiResult<Response> {
    let context = payload.map(|Json(c)| c).unwrap_or_default();
    let slot = state.create(context).await?;
    let session = slot.session.lock().await;
    let body = Created { session_id: session.id.clone(), revision: session.revision() };
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Session>> {
    Ok(Json(state.snapshot(&id).await?))
}

async fn delete_session(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    state.remove(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn set_context(
    State(state): State<AppState>,
    Path(id): Path<String>,
    payload: Result<Json<GlobalContext>, JsonRejection>,
) -> ApiResult<Response> {
    run(&state, &id, Command::SetContext { context: body(payload)? }, Vec::new()).await
}

async fn events(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let session = state.snapshot(&id).await?;
    Ok(Json(session.event_log).into_response())
}

// -- generation and instruments ---------------------------------------------

#[derive(Debug, Deserialize)]
struct GenerateBody {
    mode: GenerationMode,
    #[serde(flatten)]
    intent: MultimodalIntent,
    /// Base64 PNG of a canvas region, stored as the intent's screenshot.
    #[serde(default)]
    screenshot_png: Option<String>,
}

async fn generate(
    State(state): State<AppState>,
    Path(id): Path<String>,
    payload: Result<Json<GenerateBody>, JsonRejection>,
) -> ApiResult<Response> {
    let GenerateBody { mode, mut intent, screenshot_png } = body(payload)?;
    let mut uploads = Vec::new();
    if let Some(encoded) = screenshot_png {
        let upload = decode_upload(&encoded)?;
        intent.screenshot = Some(upload.asset.clone());
        uploads.push(upload);
    }
    run(&state, &id, Command::Generate { mode, intent }, uploads).await
}

async fn lasso(
    State(state): State<AppState>,
    Path((id, cid)): Path<(String, String)>,
    payload: Result<Json<LassoSelection>, JsonRejection>,
) -> ApiResult<Response> {
    run(&state, &id, Command::Lasso { card_id: cid.into(), selection: body(payload)? }, Vec::new()).await
}

#[derive(Debug, Deserialize)]
struct CollageBody {
    #[serde(flatten)]
    frame: CollageFrame,
    #[serde(default)]
    intent_text: Option<String>,
}

async fn collage(
    State(state): State<AppState>,
    Path(id): Path<String>,
    payload: Result<Json<CollageBody>, JsonRejection>,
) -> ApiResult<Response> {
    let CollageBody { frame, intent_text } = body(payload)?;
    run(&state, &id, Command::Collage { frame, intent_text }, Vec::new()).await
}

/// Collage started from one card's context menu; that card must be in the frame.
async fn card_collage(
    State(state): State<AppState>,
    Path((id, cid)): Path<(String, String)>,
    payload: Result<Json<CollageBody>, JsonRejection>,
) -> ApiResult<Response> {
    let CollageBody { frame, intent_text } = body(payload)?;
    let card_id = CardId::from(cid);
    let included = frame
        .placements
        .iter()
        .any(|p| matches!(&p.source, PlacementSource::ImageCrop { card_id: c, .. } if *c == card_id));
    if !included {
        return Err(ApiError::unprocessable(
            "CardNotInFrame",
            format!("card `{card_id}` contributes no crop to the frame"),
        )
        .with_detail(json!({ "card_id": card_id })));
    }
    run(&state, &id, Command::Collage { frame, intent_text }, Vec::new()).await
}

#[derive(Debug, Deserialize)]
struct FilterBody {
    kind: FilterKind,
}

async fn filter(
    State(state): State<AppState>,
    Path((id, cid)): Path<(String, String)>,
    payload: Result<Json<FilterBody>, JsonRejection>,
) -> ApiResult<Response> {
    let FilterBody { kind } = body(payload)?;
    run(&state, &id, Command::Filter { card_id: cid.into(), kind }, Vec::new()).await
}

#[derive(Debug, Deserialize)]
struct PerspectiveBody {
    voice: Voice,
}

async fn perspective(
    State(state): State<AppState>,
    Path((id, cid)): Path<(String, String)>,
    payload: Result<Json<PerspectiveBody>, JsonRejection>,
) -> ApiResult<Response> {
    let PerspectiveBody { voice } = body(payload)?;
    run(&state, &id, Command::Perspective { card_id: cid.into(), voice }, Vec::new()).await
}

// -- card edits ----------------------------------------------------------------

async fn edit_story(
    State(state): State<AppState>,
    Path((id, cid)): Path<(String, String)>,
    payload: Result<Json<StoryEdit>, JsonRejection>,
) -> ApiResult<Response> {
    run(&state, &id, Command::EditStory { card_id: cid.into(), edit: body(payload)? }, Vec::new()).await
}

#[derive(Debug, Deserialize)]
struct ObjectsBody {
    objects: Vec<NarrativeObject>,
}

async fn set_objects(
    State(state): State<AppState>,
    Path((id, cid)): Path<(String, String)>,
    payload: Result<Json<ObjectsBody>, JsonRejection>,
) -> ApiResult<Response> {
    let ObjectsBody { objects } = body(payload)?;
    run(&state, &id, Command::SetObjects { card_id: cid.into(), objects }, Vec::new()).await
}

async fn move_card(
    State(state): State<AppState>,
    Path((id, cid)): Path<(String, String)>,
    payload: Result<Json<CanvasNode>, JsonRejection>,
) -> ApiResult<Response> {
    run(&state, &id, Command::MoveCard { card_id: cid.into(), node: body(payload)? }, Vec::new()).await
}

async fn delete_card(State(state): State<AppState>, Path((id, cid)): Path<(String, String)>) -> ApiResult<Response> {
    run(&state, &id, Command::DeleteCard { card_id: cid.into() }, Vec::new()).await
}

async fn asset(State(state): State<AppState>, Path((id, asset_id)): Path<(String, String)>) -> ApiResult<Response> {
    let slot = state.slot(&id)?;
    let session = slot.session.lock().await;
    let asset_id = AssetId::from(asset_id);
    let bytes = session.assets.get(&asset_id).ok_or_else(|| {
        ApiError::new(StatusCode::NOT_FOUND, "UnknownAsset", format!("no asset `{asset_id}`"))
            .with_detail(json!({ "asset_id": asset_id }))
    })?;
    Ok(([(header::CONTENT_TYPE, "image/png")], Bytes::copy_from_slice(bytes)).into_response())
}

// -- highlights and clusters ----------------------------------------------------

#[derive(Debug, Deserialize)]
struct HighlightBody {
    card_id: CardId,
    start: usize,
    end: usize,
    #[serde(default)]
    object: Option<NarrativeObject>,
    #[serde(default)]
    comment: Option<String>,
}

impl From<HighlightBody> for Command {
    fn from(h: HighlightBody) -> Self {
        Command::AddHighlight { card_id: h.card_id, start: h.start, end: h.end, object: h.object, comment: h.comment }
    }
}

async fn add_highlight(
    State(state): State<AppState>,
    Path(id): Path<String>,
    payload: Result<Json<HighlightBody>, JsonRejection>,
) -> ApiResult<Response> {
    run(&state, &id, body(payload)?.into(), Vec::new()).await
}

async fn remove_highlight(
    State(state): State<AppState>,
    Path((id, hid)): Path<(String, String)>,
) -> ApiResult<Response> {
    run(&state, &id, Command::RemoveHighlight { highlight_id: hid.into() }, Vec::new()).await
}

async fn clusters(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let session = state.snapshot(&id).await?;
    Ok(Json(session.clusters.export()).into_response())
}

async fn cluster_entry(
    State(state): State<AppState>,
    Path((id, kind, name)): Path<(String, String, String)>,
) -> ApiResult<Response> {
    let kind = parse_kind(&kind)?;
    let session = state.snapshot(&id).await?;
    Ok(Json(session.materials(&name, kind)?).into_response())
}

async fn summarize_in(state: &AppState, id: &str, name: &str, kind: ObjectKind) -> ApiResult<Response> {
    // Summaries read the session but do not change it, so work on a copy.
    let session = state.snapshot(id).await?;
    let summary = session.summarize(name, kind, state.orchestrator()).await?;
    Ok(Json(summary).into_response())
}

async fn summarize(
    State(state): State<AppState>,
    Path((id, kind, name)): Path<(String, String, String)>,
) -> ApiResult<Response> {
    let kind = parse_kind(&kind)?;
    summarize_in(&state, &id, &name, kind).await
}

async fn metrics(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let session = state.snapshot(&id).await?;
    Ok(Json(session.metrics()?).into_response())
}

// -- persistence ------------------------------------------------------------------

async fn export(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let session = state.snapshot(&id).await?;
    Ok(Json(export_session(&session)).into_response())
}

async fn import(State(state): State<AppState>, document: Bytes) -> ApiResult<Response> {
    let document =
        std::str::from_utf8(&document).map_err(|_| ApiError::bad_request("BadJson", "document is not UTF-8"))?;
    let session = import_session(document)?;
    let body = Created { session_id: session.id.clone(), revision: session.revision() };
    state.insert(session)?;
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

// -- flat routes ------------------------------------------------------------------

#[derive(Debug, Deserialize)]
struct FlatStoryBody {
    session_id: String,
    #[serde(flatten)]
    edit: StoryEdit,
}

async fn flat_edit_story(
    State(state): State<AppState>,
    Path(cid): Path<String>,
    payload: Result<Json<FlatStoryBody>, JsonRejection>,
) -> ApiResult<Response> {
    let FlatStoryBody { session_id, edit } = body(payload)?;
    run(&state, &session_id, Command::EditStory { card_id: cid.into(), edit }, Vec::new()).await
}

#[derive(Debug, Deserialize)]
struct FlatHighlightBody {
    session_id: String,
    #[serde(flatten)]
    highlight: HighlightBody,
}

async fn flat_add_highlight(
    State(state): State<AppState>,
    payload: Result<Json<FlatHighlightBody>, JsonRejection>,
) -> ApiResult<Response> {
    let FlatHighlightBody { session_id, highlight } = body(payload)?;
    run(&state, &session_id, highlight.into(), Vec::new()).await
}

#[derive(Debug, Deserialize)]
struct FlatSummarizeBody {
    session_id: String,
    kind: ObjectKind,
}

async fn flat_summarize(
    State(state): State<AppState>,
    Path(name): Path<String>,
    payload: Result<Json<FlatSummarizeBody>, JsonRejection>,
) -> ApiResult<Response> {
    let FlatSummarizeBody { session_id, kind } = body(payload)?;
    summarize_in(&state, &session_id, &name, kind).await
}
