use std::time::Duration;

use axum::body::{to_bytes, Body};
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use base64::Engine as _;
use cardloom_core::instruments::imaging;
use cardloom_server::{mock_state, router, AppState};
use serde_json::{json, Value};
use tower::ServiceExt;

struct Api {
    app: Router,
    state: AppState,
}

impl Api {
    fn new() -> Self {
        let state = mock_state(Duration::from_secs(600));
        Self { app: router(state.clone()), state }
    }

    async fn call(&self, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let mut req = Request::builder().method(method).uri(uri);
        let body = match body {
            Some(v) => {
                req = req.header("content-type", "application/json");
                Body::from(v.to_string())
            }
            None => Body::empty(),
        };
        self.raw(req.body(body).unwrap()).await
    }

    async fn raw(&self, req: Request<Body>) -> (StatusCode, Value) {
        let res = self.app.clone().oneshot(req).await.unwrap();
        let status = res.status();
        let bytes = to_bytes(res.into_body(), usize::MAX).await.unwrap();
        let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap_or(Value::Null) };
        (status, value)
    }

    async fn get(&self, uri: &str) -> (StatusCode, Value) {
        self.call(Method::GET, uri, None).await
    }

    async fn post(&self, uri: &str, body: Value) -> (StatusCode, Value) {
        self.call(Method::POST, uri, Some(body)).await
    }

    async fn session(&self) -> String {
        let (status, v) = self.post("/sessions", json!({"theme": "a harbor town"})).await;
        assert_eq!(status, StatusCode::CREATED);
        v["session_id"].as_str().unwrap().to_owned()
    }

    async fn event_count(&self, sid: &str) -> usize {
        self.get(&format!("/sessions/{sid}/events")).await.1.as_array().unwrap().len()
    }

    async fn first_card(&self, sid: &str, text: &str) -> Value {
        let (status, v) =
            self.post(&format!("/sessions/{sid}/generate"), json!({"mode": "exact_craft", "typed_text": text})).await;
        assert_eq!(status, StatusCode::CREATED, "{v}");
        v["cards"][0].clone()
    }
}

fn assert_error(v: &Value, code: &str) {
    assert_eq!(v["code"], code, "{v}");
    assert!(v["message"].is_string());
    assert!(v.get("detail").is_some());
}

#[tokio::test]
async fn creative_spark_returns_three_cards() {
    let api = Api::new();
    let sid = api.session().await;
    let (status, v) = api
        .post(&format!("/sessions/{sid}/generate"), json!({"mode": "creative_spark", "typed_text": "Maya waits"}))
        .await;
    assert_eq!(status, StatusCode::CREATED);
    let cards = v["cards"].as_array().unwrap();
    assert_eq!(cards.len(), 3);
    let mut axes: Vec<&str> = cards.iter().map(|c| c["variation"].as_str().unwrap()).collect();
    axes.sort();
    assert_eq!(axes, ["character", "object", "setting"]);
    assert_eq!(api.event_count(&sid).await, 2);
}

#[tokio::test]
async fn fresh_session_has_zero_metrics() {
    let api = Api::new();
    let sid = api.session().await;
    let (status, v) = api.get(&format!("/sessions/{sid}/metrics")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v, json!({"directions": 0, "mean_branches": 0.0, "mean_depth": 0.0}));
}

#[tokio::test]
async fn bad_lasso_range_is_422_and_appends_nothing() {
    let api = Api::new();
    let sid = api.session().await;
    let card = api.first_card(&sid, "Claire at the gate").await;
    let before = api.event_count(&sid).await;
    let uri = format!("/sessions/{sid}/cards/{}/lasso", card["id"].as_str().unwrap());
    let (status, v) = api.post(&uri, json!({"target": "text", "start": 4, "end": 4})).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_error(&v, "EmptyRange");
    assert_eq!(api.event_count(&sid).await, before);
}

#[tokio::test]
async fn instrument_chain_builds_provenance() {
    let api = Api::new();
    let sid = api.session().await;
    let card = api.first_card(&sid, "Claire holds the brass clasp").await;
    let cid = card["id"].as_str().unwrap();

    let (status, v) =
        api.post(&format!("/sessions/{sid}/cards/{cid}/lasso"), json!({"target": "text", "start": 0, "end": 6})).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    let lassoed = v["cards"][0]["id"].as_str().unwrap().to_owned();
    assert_eq!(v["cards"][0]["origin"], "lasso");

    let polygon = json!([{"x": 4.0, "y": 4.0}, {"x": 40.0, "y": 6.0}, {"x": 20.0, "y": 40.0}]);
    let (status, v) =
        api.post(&format!("/sessions/{sid}/cards/{cid}/lasso"), json!({"target": "image", "polygon": polygon})).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");

    let (status, v) = api.post(&format!("/sessions/{sid}/cards/{lassoed}/filter"), json!({"kind": "dramatic"})).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    assert_eq!(v["cards"][0]["filter"], "dramatic");

    let (status, v) =
        api.post(&format!("/sessions/{sid}/cards/{lassoed}/perspective"), json!({"voice": "third"})).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_error(&v, "SameVoice");
    let (status, _) =
        api.post(&format!("/sessions/{sid}/cards/{lassoed}/perspective"), json!({"voice": "second"})).await;
    assert_eq!(status, StatusCode::CREATED);

    let crop = |id: &str, x: f64| json!({"source": {"type": "image_crop", "card_id": id, "rect": {"x": 0, "y": 0, "width": 10, "height": 10}}, "position": {"x": x, "y": 0.2}, "size": {"w": 0.3, "h": 0.3}});
    let frame = json!({"placements": [crop(cid, 0.1), crop(&lassoed, 0.6)], "intent_text": "together"});
    let (status, v) = api.post(&format!("/sessions/{sid}/cards/{cid}/collage"), frame).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    let collage = v["cards"][0]["id"].as_str().unwrap().to_owned();

    let (_, s) = api.get(&format!("/sessions/{sid}")).await;
    let parents: Vec<&str> = s["graph"]["edges"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|e| e["child"] == collage.as_str())
        .map(|e| e["parent"].as_str().unwrap())
        .collect();
    assert_eq!(parents.len(), 2);
    assert_eq!(s["cards"].as_object().unwrap().len(), 6);

    let (_, m) = api.get(&format!("/sessions/{sid}/metrics")).await;
    assert_eq!(m["directions"], 1);
}

#[tokio::test]
async fn collage_from_a_card_must_include_it() {
    let api = Api::new();
    let sid = api.session().await;
    let a = api.first_card(&sid, "one").await;
    let b = api.first_card(&sid, "two").await;
    let frame = json!({"placements": [{"source": {"type": "image_crop", "card_id": b["id"], "rect": {"x": 0, "y": 0, "width": 4, "height": 4}}, "position": {"x": 0.1, "y": 0.1}, "size": {"w": 0.2, "h": 0.2}}]});
    let (status, v) = api.post(&format!("/sessions/{sid}/cards/{}/collage", a["id"].as_str().unwrap()), frame).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_error(&v, "CardNotInFrame");
}

#[tokio::test]
async fn screenshot_upload_becomes_an_asset() {
    let api = Api::new();
    let sid = api.session().await;
    let shot = imaging::solid_png(12, 8, [9, 8, 7]).unwrap();
    let encoded = base64::engine::general_purpose::STANDARD.encode(&shot.bytes);
    let (status, v) =
        api.post(&format!("/sessions/{sid}/generate"), json!({"mode": "exact_craft", "screenshot_png": encoded})).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    let uri = format!("/sessions/{sid}/assets/{}", shot.asset.asset_id);
    let res = api.app.clone().oneshot(Request::get(&uri).body(Body::empty()).unwrap()).await.unwrap();
    assert_eq!(res.status(), StatusCode::OK);
    assert_eq!(res.headers()["content-type"], "image/png");
    assert_eq!(to_bytes(res.into_body(), usize::MAX).await.unwrap().as_ref(), shot.bytes.as_slice());

    let (status, v) =
        api.post(&format!("/sessions/{sid}/generate"), json!({"mode": "exact_craft", "screenshot_png": "%%%"})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_error(&v, "InvalidBase64");
}

#[tokio::test]
async fn story_edit_rebases_highlights_and_clusters_follow() {
    let api = Api::new();
    let sid = api.session().await;
    let card = api.first_card(&sid, "Maya waits by the gate").await;
    let cid = card["id"].as_str().unwrap();
    let story = card["story"].as_str().unwrap();
    let maya = story.chars().collect::<String>().find("Maya").unwrap();

    let (status, v) = api
        .post(
            &format!("/sessions/{sid}/highlights"),
            json!({"card_id": cid, "start": maya, "end": maya + 4, "object": {"name": "Maya", "kind": "character"}, "comment": "tired"}),
        )
        .await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    let hid = v["highlight"]["id"].as_str().unwrap().to_owned();

    // flat route form, naming the session in the body
    let (status, v) = api
        .call(
            Method::PATCH,
            &format!("/cards/{cid}/story"),
            Some(json!({"session_id": sid, "type": "splice", "position": 0, "deleted_len": 0, "text": "Dusk. "})),
        )
        .await;
    assert_eq!(status, StatusCode::OK, "{v}");
    let (_, s) = api.get(&format!("/sessions/{sid}")).await;
    assert_eq!(s["highlights"][&hid]["anchor"]["start"], maya + 6);

    let (_, clusters) = api.get(&format!("/sessions/{sid}/clusters")).await;
    assert_eq!(clusters["character"]["maya"]["segments"][0]["snapshot"], "Maya");

    let (status, summary) = api.post(&format!("/sessions/{sid}/clusters/character/maya/summarize"), json!({})).await;
    assert_eq!(status, StatusCode::OK, "{summary}");
    assert!(summary["settings"].as_str().unwrap().contains("Maya"));
    let (status, flat) = api.post("/clusters/Maya/summarize", json!({"session_id": sid, "kind": "character"})).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(flat, summary);

    let (status, v) = api.post(&format!("/sessions/{sid}/clusters/character/nobody/summarize"), json!({})).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_error(&v, "UnknownObject");
    let (status, v) = api.get(&format!("/sessions/{sid}/clusters/villain/maya")).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_error(&v, "InvalidKind");

    // overwrite the highlighted name: the highlight goes, and so does the cluster
    let (status, v) = api
        .call(
            Method::PATCH,
            &format!("/sessions/{sid}/cards/{cid}/story"),
            Some(json!({"type": "splice", "position": maya + 6, "deleted_len": 4, "text": "Rosa"})),
        )
        .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["removed_highlights"], json!([hid]));
    let (_, clusters) = api.get(&format!("/sessions/{sid}/clusters")).await;
    assert_eq!(clusters, json!({}));
}

#[tokio::test]
async fn every_successful_mutation_appends_one_event() {
    let api = Api::new();
    let sid = api.session().await;
    let card = api.first_card(&sid, "the ferry").await;
    let cid = card["id"].as_str().unwrap().to_owned();
    let mut expected = api.event_count(&sid).await;
    let steps: Vec<(Method, String, Value)> = vec![
        (Method::PUT, format!("/sessions/{sid}/context"), json!({"theme": "winter", "outline": "act one"})),
        (
            Method::PUT,
            format!("/sessions/{sid}/cards/{cid}/objects"),
            json!({"objects": [{"name": "ferry", "kind": "object"}]}),
        ),
        (
            Method::PATCH,
            format!("/sessions/{sid}/cards/{cid}/node"),
            json!({"x": 10.0, "y": 20.0, "w": 200.0, "h": 300.0}),
        ),
        (
            Method::POST,
            "/highlights".to_owned(),
            json!({"session_id": sid, "card_id": cid, "start": 0, "end": 3, "comment": "note"}),
        ),
    ];
    for (method, uri, body) in steps {
        let (status, v) = api.call(method, &uri, Some(body)).await;
        assert!(status.is_success(), "{uri}: {v}");
        expected += 1;
        assert_eq!(api.event_count(&sid).await, expected);
        assert_eq!(v["revision"], expected);
    }
    let (status, _) = api.call(Method::DELETE, &format!("/sessions/{sid}/highlights/hl-0001"), None).await;
    assert_eq!(status, StatusCode::OK);
    let (status, v) = api.call(Method::DELETE, &format!("/sessions/{sid}/highlights/hl-0001"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_error(&v, "UnknownHighlight");
    let (status, _) = api.call(Method::DELETE, &format!("/sessions/{sid}/cards/{cid}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(api.event_count(&sid).await, expected + 2);
}

#[tokio::test]
async fn malformed_bodies_are_rejected_uniformly() {
    let api = Api::new();
    let sid = api.session().await;
    let req = Request::post(format!("/sessions/{sid}/generate"))
        .header("content-type", "application/json")
        .body(Body::from("{not json"))
        .unwrap();
    let (status, v) = api.raw(req).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_error(&v, "BadJson");

    let (status, v) = api.post(&format!("/sessions/{sid}/generate"), json!({"mode": "wild"})).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_error(&v, "InvalidBody");

    let (status, v) = api.post(&format!("/sessions/{sid}/generate"), json!({"mode": "exact_craft"})).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_error(&v, "EmptyIntent");

    let (status, v) = api.get("/sessions/missing").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_error(&v, "SessionNotFound");
    assert_eq!(api.event_count(&sid).await, 1);
}

#[tokio::test]
async fn export_import_round_trip() {
    let api = Api::new();
    let sid = api.session().await;
    api.first_card(&sid, "salt and glass").await;
    let (_, before) = api.get(&format!("/sessions/{sid}")).await;
    let (status, doc) = api.get(&format!("/sessions/{sid}/export")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(doc["v"], 1);

    // the id is taken while the original is alive
    let (status, v) = api.post("/import", doc.clone()).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_error(&v, "SessionExists");

    let (status, _) = api.call(Method::DELETE, &format!("/sessions/{sid}"), None).await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    let (status, v) = api.post("/import", doc.clone()).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    let (_, after) = api.get(&format!("/sessions/{sid}")).await;
    assert_eq!(before, after);

    let mut bad = doc.clone();
    bad["v"] = json!(2);
    let (status, v) = api.post("/import", bad).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_error(&v, "SchemaVersionMismatch");
    assert_eq!(v["detail"]["found"], 2);

    let text = doc.to_string();
    let req = Request::post("/import").body(Body::from(text[..text.len() / 2].to_owned())).unwrap();
    let (status, v) = api.raw(req).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_error(&v, "BadJson");
}

#[tokio::test]
async fn idle_sessions_expire_and_deleted_ones_are_gone() {
    let state = mock_state(Duration::from_millis(20));
    let app = router(state.clone());
    let api = Api { app, state: state.clone() };
    let sid = api.session().await;
    let other = api.session().await;
    assert_eq!(api.state.session_count(), 2);

    let (status, _) = api.call(Method::DELETE, &format!("/sessions/{other}"), None).await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    let (status, _) = api.call(Method::DELETE, &format!("/sessions/{other}"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    tokio::time::sleep(Duration::from_millis(40)).await;
    assert_eq!(state.sweep_expired(), 1);
    let (status, _) = api.get(&format!("/sessions/{sid}")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn concurrent_generations_serialize_cleanly() {
    let api = Api::new();
    let sid = api.session().await;
    let calls = (0..8).map(|i| {
        let app = api.app.clone();
        let uri = format!("/sessions/{sid}/generate");
        async move {
            let req = Request::post(uri)
                .header("content-type", "application/json")
                .body(Body::from(json!({"mode": "exact_craft", "typed_text": format!("scene {i}")}).to_string()))
                .unwrap();
            app.oneshot(req).await.unwrap().status()
        }
    });
    let statuses = futures_join(calls).await;
    assert!(statuses.iter().all(|s| *s == StatusCode::CREATED), "{statuses:?}");
    assert_eq!(api.event_count(&sid).await, 9);
    let (_, s) = api.get(&format!("/sessions/{sid}")).await;
    assert_eq!(s["cards"].as_object().unwrap().len(), 8);
}

async fn futures_join<F: std::future::Future<Output = StatusCode> + Send + 'static>(
    calls: impl Iterator<Item = F>,
) -> Vec<StatusCode> {
    let handles: Vec<_> = calls.map(tokio::spawn).collect();
    let mut out = Vec::new();
    for h in handles {
        out.push(h.await.unwrap());
    }
    out
}
