use std::path::Path;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use conceptlm::files::{save_checkpoint, save_vocab, sha256_file};
use conceptlm::service::{router, LoadedModel, ServiceState};
use conceptlm_core::bpe::{train_bpe, BpeConfig};
use conceptlm_core::nn::{Checkpoint, FillConfig, Model, ModelConfig};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

const FSM: &str = include_str!("fixtures/fsm.json");

fn fill() -> FillConfig {
    FillConfig { k: 5, max_subwords: 2, beam_width: 3 }
}

/// An untrained tiny model written to disk and loaded back.
fn loaded(dir: &Path) -> LoadedModel {
    let lines = ["( MM ( CLS ( NAME FSM ) ( ATTRS ( ATTR EString name ) ) ( ASSOCS ) ) )"; 4];
    let vocab = train_bpe(lines, BpeConfig { vocab_size: 300, min_frequency: 2 }).unwrap();
    let model = Model::<f32>::init(ModelConfig::tiny(vocab.len()), 3).unwrap();
    let ckpt = Checkpoint { config: model.config().clone(), params: model.params().to_vec(), log: vec![] };
    save_checkpoint(&dir.join("m.ckpt"), &ckpt, "tiny").unwrap();
    save_vocab(&dir.join("v.json"), &vocab).unwrap();
    LoadedModel::load(&dir.join("m.ckpt"), &dir.join("v.json"), fill()).unwrap()
}

async fn call(state: &ServiceState, req: Request<Body>) -> (StatusCode, Value, axum::http::HeaderMap) {
    let resp = router(state.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null), headers)
}

fn get(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

fn post(body: impl Into<Body>) -> Request<Body> {
    Request::post("/v1/recommend")
        .header("content-type", "application/json")
        .header("origin", "http://localhost:5173")
        .body(body.into())
        .unwrap()
}

fn request(target: Value, k: Option<usize>) -> String {
    let mut r = json!({ "metamodel": serde_json::from_str::<Value>(FSM).unwrap(), "target": target });
    if let Some(k) = k {
        r["k"] = json!(k);
    }
    r.to_string()
}

#[tokio::test]
async fn loading_then_ready() {
    let tmp = tempfile::tempdir().unwrap();
    let state = ServiceState::loading();
    let (s, body, _) = call(&state, get("/v1/health")).await;
    assert_eq!((s, body), (StatusCode::OK, json!({ "status": "loading" })));
    assert_eq!(call(&state, get("/v1/model/info")).await.0, StatusCode::SERVICE_UNAVAILABLE);
    let (s, body, _) = call(&state, post(request(json!({ "element": { "kind": "class", "class_index": 0 } }), None))).await;
    assert_eq!(s, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(body["error"], "model-not-loaded");

    state.install(loaded(tmp.path()));
    let (s, body, _) = call(&state, get("/v1/health")).await;
    assert_eq!((s, body), (StatusCode::OK, json!({ "status": "ready" })));
    let (s, info, _) = call(&state, get("/v1/model/info")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(info["checkpoint_sha256"], sha256_file(&tmp.path().join("m.ckpt")).unwrap());
    assert_eq!(info["preset"], "tiny");
    assert_eq!(info["vocab_size"], state.model().unwrap().vocab.len());
    // Same file, fresh load: same info.
    let again = ServiceState::ready(LoadedModel::load(&tmp.path().join("m.ckpt"), &tmp.path().join("v.json"), fill()).unwrap());
    assert_eq!(call(&again, get("/v1/model/info")).await.1, info);
}

#[tokio::test]
async fn recommendations_are_ranked_bounded_and_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let state = ServiceState::ready(loaded(tmp.path()));
    let body = request(json!({ "element": { "kind": "attribute", "class_index": 1, "member_index": 0 } }), Some(4));
    let (s, first, headers) = call(&state, post(body.clone())).await;
    assert_eq!(s, StatusCode::OK);
    assert!(headers.contains_key("access-control-allow-origin"));
    let cands = first["candidates"].as_array().unwrap();
    assert!(cands.len() <= 4);
    let scores: Vec<f64> = cands.iter().map(|c| c["score"].as_f64().unwrap()).collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));
    // 3 classes, 3 attributes, 4 associations, minus the masked one.
    assert_eq!(first["context_size"], 9);
    assert_eq!(first["model_info"]["preset"], "tiny");
    assert_eq!(call(&state, post(body)).await.1, first);

    let (s, empty, _) = call(&state, post(request(json!({ "element": { "kind": "class", "class_index": 0 } }), Some(0)))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(empty["candidates"], json!([]));
}

#[tokio::test]
async fn default_k_and_local_strategy() {
    let tmp = tempfile::tempdir().unwrap();
    let state = ServiceState::ready(loaded(tmp.path()));
    let mut r: Value = serde_json::from_str(&request(json!({ "element": { "kind": "class", "class_index": 1 } }), None)).unwrap();
    let (_, global, _) = call(&state, post(r.to_string())).await;
    assert!(global["candidates"].as_array().unwrap().len() <= 5);
    r["strategy"] = json!("local");
    let (s, local, _) = call(&state, post(r.to_string())).await;
    assert_eq!(s, StatusCode::OK);
    assert!(local["context_size"].as_u64() <= global["context_size"].as_u64());
    r["strategy"] = json!("incremental");
    assert_eq!(call(&state, post(r.to_string())).await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn pending_slots_extend_the_context() {
    let tmp = tempfile::tempdir().unwrap();
    let state = ServiceState::ready(loaded(tmp.path()));
    let cases = [
        (json!({ "pending": { "kind": "class" } }), 10),
        (json!({ "pending": { "kind": "attribute", "owner": "State" } }), 10),
        (json!({ "pending": { "kind": "attribute", "owner": "State", "attribute_type": "EInt" } }), 10),
        (json!({ "pending": { "kind": "association", "owner": "State", "target": "Transition" } }), 10),
    ];
    for (target, size) in cases {
        let (s, body, _) = call(&state, post(request(target.clone(), None))).await;
        assert_eq!(s, StatusCode::OK, "{target}");
        assert_eq!(body["context_size"], size, "{target}");
    }
    let unresolvable = [
        json!({ "pending": { "kind": "attribute", "owner": "Nope" } }),
        json!({ "pending": { "kind": "association", "owner": "State", "target": "Nope" } }),
        json!({ "element": { "kind": "class", "class_index": 7 } }),
        json!({ "element": { "kind": "association", "class_index": 1, "member_index": 0 } }),
    ];
    for target in unresolvable {
        let (s, body, _) = call(&state, post(request(target.clone(), None))).await;
        assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{target}");
        assert_eq!(body["error"], "unresolvable-target");
    }
}

#[tokio::test]
async fn malformed_requests_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let state = ServiceState::ready(loaded(tmp.path()));
    let dangling = json!({
        "metamodel": { "classes": [ { "name": "A", "attributes": [], "associations": [ { "name": "b", "target": "B", "containment": false } ] } ] },
        "target": { "element": { "kind": "class", "class_index": 0 } }
    });
    let bodies = [
        "{not json".to_string(),
        json!({ "target": { "element": { "kind": "class", "class_index": 0 } } }).to_string(),
        request(json!({ "element": { "kind": "class", "class_index": 0 } }), Some(51)),
        request(json!({ "somewhere": {} }), None),
        request(json!({ "pending": { "kind": "attribute" } }), None),
        request(json!({ "pending": { "kind": "association", "owner": "State" } }), None),
        dangling.to_string(),
    ];
    for b in bodies {
        let (s, body, _) = call(&state, post(b.clone())).await;
        assert_eq!(s, StatusCode::BAD_REQUEST, "{b}");
        assert_eq!(body["error"], "bad-request", "{b}");
    }
}
