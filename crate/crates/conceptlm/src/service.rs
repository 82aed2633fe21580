//! HTTP recommendation service.
//!
//! One checkpoint and vocabulary are loaded in the background at startup;
//! until then `/v1/health` answers `loading` and recommendations get 503.
//! The loaded model is immutable and shared by all requests.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use conceptlm_core::bpe::Vocabulary;
use conceptlm_core::metamodel::{AssociationDef, AttributeDef, ClassDef, ElementKind, ElementRef, Identifier, Metamodel};
use conceptlm_core::nn::{fill_mask_topk, FillConfig, Model};
use conceptlm_core::sampler::{global_sample, local_sample, Strategy};
use conceptlm_core::tree::is_structural;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::cors::CorsLayer;

use crate::canonical::Document;
use crate::files::{load_checkpoint, load_vocab};
use crate::{Error, Result};

pub const DEFAULT_K: usize = 5;
pub const MAX_K: usize = 50;
/// Attribute type used for a pending attribute slot without one.
pub const DEFAULT_ATTRIBUTE_TYPE: &str = "EString";

/// Everything a request needs, loaded once.
pub struct LoadedModel {
    pub model: Model<f32>,
    pub vocab: Vocabulary,
    pub checkpoint_sha256: String,
    pub preset: String,
    /// `k` is taken from each request.
    pub fill: FillConfig,
}

impl LoadedModel {
    pub fn load(checkpoint: &Path, vocab: &Path, fill: FillConfig) -> Result<Self> {
        let ckpt = load_checkpoint(checkpoint)?;
        let vocab = load_vocab(vocab)?;
        if ckpt.checkpoint.config.vocab_size != vocab.len() {
            return Err(Error::Config(format!(
                "checkpoint expects {} tokens, vocabulary has {}",
                ckpt.checkpoint.config.vocab_size,
                vocab.len()
            )));
        }
        Ok(Self {
            model: ckpt.checkpoint.model()?,
            vocab,
            checkpoint_sha256: ckpt.sha256,
            preset: ckpt.preset,
            fill,
        })
    }

    fn info(&self) -> ModelInfo {
        ModelInfo {
            checkpoint_sha256: self.checkpoint_sha256.clone(),
            preset: self.preset.clone(),
        }
    }
}

#[derive(Clone, Default)]
pub struct ServiceState {
    slot: Arc<OnceLock<LoadedModel>>,
}

impl ServiceState {
    pub fn loading() -> Self {
        Self::default()
    }

    pub fn ready(model: LoadedModel) -> Self {
        let s = Self::default();
        s.install(model);
        s
    }

    /// First install wins; later calls are ignored.
    pub fn install(&self, model: LoadedModel) {
        let _ = self.slot.set(model);
    }

    pub fn model(&self) -> Option<&LoadedModel> {
        self.slot.get()
    }
}

/// A name that does not exist yet: a class, or a member of `owner`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PendingSlot {
    pub kind: ElementKind,
    /// Owning class name; required for attributes and associations.
    #[serde(default)]
    pub owner: Option<String>,
    #[serde(default)]
    pub attribute_type: Option<String>,
    /// Target class name; required for associations.
    #[serde(default)]
    pub target: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Target {
    Element(ElementRef),
    Pending(PendingSlot),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecommendRequest {
    pub metamodel: Document,
    pub target: Target,
    #[serde(default = "default_k")]
    pub k: usize,
    /// Only `global` and `local` apply to a single request.
    #[serde(default = "default_strategy")]
    pub strategy: Strategy,
}

fn default_k() -> usize {
    DEFAULT_K
}

fn default_strategy() -> Strategy {
    Strategy::Global
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub text: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub checkpoint_sha256: String,
    pub preset: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendResponse {
    pub candidates: Vec<Suggestion>,
    pub context_size: usize,
    pub model_info: ModelInfo,
}

/// A request failure with its HTTP status and stable error code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn bad_request(message: impl ToString) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            code: "bad-request",
            message: message.to_string(),
        }
    }

    fn unresolvable(message: impl ToString) -> Self {
        Self {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            code: "unresolvable-target",
            message: message.to_string(),
        }
    }

    fn not_loaded() -> Self {
        Self {
            status: StatusCode::SERVICE_UNAVAILABLE,
            code: "model-not-loaded",
            message: "the model is still loading".into(),
        }
    }

    fn internal(message: impl ToString) -> Self {
        Self {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            code: "internal",
            message: message.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.code, "message": self.message }))).into_response()
    }
}

/// Appends a member or class named by a fresh placeholder and returns a
/// reference to it.
fn open_slot(m: &mut Metamodel, slot: &PendingSlot) -> std::result::Result<ElementRef, ApiError> {
    let fresh = |taken: &dyn Fn(&str) -> bool| {
        (0..)
            .map(|i| if i == 0 { "Pending".to_string() } else { format!("Pending{i}") })
            .find(|n| !taken(n))
            .map(|n| Identifier::new(n).expect("valid placeholder"))
            .expect("unbounded")
    };
    let owner = || -> std::result::Result<usize, ApiError> {
        let name = slot.owner.as_deref().ok_or_else(|| ApiError::bad_request("pending member needs an owner"))?;
        m.class_index(name).ok_or_else(|| ApiError::unresolvable(format!("no class named {name:?}")))
    };
    match slot.kind {
        ElementKind::Class => {
            let name = fresh(&|n| m.class_index(n).is_some());
            m.classes.push(ClassDef::new(name));
            Ok(ElementRef::class(m.classes.len() - 1))
        }
        ElementKind::Attribute => {
            let c = owner()?;
            let ty = slot.attribute_type.as_deref().unwrap_or(DEFAULT_ATTRIBUTE_TYPE);
            let type_name = Identifier::new(ty).map_err(ApiError::bad_request)?;
            let class = &mut m.classes[c];
            let name = fresh(&|n| class.attributes.iter().any(|a| a.name.as_str() == n));
            class.attributes.push(AttributeDef { name, type_name });
            Ok(ElementRef::attribute(c, class.attributes.len() - 1))
        }
        ElementKind::Association => {
            let c = owner()?;
            let target = slot.target.as_deref().ok_or_else(|| ApiError::bad_request("pending association needs a target"))?;
            if m.class_index(target).is_none() {
                return Err(ApiError::unresolvable(format!("no class named {target:?}")));
            }
            let target_class = Identifier::new(target).map_err(ApiError::bad_request)?;
            let class = &mut m.classes[c];
            let name = fresh(&|n| class.associations.iter().any(|a| a.name.as_str() == n));
            class.associations.push(AssociationDef {
                name,
                target_class,
                is_containment: false,
            });
            Ok(ElementRef::association(c, class.associations.len() - 1))
        }
    }
}

/// The request handler without the HTTP layer.
pub fn recommend(loaded: &LoadedModel, body: &[u8]) -> std::result::Result<RecommendResponse, ApiError> {
    let req: RecommendRequest = serde_json::from_slice(body).map_err(ApiError::bad_request)?;
    if req.k > MAX_K {
        return Err(ApiError::bad_request(format!("k must be at most {MAX_K}")));
    }
    let mut m = req.metamodel.to_metamodel().map_err(ApiError::bad_request)?;
    let target = match &req.target {
        Target::Element(r) => {
            m.resolve(*r).map_err(ApiError::unresolvable)?;
            *r
        }
        Target::Pending(slot) => open_slot(&mut m, slot)?,
    };
    let sample = match req.strategy {
        Strategy::Global => global_sample(&m, target),
        Strategy::Local => local_sample(&m, target),
        Strategy::Incremental => return Err(ApiError::bad_request("strategy must be global or local")),
    }
    .map_err(ApiError::unresolvable)?;
    let fill = FillConfig { k: req.k, ..loaded.fill };
    let candidates = fill_mask_topk(&loaded.model, &loaded.vocab, &sample.context, &fill)
        .map_err(ApiError::internal)?
        .into_iter()
        .filter(|c| !is_structural(c.text.as_str()))
        .map(|c| Suggestion {
            text: c.text.into_string(),
            score: c.score,
        })
        .collect();
    Ok(RecommendResponse {
        candidates,
        context_size: sample.context_size,
        model_info: loaded.info(),
    })
}

async fn health(State(state): State<ServiceState>) -> Json<serde_json::Value> {
    let status = if state.model().is_some() { "ready" } else { "loading" };
    Json(json!({ "status": status }))
}

async fn model_info(State(state): State<ServiceState>) -> Response {
    match state.model() {
        None => ApiError::not_loaded().into_response(),
        Some(m) => Json(json!({
            "checkpoint_sha256": m.checkpoint_sha256,
            "preset": m.preset,
            "vocab_size": m.vocab.len(),
            "config": m.model.config(),
        }))
        .into_response(),
    }
}

async fn recommend_route(State(state): State<ServiceState>, body: Bytes) -> Response {
    if state.model().is_none() {
        return ApiError::not_loaded().into_response();
    }
    let outcome = tokio::task::spawn_blocking(move || {
        let loaded = state.model().expect("checked above");
        recommend(loaded, &body)
    })
    .await;
    match outcome {
        Ok(Ok(resp)) => Json(resp).into_response(),
        Ok(Err(e)) => e.into_response(),
        Err(e) => ApiError::internal(e).into_response(),
    }
}

pub fn router(state: ServiceState) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/model/info", get(model_info))
        .route("/v1/recommend", post(recommend_route))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub addr: SocketAddr,
    pub checkpoint: PathBuf,
    pub vocab: PathBuf,
    pub fill: FillConfig,
}

/// Binds, loads the model in the background and serves until Ctrl-C;
/// in-flight requests are drained before returning.
pub async fn serve(opts: ServeOptions) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(opts.addr).await.map_err(|e| Error::io(opts.addr.to_string(), e))?;
    let state = ServiceState::loading();
    let loader = state.clone();
    let load = tokio::task::spawn_blocking(move || -> Result<()> {
        loader.install(LoadedModel::load(&opts.checkpoint, &opts.vocab, opts.fill)?);
        Ok(())
    });
    eprintln!("listening on {}", opts.addr);
    let server = axum::serve(listener, router(state)).with_graceful_shutdown(async {
        let _ = tokio::signal::ctrl_c().await;
    });
    let (served, loaded) = tokio::join!(server, async {
        let r = load.await;
        if let Ok(Err(e)) = &r {
            eprintln!("model failed to load: {e}");
        } else {
            eprintln!("model ready");
        }
        r
    });
    served.map_err(|e| Error::io(opts.addr.to_string(), e))?;
    loaded.map_err(|e| Error::Config(e.to_string()))?
}
