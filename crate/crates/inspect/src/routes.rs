use crate::heatmap::{max_pool, Heatmap, MAX_SIDE};
use crate::ServeConfig;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use lyralign::cascade::{load_matrix, matrix_path_for, SongAlignment};
use lyralign::datasets::{CorrectionOutcome, Labels, SongRecord, SongStatus, Store, UnitRef};
use lyralign::Error;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use tower_http::cors::{Any, CorsLayer};
use tower_http::services::{ServeDir, ServeFile};

pub const DEFAULT_LOW_CONFIDENCE: f64 = 0.5;
const DEFAULT_PAGE: usize = 50;
const MAX_PAGE: usize = 500;

#[derive(Clone)]
pub struct AppState {
    store: Arc<Store>,
    low_confidence: f64,
}

impl AppState {
    pub fn new(store: Arc<Store>, low_confidence: f64) -> Self {
        Self { store, low_confidence }
    }
}

struct ApiError(StatusCode, String);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let code = match e.root() {
            Error::UnknownSong(_) | Error::UnknownUnit(_) => StatusCode::NOT_FOUND,
            Error::InvalidOnset { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            Error::IllegalTransition { .. } => StatusCode::CONFLICT,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(serde_json::json!({ "error": self.1 }))).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

/// Runs blocking store work off the async executor.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, Error> + Send + 'static) -> Result<T, ApiError> {
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map_err(ApiError::from),
        Err(e) => Err(ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueueEntry {
    pub song_id: String,
    /// Absent for songs without a machine alignment.
    pub song_confidence: Option<f64>,
    pub n_low_confidence_units: usize,
    pub status: SongStatus,
    pub last_reviewed: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueuePage {
    pub entries: Vec<QueueEntry>,
    pub next_cursor: Option<String>,
    pub total: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct QueueQuery {
    order: Option<String>,
    status: Option<String>,
    cursor: Option<String>,
    limit: Option<usize>,
}

async fn list_songs(State(st): State<AppState>, Query(q): Query<QueueQuery>) -> ApiResult<QueuePage> {
    let bad = |m: String| ApiError(StatusCode::BAD_REQUEST, m);
    match q.order.as_deref() {
        None | Some("confidence") => {}
        Some(o) => return Err(bad(format!("unsupported order `{o}`"))),
    }
    let status = match q.status.as_deref() {
        None => None,
        Some(s) => Some(s.parse::<SongStatus>().map_err(|e| bad(e.to_string()))?),
    };
    let offset = match q.cursor.as_deref() {
        None => 0,
        Some(c) => c.parse::<usize>().map_err(|_| bad(format!("bad cursor `{c}`")))?,
    };
    let limit = q.limit.unwrap_or(DEFAULT_PAGE).clamp(1, MAX_PAGE);
    let low = st.low_confidence;
    let store = st.store.clone();
    let entries = blocking(move || {
        let audit = store.audit_entries()?;
        let mut out = Vec::new();
        for rec in store.records() {
            if status.is_some_and(|s| s != rec.status) {
                continue;
            }
            let alignment = store.alignment(&rec.id)?;
            let last_reviewed = audit
                .iter()
                .filter(|e| e.song_id == rec.id && e.reviewer != "aligner")
                .map(|e| e.timestamp.clone())
                .last();
            out.push(QueueEntry {
                song_confidence: alignment.as_ref().map(|a| a.song_confidence),
                n_low_confidence_units: alignment.as_ref().map_or(0, |a| low_units(a, low)),
                song_id: rec.id,
                status: rec.status,
                last_reviewed,
            });
        }
        Ok(out)
    })
    .await?;
    let mut entries = entries;
    entries.sort_by(|a, b| {
        let key = |e: &QueueEntry| e.song_confidence.unwrap_or(f64::INFINITY);
        key(a).total_cmp(&key(b)).then_with(|| a.song_id.cmp(&b.song_id))
    });
    let total = entries.len();
    let page: Vec<QueueEntry> = entries.into_iter().skip(offset).take(limit).collect();
    let next = offset + page.len();
    Ok(Json(QueuePage {
        entries: page,
        next_cursor: (next < total).then(|| next.to_string()),
        total,
    }))
}

fn low_units(a: &SongAlignment, threshold: f64) -> usize {
    a.sentences.iter().filter(|s| s.confidence < threshold).count()
        + a.words.iter().filter(|w| w.confidence < threshold).count()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AlignmentView {
    pub song_id: String,
    pub status: SongStatus,
    /// The machine alignment as produced by the aligner.
    pub alignment: SongAlignment,
    /// Current labels, including reviewer corrections.
    pub labels: Labels,
    /// Sentence-level probability heatmap, when the matrix was saved.
    pub heatmap: Option<Heatmap>,
    /// Route serving the song's audio, when it has an audio file.
    pub audio_url: Option<String>,
}

async fn get_alignment(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<AlignmentView> {
    let store = st.store.clone();
    blocking(move || {
        let rec = store.record(&id)?;
        let alignment = store
            .alignment(&id)?
            .ok_or_else(|| Error::UnknownSong(format!("{id} (no alignment)")))?;
        let labels = store.labels(&id)?.unwrap_or_else(|| alignment.to_labels());
        let heatmap = match rec.alignment_path.as_deref().map(matrix_path_for) {
            Some(p) if p.exists() => {
                let m = load_matrix(&p)?;
                Some(max_pool(m.probs.view(), MAX_SIDE, m.seconds_per_frame))
            }
            _ => None,
        };
        Ok(AlignmentView {
            audio_url: rec.audio_path.as_ref().map(|_| format!("/songs/{id}/audio")),
            song_id: id,
            status: rec.status,
            alignment,
            labels,
            heatmap,
        })
    })
    .await
    .map(Json)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CorrectionBody {
    unit_ref: UnitRef,
    onset_sec: f64,
    reviewer: String,
    #[serde(default)]
    request_id: Option<String>,
}

async fn post_correction(
    State(st): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    Json(body): Json<CorrectionBody>,
) -> ApiResult<CorrectionOutcome> {
    let request_id = body.request_id.or_else(|| {
        headers
            .get("x-request-id")
            .and_then(|v| v.to_str().ok())
            .map(str::to_owned)
    });
    let store = st.store.clone();
    blocking(move || {
        store.record_correction(&id, body.unit_ref, body.onset_sec, &body.reviewer, request_id.as_deref())
    })
    .await
    .map(Json)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StatusBody {
    status: SongStatus,
    #[serde(default = "anonymous")]
    reviewer: String,
}

fn anonymous() -> String {
    "anonymous".into()
}

async fn post_status(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Json(body): Json<StatusBody>,
) -> ApiResult<SongRecord> {
    let store = st.store.clone();
    blocking(move || store.set_status(&id, body.status, &body.reviewer))
        .await
        .map(Json)
}

async fn get_audio(
    State(st): State<AppState>,
    Path(id): Path<String>,
    req: axum::extract::Request,
) -> Result<Response, ApiError> {
    let rec = st.store.record(&id)?;
    let path = rec
        .audio_path
        .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("song `{id}` has no audio file")))?;
    use tower::ServiceExt;
    match ServeFile::new(path).oneshot(req).await {
        Ok(r) => Ok(r.into_response()),
        Err(e) => Err(ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())),
    }
}

/// All routes, with CORS and the optional UI directory.
pub fn router(state: AppState, config: &ServeConfig) -> Router {
    let cors = match config.cors_origin.as_deref().map(HeaderValue::from_str) {
        Some(Ok(origin)) => CorsLayer::new().allow_origin(origin),
        _ => CorsLayer::new().allow_origin(Any),
    }
    .allow_methods(Any)
    .allow_headers(Any);
    let api = Router::new()
        .route("/songs", get(list_songs))
        .route("/songs/:id/alignment", get(get_alignment))
        .route("/songs/:id/corrections", post(post_correction))
        .route("/songs/:id/status", post(post_status))
        .route("/songs/:id/audio", get(get_audio))
        .with_state(state);
    let app = match &config.ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    };
    app.layer(cors)
}
