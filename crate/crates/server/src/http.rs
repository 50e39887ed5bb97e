//! HTTP API.
//!
//! - `POST /search`: multipart form with a `query` part (JSON
//!   [`QueryRequest`]) and an optional `audio` part (WAV bytes).
//! - `GET /songs/{id}`: one song's metadata.
//! - `GET /health`: liveness.

use std::sync::Arc;

use axum::extract::{Multipart, Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use songseek_core::engine::{SearchError, SongSummary};
use songseek_core::{decode_wav, SearchEngine, SongId};

use crate::request::QueryRequest;

/// Uploaded clips are a few seconds of audio; this leaves ample room.
const MAX_UPLOAD: usize = 64 * 1024 * 1024;

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub songs: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SongDetail {
    #[serde(flatten)]
    pub summary: SongSummary,
    pub lyrics: String,
    pub has_audio: bool,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }
}

impl From<SearchError> for ApiError {
    fn from(e: SearchError) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(ErrorBody { error: self.message })).into_response()
    }
}

pub fn router(engine: Arc<SearchEngine>) -> Router {
    Router::new()
        .route("/search", post(search))
        .route("/songs/{id}", get(song))
        .route("/health", get(health))
        .layer(axum::extract::DefaultBodyLimit::max(MAX_UPLOAD))
        .with_state(engine)
}

async fn health(State(engine): State<Arc<SearchEngine>>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        songs: engine.records().len(),
    })
}

async fn song(State(engine): State<Arc<SearchEngine>>, Path(id): Path<u32>) -> Result<Json<SongDetail>, ApiError> {
    let record = engine
        .record(SongId(id))
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no song with id {id}")))?;
    Ok(Json(SongDetail {
        summary: SongSummary::from(record),
        lyrics: record.lyrics.clone(),
        has_audio: engine.fingerprint_index().fingerprint(record.id).is_some(),
    }))
}

async fn search(State(engine): State<Arc<SearchEngine>>, mut form: Multipart) -> Result<Response, ApiError> {
    let mut request: Option<QueryRequest> = None;
    let mut audio_bytes = None;
    while let Some(field) = form
        .next_field()
        .await
        .map_err(|e| ApiError::bad_request(e.body_text()))?
    {
        let name = field.name().unwrap_or_default().to_string();
        let bytes = field
            .bytes()
            .await
            .map_err(|e| ApiError::bad_request(e.body_text()))?;
        match name.as_str() {
            "query" => {
                let parsed = serde_json::from_slice(&bytes)
                    .map_err(|e| ApiError::bad_request(format!("query part: {e}")))?;
                request = Some(parsed);
            }
            "audio" => audio_bytes = Some(bytes),
            other => return Err(ApiError::bad_request(format!("unexpected part `{other}`"))),
        }
    }
    let request = request.unwrap_or_default();

    // Decoding, extraction and search are CPU-bound.
    let outcome = tokio::task::spawn_blocking(move || {
        let audio = audio_bytes
            .map(|b| decode_wav(&b))
            .transpose()
            .map_err(|e| ApiError::bad_request(format!("audio part: {e}")))?;
        let (query, options) = request
            .into_query(audio)
            .map_err(|e| ApiError::bad_request(e.to_string()))?;
        Ok::<_, ApiError>(engine.execute(&query, options)?)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(outcome).into_response())
}

/// Serves until ctrl-c. Prints the bound address once listening.
pub async fn serve(engine: Arc<SearchEngine>, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    println!("listening on http://{}", listener.local_addr()?);
    use std::io::Write;
    std::io::stdout().flush()?;
    axum::serve(listener, router(engine))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
