//! Curation HTTP service: record queue, patch intake, media and UI assets.

use std::path::{Component, Path, PathBuf};
use std::sync::Arc;

use axum::body::Body;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderMap, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::Mutex;

use forge_core::emit::{
    append_patch, apply_patches, load_dataset, now_timestamp, read_ledger, record_status, validate_sample, CurationPatch,
    Dataset, PatchOp, RecordStatus, Task,
};
use forge_core::motion::{parse_motion_response, WindowConfig};
use forge_core::qa_gen::QaLibrary;
use forge_core::scene_graph::{ElementKind, Vocabulary};
use forge_core::{Error, Finding};

pub const AUTHOR_HEADER: &str = "x-curator";
pub const DEFAULT_AUTHOR: &str = "curator";
const DEFAULT_PAGE_SIZE: usize = 50;
const MAX_PAGE_SIZE: usize = 1000;

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub dataset: PathBuf,
    pub ledger: PathBuf,
    pub media_root: PathBuf,
    pub static_dir: Option<PathBuf>,
    pub library: QaLibrary,
    pub vocabulary: Vocabulary,
    pub windows: WindowConfig,
}

struct Ledger {
    patches: Vec<CurationPatch>,
    current: Dataset,
    findings: Vec<Vec<Finding>>,
}

struct Inner {
    base: Dataset,
    opts: ServeOptions,
    ledger: Mutex<Ledger>,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    /// Loads the dataset and replays the existing ledger onto it.
    pub fn load(opts: ServeOptions) -> forge_core::Result<Self> {
        let base = load_dataset(&opts.dataset)?;
        let patches = read_ledger(&opts.ledger)?;
        let current = apply_patches(&base, &patches)?;
        let findings = all_findings(&current, &opts);
        Ok(AppState(Arc::new(Inner {
            base,
            ledger: Mutex::new(Ledger {
                patches,
                current,
                findings,
            }),
            opts,
        })))
    }
}

fn all_findings(ds: &Dataset, opts: &ServeOptions) -> Vec<Vec<Finding>> {
    ds.samples
        .iter()
        .zip(&ds.annotations)
        .map(|(s, a)| validate_sample(s, a, &opts.library, &opts.vocabulary))
        .collect()
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/records", get(list_records))
        .route("/api/records/{id}", get(get_record))
        .route("/api/records/{id}/patch", post(post_patch))
        .route("/api/progress", get(progress))
        .route("/media/{*path}", get(media))
        .fallback(static_asset)
        .with_state(state)
}

/// Serves until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> forge_core::Result<()> {
    axum::serve(listener, router(state)).await?;
    Ok(())
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn not_found(id: &str) -> ApiError {
    ApiError(StatusCode::NOT_FOUND, format!("unknown record '{id}'"))
}

fn internal(e: Error) -> ApiError {
    ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
}

impl Ledger {
    fn patches_for(&self, id: &str) -> Vec<&CurationPatch> {
        self.patches.iter().filter(|p| p.sample_id == id).collect()
    }

    fn status(&self, base: &Dataset, i: usize) -> RecordStatus {
        let id = &base.samples[i].id;
        record_status(&base.samples[i], &self.current.samples[i], &self.patches_for(id))
    }

    /// Strictly after every recorded timestamp, so ledger order is
    /// application order.
    fn next_timestamp(&self) -> String {
        let now = now_timestamp();
        let last = self.patches.iter().filter_map(|p| p.instant().ok()).max();
        match (last, chrono_parse(&now)) {
            (Some(last), Some(t)) if t <= last => (last + chrono::Duration::microseconds(1))
                .to_rfc3339_opts(chrono::SecondsFormat::Micros, true),
            _ => now,
        }
    }
}

fn chrono_parse(s: &str) -> Option<chrono::DateTime<chrono::Utc>> {
    chrono::DateTime::parse_from_rfc3339(s).ok().map(|t| t.with_timezone(&chrono::Utc))
}

#[derive(Debug, Deserialize)]
pub struct ListQuery {
    status: Option<String>,
    element: Option<String>,
    page: Option<usize>,
    page_size: Option<usize>,
}

async fn list_records(State(st): State<AppState>, Query(q): Query<ListQuery>) -> ApiResult<Json<Value>> {
    let bad = |e: Error| ApiError(StatusCode::BAD_REQUEST, e.to_string());
    let status: Option<RecordStatus> = q.status.as_deref().map(str::parse).transpose().map_err(bad)?;
    let element: Option<ElementKind> = q.element.as_deref().map(str::parse).transpose().map_err(bad)?;
    let page = q.page.unwrap_or(1).max(1);
    let page_size = q.page_size.unwrap_or(DEFAULT_PAGE_SIZE).clamp(1, MAX_PAGE_SIZE);

    let ledger = st.0.ledger.lock().await;
    let base = &st.0.base;
    let matching: Vec<Value> = (0..base.samples.len())
        .filter_map(|i| {
            let s = &ledger.current.samples[i];
            let a = &ledger.current.annotations[i];
            let st_i = ledger.status(base, i);
            if status.is_some_and(|want| want != st_i) {
                return None;
            }
            if let Some(kind) = element {
                if !a.rounds.iter().flatten().any(|r| r.element.kind() == kind) {
                    return None;
                }
            }
            Some(json!({
                "id": s.id,
                "scenario_id": s.scenario_id,
                "status": st_i,
                "rounds": s.round_count(),
                "findings": ledger.findings[i].len(),
                "version": ledger.patches_for(&s.id).len(),
            }))
        })
        .collect();
    let total = matching.len();
    let items: Vec<Value> = matching.into_iter().skip((page - 1) * page_size).take(page_size).collect();
    Ok(Json(json!({
        "items": items,
        "total": total,
        "page": page,
        "page_size": page_size,
    })))
}

fn media_url(path: &str) -> String {
    format!("/media/{}", path.trim_start_matches('/'))
}

fn record_body(st: &AppState, ledger: &Ledger, i: usize) -> Value {
    let s = &ledger.current.samples[i];
    let a = &ledger.current.annotations[i];
    let trajectory = s
        .answers(Task::Mot)
        .next()
        .and_then(|t| parse_motion_response(&t.text, &st.0.opts.windows).ok())
        .map(|m| m.future.points.iter().map(|p| [p.x, p.y]).collect::<Vec<_>>());
    json!({
        "sample": s,
        "status": ledger.status(&st.0.base, i),
        "version": ledger.patches_for(&s.id).len(),
        "findings": ledger.findings[i],
        "media": {
            "views": s.media.views.iter().map(|v| media_url(v)).collect::<Vec<_>>(),
            "bev": media_url(&s.media.bev),
        },
        "action": a.action.as_ref().map(|l| l.text()),
        "trajectory": trajectory,
        "rounds": a.rounds,
    })
}

async fn get_record(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Value>> {
    let ledger = st.0.ledger.lock().await;
    let i = ledger.current.index_of(&id).ok_or_else(|| not_found(&id))?;
    Ok(Json(record_body(&st, &ledger, i)))
}

/// Patch body: a curation patch without author and timestamp, plus the
/// optional record version the client last saw.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchBody {
    #[serde(default)]
    sample_id: Option<String>,
    round: usize,
    op: PatchOp,
    #[serde(default)]
    payload: Option<String>,
    #[serde(default)]
    note: String,
    #[serde(default)]
    version: Option<usize>,
}

async fn post_patch(
    State(st): State<AppState>,
    UrlPath(id): UrlPath<String>,
    headers: HeaderMap,
    body: axum::body::Bytes,
) -> ApiResult<Json<Value>> {
    let unprocessable = |m: String| ApiError(StatusCode::UNPROCESSABLE_ENTITY, m);
    let body: PatchBody = serde_json::from_slice(&body).map_err(|e| unprocessable(format!("bad patch body: {e}")))?;
    if body.sample_id.as_deref().is_some_and(|s| s != id) {
        return Err(unprocessable("sample_id differs from the record in the path".into()));
    }
    let author = headers
        .get(AUTHOR_HEADER)
        .and_then(|v| v.to_str().ok())
        .filter(|v| !v.trim().is_empty())
        .unwrap_or(DEFAULT_AUTHOR)
        .to_string();

    let mut ledger = st.0.ledger.lock().await;
    let i = ledger.current.index_of(&id).ok_or_else(|| not_found(&id))?;
    let existing = ledger.patches_for(&id);
    let conflict = match body.version {
        Some(v) => v != existing.len(),
        None => existing.iter().any(|p| p.round == body.round),
    };
    if conflict {
        return Err(ApiError(
            StatusCode::CONFLICT,
            format!("record '{id}' changed since version {}", body.version.unwrap_or(0)),
        ));
    }
    let patch = CurationPatch {
        sample_id: id.clone(),
        round: body.round,
        op: body.op,
        payload: body.payload,
        author,
        timestamp: ledger.next_timestamp(),
        note: body.note,
    };
    patch.check().map_err(|e| unprocessable(e.to_string()))?;
    let mut all = ledger.patches.clone();
    all.push(patch.clone());
    let next = apply_patches(&st.0.base, &all).map_err(|e| unprocessable(e.to_string()))?;
    append_patch(&st.0.opts.ledger, &patch).map_err(internal)?;

    let (s, a) = (&next.samples[i], &next.annotations[i]);
    let findings = validate_sample(s, a, &st.0.opts.library, &st.0.opts.vocabulary);
    ledger.findings[i] = findings;
    ledger.patches = all;
    ledger.current = next;
    let mut out = record_body(&st, &ledger, i);
    out["patch"] = serde_json::to_value(&patch).map_err(|e| internal(Error::Serialize(e.to_string())))?;
    Ok(Json(out))
}

async fn progress(State(st): State<AppState>) -> Json<Value> {
    let ledger = st.0.ledger.lock().await;
    let (mut pending, mut curated, mut rejected) = (0, 0, 0);
    for i in 0..st.0.base.samples.len() {
        match ledger.status(&st.0.base, i) {
            RecordStatus::Pending => pending += 1,
            RecordStatus::Curated => curated += 1,
            RecordStatus::Rejected => rejected += 1,
        }
    }
    Json(json!({
        "pending": pending,
        "curated": curated,
        "rejected": rejected,
        "total": st.0.base.samples.len(),
        "patches": ledger.patches.len(),
        "findings": ledger.findings.iter().map(Vec::len).sum::<usize>(),
    }))
}

/// Joins a request path under `root`, refusing anything that could leave it.
pub fn confine(root: &Path, rel: &str) -> Option<PathBuf> {
    let rel = Path::new(rel);
    if rel.components().any(|c| !matches!(c, Component::Normal(_))) {
        return None;
    }
    let root = root.canonicalize().ok()?;
    let full = root.join(rel).canonicalize().ok()?;
    full.starts_with(&root).then_some(full)
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("html") => "text/html; charset=utf-8",
        Some("js" | "mjs") => "text/javascript",
        Some("css") => "text/css",
        Some("json") => "application/json",
        Some("jsonl") => "application/x-ndjson",
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("svg") => "image/svg+xml",
        Some("ico") => "image/x-icon",
        Some("wasm") => "application/wasm",
        _ => "application/octet-stream",
    }
}

async fn send_file(path: &Path) -> Option<Response> {
    if !path.is_file() {
        return None;
    }
    let bytes = tokio::fs::read(path).await.ok()?;
    Some(([(header::CONTENT_TYPE, content_type(path))], Body::from(bytes)).into_response())
}

async fn media(State(st): State<AppState>, UrlPath(path): UrlPath<String>) -> ApiResult<Response> {
    let has_parent = Path::new(&path).components().any(|c| !matches!(c, Component::Normal(_)));
    if has_parent {
        return Err(ApiError(StatusCode::FORBIDDEN, "path escapes the media root".into()));
    }
    let not_here = || ApiError(StatusCode::NOT_FOUND, format!("no media file '{path}'"));
    let full = confine(&st.0.opts.media_root, &path).ok_or_else(|| {
        // A symlink pointing outside also lands here.
        not_here()
    })?;
    send_file(&full).await.ok_or_else(not_here)
}

async fn static_asset(State(st): State<AppState>, uri: Uri) -> ApiResult<Response> {
    let missing = || ApiError(StatusCode::NOT_FOUND, format!("no route for {}", uri.path()));
    let Some(dir) = &st.0.opts.static_dir else {
        return Err(missing());
    };
    if uri.path().starts_with("/api/") {
        return Err(missing());
    }
    let rel = uri.path().trim_start_matches('/');
    if !rel.is_empty() {
        if let Some(f) = confine(dir, rel) {
            if let Some(r) = send_file(&f).await {
                return Ok(r);
            }
        }
    }
    send_file(&dir.join("index.html")).await.ok_or_else(missing)
}
