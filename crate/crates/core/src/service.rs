//! HTTP annotation service.
//!
//! | Route | Result |
//! |-------|--------|
//! | `GET /api/images` | `[{image_id, width, height, annotated, warning?}]` |
//! | `GET /api/images/{id}` | PNG bytes |
//! | `GET /api/annotations/{id}` | `{image_id, image_w, image_h, boxes}` |
//! | `PUT /api/annotations/{id}` | `{boxes: [{class_id, cx, cy, w, h}]}` → 204 |
//! | `GET /api/labelmap` | `[{id, name}]` |
//! | `GET /…` | static UI files |
//!
//! Image ids are PNG paths relative to the dataset root without the
//! extension, `/`-separated. Annotations persist as YOLO sidecars written via
//! a temporary file and a rename.

use std::fs;
use std::io::BufReader;
use std::net::SocketAddr;
use std::path::{Component as PathComponent, Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::dataset::{parse_yolo, write_yolo, LabelMap, YoloAnnotation};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    /// Directory scanned (recursively) for `.png` images.
    pub dataset_root: PathBuf,
    pub labels: LabelMap,
    /// Directory holding the browser UI bundle; a placeholder page is served without it.
    pub static_dir: Option<PathBuf>,
}

struct AppState {
    config: ServiceConfig,
    tmp_counter: AtomicU64,
}

type Shared = Arc<AppState>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageEntry {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    pub annotated: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub image_id: String,
    pub image_w: u32,
    pub image_h: u32,
    pub boxes: Vec<YoloAnnotation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotationUpdate {
    pub boxes: Vec<YoloAnnotation>,
}

#[derive(Debug, Serialize)]
struct ApiError {
    error: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    field: Option<String>,
}

fn api_error(status: StatusCode, error: impl Into<String>, field: Option<String>) -> Response {
    (status, Json(ApiError { error: error.into(), field })).into_response()
}

fn not_found(id: &str) -> Response {
    api_error(StatusCode::NOT_FOUND, format!("unknown image {id:?}"), None)
}

fn internal(e: impl std::fmt::Display) -> Response {
    api_error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string(), None)
}

/// Builds the router after checking that the dataset root is readable.
pub fn router(config: ServiceConfig) -> Result<Router> {
    let root = &config.dataset_root;
    fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let state = Arc::new(AppState {
        config,
        tmp_counter: AtomicU64::new(0),
    });
    Ok(Router::new()
        .route("/api/images", get(list_images))
        .route("/api/images/{*id}", get(get_image))
        .route("/api/annotations/{*id}", get(get_annotation).put(put_annotation))
        .route("/api/labelmap", get(get_labelmap))
        .fallback(get(static_file))
        .with_state(state))
}

/// Serves until the process is stopped.
pub async fn serve(config: ServiceConfig, addr: SocketAddr) -> Result<()> {
    let app = router(config)?;
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| Error::contract(format!("cannot bind {addr}: {e}")))?;
    log::info!("annotation service listening on http://{}", listener.local_addr().map_err(|e| Error::contract(e.to_string()))?);
    axum::serve(listener, app)
        .await
        .map_err(|e| Error::contract(format!("server error: {e}")))
}

fn collect_pngs(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let hidden = path.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with('.'));
        if hidden {
            continue;
        }
        if path.is_dir() {
            collect_pngs(&path, out)?;
        } else if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
            out.push(path);
        }
    }
    Ok(())
}

fn image_id_of(root: &Path, path: &Path) -> Option<String> {
    let rel = path.strip_prefix(root).ok()?.with_extension("");
    let parts: Option<Vec<&str>> = rel.components().map(|c| c.as_os_str().to_str()).collect();
    Some(parts?.join("/"))
}

/// Resolves an id to its PNG, rejecting anything that could escape the root.
fn image_path(root: &Path, id: &str) -> Option<PathBuf> {
    if id.is_empty() || id.split('/').any(|seg| seg.is_empty() || seg == "." || seg == ".." || seg.starts_with('.')) {
        return None;
    }
    let rel = Path::new(id);
    if !rel.components().all(|c| matches!(c, PathComponent::Normal(_))) {
        return None;
    }
    let mut path = root.join(rel);
    let name = format!("{}.png", path.file_name()?.to_str()?);
    path.set_file_name(name);
    path.is_file().then_some(path)
}

fn png_size(path: &Path) -> std::result::Result<(u32, u32), String> {
    let file = fs::File::open(path).map_err(|e| e.to_string())?;
    let reader = png::Decoder::new(BufReader::new(file)).read_info().map_err(|e| e.to_string())?;
    let info = reader.info();
    Ok((info.width, info.height))
}

fn read_sidecar(png: &Path) -> std::result::Result<Option<Vec<YoloAnnotation>>, String> {
    let path = png.with_extension("txt");
    match fs::read_to_string(&path) {
        Ok(text) => parse_yolo(&text).map(Some).map_err(|e| e.to_string()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e.to_string()),
    }
}

async fn list_images(State(state): State<Shared>) -> Response {
    let root = &state.config.dataset_root;
    let mut paths = Vec::new();
    if let Err(e) = collect_pngs(root, &mut paths) {
        return internal(e);
    }
    let mut entries: Vec<ImageEntry> = paths
        .iter()
        .filter_map(|p| {
            let image_id = image_id_of(root, p)?;
            let (size, size_warning) = match png_size(p) {
                Ok(s) => (s, None),
                Err(e) => ((0, 0), Some(format!("unreadable image: {e}"))),
            };
            let (annotated, warning) = match read_sidecar(p) {
                Ok(found) => (found.is_some(), size_warning),
                Err(e) => (false, Some(format!("annotation file does not parse: {e}"))),
            };
            Some(ImageEntry {
                image_id,
                width: size.0,
                height: size.1,
                annotated,
                warning,
            })
        })
        .collect();
    entries.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    Json(entries).into_response()
}

async fn get_image(State(state): State<Shared>, UrlPath(id): UrlPath<String>) -> Response {
    let Some(path) = image_path(&state.config.dataset_root, &id) else {
        return not_found(&id);
    };
    match fs::read(&path) {
        Ok(bytes) => ([(header::CONTENT_TYPE, "image/png")], bytes).into_response(),
        Err(e) => internal(e),
    }
}

async fn get_annotation(State(state): State<Shared>, UrlPath(id): UrlPath<String>) -> Response {
    let Some(path) = image_path(&state.config.dataset_root, &id) else {
        return not_found(&id);
    };
    let (image_w, image_h) = match png_size(&path) {
        Ok(s) => s,
        Err(e) => return internal(e),
    };
    let (boxes, warning) = match read_sidecar(&path) {
        Ok(found) => (found.unwrap_or_default(), None),
        Err(e) => (Vec::new(), Some(format!("annotation file does not parse: {e}"))),
    };
    Json(AnnotationRecord {
        image_id: id,
        image_w,
        image_h,
        boxes,
        warning,
    })
    .into_response()
}

/// Field path of the first invalid box, with the reason.
fn validate_update(update: &AnnotationUpdate, labels: &LabelMap) -> std::result::Result<(), (String, String)> {
    for (i, b) in update.boxes.iter().enumerate() {
        if b.class_id >= labels.len() {
            return Err((
                format!("boxes[{i}].class_id"),
                format!("class_id {} is not in the label map (0..{})", b.class_id, labels.len()),
            ));
        }
        if let Err(msg) = b.validate() {
            let field = ["cx", "cy", "w", "h"]
                .into_iter()
                .find(|f| msg.starts_with(&format!("{f} ")))
                .map_or(format!("boxes[{i}]"), |f| format!("boxes[{i}].{f}"));
            return Err((field, msg));
        }
    }
    Ok(())
}

async fn put_annotation(State(state): State<Shared>, UrlPath(id): UrlPath<String>, body: Bytes) -> Response {
    let Some(path) = image_path(&state.config.dataset_root, &id) else {
        return not_found(&id);
    };
    let update: AnnotationUpdate = match serde_json::from_slice(&body) {
        Ok(u) => u,
        Err(e) => return api_error(StatusCode::BAD_REQUEST, format!("invalid body: {e}"), None),
    };
    if let Err((field, msg)) = validate_update(&update, &state.config.labels) {
        return api_error(StatusCode::BAD_REQUEST, msg, Some(field));
    }
    let sidecar = path.with_extension("txt");
    let n = state.tmp_counter.fetch_add(1, Ordering::Relaxed);
    let tmp = sidecar.with_extension(format!("txt.{}.{n}.tmp", std::process::id()));
    let written = fs::write(&tmp, write_yolo(&update.boxes)).and_then(|_| fs::rename(&tmp, &sidecar));
    match written {
        Ok(()) => StatusCode::NO_CONTENT.into_response(),
        Err(e) => {
            let _ = fs::remove_file(&tmp);
            internal(e)
        }
    }
}

async fn get_labelmap(State(state): State<Shared>) -> Response {
    Json(state.config.labels.entries()).into_response()
}

const PLACEHOLDER_PAGE: &str = "<!doctype html>\n<html><head><meta charset=\"utf-8\"><title>Gesture annotation</title></head>\n<body><h1>Gesture annotation service</h1><p>The UI bundle is not installed. The API lives under <code>/api</code>.</p></body></html>\n";

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js") | Some("mjs") => "text/javascript",
        Some("css") => "text/css",
        Some("json") => "application/json",
        Some("svg") => "image/svg+xml",
        Some("png") => "image/png",
        _ => "application/octet-stream",
    }
}

async fn static_file(State(state): State<Shared>, uri: Uri) -> Response {
    let rel = uri.path().trim_start_matches('/');
    if rel.starts_with("api/") || rel == "api" {
        return api_error(StatusCode::NOT_FOUND, format!("no route {}", uri.path()), None);
    }
    let rel = if rel.is_empty() { "index.html" } else { rel };
    let Some(dir) = &state.config.static_dir else {
        return if rel == "index.html" {
            ([(header::CONTENT_TYPE, "text/html; charset=utf-8")], PLACEHOLDER_PAGE).into_response()
        } else {
            StatusCode::NOT_FOUND.into_response()
        };
    };
    let safe = Path::new(rel).components().all(|c| matches!(c, PathComponent::Normal(_)));
    let path = dir.join(rel);
    if !safe || !path.is_file() {
        return StatusCode::NOT_FOUND.into_response();
    }
    match fs::read(&path) {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type(&path))], bytes).into_response(),
        Err(e) => internal(e),
    }
}
