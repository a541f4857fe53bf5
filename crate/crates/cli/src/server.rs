//! HTTP front end for a set of loaded parameter spaces.
//!
//! - `GET /health`
//! - `GET /space?space=NAME`: samples, simplices and available modes.
//! - `GET /frame?w=X[,Y]&t=FRAME&mode=MODE&space=NAME&axis=A&filter=1`: PNG of
//!   one synthesized slice. `X-Flof-Simplex` names the simplex used and
//!   `X-Flof-Weights` lists the blend weights of the data points given in
//!   `X-Flof-Points` (sample indices, unions joined by `+`).

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use anyhow::{bail, Result};
use axum::extract::{Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde_json::json;

use flof_core::interpolation::{DataKind, Mode, ParameterSpace};
use flof_core::pipeline::raster::rasterize;
use flof_core::pipeline::space::load_space;
use flof_core::ScalarField;

use crate::commands::{display_plane, parse_weights, render_slice};
use crate::encode_png;

/// Share of the sequence kept in the slice cache.
const WINDOW_FRACTION: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct CacheKey {
    w: Vec<u64>,
    frame: usize,
    mode: Mode,
    filter: bool,
}

#[derive(Debug)]
struct Rendered {
    slice: ScalarField,
    simplex: usize,
    points: String,
    weights: String,
}

/// Most recently used slices, oldest evicted first.
#[derive(Debug)]
struct SliceCache {
    capacity: usize,
    entries: VecDeque<(CacheKey, Arc<Rendered>)>,
}

impl SliceCache {
    fn new(capacity: usize) -> Self {
        SliceCache {
            capacity: capacity.max(1),
            entries: VecDeque::new(),
        }
    }

    fn get(&mut self, key: &CacheKey) -> Option<Arc<Rendered>> {
        let pos = self.entries.iter().position(|(k, _)| k == key)?;
        let entry = self.entries.remove(pos)?;
        let value = entry.1.clone();
        self.entries.push_back(entry);
        Some(value)
    }

    fn insert(&mut self, key: CacheKey, value: Arc<Rendered>) {
        self.entries.retain(|(k, _)| k != &key);
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back((key, value));
    }
}

pub struct SpaceEntry {
    pub space: ParameterSpace,
    cache: Mutex<SliceCache>,
}

impl SpaceEntry {
    pub fn new(space: ParameterSpace) -> Self {
        let frames = space.time_extent() - space.frames_repeated;
        let capacity = (WINDOW_FRACTION * frames as f64).ceil() as usize;
        SpaceEntry {
            space,
            cache: Mutex::new(SliceCache::new(capacity)),
        }
    }

    pub fn cache_capacity(&self) -> usize {
        self.cache.lock().expect("cache lock").capacity
    }

    pub fn frame_count(&self) -> usize {
        self.space.time_extent() - self.space.frames_repeated
    }
}

pub struct AppState {
    spaces: BTreeMap<String, Arc<SpaceEntry>>,
    default: String,
}

impl AppState {
    /// The first space is served when a request names none.
    pub fn new(spaces: Vec<ParameterSpace>) -> Result<AppState> {
        let Some(first) = spaces.first() else {
            bail!("no parameter space to serve");
        };
        let default = first.name.clone();
        let mut map = BTreeMap::new();
        for s in spaces {
            let name = s.name.clone();
            if map.insert(name.clone(), Arc::new(SpaceEntry::new(s))).is_some() {
                bail!("two spaces named `{name}`");
            }
        }
        Ok(AppState { spaces: map, default })
    }

    fn lookup(&self, name: Option<&String>) -> Result<Arc<SpaceEntry>, ApiError> {
        let name = name.unwrap_or(&self.default);
        self.spaces
            .get(name)
            .cloned()
            .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("unknown space `{name}`")))
    }
}

#[derive(Debug)]
pub struct ApiError(pub StatusCode, pub String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

fn bad_request(msg: impl ToString) -> ApiError {
    ApiError(StatusCode::BAD_REQUEST, msg.to_string())
}

fn from_core(e: anyhow::Error) -> ApiError {
    match e.downcast_ref::<flof_core::Error>() {
        Some(
            flof_core::Error::OutsideHull(_) | flof_core::Error::InvalidArgument(_) | flof_core::Error::DimMismatch { .. },
        )
        | None => bad_request(format!("{e:#}")),
        Some(_) => ApiError(StatusCode::INTERNAL_SERVER_ERROR, format!("{e:#}")),
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/space", get(space_info))
        .route("/frame", get(frame))
        .with_state(state)
}

fn modes(kind: DataKind) -> Vec<Mode> {
    match kind {
        DataKind::LiquidSdf => Mode::ALL.to_vec(),
        DataKind::SmokeDensity => vec![Mode::Linear, Mode::Nearest],
    }
}

async fn space_info(
    State(state): State<Arc<AppState>>,
    Query(q): Query<HashMap<String, String>>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let entry = state.lookup(q.get("space"))?;
    let s = &entry.space;
    let samples: Vec<_> = s.samples().iter().map(|x| json!({ "name": x.name, "r": x.r })).collect();
    Ok(Json(json!({
        "name": s.name,
        "kind": s.kind,
        "samples": samples,
        "simplices": s.simplices(),
        "modes": modes(s.kind),
        "frames": entry.frame_count(),
        "dims": s.dims().extents(),
    })))
}

fn header(v: &str) -> HeaderValue {
    HeaderValue::from_str(v).expect("ascii header")
}

async fn frame(
    State(state): State<Arc<AppState>>,
    Query(q): Query<HashMap<String, String>>,
) -> Result<Response, ApiError> {
    let entry = state.lookup(q.get("space"))?;
    let w = parse_weights(q.get("w").ok_or_else(|| bad_request("missing `w`"))?).map_err(bad_request)?;
    let frame: usize = q
        .get("t")
        .ok_or_else(|| bad_request("missing `t`"))?
        .parse()
        .map_err(|_| bad_request("`t` must be a frame index"))?;
    let default_mode = if entry.space.kind == DataKind::LiquidSdf { "union" } else { "linear" };
    let mode: Mode = q
        .get("mode")
        .map(String::as_str)
        .unwrap_or(default_mode)
        .parse()
        .map_err(bad_request)?;
    let axis: usize = match q.get("axis") {
        Some(a) => a.parse().map_err(|_| bad_request("`axis` must be 0, 1 or 2"))?,
        None => 2,
    };
    if axis > 2 {
        return Err(bad_request("`axis` must be 0, 1 or 2"));
    }
    let filter = matches!(q.get("filter").map(String::as_str), Some("1" | "true"));
    let key = CacheKey {
        w: w.iter().map(|v| v.to_bits()).collect(),
        frame,
        mode,
        filter,
    };

    let cached = entry.cache.lock().expect("cache lock").get(&key);
    let hit = cached.is_some();
    let rendered = match cached {
        Some(r) => r,
        None => {
            let worker = entry.clone();
            let r = tokio::task::spawn_blocking(move || render(&worker.space, &w, frame, mode, filter))
                .await
                .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
                .map_err(from_core)?;
            let r = Arc::new(r);
            entry.cache.lock().expect("cache lock").insert(key, r.clone());
            r
        }
    };
    let plane = display_plane(&rendered.slice, axis).map_err(from_core)?;
    let img = rasterize(&plane, entry.space.kind).map_err(|e| from_core(e.into()))?;
    let png = encode_png(&img).map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    let headers = [
        (header::CONTENT_TYPE, header("image/png")),
        (header::HeaderName::from_static("x-flof-simplex"), header(&rendered.simplex.to_string())),
        (header::HeaderName::from_static("x-flof-weights"), header(&rendered.weights)),
        (header::HeaderName::from_static("x-flof-points"), header(&rendered.points)),
        (header::HeaderName::from_static("x-flof-cache"), header(if hit { "hit" } else { "miss" })),
    ];
    Ok((headers, png).into_response())
}

fn render(space: &ParameterSpace, w: &[f64], frame: usize, mode: Mode, filter: bool) -> Result<Rendered> {
    let (slice, synth) = render_slice(space, w, frame, mode, filter)?;
    let vertices = &space.simplices()[synth.simplex];
    let points = synth
        .blend
        .points
        .iter()
        .map(|p| p.iter().map(|&k| vertices[k].to_string()).collect::<Vec<_>>().join("+"))
        .collect::<Vec<_>>()
        .join(",");
    let weights = synth
        .blend
        .weights
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",");
    Ok(Rendered {
        slice,
        simplex: synth.simplex,
        points,
        weights,
    })
}

pub fn serve(paths: &[PathBuf], host: &str, port: u16) -> Result<()> {
    let spaces = paths.iter().map(load_space).collect::<flof_core::Result<Vec<_>>>()?;
    let state = Arc::new(AppState::new(spaces)?);
    let addr: SocketAddr = format!("{host}:{port}").parse()?;
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, router(state)).await?;
        Ok(())
    })
}
