mod common;

use std::sync::{Arc, OnceLock};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::response::Response;
use common::*;
use flof_cli::encode_png;
use flof_cli::server::{router, AppState};
use flof_core::interpolation::DataKind;
use flof_core::pipeline::raster::rasterize;
use flof_core::pipeline::space::load_space;
use flof_core::pipeline::volume;
use http_body_util::BodyExt;
use tower::ServiceExt;

fn fixture() -> &'static SpaceFixture {
    static CELL: OnceLock<SpaceFixture> = OnceLock::new();
    CELL.get_or_init(build_space)
}

fn state() -> Arc<AppState> {
    Arc::new(AppState::new(vec![load_space(&fixture().space).unwrap()]).unwrap())
}

async fn get(state: &Arc<AppState>, uri: &str) -> (Response<Body>, Vec<u8>) {
    let response = router(state.clone())
        .oneshot(Request::get(uri).body(Body::empty()).unwrap())
        .await
        .unwrap();
    let (parts, body) = response.into_parts();
    let bytes = body.collect().await.unwrap().to_bytes().to_vec();
    (Response::from_parts(parts, Body::empty()), bytes)
}

fn header<'a>(r: &'a Response<Body>, name: &str) -> &'a str {
    r.headers().get(name).unwrap().to_str().unwrap()
}

fn error_json(body: &[u8]) -> String {
    let v: serde_json::Value = serde_json::from_slice(body).unwrap();
    v["error"].as_str().unwrap().to_string()
}

#[tokio::test]
async fn health_answers() {
    let (r, body) = get(&state(), "/health").await;
    assert_eq!(r.status(), StatusCode::OK);
    assert_eq!(body, b"ok");
}

#[tokio::test]
async fn space_lists_samples_and_simplices() {
    let (r, body) = get(&state(), "/space").await;
    assert_eq!(r.status(), StatusCode::OK);
    let v: serde_json::Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(v["name"], "circles");
    assert_eq!(v["samples"].as_array().unwrap().len(), 3);
    assert_eq!(v["simplices"], serde_json::json!([[0, 1, 2]]));
    assert_eq!(v["frames"], FRAMES);
    let stored = volume::read_scalar(fixture().sdf(0)).unwrap();
    assert_eq!(v["dims"], serde_json::json!(stored.dims().extents()));
    assert_eq!(stored.dims().extent(2), FRAMES + REPEAT);
    assert_eq!(v["modes"].as_array().unwrap().len(), 3);
    let (named, _) = get(&state(), "/space?space=circles").await;
    assert_eq!(named.status(), StatusCode::OK);
}

#[tokio::test]
async fn frame_at_a_vertex_is_the_rasterized_sample() {
    let state = state();
    for (k, r) in SAMPLE_R.iter().enumerate() {
        let (resp, body) = get(&state, &format!("/frame?w={},{}&t=2", r[0], r[1])).await;
        assert_eq!(resp.status(), StatusCode::OK);
        assert_eq!(header(&resp, "content-type"), "image/png");
        let stored = volume::read_scalar(fixture().sdf(k)).unwrap();
        let img = rasterize(&stored.last_axis_slab(2 + REPEAT).unwrap(), DataKind::LiquidSdf).unwrap();
        assert_eq!(body, encode_png(&img).unwrap(), "sample {k}");
        assert_eq!(header(&resp, "x-flof-simplex"), "0");
        // Only the vertex itself carries weight.
        let points: Vec<&str> = header(&resp, "x-flof-points").split(',').collect();
        let weights: Vec<f64> = header(&resp, "x-flof-weights")
            .split(',')
            .map(|w| w.parse().unwrap())
            .collect();
        assert_eq!(points.len(), weights.len());
        for (p, w) in points.iter().zip(&weights) {
            let expected = if *p == k.to_string() { 1.0 } else { 0.0 };
            assert_eq!(*w, expected, "{p}");
        }
    }
}

#[tokio::test]
async fn interior_frame_reports_its_blend() {
    let (resp, body) = get(&state(), "/frame?w=0.3,0.3&t=1&mode=linear").await;
    assert_eq!(resp.status(), StatusCode::OK);
    assert!(image_is_png(&body));
    assert_eq!(header(&resp, "x-flof-points"), "0,1,2");
    let weights: Vec<f64> = header(&resp, "x-flof-weights")
        .split(',')
        .map(|w| w.parse().unwrap())
        .collect();
    for (w, expected) in weights.iter().zip([0.4, 0.3, 0.3]) {
        assert!((w - expected).abs() < 1e-12, "{weights:?}");
    }
}

fn image_is_png(body: &[u8]) -> bool {
    body.starts_with(b"\x89PNG\r\n\x1a\n")
}

#[tokio::test]
async fn repeated_requests_hit_the_cache() {
    let state = state();
    let (first, a) = get(&state, "/frame?w=0.2,0.5&t=4").await;
    let (second, b) = get(&state, "/frame?w=0.2,0.5&t=4").await;
    assert_eq!(header(&first, "x-flof-cache"), "miss");
    assert_eq!(header(&second, "x-flof-cache"), "hit");
    assert_eq!(a, b);
    let (other, _) = get(&state, "/frame?w=0.2,0.5&t=4&mode=linear").await;
    assert_eq!(header(&other, "x-flof-cache"), "miss");
}

#[tokio::test]
async fn malformed_requests_are_rejected_with_json() {
    let state = state();
    for uri in [
        "/frame?w=abc&t=0",
        "/frame?w=0.1,nan&t=0",
        "/frame?t=0",
        "/frame?w=0,0",
        "/frame?w=0,0&t=x",
        "/frame?w=0,0&t=0&mode=cubic",
        "/frame?w=0,0&t=0&axis=3",
        "/frame?w=0,0&t=99",
        "/frame?w=0.8,0.8&t=0",
        "/frame?w=0.5&t=0",
    ] {
        let (resp, body) = get(&state, uri).await;
        assert_eq!(resp.status(), StatusCode::BAD_REQUEST, "{uri}");
        assert!(!error_json(&body).is_empty(), "{uri}");
    }
}

#[tokio::test]
async fn unknown_space_is_not_found() {
    let state = state();
    for uri in ["/space?space=nope", "/frame?space=nope&w=0,0&t=0"] {
        let (resp, body) = get(&state, uri).await;
        assert_eq!(resp.status(), StatusCode::NOT_FOUND, "{uri}");
        assert!(error_json(&body).contains("nope"));
    }
}
