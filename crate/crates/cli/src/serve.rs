use std::sync::Arc;

use anyhow::{Context, Result};
use axum::extract::{RawQuery, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Json, Response};
use axum::routing::get;
use axum::Router;

use lfr_core::service::{ViewRequest, ViewService};

pub fn router(service: Arc<ViewService>) -> Router {
    Router::new()
        .route("/view", get(view))
        .route("/meta", get(meta))
        .with_state(service)
}

async fn view(State(service): State<Arc<ViewService>>, RawQuery(query): RawQuery) -> Response {
    let req = match ViewRequest::parse(query.as_deref().unwrap_or("")) {
        Ok(r) => r,
        Err(e) => return (StatusCode::BAD_REQUEST, e.to_string()).into_response(),
    };
    // Rendering is CPU-bound; keep it off the async workers.
    let rendered = tokio::task::spawn_blocking(move || service.render_png(&req)).await;
    match rendered {
        Ok(Ok(png)) => {
            let mut res = png.into_response();
            let h = res.headers_mut();
            h.insert(header::CONTENT_TYPE, HeaderValue::from_static("image/png"));
            h.insert(header::CACHE_CONTROL, HeaderValue::from_static("no-store"));
            h.insert("x-pose-clamped", HeaderValue::from_static(if req.clamped { "true" } else { "false" }));
            if let Ok(v) = HeaderValue::from_str(&format!("{},{}", req.pose.ang_x, req.pose.ang_y)) {
                h.insert("x-pose", v);
            }
            res
        }
        Ok(Err(e)) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

async fn meta(State(service): State<Arc<ViewService>>) -> Response {
    Json(service.meta()).into_response()
}

pub fn run(service: Arc<ViewService>, addr: &str) -> Result<()> {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("binding {addr} (port busy?)"))?;
        let local = listener.local_addr()?;
        println!("listening on http://{local}");
        axum::serve(listener, router(service))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .context("serving")
    })
}
