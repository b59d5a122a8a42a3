use std::sync::Arc;
use std::time::Duration;

use axum::body::{Body, Bytes};
use axum::http::{Request, StatusCode};
use evobot_cli::server::{router, AppState, Event};
use evobot_core::config::Config;
use evobot_core::evolution::{Mode, Session, MAX_TRAJECTORY_POINTS};
use http_body_util::BodyExt;
use tower::ServiceExt;

fn state(timeout: Duration) -> Arc<AppState> {
    let mut cfg = Config::default();
    cfg.evolution.mode = Mode::UserGuided;
    cfg.evolution.pop_size = 6;
    cfg.evolution.seed = 5;
    cfg.fitness.max_steps = 300;
    let session = Session::new("test", cfg.evolution, cfg.task().unwrap()).unwrap();
    AppState::new(session, timeout, None)
}

async fn call(st: &Arc<AppState>, req: Request<Body>) -> (StatusCode, serde_json::Value) {
    let res = router(st.clone()).oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(serde_json::Value::Null))
}

async fn get(st: &Arc<AppState>, path: &str) -> (StatusCode, serde_json::Value) {
    call(st, Request::get(path).body(Body::empty()).unwrap()).await
}

async fn select(st: &Arc<AppState>, body: &str) -> (StatusCode, serde_json::Value) {
    let req = Request::post("/api/selection")
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    call(st, req).await
}

fn ids(generation: &serde_json::Value) -> Vec<u64> {
    generation.as_array().unwrap().iter().map(|c| c["id"].as_u64().unwrap()).collect()
}

#[tokio::test]
async fn session_and_generation_payloads() {
    let st = state(Duration::from_secs(60));
    let (code, s) = get(&st, "/api/session").await;
    assert_eq!(code, StatusCode::OK);
    assert_eq!(s["session_id"], "test");
    assert_eq!(s["generation"], 0);
    assert_eq!(s["pop_size"], 6);
    assert_eq!(s["mode"], "user_guided");
    assert_eq!(s["status"], "awaiting_selection");
    let (_, g) = get(&st, "/api/generation").await;
    let cands = g.as_array().unwrap();
    assert_eq!(cands.len(), 6);
    let mut unique = ids(&g);
    unique.dedup();
    assert_eq!(unique.len(), 6);
    for c in cands {
        for key in ["fitness", "reached", "rotations_l", "rotations_r", "sensor_performance"] {
            assert!(!c[key].is_null(), "{key}");
        }
        let t = c["trajectory"].as_array().unwrap();
        assert!(!t.is_empty() && t.len() <= MAX_TRAJECTORY_POINTS);
        assert_eq!(t[0].as_array().unwrap().len(), 2);
    }
    let (_, w) = get(&st, "/api/world").await;
    assert!(w["target"]["radius"].as_f64().unwrap() > 0.0);
}

#[tokio::test]
async fn selection_advances_and_history_records_it() {
    let st = state(Duration::from_secs(60));
    let (_, g) = get(&st, "/api/generation").await;
    let chosen = &ids(&g)[..2];
    let (code, r) = select(&st, &format!("{{\"ids\": [{}, {}]}}", chosen[0], chosen[1])).await;
    assert_eq!(code, StatusCode::OK);
    assert_eq!(r["generation"], 1);
    let (_, s) = get(&st, "/api/session").await;
    assert_eq!(s["generation"], 1);
    let (_, h) = get(&st, "/api/history").await;
    let h = h.as_array().unwrap();
    assert_eq!(h.len(), 2);
    assert_eq!(h[0]["generation"], 0);
    assert!(h[0]["best"].as_f64().unwrap() >= h[0]["mean"].as_f64().unwrap());
    let sel: Vec<u64> = h[0]["selected"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
    assert_eq!(sel, chosen);
    let (_, g2) = get(&st, "/api/generation").await;
    assert!(ids(&g2).iter().all(|id| !ids(&g).contains(id) || chosen.contains(id)));
}

#[tokio::test]
async fn invalid_selections_are_rejected_without_side_effects() {
    let st = state(Duration::from_secs(60));
    let (_, before) = get(&st, "/api/generation").await;
    for body in ["{\"ids\": [999999]}", "{\"ids\": []}"] {
        let (code, e) = select(&st, body).await;
        assert_eq!(code, StatusCode::BAD_REQUEST);
        assert_eq!(e["error"], "InvalidSelection");
    }
    let (_, after) = get(&st, "/api/generation").await;
    assert_eq!(before, after);
    let (_, s) = get(&st, "/api/session").await;
    assert_eq!(s["generation"], 0);
}

async fn next_line(body: &mut Body, buf: &mut Vec<u8>) -> Event {
    loop {
        if let Some(pos) = buf.iter().position(|&b| b == b'\n') {
            let line: Vec<u8> = buf.drain(..=pos).collect();
            return serde_json::from_slice(&line).unwrap();
        }
        let frame = tokio::time::timeout(Duration::from_secs(30), body.frame()).await.unwrap().unwrap().unwrap();
        let data: Bytes = frame.into_data().unwrap();
        buf.extend_from_slice(&data);
    }
}

#[tokio::test]
async fn stream_reports_progress_then_generation_ready() {
    let st = state(Duration::from_secs(60));
    let res = router(st.clone()).oneshot(Request::get("/api/stream").body(Body::empty()).unwrap()).await.unwrap();
    assert_eq!(res.headers()["content-type"], "application/x-ndjson");
    let mut body = res.into_body();
    let mut buf = Vec::new();
    assert_eq!(next_line(&mut body, &mut buf).await, Event::GenerationReady { generation: 0 });
    let (_, g) = get(&st, "/api/generation").await;
    let id = ids(&g)[0];
    let (code, _) = select(&st, &format!("{{\"ids\": [{id}]}}")).await;
    assert_eq!(code, StatusCode::OK);
    let mut done = Vec::new();
    loop {
        match next_line(&mut body, &mut buf).await {
            Event::EvaluationProgress { done: d, total } => {
                assert_eq!(total, 6);
                done.push(d);
            }
            Event::GenerationReady { generation } => {
                assert_eq!(generation, 1);
                break;
            }
            e => panic!("unexpected {e:?}"),
        }
    }
    done.sort_unstable();
    assert_eq!(done, (1..=6).collect::<Vec<_>>());
}

#[tokio::test]
async fn idle_sessions_pause_and_resume_on_selection() {
    let st = state(Duration::from_millis(20));
    tokio::time::sleep(Duration::from_millis(40)).await;
    let mut rx = st.subscribe();
    st.check_timeout();
    assert_eq!(rx.recv().await.unwrap(), Event::SessionPaused { generation: 0 });
    let (_, s) = get(&st, "/api/session").await;
    assert_eq!(s["status"], "paused");
    let res = router(st.clone()).oneshot(Request::get("/api/stream").body(Body::empty()).unwrap()).await.unwrap();
    let mut body = res.into_body();
    assert_eq!(next_line(&mut body, &mut Vec::new()).await, Event::SessionPaused { generation: 0 });
    let (_, g) = get(&st, "/api/generation").await;
    let (code, r) = select(&st, &format!("{{\"ids\": [{}]}}", ids(&g)[0])).await;
    assert_eq!(code, StatusCode::OK);
    assert_eq!(r["generation"], 1);
    let (_, s) = get(&st, "/api/session").await;
    assert_eq!(s["status"], "awaiting_selection");
}
