use axum::body::Body;
use axum::http::{Request, StatusCode};
use futures::StreamExt;
use http_body_util::BodyExt;
use serde_json::{json, Value as Json};
use sgcr_core::sample::{sample_bundle, SampleVariant};
use sgcr_core::scenario::{compile_range, Range};
use sgcr_gateway::{router, Pacing, RangeHandle};
use tower::ServiceExt;

fn handle(pacing: Pacing, n_steps: usize) -> RangeHandle {
    let spec = compile_range(&sample_bundle(SampleVariant::ThreeSubstations, n_steps)).expect("sample compiles");
    RangeHandle::spawn(Range::new(&spec).expect("range builds"), pacing)
}

async fn call(h: &RangeHandle, req: Request<Body>) -> (StatusCode, Json) {
    let resp = router(h.clone()).oneshot(req).await.expect("infallible");
    let status = resp.status();
    let bytes = resp.into_body().collect().await.expect("body").to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Json::Null))
}

fn get(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

fn post_command(point: &str, body: Json) -> Request<Body> {
    Request::post(format!("/points/{point}/command"))
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap()
}

#[tokio::test]
async fn points_list_values_after_a_step() {
    let h = handle(Pacing::Manual, 10);
    h.step(1).await.unwrap();
    let (status, body) = call(&h, get("/points")).await;
    assert_eq!(status, StatusCode::OK);
    let points = body.as_array().expect("array");
    let cb = points.iter().find(|p| p["point_name"] == "S3_CBF1").expect("point listed");
    assert_eq!(cb["writable"], true);
    assert_eq!(cb["last_value"], true);
    let v = points.iter().find(|p| p["point_name"] == "S3_CBF1_V").expect("point listed");
    assert!(v["last_value"].as_f64().unwrap() > 5000.0);
    h.shutdown();
}

#[tokio::test]
async fn command_opens_breaker() {
    let h = handle(Pacing::Manual, 10);
    h.step(1).await.unwrap();
    let (status, body) = call(&h, post_command("S3_CBF1", json!({"value": false, "operator_id": "op1"}))).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    assert_eq!(body["status"], "pending");
    let id = body["id"].as_u64().unwrap();
    h.step(2).await.unwrap();
    let (_, rec) = call(&h, get(&format!("/commands/{id}"))).await;
    assert_eq!(rec["status"], "acked", "{rec}");
    let (_, points) = call(&h, get("/points")).await;
    let cb = points.as_array().unwrap().iter().find(|p| p["point_name"] == "S3_CBF1").unwrap();
    assert_eq!(cb["last_value"], false);
    h.shutdown();
}

#[tokio::test]
async fn command_errors_map_to_status_codes() {
    let h = handle(Pacing::Manual, 3);
    let (s, _) = call(&h, post_command("NOPE", json!({"value": true, "operator_id": "x"}))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call(&h, post_command("S3_CBF1_V", json!({"value": 1.0, "operator_id": "x"}))).await;
    assert_eq!(s, StatusCode::FORBIDDEN);
    let st = h.step(10).await.unwrap();
    assert!(st.finished);
    let (s, _) = call(&h, post_command("S3_CBF1", json!({"value": true, "operator_id": "x"}))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    h.shutdown();
}

#[tokio::test]
async fn topology_exports() {
    let h = handle(Pacing::Manual, 3);
    h.step(1).await.unwrap();
    let (s, power) = call(&h, get("/topology/power")).await;
    assert_eq!(s, StatusCode::OK);
    assert!(power["buses"].as_array().is_some_and(|b| !b.is_empty()), "{power}");
    let (s, cyber) = call(&h, get("/topology/cyber")).await;
    assert_eq!(s, StatusCode::OK);
    assert!(cyber["nodes"].as_array().is_some_and(|n| n.len() > 45));
    let (_, status) = call(&h, get("/status")).await;
    assert_eq!(status["steps_done"], 1);
    h.shutdown();
}

#[tokio::test]
async fn stream_emits_batches_per_tick() {
    let h = handle(Pacing::Manual, 20);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(sgcr_gateway::serve(listener, h.clone()));
    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/stream?points=S3_CBF1,S3_CBF1_V"))
        .await
        .expect("connect");
    // The subscription is registered during the upgrade; give it a moment.
    tokio::time::sleep(std::time::Duration::from_millis(50)).await;
    h.step(2).await.unwrap();
    let mut ticks = Vec::new();
    for _ in 0..2 {
        let msg = tokio::time::timeout(std::time::Duration::from_secs(5), ws.next())
            .await
            .expect("batch in time")
            .expect("stream open")
            .expect("frame");
        let batch: Json = serde_json::from_str(msg.to_text().unwrap()).unwrap();
        for u in batch["updates"].as_array().unwrap() {
            let p = u["point"].as_str().unwrap();
            assert!(p == "S3_CBF1" || p == "S3_CBF1_V");
        }
        ticks.push(batch["tick"].as_u64().unwrap());
    }
    assert_eq!(ticks, vec![1, 2]);
    h.shutdown();
}

#[tokio::test]
async fn interval_pacing_runs_to_end() {
    let h = handle(Pacing::Interval(std::time::Duration::from_millis(1)), 5);
    for _ in 0..200 {
        if h.status().await.unwrap().finished {
            break;
        }
        tokio::time::sleep(std::time::Duration::from_millis(10)).await;
    }
    let st = h.status().await.unwrap();
    assert!(st.finished);
    assert_eq!(st.steps_done, 5);
    h.shutdown();
}
