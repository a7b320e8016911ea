use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use medens_review::{router, ReviewStore, ServerConfig};
use serde_json::{json, Value};
use tower::ServiceExt;

const MODELS: [&str; 2] = ["secret-baseline-xl", "hidden-ensemble-k10"];

fn records(model: &str, n: usize) -> Value {
    Value::Array(
        (0..n)
            .map(|i| {
                json!({
                    "id": format!("c-{i}"),
                    "turns": [
                        {"speaker": "DR", "text": format!("Any cough or fever, question {i}?")},
                        {"speaker": "PT", "text": "Cough yes, no fever."}
                    ],
                    "summary": format!("Summary {i} variant {}", model.len()),
                })
            })
            .collect(),
    )
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, String) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

fn app(dir: &std::path::Path, config: ServerConfig) -> Router {
    router(Arc::new(ReviewStore::open(dir).unwrap()), config)
}

fn assert_blind(body: &str) {
    for m in MODELS {
        assert!(!body.contains(m), "client payload leaks {m}: {body}");
    }
}

#[tokio::test]
async fn compare_session_over_http_stays_blind() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), ServerConfig::default());
    let mut client_bodies = Vec::new();

    let (status, body) = call(
        &app,
        "POST",
        "/sessions",
        Some(json!({
            "mode": "compare",
            "seed": 42,
            "models": [
                {"name": MODELS[0], "records": records(MODELS[0], 6)},
                {"name": MODELS[1], "records": records(MODELS[1], 6)},
            ]
        })),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    client_bodies.push(body.clone());
    let created: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(created["items"], 6);
    let sid = created["session_id"].as_str().unwrap().to_string();

    // Pick the first arm, the second arm, then all/none good, twice.
    let plan = ["first", "second", "all_good", "none_good", "first", "first"];
    let mut chosen_arm_ids = Vec::new();
    for step in plan {
        let (status, body) = call(&app, "GET", &format!("/sessions/{sid}/next"), None).await;
        assert_eq!(status, StatusCode::OK);
        client_bodies.push(body.clone());
        let next: Value = serde_json::from_str(&body).unwrap();
        assert_eq!(next["status"], "item");
        let item = &next["item"];
        let item_id = item["item_id"].as_str().unwrap();
        let winner = match step {
            "first" | "second" => {
                let arm = item["arms"][if step == "first" { 0 } else { 1 }]["arm_id"].as_str().unwrap();
                chosen_arm_ids.push((item_id.to_string(), arm.to_string()));
                json!({"kind": "arm", "arm_id": arm})
            }
            other => json!({"kind": other}),
        };
        let (status, body) = call(
            &app,
            "POST",
            &format!("/sessions/{sid}/items/{item_id}/events"),
            Some(json!({"kind": "choice", "winner": winner})),
        )
        .await;
        assert_eq!(status, StatusCode::OK, "{body}");
        client_bodies.push(body);
    }
    let (_, body) = call(&app, "GET", &format!("/sessions/{sid}/next"), None).await;
    assert!(body.contains("\"done\""));
    client_bodies.push(body);
    let (_, health) = call(&app, "GET", "/healthz", None).await;
    client_bodies.push(health);
    let (status, index) = call(&app, "GET", "/", None).await;
    assert_eq!(status, StatusCode::OK);
    client_bodies.push(index);
    for b in &client_bodies {
        assert_blind(b);
    }

    // Hand count from the server-side map.
    let raw = std::fs::read_to_string(dir.path().join("sessions").join(format!("{sid}.session.json"))).unwrap();
    let snap: Value = serde_json::from_str(&raw).unwrap();
    let model_of = |item_id: &str, arm: &str| -> String {
        let item = snap["items"].as_array().unwrap().iter().find(|i| i["item_id"] == item_id).unwrap();
        let a = item["arms"].as_array().unwrap().iter().find(|a| a["arm_id"] == arm).unwrap();
        a["model"].as_str().unwrap().to_string()
    };
    let mut expected = std::collections::BTreeMap::from([(MODELS[0].to_string(), 1), (MODELS[1].to_string(), 1)]);
    for (item, arm) in &chosen_arm_ids {
        *expected.get_mut(&model_of(item, arm)).unwrap() += 1;
    }

    let (status, body) = call(&app, "GET", &format!("/sessions/{sid}/report"), None).await;
    assert_eq!(status, StatusCode::OK);
    let report: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(report["mode"], "compare");
    assert_eq!(report["all_good"], 1);
    assert_eq!(report["none_good"], 1);
    assert_eq!(report["choices"], 6);
    for (m, n) in expected {
        assert_eq!(report["best"][&m], n, "{m}");
    }
}

#[tokio::test]
async fn error_statuses() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path(), ServerConfig::default());
    let (status, body) = call(&app, "GET", "/sessions/missing/next", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert!(body.contains("unknown_session"));

    let (status, body) = call(
        &app,
        "POST",
        "/sessions",
        Some(json!({"mode": "compare", "models": [{"name": MODELS[0], "records": records(MODELS[0], 2)}]})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body.contains("too_few_models"));
    assert_blind(&body);

    let (status, _) = call(
        &app,
        "POST",
        "/sessions",
        Some(json!({"mode": "grade", "models": [{"name": "m", "path": "preds.jsonl"}]})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (_, body) = call(
        &app,
        "POST",
        "/sessions",
        Some(json!({"mode": "grade", "models": [{"name": MODELS[0], "records": records(MODELS[0], 1)}]})),
    )
    .await;
    let sid = serde_json::from_str::<Value>(&body).unwrap()["session_id"].as_str().unwrap().to_string();
    let (status, body) = call(
        &app,
        "POST",
        &format!("/sessions/{sid}/items/i0/events"),
        Some(json!({"kind": "choice", "winner": {"kind": "all_good"}})),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert!(body.contains("wrong_mode"));
    let (status, _) = call(
        &app,
        "POST",
        &format!("/sessions/{sid}/items/i9/events"),
        Some(json!({"kind": "grade", "arm_id": "x", "bucket": "all"})),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);
}

#[tokio::test]
async fn path_inputs_and_static_bundle() {
    let data = tempfile::tempdir().unwrap();
    let inputs = tempfile::tempdir().unwrap();
    let ui = tempfile::tempdir().unwrap();
    std::fs::write(ui.path().join("index.html"), "<html>bundle</html>").unwrap();
    for m in MODELS {
        let lines: Vec<String> = records(m, 3).as_array().unwrap().iter().map(Value::to_string).collect();
        std::fs::write(inputs.path().join(format!("{m}.jsonl")), lines.join("\n")).unwrap();
    }
    let app = app(
        data.path(),
        ServerConfig {
            ui_dir: Some(ui.path().to_path_buf()),
            inputs_dir: Some(inputs.path().to_path_buf()),
        },
    );
    let (status, body) = call(
        &app,
        "POST",
        "/sessions",
        Some(json!({"mode": "grade", "seed": 1, "models": [
            {"name": MODELS[0], "path": format!("{}.jsonl", MODELS[0])},
            {"name": MODELS[1], "path": format!("{}.jsonl", MODELS[1])},
        ]})),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    let (status, _) = call(
        &app,
        "POST",
        "/sessions",
        Some(json!({"mode": "grade", "models": [{"name": "m", "path": "../etc/passwd"}]})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, body) = call(&app, "GET", "/", None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(body.contains("bundle"));
}
