use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use gec_robust::{Annotation, Edit, GecSample, TokenSeq};
use gec_robust_cli::annotation::{AnnotationStore, CorpusItem};
use gec_robust_cli::server::router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn corpus() -> Vec<CorpusItem> {
    let friend = GecSample::new(
        "friend",
        TokenSeq::split("I have a lot of friend ."),
        vec![Annotation::new(0, vec![Edit::new(5, 6, ["friends"])])],
    )
    .unwrap();
    let talk = GecSample::new(
        "talk",
        TokenSeq::split("He will give a talk yesterday ."),
        vec![Annotation::new(0, vec![Edit::new(1, 3, ["gave"])])],
    )
    .unwrap();
    CorpusItem::from_samples(vec![friend, talk])
}

fn app(dir: &tempfile::TempDir) -> Router {
    router(Arc::new(AnnotationStore::open(dir.path().join("store.jsonl"), corpus()).unwrap()))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
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
    (status, serde_json::from_slice(&bytes).unwrap())
}

#[tokio::test]
async fn next_task_carries_error_spans() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    let (status, task) = call(&app, "GET", "/cases/next", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(task["case_id"], "friend");
    assert_eq!(task["status"], "open");
    assert_eq!(task["error_spans"], json!([{"start": 5, "end": 6, "replacement": "friends"}]));
    let (status, _) = call(&app, "GET", "/cases/missing", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn validate_reports_overlap_without_state_change() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    let (_, before) = call(&app, "GET", "/progress", None).await;
    let (status, body) = call(
        &app,
        "POST",
        "/cases/friend/validate",
        Some(json!({"perturbed": "I have a lot of friends ."})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["passes"], false);
    let reasons: Vec<&str> = body["audit"]["structural_violations"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v["reason"].as_str().unwrap())
        .collect();
    assert!(reasons.contains(&"overlaps_error_span"));

    let (_, untouched) = call(&app, "POST", "/cases/friend/validate", Some(json!({"perturbed": "I have a lot of friend ."}))).await;
    assert_eq!(untouched["edits"], json!([]));
    assert_eq!(untouched["passes"], true);

    let (_, after) = call(&app, "GET", "/progress", None).await;
    assert_eq!(before, after);
    let (status, _) = call(&app, "POST", "/cases/nope/validate", Some(json!({"perturbed": "x"}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&app, "POST", "/cases/friend/validate", Some(json!({"text": "x"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn submissions_complete_a_task() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    let (status, body) = call(&app, "POST", "/cases/friend/submit", Some(json!({"perturbed": "I have a lot of friends ."}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["violations"][0]["reason"], "overlaps_error_span");
    let (status, body) = call(&app, "POST", "/cases/friend/submit", Some(json!({"perturbed": "I have a lot of friend ."}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["violations"][0]["reason"], "empty_perturbation");

    let variants = [
        "We have a lot of friend .",
        "I had a lot of friend .",
        "I have a lot of friend here .",
        "I have lot of friend .",
        "Now I have a lot of friend .",
    ];
    let mut last = Value::Null;
    for v in variants {
        let (status, task) = call(&app, "POST", "/cases/friend/submit", Some(json!({ "perturbed": v }))).await;
        assert_eq!(status, StatusCode::OK, "{v}: {task}");
        last = task;
    }
    assert_eq!(last["status"], "complete");
    assert_eq!(last["variants"].as_array().unwrap().len(), 5);

    let (status, _) = call(&app, "POST", "/cases/friend/submit", Some(json!({"perturbed": "I have a lot of friend !"}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, _) = call(&app, "POST", "/cases/nope/submit", Some(json!({"perturbed": "x"}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (_, next) = call(&app, "GET", "/cases/next", None).await;
    assert_eq!(next["case_id"], "talk");
    let (_, progress) = call(&app, "GET", "/progress", None).await;
    assert_eq!(progress["complete"], 1);
    assert_eq!(progress["open"], 1);
    assert_eq!(progress["accepted_variants"], 5);
    assert_eq!(progress["rejected_submissions"], 2);
    assert_eq!(progress["avg_perturbing_edits"], 1.0);
}

#[tokio::test]
async fn semantic_risk_passes_but_needs_review() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    let (status, task) = call(&app, "POST", "/cases/talk/submit", Some(json!({"perturbed": "He will give a talk ."}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(task["variants"][0]["audit"]["needs_human_review"], true);
    assert_eq!(task["variants"][0]["actions"], json!(["delete"]));
}

#[tokio::test]
async fn accepted_submissions_reaudit_offline() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("store.jsonl");
    {
        let app = router(Arc::new(AnnotationStore::open(&path, corpus()).unwrap()));
        for v in ["He will give the talk yesterday .", "He will give a long talk yesterday .", "He will give a talk today ."] {
            let (status, _) = call(&app, "POST", "/cases/talk/submit", Some(json!({ "perturbed": v }))).await;
            assert_eq!(status, StatusCode::OK);
        }
        call(&app, "POST", "/cases/talk/submit", Some(json!({"perturbed": "He gave a talk yesterday ."}))).await;
    }
    let store = AnnotationStore::open(&path, corpus()).unwrap();
    let cases = store.to_cases().unwrap();
    assert_eq!(cases.len(), 1);
    let report = gec_robust::perturb::audit_faithfulness(&cases[0], Default::default());
    assert!(report.passes());
    assert_eq!(cases[0].variants.len(), 3);
}
