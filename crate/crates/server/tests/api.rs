use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use proptest::prelude::*;
use serde_json::{json, Value};
use tower::ServiceExt;

use langrid_server::{router, AppState, ServerOptions};

fn app() -> Router {
    router(AppState::new(ServerOptions::default()))
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    call(app, Method::GET, uri, None).await
}

async fn post(app: &Router, uri: &str, body: Value) -> (StatusCode, Value) {
    call(app, Method::POST, uri, Some(body)).await
}

fn tiny_run(session: Option<&str>) -> Value {
    let mut body = json!({
        "published": "smoke_umaze",
        "overrides": {"train_episodes": 50, "train_repeats": 2, "test_episodes": 5, "test_repeats": 2}
    });
    if let Some(s) = session {
        body["session"] = json!(s);
    }
    body
}

async fn wait_terminal(app: &Router, id: &str) -> Value {
    let start = Instant::now();
    loop {
        let (status, h) = get(app, &format!("/runs/{id}")).await;
        assert_eq!(status, StatusCode::OK);
        if ["complete", "failed", "cancelled"].contains(&h["status"].as_str().unwrap()) {
            return h;
        }
        assert!(start.elapsed() < Duration::from_secs(120), "run {id} did not finish");
        tokio::time::sleep(Duration::from_millis(5)).await;
    }
}

fn states(view: &Value, item: usize) -> Vec<String> {
    view["session"]["items"][item]["states"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["id"].as_str().unwrap().to_string())
        .collect()
}

#[tokio::test]
async fn registry_holds_the_builtins() {
    let app = app();
    let (status, apps) = get(&app, "/applications").await;
    assert_eq!(status, StatusCode::OK);
    let mut keys = Vec::new();
    for a in apps.as_array().unwrap() {
        for s in a["sub_configs"].as_array().unwrap() {
            keys.push(format!("{}/{}", a["id"].as_str().unwrap(), s.as_str().unwrap()));
        }
        let stores: Vec<&str> = a["stores"].as_array().unwrap().iter().map(|s| s["id"].as_str().unwrap()).collect();
        assert!(stores.contains(&"rule") && stores.contains(&"numeric"));
        assert!(!stores.contains(&"llm"), "no gateway configured");
    }
    for k in ["classroom/default", "frozenlake/4x4", "maze/umaze", "maze/double-t"] {
        assert!(keys.iter().any(|x| x == k), "{k}");
    }
}

#[tokio::test]
async fn saved_stores_are_listed_and_usable() {
    use langrid_core::adapters::RuleAdapter;
    use langrid_core::encoders::{EncoderKind, EncoderSpec};
    use langrid_core::env::builtin;
    use langrid_core::observations::{collect, CollectMode};
    let dir = tempfile::tempdir().unwrap();
    let env = std::sync::Arc::new(builtin("maze", "umaze").unwrap());
    let bow = EncoderSpec { id: EncoderKind::Bow, dim: 0, vocab: None, model: None };
    collect(&env, &RuleAdapter::new(env.clone()), &bow, None, CollectMode::Explore { episodes: 50 }, 3)
        .unwrap()
        .save(&dir.path().join("walk.jsonl"))
        .unwrap();
    let app = router(AppState::new(ServerOptions {
        stores_dir: Some(dir.path().to_path_buf()),
        ..ServerOptions::default()
    }));
    let (_, apps) = get(&app, "/applications").await;
    let maze = apps.as_array().unwrap().iter().find(|a| a["id"] == "maze").unwrap();
    let saved: Vec<&Value> = maze["stores"].as_array().unwrap().iter().filter(|s| s["id"] == "file:walk").collect();
    assert_eq!(saved.len(), 1);
    assert_eq!(saved[0]["environment"], "maze/umaze");
    let (status, _) = post(&app, "/sessions", json!({
        "application": "maze", "sub_config": "umaze", "store": "file:walk", "input": "a wall is on your left"
    }))
    .await;
    assert_eq!(status, StatusCode::OK);
    let (status, _) = post(&app, "/sessions", json!({
        "application": "maze", "sub_config": "double-t", "store": "file:walk", "input": "x"
    }))
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn previews_render_layouts() {
    let app = app();
    let (status, p) = get(&app, "/applications/maze/preview?sub_config=double-t").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(p["goals"][0]["id"], "[8,6]");
    assert!(p["svg"].as_str().unwrap().contains("data-cell=\"[8,6]\""));
    let (_, p) = get(&app, "/applications/maze/preview?sub_config=umaze&state=[3,2]").await;
    assert!(p["text"].as_str().unwrap().contains('A'));
    assert_eq!(get(&app, "/applications/chess/preview").await.0, StatusCode::NOT_FOUND);
    assert_eq!(get(&app, "/applications/maze/preview?state=[0,0]").await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn published_configs_are_served() {
    let (status, list) = get(&app(), "/configs/published").await;
    assert_eq!(status, StatusCode::OK);
    let names: Vec<&str> = list.as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    assert!(names.contains(&"baseline_umaze") && names.contains(&"smoke_umaze"));
    assert!(list[0]["toml"].as_str().unwrap().contains("[environment]"));
}

#[tokio::test]
async fn direct_session_flow() {
    let app = app();
    let (status, v) = post(&app, "/sessions", json!({
        "application": "maze", "sub_config": "umaze", "store": "rule",
        "input": "a wall is on your left\nthe goal is ahead"
    }))
    .await;
    assert_eq!(status, StatusCode::OK, "{v}");
    let id = v["id"].as_str().unwrap().to_string();
    let items = v["session"]["items"].as_array().unwrap();
    assert_eq!(items.len(), 2);
    assert!(items.iter().all(|i| i["confirmed"] == false));
    assert_eq!(v["previews"].as_array().unwrap().len(), 2);

    let (_, v) = post(&app, &format!("/sessions/{id}/instructions"), json!({"text": "the goal is here"})).await;
    assert_eq!(v["session"]["items"].as_array().unwrap().len(), 3);

    let before = states(&v, 0);
    let (status, v) = post(&app, &format!("/sessions/{id}/confirm"), json!({"order": 1, "decision": "reject"})).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["session"]["items"][0]["rounds"].as_array().unwrap().len(), 1);
    assert_ne!(states(&v, 0).first(), before.first());

    let (_, v) = post(&app, &format!("/sessions/{id}/confirm"), json!({"order": 2, "decision": "edit", "text": "a wall is above you"})).await;
    assert_eq!(v["session"]["items"][1]["instruction"]["source"], "user-edited");

    for order in 1..=3 {
        let (status, _) = post(&app, &format!("/sessions/{id}/confirm"), json!({"order": order, "decision": "accept"})).await;
        assert_eq!(status, StatusCode::OK);
    }
    let (status, err) = post(&app, &format!("/sessions/{id}/confirm"), json!({"order": 1, "decision": "accept"})).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["error"]["code"], "already_confirmed");
    let (_, v) = get(&app, &format!("/sessions/{id}")).await;
    assert_eq!(v["all_confirmed"], true);
}

#[tokio::test]
async fn reject_runs_into_the_round_limit() {
    let app = app();
    let (_, v) = post(&app, "/sessions", json!({
        "application": "maze", "sub_config": "umaze", "store": "rule", "input": "a wall is on your left",
        "config": {"round_limit": 2}
    }))
    .await;
    let id = v["id"].as_str().unwrap();
    let uri = format!("/sessions/{id}/confirm");
    for _ in 0..2 {
        assert_eq!(post(&app, &uri, json!({"order": 1, "decision": "reject"})).await.0, StatusCode::OK);
    }
    let (status, err) = post(&app, &uri, json!({"order": 1, "decision": "reject"})).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["error"]["code"], "round_limit");
}

#[tokio::test]
async fn import_grounds_the_classroom_fixture() {
    let app = app();
    let (status, v) = post(&app, "/sessions", json!({
        "application": "classroom", "store": "rule", "mode": "import", "import": "classroom"
    }))
    .await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert_eq!(states(&v, 0)[0], "[1,3]");
    assert_eq!(states(&v, 1)[0], "[3,3]");
}

#[tokio::test]
async fn request_errors_carry_codes() {
    let app = app();
    let (status, err) = post(&app, "/sessions", json!({"application": "maze", "store": "rule"})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(err["error"]["code"], "bad_request");
    let (status, err) = post(&app, "/sessions", json!({"application": "maze", "store": "rule", "input": "  \n "})).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(err["error"]["code"], "empty_plan");
    let (status, err) = post(&app, "/sessions", json!({"application": "maze", "store": "llm", "input": "x"})).await;
    assert_eq!(status, StatusCode::NOT_FOUND, "{err}");
    let (status, _) = post(&app, "/sessions/session-99/confirm", json!({"order": 1, "decision": "accept"})).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(get(&app, "/runs/run-99").await.0, StatusCode::NOT_FOUND);
    let (status, _) = post(&app, "/runs", json!({"published": "smoke_umaze", "config_toml": "x"})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, err) = post(&app, "/runs", json!({"published": "smoke_umaze", "overrides": {"train_repeats": 0}})).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{err}");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn tiny_run_serves_both_arms() {
    let app = app();
    let (_, v) = post(&app, "/sessions", json!({
        "application": "maze", "sub_config": "umaze", "store": "rule", "input": "a wall is on your left"
    }))
    .await;
    let sid = v["id"].as_str().unwrap();
    let (status, err) = post(&app, "/runs", tiny_run(Some(sid))).await;
    assert_eq!(status, StatusCode::CONFLICT, "unconfirmed session");
    assert_eq!(err["error"]["code"], "session_open");
    post(&app, &format!("/sessions/{sid}/confirm"), json!({"order": 1, "decision": "accept"})).await;

    let (status, h) = post(&app, "/runs", tiny_run(Some(sid))).await;
    assert_eq!(status, StatusCode::OK, "{h}");
    let id = h["id"].as_str().unwrap().to_string();
    let mut last = (0u8, 0u64);
    let start = Instant::now();
    let h = loop {
        let (_, h) = get(&app, &format!("/runs/{id}")).await;
        let rank = match h["status"].as_str().unwrap() {
            "pending" => 0,
            "running" => 1,
            _ => 2,
        };
        let done = h["progress"]["episodes_done"].as_u64().unwrap();
        assert!(rank >= last.0 && done >= last.1, "regressed: {h}");
        last = (rank, done);
        if rank == 2 {
            break h;
        }
        assert!(start.elapsed() < Duration::from_secs(120));
        tokio::time::sleep(Duration::from_millis(1)).await;
    };
    assert_eq!(h["status"], "complete");
    assert_eq!(h["progress"]["episodes_done"], h["progress"]["episodes_total"]);
    let (status, r) = get(&app, &format!("/runs/{id}/results")).await;
    assert_eq!(status, StatusCode::OK);
    let arms: Vec<&str> = r["summary"]["arms"].as_array().unwrap().iter().map(|a| a["name"].as_str().unwrap()).collect();
    assert_eq!(arms, ["qlearn-numeric-plain", "qlearn-numeric-instr"]);
    assert_eq!(r["summary"]["arms"][0]["train"]["n"], 100);
    assert_eq!(r["config"]["sub_goals"][0]["text"], "a wall is on your left");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn cancel_stops_a_run_and_is_idempotent_after() {
    let app = app();
    let (_, h) = post(&app, "/runs", json!({"published": "baseline_double_t"})).await;
    let id = h["id"].as_str().unwrap().to_string();
    let (status, h) = call(&app, Method::DELETE, &format!("/runs/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(h["cancel_requested"], true);
    let h = wait_terminal(&app, &id).await;
    assert_eq!(h["status"], "cancelled");
    let (status, err) = get(&app, &format!("/runs/{id}/results")).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["error"]["code"], "no_results");
    let (status, again) = call(&app, Method::DELETE, &format!("/runs/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(again["status"], "cancelled");

    let (_, h) = post(&app, "/runs", tiny_run(None)).await;
    let done = wait_terminal(&app, h["id"].as_str().unwrap()).await;
    assert_eq!(done["status"], "complete");
    let (_, after) = call(&app, Method::DELETE, &format!("/runs/{}", done["id"].as_str().unwrap()), None).await;
    assert_eq!(after["status"], "complete");
    assert_eq!(after["cancel_requested"], false);
}

#[derive(Debug, Clone)]
enum Op {
    Session(bool),
    Append(usize),
    Confirm(usize, u32, u8),
    Launch(Option<usize>),
    Poll(usize),
    Cancel(usize),
    Results(usize),
    List,
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        any::<bool>().prop_map(Op::Session),
        (0usize..4).prop_map(Op::Append),
        (0usize..4, 0u32..4, 0u8..3).prop_map(|(s, o, d)| Op::Confirm(s, o, d)),
        proptest::option::of(0usize..4).prop_map(Op::Launch),
        (0usize..4).prop_map(Op::Poll),
        (0usize..4).prop_map(Op::Cancel),
        (0usize..4).prop_map(Op::Results),
        Just(Op::List),
    ]
}

fn rank(status: &str) -> u8 {
    match status {
        "pending" => 0,
        "running" => 1,
        _ => 2,
    }
}

/// Any sequence of calls gets well-formed answers, no 5xx, and leaves every
/// run moving forward only.
async fn exercise(ops: Vec<Op>) {
    let app = app();
    let mut sessions: Vec<String> = Vec::new();
    let mut runs: Vec<(String, u8, u64)> = Vec::new();
    let pick = |v: &[String], i: usize| v.get(i % v.len().max(1)).cloned().unwrap_or_else(|| "missing".into());
    for op in ops {
        let (status, body) = match &op {
            Op::Session(import) => {
                let body = if *import {
                    json!({"application": "classroom", "store": "rule", "mode": "import", "import": "classroom"})
                } else {
                    json!({"application": "maze", "sub_config": "umaze", "store": "numeric", "input": "[2,1]\n[3,3]"})
                };
                let r = post(&app, "/sessions", body).await;
                if r.0 == StatusCode::OK {
                    sessions.push(r.1["id"].as_str().unwrap().into());
                }
                r
            }
            Op::Append(s) => post(&app, &format!("/sessions/{}/instructions", pick(&sessions, *s)), json!({"text": "[1,3]"})).await,
            Op::Confirm(s, order, d) => {
                let decision = ["accept", "reject", "edit"][*d as usize];
                post(&app, &format!("/sessions/{}/confirm", pick(&sessions, *s)), json!({"order": order, "decision": decision, "text": "[1,1]"})).await
            }
            Op::Launch(s) => {
                let session = s.map(|i| pick(&sessions, i));
                let mut body = tiny_run(session.as_deref());
                body["overrides"]["train_episodes"] = json!(20);
                let r = post(&app, "/runs", body).await;
                if r.0 == StatusCode::OK {
                    runs.push((r.1["id"].as_str().unwrap().into(), 0, 0));
                }
                r
            }
            Op::Poll(i) | Op::Cancel(i) | Op::Results(i) => {
                let ids: Vec<String> = runs.iter().map(|r| r.0.clone()).collect();
                let id = pick(&ids, *i);
                match op {
                    Op::Poll(_) => get(&app, &format!("/runs/{id}")).await,
                    Op::Cancel(_) => call(&app, Method::DELETE, &format!("/runs/{id}"), None).await,
                    _ => get(&app, &format!("/runs/{id}/results")).await,
                }
            }
            Op::List => get(&app, "/runs").await,
        };
        assert!(!status.is_server_error(), "{op:?}: {status} {body}");
        if !status.is_success() {
            assert!(body["error"]["code"].is_string(), "{op:?}: {body}");
        }
        if let Op::Results(_) = op {
            if status.is_success() {
                assert!(body["summary"]["arms"].is_array());
            }
        }
        let (_, list) = get(&app, "/runs").await;
        for h in list.as_array().unwrap() {
            let entry = runs.iter_mut().find(|r| r.0 == h["id"].as_str().unwrap()).unwrap();
            let (r, done) = (rank(h["status"].as_str().unwrap()), h["progress"]["episodes_done"].as_u64().unwrap());
            assert!(r >= entry.1 && done >= entry.2, "run regressed: {h}");
            assert!(done <= h["progress"]["episodes_total"].as_u64().unwrap() || r == 0);
            (entry.1, entry.2) = (r, done);
        }
    }
    for (id, _, _) in &runs {
        let h = wait_terminal(&app, id).await;
        let (status, _) = get(&app, &format!("/runs/{id}/results")).await;
        assert_eq!(status.is_success(), h["status"] == "complete", "{h}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]
    #[test]
    fn random_call_orders_never_corrupt_state(ops in proptest::collection::vec(op(), 1..14)) {
        tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .unwrap()
            .block_on(exercise(ops));
    }
}
