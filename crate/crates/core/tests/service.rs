use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use tweezer_thermo::physics::{LikelihoodModel, TrapConfig};
use tweezer_thermo::protocols::OutcomeSource;
use tweezer_thermo::service::{router, AppState, MAX_POSTERIOR_POINTS};
use tweezer_thermo::simulation::{SyntheticConfig, SyntheticSource};

struct Reply {
    status: StatusCode,
    revision: Option<String>,
    body: Value,
}

async fn send(app: &Router, method: &str, uri: &str, body: Option<Value>, revision: Option<u64>) -> Reply {
    let mut req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    if let Some(r) = revision {
        req = req.header("x-revision", r.to_string());
    }
    let body = body.map_or(Body::empty(), |b| Body::from(b.to_string()));
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let revision = resp.headers().get("x-revision").map(|v| v.to_str().unwrap().to_string());
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let body = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    Reply { status, revision, body }
}

async fn create(app: &Router, config: Value) -> Value {
    let r = send(app, "POST", "/api/sessions", Some(config), None).await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", r.body);
    r.body
}

fn id(v: &Value) -> String {
    v["id"].as_str().unwrap().to_string()
}

/// Envelope fields that describe inference state, without identity or revision.
fn state_of(v: &Value) -> Value {
    let mut v = v.clone();
    for key in ["id", "created_unix_ms", "revision"] {
        v.as_object_mut().unwrap().remove(key);
    }
    v["info_gain"].as_object_mut().unwrap().remove("revision");
    v
}

#[tokio::test]
async fn create_recommends_first_time() {
    let app = router(AppState::new());
    let r = send(&app, "POST", "/api/sessions", Some(json!({"trap": "deep", "lambda": 1.65})), None).await;
    assert_eq!(r.status, StatusCode::CREATED);
    assert_eq!(r.revision.as_deref(), Some("0"));
    let v = r.body;
    assert_eq!(v["next_time_us"], 22.0);
    assert_eq!(v["revision"], 0);
    assert_eq!(v["shots"], 0);
    assert_eq!(v["config"]["prior_uk"], json!([14.5, 125.0]));
    let thetas = v["posterior"]["theta_uk"].as_array().unwrap();
    assert_eq!(thetas.len(), MAX_POSTERIOR_POINTS);
    assert_eq!(thetas[0], 14.5);
    assert_eq!(thetas[MAX_POSTERIOR_POINTS - 1], 125.0);
    assert_eq!(v["info_gain"]["t_us"].as_array().unwrap().len(), 100);
    // Jeffreys prior: geometric mean of the support
    assert!((v["estimate_uk"].as_f64().unwrap() - (14.5f64 * 125.0).sqrt()).abs() < 1e-9);

    let single = create(&app, json!({"single_atom": true})).await;
    assert_eq!(single["next_time_us"], 14.0);
    let shallow = create(&app, json!({"trap": "shallow"})).await;
    assert_eq!(shallow["next_time_us"], 42.0);
    let fixed = create(&app, json!({"policy": "a_priori"})).await;
    assert_eq!(fixed["next_time_us"], 22.0);
    let empty_body = send(&app, "POST", "/api/sessions", None, None).await;
    assert_eq!(empty_body.status, StatusCode::CREATED);
}

#[tokio::test]
async fn invalid_configs_are_field_errors() {
    let app = router(AppState::new());
    let r = send(&app, "POST", "/api/sessions", Some(json!({"prior_uk": [125.0, 14.5]})), None).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(r.body["fields"][0]["field"], "prior_uk");

    let r = send(&app, "POST", "/api/sessions", Some(json!({"depth_uk": -1.0, "lambda": 0.0, "t_step_us": 0.0})), None).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    let fields: Vec<&str> = r.body["fields"].as_array().unwrap().iter().map(|f| f["field"].as_str().unwrap()).collect();
    assert_eq!(fields, ["depth_uk", "lambda", "t_step_us"]);

    let r = send(&app, "POST", "/api/sessions", Some(json!({"depht_uk": 290.0})), None).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(r.body["fields"][0]["field"], "body");
}

#[tokio::test]
async fn identical_configs_give_identical_recommendations() {
    let app = router(AppState::new());
    let a = create(&app, json!({"trap": "deep"})).await;
    let b = create(&app, json!({"trap": "deep"})).await;
    assert_ne!(a["id"], b["id"]);
    assert_eq!(state_of(&a), state_of(&b));
}

#[tokio::test]
async fn outcomes_update_revision_and_trace() {
    let app = router(AppState::new());
    let s = create(&app, json!({})).await;
    let uri = format!("/api/sessions/{}/outcomes", id(&s));
    let r = send(&app, "POST", &uri, Some(json!({"t_us": 22, "n": 1})), Some(0)).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.body);
    assert_eq!(r.revision.as_deref(), Some("1"));
    assert_eq!(r.body["trace"].as_array().unwrap().len(), 1);
    assert_eq!(r.body["trace"][0]["n"], 1);
    assert_ne!(r.body["estimate_uk"], s["estimate_uk"]);

    // t_us defaults to the recommendation
    let r = send(&app, "POST", &uri, Some(json!({"n": 0})), None).await;
    assert_eq!(r.status, StatusCode::OK);
    let g = send(&app, "GET", &format!("/api/sessions/{}", id(&s)), None, None).await;
    assert_eq!(g.body["trace"].as_array().unwrap().len(), 2);
    assert_eq!(g.body["revision"], 2);

    let ig = send(&app, "GET", &format!("/api/sessions/{}/infogain", id(&s)), None, None).await;
    assert_eq!(ig.status, StatusCode::OK);
    let gains: Vec<f64> = ig.body["gain"].as_array().unwrap().iter().map(|g| g.as_f64().unwrap()).collect();
    let best = gains.iter().enumerate().fold(0, |b, (i, &g)| if g > gains[b] { i } else { b });
    assert_eq!(ig.body["t_us"][best], g.body["next_time_us"]);
}

#[tokio::test]
async fn bad_outcomes_and_stale_revisions_are_rejected() {
    let app = router(AppState::new());
    let s = create(&app, json!({})).await;
    let uri = format!("/api/sessions/{}/outcomes", id(&s));
    for n in [json!(-1), json!(1.5), json!("two")] {
        let r = send(&app, "POST", &uri, Some(json!({"n": n})), None).await;
        assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY, "n = {n}");
        assert_eq!(r.body["fields"][0]["field"], "n");
    }
    let r = send(&app, "POST", &uri, Some(json!({"t_us": 30, "n": 1})), None).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(r.body["fields"][0]["field"], "t_us");
    let r = send(&app, "POST", &uri, Some(json!({"t_us": 30, "n": 1, "override": true})), None).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.body["trace"][0]["overridden"], true);

    let r = send(&app, "POST", &uri, Some(json!({"n": 1})), Some(0)).await;
    assert_eq!(r.status, StatusCode::CONFLICT);
    assert_eq!(r.body["revision"], 1);
    let r = send(&app, "POST", &format!("/api/sessions/{}/undo", id(&s)), None, Some(7)).await;
    assert_eq!(r.status, StatusCode::CONFLICT);
}

#[tokio::test]
async fn zero_release_leaves_the_estimate() {
    let app = router(AppState::new());
    let s = create(&app, json!({})).await;
    let uri = format!("/api/sessions/{}/outcomes", id(&s));
    let r = send(&app, "POST", &uri, Some(json!({"t_us": 0, "n": 3, "override": true})), None).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.body);
    assert_eq!(r.body["estimate_uk"], s["estimate_uk"]);
    assert_eq!(r.body["posterior"], s["posterior"]);
    assert_eq!(r.body["revision"], 1);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_posts_at_one_revision() {
    let app = router(AppState::new());
    let s = create(&app, json!({})).await;
    let uri = format!("/api/sessions/{}/outcomes", id(&s));
    let (a, b) = tokio::join!(
        send(&app, "POST", &uri, Some(json!({"n": 1})), Some(0)),
        send(&app, "POST", &uri, Some(json!({"n": 2})), Some(0)),
    );
    let mut statuses = [a.status, b.status];
    statuses.sort();
    assert_eq!(statuses, [StatusCode::OK, StatusCode::CONFLICT]);
    let g = send(&app, "GET", &format!("/api/sessions/{}", id(&s)), None, None).await;
    assert_eq!(g.body["shots"], 1);
}

#[tokio::test]
async fn undo_restores_the_fresh_state() {
    let app = router(AppState::new());
    let s = create(&app, json!({"trap": "shallow"})).await;
    let base = format!("/api/sessions/{}", id(&s));
    send(&app, "POST", &format!("{base}/outcomes"), Some(json!({"n": 1})), None).await;
    let r = send(&app, "POST", &format!("{base}/undo"), None, Some(1)).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.body["revision"], 2);
    assert_eq!(state_of(&r.body), state_of(&s));
    let r = send(&app, "POST", &format!("{base}/undo"), None, None).await;
    assert_eq!(r.status, StatusCode::CONFLICT);
}

#[tokio::test]
async fn unknown_and_deleted_sessions_are_404() {
    let app = router(AppState::new());
    for (method, uri) in [
        ("GET", "/api/sessions/nope"),
        ("DELETE", "/api/sessions/nope"),
        ("POST", "/api/sessions/nope/undo"),
        ("GET", "/api/sessions/nope/infogain"),
    ] {
        assert_eq!(send(&app, method, uri, None, None).await.status, StatusCode::NOT_FOUND, "{method} {uri}");
    }
    let r = send(&app, "POST", "/api/sessions/nope/outcomes", Some(json!({"n": 1})), None).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);

    let s = create(&app, json!({})).await;
    let uri = format!("/api/sessions/{}", id(&s));
    assert_eq!(send(&app, "DELETE", &uri, None, None).await.status, StatusCode::NO_CONTENT);
    assert_eq!(send(&app, "GET", &uri, None, None).await.status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn recorded_session_matches_cli_estimate() {
    let app = router(AppState::new());
    let s = create(&app, json!({"trap": "deep", "lambda": 1.65})).await;
    let uri = format!("/api/sessions/{}/outcomes", id(&s));
    let trap = TrapConfig::deep();
    let model = LikelihoodModel::multi_atom(trap, 1.65, 7).unwrap();
    let mut source = SyntheticSource::new(SyntheticConfig::new(40e-6, 1.65, trap, 21).unwrap(), model, 0);
    let mut next = s["next_time_us"].as_f64().unwrap();
    let mut last = Value::Null;
    let mut rows = String::from("t_us,atoms\n");
    for _ in 0..210 {
        let n = source.outcome(next * 1e-6).unwrap();
        let r = send(&app, "POST", &uri, Some(json!({"t_us": next, "n": n})), None).await;
        assert_eq!(r.status, StatusCode::OK, "{}", r.body);
        rows.push_str(&format!("{next},{n}\n"));
        next = r.body["next_time_us"].as_f64().unwrap();
        last = r.body;
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("session.csv");
    std::fs::write(&path, rows).unwrap();
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let args = ["tweezer-thermo", "estimate", path.to_str().unwrap(), "--lambda", "1.65", "--json"];
    let code = tweezer_thermo::cli::run(args, &mut &b""[..], &mut out, &mut err);
    assert_eq!(code, 0, "{}", String::from_utf8_lossy(&err));
    let cli: Value = serde_json::from_slice(&out).unwrap();
    let (a, b) = (last["estimate_uk"].as_f64().unwrap(), cli["estimate_uk"].as_f64().unwrap());
    assert!((a - b).abs() <= 1e-12 * a, "{a} vs {b}");
    assert_eq!(last["shots"], 210);
}

#[tokio::test]
async fn sessions_survive_a_save_and_load() {
    let state = AppState::new();
    let app = router(state.clone());
    let s = create(&app, json!({"trap": "shallow"})).await;
    let uri = format!("/api/sessions/{}", id(&s));
    for n in [1, 0, 2] {
        send(&app, "POST", &format!("{uri}/outcomes"), Some(json!({"n": n})), None).await;
    }
    let before = send(&app, "GET", &uri, None, None).await.body;
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("sessions.json");
    state.save(&file).unwrap();
    let restored = AppState::load(&file).unwrap();
    assert_eq!(restored.len(), 1);
    let after = send(&router(restored), "GET", &uri, None, None).await.body;
    assert_eq!(before, after);
}
