use std::net::SocketAddr;
use std::sync::Arc;

use serde_json::{json, Value};
use smartpaste::codec::diff_region;
use smartpaste::engine::{EngineConfig, FnBackend, ModelBackend, ModelOutput, ScriptedBackend, SuggestionEngine};
use smartpaste::metrics::{EventKind, SuggestionEvent};
use smartpaste::miner::PasteRegion;
use smartpaste::service::*;

const CONTENT: &str = "import os\nx = os.path(p)\nprint(x)\n";

fn state_with(backend: Box<dyn ModelBackend>, telemetry: TelemetrySink) -> ServiceState {
    ServiceState::new(
        SuggestionEngine::new(EngineConfig::default()).unwrap(),
        backend,
        telemetry,
    )
}

/// Rewrites the first pasted line by appending `# ok`.
fn appending_backend() -> Box<dyn ModelBackend> {
    Box::new(FnBackend(|prompt: &str| {
        let lines: Vec<&str> = prompt.lines().collect();
        let open = lines.iter().position(|l| *l == "<|paste_start|>").unwrap();
        let pasted = lines[open + 1];
        let target = vec![format!("{pasted} # ok")];
        Ok(ModelOutput {
            patch_text: diff_region(&[pasted.to_owned()], &target).render(),
            score: Some(-0.25),
            backend_latency_ms: 0.0,
        })
    }))
}

fn request(id: &str, region: PasteRegion) -> SuggestRequest {
    SuggestRequest {
        file_path: "src/app.py".into(),
        language: "python".into(),
        content_after_paste: CONTENT.into(),
        region,
        request_id: id.into(),
    }
}

fn event(kind: EventKind, request_id: &str, seq: usize) -> SuggestionEvent {
    SuggestionEvent {
        event_id: format!("{request_id}-{seq}"),
        request_id: request_id.into(),
        kind,
        timestamp: seq as u64,
        region: PasteRegion::new(1, 1).unwrap(),
        before_text: "x = os.path(p)".into(),
        after_text: (kind == EventKind::Accepted).then(|| "x = os.path(p) # ok".into()),
        latency_ms: 1.0,
        later_text: None,
    }
}

#[test]
fn substitution_preview_matches_splice() {
    let state = state_with(appending_backend(), TelemetrySink::in_memory());
    let r = state
        .handle_suggest(&request("r", PasteRegion::new(1, 1).unwrap()))
        .unwrap();
    let body = r.suggestion.unwrap();
    let mut lines: Vec<&str> = CONTENT.split('\n').collect();
    let edited = format!("{} # ok", lines[1]);
    lines[1] = &edited;
    assert_eq!(body.preview_region_lines, vec![lines[1].to_owned()]);
    assert_eq!(body.score, Some(-0.25));
    assert!(r.engine_latency_ms >= 0.0 && r.model_latency_ms >= 0.0);
}

#[test]
fn rejected_requests_are_counted() {
    let state = state_with(Box::new(ScriptedBackend::default()), TelemetrySink::in_memory());
    assert!(matches!(
        state.handle_suggest(&request("r", PasteRegion::new(2, 9).unwrap())),
        Err(ServiceError::BadRequest(_))
    ));
    assert!(matches!(
        state.handle_suggest(&request("", PasteRegion::new(1, 1).unwrap())),
        Err(ServiceError::BadRequest(_))
    ));
    let none = state
        .handle_suggest(&request("r", PasteRegion::new(1, 1).unwrap()))
        .unwrap();
    assert!(none.suggestion.is_none());
    assert_eq!(state.health().bad_requests, 2);
}

#[test]
fn accepted_after_shown_is_acked_once() {
    let state = state_with(appending_backend(), TelemetrySink::in_memory());
    state
        .handle_suggest(&request("q", PasteRegion::new(1, 1).unwrap()))
        .unwrap();
    assert_eq!(
        state.handle_telemetry(event(EventKind::Accepted, "q", 0)),
        Err(ServiceError::UnknownRequest("q".into()))
    );
    state.handle_telemetry(event(EventKind::Shown, "q", 1)).unwrap();
    assert_eq!(state.telemetry.len(), 1);
    state.handle_telemetry(event(EventKind::Accepted, "q", 2)).unwrap();
    assert_eq!(state.telemetry.len(), 2);
    assert!(matches!(
        state.handle_telemetry(event(EventKind::Shown, "q", 3)),
        Err(ServiceError::Conflict(_))
    ));
    assert_eq!(
        state.handle_telemetry(event(EventKind::Dismissed, "never", 0)),
        Err(ServiceError::UnknownRequest("never".into()))
    );
}

#[test]
fn concurrent_requests_keep_every_event_in_order() {
    let state = Arc::new(state_with(appending_backend(), TelemetrySink::in_memory()));
    let threads: Vec<_> = (0..16)
        .map(|t| {
            let state = Arc::clone(&state);
            std::thread::spawn(move || {
                for k in 0..25 {
                    let id = format!("t{t}-{k}");
                    let r = state
                        .handle_suggest(&request(&id, PasteRegion::new(1, 1).unwrap()))
                        .unwrap();
                    assert_eq!(r.request_id, id);
                    assert!(r.suggestion.is_some());
                    state.handle_telemetry(event(EventKind::Shown, &id, 0)).unwrap();
                    let close = if k % 2 == 0 {
                        EventKind::Accepted
                    } else {
                        EventKind::Dismissed
                    };
                    state.handle_telemetry(event(close, &id, 1)).unwrap();
                }
            })
        })
        .collect();
    for t in threads {
        t.join().unwrap();
    }
    let events = state.telemetry.events();
    assert_eq!(events.len(), 16 * 25 * 2);
    let mut seen = std::collections::HashMap::new();
    for e in &events {
        let next = seen.entry(e.request_id.clone()).or_insert(0u64);
        assert_eq!(e.timestamp, *next, "{}", e.request_id);
        *next += 1;
    }
    assert_eq!(state.health().engine.requests, 400);
}

#[test]
fn telemetry_survives_flush_and_reopen() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.ndjson");
    let state = state_with(
        Box::new(ScriptedBackend::default()),
        TelemetrySink::append_to(&path).unwrap(),
    );
    for i in 0..5 {
        let id = format!("d{i}");
        state.handle_telemetry(event(EventKind::Shown, &id, 0)).unwrap();
        state.handle_telemetry(event(EventKind::Accepted, &id, 1)).unwrap();
    }
    state.telemetry.flush().unwrap();
    drop(state);
    let text = std::fs::read_to_string(&path).unwrap();
    let stored: Vec<SuggestionEvent> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(stored.len(), 10);
    assert_eq!(stored[1].after_text.as_deref(), Some("x = os.path(p) # ok"));

    let again = TelemetrySink::append_to(&path).unwrap();
    again.record(event(EventKind::Shown, "later", 0)).unwrap();
    again.flush().unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 11);
}

#[test]
fn identical_requests_get_identical_answers() {
    let state = state_with(appending_backend(), TelemetrySink::in_memory());
    let a = state
        .handle_suggest(&request("s1", PasteRegion::new(1, 2).unwrap()))
        .unwrap();
    state
        .handle_suggest(&request("other", PasteRegion::new(2, 2).unwrap()))
        .unwrap();
    let b = state
        .handle_suggest(&request("s2", PasteRegion::new(1, 2).unwrap()))
        .unwrap();
    assert_eq!(a.suggestion, b.suggestion);
}

fn spawn(state: ServiceState) -> SocketAddr {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            serve(listener, Arc::new(state)).await.unwrap();
        });
    });
    rx.recv().unwrap()
}

#[test]
fn http_endpoints() {
    let addr = spawn(state_with(appending_backend(), TelemetrySink::in_memory()));
    let client = reqwest::blocking::Client::new();
    let url = |p: &str| format!("http://{addr}{p}");

    let body = json!({
        "file_path": "src/app.py",
        "language": "python",
        "content_after_paste": CONTENT,
        "region": {"start_line": 1, "end_line": 1},
        "request_id": "h1",
    });
    let r = client.post(url("/v1/suggest")).json(&body).send().unwrap();
    assert_eq!(r.status(), 200);
    let v: Value = r.json().unwrap();
    assert_eq!(v["request_id"], "h1");
    assert_eq!(v["suggestion"]["preview_region_lines"], json!(["x = os.path(p) # ok"]));
    assert!(v["engine_latency_ms"].is_number() && v["model_latency_ms"].is_number());

    let r = client.post(url("/v1/suggest")).body("{").send().unwrap();
    assert_eq!(r.status(), 400);
    assert_eq!(r.json::<Value>().unwrap()["error"], "bad_request");
    let mut out_of_range = body.clone();
    out_of_range["region"] = json!({"start_line": 1, "end_line": 40});
    assert_eq!(
        client
            .post(url("/v1/suggest"))
            .json(&out_of_range)
            .send()
            .unwrap()
            .status(),
        400
    );

    let post_event = |e: &SuggestionEvent| client.post(url("/v1/telemetry")).json(e).send().unwrap();
    let r = post_event(&event(EventKind::Accepted, "ghost", 0));
    assert_eq!(r.status(), 404);
    assert_eq!(r.json::<Value>().unwrap()["error"], "unknown_request");
    let r = post_event(&event(EventKind::Shown, "h1", 0));
    assert_eq!(r.status(), 200);
    assert_eq!(r.json::<Value>().unwrap(), json!({"ack": true}));
    assert_eq!(post_event(&event(EventKind::Accepted, "h1", 1)).status(), 200);
    assert_eq!(post_event(&event(EventKind::Dismissed, "h1", 2)).status(), 409);

    let h: Value = client.get(url("/v1/healthz")).send().unwrap().json().unwrap();
    assert_eq!(h["status"], "ok");
    assert_eq!(h["telemetry_events"], 2);
    assert_eq!(h["bad_requests"], 2);
    assert_eq!(h["engine"]["suggestions"], 1);
}

#[test]
fn http_reports_backend_outage() {
    let config = ServiceConfig::from_toml(
        r#"
        [backend]
        kind = "remote"
        endpoint = "http://127.0.0.1:9/predict"
        timeout_ms = 200
        "#,
    )
    .unwrap();
    let addr = spawn(build_state(&config).unwrap());
    let body = json!({
        "file_path": "a.py",
        "language": "python",
        "content_after_paste": CONTENT,
        "region": {"start_line": 1, "end_line": 1},
        "request_id": "x",
    });
    let r = reqwest::blocking::Client::new()
        .post(format!("http://{addr}/v1/suggest"))
        .json(&body)
        .send()
        .unwrap();
    assert_eq!(r.status(), 503);
    assert_eq!(r.json::<Value>().unwrap()["error"], "backend_unavailable");
}
