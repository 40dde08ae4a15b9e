mod common;

use std::time::{Duration, Instant};

use common::{start_server, write_stub_windows, StreamClient, SHAPE};
use cortexkey::protocol::{ClientFrame, ControlAction, ModelList, ReplayCreated, ServerFrame};
use cortexkey::stub::{constant_stub, perfect_stub, stub_window};
use cortexkey_core::ingest::Standardizer;
use cortexkey_core::model::{ModelArtifact, TrainSpec, WindowShape};
use cortexkey_core::replay::{Key, PredictionEvent, ReplayState};
use cortexkey_core::synthetic::sequence_task;
use serde_json::{json, Value};

fn rows(values: &[f64]) -> Vec<Vec<f64>> {
    values.chunks(SHAPE.n_channels).map(<[f64]>::to_vec).collect()
}

/// A GNB fitted on random 200×19 windows, so predictions are not trivial.
fn fitted_gnb() -> ModelArtifact {
    let raw = sequence_task(5, 30, SHAPE.n_times, SHAPE.n_channels);
    let s = Standardizer::fit(&raw).unwrap();
    let (model, _) = TrainSpec::Gnb.fit_with_history(&s.apply_dataset(&raw).unwrap()).unwrap();
    ModelArtifact::new(model, s, SHAPE).unwrap().with_meta(json!({"test_accuracy": 0.5}))
}

async fn replay(addr: std::net::SocketAddr, body: Value) -> reqwest::Response {
    reqwest::Client::new()
        .post(format!("http://{addr}/replay"))
        .json(&body)
        .send()
        .await
        .unwrap()
}

async fn session(addr: std::net::SocketAddr, model: &str, windows: &str, speed: f64) -> String {
    let r = replay(addr, json!({"model": model, "windows": windows, "speed": speed})).await;
    assert_eq!(r.status(), 200);
    r.json::<ReplayCreated>().await.unwrap().session
}

fn prediction(frame: ServerFrame) -> PredictionEvent {
    match frame {
        ServerFrame::Prediction(e) => e,
        other => panic!("expected a prediction, got {other:?}"),
    }
}

fn state(frame: ServerFrame) -> ReplayState {
    match frame {
        ServerFrame::State { value } => value,
        other => panic!("expected a state frame, got {other:?}"),
    }
}

fn control(action: ControlAction, value: Option<f64>) -> ClientFrame {
    ClientFrame::Control { action, value }
}

#[tokio::test(flavor = "multi_thread")]
async fn models_endpoint_lists_ids_kinds_and_meta() {
    let addr = start_server(vec![("gnb".into(), fitted_gnb()), ("rest".into(), constant_stub(SHAPE))], None).await;
    let list: ModelList = reqwest::get(format!("http://{addr}/models")).await.unwrap().json().await.unwrap();
    let ids: Vec<_> = list.models.iter().map(|m| m.id.as_str()).collect();
    assert_eq!(ids, ["gnb", "rest"]);
    assert_eq!(list.models[0].kind.as_str(), "gnb");
    assert_eq!(list.models[0].accuracy_meta, Some(json!({"test_accuracy": 0.5})));
    assert_eq!(list.models[1].kind.as_str(), "mlp");
    assert!(list.models[1].accuracy_meta.is_none());
}

#[tokio::test(flavor = "multi_thread")]
async fn predict_with_constant_stub_answers_rest() {
    let addr = start_server(vec![("rest".into(), constant_stub(SHAPE))], None).await;
    let client = reqwest::Client::new();
    let mut ordinals = Vec::new();
    for label in [1, 2, 0] {
        let w = stub_window(SHAPE, label, 0);
        let r = client
            .post(format!("http://{addr}/predict"))
            .json(&json!({"model": "rest", "window": rows(&w.values)}))
            .send()
            .await
            .unwrap();
        assert_eq!(r.status(), 200);
        let body: Value = r.json().await.unwrap();
        let mut keys: Vec<&str> = body.as_object().unwrap().keys().map(String::as_str).collect();
        keys.sort_unstable();
        assert_eq!(keys, ["class", "key", "latency_ms", "ordinal", "probs"]);
        assert_eq!(body["class"], 0);
        assert_eq!(body["key"], "none");
        let probs: Vec<f64> = serde_json::from_value(body["probs"].clone()).unwrap();
        assert_eq!(probs.len(), 3);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        assert!(body["latency_ms"].as_f64().unwrap() >= 0.0);
        ordinals.push(body["ordinal"].as_u64().unwrap());
    }
    assert!(ordinals.windows(2).all(|p| p[0] < p[1]));
}

#[tokio::test(flavor = "multi_thread")]
async fn predict_rejects_bad_requests_and_stays_up() {
    let addr = start_server(vec![("rest".into(), constant_stub(SHAPE))], None).await;
    let client = reqwest::Client::new();
    let url = format!("http://{addr}/predict");
    let short = vec![vec![0.0; 19]; 199];
    let r = client.post(&url).json(&json!({"model": "rest", "window": short})).send().await.unwrap();
    assert_eq!(r.status(), 400);
    assert!(r.json::<Value>().await.unwrap()["error"].as_str().unwrap().contains("200 rows"));

    let mut ragged = vec![vec![0.0; 19]; 200];
    ragged[7].pop();
    let r = client.post(&url).json(&json!({"model": "rest", "window": ragged})).send().await.unwrap();
    assert_eq!(r.status(), 400);

    let full = vec![vec![0.0; 19]; 200];
    let r = client.post(&url).json(&json!({"model": "nope", "window": full})).send().await.unwrap();
    assert_eq!(r.status(), 404);

    let r = client.post(&url).body("{not json").header("content-type", "application/json").send().await.unwrap();
    assert!(r.status().is_client_error());

    let r = client.post(&url).json(&json!({"model": "rest", "window": full})).send().await.unwrap();
    assert_eq!(r.status(), 200);
}

#[tokio::test(flavor = "multi_thread")]
async fn predict_matches_offline_prediction() {
    let model = fitted_gnb();
    let addr = start_server(vec![("gnb".into(), model.clone())], None).await;
    let probe = sequence_task(77, 6, SHAPE.n_times, SHAPE.n_channels);
    let client = reqwest::Client::new();
    for w in &probe.windows {
        let served: PredictionEvent = client
            .post(format!("http://{addr}/predict"))
            .json(&json!({"model": "gnb", "window": rows(&w.values)}))
            .send()
            .await
            .unwrap()
            .json()
            .await
            .unwrap();
        let offline = model.predict(&w.values).unwrap();
        assert_eq!(served.class, offline.class);
        assert_eq!(served.key, Key::from_class(offline.class).unwrap());
        assert_eq!(served.probs, offline.probabilities);
        assert_eq!(served.attention, offline.attention);
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn concurrent_predictions_agree() {
    let addr = start_server(vec![("gnb".into(), fitted_gnb())], None).await;
    let w = sequence_task(8, 1, SHAPE.n_times, SHAPE.n_channels).windows.remove(0);
    let body = json!({"model": "gnb", "window": rows(&w.values)});
    let client = reqwest::Client::new();
    let calls: Vec<_> = (0..16).map(|_| {
        let client = client.clone();
        let body = body.clone();
        tokio::spawn(async move {
            client
                .post(format!("http://{addr}/predict"))
                .json(&body)
                .send()
                .await
                .unwrap()
                .json::<PredictionEvent>()
                .await
                .unwrap()
        })
    }).collect();
    let mut events = Vec::new();
    for c in calls {
        events.push(c.await.unwrap());
    }
    for e in &events {
        assert_eq!(e.probs, events[0].probs);
        assert_eq!(e.class, events[0].class);
    }
    let mut ordinals: Vec<u64> = events.iter().map(|e| e.ordinal).collect();
    ordinals.sort_unstable();
    ordinals.dedup();
    assert_eq!(ordinals.len(), 16);
}

#[tokio::test(flavor = "multi_thread")]
async fn replay_paces_events_and_types_text() {
    let dir = tempfile::tempdir().unwrap();
    write_stub_windows(dir.path(), "three", &[1, 0, 2]);
    let addr = start_server(vec![("perfect".into(), perfect_stub(SHAPE))], Some(dir.path().into())).await;
    let token = session(addr, "perfect", "three", 1.0).await;
    let mut ws = StreamClient::connect(addr, &token).await;
    assert_eq!(state(ws.frame().await), ReplayState::Playing);

    let mut times = Vec::new();
    let mut text = String::new();
    for expected in 0..3u64 {
        let e = prediction(ws.frame().await);
        times.push(Instant::now());
        assert_eq!(e.ordinal, expected);
        assert_eq!(e.window, Some(expected as usize));
        text.extend(e.key.as_char());
    }
    assert_eq!(state(ws.frame().await), ReplayState::Finished);
    assert_eq!(text, "dl");
    for gap in times.windows(2).map(|p| p[1] - p[0]) {
        assert!((gap.as_secs_f64() - 1.0).abs() <= 0.1, "gap {gap:?}");
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn speed_zero_waits_for_play() {
    let dir = tempfile::tempdir().unwrap();
    write_stub_windows(dir.path(), "two", &[2, 1]);
    let addr = start_server(vec![("perfect".into(), perfect_stub(SHAPE))], Some(dir.path().into())).await;
    let token = session(addr, "perfect", "two", 0.0).await;
    let mut ws = StreamClient::connect(addr, &token).await;
    assert_eq!(state(ws.frame().await), ReplayState::Paused);
    assert!(ws.frame_within(Duration::from_millis(1500)).await.is_none());

    ws.send(&control(ControlAction::Speed, Some(20.0))).await;
    assert_eq!(state(ws.frame().await), ReplayState::Paused);
    ws.send(&control(ControlAction::Play, None)).await;
    assert_eq!(state(ws.frame().await), ReplayState::Playing);
    assert_eq!(prediction(ws.frame().await).key, Key::L);
    assert_eq!(prediction(ws.frame().await).key, Key::D);
    assert_eq!(state(ws.frame().await), ReplayState::Finished);
}

#[tokio::test(flavor = "multi_thread")]
async fn step_seek_and_pause_controls() {
    let dir = tempfile::tempdir().unwrap();
    write_stub_windows(dir.path(), "four", &[1, 2, 0, 1]);
    let addr = start_server(vec![("perfect".into(), perfect_stub(SHAPE))], Some(dir.path().into())).await;
    let token = session(addr, "perfect", "four", 0.0).await;
    let mut ws = StreamClient::connect(addr, &token).await;
    assert_eq!(state(ws.frame().await), ReplayState::Paused);

    ws.send(&control(ControlAction::Step, None)).await;
    let e = prediction(ws.frame().await);
    assert_eq!((e.ordinal, e.window, e.key), (0, Some(0), Key::D));
    assert_eq!(state(ws.frame().await), ReplayState::Paused);

    ws.send(&control(ControlAction::Seek, Some(3.0))).await;
    assert_eq!(state(ws.frame().await), ReplayState::Paused);
    ws.send(&control(ControlAction::Step, None)).await;
    let e = prediction(ws.frame().await);
    assert_eq!((e.ordinal, e.window, e.key), (1, Some(3), Key::D));
    assert_eq!(state(ws.frame().await), ReplayState::Finished);

    // nothing left to step through
    ws.send(&control(ControlAction::Step, None)).await;
    assert_eq!(state(ws.frame().await), ReplayState::Finished);
    assert!(ws.frame_within(Duration::from_millis(300)).await.is_none());

    // seeking back reopens the replay, paused
    ws.send(&control(ControlAction::Seek, Some(1.0))).await;
    assert_eq!(state(ws.frame().await), ReplayState::Paused);
    ws.send(&control(ControlAction::Speed, Some(2.0))).await;
    assert_eq!(state(ws.frame().await), ReplayState::Paused);
    ws.send(&control(ControlAction::Play, None)).await;
    assert_eq!(state(ws.frame().await), ReplayState::Playing);
    let e = prediction(ws.frame().await);
    assert_eq!((e.ordinal, e.window, e.key), (2, Some(1), Key::L));
    ws.send(&control(ControlAction::Pause, None)).await;
    // the window after the pause may already be in flight
    let mut f = ws.frame().await;
    if let ServerFrame::Prediction(e) = f {
        assert_eq!(e.window, Some(2));
        f = ws.frame().await;
    }
    assert_eq!(state(f), ReplayState::Paused);
    assert!(ws.frame_within(Duration::from_millis(300)).await.is_none());
}

#[tokio::test(flavor = "multi_thread")]
async fn invalid_frames_only_echo_state() {
    let dir = tempfile::tempdir().unwrap();
    write_stub_windows(dir.path(), "two", &[1, 2]);
    let addr = start_server(vec![("perfect".into(), perfect_stub(SHAPE))], Some(dir.path().into())).await;
    let token = session(addr, "perfect", "two", 0.0).await;
    let mut ws = StreamClient::connect(addr, &token).await;
    assert_eq!(state(ws.frame().await), ReplayState::Paused);
    for bad in [
        r#"{"type":"control","action":"rewind"}"#,
        r#"{"type":"control","action":"speed","value":-1}"#,
        r#"{"type":"control","action":"seek"}"#,
        r#"{"type":"select_model","id":"missing"}"#,
        "not json",
    ] {
        ws.send_raw(bad).await;
        assert_eq!(state(ws.frame().await), ReplayState::Paused, "{bad}");
    }
    ws.send(&control(ControlAction::Step, None)).await;
    let e = prediction(ws.frame().await);
    assert_eq!((e.ordinal, e.key), (0, Key::D));
}

#[tokio::test(flavor = "multi_thread")]
async fn select_model_switches_mid_replay() {
    let dir = tempfile::tempdir().unwrap();
    write_stub_windows(dir.path(), "keys", &[1, 1, 2]);
    let other = WindowShape { n_times: 10, n_channels: 19 };
    let addr = start_server(
        vec![
            ("perfect".into(), perfect_stub(SHAPE)),
            ("rest".into(), constant_stub(SHAPE)),
            ("small".into(), constant_stub(other)),
        ],
        Some(dir.path().into()),
    )
    .await;
    let token = session(addr, "perfect", "keys", 0.0).await;
    let mut ws = StreamClient::connect(addr, &token).await;
    state(ws.frame().await);
    ws.send(&control(ControlAction::Step, None)).await;
    assert_eq!(prediction(ws.frame().await).key, Key::D);
    state(ws.frame().await);

    // a model with another window shape is refused
    ws.send(&ClientFrame::SelectModel { id: "small".into() }).await;
    state(ws.frame().await);
    ws.send(&control(ControlAction::Step, None)).await;
    assert_eq!(prediction(ws.frame().await).key, Key::D);
    state(ws.frame().await);

    ws.send(&ClientFrame::SelectModel { id: "rest".into() }).await;
    state(ws.frame().await);
    ws.send(&control(ControlAction::Step, None)).await;
    assert_eq!(prediction(ws.frame().await).key, Key::None);
    assert_eq!(state(ws.frame().await), ReplayState::Finished);
}

#[tokio::test(flavor = "multi_thread")]
async fn replay_request_errors() {
    let dir = tempfile::tempdir().unwrap();
    write_stub_windows(dir.path(), "ok", &[0, 1]);
    let odd = WindowShape { n_times: 10, n_channels: 19 };
    let addr = start_server(
        vec![("perfect".into(), perfect_stub(SHAPE)), ("small".into(), constant_stub(odd))],
        Some(dir.path().into()),
    )
    .await;
    let status = |body: Value| async move { replay(addr, body).await.status().as_u16() };
    assert_eq!(status(json!({"model": "nope", "windows": "ok"})).await, 404);
    assert_eq!(status(json!({"model": "perfect", "windows": "missing"})).await, 404);
    assert_eq!(status(json!({"model": "perfect", "windows": "../ok"})).await, 400);
    assert_eq!(status(json!({"model": "perfect", "windows": "ok", "speed": -1.0})).await, 400);
    assert_eq!(status(json!({"model": "small", "windows": "ok"})).await, 400);

    let token = session(addr, "perfect", "ok", 0.0).await;
    let _first = StreamClient::connect(addr, &token).await;
    let again = tokio_tungstenite::connect_async(format!("ws://{addr}/stream?session={token}")).await;
    assert!(again.is_err(), "a session attaches to one stream only");
}
