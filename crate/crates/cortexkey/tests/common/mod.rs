#![allow(dead_code)]

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Duration;

use cortexkey::protocol::{ClientFrame, ServerFrame};
use cortexkey::server::{router, AppState};
use cortexkey::stub::stub_window;
use cortexkey_core::ingest::{write_session, write_windows};
use cortexkey_core::model::{ModelArtifact, WindowShape};
use cortexkey_core::synthetic::{generate_session, SessionSpec};
use futures_util::{SinkExt, StreamExt};
use tokio::net::{TcpListener, TcpStream};
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};

pub const SHAPE: WindowShape = WindowShape {
    n_times: 200,
    n_channels: 19,
};

/// Small model settings so a full pipeline run takes seconds.
pub const FAST_CONFIG: &str = r#"
seed = 42

[data]
session_dir = "sessions"

[svm]
epochs = 20

[mlp]
hidden = [16]
max_epochs = 8
batch_size = 32

[bigru]
hidden = 4
max_epochs = 2
batch_size = 32

[cv]
folds = 3
"#;

/// Three synthetic sessions under `dir/sessions` plus `dir/cortexkey.toml`.
pub fn synthetic_workspace(dir: &Path, config: &str) -> PathBuf {
    let sessions = dir.join("sessions");
    fs::create_dir_all(&sessions).unwrap();
    for (i, id) in ["s01", "s02", "s03"].iter().enumerate() {
        let s = generate_session(&SessionSpec::new(*id, 100 + i as u64, 20));
        write_session(sessions.join(id), &s.meta, &s.samples, &s.markers).unwrap();
    }
    let cfg = dir.join("cortexkey.toml");
    fs::write(&cfg, config).unwrap();
    cfg
}

pub fn cortexkey(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cortexkey"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

/// Run and require success.
pub fn cortexkey_ok(args: &[&str]) -> String {
    let out = cortexkey(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Windows whose first value encodes the label, saved as `<dir>/<stem>.windows.bin`.
pub fn write_stub_windows(dir: &Path, stem: &str, labels: &[usize]) {
    let windows: Vec<_> = labels.iter().enumerate().map(|(i, &l)| stub_window(SHAPE, l, i)).collect();
    write_windows(dir.join(format!("{stem}.windows.bin")), &windows).unwrap();
}

/// Start the service on an ephemeral port.
pub async fn start_server(models: Vec<(String, ModelArtifact)>, windows_dir: Option<PathBuf>) -> SocketAddr {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let app = router(AppState::new(models, windows_dir));
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    addr
}

pub struct StreamClient {
    ws: WebSocketStream<MaybeTlsStream<TcpStream>>,
}

impl StreamClient {
    pub async fn connect(addr: SocketAddr, session: &str) -> Self {
        let (ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/stream?session={session}"))
            .await
            .expect("stream connects");
        Self { ws }
    }

    pub async fn send(&mut self, frame: &ClientFrame) {
        self.send_raw(&serde_json::to_string(frame).unwrap()).await;
    }

    pub async fn send_raw(&mut self, text: &str) {
        self.ws.send(Message::Text(text.into())).await.unwrap();
    }

    /// Next server frame, or `None` if nothing arrives within `wait`.
    pub async fn frame_within(&mut self, wait: Duration) -> Option<ServerFrame> {
        loop {
            let msg = tokio::time::timeout(wait, self.ws.next()).await.ok()??.unwrap();
            if let Message::Text(t) = msg {
                return Some(serde_json::from_str(&t).expect("server frame parses"));
            }
        }
    }

    pub async fn frame(&mut self) -> ServerFrame {
        self.frame_within(Duration::from_secs(5)).await.expect("frame within 5 s")
    }
}
