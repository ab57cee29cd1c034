//! Local HTTP/WebSocket service exposing sessions to front ends.
//!
//! Each session runs its engine on its own thread. Everything the engine
//! publishes is appended to the session log as one JSON line with a
//! sequence number; the WebSocket stream carries the same lines, so a
//! client that drops can backfill from `/log?after=<seq>`.

use std::collections::BTreeMap;
use std::io::Cursor;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{sync_channel, Receiver, SyncSender, TrySendError};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use image::{ImageFormat, RgbaImage};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tapwise::action::Action;
use tapwise::device::{Device, DeviceError, DeviceHandle};
use tapwise::explorer::{explore, record_demo, DemoCommand, DemoEventRequest, ExplorationConfig, DEMO_QUEUE_DEPTH};
use tapwise::kb::KnowledgeStore;
use tapwise::llm::{HttpConfig, ModelBackend};
use tapwise::operator::{run_task, RunConfig};
use tapwise::session::{Capture, FieldError, SessionEvent, SessionObserver};
use tapwise::ui_model::ElementRegistry;
use tokio::sync::broadcast;
use tracing::{info, warn};

use crate::backend::BackendSpec;
use crate::target::Target;
use crate::CliError;

/// Broadcast buffer per session; slower WebSocket clients backfill from
/// the log.
const EVENT_BUFFER: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionKind {
    Explore,
    Demo,
    Run,
    Bench,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionStatus {
    Starting,
    Active,
    Finished,
    Failed,
}

impl SessionStatus {
    pub fn is_over(self) -> bool {
        matches!(self, Self::Finished | Self::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionDescriptor {
    pub session_id: u64,
    pub kind: SessionKind,
    /// Device serial, or `sim:<app id>` for simulated devices.
    pub device: String,
    pub app_id: String,
    pub status: SessionStatus,
}

/// Body of `POST /sessions`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewSession {
    pub kind: SessionKind,
    pub app: String,
    #[serde(default)]
    pub task: Option<String>,
    #[serde(default)]
    pub max_steps: Option<u32>,
    #[serde(default)]
    pub no_docs: bool,
}

/// How sessions obtain their model.
#[derive(Debug, Clone)]
pub struct Factory {
    pub backend: BackendSpec,
    pub http: HttpConfig,
    pub adb: PathBuf,
}

#[derive(Clone)]
struct Line {
    seq: u64,
    text: Arc<str>,
    last: bool,
}

#[derive(Default)]
struct Log {
    lines: Vec<Line>,
    frame: Option<Arc<Vec<u8>>>,
}

pub struct Session {
    descriptor: Mutex<SessionDescriptor>,
    log: Mutex<Log>,
    events: broadcast::Sender<Line>,
    demo: Option<SyncSender<DemoCommand>>,
    stop: Arc<AtomicBool>,
}

impl Session {
    pub fn descriptor(&self) -> SessionDescriptor {
        self.descriptor.lock().expect("descriptor poisoned").clone()
    }

    fn status(&self) -> SessionStatus {
        self.descriptor.lock().expect("descriptor poisoned").status
    }

    /// Appends `value` with the next sequence number and broadcasts it.
    fn publish(&self, mut value: Value, last: bool) {
        let mut log = self.log.lock().expect("log poisoned");
        let seq = log.lines.len() as u64 + 1;
        value["seq"] = json!(seq);
        let line = Line { seq, text: value.to_string().into(), last };
        log.lines.push(line.clone());
        // Sent under the lock so subscribers see no gap or overlap.
        let _ = self.events.send(line);
    }

    /// Moves the status forward; never backwards.
    fn set_status(&self, status: SessionStatus, detail: Option<Value>) {
        {
            let mut d = self.descriptor.lock().expect("descriptor poisoned");
            if status <= d.status || d.status.is_over() {
                return;
            }
            d.status = status;
        }
        let mut value = json!({"type": "status", "status": status});
        if let Some(detail) = detail {
            value["detail"] = detail;
        }
        self.publish(value, status.is_over());
    }

    fn lines_after(&self, after: u64) -> Vec<Line> {
        let log = self.log.lock().expect("log poisoned");
        log.lines.iter().filter(|l| l.seq > after).cloned().collect()
    }

    fn request_stop(&self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(tx) = &self.demo {
            // A full queue is fine: the stop flag fails the next device call.
            let _ = tx.try_send(DemoCommand::Stop);
        }
    }
}

struct Publisher(Arc<Session>);

impl SessionObserver for Publisher {
    fn on_capture(&mut self, capture: &Capture) {
        match encode_png(&capture.annotated) {
            Ok(png) => self.0.log.lock().expect("log poisoned").frame = Some(Arc::new(png)),
            Err(e) => warn!("cannot encode frame: {e}"),
        }
    }

    fn on_event(&mut self, event: &SessionEvent) {
        let value = serde_json::to_value(event).expect("event serializes");
        self.0.publish(value, false);
    }
}

pub fn encode_png(img: &RgbaImage) -> Result<Vec<u8>, image::ImageError> {
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

/// Fails every device call once a stop was requested.
struct Stoppable {
    inner: Box<dyn Device>,
    stop: Arc<AtomicBool>,
}

impl Stoppable {
    fn check(&self) -> Result<(), DeviceError> {
        if self.stop.load(Ordering::SeqCst) {
            Err(DeviceError::DeviceGone(format!("{} (session stopped)", self.inner.handle().serial)))
        } else {
            Ok(())
        }
    }
}

impl Device for Stoppable {
    fn handle(&self) -> &DeviceHandle {
        self.inner.handle()
    }

    fn capture_screenshot(&mut self) -> Result<RgbaImage, DeviceError> {
        self.check()?;
        self.inner.capture_screenshot()
    }

    fn dump_hierarchy(&mut self) -> Result<String, DeviceError> {
        self.check()?;
        self.inner.dump_hierarchy()
    }

    fn execute(&mut self, action: &Action, registry: &ElementRegistry) -> Result<(), DeviceError> {
        self.check()?;
        self.inner.execute(action, registry)
    }

    fn screen_size(&self) -> (u32, u32) {
        self.inner.screen_size()
    }

    fn page_ref(&self) -> Option<String> {
        self.inner.page_ref()
    }
}

pub struct ServiceState {
    sessions: Mutex<BTreeMap<u64, Arc<Session>>>,
    next_id: AtomicU64,
    store: Arc<KnowledgeStore>,
    factory: Factory,
}

impl ServiceState {
    pub fn new(store: Arc<KnowledgeStore>, factory: Factory) -> Arc<Self> {
        Arc::new(Self { sessions: Mutex::new(BTreeMap::new()), next_id: AtomicU64::new(1), store, factory })
    }

    pub fn session(&self, id: u64) -> Option<Arc<Session>> {
        self.sessions.lock().expect("sessions poisoned").get(&id).cloned()
    }

    pub fn descriptors(&self) -> Vec<SessionDescriptor> {
        self.sessions.lock().expect("sessions poisoned").values().map(|s| s.descriptor()).collect()
    }

    /// Validates the request, registers the session and starts its engine.
    pub fn start(self: &Arc<Self>, req: NewSession) -> Result<Arc<Session>, CliError> {
        let target = Target::parse(&req.app)?;
        let task = match req.kind {
            SessionKind::Bench => return Err(CliError::Usage("bench sessions are only available from the command line".into())),
            SessionKind::Demo => String::new(),
            SessionKind::Explore | SessionKind::Run => {
                req.task.clone().filter(|t| !t.trim().is_empty()).ok_or_else(|| CliError::Usage("task is required".into()))?
            }
        };
        if req.max_steps == Some(0) {
            return Err(CliError::Usage("max_steps must be at least 1".into()));
        }
        let model = self.factory.backend.build(&self.factory.http)?;

        let (demo_tx, demo_rx) = match req.kind {
            SessionKind::Demo => {
                let (tx, rx) = sync_channel(DEMO_QUEUE_DEPTH);
                (Some(tx), Some(rx))
            }
            _ => (None, None),
        };
        let id = self.next_id.fetch_add(1, Ordering::SeqCst);
        let session = Arc::new(Session {
            descriptor: Mutex::new(SessionDescriptor {
                session_id: id,
                kind: req.kind,
                device: target.describe(),
                app_id: target.app_id().to_string(),
                status: SessionStatus::Starting,
            }),
            log: Mutex::new(Log::default()),
            events: broadcast::channel(EVENT_BUFFER).0,
            demo: demo_tx,
            stop: Arc::new(AtomicBool::new(false)),
        });
        self.sessions.lock().expect("sessions poisoned").insert(id, session.clone());
        info!(session_id = id, kind = ?req.kind, app = %req.app, "session created");

        let engine = Engine { session: session.clone(), store: self.store.clone(), adb: self.factory.adb.clone() };
        std::thread::Builder::new()
            .name(format!("session-{id}"))
            .spawn(move || engine.run(target, req, task, model, demo_rx))
            .map_err(|e| CliError::Infra(format!("cannot start session thread: {e}")))?;
        Ok(session)
    }
}

struct Engine {
    session: Arc<Session>,
    store: Arc<KnowledgeStore>,
    adb: PathBuf,
}

impl Engine {
    fn run(self, target: Target, req: NewSession, task: String, model: Arc<dyn ModelBackend>, demo_rx: Option<Receiver<DemoCommand>>) {
        let session = self.session.clone();
        let outcome = self.drive(&target, &req, task, model.as_ref(), demo_rx);
        let stopped = session.stop.load(Ordering::SeqCst);
        match outcome {
            Ok(detail) if req.kind == SessionKind::Demo => session.set_status(SessionStatus::Finished, Some(detail)),
            // Other engines see a stop as a lost device; report it as a stop.
            _ if stopped => {
                session.set_status(SessionStatus::Finished, Some(json!({"result": "stopped"})))
            }
            Ok(detail) => session.set_status(SessionStatus::Finished, Some(detail)),
            Err(e) => {
                warn!(session_id = session.descriptor().session_id, "session failed: {e}");
                session.set_status(SessionStatus::Failed, Some(json!({"error": e.to_string()})))
            }
        }
    }

    fn drive(
        &self,
        target: &Target,
        req: &NewSession,
        task: String,
        model: &dyn ModelBackend,
        demo_rx: Option<Receiver<DemoCommand>>,
    ) -> Result<Value, CliError> {
        let opened = target.open(&self.adb)?;
        let _lock = opened.lock;
        let mut device = Stoppable { inner: opened.device, stop: self.session.stop.clone() };
        self.session.set_status(SessionStatus::Active, None);
        let mut observer = Publisher(self.session.clone());
        let app_id = target.app_id().to_string();
        let infra = |e: &dyn std::fmt::Display| CliError::Infra(e.to_string());
        match req.kind {
            SessionKind::Explore => {
                let mut config = ExplorationConfig::new(task, app_id);
                if let Some(n) = req.max_steps {
                    config.max_steps = n;
                }
                let report = explore(&config, &mut device, model, &self.store, &mut observer).map_err(|e| infra(&e))?;
                Ok(json!({"result": report.termination.as_str(), "docs_written": report.docs_written.len()}))
            }
            SessionKind::Run => {
                let mut config = RunConfig::new(task, app_id);
                if let Some(n) = req.max_steps {
                    config.max_steps = n;
                }
                let store = (!req.no_docs).then_some(self.store.as_ref());
                let t = run_task(&config, &mut device, model, store, &mut observer).map_err(|e| infra(&e))?;
                Ok(json!({"result": t.termination.as_str(), "steps": t.steps.len(), "final_page_ref": t.final_page_ref}))
            }
            SessionKind::Demo => {
                let rx = demo_rx.expect("demo sessions have a queue");
                let report = record_demo(&app_id, &mut device, model, &self.store, rx, &mut observer).map_err(|e| infra(&e))?;
                Ok(json!({
                    "result": "stopped",
                    "events_accepted": report.events_accepted,
                    "events_rejected": report.events_rejected,
                    "docs_written": report.docs_written.len(),
                }))
            }
            SessionKind::Bench => unreachable!("rejected in start"),
        }
    }
}

pub fn router(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/sessions", get(list_sessions).post(create_session))
        .route("/sessions/{id}/frame", get(frame))
        .route("/sessions/{id}/log", get(log))
        .route("/sessions/{id}/events", get(events))
        .route("/sessions/{id}/demo-event", post(demo_event))
        .route("/sessions/{id}/stop", post(stop))
        .with_state(state)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: Arc<ServiceState>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({"error": message.into()}))).into_response()
}

fn field_errors(errors: Vec<FieldError>) -> Response {
    (StatusCode::UNPROCESSABLE_ENTITY, Json(json!({"errors": errors}))).into_response()
}

fn not_found(id: u64) -> Response {
    error(StatusCode::NOT_FOUND, format!("no session {id}"))
}

/// Parses a JSON body, reporting the offending field by its path.
fn parse_body<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, Vec<FieldError>> {
    let mut de = serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let field = if path == "." { "$".to_string() } else { path };
        vec![FieldError { field, message: e.into_inner().to_string() }]
    })
}

async fn list_sessions(State(state): State<Arc<ServiceState>>) -> Json<Vec<SessionDescriptor>> {
    Json(state.descriptors())
}

async fn create_session(State(state): State<Arc<ServiceState>>, body: Bytes) -> Response {
    let req: NewSession = match parse_body(&body) {
        Ok(r) => r,
        Err(errors) => return field_errors(errors),
    };
    let state2 = state.clone();
    match tokio::task::spawn_blocking(move || state2.start(req)).await {
        Ok(Ok(session)) => (StatusCode::CREATED, Json(session.descriptor())).into_response(),
        Ok(Err(CliError::Usage(m))) => error(StatusCode::UNPROCESSABLE_ENTITY, m),
        Ok(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn frame(State(state): State<Arc<ServiceState>>, Path(id): Path<u64>) -> Response {
    let Some(session) = state.session(id) else { return not_found(id) };
    let png = session.log.lock().expect("log poisoned").frame.clone();
    match png {
        Some(png) => ([(header::CONTENT_TYPE, "image/png"), (header::CACHE_CONTROL, "no-store")], png.as_ref().clone()).into_response(),
        None => error(StatusCode::NOT_FOUND, format!("session {id} has no frame yet")),
    }
}

#[derive(Debug, Deserialize)]
struct After {
    #[serde(default)]
    after: u64,
}

async fn log(State(state): State<Arc<ServiceState>>, Path(id): Path<u64>, Query(q): Query<After>) -> Response {
    let Some(session) = state.session(id) else { return not_found(id) };
    let mut body = String::new();
    for line in session.lines_after(q.after) {
        body.push_str(&line.text);
        body.push('\n');
    }
    ([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response()
}

async fn events(
    State(state): State<Arc<ServiceState>>,
    Path(id): Path<u64>,
    Query(q): Query<After>,
    ws: WebSocketUpgrade,
) -> Response {
    match state.session(id) {
        Some(session) => ws.on_upgrade(move |socket| stream_events(socket, session, q.after)),
        None => not_found(id),
    }
}

/// Sends the backlog after `after`, then live lines, each exactly once and
/// in order. Closes after the final status line.
async fn stream_events(mut socket: WebSocket, session: Arc<Session>, after: u64) {
    let (backlog, mut rx) = {
        let log = session.log.lock().expect("log poisoned");
        let backlog: Vec<Line> = log.lines.iter().filter(|l| l.seq > after).cloned().collect();
        (backlog, session.events.subscribe())
    };
    let mut sent = after;
    for line in backlog {
        if !send_line(&mut socket, &line, &mut sent).await {
            return;
        }
        if line.last {
            let _ = socket.send(Message::Close(None)).await;
            return;
        }
    }
    loop {
        let next = tokio::select! {
            r = rx.recv() => r,
            incoming = socket.recv() => match incoming {
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                Some(Ok(_)) => continue,
            },
        };
        let lines = match next {
            Ok(line) => vec![line],
            Err(broadcast::error::RecvError::Lagged(_)) => session.lines_after(sent),
            Err(broadcast::error::RecvError::Closed) => return,
        };
        for line in lines {
            if line.seq <= sent {
                continue;
            }
            if !send_line(&mut socket, &line, &mut sent).await {
                return;
            }
            if line.last {
                let _ = socket.send(Message::Close(None)).await;
                return;
            }
        }
    }
}

async fn send_line(socket: &mut WebSocket, line: &Line, sent: &mut u64) -> bool {
    if socket.send(Message::Text(line.text.as_ref().into())).await.is_err() {
        return false;
    }
    *sent = line.seq;
    true
}

async fn demo_event(State(state): State<Arc<ServiceState>>, Path(id): Path<u64>, body: Bytes) -> Response {
    let Some(session) = state.session(id) else { return not_found(id) };
    let descriptor = session.descriptor();
    let Some(queue) = session.demo.clone().filter(|_| descriptor.kind == SessionKind::Demo) else {
        return error(StatusCode::CONFLICT, format!("session {id} is not a demo session"));
    };
    if descriptor.status.is_over() {
        return error(StatusCode::CONFLICT, format!("session {id} has ended"));
    }
    let request: DemoEventRequest = match parse_body(&body) {
        Ok(r) => r,
        Err(errors) => return field_errors(errors),
    };
    let (reply_tx, reply_rx) = sync_channel(1);
    match queue.try_send(DemoCommand::Event { request, reply: reply_tx }) {
        Ok(()) => {}
        Err(TrySendError::Full(_)) => return error(StatusCode::SERVICE_UNAVAILABLE, "demo queue is full, retry later"),
        Err(TrySendError::Disconnected(_)) => return error(StatusCode::CONFLICT, format!("session {id} has ended")),
    }
    match tokio::task::spawn_blocking(move || reply_rx.recv()).await {
        Ok(Ok(Ok(ack))) => Json(ack).into_response(),
        Ok(Ok(Err(errors))) => field_errors(errors),
        Ok(Err(_)) => error(StatusCode::CONFLICT, format!("session {id} ended before handling the event")),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn stop(State(state): State<Arc<ServiceState>>, Path(id): Path<u64>) -> Response {
    let Some(session) = state.session(id) else { return not_found(id) };
    if session.status().is_over() {
        return error(StatusCode::CONFLICT, format!("session {id} has ended"));
    }
    session.request_stop();
    (StatusCode::ACCEPTED, Json(session.descriptor())).into_response()
}
