//! Demonstration recording: a human picks (element, action) pairs, the
//! agent executes each one and documents only the elements used.

use std::collections::HashMap;
use std::sync::mpsc::{Receiver, SyncSender};

use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use super::{generate_doc, DocWrite, ExploreError, LoggedAction};
use crate::action::{validate_action, Action, ActionKind, Direction, Distance, ValidationError};
use crate::device::Device;
use crate::kb::{DocSource, KnowledgeStore};
use crate::llm::ModelBackend;
use crate::operator::target_identifier;
use crate::session::{publish_capture, Capture, CaptureError, FieldError, SessionEvent, SessionObserver};

/// Capacity of the queue between the service and a demo session.
pub const DEMO_QUEUE_DEPTH: usize = 16;

/// A demonstrated action as submitted by a front end. Payload fields must
/// be present exactly when the action kind needs them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoEventRequest {
    #[serde(default)]
    pub label: Option<u32>,
    /// When given, must match the identifier of `label` on the current screen.
    #[serde(default)]
    pub identifier: Option<String>,
    pub kind: ActionKind,
    #[serde(default)]
    pub direction: Option<Direction>,
    #[serde(default)]
    pub dist: Option<Distance>,
    #[serde(default)]
    pub text: Option<String>,
    /// Resubmitting an accepted token returns the original acknowledgement.
    #[serde(default)]
    pub client_token: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemoAck {
    pub event_index: u32,
    pub action: String,
    pub element_id: Option<String>,
    pub doc_version: Option<u32>,
    /// Screenshot digest after the action.
    pub screenshot_digest: String,
    pub duplicate: bool,
}

pub enum DemoCommand {
    Event { request: DemoEventRequest, reply: SyncSender<Result<DemoAck, Vec<FieldError>>> },
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemoStatus {
    Stopped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemoReport {
    pub app_id: String,
    pub events_accepted: u32,
    pub events_rejected: u32,
    pub action_log: Vec<LoggedAction>,
    pub docs_written: Vec<DocWrite>,
    pub status: DemoStatus,
}

fn field(name: &str, message: impl Into<String>) -> FieldError {
    FieldError { field: name.to_string(), message: message.into() }
}

/// Checks `req` against the action arity rules and the current screen and
/// builds the action it denotes.
pub fn demo_action(req: &DemoEventRequest, capture: &Capture) -> Result<Action, Vec<FieldError>> {
    let mut errors = Vec::new();
    let needs_element = matches!(req.kind, ActionKind::Tap | ActionKind::LongPress | ActionKind::Swipe);
    let is_swipe = req.kind == ActionKind::Swipe;
    let is_text = req.kind == ActionKind::Text;

    if req.kind == ActionKind::Exit {
        errors.push(field("kind", "exit cannot be demonstrated; stop the session instead"));
    }
    match (needs_element, req.label) {
        (true, None) => errors.push(field("label", "required for this action")),
        (false, Some(_)) if !is_text => errors.push(field("label", "not allowed for this action")),
        _ => {}
    }
    if let Some(label) = req.label {
        match capture.registry.by_label(label) {
            None => errors.push(field(
                "label",
                format!("no element labeled {label} on the current screen ({} elements)", capture.registry.len()),
            )),
            Some(el) => {
                if let Some(id) = &req.identifier {
                    if *id != el.identifier {
                        errors.push(field("identifier", format!("label {label} is {}, not {id}", el.identifier)));
                    }
                }
                if is_text {
                    match capture.registry.input_target() {
                        Some(target) if target.label != label => errors.push(field(
                            "label",
                            format!("text goes to the input field labeled {}", target.label),
                        )),
                        _ => {}
                    }
                }
            }
        }
    }
    for (name, present) in [("direction", req.direction.is_some()), ("dist", req.dist.is_some())] {
        match (is_swipe, present) {
            (true, false) => errors.push(field(name, "required for swipe")),
            (false, true) => errors.push(field(name, "only allowed for swipe")),
            _ => {}
        }
    }
    match (is_text, &req.text) {
        (true, None) => errors.push(field("text", "required for text")),
        (true, Some(t)) if t.is_empty() || t.contains(['\n', '\r']) => {
            errors.push(field("text", "must be a non-empty single line"))
        }
        (false, Some(_)) => errors.push(field("text", "only allowed for text")),
        _ => {}
    }
    if !errors.is_empty() {
        return Err(errors);
    }

    let element = req.label.unwrap_or(0);
    let action = match req.kind {
        ActionKind::Tap => Action::Tap { element },
        ActionKind::LongPress => Action::LongPress { element },
        ActionKind::Swipe => Action::Swipe {
            element,
            direction: req.direction.expect("checked"),
            dist: req.dist.expect("checked"),
        },
        ActionKind::Text => Action::Text { text: req.text.clone().expect("checked") },
        ActionKind::Back => Action::Back,
        ActionKind::Exit => unreachable!("rejected above"),
    };
    validate_action(&action, &capture.registry).map_err(|e| match e {
        ValidationError::NoInputFieldVisible => vec![field("kind", e.to_string())],
        ValidationError::ElementOutOfRange { .. } => vec![field("label", e.to_string())],
    })?;
    Ok(action)
}

fn take(device: &mut dyn Device, observer: &mut dyn SessionObserver) -> Result<Capture, ExploreError> {
    match Capture::take(device) {
        Ok(c) => {
            publish_capture(observer, &c);
            Ok(c)
        }
        Err(CaptureError::Device(e)) => Err(e.into()),
        Err(e) => Err(ExploreError::SessionAborted(e.to_string())),
    }
}

/// Serves demo commands until `Stop`. Each accepted event is executed,
/// documented from the before/after screens and stored with source `demo`.
/// Rejected events leave the device untouched. A closed command channel
/// without `Stop` aborts the session; documents already stored remain.
pub fn record_demo(
    app_id: &str,
    device: &mut dyn Device,
    model: &dyn ModelBackend,
    store: &KnowledgeStore,
    commands: Receiver<DemoCommand>,
    observer: &mut dyn SessionObserver,
) -> Result<DemoReport, ExploreError> {
    let mut report = DemoReport {
        app_id: app_id.to_string(),
        events_accepted: 0,
        events_rejected: 0,
        action_log: Vec::new(),
        docs_written: Vec::new(),
        status: DemoStatus::Stopped,
    };
    let mut acks_by_token: HashMap<String, DemoAck> = HashMap::new();
    let mut before = take(device, observer)?;

    loop {
        let (request, reply) = match commands.recv() {
            Ok(DemoCommand::Event { request, reply }) => (request, reply),
            Ok(DemoCommand::Stop) => break,
            Err(_) => return Err(ExploreError::SessionAborted("command channel closed without stop".into())),
        };
        if let Some(ack) = request.client_token.as_ref().and_then(|t| acks_by_token.get(t)) {
            let _ = reply.send(Ok(DemoAck { duplicate: true, ..ack.clone() }));
            continue;
        }
        let action = match demo_action(&request, &before) {
            Ok(a) => a,
            Err(errors) => {
                report.events_rejected += 1;
                observer.on_event(&SessionEvent::DemoRejected { errors: errors.clone() });
                let _ = reply.send(Err(errors));
                continue;
            }
        };

        report.events_accepted += 1;
        let event_index = report.events_accepted;
        let element_id = target_identifier(&action, &before);
        let label = match &action {
            Action::Text { .. } => before.registry.input_target().map(|e| e.label),
            other => other.element(),
        };
        device.execute(&action, &before.registry)?;
        report.action_log.push(LoggedAction { step: event_index, action: action.clone(), element_id: element_id.clone(), automatic: false });
        observer.on_event(&SessionEvent::DemoAccepted {
            event_index,
            action: action.to_string(),
            element_id: element_id.clone(),
        });
        let after = take(device, observer)?;

        let mut doc_version = None;
        if let (Some(id), Some(label)) = (element_id.as_deref(), label) {
            match generate_doc(&before, &after, &action, id, label, model) {
                Ok(body) => match store.upsert_doc(app_id, id, &body, DocSource::Demo, Some(action.kind()), Some(model)) {
                    Ok(doc) => {
                        doc_version = Some(doc.version);
                        report.docs_written.push(DocWrite { step: event_index, element_id: id.to_string(), version: doc.version });
                        observer.on_event(&SessionEvent::doc(&doc));
                    }
                    Err(e) => warn!(element_id = id, "document not stored: {e}"),
                },
                Err(e) => warn!(element_id = id, "no document generated: {e}"),
            }
        }
        let ack = DemoAck {
            event_index,
            action: action.to_string(),
            element_id,
            doc_version,
            screenshot_digest: after.screenshot_digest.clone(),
            duplicate: false,
        };
        if let Some(token) = &request.client_token {
            acks_by_token.insert(token.clone(), ack.clone());
        }
        let _ = reply.send(Ok(ack));
        before = after;
    }
    info!(app_id, accepted = report.events_accepted, docs = report.docs_written.len(), "demo finished");
    observer.on_event(&SessionEvent::Finished { termination: "stopped".into() });
    Ok(report)
}
