//! The exploration phase: learn element documents by acting on an app and
//! comparing the screen before and after, either under model control or by
//! executing a human's demonstrated actions.

mod demo;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{info, warn};

use crate::action::{count_calls, parse_action, validate_action, Action};
use crate::device::{Device, DeviceError};
use crate::kb::{DocSource, KnowledgeStore};
use crate::llm::{ModelBackend, PromptSegment};
use crate::operator::{build_memory, parse_step_reply, target_identifier, MEMORY_CAP};
use crate::prompts;
use crate::session::{publish_capture, Capture, CaptureError, Relevance, SessionEvent, SessionObserver};

pub use demo::{record_demo, DemoAck, DemoCommand, DemoEventRequest, DemoReport, DemoStatus, DEMO_QUEUE_DEPTH};

pub const DEFAULT_MAX_STEPS: u32 = 40;
/// Consecutive failed iterations that end a run.
pub const MAX_CONSECUTIVE_ERRORS: u32 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplorationConfig {
    pub task: String,
    pub app_id: String,
    pub max_steps: u32,
}

impl ExplorationConfig {
    pub fn new(task: impl Into<String>, app_id: impl Into<String>) -> Self {
        Self { task: task.into(), app_id: app_id.into(), max_steps: DEFAULT_MAX_STEPS }
    }
}

/// Screenshot and hierarchy digests of one capture.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptureRef {
    pub screenshot: String,
    pub hierarchy: String,
    pub elements: usize,
}

impl From<&Capture> for CaptureRef {
    fn from(c: &Capture) -> Self {
        Self {
            screenshot: c.screenshot_digest.clone(),
            hierarchy: c.registry.source_hash.clone(),
            elements: c.registry.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplorationStep {
    pub index: u32,
    pub before: CaptureRef,
    pub action: Action,
    pub element_id: Option<String>,
    pub after: CaptureRef,
    /// `None` for actions without a target element (back, exit).
    pub relevance: Option<Relevance>,
    pub doc_written: bool,
}

/// Every action sent to the device, including automatic recoveries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoggedAction {
    pub step: u32,
    pub action: Action,
    pub element_id: Option<String>,
    pub automatic: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExploreTermination {
    TaskComplete,
    StepCap,
    ErrorLimit,
}

impl ExploreTermination {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::TaskComplete => "task_complete",
            Self::StepCap => "step_cap",
            Self::ErrorLimit => "error_limit",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocWrite {
    pub step: u32,
    pub element_id: String,
    pub version: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepFailure {
    pub iteration: u32,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplorationReport {
    pub app_id: String,
    pub task: String,
    /// Iterations used, failed ones included; never above the cap.
    pub iterations: u32,
    pub steps: Vec<ExplorationStep>,
    pub action_log: Vec<LoggedAction>,
    pub docs_written: Vec<DocWrite>,
    pub failures: Vec<StepFailure>,
    pub termination: ExploreTermination,
}

impl ExplorationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Error)]
pub enum ExploreError {
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error("invalid exploration configuration: {0}")]
    Config(String),
    #[error("demo session aborted: {0}")]
    SessionAborted(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DocError {
    #[error("model unavailable: {0}")]
    ModelUnavailable(String),
    #[error("model returned an empty document")]
    EmptyDoc,
}

/// Decides whether the screen after an action is worth documenting.
/// Identical captures are `Unchanged` without consulting the model; a model
/// failure degrades to `Relevant`.
pub fn judge_relevance(
    before: &Capture,
    after: &Capture,
    element_id: &str,
    action: &Action,
    task: &str,
    model: &dyn ModelBackend,
) -> Relevance {
    if before.same_screen(after) {
        return Relevance::Unchanged;
    }
    let segments = [
        PromptSegment::text(prompts::relevance(element_id, action, task)),
        PromptSegment::Image(before.annotated.clone()),
        PromptSegment::Image(after.annotated.clone()),
    ];
    match model.complete(&segments) {
        Ok(reply) if reply.text.to_ascii_lowercase().contains("irrelevant") => Relevance::Irrelevant,
        Ok(_) => Relevance::Relevant,
        Err(e) => {
            warn!(element_id, "relevance check failed, assuming relevant: {e}");
            Relevance::Relevant
        }
    }
}

/// Asks the model what the acted-on element does, given both screens.
pub fn generate_doc(
    before: &Capture,
    after: &Capture,
    action: &Action,
    element_id: &str,
    label: u32,
    model: &dyn ModelBackend,
) -> Result<String, DocError> {
    let segments = [
        PromptSegment::text(prompts::document(element_id, label, action)),
        PromptSegment::Image(before.annotated.clone()),
        PromptSegment::Image(after.annotated.clone()),
    ];
    let reply = model.complete(&segments).map_err(|e| DocError::ModelUnavailable(e.to_string()))?;
    let body = reply.text.trim();
    if body.is_empty() {
        return Err(DocError::EmptyDoc);
    }
    Ok(body.to_string())
}

/// Label used in the doc prompt: the acted-on element, or the input field
/// for text actions.
fn action_label(action: &Action, capture: &Capture) -> Option<u32> {
    match action {
        Action::Text { .. } => capture.registry.input_target().map(|e| e.label),
        other => other.element(),
    }
}

struct Sink<'a> {
    observer: &'a mut dyn SessionObserver,
}

impl Sink<'_> {
    fn capture(&mut self, device: &mut dyn Device) -> Result<Result<Capture, String>, ExploreError> {
        match Capture::take(device) {
            Ok(c) => {
                publish_capture(self.observer, &c);
                Ok(Ok(c))
            }
            Err(CaptureError::Device(e)) => Err(e.into()),
            Err(e) => Ok(Err(e.to_string())),
        }
    }
}

/// Model-guided exploration. Each iteration captures the screen, asks the
/// model for an action toward `config.task`, executes it, judges the
/// resulting screen and documents the element when the effect is relevant.
/// An irrelevant screen is left with an automatic Back, logged in the
/// action log but not counted as a step.
pub fn explore(
    config: &ExplorationConfig,
    device: &mut dyn Device,
    model: &dyn ModelBackend,
    store: &KnowledgeStore,
    observer: &mut dyn SessionObserver,
) -> Result<ExplorationReport, ExploreError> {
    if config.max_steps == 0 {
        return Err(ExploreError::Config("max_steps must be at least 1".into()));
    }
    let mut sink = Sink { observer };
    let mut report = ExplorationReport {
        app_id: config.app_id.clone(),
        task: config.task.clone(),
        iterations: 0,
        steps: Vec::new(),
        action_log: Vec::new(),
        docs_written: Vec::new(),
        failures: Vec::new(),
        termination: ExploreTermination::StepCap,
    };
    let mut summaries: Vec<String> = Vec::new();
    let mut consecutive_errors = 0;

    while report.iterations < config.max_steps {
        report.iterations += 1;
        let iteration = report.iterations;
        let outcome = explore_iteration(config, device, model, store, &mut sink, &mut report, &summaries)?;
        match outcome {
            Ok((summary, done)) => {
                consecutive_errors = 0;
                summaries.push(summary);
                if done {
                    report.termination = ExploreTermination::TaskComplete;
                    break;
                }
            }
            Err(message) => {
                warn!(iteration, "exploration step failed: {message}");
                sink.observer.on_event(&SessionEvent::StepError { iteration, message: message.clone() });
                report.failures.push(StepFailure { iteration, message });
                consecutive_errors += 1;
                if consecutive_errors >= MAX_CONSECUTIVE_ERRORS {
                    report.termination = ExploreTermination::ErrorLimit;
                    break;
                }
            }
        }
    }
    info!(
        app_id = %config.app_id,
        steps = report.steps.len(),
        docs = report.docs_written.len(),
        termination = report.termination.as_str(),
        "exploration finished"
    );
    sink.observer.on_event(&SessionEvent::Finished { termination: report.termination.as_str().to_string() });
    Ok(report)
}

/// One iteration. The inner error is a soft failure counted toward the
/// consecutive-error limit; the outer one ends the run.
fn explore_iteration(
    config: &ExplorationConfig,
    device: &mut dyn Device,
    model: &dyn ModelBackend,
    store: &KnowledgeStore,
    sink: &mut Sink<'_>,
    report: &mut ExplorationReport,
    summaries: &[String],
) -> Result<Result<(String, bool), String>, ExploreError> {
    let before = match sink.capture(device)? {
        Ok(c) => c,
        Err(e) => return Ok(Err(e)),
    };
    let memory = build_memory(summaries, MEMORY_CAP);
    let segments = [
        PromptSegment::text(prompts::explore_step(&config.task, &memory)),
        PromptSegment::Image(before.annotated.clone()),
    ];
    let reply = match model.complete(&segments) {
        Ok(r) => r,
        Err(e) => return Ok(Err(format!("model unavailable: {e}"))),
    };
    let parsed = match parse_step_reply(&reply.text) {
        Ok(p) => p,
        Err(e) => return Ok(Err(e.to_string())),
    };
    let action = match parse_action(&parsed.action_source) {
        Ok(a) => a,
        Err(d) => return Ok(Err(format!("action: {}", d.message))),
    };
    if count_calls(&parsed.action_source) > 1 {
        warn!(source = %parsed.action_source, "reply names several actions, using the first");
    }
    if let Err(e) = validate_action(&action, &before.registry) {
        return Ok(Err(e.to_string()));
    }

    let index = report.steps.len() as u32 + 1;
    let element_id = target_identifier(&action, &before);
    device.execute(&action, &before.registry)?;
    report.action_log.push(LoggedAction { step: index, action: action.clone(), element_id: element_id.clone(), automatic: false });
    let after = match sink.capture(device)? {
        Ok(c) => c,
        Err(e) => return Ok(Err(e)),
    };

    let relevance = element_id.as_deref().map(|id| judge_relevance(&before, &after, id, &action, &config.task, model));
    let mut doc_written = false;
    if let (Some(Relevance::Relevant), Some(id), Some(label)) =
        (relevance, element_id.as_deref(), action_label(&action, &before))
    {
        match generate_doc(&before, &after, &action, id, label, model) {
            Ok(body) => {
                match store.upsert_doc(&config.app_id, id, &body, DocSource::Autonomous, Some(action.kind()), Some(model)) {
                    Ok(doc) => {
                        doc_written = true;
                        report.docs_written.push(DocWrite { step: index, element_id: id.to_string(), version: doc.version });
                        sink.observer.on_event(&SessionEvent::doc(&doc));
                    }
                    Err(e) => warn!(element_id = id, "document not stored: {e}"),
                }
            }
            Err(e) => warn!(element_id = id, "no document generated: {e}"),
        }
    }

    sink.observer.on_event(&SessionEvent::ExploreStep {
        index,
        action: action.to_string(),
        element_id: element_id.clone(),
        relevance,
        doc_written,
    });
    report.steps.push(ExplorationStep {
        index,
        before: CaptureRef::from(&before),
        action: action.clone(),
        element_id,
        after: CaptureRef::from(&after),
        relevance,
        doc_written,
    });

    if relevance == Some(Relevance::Irrelevant) {
        device.execute(&Action::Back, &after.registry)?;
        report.action_log.push(LoggedAction { step: index, action: Action::Back, element_id: None, automatic: true });
        sink.observer.on_event(&SessionEvent::AutoBack { after_step: index });
    }
    Ok(Ok((parsed.summary, action == Action::Exit)))
}
