//! Task execution: observe, consult documents, reason, act, summarize.

mod reply;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{info, warn};

use crate::action::{count_calls, parse_action, validate_action, Action};
use crate::device::{Device, DeviceError};
use crate::kb::KnowledgeStore;
use crate::llm::{ModelBackend, PromptSegment};
use crate::prompts;
use crate::session::{publish_capture, Capture, CaptureError, SessionEvent, SessionObserver};

pub use reply::{build_memory, elision_marker, parse_step_reply, ReplyError, StepReply, MEMORY_CAP, SECTIONS};

pub const DEFAULT_MAX_STEPS: u32 = 10;
/// Corrective re-prompts after a reply that cannot be used.
pub const MAX_REPROMPTS: u32 = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub index: u32,
    pub screenshot_digest: String,
    pub observation: String,
    pub thought: String,
    pub action: Action,
    pub summary: String,
    /// Identifier of the element the action targeted, if any.
    pub element_id: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ExitByAgent,
    StepCap,
    Error,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::ExitByAgent => "exit_by_agent",
            Self::StepCap => "step_cap",
            Self::Error => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub task: String,
    pub app_id: String,
    pub steps: Vec<StepRecord>,
    pub termination: Termination,
    /// Simulator page id, or the final screenshot digest on a real device.
    pub final_page_ref: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Trajectory {
    /// One JSON object per line: a header, then each step, then the end.
    pub fn to_json_lines(&self) -> String {
        let mut out = serde_json::json!({"task": self.task, "app_id": self.app_id}).to_string();
        out.push('\n');
        for step in &self.steps {
            out.push_str(&serde_json::to_string(step).expect("step serializes"));
            out.push('\n');
        }
        let end = serde_json::json!({
            "termination": self.termination,
            "final_page_ref": self.final_page_ref,
            "error": self.error,
        });
        out.push_str(&end.to_string());
        out.push('\n');
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunConfig {
    pub task: String,
    pub app_id: String,
    pub max_steps: u32,
    pub memory_cap: usize,
}

impl RunConfig {
    pub fn new(task: impl Into<String>, app_id: impl Into<String>) -> Self {
        Self { task: task.into(), app_id: app_id.into(), max_steps: DEFAULT_MAX_STEPS, memory_cap: MEMORY_CAP }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error("invalid run configuration: {0}")]
    Config(String),
}

/// A reply that yielded a usable, valid action.
struct Decided {
    reply: StepReply,
    action: Action,
}

/// Asks the model for one step, re-prompting with a correction when the
/// reply is malformed or names an action the screen cannot take.
fn decide(model: &dyn ModelBackend, prompt: &str, capture: &Capture) -> Result<Decided, String> {
    let mut problem: Option<String> = None;
    for attempt in 0..=MAX_REPROMPTS {
        let mut text = prompt.to_string();
        if let Some(p) = &problem {
            text.push('\n');
            text.push_str(&prompts::correction(p));
        }
        let segments = [PromptSegment::text(text), PromptSegment::Image(capture.annotated.clone())];
        let reply = model.complete(&segments).map_err(|e| format!("model unavailable: {e}"))?;
        match interpret(&reply.text, capture) {
            Ok(d) => return Ok(d),
            Err(p) => {
                warn!(attempt, problem = %p, "unusable reply");
                problem = Some(p);
            }
        }
    }
    Err(format!("malformed reply after {MAX_REPROMPTS} re-prompts: {}", problem.unwrap_or_default()))
}

fn interpret(text: &str, capture: &Capture) -> Result<Decided, String> {
    let reply = parse_step_reply(text).map_err(|e| e.to_string())?;
    let action = parse_action(&reply.action_source).map_err(|d| format!("action: {}", d.message))?;
    if count_calls(&reply.action_source) > 1 {
        warn!(source = %reply.action_source, "reply names several actions, using the first");
    }
    validate_action(&action, &capture.registry).map_err(|e| e.to_string())?;
    Ok(Decided { reply, action })
}

/// Identifier of the element `action` acts on in `capture`.
pub fn target_identifier(action: &Action, capture: &Capture) -> Option<String> {
    match action {
        Action::Text { .. } => capture.registry.input_target().map(|e| e.identifier.clone()),
        other => other.element().and_then(|l| capture.registry.by_label(l)).map(|e| e.identifier.clone()),
    }
}

/// Runs `config.task` to completion, the step cap, or an error. With no
/// store, every element is presented as undocumented and the store is never
/// consulted.
pub fn run_task(
    config: &RunConfig,
    device: &mut dyn Device,
    model: &dyn ModelBackend,
    store: Option<&KnowledgeStore>,
    observer: &mut dyn SessionObserver,
) -> Result<Trajectory, RunError> {
    if config.max_steps == 0 {
        return Err(RunError::Config("max_steps must be at least 1".into()));
    }
    let mut steps: Vec<StepRecord> = Vec::new();
    let mut summaries: Vec<String> = Vec::new();
    let mut termination = Termination::StepCap;
    let mut error = None;
    let mut last_digest = String::new();

    for index in 1..=config.max_steps {
        let capture = match Capture::take(device) {
            Ok(c) => c,
            Err(CaptureError::Device(e)) => return Err(e.into()),
            Err(e) => {
                termination = Termination::Error;
                error = Some(e.to_string());
                break;
            }
        };
        publish_capture(observer, &capture);
        last_digest = capture.screenshot_digest.clone();

        let slots = match store {
            Some(kb) => kb.docs_for_screen(&config.app_id, &capture.registry),
            None => capture.registry.elements.iter().map(|e| (e.label, None)).collect(),
        };
        let memory = build_memory(&summaries, config.memory_cap);
        let prompt = prompts::deploy_step(&config.task, &prompts::render_docs(&slots), &memory);

        let decided = match decide(model, &prompt, &capture) {
            Ok(d) => d,
            Err(message) => {
                observer.on_event(&SessionEvent::StepError { iteration: index, message: message.clone() });
                termination = Termination::Error;
                error = Some(message);
                break;
            }
        };
        let element_id = target_identifier(&decided.action, &capture);
        device.execute(&decided.action, &capture.registry)?;

        let record = StepRecord {
            index,
            screenshot_digest: capture.screenshot_digest.clone(),
            observation: decided.reply.observation,
            thought: decided.reply.thought,
            action: decided.action.clone(),
            summary: decided.reply.summary,
            element_id,
        };
        observer.on_event(&SessionEvent::Step {
            index,
            screenshot_digest: record.screenshot_digest.clone(),
            observation: record.observation.clone(),
            thought: record.thought.clone(),
            action: record.action.to_string(),
            summary: record.summary.clone(),
        });
        summaries.push(record.summary.clone());
        steps.push(record);
        if decided.action == Action::Exit {
            termination = Termination::ExitByAgent;
            break;
        }
    }

    let final_page_ref = device.page_ref().unwrap_or_else(|| match Capture::take(device) {
        Ok(c) => c.screenshot_digest,
        Err(_) => last_digest,
    });
    info!(task = %config.task, steps = steps.len(), termination = termination.as_str(), "run finished");
    observer.on_event(&SessionEvent::Finished { termination: termination.as_str().to_string() });
    Ok(Trajectory {
        task: config.task.clone(),
        app_id: config.app_id.clone(),
        steps,
        termination,
        final_page_ref,
        error,
    })
}
