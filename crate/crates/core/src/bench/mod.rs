//! Benchmark harness: task suites over simulated apps, scored by success
//! rate, page-distance reward and average steps over successful tasks.

mod baseline;
mod reference;
mod suite;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{info, warn};

use crate::kb::KnowledgeStore;
use crate::llm::ModelBackend;
use crate::operator::{run_task, RunConfig, RunError, Termination, Trajectory};
use crate::session::NullObserver;
use crate::sim::{page_xml, SimAppSpec, SimDevice, SimState};

pub use baseline::{baseline_explore, candidate_actions, BaselinePolicy, CoverageReport};
pub use reference::{run_reference, DocConfig, ReferenceError, METHOD};
pub use suite::{load_suite, load_suite_with, validate_reward_map, ExpectedResult, Suite, SuiteApp, SuiteError};

pub const DEFAULT_TASK_MAX_STEPS: u32 = 10;

/// Declarative condition on the final simulator state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Predicate {
    PageIs(String),
    BufferContains { element: String, text: String },
    ElementTextEquals { element: String, text: String },
    All(Vec<Predicate>),
}

impl Predicate {
    pub fn holds(&self, spec: &SimAppSpec, state: &SimState) -> bool {
        match self {
            Self::PageIs(page) => state.current_page == *page,
            Self::BufferContains { element, text } => {
                state.typed_buffers.get(element).is_some_and(|b| b.contains(text.as_str()))
            }
            Self::ElementTextEquals { element, text } => element_text(spec, state, element).as_deref() == Some(text),
            Self::All(parts) => parts.iter().all(|p| p.holds(spec, state)),
        }
    }

    /// Pages named by `page_is` clauses that must hold for success.
    pub fn required_pages(&self) -> Vec<&str> {
        match self {
            Self::PageIs(p) => vec![p.as_str()],
            Self::All(parts) => parts.iter().flat_map(|p| p.required_pages()).collect(),
            _ => Vec::new(),
        }
    }
}

/// The `text` attribute of the node with resource-id `element` on the
/// current page, typed text included.
fn element_text(spec: &SimAppSpec, state: &SimState, element: &str) -> Option<String> {
    let xml = page_xml(spec, state);
    let doc = roxmltree::Document::parse(&xml).ok()?;
    let node = doc.descendants().find(|n| n.attribute("resource-id") == Some(element))?;
    Some(node.attribute("text").unwrap_or("").to_string())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: String,
    pub app_id: String,
    pub goal_text: String,
    pub success: Predicate,
    pub reward_map: BTreeMap<String, u32>,
    #[serde(default = "default_max_steps")]
    pub max_steps: u32,
}

fn default_max_steps() -> u32 {
    DEFAULT_TASK_MAX_STEPS
}

/// Reward of the final state: its page's score, 0 when unmapped.
pub fn score_final_state(task: &TaskSpec, final_state: &SimState) -> u32 {
    task.reward_map.get(&final_state.current_page).copied().unwrap_or(0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskTermination {
    ExitByAgent,
    StepCap,
    Error,
}

impl From<Termination> for TaskTermination {
    fn from(t: Termination) -> Self {
        match t {
            Termination::ExitByAgent => Self::ExitByAgent,
            Termination::StepCap => Self::StepCap,
            Termination::Error => Self::Error,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub task_id: String,
    pub app_id: String,
    pub success: bool,
    pub reward: u32,
    /// Steps taken, the final Exit included.
    pub steps: u32,
    pub termination: TaskTermination,
    pub final_page: Option<String>,
    /// Absent for tasks that never ran because the suite aborted.
    pub trajectory: Option<Trajectory>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub suite_id: String,
    pub method: String,
    pub document: String,
    pub tasks: usize,
    pub successes: usize,
    pub sr: f64,
    pub mean_reward: f64,
    /// Mean steps over successful tasks; `None` when nothing succeeded.
    pub avg_steps: Option<f64>,
    pub results: Vec<TaskResult>,
}

impl BenchReport {
    /// Aggregates `results`, ordering them by task id first.
    pub fn from_results(suite_id: &str, method: &str, document: &str, mut results: Vec<TaskResult>) -> Self {
        results.sort_by(|a, b| a.task_id.cmp(&b.task_id));
        let tasks = results.len();
        let successes = results.iter().filter(|r| r.success).count();
        let (sr, mean_reward) = if tasks == 0 {
            (0.0, 0.0)
        } else {
            let reward: u64 = results.iter().map(|r| u64::from(r.reward)).sum();
            (successes as f64 / tasks as f64, reward as f64 / tasks as f64)
        };
        let avg_steps = (successes > 0).then(|| {
            let steps: u64 = results.iter().filter(|r| r.success).map(|r| u64::from(r.steps)).sum();
            steps as f64 / successes as f64
        });
        Self {
            suite_id: suite_id.to_string(),
            method: method.to_string(),
            document: document.to_string(),
            tasks,
            successes,
            sr,
            mean_reward,
            avg_steps,
            results,
        }
    }

    pub fn reward_sum(&self) -> u64 {
        self.results.iter().map(|r| u64::from(r.reward)).sum()
    }

    pub fn success_step_sum(&self) -> u64 {
        self.results.iter().filter(|r| r.success).map(|r| u64::from(r.steps)).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Aligned plain-text table, one row per report.
pub fn render_table(reports: &[BenchReport]) -> String {
    let header = ["Method", "Document", "SR", "Reward", "Avg. Steps"];
    let rows: Vec<[String; 5]> = reports
        .iter()
        .map(|r| {
            [
                r.method.clone(),
                r.document.clone(),
                format!("{:.1}%", r.sr * 100.0),
                format!("{:.2}", r.mean_reward),
                r.avg_steps.map_or_else(|| "-".to_string(), |s| format!("{s:.2}")),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: [&str; 5]| -> String {
        let mut out = String::new();
        for (i, (cell, w)) in cells.iter().zip(widths).enumerate() {
            if i > 0 {
                out.push_str("  ");
            }
            if i < 2 {
                out.push_str(&format!("{cell:<w$}"));
            } else {
                out.push_str(&format!("{cell:>w$}"));
            }
        }
        out.trim_end().to_string()
    };
    let mut out = line(header);
    out.push('\n');
    out.push_str(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
    out.push('\n');
    for row in &rows {
        out.push_str(&line([&row[0], &row[1], &row[2], &row[3], &row[4]]));
        out.push('\n');
    }
    out
}

/// Which model answers the tasks of each app.
#[derive(Clone)]
pub enum ModelChoice {
    Shared(Arc<dyn ModelBackend>),
    PerApp(BTreeMap<String, Arc<dyn ModelBackend>>),
}

impl ModelChoice {
    fn for_app(&self, app_id: &str) -> Option<&dyn ModelBackend> {
        match self {
            Self::Shared(m) => Some(m.as_ref()),
            Self::PerApp(map) => map.get(app_id).map(|m| m.as_ref()),
        }
    }
}

pub struct AgentConfig<'a> {
    pub method: String,
    pub document: String,
    pub models: ModelChoice,
    pub store: Option<&'a KnowledgeStore>,
}

/// Infrastructure failure mid-suite. The partial report marks every task
/// that did not complete as `Error`.
#[derive(Debug, Error)]
#[error("suite aborted at task {task_id}: {message}")]
pub struct SuiteAbort {
    pub task_id: String,
    pub message: String,
    pub partial: Box<BenchReport>,
}

/// Runs every task on a fresh simulator of its app.
pub fn run_suite(
    suite_id: &str,
    tasks: &[TaskSpec],
    apps: &BTreeMap<String, Arc<SimAppSpec>>,
    agent: &AgentConfig<'_>,
) -> Result<BenchReport, SuiteAbort> {
    run_suite_with(suite_id, tasks, apps, agent, &mut |spec| SimDevice::new(spec))
}

/// [`run_suite`] with a caller-supplied device constructor.
pub fn run_suite_with(
    suite_id: &str,
    tasks: &[TaskSpec],
    apps: &BTreeMap<String, Arc<SimAppSpec>>,
    agent: &AgentConfig<'_>,
    make_device: &mut dyn FnMut(Arc<SimAppSpec>) -> SimDevice,
) -> Result<BenchReport, SuiteAbort> {
    let mut results = Vec::with_capacity(tasks.len());
    for (i, task) in tasks.iter().enumerate() {
        let outcome = match (apps.get(&task.app_id), agent.models.for_app(&task.app_id)) {
            (Some(spec), Some(model)) => run_one(task, spec.clone(), model, agent.store, make_device),
            (None, _) => Err(format!("unknown app {}", task.app_id)),
            (_, None) => Err(format!("no model configured for app {}", task.app_id)),
        };
        match outcome {
            Ok(r) => results.push(r),
            Err(message) => {
                warn!(task_id = %task.task_id, "suite aborted: {message}");
                results.extend(tasks[i..].iter().map(unrun));
                let partial = BenchReport::from_results(suite_id, &agent.method, &agent.document, results);
                return Err(SuiteAbort { task_id: task.task_id.clone(), message, partial: Box::new(partial) });
            }
        }
    }
    let report = BenchReport::from_results(suite_id, &agent.method, &agent.document, results);
    info!(suite_id, document = %agent.document, sr = report.sr, "suite finished");
    Ok(report)
}

fn unrun(task: &TaskSpec) -> TaskResult {
    TaskResult {
        task_id: task.task_id.clone(),
        app_id: task.app_id.clone(),
        success: false,
        reward: 0,
        steps: 0,
        termination: TaskTermination::Error,
        final_page: None,
        trajectory: None,
    }
}

fn run_one(
    task: &TaskSpec,
    spec: Arc<SimAppSpec>,
    model: &dyn ModelBackend,
    store: Option<&KnowledgeStore>,
    make_device: &mut dyn FnMut(Arc<SimAppSpec>) -> SimDevice,
) -> Result<TaskResult, String> {
    let mut device = make_device(spec.clone());
    let mut config = RunConfig::new(&task.goal_text, &task.app_id);
    config.max_steps = task.max_steps;
    let trajectory = match run_task(&config, &mut device, model, store, &mut NullObserver) {
        Ok(t) => t,
        Err(RunError::Device(e)) => return Err(e.to_string()),
        Err(RunError::Config(e)) => return Err(e),
    };
    let final_state = device.state();
    let steps = trajectory.steps.len() as u32;
    let success = trajectory.termination != Termination::Error
        && steps <= task.max_steps
        && task.success.holds(&spec, final_state);
    Ok(TaskResult {
        task_id: task.task_id.clone(),
        app_id: task.app_id.clone(),
        success,
        reward: score_final_state(task, final_state),
        steps,
        termination: trajectory.termination.into(),
        final_page: Some(final_state.current_page.clone()),
        trajectory: Some(trajectory),
    })
}
