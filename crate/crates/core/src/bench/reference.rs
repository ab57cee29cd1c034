//! The four document configurations of the reference suite: none, built by
//! autonomous exploration, built by watching demonstrations, hand-written.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{mpsc, Arc};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{run_suite, AgentConfig, BenchReport, ModelChoice, Suite, SuiteAbort};
use crate::explorer::{explore, record_demo, DemoCommand, ExplorationConfig, ExploreError, ExploreTermination};
use crate::kb::{KbError, KnowledgeStore};
use crate::llm::{ModelBackend, ScriptedBackend};
use crate::session::NullObserver;
use crate::sim::SimDevice;

pub const METHOD: &str = "tapwise";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocConfig {
    None,
    Auto,
    Demo,
    Manual,
}

impl DocConfig {
    pub const ALL: [DocConfig; 4] = [Self::None, Self::Auto, Self::Demo, Self::Manual];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Auto => "auto",
            Self::Demo => "demo",
            Self::Manual => "manual",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }

    /// Text for the Document column of the report table.
    pub fn describe(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Auto => "autonomous exploration",
            Self::Demo => "watching demos",
            Self::Manual => "manually written",
        }
    }
}

#[derive(Debug, Error)]
pub enum ReferenceError {
    #[error("app {app_id} has no {what} in the suite")]
    MissingFixture { app_id: String, what: &'static str },
    #[error(transparent)]
    Store(#[from] KbError),
    #[error("exploring {app_id}: {source}")]
    Explore { app_id: String, source: ExploreError },
    #[error("exploring {app_id} ended with {termination}")]
    ExplorationIncomplete { app_id: String, termination: &'static str },
    #[error("demo event {index} for {app_id} rejected: {message}")]
    DemoRejected { app_id: String, index: usize, message: String },
    #[error(transparent)]
    Abort(#[from] SuiteAbort),
}

fn missing(app_id: &str, what: &'static str) -> ReferenceError {
    ReferenceError::MissingFixture { app_id: app_id.to_string(), what }
}

/// Builds the documents for `config` in a fresh store under `store_root`
/// (unused for `None`) and runs every suite task with the per-app deploy
/// scripts.
pub fn run_reference(suite: &Suite, config: DocConfig, store_root: &Path) -> Result<BenchReport, ReferenceError> {
    let store = match config {
        DocConfig::None => None,
        _ => Some(KnowledgeStore::open(store_root)?),
    };
    if let Some(store) = &store {
        for app in &suite.apps {
            build_docs(app, config, store)?;
        }
    }
    let mut models: BTreeMap<String, Arc<dyn ModelBackend>> = BTreeMap::new();
    for app in &suite.apps {
        let script = app.deploy_script.clone().ok_or_else(|| missing(&app.app_id, "deploy script"))?;
        models.insert(app.app_id.clone(), Arc::new(ScriptedBackend::new(script)));
    }
    let agent = AgentConfig {
        method: METHOD.to_string(),
        document: config.describe().to_string(),
        models: ModelChoice::PerApp(models),
        store: store.as_ref(),
    };
    Ok(run_suite(&suite.suite_id, &suite.tasks, &suite.specs(), &agent)?)
}

fn build_docs(app: &super::SuiteApp, config: DocConfig, store: &KnowledgeStore) -> Result<(), ReferenceError> {
    let app_id = app.app_id.as_str();
    match config {
        DocConfig::None => Ok(()),
        DocConfig::Manual => {
            for (element_id, body) in app.manual_docs.as_ref().ok_or_else(|| missing(app_id, "manual docs"))? {
                store.import_manual(app_id, element_id, body)?;
            }
            Ok(())
        }
        DocConfig::Auto => {
            let task = app.explore_task.as_ref().ok_or_else(|| missing(app_id, "exploration task"))?;
            let script = app.explore_script.clone().ok_or_else(|| missing(app_id, "exploration script"))?;
            let model = ScriptedBackend::new(script);
            let mut device = SimDevice::new(app.spec.clone());
            let report = explore(&ExplorationConfig::new(task, app_id), &mut device, &model, store, &mut NullObserver)
                .map_err(|source| ReferenceError::Explore { app_id: app_id.to_string(), source })?;
            if report.termination != ExploreTermination::TaskComplete {
                return Err(ReferenceError::ExplorationIncomplete {
                    app_id: app_id.to_string(),
                    termination: report.termination.as_str(),
                });
            }
            Ok(())
        }
        DocConfig::Demo => {
            let events = app.demo.as_ref().ok_or_else(|| missing(app_id, "demo"))?;
            let script = app.explore_script.clone().ok_or_else(|| missing(app_id, "exploration script"))?;
            let model = ScriptedBackend::new(script);
            let mut device = SimDevice::new(app.spec.clone());
            let (tx, rx) = mpsc::channel();
            let mut replies = Vec::new();
            for request in events {
                let (reply, answer) = mpsc::sync_channel(1);
                tx.send(DemoCommand::Event { request: request.clone(), reply }).expect("receiver alive");
                replies.push(answer);
            }
            tx.send(DemoCommand::Stop).expect("receiver alive");
            record_demo(app_id, &mut device, &model, store, rx, &mut NullObserver)
                .map_err(|source| ReferenceError::Explore { app_id: app_id.to_string(), source })?;
            for (index, answer) in replies.into_iter().enumerate() {
                if let Ok(Err(errors)) = answer.recv() {
                    let message = errors.iter().map(|e| format!("{}: {}", e.field, e.message)).collect::<Vec<_>>().join("; ");
                    return Err(ReferenceError::DemoRejected { app_id: app_id.to_string(), index, message });
                }
            }
            Ok(())
        }
    }
}
