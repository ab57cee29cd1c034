//! Suite manifest loading and reward-map validation.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;
use thiserror::Error;

use super::TaskSpec;
use crate::explorer::DemoEventRequest;
use crate::llm::Script;
use crate::sim::{load_app_spec_str, SimAppSpec};

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("schema error in {file} at {path}: {message}")]
    Schema { file: String, path: String, message: String },
    #[error("invalid reward map for task {task_id}: {message}")]
    RewardMap { task_id: String, message: String },
    #[error("invalid suite: {0}")]
    Invalid(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSuite {
    schema_version: u32,
    suite_id: String,
    #[serde(default)]
    apps: Vec<RawApp>,
    #[serde(default)]
    tasks: Vec<TaskSpec>,
    #[serde(default)]
    expected: Vec<ExpectedResult>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawApp {
    app_id: String,
    spec: String,
    #[serde(default)]
    explore_task: Option<String>,
    #[serde(default)]
    explore_script: Option<String>,
    #[serde(default)]
    deploy_script: Option<String>,
    #[serde(default)]
    demo: Option<String>,
    #[serde(default)]
    manual_docs: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManualDocs {
    #[serde(default)]
    doc: Vec<ManualDoc>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManualDoc {
    element_id: String,
    body: String,
}

/// Values a configuration is pinned to produce on this suite.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectedResult {
    pub config: String,
    pub tasks: usize,
    pub successes: usize,
    pub reward_sum: u64,
    pub success_step_sum: u64,
    pub succeeded: Vec<String>,
}

/// One app of a suite with its optional reference fixtures.
#[derive(Debug, Clone)]
pub struct SuiteApp {
    pub app_id: String,
    pub spec: Arc<SimAppSpec>,
    pub explore_task: Option<String>,
    pub explore_script: Option<Script>,
    pub deploy_script: Option<Script>,
    pub demo: Option<Vec<DemoEventRequest>>,
    /// (element id, body) pairs.
    pub manual_docs: Option<Vec<(String, String)>>,
}

#[derive(Debug, Clone)]
pub struct Suite {
    pub suite_id: String,
    pub apps: Vec<SuiteApp>,
    pub tasks: Vec<TaskSpec>,
    pub expected: Vec<ExpectedResult>,
}

impl Suite {
    pub fn specs(&self) -> BTreeMap<String, Arc<SimAppSpec>> {
        self.apps.iter().map(|a| (a.app_id.clone(), a.spec.clone())).collect()
    }

    pub fn app(&self, app_id: &str) -> Option<&SuiteApp> {
        self.apps.iter().find(|a| a.app_id == app_id)
    }

    pub fn expected(&self, config: &str) -> Option<&ExpectedResult> {
        self.expected.iter().find(|e| e.config == config)
    }
}

fn toml_file<T: serde::de::DeserializeOwned>(file: &str, text: &str) -> Result<T, SuiteError> {
    let schema = |path: String, message: String| SuiteError::Schema { file: file.to_string(), path, message };
    let de = toml::de::Deserializer::parse(text).map_err(|e| schema("$".into(), e.to_string()))?;
    serde_path_to_error::deserialize(de).map_err(|e| schema(e.path().to_string(), e.inner().to_string()))
}

/// Loads a suite manifest; referenced files resolve against its directory.
pub fn load_suite(path: impl AsRef<Path>) -> Result<Suite, SuiteError> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let read = |p: &Path| {
        std::fs::read_to_string(p).map_err(|e| SuiteError::Io { path: p.display().to_string(), message: e.to_string() })
    };
    let text = read(path)?;
    load_suite_with(&text, &mut |rel| read(&base.join(rel)), Some(&base))
}

/// Loads a suite manifest, fetching each referenced file through `read`.
/// `spec_dir` is where app fixture screenshots resolve, if anywhere.
pub fn load_suite_with(
    text: &str,
    read: &mut dyn FnMut(&str) -> Result<String, SuiteError>,
    spec_dir: Option<&Path>,
) -> Result<Suite, SuiteError> {
    let raw: RawSuite = toml_file("suite", text)?;
    if raw.schema_version != 1 {
        return Err(SuiteError::Invalid(format!("unsupported schema_version {}", raw.schema_version)));
    }
    let mut apps = Vec::new();
    for a in raw.apps {
        let spec_text = read(&a.spec)?;
        let dir = spec_dir.map(|d| d.join(&a.spec).parent().map(Path::to_path_buf).unwrap_or_default());
        let spec = load_app_spec_str(&spec_text, dir.as_deref())
            .map_err(|e| SuiteError::Invalid(format!("{}: {e}", a.spec)))?;
        if spec.app_id != a.app_id {
            return Err(SuiteError::Invalid(format!("{} declares app_id {}, not {}", a.spec, spec.app_id, a.app_id)));
        }
        let mut script = |rel: &Option<String>| -> Result<Option<Script>, SuiteError> {
            rel.as_ref()
                .map(|r| Script::parse(&read(r)?).map_err(|e| SuiteError::Invalid(format!("{r}: {e}"))))
                .transpose()
        };
        let explore_script = script(&a.explore_script)?;
        let deploy_script = script(&a.deploy_script)?;
        let demo = match &a.demo {
            Some(r) => Some(
                serde_json::from_str::<Vec<DemoEventRequest>>(&read(r)?)
                    .map_err(|e| SuiteError::Schema { file: r.clone(), path: "$".into(), message: e.to_string() })?,
            ),
            None => None,
        };
        let manual_docs = match &a.manual_docs {
            Some(r) => {
                let docs: ManualDocs = toml_file(r, &read(r)?)?;
                Some(docs.doc.into_iter().map(|d| (d.element_id, d.body)).collect())
            }
            None => None,
        };
        apps.push(SuiteApp {
            app_id: a.app_id,
            spec: Arc::new(spec),
            explore_task: a.explore_task,
            explore_script,
            deploy_script,
            demo,
            manual_docs,
        });
    }

    let mut seen = BTreeSet::new();
    for task in &raw.tasks {
        if !seen.insert(task.task_id.as_str()) {
            return Err(SuiteError::Invalid(format!("duplicate task_id {}", task.task_id)));
        }
        if task.max_steps == 0 {
            return Err(SuiteError::Invalid(format!("task {} has max_steps 0", task.task_id)));
        }
        let app = apps
            .iter()
            .find(|a| a.app_id == task.app_id)
            .ok_or_else(|| SuiteError::Invalid(format!("task {} names unknown app {}", task.task_id, task.app_id)))?;
        validate_reward_map(task, &app.spec)?;
    }
    Ok(Suite { suite_id: raw.suite_id, apps, tasks: raw.tasks, expected: raw.expected })
}

/// Forward-transition BFS distances from `from`.
fn distances_from(spec: &SimAppSpec, from: &str) -> HashMap<String, u32> {
    let mut dist = HashMap::from([(from.to_string(), 0)]);
    let mut queue = VecDeque::from([from.to_string()]);
    while let Some(page) = queue.pop_front() {
        let d = dist[&page];
        for t in &spec.page(&page).transitions {
            if !dist.contains_key(&t.target) {
                dist.insert(t.target.clone(), d + 1);
                queue.push_back(t.target.clone());
            }
        }
    }
    dist
}

/// Checks the reward map of `task` against its app: every key is a page,
/// the pages the success predicate requires carry the maximum score, and
/// scores never decrease along a shortest path from the start page to one
/// of those pages.
pub fn validate_reward_map(task: &TaskSpec, spec: &SimAppSpec) -> Result<(), SuiteError> {
    let fail = |message: String| SuiteError::RewardMap { task_id: task.task_id.clone(), message };
    for page in task.reward_map.keys() {
        if !spec.pages.contains_key(page) {
            return Err(fail(format!("unknown page {page}")));
        }
    }
    let score = |p: &str| task.reward_map.get(p).copied().unwrap_or(0);
    let max = task.reward_map.values().copied().max().unwrap_or(0);
    let from_start = distances_from(spec, &spec.start_page);
    for goal in task.success.required_pages() {
        if !spec.pages.contains_key(goal) {
            return Err(fail(format!("success predicate names unknown page {goal}")));
        }
        if score(goal) != max {
            return Err(fail(format!("goal page {goal} scores {} but the maximum is {max}", score(goal))));
        }
        let Some(&total) = from_start.get(goal) else {
            return Err(fail(format!("goal page {goal} is unreachable from {}", spec.start_page)));
        };
        // A page lies on a shortest start-to-goal path when its distance
        // from the start plus its distance to the goal equals the total.
        let to_goal: HashMap<&str, u32> =
            spec.pages.keys().filter_map(|p| distances_from(spec, p).get(goal).map(|d| (p.as_str(), *d))).collect();
        let on_path = |p: &str| match (from_start.get(p), to_goal.get(p)) {
            (Some(a), Some(b)) => a + b == total,
            _ => false,
        };
        for (page, t) in spec.edges() {
            let (p, q) = (page.page_id.as_str(), t.target.as_str());
            if on_path(p) && on_path(q) && from_start[q] == from_start[p] + 1 && score(q) < score(p) {
                return Err(fail(format!("score drops from {p} ({}) to {q} ({}) on a shortest path", score(p), score(q))));
            }
        }
    }
    Ok(())
}
