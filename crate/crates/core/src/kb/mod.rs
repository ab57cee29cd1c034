//! Per-element documents learned during exploration.
//!
//! Layout under the store root:
//!
//! ```text
//! <app>/<sanitized element id>.doc   one file per element, see [`format`]
//! <app>/history.log                  every committed version, JSON lines
//! ```
//!
//! Documents are replaced by writing a temp file and renaming it over the
//! old one, so a reader (or a restarted process) sees either the old or the
//! new version, never a torn one.

pub mod format;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{debug, warn};

use crate::action::ActionKind;
use crate::llm::{GatewayError, ModelBackend, PromptSegment};
use crate::prompts;
use crate::ui_model::ElementRegistry;

const DOC_EXT: &str = "doc";
const TMP_EXT: &str = "tmp";
const HISTORY_FILE: &str = "history.log";
/// Joins prior body and new observation when no merge model is configured.
pub const CONCAT_SEPARATOR: &str = "\n\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DocSource {
    Autonomous,
    Demo,
    Manual,
}

impl DocSource {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Autonomous => "autonomous",
            Self::Demo => "demo",
            Self::Manual => "manual",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Self::Autonomous, Self::Demo, Self::Manual].into_iter().find(|v| v.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementDocument {
    pub app_id: String,
    pub element_id: String,
    pub body: String,
    pub action_kinds_observed: BTreeSet<ActionKind>,
    pub version: u32,
    /// Source of the latest upsert.
    pub source: DocSource,
    pub updated_at: DateTime<Utc>,
}

/// One line of `history.log`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub element_id: String,
    pub version: u32,
    pub source: DocSource,
    pub action_kind: Option<ActionKind>,
    pub updated_at: DateTime<Utc>,
    pub body: String,
}

#[derive(Debug, Error)]
pub enum KbError {
    #[error("knowledge store i/o: {0}")]
    StoreIo(String),
    #[error("corrupt document {path}: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("merging the document for {element_id} failed: {reason}")]
    MergeFailed { element_id: String, reason: String },
    #[error("observation is empty")]
    EmptyObservation,
}

fn io_err(path: &Path, e: std::io::Error) -> KbError {
    KbError::StoreIo(format!("{}: {e}", path.display()))
}

/// Where an injected crash interrupts the next write.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultPoint {
    /// Half of the temp file is written, then the write stops.
    PartialTempWrite,
    /// The temp file is complete but never renamed into place.
    BeforeRename,
}

pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

/// A clock that starts at `start` and advances one second per reading.
pub fn counting_clock(start: DateTime<Utc>) -> Clock {
    let ticks = AtomicU64::new(0);
    Arc::new(move || start + chrono::Duration::seconds(ticks.fetch_add(1, Ordering::Relaxed) as i64))
}

#[derive(Default)]
struct AppIndex {
    /// element id -> (file stem, document)
    docs: BTreeMap<String, (String, ElementDocument)>,
    /// file stem -> element id
    stems: HashMap<String, String>,
}

impl AppIndex {
    fn allocate_stem(&self, element_id: &str) -> String {
        let base = format::sanitize(element_id);
        if !self.stems.contains_key(&base) {
            return base;
        }
        (2..).map(|n| format!("{base}-{n}")).find(|s| !self.stems.contains_key(s)).expect("unbounded")
    }
}

pub struct KnowledgeStore {
    root: PathBuf,
    index: RwLock<BTreeMap<String, AppIndex>>,
    writer: Mutex<()>,
    reads: AtomicU64,
    clock: Clock,
    fault: Mutex<Option<FaultPoint>>,
}

impl std::fmt::Debug for KnowledgeStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KnowledgeStore").field("root", &self.root).finish_non_exhaustive()
    }
}

impl KnowledgeStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, KbError> {
        Self::open_with_clock(root, Arc::new(Utc::now))
    }

    /// Opens (creating if needed) the store at `root`, removing temp files
    /// left by interrupted writes and loading every document.
    pub fn open_with_clock(root: impl Into<PathBuf>, clock: Clock) -> Result<Self, KbError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| io_err(&root, e))?;
        let mut apps = BTreeMap::new();
        let mut entries: Vec<_> = fs::read_dir(&root)
            .map_err(|e| io_err(&root, e))?
            .collect::<Result<_, _>>()
            .map_err(|e| io_err(&root, e))?;
        entries.sort_by_key(|e| e.file_name());
        for entry in entries {
            let dir = entry.path();
            if !dir.is_dir() {
                continue;
            }
            let (app_id, index) = load_app_dir(&dir)?;
            let Some(app_id) = app_id else { continue };
            repair_history(&dir, &index)?;
            apps.insert(app_id, index);
        }
        Ok(Self {
            root,
            index: RwLock::new(apps),
            writer: Mutex::new(()),
            reads: AtomicU64::new(0),
            clock,
            fault: Mutex::new(None),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn app_dir(&self, app_id: &str) -> PathBuf {
        self.root.join(format::sanitize(app_id))
    }

    /// Number of read operations served so far.
    pub fn read_count(&self) -> u64 {
        self.reads.load(Ordering::Relaxed)
    }

    /// Makes the next write stop at `point` and fail, as a crash would.
    pub fn inject_fault(&self, point: FaultPoint) {
        *self.fault.lock().expect("fault slot poisoned") = Some(point);
    }

    pub fn get(&self, app_id: &str, element_id: &str) -> Option<ElementDocument> {
        self.reads.fetch_add(1, Ordering::Relaxed);
        let index = self.index.read().expect("index poisoned");
        index.get(app_id)?.docs.get(element_id).map(|(_, d)| d.clone())
    }

    /// Every document of `app_id`, ordered by element id.
    pub fn documents(&self, app_id: &str) -> Vec<ElementDocument> {
        self.reads.fetch_add(1, Ordering::Relaxed);
        let index = self.index.read().expect("index poisoned");
        index.get(app_id).map(|a| a.docs.values().map(|(_, d)| d.clone()).collect()).unwrap_or_default()
    }

    pub fn apps(&self) -> Vec<String> {
        self.index.read().expect("index poisoned").keys().cloned().collect()
    }

    /// Path of the file holding the document for `element_id`, if any.
    pub fn doc_path(&self, app_id: &str, element_id: &str) -> Option<PathBuf> {
        let index = self.index.read().expect("index poisoned");
        let (stem, _) = index.get(app_id)?.docs.get(element_id)?;
        Some(self.app_dir(app_id).join(format!("{stem}.{DOC_EXT}")))
    }

    /// One slot per element of `registry` in label order; `None` where no
    /// document exists for that element's identifier.
    pub fn docs_for_screen(&self, app_id: &str, registry: &ElementRegistry) -> Vec<(u32, Option<ElementDocument>)> {
        self.reads.fetch_add(1, Ordering::Relaxed);
        let index = self.index.read().expect("index poisoned");
        let app = index.get(app_id);
        registry
            .elements
            .iter()
            .map(|el| {
                let doc = app.and_then(|a| a.docs.get(&el.identifier)).map(|(_, d)| d.clone());
                (el.label, doc)
            })
            .collect()
    }

    pub fn history(&self, app_id: &str) -> Result<Vec<HistoryRecord>, KbError> {
        read_history(&self.app_dir(app_id).join(HISTORY_FILE))
    }

    /// Records `observation` for an element. The first observation becomes
    /// the body; later ones are merged into the existing body by `merger`, or
    /// appended when no merger is given.
    pub fn upsert_doc(
        &self,
        app_id: &str,
        element_id: &str,
        observation: &str,
        source: DocSource,
        action_kind: Option<ActionKind>,
        merger: Option<&dyn ModelBackend>,
    ) -> Result<ElementDocument, KbError> {
        let observation = observation.trim();
        if observation.is_empty() {
            return Err(KbError::EmptyObservation);
        }
        let _writer = self.writer.lock().expect("writer lock poisoned");
        let (prior, stem) = {
            let index = self.index.read().expect("index poisoned");
            let app = index.get(app_id);
            match app.and_then(|a| a.docs.get(element_id)) {
                Some((stem, doc)) => (Some(doc.clone()), stem.clone()),
                None => (None, app.map(|a| a.allocate_stem(element_id)).unwrap_or_else(|| format::sanitize(element_id))),
            }
        };

        let doc = match prior {
            None => ElementDocument {
                app_id: app_id.to_string(),
                element_id: element_id.to_string(),
                body: observation.to_string(),
                action_kinds_observed: action_kind.into_iter().collect(),
                version: 1,
                source,
                updated_at: (self.clock)(),
            },
            Some(prior) => {
                let body = merge_bodies(element_id, &prior.body, observation, merger)?;
                let mut kinds = prior.action_kinds_observed.clone();
                kinds.extend(action_kind);
                ElementDocument {
                    body,
                    action_kinds_observed: kinds,
                    version: prior.version + 1,
                    source,
                    updated_at: (self.clock)(),
                    ..prior
                }
            }
        };

        let dir = self.app_dir(app_id);
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        let fault = self.fault.lock().expect("fault slot poisoned").take();
        write_atomic(&dir, &stem, format::encode(&doc).as_bytes(), fault)?;

        {
            let mut index = self.index.write().expect("index poisoned");
            let app = index.entry(app_id.to_string()).or_default();
            app.stems.insert(stem.clone(), element_id.to_string());
            app.docs.insert(element_id.to_string(), (stem, doc.clone()));
        }
        append_history(&dir.join(HISTORY_FILE), &HistoryRecord {
            element_id: element_id.to_string(),
            version: doc.version,
            source,
            action_kind,
            updated_at: doc.updated_at,
            body: doc.body.clone(),
        })?;
        debug!(app_id, element_id, version = doc.version, "document committed");
        Ok(doc)
    }

    /// Imports a hand-written document.
    pub fn import_manual(&self, app_id: &str, element_id: &str, body: &str) -> Result<ElementDocument, KbError> {
        self.upsert_doc(app_id, element_id, body, DocSource::Manual, None, None)
    }
}

fn merge_bodies(
    element_id: &str,
    past: &str,
    observation: &str,
    merger: Option<&dyn ModelBackend>,
) -> Result<String, KbError> {
    let Some(merger) = merger else {
        return Ok(format!("{past}{CONCAT_SEPARATOR}{observation}"));
    };
    let prompt = [PromptSegment::text(prompts::merge(element_id, past, observation))];
    let failed = |reason: String| KbError::MergeFailed { element_id: element_id.to_string(), reason };
    let reply = merger.complete(&prompt).map_err(|e: GatewayError| failed(e.to_string()))?;
    let body = reply.text.trim();
    if body.is_empty() {
        return Err(failed("merger returned an empty document".into()));
    }
    Ok(body.to_string())
}

fn write_atomic(dir: &Path, stem: &str, bytes: &[u8], fault: Option<FaultPoint>) -> Result<(), KbError> {
    let tmp = dir.join(format!("{stem}.{TMP_EXT}"));
    let dest = dir.join(format!("{stem}.{DOC_EXT}"));
    let mut file = File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
    if fault == Some(FaultPoint::PartialTempWrite) {
        file.write_all(&bytes[..bytes.len() / 2]).map_err(|e| io_err(&tmp, e))?;
        return Err(KbError::StoreIo("injected fault: partial temp write".into()));
    }
    file.write_all(bytes).and_then(|_| file.sync_all()).map_err(|e| io_err(&tmp, e))?;
    drop(file);
    if fault == Some(FaultPoint::BeforeRename) {
        return Err(KbError::StoreIo("injected fault: crash before rename".into()));
    }
    fs::rename(&tmp, &dest).map_err(|e| io_err(&dest, e))?;
    sync_dir(dir);
    Ok(())
}

#[cfg(unix)]
fn sync_dir(dir: &Path) {
    if let Err(e) = File::open(dir).and_then(|d| d.sync_all()) {
        warn!(dir = %dir.display(), "directory sync failed: {e}");
    }
}

#[cfg(not(unix))]
fn sync_dir(_dir: &Path) {}

fn load_app_dir(dir: &Path) -> Result<(Option<String>, AppIndex), KbError> {
    let mut index = AppIndex::default();
    let mut app_id: Option<String> = None;
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(|e| io_err(dir, e))?;
    paths.sort();
    for path in paths {
        match path.extension().and_then(|e| e.to_str()) {
            Some(TMP_EXT) => {
                debug!(path = %path.display(), "removing leftover temp file");
                fs::remove_file(&path).map_err(|e| io_err(&path, e))?;
            }
            Some(DOC_EXT) => {
                let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
                let doc = format::decode(&text).map_err(|message| KbError::Corrupt { path: path.clone(), message })?;
                match &app_id {
                    None => app_id = Some(doc.app_id.clone()),
                    Some(a) if *a != doc.app_id => {
                        return Err(KbError::Corrupt { path, message: format!("belongs to app {}, not {a}", doc.app_id) })
                    }
                    Some(_) => {}
                }
                let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
                index.stems.insert(stem.clone(), doc.element_id.clone());
                index.docs.insert(doc.element_id.clone(), (stem, doc));
            }
            _ => {}
        }
    }
    Ok((app_id, index))
}

fn read_history(path: &Path) -> Result<Vec<HistoryRecord>, KbError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path, e)),
    };
    let lines: Vec<String> = BufReader::new(file).lines().collect::<Result<_, _>>().map_err(|e| io_err(path, e))?;
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(rec) => out.push(rec),
            // A crash during append can leave one torn final line.
            Err(_) if i + 1 == lines.len() => warn!(path = %path.display(), "ignoring torn final history line"),
            Err(e) => return Err(KbError::Corrupt { path: path.to_path_buf(), message: format!("line {}: {e}", i + 1) }),
        }
    }
    Ok(out)
}

fn append_history(path: &Path, record: &HistoryRecord) -> Result<(), KbError> {
    let mut file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| io_err(path, e))?;
    // Drop a torn final line left by a crash mid-append; it never committed.
    let existing = fs::read(path).map_err(|e| io_err(path, e))?;
    if existing.last().is_some_and(|&c| c != b'\n') {
        let keep = existing.iter().rposition(|&c| c == b'\n').map_or(0, |i| i + 1);
        file.set_len(keep as u64).map_err(|e| io_err(path, e))?;
    }
    let mut line = serde_json::to_string(record).expect("history record serializes");
    line.push('\n');
    file.write_all(line.as_bytes()).and_then(|_| file.sync_data()).map_err(|e| io_err(path, e))
}

/// Appends the committed version of any document whose history entry was
/// lost to a crash between rename and append.
fn repair_history(dir: &Path, index: &AppIndex) -> Result<(), KbError> {
    let path = dir.join(HISTORY_FILE);
    let history = read_history(&path)?;
    let mut latest: HashMap<&str, u32> = HashMap::new();
    for rec in &history {
        let v = latest.entry(rec.element_id.as_str()).or_default();
        *v = (*v).max(rec.version);
    }
    for (element_id, (_, doc)) in &index.docs {
        if latest.get(element_id.as_str()).copied().unwrap_or(0) < doc.version {
            warn!(element_id, version = doc.version, "history entry missing, restoring it");
            append_history(&path, &HistoryRecord {
                element_id: element_id.clone(),
                version: doc.version,
                source: doc.source,
                action_kind: None,
                updated_at: doc.updated_at,
                body: doc.body.clone(),
            })?;
        }
    }
    Ok(())
}
