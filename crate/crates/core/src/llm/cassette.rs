use std::collections::{HashMap, VecDeque};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{prompt_digest, GatewayError, ModelBackend, ModelReply, PromptSegment};

const CASSETTE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CassetteMode {
    /// Forward to the inner backend and append every exchange.
    Record,
    /// Answer only from the cassette; no inner backend is consulted.
    Replay,
}

#[derive(Debug, Serialize, Deserialize)]
struct Line {
    version: u32,
    digest: String,
    reply: String,
}

enum State {
    Record { inner: Arc<dyn ModelBackend>, file: File },
    /// Replies per digest in recorded order; the last one repeats.
    Replay { replies: HashMap<String, (VecDeque<String>, String)> },
}

/// Record/replay wrapper. The cassette is a JSON-lines file of
/// `{version, digest, reply}` records, appended as calls complete.
pub struct RecordReplay {
    path: PathBuf,
    state: Mutex<State>,
}

impl RecordReplay {
    pub fn record(inner: Arc<dyn ModelBackend>, path: impl Into<PathBuf>) -> Result<Self, GatewayError> {
        let path = path.into();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| GatewayError::Cassette(e.to_string()))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| GatewayError::Cassette(format!("{}: {e}", path.display())))?;
        Ok(Self { path, state: Mutex::new(State::Record { inner, file }) })
    }

    pub fn replay(path: impl Into<PathBuf>) -> Result<Self, GatewayError> {
        let path = path.into();
        let file = File::open(&path).map_err(|e| GatewayError::Cassette(format!("{}: {e}", path.display())))?;
        let mut replies: HashMap<String, (VecDeque<String>, String)> = HashMap::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| GatewayError::Cassette(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: Line = serde_json::from_str(&line)
                .map_err(|e| GatewayError::Cassette(format!("{}:{}: {e}", path.display(), n + 1)))?;
            if rec.version != CASSETTE_VERSION {
                return Err(GatewayError::Cassette(format!("unsupported cassette version {}", rec.version)));
            }
            let slot = replies.entry(rec.digest).or_insert_with(|| (VecDeque::new(), String::new()));
            slot.0.push_back(rec.reply.clone());
            slot.1 = rec.reply;
        }
        Ok(Self { path, state: Mutex::new(State::Replay { replies }) })
    }

    /// Opens `path` in the given mode; recording needs an inner backend.
    pub fn wrap(inner: Option<Arc<dyn ModelBackend>>, path: impl AsRef<Path>, mode: CassetteMode) -> Result<Self, GatewayError> {
        match mode {
            CassetteMode::Record => {
                let inner = inner.ok_or_else(|| GatewayError::Config("recording needs a backend to record".into()))?;
                Self::record(inner, path.as_ref())
            }
            CassetteMode::Replay => Self::replay(path.as_ref()),
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl ModelBackend for RecordReplay {
    fn complete(&self, segments: &[PromptSegment]) -> Result<ModelReply, GatewayError> {
        let digest = prompt_digest(segments);
        let mut state = self.state.lock().expect("cassette state poisoned");
        match &mut *state {
            State::Record { inner, file } => {
                let reply = inner.complete(segments)?;
                let line = serde_json::to_string(&Line { version: CASSETTE_VERSION, digest, reply: reply.text.clone() })
                    .expect("cassette line serializes");
                writeln!(file, "{line}")
                    .and_then(|_| file.flush())
                    .map_err(|e| GatewayError::Cassette(e.to_string()))?;
                Ok(reply)
            }
            State::Replay { replies } => {
                let (queue, last) = replies.get_mut(&digest).ok_or(GatewayError::CassetteMiss { digest })?;
                let text = queue.pop_front().unwrap_or_else(|| last.clone());
                Ok(ModelReply::immediate(text))
            }
        }
    }
}
