use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{prompt_text, GatewayError, ModelBackend, ModelReply, PromptSegment};

/// How a script entry selects the calls it answers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Matcher {
    /// The zero-based index of the call.
    Step(usize),
    /// Every listed substring occurs in the prompt text.
    Contains(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptEntry {
    pub matcher: Matcher,
    pub reply: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Script {
    pub entries: Vec<ScriptEntry>,
    pub fallback: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScript {
    #[serde(default)]
    fallback: Option<String>,
    #[serde(default)]
    entry: Vec<RawEntry>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEntry {
    #[serde(default)]
    step: Option<usize>,
    #[serde(default)]
    contains: Option<OneOrMany>,
    reply: String,
}

impl Script {
    /// Parses the TOML script format:
    ///
    /// ```toml
    /// fallback = "back()"
    ///
    /// [[entry]]
    /// step = 0
    /// reply = "tap(1)"
    ///
    /// [[entry]]
    /// contains = ["Task: send", "Compose button"]
    /// reply = "tap(3)"
    /// ```
    pub fn parse(text: &str) -> Result<Self, GatewayError> {
        let raw: RawScript = toml::from_str(text).map_err(|e| GatewayError::Config(format!("script: {e}")))?;
        let mut entries = Vec::with_capacity(raw.entry.len());
        for (i, e) in raw.entry.into_iter().enumerate() {
            let matcher = match (e.step, e.contains) {
                (Some(step), None) => Matcher::Step(step),
                (None, Some(OneOrMany::One(s))) => Matcher::Contains(vec![s]),
                (None, Some(OneOrMany::Many(v))) if !v.is_empty() => Matcher::Contains(v),
                _ => {
                    return Err(GatewayError::Config(format!(
                        "script entry {i}: needs exactly one of `step` or a non-empty `contains`"
                    )))
                }
            };
            entries.push(ScriptEntry { matcher, reply: e.reply });
        }
        Ok(Self { entries, fallback: raw.fallback })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Reply for call number `call_index` with prompt text `prompt`.
    pub fn resolve(&self, call_index: usize, prompt: &str) -> Option<&str> {
        let by_step = self.entries.iter().find(|e| e.matcher == Matcher::Step(call_index));
        let by_text = || {
            self.entries.iter().find(|e| match &e.matcher {
                Matcher::Contains(keys) => keys.iter().all(|k| prompt.contains(k.as_str())),
                Matcher::Step(_) => false,
            })
        };
        by_step
            .or_else(by_text)
            .map(|e| e.reply.as_str())
            .or(self.fallback.as_deref())
    }
}

/// Deterministic backend answering from a [`Script`]; performs no I/O.
#[derive(Debug)]
pub struct ScriptedBackend {
    script: Script,
    calls: Mutex<Vec<String>>,
}

impl ScriptedBackend {
    pub fn new(script: Script) -> Self {
        Self { script, calls: Mutex::new(Vec::new()) }
    }

    /// Plain step-indexed replies, no fallback.
    pub fn from_replies<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let entries = replies
            .into_iter()
            .enumerate()
            .map(|(i, r)| ScriptEntry { matcher: Matcher::Step(i), reply: r.into() })
            .collect();
        Self::new(Script { entries, fallback: None })
    }

    pub fn call_count(&self) -> usize {
        self.calls.lock().expect("call log poisoned").len()
    }

    /// Prompt texts of all calls so far.
    pub fn prompts(&self) -> Vec<String> {
        self.calls.lock().expect("call log poisoned").clone()
    }
}

impl ModelBackend for ScriptedBackend {
    fn complete(&self, segments: &[PromptSegment]) -> Result<ModelReply, GatewayError> {
        if segments.is_empty() {
            return Err(GatewayError::EmptyPrompt);
        }
        let prompt = prompt_text(segments);
        let mut calls = self.calls.lock().expect("call log poisoned");
        let index = calls.len();
        let reply = self.script.resolve(index, &prompt).map(str::to_string);
        calls.push(prompt);
        reply.map(ModelReply::immediate).ok_or(GatewayError::ScriptExhausted { call_index: index })
    }
}
