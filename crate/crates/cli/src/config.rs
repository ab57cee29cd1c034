//! Settings shared by all subcommands. Each value comes from the first
//! source that has it: command-line flag, environment variable, config
//! file, built-in default. API keys are only ever read from the environment.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;
use tapwise::llm::{HttpConfig, DEFAULT_API_KEY_ENV};

use crate::CliError;

pub const ENV_ADDR: &str = "TAPWISE_ADDR";
pub const ENV_KB_ROOT: &str = "TAPWISE_KB_ROOT";
/// Read when present and no other file is named.
pub const DEFAULT_CONFIG_FILE: &str = "tapwise.toml";
pub const DEFAULT_ADDR: &str = "127.0.0.1:7878";
pub const DEFAULT_KB_ROOT: &str = "knowledge";

/// Optional TOML config file.
#[derive(Debug, Default, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub addr: Option<String>,
    pub kb_root: Option<PathBuf>,
    pub backend: Option<String>,
    pub adb: Option<PathBuf>,
    #[serde(default)]
    pub http: HttpSection,
}

#[derive(Debug, Default, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpSection {
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub temperature: Option<f32>,
    pub max_tokens: Option<u32>,
    /// Name of the variable holding the key, never the key itself.
    pub api_key_env: Option<String>,
    pub timeout_secs: Option<u64>,
    pub max_in_flight: Option<usize>,
}

impl FileConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("config file {}: {e}", origin.display())))
    }

    /// Loads `explicit`, or the default file when it exists. A file named
    /// explicitly must exist.
    pub fn load(explicit: Option<&Path>) -> Result<Self, CliError> {
        let (path, required) = match explicit {
            Some(p) => (p.to_path_buf(), true),
            None => (PathBuf::from(DEFAULT_CONFIG_FILE), false),
        };
        match std::fs::read_to_string(&path) {
            Ok(text) => Self::parse(&text, &path),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound && !required => Ok(Self::default()),
            Err(e) => Err(CliError::Usage(format!("config file {}: {e}", path.display()))),
        }
    }
}

/// Flags that may also come from the environment or the config file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub addr: Option<String>,
    pub kb_root: Option<PathBuf>,
    pub backend: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Settings {
    pub addr: String,
    pub kb_root: PathBuf,
    /// Backend spec, when any source named one.
    pub backend: Option<String>,
    pub adb: PathBuf,
    pub http: HttpConfig,
}

impl Settings {
    pub fn resolve(flags: &Overrides, env: &dyn Fn(&str) -> Option<String>, file: &FileConfig) -> Self {
        let nonempty = |k: &str| env(k).filter(|v| !v.is_empty());
        let addr = flags.addr.clone().or_else(|| nonempty(ENV_ADDR)).or_else(|| file.addr.clone()).unwrap_or_else(|| DEFAULT_ADDR.into());
        let kb_root = flags
            .kb_root
            .clone()
            .or_else(|| nonempty(ENV_KB_ROOT).map(PathBuf::from))
            .or_else(|| file.kb_root.clone())
            .unwrap_or_else(|| PathBuf::from(DEFAULT_KB_ROOT));
        let backend = flags.backend.clone().or_else(|| file.backend.clone());

        let mut http = HttpConfig::default();
        let h = &file.http;
        if let Some(v) = &h.endpoint {
            http.endpoint = v.clone();
        }
        if let Some(v) = &h.model {
            http.model = v.clone();
        }
        if let Some(v) = h.temperature {
            http.temperature = v;
        }
        if let Some(v) = h.max_tokens {
            http.max_tokens = v;
        }
        http.api_key_env = h.api_key_env.clone().unwrap_or_else(|| DEFAULT_API_KEY_ENV.into());
        if let Some(v) = h.timeout_secs {
            http.timeout = Duration::from_secs(v);
        }
        if let Some(v) = h.max_in_flight {
            http.max_in_flight = v;
        }
        Self { addr, kb_root, backend, adb: file.adb.clone().unwrap_or_else(|| PathBuf::from("adb")), http }
    }
}
