//! `--backend` values: `scripted:<path>`, `replay:<path>`, `record:<path>`
//! and `http`.

use std::path::PathBuf;
use std::sync::Arc;

use tapwise::llm::{GatewayError, HttpBackend, HttpConfig, ModelBackend, RecordReplay, Script, ScriptedBackend};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendSpec {
    Scripted(PathBuf),
    Replay(PathBuf),
    /// Live HTTP calls appended to a cassette.
    Record(PathBuf),
    Http,
}

impl BackendSpec {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        let with_path = |rest: &str| {
            if rest.is_empty() {
                Err(CliError::Usage(format!("backend {s:?} needs a file path")))
            } else {
                Ok(PathBuf::from(rest))
            }
        };
        match s.split_once(':') {
            Some(("scripted", rest)) => with_path(rest).map(Self::Scripted),
            Some(("replay", rest)) => with_path(rest).map(Self::Replay),
            Some(("record", rest)) => with_path(rest).map(Self::Record),
            None if s == "http" => Ok(Self::Http),
            _ => Err(CliError::Usage(format!(
                "unknown backend {s:?} (expected scripted:<path>, replay:<path>, record:<path> or http)"
            ))),
        }
    }

    /// A new backend instance. Scripts are re-read so every instance starts
    /// from its first reply.
    pub fn build(&self, http: &HttpConfig) -> Result<Arc<dyn ModelBackend>, CliError> {
        Ok(match self {
            Self::Scripted(path) => Arc::new(ScriptedBackend::new(Script::load(path).map_err(config_error)?)),
            Self::Replay(path) => Arc::new(RecordReplay::replay(path).map_err(config_error)?),
            Self::Record(path) => {
                let inner: Arc<dyn ModelBackend> = Arc::new(HttpBackend::from_env(http.clone()).map_err(config_error)?);
                Arc::new(RecordReplay::record(inner, path).map_err(config_error)?)
            }
            Self::Http => Arc::new(HttpBackend::from_env(http.clone()).map_err(config_error)?),
        })
    }
}

fn config_error(e: GatewayError) -> CliError {
    CliError::Usage(format!("backend: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_every_form() {
        assert_eq!(BackendSpec::parse("scripted:a/b.script").unwrap(), BackendSpec::Scripted("a/b.script".into()));
        assert_eq!(BackendSpec::parse("replay:c.jsonl").unwrap(), BackendSpec::Replay("c.jsonl".into()));
        assert_eq!(BackendSpec::parse("record:c.jsonl").unwrap(), BackendSpec::Record("c.jsonl".into()));
        assert_eq!(BackendSpec::parse("http").unwrap(), BackendSpec::Http);
        for bad in ["scripted", "scripted:", "grpc:x", ""] {
            assert_eq!(BackendSpec::parse(bad).unwrap_err().exit_code(), 2, "{bad}");
        }
    }

    #[test]
    fn http_without_a_key_is_a_usage_error() {
        let config = HttpConfig { api_key_env: "TAPWISE_TEST_KEY_THAT_IS_NEVER_SET".into(), ..HttpConfig::default() };
        let err = BackendSpec::Http.build(&config).err().unwrap();
        assert!(err.to_string().starts_with("usage: backend"), "{err}");
    }
}
