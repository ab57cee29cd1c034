use std::io::Cursor;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use base64::Engine;
use serde_json::{json, Value};
use tracing::warn;

use super::{GatewayError, ModelBackend, ModelReply, PromptSegment, Usage};

pub const DEFAULT_API_KEY_ENV: &str = "TAPWISE_API_KEY";
const MAX_ATTEMPTS: u32 = 3;

#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub endpoint: String,
    pub model: String,
    /// Sampling temperature; 0 keeps runs as reproducible as the API allows.
    pub temperature: f32,
    pub max_tokens: u32,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout: Duration,
    /// First retry delay; doubles on each further retry.
    pub backoff_base: Duration,
    pub max_in_flight: usize,
    pub max_prompt_bytes: usize,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4o".into(),
            temperature: 0.0,
            max_tokens: 1024,
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            timeout: Duration::from_secs(120),
            backoff_base: Duration::from_secs(1),
            max_in_flight: 4,
            max_prompt_bytes: 20 * 1024 * 1024,
        }
    }
}

struct InFlight {
    count: Mutex<usize>,
    freed: Condvar,
    limit: usize,
}

impl InFlight {
    fn enter(&self) -> InFlightGuard<'_> {
        let mut n = self.count.lock().expect("in-flight counter poisoned");
        while *n >= self.limit {
            n = self.freed.wait(n).expect("in-flight counter poisoned");
        }
        *n += 1;
        InFlightGuard(self)
    }
}

struct InFlightGuard<'a>(&'a InFlight);

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        if let Ok(mut n) = self.0.count.lock() {
            *n -= 1;
            self.0.freed.notify_one();
        }
    }
}

/// Chat-completions client sending interleaved text and PNG images.
pub struct HttpBackend {
    config: HttpConfig,
    api_key: String,
    agent: ureq::Agent,
    in_flight: InFlight,
}

enum Attempt {
    Done(ModelReply),
    Retry(GatewayError),
    Fail(GatewayError),
}

impl HttpBackend {
    /// Reads the API key from the configured environment variable.
    pub fn from_env(config: HttpConfig) -> Result<Self, GatewayError> {
        let key = std::env::var(&config.api_key_env)
            .map_err(|_| GatewayError::Config(format!("environment variable {} is not set", config.api_key_env)))?;
        Ok(Self::new(config, key))
    }

    pub fn new(config: HttpConfig, api_key: String) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(config.timeout))
            .build()
            .into();
        let in_flight = InFlight { count: Mutex::new(0), freed: Condvar::new(), limit: config.max_in_flight.max(1) };
        Self { config, api_key, agent, in_flight }
    }

    fn request_body(&self, segments: &[PromptSegment]) -> Result<String, GatewayError> {
        let mut content = Vec::with_capacity(segments.len());
        for seg in segments {
            match seg {
                PromptSegment::Text(t) => content.push(json!({"type": "text", "text": t})),
                PromptSegment::Image(img) => {
                    let mut png = Vec::new();
                    image::DynamicImage::ImageRgba8((**img).clone())
                        .write_to(&mut Cursor::new(&mut png), image::ImageFormat::Png)
                        .map_err(|e| GatewayError::Config(format!("png encoding: {e}")))?;
                    let b64 = base64::engine::general_purpose::STANDARD.encode(&png);
                    content.push(json!({"type": "image_url", "image_url": {"url": format!("data:image/png;base64,{b64}")}}));
                }
            }
        }
        let body = json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_tokens,
            "messages": [{"role": "user", "content": content}],
        })
        .to_string();
        if body.len() > self.config.max_prompt_bytes {
            return Err(GatewayError::OversizePrompt { bytes: body.len(), limit: self.config.max_prompt_bytes });
        }
        Ok(body)
    }

    fn attempt(&self, body: &str, attempt: u32, started: Instant) -> Attempt {
        let result = self
            .agent
            .post(&self.config.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .header("Content-Type", "application/json")
            .send(body);
        let mut resp = match result {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(GatewayError::TransportError { attempts: attempt, message: e.to_string() }),
        };
        let status = resp.status().as_u16();
        let retry_after = resp
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok());
        let text = match resp.body_mut().read_to_string() {
            Ok(t) => t,
            Err(e) => return Attempt::Retry(GatewayError::TransportError { attempts: attempt, message: e.to_string() }),
        };
        match status {
            200..=299 => match parse_reply(&text) {
                Some((reply, usage)) => Attempt::Done(ModelReply {
                    text: reply,
                    usage,
                    latency_ms: started.elapsed().as_millis() as u64,
                    attempts: attempt,
                }),
                None => Attempt::Fail(GatewayError::Rejected { status, body: truncate(&text) }),
            },
            429 => Attempt::Retry(GatewayError::RateLimited { retry_after_secs: retry_after }),
            500..=599 => Attempt::Retry(GatewayError::TransportError { attempts: attempt, message: format!("status {status}") }),
            _ => Attempt::Fail(GatewayError::Rejected { status, body: truncate(&text) }),
        }
    }
}

fn truncate(s: &str) -> String {
    s.chars().take(500).collect()
}

fn parse_reply(body: &str) -> Option<(String, Option<Usage>)> {
    let v: Value = serde_json::from_str(body).ok()?;
    let text = v.pointer("/choices/0/message/content")?.as_str()?.to_string();
    let usage = v.get("usage").and_then(|u| {
        Some(Usage {
            prompt_tokens: u.get("prompt_tokens")?.as_u64()?,
            completion_tokens: u.get("completion_tokens")?.as_u64()?,
        })
    });
    Some((text, usage))
}

impl ModelBackend for HttpBackend {
    fn complete(&self, segments: &[PromptSegment]) -> Result<ModelReply, GatewayError> {
        if segments.is_empty() {
            return Err(GatewayError::EmptyPrompt);
        }
        let body = self.request_body(segments)?;
        let _slot = self.in_flight.enter();
        let started = Instant::now();
        let mut last = None;
        for attempt in 1..=MAX_ATTEMPTS {
            match self.attempt(&body, attempt, started) {
                Attempt::Done(reply) => return Ok(reply),
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry(e) => {
                    warn!(target: "tapwise::llm", attempt, error = %e, "model request failed");
                    if attempt < MAX_ATTEMPTS {
                        let backoff = self.config.backoff_base * 2u32.pow(attempt - 1);
                        let hinted = match &e {
                            GatewayError::RateLimited { retry_after_secs: Some(s) } => Duration::from_secs(*s),
                            _ => Duration::ZERO,
                        };
                        std::thread::sleep(backoff.max(hinted).min(Duration::from_secs(60)));
                    }
                    last = Some(e);
                }
            }
        }
        Err(match last {
            Some(GatewayError::TransportError { message, .. }) => GatewayError::TransportError { attempts: MAX_ATTEMPTS, message },
            Some(e) => e,
            None => unreachable!("at least one attempt is made"),
        })
    }
}
