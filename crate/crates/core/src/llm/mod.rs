//! Multimodal completion backends.
//!
//! Every model interaction goes through [`ModelBackend::complete`] with an
//! ordered list of text and image segments. Backends: a chat-completions HTTP
//! client (feature `http`), a scripted lookup table for tests and benchmarks,
//! and a record/replay wrapper around either.

mod cassette;
#[cfg(feature = "http")]
mod http;
mod scripted;

use std::sync::Arc;

use image::RgbaImage;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cassette::{CassetteMode, RecordReplay};
#[cfg(feature = "http")]
pub use http::{HttpBackend, HttpConfig, DEFAULT_API_KEY_ENV};
pub use scripted::{Matcher, Script, ScriptEntry, ScriptedBackend};

#[derive(Debug, Clone, PartialEq)]
pub enum PromptSegment {
    Text(String),
    Image(Arc<RgbaImage>),
}

impl PromptSegment {
    pub fn text(s: impl Into<String>) -> Self {
        Self::Text(s.into())
    }

    pub fn image(img: RgbaImage) -> Self {
        Self::Image(Arc::new(img))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelReply {
    pub text: String,
    pub usage: Option<Usage>,
    pub latency_ms: u64,
    /// Requests sent to produce this reply, retries included.
    pub attempts: u32,
}

impl ModelReply {
    pub fn immediate(text: impl Into<String>) -> Self {
        Self { text: text.into(), usage: None, latency_ms: 0, attempts: 1 }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GatewayError {
    #[error("transport error after {attempts} attempt(s): {message}")]
    TransportError { attempts: u32, message: String },
    #[error("rate limited (retry after {retry_after_secs:?} s)")]
    RateLimited { retry_after_secs: Option<u64> },
    #[error("request rejected with status {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("script has no reply for call {call_index}")]
    ScriptExhausted { call_index: usize },
    #[error("prompt of {bytes} bytes exceeds the {limit} byte limit")]
    OversizePrompt { bytes: usize, limit: usize },
    #[error("prompt has no segments")]
    EmptyPrompt,
    #[error("cassette has no reply for prompt digest {digest}")]
    CassetteMiss { digest: String },
    #[error("cassette i/o: {0}")]
    Cassette(String),
    #[error("backend misconfigured: {0}")]
    Config(String),
}

pub trait ModelBackend: Send + Sync {
    fn complete(&self, segments: &[PromptSegment]) -> Result<ModelReply, GatewayError>;
}

impl<T: ModelBackend + ?Sized> ModelBackend for Arc<T> {
    fn complete(&self, segments: &[PromptSegment]) -> Result<ModelReply, GatewayError> {
        (**self).complete(segments)
    }
}

impl<T: ModelBackend + ?Sized> ModelBackend for &T {
    fn complete(&self, segments: &[PromptSegment]) -> Result<ModelReply, GatewayError> {
        (**self).complete(segments)
    }
}

/// All text segments joined with newlines; what scripted matching sees.
pub fn prompt_text(segments: &[PromptSegment]) -> String {
    segments
        .iter()
        .filter_map(|s| match s {
            PromptSegment::Text(t) => Some(t.as_str()),
            PromptSegment::Image(_) => None,
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// SHA-256 of decoded pixels, independent of how the image was encoded.
pub fn pixel_digest(img: &RgbaImage) -> String {
    let mut h = Sha256::new();
    h.update(img.width().to_le_bytes());
    h.update(img.height().to_le_bytes());
    h.update(img.as_raw());
    hex::encode(h.finalize())
}

/// Digest of a prompt: ordered text bytes and image pixel digests.
pub fn prompt_digest(segments: &[PromptSegment]) -> String {
    let mut h = Sha256::new();
    for seg in segments {
        match seg {
            PromptSegment::Text(t) => {
                h.update(b"T");
                h.update((t.len() as u64).to_le_bytes());
                h.update(t.as_bytes());
            }
            PromptSegment::Image(img) => {
                h.update(b"I");
                h.update(pixel_digest(img).as_bytes());
            }
        }
    }
    hex::encode(h.finalize())
}
