//! What the agent loops share: screen captures and the event stream they
//! publish to observers such as the session service.

use std::sync::Arc;

use image::RgbaImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::{Device, DeviceError};
use crate::kb::{DocSource, ElementDocument};
use crate::llm::pixel_digest;
use crate::ui_model::{annotate_screenshot, parse_hierarchy, AnnotateError, Bounds, ElementRegistry, HierarchyError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CaptureError {
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error("hierarchy: {0}")]
    Hierarchy(#[from] HierarchyError),
    #[error(transparent)]
    Annotate(#[from] AnnotateError),
}

/// One observation of the screen: raw and annotated screenshot plus the
/// element registry the labels refer to.
#[derive(Debug, Clone)]
pub struct Capture {
    pub screenshot: Arc<RgbaImage>,
    pub annotated: Arc<RgbaImage>,
    pub registry: ElementRegistry,
    pub screenshot_digest: String,
}

impl Capture {
    pub fn take(device: &mut dyn Device) -> Result<Self, CaptureError> {
        let screenshot = device.capture_screenshot()?;
        let xml = device.dump_hierarchy()?;
        let registry = parse_hierarchy(&xml, device.screen_size())?;
        Self::from_parts(screenshot, registry)
    }

    pub fn from_parts(screenshot: RgbaImage, registry: ElementRegistry) -> Result<Self, CaptureError> {
        let annotated = annotate_screenshot(&screenshot, &registry)?;
        Ok(Self {
            screenshot_digest: pixel_digest(&screenshot),
            screenshot: Arc::new(screenshot),
            annotated: Arc::new(annotated),
            registry,
        })
    }

    /// Same elements and identical pixels.
    pub fn same_screen(&self, other: &Capture) -> bool {
        self.registry.same_elements(&other.registry) && self.screenshot_digest == other.screenshot_digest
    }

    pub fn hotspots(&self) -> Vec<Hotspot> {
        self.registry
            .elements
            .iter()
            .map(|e| Hotspot { label: e.label, identifier: e.identifier.clone(), bounds: e.bounds, editable: e.editable })
            .collect()
    }
}

/// A clickable region of a frame, for front ends.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hotspot {
    pub label: u32,
    pub identifier: String,
    pub bounds: Bounds,
    pub editable: bool,
}

/// Outcome of the relevance check after an exploration action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relevance {
    Relevant,
    Irrelevant,
    Unchanged,
}

/// A rejected field of a submitted demo event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

/// Everything a session publishes, in order. Actions are given in their
/// canonical call syntax.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SessionEvent {
    Frame { screenshot_digest: String, screen_size: (u32, u32), hotspots: Vec<Hotspot> },
    Step { index: u32, screenshot_digest: String, observation: String, thought: String, action: String, summary: String },
    ExploreStep { index: u32, action: String, element_id: Option<String>, relevance: Option<Relevance>, doc_written: bool },
    AutoBack { after_step: u32 },
    Doc { app_id: String, element_id: String, version: u32, source: DocSource, body: String },
    DemoAccepted { event_index: u32, action: String, element_id: Option<String> },
    DemoRejected { errors: Vec<FieldError> },
    StepError { iteration: u32, message: String },
    Finished { termination: String },
}

impl SessionEvent {
    pub fn frame(capture: &Capture) -> Self {
        Self::Frame {
            screenshot_digest: capture.screenshot_digest.clone(),
            screen_size: capture.registry.screen_size,
            hotspots: capture.hotspots(),
        }
    }

    pub fn doc(doc: &ElementDocument) -> Self {
        Self::Doc {
            app_id: doc.app_id.clone(),
            element_id: doc.element_id.clone(),
            version: doc.version,
            source: doc.source,
            body: doc.body.clone(),
        }
    }
}

/// Receives a session's frames and events as they happen.
pub trait SessionObserver: Send {
    /// Called with every new capture, before the matching `Frame` event.
    fn on_capture(&mut self, _capture: &Capture) {}

    fn on_event(&mut self, _event: &SessionEvent) {}
}

/// Discards everything.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullObserver;

impl SessionObserver for NullObserver {}

/// Keeps every event in memory.
#[derive(Debug, Default, Clone)]
pub struct EventLog {
    pub events: Vec<SessionEvent>,
}

impl SessionObserver for EventLog {
    fn on_event(&mut self, event: &SessionEvent) {
        self.events.push(event.clone());
    }
}

pub(crate) fn publish_capture(observer: &mut dyn SessionObserver, capture: &Capture) {
    observer.on_capture(capture);
    observer.on_event(&SessionEvent::frame(capture));
}
