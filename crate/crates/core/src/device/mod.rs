//! Device control: the [`Device`] trait shared by the debug-bridge backend
//! and the simulator, plus the lowering of element-relative actions into
//! coordinate gestures.

mod adb;

use std::collections::HashSet;
use std::sync::{Mutex, OnceLock};
use std::time::Duration;

use image::RgbaImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{Action, Direction, Distance};
use crate::ui_model::ElementRegistry;

pub use adb::{escape_input_text, parse_wm_size, AdbDevice};

pub const LONG_PRESS_MS: u32 = 1000;
pub const SWIPE_MS: u32 = 400;
pub const REAL_SETTLE_DELAY: Duration = Duration::from_secs(1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Real,
    Simulated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceHandle {
    pub serial: String,
    pub screen_size: (u32, u32),
    pub backend: Backend,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GestureKind {
    Tap,
    LongPress,
    Swipe,
    TextInput,
    KeyBack,
}

/// A low-level input event. `end` is only meaningful for swipes; for the
/// other kinds it equals `start`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GestureCommand {
    pub kind: GestureKind,
    pub start: (i32, i32),
    pub end: (i32, i32),
    pub duration_ms: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DeviceError {
    #[error("device {0} is not connected")]
    DeviceGone(String),
    #[error("screenshot capture failed: {0}")]
    CaptureFailed(String),
    #[error("hierarchy dump failed: {0}")]
    DumpFailed(String),
    #[error("input rejected: {0}")]
    InputRejected(String),
    #[error("device {0} is already in use by another session")]
    DeviceBusy(String),
}

/// Everything the agent loops need from a phone.
pub trait Device: Send {
    fn handle(&self) -> &DeviceHandle;

    fn capture_screenshot(&mut self) -> Result<RgbaImage, DeviceError>;

    fn dump_hierarchy(&mut self) -> Result<String, DeviceError>;

    /// Performs `action` on the screen described by `registry`, which must
    /// already have passed [`crate::action::validate_action`]. Returns once
    /// the input is acknowledged and the settle delay has elapsed.
    fn execute(&mut self, action: &Action, registry: &ElementRegistry) -> Result<(), DeviceError>;

    fn screen_size(&self) -> (u32, u32) {
        self.handle().screen_size
    }

    /// An opaque name for the current screen when the backend knows one
    /// (the simulator's page id). Real devices return `None`.
    fn page_ref(&self) -> Option<String> {
        None
    }
}

/// Fraction of the screen dimension along the swipe axis, in percent.
pub fn swipe_percent(dist: Distance) -> i64 {
    match dist {
        Distance::Short => 10,
        Distance::Medium => 25,
        Distance::Long => 50,
    }
}

fn clamp_point((x, y): (i64, i64), (w, h): (u32, u32)) -> (i32, i32) {
    (x.clamp(0, w as i64 - 1) as i32, y.clamp(0, h as i64 - 1) as i32)
}

/// Lowers an action into the gesture a real device would receive. `Exit`
/// produces nothing. Element labels must be valid for `registry`.
pub fn lower_action(action: &Action, registry: &ElementRegistry) -> Result<Option<GestureCommand>, DeviceError> {
    let screen = registry.screen_size;
    let center = |label: u32| -> Result<(i64, i64), DeviceError> {
        let el = registry
            .by_label(label)
            .ok_or_else(|| DeviceError::InputRejected(format!("element {label} is not on screen")))?;
        let (x, y) = el.bounds.center();
        Ok((x as i64, y as i64))
    };
    let point = |kind, at: (i64, i64), duration_ms| {
        let p = clamp_point(at, screen);
        GestureCommand { kind, start: p, end: p, duration_ms, text: None }
    };
    Ok(Some(match action {
        Action::Tap { element } => point(GestureKind::Tap, center(*element)?, 0),
        Action::LongPress { element } => point(GestureKind::LongPress, center(*element)?, LONG_PRESS_MS),
        Action::Swipe { element, direction, dist } => {
            let (cx, cy) = center(*element)?;
            let pct = swipe_percent(*dist);
            let (w, h) = (screen.0 as i64, screen.1 as i64);
            let end = match direction {
                Direction::Up => (cx, cy - h * pct / 100),
                Direction::Down => (cx, cy + h * pct / 100),
                Direction::Left => (cx - w * pct / 100, cy),
                Direction::Right => (cx + w * pct / 100, cy),
            };
            GestureCommand {
                kind: GestureKind::Swipe,
                start: clamp_point((cx, cy), screen),
                end: clamp_point(end, screen),
                duration_ms: SWIPE_MS,
                text: None,
            }
        }
        Action::Text { text } => GestureCommand {
            kind: GestureKind::TextInput,
            start: (0, 0),
            end: (0, 0),
            duration_ms: 0,
            text: Some(text.clone()),
        },
        Action::Back => GestureCommand { kind: GestureKind::KeyBack, start: (0, 0), end: (0, 0), duration_ms: 0, text: None },
        Action::Exit => return Ok(None),
    }))
}

fn held_serials() -> &'static Mutex<HashSet<String>> {
    static HELD: OnceLock<Mutex<HashSet<String>>> = OnceLock::new();
    HELD.get_or_init(|| Mutex::new(HashSet::new()))
}

/// Exclusive claim on a device serial for the lifetime of a session.
#[derive(Debug)]
pub struct DeviceLock {
    serial: String,
}

impl DeviceLock {
    pub fn acquire(serial: &str) -> Result<Self, DeviceError> {
        let mut held = held_serials().lock().expect("device lock table poisoned");
        if !held.insert(serial.to_string()) {
            return Err(DeviceError::DeviceBusy(serial.to_string()));
        }
        Ok(Self { serial: serial.to_string() })
    }

    pub fn serial(&self) -> &str {
        &self.serial
    }
}

impl Drop for DeviceLock {
    fn drop(&mut self) {
        if let Ok(mut held) = held_serials().lock() {
            held.remove(&self.serial);
        }
    }
}
