use std::path::PathBuf;
use std::process::Command;
use std::time::Duration;

use image::RgbaImage;
use tracing::debug;

use super::{lower_action, Backend, Device, DeviceError, DeviceHandle, GestureCommand, GestureKind, REAL_SETTLE_DELAY};
use crate::action::Action;
use crate::ui_model::ElementRegistry;

const DUMP_PATH: &str = "/sdcard/tapwise_dump.xml";

/// A phone reached through the `adb` command-line client.
pub struct AdbDevice {
    adb: PathBuf,
    handle: DeviceHandle,
    settle: Duration,
}

impl AdbDevice {
    /// Checks that `serial` is attached and reads its screen size once.
    pub fn connect(adb: impl Into<PathBuf>, serial: &str) -> Result<Self, DeviceError> {
        let adb = adb.into();
        let listing = run(&adb, &["devices"]).map_err(|e| DeviceError::DeviceGone(format!("{serial}: {e}")))?;
        let attached = listing.lines().skip(1).any(|line| {
            let mut cols = line.split_whitespace();
            cols.next() == Some(serial) && cols.next() == Some("device")
        });
        if !attached {
            return Err(DeviceError::DeviceGone(serial.to_string()));
        }
        let mut dev = Self {
            adb,
            handle: DeviceHandle { serial: serial.to_string(), screen_size: (0, 0), backend: Backend::Real },
            settle: REAL_SETTLE_DELAY,
        };
        let out = dev.shell_text(&["shell", "wm", "size"], DeviceError::CaptureFailed)?;
        dev.handle.screen_size = parse_wm_size(&out)
            .ok_or_else(|| DeviceError::CaptureFailed(format!("cannot read screen size from {out:?}")))?;
        Ok(dev)
    }

    pub fn with_settle_delay(mut self, settle: Duration) -> Self {
        self.settle = settle;
        self
    }

    fn command(&self, args: &[&str]) -> Result<Vec<u8>, (bool, String)> {
        let mut full = vec!["-s", self.handle.serial.as_str()];
        full.extend_from_slice(args);
        debug!(target: "tapwise::adb", args = ?full, "adb");
        let out = Command::new(&self.adb).args(&full).output().map_err(|e| (true, e.to_string()))?;
        if !out.status.success() {
            let err = String::from_utf8_lossy(&out.stderr).trim().to_string();
            let gone = err.contains("not found") || err.contains("no devices") || err.contains("offline");
            return Err((gone, err));
        }
        Ok(out.stdout)
    }

    fn shell_bytes(&self, args: &[&str], fail: fn(String) -> DeviceError) -> Result<Vec<u8>, DeviceError> {
        self.command(args).map_err(|(gone, msg)| {
            if gone {
                DeviceError::DeviceGone(format!("{}: {msg}", self.handle.serial))
            } else {
                fail(msg)
            }
        })
    }

    fn shell_text(&self, args: &[&str], fail: fn(String) -> DeviceError) -> Result<String, DeviceError> {
        self.shell_bytes(args, fail).map(|b| String::from_utf8_lossy(&b).into_owned())
    }

    /// Sends a lowered gesture as an `input` shell command.
    pub fn send_gesture(&self, g: &GestureCommand) -> Result<(), DeviceError> {
        let args: Vec<String> = match g.kind {
            GestureKind::Tap => vec!["tap".into(), g.start.0.to_string(), g.start.1.to_string()],
            GestureKind::LongPress | GestureKind::Swipe => vec![
                "swipe".into(),
                g.start.0.to_string(),
                g.start.1.to_string(),
                g.end.0.to_string(),
                g.end.1.to_string(),
                g.duration_ms.to_string(),
            ],
            GestureKind::TextInput => vec!["text".into(), escape_input_text(g.text.as_deref().unwrap_or_default())],
            GestureKind::KeyBack => vec!["keyevent".into(), "KEYCODE_BACK".into()],
        };
        let mut full = vec!["shell", "input"];
        full.extend(args.iter().map(String::as_str));
        self.shell_bytes(&full, DeviceError::InputRejected).map(|_| ())
    }
}

impl Device for AdbDevice {
    fn handle(&self) -> &DeviceHandle {
        &self.handle
    }

    fn capture_screenshot(&mut self) -> Result<RgbaImage, DeviceError> {
        let png = self.shell_bytes(&["exec-out", "screencap", "-p"], DeviceError::CaptureFailed)?;
        let img = image::load_from_memory_with_format(&png, image::ImageFormat::Png)
            .map_err(|e| DeviceError::CaptureFailed(e.to_string()))?
            .to_rgba8();
        if img.dimensions() != self.handle.screen_size {
            return Err(DeviceError::CaptureFailed(format!(
                "screenshot is {:?}, screen is {:?}",
                img.dimensions(),
                self.handle.screen_size
            )));
        }
        Ok(img)
    }

    fn dump_hierarchy(&mut self) -> Result<String, DeviceError> {
        self.shell_text(&["shell", "uiautomator", "dump", DUMP_PATH], DeviceError::DumpFailed)?;
        let xml = self.shell_text(&["exec-out", "cat", DUMP_PATH], DeviceError::DumpFailed)?;
        if !xml.trim_start().starts_with('<') {
            return Err(DeviceError::DumpFailed(xml.chars().take(200).collect()));
        }
        Ok(xml)
    }

    fn execute(&mut self, action: &Action, registry: &ElementRegistry) -> Result<(), DeviceError> {
        let Some(gesture) = lower_action(action, registry)? else {
            return Ok(());
        };
        self.send_gesture(&gesture)?;
        std::thread::sleep(self.settle);
        Ok(())
    }
}

fn run(adb: &PathBuf, args: &[&str]) -> Result<String, String> {
    let out = Command::new(adb).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(String::from_utf8_lossy(&out.stderr).trim().to_string());
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

/// Reads `wm size` output, preferring an override size over the physical one.
pub fn parse_wm_size(output: &str) -> Option<(u32, u32)> {
    let parse = |prefix: &str| {
        output.lines().find_map(|l| {
            let (w, h) = l.trim().strip_prefix(prefix)?.trim().split_once('x')?;
            Some((w.trim().parse().ok()?, h.trim().parse().ok()?))
        })
    };
    parse("Override size:").or_else(|| parse("Physical size:")).filter(|&(w, h): &(u32, u32)| w > 0 && h > 0)
}

/// Escapes a payload for `input text`: spaces become `%s` and characters the
/// device shell would interpret are backslash-escaped.
pub fn escape_input_text(text: &str) -> String {
    let mut out = String::with_capacity(text.len() * 2);
    for c in text.chars() {
        match c {
            ' ' => out.push_str("%s"),
            '(' | ')' | '<' | '>' | '|' | ';' | '&' | '*' | '\\' | '~' | '"' | '\'' | '`' | '$' | '#' | '!' | '?'
            | '[' | ']' | '{' | '}' => {
                out.push('\\');
                out.push(c);
            }
            _ => out.push(c),
        }
    }
    out
}
