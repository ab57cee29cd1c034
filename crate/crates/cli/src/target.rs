//! `--app` values: `sim:<bundled app id>`, `sim:<path to app spec>` or
//! `adb:<serial>:<app id>`.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use tapwise::corpus::{app_spec, APP_IDS};
use tapwise::device::{AdbDevice, Device, DeviceLock};
use tapwise::sim::{load_app_spec, SimAppSpec, SimDevice};

use crate::CliError;

#[derive(Debug, Clone)]
pub enum Target {
    Sim(Arc<SimAppSpec>),
    Adb { serial: String, app_id: String },
}

/// An opened device plus the claim on its serial, released on drop.
pub struct OpenDevice {
    pub device: Box<dyn Device>,
    pub lock: Option<DeviceLock>,
}

impl Target {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        if let Some(rest) = s.strip_prefix("sim:") {
            if APP_IDS.contains(&rest) {
                let spec = app_spec(rest).map_err(|e| CliError::Infra(format!("bundled app {rest}: {e}")))?;
                return Ok(Self::Sim(spec));
            }
            let path = PathBuf::from(rest);
            if !path.is_file() {
                return Err(CliError::Usage(format!(
                    "app {s:?} is neither a bundled app ({}) nor an app spec file",
                    APP_IDS.join(", ")
                )));
            }
            return load_sim(&path);
        }
        if let Some(rest) = s.strip_prefix("adb:") {
            if let Some((serial, app_id)) = rest.split_once(':').filter(|(a, b)| !a.is_empty() && !b.is_empty()) {
                return Ok(Self::Adb { serial: serial.into(), app_id: app_id.into() });
            }
        }
        Err(CliError::Usage(format!("app {s:?} must be sim:<app id|spec path> or adb:<serial>:<app id>")))
    }

    pub fn app_id(&self) -> &str {
        match self {
            Self::Sim(spec) => &spec.app_id,
            Self::Adb { app_id, .. } => app_id,
        }
    }

    /// What session listings show as the device.
    pub fn describe(&self) -> String {
        match self {
            Self::Sim(spec) => format!("sim:{}", spec.app_id),
            Self::Adb { serial, .. } => serial.clone(),
        }
    }

    pub fn open(&self, adb: &Path) -> Result<OpenDevice, CliError> {
        match self {
            Self::Sim(spec) => Ok(OpenDevice { device: Box::new(SimDevice::new(spec.clone())), lock: None }),
            Self::Adb { serial, .. } => {
                let lock = DeviceLock::acquire(serial)?;
                let device = AdbDevice::connect(adb, serial)?;
                Ok(OpenDevice { device: Box::new(device), lock: Some(lock) })
            }
        }
    }
}

fn load_sim(path: &Path) -> Result<Target, CliError> {
    let spec = load_app_spec(path).map_err(|e| CliError::Usage(format!("app spec {}: {e}", path.display())))?;
    Ok(Target::Sim(Arc::new(spec)))
}
