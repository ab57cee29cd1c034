//! The bundled reference corpus: six simulated apps and an eighteen-task
//! suite with scripted-model fixtures, compiled into the crate.

use std::sync::Arc;

use crate::bench::{load_suite_with, Suite, SuiteError};
use crate::sim::{load_app_spec_str, SimAppSpec, SimError};

macro_rules! corpus_files {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../corpus/", $name)))),*]
    };
}

/// (relative path, contents) of every corpus file.
pub static FILES: &[(&str, &str)] = corpus_files![
    "suite.toml",
    "apps/mail.toml",
    "apps/clock.toml",
    "apps/notes.toml",
    "apps/contacts.toml",
    "apps/gallery.toml",
    "apps/settings.toml",
    "scripts/mail.explore.script",
    "scripts/clock.explore.script",
    "scripts/notes.explore.script",
    "scripts/contacts.explore.script",
    "scripts/gallery.explore.script",
    "scripts/settings.explore.script",
    "scripts/mail.deploy.script",
    "scripts/clock.deploy.script",
    "scripts/notes.deploy.script",
    "scripts/contacts.deploy.script",
    "scripts/gallery.deploy.script",
    "scripts/settings.deploy.script",
    "demos/mail.demo.json",
    "demos/clock.demo.json",
    "demos/notes.demo.json",
    "demos/contacts.demo.json",
    "demos/gallery.demo.json",
    "demos/settings.demo.json",
    "manual/mail.docs.toml",
    "manual/clock.docs.toml",
    "manual/notes.docs.toml",
    "manual/contacts.docs.toml",
    "manual/gallery.docs.toml",
    "manual/settings.docs.toml",
];

pub const APP_IDS: [&str; 6] = ["mail", "clock", "notes", "contacts", "gallery", "settings"];

pub fn file(path: &str) -> Option<&'static str> {
    FILES.iter().find(|(p, _)| *p == path).map(|(_, text)| *text)
}

/// Loads a bundled app by id, as used by `sim:<id>` device names.
pub fn app_spec(app_id: &str) -> Result<Arc<SimAppSpec>, SimError> {
    let path = format!("apps/{app_id}.toml");
    let text = file(&path).ok_or_else(|| SimError::SchemaError { path: "$".into(), message: format!("no bundled app {app_id:?}") })?;
    load_app_spec_str(text, None).map(Arc::new)
}

/// The reference suite with all fixtures resolved from the bundled files.
pub fn reference_suite() -> Result<Suite, SuiteError> {
    load_suite_with(
        file("suite.toml").expect("bundled suite"),
        &mut |rel| file(rel).map(str::to_string).ok_or_else(|| SuiteError::Io { path: rel.to_string(), message: "not bundled".into() }),
        None,
    )
}
