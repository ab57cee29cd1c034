use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::sync::Arc;

use image::RgbaImage;
use serde::Deserialize;
use thiserror::Error;

use crate::action::{ActionKind, Direction};
use crate::ui_model::parse_hierarchy;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("schema error at {path}: {message}")]
    SchemaError { path: String, message: String },
    #[error("transition targets missing page {0:?}")]
    DanglingTransition(String),
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> SimError {
    SimError::SchemaError { path: path.into(), message: message.into() }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawApp {
    schema_version: u32,
    app_id: String,
    start_page: String,
    screen_size: (u32, u32),
    pages: Vec<RawPage>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPage {
    page_id: String,
    #[serde(default)]
    title: Option<String>,
    hierarchy_xml: String,
    #[serde(default)]
    screenshot: Option<RawScreenshot>,
    #[serde(default)]
    transitions: Vec<RawTransition>,
    #[serde(default)]
    irrelevant: bool,
    #[serde(default)]
    text_sink: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
enum RawScreenshot {
    Procedural {
        #[serde(default)]
        background: Option<String>,
    },
    Fixture(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTransition {
    element: String,
    action: ActionKind,
    #[serde(default)]
    direction: Option<Direction>,
    target: String,
}

#[derive(Debug, Clone)]
pub enum ScreenshotSource {
    Procedural { background: [u8; 3] },
    Fixture(Arc<RgbaImage>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub element: String,
    pub action: ActionKind,
    /// For swipes: the required direction, or any when absent.
    pub direction: Option<Direction>,
    pub target: String,
}

#[derive(Debug, Clone)]
pub struct PageSpec {
    pub page_id: String,
    pub title: String,
    pub hierarchy_xml: String,
    pub screenshot: ScreenshotSource,
    pub transitions: Vec<Transition>,
    /// Advertisement-like page unrelated to the app's purpose.
    pub irrelevant: bool,
    /// Identifier of the input field that accumulates typed text.
    pub text_sink: Option<String>,
}

impl PageSpec {
    pub fn find_transition(&self, element: &str, kind: ActionKind, direction: Option<Direction>) -> Option<&Transition> {
        self.transitions.iter().find(|t| {
            t.element == element && t.action == kind && (t.direction.is_none() || t.direction == direction)
        })
    }
}

#[derive(Debug, Clone)]
pub struct SimAppSpec {
    pub app_id: String,
    pub pages: BTreeMap<String, PageSpec>,
    pub start_page: String,
    pub screen_size: (u32, u32),
}

impl SimAppSpec {
    /// Panics on an unknown page; page ids come from validated specs.
    pub fn page(&self, page_id: &str) -> &PageSpec {
        &self.pages[page_id]
    }

    pub fn edges(&self) -> impl Iterator<Item = (&PageSpec, &Transition)> {
        self.pages.values().flat_map(|p| p.transitions.iter().map(move |t| (p, t)))
    }
}

/// Loads and fully validates an app spec file. Fixture screenshots are
/// resolved relative to the file's directory.
pub fn load_app_spec(path: impl AsRef<Path>) -> Result<SimAppSpec, SimError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| SimError::Io { path: path.display().to_string(), source })?;
    load_app_spec_str(&text, path.parent())
}

pub fn load_app_spec_str(text: &str, base_dir: Option<&Path>) -> Result<SimAppSpec, SimError> {
    let de = toml::de::Deserializer::parse(text).map_err(|e| schema("$", e.to_string()))?;
    let raw: RawApp = serde_path_to_error::deserialize(de).map_err(|e| schema(e.path().to_string(), e.inner().to_string()))?;

    if raw.schema_version != SCHEMA_VERSION {
        return Err(schema("schema_version", format!("unsupported version {}", raw.schema_version)));
    }
    if raw.app_id.is_empty() {
        return Err(schema("app_id", "must not be empty"));
    }
    if raw.screen_size.0 == 0 || raw.screen_size.1 == 0 {
        return Err(schema("screen_size", "must be positive"));
    }
    let page_ids: HashSet<String> = raw.pages.iter().map(|p| p.page_id.clone()).collect();
    if page_ids.len() != raw.pages.len() {
        return Err(schema("pages", "duplicate page_id"));
    }
    if !page_ids.contains(&raw.start_page) {
        return Err(SimError::DanglingTransition(raw.start_page.clone()));
    }

    let mut pages = BTreeMap::new();
    for (i, p) in raw.pages.into_iter().enumerate() {
        let at = |field: &str| format!("pages[{i}].{field}");
        let registry = parse_hierarchy(&p.hierarchy_xml, raw.screen_size).map_err(|e| schema(at("hierarchy_xml"), e.to_string()))?;

        let mut transitions = Vec::new();
        for (j, t) in p.transitions.into_iter().enumerate() {
            let at_t = |field: &str| format!("pages[{i}].transitions[{j}].{field}");
            if !page_ids.contains(&t.target) {
                return Err(SimError::DanglingTransition(t.target));
            }
            if registry.by_identifier(&t.element).is_none() {
                return Err(schema(at_t("element"), format!("{:?} is not an element of page {:?}", t.element, p.page_id)));
            }
            if !super::is_navigational(t.action) {
                return Err(schema(at_t("action"), format!("{} cannot trigger a transition", t.action)));
            }
            if t.direction.is_some() && t.action != ActionKind::Swipe {
                return Err(schema(at_t("direction"), "only swipes take a direction"));
            }
            transitions.push(Transition { element: t.element, action: t.action, direction: t.direction, target: t.target });
        }

        if let Some(sink) = &p.text_sink {
            let editable = registry.by_identifier(sink).is_some_and(|e| e.editable);
            if !editable || super::reflect_text(&p.hierarchy_xml, sink, "").is_none() {
                return Err(schema(at("text_sink"), format!("{sink:?} must be an editable element with that resource-id")));
            }
        }

        let screenshot = match p.screenshot {
            None => ScreenshotSource::Procedural { background: default_background(&p.page_id) },
            Some(RawScreenshot::Procedural { background: None }) => {
                ScreenshotSource::Procedural { background: default_background(&p.page_id) }
            }
            Some(RawScreenshot::Procedural { background: Some(hex) }) => ScreenshotSource::Procedural {
                background: parse_color(&hex).ok_or_else(|| schema(at("screenshot.procedural.background"), "expected #rrggbb"))?,
            },
            Some(RawScreenshot::Fixture(file)) => {
                let base = base_dir.ok_or_else(|| schema(at("screenshot.fixture"), "fixtures need a spec file location"))?;
                let full = base.join(&file);
                let img = image::open(&full).map_err(|e| schema(at("screenshot.fixture"), format!("{}: {e}", full.display())))?;
                let img = img.to_rgba8();
                if img.dimensions() != raw.screen_size {
                    return Err(schema(at("screenshot.fixture"), format!("image is {:?}, screen is {:?}", img.dimensions(), raw.screen_size)));
                }
                ScreenshotSource::Fixture(Arc::new(img))
            }
        };

        pages.insert(
            p.page_id.clone(),
            PageSpec {
                title: p.title.unwrap_or_else(|| p.page_id.clone()),
                page_id: p.page_id,
                hierarchy_xml: p.hierarchy_xml,
                screenshot,
                transitions,
                irrelevant: p.irrelevant,
                text_sink: p.text_sink,
            },
        );
    }

    Ok(SimAppSpec { app_id: raw.app_id, pages, start_page: raw.start_page, screen_size: raw.screen_size })
}

fn parse_color(hex: &str) -> Option<[u8; 3]> {
    let h = hex.strip_prefix('#')?;
    if h.len() != 6 {
        return None;
    }
    let byte = |i: usize| u8::from_str_radix(&h[i..i + 2], 16).ok();
    Some([byte(0)?, byte(2)?, byte(4)?])
}

/// A pale colour derived from the page id, so pages are visually distinct.
fn default_background(page_id: &str) -> [u8; 3] {
    let h = page_id.bytes().fold(0x811c_9dc5u32, |acc, b| (acc ^ b as u32).wrapping_mul(0x0100_0193));
    [200 + (h % 48) as u8, 200 + ((h >> 8) % 48) as u8, 200 + ((h >> 16) % 48) as u8]
}
