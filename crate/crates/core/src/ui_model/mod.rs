//! UI hierarchy parsing.
//!
//! Turns a `uiautomator dump` document into an [`ElementRegistry`]: the
//! interactive nodes of one screen, in document order, each carrying a
//! stable identifier and a 1-based label that the model uses to refer to it.

mod overlay;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use overlay::{annotate_screenshot, label_text_height, AnnotateError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HierarchyError {
    #[error("malformed hierarchy xml: {0}")]
    MalformedXml(String),
    #[error("node has no bounds attribute")]
    MissingBounds,
    #[error("unparseable bounds {0:?}")]
    BadBounds(String),
}

/// Rectangle in screen pixels; `right` and `bottom` are exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Bounds {
    pub left: i32,
    pub top: i32,
    pub right: i32,
    pub bottom: i32,
}

impl Bounds {
    pub fn new(left: i32, top: i32, right: i32, bottom: i32) -> Self {
        Self { left, top, right, bottom }
    }

    /// Parses the dump format `[l,t][r,b]`.
    pub fn parse(raw: &str) -> Result<Self, HierarchyError> {
        let bad = || HierarchyError::BadBounds(raw.to_string());
        let nums: Vec<i32> = raw
            .trim()
            .strip_prefix('[')
            .and_then(|s| s.strip_suffix(']'))
            .ok_or_else(bad)?
            .split("][")
            .flat_map(|pair| pair.split(','))
            .map(|n| n.trim().parse::<i32>().map_err(|_| bad()))
            .collect::<Result<_, _>>()?;
        match nums[..] {
            [l, t, r, b] => Ok(Self::new(l, t, r, b)),
            _ => Err(bad()),
        }
    }

    pub fn width(&self) -> i32 {
        self.right - self.left
    }

    pub fn height(&self) -> i32 {
        self.bottom - self.top
    }

    pub fn is_degenerate(&self) -> bool {
        self.right <= self.left || self.bottom <= self.top
    }

    pub fn center(&self) -> (i32, i32) {
        ((self.left + self.right) / 2, (self.top + self.bottom) / 2)
    }

    pub fn area(&self) -> i64 {
        self.width().max(0) as i64 * self.height().max(0) as i64
    }

    pub fn contains(&self, x: i32, y: i32) -> bool {
        x >= self.left && x < self.right && y >= self.top && y < self.bottom
    }

    pub fn clip(&self, width: u32, height: u32) -> Self {
        Self::new(
            self.left.clamp(0, width as i32),
            self.top.clamp(0, height as i32),
            self.right.clamp(0, width as i32),
            self.bottom.clamp(0, height as i32),
        )
    }
}

impl std::fmt::Display for Bounds {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{},{}][{},{}]", self.left, self.top, self.right, self.bottom)
    }
}

/// One interactive node of a screen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UiElement {
    pub identifier: String,
    pub label: u32,
    pub bounds: Bounds,
    pub class_name: String,
    pub text_content: String,
    pub clickable: bool,
    pub long_clickable: bool,
    pub editable: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementRegistry {
    pub elements: Vec<UiElement>,
    pub screen_size: (u32, u32),
    pub source_hash: String,
}

impl ElementRegistry {
    pub fn empty(screen_size: (u32, u32)) -> Self {
        Self { elements: Vec::new(), screen_size, source_hash: String::new() }
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn by_label(&self, label: u32) -> Option<&UiElement> {
        label.checked_sub(1).and_then(|i| self.elements.get(i as usize))
    }

    pub fn by_identifier(&self, identifier: &str) -> Option<&UiElement> {
        self.elements.iter().find(|e| e.identifier == identifier)
    }

    pub fn has_editable(&self) -> bool {
        self.elements.iter().any(|e| e.editable)
    }

    /// The element a `text` action types into: the first editable one.
    pub fn input_target(&self) -> Option<&UiElement> {
        self.elements.iter().find(|e| e.editable)
    }

    /// Same elements on the same screen, ignoring the raw document digest.
    pub fn same_elements(&self, other: &Self) -> bool {
        self.screen_size == other.screen_size && self.elements == other.elements
    }
}

/// The attributes of one dump node that identify it.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RawNode {
    pub resource_id: String,
    pub class_name: String,
    pub bounds: Option<String>,
    pub text: String,
    pub content_desc: String,
}

impl RawNode {
    fn from_xml(node: &roxmltree::Node<'_, '_>) -> Self {
        let attr = |name: &str| node.attribute(name).unwrap_or_default().to_string();
        Self {
            resource_id: attr("resource-id"),
            class_name: attr("class"),
            bounds: node.attribute("bounds").map(str::to_string),
            text: attr("text"),
            content_desc: attr("content-desc"),
        }
    }
}

/// Stable key of a node: its resource id when present, otherwise
/// `class_WIDTHxHEIGHT_content` with content falling back from `text` to
/// `content-desc` to `noText`.
pub fn element_identifier(node: &RawNode) -> Result<String, HierarchyError> {
    let bounds = Bounds::parse(node.bounds.as_deref().ok_or(HierarchyError::MissingBounds)?)?;
    if !node.resource_id.is_empty() {
        return Ok(node.resource_id.clone());
    }
    let content = if !node.text.is_empty() {
        node.text.as_str()
    } else if !node.content_desc.is_empty() {
        node.content_desc.as_str()
    } else {
        "noText"
    };
    Ok(format!("{}_{}x{}_{}", node.class_name, bounds.width(), bounds.height(), content))
}

fn flag(node: &roxmltree::Node<'_, '_>, name: &str) -> bool {
    node.attribute(name).is_some_and(|v| v.eq_ignore_ascii_case("true"))
}

fn is_editable(node: &roxmltree::Node<'_, '_>) -> bool {
    flag(node, "editable") || node.attribute("class").is_some_and(|c| c.contains("EditText"))
}

pub fn source_digest(xml_text: &str) -> String {
    hex::encode(Sha256::digest(xml_text.as_bytes()))
}

struct Candidate<'a, 'input> {
    node: roxmltree::Node<'a, 'input>,
    raw_bounds: Bounds,
    identifier: String,
}

/// Parses a hierarchy dump into the registry of interactive elements.
///
/// Kept nodes are clickable, long-clickable or editable. A node is dropped
/// when an interactive descendant has identical bounds. Bounds are clipped to
/// the screen and elements that end up empty are dropped. Repeated
/// identifiers get `#1`, `#2`, ... from their second occurrence on.
pub fn parse_hierarchy(xml_text: &str, screen_size: (u32, u32)) -> Result<ElementRegistry, HierarchyError> {
    let doc = roxmltree::Document::parse(xml_text).map_err(|e| HierarchyError::MalformedXml(e.to_string()))?;

    let mut candidates: Vec<Candidate<'_, '_>> = Vec::new();
    for node in doc.descendants().filter(|n| n.has_tag_name("node")) {
        if !(flag(&node, "clickable") || flag(&node, "long-clickable") || is_editable(&node)) {
            continue;
        }
        let raw = RawNode::from_xml(&node);
        let identifier = element_identifier(&raw)?;
        let raw_bounds = Bounds::parse(raw.bounds.as_deref().unwrap_or_default())?;
        candidates.push(Candidate { node, raw_bounds, identifier });
    }

    let shadowed: HashSet<usize> = (0..candidates.len())
        .filter(|&i| {
            let outer = &candidates[i];
            candidates[i + 1..].iter().any(|inner| {
                inner.raw_bounds == outer.raw_bounds && inner.node.ancestors().any(|a| a == outer.node)
            })
        })
        .collect();

    let (width, height) = screen_size;
    let mut seen: HashSet<String> = HashSet::new();
    let mut elements = Vec::new();
    for (i, cand) in candidates.iter().enumerate() {
        if shadowed.contains(&i) {
            continue;
        }
        let bounds = cand.raw_bounds.clip(width, height);
        if bounds.is_degenerate() {
            continue;
        }
        let mut identifier = cand.identifier.clone();
        let mut k = 0;
        while seen.contains(&identifier) {
            k += 1;
            identifier = format!("{}#{k}", cand.identifier);
        }
        seen.insert(identifier.clone());
        let node = &cand.node;
        elements.push(UiElement {
            identifier,
            label: elements.len() as u32 + 1,
            bounds,
            class_name: node.attribute("class").unwrap_or_default().to_string(),
            text_content: node.attribute("text").unwrap_or_default().to_string(),
            clickable: flag(node, "clickable"),
            long_clickable: flag(node, "long-clickable"),
            editable: is_editable(node),
        });
    }

    Ok(ElementRegistry { elements, screen_size, source_hash: source_digest(xml_text) })
}
