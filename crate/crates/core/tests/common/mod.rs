//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::Deserialize;
use tapwise::action::{Action, Direction, Distance};
use tapwise::ui_model::{Bounds, ElementRegistry};

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

// ------------------------------------------------------------ hierarchies

#[derive(Debug, Deserialize)]
struct FixtureManifest {
    fixture: Vec<FixtureEntry>,
}

#[derive(Debug, Deserialize)]
struct FixtureEntry {
    file: String,
    #[serde(default)]
    screen: Option<(u32, u32)>,
    nodes: usize,
    identifiers: Vec<String>,
}

pub struct HierarchyFixture {
    pub name: String,
    pub xml: String,
    pub screen: (u32, u32),
    pub nodes: usize,
    pub identifiers: Vec<String>,
}

pub fn hierarchy_fixtures() -> Vec<HierarchyFixture> {
    let dir = fixtures_dir().join("hierarchy");
    let manifest: FixtureManifest =
        toml::from_str(&std::fs::read_to_string(dir.join("expected.toml")).unwrap()).expect("fixture manifest");
    manifest
        .fixture
        .into_iter()
        .map(|f| HierarchyFixture {
            xml: std::fs::read_to_string(dir.join(&f.file)).unwrap(),
            name: f.file,
            screen: f.screen.unwrap_or((1080, 1920)),
            nodes: f.nodes,
            identifiers: f.identifiers,
        })
        .collect()
}

/// Checks one fixture; returns a description of the first mismatch.
pub fn check_fixture(f: &HierarchyFixture) -> Result<(), String> {
    let doc = roxmltree::Document::parse(&f.xml).map_err(|e| format!("{}: {e}", f.name))?;
    let nodes = doc.descendants().filter(|n| n.has_tag_name("node")).count();
    if nodes != f.nodes {
        return Err(format!("{}: fixture has {nodes} nodes, manifest says {}", f.name, f.nodes));
    }
    let reg = tapwise::ui_model::parse_hierarchy(&f.xml, f.screen).map_err(|e| format!("{}: {e}", f.name))?;
    let ids: Vec<&str> = reg.elements.iter().map(|e| e.identifier.as_str()).collect();
    if ids != f.identifiers.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(format!("{}: identifiers {ids:?}, expected {:?}", f.name, f.identifiers));
    }
    check_labels(&reg).map_err(|e| format!("{}: {e}", f.name))
}

/// Labels are exactly 1..=n in order and identifiers are unique.
pub fn check_labels(reg: &ElementRegistry) -> Result<(), String> {
    for (i, el) in reg.elements.iter().enumerate() {
        if el.label != i as u32 + 1 {
            return Err(format!("element {i} has label {}", el.label));
        }
        if reg.by_label(el.label).map(|e| &e.identifier) != Some(&el.identifier) {
            return Err(format!("label {} does not map back", el.label));
        }
    }
    let mut ids: Vec<&str> = reg.elements.iter().map(|e| e.identifier.as_str()).collect();
    ids.sort();
    let n = ids.len();
    ids.dedup();
    if ids.len() != n {
        return Err("duplicate identifiers".into());
    }
    Ok(())
}

/// A parsed XML element for re-serialization.
#[derive(Debug, Clone)]
pub struct XmlNode {
    pub tag: String,
    pub attrs: Vec<(String, String)>,
    pub children: Vec<XmlNode>,
}

pub fn to_tree(xml: &str) -> XmlNode {
    fn build(n: roxmltree::Node<'_, '_>) -> XmlNode {
        XmlNode {
            tag: n.tag_name().name().to_string(),
            attrs: n.attributes().map(|a| (a.name().to_string(), a.value().to_string())).collect(),
            children: n.children().filter(|c| c.is_element()).map(build).collect(),
        }
    }
    build(roxmltree::Document::parse(xml).unwrap().root_element())
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Serializes `node`; `sep` goes between tags, so whitespace can vary.
pub fn write_tree(node: &XmlNode, sep: &str, out: &mut String) {
    out.push('<');
    out.push_str(&node.tag);
    for (k, v) in &node.attrs {
        out.push_str(&format!(" {k}=\"{}\"", escape(v)));
    }
    if node.children.is_empty() {
        out.push_str(" />");
        return;
    }
    out.push('>');
    for c in &node.children {
        out.push_str(sep);
        write_tree(c, sep, out);
    }
    out.push_str(sep);
    out.push_str(&format!("</{}>", node.tag));
}

fn filler_node(rng: &mut impl Rng, bounds: &str) -> XmlNode {
    let class = ["android.widget.TextView", "android.view.View", "android.widget.Space"].choose(rng).unwrap();
    XmlNode {
        tag: "node".into(),
        attrs: vec![
            ("class".into(), class.to_string()),
            ("text".into(), format!("filler {}", rng.random_range(0..1000))),
            ("clickable".into(), "false".into()),
            ("long-clickable".into(), "false".into()),
            ("bounds".into(), bounds.to_string()),
        ],
        children: Vec::new(),
    }
}

fn node_paths(node: &XmlNode, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    out.push(prefix.clone());
    for (i, c) in node.children.iter().enumerate() {
        prefix.push(i);
        node_paths(c, prefix, out);
        prefix.pop();
    }
}

fn node_at<'a>(mut node: &'a mut XmlNode, path: &[usize]) -> &'a mut XmlNode {
    for &i in path {
        node = &mut node.children[i];
    }
    node
}

/// Applies one registry-preserving mutation: attribute reordering,
/// whitespace changes, inserted non-interactive leaves or wrappers, or
/// changes to attributes the parser ignores.
pub fn mutate_hierarchy(xml: &str, rng: &mut impl Rng) -> String {
    let mut tree = to_tree(xml);
    let mut paths = Vec::new();
    node_paths(&tree, &mut Vec::new(), &mut paths);
    let path = paths.choose(rng).unwrap().clone();
    let pick = node_at(&mut tree, &path);
    match rng.random_range(0..5) {
        0 => {
            let n = pick.attrs.len();
            for i in (1..n).rev() {
                pick.attrs.swap(i, rng.random_range(0..=i));
            }
        }
        1 => {
            let bounds = format!("[{},{}][{},{}]", rng.random_range(0..500), rng.random_range(0..500), rng.random_range(500..1080), rng.random_range(500..1920));
            let at = rng.random_range(0..=pick.children.len());
            let filler = filler_node(rng, &bounds);
            pick.children.insert(at, filler);
        }
        2 if !pick.children.is_empty() => {
            let at = rng.random_range(0..pick.children.len());
            let child = pick.children.remove(at);
            let mut wrapper = filler_node(rng, "[0,0][1080,1920]");
            wrapper.attrs[0].1 = "android.widget.FrameLayout".into();
            wrapper.children.push(child);
            pick.children.insert(at, wrapper);
        }
        3 => {
            for (k, v) in &mut pick.attrs {
                if matches!(k.as_str(), "checked" | "selected" | "focused" | "scrollable" | "index" | "package" | "enabled") {
                    *v = if rng.random_bool(0.5) { "true".into() } else { "false".into() };
                }
            }
            if !pick.attrs.iter().any(|(k, _)| k == "drawing-order") {
                pick.attrs.push(("drawing-order".into(), rng.random_range(0..20).to_string()));
            }
        }
        _ => {}
    }
    let mut out = String::from("<?xml version='1.0' encoding='UTF-8' standalone='yes' ?>\n");
    let sep = ["", "\n", "\n  ", " \t"].choose(rng).unwrap();
    write_tree(&tree, sep, &mut out);
    out
}

/// A flat hierarchy with one clickable node per registry element, using the
/// element identifier as resource id.
pub fn render_registry(reg: &ElementRegistry) -> String {
    let mut out = String::from("<hierarchy rotation=\"0\">\n");
    for el in &reg.elements {
        let b = el.bounds;
        out.push_str(&format!(
            "<node resource-id=\"{}\" class=\"{}\" text=\"{}\" clickable=\"{}\" long-clickable=\"{}\" editable=\"{}\" bounds=\"[{},{}][{},{}]\" />\n",
            escape(&el.identifier),
            escape(&el.class_name),
            escape(&el.text_content),
            el.clickable || !(el.long_clickable || el.editable),
            el.long_clickable,
            el.editable,
            b.left,
            b.top,
            b.right,
            b.bottom
        ));
    }
    out.push_str("</hierarchy>\n");
    out
}

/// Registry contents without the source digest.
pub fn shape(reg: &ElementRegistry) -> Vec<(u32, String, Bounds)> {
    reg.elements.iter().map(|e| (e.label, e.identifier.clone(), e.bounds)).collect()
}

// ------------------------------------------------------------ actions

pub fn random_text(rng: &mut impl Rng) -> String {
    const POOL: &[char] = &['a', 'Z', '0', ' ', '"', '\\', '(', ')', ',', ':', 'é', '日', '😀', '\t', '#', 'n'];
    let len = rng.random_range(0..16);
    (0..len).map(|_| *POOL.choose(rng).unwrap()).collect()
}

pub fn random_action(rng: &mut impl Rng) -> Action {
    let element = if rng.random_bool(0.1) { u32::MAX - rng.random_range(0..3) } else { rng.random_range(1..200) };
    let direction = *[Direction::Up, Direction::Down, Direction::Left, Direction::Right].choose(rng).unwrap();
    let dist = *[Distance::Short, Distance::Medium, Distance::Long].choose(rng).unwrap();
    match rng.random_range(0..6) {
        0 => Action::Tap { element },
        1 => Action::LongPress { element },
        2 => Action::Swipe { element, direction, dist },
        3 => Action::Text { text: random_text(rng) },
        4 => Action::Back,
        _ => Action::Exit,
    }
}

/// Expected gesture endpoints computed by walking pixel by pixel from the
/// element's midpoint, stopping at the screen edge.
pub fn brute_force_swipe(bounds: Bounds, screen: (u32, u32), direction: Direction, dist: Distance) -> ((i32, i32), (i32, i32)) {
    let mid = |lo: i32, hi: i32| -> i32 {
        // Largest value m with (m - lo) <= (hi - m), found by scanning.
        let mut m = lo;
        while m < hi && (m + 1 - lo) <= (hi - (m + 1)) {
            m += 1;
        }
        m
    };
    let start = (mid(bounds.left, bounds.right), mid(bounds.top, bounds.bottom));
    let fraction = match dist {
        Distance::Short => 0.10,
        Distance::Medium => 0.25,
        Distance::Long => 0.50,
    };
    let (w, h) = (screen.0 as i32, screen.1 as i32);
    let axis = if matches!(direction, Direction::Up | Direction::Down) { h } else { w };
    // Whole pixels covered by the fraction of the axis length.
    let mut pixels = 0;
    while f64::from(pixels + 1) <= f64::from(axis) * fraction + 1e-9 {
        pixels += 1;
    }
    let (dx, dy) = match direction {
        Direction::Up => (0, -1),
        Direction::Down => (0, 1),
        Direction::Left => (-1, 0),
        Direction::Right => (1, 0),
    };
    let mut end = start;
    for _ in 0..pixels {
        let next = (end.0 + dx, end.1 + dy);
        if next.0 < 0 || next.1 < 0 || next.0 >= w || next.1 >= h {
            break;
        }
        end = next;
    }
    (start, end)
}

// ------------------------------------------------------------ metrics

/// Per-task numbers recomputed outside the harness.
#[derive(Debug, Clone, PartialEq)]
pub struct RecomputedTask {
    pub task_id: String,
    pub success: bool,
    pub reward: u32,
    pub steps: u32,
}

/// Replays a trajectory's actions through the simulator from the start page
/// and scores the final state with a separately written predicate check.
pub fn recompute_task(task: &tapwise::bench::TaskSpec, spec: &tapwise::sim::SimAppSpec, trajectory: &tapwise::operator::Trajectory) -> RecomputedTask {
    let mut state = tapwise::sim::SimState::initial(spec);
    for step in &trajectory.steps {
        state = tapwise::sim::sim_step(&state, spec, &step.action);
    }
    let steps = trajectory.steps.len() as u32;
    let errored = trajectory.termination == tapwise::operator::Termination::Error;
    let success = !errored && steps <= task.max_steps && predicate_oracle(&task.success, spec, &state);
    let reward = *task.reward_map.get(&state.current_page).unwrap_or(&0);
    RecomputedTask { task_id: task.task_id.clone(), success, reward, steps }
}

fn predicate_oracle(p: &tapwise::bench::Predicate, spec: &tapwise::sim::SimAppSpec, state: &tapwise::sim::SimState) -> bool {
    use tapwise::bench::Predicate;
    match p {
        Predicate::PageIs(page) => &state.current_page == page,
        Predicate::BufferContains { element, text } => {
            state.typed_buffers.get(element).map(|b| b.find(text.as_str()).is_some()).unwrap_or(false)
        }
        Predicate::ElementTextEquals { element, text } => {
            // The field shows its typed buffer when the page sinks text into
            // it, otherwise the static attribute from the page hierarchy.
            let page = spec.page(&state.current_page);
            if page.text_sink.as_deref() == Some(element.as_str()) {
                if let Some(typed) = state.typed_buffers.get(element) {
                    return typed == text;
                }
            }
            let needle = format!("resource-id=\"{element}\"");
            page.hierarchy_xml.lines().find(|l| l.contains(&needle)).is_some_and(|line| {
                let start = line.find(" text=\"").map(|i| i + 7);
                start.and_then(|s| line[s..].find('"').map(|e| &line[s..s + e])) == Some(text.as_str())
            })
        }
        Predicate::All(parts) => parts.iter().all(|q| predicate_oracle(q, spec, state)),
    }
}

/// Aggregates as exact rationals: (successes, tasks), (reward sum, tasks),
/// (success step sum, successes).
pub fn aggregate(tasks: &[RecomputedTask]) -> ((u64, u64), (u64, u64), (u64, u64)) {
    let n = tasks.len() as u64;
    let ok: Vec<&RecomputedTask> = tasks.iter().filter(|t| t.success).collect();
    let reward: u64 = tasks.iter().map(|t| u64::from(t.reward)).sum();
    let steps: u64 = ok.iter().map(|t| u64::from(t.steps)).sum();
    ((ok.len() as u64, n), (reward, n), (steps, ok.len() as u64))
}

pub fn by_id<T: Clone>(items: &[T], key: impl Fn(&T) -> String) -> BTreeMap<String, T> {
    items.iter().map(|i| (key(i), i.clone())).collect()
}

// ------------------------------------------------------------ files

/// Every file under `root`, keyed by relative path.
pub fn dir_snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}
