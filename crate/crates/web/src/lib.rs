//! Browser bindings for a simulated phone. The page renders the annotated
//! screen, maps clicks to element labels and applies action calls typed by
//! the user. Results cross the boundary as JSON strings.

use std::sync::Arc;

use serde::Serialize;
use serde_json::json;
use tapwise::action::{parse_action, validate_action, Action};
use tapwise::corpus::{app_spec, APP_IDS};
use tapwise::device::{lower_action, GestureCommand};
use tapwise::session::Hotspot;
use tapwise::sim::{page_registry, render_page, sim_step, SimAppSpec, SimState};
use tapwise::ui_model::{annotate_screenshot, ElementRegistry};
use wasm_bindgen::prelude::*;

/// Ids of the bundled apps, as a JSON array.
#[wasm_bindgen]
pub fn apps() -> String {
    serde_json::to_string(&APP_IDS).expect("ids serialize")
}

/// Parses an action call. Returns `{"ok":true,"action":..,"kind":..}` or
/// `{"ok":false,"error":..,"message":..,"start":..,"end":..}` with the byte
/// span of the problem.
#[wasm_bindgen]
pub fn check_action(source: &str) -> String {
    match parse_action(source) {
        Ok(action) => json!({"ok": true, "action": action.to_string(), "kind": action.kind()}),
        Err(d) => json!({"ok": false, "error": d.kind, "message": d.message, "start": d.span.start, "end": d.span.end}),
    }
    .to_string()
}

/// The label of the element under `(x, y)`. Where elements overlap the
/// smallest one wins; equal areas go to the lower label.
pub fn hotspot_at(registry: &ElementRegistry, x: i32, y: i32) -> Option<u32> {
    registry.elements.iter().filter(|e| e.bounds.contains(x, y)).min_by_key(|e| (e.bounds.area(), e.label)).map(|e| e.label)
}

#[derive(Serialize)]
struct Applied<'a> {
    action: String,
    gesture: Option<GestureCommand>,
    page: &'a str,
}

/// One simulated app with its current screen.
#[wasm_bindgen]
pub struct Phone {
    spec: Arc<SimAppSpec>,
    state: SimState,
    registry: ElementRegistry,
    frame: Vec<u8>,
}

#[wasm_bindgen]
impl Phone {
    #[wasm_bindgen(constructor)]
    pub fn new(app_id: &str) -> Result<Phone, String> {
        let spec = app_spec(app_id).map_err(|e| e.to_string())?;
        let state = SimState::initial(&spec);
        let mut phone = Phone { registry: ElementRegistry::empty(spec.screen_size), spec, state, frame: Vec::new() };
        phone.refresh()?;
        Ok(phone)
    }

    pub fn width(&self) -> u32 {
        self.spec.screen_size.0
    }

    pub fn height(&self) -> u32 {
        self.spec.screen_size.1
    }

    pub fn page(&self) -> String {
        self.state.current_page.clone()
    }

    /// RGBA pixels of the annotated screen, row by row.
    pub fn pixels(&self) -> Vec<u8> {
        self.frame.clone()
    }

    /// Labeled elements of the current screen as a JSON array.
    pub fn hotspots(&self) -> String {
        let spots: Vec<Hotspot> = self
            .registry
            .elements
            .iter()
            .map(|e| Hotspot { label: e.label, identifier: e.identifier.clone(), bounds: e.bounds, editable: e.editable })
            .collect();
        serde_json::to_string(&spots).expect("hotspots serialize")
    }

    pub fn label_at(&self, x: i32, y: i32) -> Option<u32> {
        hotspot_at(&self.registry, x, y)
    }

    /// Parses, validates and performs `source` on the current screen.
    /// Returns the action, the gesture it lowers to and the new page.
    pub fn apply(&mut self, source: &str) -> Result<String, String> {
        let action = parse_action(source).map_err(|d| d.message)?;
        if action == Action::Exit {
            return Err("exit ends a task; there is nothing to perform".into());
        }
        validate_action(&action, &self.registry).map_err(|e| e.to_string())?;
        let gesture = lower_action(&action, &self.registry).map_err(|e| e.to_string())?;
        self.state = sim_step(&self.state, &self.spec, &action);
        self.refresh()?;
        let applied = Applied { action: action.to_string(), gesture, page: &self.state.current_page };
        Ok(serde_json::to_string(&applied).expect("result serializes"))
    }

    pub fn reset(&mut self) -> Result<(), String> {
        self.state = SimState::initial(&self.spec);
        self.refresh()
    }

    fn refresh(&mut self) -> Result<(), String> {
        self.registry = page_registry(&self.spec, &self.state);
        let shot = render_page(&self.spec, &self.state);
        self.frame = annotate_screenshot(&shot, &self.registry).map_err(|e| e.to_string())?.into_raw();
        Ok(())
    }
}
