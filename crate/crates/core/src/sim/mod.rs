//! A deterministic simulated phone.
//!
//! An app is a graph of pages. Each page carries a hierarchy dump in the
//! same dialect a real device produces, and transitions keyed by
//! `(element identifier, action kind[, direction])`. Screenshots are drawn
//! procedurally from the hierarchy unless a fixture image is supplied.

mod render;
mod spec;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use image::RgbaImage;
use serde::{Deserialize, Serialize};

use crate::action::{Action, ActionKind};
use crate::device::{lower_action, Backend, Device, DeviceError, DeviceHandle, GestureCommand};
use crate::ui_model::{parse_hierarchy, ElementRegistry};

pub use render::{reflect_text, render_page};
pub use spec::{load_app_spec, load_app_spec_str, PageSpec, ScreenshotSource, SimAppSpec, SimError, Transition};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SimState {
    pub current_page: String,
    pub page_stack: Vec<String>,
    pub typed_buffers: BTreeMap<String, String>,
}

impl SimState {
    pub fn initial(spec: &SimAppSpec) -> Self {
        Self {
            current_page: spec.start_page.clone(),
            page_stack: vec![spec.start_page.clone()],
            typed_buffers: BTreeMap::new(),
        }
    }
}

/// The hierarchy of the current page with typed text reflected into the
/// `text` attribute of its sink element.
pub fn page_xml(spec: &SimAppSpec, state: &SimState) -> String {
    let page = spec.page(&state.current_page);
    match &page.text_sink {
        Some(sink) => match state.typed_buffers.get(sink) {
            Some(typed) => reflect_text(&page.hierarchy_xml, sink, typed).unwrap_or_else(|| page.hierarchy_xml.clone()),
            None => page.hierarchy_xml.clone(),
        },
        None => page.hierarchy_xml.clone(),
    }
}

pub fn page_registry(spec: &SimAppSpec, state: &SimState) -> ElementRegistry {
    // Every page hierarchy was parsed successfully at load time and text
    // reflection only rewrites an attribute value.
    parse_hierarchy(&page_xml(spec, state), spec.screen_size).expect("validated page hierarchy")
}

/// Advances the simulation by one action. Undefined interactions leave the
/// state unchanged.
pub fn sim_step(state: &SimState, spec: &SimAppSpec, action: &Action) -> SimState {
    let mut next = state.clone();
    let page = spec.page(&state.current_page);
    match action {
        Action::Tap { element } | Action::LongPress { element } | Action::Swipe { element, .. } => {
            let registry = page_registry(spec, state);
            let Some(el) = registry.by_label(*element) else {
                return next;
            };
            let direction = match action {
                Action::Swipe { direction, .. } => Some(*direction),
                _ => None,
            };
            if let Some(t) = page.find_transition(&el.identifier, action.kind(), direction) {
                next.current_page = t.target.clone();
                next.page_stack.push(t.target.clone());
            }
        }
        Action::Back => {
            if next.page_stack.len() > 1 {
                next.page_stack.pop();
                next.current_page = next.page_stack.last().cloned().expect("non-empty stack");
            }
        }
        Action::Text { text } => {
            if let Some(sink) = &page.text_sink {
                next.typed_buffers.entry(sink.clone()).or_default().push_str(text);
            }
        }
        Action::Exit => {}
    }
    next
}

/// Whether `kind` can ever trigger a page transition.
pub fn is_navigational(kind: ActionKind) -> bool {
    matches!(kind, ActionKind::Tap | ActionKind::LongPress | ActionKind::Swipe)
}

static NEXT_SIM_ID: AtomicU64 = AtomicU64::new(1);

/// A simulated device running one app.
pub struct SimDevice {
    spec: Arc<SimAppSpec>,
    state: SimState,
    handle: DeviceHandle,
    gestures: Vec<GestureCommand>,
    connected: bool,
}

impl SimDevice {
    pub fn new(spec: Arc<SimAppSpec>) -> Self {
        let n = NEXT_SIM_ID.fetch_add(1, Ordering::Relaxed);
        let handle = DeviceHandle {
            serial: format!("sim:{}:{n}", spec.app_id),
            screen_size: spec.screen_size,
            backend: Backend::Simulated,
        };
        Self { state: SimState::initial(&spec), spec, handle, gestures: Vec::new(), connected: true }
    }

    pub fn spec(&self) -> &SimAppSpec {
        &self.spec
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn set_state(&mut self, state: SimState) {
        self.state = state;
    }

    pub fn reset(&mut self) {
        self.state = SimState::initial(&self.spec);
    }

    /// Every gesture the device has received, in order.
    pub fn gestures(&self) -> &[GestureCommand] {
        &self.gestures
    }

    pub fn disconnect(&mut self) {
        self.connected = false;
    }

    fn ensure_connected(&self) -> Result<(), DeviceError> {
        if self.connected {
            Ok(())
        } else {
            Err(DeviceError::DeviceGone(self.handle.serial.clone()))
        }
    }
}

impl Device for SimDevice {
    fn handle(&self) -> &DeviceHandle {
        &self.handle
    }

    fn capture_screenshot(&mut self) -> Result<RgbaImage, DeviceError> {
        self.ensure_connected()?;
        Ok(render_page(&self.spec, &self.state))
    }

    fn dump_hierarchy(&mut self) -> Result<String, DeviceError> {
        self.ensure_connected()?;
        Ok(page_xml(&self.spec, &self.state))
    }

    fn execute(&mut self, action: &Action, registry: &ElementRegistry) -> Result<(), DeviceError> {
        self.ensure_connected()?;
        let Some(gesture) = lower_action(action, registry)? else {
            return Ok(());
        };
        self.gestures.push(gesture);
        self.state = sim_step(&self.state, &self.spec, action);
        Ok(())
    }

    fn page_ref(&self) -> Option<String> {
        Some(self.state.current_page.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::{Direction, Distance};

    const TWO_PAGES: &str = r##"
schema_version = 1
app_id = "mini"
start_page = "home"
screen_size = [360, 640]

[[pages]]
page_id = "home"
title = "Home"
hierarchy_xml = """
<hierarchy rotation="0">
  <node class="android.widget.FrameLayout" bounds="[0,0][360,640]">
    <node clickable="true" resource-id="mini:id/send" class="android.widget.Button" text="Send" bounds="[20,100][340,160]" />
    <node clickable="true" resource-id="mini:id/logo" class="android.widget.ImageView" bounds="[20,200][340,260]" />
    <node clickable="true" resource-id="mini:id/list" class="android.widget.ListView" bounds="[20,300][340,600]" />
  </node>
</hierarchy>
"""

[[pages.transitions]]
element = "mini:id/send"
action = "tap"
target = "compose"

[[pages.transitions]]
element = "mini:id/list"
action = "swipe"
direction = "up"
target = "compose"

[[pages]]
page_id = "compose"
title = "Compose"
text_sink = "mini:id/body"
hierarchy_xml = """
<hierarchy rotation="0">
  <node class="android.widget.EditText" resource-id="mini:id/body" text="" bounds="[20,100][340,300]" />
</hierarchy>
"""
"##;

    fn spec() -> SimAppSpec {
        load_app_spec_str(TWO_PAGES, None).unwrap()
    }

    #[test]
    fn defined_transition_pushes() {
        let spec = spec();
        let s0 = SimState::initial(&spec);
        let s1 = sim_step(&s0, &spec, &Action::Tap { element: 1 });
        assert_eq!(s1.current_page, "compose");
        assert_eq!(s1.page_stack, ["home", "compose"]);
    }

    #[test]
    fn back_pops_and_is_noop_at_root() {
        let spec = spec();
        let s0 = SimState::initial(&spec);
        let s1 = sim_step(&s0, &spec, &Action::Tap { element: 1 });
        let s2 = sim_step(&s1, &spec, &Action::Back);
        assert_eq!(s2.current_page, "home");
        assert_eq!(s2.page_stack, ["home"]);
        assert_eq!(sim_step(&s2, &spec, &Action::Back), s2);
    }

    #[test]
    fn undefined_interaction_is_noop() {
        let spec = spec();
        let s0 = SimState::initial(&spec);
        assert_eq!(sim_step(&s0, &spec, &Action::Tap { element: 2 }), s0);
        assert_eq!(sim_step(&s0, &spec, &Action::LongPress { element: 1 }), s0);
        assert_eq!(sim_step(&s0, &spec, &Action::Tap { element: 9 }), s0);
        assert_eq!(sim_step(&s0, &spec, &Action::Exit), s0);
    }

    #[test]
    fn swipe_transition_respects_direction() {
        let spec = spec();
        let s0 = SimState::initial(&spec);
        let up = Action::Swipe { element: 3, direction: Direction::Up, dist: Distance::Short };
        let down = Action::Swipe { element: 3, direction: Direction::Down, dist: Distance::Short };
        assert_eq!(sim_step(&s0, &spec, &up).current_page, "compose");
        assert_eq!(sim_step(&s0, &spec, &down), s0);
    }

    #[test]
    fn typed_text_is_reflected_into_hierarchy() {
        let spec = spec();
        let mut s = sim_step(&SimState::initial(&spec), &spec, &Action::Tap { element: 1 });
        s = sim_step(&s, &spec, &Action::Text { text: "Hi <Bob> & co".into() });
        s = sim_step(&s, &spec, &Action::Text { text: "!".into() });
        assert_eq!(s.typed_buffers["mini:id/body"], "Hi <Bob> & co!");
        let reg = page_registry(&spec, &s);
        assert_eq!(reg.elements[0].text_content, "Hi <Bob> & co!");
        assert_eq!(reg.elements[0].identifier, "mini:id/body");
    }

    #[test]
    fn device_records_gestures_and_disconnects() {
        let spec = Arc::new(spec());
        let mut dev = SimDevice::new(spec.clone());
        let reg = parse_hierarchy(&dev.dump_hierarchy().unwrap(), spec.screen_size).unwrap();
        dev.execute(&Action::Tap { element: 1 }, &reg).unwrap();
        assert_eq!(dev.state().current_page, "compose");
        assert_eq!(dev.gestures().len(), 1);
        assert_eq!(dev.gestures()[0].start, (180, 130));
        dev.execute(&Action::Exit, &reg).unwrap();
        assert_eq!(dev.gestures().len(), 1);
        let shot = dev.capture_screenshot().unwrap();
        assert_eq!(shot.dimensions(), (360, 640));
        dev.disconnect();
        assert!(matches!(dev.capture_screenshot(), Err(DeviceError::DeviceGone(_))));
        assert!(matches!(dev.dump_hierarchy(), Err(DeviceError::DeviceGone(_))));
    }

    #[test]
    fn distinct_devices_get_distinct_serials() {
        let spec = Arc::new(spec());
        assert_ne!(SimDevice::new(spec.clone()).handle().serial, SimDevice::new(spec).handle().serial);
    }
}
