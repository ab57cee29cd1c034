//! Model-free exploration baselines for coverage comparison. They act on
//! registry structure alone: every element is tapped, long-pressed when it
//! accepts long presses, and swiped in each direction.

use std::collections::{BTreeSet, VecDeque};

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::action::{Action, Direction, Distance};
use crate::sim::{page_registry, sim_step, SimAppSpec, SimState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselinePolicy {
    Dfs,
    Bfs,
    Random { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub policy: BaselinePolicy,
    /// Actions executed, Back and path replays included.
    pub steps: u32,
    pub pages_visited: BTreeSet<String>,
    /// (page id, element id) pairs acted on.
    pub elements_touched: BTreeSet<(String, String)>,
}

/// Actions the baselines try on the current page, in registry order.
pub fn candidate_actions(spec: &SimAppSpec, state: &SimState) -> Vec<Action> {
    let registry = page_registry(spec, state);
    let mut out = Vec::new();
    for el in &registry.elements {
        let element = el.label;
        out.push(Action::Tap { element });
        if el.long_clickable {
            out.push(Action::LongPress { element });
        }
        for direction in [Direction::Up, Direction::Down, Direction::Left, Direction::Right] {
            out.push(Action::Swipe { element, direction, dist: Distance::Medium });
        }
    }
    out
}

struct Walker<'a> {
    spec: &'a SimAppSpec,
    state: SimState,
    cap: u32,
    report: CoverageReport,
}

impl<'a> Walker<'a> {
    fn new(spec: &'a SimAppSpec, policy: BaselinePolicy, cap: u32) -> Self {
        let state = SimState::initial(spec);
        let report = CoverageReport {
            policy,
            steps: 0,
            pages_visited: BTreeSet::from([state.current_page.clone()]),
            elements_touched: BTreeSet::new(),
        };
        Self { spec, state, cap, report }
    }

    fn exhausted(&self) -> bool {
        self.report.steps >= self.cap
    }

    /// Executes one action unless the cap is reached.
    fn act(&mut self, action: &Action) -> bool {
        if self.exhausted() {
            return false;
        }
        if let Some(label) = action.element() {
            if let Some(el) = page_registry(self.spec, &self.state).by_label(label) {
                self.report.elements_touched.insert((self.state.current_page.clone(), el.identifier.clone()));
            }
        }
        self.state = sim_step(&self.state, self.spec, action);
        self.report.pages_visited.insert(self.state.current_page.clone());
        self.report.steps += 1;
        true
    }

    fn restart(&mut self) {
        self.state = SimState::initial(self.spec);
    }
}

/// Explores `spec` with `policy` for at most `cap` actions.
pub fn baseline_explore(policy: BaselinePolicy, spec: &SimAppSpec, cap: u32) -> CoverageReport {
    let mut w = Walker::new(spec, policy, cap);
    match policy {
        BaselinePolicy::Dfs => dfs(&mut w),
        BaselinePolicy::Bfs => bfs(&mut w),
        BaselinePolicy::Random { seed } => random(&mut w, seed),
    }
    w.report
}

/// Depth-first: descend into each newly reached page, Back out when its
/// actions are used up.
fn dfs(w: &mut Walker<'_>) {
    let mut seen: BTreeSet<String> = BTreeSet::from([w.state.current_page.clone()]);
    // Per open page: the actions still to try.
    let mut stack: Vec<VecDeque<Action>> = vec![candidate_actions(w.spec, &w.state).into()];
    while let Some(todo) = stack.last_mut() {
        let Some(action) = todo.pop_front() else {
            stack.pop();
            if stack.is_empty() || !w.act(&Action::Back) {
                return;
            }
            continue;
        };
        let before = w.state.current_page.clone();
        if !w.act(&action) {
            return;
        }
        let page = w.state.current_page.clone();
        if page == before {
            continue;
        }
        if seen.insert(page) {
            stack.push(candidate_actions(w.spec, &w.state).into());
        } else if !w.act(&Action::Back) {
            return;
        }
    }
}

/// Breadth-first over pages. Reaching a queued page means restarting the
/// app and replaying its path; replayed actions count as steps.
fn bfs(w: &mut Walker<'_>) {
    let mut seen: BTreeSet<String> = BTreeSet::from([w.state.current_page.clone()]);
    let mut queue: VecDeque<Vec<Action>> = VecDeque::from([Vec::new()]);
    while let Some(path) = queue.pop_front() {
        w.restart();
        for a in &path {
            if !w.act(a) {
                return;
            }
        }
        let actions = candidate_actions(w.spec, &w.state);
        let at = w.state.clone();
        for action in actions {
            if !w.act(&action) {
                return;
            }
            if w.state.current_page != at.current_page {
                if seen.insert(w.state.current_page.clone()) {
                    let mut next = path.clone();
                    next.push(action.clone());
                    queue.push_back(next);
                }
                if !w.act(&Action::Back) {
                    return;
                }
            }
        }
    }
}

/// Uniform choice among the page's actions and Back, from a seeded stream.
fn random(w: &mut Walker<'_>, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while !w.exhausted() {
        let mut actions = candidate_actions(w.spec, &w.state);
        actions.push(Action::Back);
        let action = actions.choose(&mut rng).expect("Back is always available").clone();
        w.act(&action);
    }
}
