//! Fixed prompt templates.
//!
//! The templates live as text files next to the crate and are compiled in.
//! Placeholders are `{name}`; values are inserted verbatim and never
//! rescanned, so user text containing braces is safe.

use crate::action::{render_action_reference, Action};
use crate::kb::ElementDocument;

/// Bumped whenever any template changes wording.
pub const PROMPT_VERSION: u32 = 1;

pub const EXPLORE_STEP: &str = include_str!("../prompts/explore_step.txt");
pub const DEPLOY_STEP: &str = include_str!("../prompts/deploy_step.txt");
pub const RELEVANCE: &str = include_str!("../prompts/relevance.txt");
pub const DOCUMENT: &str = include_str!("../prompts/document.txt");
pub const MERGE: &str = include_str!("../prompts/merge.txt");
pub const CORRECTION: &str = include_str!("../prompts/correction.txt");

/// Rendered into the docs section for an element with no document.
pub const NO_DOCUMENTATION: &str = "no documentation";
/// Rendered into the memory section before the first step.
pub const NO_PREVIOUS_STEPS: &str = "none";

/// Substitutes every `{name}` in `template`.
///
/// Panics if the template names a placeholder missing from `values`; the
/// templates are fixed, so that is a programming error.
pub fn fill(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + values.iter().map(|(_, v)| v.len()).sum::<usize>());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after.find('}').unwrap_or_else(|| panic!("unterminated placeholder in template"));
        let name = &after[..close];
        let value = values
            .iter()
            .find(|(k, _)| *k == name)
            .map(|(_, v)| *v)
            .unwrap_or_else(|| panic!("template placeholder {{{name}}} has no value"));
        out.push_str(value);
        rest = &after[close + 1..];
    }
    out.push_str(rest);
    out
}

fn memory_or_none(memory: &str) -> &str {
    if memory.is_empty() {
        NO_PREVIOUS_STEPS
    } else {
        memory
    }
}

pub fn explore_step(task: &str, memory: &str) -> String {
    let reference = render_action_reference();
    fill(EXPLORE_STEP, &[("task", task), ("action_reference", &reference), ("memory", memory_or_none(memory))])
}

pub fn deploy_step(task: &str, docs: &str, memory: &str) -> String {
    let reference = render_action_reference();
    fill(
        DEPLOY_STEP,
        &[("task", task), ("docs", docs), ("action_reference", &reference), ("memory", memory_or_none(memory))],
    )
}

pub fn relevance(element: &str, action: &Action, task: &str) -> String {
    fill(RELEVANCE, &[("element", element), ("action", &action.to_string()), ("task", task)])
}

pub fn document(element: &str, label: u32, action: &Action) -> String {
    fill(DOCUMENT, &[("element", element), ("label", &label.to_string()), ("action", &action.to_string())])
}

pub fn merge(element: &str, past: &str, observation: &str) -> String {
    fill(MERGE, &[("element", element), ("past", past), ("observation", observation)])
}

pub fn correction(problem: &str) -> String {
    fill(CORRECTION, &[("problem", problem)])
}

/// One line per labeled element: `Element k: <body>` or the absent marker.
pub fn render_docs(slots: &[(u32, Option<ElementDocument>)]) -> String {
    if slots.is_empty() {
        return "(no labeled elements)".to_string();
    }
    let mut out = String::new();
    for (label, doc) in slots {
        let body = match doc {
            Some(d) => d.body.replace('\n', " "),
            None => NO_DOCUMENTATION.to_string(),
        };
        out.push_str(&format!("Element {label}: {body}\n"));
    }
    out.pop();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fill_is_not_recursive() {
        assert_eq!(fill("a {x} b", &[("x", "{x}")]), "a {x} b");
    }

    #[test]
    #[should_panic(expected = "has no value")]
    fn missing_value_panics() {
        fill("{nope}", &[]);
    }

    #[test]
    fn every_template_renders() {
        let a = Action::Tap { element: 2 };
        for p in [
            explore_step("t", ""),
            deploy_step("t", "d", "m"),
            relevance("e", &a, "t"),
            document("e", 2, &a),
            merge("e", "p", "o"),
            correction("x"),
        ] {
            assert!(!p.contains('{'), "{p}");
        }
        assert!(relevance("com.mail:id/send", &a, "t").starts_with("Relevance check for element: com.mail:id/send\n"));
        assert!(document("e", 2, &a).contains("tap(2)"));
        assert!(explore_step("t", "").contains("Previous steps:\nnone\n"));
    }

    #[test]
    fn docs_rendering_marks_absent_slots() {
        assert_eq!(render_docs(&[(1, None), (2, None)]), "Element 1: no documentation\nElement 2: no documentation");
    }
}
