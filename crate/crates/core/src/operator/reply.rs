//! The four-section reply template and the carried memory.

use thiserror::Error;

pub const SECTIONS: [&str; 4] = ["Observation", "Thought", "Action", "Summary"];

/// Default cap on the memory block, in characters.
pub const MEMORY_CAP: usize = 8000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepReply {
    pub observation: String,
    pub thought: String,
    /// Text of the `Action:` section, for the action parser.
    pub action_source: String,
    pub summary: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReplyError {
    #[error("reply has no {0} section")]
    MissingSection(&'static str),
}

/// If `line` opens a section, returns the section index and the text after
/// the colon. Leading whitespace and markdown emphasis are tolerated and the
/// header is case-insensitive.
fn section_header(line: &str) -> Option<(usize, &str)> {
    let trimmed = line.trim_start().trim_start_matches(['*', '#', '-', ' ']);
    SECTIONS.iter().enumerate().find_map(|(i, name)| {
        let head = trimmed.get(..name.len())?;
        if !head.eq_ignore_ascii_case(name) {
            return None;
        }
        let rest = trimmed[name.len()..].trim_start_matches('*');
        rest.strip_prefix(':').map(|r| (i, r.trim_start_matches('*')))
    })
}

/// Splits a reply into its sections by scanning for header lines. Order is
/// free; the first occurrence of a header wins and a section runs until
/// the next header line.
pub fn parse_step_reply(text: &str) -> Result<StepReply, ReplyError> {
    let mut found: [Option<String>; 4] = Default::default();
    let mut current: Option<usize> = None;
    for line in text.lines() {
        if let Some((i, rest)) = section_header(line) {
            if found[i].is_none() {
                found[i] = Some(rest.to_string());
                current = Some(i);
            } else {
                current = None;
            }
            continue;
        }
        if let Some(i) = current {
            let body = found[i].as_mut().expect("open section");
            body.push('\n');
            body.push_str(line);
        }
    }
    let mut take = |i: usize| -> Result<String, ReplyError> {
        let body = found[i].take().map(|s| s.trim().to_string()).unwrap_or_default();
        if body.is_empty() {
            Err(ReplyError::MissingSection(SECTIONS[i]))
        } else {
            Ok(body)
        }
    };
    Ok(StepReply { observation: take(0)?, thought: take(1)?, action_source: take(2)?, summary: take(3)? })
}

/// Marker line replacing summaries elided by the memory cap.
pub fn elision_marker(omitted: usize) -> String {
    format!("({omitted} earlier steps omitted)")
}

/// `Step i: <summary>` lines for the given summaries (numbered from 1).
/// When the block would exceed `cap` characters, the oldest lines are
/// replaced by a marker line until it fits; the newest line is always kept.
pub fn build_memory(summaries: &[String], cap: usize) -> String {
    let lines: Vec<String> = summaries
        .iter()
        .enumerate()
        .map(|(i, s)| format!("Step {}: {}", i + 1, s.replace('\n', " ")))
        .collect();
    let full_len = |from: usize| -> usize {
        let kept: usize = lines[from..].iter().map(|l| l.chars().count()).sum::<usize>() + lines.len() - from - 1;
        if from == 0 {
            kept
        } else {
            kept + elision_marker(from).chars().count() + 1
        }
    };
    if lines.is_empty() {
        return String::new();
    }
    let mut from = 0;
    while from + 1 < lines.len() && full_len(from) > cap {
        from += 1;
    }
    let mut out = Vec::with_capacity(lines.len() - from + 1);
    if from > 0 {
        out.push(elision_marker(from));
    }
    out.extend_from_slice(&lines[from..]);
    out.join("\n")
}
