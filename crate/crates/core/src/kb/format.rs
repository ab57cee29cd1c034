//! The `.doc` file format.
//!
//! ```text
//! app_id: mail
//! element_id: com.mail:id/send
//! version: 2
//! source: autonomous
//! action_kinds: tap,long_press
//! updated_at: 2026-01-01T00:00:00Z
//! ---
//! <body, verbatim to end of file>
//! ```
//!
//! Header values escape `\` as `\\`, newline as `\n` and carriage return as
//! `\r`, so every header occupies exactly one line.

use std::collections::BTreeSet;

use chrono::{DateTime, SecondsFormat, Utc};

use super::{DocSource, ElementDocument};
use crate::action::ActionKind;

const KEYS: [&str; 6] = ["app_id", "element_id", "version", "source", "action_kinds", "updated_at"];
const SEPARATOR: &str = "---";

fn escape(value: &str) -> String {
    let mut out = String::with_capacity(value.len());
    for c in value.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(value: &str) -> Result<String, String> {
    let mut out = String::with_capacity(value.len());
    let mut chars = value.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            other => return Err(format!("bad escape \\{}", other.map(String::from).unwrap_or_default())),
        }
    }
    Ok(out)
}

pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

pub fn encode(doc: &ElementDocument) -> String {
    let kinds: Vec<&str> = doc.action_kinds_observed.iter().map(|k| k.as_str()).collect();
    let values = [
        escape(&doc.app_id),
        escape(&doc.element_id),
        doc.version.to_string(),
        doc.source.as_str().to_string(),
        kinds.join(","),
        format_timestamp(&doc.updated_at),
    ];
    let mut out = String::new();
    for (key, value) in KEYS.iter().zip(values) {
        out.push_str(key);
        out.push_str(": ");
        out.push_str(&value);
        out.push('\n');
    }
    out.push_str(SEPARATOR);
    out.push('\n');
    out.push_str(&doc.body);
    out
}

pub fn decode(text: &str) -> Result<ElementDocument, String> {
    let mut rest = text;
    let mut values: Vec<&str> = Vec::with_capacity(KEYS.len());
    for key in KEYS {
        let (line, tail) = rest.split_once('\n').ok_or_else(|| format!("truncated header before `{key}`"))?;
        let value = line
            .strip_prefix(key)
            .and_then(|l| l.strip_prefix(": "))
            .ok_or_else(|| format!("expected header `{key}`, found `{line}`"))?;
        values.push(value);
        rest = tail;
    }
    let (sep, body) = rest.split_once('\n').ok_or("missing header separator")?;
    if sep != SEPARATOR {
        return Err(format!("expected `{SEPARATOR}`, found `{sep}`"));
    }
    let version: u32 = values[2].parse().map_err(|_| format!("bad version `{}`", values[2]))?;
    if version == 0 {
        return Err("version must be at least 1".into());
    }
    let source = DocSource::parse(values[3]).ok_or_else(|| format!("bad source `{}`", values[3]))?;
    let mut kinds = BTreeSet::new();
    for k in values[4].split(',').filter(|k| !k.is_empty()) {
        kinds.insert(ActionKind::parse(k).ok_or_else(|| format!("bad action kind `{k}`"))?);
    }
    let updated_at = DateTime::parse_from_rfc3339(values[5])
        .map_err(|e| format!("bad updated_at: {e}"))?
        .with_timezone(&Utc);
    if body.is_empty() {
        return Err("empty body".into());
    }
    Ok(ElementDocument {
        app_id: unescape(values[0])?,
        element_id: unescape(values[1])?,
        body: body.to_string(),
        action_kinds_observed: kinds,
        version,
        source,
        updated_at,
    })
}

/// Filename stem for an element identifier: ASCII alphanumerics kept,
/// everything else `_`, capped in length. Collisions are resolved by the
/// store with a `-n` suffix, which sanitizing can never produce.
pub fn sanitize(element_id: &str) -> String {
    let mut s: String = element_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .take(120)
        .collect();
    if s.is_empty() {
        s.push('_');
    }
    s
}
