//! The six-function action space and the text grammar the model uses to
//! invoke it.
//!
//! A call has the shape `name(args)` with `name` one of `tap`, `long_press`,
//! `swipe`, `text`, `back`, `exit` (any case). Element arguments are integer
//! literals, everything else is a double-quoted string. Prose around the call
//! is skipped and the first well-formed call in the text is used.

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ui_model::ElementRegistry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Self::Up, Self::Down, Self::Left, Self::Right];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Up => "up",
            Self::Down => "down",
            Self::Left => "left",
            Self::Right => "right",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.as_str().eq_ignore_ascii_case(s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distance {
    Short,
    Medium,
    Long,
}

impl Distance {
    pub const ALL: [Distance; 3] = [Self::Short, Self::Medium, Self::Long];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Short => "short",
            Self::Medium => "medium",
            Self::Long => "long",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.as_str().eq_ignore_ascii_case(s))
    }
}

/// What an action does, without its arguments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Tap,
    LongPress,
    Swipe,
    Text,
    Back,
    Exit,
}

impl ActionKind {
    pub const ALL: [ActionKind; 6] = [Self::Tap, Self::LongPress, Self::Swipe, Self::Text, Self::Back, Self::Exit];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Tap => "tap",
            Self::LongPress => "long_press",
            Self::Swipe => "swipe",
            Self::Text => "text",
            Self::Back => "back",
            Self::Exit => "exit",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str().eq_ignore_ascii_case(s))
    }

    fn arity(self) -> usize {
        match self {
            Self::Tap | Self::LongPress | Self::Text => 1,
            Self::Swipe => 3,
            Self::Back | Self::Exit => 0,
        }
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One agent action. Elements are referenced by their on-screen label,
/// never by coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Action {
    Tap { element: u32 },
    LongPress { element: u32 },
    Swipe { element: u32, direction: Direction, dist: Distance },
    Text { text: String },
    Back,
    Exit,
}

impl Action {
    pub fn kind(&self) -> ActionKind {
        match self {
            Self::Tap { .. } => ActionKind::Tap,
            Self::LongPress { .. } => ActionKind::LongPress,
            Self::Swipe { .. } => ActionKind::Swipe,
            Self::Text { .. } => ActionKind::Text,
            Self::Back => ActionKind::Back,
            Self::Exit => ActionKind::Exit,
        }
    }

    pub fn element(&self) -> Option<u32> {
        match self {
            Self::Tap { element } | Self::LongPress { element } | Self::Swipe { element, .. } => Some(*element),
            _ => None,
        }
    }
}

/// Canonical textual form; `parse_action` reads it back unchanged.
impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Tap { element } => write!(f, "tap({element})"),
            Self::LongPress { element } => write!(f, "long_press({element})"),
            Self::Swipe { element, direction, dist } => {
                write!(f, "swipe({element}, \"{}\", \"{}\")", direction.as_str(), dist.as_str())
            }
            Self::Text { text } => {
                f.write_str("text(\"")?;
                for c in text.chars() {
                    if c == '"' || c == '\\' {
                        f.write_str("\\")?;
                    }
                    write!(f, "{c}")?;
                }
                f.write_str("\")")
            }
            Self::Back => f.write_str("back()"),
            Self::Exit => f.write_str("exit()"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseErrorKind {
    NoActionFound,
    ArityMismatch,
    BadEnumValue,
    BadElementLiteral,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind:?} at {span:?}: {message}")]
pub struct ParseDiagnostic {
    pub kind: ParseErrorKind,
    /// Byte range in the source text the diagnostic refers to.
    pub span: Range<usize>,
    pub message: String,
}

impl ParseDiagnostic {
    fn new(kind: ParseErrorKind, span: Range<usize>, message: impl Into<String>) -> Self {
        Self { kind, span, message: message.into() }
    }
}

pub type ActionParseResult = Result<Action, ParseDiagnostic>;

#[derive(Debug, Clone, PartialEq)]
enum Arg {
    Str(String),
    /// Anything that is not a string literal, kept raw: integers, words.
    Bare(String),
}

/// A syntactically complete call found in the source.
#[derive(Debug)]
struct RawCall {
    kind: ActionKind,
    args: Vec<(Arg, Range<usize>)>,
    span: Range<usize>,
}

/// Extracts the first action call in `source`.
pub fn parse_action(source: &str) -> ActionParseResult {
    parse_action_with_span(source).map(|(a, _)| a)
}

/// Like [`parse_action`] but also returns the byte span of the call.
pub fn parse_action_with_span(source: &str) -> Result<(Action, Range<usize>), ParseDiagnostic> {
    let call = find_call(source, 0)
        .ok_or_else(|| ParseDiagnostic::new(ParseErrorKind::NoActionFound, 0..source.len(), "no action call found"))?;
    let span = call.span.clone();
    interpret(call).map(|a| (a, span))
}

/// Counts the well-formed calls in `source`, used to warn about replies that
/// contain more than one action.
pub fn count_calls(source: &str) -> usize {
    let mut n = 0;
    let mut from = 0;
    while let Some(call) = find_call(source, from) {
        n += 1;
        from = call.span.end;
    }
    n
}

fn find_call(source: &str, from: usize) -> Option<RawCall> {
    let bytes = source.as_bytes();
    let mut i = from;
    while i < bytes.len() {
        let starts_word = (bytes[i].is_ascii_alphabetic())
            && (i == 0 || !(bytes[i - 1].is_ascii_alphanumeric() || bytes[i - 1] == b'_'));
        if starts_word {
            let end = i + bytes[i..].iter().take_while(|b| b.is_ascii_alphanumeric() || **b == b'_').count();
            if let Some(kind) = ActionKind::parse(&source[i..end]) {
                if let Some(call) = parse_call_at(source, kind, i, end) {
                    return Some(call);
                }
            }
            i = end;
        } else {
            i += 1;
        }
    }
    None
}

fn skip_ws(bytes: &[u8], mut i: usize) -> usize {
    while i < bytes.len() && (bytes[i] == b' ' || bytes[i] == b'\t') {
        i += 1;
    }
    i
}

fn parse_call_at(source: &str, kind: ActionKind, start: usize, name_end: usize) -> Option<RawCall> {
    let bytes = source.as_bytes();
    let mut i = skip_ws(bytes, name_end);
    if bytes.get(i) != Some(&b'(') {
        return None;
    }
    i = skip_ws(bytes, i + 1);
    let mut args = Vec::new();
    if bytes.get(i) == Some(&b')') {
        return Some(RawCall { kind, args, span: start..i + 1 });
    }
    loop {
        let arg_start = i;
        let arg = if bytes.get(i) == Some(&b'"') {
            let mut value = String::new();
            let mut j = i + 1;
            loop {
                let c = source[j..].chars().next()?;
                match c {
                    '"' => break,
                    '\n' | '\r' => return None,
                    '\\' => {
                        let next = source[j + 1..].chars().next()?;
                        if next == '"' || next == '\\' {
                            value.push(next);
                        } else if next == '\n' || next == '\r' {
                            return None;
                        } else {
                            value.push('\\');
                            value.push(next);
                        }
                        j += 1 + next.len_utf8();
                        continue;
                    }
                    _ => value.push(c),
                }
                j += c.len_utf8();
            }
            i = j + 1;
            Arg::Str(value)
        } else {
            let len = bytes[i..]
                .iter()
                .take_while(|b| b.is_ascii_alphanumeric() || matches!(b, b'-' | b'+' | b'_' | b'.'))
                .count();
            if len == 0 {
                return None;
            }
            i += len;
            Arg::Bare(source[arg_start..i].to_string())
        };
        args.push((arg, arg_start..i));
        i = skip_ws(bytes, i);
        match bytes.get(i) {
            Some(b',') => i = skip_ws(bytes, i + 1),
            Some(b')') => return Some(RawCall { kind, args, span: start..i + 1 }),
            _ => return None,
        }
    }
}

fn interpret(call: RawCall) -> ActionParseResult {
    use ParseErrorKind::*;
    if call.args.len() != call.kind.arity() {
        return Err(ParseDiagnostic::new(
            ArityMismatch,
            call.span,
            format!("{} takes {} argument(s), got {}", call.kind, call.kind.arity(), call.args.len()),
        ));
    }
    let element = |(arg, span): &(Arg, Range<usize>)| -> Result<u32, ParseDiagnostic> {
        match arg {
            Arg::Bare(raw) => match raw.parse::<u32>() {
                Ok(n) if n >= 1 => Ok(n),
                _ => Err(ParseDiagnostic::new(BadElementLiteral, span.clone(), format!("{raw:?} is not an element label"))),
            },
            Arg::Str(s) => Err(ParseDiagnostic::new(BadElementLiteral, span.clone(), format!("element must be an integer, got string {s:?}"))),
        }
    };
    let string = |(arg, span): &(Arg, Range<usize>), kind: ParseErrorKind| -> Result<String, ParseDiagnostic> {
        match arg {
            Arg::Str(s) => Ok(s.clone()),
            Arg::Bare(raw) => Err(ParseDiagnostic::new(kind, span.clone(), format!("expected a quoted string, got {raw:?}"))),
        }
    };
    let args = &call.args;
    Ok(match call.kind {
        ActionKind::Tap => Action::Tap { element: element(&args[0])? },
        ActionKind::LongPress => Action::LongPress { element: element(&args[0])? },
        ActionKind::Swipe => {
            let element = element(&args[0])?;
            let dir = string(&args[1], BadEnumValue)?;
            let direction = Direction::parse(&dir).ok_or_else(|| {
                ParseDiagnostic::new(BadEnumValue, args[1].1.clone(), format!("direction {dir:?} is not one of up, down, left, right"))
            })?;
            let d = string(&args[2], BadEnumValue)?;
            let dist = Distance::parse(&d).ok_or_else(|| {
                ParseDiagnostic::new(BadEnumValue, args[2].1.clone(), format!("distance {d:?} is not one of short, medium, long"))
            })?;
            Action::Swipe { element, direction, dist }
        }
        ActionKind::Text => Action::Text { text: string(&args[0], BadEnumValue)? },
        ActionKind::Back => Action::Back,
        ActionKind::Exit => Action::Exit,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("element {element} is out of range: the screen has {count} labeled elements")]
    ElementOutOfRange { element: u32, count: usize },
    #[error("no input field is visible on this screen")]
    NoInputFieldVisible,
}

/// Checks `action` against the registry of the screen the model saw.
pub fn validate_action(action: &Action, registry: &ElementRegistry) -> Result<(), ValidationError> {
    match action {
        Action::Tap { element } | Action::LongPress { element } | Action::Swipe { element, .. } => {
            if *element == 0 || *element as usize > registry.len() {
                Err(ValidationError::ElementOutOfRange { element: *element, count: registry.len() })
            } else {
                Ok(())
            }
        }
        Action::Text { .. } if !registry.has_editable() => Err(ValidationError::NoInputFieldVisible),
        _ => Ok(()),
    }
}

const ACTION_REFERENCE: &str = "\
1. tap(element: int)
   Taps the UI element labeled with the given number.
   Example: tap(5)
2. long_press(element: int)
   Presses and holds the labeled element for one second.
   Example: long_press(5)
3. swipe(element: int, direction: str, dist: str)
   Swipes on the labeled element. direction is one of \"up\", \"down\", \"left\", \"right\"; dist is one of \"short\", \"medium\", \"long\".
   Example: swipe(21, \"up\", \"medium\")
4. text(text: str)
   Types the string into the input field that currently has focus. Only use it when an input field is visible.
   Example: text(\"Hello, world!\")
5. back()
   Returns to the previous screen, for example to leave a page that is unrelated to the task.
   Example: back()
6. exit()
   Ends the session. Call it once the task is complete.
   Example: exit()
";

/// The action reference embedded in every prompt.
pub fn render_action_reference() -> String {
    ACTION_REFERENCE.to_string()
}
