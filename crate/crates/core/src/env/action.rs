//! Action tags emitted by agents, e.g. `<measure a>` or `<stack a on b>`.

use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::BlockId;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "verb")]
pub enum ActionKind {
    Measure { block: BlockId },
    PickUp { block: BlockId },
    Stack { top: BlockId, bottom: BlockId },
    PutDown { block: BlockId },
    Towers { towers: Vec<Vec<BlockId>> },
    Height { cm: f64 },
    Done,
}

impl ActionKind {
    /// Pick up, stack and put down: the only actions perturbation may replace.
    pub fn is_manipulation(&self) -> bool {
        matches!(self, ActionKind::PickUp { .. } | ActionKind::Stack { .. } | ActionKind::PutDown { .. })
    }

    /// Canonical tag text for this action.
    pub fn tag(&self) -> String {
        match self {
            ActionKind::Measure { block } => format!("<measure {block}>"),
            ActionKind::PickUp { block } => format!("<pick up {block}>"),
            ActionKind::Stack { top, bottom } => format!("<stack {top} on {bottom}>"),
            ActionKind::PutDown { block } => format!("<put down {block}>"),
            ActionKind::Towers { towers } => format!("<towers {}>", render_towers(towers)),
            ActionKind::Height { cm } => format!("<height {cm:.2}cm>"),
            ActionKind::Done => "<done>".to_string(),
        }
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tag())
    }
}

/// `[a]; [b, c]`
pub fn render_towers(towers: &[Vec<BlockId>]) -> String {
    towers
        .iter()
        .map(|t| {
            let names: Vec<String> = t.iter().map(|b| b.to_string()).collect();
            format!("[{}]", names.join(", "))
        })
        .collect::<Vec<_>>()
        .join("; ")
}

/// A parsed action together with the tag it came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub kind: ActionKind,
    pub raw: String,
}

impl Action {
    pub fn new(kind: ActionKind) -> Self {
        let raw = kind.tag();
        Self { kind, raw }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ParseFailure {
    #[error("no <...> action tag found")]
    NoTag { text: String },
    #[error("could not parse action tag {tag}: {reason}")]
    Malformed { tag: String, reason: String },
    #[error("unknown action verb in {tag}")]
    UnknownVerb { tag: String },
}

impl ParseFailure {
    /// The text that failed to parse.
    pub fn offending_text(&self) -> &str {
        match self {
            ParseFailure::NoTag { text } => text,
            ParseFailure::Malformed { tag, .. } | ParseFailure::UnknownVerb { tag } => tag,
        }
    }
}

fn tag_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"<([^<>]*)>").expect("valid regex"))
}

/// Finds the last well-formed action tag in an agent message.
///
/// Reasoning text around the tag is ignored. Tags are tried from the end of
/// the message backwards; if none parses, the failure for the last tag is
/// returned.
pub fn parse_action(text: &str) -> Result<Action, ParseFailure> {
    let tags: Vec<_> = tag_regex().captures_iter(text).collect();
    let mut last_failure = None;
    for cap in tags.iter().rev() {
        let whole = cap.get(0).expect("group 0").as_str();
        match parse_tag_body(cap.get(1).expect("group 1").as_str(), whole) {
            Ok(kind) => {
                return Ok(Action { kind, raw: whole.to_string() });
            }
            Err(e) => {
                if last_failure.is_none() {
                    last_failure = Some(e);
                }
            }
        }
    }
    Err(last_failure.unwrap_or_else(|| ParseFailure::NoTag { text: text.to_string() }))
}

/// Number of `<...>` tags in a message.
pub fn count_tags(text: &str) -> usize {
    tag_regex().find_iter(text).count()
}

fn parse_tag_body(body: &str, whole: &str) -> Result<ActionKind, ParseFailure> {
    let malformed = |reason: &str| ParseFailure::Malformed { tag: whole.to_string(), reason: reason.to_string() };
    let lower = body.trim().to_ascii_lowercase();
    let words: Vec<&str> = lower.split_whitespace().collect();
    let block = |w: &str| BlockId::parse(w).ok_or_else(|| malformed(&format!("'{w}' is not a block name")));
    match words.as_slice() {
        [] => Err(malformed("empty tag")),
        ["done"] => Ok(ActionKind::Done),
        ["measure", b] => Ok(ActionKind::Measure { block: block(b)? }),
        ["pick", "up", b] | ["pickup", b] => Ok(ActionKind::PickUp { block: block(b)? }),
        ["put", "down", b] | ["putdown", b] => Ok(ActionKind::PutDown { block: block(b)? }),
        ["stack", top, "on", bottom] => Ok(ActionKind::Stack { top: block(top)?, bottom: block(bottom)? }),
        ["height", ..] => {
            let rest = lower["height".len()..].trim();
            let number = rest.strip_suffix("cm").unwrap_or(rest).trim();
            let cm: f64 = number.parse().map_err(|_| malformed("height must be a number in cm"))?;
            if !cm.is_finite() {
                return Err(malformed("height must be finite"));
            }
            Ok(ActionKind::Height { cm })
        }
        ["towers", ..] => parse_towers(lower["towers".len()..].trim()).map_err(|r| malformed(&r)),
        ["measure" | "pick" | "pickup" | "put" | "putdown" | "stack", ..] => Err(malformed("wrong number of arguments")),
        _ => Err(ParseFailure::UnknownVerb { tag: whole.to_string() }),
    }
}

fn parse_towers(spec: &str) -> Result<ActionKind, String> {
    if spec.is_empty() {
        return Err("towers needs at least one [..] group".into());
    }
    let mut towers = Vec::new();
    let mut seen = Vec::new();
    for group in spec.split(';') {
        let g = group.trim();
        let inner = g
            .strip_prefix('[')
            .and_then(|s| s.strip_suffix(']'))
            .ok_or_else(|| format!("'{g}' is not a bracketed tower"))?;
        let mut tower = Vec::new();
        for name in inner.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let b = BlockId::parse(name).ok_or_else(|| format!("'{name}' is not a block name"))?;
            if seen.contains(&b) {
                return Err(format!("block {b} listed twice"));
            }
            seen.push(b);
            tower.push(b);
        }
        towers.push(tower);
    }
    Ok(ActionKind::Towers { towers })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(c: char) -> BlockId {
        BlockId::from_letter(c).unwrap()
    }

    #[test]
    fn reasoning_before_tag_is_ignored() {
        let a = parse_action("I should check. <measure a>").unwrap();
        assert_eq!(a.kind, ActionKind::Measure { block: b('a') });
        assert_eq!(a.raw, "<measure a>");
    }

    #[test]
    fn towers_tag() {
        let a = parse_action("<towers [a]; [b, c]>").unwrap();
        assert_eq!(a.kind, ActionKind::Towers { towers: vec![vec![b('a')], vec![b('b'), b('c')]] });
    }

    #[test]
    fn absent_tag_fails() {
        assert!(matches!(parse_action("no tags here"), Err(ParseFailure::NoTag { .. })));
    }

    #[test]
    fn last_tag_wins_and_case_is_ignored() {
        let a = parse_action("First <measure a>, actually <Stack A on B>").unwrap();
        assert_eq!(a.kind, ActionKind::Stack { top: b('a'), bottom: b('b') });
    }

    #[test]
    fn malformed_last_tag_falls_back_to_earlier_tag() {
        let a = parse_action("<pick up c> then <stack c>").unwrap();
        assert_eq!(a.kind, ActionKind::PickUp { block: b('c') });
    }

    #[test]
    fn malformed_and_unknown() {
        assert!(matches!(parse_action("<stack a>"), Err(ParseFailure::Malformed { .. })));
        assert!(matches!(parse_action("<jump a>"), Err(ParseFailure::UnknownVerb { .. })));
        assert!(matches!(parse_action("<towers [a]; [a, b]>"), Err(ParseFailure::Malformed { .. })));
        assert!(matches!(parse_action("<measure 3>"), Err(ParseFailure::Malformed { .. })));
    }

    #[test]
    fn height_variants() {
        for text in ["<height 7.6cm>", "<height 7.6 cm>", "<height 7.6>"] {
            assert_eq!(parse_action(text).unwrap().kind, ActionKind::Height { cm: 7.6 });
        }
    }

    #[test]
    fn canonical_tags_parse_back() {
        let kinds = vec![
            ActionKind::Measure { block: b('c') },
            ActionKind::PickUp { block: b('a') },
            ActionKind::Stack { top: b('a'), bottom: b('b') },
            ActionKind::PutDown { block: b('d') },
            ActionKind::Towers { towers: vec![vec![b('a'), b('c')], vec![b('b')]] },
            ActionKind::Height { cm: 8.25 },
            ActionKind::Done,
        ];
        for k in kinds {
            assert_eq!(parse_action(&k.tag()).unwrap().kind, k);
        }
    }
}
