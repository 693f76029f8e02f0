//! Extraction of structured answers from free-form model output.
//!
//! Models are instructed to conclude with a `[[...]]` marker; they often
//! restate themselves, so the last marker wins. All extractors are total:
//! arbitrary text never panics, it just yields an error value or an empty
//! list.

use std::ops::Range;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("no [[...]] answer marker in response")]
    NoAnswerMarker,
    #[error("rating must be 0, 0.5, or 1, got {0:?}")]
    InvalidRating(String),
}

/// A structured value pulled out of a response, with the byte span of the
/// match in the source text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Extraction {
    FinalAnswer { value: String, span: (usize, usize) },
    Rating { value: f64, span: (usize, usize) },
    Coords { value: Vec<(i64, i64)> },
    Spots { value: Vec<SpotMark>, warnings: usize },
    Refusal,
}

/// One `[spot index, x, y]` triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpotMark {
    pub index: i64,
    pub x: i64,
    pub y: i64,
}

fn marker_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\[\[([^\[\]]*)\]\]").expect("static regex"))
}

fn coord_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"\[\[\(\s*(-?\d+)\s*,\s*(-?\d+)\s*\)\]\]").expect("static regex")
    })
}

fn bracket_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\[([^\[\]]*)\]").expect("static regex"))
}

/// Canonical token form: single letters upper-cased, yes/no/true/false
/// lower-cased, everything else trimmed verbatim.
pub fn normalize_token(token: &str) -> String {
    let t = token.trim();
    if t.chars().count() == 1 && t.chars().next().is_some_and(|c| c.is_ascii_alphabetic()) {
        return t.to_ascii_uppercase();
    }
    match t.to_ascii_lowercase().as_str() {
        l @ ("yes" | "no" | "true" | "false") => l.to_string(),
        _ => t.to_string(),
    }
}

/// Contents of the last `[[...]]` marker, normalized, with its span.
pub fn extract_final_answer(text: &str) -> Result<Extraction, ParseError> {
    let m = marker_re()
        .captures_iter(text)
        .last()
        .ok_or(ParseError::NoAnswerMarker)?;
    let whole = m.get(0).expect("match 0");
    let inner = m.get(1).expect("group 1");
    Ok(Extraction::FinalAnswer {
        value: normalize_token(inner.as_str()),
        span: (whole.start(), whole.end()),
    })
}

/// Rating from the last `[[r]]` marker; only 0, 0.5, and 1 are legal.
pub fn extract_rating(text: &str) -> Result<Extraction, ParseError> {
    let m = marker_re()
        .captures_iter(text)
        .last()
        .ok_or(ParseError::NoAnswerMarker)?;
    let whole = m.get(0).expect("match 0");
    let raw = m.get(1).expect("group 1").as_str().trim();
    let value: f64 = raw
        .parse()
        .map_err(|_| ParseError::InvalidRating(raw.to_string()))?;
    if value != 0.0 && value != 0.5 && value != 1.0 {
        return Err(ParseError::InvalidRating(raw.to_string()));
    }
    Ok(Extraction::Rating {
        value,
        span: (whole.start(), whole.end()),
    })
}

/// Every `[[(x,y)]]` integer pair in order of appearance, first occurrence
/// kept on duplicates. An empty list is a valid result.
pub fn extract_coordinates(text: &str) -> Vec<(i64, i64)> {
    let mut seen = Vec::new();
    for cap in coord_re().captures_iter(text) {
        let x: i64 = cap[1].parse().expect("digits");
        let y: i64 = cap[2].parse().expect("digits");
        if !seen.contains(&(x, y)) {
            seen.push((x, y));
        }
    }
    seen
}

/// Every whitespace-tolerant `[i, x, y]` integer triple in order. Bracket
/// groups whose elements are all integers but whose arity is not three are
/// skipped and counted as warnings; anything else is ignored.
pub fn extract_spots(text: &str) -> (Vec<SpotMark>, usize) {
    let mut spots = Vec::new();
    let mut warnings = 0usize;
    for cap in bracket_re().captures_iter(text) {
        let inner = cap[1].trim();
        if inner.is_empty() {
            continue;
        }
        let parts: Vec<Option<i64>> = inner
            .split(',')
            .map(|p| p.trim().parse::<i64>().ok())
            .collect();
        if parts.iter().any(|p| p.is_none()) {
            continue;
        }
        if parts.len() == 3 {
            spots.push(SpotMark {
                index: parts[0].unwrap(),
                x: parts[1].unwrap(),
                y: parts[2].unwrap(),
            });
        } else {
            warnings += 1;
        }
    }
    (spots, warnings)
}

/// Default refusal phrases, matched case-insensitively as substrings.
pub const DEFAULT_REFUSAL_PATTERNS: [&str; 4] = [
    "i'm sorry",
    "i cannot assist",
    "couldn't find",
    "does not contain",
];

/// Refusal phrase list, one pattern per line; blank lines and `#` comments
/// are skipped.
pub fn load_refusal_patterns(path: &std::path::Path) -> std::io::Result<Vec<String>> {
    Ok(std::fs::read_to_string(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.to_ascii_lowercase())
        .collect())
}

/// True iff the text matches a refusal pattern and committed to no answer
/// marker. A `[[...]]` marker anywhere takes precedence: it means an answer
/// was given, apologetic prose notwithstanding.
pub fn detect_refusal_with(text: &str, patterns: &[String]) -> bool {
    if marker_re().is_match(text) {
        return false;
    }
    let lower = text.to_ascii_lowercase();
    patterns.iter().any(|p| lower.contains(p.as_str()))
}

/// [`detect_refusal_with`] over the default pattern list.
pub fn detect_refusal(text: &str) -> bool {
    if marker_re().is_match(text) {
        return false;
    }
    let lower = text.to_ascii_lowercase();
    DEFAULT_REFUSAL_PATTERNS.iter().any(|p| lower.contains(p))
}

/// Span helper for tests and reporting.
pub fn span_text(text: &str, span: Range<usize>) -> &str {
    &text[span]
}
