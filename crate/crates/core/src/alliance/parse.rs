//! Parsing of free-text agent completions.

use std::sync::LazyLock;

use regex::Regex;

pub const DEFAULT_RATING: u8 = 5;
pub const MIN_RATING: u8 = 1;
pub const MAX_RATING: u8 = 10;

static MARKED: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"\b(?i:final\s+answer|answer|option|choice|choose|select|pick)(?:\s+is)?\s*[:\-=]?\s*[\(\[\*]*\s*([A-Za-z])([\)\]\*\.:,;!\s]|$)",
    )
    .unwrap()
});
static LEADING: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^[\s\*\(\[]*([A-Z])(?:[\)\]\.:,\*]|\s*$|\s*\n)").unwrap());
static BRACKETED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[\(\[]([A-Z])[\)\]]").unwrap());
static BARE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b([A-Z])\b").unwrap());
static AGENT_RATING: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)agent\s*#?\s*(\d+)\s*(?:\)|:|=|-|\x{2014}|\s)\s*(-?\d+(?:\.\d+)?)").unwrap()
});
static NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"-?\d+(?:\.\d+)?").unwrap());

fn unique<'a>(found: impl Iterator<Item = &'a str>, labels: &[String]) -> Option<String> {
    let mut hit: Option<&str> = None;
    for f in found {
        if !labels.iter().any(|l| l == f) {
            continue;
        }
        match hit {
            None => hit = Some(f),
            Some(h) if h == f => {}
            Some(_) => return None,
        }
    }
    hit.map(str::to_string)
}

/// Option label named by a completion, if exactly one can be identified.
pub fn parse_answer(text: &str, labels: &[String], options: &[String]) -> Option<String> {
    let text = text.trim();
    if text.is_empty() {
        return None;
    }
    let upper = |c: &str| c.to_ascii_uppercase();
    let marked: Vec<String> = MARKED
        .captures_iter(text)
        // a lowercase letter followed by a space is a word ("answer is a ...")
        .filter(|c| c[1].chars().all(|ch| ch.is_uppercase()) || !c[2].starts_with(char::is_whitespace) && !c[2].is_empty())
        .map(|c| upper(&c[1]))
        .collect();
    // the last explicit marker wins, so "answer: B ... final answer: C" gives C
    if let Some(m) = marked.iter().rev().find(|m| labels.contains(m)) {
        return Some(m.clone());
    }
    if let Some(c) = LEADING.captures(text) {
        if labels.iter().any(|l| *l == c[1]) {
            return Some(c[1].to_string());
        }
    }
    if let Some(b) = unique(BRACKETED.captures_iter(text).map(|c| c.get(1).unwrap().as_str()), labels) {
        return Some(b);
    }
    let lower = text.to_lowercase();
    let by_text: Vec<usize> = options
        .iter()
        .enumerate()
        .filter(|(_, o)| !o.trim().is_empty() && lower.contains(&o.trim().to_lowercase()))
        .map(|(i, _)| i)
        .collect();
    if by_text.len() == 1 {
        return labels.get(by_text[0]).cloned();
    }
    let bare = BARE.captures_iter(text).filter_map(|c| {
        let m = c.get(1).unwrap();
        let next = text[m.end()..].chars().nth(1);
        // "A person ..." and "I think ..." are words, not labels
        let wordy = matches!(m.as_str(), "A" | "I")
            && text[m.end()..].starts_with(' ')
            && next.is_some_and(|n| n.is_lowercase());
        (!wordy).then_some(m.as_str())
    });
    unique(bare, labels)
}

/// Convert a raw number to a rating.
fn clamp_rating(v: f64) -> u8 {
    v.round().clamp(MIN_RATING as f64, MAX_RATING as f64) as u8
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedRatings {
    pub ratings: Vec<u8>,
    /// Positions that fell back to the default rating.
    pub defaulted: Vec<usize>,
    /// Positions whose value was clamped into range.
    pub clamped: Vec<usize>,
}

/// Ratings for `count` responses. `Agent <n>: <r>` lines are read first; if
/// none are found the first `count` numbers are taken in order.
pub fn parse_ratings(text: &str, count: usize) -> ParsedRatings {
    let mut values: Vec<Option<f64>> = vec![None; count];
    let mut keyed = false;
    for c in AGENT_RATING.captures_iter(text) {
        let (Ok(n), Ok(v)) = (c[1].parse::<usize>(), c[2].parse::<f64>()) else { continue };
        if (1..=count).contains(&n) && values[n - 1].is_none() {
            values[n - 1] = Some(v);
            keyed = true;
        }
    }
    if !keyed {
        for (slot, m) in values.iter_mut().zip(NUMBER.find_iter(text)) {
            *slot = m.as_str().parse().ok();
        }
    }
    let mut out = ParsedRatings {
        ratings: Vec::with_capacity(count),
        defaulted: Vec::new(),
        clamped: Vec::new(),
    };
    for (i, v) in values.into_iter().enumerate() {
        match v {
            Some(v) if v.is_finite() => {
                let r = clamp_rating(v);
                if r as f64 != v {
                    out.clamped.push(i);
                }
                out.ratings.push(r);
            }
            _ => {
                out.defaulted.push(i);
                out.ratings.push(DEFAULT_RATING);
            }
        }
    }
    out
}
