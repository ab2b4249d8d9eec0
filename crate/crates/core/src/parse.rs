//! Lenient extraction of structured answers from free-form LLM replies.
//!
//! Every parser first looks for a fenced JSON block (or a bare JSON value),
//! then falls back to pattern matching on the prose.

use std::sync::OnceLock;

use regex::Regex;
use serde_json::Value;

fn re(cell: &'static OnceLock<Regex>, pattern: &str) -> &'static Regex {
    cell.get_or_init(|| Regex::new(pattern).expect("static regex"))
}

/// First JSON value found in a fenced block, or failing that the first
/// balanced `{...}` / `[...]` span that parses.
pub fn extract_json(text: &str) -> Option<Value> {
    static FENCE: OnceLock<Regex> = OnceLock::new();
    let fence = re(&FENCE, r"(?s)```[a-zA-Z]*\s*\n?(.*?)```");
    for cap in fence.captures_iter(text) {
        if let Ok(v) = serde_json::from_str::<Value>(cap[1].trim()) {
            return Some(v);
        }
    }
    for (start, ch) in text.char_indices() {
        if ch != '{' && ch != '[' {
            continue;
        }
        if let Some(end) = balanced_end(&text[start..]) {
            if let Ok(v) = serde_json::from_str::<Value>(&text[start..start + end]) {
                if v.is_object() || v.as_array().is_some_and(|a| !a.is_empty()) {
                    return Some(v);
                }
            }
        }
    }
    None
}

fn balanced_end(s: &str) -> Option<usize> {
    let mut depth = 0i32;
    let mut in_str = false;
    let mut escaped = false;
    for (i, ch) in s.char_indices() {
        if in_str {
            match ch {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_str = false,
                _ => {}
            }
            continue;
        }
        match ch {
            '"' => in_str = true,
            '{' | '[' => depth += 1,
            '}' | ']' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

fn json_field<'a>(v: &'a Value, keys: &[&str]) -> Option<&'a Value> {
    let obj = v.as_object()?;
    keys.iter().find_map(|k| obj.get(*k))
}

/// Non-empty free text, preferring a JSON `text` field when present.
pub fn parse_text(reply: &str) -> Option<String> {
    if let Some(v) = extract_json(reply) {
        if let Some(Value::String(s)) = json_field(&v, &["text", "answer"]) {
            if !s.trim().is_empty() {
                return Some(s.trim().to_string());
            }
        }
    }
    let t = reply.trim();
    (!t.is_empty()).then(|| t.to_string())
}

const NUMBER_WORDS: [(&str, f64); 11] = [
    ("half", 0.5),
    ("one", 1.0),
    ("two", 2.0),
    ("three", 3.0),
    ("four", 4.0),
    ("five", 5.0),
    ("six", 6.0),
    ("seven", 7.0),
    ("eight", 8.0),
    ("nine", 9.0),
    ("ten", 10.0),
];

/// Duration in seconds. Milliseconds and minutes are converted when the unit
/// is spelled out right after the number.
pub fn parse_seconds(reply: &str) -> Option<f64> {
    if let Some(v) = extract_json(reply) {
        if let Some(s) = json_field(&v, &["seconds", "duration", "time"]).and_then(Value::as_f64) {
            if s.is_finite() && s > 0.0 {
                return Some(s);
            }
        }
    }
    static NUM: OnceLock<Regex> = OnceLock::new();
    let num = re(&NUM, r"(?i)(step\s*)?(\d+(?:\.\d+)?|\.\d+)\s*(ms\b|milliseconds?|min(?:ute)?s?\b|s\b|sec(?:ond)?s?)?");
    let mut unitless = None;
    for cap in num.captures_iter(reply) {
        if cap.get(1).is_some() {
            continue;
        }
        let Ok(mut value) = cap[2].parse::<f64>() else { continue };
        let unit = cap.get(3).map(|m| m.as_str().to_ascii_lowercase());
        match unit.as_deref() {
            Some(u) if u.starts_with("ms") || u.starts_with("milli") => value /= 1000.0,
            Some(u) if u.starts_with("min") => value *= 60.0,
            _ => {}
        }
        if !(value.is_finite() && value > 0.0) {
            continue;
        }
        if unit.is_some() {
            return Some(value);
        }
        unitless.get_or_insert(value);
    }
    if unitless.is_some() {
        return unitless;
    }
    static WORD: OnceLock<Regex> = OnceLock::new();
    let word = re(&WORD, r"(?i)\b(half|one|two|three|four|five|six|seven|eight|nine|ten)\b[\s-]*(?:a\s+)?(?:second|sec)");
    let cap = word.captures(reply)?;
    let w = cap[1].to_ascii_lowercase();
    NUMBER_WORDS.iter().find(|(k, _)| *k == w).map(|(_, v)| *v)
}

fn leading_clause(reply: &str) -> String {
    let stripped: String = reply.trim_start().chars().filter(|c| !matches!(c, '*' | '_' | '`' | '#' | '"')).collect();
    let lower = stripped.trim_start().to_lowercase();
    let end = lower.find(['.', ',', ';', '!', '\n', ':', '?']).unwrap_or(lower.len());
    lower[..end].trim().to_string()
}

fn starts_with_word(s: &str, w: &str) -> bool {
    s.strip_prefix(w).is_some_and(|rest| rest.is_empty() || !rest.starts_with(|c: char| c.is_alphanumeric()))
}

/// `Some(true)` for yes, `Some(false)` for no, `None` if undecidable.
pub fn parse_yes_no(reply: &str) -> Option<bool> {
    if let Some(v) = extract_json(reply) {
        match json_field(&v, &["answer", "end", "is_end", "yes"]) {
            Some(Value::Bool(b)) => return Some(*b),
            Some(Value::String(s)) => {
                if let Some(b) = yes_no_word(&s.to_lowercase()) {
                    return Some(b);
                }
            }
            _ => {}
        }
    }
    yes_no_word(&leading_clause(reply))
}

fn yes_no_word(clause: &str) -> Option<bool> {
    const NO: [&str; 10] = [
        "no", "nope", "not", "it is not", "it's not", "it isn't", "this is not", "false", "negative", "incorrect",
    ];
    const YES: [&str; 12] = [
        "yes", "yeah", "yep", "yup", "correct", "indeed", "affirmative", "true", "it is", "it's", "this is", "that's right",
    ];
    let c = clause.trim();
    if NO.iter().any(|w| starts_with_word(c, w)) {
        return Some(false);
    }
    if YES.iter().any(|w| starts_with_word(c, w)) {
        return Some(true);
    }
    None
}

/// `Some(true)` when the judgement asks to replan.
pub fn parse_judgement(reply: &str) -> Option<bool> {
    if let Some(v) = extract_json(reply) {
        match json_field(&v, &["replan", "need_to_replan", "answer"]) {
            Some(Value::Bool(b)) => return Some(*b),
            Some(Value::String(s)) => {
                if let Some(b) = yes_no_word(&s.to_lowercase()) {
                    return Some(b);
                }
            }
            _ => {}
        }
    }
    let lower = reply.to_lowercase();
    const KEEP: [&str; 9] = [
        "no need",
        "not need",
        "don't think there's need",
        "do not think there is need",
        "no replan",
        "not necessary to replan",
        "unnecessary to replan",
        "does not need",
        "doesn't need",
    ];
    const REPLAN: [&str; 7] = [
        "should replan",
        "need to replan",
        "needs to replan",
        "should be replanned",
        "needs to be replanned",
        "must replan",
        "requires replanning",
    ];
    if KEEP.iter().any(|p| lower.contains(p)) {
        return Some(false);
    }
    if REPLAN.iter().any(|p| lower.contains(p)) {
        return Some(true);
    }
    yes_no_word(&leading_clause(reply))
}

pub fn normalize(s: &str) -> String {
    s.to_lowercase()
        .replace(['_', '-'], " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OptionMatch {
    Unique(String),
    Ambiguous(Vec<String>),
    NoMatch,
}

/// Match a reply against option labels. `aliases` pairs every accepted
/// spelling with the label it resolves to (labels should map to themselves).
///
/// The JSON `choice` field wins, then bold or `Choice:` mentions, then the
/// whole reply. Within a tier, a mention nested inside a longer mention is
/// discarded, so "bent in 90 degrees" does not also count as "bent".
pub fn match_option(reply: &str, aliases: &[(String, String)]) -> OptionMatch {
    if let Some(v) = extract_json(reply) {
        if let Some(Value::String(choice)) = json_field(&v, &["choice", "position", "option", "answer"]) {
            let n = normalize(choice);
            let hits: Vec<&String> = aliases.iter().filter(|(a, _)| normalize(a) == n).map(|(_, l)| l).collect();
            if let Some(first) = hits.first() {
                if hits.iter().all(|l| l == first) {
                    return OptionMatch::Unique((*first).clone());
                }
            }
            let inner = match_in(choice, aliases);
            if inner != OptionMatch::NoMatch {
                return inner;
            }
        }
    }
    static BOLD: OnceLock<Regex> = OnceLock::new();
    static CHOICE: OnceLock<Regex> = OnceLock::new();
    let bold = re(&BOLD, r"\*\*([^*]+)\*\*");
    let choice = re(&CHOICE, r"(?im)^\W*(?:final\s+)?(?:choice|answer|next position|selected option)\s*:\s*(.+)$");
    let mut emphasised = String::new();
    for c in choice.captures_iter(reply) {
        emphasised.push_str(&c[1]);
        emphasised.push('\n');
    }
    if emphasised.is_empty() {
        for c in bold.captures_iter(reply) {
            emphasised.push_str(&c[1]);
            emphasised.push('\n');
        }
    }
    if !emphasised.is_empty() {
        let m = match_in(&emphasised, aliases);
        if m != OptionMatch::NoMatch {
            return m;
        }
    }
    match_in(reply, aliases)
}

fn match_in(text: &str, aliases: &[(String, String)]) -> OptionMatch {
    let hay = normalize(text);
    let mut spans: Vec<(usize, usize, &String)> = Vec::new();
    for (alias, label) in aliases {
        let needle = normalize(alias);
        if needle.is_empty() {
            continue;
        }
        for (start, _) in hay.match_indices(&needle) {
            let end = start + needle.len();
            let before = hay[..start].chars().next_back();
            let after = hay[end..].chars().next();
            let is_word = |c: Option<char>| c.is_some_and(|c| c.is_alphanumeric());
            if !is_word(before) && !is_word(after) {
                spans.push((start, end, label));
            }
        }
    }
    let kept: Vec<&String> = spans
        .iter()
        .filter(|(s, e, _)| {
            !spans.iter().any(|(s2, e2, _)| s2 <= s && e <= e2 && (e2 - s2) > (e - s))
        })
        .map(|(_, _, l)| *l)
        .collect();
    let mut labels: Vec<String> = Vec::new();
    for l in kept {
        if !labels.contains(l) {
            labels.push(l.clone());
        }
    }
    match labels.len() {
        0 => OptionMatch::NoMatch,
        1 => OptionMatch::Unique(labels.remove(0)),
        _ => OptionMatch::Ambiguous(labels),
    }
}

/// One step as parsed from an in-one-go reply, before validation.
#[derive(Debug, Clone, PartialEq)]
pub struct RawStep {
    pub step_number: Option<u32>,
    pub time_range: Option<(f64, f64)>,
    pub movement: String,
    pub initial_state: String,
    pub final_state: String,
}

fn value_text(v: Option<&Value>) -> String {
    match v {
        Some(Value::String(s)) => s.trim().to_string(),
        Some(Value::Array(items)) => items
            .iter()
            .map(|i| value_text(Some(i)))
            .filter(|s| !s.is_empty())
            .collect::<Vec<_>>()
            .join("\n"),
        Some(Value::Null) | None => String::new(),
        Some(other) => other.to_string(),
    }
}

fn time_range(v: Option<&Value>) -> Option<(f64, f64)> {
    match v? {
        Value::Array(a) if a.len() == 2 => Some((num(&a[0])?, num(&a[1])?)),
        Value::String(s) => {
            static RANGE: OnceLock<Regex> = OnceLock::new();
            let r = re(&RANGE, r"(\d+(?:\.\d+)?)\s*(?:-|–|to|,)\s*(\d+(?:\.\d+)?)");
            let c = r.captures(s)?;
            Some((c[1].parse().ok()?, c[2].parse().ok()?))
        }
        _ => None,
    }
}

fn num(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().trim_end_matches(['s', ' ']).parse().ok(),
        _ => None,
    }
}

fn steps_from_json(v: &Value) -> Option<Vec<RawStep>> {
    let arr = match v {
        Value::Array(a) => a,
        Value::Object(o) => o.get("steps").or_else(|| o.get("plan"))?.as_array()?,
        _ => return None,
    };
    let steps: Vec<RawStep> = arr
        .iter()
        .filter_map(|s| {
            let o = s.as_object()?;
            Some(RawStep {
                step_number: o.get("step_number").or_else(|| o.get("step")).and_then(num).map(|n| n as u32),
                time_range: time_range(o.get("time_range")),
                movement: value_text(o.get("movement").or_else(|| o.get("movements"))),
                initial_state: value_text(o.get("initial_state").or_else(|| o.get("initial_states"))),
                final_state: value_text(o.get("final_state").or_else(|| o.get("final_states"))),
            })
        })
        .collect();
    (!steps.is_empty()).then_some(steps)
}

/// Prose fallback: split on "Step N" headings and pick labelled lines.
fn steps_from_prose(reply: &str) -> Option<Vec<RawStep>> {
    static HEAD: OnceLock<Regex> = OnceLock::new();
    static FIELD: OnceLock<Regex> = OnceLock::new();
    static RANGE: OnceLock<Regex> = OnceLock::new();
    let head = re(&HEAD, r"(?im)^[#*\s-]*step\s*(\d+)\b[^\n]*$");
    let field = re(&FIELD, r"(?im)^[\s*\-#]*(initial state|final state|movement)s?[*\s]*:[*\s]*(.+)$");
    let range = re(&RANGE, r"(\d+(?:\.\d+)?)\s*(?:s|sec|seconds)?\s*(?:-|–|to)\s*(\d+(?:\.\d+)?)");
    let heads: Vec<(usize, usize, u32, String)> = head
        .captures_iter(reply)
        .map(|c| {
            let m = c.get(0).unwrap();
            (m.start(), m.end(), c[1].parse().unwrap_or(0), m.as_str().to_string())
        })
        .collect();
    if heads.is_empty() {
        return None;
    }
    let mut steps = Vec::new();
    for (i, (_, end, n, line)) in heads.iter().enumerate() {
        let body_end = heads.get(i + 1).map(|h| h.0).unwrap_or(reply.len());
        let body = &reply[*end..body_end];
        let mut step = RawStep {
            step_number: Some(*n),
            time_range: None,
            movement: String::new(),
            initial_state: String::new(),
            final_state: String::new(),
        };
        let search = format!("{line}\n{body}");
        if let Some(c) = range.captures(&search) {
            step.time_range = Some((c[1].parse().unwrap_or(0.0), c[2].parse().unwrap_or(0.0)));
        }
        for c in field.captures_iter(body) {
            let v = c[2].trim().to_string();
            match c[1].to_lowercase().as_str() {
                "initial state" => step.initial_state = v,
                "final state" => step.final_state = v,
                _ => step.movement = v,
            }
        }
        steps.push(step);
    }
    Some(steps)
}

pub fn parse_in_one_go(reply: &str) -> Option<Vec<RawStep>> {
    extract_json(reply).and_then(|v| steps_from_json(&v)).or_else(|| steps_from_prose(reply))
}
