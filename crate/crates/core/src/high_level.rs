//! Decomposing an instruction into timed natural-language steps.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{ChatSession, LlmError};
use crate::parse::{self, RawStep};
use crate::prompts::{self, FormatNotes};

#[derive(Debug, Error)]
pub enum HighLevelError {
    #[error("could not parse {what} after {attempts} attempt(s); last reply: {last_reply:?}")]
    Parse { what: String, attempts: u32, last_reply: String },
    #[error("no end of motion after {cap} steps")]
    StepCapExceeded { cap: u32 },
    #[error("invalid plan: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<PlanViolation>),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MotionInstruction {
    pub id: u32,
    pub text: String,
}

impl MotionInstruction {
    pub fn new(id: u32, text: impl Into<String>) -> Self {
        MotionInstruction { id, text: text.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighLevelStep {
    pub step_number: u32,
    /// `[start, end]` in seconds.
    pub time_range: [f64; 2],
    pub movement: String,
    pub initial_state: String,
    pub final_state: String,
}

impl HighLevelStep {
    pub fn start(&self) -> f64 {
        self.time_range[0]
    }

    pub fn end(&self) -> f64 {
        self.time_range[1]
    }

    pub fn duration(&self) -> f64 {
        self.time_range[1] - self.time_range[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HighStrategy {
    PieceByPiece,
    InOneGo,
    /// Hand-written or hand-corrected plan files.
    Manual,
}

impl HighStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            HighStrategy::PieceByPiece => "piece_by_piece",
            HighStrategy::InOneGo => "in_one_go",
            HighStrategy::Manual => "manual",
        }
    }
}

impl fmt::Display for HighStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for HighStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "piece_by_piece" => Ok(HighStrategy::PieceByPiece),
            "in_one_go" => Ok(HighStrategy::InOneGo),
            "manual" => Ok(HighStrategy::Manual),
            _ => Err(format!("unknown high-level strategy `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighLevelPlan {
    pub instruction: MotionInstruction,
    pub strategy: HighStrategy,
    pub steps: Vec<HighLevelStep>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl HighLevelPlan {
    pub fn duration(&self) -> f64 {
        self.steps.last().map(|s| s.end()).unwrap_or(0.0)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes") + "\n"
    }

    pub fn from_json_str(s: &str) -> Result<Self, HighLevelError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, HighLevelError> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// A bare list of steps, as written by hand, tagged `manual`.
    pub fn from_steps_json(instruction: MotionInstruction, s: &str) -> Result<Self, HighLevelError> {
        let steps: Vec<HighLevelStep> = serde_json::from_str(s)?;
        Ok(HighLevelPlan { instruction, strategy: HighStrategy::Manual, steps, warnings: Vec::new() })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanViolation {
    pub step: Option<u32>,
    pub rule: String,
}

impl fmt::Display for PlanViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.step {
            Some(n) => write!(f, "step {n}: {}", self.rule),
            None => f.write_str(&self.rule),
        }
    }
}

pub fn validate_plan(plan: &HighLevelPlan) -> Vec<PlanViolation> {
    let mut out = Vec::new();
    let mut push = |step: Option<u32>, rule: &str| out.push(PlanViolation { step, rule: rule.to_string() });
    if plan.instruction.text.trim().is_empty() {
        push(None, "empty instruction text");
    }
    if plan.steps.is_empty() {
        push(None, "plan has no steps");
    }
    for (i, s) in plan.steps.iter().enumerate() {
        let n = Some(s.step_number);
        if s.step_number as usize != i + 1 {
            push(n, "non-consecutive step numbers");
        }
        if !s.time_range.iter().all(|t| t.is_finite()) {
            push(n, "non-finite time");
        } else if s.end() <= s.start() {
            push(n, "non-positive duration");
        }
        if i == 0 && s.start() != 0.0 {
            push(n, "first step does not start at 0");
        }
        if i > 0 && plan.steps[i - 1].end() != s.start() {
            push(n, "non-contiguous timing");
        }
        for (field, text) in [("movement", &s.movement), ("initial_state", &s.initial_state), ("final_state", &s.final_state)] {
            if text.trim().is_empty() {
                push(n, &format!("empty {field}"));
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HighLevelOptions {
    pub step_cap: u32,
    /// Re-asks after an unusable reply.
    pub parse_retries: u32,
    pub notes: FormatNotes,
    /// Seconds assumed when a timing reply has no usable number.
    pub default_step_seconds: f64,
}

impl Default for HighLevelOptions {
    fn default() -> Self {
        HighLevelOptions { step_cap: 10, parse_retries: 2, notes: FormatNotes::On, default_step_seconds: 1.0 }
    }
}

fn warn(warnings: &mut Vec<String>, msg: String) {
    log::warn!("{msg}");
    warnings.push(msg);
}

fn ask_text(session: &mut ChatSession, prompt: String, what: &str, retries: u32) -> Result<String, HighLevelError> {
    let mut reply = session.send(&prompt)?;
    for _ in 0..retries {
        if let Some(t) = parse::parse_text(&reply) {
            return Ok(t);
        }
        reply = session.send(prompts::NUDGE)?;
    }
    parse::parse_text(&reply).ok_or(HighLevelError::Parse { what: what.into(), attempts: retries + 1, last_reply: reply })
}

pub fn plan_piece_by_piece(
    instr: &MotionInstruction,
    session: &mut ChatSession,
    opts: &HighLevelOptions,
) -> Result<HighLevelPlan, HighLevelError> {
    let mut warnings = Vec::new();
    let mut steps = Vec::new();
    session.send(&prompts::setup(&instr.text))?;
    let mut start = 0.0;
    for n in 1..=opts.step_cap {
        let movement = ask_text(session, prompts::movement(n), &format!("Step{n} movement"), opts.parse_retries)?;
        let initial_state = ask_text(session, prompts::initial_state(n), &format!("Step{n} initial state"), opts.parse_retries)?;
        let final_state = ask_text(session, prompts::final_state(n), &format!("Step{n} final state"), opts.parse_retries)?;
        let reply = session.send(&opts.notes.apply(prompts::timing(n), prompts::NOTE_TIMING))?;
        let secs = parse::parse_seconds(&reply).unwrap_or_else(|| {
            warn(&mut warnings, format!("Step{n}: unparseable timing {reply:?}; using {} s", opts.default_step_seconds));
            opts.default_step_seconds
        });
        steps.push(HighLevelStep { step_number: n, time_range: [start, start + secs], movement, initial_state, final_state });
        start += secs;
        let reply = session.send(&opts.notes.apply(prompts::is_end(), prompts::NOTE_YES_NO))?;
        if parse::parse_yes_no(&reply) == Some(true) {
            let plan = HighLevelPlan { instruction: instr.clone(), strategy: HighStrategy::PieceByPiece, steps, warnings };
            return checked(plan);
        }
    }
    Err(HighLevelError::StepCapExceeded { cap: opts.step_cap })
}

fn checked(plan: HighLevelPlan) -> Result<HighLevelPlan, HighLevelError> {
    let v = validate_plan(&plan);
    if v.is_empty() {
        Ok(plan)
    } else {
        Err(HighLevelError::Invalid(v))
    }
}

fn usable(steps: &[RawStep]) -> bool {
    !steps.is_empty()
        && steps.iter().all(|s| {
            !s.movement.trim().is_empty() && !s.initial_state.trim().is_empty() && !s.final_state.trim().is_empty()
        })
}

/// Renumber steps and make timing contiguous from 0, keeping each step's
/// duration.
pub fn repair_steps(raw: Vec<RawStep>, default_seconds: f64, warnings: &mut Vec<String>) -> Vec<HighLevelStep> {
    let mut out = Vec::with_capacity(raw.len());
    let mut cursor = 0.0;
    for (i, s) in raw.into_iter().enumerate() {
        let n = i as u32 + 1;
        if s.step_number != Some(n) {
            warn(warnings, format!("step {n}: renumbered from {:?}", s.step_number));
        }
        let duration = match s.time_range {
            Some((a, b)) if a.is_finite() && b.is_finite() && b > a => {
                if a != cursor {
                    warn(warnings, format!("Step{n}: timing repaired from [{a}, {b}] to start at {cursor}"));
                }
                b - a
            }
            other => {
                warn(warnings, format!("Step{n}: unusable time range {other:?}; using {default_seconds} s"));
                default_seconds
            }
        };
        out.push(HighLevelStep {
            step_number: n,
            time_range: [cursor, cursor + duration],
            movement: s.movement,
            initial_state: s.initial_state,
            final_state: s.final_state,
        });
        cursor += duration;
    }
    out
}

/// Parse a multi-step reply, re-asking on failure. Shared with raw mode.
pub(crate) fn ask_steps(
    session: &mut ChatSession,
    prompt: String,
    opts: &HighLevelOptions,
    warnings: &mut Vec<String>,
) -> Result<Vec<HighLevelStep>, HighLevelError> {
    let mut reply = session.send(&prompt)?;
    for attempt in 0..=opts.parse_retries {
        if let Some(raw) = parse::parse_in_one_go(&reply).filter(|s| usable(s)) {
            return Ok(repair_steps(raw, opts.default_step_seconds, warnings));
        }
        if attempt < opts.parse_retries {
            reply = session.send(&opts.notes.apply(prompts::NUDGE.to_string(), prompts::NOTE_IN_ONE_GO))?;
        }
    }
    Err(HighLevelError::Parse { what: "multi-step plan".into(), attempts: opts.parse_retries + 1, last_reply: reply })
}

pub fn plan_in_one_go(
    instr: &MotionInstruction,
    session: &mut ChatSession,
    opts: &HighLevelOptions,
) -> Result<HighLevelPlan, HighLevelError> {
    let mut warnings = Vec::new();
    let prompt = opts.notes.apply(prompts::in_one_go(&instr.text), prompts::NOTE_IN_ONE_GO);
    let steps = ask_steps(session, prompt, opts, &mut warnings)?;
    checked(HighLevelPlan { instruction: instr.clone(), strategy: HighStrategy::InOneGo, steps, warnings })
}

pub fn plan_high_level(
    strategy: HighStrategy,
    instr: &MotionInstruction,
    session: &mut ChatSession,
    opts: &HighLevelOptions,
) -> Result<HighLevelPlan, HighLevelError> {
    match strategy {
        HighStrategy::PieceByPiece => plan_piece_by_piece(instr, session, opts),
        HighStrategy::InOneGo => plan_in_one_go(instr, session, opts),
        HighStrategy::Manual => Err(HighLevelError::Invalid(vec![PlanViolation {
            step: None,
            rule: "manual plans are loaded from files, not generated".into(),
        }])),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{make_replay_client, ReplayScript, SessionFactory, SessionTags};

    fn session(replies: &[&str]) -> ChatSession {
        make_replay_client(ReplayScript::new(replies.iter().copied()), true)
            .new_session(SessionTags::default())
            .unwrap()
    }

    fn instr() -> MotionInstruction {
        MotionInstruction::new(3, "Look down to check the time of the watch on the left wrist.")
    }

    #[test]
    fn one_step_piece_by_piece() {
        let mut s = session(&["ok", "head tilts down", "head upright", "head down", "2.5 seconds", "Yes, it ends."]);
        let plan = plan_piece_by_piece(&instr(), &mut s, &HighLevelOptions::default()).unwrap();
        assert_eq!(plan.steps.len(), 1);
        assert_eq!(plan.steps[0].step_number, 1);
        assert_eq!(plan.steps[0].duration(), 2.5);
        assert_eq!(s.user_turns(), 6);
        assert!(validate_plan(&plan).is_empty());
    }

    #[test]
    fn bad_timing_defaults_with_warning() {
        let mut s = session(&["ok", "m", "i", "f", "a while", "no", "m2", "i2", "f2", "1", "yes"]);
        let plan = plan_piece_by_piece(&instr(), &mut s, &HighLevelOptions::default()).unwrap();
        assert_eq!(plan.steps[0].time_range, [0.0, 1.0]);
        assert_eq!(plan.steps[1].time_range, [1.0, 2.0]);
        assert_eq!(plan.warnings.len(), 1);
        assert_eq!(s.user_turns(), 1 + 5 * 2);
    }

    #[test]
    fn step_cap() {
        let replies: Vec<&str> = std::iter::once("ok").chain(std::iter::repeat_n(["m", "i", "f", "1", "no"], 3).flatten()).collect();
        let mut s = session(&replies);
        let opts = HighLevelOptions { step_cap: 3, ..Default::default() };
        assert!(matches!(plan_piece_by_piece(&instr(), &mut s, &opts), Err(HighLevelError::StepCapExceeded { cap: 3 })));
    }

    #[test]
    fn empty_text_is_re_asked_then_fails() {
        let mut s = session(&["ok", " ", "", "   "]);
        let err = plan_piece_by_piece(&instr(), &mut s, &HighLevelOptions::default()).unwrap_err();
        assert!(matches!(err, HighLevelError::Parse { attempts: 3, .. }));
    }

    #[test]
    fn in_one_go_gap_is_repaired() {
        let reply = r#"[{"step_number":1,"time_range":[0,1],"movement":"a","initial_state":"b","final_state":"c"},
                       {"step_number":2,"time_range":[2,3],"movement":"d","initial_state":"e","final_state":"f"}]"#;
        let mut s = session(&[reply]);
        let plan = plan_in_one_go(&instr(), &mut s, &HighLevelOptions::default()).unwrap();
        assert_eq!(plan.steps[1].time_range, [1.0, 2.0]);
        assert!(plan.warnings.iter().any(|w| w.contains("repaired")));
    }

    #[test]
    fn in_one_go_empty_reply_fails() {
        let mut s = session(&["", "", ""]);
        assert!(matches!(
            plan_in_one_go(&instr(), &mut s, &HighLevelOptions::default()),
            Err(HighLevelError::Parse { .. })
        ));
    }

    #[test]
    fn validation_rules() {
        let step = |n, a, b| HighLevelStep {
            step_number: n,
            time_range: [a, b],
            movement: "m".into(),
            initial_state: "i".into(),
            final_state: "f".into(),
        };
        let mut plan = HighLevelPlan { instruction: instr(), strategy: HighStrategy::Manual, steps: vec![step(1, 0.0, 1.0), step(3, 1.0, 2.0)], warnings: vec![] };
        assert!(validate_plan(&plan).iter().any(|v| v.rule == "non-consecutive step numbers"));
        plan.steps = vec![step(1, 0.0, 0.0)];
        assert!(validate_plan(&plan).iter().any(|v| v.rule == "non-positive duration"));
    }

    #[test]
    fn plan_file_round_trip() {
        let mut s = session(&["ok", "m", "i", "f", "2", "yes"]);
        let plan = plan_piece_by_piece(&instr(), &mut s, &HighLevelOptions::default()).unwrap();
        assert_eq!(HighLevelPlan::from_json_str(&plan.to_json_string()).unwrap(), plan);
        let text = plan.to_json_string();
        assert!(text.contains("\"step_number\": 1") && text.contains("\"time_range\""));
    }
}
