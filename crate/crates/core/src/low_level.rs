//! Per-step body-part position selection, self-reflection, and the
//! raw joint-parameter mode.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::high_level::{self, validate_plan, HighLevelError, HighLevelOptions, HighLevelPlan, HighLevelStep, MotionInstruction};
use crate::llm::{ChatSession, LlmError, SessionFactory, SessionTags};
use crate::parse::{self, OptionMatch};
use crate::prompts::{self, FormatNotes};
use crate::skeleton::{EulerRotationDeg, Skeleton, Vec3};
use crate::taxonomy::{BodyPartId, OptionTarget, PoseTaxonomy, MAX_TREE_DEPTH};

pub const NEUTRAL: &str = "neutral";

#[derive(Debug, Error)]
pub enum LowLevelError {
    #[error("high-level plan is not usable: {0}")]
    HighLevel(#[from] HighLevelError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LowStrategy {
    Hierarchical,
    OneByOne,
    All,
}

impl LowStrategy {
    pub const ALL_STRATEGIES: [LowStrategy; 3] = [LowStrategy::Hierarchical, LowStrategy::OneByOne, LowStrategy::All];

    pub fn as_str(self) -> &'static str {
        match self {
            LowStrategy::Hierarchical => "hierarchical",
            LowStrategy::OneByOne => "one_by_one",
            LowStrategy::All => "all",
        }
    }
}

impl fmt::Display for LowStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for LowStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL_STRATEGIES
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| format!("unknown low-level strategy `{s}`"))
    }
}

/// How a cell's position was chosen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub strategy: LowStrategy,
    /// Option labels taken through the decision tree (hierarchical only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub path: Vec<String>,
    /// Index into the part's position list (one_by_one and all).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub option_index: Option<usize>,
    pub corrected: bool,
    /// Selection failed and `neutral` was used.
    #[serde(default)]
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepPoseAssignment {
    pub step_number: u32,
    pub positions: BTreeMap<BodyPartId, String>,
    #[serde(default)]
    pub provenance: BTreeMap<BodyPartId, Provenance>,
}

impl StepPoseAssignment {
    /// Step-0 context: every part neutral.
    pub fn neutral(step_number: u32) -> Self {
        StepPoseAssignment {
            step_number,
            positions: BodyPartId::ALL.iter().map(|p| (*p, NEUTRAL.to_string())).collect(),
            provenance: BTreeMap::new(),
        }
    }

    pub fn position(&self, part: BodyPartId) -> &str {
        self.positions.get(&part).map(String::as_str).unwrap_or(NEUTRAL)
    }

    pub fn is_total(&self, taxonomy: &PoseTaxonomy) -> bool {
        BodyPartId::ALL
            .iter()
            .all(|p| self.positions.get(p).is_some_and(|t| taxonomy.contains(*p, t)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReflectionEvent {
    pub step_number: u32,
    pub part: BodyPartId,
    pub position_before: String,
    pub position_after: String,
    pub analysis: String,
    pub judgement: String,
    pub corrected: bool,
}

pub const ANIMATION_PLAN_SCHEMA: &str = "animation-plan/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnimationPlan {
    pub schema: String,
    pub high_level: HighLevelPlan,
    pub strategy: LowStrategy,
    pub reflection: bool,
    pub frames: Vec<StepPoseAssignment>,
    #[serde(default)]
    pub reflections: Vec<ReflectionEvent>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl AnimationPlan {
    pub fn motion_id(&self) -> u32 {
        self.high_level.instruction.id
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes") + "\n"
    }

    pub fn from_json_str(s: &str) -> Result<Self, LowLevelError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, LowLevelError> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// Build a plan directly from position maps, e.g. for fixtures.
    pub fn from_frames(high_level: HighLevelPlan, strategy: LowStrategy, frames: Vec<StepPoseAssignment>) -> Self {
        AnimationPlan {
            schema: ANIMATION_PLAN_SCHEMA.into(),
            high_level,
            strategy,
            reflection: false,
            frames,
            reflections: Vec::new(),
            warnings: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LowLevelOptions {
    pub strategy: LowStrategy,
    pub reflection: bool,
    pub notes: FormatNotes,
    /// Re-asks after an unmatched or ambiguous choice.
    pub choice_retries: u32,
}

impl Default for LowLevelOptions {
    fn default() -> Self {
        LowLevelOptions { strategy: LowStrategy::Hierarchical, reflection: true, notes: FormatNotes::On, choice_retries: 1 }
    }
}

/// Everything a step assignment needs besides the session.
pub struct StepContext<'a> {
    pub instruction: &'a MotionInstruction,
    pub step: &'a HighLevelStep,
    pub prev: &'a StepPoseAssignment,
    pub taxonomy: &'a PoseTaxonomy,
    pub options: &'a LowLevelOptions,
}

#[derive(Debug, Clone, Default)]
pub struct StepOutcome {
    pub assignment: Option<StepPoseAssignment>,
    pub reflections: Vec<ReflectionEvent>,
    pub warnings: Vec<String>,
}

struct Selection {
    token: String,
    path: Vec<String>,
    option_index: Option<usize>,
    fallback: bool,
}

impl Selection {
    fn neutral_fallback() -> Self {
        Selection { token: NEUTRAL.into(), path: Vec::new(), option_index: Some(0), fallback: true }
    }
}

fn warn(warnings: &mut Vec<String>, msg: String) {
    log::warn!("{msg}");
    warnings.push(msg);
}

fn choose(
    session: &mut ChatSession,
    prompt: String,
    aliases: &[(String, String)],
    labels: &[&str],
    ctx: &StepContext,
) -> Result<Option<String>, LowLevelError> {
    let mut reply = session.send(&ctx.options.notes.apply(prompt, prompts::NOTE_CHOICE))?;
    for attempt in 0..=ctx.options.choice_retries {
        if let OptionMatch::Unique(label) = parse::match_option(&reply, aliases) {
            return Ok(Some(label));
        }
        if attempt < ctx.options.choice_retries {
            reply = session.send(&ctx.options.notes.apply(prompts::choice_nudge(labels), prompts::NOTE_CHOICE))?;
        }
    }
    Ok(None)
}

fn select_hierarchical(
    session: &mut ChatSession,
    part: BodyPartId,
    ctx: &StepContext,
    warnings: &mut Vec<String>,
) -> Result<Selection, LowLevelError> {
    let tree = ctx.taxonomy.decision_tree(part);
    let mut node = tree.root();
    let mut path = Vec::new();
    for _ in 0..MAX_TREE_DEPTH {
        let aliases = prompts::option_aliases(tree, node);
        let labels: Vec<&str> = node.labels().collect();
        let Some(label) = choose(session, prompts::hierarchical_choice(node), &aliases, &labels, ctx)? else {
            warn(warnings, format!("Step{} {part}: no usable option among {labels:?}; using neutral", ctx.step.step_number));
            return Ok(Selection::neutral_fallback());
        };
        path.push(label.clone());
        match node.target(&label) {
            Some(OptionTarget::Position(tok)) => {
                return Ok(Selection { token: tok.clone(), path, option_index: None, fallback: false })
            }
            Some(OptionTarget::Node(id)) => match tree.node(*id) {
                Some(n) => node = n,
                None => break,
            },
            None => break,
        }
    }
    warn(warnings, format!("Step{} {part}: decision tree walk did not reach a leaf; using neutral", ctx.step.step_number));
    Ok(Selection::neutral_fallback())
}

fn select_one_by_one(
    session: &mut ChatSession,
    part: BodyPartId,
    ctx: &StepContext,
    warnings: &mut Vec<String>,
) -> Result<Selection, LowLevelError> {
    let positions = ctx.taxonomy.positions_for(part);
    let last_token = ctx.prev.position(part);
    let last = ctx.taxonomy.position(part, last_token).unwrap_or(&positions[0]);
    for (i, candidate) in positions.iter().enumerate() {
        let prompt = ctx.options.notes.apply(prompts::one_by_one_choice(part, last, candidate), prompts::NOTE_YES_NO);
        let reply = session.send(&prompt)?;
        if parse::parse_yes_no(&reply) == Some(true) {
            return Ok(Selection { token: candidate.id.clone(), path: Vec::new(), option_index: Some(i), fallback: false });
        }
    }
    warn(warnings, format!("Step{} {part}: no candidate affirmed; using neutral", ctx.step.step_number));
    Ok(Selection::neutral_fallback())
}

fn select_all(
    session: &mut ChatSession,
    part: BodyPartId,
    ctx: &StepContext,
    warnings: &mut Vec<String>,
) -> Result<Selection, LowLevelError> {
    let positions = ctx.taxonomy.positions_for(part);
    let aliases: Vec<(String, String)> = positions.iter().map(|p| (p.id.clone(), p.id.clone())).collect();
    let labels: Vec<&str> = positions.iter().map(|p| p.id.as_str()).collect();
    let prompt = prompts::all_choice(part, positions, ctx.prev.position(part));
    match choose(session, prompt, &aliases, &labels, ctx)? {
        Some(tok) => {
            let idx = positions.iter().position(|p| p.id == tok);
            Ok(Selection { token: tok, path: Vec::new(), option_index: idx, fallback: false })
        }
        None => {
            warn(warnings, format!("Step{} {part}: no usable position named; using neutral", ctx.step.step_number));
            Ok(Selection::neutral_fallback())
        }
    }
}

fn select(
    session: &mut ChatSession,
    part: BodyPartId,
    ctx: &StepContext,
    warnings: &mut Vec<String>,
) -> Result<Selection, LowLevelError> {
    match ctx.options.strategy {
        LowStrategy::Hierarchical => select_hierarchical(session, part, ctx, warnings),
        LowStrategy::OneByOne => select_one_by_one(session, part, ctx, warnings),
        LowStrategy::All => select_all(session, part, ctx, warnings),
    }
}

/// Analysis, judgement and at most one correction round for one part.
/// Returns the final selection and the event.
fn reflect_and_correct(
    session: &mut ChatSession,
    part: BodyPartId,
    candidate: Selection,
    ctx: &StepContext,
    warnings: &mut Vec<String>,
) -> Result<(Selection, ReflectionEvent), LowLevelError> {
    let n = ctx.step.step_number;
    let analysis = session.send(&prompts::reflection_analysis())?;
    let judgement = session.send(&ctx.options.notes.apply(prompts::reflection_judgement(), prompts::NOTE_JUDGEMENT))?;
    let before = candidate.token.clone();
    let mut event = ReflectionEvent {
        step_number: n,
        part,
        position_before: before.clone(),
        position_after: before.clone(),
        analysis,
        judgement: judgement.clone(),
        corrected: false,
    };
    match parse::parse_judgement(&judgement) {
        Some(true) => {
            let reflection = strip_json_blocks(&judgement);
            let reflection = reflection.trim().trim_end_matches(['.', '!']).trim();
            session.send(&prompts::correction(reflection, part, &before, n))?;
            let reselected = select(session, part, ctx, warnings)?;
            event.position_after = reselected.token.clone();
            event.corrected = reselected.token != before;
            Ok((reselected, event))
        }
        Some(false) => Ok((candidate, event)),
        None => {
            warn(warnings, format!("Step{n} {part}: unparseable reflection judgement; keeping {before}"));
            Ok((candidate, event))
        }
    }
}

fn strip_json_blocks(text: &str) -> String {
    static FENCE: OnceLock<Regex> = OnceLock::new();
    FENCE.get_or_init(|| Regex::new(r"(?s)```.*?```").expect("static regex")).replace_all(text, "").into_owned()
}

/// Assign one position per part for a step using the configured strategy.
pub fn assign_step(session: &mut ChatSession, ctx: &StepContext) -> Result<StepOutcome, LowLevelError> {
    let mut out = StepOutcome::default();
    let step = ctx.step;
    session.send(&prompts::step_setup(
        &ctx.instruction.text,
        step.step_number,
        &step.initial_state,
        &step.final_state,
        &step.movement,
    ))?;
    let mut assignment = StepPoseAssignment {
        step_number: step.step_number,
        positions: BTreeMap::new(),
        provenance: BTreeMap::new(),
    };
    for part in BodyPartId::ALL {
        let last_token = ctx.prev.position(part);
        let positions = ctx.taxonomy.positions_for(part);
        let last = ctx.taxonomy.position(part, last_token).unwrap_or(&positions[0]);
        session.send(&prompts::language_description(part, last, step.step_number))?;
        let mut selection = select(session, part, ctx, &mut out.warnings)?;
        let mut corrected = false;
        if ctx.options.reflection {
            let (s, event) = reflect_and_correct(session, part, selection, ctx, &mut out.warnings)?;
            selection = s;
            corrected = event.corrected;
            out.reflections.push(event);
        }
        if !ctx.taxonomy.contains(part, &selection.token) {
            warn(&mut out.warnings, format!("Step{} {part}: invalid token {}; using neutral", step.step_number, selection.token));
            selection = Selection::neutral_fallback();
        }
        assignment.provenance.insert(
            part,
            Provenance {
                strategy: ctx.options.strategy,
                path: selection.path,
                option_index: selection.option_index,
                corrected,
                fallback: selection.fallback,
            },
        );
        assignment.positions.insert(part, selection.token);
    }
    out.assignment = Some(assignment);
    Ok(out)
}

fn with_strategy(opts: &LowLevelOptions, strategy: LowStrategy) -> LowLevelOptions {
    LowLevelOptions { strategy, ..opts.clone() }
}

pub fn assign_hierarchical(
    session: &mut ChatSession,
    instruction: &MotionInstruction,
    step: &HighLevelStep,
    prev: &StepPoseAssignment,
    opts: &LowLevelOptions,
) -> Result<StepOutcome, LowLevelError> {
    let options = with_strategy(opts, LowStrategy::Hierarchical);
    let ctx = StepContext { instruction, step, prev, taxonomy: PoseTaxonomy::bundled(), options: &options };
    assign_step(session, &ctx)
}

pub fn assign_one_by_one(
    session: &mut ChatSession,
    instruction: &MotionInstruction,
    step: &HighLevelStep,
    prev: &StepPoseAssignment,
    opts: &LowLevelOptions,
) -> Result<StepOutcome, LowLevelError> {
    let options = with_strategy(opts, LowStrategy::OneByOne);
    let ctx = StepContext { instruction, step, prev, taxonomy: PoseTaxonomy::bundled(), options: &options };
    assign_step(session, &ctx)
}

pub fn assign_all(
    session: &mut ChatSession,
    instruction: &MotionInstruction,
    step: &HighLevelStep,
    prev: &StepPoseAssignment,
    opts: &LowLevelOptions,
) -> Result<StepOutcome, LowLevelError> {
    let options = with_strategy(opts, LowStrategy::All);
    let ctx = StepContext { instruction, step, prev, taxonomy: PoseTaxonomy::bundled(), options: &options };
    assign_step(session, &ctx)
}

/// Fold step assignments over the plan on one session.
pub fn build_animation_plan_with_session(
    high: &HighLevelPlan,
    opts: &LowLevelOptions,
    taxonomy: &PoseTaxonomy,
    session: &mut ChatSession,
) -> Result<AnimationPlan, LowLevelError> {
    let violations = validate_plan(high);
    if !violations.is_empty() {
        return Err(HighLevelError::Invalid(violations).into());
    }
    let mut plan = AnimationPlan {
        schema: ANIMATION_PLAN_SCHEMA.into(),
        high_level: high.clone(),
        strategy: opts.strategy,
        reflection: opts.reflection,
        frames: Vec::with_capacity(high.steps.len()),
        reflections: Vec::new(),
        warnings: Vec::new(),
    };
    let mut prev = StepPoseAssignment::neutral(0);
    for step in &high.steps {
        let ctx = StepContext { instruction: &high.instruction, step, prev: &prev, taxonomy, options: opts };
        let outcome = assign_step(session, &ctx)?;
        let assignment = outcome.assignment.expect("assign_step always assigns");
        plan.reflections.extend(outcome.reflections);
        plan.warnings.extend(outcome.warnings);
        prev = assignment.clone();
        plan.frames.push(assignment);
    }
    Ok(plan)
}

/// Open a fresh session from `factory` and build the plan on it.
pub fn build_animation_plan<F: SessionFactory + ?Sized>(
    high: &HighLevelPlan,
    opts: &LowLevelOptions,
    factory: &F,
) -> Result<AnimationPlan, LowLevelError> {
    let mut session = factory.new_session(SessionTags::new(opts.strategy.as_str(), Some(high.instruction.id)))?;
    build_animation_plan_with_session(high, opts, PoseTaxonomy::bundled(), &mut session)
}

// Raw-parameter mode.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawJointDelta {
    pub joint: String,
    pub direction: String,
    pub delta: EulerRotationDeg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawStep {
    pub step_number: u32,
    pub time_range: [f64; 2],
    pub joints: Vec<RawJointDelta>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root_translation: Option<Vec3>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root_rotation: Option<EulerRotationDeg>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

pub const RAW_PLAN_SCHEMA: &str = "raw-joint-plan/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawJointPlan {
    pub schema: String,
    pub instruction: MotionInstruction,
    pub steps: Vec<RawStep>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl RawJointPlan {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes") + "\n"
    }

    pub fn from_json_str(s: &str) -> Result<Self, LowLevelError> {
        Ok(serde_json::from_str(s)?)
    }
}

pub const ANATOMICAL_BOUND_DEG: f64 = 180.0;

fn vec3(v: &Value) -> Option<[f64; 3]> {
    let a = v.as_array()?;
    if a.len() != 3 {
        return None;
    }
    let mut out = [0.0; 3];
    for (o, x) in out.iter_mut().zip(a) {
        *o = x.as_f64().filter(|f| f.is_finite())?;
    }
    Some(out)
}

fn axis_index(text: &str) -> Option<usize> {
    static AXIS: OnceLock<Regex> = OnceLock::new();
    let r = AXIS.get_or_init(|| Regex::new(r"(?i)\b(?:about|around|along|on)\s+(?:the\s+|its\s+)?([xyz])\b|\b([xyz])[\s-]*axis\b").expect("static regex"));
    let c = r.captures(text)?;
    let m = c.get(1).or_else(|| c.get(2))?.as_str().to_ascii_lowercase();
    Some(match m.as_str() {
        "x" => 0,
        "y" => 1,
        _ => 2,
    })
}

/// Parse the quantities reply of one raw step.
pub fn parse_raw_quantities(
    reply: &str,
    directions: &str,
    skeleton: &Skeleton,
    warnings: &mut Vec<String>,
    step_number: u32,
) -> (Vec<RawJointDelta>, Option<Vec3>, Option<EulerRotationDeg>) {
    let mut joints = Vec::new();
    if let Some(v) = parse::extract_json(reply) {
        let list = v.get("joints").and_then(Value::as_array).cloned().unwrap_or_default();
        for item in list {
            let name = item.get("joint").and_then(Value::as_str).unwrap_or("").to_string();
            if !skeleton.contains(&name) {
                warn(warnings, format!("Step{step_number}: dropping unknown joint {name:?}"));
                continue;
            }
            let Some(r) = item.get("rotation").and_then(vec3) else {
                warn(warnings, format!("Step{step_number}: dropping {name}: rotation is not three finite numbers"));
                continue;
            };
            let direction = item
                .get("direction")
                .and_then(Value::as_str)
                .map(str::to_string)
                .unwrap_or_else(|| directions.trim().to_string());
            joints.push(RawJointDelta { joint: name, direction, delta: EulerRotationDeg::new(r[0], r[1], r[2]) });
        }
        let root_t = v.get("root_translation").and_then(vec3);
        let root_r = v.get("root_rotation").and_then(vec3).map(|r| EulerRotationDeg::new(r[0], r[1], r[2]));
        return (joints, root_t, root_r);
    }
    // Prose: "m_avg_L_Elbow: +90 degrees about y".
    static JOINT_LINE: OnceLock<Regex> = OnceLock::new();
    let line_re = JOINT_LINE.get_or_init(|| Regex::new(r"(m_avg_[A-Za-z0-9_]+)[^\n]*?([+-]?\d+(?:\.\d+)?)\s*(?:°|deg|degrees?)").expect("static regex"));
    for line in reply.lines() {
        let Some(c) = line_re.captures(line) else { continue };
        let name = c[1].to_string();
        if !skeleton.contains(&name) {
            warn(warnings, format!("Step{step_number}: dropping unknown joint {name:?}"));
            continue;
        }
        let Ok(value) = c[2].parse::<f64>() else {
            warn(warnings, format!("Step{step_number}: dropping {name}: unreadable angle"));
            continue;
        };
        let axis = axis_index(line).unwrap_or_else(|| {
            warn(warnings, format!("Step{step_number}: {name}: no axis named; assuming the bend axis y"));
            1
        });
        let mut d = [0.0; 3];
        d[axis] = value;
        joints.push(RawJointDelta { joint: name, direction: line.trim().to_string(), delta: EulerRotationDeg::new(d[0], d[1], d[2]) });
    }
    (joints, parse_root_translation(reply), None)
}

/// "move forward 2 meters" style root displacement in world axes.
pub fn parse_root_translation(text: &str) -> Option<Vec3> {
    static MOVE: OnceLock<Regex> = OnceLock::new();
    let r = MOVE.get_or_init(|| {
        Regex::new(r"(?i)\b(forward|forwards|backward|backwards|back|left|right|up|upward|down|downward)\s+(?:by\s+)?(\d+(?:\.\d+)?)\s*(?:m|meters?|metres?)\b")
            .expect("static regex")
    });
    let mut out = [0.0; 3];
    let mut any = false;
    for c in r.captures_iter(text) {
        let d: f64 = c[2].parse().ok()?;
        any = true;
        match c[1].to_lowercase().as_str() {
            "forward" | "forwards" => out[2] += d,
            "backward" | "backwards" | "back" => out[2] -= d,
            "left" => out[0] += d,
            "right" => out[0] -= d,
            "up" | "upward" => out[1] += d,
            _ => out[1] -= d,
        }
    }
    any.then_some(out)
}

fn flag_bounds(step: &mut RawStep) {
    for j in &step.joints {
        if j.delta.max_abs() > ANATOMICAL_BOUND_DEG {
            step.flags.push(format!("{} exceeds anatomical bound", j.joint));
        }
    }
    if step.root_rotation.is_some_and(|r| r.max_abs() > ANATOMICAL_BOUND_DEG) {
        step.flags.push("root rotation exceeds anatomical bound".into());
    }
}

/// Plan raw joint deltas: a timed decomposition first, then per step the
/// relevant joints, their directions, and the quantities.
pub fn plan_raw_parameters(
    instr: &MotionInstruction,
    session: &mut ChatSession,
    skeleton: &Skeleton,
    opts: &HighLevelOptions,
) -> Result<RawJointPlan, LowLevelError> {
    let mut warnings = Vec::new();
    let prompt = format!("{}\n\n{}", prompts::raw_setup(skeleton), prompts::in_one_go(&instr.text));
    let prompt = opts.notes.apply(prompt, prompts::NOTE_IN_ONE_GO);
    let steps = high_level::ask_steps(session, prompt, opts, &mut warnings)?;
    let mut out = Vec::with_capacity(steps.len());
    for s in &steps {
        let n = s.step_number;
        session.send(&prompts::raw_joints(n))?;
        let directions = session.send(&prompts::raw_directions(n))?;
        let reply = session.send(&opts.notes.apply(prompts::raw_quantities(n), prompts::NOTE_RAW_QUANTITIES))?;
        let (joints, root_translation, root_rotation) = parse_raw_quantities(&reply, &directions, skeleton, &mut warnings, n);
        let mut step = RawStep { step_number: n, time_range: s.time_range, joints, root_translation, root_rotation, flags: Vec::new() };
        flag_bounds(&mut step);
        for f in &step.flags {
            warn(&mut warnings, format!("Step{n}: {f}"));
        }
        out.push(step);
    }
    Ok(RawJointPlan { schema: RAW_PLAN_SCHEMA.into(), instruction: instr.clone(), steps: out, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::high_level::HighStrategy;
    use crate::llm::{last_user, make_replay_client, FnClient, ReplayScript, UNSCRIPTED};

    fn high() -> HighLevelPlan {
        HighLevelPlan {
            instruction: MotionInstruction::new(3, "Look down to check the time of the watch on the left wrist."),
            strategy: HighStrategy::Manual,
            steps: vec![HighLevelStep {
                step_number: 1,
                time_range: [0.0, 2.0],
                movement: "tilt head down, raise left forearm".into(),
                initial_state: "upright".into(),
                final_state: "looking at the watch".into(),
            }],
            warnings: vec![],
        }
    }

    fn no_reflection(strategy: LowStrategy) -> LowLevelOptions {
        LowLevelOptions { strategy, reflection: false, ..Default::default() }
    }

    /// Answers "straight"/"neutral"-style root options, except LeftElbow.
    fn elbow_responder(msgs: &[crate::llm::Message]) -> String {
        let q = last_user(msgs);
        if q.contains("left elbow stright or bent") {
            return "**bent**".into();
        }
        if q.contains("Is the left elbow slightly bent in") {
            return "bent_in_90_degrees".into();
        }
        if q.contains("Choose one from") {
            return "```json\n{\"choice\": \"neutral\"}\n```".into();
        }
        "ok".into()
    }

    #[test]
    fn hierarchical_walk() {
        let client = FnClient::new(elbow_responder);
        let plan = build_animation_plan(&high(), &no_reflection(LowStrategy::Hierarchical), &client).unwrap();
        let f = &plan.frames[0];
        assert_eq!(f.position(BodyPartId::LeftElbow), "bent_in_90_degrees");
        assert_eq!(f.provenance[&BodyPartId::LeftElbow].path, ["bent", "bent_in_90_degrees"]);
        assert_eq!(f.position(BodyPartId::RightElbow), NEUTRAL);
        assert_eq!(f.provenance[&BodyPartId::RightElbow].path, ["straight"]);
        assert!(f.is_total(PoseTaxonomy::bundled()));
    }

    #[test]
    fn all_neutral_root_short_circuit() {
        let client = FnClient::new(|m| if last_user(m).contains("Choose one from") { "neutral".into() } else { "ok".into() });
        let mut session = client.new_session(SessionTags::default()).unwrap();
        let plan = build_animation_plan_with_session(&high(), &no_reflection(LowStrategy::Hierarchical), PoseTaxonomy::bundled(), &mut session).unwrap();
        assert!(plan.frames[0].positions.values().all(|t| t == NEUTRAL));
        let choice_prompts = session.history().iter().filter(|m| m.content.contains("Choose one from")).count();
        assert_eq!(choice_prompts, 16);
    }

    #[test]
    fn one_by_one_takes_first_yes() {
        let client = FnClient::new(|m| {
            let q = last_user(m);
            if q.starts_with("The last position of LeftKnee") && q.contains("Is the next position **slightly_bent**") {
                "Yes.".into()
            } else {
                "No.".into()
            }
        });
        let mut session = client.new_session(SessionTags::default()).unwrap();
        let plan = build_animation_plan_with_session(&high(), &no_reflection(LowStrategy::OneByOne), PoseTaxonomy::bundled(), &mut session).unwrap();
        let f = &plan.frames[0];
        assert_eq!(f.position(BodyPartId::LeftKnee), "slightly_bent");
        assert_eq!(f.provenance[&BodyPartId::LeftKnee].option_index, Some(1));
        assert!(f.provenance[&BodyPartId::Head].fallback);
        assert!(plan.warnings.iter().any(|w| w.contains("Head")));
        let knee_questions = session
            .history()
            .iter()
            .filter(|m| m.content.starts_with("The last position of LeftKnee") && m.content.contains("Is the next position"))
            .count();
        assert_eq!(knee_questions, 2);
    }

    #[test]
    fn all_strategy_and_foreign_tokens() {
        let client = FnClient::new(|m| {
            let q = last_user(m);
            if q.starts_with("There are multiple possible positions for RightKnee") {
                "**bent_at_90_degrees**".into()
            } else if q.starts_with("There are multiple possible positions for LeftElbow")
                || (q.starts_with(prompts::NUDGE) && q.contains("slightly_bent_in"))
            {
                // A knee token is not an elbow option, even when re-asked.
                "**bent_at_90_degrees**".into()
            } else {
                "neutral".into()
            }
        });
        let plan = build_animation_plan(&high(), &no_reflection(LowStrategy::All), &client).unwrap();
        let f = &plan.frames[0];
        assert_eq!(f.position(BodyPartId::RightKnee), "bent_at_90_degrees");
        assert_eq!(f.position(BodyPartId::LeftElbow), NEUTRAL);
        assert!(f.provenance[&BodyPartId::LeftElbow].fallback);
    }

    #[test]
    fn reflection_corrects_once() {
        let client = FnClient::new(|m| {
            let q = last_user(m);
            let corrected = m.iter().any(|x| x.content.starts_with("You think that") && x.content.contains("LeftElbow"));
            if q.contains("left elbow stright or bent") {
                return if corrected { "bent".into() } else { "straight".into() };
            }
            if q.contains("Is the left elbow slightly bent in") {
                return "fully_bent".into();
            }
            if q.starts_with("Do you think there's need to replan") {
                let last_part = m.iter().rev().find(|x| x.content.starts_with("The last position of")).unwrap();
                return if last_part.content.contains("LeftElbow") { "Yes, we should replan it.".into() } else { "No need to replan.".into() };
            }
            if q.contains("Choose one from") {
                return "neutral".into();
            }
            "ok".into()
        });
        let plan = build_animation_plan(&high(), &LowLevelOptions::default(), &client).unwrap();
        assert_eq!(plan.frames[0].position(BodyPartId::LeftElbow), "fully_bent");
        assert!(plan.frames[0].provenance[&BodyPartId::LeftElbow].corrected);
        let ev: Vec<_> = plan.reflections.iter().filter(|e| e.corrected).collect();
        assert_eq!(ev.len(), 1);
        assert_eq!((ev[0].position_before.as_str(), ev[0].position_after.as_str()), ("neutral", "fully_bent"));
        assert_eq!(plan.reflections.len(), 16);
    }

    #[test]
    fn reflection_no_op_is_not_a_correction() {
        let client = FnClient::new(|m| {
            let q = last_user(m);
            if q.starts_with("Do you think there's need to replan") {
                "We need to replan.".into()
            } else if q.contains("Choose one from") {
                "neutral".into()
            } else {
                "ok".into()
            }
        });
        let plan = build_animation_plan(&high(), &LowLevelOptions::default(), &client).unwrap();
        assert!(plan.reflections.iter().all(|e| !e.corrected && e.position_before == e.position_after));
    }

    #[test]
    fn garbage_is_total() {
        for strategy in LowStrategy::ALL_STRATEGIES {
            let client = make_replay_client(ReplayScript::default(), false);
            let opts = LowLevelOptions { strategy, ..Default::default() };
            let plan = build_animation_plan(&high(), &opts, &client).unwrap();
            assert!(plan.frames[0].is_total(PoseTaxonomy::bundled()), "{strategy}");
            assert!(!plan.warnings.is_empty());
        }
        assert_eq!(UNSCRIPTED, "UNSCRIPTED");
    }

    #[test]
    fn paired_parts_are_queried_adjacently() {
        let client = FnClient::new(|_| "neutral".into());
        let mut session = client.new_session(SessionTags::default()).unwrap();
        build_animation_plan_with_session(&high(), &no_reflection(LowStrategy::All), PoseTaxonomy::bundled(), &mut session).unwrap();
        let order: Vec<&str> = session
            .history()
            .iter()
            .filter_map(|m| m.content.strip_prefix("The last position of "))
            .map(|s| s.split(' ').next().unwrap())
            .collect();
        let expected: Vec<&str> = BodyPartId::ALL.iter().map(|p| p.as_str()).collect();
        assert_eq!(order, expected);
    }

    #[test]
    fn raw_mode_parses_json_and_prose() {
        let sk = Skeleton::bundled();
        let mut w = Vec::new();
        let reply = "```json\n{\"joints\": [{\"joint\": \"m_avg_L_Elbow\", \"direction\": \"bend\", \"rotation\": [0, 90, 0]}, {\"joint\": \"m_avg_Tail\", \"rotation\": [1,2,3]}], \"root_translation\": [0, 0, 2]}\n```";
        let (j, t, r) = parse_raw_quantities(reply, "", sk, &mut w, 1);
        assert_eq!(j.len(), 1);
        assert_eq!(j[0].delta, EulerRotationDeg::new(0.0, 90.0, 0.0));
        assert_eq!(t, Some([0.0, 0.0, 2.0]));
        assert!(r.is_none());
        assert_eq!(w.len(), 1);

        let (j, t, _) = parse_raw_quantities("m_avg_L_Elbow: +90 degrees about y\nThe avatar moves forward 2 meters.", "", sk, &mut w, 1);
        assert_eq!(j[0].delta, EulerRotationDeg::new(0.0, 90.0, 0.0));
        assert_eq!(t, Some([0.0, 0.0, 2.0]));
    }

    #[test]
    fn raw_mode_flags_exaggeration() {
        let steps = r#"[{"step_number":1,"time_range":[0,1],"movement":"m","initial_state":"i","final_state":"f"}]"#;
        let q = "```json\n{\"joints\": [{\"joint\": \"m_avg_L_Elbow\", \"direction\": \"bend\", \"rotation\": [0, 400, 0]}]}\n```";
        let client = make_replay_client(ReplayScript::new([steps, "elbow", "bend", q]), true);
        let mut s = client.new_session(SessionTags::default()).unwrap();
        let plan = plan_raw_parameters(&high().instruction, &mut s, Skeleton::bundled(), &HighLevelOptions::default()).unwrap();
        assert_eq!(plan.steps[0].joints[0].delta.y, 400.0);
        assert_eq!(plan.steps[0].flags, ["m_avg_L_Elbow exceeds anatomical bound"]);
    }
}
