//! Run directories and the commands that fill them.
//!
//! Layout of one run:
//!
//! ```text
//! <run>/manifest.json
//! <run>/transcripts/motion-NN.{high,low,raw}.json
//! <run>/plans/motion-NN.json        high-level plans
//! <run>/plans_low/motion-NN.json    animation or raw-joint plans
//! <run>/clips/motion-NN.clip.json   (+ .bvh, + oracle/)
//! <run>/eval/motion-NN.json
//! <run>/ratings/*.jsonl
//! ```
//!
//! With more than one run, each lives in `<root>/run-K/` with its own manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compiler::{self, AnimationClip, CompileError, ExportFormat, RawCompileOptions};
use crate::corpus::Corpus;
use crate::eval::{
    self, aggregate_bpq, average_pairwise_agreement, kappa_matrix, BpqGroup, BpqShare, EvalError, EvaluationRecord,
    KappaMatrix, KappaWeighting, OracleAnnotation, RatingRecord, RunSummary, TargetKind, BPQ_GROUPS,
    EVAL_RECORD_SCHEMA,
};
use crate::high_level::{plan_high_level, HighLevelOptions, HighLevelPlan, HighStrategy, MotionInstruction};
use crate::llm::{
    make_replay_client, record_transcript, ChatSession, HttpClient, LlmConfig, LlmError, ReplayScript, SessionFactory,
    SessionTags, Transcript,
};
use crate::low_level::{
    build_animation_plan_with_session, plan_raw_parameters, AnimationPlan, LowLevelOptions, LowStrategy, RawJointPlan,
    ANIMATION_PLAN_SCHEMA, RAW_PLAN_SCHEMA,
};
use crate::prompts::FormatNotes;
use crate::skeleton::{RuleTable, Skeleton};
use crate::taxonomy::PoseTaxonomy;

pub const MANIFEST_SCHEMA: &str = "run-manifest/1";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const DEFAULT_ANNOTATION_SEED: u64 = 20240601;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("run directory {0} already holds a manifest")]
    AlreadyExists(PathBuf),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// `motion-03` style stem shared by every per-motion file.
pub fn motion_stem(id: u32) -> String {
    format!("motion-{id:02}")
}

fn motion_id_of(path: &Path) -> Option<u32> {
    let name = path.file_name()?.to_str()?;
    let rest = name.strip_prefix("motion-")?;
    let digits: String = rest.chars().take_while(|c| c.is_ascii_digit()).collect();
    digits.parse().ok()
}

/// Reads an LLM config from a `.toml` or `.json` file.
pub fn load_llm_config(path: &Path) -> Result<LlmConfig, RunError> {
    let text = std::fs::read_to_string(path)?;
    let cfg: LlmConfig = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text)?
    } else {
        toml::from_str(&text).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?
    };
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Versions {
    pub taxonomy: String,
    pub rules: String,
    pub skeleton: String,
}

impl Versions {
    pub fn bundled() -> Self {
        Versions {
            taxonomy: PoseTaxonomy::bundled().version.clone(),
            rules: RuleTable::bundled().version.clone(),
            skeleton: Skeleton::bundled().version.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionState {
    Ok,
    /// The high-level plan exists but the low-level stage failed.
    Partial,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionStatus {
    pub motion_id: u32,
    pub state: MotionState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan_low: Option<String>,
    #[serde(default)]
    pub transcripts: Vec<String>,
    #[serde(default)]
    pub warnings: usize,
}

/// Human-evaluation protocol settings used by the annotation service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnotationProtocol {
    pub seed: u64,
    pub raters_per_animation: usize,
    pub raters_per_plan: usize,
}

impl Default for AnnotationProtocol {
    fn default() -> Self {
        AnnotationProtocol { seed: DEFAULT_ANNOTATION_SEED, raters_per_animation: 5, raters_per_plan: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompileRecord {
    pub fps: f64,
    pub bvh: bool,
    pub clamp: bool,
    pub clips: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub run_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_index: Option<u32>,
    pub created_at: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_at: Option<String>,
    pub llm: LlmConfig,
    /// `live`, `replay` or `custom`.
    pub llm_mode: String,
    pub high_strategy: HighStrategy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub low_strategy: Option<LowStrategy>,
    pub raw: bool,
    pub reflection: bool,
    pub instruction_ids: Vec<u32>,
    pub versions: Versions,
    pub crate_version: String,
    #[serde(default)]
    pub motions: Vec<MotionStatus>,
    #[serde(default)]
    pub annotation: AnnotationProtocol,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compile: Option<CompileRecord>,
}

impl RunManifest {
    pub fn load(dir: &Path) -> Result<Self, RunError> {
        let path = dir.join(MANIFEST_FILE);
        if !path.is_file() {
            return Err(RunError::NotFound(path.display().to_string()));
        }
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn write(&self, dir: &Path) -> Result<(), RunError> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn low_label(&self) -> &'static str {
        if self.raw {
            "raw"
        } else {
            self.low_strategy.map(|s| s.as_str()).unwrap_or("none")
        }
    }

    /// Tag of the animations this run produced.
    pub fn system_tag(&self) -> String {
        eval::system_tag(&self.llm.model_name, self.high_strategy.as_str(), self.low_label())
    }

    /// Tag of the high-level plans this run produced.
    pub fn plan_tag(&self) -> String {
        format!("{}/{}", self.llm.model_name, self.high_strategy.as_str())
    }
}

/// Run directories under `root`: `run-K` subdirectories or `root` itself.
pub fn run_dirs(root: &Path) -> Result<Vec<PathBuf>, RunError> {
    if !root.is_dir() {
        return Err(RunError::NotFound(root.display().to_string()));
    }
    Ok(eval::discover_runs(root)?)
}

fn json_files(dir: &Path) -> Result<Vec<PathBuf>, RunError> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    Ok(files)
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339()
}

/// Where model replies come from.
#[derive(Clone)]
pub enum LlmSource {
    /// A chat-completions endpoint; the API key must be in the configured
    /// environment variable.
    Live(LlmConfig),
    /// Transcripts of an earlier run: a run directory, a `run-K` root, or a
    /// bare transcripts directory. Each motion replays its own files.
    ReplayDir { path: PathBuf, strict: bool },
    /// One script consumed in order; motions run sequentially.
    Script { script: ReplayScript, strict: bool, model_name: Option<String> },
    /// Any factory, e.g. a closure client in tests.
    Factory(Arc<dyn SessionFactory>),
}

impl std::fmt::Debug for LlmSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LlmSource::Live(c) => f.debug_tuple("Live").field(&c.model_name).finish(),
            LlmSource::ReplayDir { path, strict } => {
                f.debug_struct("ReplayDir").field("path", path).field("strict", strict).finish()
            }
            LlmSource::Script { script, .. } => f.debug_struct("Script").field("entries", &script.len()).finish(),
            LlmSource::Factory(_) => f.write_str("Factory"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlanOptions {
    pub run_dir: PathBuf,
    /// `None` plans the whole corpus.
    pub instruction_ids: Option<Vec<u32>>,
    pub corpus: Corpus,
    pub high: HighStrategy,
    pub low: LowStrategy,
    /// Plan raw joint deltas instead of taxonomy positions.
    pub raw: bool,
    pub reflection: bool,
    pub runs: u32,
    /// Worker threads; 0 uses all cores.
    pub jobs: usize,
    /// Directory of `motion-NN.json` high-level plans used instead of
    /// querying for them.
    pub fixed_high_dir: Option<PathBuf>,
    pub high_options: HighLevelOptions,
    pub notes: FormatNotes,
    pub annotation: AnnotationProtocol,
    pub overwrite: bool,
}

impl PlanOptions {
    pub fn new(run_dir: impl Into<PathBuf>) -> Self {
        PlanOptions {
            run_dir: run_dir.into(),
            instruction_ids: None,
            corpus: Corpus::bundled().clone(),
            high: HighStrategy::PieceByPiece,
            low: LowStrategy::Hierarchical,
            raw: false,
            reflection: true,
            runs: 1,
            jobs: 0,
            fixed_high_dir: None,
            high_options: HighLevelOptions::default(),
            notes: FormatNotes::On,
            annotation: AnnotationProtocol::default(),
            overwrite: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutcome {
    pub run_dirs: Vec<PathBuf>,
    pub ok: usize,
    pub partial: usize,
    pub failed: usize,
}

impl PlanOutcome {
    /// 0 when every motion succeeded, 2 when none produced anything, else 1.
    pub fn exit_code(&self) -> i32 {
        if self.partial == 0 && self.failed == 0 {
            0
        } else if self.ok == 0 && self.partial == 0 {
            2
        } else {
            1
        }
    }
}

enum Factories {
    Shared { factory: Arc<dyn SessionFactory>, parallel: bool },
    PerMotion { transcripts: PathBuf, strict: bool },
}

fn replay_transcripts_dir(base: &Path, runs: u32, k: u32) -> PathBuf {
    let base = if runs > 1 && base.join(format!("run-{k}")).is_dir() { base.join(format!("run-{k}")) } else { base.into() };
    if base.join("transcripts").is_dir() {
        base.join("transcripts")
    } else {
        base
    }
}

fn motion_replay(dir: &Path, id: u32, strict: bool) -> Result<(Arc<dyn SessionFactory>, String), RunError> {
    let stem = motion_stem(id);
    let mut ts: Vec<Transcript> = Vec::new();
    for stage in ["high", "low", "raw"] {
        let p = dir.join(format!("{stem}.{stage}.json"));
        if p.is_file() {
            ts.push(Transcript::from_path(&p)?);
        }
    }
    if ts.is_empty() {
        return Err(RunError::NotFound(format!("no transcripts for {stem} in {}", dir.display())));
    }
    let model = ts[0].metadata.model_name.clone();
    let client = make_replay_client(ReplayScript::from_transcripts(&ts), strict).with_model_name(model.clone());
    Ok((Arc::new(client), model))
}

/// Plan every selected instruction, `runs` times. Per-motion failures are
/// recorded in the manifest and do not stop the run.
pub fn cmd_plan(opts: &PlanOptions, source: LlmSource) -> Result<PlanOutcome, RunError> {
    if opts.runs == 0 {
        return Err(RunError::Config("runs must be at least 1".into()));
    }
    let instructions: Vec<MotionInstruction> = match &opts.instruction_ids {
        None => opts.corpus.instructions.clone(),
        Some(ids) => ids
            .iter()
            .map(|id| opts.corpus.get(*id).cloned().ok_or_else(|| RunError::Config(format!("unknown instruction id {id}"))))
            .collect::<Result<_, _>>()?,
    };
    if instructions.is_empty() {
        return Err(RunError::Config("no instructions selected".into()));
    }
    if let Some(dir) = &opts.fixed_high_dir {
        if !dir.is_dir() {
            return Err(RunError::NotFound(dir.display().to_string()));
        }
    }
    let (llm, mode, factories) = match source {
        LlmSource::Live(config) => {
            let client = HttpClient::new(config.clone())?;
            (config, "live", Factories::Shared { factory: Arc::new(client), parallel: true })
        }
        LlmSource::Script { script, strict, model_name } => {
            let mut client = make_replay_client(script, strict);
            if let Some(m) = model_name {
                client = client.with_model_name(m);
            }
            let cfg = client.new_session(SessionTags::default())?.config().clone();
            (cfg, "replay", Factories::Shared { factory: Arc::new(client), parallel: false })
        }
        LlmSource::Factory(f) => {
            let cfg = f.new_session(SessionTags::default())?.config().clone();
            (cfg, "custom", Factories::Shared { factory: f, parallel: true })
        }
        LlmSource::ReplayDir { path, strict } => {
            if !path.is_dir() {
                return Err(RunError::NotFound(path.display().to_string()));
            }
            let cfg = LlmConfig { model_name: "replay".into(), ..LlmConfig::default() };
            (cfg, "replay", Factories::PerMotion { transcripts: path, strict })
        }
    };

    let dirs: Vec<PathBuf> = if opts.runs == 1 {
        vec![opts.run_dir.clone()]
    } else {
        (1..=opts.runs).map(|k| opts.run_dir.join(format!("run-{k}"))).collect()
    };
    for d in &dirs {
        if d.join(MANIFEST_FILE).exists() && !opts.overwrite {
            return Err(RunError::AlreadyExists(d.clone()));
        }
    }
    let run_id = opts.run_dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());

    let mut outcome = PlanOutcome { run_dirs: dirs.clone(), ok: 0, partial: 0, failed: 0 };
    for (k, dir) in dirs.iter().enumerate() {
        let k = k as u32 + 1;
        for sub in ["transcripts", "plans", "plans_low", "clips", "eval", "ratings"] {
            std::fs::create_dir_all(dir.join(sub))?;
        }
        let mut manifest = RunManifest {
            schema: MANIFEST_SCHEMA.into(),
            run_id: if opts.runs > 1 { format!("{run_id}/run-{k}") } else { run_id.clone() },
            run_index: (opts.runs > 1).then_some(k),
            created_at: now(),
            finished_at: None,
            llm: llm.clone(),
            llm_mode: mode.into(),
            high_strategy: if opts.fixed_high_dir.is_some() { HighStrategy::Manual } else { opts.high },
            low_strategy: (!opts.raw).then_some(opts.low),
            raw: opts.raw,
            reflection: opts.reflection && !opts.raw,
            instruction_ids: instructions.iter().map(|i| i.id).collect(),
            versions: Versions::bundled(),
            crate_version: env!("CARGO_PKG_VERSION").into(),
            motions: Vec::new(),
            annotation: opts.annotation.clone(),
            compile: None,
        };
        manifest.write(dir)?;

        let work = |instr: &MotionInstruction| -> (MotionStatus, Option<String>) {
            match &factories {
                Factories::Shared { factory, .. } => (plan_motion(instr, factory.as_ref(), opts, dir), None),
                Factories::PerMotion { transcripts, strict } => {
                    let tdir = replay_transcripts_dir(transcripts, opts.runs, k);
                    match motion_replay(&tdir, instr.id, *strict) {
                        Ok((f, model)) => (plan_motion(instr, f.as_ref(), opts, dir), Some(model)),
                        Err(e) => (failed(instr.id, e.to_string()), None),
                    }
                }
            }
        };
        let parallel = match &factories {
            Factories::Shared { parallel, .. } => *parallel,
            Factories::PerMotion { .. } => true,
        };
        let results: Vec<(MotionStatus, Option<String>)> = if parallel && instructions.len() > 1 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(opts.jobs)
                .build()
                .map_err(|e| RunError::Config(e.to_string()))?;
            pool.install(|| instructions.par_iter().map(work).collect())
        } else {
            instructions.iter().map(work).collect()
        };
        if let Some(model) = results.iter().find_map(|(_, m)| m.clone()) {
            manifest.llm.model_name = model;
        }
        manifest.motions = results.into_iter().map(|(s, _)| s).collect();
        manifest.motions.sort_by_key(|m| m.motion_id);
        for m in &manifest.motions {
            match m.state {
                MotionState::Ok => outcome.ok += 1,
                MotionState::Partial => outcome.partial += 1,
                MotionState::Failed => outcome.failed += 1,
            }
        }
        manifest.finished_at = Some(now());
        manifest.write(dir)?;
    }
    Ok(outcome)
}

fn failed(id: u32, error: String) -> MotionStatus {
    log::error!("motion {id}: {error}");
    MotionStatus { error: Some(error), ..pending(id) }
}

fn pending(id: u32) -> MotionStatus {
    MotionStatus {
        motion_id: id,
        state: MotionState::Failed,
        error: None,
        plan: None,
        plan_low: None,
        transcripts: Vec::new(),
        warnings: 0,
    }
}

fn save_transcript(session: &mut ChatSession, dir: &Path, name: &str, status: &mut MotionStatus) {
    if session.transcript().exchanges() == 0 {
        return;
    }
    match record_transcript(session, dir.join("transcripts"), name) {
        Ok(_) => status.transcripts.push(format!("transcripts/{name}.json")),
        Err(e) => log::warn!("could not write transcript {name}: {e}"),
    }
}

/// High-level then low-level planning for one instruction.
pub fn plan_motion(
    instr: &MotionInstruction,
    factory: &dyn SessionFactory,
    opts: &PlanOptions,
    dir: &Path,
) -> MotionStatus {
    let stem = motion_stem(instr.id);
    let mut status = pending(instr.id);

    if opts.raw {
        let mut session = match factory.new_session(SessionTags::new("raw", Some(instr.id))) {
            Ok(s) => s,
            Err(e) => return failed(instr.id, e.to_string()),
        };
        let hopts = HighLevelOptions { notes: opts.notes, ..opts.high_options.clone() };
        let result = plan_raw_parameters(instr, &mut session, Skeleton::bundled(), &hopts);
        save_transcript(&mut session, dir, &format!("{stem}.raw"), &mut status);
        match result {
            Ok(plan) => {
                let rel = format!("plans_low/{stem}.json");
                if let Err(e) = std::fs::write(dir.join(&rel), plan.to_json_string()) {
                    status.error = Some(e.to_string());
                    return status;
                }
                status.warnings = plan.warnings.len();
                status.plan_low = Some(rel);
                status.state = MotionState::Ok;
            }
            Err(e) => status.error = Some(e.to_string()),
        }
        return status;
    }

    let high = if let Some(fixed) = &opts.fixed_high_dir {
        match HighLevelPlan::from_path(fixed.join(format!("{stem}.json"))) {
            Ok(p) => p,
            Err(e) => {
                status.error = Some(format!("fixed high-level plan: {e}"));
                return status;
            }
        }
    } else {
        let mut session = match factory.new_session(SessionTags::new(opts.high.as_str(), Some(instr.id))) {
            Ok(s) => s,
            Err(e) => return failed(instr.id, e.to_string()),
        };
        let hopts = HighLevelOptions { notes: opts.notes, ..opts.high_options.clone() };
        let result = plan_high_level(opts.high, instr, &mut session, &hopts);
        save_transcript(&mut session, dir, &format!("{stem}.high"), &mut status);
        match result {
            Ok(p) => p,
            Err(e) => {
                status.error = Some(e.to_string());
                log::error!("motion {}: {e}", instr.id);
                return status;
            }
        }
    };
    let rel = format!("plans/{stem}.json");
    if let Err(e) = std::fs::write(dir.join(&rel), high.to_json_string()) {
        status.error = Some(e.to_string());
        return status;
    }
    status.plan = Some(rel);
    status.state = MotionState::Partial;
    status.warnings = high.warnings.len();

    let lopts = LowLevelOptions { strategy: opts.low, reflection: opts.reflection, notes: opts.notes, ..LowLevelOptions::default() };
    let mut session = match factory.new_session(SessionTags::new(opts.low.as_str(), Some(instr.id))) {
        Ok(s) => s,
        Err(e) => {
            status.error = Some(e.to_string());
            return status;
        }
    };
    let result = build_animation_plan_with_session(&high, &lopts, PoseTaxonomy::bundled(), &mut session);
    save_transcript(&mut session, dir, &format!("{stem}.low"), &mut status);
    match result {
        Ok(plan) => {
            let rel = format!("plans_low/{stem}.json");
            if let Err(e) = std::fs::write(dir.join(&rel), plan.to_json_string()) {
                status.error = Some(e.to_string());
                return status;
            }
            status.warnings += plan.warnings.len();
            status.plan_low = Some(rel);
            status.state = MotionState::Ok;
        }
        Err(e) => {
            log::error!("motion {}: {e}", instr.id);
            status.error = Some(e.to_string());
        }
    }
    status
}

/// A plan file from `plans_low/`.
#[derive(Debug, Clone)]
pub enum LowPlanFile {
    Positions(AnimationPlan),
    Raw(RawJointPlan),
}

pub fn read_low_plan(path: &Path) -> Result<LowPlanFile, RunError> {
    let text = std::fs::read_to_string(path)?;
    let v: serde_json::Value = serde_json::from_str(&text)?;
    match v.get("schema").and_then(|s| s.as_str()) {
        Some(ANIMATION_PLAN_SCHEMA) => Ok(LowPlanFile::Positions(serde_json::from_value(v)?)),
        Some(RAW_PLAN_SCHEMA) => Ok(LowPlanFile::Raw(serde_json::from_value(v)?)),
        other => Err(RunError::Config(format!("{}: unknown plan schema {other:?}", path.display()))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompileOptions {
    pub fps: f64,
    pub bvh: bool,
    /// Clamp raw-mode angles to [-180, 180].
    pub clamp: bool,
    /// Oracle annotations to compile alongside, into `clips/oracle/`.
    pub oracle_dir: Option<PathBuf>,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions { fps: compiler::DEFAULT_FPS, bvh: false, clamp: false, oracle_dir: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CompileOutcome {
    pub clips: Vec<PathBuf>,
    pub errors: Vec<String>,
}

impl CompileOutcome {
    pub fn exit_code(&self) -> i32 {
        match (self.clips.is_empty(), self.errors.is_empty()) {
            (_, true) if !self.clips.is_empty() => 0,
            (false, false) => 1,
            _ => 2,
        }
    }
}

fn write_clip(clip: &AnimationClip, base: &Path, opts: &CompileOptions, out: &mut CompileOutcome) -> Result<(), RunError> {
    let json = base.with_extension("clip.json");
    compiler::export_clip(clip, Skeleton::bundled(), ExportFormat::ClipJson, opts.fps, &json)?;
    out.clips.push(json);
    if opts.bvh {
        let bvh = base.with_extension("bvh");
        compiler::export_clip(clip, Skeleton::bundled(), ExportFormat::Bvh, opts.fps, &bvh)?;
        out.clips.push(bvh);
    }
    Ok(())
}

/// Compile every plan in the run(s) into clips. Rerunning rewrites identical
/// bytes.
pub fn cmd_compile(root: &Path, opts: &CompileOptions) -> Result<CompileOutcome, RunError> {
    if !(opts.fps.is_finite() && opts.fps > 0.0) {
        return Err(RunError::Config(format!("fps must be positive, got {}", opts.fps)));
    }
    let mut total = CompileOutcome::default();
    for dir in run_dirs(root)? {
        let mut out = CompileOutcome::default();
        let clips = dir.join("clips");
        for path in json_files(&dir.join("plans_low"))? {
            let Some(id) = motion_id_of(&path) else { continue };
            let base = clips.join(motion_stem(id));
            let result = read_low_plan(&path).and_then(|plan| {
                let clip = match &plan {
                    LowPlanFile::Positions(p) => compiler::compile(p, RuleTable::bundled(), Skeleton::bundled())?,
                    LowPlanFile::Raw(p) => {
                        compiler::compile_raw(p, Skeleton::bundled(), RawCompileOptions { clamp: opts.clamp })?
                    }
                };
                write_clip(&clip, &base, opts, &mut out)?;
                Ok(plan)
            });
            let plan = match result {
                Ok(p) => p,
                Err(e) => {
                    out.errors.push(format!("motion {id}: {e}"));
                    continue;
                }
            };
            if let (Some(odir), LowPlanFile::Positions(p)) = (&opts.oracle_dir, &plan) {
                let opath = odir.join(format!("{}.json", motion_stem(id)));
                if !opath.is_file() {
                    continue;
                }
                let res = OracleAnnotation::from_path(&opath).map_err(RunError::from).and_then(|o| {
                    let oplan = AnimationPlan::from_frames(p.high_level.clone(), p.strategy, o.frames);
                    let clip = compiler::compile(&oplan, RuleTable::bundled(), Skeleton::bundled())?;
                    write_clip(&clip, &clips.join("oracle").join(motion_stem(id)), opts, &mut out)
                });
                if let Err(e) = res {
                    out.errors.push(format!("oracle motion {id}: {e}"));
                }
            }
        }
        if let Ok(mut m) = RunManifest::load(&dir) {
            m.compile = Some(CompileRecord {
                fps: opts.fps,
                bvh: opts.bvh,
                clamp: opts.clamp,
                clips: out
                    .clips
                    .iter()
                    .map(|c| c.strip_prefix(&dir).unwrap_or(c).display().to_string())
                    .collect(),
                errors: out.errors.clone(),
            });
            m.write(&dir)?;
        }
        total.clips.extend(out.clips);
        total.errors.extend(out.errors);
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluateOutcome {
    pub records: Vec<PathBuf>,
    pub missing: Vec<String>,
    pub summary: RunSummary,
}

impl EvaluateOutcome {
    pub fn exit_code(&self) -> i32 {
        match (self.records.is_empty(), self.missing.is_empty()) {
            (true, _) => 2,
            (false, true) => 0,
            (false, false) => 1,
        }
    }
}

/// BPPA, complexity and reflection statistics per plan, then the summary
/// tables in `<root>/eval/summary.{json,txt,csv}`.
pub fn cmd_evaluate(root: &Path, oracle_dir: Option<&Path>) -> Result<EvaluateOutcome, RunError> {
    let mut records = Vec::new();
    let mut missing = Vec::new();
    for dir in run_dirs(root)? {
        let manifest = RunManifest::load(&dir).ok();
        let model = manifest.as_ref().map(|m| m.llm.model_name.clone()).unwrap_or_else(|| "unknown".into());
        std::fs::create_dir_all(dir.join("eval"))?;
        let run_label = dir.strip_prefix(root).ok().map(|p| p.display().to_string()).filter(|s| !s.is_empty());
        let run_label = run_label.unwrap_or_else(|| ".".into());
        for path in json_files(&dir.join("plans_low"))? {
            let plan = match read_low_plan(&path) {
                Ok(LowPlanFile::Positions(p)) => p,
                Ok(LowPlanFile::Raw(_)) => {
                    missing.push(format!("{run_label} {}: raw plan has no positions to score", path.display()));
                    continue;
                }
                Err(e) => {
                    missing.push(format!("{run_label} {}: {e}", path.display()));
                    continue;
                }
            };
            let id = plan.motion_id();
            let high = plan.high_level.strategy.as_str().to_string();
            let low = plan.strategy.as_str().to_string();
            let mut rec = EvaluationRecord {
                schema: EVAL_RECORD_SCHEMA.into(),
                motion_id: id,
                system_tag: eval::system_tag(&model, &high, &low),
                model_name: model.clone(),
                high_strategy: high,
                low_strategy: low,
                bppa: None,
                complexity: eval::complexity_report(&plan.frames),
                reflection: None,
                missing: Vec::new(),
            };
            let oracle = oracle_dir.map(|d| d.join(format!("{}.json", motion_stem(id))));
            match oracle {
                None => rec.missing.push("no oracle directory given".into()),
                Some(p) if !p.is_file() => rec.missing.push(format!("no oracle for motion {id}")),
                Some(p) => match OracleAnnotation::from_path(&p) {
                    Err(e) => rec.missing.push(format!("oracle for motion {id}: {e}")),
                    Ok(o) => {
                        match eval::bppa(&plan, &o) {
                            Ok(b) => rec.bppa = Some(b),
                            Err(e) => rec.missing.push(format!("motion {id}: {e}")),
                        }
                        if plan.reflection {
                            rec.reflection = Some(eval::reflection_stats(&plan.reflections, &o));
                        }
                    }
                },
            }
            for m in &rec.missing {
                missing.push(format!("{run_label} {m}"));
            }
            let out = dir.join("eval").join(format!("{}.json", motion_stem(id)));
            std::fs::write(&out, rec.to_json_string())?;
            records.push(out);
        }
    }
    let summary = eval::summarize_run(root)?;
    write_summary(root, "summary", &summary)?;
    Ok(EvaluateOutcome { records, missing, summary })
}

fn write_summary(root: &Path, name: &str, summary: &RunSummary) -> Result<(), RunError> {
    let dir = root.join("eval");
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join(format!("{name}.json")), summary.to_json_string())?;
    std::fs::write(dir.join(format!("{name}.txt")), summary.to_text())?;
    summary.write_csv(std::fs::File::create(dir.join(format!("{name}.csv")))?)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub summary: RunSummary,
    pub weighting: KappaWeighting,
    pub raters: usize,
    /// Pairwise kappa per target kind; `None` when fewer than two raters
    /// rated that kind.
    pub agreement: BTreeMap<TargetKind, Option<KappaMatrix>>,
    pub bpq: BTreeMap<String, BTreeMap<BpqGroup, BpqShare>>,
    /// Mean pairwise exact-match rate of BPQ labels over the animations every
    /// rater labelled.
    pub bpq_agreement: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReportOptions {
    /// JSONL ratings export; defaults to the run's `ratings/` files.
    pub ratings: Option<PathBuf>,
    pub weighting: KappaWeighting,
}

/// Final tables: score statistics, BPQ percentages and rater agreement,
/// written to `<root>/eval/report.{json,txt,csv}`.
pub fn cmd_report(root: &Path, opts: &ReportOptions) -> Result<Report, RunError> {
    let ratings = match &opts.ratings {
        Some(p) => eval::load_ratings(p)?,
        None => eval::collect_ratings(root)?,
    };
    let summary = eval::summarize_with_ratings(root, Some(&ratings))?;
    let mut agreement = BTreeMap::new();
    for kind in [TargetKind::HighLevelPlan, TargetKind::Animation] {
        let of_kind = eval::ratings_of(&ratings, kind);
        let m = (eval::raters(&of_kind).len() >= 2).then(|| kappa_matrix(&of_kind, kind, opts.weighting));
        agreement.insert(kind, m);
    }
    let report = Report {
        raters: eval::raters(&ratings).len(),
        bpq: aggregate_bpq(&ratings),
        bpq_agreement: bpq_agreement(&ratings),
        summary,
        weighting: opts.weighting,
        agreement,
    };
    let dir = root.join("eval");
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    std::fs::write(dir.join("report.txt"), report.to_text())?;
    report.summary.write_csv(std::fs::File::create(dir.join("report.csv"))?)?;
    Ok(report)
}

type BpqLabels = BTreeMap<BpqGroup, eval::BpqLabel>;

fn bpq_agreement(ratings: &[RatingRecord]) -> Option<f64> {
    let mut by_rater: BTreeMap<&str, BTreeMap<(u32, &str), &BpqLabels>> = BTreeMap::new();
    for r in ratings {
        if let Some(b) = &r.bpq {
            by_rater.entry(&r.rater_id).or_default().insert((r.motion_id, &r.system_tag), b);
        }
    }
    if by_rater.len() < 2 {
        return None;
    }
    let mut common: Vec<(u32, &str)> = by_rater.values().next()?.keys().copied().collect();
    common.retain(|k| by_rater.values().all(|m| m.contains_key(k)));
    if common.is_empty() {
        return None;
    }
    let labels: BTreeMap<String, Vec<Option<eval::BpqLabel>>> = by_rater
        .iter()
        .map(|(r, m)| {
            let v = common.iter().flat_map(|k| BPQ_GROUPS.iter().map(move |g| m[k].get(g).copied())).collect();
            (r.to_string(), v)
        })
        .collect();
    average_pairwise_agreement(&labels).ok()
}

impl Report {
    pub fn to_text(&self) -> String {
        let mut out = self.summary.to_text();
        writeln!(out, "\nrater agreement ({} weighted kappa, {} raters)", self.weighting.as_str(), self.raters).unwrap();
        for (kind, m) in &self.agreement {
            writeln!(out, "\n{} ({})", kind.metric(), kind).unwrap();
            let Some(m) = m else {
                writeln!(out, "  unavailable: fewer than two raters").unwrap();
                continue;
            };
            let w = m.raters.iter().map(|r| r.len()).max().unwrap_or(4).max(5);
            write!(out, "{:<w$}", "").unwrap();
            for r in &m.raters {
                write!(out, " {r:>w$}").unwrap();
            }
            writeln!(out).unwrap();
            for (r, row) in m.raters.iter().zip(&m.values) {
                write!(out, "{r:<w$}").unwrap();
                for v in row {
                    match v {
                        Some(v) => write!(out, " {:>w$.3}", v).unwrap(),
                        None => write!(out, " {:>w$}", "-").unwrap(),
                    }
                }
                writeln!(out).unwrap();
            }
            match (m.average, m.band) {
                (Some(a), Some(b)) => writeln!(out, "average kappa {a:.3} ({b})").unwrap(),
                _ => writeln!(out, "average kappa unavailable: no shared items").unwrap(),
            }
        }
        writeln!(out, "\nBPQ (%), Not Relevant excluded").unwrap();
        for (sys, groups) in &self.bpq {
            writeln!(out, "{sys}").unwrap();
            for (g, s) in groups {
                writeln!(
                    out,
                    "  {:<9}  good {:>6.2}  partially good {:>6.2}  bad {:>6.2}  (n={}, not relevant {})",
                    g.as_str(),
                    s.good,
                    s.partially_good,
                    s.bad,
                    s.counted,
                    s.not_relevant
                )
                .unwrap();
            }
        }
        match self.bpq_agreement {
            Some(a) => writeln!(out, "BPQ pairwise agreement {a:.3}").unwrap(),
            None => writeln!(out, "BPQ pairwise agreement unavailable").unwrap(),
        }
        out
    }
}
