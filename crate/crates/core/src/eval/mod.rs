//! Automatic metrics over plans, plus rating statistics and run summaries.

mod ratings;
mod summary;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::low_level::{AnimationPlan, ReflectionEvent, StepPoseAssignment, NEUTRAL};
use crate::taxonomy::{BodyPartId, PartKind, PoseTaxonomy};

pub use ratings::{
    aggregate_bpq, average_pairwise_agreement, classify_agreement, kappa_matrix, raters, weighted_kappa,
    AgreementBand, BpqGroup, BpqLabel, BpqShare, KappaMatrix, KappaWeighting, RatingRecord, TargetKind, BPQ_GROUPS,
};
pub use summary::{
    collect_ratings, discover_runs, load_ratings, ratings_of, summarize_run, summarize_with_ratings, EvaluationRecord, RunSummary, Stats, SummaryRow, EVAL_RECORD_SCHEMA,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub const CELLS_PER_STEP: usize = 16;

/// Tag used for oracle animations in rating records.
pub const ORACLE_TAG: &str = "oracle";

/// `<model>/<high strategy>/<low strategy>`.
pub fn system_tag(model: &str, high: &str, low: &str) -> String {
    format!("{model}/{high}/{low}")
}

/// Ground-truth positions for the steps of a fixed high-level plan.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleAnnotation {
    pub motion_id: u32,
    pub frames: Vec<StepPoseAssignment>,
}

impl OracleAnnotation {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, EvalError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("oracle serializes") + "\n"
    }

    pub fn validate(&self, taxonomy: &PoseTaxonomy) -> Result<(), EvalError> {
        for f in &self.frames {
            if !f.is_total(taxonomy) {
                return Err(EvalError::InvalidInput(format!(
                    "oracle for motion {} step {} is not a total valid assignment",
                    self.motion_id, f.step_number
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepAccuracy {
    pub step_number: u32,
    pub matched: usize,
    pub total: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BppaReport {
    pub motion_id: u32,
    pub matched: usize,
    pub total: usize,
    pub overall: f64,
    /// Paired parts averaged into one kind.
    pub by_part: BTreeMap<PartKind, f64>,
    pub by_body_part: BTreeMap<BodyPartId, f64>,
    pub by_step: Vec<StepAccuracy>,
}

/// Body Part Position Accuracy: exact-token matches over 16 cells per step.
pub fn bppa(predicted: &AnimationPlan, oracle: &OracleAnnotation) -> Result<BppaReport, EvalError> {
    bppa_frames(predicted.motion_id(), &predicted.frames, oracle)
}

pub fn bppa_frames(
    motion_id: u32,
    predicted: &[StepPoseAssignment],
    oracle: &OracleAnnotation,
) -> Result<BppaReport, EvalError> {
    if motion_id != oracle.motion_id {
        return Err(EvalError::ShapeMismatch(format!("motion {motion_id} vs oracle {}", oracle.motion_id)));
    }
    if predicted.len() != oracle.frames.len() {
        return Err(EvalError::ShapeMismatch(format!(
            "{} predicted steps vs {} oracle steps",
            predicted.len(),
            oracle.frames.len()
        )));
    }
    let n = predicted.len();
    let mut part_hits: BTreeMap<BodyPartId, usize> = BodyPartId::ALL.iter().map(|p| (*p, 0)).collect();
    let mut by_step = Vec::with_capacity(n);
    for (p, o) in predicted.iter().zip(&oracle.frames) {
        let mut matched = 0;
        for part in BodyPartId::ALL {
            if p.position(part) == o.position(part) {
                matched += 1;
                *part_hits.get_mut(&part).expect("all parts") += 1;
            }
        }
        by_step.push(StepAccuracy {
            step_number: o.step_number,
            matched,
            total: CELLS_PER_STEP,
            accuracy: matched as f64 / CELLS_PER_STEP as f64,
        });
    }
    let matched: usize = by_step.iter().map(|s| s.matched).sum();
    let total = CELLS_PER_STEP * n;
    let frac = |hits: usize| if n == 0 { 0.0 } else { hits as f64 / n as f64 };
    let by_body_part: BTreeMap<BodyPartId, f64> = part_hits.iter().map(|(p, h)| (*p, frac(*h))).collect();
    let mut by_part = BTreeMap::new();
    for kind in PartKind::all() {
        let members: Vec<f64> = BodyPartId::ALL.iter().filter(|p| p.kind() == kind).map(|p| by_body_part[p]).collect();
        by_part.insert(kind, members.iter().sum::<f64>() / members.len() as f64);
    }
    Ok(BppaReport {
        motion_id,
        matched,
        total,
        overall: if total == 0 { 0.0 } else { matched as f64 / total as f64 },
        by_part,
        by_body_part,
        by_step,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityStep {
    pub step_number: u32,
    pub moved: usize,
    pub unmoved: usize,
    pub ratio: f64,
    /// Every part moved; the ratio used a denominator of 1.
    pub all_moved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub value: f64,
    pub steps: Vec<ComplexityStep>,
}

/// Sum over steps of moved/unmoved part counts. A part moved when its token
/// differs from the previous step (all-neutral before step 1).
pub fn motion_complexity(plan: &AnimationPlan) -> f64 {
    complexity_report(&plan.frames).value
}

pub fn complexity_report(frames: &[StepPoseAssignment]) -> ComplexityReport {
    let mut prev = StepPoseAssignment::neutral(0);
    let mut steps = Vec::with_capacity(frames.len());
    for f in frames {
        let moved = BodyPartId::ALL.iter().filter(|p| f.position(**p) != prev.position(**p)).count();
        let unmoved = CELLS_PER_STEP - moved;
        let all_moved = unmoved == 0;
        let ratio = moved as f64 / if all_moved { 1.0 } else { unmoved as f64 };
        steps.push(ComplexityStep { step_number: f.step_number, moved, unmoved, ratio, all_moved });
        prev = f.clone();
    }
    ComplexityReport { value: steps.iter().map(|s| s.ratio).sum(), steps }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectionStats {
    pub correction_percentage: f64,
    pub success_rate: f64,
    pub perfect_reflection_rate: f64,
    pub corrected_cells: usize,
    pub total_cells: usize,
    /// No corrected cells: the two rates are reported as 0.
    pub undefined: bool,
}

/// Correction, success and perfect-reflection rates over the oracle's cells.
pub fn reflection_stats(events: &[ReflectionEvent], oracle: &OracleAnnotation) -> ReflectionStats {
    let total_cells = CELLS_PER_STEP * oracle.frames.len();
    let mut cells: BTreeMap<(u32, BodyPartId), Vec<&ReflectionEvent>> = BTreeMap::new();
    for e in events {
        cells.entry((e.step_number, e.part)).or_default().push(e);
    }
    let truth: BTreeMap<u32, &StepPoseAssignment> = oracle.frames.iter().map(|f| (f.step_number, f)).collect();
    let mut corrected = 0usize;
    let mut success = 0usize;
    let mut perfect = 0usize;
    for ((step, part), evs) in &cells {
        if !evs.iter().any(|e| e.corrected) {
            continue;
        }
        corrected += 1;
        let Some(answer) = truth.get(step).map(|f| f.position(*part)) else { continue };
        let final_token = &evs.last().expect("non-empty").position_after;
        if final_token != answer {
            continue;
        }
        success += 1;
        let mut priors: BTreeSet<&str> = evs.iter().map(|e| e.position_before.as_str()).collect();
        for e in &evs[..evs.len() - 1] {
            priors.insert(&e.position_after);
        }
        if priors.iter().all(|p| *p != answer) {
            perfect += 1;
        }
    }
    let rate = |k: usize| if corrected == 0 { 0.0 } else { k as f64 / corrected as f64 };
    ReflectionStats {
        correction_percentage: if total_cells == 0 { 0.0 } else { corrected as f64 / total_cells as f64 },
        success_rate: rate(success),
        perfect_reflection_rate: rate(perfect),
        corrected_cells: corrected,
        total_cells,
        undefined: corrected == 0,
    }
}

/// An oracle that agrees with `plan` everywhere: handy for fixtures.
pub fn oracle_from_plan(plan: &AnimationPlan) -> OracleAnnotation {
    OracleAnnotation {
        motion_id: plan.motion_id(),
        frames: plan
            .frames
            .iter()
            .map(|f| StepPoseAssignment { step_number: f.step_number, positions: f.positions.clone(), provenance: BTreeMap::new() })
            .collect(),
    }
}

/// True when every cell holds `neutral`.
pub fn is_all_neutral(frames: &[StepPoseAssignment]) -> bool {
    frames.iter().all(|f| BodyPartId::ALL.iter().all(|p| f.position(*p) == NEUTRAL))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::high_level::{HighLevelPlan, HighLevelStep, HighStrategy, MotionInstruction};
    use crate::low_level::LowStrategy;

    fn plan(frames: Vec<StepPoseAssignment>) -> AnimationPlan {
        let steps = (0..frames.len())
            .map(|i| HighLevelStep {
                step_number: i as u32 + 1,
                time_range: [i as f64, i as f64 + 1.0],
                movement: "m".into(),
                initial_state: "i".into(),
                final_state: "f".into(),
            })
            .collect();
        let high = HighLevelPlan { instruction: MotionInstruction::new(1, "x"), strategy: HighStrategy::Manual, steps, warnings: vec![] };
        AnimationPlan::from_frames(high, LowStrategy::Hierarchical, frames)
    }

    fn frame(n: u32, moves: &[(BodyPartId, &str)]) -> StepPoseAssignment {
        let mut f = StepPoseAssignment::neutral(n);
        for (p, t) in moves {
            f.positions.insert(*p, t.to_string());
        }
        f
    }

    #[test]
    fn bppa_identity_and_fraction() {
        let p = plan(vec![frame(1, &[(BodyPartId::LeftElbow, "fully_bent")]), frame(2, &[])]);
        let o = oracle_from_plan(&p);
        assert_eq!(bppa(&p, &o).unwrap().overall, 1.0);
        let mut o2 = o.clone();
        o2.frames[0].positions.insert(BodyPartId::LeftElbow, "neutral".into());
        o2.frames[1].positions.insert(BodyPartId::RightElbow, "fully_bent".into());
        let r = bppa(&p, &o2).unwrap();
        assert_eq!((r.matched, r.total), (30, 32));
        assert_eq!(r.by_part[&PartKind::Elbow], 0.5);
        assert_eq!(r.by_body_part[&BodyPartId::LeftElbow], 0.5);
        assert_eq!(r.by_part[&PartKind::Head], 1.0);
        let o3 = OracleAnnotation { motion_id: 1, frames: vec![] };
        assert!(matches!(bppa(&p, &o3), Err(EvalError::ShapeMismatch(_))));
    }

    #[test]
    fn complexity() {
        assert_eq!(motion_complexity(&plan(vec![frame(1, &[])])), 0.0);
        let four = [
            (BodyPartId::Head, "tilted_down_slightly"),
            (BodyPartId::LeftElbow, "fully_bent"),
            (BodyPartId::RightElbow, "fully_bent"),
            (BodyPartId::Torso, "bent_forward_slightly"),
        ];
        let taxonomy = PoseTaxonomy::bundled();
        for (p, t) in four {
            assert!(taxonomy.contains(p, t), "{p} {t}");
        }
        assert_eq!(motion_complexity(&plan(vec![frame(1, &four)])), 4.0 / 12.0);
        // Step 2 holds the same pose: nothing moved.
        assert_eq!(motion_complexity(&plan(vec![frame(1, &four), frame(2, &four)])), 4.0 / 12.0);
    }

    #[test]
    fn complexity_all_moved_is_flagged() {
        let mut f = StepPoseAssignment::neutral(1);
        for p in BodyPartId::ALL {
            f.positions.insert(p, "x".into());
        }
        let r = complexity_report(&[f]);
        assert!(r.steps[0].all_moved);
        assert_eq!(r.value, 16.0);
    }

    fn ev(step: u32, part: BodyPartId, before: &str, after: &str) -> ReflectionEvent {
        ReflectionEvent {
            step_number: step,
            part,
            position_before: before.into(),
            position_after: after.into(),
            analysis: String::new(),
            judgement: String::new(),
            corrected: before != after,
        }
    }

    #[test]
    fn reflection_rates() {
        let o = oracle_from_plan(&plan(vec![frame(1, &[(BodyPartId::LeftElbow, "fully_bent")]), frame(2, &[])]));
        let none = reflection_stats(&[ev(1, BodyPartId::Head, "neutral", "neutral")], &o);
        assert_eq!((none.correction_percentage, none.success_rate, none.perfect_reflection_rate), (0.0, 0.0, 0.0));
        assert!(none.undefined);
        let events = [
            ev(1, BodyPartId::LeftElbow, "neutral", "fully_bent"),
            ev(2, BodyPartId::Head, "neutral", "tilted_down_fully"),
        ];
        let s = reflection_stats(&events, &o);
        assert_eq!((s.correction_percentage, s.success_rate, s.perfect_reflection_rate), (0.0625, 0.5, 0.5));
    }
}
