//! Plans to keyframed clips, sampling, and export.
//!
//! A clip holds one keyframe at t=0 and one at the end of each step. Euler
//! components and root translation are interpolated linearly between
//! keyframes.

use std::fmt::Write as _;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::low_level::{AnimationPlan, RawJointPlan};
use crate::skeleton::{EulerRotationDeg, Pose, RuleTable, Skeleton, SkeletonError, Vec3};
use crate::taxonomy::BodyPartId;

pub const CLIP_SCHEMA: &str = "clip-json/1";
pub const DEFAULT_FPS: f64 = 30.0;

#[derive(Debug, Error)]
pub enum CompileError {
    #[error(transparent)]
    Skeleton(#[from] SkeletonError),
    #[error("unknown joint `{0}`")]
    UnknownJoint(String),
    #[error("time {t} is outside [0, {duration}]")]
    OutOfRange { t: f64, duration: f64 },
    #[error("invalid clip: {0}")]
    InvalidClip(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub time: f64,
    pub rotations: IndexMap<String, EulerRotationDeg>,
    pub root_translation: Vec3,
}

impl Keyframe {
    pub fn pose(&self) -> Pose {
        Pose { rotations: self.rotations.clone(), root_translation: self.root_translation }
    }

    fn from_pose(time: f64, pose: Pose) -> Self {
        Keyframe { time, rotations: pose.rotations, root_translation: pose.root_translation }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipSource {
    Taxonomy,
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnimationClip {
    pub schema: String,
    pub skeleton_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rules_version: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub motion_id: Option<u32>,
    pub source: ClipSource,
    pub duration: f64,
    pub keyframes: Vec<Keyframe>,
}

impl AnimationClip {
    pub fn validate(&self, skeleton: &Skeleton) -> Result<(), CompileError> {
        let bad = |m: String| Err(CompileError::InvalidClip(m));
        let Some(first) = self.keyframes.first() else { return bad("no keyframes".into()) };
        if first.time != 0.0 {
            return bad("first keyframe is not at t=0".into());
        }
        for w in self.keyframes.windows(2) {
            if !(w[1].time > w[0].time) {
                return bad(format!("keyframe times not strictly increasing at {}", w[1].time));
            }
        }
        if self.keyframes.last().map(|k| k.time) != Some(self.duration) {
            return bad("duration differs from the last keyframe time".into());
        }
        for k in &self.keyframes {
            if k.rotations.len() != skeleton.joints().len() || !k.rotations.keys().all(|j| skeleton.contains(j)) {
                return bad(format!("keyframe at {} does not cover the skeleton's joints", k.time));
            }
        }
        Ok(())
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("clip serializes") + "\n"
    }

    pub fn from_json_str(s: &str) -> Result<Self, CompileError> {
        let clip: AnimationClip = serde_json::from_str(s)?;
        if clip.schema != CLIP_SCHEMA {
            return Err(CompileError::InvalidClip(format!("unsupported schema {}", clip.schema)));
        }
        Ok(clip)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, CompileError> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }
}

/// Neutral keyframe at 0, then the rule-mapped pose at every step end.
pub fn compile(plan: &AnimationPlan, rules: &RuleTable, skeleton: &Skeleton) -> Result<AnimationClip, CompileError> {
    if plan.frames.len() != plan.high_level.steps.len() {
        return Err(CompileError::InvalidClip(format!(
            "plan has {} frames for {} steps",
            plan.frames.len(),
            plan.high_level.steps.len()
        )));
    }
    let neutral = skeleton.neutral_pose();
    let mut keyframes = vec![Keyframe::from_pose(0.0, neutral.clone())];
    for (frame, step) in plan.frames.iter().zip(&plan.high_level.steps) {
        let mut pose = neutral.clone();
        for part in BodyPartId::ALL {
            pose = rules.apply_position(skeleton, &pose, part, frame.position(part))?;
        }
        keyframes.push(Keyframe::from_pose(step.end(), pose));
    }
    let clip = AnimationClip {
        schema: CLIP_SCHEMA.into(),
        skeleton_version: skeleton.version.clone(),
        rules_version: Some(rules.version.clone()),
        motion_id: Some(plan.motion_id()),
        source: ClipSource::Taxonomy,
        duration: keyframes.last().map(|k| k.time).unwrap_or(0.0),
        keyframes,
    };
    clip.validate(skeleton)?;
    Ok(clip)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RawCompileOptions {
    /// Clamp accumulated angles to [-180, 180].
    pub clamp: bool,
}

/// Accumulate per-step deltas onto the previous keyframe.
pub fn compile_raw(plan: &RawJointPlan, skeleton: &Skeleton, opts: RawCompileOptions) -> Result<AnimationClip, CompileError> {
    let mut pose = skeleton.neutral_pose();
    let mut keyframes = vec![Keyframe::from_pose(0.0, pose.clone())];
    let root = skeleton.root().name.clone();
    for step in &plan.steps {
        for j in &step.joints {
            let slot = pose.rotations.get_mut(&j.joint).ok_or_else(|| CompileError::UnknownJoint(j.joint.clone()))?;
            *slot = *slot + j.delta;
        }
        if let Some(r) = step.root_rotation {
            let slot = pose.rotations.get_mut(&root).expect("root joint present");
            *slot = *slot + r;
        }
        if let Some(t) = step.root_translation {
            for (p, d) in pose.root_translation.iter_mut().zip(t) {
                *p += d;
            }
        }
        let mut key = pose.clone();
        if opts.clamp {
            for r in key.rotations.values_mut() {
                *r = r.clamped(180.0);
            }
        }
        keyframes.push(Keyframe::from_pose(step.time_range[1], key));
    }
    let clip = AnimationClip {
        schema: CLIP_SCHEMA.into(),
        skeleton_version: skeleton.version.clone(),
        rules_version: None,
        motion_id: Some(plan.instruction.id),
        source: ClipSource::Raw,
        duration: keyframes.last().map(|k| k.time).unwrap_or(0.0),
        keyframes,
    };
    clip.validate(skeleton)?;
    Ok(clip)
}

fn lerp(a: f64, b: f64, alpha: f64) -> f64 {
    a + (b - a) * alpha
}

/// Pose at time `t`; exact at keyframe times.
pub fn sample(clip: &AnimationClip, t: f64) -> Result<Pose, CompileError> {
    if !(0.0..=clip.duration).contains(&t) {
        return Err(CompileError::OutOfRange { t, duration: clip.duration });
    }
    let keys = &clip.keyframes;
    if keys.is_empty() {
        return Err(CompileError::InvalidClip("no keyframes".into()));
    }
    let i = keys.partition_point(|k| k.time <= t);
    // keys[i - 1].time <= t < keys[i].time, or t is the final keyframe.
    let k0 = &keys[i - 1];
    if k0.time == t || i == keys.len() {
        return Ok(k0.pose());
    }
    let k1 = &keys[i];
    let alpha = (t - k0.time) / (k1.time - k0.time);
    let rotations = k0
        .rotations
        .iter()
        .map(|(j, r0)| {
            let r1 = k1.rotations.get(j).copied().unwrap_or(*r0);
            (j.clone(), r0.lerp(&r1, alpha))
        })
        .collect();
    let mut root_translation = [0.0; 3];
    for (o, (a, b)) in root_translation.iter_mut().zip(k0.root_translation.iter().zip(k1.root_translation)) {
        *o = lerp(*a, b, alpha);
    }
    Ok(Pose { rotations, root_translation })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    ClipJson,
    Bvh,
}

impl std::str::FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "clip-json" | "json" => Ok(ExportFormat::ClipJson),
            "bvh" => Ok(ExportFormat::Bvh),
            _ => Err(format!("unknown export format `{s}`")),
        }
    }
}

/// Number of BVH frames for a clip.
pub fn bvh_frame_count(duration: f64, fps: f64) -> usize {
    (duration * fps + 1e-9).floor() as usize + 1
}

fn fmt_f(v: f64) -> String {
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{v:.6}")
}

/// BVH text. Rotation channels are `Yrotation Xrotation Zrotation`, carrying
/// (yaw, -pitch, roll) so that the standard BVH composition reproduces the
/// skeleton's rotation convention.
pub fn to_bvh(clip: &AnimationClip, skeleton: &Skeleton, fps: f64) -> Result<String, CompileError> {
    if !(fps > 0.0) {
        return Err(CompileError::InvalidClip("fps must be > 0".into()));
    }
    let order = skeleton.preorder();
    let joints = skeleton.joints();
    let mut out = String::from("HIERARCHY\n");
    fn emit(out: &mut String, sk: &Skeleton, j: usize, depth: usize) {
        let ind = "  ".repeat(depth);
        let joint = &sk.joints()[j];
        let (kw, offset, channels) = if depth == 0 {
            ("ROOT", [0.0; 3], "CHANNELS 6 Xposition Yposition Zposition Yrotation Xrotation Zrotation")
        } else {
            ("JOINT", joint.offset, "CHANNELS 3 Yrotation Xrotation Zrotation")
        };
        let _ = writeln!(out, "{ind}{kw} {}", joint.name);
        let _ = writeln!(out, "{ind}{{");
        let _ = writeln!(out, "{ind}  OFFSET {} {} {}", fmt_f(offset[0]), fmt_f(offset[1]), fmt_f(offset[2]));
        let _ = writeln!(out, "{ind}  {channels}");
        let kids: Vec<usize> = sk.children(j).collect();
        if kids.is_empty() {
            let _ = writeln!(out, "{ind}  End Site");
            let _ = writeln!(out, "{ind}  {{");
            let _ = writeln!(out, "{ind}    OFFSET 0.000000 0.000000 0.000000");
            let _ = writeln!(out, "{ind}  }}");
        }
        for k in kids {
            emit(out, sk, k, depth + 1);
        }
        let _ = writeln!(out, "{ind}}}");
    }
    emit(&mut out, skeleton, order[0], 0);
    let frames = bvh_frame_count(clip.duration, fps);
    let _ = writeln!(out, "MOTION");
    let _ = writeln!(out, "Frames: {frames}");
    let _ = writeln!(out, "Frame Time: {:.8}", 1.0 / fps);
    let root_offset = joints[order[0]].offset;
    for i in 0..frames {
        let t = (i as f64 / fps).min(clip.duration);
        let pose = sample(clip, t)?;
        let mut vals: Vec<String> = Vec::with_capacity(3 + 3 * order.len());
        vals.extend(root_offset.iter().zip(pose.root_translation).map(|(o, t)| fmt_f(o + t)));
        for &j in &order {
            let r = pose.rotations.get(&joints[j].name).copied().unwrap_or_default();
            vals.push(fmt_f(r.x));
            vals.push(fmt_f(-r.y));
            vals.push(fmt_f(r.z));
        }
        let _ = writeln!(out, "{}", vals.join(" "));
    }
    Ok(out)
}

pub fn export_clip(
    clip: &AnimationClip,
    skeleton: &Skeleton,
    format: ExportFormat,
    fps: f64,
    path: impl AsRef<Path>,
) -> Result<(), CompileError> {
    if let Some(dir) = path.as_ref().parent() {
        std::fs::create_dir_all(dir)?;
    }
    let text = match format {
        ExportFormat::ClipJson => clip.to_json_string(),
        ExportFormat::Bvh => to_bvh(clip, skeleton, fps)?,
    };
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::high_level::{HighLevelPlan, HighLevelStep, HighStrategy, MotionInstruction};
    use crate::low_level::{LowStrategy, RawJointDelta, RawStep, StepPoseAssignment, RAW_PLAN_SCHEMA};

    fn one_step(part: BodyPartId, token: &str) -> AnimationPlan {
        let high = HighLevelPlan {
            instruction: MotionInstruction::new(1, "bend the left elbow"),
            strategy: HighStrategy::Manual,
            steps: vec![HighLevelStep {
                step_number: 1,
                time_range: [0.0, 2.0],
                movement: "m".into(),
                initial_state: "i".into(),
                final_state: "f".into(),
            }],
            warnings: vec![],
        };
        let mut frame = StepPoseAssignment::neutral(1);
        frame.positions.insert(part, token.into());
        AnimationPlan::from_frames(high, LowStrategy::Hierarchical, vec![frame])
    }

    fn raw(steps: Vec<(f64, f64, &str, EulerRotationDeg)>) -> RawJointPlan {
        RawJointPlan {
            schema: RAW_PLAN_SCHEMA.into(),
            instruction: MotionInstruction::new(1, "bend the left elbow"),
            steps: steps
                .into_iter()
                .enumerate()
                .map(|(i, (a, b, j, d))| RawStep {
                    step_number: i as u32 + 1,
                    time_range: [a, b],
                    joints: vec![RawJointDelta { joint: j.into(), direction: "bend".into(), delta: d }],
                    root_translation: None,
                    root_rotation: None,
                    flags: vec![],
                })
                .collect(),
            warnings: vec![],
        }
    }

    #[test]
    fn elbow_fixed_point() {
        let clip = compile(&one_step(BodyPartId::LeftElbow, "bent_in_90_degrees"), RuleTable::bundled(), Skeleton::bundled()).unwrap();
        assert_eq!(clip.keyframes.len(), 2);
        assert_eq!(clip.keyframes[1].time, 2.0);
        assert_eq!(clip.keyframes[1].rotations["m_avg_L_Elbow"], EulerRotationDeg::new(0.0, 90.0, 0.0));
        assert_eq!(sample(&clip, 0.0).unwrap(), Skeleton::bundled().neutral_pose());
        assert_eq!(sample(&clip, 1.0).unwrap().rotations["m_avg_L_Elbow"], EulerRotationDeg::new(0.0, 45.0, 0.0));
        assert!(matches!(sample(&clip, 2.5), Err(CompileError::OutOfRange { .. })));
    }

    #[test]
    fn raw_matches_taxonomy_on_shared_case() {
        let sk = Skeleton::bundled();
        let a = compile(&one_step(BodyPartId::LeftElbow, "bent_in_90_degrees"), RuleTable::bundled(), sk).unwrap();
        let b = compile_raw(&raw(vec![(0.0, 2.0, "m_avg_L_Elbow", EulerRotationDeg::new(0.0, 90.0, 0.0))]), sk, Default::default()).unwrap();
        assert_eq!(a.keyframes, b.keyframes);
    }

    #[test]
    fn raw_accumulates_and_clamps() {
        let sk = Skeleton::bundled();
        let d = EulerRotationDeg::new(0.0, 50.0, 0.0);
        let c = compile_raw(&raw(vec![(0.0, 1.0, "m_avg_L_Elbow", d), (1.0, 2.0, "m_avg_L_Elbow", d)]), sk, Default::default()).unwrap();
        assert_eq!(c.keyframes[1].rotations["m_avg_L_Elbow"].y, 50.0);
        assert_eq!(c.keyframes[2].rotations["m_avg_L_Elbow"].y, 100.0);
        let big = EulerRotationDeg::new(0.0, 400.0, 0.0);
        let plan = raw(vec![(0.0, 1.0, "m_avg_L_Elbow", big)]);
        assert_eq!(compile_raw(&plan, sk, Default::default()).unwrap().keyframes[1].rotations["m_avg_L_Elbow"].y, 400.0);
        assert_eq!(compile_raw(&plan, sk, RawCompileOptions { clamp: true }).unwrap().keyframes[1].rotations["m_avg_L_Elbow"].y, 180.0);
        let bad = raw(vec![(0.0, 1.0, "m_avg_Tail", d)]);
        assert!(matches!(compile_raw(&bad, sk, Default::default()), Err(CompileError::UnknownJoint(_))));
    }

    #[test]
    fn root_translation_interpolates() {
        let sk = Skeleton::bundled();
        let mut plan = raw(vec![(0.0, 2.0, "m_avg_L_Elbow", EulerRotationDeg::ZERO)]);
        plan.steps[0].root_translation = Some([0.0, 0.0, 2.0]);
        let clip = compile_raw(&plan, sk, Default::default()).unwrap();
        assert_eq!(sample(&clip, 1.0).unwrap().root_translation, [0.0, 0.0, 1.0]);
        assert_eq!(sample(&clip, 2.0).unwrap().root_translation, [0.0, 0.0, 2.0]);
    }

    #[test]
    fn clip_json_round_trip() {
        let clip = compile(&one_step(BodyPartId::RightKnee, "fully_bent"), RuleTable::bundled(), Skeleton::bundled()).unwrap();
        let back = AnimationClip::from_json_str(&clip.to_json_string()).unwrap();
        assert_eq!(back, clip);
        assert_eq!(back.to_json_string(), clip.to_json_string());
    }

    #[test]
    fn bvh_shape() {
        let sk = Skeleton::bundled();
        let clip = compile(&one_step(BodyPartId::LeftElbow, "bent_in_90_degrees"), RuleTable::bundled(), sk).unwrap();
        let text = to_bvh(&clip, sk, 30.0).unwrap();
        assert!(text.contains("Frames: 61\n"));
        let names: Vec<&str> = text
            .lines()
            .filter_map(|l| l.trim().strip_prefix("ROOT ").or_else(|| l.trim().strip_prefix("JOINT ")))
            .collect();
        let preorder: Vec<&str> = sk.preorder().into_iter().map(|i| sk.joints()[i].name.as_str()).collect();
        assert_eq!(names, preorder);
        let last = text.lines().last().unwrap();
        assert_eq!(last.split(' ').count(), 3 + 3 * 24);
        assert_eq!(bvh_frame_count(2.0, 60.0), 121);
        assert_eq!(bvh_frame_count(2.5, 30.0), 76);
    }
}
