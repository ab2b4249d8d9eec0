//! Compile a hand-written plan and write it as clip-json and BVH.
//!
//!     cargo run --example bvh_export [out-dir] [fps]

use std::path::PathBuf;

use motion_ground::compiler::{self, ExportFormat};
use motion_ground::corpus::Corpus;
use motion_ground::high_level::{HighLevelPlan, HighLevelStep, HighStrategy};
use motion_ground::low_level::{AnimationPlan, LowStrategy, StepPoseAssignment};
use motion_ground::skeleton::{RuleTable, Skeleton};
use motion_ground::taxonomy::BodyPartId;

fn step(n: u32, start: f64, end: f64, what: &str) -> HighLevelStep {
    HighLevelStep {
        step_number: n,
        time_range: [start, end],
        movement: what.into(),
        initial_state: "see previous step".into(),
        final_state: what.into(),
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("motion-ground-bvh"));
    let fps: f64 = std::env::args().nth(2).map(|s| s.parse()).transpose()?.unwrap_or(compiler::DEFAULT_FPS);

    let high = HighLevelPlan {
        instruction: Corpus::bundled().get(3).expect("instruction 3").clone(),
        strategy: HighStrategy::Manual,
        steps: vec![step(1, 0.0, 1.0, "raise the left forearm"), step(2, 1.0, 1.6, "look down at the watch")],
        warnings: vec![],
    };
    let mut s1 = StepPoseAssignment::neutral(1);
    s1.positions.insert(BodyPartId::LeftUpperArm, "neutral_to_forward".into());
    s1.positions.insert(BodyPartId::LeftElbow, "bent_in_90_degrees".into());
    let mut s2 = s1.clone();
    s2.step_number = 2;
    s2.positions.insert(BodyPartId::Head, "tilted_down_slightly".into());
    let plan = AnimationPlan::from_frames(high, LowStrategy::Hierarchical, vec![s1, s2]);

    let sk = Skeleton::bundled();
    let clip = compiler::compile(&plan, RuleTable::bundled(), sk)?;
    let json = out.join("watch.clip.json");
    let bvh = out.join("watch.bvh");
    compiler::export_clip(&clip, sk, ExportFormat::ClipJson, fps, &json)?;
    compiler::export_clip(&clip, sk, ExportFormat::Bvh, fps, &bvh)?;
    println!("{} keyframes, {:.1}s", clip.keyframes.len(), clip.duration);
    println!("{}", json.display());
    println!("{} ({} frames at {fps} fps)", bvh.display(), compiler::bvh_frame_count(clip.duration, fps));
    Ok(())
}
