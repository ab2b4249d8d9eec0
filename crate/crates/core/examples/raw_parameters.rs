//! The raw-parameter baseline: the model names joints and angles directly,
//! without the taxonomy.

mod support;

use motion_ground::compiler::{self, RawCompileOptions};
use motion_ground::corpus::Corpus;
use motion_ground::high_level::HighLevelOptions;
use motion_ground::llm::{SessionFactory, SessionTags};
use motion_ground::low_level::plan_raw_parameters;
use motion_ground::skeleton::Skeleton;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sk = Skeleton::bundled();
    let client = support::client();
    let instr = Corpus::bundled().get(3).expect("instruction 3").clone();
    let mut session = client.new_session(SessionTags::new("raw", Some(instr.id)))?;
    let plan = plan_raw_parameters(&instr, &mut session, sk, &HighLevelOptions::default())?;
    for step in &plan.steps {
        for d in &step.joints {
            println!("step {}: {} ({}) {:?}", step.step_number, d.joint, d.direction, [d.delta.x, d.delta.y, d.delta.z]);
        }
    }
    for w in &plan.warnings {
        println!("warning: {w}");
    }
    let clip = compiler::compile_raw(&plan, sk, RawCompileOptions { clamp: true })?;
    let last = clip.keyframes.last().expect("keyframes");
    println!("final elbow {:?}, clip {:.1}s", last.rotations["m_avg_L_Elbow"], clip.duration);
    Ok(())
}
