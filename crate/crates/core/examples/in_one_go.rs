//! Ask for the whole high-level plan in a single reply, then pick every
//! part's position from the full option list.

mod support;

use motion_ground::corpus::Corpus;
use motion_ground::high_level::{plan_high_level, HighLevelOptions, HighStrategy};
use motion_ground::llm::{SessionFactory, SessionTags};
use motion_ground::low_level::{build_animation_plan, LowLevelOptions, LowStrategy};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let client = support::client();
    let instr = Corpus::bundled().get(3).expect("instruction 3").clone();
    println!("{}", instr.text);

    let mut session = client.new_session(SessionTags::new("in_one_go", Some(instr.id)))?;
    let high = plan_high_level(HighStrategy::InOneGo, &instr, &mut session, &HighLevelOptions::default())?;
    for s in &high.steps {
        println!("  step {} [{:.1}, {:.1}] {}", s.step_number, s.time_range[0], s.time_range[1], s.movement);
    }
    println!("{} chat turns", session.user_turns());

    let opts = LowLevelOptions { strategy: LowStrategy::All, ..LowLevelOptions::default() };
    let plan = build_animation_plan(&high, &opts, &client)?;
    for f in &plan.frames {
        let moved: Vec<String> =
            f.positions.iter().filter(|(_, t)| t.as_str() != "neutral").map(|(p, t)| format!("{p}={t}")).collect();
        println!("step {}: {}", f.step_number, moved.join(", "));
    }
    println!("{} warnings", plan.warnings.len());
    Ok(())
}
