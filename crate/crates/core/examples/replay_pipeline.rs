//! Plan two instructions with a scripted model, then replay the recorded
//! transcripts into a second run and check that the plans match byte for byte.
//!
//!     cargo run --example replay_pipeline [out-dir]

mod support;

use std::path::PathBuf;
use std::sync::Arc;

use motion_ground::low_level::AnimationPlan;
use motion_ground::run::{self, CompileOptions, LlmSource, PlanOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::init();
    let tmp = tempfile::tempdir()?;
    let out: PathBuf = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| tmp.path().to_path_buf());

    let recorded = out.join("recorded");
    let mut opts = PlanOptions::new(&recorded);
    opts.instruction_ids = Some(vec![3, 4]);
    opts.overwrite = true;
    let first = run::cmd_plan(&opts, LlmSource::Factory(Arc::new(support::client())))?;
    println!("recorded: {} ok, {} failed", first.ok, first.failed);

    let replayed = out.join("replayed");
    let mut opts = PlanOptions::new(&replayed);
    opts.instruction_ids = Some(vec![3, 4]);
    opts.overwrite = true;
    run::cmd_plan(&opts, LlmSource::ReplayDir { path: recorded.clone(), strict: true })?;

    for stem in ["motion-03", "motion-04"] {
        let a = std::fs::read(recorded.join("plans_low").join(format!("{stem}.json")))?;
        let b = std::fs::read(replayed.join("plans_low").join(format!("{stem}.json")))?;
        println!("{stem}: replay {}", if a == b { "identical" } else { "DIFFERS" });
    }

    let plan = AnimationPlan::from_path(replayed.join("plans_low/motion-03.json"))?;
    for f in &plan.frames {
        let moved: Vec<String> = f
            .positions
            .iter()
            .filter(|(_, t)| t.as_str() != "neutral")
            .map(|(p, t)| format!("{p}={t}"))
            .collect();
        println!("step {}: {}", f.step_number, moved.join(", "));
    }

    let compiled = run::cmd_compile(&replayed, &CompileOptions::default())?;
    println!("{} clips under {}", compiled.clips.len(), replayed.join("clips").display());
    Ok(())
}
