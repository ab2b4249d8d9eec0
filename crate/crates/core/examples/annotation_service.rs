//! Build a small run with the scripted model, compile it, and serve it to
//! raters. Open http://127.0.0.1:8080/tasks?rater=you to see the queue.
//!
//!     cargo run --example annotation_service [bind-addr]

mod support;

use std::sync::Arc;

use motion_ground::run::{self, CompileOptions, LlmSource, PlanOptions};
use motion_ground::service::{self, ServeOptions, ServiceState};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let addr = std::env::args().nth(1).unwrap_or_else(|| "127.0.0.1:8080".into()).parse()?;
    let dir = tempfile::tempdir()?;
    let root = dir.path().join("demo-run");

    let mut opts = PlanOptions::new(&root);
    opts.instruction_ids = Some(vec![1, 3, 7]);
    run::cmd_plan(&opts, LlmSource::Factory(Arc::new(support::client())))?;
    run::cmd_compile(&root, &CompileOptions::default())?;

    let state = ServiceState::load(&root, &ServeOptions::default())?;
    for t in state.tasks() {
        println!("{} {:?} motion {}", t.task_id, t.target_kind, t.motion_id);
    }
    println!("ratings go to {}", state.ratings_path().display());
    service::serve(&root, addr, &ServeOptions::default())?;
    Ok(())
}
