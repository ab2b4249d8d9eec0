//! Plan one instruction against a real chat-completions endpoint and record
//! the transcripts so the run can be replayed later.
//!
//!     OPENAI_API_KEY=... cargo run --example live_planning -- [instruction-id] [config.toml]

use std::path::PathBuf;

use motion_ground::llm::LlmConfig;
use motion_ground::run::{self, LlmSource, PlanOptions};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let id: u32 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let config = match std::env::args().nth(2) {
        Some(p) => run::load_llm_config(&PathBuf::from(p)).unwrap_or_else(|e| {
            eprintln!("{e}");
            std::process::exit(2)
        }),
        None => LlmConfig::default(),
    };
    let dir = PathBuf::from(format!("runs/live-motion-{id:02}"));
    let mut opts = PlanOptions::new(&dir);
    opts.instruction_ids = Some(vec![id]);
    opts.overwrite = true;
    match run::cmd_plan(&opts, LlmSource::Live(config)) {
        Ok(out) => {
            println!("{} ok, {} partial, {} failed; transcripts in {}", out.ok, out.partial, out.failed, dir.join("transcripts").display());
            std::process::exit(out.exit_code());
        }
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(2);
        }
    }
}
