use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use motion_ground::corpus::Corpus;
use motion_ground::eval::KappaWeighting;
use motion_ground::high_level::HighStrategy;
use motion_ground::llm::{LlmConfig, ReplayScript};
use motion_ground::low_level::LowStrategy;
use motion_ground::prompts::FormatNotes;
use motion_ground::run::{self, CompileOptions, LlmSource, PlanOptions, ReportOptions};
use motion_ground::service::{self, ServeOptions};
use motion_ground::skeleton::{RuleTable, Skeleton};
use motion_ground::taxonomy::{validate_taxonomy, PoseTaxonomy};

/// Plan, compile, evaluate and annotate motion runs.
///
/// Exit status: 0 success, 1 partial output, 2 no usable output.
#[derive(Debug, Parser)]
#[command(name = "motionctl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Query the model for high- and low-level plans of each instruction.
    Plan(PlanArgs),
    /// Turn plans into clip-json files (and optionally BVH).
    Compile(CompileArgs),
    /// Score plans against oracle annotations and write summary tables.
    Evaluate(EvaluateArgs),
    /// Run the annotation service for human raters.
    Serve(ServeArgs),
    /// Final tables from ratings: score statistics, BPQ, agreement.
    Report(ReportArgs),
    /// Check the taxonomy, skeleton and rotation rules.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
struct PlanArgs {
    /// Run directory to create.
    run_dir: PathBuf,
    /// Instruction ids (comma separated); defaults to the whole corpus.
    #[arg(long, value_delimiter = ',')]
    instructions: Option<Vec<u32>>,
    /// Instruction corpus JSON; defaults to the bundled twenty.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// piece_by_piece or in_one_go.
    #[arg(long, default_value = "piece_by_piece")]
    high: HighStrategy,
    /// hierarchical, one_by_one or all.
    #[arg(long, default_value = "hierarchical")]
    low: LowStrategy,
    /// Ask for raw joint rotations instead of taxonomy positions.
    #[arg(long)]
    raw: bool,
    /// Skip the self-reflection round.
    #[arg(long)]
    no_reflection: bool,
    /// Leave format notes off the prompts.
    #[arg(long)]
    no_format_notes: bool,
    /// Independent repetitions, written to run-1, run-2, ...
    #[arg(long, default_value_t = 1)]
    runs: u32,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Directory of motion-NN.json high-level plans to use as given.
    #[arg(long)]
    fixed_high: Option<PathBuf>,
    /// LLM config file (.toml or .json).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model name, overriding the config.
    #[arg(long)]
    model: Option<String>,
    /// Replay transcripts from an earlier run directory instead of calling the model.
    #[arg(long, conflicts_with = "script")]
    replay: Option<PathBuf>,
    /// Replay one scripted reply list, in order.
    #[arg(long)]
    script: Option<PathBuf>,
    /// Tolerate replay mismatches instead of failing.
    #[arg(long)]
    lenient: bool,
    /// Seed for annotation balancing, recorded in the manifest.
    #[arg(long)]
    seed: Option<u64>,
    /// Replace an existing run directory's manifest.
    #[arg(long)]
    overwrite: bool,
}

#[derive(Debug, Args)]
struct CompileArgs {
    run_dir: PathBuf,
    #[arg(long, default_value_t = 30.0)]
    fps: f64,
    /// Also write BVH files.
    #[arg(long)]
    bvh: bool,
    /// Clamp raw-mode angles to [-180, 180].
    #[arg(long)]
    clamp: bool,
    /// Oracle annotations to compile into clips/oracle/.
    #[arg(long)]
    oracle: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    run_dir: PathBuf,
    /// Directory of motion-NN.json oracle annotations.
    #[arg(long)]
    oracle: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    run_dir: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: SocketAddr,
    /// Built UI assets.
    #[arg(long)]
    ui: Option<PathBuf>,
    /// Rater roster (comma separated) for fixed assignment.
    #[arg(long, value_delimiter = ',')]
    raters: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    run_dir: PathBuf,
    /// Ratings export (JSONL); defaults to the run's ratings/ directory.
    #[arg(long)]
    ratings: Option<PathBuf>,
    /// linear or quadratic.
    #[arg(long, default_value = "linear")]
    weighting: KappaWeighting,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long)]
    taxonomy: Option<PathBuf>,
    #[arg(long)]
    skeleton: Option<PathBuf>,
    #[arg(long)]
    rules: Option<PathBuf>,
}

fn fatal(e: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(2)
}

fn plan(a: PlanArgs) -> Result<i32, run::RunError> {
    let mut opts = PlanOptions::new(&a.run_dir);
    if let Some(c) = &a.corpus {
        opts.corpus = Corpus::from_path(c)?;
    }
    opts.instruction_ids = a.instructions;
    opts.high = a.high;
    opts.low = a.low;
    opts.raw = a.raw;
    opts.reflection = !a.no_reflection;
    opts.notes = if a.no_format_notes { FormatNotes::Off } else { FormatNotes::On };
    opts.runs = a.runs;
    opts.jobs = a.jobs;
    opts.fixed_high_dir = a.fixed_high;
    opts.overwrite = a.overwrite;
    if let Some(s) = a.seed {
        opts.annotation.seed = s;
    }
    let source = if let Some(path) = a.replay {
        LlmSource::ReplayDir { path, strict: !a.lenient }
    } else if let Some(path) = a.script {
        LlmSource::Script { script: ReplayScript::from_path(&path)?, strict: !a.lenient, model_name: a.model }
    } else {
        let mut cfg = match &a.config {
            Some(p) => run::load_llm_config(p)?,
            None => LlmConfig::default(),
        };
        if let Some(m) = a.model {
            cfg.model_name = m;
        }
        LlmSource::Live(cfg)
    };
    let out = run::cmd_plan(&opts, source)?;
    println!("planned: {} ok, {} partial, {} failed", out.ok, out.partial, out.failed);
    for d in &out.run_dirs {
        println!("{}", d.display());
    }
    Ok(out.exit_code())
}

fn validate(a: ValidateArgs) -> i32 {
    let taxonomy = match &a.taxonomy {
        Some(p) => match PoseTaxonomy::from_path(p) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("taxonomy: {e}");
                return 2;
            }
        },
        None => PoseTaxonomy::bundled().clone(),
    };
    let violations = validate_taxonomy(&taxonomy);
    for v in &violations {
        println!("taxonomy: {v}");
    }
    let skeleton = match &a.skeleton {
        Some(p) => Skeleton::from_path(p),
        None => Ok(Skeleton::bundled().clone()),
    };
    let skeleton = match skeleton {
        Ok(s) => s,
        Err(e) => {
            println!("skeleton: {e}");
            return 2;
        }
    };
    let rules = match &a.rules {
        Some(p) => RuleTable::from_path(p, &taxonomy, &skeleton).map(|_| ()),
        None => RuleTable::from_json_str(include_str!("../../data/rules.json"), &taxonomy, &skeleton).map(|_| ()),
    };
    let mut bad = !violations.is_empty();
    if let Err(e) = rules {
        println!("rules: {e}");
        bad = true;
    }
    if bad {
        2
    } else {
        println!(
            "ok: taxonomy {} ({} parts), skeleton {} ({} joints)",
            taxonomy.version,
            taxonomy.parts.len(),
            skeleton.version,
            skeleton.joints().len()
        );
        0
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Plan(a) => match plan(a) {
            Ok(c) => c,
            Err(e) => return fatal(e),
        },
        Command::Compile(a) => {
            let opts = CompileOptions { fps: a.fps, bvh: a.bvh, clamp: a.clamp, oracle_dir: a.oracle };
            match run::cmd_compile(&a.run_dir, &opts) {
                Ok(out) => {
                    for e in &out.errors {
                        eprintln!("{e}");
                    }
                    println!("{} files written", out.clips.len());
                    out.exit_code()
                }
                Err(e) => return fatal(e),
            }
        }
        Command::Evaluate(a) => match run::cmd_evaluate(&a.run_dir, a.oracle.as_deref()) {
            Ok(out) => {
                for m in &out.missing {
                    eprintln!("missing: {m}");
                }
                print!("{}", out.summary.to_text());
                out.exit_code()
            }
            Err(e) => return fatal(e),
        },
        Command::Serve(a) => {
            let opts = ServeOptions { ui_dir: a.ui, raters: a.raters, seed: a.seed };
            match service::serve(&a.run_dir, a.bind, &opts) {
                Ok(()) => 0,
                Err(e) => return fatal(e),
            }
        }
        Command::Report(a) => {
            let opts = ReportOptions { ratings: a.ratings, weighting: a.weighting };
            match run::cmd_report(&a.run_dir, &opts) {
                Ok(r) => {
                    print!("{}", r.to_text());
                    0
                }
                Err(e) => return fatal(e),
            }
        }
        Command::Validate(a) => validate(a),
    };
    ExitCode::from(code as u8)
}
