mod commands;
mod config;
mod store;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use tod_core::extraction::Method;

use commands::RunContext;
use config::{Mode, PipelineConfig};
use store::Store;

#[derive(Parser)]
#[command(name = "tod", version, about = "Discourse-aware extraction of damages reasoning from copyright opinions")]
struct Cli {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Gateway mode, overriding the config.
    #[arg(long, global = true, value_enum)]
    mode: Option<Mode>,
    /// Fixture file for record and replay modes.
    #[arg(long, global = true)]
    fixtures: Option<PathBuf>,
    /// Seed for the train/test split and the random baseline.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split raw case exports into documents and extract citations.
    Ingest {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Gold labels (JSONL) to store with the corpus.
        #[arg(long)]
        gold: Option<PathBuf>,
    },
    /// Segment and label every opinion.
    Segment,
    /// Validate discourse trees and store them.
    RstImport {
        files: Vec<PathBuf>,
        /// Build a right-branching tree for documents without one.
        #[arg(long)]
        fallback: bool,
    },
    /// Split the labeled documents and optimize the plan prompt on the training part.
    Optimize {
        #[arg(long)]
        max_iterations: Option<u32>,
        #[arg(long)]
        minibatch: Option<usize>,
    },
    /// Run one method over the test documents.
    Extract {
        #[arg(long, value_parser = parse_method)]
        method: Method,
        /// Plan prompt to use instead of the stored one.
        #[arg(long)]
        prompt: Option<PathBuf>,
    },
    /// Score result files against gold labels.
    Evaluate {
        /// Result files; defaults to every stored method.
        #[arg(long = "results")]
        results: Vec<PathBuf>,
        #[arg(long)]
        gold: Option<PathBuf>,
    },
    /// Print the stored comparison report.
    Report,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest { .. } => "ingest",
            Command::Segment => "segment",
            Command::RstImport { .. } => "rst-import",
            Command::Optimize { .. } => "optimize",
            Command::Extract { .. } => "extract",
            Command::Evaluate { .. } => "evaluate",
            Command::Report => "report",
        }
    }
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|_| {
        let names: Vec<_> = Method::ALL.iter().map(|m| m.as_str()).collect();
        format!("unknown method {s:?}; expected one of {}", names.join(", "))
    })
}

fn context(cli: &Cli) -> Result<RunContext> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(mode) = cli.mode {
        config.gateway.mode = mode;
    }
    if let Some(f) = &cli.fixtures {
        config.gateway.fixtures = Some(f.clone());
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    config.validate()?;
    if let Some(n) = config.parallelism {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let seed = cli.seed.unwrap_or(config.split.seed);
    Ok(RunContext {
        store: Store {
            dir: config.output_dir.clone(),
        },
        config,
        seed,
    })
}

fn run(cli: &Cli) -> Result<()> {
    let ctx = context(cli)?;
    match &cli.command {
        Command::Ingest { inputs, gold } => commands::ingest(&ctx, inputs, gold.as_deref()),
        Command::Segment => commands::segment(&ctx),
        Command::RstImport { files, fallback } => commands::rst_import(&ctx, files, *fallback),
        Command::Optimize { max_iterations, minibatch } => commands::optimize_cmd(&ctx, *max_iterations, *minibatch),
        Command::Extract { method, prompt } => commands::extract(&ctx, *method, prompt.as_deref()),
        Command::Evaluate { results, gold } => commands::evaluate(&ctx, results, gold.as_deref()),
        Command::Report => commands::report(&ctx),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({"command": cli.command.name(), "error": format!("{e:#}")});
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
