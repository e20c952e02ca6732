use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use goaldir_core::agents::AgentSpec;
use goaldir_core::exec::ExecMode;
use goaldir_core::harness::{
    analyze_dir, read_bundle, report, run_matrix, write_bundle, AnalyzeOptions, HarnessError, ResultsBundle,
    RunConfig, Seeds,
};
use goaldir_core::tasks::{PromptVariant, TaskId};

/// Goal-directedness evaluation harness for Blocksworld agents.
#[derive(Parser)]
#[command(name = "goaldir", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the episode matrix, then analyze and report when possible.
    Run(Box<RunArgs>),
    /// Build capability profiles, run the Monte Carlo estimators and the
    /// bootstrap, and write bundle.json plus the report tables.
    Analyze(AnalyzeArgs),
    /// Rewrite the report tables from an existing bundle.json.
    Report {
        #[arg(long = "in", value_name = "DIR")]
        input: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration; every field has a default.
    #[arg(long)]
    config: Option<PathBuf>,
    /// random, oracle[:k] or noisy[:laziness]; remote agents need a config file.
    #[arg(long)]
    agent: Option<AgentSpec>,
    /// Agent for the capability subtasks, when it differs from --agent.
    #[arg(long)]
    capability_agent: Option<AgentSpec>,
    #[arg(long, value_delimiter = ',')]
    tasks: Option<Vec<TaskId>>,
    #[arg(long, value_delimiter = ',')]
    blocks: Option<Vec<usize>>,
    /// A count (seeds 0..n) or a comma-separated list.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    prompt: Option<PromptVariant>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Run episodes and estimators on one thread.
    #[arg(long)]
    sequential: bool,
    /// Only run episodes.
    #[arg(long)]
    no_analyze: bool,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long = "in", value_name = "DIR")]
    input: PathBuf,
    #[arg(long)]
    mc_iterations: Option<usize>,
    #[arg(long)]
    bootstrap: Option<usize>,
    #[arg(long)]
    sequential: bool,
}

fn parse_seeds(s: &str) -> Result<Seeds> {
    if s.contains(',') {
        let list = s.split(',').map(|x| x.trim().parse::<u64>()).collect::<Result<Vec<_>, _>>()?;
        Ok(Seeds::List(list))
    } else {
        Ok(Seeds::Count(s.trim().parse().with_context(|| format!("bad seed count '{s}'"))?))
    }
}

fn build_config(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(a) = &args.agent {
        cfg.agent = a.clone();
    }
    if let Some(a) = &args.capability_agent {
        cfg.capability_agent = Some(a.clone());
    }
    if let Some(t) = &args.tasks {
        cfg.tasks = t.clone();
    }
    if let Some(b) = &args.blocks {
        cfg.blocks = b.clone();
    }
    if let Some(s) = &args.seeds {
        cfg.seeds = parse_seeds(s)?;
    }
    if let Some(p) = args.prompt {
        cfg.prompt = p;
    }
    if let Some(o) = &args.out {
        cfg.out = o.clone();
    }
    if args.sequential {
        cfg.exec = ExecMode::Sequential;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_gd(bundle: &ResultsBundle) {
    for (task, result) in &bundle.results {
        match &result.estimate {
            Some(e) => println!(
                "{task:<32} GD {:>7.3}  95% CI [{:.3}, {:.3}]",
                e.aggregate, e.ci_low, e.ci_high
            ),
            None => println!("{task:<32} GD undefined: {}", result.errors.join("; ")),
        }
    }
}

fn analyze_and_report(dir: &Path, opts: &AnalyzeOptions) -> Result<()> {
    let bundle = analyze_dir(dir, opts)?;
    let path = write_bundle(&bundle, dir)?;
    let files = report(&bundle, dir)?;
    print_gd(&bundle);
    println!("wrote {} and {} report files under {}", path.display(), files.len(), dir.join("report").display());
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run(args) => {
            let cfg = build_config(&args)?;
            let summary = run_matrix(&cfg)?;
            println!(
                "{} episodes run, {} already complete; statuses: {:?}",
                summary.executed, summary.skipped, summary.statuses
            );
            if args.no_analyze {
                return Ok(());
            }
            match analyze_and_report(&cfg.out, &AnalyzeOptions::default()) {
                Err(e) if matches!(e.downcast_ref::<HarnessError>(), Some(HarnessError::MissingSubtask { .. })) => {
                    println!("no GD analysis: {e}");
                    Ok(())
                }
                other => other,
            }
        }
        Command::Analyze(args) => analyze_and_report(
            &args.input,
            &AnalyzeOptions {
                mc_iterations: args.mc_iterations,
                bootstrap: args.bootstrap,
                exec: args.sequential.then_some(ExecMode::Sequential),
            },
        ),
        Command::Report { input } => {
            let bundle = read_bundle(&input)?;
            let files = report(&bundle, &input)?;
            for f in files {
                println!("{}", f.display());
            }
            Ok(())
        }
    }
}
