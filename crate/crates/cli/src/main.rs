use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand};
use osp_core::pipeline::{load_config, run_pipeline, write_outputs, Baseline, RunConfig, RunOutput, REFERENCE_LABEL};
use osp_core::{Error, Execution};

/// Optimal sensor placement on uniform shear buildings.
#[derive(Parser)]
#[command(name = "osp", version)]
struct Cli {
    /// Worker threads for the data-parallel stages (default: all cores).
    #[arg(long, env = "OSP_THREADS", global = true, hide_env_values = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the optimal placement and write the report.
    Place {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        quiet: bool,
    },
    /// Score the solver placement against the listed baseline layouts.
    Compare {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated labels: z_low, z_high, z_common, z_greedy, z_exhaustive.
        #[arg(long, value_delimiter = ',', required = true)]
        configs: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the solver placement against exhaustive enumeration.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        exhaustive_cap: u64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(path: &Path, seed: Option<u64>) -> anyhow::Result<RunConfig> {
    let mut cfg = load_config(path)
        .map_err(|e| e.at("config"))
        .with_context(|| format!("reading {}", path.display()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run(cfg: &RunConfig, out: Option<PathBuf>) -> anyhow::Result<RunOutput> {
    let output = run_pipeline(cfg, Execution::default())?;
    if let Some(dir) = out.or_else(|| cfg.output_dir.clone()) {
        write_outputs(&output, &dir)
            .map_err(|e| e.at("report"))
            .with_context(|| format!("writing outputs to {}", dir.display()))?;
    }
    Ok(output)
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("OSP_THREADS must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Place {
            config,
            seed,
            out,
            quiet,
        } => {
            let cfg = load(&config, seed)?;
            let output = run(&cfg, out)?;
            if !quiet {
                print!("{}", output.report.to_table());
            }
        }
        Command::Compare {
            config,
            configs,
            seed,
            out,
        } => {
            let mut cfg = load(&config, seed)?;
            cfg.baselines = configs
                .iter()
                .filter(|l| l.as_str() != REFERENCE_LABEL)
                .map(|l| Baseline::from_label(l).ok_or_else(|| anyhow!("unknown configuration label {l}")))
                .collect::<anyhow::Result<_>>()
                .map_err(|e| e.context("config stage failed"))?;
            let output = run(&cfg, out)?;
            print!("{}", output.report.to_table());
        }
        Command::Oracle {
            config,
            exhaustive_cap,
            seed,
            out,
        } => {
            let mut cfg = load(&config, seed)?;
            cfg.baselines = vec![Baseline::ZExhaustive];
            cfg.solver.enumeration_cap = exhaustive_cap;
            let output = run(&cfg, out)?;
            let report = &output.report;
            if let Some(reason) = report.skipped.get(Baseline::ZExhaustive.label()) {
                return Err(anyhow!("{reason}").context("oracle stage failed"));
            }
            let row = |label: &str| {
                report
                    .comparison
                    .rows
                    .iter()
                    .find(|r| r.label == label)
                    .expect("row present")
            };
            let (solver, oracle) = (row(REFERENCE_LABEL), row(Baseline::ZExhaustive.label()));
            let diff = oracle.objective - solver.objective;
            println!(
                "solver     {:?}  E[log det Q] = {:.12}",
                solver.stories, solver.objective
            );
            println!(
                "exhaustive {:?}  E[log det Q] = {:.12}",
                oracle.stories, oracle.objective
            );
            if diff > 1e-9 * oracle.objective.abs().max(1.0) {
                bail!("oracle stage failed: solver placement is {diff:.3e} below the exhaustive optimum");
            }
            println!("match");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut msg = format!("osp: {e}");
            let mut source = e.source();
            while let Some(s) = source {
                msg.push_str(&format!(": {s}"));
                source = s.source();
            }
            eprintln!("{msg}");
            match e.downcast_ref::<Error>() {
                Some(Error::Config(_)) | Some(Error::Stage { .. }) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
