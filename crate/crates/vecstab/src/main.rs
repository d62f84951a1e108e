use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use vecstab::config::{LfSource, RunConfig, RunMode};
use vecstab::core::certify::Verdict;
use vecstab::pipeline::{self, EXIT_ERROR};

/// Vector-Lyapunov stability certification of interconnected polynomial systems.
///
/// Exit codes: 0 exponentially stable (or success), 2 converges to a limit
/// set, 3 inconclusive/infeasible, 4 validation found violations, 1 errors.
#[derive(Parser, Debug)]
#[command(name = "vecstab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the seeded oscillator network to network.json.
    Generate,
    /// Certify the network: report.json and rounds.csv.
    Certify,
    /// Single-CS tables over the level grid: sweep.csv, sweep_summary.csv.
    Sweep,
    /// Simulate from the certified envelope: validation.csv, trajectories/.
    Validate,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON run configuration; flags below override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// single-traditional | single-direct | multiple-sequential | multiple-parallel
    #[arg(long, global = true)]
    mode: Option<String>,
    /// quad | file:PATH
    #[arg(long, global = true)]
    lf: Option<String>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Concurrent solves per round.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

fn config(c: &Common) -> anyhow::Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply_env(|k| std::env::var(k).ok())?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(m) = &c.mode {
        cfg.mode = m.parse::<RunMode>()?;
    }
    if let Some(l) = &c.lf {
        cfg.lf = l.parse::<LfSource>()?;
    }
    if let Some(o) = &c.out {
        cfg.out = o.clone();
    }
    if let Some(j) = c.jobs {
        cfg.jobs = j;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> anyhow::Result<i32> {
    let cfg = config(&cli.common)?;
    match cli.command {
        Command::Generate => {
            let path = pipeline::cmd_generate(&cfg).context("generate")?;
            println!("wrote {}", path.display());
            Ok(0)
        }
        Command::Certify => {
            let (rep, code) = pipeline::cmd_certify(&cfg).context("certify")?;
            match rep.verdict() {
                Verdict::ExponentiallyStable => println!("{}: exponentially stable", cfg.mode),
                Verdict::ConvergesToLimitSet(g) => println!("{}: converges to the limit set {g:?}", cfg.mode),
                Verdict::Inconclusive(r) => println!("{}: inconclusive ({r})", cfg.mode),
            }
            Ok(code)
        }
        Command::Sweep => {
            let rows = pipeline::cmd_sweep(&cfg).context("sweep")?;
            println!("wrote {} sweep rows to {}", rows.len(), cfg.out.display());
            Ok(0)
        }
        Command::Validate => {
            let (rows, code) = pipeline::cmd_validate(&cfg).context("validate")?;
            let failed = rows.iter().filter(|r| !r.ok).count();
            println!("validated {} trajectories, {failed} with violations", rows.len());
            Ok(code)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
