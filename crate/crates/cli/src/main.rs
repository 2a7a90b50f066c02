use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use xpop_core::config::ConfigError;
use xpop_core::runner::{self, RunError};
use xpop_core::theory::run_theory;
use xpop_core::RunConfig;

const OUTPUT_ENV: &str = "XPOP_OUTPUT_DIR";

#[derive(Parser)]
#[command(name = "xpop", version, about = "Cross-population evaluation of multi-channel classifiers")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic corpus described by the config.
    Synth {
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Run every evaluation plan, skipping plans that are already complete.
    Run {
        #[arg(short, long)]
        config: PathBuf,
        /// Minimum recording duration in seconds.
        #[arg(long)]
        min_seconds: Option<f64>,
        /// Worker threads (0 = all cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Output root, overriding the config.
        #[arg(long, env = OUTPUT_ENV)]
        output: Option<PathBuf>,
    },
    /// Build tables and channel maps from a completed run.
    Report {
        /// Run directory; defaults to the output directory of --config.
        dir: Option<PathBuf>,
        #[arg(short, long, conflicts_with = "dir")]
        config: Option<PathBuf>,
        #[arg(long, env = OUTPUT_ENV, conflicts_with = "dir")]
        output: Option<PathBuf>,
    },
    /// Check the generalization bounds on random finite instances.
    Theory {
        #[arg(long, default_value_t = 10)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        bound: usize,
        #[arg(long, default_value_t = 500)]
        contraction: usize,
        #[arg(long, default_value_t = 200)]
        projection: usize,
        /// Also write the report to this file.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

/// A failure carrying its process exit code.
#[derive(Debug)]
struct Exit(u8, String);

impl std::fmt::Display for Exit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.1)
    }
}

impl std::error::Error for Exit {}

fn load_config(path: &Path, output: Option<PathBuf>) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(o) = output {
        cfg.output_dir = o;
    }
    Ok(cfg)
}

fn synth(config: &Path) -> Result<()> {
    let cfg = load_config(config, None)?;
    let manifests = runner::synthesize(&cfg)?;
    for m in &manifests {
        let (control, case) = m.label_counts();
        println!(
            "{}\t{} Hz\t{} channels\t{} control\t{} case",
            m.population_id,
            m.sample_rate_hz,
            m.site_montage.len(),
            control,
            case
        );
    }
    println!("corpus written to {}", cfg.corpus_path().display());
    Ok(())
}

fn run(config: &Path, min_seconds: Option<f64>, threads: Option<usize>, output: Option<PathBuf>) -> Result<()> {
    let mut cfg = load_config(config, output)?;
    if let Some(s) = min_seconds {
        cfg.min_duration_s = s;
    }
    if let Some(t) = threads {
        cfg.parallelism = t;
    }
    let summary = runner::run(&cfg)?;
    println!(
        "{} plans ({} computed, {} reused) in {}",
        summary.total,
        summary.computed,
        summary.reused,
        cfg.output_path().display()
    );
    Ok(())
}

fn report(dir: Option<PathBuf>, config: Option<PathBuf>, output: Option<PathBuf>) -> Result<()> {
    let dir = match (dir, config) {
        (Some(d), _) => d,
        (None, Some(c)) => load_config(&c, output)?.output_path(),
        (None, None) => output.ok_or_else(|| {
            ConfigError(format!("report needs a run directory, --config, or {OUTPUT_ENV}"))
        })?,
    };
    let data = runner::report(&dir)?;
    let skipped: Vec<_> = data.scaling.iter().filter(|r| r.fit.is_none()).collect();
    if let Some(first) = skipped.first() {
        log::warn!("{} scaling regressions not fitted ({})", skipped.len(), first.note);
    }
    println!("report written to {}", dir.join(runner::REPORT_DIR).display());
    Ok(())
}

fn theory(seed: u64, counts: [usize; 3], out: Option<PathBuf>) -> Result<()> {
    let report = run_theory(seed, counts[0], counts[1], counts[2]);
    let text = report.to_text();
    print!("{text}");
    if let Some(p) = out {
        std::fs::write(&p, &text).with_context(|| format!("writing {}", p.display()))?;
    }
    if !report.passed() {
        return Err(Exit(3, "theory checks found violations".into()).into());
    }
    Ok(())
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if let Some(Exit(c, _)) = e.downcast_ref::<Exit>() {
        return *c;
    }
    if e.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    match e.downcast_ref::<RunError>() {
        Some(r) => r.exit_code() as u8,
        None => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Synth { config } => synth(&config),
        Command::Run {
            config,
            min_seconds,
            threads,
            output,
        } => run(&config, min_seconds, threads, output),
        Command::Report { dir, config, output } => report(dir, config, output),
        Command::Theory {
            seed,
            bound,
            contraction,
            projection,
            out,
        } => theory(seed, [bound, contraction, projection], out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
