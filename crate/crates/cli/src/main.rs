use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use relosc::harness::report::fmt_f64;
use relosc::harness::{run_experiment, write_outputs, ExitStatus, ExperimentConfig, ExperimentReport, RunMode};

#[derive(Parser)]
#[command(name = "relosc", version, about = "Relative oscillation criteria and band-edge thresholds for Sturm-Liouville operators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Band table, criteria, classifier and cross-validation.
    Run(RunArgs),
    /// Band edges and discriminant curve of the periodic background.
    Bands(RunArgs),
    /// Effective-angle classifier against direct counting only.
    Classify(RunArgs),
    /// Parse and check a config without running it.
    Validate {
        config: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    config: PathBuf,
    /// Right end of the truncated half-line.
    #[arg(long)]
    x_max: Option<f64>,
    /// Relative integration tolerance (the absolute one is 1e-2 of it).
    #[arg(long)]
    tol: Option<f64>,
    /// Output directory; defaults to the config's `outputs.dir`, then `.`.
    #[arg(long, env = "RELOSC_OUT_DIR")]
    out_dir: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

fn load(path: &Path) -> anyhow::Result<ExperimentConfig> {
    ExperimentConfig::from_file(path).with_context(|| format!("loading {}", path.display()))
}

fn summarize(report: &ExperimentReport) {
    for b in &report.bands {
        println!(
            "band edge {:>2}  E = {}  {}  sigma = {:+}  C_q = {}  mu_c = {}",
            b.n,
            fmt_f64(b.e),
            b.kind,
            b.sigma,
            fmt_f64(b.c_q),
            b.mu_c.map(fmt_f64).unwrap_or_else(|| "-".into())
        );
    }
    for r in &report.rows {
        let verdict = r.verdict.map(|v| v.label()).unwrap_or("error");
        let at = if r.param.is_empty() { String::new() } else { format!(" {}={}", r.param, r.value) };
        print!("{:<14}{at}  {verdict:<14} estimate {:>10.5}  [{}]", r.criterion, r.estimate, r.cross.label());
        if let Some(e) = &r.error {
            print!("  {e}");
        }
        println!();
    }
    for c in &report.cross {
        if !c.counts_agree {
            println!("flip counts disagree at {}={}", c.param, c.value);
        }
        if let Some(e) = &c.error {
            println!("cross-validation failed at {}={}: {e}", c.param, c.value);
        }
    }
    for e in &report.errors {
        println!("error: {e}");
    }
}

fn execute(args: RunArgs, mode: RunMode) -> anyhow::Result<ExitStatus> {
    if let Some(j) = args.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build_global()
            .context("setting up the worker pool")?;
    }
    let mut cfg = load(&args.config)?;
    if let Some(x) = args.x_max {
        cfg.numerics.x_max = Some(x);
    }
    if let Some(t) = args.tol {
        cfg.numerics.rtol = t;
        cfg.numerics.atol = t * 1e-2;
    }
    cfg.validate().context("config after command-line overrides")?;
    let report = run_experiment(&cfg, mode)?;
    let dir = args
        .out_dir
        .or_else(|| cfg.outputs.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let files = write_outputs(&report, &dir, cfg.prefix())?;
    summarize(&report);
    for f in files {
        eprintln!("wrote {}", f.display());
    }
    Ok(report.exit_status())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => execute(a, RunMode::Full),
        Command::Bands(a) => execute(a, RunMode::Bands),
        Command::Classify(a) => execute(a, RunMode::Classify),
        Command::Validate { config } => load(&config).map(|cfg| {
            println!(
                "{}: ok ({} criteria, {} sweep points, x_max = {})",
                cfg.name,
                cfg.criteria.len(),
                cfg.sweep_points().len(),
                cfg.x_max()
            );
            ExitStatus::Success
        }),
    };
    match result {
        Ok(s) => ExitCode::from(s.code() as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
