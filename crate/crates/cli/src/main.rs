use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use tar4c::connectivity::GraphFormat;
use tar4c::pipeline::{self, AuditLog, CompareOptions, RunConfig, SimulationSpec, AUDIT_FILE};
use tar4c::ErrorKind;

#[derive(Parser)]
#[command(name = "tar4c", version, about = "Threshold-autoregressive connectivity analysis")]
struct Cli {
    /// Log progress at info level (RUST_LOG overrides).
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Test every configured pair across subjects and epochs.
    Run(RunArgs),
    /// Permutation Hotelling comparison of one or two result bundles.
    Compare(CompareArgs),
    /// Write a synthetic dataset and a matching run config.
    Simulate(SimulateArgs),
    /// Recompute the indices of a bundle from its audit log.
    Replay(ReplayArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Dot,
    Json,
    Both,
}

impl Format {
    fn formats(self) -> Vec<GraphFormat> {
        match self {
            Format::Dot => vec![GraphFormat::Dot],
            Format::Json => vec![GraphFormat::Json],
            Format::Both => vec![GraphFormat::Json, GraphFormat::Dot],
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    majority: Option<f64>,
    /// Bootstrap replications.
    #[arg(long = "boot", value_name = "B")]
    boot: Option<usize>,
    #[arg(long = "perms", value_name = "N")]
    perms: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "both")]
    format: Format,
}

#[derive(Args)]
struct CompareArgs {
    /// Result directory of the first condition.
    first: PathBuf,
    /// Result directory of the second condition.
    second: Option<PathBuf>,
    /// Run config supplying regions, alpha and permutation count.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long = "perms", value_name = "N")]
    perms: Option<usize>,
    /// Directory for compare.json and compare.dot; defaults to the first bundle.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "both")]
    format: Format,
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON simulation spec.
    spec: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ReplayArgs {
    bundle: PathBuf,
}

fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        anyhow::ensure!(n > 0, tar4c::Error::InvalidConfig("--jobs must be positive".into()));
        b = b.num_threads(n);
    }
    Ok(b.build()?)
}

fn cmd_run(a: RunArgs) -> Result<()> {
    let mut cfg = RunConfig::load(&a.config)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(v) = a.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = a.majority {
        cfg.majority = v;
    }
    if let Some(v) = a.boot {
        cfg.boot = v;
    }
    if let Some(v) = a.perms {
        cfg.perms = v;
    }
    let out_dir = match a.out {
        Some(o) => o,
        None => cfg.out_dir(),
    };
    let out = pool(a.jobs)?.install(|| pipeline::run(&cfg))?;
    info!("{} edges over {} subjects", out.edges.len(), out.meta.n_subjects);
    let written = pipeline::write_outputs(&out, &out_dir, &a.format.formats(), &pipeline::graph_options(&cfg))?;
    for p in written {
        println!("{}", p.display());
    }
    Ok(())
}

fn bundle_name(p: &Path) -> String {
    p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned())
}

fn cmd_compare(a: CompareArgs) -> Result<()> {
    let mut opts = CompareOptions::default();
    if let Some(c) = &a.config {
        let cfg = RunConfig::load(c)?;
        opts.n_perm = cfg.perms;
        opts.seed = cfg.seed;
        opts.alpha = cfg.alpha;
        opts.regions = cfg.regions;
    }
    if let Some(v) = a.perms {
        opts.n_perm = v;
    }
    if let Some(v) = a.seed {
        opts.seed = v;
    }
    if let Some(v) = a.alpha {
        opts.alpha = v;
    }
    let first = AuditLog::load(a.first.join(AUDIT_FILE))?;
    let second = a.second.as_ref().map(|p| AuditLog::load(p.join(AUDIT_FILE))).transpose()?;
    let (n1, n2) = (bundle_name(&a.first), a.second.as_deref().map(bundle_name).unwrap_or_default());
    let report = pool(a.jobs)?.install(|| pipeline::compare((&n1, &first), second.as_ref().map(|s| (n2.as_str(), s)), &opts))?;
    let dir = a.out.unwrap_or_else(|| a.first.clone());
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut written = Vec::new();
    for f in a.format.formats() {
        let (name, text) = match f {
            GraphFormat::Json => ("compare.json", serde_json::to_string_pretty(&report)?),
            GraphFormat::Dot => ("compare.dot", report.to_dot()),
        };
        let p = dir.join(name);
        std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?;
        written.push(p);
    }
    for p in written {
        println!("{}", p.display());
    }
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let mut spec = SimulationSpec::load(&a.spec)?;
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    let manifest = pipeline::simulate(&spec, &a.out)?;
    println!("{}", manifest.display());
    Ok(())
}

fn cmd_replay(a: ReplayArgs) -> Result<bool> {
    let report = pipeline::verify_bundle(&a.bundle)?;
    for m in &report.mismatches {
        println!("mismatch: {m}");
    }
    if report.ok() {
        println!("ok: {} edges reproduced", report.edges);
    }
    Ok(report.ok())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<tar4c::Error>()).map(tar4c::Error::kind) {
        Some(ErrorKind::Config) => 2,
        Some(ErrorKind::Data) => 3,
        Some(ErrorKind::Numeric) => 4,
        None => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a).map(|_| true),
        Command::Compare(a) => cmd_compare(a).map(|_| true),
        Command::Simulate(a) => cmd_simulate(a).map(|_| true),
        Command::Replay(a) => cmd_replay(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(4),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
