use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use vicsample::experiment::{
    bench_loss_scaling, emit_report, init_threads, pretrain, run_verification, sweep, ExperimentConfig,
};
use vicsample::graph::Graph;
use vicsample::nn::save_checkpoint;
use vicsample::sampling::{forman_ricci, ricci_node_probs};
use vicsample::{Precision, Scalar};

#[derive(Debug, Parser)]
#[command(name = "vicsample", version, about = "VICReg graph pretraining with node and dimension sampling")]
struct Cli {
    /// TOML experiment config; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Numeric precision of training and benchmarks.
    #[arg(long, global = true)]
    precision: Option<Precision>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Pretrain one model and probe it; writes report.json and model.ckpt.
    Pretrain,
    /// Pretrain and probe every (mode, ratio) cell; writes sweep.csv.
    Sweep,
    /// Time the covariance term over the configured grid; writes scaling.csv.
    Bench,
    /// Dump Forman curvature per edge and Ricci flow per node.
    Ricci,
    /// Run the block-covariance checks and the rotating whitening run; writes trajectory.csv.
    Verify,
    /// Print the effective configuration as TOML.
    Config,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output = out.clone();
    }
    if let Some(p) = cli.precision {
        cfg.precision = p;
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    Ok(cfg)
}

fn load_graph<T: Scalar>(cfg: &ExperimentConfig) -> Result<Graph<T>> {
    let g = cfg.dataset.load::<T>().context("loading dataset")?;
    log::info!(
        "dataset '{}': {} nodes, {} edges, {} features",
        cfg.dataset.name,
        g.num_nodes(),
        g.num_edges(),
        g.feature_dim()
    );
    Ok(g)
}

fn run_pretrain<T: Scalar>(cfg: &ExperimentConfig) -> Result<bool> {
    let g = load_graph::<T>(cfg)?;
    let out = pretrain(cfg, &g)?;
    let report_path = cfg.output.join("report.json");
    emit_report(&out.report, &report_path)?;
    save_checkpoint(&out.model, &cfg.output.join("model.ckpt"))?;
    let r = &out.report;
    println!(
        "{} epochs, loss {} -> {}",
        r.epochs_run(),
        r.initial_loss().map_or("-".into(), |v| format!("{v:.6}")),
        r.final_loss().map_or("-".into(), |v| format!("{v:.6}")),
    );
    if let Some(p) = &r.probe {
        println!("probe accuracy {:.4} ± {:.4} over {} trials", p.mean, p.std, p.accuracies.len());
    }
    println!("wrote {}", report_path.display());
    if let Some(reason) = &r.abort_reason {
        eprintln!("training aborted: {reason}");
        return Ok(false);
    }
    Ok(true)
}

fn run_sweep<T: Scalar>(cfg: &ExperimentConfig) -> Result<bool> {
    let g = load_graph::<T>(cfg)?;
    let rep = sweep(cfg, &g)?;
    rep.write(&cfg.output)?;
    print!("{}", rep.to_csv());
    Ok(rep.cells.iter().all(|c| c.error.is_none()))
}

fn run_bench<T: Scalar>(cfg: &ExperimentConfig) -> Result<bool> {
    let rep = bench_loss_scaling::<T>(&cfg.bench, cfg.seed)?;
    rep.write_csv(&cfg.output.join("scaling.csv"))?;
    print!("{}", rep.to_csv());
    for c in &rep.checks {
        println!(
            "{} {}->{} at {}: ratio {:.3} in [{}, {}]: {}",
            c.axis,
            c.from,
            c.to,
            c.fixed,
            c.ratio,
            c.band.0,
            c.band.1,
            if c.passed { "ok" } else { "OUT OF BAND" }
        );
    }
    println!("peak buffer = d'^2 entries: {}", rep.buffer_exact);
    Ok(rep.passed())
}

fn run_ricci<T: Scalar>(cfg: &ExperimentConfig) -> Result<bool> {
    let g = load_graph::<T>(cfg)?;
    let mut scores = forman_ricci(&g);
    scores.probs = ricci_node_probs(&scores.node_flow)?;
    let edges = cfg.output.join("ricci_edges.csv");
    let nodes = cfg.output.join("ricci_nodes.csv");
    scores.write_csv(&edges, &nodes)?;
    println!("wrote {} and {}", edges.display(), nodes.display());
    Ok(true)
}

fn run_verify(cfg: &ExperimentConfig) -> Result<bool> {
    let rep = run_verification(&cfg.verify, cfg.seed)?;
    for c in &rep.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let path = cfg.output.join("trajectory.csv");
    rep.trajectory.write_csv(&path)?;
    println!("wrote {}", path.display());
    Ok(rep.passed())
}

fn dispatch<T: Scalar>(cmd: &Command, cfg: &ExperimentConfig) -> Result<bool> {
    match cmd {
        Command::Pretrain => run_pretrain::<T>(cfg),
        Command::Sweep => run_sweep::<T>(cfg),
        Command::Bench => run_bench::<T>(cfg),
        Command::Ricci => run_ricci::<T>(cfg),
        Command::Verify => run_verify(cfg),
        Command::Config => {
            print!("{}", cfg.to_toml_string());
            Ok(true)
        }
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn run(cli: Cli) -> Result<bool> {
    let cfg = load_config(&cli)?;
    if !matches!(cli.command, Command::Config) {
        cfg.validate()?;
        ensure_dir(&cfg.output)?;
        init_threads(cfg.threads)?;
    }
    if matches!(cli.command, Command::Verify) && cfg.precision == Precision::F32 {
        log::warn!("verify always runs in 64-bit");
    }
    match cfg.precision {
        Precision::F32 => dispatch::<f32>(&cli.command, &cfg),
        Precision::F64 => dispatch::<f64>(&cli.command, &cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
