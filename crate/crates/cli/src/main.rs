use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use diffnet::estimators::Method;
use diffnet::graph::Structure;
use diffnet::harness::csvio::write_data_csv;
use diffnet::harness::{
    read_data_csv, replicate_data, run_real, run_sweep, scenario_models, write_real, write_sweep, RealConfig,
    RunConfig, SweepScenario,
};
use diffnet::sim::{max_degree_normalized, symmetrized_kl};

/// Differential network estimation: simulation sweeps, two-sample analyses
/// and scenario generation.
#[derive(Parser)]
#[command(name = "diffnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation sweep and write points, curves and a manifest.
    Sweep(SweepArgs),
    /// Compare two observed samples with every enabled method.
    Real(RealArgs),
    /// Generate one scenario's graphs (and optionally data).
    Gen(GenArgs),
}

#[derive(Args)]
struct SweepArgs {
    /// TOML run configuration; keys override the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in preset to start from.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long, env = "DIFFNET_WORKERS")]
    workers: Option<usize>,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RealArgs {
    #[arg(long)]
    x1: PathBuf,
    #[arg(long)]
    x2: PathBuf,
    #[arg(long)]
    alpha: Option<f64>,
    /// Comma-separated subset of pcor,pmat,dtrace,fgl.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    /// TOML file with grids and solver settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "real_results")]
    out: PathBuf,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    structure: Structure,
    #[arg(long)]
    g1: usize,
    #[arg(long)]
    diff: usize,
    #[arg(long, default_value_t = 200)]
    p: usize,
    /// Master seed; graphs match those of a sweep with the same seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Write g1.txt, g2.txt and gdiff.txt.
    #[arg(long)]
    dump_graphs: bool,
    /// Also write x1.csv and x2.csv with this many rows each.
    #[arg(long, value_name = "N")]
    dump_data: Option<usize>,
    #[arg(long, default_value_t = 0)]
    replicate: usize,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn sweep(args: SweepArgs) -> Result<ExitCode> {
    let base = args.preset.as_deref().map(RunConfig::preset).transpose()?;
    let mut cfg = match (&args.config, base) {
        (Some(path), base) => RunConfig::from_toml(&read(path)?, base)
            .with_context(|| format!("in {}", path.display()))?,
        (None, Some(base)) => base,
        (None, None) => bail!("pass --config, --preset, or both"),
    };
    if let Some(w) = args.workers {
        cfg.workers = Some(w);
    }
    if let Some(out) = args.out {
        cfg.output_dir = out;
    }
    cfg.validate()?;
    let result = run_sweep(&cfg)?;
    write_sweep(&cfg, &result, &cfg.output_dir)?;
    eprintln!(
        "{} points, {} curves, {} failures in {:.1} s; results in {}",
        result.records.len(),
        result.curves.len(),
        result.failures.len(),
        result.wall_seconds,
        cfg.output_dir.display()
    );
    if result.failed() {
        eprintln!("some cells failed; see failures.csv");
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn real(args: RealArgs) -> Result<ExitCode> {
    let mut cfg = match &args.config {
        Some(path) => RealConfig::from_toml(&read(path)?).with_context(|| format!("in {}", path.display()))?,
        None => RealConfig::default(),
    };
    if let Some(a) = args.alpha {
        cfg.alpha = a;
    }
    if let Some(m) = args.methods {
        cfg.methods = m;
    }
    let x1 = read_data_csv(&args.x1)?;
    let x2 = read_data_csv(&args.x2)?;
    let report = run_real(&x1, &x2, &cfg)?;
    write_real(&report, &cfg, &args.out)?;
    for m in &report.methods {
        eprintln!("{:>6}: {} edges", m.method, m.edges.edge_count());
    }
    eprintln!(
        "union: {} edges, {} isolated vertices; results in {}",
        report.multiplicity.union_size(),
        report.multiplicity.isolated_vertices,
        args.out.display()
    );
    if !report.failures.is_empty() {
        for (m, e) in &report.failures {
            eprintln!("{m} failed: {e}");
        }
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn gen(args: GenArgs) -> Result<ExitCode> {
    let sc = SweepScenario {
        p: args.p,
        ..SweepScenario::new(args.structure, args.g1, args.diff)
    };
    let models = scenario_models(args.seed, &sc)?;
    let g = &models.graphs;
    println!("scenario {}", sc.id());
    println!("edges g1={} g2={} diff={}", g.g1.edge_count(), g.g2.edge_count(), g.gdiff.edge_count());
    println!("attempts {}", g.attempts);
    println!("symmetrized_kl {}", symmetrized_kl(&models.sigma1, &models.sigma2)?);
    println!("max_degree_normalized {}", max_degree_normalized(&g.gdiff));
    if args.dump_graphs || args.dump_data.is_some() {
        std::fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    }
    let write = |name: &str, body: Vec<u8>| -> Result<()> {
        let path = args.out.join(name);
        std::fs::write(&path, body).with_context(|| format!("cannot write {}", path.display()))
    };
    if args.dump_graphs {
        write("g1.txt", g.g1.to_edge_list().into_bytes())?;
        write("g2.txt", g.g2.to_edge_list().into_bytes())?;
        write("gdiff.txt", g.gdiff.to_edge_list().into_bytes())?;
    }
    if let Some(n) = args.dump_data {
        let (x1, x2) = replicate_data(args.seed, &sc.id(), &models, n, args.replicate)?;
        for (name, x) in [("x1.csv", x1), ("x2.csv", x2)] {
            let mut buf = Vec::new();
            write_data_csv(&x, &mut buf)?;
            write(name, buf)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Sweep(a) => sweep(a),
        Command::Real(a) => real(a),
        Command::Gen(a) => gen(a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
