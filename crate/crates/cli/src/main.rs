use bytower_cli::config::{self, ExperimentConfig};
use bytower_cli::{report, Pipeline, STAGES};
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "bytower", version, about = "Bernoulli Young tower experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment file (TOML). Without it the doubling defaults are used.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    mass_resolution: Option<f64>,
    #[arg(long, global = true)]
    theta: Option<f64>,
    #[arg(long, global = true)]
    length: Option<usize>,
    #[arg(long, global = true)]
    replicates: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Check the scheme axioms.
    Validate,
    /// Coding checks: pushforward, Lipschitz bound, semiconjugacy.
    BuildTower,
    /// Trivial disintegration and moment transfer.
    Disintegrate,
    /// Constants (R, xi, N, eps) and the p-sequence.
    Plan,
    /// Exact decomposition and the exported word law.
    Decompose,
    /// Geometric-sum laws and the clock law.
    Laws,
    /// iid coupling trajectories.
    Sample,
    /// Dependence coefficients.
    Dependence,
    /// CLT and height-tail statistics.
    Stats,
    /// Every stage, aggregated.
    Report,
}

impl Command {
    fn stages(self) -> Vec<&'static str> {
        match self {
            Command::Validate => vec!["validate"],
            Command::BuildTower => vec!["build-tower"],
            Command::Disintegrate => vec!["disintegrate"],
            Command::Plan => vec!["plan"],
            Command::Decompose => vec!["decompose"],
            Command::Laws => vec!["laws"],
            Command::Sample => vec!["sample"],
            Command::Dependence => vec!["dependence"],
            Command::Stats => vec!["stats"],
            Command::Report => STAGES.to_vec(),
        }
    }
}

fn load(cli: &Cli) -> Result<ExperimentConfig, config::ConfigError> {
    let text = match &cli.config {
        Some(p) => std::fs::read_to_string(p)
            .map_err(|e| config::ConfigError { path: String::new(), message: format!("reading {}: {e}", p.display()) })?,
        None => "[scheme]\nkind = \"doubling\"\n".to_string(),
    };
    let mut cfg = config::parse(&text)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(m) = cli.mass_resolution {
        cfg.decompose.mass_resolution = m;
    }
    if let Some(t) = cli.theta {
        cfg.sampler.theta = Some(t);
    }
    if let Some(l) = cli.length {
        cfg.sampler.length = l;
    }
    if let Some(r) = cli.replicates {
        cfg.sampler.replicates = r;
    }
    if let Some(o) = &cli.out {
        cfg.out = Some(o.display().to_string());
    }
    config::check(&cfg)?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("threads: {e}");
            return ExitCode::from(2);
        }
    }
    let dir = PathBuf::from(cfg.out.clone().unwrap_or_else(|| "out".into()));
    let mut p = match Pipeline::new(cfg) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("scheme: {e:#}");
            return ExitCode::from(1);
        }
    };
    let outcome = report::run(&mut p, &cli.command.stages());
    if let Err(e) = report::write(&dir, &outcome) {
        eprintln!("writing outputs: {e:#}");
        return ExitCode::from(1);
    }
    for (name, secs) in &outcome.timings {
        eprintln!("{name}: {secs:.2}s");
    }
    let failures = outcome.failures();
    if failures.is_empty() {
        println!("ok: {}", dir.join("report.json").display());
        ExitCode::SUCCESS
    } else {
        for f in &failures {
            eprintln!("invariant failed: {f}");
        }
        ExitCode::from(1)
    }
}
