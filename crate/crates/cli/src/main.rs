mod config;
mod output;
mod pipeline;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use config::ExperimentConfig;
use output::{sha256_hex, Run};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

#[derive(Parser)]
#[command(
    name = "levyop",
    version,
    about = "Stable-like jump operators: symbols, resolvents, evolution and simulation"
)]
struct Cli {
    /// TOML experiment configuration; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `simulate.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Artifact directory.
    #[arg(long, global = true, default_value = "levyop-out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Skip the gnuplot scripts.
    #[arg(long, global = true)]
    no_plots: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the standing kernel assumptions numerically.
    Validate,
    /// Symbol table, class norm and sector constants.
    Symbol,
    /// Resolvent norm scans and Neumann defects.
    Resolvent,
    /// Backward-Euler evolution with the configured forcing.
    Cauchy,
    /// Simulate the truncated jump process.
    Simulate,
    /// Martingale-residual test.
    Verify,
    /// Monte Carlo against the evolution equation.
    Crosscheck,
    /// Stage timings, recorded in the manifest.
    Bench,
    /// Run the `pipeline` list from the config (possibly empty).
    Run,
}

impl Command {
    fn name(&self) -> Option<&'static str> {
        Some(match self {
            Command::Validate => "validate",
            Command::Symbol => "symbol",
            Command::Resolvent => "resolvent",
            Command::Cauchy => "cauchy",
            Command::Simulate => "simulate",
            Command::Verify => "verify",
            Command::Crosscheck => "crosscheck",
            Command::Bench => "bench",
            Command::Run => return None,
        })
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli) -> Result<bool> {
    let start = Instant::now();
    let started = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let (mut cfg, source) = match &cli.config {
        Some(p) => {
            let (c, text) = ExperimentConfig::load(p)?;
            (c, sha256_hex(text.as_bytes()))
        }
        None => (ExperimentConfig::default(), "none".to_string()),
    };
    if let Some(seed) = cli.seed {
        cfg.simulate.seed = seed;
    }
    let pipelines: Vec<String> = match cli.command.name() {
        Some(n) => vec![n.to_string()],
        None => cfg.pipeline.clone(),
    };
    cfg.validate(&pipelines)?;
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let effective = toml::to_string(&cfg).context("serializing the effective config")?;
    let mut out = Run::new(&cli.out)?;
    for p in &pipelines {
        pipeline::execute(p, &cfg, &mut out)?;
    }
    if !cli.no_plots {
        out.emit_plots()?;
    }
    for c in &out.checks {
        println!(
            "{} {}: {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    let threads = cli.threads.unwrap_or_else(rayon::current_num_threads);
    let meta = [
        ("tool", format!("levyop-cli {}", env!("CARGO_PKG_VERSION"))),
        ("core", format!("levyop {}", levyop::VERSION)),
        ("pipeline", pipelines.join(",")),
        ("config_sha256", sha256_hex(effective.as_bytes())),
        ("config_source_sha256", source),
        ("seed_root", cfg.simulate.seed.to_string()),
        ("threads", threads.to_string()),
        ("started_unix", started.to_string()),
        (
            "wall_clock_seconds",
            format!("{:.3}", start.elapsed().as_secs_f64()),
        ),
    ];
    out.write_manifest(&meta)?;
    println!("artifacts in {}", out.dir().display());
    Ok(out.all_pass())
}
