use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use simkern::pipeline::{self, Overrides, PipelineConfig};

/// Simulation-derived similarity kernels: generate data, build kernels,
/// benchmark learners.
#[derive(Parser, Debug)]
#[command(name = "simkern", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw genomes and simulate ground-truth outcomes.
    Sim0(Common),
    /// Run the perturbed-trial ensemble and write similarity matrices.
    Sim1(Common),
    /// Benchmark learners on the generated dataset and kernel.
    Ml(Common),
    /// Rebuild summary tables from an existing results.csv.
    Report(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// radiation, boolean, network or custom-ode.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Directory holding earlier stage outputs (defaults to --out-dir).
    #[arg(long)]
    input_dir: Option<PathBuf>,
    /// less_noisy or noisier (network model).
    #[arg(long)]
    scheme: Option<String>,
    /// Refit feature scaling on each training subsample.
    #[arg(long)]
    strict_scaling: bool,
}

impl Common {
    fn load(&self) -> Result<PipelineConfig> {
        let overrides = Overrides {
            model: self.model.clone(),
            seed: self.seed,
            workers: self.workers,
            out_dir: self.out_dir.clone(),
            input_dir: self.input_dir.clone(),
            scheme: self.scheme.clone(),
            strict_scaling: self.strict_scaling,
        };
        let text = match &self.config {
            Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
            None => String::new(),
        };
        let cfg = PipelineConfig::from_toml(&text, &overrides);
        match &self.config {
            Some(p) => cfg.with_context(|| format!("in {}", p.display())),
            None => Ok(cfg?),
        }
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Sim0(c) => {
            let cfg = c.load()?;
            let data = pipeline::cmd_sim0(&cfg)?;
            println!("wrote {} samples to {}", data.len(), cfg.out_dir.display());
        }
        Command::Sim1(c) => {
            let cfg = c.load()?;
            let report = pipeline::cmd_sim1(&cfg)?;
            if let Some((r, d)) = report.deltas.last() {
                println!("final kernel change at trial {r}: {d:.3e}");
            }
            println!("kernel {:?}, written to {}", report.definiteness, cfg.out_dir.display());
        }
        Command::Ml(c) => {
            let cfg = c.load()?;
            let records = pipeline::cmd_ml(&cfg)?;
            println!("wrote {} result records to {}", records.len(), cfg.out_dir.display());
        }
        Command::Report(c) => {
            let cfg = c.load()?;
            let records = pipeline::cmd_report(&cfg)?;
            println!(
                "summarized {} result records into {}",
                records.len(),
                cfg.out_dir.display()
            );
        }
    }
    Ok(())
}
