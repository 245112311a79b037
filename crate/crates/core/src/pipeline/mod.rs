//! End-to-end stages: ground-truth generation (`sim0`), ensemble kernel
//! construction (`sim1`), the learning benchmark (`ml`) and re-summarizing
//! stored results (`report`).
//!
//! Every stage writes the seeds it used next to its outputs, so any single
//! simulation can be replayed.

pub mod config;
pub mod models;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

pub use config::{Overrides, PipelineConfig};
pub use models::{ModelKind, Simulator};

use crate::harness::{
    read_results, run_experiment, split_seed, subsample_seed, summarize_boxplot, write_boxplot, write_lineplot,
    write_results, HarnessError, ResultRecord,
};
use crate::learners::Dataset;
use crate::paramfile::{parse_param_file, ParamLine};
use crate::randspec::{format_value, instantiate, parse_spec, render, RandSpec};
use crate::seed::{derive, tag};
use crate::simkernel::{
    check_psd, jitter_psd, similarity_matrix, Definiteness, Kernel, KernelAccumulator, KernelError, SimOutput,
};

pub const GENOMES_FILE: &str = "Sim0Genomes.csv";
pub const OUTPUT_FILE: &str = "Sim0Output.csv";
pub const FINAL_KERNEL_FILE: &str = "SimilarityMatrixfinal.csv";
pub const DAG_FILE: &str = "dag.csv";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Parse { path: PathBuf, reason: String },
    #[error("model setup: {0}")]
    Model(String),
    #[error("simulation failed for sample {sample}{} (seed {seed}): {reason}", trial.map(|r| format!(", trial {r}")).unwrap_or_default())]
    Simulation {
        sample: usize,
        trial: Option<usize>,
        seed: u64,
        reason: String,
    },
    #[error("kernel file not found: {0}")]
    KernelNotFound(PathBuf),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error("worker pool: {0}")]
    Pool(String),
}

impl PipelineError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn parse(path: &Path, reason: impl ToString) -> Self {
        Self::Parse {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        }
    }
}

fn in_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T, PipelineError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| PipelineError::Pool(e.to_string()))?;
    Ok(pool.install(f))
}

fn create(path: &Path) -> Result<BufWriter<File>, PipelineError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| PipelineError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), PipelineError> {
    std::fs::write(path, text).map_err(|e| PipelineError::io(path, e))
}

fn read_text(path: &Path) -> Result<String, PipelineError> {
    std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))
}

fn load_spec(path: Option<&Path>, fallback: Option<&str>) -> Result<Option<RandSpec>, PipelineError> {
    let text = match (path, fallback) {
        (Some(p), _) => read_text(p)?,
        (None, Some(t)) => t.to_string(),
        (None, None) => return Ok(None),
    };
    let spec = parse_spec(&text).map_err(|e| PipelineError::parse(path.unwrap_or(Path::new("<preset>")), e))?;
    Ok(Some(spec))
}

fn prepare_out_dir(dir: &Path) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))
}

pub fn sample_seed(master: u64, sample: usize) -> u64 {
    derive(master, &[tag("sim0"), sample as u64])
}

pub fn trial_seed(master: u64, trial: usize) -> u64 {
    derive(master, &[tag("sim1"), trial as u64])
}

pub fn ml_seed(master: u64) -> u64 {
    derive(master, &[tag("ml")])
}

pub fn genome_key_name(sample: usize) -> String {
    format!("genome{}_key", sample + 1)
}

/// Draws N genomes, simulates their ground-truth outcomes and writes the
/// genome table, the outcome column and one key file per sample.
pub fn cmd_sim0(cfg: &PipelineConfig) -> Result<Dataset, PipelineError> {
    let spec = load_spec(cfg.sim0_spec.as_deref(), Some(cfg.model.default_sim0_spec()))?.expect("sim0 spec present");
    let sim = Simulator::from_config(cfg)?;
    prepare_out_dir(&cfg.out_dir)?;
    log::info!("sim0: {} samples of {} (seed {})", cfg.samples, cfg.model, cfg.seed);

    let rows: Vec<(Vec<f64>, String, f64)> = in_pool(cfg.workers, || {
        (0..cfg.samples)
            .into_par_iter()
            .map(|i| {
                let seed = sample_seed(cfg.seed, i);
                let fail = |reason: String| PipelineError::Simulation {
                    sample: i + 1,
                    trial: None,
                    seed,
                    reason,
                };
                let draw = instantiate(&spec, seed);
                let key = render(&spec, &draw).map_err(|e| fail(e.to_string()))?;
                let genome = parse_param_file(&key).map_err(|e| fail(e.to_string()))?;
                let y = sim.ground_truth(&genome).map_err(fail)?;
                let x = spec.tokens.iter().map(|t| draw.values[&t.name]).collect();
                Ok((x, key, y))
            })
            .collect::<Result<_, PipelineError>>()
    })??;

    let names: Vec<String> = spec.names().map(str::to_string).collect();
    let path = cfg.out_dir.join(GENOMES_FILE);
    let mut w = csv::Writer::from_writer(create(&path)?);
    let csv_err = |e: csv::Error| PipelineError::parse(&path, e);
    w.write_record(&names).map_err(csv_err)?;
    for (x, _, _) in &rows {
        w.write_record(x.iter().map(|&v| format_value(v))).map_err(csv_err)?;
    }
    w.flush().map_err(|e| PipelineError::io(&path, e))?;

    let mut out = String::new();
    let mut seeds = String::from("sample,seed\n");
    for (i, (_, key, y)) in rows.iter().enumerate() {
        out.push_str(&format_value(*y));
        out.push('\n');
        seeds.push_str(&format!("{},{}\n", i + 1, sample_seed(cfg.seed, i)));
        write_text(&cfg.out_dir.join(genome_key_name(i)), key)?;
    }
    write_text(&cfg.out_dir.join(OUTPUT_FILE), &out)?;
    write_text(&cfg.out_dir.join("sim0_seeds.csv"), &seeds)?;
    if let Simulator::Network(m) = &sim {
        write_text(&cfg.out_dir.join(DAG_FILE), &m.dag.to_csv())?;
    }

    let (x, y) = rows.into_iter().map(|(x, _, y)| (x, y)).unzip();
    Ok(dataset(cfg.model, names, x, y))
}

fn dataset(model: ModelKind, names: Vec<String>, x: Vec<Vec<f64>>, y: Vec<f64>) -> Dataset {
    let categorical = names
        .iter()
        .map(|n| model.categorical_features().contains(&n.as_str()))
        .collect();
    Dataset {
        feature_names: names,
        x,
        y,
        categorical,
        task: model.task(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sim1Report {
    /// Frobenius change of the running kernel, from trial 2 on.
    pub deltas: Vec<(usize, f64)>,
    pub definiteness: Definiteness,
    pub kernel: Kernel,
}

fn read_genomes(dir: &Path, n: usize) -> Result<Vec<Vec<ParamLine>>, PipelineError> {
    (0..n)
        .map(|i| {
            let path = dir.join(genome_key_name(i));
            parse_param_file(&read_text(&path)?).map_err(|e| PipelineError::parse(&path, e))
        })
        .collect()
}

/// Runs R perturbed trials over the stored genomes and averages their
/// similarity matrices.
pub fn cmd_sim1(cfg: &PipelineConfig) -> Result<Sim1Report, PipelineError> {
    let spec = load_spec(cfg.sim1_spec.as_deref(), cfg.model.default_sim1_spec())?;
    let sim = Simulator::from_config(cfg)?;
    let genomes = read_genomes(&cfg.input_dir, cfg.samples)?;
    prepare_out_dir(&cfg.out_dir)?;
    log::info!(
        "sim1: {} samples x {} trials of {} (seed {})",
        cfg.samples,
        cfg.trials,
        cfg.model,
        cfg.seed
    );

    let mut acc = KernelAccumulator::new(cfg.samples);
    let mut deltas = Vec::new();
    let mut seeds = String::from("trial,seed\n");
    for r in 1..=cfg.trials {
        let seed = trial_seed(cfg.seed, r);
        seeds.push_str(&format!("{r},{seed}\n"));
        let trial: Vec<ParamLine> = match &spec {
            Some(s) => {
                let text = render(s, &instantiate(s, seed)).map_err(|e| PipelineError::Model(e.to_string()))?;
                parse_param_file(&text).map_err(|e| PipelineError::Model(e.to_string()))?
            }
            None => Vec::new(),
        };
        let z = in_pool(cfg.workers, || -> Result<Kernel, PipelineError> {
            let outputs: Vec<SimOutput> = genomes
                .par_iter()
                .enumerate()
                .map(|(i, g)| {
                    sim.trial_output(g, &trial, seed)
                        .map_err(|reason| PipelineError::Simulation {
                            sample: i + 1,
                            trial: Some(r),
                            seed,
                            reason,
                        })
                })
                .collect::<Result<_, _>>()?;
            Ok(similarity_matrix(&outputs, &cfg.similarity)?)
        })??;
        if cfg.dump_trials {
            let path = cfg.out_dir.join(format!("TrialMatrix{r}.csv"));
            z.write_csv(create(&path)?)?;
        }
        if let Some(d) = acc.accumulate(&z)? {
            log::info!("trial {r}: kernel change {d:.3e}");
            deltas.push((r, d));
        }
        if r >= 3 {
            let path = cfg.out_dir.join(format!("SimilarityMatrix{r}.csv"));
            acc.kernel().write_csv(create(&path)?)?;
        }
    }

    let mut kernel = acc.into_kernel();
    let mut definiteness = check_psd(&kernel, cfg.psd_tol);
    if let Definiteness::Indefinite(min) = definiteness {
        if cfg.jitter {
            let (k, shift) = jitter_psd(&kernel, cfg.psd_tol);
            kernel = k;
            definiteness = check_psd(&kernel, cfg.psd_tol);
            log::info!("added diagonal jitter {:?}", shift);
        } else {
            log::warn!("kernel is indefinite (smallest eigenvalue {min:.3e})");
        }
    }
    let path = cfg.out_dir.join(FINAL_KERNEL_FILE);
    kernel.write_csv(create(&path)?)?;

    let mut conv = String::from("trial,delta\n");
    for (r, d) in &deltas {
        conv.push_str(&format!("{r},{}\n", format_value(*d)));
    }
    write_text(&cfg.out_dir.join("convergence.csv"), &conv)?;
    write_text(&cfg.out_dir.join("sim1_seeds.csv"), &seeds)?;
    Ok(Sim1Report {
        deltas,
        definiteness,
        kernel,
    })
}

/// Reads the genome table and outcome column written by `sim0`.
pub fn load_dataset(dir: &Path, model: ModelKind) -> Result<Dataset, PipelineError> {
    let path = dir.join(GENOMES_FILE);
    let mut rd = csv::Reader::from_reader(File::open(&path).map_err(|e| PipelineError::io(&path, e))?);
    let names: Vec<String> = rd
        .headers()
        .map_err(|e| PipelineError::parse(&path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut x = Vec::new();
    for row in rd.records() {
        let row = row.map_err(|e| PipelineError::parse(&path, e))?;
        let values = row
            .iter()
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| PipelineError::parse(&path, format!("bad number `{v}`")))
            })
            .collect::<Result<Vec<f64>, _>>()?;
        x.push(values);
    }
    let out_path = dir.join(OUTPUT_FILE);
    let y = read_text(&out_path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.trim()
                .parse::<f64>()
                .map_err(|_| PipelineError::parse(&out_path, format!("bad outcome `{l}`")))
        })
        .collect::<Result<Vec<f64>, _>>()?;
    if y.len() != x.len() {
        return Err(PipelineError::parse(
            &out_path,
            format!("{} outcomes for {} genomes", y.len(), x.len()),
        ));
    }
    Ok(dataset(model, names, x, y))
}

fn write_summaries(records: &[ResultRecord], dir: &Path) -> Result<(), PipelineError> {
    let path = dir.join("boxplot.csv");
    write_boxplot(&summarize_boxplot(records), create(&path)?)?;
    let path = dir.join("lineplot.csv");
    write_lineplot(records, create(&path)?)?;
    Ok(())
}

/// Benchmarks the configured algorithms on the stored dataset and kernel.
pub fn cmd_ml(cfg: &PipelineConfig) -> Result<Vec<ResultRecord>, PipelineError> {
    let data = load_dataset(&cfg.input_dir, cfg.model)?;
    let kernel = if cfg.experiment.algorithms.iter().any(|a| a.uses_kernel()) {
        let path = cfg
            .experiment
            .kernel
            .clone()
            .unwrap_or_else(|| cfg.input_dir.join(FINAL_KERNEL_FILE));
        if !path.is_file() {
            return Err(PipelineError::KernelNotFound(path));
        }
        let file = File::open(&path).map_err(|e| PipelineError::io(&path, e))?;
        Some(Kernel::read_csv(file)?)
    } else {
        None
    };
    prepare_out_dir(&cfg.out_dir)?;
    let master = ml_seed(cfg.seed);
    let exp = cfg.experiment_config(master);
    log::info!(
        "ml: {} samples, {} repetitions, {} algorithms (seed {master})",
        data.len(),
        exp.repetitions,
        exp.roster.len()
    );
    let records = in_pool(cfg.workers, || run_experiment(&data, kernel.as_ref(), &exp))??;

    let path = cfg.out_dir.join("results.csv");
    write_results(&records, create(&path)?)?;
    write_summaries(&records, &cfg.out_dir)?;

    let mut seeds = String::from("repetition,subsample,split_seed,subsample_seed\n");
    for rep in 0..exp.repetitions {
        for (s_idx, s) in exp.schedule.iter().enumerate() {
            seeds.push_str(&format!(
                "{},{},{},{}\n",
                rep + 1,
                format_value(*s),
                split_seed(master, rep),
                subsample_seed(master, rep, s_idx)
            ));
        }
    }
    write_text(&cfg.out_dir.join("ml_seeds.csv"), &seeds)?;
    Ok(records)
}

/// Rebuilds the box-plot and line-plot tables from a stored results file.
pub fn cmd_report(cfg: &PipelineConfig) -> Result<Vec<ResultRecord>, PipelineError> {
    let path = cfg.input_dir.join("results.csv");
    let file = File::open(&path).map_err(|e| PipelineError::io(&path, e))?;
    let records = read_results(file)?;
    prepare_out_dir(&cfg.out_dir)?;
    write_summaries(&records, &cfg.out_dir)?;
    Ok(records)
}
