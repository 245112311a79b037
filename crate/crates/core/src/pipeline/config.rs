//! Pipeline configuration: a TOML file with flat dotted keys, overridable
//! from the command line.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::Deserialize;

use super::models::ModelKind;
use super::PipelineError;
use crate::harness::Algorithm;
use crate::learners::SmoConfig;
use crate::simkernel::{OutputKind, SimilarityConfig, DEFAULT_PSD_TOL};
use crate::simmodels::network::{DagParams, PerturbScheme};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    model: Option<String>,
    samples: Option<usize>,
    trials: Option<usize>,
    seed: Option<u64>,
    workers: Option<usize>,
    out_dir: Option<PathBuf>,
    input_dir: Option<PathBuf>,
    sim0_spec: Option<PathBuf>,
    sim1_spec: Option<PathBuf>,
    params: Option<PathBuf>,
    #[serde(default)]
    similarity: SimilaritySection,
    #[serde(default)]
    experiment: ExperimentSection,
    #[serde(default)]
    svm: SvmSection,
    #[serde(default)]
    kernel: KernelSection,
    #[serde(default)]
    network: NetworkSection,
    #[serde(default)]
    boolean: BooleanSection,
    #[serde(default)]
    ode: OdeSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimilaritySection {
    entities: Option<Vec<String>>,
    #[serde(default)]
    weights: BTreeMap<String, f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentSection {
    repetitions: Option<usize>,
    fractions: Option<[f64; 3]>,
    schedule: Option<Vec<f64>>,
    algorithms: Option<Vec<String>>,
    strict_scaling: Option<bool>,
    kernel: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SvmSection {
    tol: Option<f64>,
    max_iter: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelSection {
    psd_tol: Option<f64>,
    jitter: Option<bool>,
    dump_trials: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkSection {
    scheme: Option<String>,
    layers: Option<Vec<usize>>,
    p_adjacent: Option<f64>,
    p_skip: Option<f64>,
    cost_low: Option<f64>,
    cost_high: Option<f64>,
    variable_arcs: Option<usize>,
    dag_seed: Option<u64>,
    dag_file: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct BooleanSection {
    full: Option<PathBuf>,
    reduced: Option<PathBuf>,
    modules: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OdeSection {
    t_end: Option<f64>,
    dt_out: Option<f64>,
    step: Option<f64>,
    threshold: Option<f64>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub model: Option<String>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub input_dir: Option<PathBuf>,
    pub scheme: Option<String>,
    pub strict_scaling: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSettings {
    pub scheme: PerturbScheme,
    pub dag: DagParams,
    pub dag_file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OdeSettings {
    pub t_end: Option<f64>,
    pub dt_out: Option<f64>,
    pub step: Option<f64>,
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BooleanFiles {
    pub full: Option<PathBuf>,
    pub reduced: Option<PathBuf>,
    pub modules: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSettings {
    pub repetitions: usize,
    pub fractions: [f64; 3],
    pub schedule: Vec<f64>,
    pub algorithms: Vec<Algorithm>,
    pub strict_scaling: bool,
    pub kernel: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub model: ModelKind,
    pub samples: usize,
    pub trials: usize,
    pub seed: u64,
    pub workers: usize,
    pub out_dir: PathBuf,
    /// Where `sim1` and `ml` read ground-truth files; defaults to `out_dir`.
    pub input_dir: PathBuf,
    pub sim0_spec: Option<PathBuf>,
    pub sim1_spec: Option<PathBuf>,
    pub params: Option<PathBuf>,
    pub similarity: SimilarityConfig,
    pub experiment: ExperimentSettings,
    pub smo: SmoConfig,
    pub psd_tol: f64,
    pub jitter: bool,
    pub dump_trials: bool,
    pub network: NetworkSettings,
    pub boolean: BooleanFiles,
    pub ode: OdeSettings,
}

fn bad(msg: impl Into<String>) -> PipelineError {
    PipelineError::Config(msg.into())
}

impl PipelineConfig {
    /// Defaults for `model` with nothing overridden.
    pub fn preset(model: ModelKind) -> Self {
        Self::resolve(FileConfig::default(), model, &Overrides::default()).expect("preset defaults are valid")
    }

    pub fn from_toml(text: &str, overrides: &Overrides) -> Result<Self, PipelineError> {
        let file: FileConfig = toml::from_str(text).map_err(|e| bad(e.to_string()))?;
        let model = overrides
            .model
            .as_deref()
            .or(file.model.as_deref())
            .ok_or_else(|| bad("no model selected (set `model` or pass --model)"))?
            .parse::<ModelKind>()?;
        Self::resolve(file, model, overrides)
    }

    pub fn from_overrides(overrides: &Overrides) -> Result<Self, PipelineError> {
        Self::from_toml("", overrides)
    }

    fn resolve(f: FileConfig, model: ModelKind, o: &Overrides) -> Result<Self, PipelineError> {
        let out_dir = o.out_dir.clone().or(f.out_dir).unwrap_or_else(|| PathBuf::from("out"));
        let input_dir = o.input_dir.clone().or(f.input_dir).unwrap_or_else(|| out_dir.clone());

        let mut similarity = SimilarityConfig::new(model.output_kind());
        similarity.entity_subset = f.similarity.entities;
        similarity.entity_weights = f.similarity.weights;
        if similarity.output_kind != OutputKind::Trajectory
            && (similarity.entity_subset.is_some() || !similarity.entity_weights.is_empty())
        {
            return Err(bad(
                "similarity.entities and similarity.weights apply to trajectory outputs only",
            ));
        }
        similarity.validate().map_err(|e| bad(e.to_string()))?;

        let algorithms = match f.experiment.algorithms {
            Some(names) => names.iter().map(|n| n.parse()).collect::<Result<Vec<Algorithm>, _>>()?,
            None => crate::harness::ROSTER.to_vec(),
        };
        let experiment = ExperimentSettings {
            repetitions: f.experiment.repetitions.unwrap_or(10),
            fractions: f.experiment.fractions.unwrap_or([0.5, 0.25, 0.25]),
            schedule: f.experiment.schedule.unwrap_or_else(|| model.schedule()),
            algorithms,
            strict_scaling: o.strict_scaling || f.experiment.strict_scaling.unwrap_or(false),
            kernel: f.experiment.kernel,
        };

        let defaults = SmoConfig::default();
        let smo = SmoConfig {
            tol: f.svm.tol.unwrap_or(defaults.tol),
            max_iter: f.svm.max_iter.unwrap_or(defaults.max_iter),
        };

        let scheme = o
            .scheme
            .as_deref()
            .or(f.network.scheme.as_deref())
            .unwrap_or("less_noisy")
            .parse::<PerturbScheme>()
            .map_err(|e| bad(e.to_string()))?;
        let dag_defaults = super::models::default_dag_params();
        let network = NetworkSettings {
            scheme,
            dag: DagParams {
                layer_sizes: f.network.layers.unwrap_or(dag_defaults.layer_sizes),
                p_adjacent: f.network.p_adjacent.unwrap_or(dag_defaults.p_adjacent),
                p_skip: f.network.p_skip.unwrap_or(dag_defaults.p_skip),
                cost_low: f.network.cost_low.unwrap_or(dag_defaults.cost_low),
                cost_high: f.network.cost_high.unwrap_or(dag_defaults.cost_high),
                n_variable: f.network.variable_arcs.unwrap_or(dag_defaults.n_variable),
                seed: f.network.dag_seed.unwrap_or(dag_defaults.seed),
            },
            dag_file: f.network.dag_file,
        };

        let cfg = Self {
            model,
            samples: f.samples.unwrap_or_else(|| model.default_samples()),
            trials: f.trials.unwrap_or_else(|| model.default_trials()),
            seed: o.seed.or(f.seed).unwrap_or(1),
            workers: o.workers.or(f.workers).unwrap_or(1),
            out_dir,
            input_dir,
            sim0_spec: f.sim0_spec,
            sim1_spec: f.sim1_spec,
            params: f.params,
            similarity,
            experiment,
            smo,
            psd_tol: f.kernel.psd_tol.unwrap_or(DEFAULT_PSD_TOL),
            jitter: f.kernel.jitter.unwrap_or(false),
            dump_trials: f.kernel.dump_trials.unwrap_or(false),
            network,
            boolean: BooleanFiles {
                full: f.boolean.full,
                reduced: f.boolean.reduced,
                modules: f.boolean.modules,
            },
            ode: OdeSettings {
                t_end: f.ode.t_end,
                dt_out: f.ode.dt_out,
                step: f.ode.step,
                threshold: f.ode.threshold,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.samples < 4 {
            return Err(bad(format!("samples must be at least 4, got {}", self.samples)));
        }
        if self.trials < 1 {
            return Err(bad("trials must be at least 1"));
        }
        if self.workers < 1 {
            return Err(bad("workers must be at least 1"));
        }
        if self.smo.tol.is_nan() || self.smo.tol <= 0.0 || self.smo.max_iter == 0 {
            return Err(bad("svm.tol must be positive and svm.max_iter nonzero"));
        }
        if self.psd_tol.is_nan() || self.psd_tol < 0.0 {
            return Err(bad("kernel.psd_tol must be nonnegative"));
        }
        self.experiment_config(0).validate()?;
        Ok(())
    }

    pub fn experiment_config(&self, master_seed: u64) -> crate::harness::ExperimentConfig {
        crate::harness::ExperimentConfig {
            repetitions: self.experiment.repetitions,
            fractions: self.experiment.fractions,
            schedule: self.experiment.schedule.clone(),
            roster: self.experiment.algorithms.clone(),
            master_seed,
            strict_scaling: self.experiment.strict_scaling,
            smo: self.smo,
        }
    }
}
