//! The four built-in simulation problems and how a genome key and a trial's
//! uncertain parameters turn into a ground-truth outcome or a simulation
//! output.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use super::config::{OdeSettings, PipelineConfig};
use super::PipelineError;
use crate::learners::Task;
use crate::paramfile::{ParamLine, ParamOp};
use crate::simkernel::{OutputKind, SimOutput};
use crate::simmodels::boolean::BooleanNetwork;
use crate::simmodels::cascade::{simulate_cascade, CascadeParams, CascadeSchedule};
use crate::simmodels::network::{
    flow_vector, generate_layered_dag, perturb_costs, solve_unit_flow, DagParams, LayeredDag, PerturbScheme,
};
use crate::simmodels::ode::{first_crossing_time, Crossing};
use crate::simmodels::radiation::{classify_radiation, simulate_radiation, RadiationParams, RadiationSchedule};
use crate::simmodels::{classify_boolean, find_attractor};

const RADIATION_T: &str = include_str!("../../presets/radiation.t");
const RADIATION_U: &str = include_str!("../../presets/radiation.u");
const CASCADE_T: &str = include_str!("../../presets/cascade.t");
const CASCADE_U: &str = include_str!("../../presets/cascade.u");
const BOOLEAN_T: &str = include_str!("../../presets/boolean.t");
const BOOLEAN_U: &str = include_str!("../../presets/boolean.u");
const BOOLEAN_FULL: &str = include_str!("../../presets/boolean_full.bn");
const BOOLEAN_REDUCED: &str = include_str!("../../presets/boolean_reduced.bn");
const BOOLEAN_MODULES: &str = include_str!("../../presets/boolean_modules.txt");
const NETWORK_T: &str = include_str!("../../presets/network.t");

/// Genes whose mutation switches them off; every other mutated gene is held on.
const LOSS_OF_FUNCTION: &[&str] = &["p53"];

const ATTRACTOR_BUDGET: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Radiation,
    Boolean,
    Network,
    CustomOde,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [Self::Radiation, Self::Boolean, Self::Network, Self::CustomOde];

    pub fn name(self) -> &'static str {
        match self {
            Self::Radiation => "radiation",
            Self::Boolean => "boolean",
            Self::Network => "network",
            Self::CustomOde => "custom-ode",
        }
    }

    pub fn task(self) -> Task {
        match self {
            Self::CustomOde => Task::Regression,
            _ => Task::Classification,
        }
    }

    pub fn output_kind(self) -> OutputKind {
        match self {
            Self::Radiation | Self::CustomOde => OutputKind::Trajectory,
            Self::Boolean => OutputKind::Categorical,
            Self::Network => OutputKind::Vector,
        }
    }

    /// Training-set fractions used by the learning-curve experiment.
    pub fn schedule(self) -> Vec<f64> {
        match self {
            Self::Radiation => vec![0.05, 0.1, 0.25, 0.5, 1.0],
            Self::CustomOde => vec![0.05, 0.1, 0.3, 0.6, 1.0],
            Self::Boolean => vec![0.025, 0.05, 0.1, 0.2, 1.0],
            Self::Network => vec![0.04, 0.07, 0.1, 0.13, 0.16],
        }
    }

    pub fn default_samples(self) -> usize {
        match self {
            Self::Radiation | Self::Boolean => 1000,
            Self::Network | Self::CustomOde => 500,
        }
    }

    pub fn default_trials(self) -> usize {
        match self {
            Self::Radiation | Self::Boolean => 20,
            Self::Network => 10,
            Self::CustomOde => 5,
        }
    }

    pub fn default_sim0_spec(self) -> &'static str {
        match self {
            Self::Radiation => RADIATION_T,
            Self::Boolean => BOOLEAN_T,
            Self::Network => NETWORK_T,
            Self::CustomOde => CASCADE_T,
        }
    }

    /// The network model perturbs costs directly and has no trial spec.
    pub fn default_sim1_spec(self) -> Option<&'static str> {
        match self {
            Self::Radiation => Some(RADIATION_U),
            Self::Boolean => Some(BOOLEAN_U),
            Self::Network => None,
            Self::CustomOde => Some(CASCADE_U),
        }
    }

    /// Genome columns holding unordered levels.
    pub fn categorical_features(self) -> &'static [&'static str] {
        match self {
            Self::CustomOde => &["mutant"],
            _ => &[],
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = PipelineError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| PipelineError::Config(format!("unknown model `{s}`")))
    }
}

pub fn default_dag_params() -> DagParams {
    DagParams {
        layer_sizes: vec![1, 4, 4, 3],
        p_adjacent: 0.6,
        p_skip: 0.1,
        cost_low: 1.0,
        cost_high: 10.0,
        n_variable: 12,
        seed: 6,
    }
}

fn read_or(path: Option<&Path>, fallback: &str) -> Result<String, PipelineError> {
    match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| PipelineError::io(p, e)),
        None => Ok(fallback.to_string()),
    }
}

#[derive(Debug, Clone)]
pub struct BooleanModel {
    full: BooleanNetwork,
    reduced: BooleanNetwork,
    /// Reduced node name to the full-model members it may take its initial value from.
    modules: BTreeMap<String, Vec<String>>,
}

fn parse_modules(text: &str) -> Result<BTreeMap<String, Vec<String>>, PipelineError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (name, members) = line
            .split_once('=')
            .ok_or_else(|| PipelineError::Model(format!("module file line {}: expected `Module = a, b`", i + 1)))?;
        let members: Vec<String> = members
            .split(',')
            .map(|m| m.trim().to_string())
            .filter(|m| !m.is_empty())
            .collect();
        if members.is_empty() {
            return Err(PipelineError::Model(format!("module file line {}: no members", i + 1)));
        }
        out.insert(name.trim().to_string(), members);
    }
    Ok(out)
}

impl BooleanModel {
    pub fn new(full: &str, reduced: &str, modules: &str) -> Result<Self, PipelineError> {
        let model = Self {
            full: BooleanNetwork::parse(full).map_err(|e| PipelineError::Model(e.to_string()))?,
            reduced: BooleanNetwork::parse(reduced).map_err(|e| PipelineError::Model(e.to_string()))?,
            modules: parse_modules(modules)?,
        };
        for node in &model.reduced.node_names {
            let members = model
                .modules
                .get(node)
                .ok_or_else(|| PipelineError::Model(format!("reduced node `{node}` has no module entry")))?;
            for m in members {
                model
                    .full
                    .index_of(m)
                    .map_err(|e| PipelineError::Model(e.to_string()))?;
            }
        }
        for net in [&model.full, &model.reduced] {
            for n in ["Apoptosis", "Metastasis"] {
                net.index_of(n).map_err(|e| PipelineError::Model(e.to_string()))?;
            }
        }
        Ok(model)
    }

    pub fn preset() -> Self {
        Self::new(BOOLEAN_FULL, BOOLEAN_REDUCED, BOOLEAN_MODULES).expect("shipped Boolean model is consistent")
    }

    fn module_of(&self, gene: &str) -> Option<&str> {
        self.modules
            .iter()
            .find(|(_, members)| members.iter().any(|m| m == gene))
            .map(|(name, _)| name.as_str())
    }

    fn classify(net: &BooleanNetwork, initial: u64) -> Result<u8, String> {
        let res = find_attractor(net, initial, ATTRACTOR_BUDGET).map_err(|e| e.to_string())?;
        let apop = net.index_of("Apoptosis").map_err(|e| e.to_string())?;
        let meta = net.index_of("Metastasis").map_err(|e| e.to_string())?;
        Ok(classify_boolean(&res, apop, meta))
    }

    /// Splits genome lines into full-model initial values and mutated genes.
    fn read_genome(&self, genome: &[ParamLine]) -> Result<(Vec<bool>, Vec<String>), String> {
        let mut init = vec![false; self.full.len()];
        let mut mutated = Vec::new();
        for line in genome {
            let on = line.value != 0.0;
            if let Some(node) = line.name.strip_prefix("init_") {
                init[self.full.index_of(node).map_err(|e| e.to_string())?] = on;
            } else if let Some(gene) = line.name.strip_prefix("mut_") {
                self.full.index_of(gene).map_err(|e| e.to_string())?;
                if on {
                    mutated.push(gene.to_string());
                }
            } else {
                return Err(format!("unknown genome entry `{}`", line.name));
            }
        }
        Ok((init, mutated))
    }

    pub fn ground_truth(&self, genome: &[ParamLine]) -> Result<f64, String> {
        let (mut init, mutated) = self.read_genome(genome)?;
        let mut net = self.full.clone();
        for gene in &mutated {
            let idx = net.index_of(gene).map_err(|e| e.to_string())?;
            let value = !LOSS_OF_FUNCTION.contains(&gene.as_str());
            net.fix_node(idx, value);
            init[idx] = value;
        }
        Ok(Self::classify(&net, BooleanNetwork::pack(&init))? as f64)
    }

    /// Runs the reduced model. `map_<Module>` trial entries pick which member
    /// seeds a module's initial value (default: the first).
    pub fn trial_output(&self, genome: &[ParamLine], trial: &[ParamLine]) -> Result<SimOutput, String> {
        let (full_init, mutated) = self.read_genome(genome)?;
        let mut pick: BTreeMap<&str, usize> = BTreeMap::new();
        for line in trial {
            let module = line
                .name
                .strip_prefix("map_")
                .ok_or_else(|| format!("unknown trial entry `{}`", line.name))?;
            if line.op != ParamOp::Set || line.value < 0.0 || line.value.fract() != 0.0 {
                return Err(format!("`{}` must be set to a member index", line.name));
            }
            pick.insert(module, line.value as usize);
        }
        let mut net = self.reduced.clone();
        let mut init = vec![false; net.len()];
        for (idx, node) in net.node_names.iter().enumerate() {
            let members = &self.modules[node];
            let k = pick.get(node.as_str()).copied().unwrap_or(0);
            let member = members
                .get(k)
                .ok_or_else(|| format!("module `{node}` has no member {k}"))?;
            init[idx] = full_init[self.full.index_of(member).map_err(|e| e.to_string())?];
        }
        for gene in &mutated {
            let module = self
                .module_of(gene)
                .ok_or_else(|| format!("mutated gene `{gene}` is in no module"))?;
            let idx = net.index_of(module).map_err(|e| e.to_string())?;
            let value = !LOSS_OF_FUNCTION.contains(&gene.as_str());
            net.fix_node(idx, value);
            init[idx] = value;
        }
        Ok(SimOutput::Label(
            Self::classify(&net, BooleanNetwork::pack(&init))? as u32
        ))
    }
}

#[derive(Debug, Clone)]
pub struct NetworkModel {
    pub dag: LayeredDag,
    pub scheme: PerturbScheme,
}

impl NetworkModel {
    /// Base costs with `var<k>` replacing the k-th variable arc's cost.
    pub fn sample_costs(&self, genome: &[ParamLine]) -> Result<Vec<f64>, String> {
        let mut costs = self.dag.base_costs();
        for line in genome {
            let k: usize = line
                .name
                .strip_prefix("var")
                .and_then(|k| k.parse().ok())
                .filter(|&k| k >= 1 && k <= self.dag.variable_arcs.len())
                .ok_or_else(|| format!("unknown genome entry `{}`", line.name))?;
            let slot = &mut costs[self.dag.variable_arcs[k - 1]];
            match line.op {
                ParamOp::Set => *slot = line.value,
                ParamOp::Scale => *slot *= line.value,
            }
        }
        Ok(costs)
    }

    pub fn ground_truth(&self, genome: &[ParamLine]) -> Result<f64, String> {
        let costs = self.sample_costs(genome)?;
        let sol = solve_unit_flow(&self.dag, &costs).map_err(|e| e.to_string())?;
        Ok(sol.exit_class as f64)
    }

    pub fn trial_output(&self, genome: &[ParamLine], trial_seed: u64) -> Result<SimOutput, String> {
        let costs = self.sample_costs(genome)?;
        let perturbed = perturb_costs(&self.dag, self.scheme, &costs, trial_seed).map_err(|e| e.to_string())?;
        let sol = solve_unit_flow(&self.dag, &perturbed).map_err(|e| e.to_string())?;
        Ok(SimOutput::Vector(flow_vector(&self.dag, &sol)))
    }
}

fn apply_radiation(p: &mut RadiationParams, lines: &[ParamLine]) -> Result<(), String> {
    for l in lines {
        match l.op {
            ParamOp::Set => p.set(&l.name, l.value),
            ParamOp::Scale => p.scale(&l.name, l.value),
        }
        .map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn apply_cascade(p: &mut CascadeParams, lines: &[ParamLine]) -> Result<(), String> {
    for l in lines {
        match l.op {
            ParamOp::Set => p.set(&l.name, l.value),
            ParamOp::Scale => p.scale(&l.name, l.value),
        }
        .map_err(|e| e.to_string())?;
    }
    Ok(())
}

/// A ready-to-run simulator for one model.
#[derive(Debug, Clone)]
pub enum Simulator {
    Radiation {
        base: RadiationParams,
        schedule: RadiationSchedule,
    },
    Cascade {
        base: CascadeParams,
        schedule: CascadeSchedule,
    },
    Boolean(BooleanModel),
    Network(NetworkModel),
}

fn radiation_schedule(o: &OdeSettings) -> RadiationSchedule {
    let d = RadiationSchedule::default();
    RadiationSchedule {
        t_end: o.t_end.unwrap_or(d.t_end),
        dt_out: o.dt_out.unwrap_or(d.dt_out),
        step: o.step.unwrap_or(d.step),
    }
}

fn cascade_schedule(o: &OdeSettings) -> CascadeSchedule {
    let d = CascadeSchedule::default();
    CascadeSchedule {
        t_end: o.t_end.unwrap_or(d.t_end),
        dt_out: o.dt_out.unwrap_or(d.dt_out),
        step: o.step.unwrap_or(d.step),
        threshold: o.threshold.unwrap_or(d.threshold),
    }
}

impl Simulator {
    pub fn from_config(cfg: &PipelineConfig) -> Result<Self, PipelineError> {
        let model_err = |e: String| PipelineError::Model(e);
        Ok(match cfg.model {
            ModelKind::Radiation => {
                let text = read_or(cfg.params.as_deref(), crate::simmodels::radiation::DEFAULT_PARAMS)?;
                Self::Radiation {
                    base: RadiationParams::from_text(&text).map_err(|e| model_err(e.to_string()))?,
                    schedule: radiation_schedule(&cfg.ode),
                }
            }
            ModelKind::CustomOde => {
                let text = read_or(cfg.params.as_deref(), crate::simmodels::cascade::DEFAULT_PARAMS)?;
                Self::Cascade {
                    base: CascadeParams::from_text(&text).map_err(|e| model_err(e.to_string()))?,
                    schedule: cascade_schedule(&cfg.ode),
                }
            }
            ModelKind::Boolean => {
                let b = &cfg.boolean;
                Self::Boolean(BooleanModel::new(
                    &read_or(b.full.as_deref(), BOOLEAN_FULL)?,
                    &read_or(b.reduced.as_deref(), BOOLEAN_REDUCED)?,
                    &read_or(b.modules.as_deref(), BOOLEAN_MODULES)?,
                )?)
            }
            ModelKind::Network => {
                let dag = match &cfg.network.dag_file {
                    Some(p) => LayeredDag::from_csv(&read_or(Some(p), "")?).map_err(|e| model_err(e.to_string()))?,
                    None => generate_layered_dag(&cfg.network.dag).map_err(|e| model_err(e.to_string()))?,
                };
                Self::Network(NetworkModel {
                    dag,
                    scheme: cfg.network.scheme,
                })
            }
        })
    }

    pub fn ground_truth(&self, genome: &[ParamLine]) -> Result<f64, String> {
        match self {
            Self::Radiation { base, schedule } => {
                let mut p = base.clone();
                apply_radiation(&mut p, genome)?;
                let traj = simulate_radiation(&p, *schedule).map_err(|e| e.to_string())?;
                Ok(classify_radiation(&traj.final_levels()).map_err(|e| e.to_string())? as f64)
            }
            Self::Cascade { base, schedule } => {
                let mut p = base.clone();
                apply_cascade(&mut p, genome)?;
                let traj = simulate_cascade(&p, *schedule)?;
                match first_crossing_time(&traj, "AP1", schedule.threshold) {
                    Some(Crossing::At(t)) => Ok(t),
                    Some(Crossing::Censored) => Ok(schedule.t_end),
                    None => Err("trajectory has no AP1 series".into()),
                }
            }
            Self::Boolean(m) => m.ground_truth(genome),
            Self::Network(m) => m.ground_truth(genome),
        }
    }

    /// Simulates one sample under one trial's uncertain parameters.
    pub fn trial_output(
        &self,
        genome: &[ParamLine],
        trial: &[ParamLine],
        trial_seed: u64,
    ) -> Result<SimOutput, String> {
        match self {
            Self::Radiation { base, schedule } => {
                let mut p = base.clone();
                apply_radiation(&mut p, genome)?;
                apply_radiation(&mut p, trial)?;
                Ok(SimOutput::Trajectory(
                    simulate_radiation(&p, *schedule).map_err(|e| e.to_string())?,
                ))
            }
            Self::Cascade { base, schedule } => {
                let mut p = base.clone();
                apply_cascade(&mut p, genome)?;
                apply_cascade(&mut p, trial)?;
                Ok(SimOutput::Trajectory(simulate_cascade(&p, *schedule)?))
            }
            Self::Boolean(m) => m.trial_output(genome, trial),
            Self::Network(m) => m.trial_output(genome, trial_seed),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paramfile::parse_param_file;
    use crate::randspec::{instantiate, parse_spec, render};

    fn genome(model: ModelKind, seed: u64) -> Vec<ParamLine> {
        let spec = parse_spec(model.default_sim0_spec()).unwrap();
        parse_param_file(&render(&spec, &instantiate(&spec, seed)).unwrap()).unwrap()
    }

    #[test]
    fn feature_counts() {
        let count = |m: ModelKind| parse_spec(m.default_sim0_spec()).unwrap().tokens.len();
        assert_eq!(count(ModelKind::Radiation), 39);
        assert_eq!(count(ModelKind::Boolean), 37);
        assert_eq!(count(ModelKind::Network), 12);
        assert_eq!(count(ModelKind::CustomOde), 35);
    }

    #[test]
    fn names_round_trip() {
        for m in ModelKind::ALL {
            assert_eq!(m.name().parse::<ModelKind>().unwrap(), m);
        }
    }

    #[test]
    fn every_preset_simulates() {
        for m in ModelKind::ALL {
            let cfg = PipelineConfig::preset(m);
            let sim = Simulator::from_config(&cfg).unwrap();
            let g = genome(m, 3);
            let y = sim.ground_truth(&g).unwrap();
            assert!(y.is_finite());
            let trial = match m.default_sim1_spec() {
                Some(t) => {
                    let spec = parse_spec(t).unwrap();
                    parse_param_file(&render(&spec, &instantiate(&spec, 5)).unwrap()).unwrap()
                }
                None => Vec::new(),
            };
            let out = sim.trial_output(&g, &trial, 5).unwrap();
            assert_eq!(out.kind(), m.output_kind());
        }
    }

    #[test]
    fn boolean_mutations_reach_reduced_model() {
        let m = BooleanModel::preset();
        assert_eq!(m.module_of("NICD"), Some("Notch_pthw"));
        assert_eq!(m.module_of("TGFbeta"), Some("SMAD"));
        assert_eq!(m.module_of("p53"), Some("p53"));
    }

    #[test]
    fn network_costs_follow_genome() {
        let sim = NetworkModel {
            dag: generate_layered_dag(&default_dag_params()).unwrap(),
            scheme: PerturbScheme::LessNoisy,
        };
        let g = genome(ModelKind::Network, 1);
        let costs = sim.sample_costs(&g).unwrap();
        for (k, &arc) in sim.dag.variable_arcs.iter().enumerate() {
            assert_eq!(costs[arc], g[k].value);
        }
        let bad = vec![ParamLine {
            name: "var13".into(),
            op: ParamOp::Set,
            value: 1.0,
        }];
        assert!(sim.sample_costs(&bad).is_err());
    }
}
