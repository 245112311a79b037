//! Layered DAG unit-flow model.
//!
//! Node 0 is the single source. Nodes are numbered layer by layer; the last
//! layer holds exactly three nodes, each with one exit arc into an implicit
//! sink. A unit of flow takes the cheapest source-to-sink path, and the exit
//! arc it uses (1, 2 or 3) is the class label. Because all arcs point forward,
//! node numbering is a topological order and one relaxation sweep yields the
//! optimal path.
//!
//! Arc `layer_tag` is one plus the layer index of the arc's tail, so arcs
//! leaving the source are layer 1, arcs leaving the first hidden layer are
//! layer 2, and so on.

use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::randspec::format_value;

pub const EXIT_ARCS: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("infeasible topology: {0}")]
    InfeasibleTopology(String),
    #[error("no source-to-sink path")]
    NoPath,
    #[error("expected {expected} arc costs, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("unknown perturbation scheme `{0}`")]
    UnknownScheme(String),
    #[error("malformed arc list: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Arc {
    pub from: usize,
    pub to: usize,
    pub base_cost: f64,
    pub layer_tag: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayeredDag {
    /// Node count per layer; `layers[0] == 1` and the last entry is 3.
    pub layers: Vec<usize>,
    pub arcs: Vec<Arc>,
    /// Arc ids of the exit arcs, ordered by exit class.
    pub exit_arcs: Vec<usize>,
    /// Arc ids whose costs vary from sample to sample, ascending.
    pub variable_arcs: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DagParams {
    pub layer_sizes: Vec<usize>,
    pub p_adjacent: f64,
    pub p_skip: f64,
    pub cost_low: f64,
    pub cost_high: f64,
    pub n_variable: usize,
    pub seed: u64,
}

impl LayeredDag {
    pub fn node_count(&self) -> usize {
        self.layers.iter().sum()
    }

    pub fn sink(&self) -> usize {
        self.node_count()
    }

    pub fn layer_of(&self, node: usize) -> usize {
        let mut acc = 0;
        for (l, &n) in self.layers.iter().enumerate() {
            acc += n;
            if node < acc {
                return l;
            }
        }
        self.layers.len()
    }

    pub fn base_costs(&self) -> Vec<f64> {
        self.arcs.iter().map(|a| a.base_cost).collect()
    }

    fn layer_start(&self, layer: usize) -> usize {
        self.layers[..layer].iter().sum()
    }

    /// Serializes as `from,to,cost,layer_tag,is_variable,is_exit` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("from,to,cost,layer_tag,is_variable,is_exit\n");
        for (id, a) in self.arcs.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                a.from,
                a.to,
                format_value(a.base_cost),
                a.layer_tag,
                u8::from(self.variable_arcs.contains(&id)),
                u8::from(self.exit_arcs.contains(&id)),
            );
        }
        out
    }

    /// Inverse of [`LayeredDag::to_csv`]; layer sizes are recovered from the
    /// arc tags.
    pub fn from_csv(text: &str) -> Result<Self, NetworkError> {
        let bad = |m: String| NetworkError::Csv(m);
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty".into()))?;
        if header.trim() != "from,to,cost,layer_tag,is_variable,is_exit" {
            return Err(bad(format!("unexpected header `{header}`")));
        }
        let mut arcs = Vec::new();
        let mut exit_arcs = Vec::new();
        let mut variable_arcs = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 6 {
                return Err(bad(format!("row {}: expected 6 fields", i + 1)));
            }
            let p_usize = |s: &str| s.parse::<usize>().map_err(|_| bad(format!("row {}: `{s}`", i + 1)));
            let cost: f64 = f[2].parse().map_err(|_| bad(format!("row {}: `{}`", i + 1, f[2])))?;
            let id = arcs.len();
            arcs.push(Arc {
                from: p_usize(f[0])?,
                to: p_usize(f[1])?,
                base_cost: cost,
                layer_tag: p_usize(f[3])?,
            });
            if f[4] == "1" {
                variable_arcs.push(id);
            }
            if f[5] == "1" {
                exit_arcs.push(id);
            }
        }
        let n_nodes = arcs.iter().map(|a| a.from + 1).max().unwrap_or(0);
        let n_layers = arcs.iter().map(|a| a.layer_tag).max().unwrap_or(0);
        let mut layers = vec![0usize; n_layers];
        let mut node_layer = vec![usize::MAX; n_nodes];
        for a in &arcs {
            if a.layer_tag == 0 {
                return Err(bad("layer_tag must be >= 1".into()));
            }
            node_layer[a.from] = a.layer_tag - 1;
        }
        for &l in &node_layer {
            if l == usize::MAX {
                return Err(bad("node without outgoing arc".into()));
            }
            layers[l] += 1;
        }
        let dag = Self {
            layers,
            arcs,
            exit_arcs,
            variable_arcs,
        };
        dag.validate()?;
        Ok(dag)
    }

    /// Checks forward-only arcs, the exit structure, and that every node lies
    /// on a source-to-exit path.
    pub fn validate(&self) -> Result<(), NetworkError> {
        let infeasible = |m: &str| NetworkError::InfeasibleTopology(m.into());
        if self.layers.first() != Some(&1) {
            return Err(infeasible("first layer must hold exactly one source node"));
        }
        if self.layers.last() != Some(&EXIT_ARCS) || self.exit_arcs.len() != EXIT_ARCS {
            return Err(infeasible("final layer must yield exactly 3 exit arcs"));
        }
        let sink = self.sink();
        let n = self.node_count();
        for a in &self.arcs {
            if a.from >= n || a.to > sink {
                return Err(infeasible("arc endpoint out of range"));
            }
            if a.to != sink && self.layer_of(a.to) <= self.layer_of(a.from) {
                return Err(infeasible("arc does not point forward"));
            }
        }
        let last = self.layer_start(self.layers.len() - 1);
        for (j, &id) in self.exit_arcs.iter().enumerate() {
            let a = &self.arcs[id];
            if a.from != last + j || a.to != sink {
                return Err(infeasible("exit arcs must leave the final layer in order"));
            }
        }
        let mut by_tail: Vec<&Arc> = self.arcs.iter().collect();
        by_tail.sort_by_key(|a| (a.from, a.to));
        let mut reach = vec![false; n + 1];
        reach[0] = true;
        for a in &by_tail {
            if reach[a.from] {
                reach[a.to] = true;
            }
        }
        let mut coreach = vec![false; n + 1];
        coreach[sink] = true;
        for a in by_tail.iter().rev() {
            if coreach[a.to] {
                coreach[a.from] = true;
            }
        }
        if (0..n).any(|v| !reach[v] || !coreach[v]) {
            return Err(infeasible("some node is not on a source-to-exit path"));
        }
        Ok(())
    }
}

/// Random layered DAG. Adjacent-layer arcs are added with `p_adjacent`, arcs
/// skipping one or more layers with `p_skip`; nodes left without an incoming
/// or outgoing arc receive one forced arc to a random neighbour layer node.
pub fn generate_layered_dag(params: &DagParams) -> Result<LayeredDag, NetworkError> {
    let sizes = &params.layer_sizes;
    if sizes.len() < 2 || sizes[0] != 1 || *sizes.last().unwrap() != EXIT_ARCS || sizes.contains(&0) {
        return Err(NetworkError::InfeasibleTopology(
            "layer sizes must start with 1, end with 3 and contain no empty layer".into(),
        ));
    }
    if params.cost_low.is_nan()
        || params.cost_high.is_nan()
        || params.cost_low > params.cost_high
        || params.cost_low < 0.0
    {
        return Err(NetworkError::InfeasibleTopology("invalid cost range".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(params.seed);
    let starts: Vec<usize> = sizes
        .iter()
        .scan(0, |acc, &n| {
            let s = *acc;
            *acc += n;
            Some(s)
        })
        .collect();
    let nodes_in = |l: usize| starts[l]..starts[l] + sizes[l];
    let n_layers = sizes.len();

    let mut edges: Vec<(usize, usize, usize)> = Vec::new();
    for l in 0..n_layers - 1 {
        for u in nodes_in(l) {
            for v in nodes_in(l + 1) {
                if rng.random_bool(params.p_adjacent.clamp(0.0, 1.0)) {
                    edges.push((u, v, l + 1));
                }
            }
            for l2 in l + 2..n_layers {
                for v in nodes_in(l2) {
                    if rng.random_bool(params.p_skip.clamp(0.0, 1.0)) {
                        edges.push((u, v, l + 1));
                    }
                }
            }
        }
    }
    for l in 0..n_layers - 1 {
        for u in nodes_in(l) {
            if !edges.iter().any(|e| e.0 == u) {
                let v = starts[l + 1] + rng.random_range(0..sizes[l + 1]);
                edges.push((u, v, l + 1));
            }
        }
        for v in nodes_in(l + 1) {
            if !edges.iter().any(|e| e.1 == v) {
                let u = starts[l] + rng.random_range(0..sizes[l]);
                edges.push((u, v, l + 1));
            }
        }
    }
    edges.sort_unstable();
    edges.dedup();

    let sink: usize = sizes.iter().sum();
    let mut arcs: Vec<Arc> = edges
        .into_iter()
        .map(|(from, to, layer_tag)| Arc {
            from,
            to,
            base_cost: 0.0,
            layer_tag,
        })
        .collect();
    let mut exit_arcs = Vec::with_capacity(EXIT_ARCS);
    for u in nodes_in(n_layers - 1) {
        exit_arcs.push(arcs.len());
        arcs.push(Arc {
            from: u,
            to: sink,
            base_cost: 0.0,
            layer_tag: n_layers,
        });
    }
    for a in &mut arcs {
        a.base_cost = if params.cost_low == params.cost_high {
            params.cost_low
        } else {
            rng.random_range(params.cost_low..=params.cost_high)
        };
    }
    let inner = arcs.len() - EXIT_ARCS;
    if params.n_variable > inner {
        return Err(NetworkError::InfeasibleTopology(format!(
            "{} variable arcs requested but only {inner} non-exit arcs exist",
            params.n_variable
        )));
    }
    let mut variable_arcs = sample(&mut rng, inner, params.n_variable).into_vec();
    variable_arcs.sort_unstable();

    let dag = LayeredDag {
        layers: sizes.clone(),
        arcs,
        exit_arcs,
        variable_arcs,
    };
    dag.validate()?;
    Ok(dag)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSolution {
    pub path: Vec<usize>,
    /// 1-based index of the exit arc carrying the flow.
    pub exit_class: u8,
    pub total_cost: f64,
}

/// Minimum-cost source-to-sink unit flow by relaxation in topological order.
/// Ties between exits go to the lowest exit index.
pub fn solve_unit_flow(dag: &LayeredDag, costs: &[f64]) -> Result<FlowSolution, NetworkError> {
    if costs.len() != dag.arcs.len() {
        return Err(NetworkError::SizeMismatch {
            expected: dag.arcs.len(),
            got: costs.len(),
        });
    }
    let n = dag.node_count();
    let mut dist = vec![f64::INFINITY; n + 1];
    let mut pred: Vec<Option<usize>> = vec![None; n + 1];
    dist[0] = 0.0;
    // node numbering is a topological order
    let mut order: Vec<usize> = (0..dag.arcs.len()).collect();
    order.sort_by_key(|&id| (dag.arcs[id].from, dag.arcs[id].to));
    for id in order {
        let a = &dag.arcs[id];
        if a.to == dag.sink() {
            continue;
        }
        let cand = dist[a.from] + costs[id];
        if cand < dist[a.to] {
            dist[a.to] = cand;
            pred[a.to] = Some(id);
        }
    }
    let mut best: Option<(usize, f64)> = None;
    for (j, &id) in dag.exit_arcs.iter().enumerate() {
        let a = &dag.arcs[id];
        let total = dist[a.from] + costs[id];
        if total.is_finite() && best.is_none_or(|(_, b)| total < b) {
            best = Some((j, total));
        }
    }
    let (j, total_cost) = best.ok_or(NetworkError::NoPath)?;
    let mut path = vec![dag.exit_arcs[j]];
    let mut node = dag.arcs[dag.exit_arcs[j]].from;
    while let Some(id) = pred[node] {
        path.push(id);
        node = dag.arcs[id].from;
    }
    path.reverse();
    Ok(FlowSolution {
        path,
        exit_class: (j + 1) as u8,
        total_cost,
    })
}

/// Unit flow on every arc for a solved path.
pub fn flow_vector(dag: &LayeredDag, sol: &FlowSolution) -> Vec<f64> {
    let mut v = vec![0.0; dag.arcs.len()];
    for &id in &sol.path {
        v[id] = 1.0;
    }
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbScheme {
    LessNoisy,
    Noisier,
}

impl std::str::FromStr for PerturbScheme {
    type Err = NetworkError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "less_noisy" => Ok(Self::LessNoisy),
            "noisier" => Ok(Self::Noisier),
            other => Err(NetworkError::UnknownScheme(other.into())),
        }
    }
}

impl std::fmt::Display for PerturbScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::LessNoisy => "less_noisy",
            Self::Noisier => "noisier",
        })
    }
}

/// Multiplicative per-trial perturbation of a sample's arc costs.
///
/// Four factors are drawn for every arc in id order (variable-arc, layer-2,
/// layer-3, third-exit), whether or not the scheme applies them, so the two
/// schemes share their common factors under the same `trial_seed`.
pub fn perturb_costs(
    dag: &LayeredDag,
    scheme: PerturbScheme,
    sample_costs: &[f64],
    trial_seed: u64,
) -> Result<Vec<f64>, NetworkError> {
    if sample_costs.len() != dag.arcs.len() {
        return Err(NetworkError::SizeMismatch {
            expected: dag.arcs.len(),
            got: sample_costs.len(),
        });
    }
    let mut rng = ChaCha20Rng::seed_from_u64(trial_seed);
    let third_exit = dag.exit_arcs[2];
    let mut out = sample_costs.to_vec();
    for (id, cost) in out.iter_mut().enumerate() {
        let f_var = rng.random_range(0.1..=1.9);
        let f_l2 = rng.random_range(0.5..=1.5);
        let f_l3 = rng.random_range(0.5..=1.5);
        let f_exit = rng.random_range(9.0..=10.0);
        let tag = dag.arcs[id].layer_tag;
        if dag.variable_arcs.binary_search(&id).is_ok() {
            *cost *= f_var;
        }
        if tag == 2 {
            *cost *= f_l2;
        }
        if scheme == PerturbScheme::Noisier {
            if tag == 3 {
                *cost *= f_l3;
            }
            if id == third_exit {
                *cost *= f_exit;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(layers: &[usize], seed: u64) -> DagParams {
        DagParams {
            layer_sizes: layers.to_vec(),
            p_adjacent: 0.5,
            p_skip: 0.1,
            cost_low: 1.0,
            cost_high: 10.0,
            n_variable: 3,
            seed,
        }
    }

    #[test]
    fn probability_one_gives_complete_bipartite_layers() {
        let mut p = params(&[1, 2, 3, 3], 4);
        p.p_adjacent = 1.0;
        p.p_skip = 0.0;
        let dag = generate_layered_dag(&p).unwrap();
        assert_eq!(dag.arcs.len(), 2 + 6 + 9 + 3);
        for a in &dag.arcs {
            if a.to != dag.sink() {
                assert_eq!(dag.layer_of(a.to), dag.layer_of(a.from) + 1);
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let p = params(&[1, 3, 4, 3], 77);
        assert_eq!(generate_layered_dag(&p).unwrap(), generate_layered_dag(&p).unwrap());
    }

    #[test]
    fn sparse_graphs_get_forced_arcs() {
        let mut p = params(&[1, 2, 2, 3], 0);
        p.p_adjacent = 0.0;
        p.p_skip = 0.0;
        p.n_variable = 0;
        for seed in 0..50 {
            p.seed = seed;
            generate_layered_dag(&p).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn rejects_bad_layouts() {
        assert!(generate_layered_dag(&params(&[2, 3, 3], 0)).is_err());
        assert!(generate_layered_dag(&params(&[1, 3, 2], 0)).is_err());
        let mut p = params(&[1, 3], 0);
        p.n_variable = 10;
        assert!(matches!(
            generate_layered_dag(&p),
            Err(NetworkError::InfeasibleTopology(_))
        ));
    }

    /// s->a (1), s->b (3), a->exit1 (5), b->exit2 (1); exit3 hangs off c.
    fn hand_dag() -> (LayeredDag, Vec<f64>) {
        let dag = LayeredDag {
            layers: vec![1, 3],
            arcs: vec![
                Arc {
                    from: 0,
                    to: 1,
                    base_cost: 1.0,
                    layer_tag: 1,
                },
                Arc {
                    from: 0,
                    to: 2,
                    base_cost: 3.0,
                    layer_tag: 1,
                },
                Arc {
                    from: 0,
                    to: 3,
                    base_cost: 50.0,
                    layer_tag: 1,
                },
                Arc {
                    from: 1,
                    to: 4,
                    base_cost: 5.0,
                    layer_tag: 2,
                },
                Arc {
                    from: 2,
                    to: 4,
                    base_cost: 1.0,
                    layer_tag: 2,
                },
                Arc {
                    from: 3,
                    to: 4,
                    base_cost: 1.0,
                    layer_tag: 2,
                },
            ],
            exit_arcs: vec![3, 4, 5],
            variable_arcs: vec![0],
        };
        dag.validate().unwrap();
        let c = dag.base_costs();
        (dag, c)
    }

    #[test]
    fn hand_computed_flow() {
        let (dag, costs) = hand_dag();
        let sol = solve_unit_flow(&dag, &costs).unwrap();
        assert_eq!(sol.exit_class, 2);
        assert_eq!(sol.total_cost, 4.0);
        assert_eq!(sol.path, vec![1, 4]);
        assert_eq!(flow_vector(&dag, &sol), vec![0.0, 1.0, 0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn ties_go_to_lowest_exit() {
        let (dag, mut costs) = hand_dag();
        costs[3] = 3.0; // path via exit 1 now also costs 4
        assert_eq!(solve_unit_flow(&dag, &costs).unwrap().exit_class, 1);
    }

    #[test]
    fn single_chain() {
        let dag = LayeredDag {
            layers: vec![1, 3],
            arcs: vec![
                Arc {
                    from: 0,
                    to: 3,
                    base_cost: 2.0,
                    layer_tag: 1,
                },
                Arc {
                    from: 1,
                    to: 4,
                    base_cost: 1.0,
                    layer_tag: 2,
                },
                Arc {
                    from: 2,
                    to: 4,
                    base_cost: 1.0,
                    layer_tag: 2,
                },
                Arc {
                    from: 3,
                    to: 4,
                    base_cost: 1.0,
                    layer_tag: 2,
                },
            ],
            exit_arcs: vec![1, 2, 3],
            variable_arcs: vec![],
        };
        // nodes 1 and 2 are unreachable, so this layout is rejected...
        assert!(dag.validate().is_err());
        // ...but the solver still finds the only path.
        let sol = solve_unit_flow(&dag, &dag.base_costs()).unwrap();
        assert_eq!(sol.exit_class, 3);
        assert_eq!(sol.total_cost, 3.0);
    }

    #[test]
    fn cost_length_checked() {
        let (dag, _) = hand_dag();
        assert!(matches!(
            solve_unit_flow(&dag, &[1.0]),
            Err(NetworkError::SizeMismatch { .. })
        ));
    }

    #[test]
    fn less_noisy_touches_only_variable_and_layer_two() {
        let dag = generate_layered_dag(&DagParams {
            layer_sizes: vec![1, 4, 4, 4, 3],
            p_adjacent: 0.6,
            p_skip: 0.05,
            cost_low: 1.0,
            cost_high: 10.0,
            n_variable: 6,
            seed: 3,
        })
        .unwrap();
        let base = dag.base_costs();
        let pert = perturb_costs(&dag, PerturbScheme::LessNoisy, &base, 11).unwrap();
        for (id, a) in dag.arcs.iter().enumerate() {
            let touched = dag.variable_arcs.contains(&id) || a.layer_tag == 2;
            if !touched {
                assert_eq!(pert[id], base[id]);
            } else {
                let f = pert[id] / base[id];
                assert!((0.05..=2.85).contains(&f));
            }
        }
        let noisy = perturb_costs(&dag, PerturbScheme::Noisier, &base, 11).unwrap();
        let third = dag.exit_arcs[2];
        let f = noisy[third] / base[third];
        assert!((9.0..=10.0).contains(&f), "{f}");
        assert_eq!(pert, perturb_costs(&dag, PerturbScheme::LessNoisy, &base, 11).unwrap());
        for (id, a) in dag.arcs.iter().enumerate() {
            if a.layer_tag == 3 && !dag.variable_arcs.contains(&id) {
                let f = noisy[id] / base[id];
                assert!((0.5..=1.5).contains(&f));
            }
        }
    }

    #[test]
    fn scheme_names() {
        assert_eq!("less_noisy".parse::<PerturbScheme>().unwrap(), PerturbScheme::LessNoisy);
        assert_eq!("noisier".parse::<PerturbScheme>().unwrap(), PerturbScheme::Noisier);
        assert!(matches!(
            "loud".parse::<PerturbScheme>(),
            Err(NetworkError::UnknownScheme(_))
        ));
    }

    #[test]
    fn csv_round_trip() {
        let dag = generate_layered_dag(&params(&[1, 3, 3, 3], 9)).unwrap();
        let text = dag.to_csv();
        let back = LayeredDag::from_csv(&text).unwrap();
        assert_eq!(back, dag);
        assert_eq!(back.to_csv(), text);
    }
}
