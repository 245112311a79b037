mod common;

use std::collections::HashSet;

use rand::Rng;
use simkern::simmodels::network::{generate_layered_dag, perturb_costs, solve_unit_flow, PerturbScheme};
use simkern::simmodels::{find_attractor, step_boolean, BooleanNetwork};

fn random_rule(r: &mut impl Rng, names: &[String], depth: usize) -> String {
    if depth == 0 || r.random_bool(0.35) {
        let v = &names[r.random_range(0..names.len())];
        return if r.random_bool(0.3) { format!("!{v}") } else { v.clone() };
    }
    let op = if r.random_bool(0.5) { "&" } else { "|" };
    let a = random_rule(r, names, depth - 1);
    let b = random_rule(r, names, depth - 1);
    if r.random_bool(0.2) {
        format!("!({a} {op} {b})")
    } else {
        format!("({a} {op} {b})")
    }
}

fn random_net(seed: u64) -> (BooleanNetwork, u64) {
    let mut r = common::rng(seed);
    let n = r.random_range(1..=12);
    let names: Vec<String> = (0..n).map(|i| format!("g{i}")).collect();
    let text: String = names
        .iter()
        .map(|nm| format!("{nm} = {}\n", random_rule(&mut r, &names, 3)))
        .collect();
    let net = BooleanNetwork::parse(&text).expect("generated rules parse");
    (net, r.random_range(0..1u64 << n))
}

#[test]
fn attractors_match_exhaustive_state_space() {
    for seed in 0..100 {
        let (net, init) = random_net(seed);
        let n = net.len();
        let succ: Vec<u64> = (0..1u64 << n).map(|s| step_boolean(&net, s)).collect();
        // after 2^n steps every orbit is on its cycle
        let mut on_cycle = init;
        for _ in 0..1usize << n {
            on_cycle = succ[on_cycle as usize];
        }
        let mut cycle = vec![on_cycle];
        let mut s = succ[on_cycle as usize];
        while s != on_cycle {
            cycle.push(s);
            s = succ[s as usize];
        }
        let cycle_set: HashSet<u64> = cycle.iter().copied().collect();
        let mut transient = 0;
        let mut s = init;
        while !cycle_set.contains(&s) {
            s = succ[s as usize];
            transient += 1;
        }

        let got = find_attractor(&net, init, 1 << 13).unwrap();
        assert_eq!(got.transient_length, transient, "net {seed}");
        assert_eq!(got.cycle_states.len(), cycle.len(), "net {seed}");
        assert_eq!(got.cycle_states[0], s, "net {seed}: cycle entry");
        for w in got.cycle_states.windows(2) {
            assert_eq!(succ[w[0] as usize], w[1]);
        }
    }
}

#[test]
fn unit_flow_matches_path_enumeration() {
    let mut r = common::rng(77);
    for case in 0..100 {
        let params = common::random_dag_params(&mut r, 1000 + case);
        let dag = generate_layered_dag(&params).unwrap();
        assert!(dag.layers.len() <= 6);
        let costs: Vec<f64> = (0..dag.arcs.len()).map(|_| r.random_range(0.5..10.0)).collect();
        let sol = solve_unit_flow(&dag, &costs).unwrap();
        let mut best: Option<(f64, u8)> = None;
        for path in common::all_paths(&dag) {
            let cost: f64 = path.iter().map(|&a| costs[a]).sum();
            let exit = dag.exit_arcs.iter().position(|&e| e == *path.last().unwrap()).unwrap() as u8 + 1;
            let better = match best {
                None => true,
                Some((c, e)) => cost < c - 1e-12 || ((cost - c).abs() <= 1e-12 && exit < e),
            };
            if better {
                best = Some((cost, exit));
            }
        }
        let (cost, exit) = best.unwrap();
        assert_eq!(sol.exit_class, exit, "case {case}");
        assert!((sol.total_cost - cost).abs() < 1e-9, "case {case}");
        let path_cost: f64 = sol.path.iter().map(|&a| costs[a]).sum();
        assert!((path_cost - cost).abs() < 1e-9);
    }
}

#[test]
fn every_node_lies_on_a_source_to_exit_path() {
    for seed in 0..200 {
        let params = simkern::simmodels::network::DagParams {
            layer_sizes: vec![1, 2, 2, 3],
            p_adjacent: 0.3,
            p_skip: 0.1,
            cost_low: 1.0,
            cost_high: 2.0,
            n_variable: 0,
            seed,
        };
        let dag = generate_layered_dag(&params).unwrap();
        let mut seen = HashSet::new();
        for path in common::all_paths(&dag) {
            for a in path {
                seen.insert(dag.arcs[a].from);
            }
        }
        for node in 0..dag.node_count() {
            assert!(seen.contains(&node), "seed {seed}: node {node} unreachable");
        }
    }
}

#[test]
fn noisier_scheme_penalizes_the_third_exit() {
    let dag = generate_layered_dag(&simkern::pipeline::models::default_dag_params()).unwrap();
    let costs = dag.base_costs();
    for t in 0..50 {
        let less = perturb_costs(&dag, PerturbScheme::LessNoisy, &costs, t).unwrap();
        let more = perturb_costs(&dag, PerturbScheme::Noisier, &costs, t).unwrap();
        let third = dag.exit_arcs[2];
        assert!(more[third] >= 9.0 * less[third] - 1e-9);
        for (id, a) in dag.arcs.iter().enumerate() {
            if a.layer_tag != 3 && id != third {
                assert_eq!(less[id], more[id]);
            }
        }
    }
}
