mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::Rng;
use simkern::harness::{
    build_grid, c_values, epsilon_values, gamma_values, n_feat_values, n_splits_values, run_experiment,
    stratified_split, subsample_training, Algorithm, ExperimentConfig, ROSTER,
};
use simkern::learners::{Dataset, Task};
use simkern::pipeline::ModelKind;
use simkern::simkernel::Kernel;

fn within_one(count: usize, exact: f64) -> bool {
    (count as f64 - exact).abs() < 1.0 + 1e-9
}

#[test]
fn fuzzed_splits_partition_and_stratify() {
    let mut r = common::rng(99);
    let fractions = [0.5, 0.25, 0.25];
    for case in 0..1000 {
        let k = r.random_range(1..=5);
        let sizes: Vec<usize> = (0..k).map(|_| r.random_range(3..60)).collect();
        let mut y: Vec<f64> = sizes
            .iter()
            .enumerate()
            .flat_map(|(c, &m)| std::iter::repeat_n(c as f64 + 1.0, m))
            .collect();
        // interleave classes
        for i in (1..y.len()).rev() {
            y.swap(i, r.random_range(0..=i));
        }
        let split = stratified_split(&y, Task::Classification, fractions, case).unwrap();
        let mut all: Vec<usize> = split
            .train
            .iter()
            .chain(&split.validation)
            .chain(&split.test)
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..y.len()).collect::<Vec<_>>(), "case {case}: not a partition");
        for (c, &m) in sizes.iter().enumerate() {
            let label = c as f64 + 1.0;
            for (part, f) in [&split.train, &split.validation, &split.test].iter().zip(fractions) {
                let got = part.iter().filter(|&&i| y[i] == label).count();
                assert!(
                    within_one(got, f * m as f64),
                    "case {case}: class {label} got {got} of {m}"
                );
            }
        }
        for s in [0.05, 0.1, 0.3] {
            let sub = subsample_training(&split.train, &y, Task::Classification, s, case);
            let classes: BTreeSet<u64> = split.train.iter().map(|&i| y[i].to_bits()).collect();
            let sub_classes: BTreeSet<u64> = sub.iter().map(|&i| y[i].to_bits()).collect();
            assert_eq!(classes, sub_classes, "case {case}: subsample lost a class");
            assert!(sub.iter().all(|i| split.train.contains(i)));
        }
    }
}

#[test]
fn grid_cardinalities() {
    assert_eq!(c_values().len(), 25);
    assert_eq!(gamma_values().len(), 17);
    assert_eq!(epsilon_values().len(), 9);
    assert_eq!(n_feat_values(39), vec![1, 3, 6, 22, 39]);
    let splits = n_splits_values(10);
    assert!(splits.iter().all(|&s| (1..=9).contains(&s)));
    assert_eq!(*splits.last().unwrap(), 9);
    assert_eq!(build_grid(Algorithm::RbfSvm, 50, 4, Task::Classification).len(), 425);
    assert_eq!(build_grid(Algorithm::RbfSvm, 50, 4, Task::Regression).len(), 3825);
    assert_eq!(build_grid(Algorithm::SimKernSvm, 50, 4, Task::Regression).len(), 225);
}

#[test]
fn shipped_schedules() {
    assert_eq!(ModelKind::Radiation.schedule(), vec![0.05, 0.1, 0.25, 0.5, 1.0]);
    assert_eq!(ModelKind::CustomOde.schedule(), vec![0.05, 0.1, 0.3, 0.6, 1.0]);
    assert_eq!(ModelKind::Boolean.schedule(), vec![0.025, 0.05, 0.1, 0.2, 1.0]);
    assert_eq!(ModelKind::Network.schedule(), vec![0.04, 0.07, 0.1, 0.13, 0.16]);
}

fn toy_problem(n: usize, seed: u64) -> (Dataset, Kernel) {
    let mut r = common::rng(seed);
    let x = common::random_points(&mut r, n, 3);
    let y: Vec<f64> = x
        .iter()
        .map(|p| {
            if p[0] > 0.5 {
                3.0
            } else if p[0] + p[1] > 0.0 {
                2.0
            } else {
                1.0
            }
        })
        .collect();
    let rows: Vec<Vec<f64>> = x
        .iter()
        .map(|a| {
            x.iter()
                .map(|b| (-0.5 * a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum::<f64>()).exp())
                .collect()
        })
        .collect();
    let data = Dataset {
        feature_names: vec!["a".into(), "b".into(), "c".into()],
        x,
        y,
        categorical: vec![false; 3],
        task: Task::Classification,
    };
    (data, Kernel::from_rows(rows).unwrap())
}

#[test]
fn full_loop_yields_one_record_per_cell() {
    let (data, kernel) = toy_problem(40, 1);
    let cfg = ExperimentConfig::new(vec![0.1, 0.25, 0.5, 0.75, 1.0], 7);
    let records = run_experiment(&data, Some(&kernel), &cfg).unwrap();
    assert_eq!(records.len(), 350);
    for rep in 1..=10 {
        for &s in &cfg.schedule {
            for alg in ROSTER {
                assert_eq!(
                    records
                        .iter()
                        .filter(|r| r.repetition == rep && r.subsample == s && r.algorithm == alg)
                        .count(),
                    1
                );
            }
        }
    }
    assert!(records.iter().all(|r| (0.0..=1.0).contains(&r.test_metric)));
}

#[test]
fn kernel_algorithms_need_a_kernel() {
    let (data, _) = toy_problem(20, 2);
    let cfg = ExperimentConfig::new(vec![1.0], 1);
    assert!(run_experiment(&data, None, &cfg).is_err());
    let wrong = Kernel::identity(5);
    assert!(run_experiment(&data, Some(&wrong), &cfg).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn regression_split_sizes(n in 4usize..200, seed in any::<u64>()) {
        let y: Vec<f64> = (0..n).map(|i| i as f64 * 0.5).collect();
        let s = stratified_split(&y, Task::Regression, [0.5, 0.25, 0.25], seed).unwrap();
        prop_assert_eq!(s.train.len() + s.validation.len() + s.test.len(), n);
        prop_assert!(within_one(s.train.len(), 0.5 * n as f64));
        prop_assert!(within_one(s.test.len(), 0.25 * n as f64));
    }
}
