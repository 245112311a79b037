mod common;

use common::{svc_instance, svr_instance, QpCheck};
use proptest::prelude::*;
use rayon::prelude::*;
use simkern::learners::svm::{train_svc, train_svc_binary, train_svr, KernelSpec, SmoConfig};
use simkern::learners::{nn_predict, simkern_nn_predict};

fn check(q: &QpCheck, what: &str) {
    assert!(
        (q.smo - q.oracle).abs() <= 1e-6,
        "{what}: smo {} vs oracle {}",
        q.smo,
        q.oracle
    );
    let eq: f64 = q.alpha.iter().zip(&q.y).map(|(a, y)| a * y).sum();
    assert!(eq.abs() <= 1e-8, "{what}: y'a = {eq}");
    assert!(
        q.alpha.iter().all(|&a| (-1e-8..=q.c + 1e-8).contains(&a)),
        "{what}: box"
    );
}

#[test]
fn svc_matches_brute_force_qp() {
    (0..50u64).into_par_iter().for_each(|case| {
        let n = 2 + (case as usize % 7);
        let q = svc_instance(1000 + case, n, case as usize % 3);
        check(&q, &format!("svc case {case} n={n}"));
    });
}

#[test]
fn svr_matches_brute_force_qp() {
    (0..50u64).into_par_iter().for_each(|case| {
        let n = 2 + (case as usize % 5);
        let q = svr_instance(5000 + case, n, case as usize % 3);
        check(&q, &format!("svr case {case} n={n}"));
    });
}

#[test]
fn identity_gram_closed_form() {
    let gram = vec![1.0, 0.0, 0.0, 1.0];
    let m = train_svc_binary(&gram, &[1.0, -1.0], 10.0, &SmoConfig::default()).unwrap();
    assert_eq!(m.alpha, vec![1.0, 1.0]);
    assert_eq!(m.rho, 0.0);
}

#[test]
fn precomputed_linear_gram_matches_linear_kernel() {
    let mut r = common::rng(3);
    let x = common::random_points(&mut r, 20, 3);
    let labels: Vec<u32> = x.iter().map(|p| if p[0] + 0.5 * p[1] > 0.0 { 1 } else { 2 }).collect();
    let gram = KernelSpec::Linear.gram(&x);
    let precomputed: Vec<f64> = (0..20)
        .flat_map(|i| (0..20).map(move |j| (i, j)))
        .map(|(i, j)| x[i].iter().zip(&x[j]).map(|(a, b)| a * b).sum())
        .collect();
    let a = train_svc(&gram, &labels, 1.0, &SmoConfig::default()).unwrap();
    let b = train_svc(&precomputed, &labels, 1.0, &SmoConfig::default()).unwrap();
    let query = common::random_points(&mut r, 30, 3);
    for q in &query {
        let row = KernelSpec::Linear.row(q, &x);
        assert_eq!(a.predict(&row), b.predict(&row));
    }
}

#[test]
fn svr_objective_grows_with_epsilon() {
    let mut r = common::rng(11);
    let x = common::random_points(&mut r, 12, 2);
    let z: Vec<f64> = x.iter().map(|p| p[0] - p[1]).collect();
    let gram = KernelSpec::Rbf { gamma: 0.5 }.gram(&x);
    let cfg = common::tight_smo();
    let mut last = f64::NEG_INFINITY;
    for eps in [0.0, 0.1, 0.3, 0.6, 1.0, 2.0] {
        let m = train_svr(&gram, &z, 1.0, eps, &cfg).unwrap();
        assert!(m.objective >= last - 1e-9, "eps {eps}");
        last = m.objective;
    }
    let zmax = z.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let m = train_svr(&gram, &z, 1.0, zmax + 0.1, &cfg).unwrap();
    assert!(m.alpha.iter().all(|&a| a == 0.0));
}

proptest! {
    #[test]
    fn kernel_nn_ignores_monotone_transforms(
        row in prop::collection::vec(0.0f64..1.0, 2..20),
        labels in prop::collection::vec(1u32..4, 20),
        scale in 0.1f64..10.0,
    ) {
        let y: Vec<f64> = labels[..row.len()].iter().map(|&l| l as f64).collect();
        let moved: Vec<f64> = row.iter().map(|v| scale * v.powi(3) + 2.0).collect();
        prop_assert_eq!(simkern_nn_predict(&row, &y, None), simkern_nn_predict(&moved, &y, None));
        prop_assert_eq!(simkern_nn_predict(&row, &y, Some(0)), simkern_nn_predict(&moved, &y, Some(0)));
    }

    #[test]
    fn feature_nn_ignores_shift_and_uniform_scale(
        seed in 0u64..1000,
        shift in -5.0f64..5.0,
        scale in 0.1f64..10.0,
    ) {
        let mut r = common::rng(seed);
        let x = common::random_points(&mut r, 15, 3);
        let y: Vec<f64> = (0..15).map(|i| (i % 3) as f64).collect();
        let q = common::random_points(&mut r, 1, 3).remove(0);
        let t = |p: &Vec<f64>| p.iter().map(|v| scale * v + shift).collect::<Vec<f64>>();
        let xt: Vec<Vec<f64>> = x.iter().map(t).collect();
        prop_assert_eq!(nn_predict(&x, &y, &q), nn_predict(&xt, &y, &t(&q)));
    }
}
