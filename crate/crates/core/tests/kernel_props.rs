mod common;

use proptest::prelude::*;
use rand::Rng;
use simkern::simkernel::{
    check_psd, convergence_delta, similarity_matrix, trajectory_similarity, Definiteness, Kernel, KernelAccumulator,
    OutputKind, SimOutput, SimilarityConfig,
};
use simkern::simmodels::Trajectory;

fn random_z(r: &mut impl Rng, n: usize) -> Kernel {
    let mut k = Kernel::identity(n);
    for i in 0..n {
        for j in 0..i {
            let v = r.random_range(0.0..=1.0);
            k.set(i, j, v);
            k.set(j, i, v);
        }
    }
    k
}

#[test]
fn running_mean_matches_direct_average_and_respects_bound() {
    let mut r = common::rng(5);
    for seq in 0..1000 {
        let n = r.random_range(2..8);
        let trials = r.random_range(1..12);
        let zs: Vec<Kernel> = (0..trials).map(|_| random_z(&mut r, n)).collect();
        let mut acc = KernelAccumulator::new(n);
        let mut prev: Option<Kernel> = None;
        for (t, z) in zs.iter().enumerate() {
            let delta = acc.accumulate(z).unwrap();
            let rr = (t + 1) as f64;
            match (&prev, delta) {
                (None, None) => {}
                (Some(p), Some(d)) => {
                    assert!(d <= n as f64 / rr + 1e-12, "seq {seq} trial {}", t + 1);
                    assert!((d - convergence_delta(acc.kernel(), p).unwrap()).abs() < 1e-12);
                }
                _ => panic!("delta reported for the wrong trials"),
            }
            prev = Some(acc.kernel().clone());
        }
        let k = acc.kernel();
        for i in 0..n {
            assert_eq!(k.get(i, i), 1.0);
            for j in 0..n {
                let mean = zs.iter().map(|z| z.get(i, j)).sum::<f64>() / trials as f64;
                assert!((k.get(i, j) - mean).abs() < 1e-12);
                assert_eq!(k.get(i, j), k.get(j, i));
            }
        }
    }
}

#[test]
fn hand_computed_trajectory_similarity() {
    let t = |l: Vec<f64>| Trajectory {
        times: vec![0.0, 1.0],
        entity_names: vec!["A".into()],
        levels: vec![l],
    };
    let cfg = SimilarityConfig::new(OutputKind::Trajectory);
    let z = trajectory_similarity(&t(vec![1.0, 2.0]), &t(vec![2.0, 4.0]), &cfg).unwrap();
    assert!((z - 0.84375).abs() < 1e-12);
}

#[test]
fn zero_weight_masks_an_entity() {
    let t = |a: Vec<f64>, b: Vec<f64>| Trajectory {
        times: vec![0.0, 1.0, 2.0],
        entity_names: vec!["A".into(), "B".into()],
        levels: vec![a, b],
    };
    let x = t(vec![1.0, 2.0, 3.0], vec![0.0, 5.0, 1.0]);
    let y = t(vec![1.0, 2.0, 3.0], vec![4.0, 0.0, 2.0]);
    let mut cfg = SimilarityConfig::new(OutputKind::Trajectory);
    cfg.entity_weights.insert("B".into(), 0.0);
    assert_eq!(trajectory_similarity(&x, &y, &cfg).unwrap(), 1.0);
    let mut only_a = SimilarityConfig::new(OutputKind::Trajectory);
    only_a.entity_subset = Some(vec!["A".into()]);
    assert_eq!(trajectory_similarity(&x, &y, &only_a).unwrap(), 1.0);
    let all = SimilarityConfig::new(OutputKind::Trajectory);
    assert!(trajectory_similarity(&x, &y, &all).unwrap() < 1.0);
}

proptest! {
    #[test]
    fn categorical_kernels_are_psd(labels in prop::collection::vec(0u32..4, 2..30)) {
        let outputs: Vec<SimOutput> = labels.iter().map(|&l| SimOutput::Label(l)).collect();
        let k = similarity_matrix(&outputs, &SimilarityConfig::new(OutputKind::Categorical)).unwrap();
        prop_assert!(!matches!(check_psd(&k, 1e-10), Definiteness::Indefinite(_)));
    }

    #[test]
    fn trajectory_kernel_entries_in_unit_interval(
        levels in prop::collection::vec(prop::collection::vec(0.0f64..10.0, 4), 2..12),
    ) {
        let outputs: Vec<SimOutput> = levels
            .iter()
            .map(|l| SimOutput::Trajectory(Trajectory {
                times: vec![0.0, 1.0],
                entity_names: vec!["A".into(), "B".into()],
                levels: vec![l[..2].to_vec(), l[2..].to_vec()],
            }))
            .collect();
        let k = similarity_matrix(&outputs, &SimilarityConfig::new(OutputKind::Trajectory)).unwrap();
        prop_assert!(k.is_symmetric());
        for i in 0..k.size() {
            prop_assert_eq!(k.get(i, i), 1.0);
            for j in 0..k.size() {
                prop_assert!((0.0..=1.0).contains(&k.get(i, j)));
            }
        }
    }

    #[test]
    fn kernel_csv_round_trip_is_exact(seed in any::<u64>(), n in 1usize..10) {
        let mut r = common::rng(seed);
        let k = random_z(&mut r, n);
        let text = k.to_csv_string();
        let back = Kernel::read_csv(text.as_bytes()).unwrap();
        prop_assert_eq!(&back, &k);
        prop_assert_eq!(back.to_csv_string(), text);
    }
}
