#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use simkern::learners::svm::{train_svc_binary, train_svr, KernelSpec, SmoConfig};
use simkern::simmodels::network::{DagParams, LayeredDag};

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Global minimum of `1/2 a'Qa + p'a` subject to `y'a = 0`, `0 <= a <= c`,
/// by enumerating which variables sit at 0, at `c`, or strictly between.
pub fn brute_force_qp(q: &DMatrix<f64>, p: &[f64], y: &[f64], c: f64) -> f64 {
    let l = p.len();
    let obj = |a: &[f64]| {
        let av = DVector::from_column_slice(a);
        0.5 * (av.transpose() * q * &av)[(0, 0)] + p.iter().zip(a).map(|(x, y)| x * y).sum::<f64>()
    };
    let mut best = f64::INFINITY;
    let mut status = vec![0u8; l];
    let total = 3usize.pow(l as u32);
    for code in 0..total {
        let mut k = code;
        for s in status.iter_mut() {
            *s = (k % 3) as u8;
            k /= 3;
        }
        let free: Vec<usize> = (0..l).filter(|&i| status[i] == 2).collect();
        let mut a: Vec<f64> = status.iter().map(|&s| if s == 1 { c } else { 0.0 }).collect();
        if free.is_empty() {
            let eq: f64 = a.iter().zip(y).map(|(a, y)| a * y).sum();
            if eq.abs() < 1e-9 {
                best = best.min(obj(&a));
            }
            continue;
        }
        // stationarity on the free set plus the equality constraint
        let m = free.len();
        let mut kkt = DMatrix::<f64>::zeros(m + 1, m + 1);
        let mut rhs = DVector::<f64>::zeros(m + 1);
        for (r, &i) in free.iter().enumerate() {
            for (s, &j) in free.iter().enumerate() {
                kkt[(r, s)] = q[(i, j)];
            }
            kkt[(r, m)] = y[i];
            kkt[(m, r)] = y[i];
            rhs[r] = -p[i] - (0..l).filter(|j| status[*j] == 1).map(|j| q[(i, j)] * c).sum::<f64>();
        }
        rhs[m] = -(0..l).filter(|j| status[*j] == 1).map(|j| y[j] * c).sum::<f64>();
        let sol = match kkt.clone().lu().solve(&rhs) {
            Some(sol) => Some(sol),
            None => kkt.svd(true, true).solve(&rhs, 1e-12).ok(),
        };
        if let Some(sol) = sol {
            if free
                .iter()
                .enumerate()
                .all(|(r, _)| sol[r] >= -1e-9 && sol[r] <= c + 1e-9)
            {
                for (r, &i) in free.iter().enumerate() {
                    a[i] = sol[r].clamp(0.0, c);
                }
                let eq: f64 = a.iter().zip(y).map(|(a, y)| a * y).sum();
                if eq.abs() < 1e-7 {
                    best = best.min(obj(&a));
                }
            }
        }
    }
    best
}

pub fn tight_smo() -> SmoConfig {
    SmoConfig {
        tol: 1e-10,
        max_iter: 10_000_000,
    }
}

pub fn random_points(r: &mut ChaCha20Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| r.random_range(-2.0..2.0)).collect())
        .collect()
}

/// Gram matrix of the given kind: 0 linear, 1 RBF, 2 an arbitrary PSD matrix.
pub fn random_gram(r: &mut ChaCha20Rng, n: usize, kind: usize) -> Vec<f64> {
    match kind {
        0 => KernelSpec::Linear.gram(&random_points(r, n, 3)),
        1 => KernelSpec::Rbf {
            gamma: r.random_range(0.1..2.0),
        }
        .gram(&random_points(r, n, 3)),
        _ => {
            let a = DMatrix::<f64>::from_fn(n, n, |_, _| r.random_range(-1.0..1.0));
            let g = &a * a.transpose();
            g.transpose().as_slice().to_vec()
        }
    }
}

pub struct QpCheck {
    pub smo: f64,
    pub oracle: f64,
    pub alpha: Vec<f64>,
    pub y: Vec<f64>,
    pub c: f64,
}

pub fn svc_instance(seed: u64, n: usize, kind: usize) -> QpCheck {
    let mut r = rng(seed);
    let gram = random_gram(&mut r, n, kind);
    let mut y: Vec<f64> = (0..n).map(|_| if r.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
    y[0] = 1.0;
    y[1] = -1.0;
    let c = 10f64.powf(r.random_range(-1.0..1.5));
    let m = train_svc_binary(&gram, &y, c, &tight_smo()).expect("converges");
    let q = DMatrix::from_fn(n, n, |i, j| y[i] * y[j] * gram[i * n + j]);
    QpCheck {
        smo: m.objective,
        oracle: brute_force_qp(&q, &vec![-1.0; n], &y, c),
        alpha: m.alpha,
        y,
        c,
    }
}

pub fn svr_instance(seed: u64, n: usize, kind: usize) -> QpCheck {
    let mut r = rng(seed);
    let gram = random_gram(&mut r, n, kind);
    let z: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
    let c = 10f64.powf(r.random_range(-1.0..1.0));
    let eps = r.random_range(0.0..0.5);
    let m = train_svr(&gram, &z, c, eps, &tight_smo()).expect("converges");
    let l = 2 * n;
    let y: Vec<f64> = (0..l).map(|t| if t < n { 1.0 } else { -1.0 }).collect();
    let p: Vec<f64> = (0..l)
        .map(|t| if t < n { eps - z[t] } else { eps + z[t - n] })
        .collect();
    let q = DMatrix::from_fn(l, l, |i, j| y[i] * y[j] * gram[(i % n) * n + (j % n)]);
    QpCheck {
        smo: m.objective,
        oracle: brute_force_qp(&q, &p, &y, c),
        alpha: m.alpha,
        y,
        c,
    }
}

/// Every source-to-sink path, by depth-first search.
pub fn all_paths(dag: &LayeredDag) -> Vec<Vec<usize>> {
    fn walk(dag: &LayeredDag, node: usize, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if node == dag.sink() {
            out.push(path.clone());
            return;
        }
        for (id, a) in dag.arcs.iter().enumerate() {
            if a.from == node {
                path.push(id);
                walk(dag, a.to, path, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    walk(dag, 0, &mut Vec::new(), &mut out);
    out
}

pub fn random_dag_params(r: &mut ChaCha20Rng, seed: u64) -> DagParams {
    let hidden = r.random_range(1..=4);
    let mut layer_sizes = vec![1];
    layer_sizes.extend((0..hidden).map(|_| r.random_range(1..=4)));
    layer_sizes.push(3);
    DagParams {
        layer_sizes,
        p_adjacent: r.random_range(0.2..0.9),
        p_skip: r.random_range(0.0..0.3),
        cost_low: 1.0,
        cost_high: 10.0,
        n_variable: 0,
        seed,
    }
}
