//! Soft-margin SVM classification and epsilon-regression trained by SMO on a
//! Gram matrix.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SvmError {
    #[error("solver did not reach tolerance within {0} iterations")]
    NotConverged(usize),
    #[error("size mismatch: expected {expected}, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("invalid hyperparameter {name} = {value}")]
    BadHyper { name: &'static str, value: f64 },
    #[error("empty training set")]
    Empty,
}

/// Gram matrix or kernel rows between sample sets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    Linear,
    Rbf { gamma: f64 },
    Precomputed,
}

impl KernelSpec {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            KernelSpec::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            KernelSpec::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
            KernelSpec::Precomputed => panic!("precomputed kernels have no feature form"),
        }
    }

    /// Square symmetric Gram matrix over `rows`, row-major.
    pub fn gram(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        let n = rows.len();
        let mut g = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = self.eval(&rows[i], &rows[j]);
                g[i * n + j] = v;
                g[j * n + i] = v;
            }
        }
        g
    }

    /// Kernel values between one query and every training row.
    pub fn row(&self, query: &[f64], train: &[Vec<f64>]) -> Vec<f64> {
        train.iter().map(|t| self.eval(query, t)).collect()
    }
}

/// Averages a square row-major matrix with its transpose.
pub fn symmetrize(g: &mut [f64], n: usize) {
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (g[i * n + j] + g[j * n + i]);
            g[i * n + j] = v;
            g[j * n + i] = v;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SmoConfig {
    fn default() -> Self {
        Self {
            tol: 1e-3,
            max_iter: 1_000_000,
        }
    }
}

const TAU: f64 = 1e-12;

/// Solution of `min 1/2 a'Qa + p'a  s.t.  y'a = const, 0 <= a <= c`.
#[derive(Debug, Clone)]
pub struct QpSolution {
    pub alpha: Vec<f64>,
    pub rho: f64,
    pub objective: f64,
    pub iterations: usize,
}

/// Generic SMO over `l` variables where `Q_ij = y_i y_j K[idx_i][idx_j]`
/// and `K` is an `n x n` row-major Gram matrix. Working pairs are the
/// maximal KKT violators.
pub fn solve_qp(
    k: &[f64],
    n: usize,
    idx: &[usize],
    y: &[f64],
    p: &[f64],
    c: f64,
    cfg: &SmoConfig,
) -> Result<QpSolution, SvmError> {
    let l = idx.len();
    let q = |i: usize, j: usize| y[i] * y[j] * k[idx[i] * n + idx[j]];
    let mut alpha = vec![0.0; l];
    let mut grad = p.to_vec();
    let mut iter = 0;
    loop {
        let mut gmax = f64::NEG_INFINITY;
        let mut gmin = f64::INFINITY;
        let (mut i, mut j) = (usize::MAX, usize::MAX);
        for t in 0..l {
            let v = -y[t] * grad[t];
            let up = if y[t] > 0.0 { alpha[t] < c } else { alpha[t] > 0.0 };
            let low = if y[t] > 0.0 { alpha[t] > 0.0 } else { alpha[t] < c };
            if up && v > gmax {
                gmax = v;
                i = t;
            }
            if low && v < gmin {
                gmin = v;
                j = t;
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax - gmin < cfg.tol {
            break;
        }
        if iter >= cfg.max_iter {
            return Err(SvmError::NotConverged(iter));
        }
        iter += 1;

        let (qii, qjj, qij) = (q(i, i), q(j, j), q(i, j));
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let mut quad = qii + qjj + 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = qii + qjj - 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for (t, g) in grad.iter_mut().enumerate() {
            *g += q(t, i) * di + q(t, j) * dj;
        }
    }

    let rho = compute_rho(&alpha, &grad, y, c);
    let objective = 0.5
        * alpha
            .iter()
            .zip(grad.iter().zip(p))
            .map(|(a, (g, pp))| a * (g + pp))
            .sum::<f64>();
    Ok(QpSolution {
        alpha,
        rho,
        objective,
        iterations: iter,
    })
}

fn compute_rho(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> f64 {
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_free, mut n_free) = (0.0, 0usize);
    for t in 0..alpha.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] > 0.0 {
                lb = lb.max(yg);
            } else {
                ub = ub.min(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    if n_free > 0 {
        sum_free / n_free as f64
    } else if ub.is_finite() && lb.is_finite() {
        0.5 * (ub + lb)
    } else if ub.is_finite() {
        ub
    } else if lb.is_finite() {
        lb
    } else {
        0.0
    }
}

fn check_c(c: f64) -> Result<(), SvmError> {
    if c > 0.0 && c.is_finite() {
        Ok(())
    } else {
        Err(SvmError::BadHyper { name: "C", value: c })
    }
}

fn check_gram(gram: &[f64], n: usize) -> Result<(), SvmError> {
    if n == 0 {
        return Err(SvmError::Empty);
    }
    if gram.len() != n * n {
        return Err(SvmError::SizeMismatch {
            expected: n * n,
            got: gram.len(),
        });
    }
    Ok(())
}

/// Two-class decision function `f(x) = sum_i coef_i K(x_i, x) - rho` over
/// training indices `sv`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryModel {
    pub sv: Vec<usize>,
    pub coef: Vec<f64>,
    pub rho: f64,
    pub alpha: Vec<f64>,
    pub objective: f64,
}

impl BinaryModel {
    fn from_solution(sol: QpSolution, coef_of: impl Fn(usize, &[f64]) -> f64, n: usize, sample: &[usize]) -> Self {
        let mut sv = Vec::new();
        let mut coef = Vec::new();
        for (t, &row) in sample.iter().enumerate().take(n) {
            let c = coef_of(t, &sol.alpha);
            if c != 0.0 {
                sv.push(row);
                coef.push(c);
            }
        }
        Self {
            sv,
            coef,
            rho: sol.rho,
            alpha: sol.alpha,
            objective: sol.objective,
        }
    }

    /// `k_row[t]` is the kernel value between the query and training sample `t`.
    pub fn decision(&self, k_row: &[f64]) -> f64 {
        self.sv.iter().zip(&self.coef).map(|(&s, c)| c * k_row[s]).sum::<f64>() - self.rho
    }
}

/// Binary soft-margin classifier with labels in {-1, +1}.
pub fn train_svc_binary(gram: &[f64], y: &[f64], c: f64, cfg: &SmoConfig) -> Result<BinaryModel, SvmError> {
    let n = y.len();
    check_gram(gram, n)?;
    check_c(c)?;
    let all: Vec<usize> = (0..n).collect();
    train_svc_subset(gram, n, &all, y, c, cfg)
}

fn train_svc_subset(
    gram: &[f64],
    n: usize,
    sample: &[usize],
    y: &[f64],
    c: f64,
    cfg: &SmoConfig,
) -> Result<BinaryModel, SvmError> {
    let p = vec![-1.0; sample.len()];
    let sol = solve_qp(gram, n, sample, y, &p, c, cfg)?;
    Ok(BinaryModel::from_solution(
        sol,
        |t, a| a[t] * y[t],
        sample.len(),
        sample,
    ))
}

/// One-vs-one multiclass classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct SvcModel {
    pub classes: Vec<u32>,
    /// `(a, b, model)` with positive decision meaning class index `a`.
    pub pairs: Vec<(usize, usize, BinaryModel)>,
}

impl SvcModel {
    pub fn predict(&self, k_row: &[f64]) -> u32 {
        if self.classes.len() == 1 {
            return self.classes[0];
        }
        let mut votes = vec![0usize; self.classes.len()];
        for (a, b, m) in &self.pairs {
            if m.decision(k_row) > 0.0 {
                votes[*a] += 1;
            } else {
                votes[*b] += 1;
            }
        }
        self.classes[vote_winner(&votes)]
    }
}

/// Index of the most votes, ties to the lowest index.
pub fn vote_winner(votes: &[usize]) -> usize {
    let mut best = 0;
    for (i, &v) in votes.iter().enumerate() {
        if v > votes[best] {
            best = i;
        }
    }
    best
}

pub fn train_svc(gram: &[f64], labels: &[u32], c: f64, cfg: &SmoConfig) -> Result<SvcModel, SvmError> {
    let n = labels.len();
    check_gram(gram, n)?;
    check_c(c)?;
    let mut classes: Vec<u32> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let mut pairs = Vec::new();
    for a in 0..classes.len() {
        for b in a + 1..classes.len() {
            let sample: Vec<usize> = (0..n)
                .filter(|&t| labels[t] == classes[a] || labels[t] == classes[b])
                .collect();
            let y: Vec<f64> = sample
                .iter()
                .map(|&t| if labels[t] == classes[a] { 1.0 } else { -1.0 })
                .collect();
            pairs.push((a, b, train_svc_subset(gram, n, &sample, &y, c, cfg)?));
        }
    }
    Ok(SvcModel { classes, pairs })
}

/// Epsilon-insensitive regression. The returned model predicts
/// `decision(k_row)` directly.
pub fn train_svr(gram: &[f64], z: &[f64], c: f64, epsilon: f64, cfg: &SmoConfig) -> Result<BinaryModel, SvmError> {
    let n = z.len();
    check_gram(gram, n)?;
    check_c(c)?;
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(SvmError::BadHyper {
            name: "epsilon",
            value: epsilon,
        });
    }
    let idx: Vec<usize> = (0..n).chain(0..n).collect();
    let y: Vec<f64> = (0..2 * n).map(|t| if t < n { 1.0 } else { -1.0 }).collect();
    let p: Vec<f64> = (0..2 * n)
        .map(|t| if t < n { epsilon - z[t] } else { epsilon + z[t - n] })
        .collect();
    let sol = solve_qp(gram, n, &idx, &y, &p, c, cfg)?;
    let all: Vec<usize> = (0..n).collect();
    Ok(BinaryModel::from_solution(sol, |t, a| a[t] - a[t + n], n, &all))
}
