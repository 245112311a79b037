//! CART trees grown breadth-first under a split budget, and bagged forests.

use std::collections::VecDeque;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use super::Task;
use crate::seed;

pub const N_TREES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeParams {
    pub n_feat: usize,
    pub n_splits: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn n_splits(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Split { .. })).count()
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.len() - self.n_splits()
    }
}

fn leaf_value(y: &[f64], rows: &[usize], task: Task) -> f64 {
    match task {
        Task::Regression => rows.iter().map(|&r| y[r]).sum::<f64>() / rows.len() as f64,
        Task::Classification => {
            let mut labels: Vec<f64> = rows.iter().map(|&r| y[r]).collect();
            labels.sort_by(f64::total_cmp);
            let (mut best, mut best_n) = (labels[0], 0);
            let mut i = 0;
            while i < labels.len() {
                let mut j = i;
                while j < labels.len() && labels[j] == labels[i] {
                    j += 1;
                }
                if j - i > best_n {
                    best = labels[i];
                    best_n = j - i;
                }
                i = j;
            }
            best
        }
    }
}

/// Sorted class labels present in `y`, used to index Gini counts.
fn class_index(y: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut classes: Vec<f64> = y.to_vec();
    classes.sort_by(f64::total_cmp);
    classes.dedup();
    let idx = y
        .iter()
        .map(|v| classes.binary_search_by(|c| c.total_cmp(v)).expect("present"))
        .collect();
    (classes, idx)
}

/// Node impurity times node size: `n * gini` or the sum of squared deviations.
struct Impurity<'a> {
    task: Task,
    y: &'a [f64],
    cls: &'a [usize],
    k: usize,
}

impl Impurity<'_> {
    fn weighted(&self, rows: &[usize]) -> f64 {
        match self.task {
            Task::Classification => {
                let mut counts = vec![0usize; self.k];
                for &r in rows {
                    counts[self.cls[r]] += 1;
                }
                gini_weighted(&counts, rows.len())
            }
            Task::Regression => {
                let n = rows.len() as f64;
                let mean = rows.iter().map(|&r| self.y[r]).sum::<f64>() / n;
                rows.iter().map(|&r| (self.y[r] - mean).powi(2)).sum()
            }
        }
    }

    /// Best `(gain, threshold)` for splitting `rows` on `feature`.
    fn best_split(&self, x: &[Vec<f64>], rows: &[usize], feature: usize, parent: f64) -> Option<(f64, f64)> {
        let mut order: Vec<usize> = rows.to_vec();
        order.sort_by(|&a, &b| x[a][feature].total_cmp(&x[b][feature]));
        let n = order.len();
        let mut best: Option<(f64, f64)> = None;
        match self.task {
            Task::Classification => {
                let mut left = vec![0usize; self.k];
                let mut right = vec![0usize; self.k];
                for &r in &order {
                    right[self.cls[r]] += 1;
                }
                for s in 1..n {
                    let r = order[s - 1];
                    left[self.cls[r]] += 1;
                    right[self.cls[r]] -= 1;
                    let (a, b) = (x[r][feature], x[order[s]][feature]);
                    if a == b {
                        continue;
                    }
                    let gain = parent - gini_weighted(&left, s) - gini_weighted(&right, n - s);
                    if best.is_none_or(|(g, _)| beats(gain, g, parent)) {
                        best = Some((gain, split_point(a, b)));
                    }
                }
            }
            Task::Regression => {
                let total: f64 = order.iter().map(|&r| self.y[r]).sum();
                let total_sq: f64 = order.iter().map(|&r| self.y[r] * self.y[r]).sum();
                let (mut sum, mut sq) = (0.0, 0.0);
                for s in 1..n {
                    let r = order[s - 1];
                    sum += self.y[r];
                    sq += self.y[r] * self.y[r];
                    let (a, b) = (x[r][feature], x[order[s]][feature]);
                    if a == b {
                        continue;
                    }
                    let (nl, nr) = (s as f64, (n - s) as f64);
                    let sse_l = (sq - sum * sum / nl).max(0.0);
                    let sse_r = ((total_sq - sq) - (total - sum).powi(2) / nr).max(0.0);
                    let gain = parent - sse_l - sse_r;
                    if best.is_none_or(|(g, _)| beats(gain, g, parent)) {
                        best = Some((gain, split_point(a, b)));
                    }
                }
            }
        }
        best
    }
}

/// Midpoint of `a < b` that keeps `b` on the right even when they are
/// adjacent floats.
fn split_point(a: f64, b: f64) -> f64 {
    let m = a + 0.5 * (b - a);
    if m < b {
        m
    } else {
        a
    }
}

fn gini_weighted(counts: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let nf = n as f64;
    nf - counts.iter().map(|&c| (c * c) as f64).sum::<f64>() / nf
}

const MIN_GAIN: f64 = 1e-12;

/// Gains within this fraction of the parent impurity count as ties, so the
/// earlier candidate keeps winning despite rounding in the running sums.
const TIE_TOL: f64 = 1e-10;

fn beats(gain: f64, best: f64, parent: f64) -> bool {
    gain > best + TIE_TOL * parent.max(1.0)
}

/// Grows one tree on `rows` (which may repeat). At each split `n_feat`
/// candidate features are drawn without replacement from `rng`; the best
/// candidate wins, ties going to the lowest feature index.
pub fn train_tree<R: Rng>(
    x: &[Vec<f64>],
    y: &[f64],
    rows: Vec<usize>,
    params: TreeParams,
    task: Task,
    rng: &mut R,
) -> Tree {
    let p = x.first().map_or(0, |r| r.len());
    let (_, cls) = match task {
        Task::Classification => class_index(y),
        Task::Regression => (Vec::new(), vec![0; y.len()]),
    };
    let k = cls.iter().copied().max().map_or(1, |m| m + 1);
    let imp = Impurity { task, y, cls: &cls, k };
    let n_feat = params.n_feat.clamp(1, p.max(1));

    let mut nodes = vec![Node::Leaf(leaf_value(y, &rows, task))];
    let mut queue = VecDeque::from([(0usize, rows)]);
    let mut splits = 0;
    while splits < params.n_splits {
        let Some((at, node_rows)) = queue.pop_front() else {
            break;
        };
        let parent = imp.weighted(&node_rows);
        if parent <= MIN_GAIN || p == 0 {
            continue;
        }
        let mut feats = sample(rng, p, n_feat).into_vec();
        feats.sort_unstable();
        let mut best: Option<(f64, usize, f64)> = None;
        for f in feats {
            if let Some((gain, thr)) = imp.best_split(x, &node_rows, f, parent) {
                if best.is_none_or(|(g, _, _)| beats(gain, g, parent)) {
                    best = Some((gain, f, thr));
                }
            }
        }
        let Some((gain, feature, threshold)) = best else {
            continue;
        };
        if gain <= MIN_GAIN * parent.max(1.0) {
            continue;
        }
        let (l_rows, r_rows): (Vec<usize>, Vec<usize>) = node_rows.iter().partition(|&&r| x[r][feature] <= threshold);
        let left = nodes.len();
        nodes.push(Node::Leaf(leaf_value(y, &l_rows, task)));
        nodes.push(Node::Leaf(leaf_value(y, &r_rows, task)));
        nodes[at] = Node::Split {
            feature,
            threshold,
            left,
            right: left + 1,
        };
        splits += 1;
        queue.push_back((left, l_rows));
        queue.push_back((left + 1, r_rows));
    }
    Tree { nodes }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub task: Task,
}

impl ForestModel {
    /// Majority vote (ties to the lowest label) or mean over trees.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let votes: Vec<f64> = self.trees.iter().map(|t| t.predict(x)).collect();
        let all: Vec<usize> = (0..votes.len()).collect();
        leaf_value(&votes, &all, self.task)
    }
}

/// Bootstrap draw of size `n` for tree `t`.
pub fn bootstrap(n: usize, seed: u64, t: usize) -> Vec<usize> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed::derive(seed, &[t as u64, 0]));
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Trains a forest where tree `t` uses rows `bootstraps[t]`.
pub fn train_forest_with(
    x: &[Vec<f64>],
    y: &[f64],
    bootstraps: Vec<Vec<usize>>,
    params: TreeParams,
    task: Task,
    seed: u64,
) -> ForestModel {
    let trees = bootstraps
        .into_par_iter()
        .enumerate()
        .map(|(t, rows)| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed::derive(seed, &[t as u64, 1]));
            train_tree(x, y, rows, params, task, &mut rng)
        })
        .collect();
    ForestModel { trees, task }
}

pub fn train_forest(x: &[Vec<f64>], y: &[f64], params: TreeParams, task: Task, seed: u64) -> ForestModel {
    let boots = (0..N_TREES).map(|t| bootstrap(y.len(), seed, t)).collect();
    train_forest_with(x, y, boots, params, task, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adjacent_values_still_split() {
        let a = 0.1f64;
        let b = f64::from_bits(a.to_bits() + 1);
        assert!(split_point(a, b) >= a && split_point(a, b) < b);
        let x = vec![vec![a], vec![b], vec![a], vec![b]];
        let y = vec![1.0, 2.0, 1.0, 2.0];
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let params = TreeParams { n_feat: 1, n_splits: 3 };
        let tree = train_tree(&x, &y, (0..4).collect(), params, Task::Classification, &mut rng);
        assert_eq!(tree.predict(&[a]), 1.0);
        assert_eq!(tree.predict(&[b]), 2.0);
    }

    #[test]
    fn separable_feature_gets_perfect_training_accuracy() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..20).map(|i| if i < 10 { 1.0 } else { 2.0 }).collect();
        let f = train_forest(&x, &y, TreeParams { n_feat: 1, n_splits: 5 }, Task::Classification, 3);
        let acc = x.iter().zip(&y).filter(|(xi, yi)| f.predict(xi) == **yi).count();
        assert_eq!(acc, 20);
    }

    #[test]
    fn one_split_gives_stumps() {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![(i * 7 % 30) as f64, (i % 4) as f64]).collect();
        let y: Vec<f64> = (0..30).map(|i| (i % 3) as f64).collect();
        let f = train_forest(&x, &y, TreeParams { n_feat: 2, n_splits: 1 }, Task::Classification, 9);
        assert_eq!(f.trees.len(), N_TREES);
        assert!(f.trees.iter().all(|t| t.n_leaves() <= 2));
    }

    #[test]
    fn regression_leaves_hold_means() {
        let x = vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]];
        let y = vec![1.0, 3.0, 10.0, 14.0];
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let t = train_tree(
            &x,
            &y,
            vec![0, 1, 2, 3],
            TreeParams { n_feat: 1, n_splits: 1 },
            Task::Regression,
            &mut rng,
        );
        assert_eq!(t.predict(&[0.5]), 2.0);
        assert_eq!(t.predict(&[2.5]), 12.0);
    }

    #[test]
    fn constant_data_yields_single_leaf() {
        let x = vec![vec![1.0]; 5];
        let y = vec![0.0, 1.0, 0.0, 1.0, 1.0];
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let t = train_tree(
            &x,
            &y,
            (0..5).collect(),
            TreeParams { n_feat: 1, n_splits: 4 },
            Task::Classification,
            &mut rng,
        );
        assert_eq!(t.nodes, vec![Node::Leaf(1.0)]);
    }

    #[test]
    fn majority_ties_go_to_lowest_label() {
        assert_eq!(
            leaf_value(&[2.0, 1.0, 2.0, 1.0], &[0, 1, 2, 3], Task::Classification),
            1.0
        );
    }
}
