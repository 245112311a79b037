//! Repeated split / subsample / grid-search benchmark and its summaries.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::learners::forest::{train_forest, TreeParams};
use crate::learners::svm::{symmetrize, train_svc, train_svr, KernelSpec, SmoConfig, SvmError};
use crate::learners::{accuracy, nn_predict, one_hot, r_squared, simkern_nn_predict, Dataset, FeatureScaler, Task};
use crate::randspec::format_value;
use crate::seed;
use crate::simkernel::Kernel;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("split fractions must be positive and sum to 1")]
    BadFractions,
    #[error("subsample schedule must be strictly increasing within (0, 1]")]
    BadSchedule,
    #[error("{0} samples are too few for a train/validation/test split")]
    TooFewSamples(usize),
    #[error("similarity-based algorithms need a kernel")]
    KernelRequired,
    #[error("kernel is {kernel} x {kernel} but the dataset has {samples} samples")]
    KernelSize { kernel: usize, samples: usize },
    #[error("unknown algorithm `{0}`")]
    UnknownAlgorithm(String),
    #[error("malformed result record {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Algorithm {
    LinearSvm,
    RbfSvm,
    RandomForest,
    NearestNeighbor,
    SimKernSvm,
    SimKernRf,
    SimKernNn,
}

pub const ROSTER: [Algorithm; 7] = [
    Algorithm::LinearSvm,
    Algorithm::RbfSvm,
    Algorithm::RandomForest,
    Algorithm::NearestNeighbor,
    Algorithm::SimKernSvm,
    Algorithm::SimKernRf,
    Algorithm::SimKernNn,
];

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::LinearSvm => "linear_svm",
            Algorithm::RbfSvm => "rbf_svm",
            Algorithm::RandomForest => "rf",
            Algorithm::NearestNeighbor => "nn",
            Algorithm::SimKernSvm => "simkern_svm",
            Algorithm::SimKernRf => "simkern_rf",
            Algorithm::SimKernNn => "simkern_nn",
        }
    }

    pub fn uses_kernel(self) -> bool {
        matches!(
            self,
            Algorithm::SimKernSvm | Algorithm::SimKernRf | Algorithm::SimKernNn
        )
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ROSTER
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| HarnessError::UnknownAlgorithm(s.into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HyperParams {
    pub c: Option<f64>,
    pub gamma: Option<f64>,
    pub epsilon: Option<f64>,
    pub n_feat: Option<usize>,
    pub n_splits: Option<usize>,
}

impl fmt::Display for HyperParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if let Some(c) = self.c {
            parts.push(format!("C={c:e}"));
        }
        if let Some(g) = self.gamma {
            parts.push(format!("gamma={g:e}"));
        }
        if let Some(e) = self.epsilon {
            parts.push(format!("epsilon={e:e}"));
        }
        if let Some(k) = self.n_feat {
            parts.push(format!("n_feat={k}"));
        }
        if let Some(k) = self.n_splits {
            parts.push(format!("n_splits={k}"));
        }
        f.write_str(&parts.join(";"))
    }
}

impl std::str::FromStr for HyperParams {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut hp = HyperParams::default();
        for part in s.split(';').filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| format!("`{part}` is not key=value"))?;
            let float = || v.parse::<f64>().map_err(|_| format!("bad value in `{part}`"));
            let int = || v.parse::<usize>().map_err(|_| format!("bad value in `{part}`"));
            match k {
                "C" => hp.c = Some(float()?),
                "gamma" => hp.gamma = Some(float()?),
                "epsilon" => hp.epsilon = Some(float()?),
                "n_feat" => hp.n_feat = Some(int()?),
                "n_splits" => hp.n_splits = Some(int()?),
                _ => return Err(format!("unknown hyperparameter `{k}`")),
            }
        }
        Ok(hp)
    }
}

pub fn c_values() -> Vec<f64> {
    (-12..=12).map(|e| 10f64.powi(e)).collect()
}

pub fn gamma_values() -> Vec<f64> {
    (-15..=1).map(|e| 10f64.powi(e)).collect()
}

pub fn epsilon_values() -> Vec<f64> {
    let mut v: Vec<f64> = (-5..=-1).map(|e| 10f64.powi(e)).collect();
    v.extend([0.25, 0.5, 0.75, 1.0]);
    v
}

pub fn n_feat_values(p: usize) -> Vec<usize> {
    let sp = (p as f64).sqrt();
    let mut v = vec![
        1,
        ((1.0 + sp) / 2.0).floor() as usize,
        sp.floor() as usize,
        ((sp + p as f64) / 2.0).floor() as usize,
        p,
    ];
    v.iter_mut().for_each(|k| *k = (*k).clamp(1, p.max(1)));
    v.dedup();
    v
}

pub fn n_splits_values(n: usize) -> Vec<usize> {
    let hi = n.saturating_sub(1).max(1);
    let mut v: Vec<usize> = [0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.75, 1.0]
        .iter()
        .map(|f| ((f * n as f64).floor() as usize).clamp(1, hi))
        .collect();
    v.dedup();
    v
}

/// Hyperparameter grid in search order for `n` training samples with `p`
/// features.
pub fn build_grid(alg: Algorithm, n: usize, p: usize, task: Task) -> Vec<HyperParams> {
    let eps: Vec<Option<f64>> = match task {
        Task::Classification => vec![None],
        Task::Regression => epsilon_values().into_iter().map(Some).collect(),
    };
    let mut grid = Vec::new();
    match alg {
        Algorithm::LinearSvm | Algorithm::SimKernSvm => {
            for c in c_values() {
                for &epsilon in &eps {
                    grid.push(HyperParams {
                        c: Some(c),
                        epsilon,
                        ..Default::default()
                    });
                }
            }
        }
        Algorithm::RbfSvm => {
            for c in c_values() {
                for g in gamma_values() {
                    for &epsilon in &eps {
                        grid.push(HyperParams {
                            c: Some(c),
                            gamma: Some(g),
                            epsilon,
                            ..Default::default()
                        });
                    }
                }
            }
        }
        Algorithm::RandomForest | Algorithm::SimKernRf => {
            for k in n_feat_values(p) {
                for s in n_splits_values(n) {
                    grid.push(HyperParams {
                        n_feat: Some(k),
                        n_splits: Some(s),
                        ..Default::default()
                    });
                }
            }
        }
        Algorithm::NearestNeighbor | Algorithm::SimKernNn => grid.push(HyperParams::default()),
    }
    grid
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Integer counts proportional to `weights` summing to `total`; leftover
/// units go to the largest fractional parts, ties to the earlier entry.
pub fn largest_remainder(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())));
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Groups row indices by class label in ascending label order. Regression
/// targets form one group.
fn strata(rows: &[usize], y: &[f64], task: Task) -> Vec<Vec<usize>> {
    match task {
        Task::Regression => vec![rows.to_vec()],
        Task::Classification => {
            let mut by: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
            for &r in rows {
                by.entry(y[r].to_bits()).or_default().push(r);
            }
            let mut groups: Vec<(f64, Vec<usize>)> = by.into_values().map(|g| (y[g[0]], g)).collect();
            groups.sort_by(|a, b| a.0.total_cmp(&b.0));
            groups.into_iter().map(|(_, g)| g).collect()
        }
    }
}

pub fn stratified_split(y: &[f64], task: Task, fractions: [f64; 3], seed: u64) -> Result<SplitIndices, HarnessError> {
    if fractions.iter().any(|&f| f.is_nan() || f <= 0.0) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(HarnessError::BadFractions);
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let all: Vec<usize> = (0..y.len()).collect();
    let mut parts = [Vec::new(), Vec::new(), Vec::new()];
    for mut group in strata(&all, y, task) {
        group.shuffle(&mut rng);
        let counts = largest_remainder(group.len(), &fractions);
        let mut it = group.into_iter();
        for (part, &c) in parts.iter_mut().zip(&counts) {
            part.extend(it.by_ref().take(c));
        }
    }
    if parts.iter().any(|p| p.is_empty()) {
        return Err(HarnessError::TooFewSamples(y.len()));
    }
    for p in &mut parts {
        p.sort_unstable();
    }
    let [train, validation, test] = parts;
    Ok(SplitIndices {
        train,
        validation,
        test,
    })
}

/// Stratified subsample of `round(s * |train|)` rows keeping at least one
/// row of every class present in `train`.
pub fn subsample_training(train: &[usize], y: &[f64], task: Task, s: f64, seed: u64) -> Vec<usize> {
    if s >= 1.0 {
        return train.to_vec();
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let target = ((s * train.len() as f64).round() as usize).clamp(1, train.len());
    let groups = strata(train, y, task);
    let weights: Vec<f64> = groups.iter().map(|g| g.len() as f64).collect();
    let counts = largest_remainder(target, &weights);
    let mut out = Vec::with_capacity(target + groups.len());
    for (mut group, c) in groups.into_iter().zip(counts) {
        group.shuffle(&mut rng);
        out.extend(group.into_iter().take(c.max(1)));
    }
    out.sort_unstable();
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub repetitions: usize,
    pub fractions: [f64; 3],
    pub schedule: Vec<f64>,
    pub roster: Vec<Algorithm>,
    pub master_seed: u64,
    /// Fit feature scaling on each training subsample instead of all rows.
    pub strict_scaling: bool,
    pub smo: SmoConfig,
}

impl ExperimentConfig {
    pub fn new(schedule: Vec<f64>, master_seed: u64) -> Self {
        Self {
            repetitions: 10,
            fractions: [0.5, 0.25, 0.25],
            schedule,
            roster: ROSTER.to_vec(),
            master_seed,
            strict_scaling: false,
            smo: SmoConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.fractions.iter().any(|&f| f.is_nan() || f <= 0.0)
            || (self.fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(HarnessError::BadFractions);
        }
        let increasing = self.schedule.windows(2).all(|w| w[0] < w[1]);
        if self.schedule.is_empty() || !increasing || self.schedule.iter().any(|&s| !(s > 0.0 && s <= 1.0)) {
            return Err(HarnessError::BadSchedule);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRecord {
    pub repetition: usize,
    pub subsample: f64,
    pub algorithm: Algorithm,
    pub hyperparams: HyperParams,
    pub val_metric: f64,
    pub test_metric: f64,
}

pub const RESULTS_HEADER: [&str; 6] = [
    "repetition",
    "subsample",
    "algorithm",
    "hyperparams",
    "val_metric",
    "test_metric",
];

fn fmt_metric(v: f64) -> String {
    if v.is_finite() {
        format_value(v)
    } else {
        v.to_string()
    }
}

pub fn write_results<W: Write>(records: &[ResultRecord], w: W) -> Result<(), HarnessError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(RESULTS_HEADER)?;
    for r in records {
        wr.write_record([
            r.repetition.to_string(),
            format_value(r.subsample),
            r.algorithm.to_string(),
            r.hyperparams.to_string(),
            fmt_metric(r.val_metric),
            fmt_metric(r.test_metric),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// Reads records written by [`write_results`].
pub fn read_results<R: std::io::Read>(r: R) -> Result<Vec<ResultRecord>, HarnessError> {
    let mut rd = csv::Reader::from_reader(r);
    if rd.headers()?.iter().ne(RESULTS_HEADER) {
        return Err(HarnessError::MalformedRecord {
            line: 1,
            reason: "unexpected header".into(),
        });
    }
    let mut out = Vec::new();
    for (i, row) in rd.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let bad = |reason: String| HarnessError::MalformedRecord { line, reason };
        if row.len() != RESULTS_HEADER.len() {
            return Err(bad(format!("expected 6 fields, got {}", row.len())));
        }
        let float = |j: usize| {
            row[j]
                .parse::<f64>()
                .map_err(|_| bad(format!("bad number `{}`", &row[j])))
        };
        out.push(ResultRecord {
            repetition: row[0]
                .parse()
                .map_err(|_| bad(format!("bad repetition `{}`", &row[0])))?,
            subsample: float(1)?,
            algorithm: row[2].parse()?,
            hyperparams: row[3].parse().map_err(bad)?,
            val_metric: float(4)?,
            test_metric: float(5)?,
        });
    }
    Ok(out)
}

struct Prepared<'a> {
    data: &'a Dataset,
    kernel: Option<&'a Kernel>,
    numeric: Vec<bool>,
    /// Scaled rows for trees, and scaled dummy-coded rows for SVM and 1-NN.
    tree_x: Vec<Vec<f64>>,
    svm_x: Vec<Vec<f64>>,
}

impl<'a> Prepared<'a> {
    fn new(data: &'a Dataset, kernel: Option<&'a Kernel>) -> Self {
        let numeric: Vec<bool> = data.categorical.iter().map(|c| !c).collect();
        let tree_x = FeatureScaler::fit(&data.x, &numeric).transform(&data.x);
        let svm_x = one_hot(&tree_x, &data.categorical);
        Self {
            data,
            kernel,
            numeric,
            tree_x,
            svm_x,
        }
    }

    fn rescaled(&self, train: &[usize]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let rows: Vec<Vec<f64>> = train.iter().map(|&i| self.data.x[i].clone()).collect();
        let tree_x = FeatureScaler::fit(&rows, &self.numeric).transform(&self.data.x);
        let svm_x = one_hot(&tree_x, &self.data.categorical);
        (tree_x, svm_x)
    }
}

fn rows(x: &[Vec<f64>], idx: &[usize]) -> Vec<Vec<f64>> {
    idx.iter().map(|&i| x[i].clone()).collect()
}

/// Inputs for one (repetition, subsample) cell.
struct Cell<'a> {
    task: Task,
    y: &'a [f64],
    train: &'a [usize],
    tree_x: &'a [Vec<f64>],
    svm_x: &'a [Vec<f64>],
    kernel: Option<&'a Kernel>,
    smo: SmoConfig,
}

impl Cell<'_> {
    fn y_train(&self) -> Vec<f64> {
        self.train.iter().map(|&i| self.y[i]).collect()
    }

    fn metric(&self, eval: &[usize], pred: &[f64]) -> f64 {
        let truth: Vec<f64> = eval.iter().map(|&i| self.y[i]).collect();
        match self.task {
            Task::Classification => accuracy(&truth, pred),
            Task::Regression => r_squared(&truth, pred),
        }
    }

    fn n_features(&self, alg: Algorithm) -> usize {
        match alg {
            Algorithm::SimKernRf => self.train.len(),
            _ => self.tree_x.first().map_or(0, |r| r.len()),
        }
    }

    fn gram_and_rows(&self, alg: Algorithm, hp: &HyperParams, eval: &[usize]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let n = self.train.len();
        match alg {
            Algorithm::SimKernSvm => {
                let k = self.kernel.expect("kernel checked");
                let mut g: Vec<f64> = k.select(self.train, self.train).concat();
                symmetrize(&mut g, n);
                (g, k.select(eval, self.train))
            }
            _ => {
                let spec = match alg {
                    Algorithm::RbfSvm => KernelSpec::Rbf {
                        gamma: hp.gamma.expect("rbf grid has gamma"),
                    },
                    _ => KernelSpec::Linear,
                };
                let train_x = rows(self.svm_x, self.train);
                let mut g = spec.gram(&train_x);
                symmetrize(&mut g, n);
                let eval_rows = eval.iter().map(|&i| spec.row(&self.svm_x[i], &train_x)).collect();
                (g, eval_rows)
            }
        }
    }

    /// Trains `alg` with `hp` and predicts the rows in `eval`.
    fn fit_predict(
        &self,
        alg: Algorithm,
        hp: &HyperParams,
        eval: &[usize],
        fit_seed: u64,
    ) -> Result<Vec<f64>, SvmError> {
        let y_train = self.y_train();
        match alg {
            Algorithm::LinearSvm | Algorithm::RbfSvm | Algorithm::SimKernSvm => {
                let (gram, eval_rows) = self.gram_and_rows(alg, hp, eval);
                let c = hp.c.expect("svm grid has C");
                match self.task {
                    Task::Classification => {
                        let labels: Vec<u32> = y_train.iter().map(|&v| v as u32).collect();
                        let m = train_svc(&gram, &labels, c, &self.smo)?;
                        Ok(eval_rows.iter().map(|r| m.predict(r) as f64).collect())
                    }
                    Task::Regression => {
                        let m = train_svr(
                            &gram,
                            &y_train,
                            c,
                            hp.epsilon.expect("regression grid has epsilon"),
                            &self.smo,
                        )?;
                        Ok(eval_rows.iter().map(|r| m.decision(r)).collect())
                    }
                }
            }
            Algorithm::RandomForest | Algorithm::SimKernRf => {
                let (train_x, eval_x) = if alg == Algorithm::SimKernRf {
                    let k = self.kernel.expect("kernel checked");
                    (k.select(self.train, self.train), k.select(eval, self.train))
                } else {
                    (rows(self.tree_x, self.train), rows(self.tree_x, eval))
                };
                let params = TreeParams {
                    n_feat: hp.n_feat.expect("forest grid has n_feat"),
                    n_splits: hp.n_splits.expect("forest grid has n_splits"),
                };
                let f = train_forest(&train_x, &y_train, params, self.task, fit_seed);
                Ok(eval_x.iter().map(|r| f.predict(r)).collect())
            }
            Algorithm::NearestNeighbor => {
                let train_x = rows(self.svm_x, self.train);
                Ok(eval
                    .iter()
                    .map(|&i| nn_predict(&train_x, &y_train, &self.svm_x[i]))
                    .collect())
            }
            Algorithm::SimKernNn => {
                let k = self.kernel.expect("kernel checked");
                Ok(eval
                    .iter()
                    .map(|&i| {
                        let row: Vec<f64> = self.train.iter().map(|&t| k.get(i, t)).collect();
                        let skip = self.train.iter().position(|&t| t == i);
                        simkern_nn_predict(&row, &y_train, skip)
                    })
                    .collect())
            }
        }
    }
}

fn fit_seed(master: u64, rep: usize, s_idx: usize, alg: Algorithm, grid_idx: usize) -> u64 {
    seed::derive(
        master,
        &[rep as u64, s_idx as u64, seed::tag(alg.name()), grid_idx as u64],
    )
}

pub fn split_seed(master: u64, rep: usize) -> u64 {
    seed::derive(master, &[seed::tag("split"), rep as u64])
}

pub fn subsample_seed(master: u64, rep: usize, s_idx: usize) -> u64 {
    seed::derive(master, &[seed::tag("subsample"), rep as u64, s_idx as u64])
}

/// Index of the first maximum, treating NaN as negative infinity.
pub fn first_argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        let b = if values[best].is_nan() {
            f64::NEG_INFINITY
        } else {
            values[best]
        };
        if v > b {
            best = i;
        }
    }
    best
}

/// Training rows of one (repetition, subsample) cell, with per-cell rescaled
/// features when strict scaling is on.
type CellRows = (Vec<usize>, Option<(Vec<Vec<f64>>, Vec<Vec<f64>>)>);

/// Runs every repetition, subsample and algorithm, tuning on validation
/// rows and scoring on test rows. Records come back sorted by repetition,
/// subsample and roster position.
pub fn run_experiment(
    data: &Dataset,
    kernel: Option<&Kernel>,
    config: &ExperimentConfig,
) -> Result<Vec<ResultRecord>, HarnessError> {
    config.validate()?;
    if config.roster.iter().any(|a| a.uses_kernel()) {
        let k = kernel.ok_or(HarnessError::KernelRequired)?;
        if k.size() != data.len() {
            return Err(HarnessError::KernelSize {
                kernel: k.size(),
                samples: data.len(),
            });
        }
    }
    let prep = Prepared::new(data, kernel);
    let splits: Vec<SplitIndices> = (0..config.repetitions)
        .map(|rep| {
            stratified_split(
                &data.y,
                data.task,
                config.fractions,
                split_seed(config.master_seed, rep),
            )
        })
        .collect::<Result<_, _>>()?;

    let units: Vec<(usize, usize, Algorithm)> = (0..config.repetitions)
        .flat_map(|rep| (0..config.schedule.len()).flat_map(move |s| config.roster.iter().map(move |&a| (rep, s, a))))
        .collect();

    let cells: Vec<Vec<CellRows>> = (0..config.repetitions)
        .map(|rep| {
            (0..config.schedule.len())
                .map(|s_idx| {
                    let train = subsample_training(
                        &splits[rep].train,
                        &data.y,
                        data.task,
                        config.schedule[s_idx],
                        subsample_seed(config.master_seed, rep, s_idx),
                    );
                    let scaled = config.strict_scaling.then(|| prep.rescaled(&train));
                    (train, scaled)
                })
                .collect()
        })
        .collect();

    let mut records: Vec<ResultRecord> = units
        .par_iter()
        .map(|&(rep, s_idx, alg)| {
            let (train, scaled) = &cells[rep][s_idx];
            let (tree_x, svm_x) = match scaled {
                Some((t, s)) => (t.as_slice(), s.as_slice()),
                None => (prep.tree_x.as_slice(), prep.svm_x.as_slice()),
            };
            let cell = Cell {
                task: data.task,
                y: &data.y,
                train,
                tree_x,
                svm_x,
                kernel: prep.kernel,
                smo: config.smo,
            };
            let split = &splits[rep];
            let grid = build_grid(alg, train.len(), cell.n_features(alg), data.task);
            let scores: Vec<f64> = grid
                .par_iter()
                .enumerate()
                .map(|(g, hp)| {
                    let seed = fit_seed(config.master_seed, rep, s_idx, alg, g);
                    match cell.fit_predict(alg, hp, &split.validation, seed) {
                        Ok(pred) => cell.metric(&split.validation, &pred),
                        Err(e) => {
                            log::debug!("rep {rep} s {s_idx} {alg} grid {g}: {e}");
                            f64::NEG_INFINITY
                        }
                    }
                })
                .collect();
            let best = first_argmax(&scores);
            let seed = fit_seed(config.master_seed, rep, s_idx, alg, best);
            let test_metric = match cell.fit_predict(alg, &grid[best], &split.test, seed) {
                Ok(pred) => cell.metric(&split.test, &pred),
                Err(e) => {
                    log::warn!("rep {rep} s {s_idx} {alg}: selected configuration failed: {e}");
                    f64::NAN
                }
            };
            ResultRecord {
                repetition: rep + 1,
                subsample: config.schedule[s_idx],
                algorithm: alg,
                hyperparams: grid[best],
                val_metric: scores[best],
                test_metric,
            }
        })
        .collect();
    records.sort_by(|a, b| {
        a.repetition
            .cmp(&b.repetition)
            .then(a.subsample.total_cmp(&b.subsample))
            .then(a.algorithm.cmp(&b.algorithm))
    });
    Ok(records)
}

/// Quantile by linear interpolation between order statistics of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxStats {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

/// Box-plot summary with 1.5 IQR fences. Non-finite values are ignored;
/// returns `None` if nothing finite remains.
pub fn box_stats(values: &[f64]) -> Option<BoxStats> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let (q1, median, q3) = (quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75));
    let iqr = q3 - q1;
    let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside: Vec<f64> = v.iter().copied().filter(|&x| x >= lo && x <= hi).collect();
    Some(BoxStats {
        median,
        q1,
        q3,
        whisker_low: inside[0],
        whisker_high: *inside.last().expect("median lies inside the fences"),
        outliers: v.into_iter().filter(|&x| x < lo || x > hi).collect(),
    })
}

/// Test-metric box statistics per (algorithm, subsample).
pub fn summarize_boxplot(records: &[ResultRecord]) -> Vec<(Algorithm, f64, BoxStats)> {
    let mut groups: BTreeMap<(Algorithm, u64), Vec<f64>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.algorithm, r.subsample.to_bits()))
            .or_default()
            .push(r.test_metric);
    }
    let mut out: Vec<(Algorithm, f64, BoxStats)> = groups
        .into_iter()
        .filter_map(|((a, s), v)| box_stats(&v).map(|b| (a, f64::from_bits(s), b)))
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    out
}

pub fn write_boxplot<W: Write>(stats: &[(Algorithm, f64, BoxStats)], w: W) -> Result<(), HarnessError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record([
        "algorithm",
        "subsample",
        "median",
        "q1",
        "q3",
        "whisker_low",
        "whisker_high",
        "outliers",
    ])?;
    for (a, s, b) in stats {
        let outliers: Vec<String> = b.outliers.iter().map(|&v| format_value(v)).collect();
        wr.write_record([
            a.to_string(),
            format_value(*s),
            format_value(b.median),
            format_value(b.q1),
            format_value(b.q3),
            format_value(b.whisker_low),
            format_value(b.whisker_high),
            outliers.join(";"),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Group {
    Standard,
    SimKern,
}

impl Group {
    pub fn members(self) -> &'static [Algorithm] {
        match self {
            Group::Standard => &[Algorithm::LinearSvm, Algorithm::RbfSvm, Algorithm::RandomForest],
            Group::SimKern => &[Algorithm::SimKernSvm, Algorithm::SimKernRf],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Group::Standard => "standard",
            Group::SimKern => "simkern",
        }
    }
}

/// Median test metric of `alg` at each subsample level, in ascending order.
pub fn median_line(records: &[ResultRecord], alg: Algorithm) -> Vec<(f64, f64)> {
    summarize_boxplot(records)
        .into_iter()
        .filter(|(a, _, _)| *a == alg)
        .map(|(_, s, b)| (s, b.median))
        .collect()
}

/// The group member that most often has the highest median across
/// subsample levels (ties to roster order), with its median line.
pub fn select_best(records: &[ResultRecord], group: Group) -> Option<(Algorithm, Vec<(f64, f64)>)> {
    let members = group.members();
    let lines: Vec<(Algorithm, Vec<(f64, f64)>)> = members
        .iter()
        .map(|&a| (a, median_line(records, a)))
        .filter(|(_, l)| !l.is_empty())
        .collect();
    if lines.is_empty() {
        return None;
    }
    let mut levels: Vec<f64> = lines.iter().flat_map(|(_, l)| l.iter().map(|p| p.0)).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let mut wins = vec![0usize; lines.len()];
    for s in levels {
        let medians: Vec<f64> = lines
            .iter()
            .map(|(_, l)| l.iter().find(|p| p.0 == s).map_or(f64::NEG_INFINITY, |p| p.1))
            .collect();
        wins[first_argmax(&medians)] += 1;
    }
    let best = crate::learners::svm::vote_winner(&wins);
    Some(lines[best].clone())
}

pub fn write_lineplot<W: Write>(records: &[ResultRecord], w: W) -> Result<(), HarnessError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["group", "algorithm", "subsample", "median"])?;
    for group in [Group::Standard, Group::SimKern] {
        if let Some((alg, line)) = select_best(records, group) {
            for (s, m) in line {
                wr.write_record([
                    group.name().to_string(),
                    alg.to_string(),
                    format_value(s),
                    format_value(m),
                ])?;
            }
        }
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn results_csv_round_trip() {
        let records = vec![
            ResultRecord {
                repetition: 1,
                subsample: 0.05,
                algorithm: Algorithm::RbfSvm,
                hyperparams: HyperParams {
                    c: Some(1e-3),
                    gamma: Some(0.1),
                    ..Default::default()
                },
                val_metric: f64::NEG_INFINITY,
                test_metric: f64::NAN,
            },
            ResultRecord {
                repetition: 2,
                subsample: 1.0,
                algorithm: Algorithm::RandomForest,
                hyperparams: HyperParams {
                    n_feat: Some(3),
                    n_splits: Some(7),
                    ..Default::default()
                },
                val_metric: 0.75,
                test_metric: 1.0 / 3.0,
            },
        ];
        let mut buf = Vec::new();
        write_results(&records, &mut buf).unwrap();
        let back = read_results(buf.as_slice()).unwrap();
        assert_eq!(back[1], records[1]);
        assert_eq!(back[0].hyperparams, records[0].hyperparams);
        assert!(back[0].test_metric.is_nan() && back[0].val_metric == f64::NEG_INFINITY);
        let mut again = Vec::new();
        write_results(&back, &mut again).unwrap();
        assert_eq!(buf, again);
        assert!(read_results("a,b\n".as_bytes()).is_err());
    }

    #[test]
    fn split_example() {
        let y: Vec<f64> = (0..12).map(|i| if i < 8 { 0.0 } else { 1.0 }).collect();
        let s = stratified_split(&y, Task::Classification, [0.5, 0.25, 0.25], 7).unwrap();
        let count = |idx: &[usize], c: f64| idx.iter().filter(|&&i| y[i] == c).count();
        assert_eq!((count(&s.train, 0.0), count(&s.train, 1.0)), (4, 2));
        assert_eq!((count(&s.validation, 0.0), count(&s.validation, 1.0)), (2, 1));
        assert_eq!((count(&s.test, 0.0), count(&s.test, 1.0)), (2, 1));
        assert_eq!(
            s,
            stratified_split(&y, Task::Classification, [0.5, 0.25, 0.25], 7).unwrap()
        );
    }

    #[test]
    fn single_class_and_regression_split() {
        let y = vec![3.0; 8];
        let s = stratified_split(&y, Task::Classification, [0.5, 0.25, 0.25], 1).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (4, 2, 2));
        let r: Vec<f64> = (0..8).map(|i| i as f64 * 0.3).collect();
        let s = stratified_split(&r, Task::Regression, [0.5, 0.25, 0.25], 1).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (4, 2, 2));
        assert!(matches!(
            stratified_split(&[1.0, 2.0], Task::Regression, [0.5, 0.25, 0.25], 1),
            Err(HarnessError::TooFewSamples(2))
        ));
    }

    #[test]
    fn largest_remainder_cases() {
        assert_eq!(largest_remainder(5, &[0.5, 0.25, 0.25]), vec![3, 1, 1]);
        assert_eq!(largest_remainder(4, &[0.5, 0.25, 0.25]), vec![2, 1, 1]);
        assert_eq!(largest_remainder(0, &[1.0, 2.0]), vec![0, 0]);
    }

    #[test]
    fn subsample_identity_and_floor() {
        let train: Vec<usize> = (0..50).collect();
        let y: Vec<f64> = (0..50).map(|i| if i < 45 { 0.0 } else { 1.0 }).collect();
        assert_eq!(subsample_training(&train, &y, Task::Classification, 1.0, 3), train);
        let sub = subsample_training(&train, &y, Task::Classification, 0.04, 3);
        assert_eq!(sub.len(), 3);
        assert!(sub.iter().any(|&i| y[i] == 1.0));
    }

    #[test]
    fn grid_sizes() {
        assert_eq!(build_grid(Algorithm::LinearSvm, 50, 4, Task::Classification).len(), 25);
        assert_eq!(build_grid(Algorithm::RbfSvm, 50, 4, Task::Classification).len(), 425);
        assert_eq!(build_grid(Algorithm::RbfSvm, 50, 4, Task::Regression).len(), 3825);
        assert_eq!(build_grid(Algorithm::SimKernSvm, 50, 4, Task::Regression).len(), 225);
        assert_eq!(c_values().len(), 25);
        assert_eq!(gamma_values().len(), 17);
        assert_eq!(epsilon_values().len(), 9);
        assert_eq!(n_feat_values(39), vec![1, 3, 6, 22, 39]);
        assert_eq!(n_splits_values(10), vec![1, 2, 3, 4, 5, 7, 9]);
        assert_eq!(n_splits_values(2), vec![1]);
    }

    #[test]
    fn hyperparams_render() {
        let hp = HyperParams {
            c: Some(0.001),
            gamma: Some(10.0),
            ..Default::default()
        };
        assert_eq!(hp.to_string(), "C=1e-3;gamma=1e1");
    }

    #[test]
    fn box_stats_cases() {
        let b = box_stats(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!((b.median, b.q1, b.q3), (3.0, 2.0, 4.0));
        assert!(b.outliers.is_empty());
        let c = box_stats(&[0.7; 4]).unwrap();
        assert_eq!((c.q1, c.q3), (0.7, 0.7));
        let mut v: Vec<f64> = (1..=9).map(f64::from).collect();
        v.push(100.0);
        let d = box_stats(&v).unwrap();
        assert_eq!(d.outliers, vec![100.0]);
        assert_eq!(d.whisker_high, 9.0);
    }

    fn rec(alg: Algorithm, s: f64, m: f64) -> ResultRecord {
        ResultRecord {
            repetition: 1,
            subsample: s,
            algorithm: alg,
            hyperparams: HyperParams::default(),
            val_metric: m,
            test_metric: m,
        }
    }

    #[test]
    fn best_algorithm_selection() {
        let mut r = Vec::new();
        for (i, s) in [0.1, 0.2, 0.3, 0.4, 0.5].into_iter().enumerate() {
            r.push(rec(Algorithm::LinearSvm, s, if i < 3 { 0.9 } else { 0.5 }));
            r.push(rec(Algorithm::RbfSvm, s, if i < 3 { 0.5 } else { 0.9 }));
            r.push(rec(Algorithm::NearestNeighbor, s, 1.0));
            r.push(rec(Algorithm::SimKernSvm, s, 0.2));
            r.push(rec(Algorithm::SimKernNn, s, 1.0));
        }
        let (a, line) = select_best(&r, Group::Standard).unwrap();
        assert_eq!(a, Algorithm::LinearSvm);
        assert_eq!(line.len(), 5);
        assert_eq!(select_best(&r, Group::SimKern).unwrap().0, Algorithm::SimKernSvm);
    }

    #[test]
    fn argmax_prefers_first() {
        assert_eq!(first_argmax(&[0.5, 0.9, 0.9]), 1);
        assert_eq!(first_argmax(&[f64::NEG_INFINITY, f64::NEG_INFINITY]), 0);
        assert_eq!(first_argmax(&[f64::NAN, 0.1]), 1);
    }
}
