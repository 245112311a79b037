//! Pairwise similarity of simulation outputs and the trial-averaged kernel.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use thiserror::Error;

use crate::simmodels::Trajectory;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("trajectories are sampled on different time grids")]
    GridMismatch,
    #[error("trajectories have different entities")]
    EntityMismatch,
    #[error("size mismatch: expected {expected}, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("output kind {got:?} does not match configured kind {expected:?}")]
    KindMismatch { expected: OutputKind, got: OutputKind },
    #[error("trajectory similarity needs at least one entity with positive weight")]
    NoPositiveWeight,
    #[error("weight for `{0}` must lie in [0, 1]")]
    BadWeight(String),
    #[error("unknown entity `{0}`")]
    UnknownEntity(String),
    #[error("matrix is not a square array of numbers: {0}")]
    Malformed(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputKind {
    Trajectory,
    Categorical,
    Vector,
}

/// One sample's output from one simulation.
#[derive(Debug, Clone, PartialEq)]
pub enum SimOutput {
    Trajectory(Trajectory),
    Label(u32),
    Vector(Vec<f64>),
}

impl SimOutput {
    pub fn kind(&self) -> OutputKind {
        match self {
            SimOutput::Trajectory(_) => OutputKind::Trajectory,
            SimOutput::Label(_) => OutputKind::Categorical,
            SimOutput::Vector(_) => OutputKind::Vector,
        }
    }
}

/// Outputs of every sample in trial `trial_index`.
#[derive(Debug, Clone)]
pub struct TrialOutputs {
    pub trial_index: usize,
    pub outputs: Vec<SimOutput>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityConfig {
    pub output_kind: OutputKind,
    /// Entities not listed get weight 1.
    pub entity_weights: BTreeMap<String, f64>,
    pub entity_subset: Option<Vec<String>>,
}

impl SimilarityConfig {
    pub fn new(output_kind: OutputKind) -> Self {
        Self {
            output_kind,
            entity_weights: BTreeMap::new(),
            entity_subset: None,
        }
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        for (name, &w) in &self.entity_weights {
            if !(0.0..=1.0).contains(&w) {
                return Err(KernelError::BadWeight(name.clone()));
            }
        }
        if self.output_kind == OutputKind::Trajectory {
            if let Some(subset) = &self.entity_subset {
                if !subset.iter().any(|e| self.weight(e) > 0.0) {
                    return Err(KernelError::NoPositiveWeight);
                }
            }
        }
        Ok(())
    }

    pub fn weight(&self, entity: &str) -> f64 {
        self.entity_weights.get(entity).copied().unwrap_or(1.0)
    }

    /// Resolves (entity index, weight) pairs for trajectories with these entity names.
    pub fn resolve(&self, entity_names: &[String]) -> Result<Vec<(usize, f64)>, KernelError> {
        let chosen: Vec<(usize, f64)> = match &self.entity_subset {
            Some(subset) => subset
                .iter()
                .map(|e| {
                    entity_names
                        .iter()
                        .position(|n| n == e)
                        .map(|i| (i, self.weight(e)))
                        .ok_or_else(|| KernelError::UnknownEntity(e.clone()))
                })
                .collect::<Result<_, _>>()?,
            None => entity_names
                .iter()
                .enumerate()
                .map(|(i, n)| (i, self.weight(n)))
                .collect(),
        };
        if !chosen.iter().any(|&(_, w)| w > 0.0) {
            return Err(KernelError::NoPositiveWeight);
        }
        Ok(chosen)
    }
}

fn check_compatible(a: &Trajectory, b: &Trajectory) -> Result<(), KernelError> {
    if a.entity_names != b.entity_names || a.levels.len() != b.levels.len() {
        return Err(KernelError::EntityMismatch);
    }
    if a.times != b.times {
        return Err(KernelError::GridMismatch);
    }
    Ok(())
}

fn trajectory_similarity_resolved(a: &Trajectory, b: &Trajectory, entities: &[(usize, f64)]) -> f64 {
    let t = a.times.len() as f64;
    let mut total = 0.0;
    for &(e, w) in entities {
        if w == 0.0 {
            continue;
        }
        let (la, lb) = (&a.levels[e], &b.levels[e]);
        let m = la.iter().chain(lb).fold(0.0f64, |m, &v| m.max(v));
        if m == 0.0 {
            continue;
        }
        let sq: f64 = la.iter().zip(lb).map(|(x, y)| ((x - y) / m).powi(2)).sum();
        total += w * sq;
    }
    (1.0 - total / (entities.len() as f64 * t)).clamp(0.0, 1.0)
}

/// `1 - (1/(E T)) sum_e w_e sum_k ((a_ek - b_ek) / M_e)^2` with `M_e` the
/// largest level of entity `e` in either trajectory.
pub fn trajectory_similarity(a: &Trajectory, b: &Trajectory, cfg: &SimilarityConfig) -> Result<f64, KernelError> {
    check_compatible(a, b)?;
    let entities = cfg.resolve(&a.entity_names)?;
    Ok(trajectory_similarity_resolved(a, b, &entities))
}

pub fn categorical_similarity(a: u32, b: u32) -> f64 {
    if a == b {
        1.0
    } else {
        0.0
    }
}

/// `1 - mean_c ((a_c - b_c) / M_c)^2` with `M_c = max(|a_c|, |b_c|)`.
pub fn vector_similarity(a: &[f64], b: &[f64]) -> Result<f64, KernelError> {
    if a.len() != b.len() {
        return Err(KernelError::SizeMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.is_empty() {
        return Ok(1.0);
    }
    let sq: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let m = x.abs().max(y.abs());
            if m == 0.0 {
                0.0
            } else {
                ((x - y) / m).powi(2)
            }
        })
        .sum();
    Ok((1.0 - sq / a.len() as f64).clamp(0.0, 1.0))
}

/// Dense symmetric N x N matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    n: usize,
    data: Vec<f64>,
}

impl Kernel {
    pub fn identity(n: usize) -> Self {
        let mut k = Self::zeros(n);
        for i in 0..n {
            k.set(i, i, 1.0);
        }
        k
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, KernelError> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(KernelError::SizeMismatch {
                    expected: n,
                    got: row.len(),
                });
            }
            data.extend(row);
        }
        Ok(Self { n, data })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Sub-matrix with rows `rows` and columns `cols`.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Vec<Vec<f64>> {
        rows.iter()
            .map(|&i| cols.iter().map(|&j| self.get(i, j)).collect())
            .collect()
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.data)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), KernelError> {
        let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        for i in 0..self.n {
            wr.write_record(self.row(i).iter().map(|v| format!("{v:.16e}")))?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, KernelError> {
        let mut rd = csv::ReaderBuilder::new().has_headers(false).from_reader(r);
        let mut rows = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|_| KernelError::Malformed(format!("bad number `{f}`")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        Self::from_rows(rows)
    }
}

/// Per-trial similarity matrix `Z_r`. Pairs are evaluated in parallel on the
/// current rayon pool; the result does not depend on the pool size.
pub fn similarity_matrix(outputs: &[SimOutput], cfg: &SimilarityConfig) -> Result<Kernel, KernelError> {
    let n = outputs.len();
    for o in outputs {
        if o.kind() != cfg.output_kind {
            return Err(KernelError::KindMismatch {
                expected: cfg.output_kind,
                got: o.kind(),
            });
        }
    }
    let entities = match outputs.first() {
        Some(SimOutput::Trajectory(t)) => {
            for o in outputs {
                if let SimOutput::Trajectory(u) = o {
                    check_compatible(t, u)?;
                }
            }
            cfg.resolve(&t.entity_names)?
        }
        _ => Vec::new(),
    };
    if let Some(SimOutput::Vector(v)) = outputs.first() {
        for o in outputs {
            if let SimOutput::Vector(u) = o {
                if u.len() != v.len() {
                    return Err(KernelError::SizeMismatch {
                        expected: v.len(),
                        got: u.len(),
                    });
                }
            }
        }
    }
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..i)
                .map(|j| match (&outputs[i], &outputs[j]) {
                    (SimOutput::Trajectory(a), SimOutput::Trajectory(b)) => {
                        trajectory_similarity_resolved(a, b, &entities)
                    }
                    (SimOutput::Label(a), SimOutput::Label(b)) => categorical_similarity(*a, *b),
                    (SimOutput::Vector(a), SimOutput::Vector(b)) => vector_similarity(a, b).expect("lengths checked"),
                    _ => unreachable!("kinds checked"),
                })
                .collect()
        })
        .collect();
    let mut k = Kernel::identity(n);
    for (i, row) in rows.into_iter().enumerate() {
        for (j, z) in row.into_iter().enumerate() {
            k.set(i, j, z);
            k.set(j, i, z);
        }
    }
    Ok(k)
}

/// Running mean of per-trial similarity matrices.
#[derive(Debug, Clone)]
pub struct KernelAccumulator {
    kernel: Kernel,
    trials: usize,
}

impl KernelAccumulator {
    pub fn new(n: usize) -> Self {
        Self {
            kernel: Kernel::zeros(n),
            trials: 0,
        }
    }

    pub fn trials_accumulated(&self) -> usize {
        self.trials
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn into_kernel(self) -> Kernel {
        self.kernel
    }

    /// Folds in the next trial and returns the Frobenius change from the
    /// previous mean (`None` for the first trial).
    pub fn accumulate(&mut self, z: &Kernel) -> Result<Option<f64>, KernelError> {
        if z.n != self.kernel.n {
            return Err(KernelError::SizeMismatch {
                expected: self.kernel.n,
                got: z.n,
            });
        }
        self.trials += 1;
        let r = self.trials as f64;
        let prev = std::mem::take(&mut self.kernel.data);
        self.kernel.data = prev
            .iter()
            .zip(&z.data)
            .map(|(&k, &zv)| ((r - 1.0) * k + zv) / r)
            .collect();
        if self.trials == 1 {
            Ok(None)
        } else {
            Ok(Some(frobenius(&self.kernel.data, &prev)))
        }
    }
}

fn frobenius(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

pub fn convergence_delta(current: &Kernel, previous: &Kernel) -> Result<f64, KernelError> {
    if current.n != previous.n {
        return Err(KernelError::SizeMismatch {
            expected: previous.n,
            got: current.n,
        });
    }
    Ok(frobenius(&current.data, &previous.data))
}

pub const DEFAULT_PSD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Definiteness {
    PositiveDefinite,
    SemiDefinite,
    Indefinite(f64),
}

pub fn min_eigenvalue(k: &Kernel) -> f64 {
    if k.n == 0 {
        return 0.0;
    }
    let m = k.to_dmatrix();
    let sym = (&m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.min()
}

/// Classifies `k` by its smallest eigenvalue: above `tol` is positive
/// definite, within `tol` of zero semi-definite, below `-tol` indefinite.
pub fn check_psd(k: &Kernel, tol: f64) -> Definiteness {
    let min = min_eigenvalue(k);
    if min > tol {
        Definiteness::PositiveDefinite
    } else if min >= -tol {
        Definiteness::SemiDefinite
    } else {
        Definiteness::Indefinite(min)
    }
}

/// Returns `k + delta I` with `delta = tol - min_eig` when `k` is indefinite,
/// together with the applied shift.
pub fn jitter_psd(k: &Kernel, tol: f64) -> (Kernel, Option<f64>) {
    match check_psd(k, tol) {
        Definiteness::Indefinite(min) => {
            let delta = tol - min;
            let mut out = k.clone();
            for i in 0..k.n {
                out.set(i, i, k.get(i, i) + delta);
            }
            log::warn!("kernel indefinite (min eigenvalue {min:e}); added {delta:e} to the diagonal");
            (out, Some(delta))
        }
        _ => (k.clone(), None),
    }
}
