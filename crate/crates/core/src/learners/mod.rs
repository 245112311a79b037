//! Learning algorithms compared by the benchmark.

pub mod forest;
pub mod metrics;
pub mod nn;
pub mod preprocess;
pub mod svm;

pub use forest::{train_forest, ForestModel, TreeParams};
pub use metrics::{accuracy, r_squared};
pub use nn::{nn_predict, simkern_nn_predict};
pub use preprocess::{one_hot, scale_features, FeatureScaler};
pub use svm::{train_svc, train_svc_binary, train_svr, KernelSpec, SmoConfig, SvcModel, SvmError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Task {
    Classification,
    Regression,
}

/// Feature matrix with outcomes. Class labels are stored as small integers
/// in `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub categorical: Vec<bool>,
    pub task: Task,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }
}
