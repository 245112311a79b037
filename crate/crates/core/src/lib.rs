//! Simulation-derived similarity kernels.
//!
//! The crate generates ground-truth datasets from parameterized simulations,
//! turns ensembles of perturbed simulations into pairwise sample-similarity
//! kernels, and benchmarks kernelized learners against feature-based ones.

pub mod harness;
pub mod learners;
pub mod paramfile;
pub mod pipeline;
pub mod randspec;
pub mod seed;
pub mod simkernel;
pub mod simmodels;
