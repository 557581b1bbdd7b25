//! Pipeline orchestration for the `sigsurv` CLI: configuration, lambda
//! selection with cross-validation, end-to-end runs, naive baselines and
//! run manifests.

pub mod config;
pub mod gridsearch;
pub mod manifest;
pub mod pipeline;
pub mod report;
