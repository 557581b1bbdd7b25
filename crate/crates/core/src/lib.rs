//! Survival-analysis pipeline over longitudinal report embeddings.
//!
//! The crate turns per-patient sequences of timestamped embedding vectors
//! into truncated path-signature features and fits an L1-penalized Cox
//! proportional-hazards model on them, with a censoring-aware evaluation
//! suite and a synthetic-cohort generator for end-to-end verification.
//!
//! Stages, in pipeline order:
//!
//! - [`ingest`] — load, validate, deduplicate, mask and split cohorts
//! - [`embedding`] — smooth-inverse-frequency aggregation of word vectors
//! - [`compression`] — PCA fit on training embeddings, projection to `p_bar`
//! - [`signature`] — truncated tensor-algebra signatures of time-augmented paths
//! - [`cox`] — LASSO-penalized partial likelihood, Breslow baseline, prediction
//! - [`metrics`] — C-index, Kaplan–Meier, td-AUC, Brier/IBS, correlations
//! - [`synthetic`] — proportional-hazards cohort generator with known truth

pub mod compression;
pub mod cox;
pub mod embedding;
pub mod ingest;
pub mod metrics;
pub mod rng;
pub mod signature;
pub mod stepfn;
pub mod synthetic;
pub mod testkit;

pub use ingest::{Cohort, InputMode, Patient, ReportEvent, ReportPayload, SurvivalOutcome};
pub use stepfn::StepFunction;
