//! Per-node causal effect estimation for graph-structured cohorts.
//!
//! The library trains a two-layer graph convolutional classifier over
//! subjects that share one weighted node graph, then estimates each
//! node's direct effect on the predicted class distribution by
//! simulated intervention: sever the node's edges, clamp its value at
//! low and high reference levels, and contrast the model's predictions.
//! Confounding through the remaining nodes and subject covariates is
//! handled by adjustment vectors (covariates plus per-node principal
//! component summaries of the other nodes). Cross-validated estimates
//! come with bootstrap confidence intervals and baseline comparisons,
//! and a synthetic structural causal model with a closed-form oracle
//! validates the whole pipeline.
//!
//! Modules:
//! - [`graph_data`]: cohort containers, CSV I/O, scaling, graph
//!   thresholding and normalization, stratified folds.
//! - [`synth_scm`]: synthetic cohort generator with ground-truth
//!   interventional effects.
//! - [`gcn_model`]: the classifier, baselines, training loop, and
//!   checkpointing.
//! - [`backdoor`]: per-node adjustment bases.
//! - [`intervention`]: graph surgery, reference levels, and contrast
//!   computation.
//! - [`inference`]: cross-validated pipeline, bootstrap intervals,
//!   rankings, and report artifacts.

pub mod backdoor;
pub mod error;
pub mod gcn_model;
pub mod graph_data;
pub mod inference;
pub mod intervention;
pub mod linalg;
pub mod seeding;
pub mod synth_scm;

pub use error::{CoreError, Result};
