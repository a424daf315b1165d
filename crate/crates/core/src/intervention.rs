//! Simulated node interventions: graph surgery, reference levels, and
//! prediction contrasts.
//!
//! Intervening on node j severs its edges (so no information flows
//! between node j and the rest of the graph), clamps its standardized
//! feature at a low and a high reference level, and contrasts the
//! trained model's mean predicted class probabilities between the two
//! levels. Reference levels are percentiles of the node's observed
//! values after winsorizing at the (1%, 99%) quantiles, computed on the
//! same evaluation subjects the contrast averages over.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::gcn_model::TrainedModel;
use crate::graph_data::normalize_adjacency;
use crate::linalg::percentile;

/// How the propagation matrix is rebuilt after severing a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeverMode {
    /// Re-normalize the severed raw adjacency (canonical): surviving
    /// nodes lose the severed node's mass and are re-balanced.
    Renormalize,
    /// Keep the original normalized entries among surviving nodes;
    /// only zero the severed row/column and reset its self-loop.
    Preserve,
}

/// Zeroes row and column `node_id` of a raw adjacency matrix.
pub fn sever_node(raw_adjacency: &Array2<f64>, node_id: usize) -> Result<Array2<f64>> {
    let p = raw_adjacency.nrows();
    if raw_adjacency.ncols() != p {
        return Err(CoreError::data("sever: adjacency must be square"));
    }
    if node_id >= p {
        return Err(CoreError::data(format!(
            "sever: node {node_id} outside 0..{p}"
        )));
    }
    let mut out = raw_adjacency.clone();
    for i in 0..p {
        out[[i, node_id]] = 0.0;
        out[[node_id, i]] = 0.0;
    }
    Ok(out)
}

/// Propagation matrix after severing `node_id`.
///
/// An isolated node keeps only its self-loop, so in both modes row j of
/// the result is the j-th unit vector.
pub fn severed_propagation(
    raw_adjacency: &Array2<f64>,
    node_id: usize,
    mode: SeverMode,
) -> Result<Array2<f64>> {
    match mode {
        SeverMode::Renormalize => normalize_adjacency(&sever_node(raw_adjacency, node_id)?),
        SeverMode::Preserve => {
            let p = raw_adjacency.nrows();
            if node_id >= p {
                return Err(CoreError::data(format!(
                    "sever: node {node_id} outside 0..{p}"
                )));
            }
            let mut prop = normalize_adjacency(raw_adjacency)?;
            for i in 0..p {
                prop[[i, node_id]] = 0.0;
                prop[[node_id, i]] = 0.0;
            }
            prop[[node_id, node_id]] = 1.0;
            Ok(prop)
        }
    }
}

/// Low/high clamping levels from observed node values: winsorize at the
/// (1%, 99%) quantiles, then take the `pct_lo`/`pct_hi` percentiles.
///
/// Errors when the contrast is degenerate (coinciding levels), naming
/// the node.
pub fn compute_levels(
    values: &[f64],
    pct_lo: f64,
    pct_hi: f64,
    node_label: &str,
) -> Result<(f64, f64)> {
    if !(0.0 < pct_lo && pct_lo < pct_hi && pct_hi < 100.0) {
        return Err(CoreError::config(format!(
            "levels: percentiles ({pct_lo}, {pct_hi}) must satisfy 0 < lo < hi < 100"
        )));
    }
    let q01 = percentile(values, 0.01)?;
    let q99 = percentile(values, 0.99)?;
    let clipped: Vec<f64> = values.iter().map(|&v| v.clamp(q01, q99)).collect();
    let x_lo = percentile(&clipped, pct_lo / 100.0)?;
    let x_hi = percentile(&clipped, pct_hi / 100.0)?;
    if !(x_hi > x_lo) {
        return Err(CoreError::data(format!(
            "no interventional contrast possible for node {node_label}: \
             reference levels coincide ({x_lo})"
        )));
    }
    Ok((x_lo, x_hi))
}

/// Per-subject class-probability contrasts for one node intervention.
///
/// For every evaluation subject, node `node_id`'s feature is clamped at
/// `x_hi` and at `x_lo` under the severed propagation matrix; the
/// result row is `p(class | do(x_hi)) - p(class | do(x_lo))`. The mean
/// over rows is the node's effect estimate; keeping rows separate lets
/// the bootstrap resample subjects without re-running the model.
pub fn node_contrasts(
    model: &TrainedModel,
    severed: &Array2<f64>,
    x_eval: &Array2<f64>,
    c_eval: &Array2<f64>,
    node_id: usize,
    x_lo: f64,
    x_hi: f64,
) -> Result<Array2<f64>> {
    let p = x_eval.ncols();
    if node_id >= p {
        return Err(CoreError::data(format!(
            "contrast: node {node_id} outside 0..{p}"
        )));
    }
    let mut x_hi_m = x_eval.clone();
    let mut x_lo_m = x_eval.clone();
    for i in 0..x_eval.nrows() {
        x_hi_m[[i, node_id]] = x_hi;
        x_lo_m[[i, node_id]] = x_lo;
    }
    let probs_hi = model.predict_batch_with(severed, &x_hi_m, c_eval)?;
    let probs_lo = model.predict_batch_with(severed, &x_lo_m, c_eval)?;
    Ok(probs_hi - probs_lo)
}

/// Column means of a per-subject contrast matrix: the averaged effect
/// on each class probability.
pub fn mean_contrast(contrasts: &Array2<f64>) -> [f64; 3] {
    let n = contrasts.nrows() as f64;
    let mut out = [0.0f64; 3];
    for row in contrasts.rows() {
        for k in 0..3 {
            out[k] += row[k];
        }
    }
    for v in out.iter_mut() {
        *v /= n;
    }
    out
}
