//! Two-layer graph convolutional classifier with a covariate branch.
//!
//! Architecture, for one subject with node features `x` (length p) and
//! covariate input `c` (length q'):
//!
//! ```text
//! H1 = ReLU(Ã x W0 + b0)           p x d    (dropout in train mode)
//! H2 = ReLU(Ã H1 W1 + b1)          p x d    (dropout in train mode)
//! z  = column mean of H2           d        (global mean pooling)
//! zc = ReLU(c Wc + bc)             d_c
//! probs = softmax([z ; zc] Wo + bo)
//! ```
//!
//! Dropout is inverted (masks scaled by 1/(1-r) at train time). Optional
//! batch normalization standardizes each hidden unit of the two graph
//! layers over the batch (no learned affine); evaluation uses statistics
//! recomputed over the full training set after each epoch's update.
//! The loss is mean cross-entropy plus a ridge penalty on the weight
//! matrices (biases excluded), optimized by Adam with bias correction.
//! All gradients are derived analytically; training is single-threaded
//! and bit-deterministic for a fixed seed.

use ndarray::{s, Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::graph_data::{FoldSplit, ScalerState};
use crate::seeding::stream_rng;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const BN_EPS: f64 = 1e-5;

/// Checkpoint schema version.
pub const CHECKPOINT_VERSION: &str = "causal-gcn-ckpt/1";

/// Training hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Hidden width d of both graph layers.
    pub hidden_dim: usize,
    /// Covariate embedding width d_c.
    pub covariate_embed_dim: usize,
    /// Dropout rate r in [0, 1).
    pub dropout: f64,
    /// Adam learning rate.
    pub learning_rate: f64,
    /// Ridge coefficient on weight matrices.
    pub ridge: f64,
    /// Epoch count T.
    pub epochs: usize,
    /// Per-step batch size; `None` trains full-batch.
    pub batch_size: Option<usize>,
    /// Optional per-hidden-unit batch normalization.
    pub batchnorm: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden_dim: 64,
            covariate_embed_dim: 16,
            dropout: 0.5,
            learning_rate: 1e-3,
            ridge: 1e-4,
            epochs: 200,
            batch_size: None,
            batchnorm: false,
        }
    }
}

impl TrainConfig {
    /// Checks hyperparameter ranges.
    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 || self.covariate_embed_dim == 0 {
            return Err(CoreError::config("train: layer widths must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(CoreError::config("train: dropout must be in [0, 1)"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(CoreError::config("train: learning rate must be positive"));
        }
        if !(self.ridge > 0.0) {
            return Err(CoreError::config("train: ridge must be positive"));
        }
        if self.batch_size == Some(0) {
            return Err(CoreError::config("train: batch size must be positive"));
        }
        Ok(())
    }
}

/// All learnable tensors; also reused as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnParams {
    pub w0: Array2<f64>, // 1 x d
    pub b0: Array1<f64>, // d
    pub w1: Array2<f64>, // d x d
    pub b1: Array1<f64>, // d
    pub wc: Array2<f64>, // q' x d_c
    pub bc: Array1<f64>, // d_c
    pub wo: Array2<f64>, // (d + d_c) x 3
    pub bo: Array1<f64>, // 3
}

fn glorot(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let s = (6.0 / (rows + cols) as f64).sqrt();
    let mut m = Array2::<f64>::zeros((rows, cols));
    for v in m.iter_mut() {
        *v = rng.random_range(-s..s);
    }
    m
}

impl GcnParams {
    /// Uniform Glorot-style init of all weight matrices, zero biases.
    pub fn init(hidden_dim: usize, covariate_embed_dim: usize, q_in: usize, rng: &mut ChaCha8Rng) -> Self {
        let d = hidden_dim;
        let dc = covariate_embed_dim;
        GcnParams {
            w0: glorot(1, d, rng),
            b0: Array1::zeros(d),
            w1: glorot(d, d, rng),
            b1: Array1::zeros(d),
            wc: glorot(q_in, dc, rng),
            bc: Array1::zeros(dc),
            wo: glorot(d + dc, 3, rng),
            bo: Array1::zeros(3),
        }
    }

    /// Same shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        GcnParams {
            w0: Array2::zeros(self.w0.raw_dim()),
            b0: Array1::zeros(self.b0.raw_dim()),
            w1: Array2::zeros(self.w1.raw_dim()),
            b1: Array1::zeros(self.b1.raw_dim()),
            wc: Array2::zeros(self.wc.raw_dim()),
            bc: Array1::zeros(self.bc.raw_dim()),
            wo: Array2::zeros(self.wo.raw_dim()),
            bo: Array1::zeros(self.bo.raw_dim()),
        }
    }

    /// Hidden width d.
    pub fn hidden_dim(&self) -> usize {
        self.w0.ncols()
    }

    /// Covariate embedding width d_c.
    pub fn covariate_embed_dim(&self) -> usize {
        self.wc.ncols()
    }

    /// Covariate input width q'.
    pub fn covariate_input_dim(&self) -> usize {
        self.wc.nrows()
    }

    /// Shape consistency and finiteness.
    pub fn validate(&self) -> Result<()> {
        let d = self.hidden_dim();
        let dc = self.covariate_embed_dim();
        let ok = self.b0.len() == d
            && self.w1.nrows() == d
            && self.w1.ncols() == d
            && self.b1.len() == d
            && self.bc.len() == dc
            && self.wo.nrows() == d + dc
            && self.wo.ncols() == 3
            && self.bo.len() == 3
            && self.w0.nrows() == 1;
        if !ok {
            return Err(CoreError::config("params: inconsistent shapes"));
        }
        let finite = self.w0.iter().all(|v| v.is_finite())
            && self.b0.iter().all(|v| v.is_finite())
            && self.w1.iter().all(|v| v.is_finite())
            && self.b1.iter().all(|v| v.is_finite())
            && self.wc.iter().all(|v| v.is_finite())
            && self.bc.iter().all(|v| v.is_finite())
            && self.wo.iter().all(|v| v.is_finite())
            && self.bo.iter().all(|v| v.is_finite());
        if !finite {
            return Err(CoreError::numeric("params: non-finite parameter"));
        }
        Ok(())
    }
}

/// Batch statistics used by batch normalization at evaluation time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnStats {
    pub mean1: Vec<f64>,
    pub var1: Vec<f64>,
    pub mean2: Vec<f64>,
    pub var2: Vec<f64>,
}

/// Forward-pass mode.
pub enum Mode<'a> {
    /// Samples dropout masks from the rng; batchnorm (if enabled) uses
    /// batch statistics.
    Train {
        dropout: f64,
        rng: &'a mut ChaCha8Rng,
        batchnorm: bool,
    },
    /// No dropout; batchnorm (if stats given) uses stored statistics.
    Eval { bn: Option<&'a BnStats> },
}

/// Everything the backward pass needs from one batched forward.
pub struct ForwardCache {
    n: usize,
    p: usize,
    /// Ã x per subject, flattened to length n*p (subject-major).
    ax: Array1<f64>,
    /// Layer-1 pre-activations (post-batchnorm when enabled), (n*p) x d.
    a1: Array2<f64>,
    m1: Option<Array2<f64>>,
    /// Ã H1d per subject, (n*p) x d.
    ah: Array2<f64>,
    a2: Array2<f64>,
    m2: Option<Array2<f64>>,
    /// Pooled graph embedding, n x d.
    z: Array2<f64>,
    /// Covariate pre-activations, n x d_c.
    ac: Array2<f64>,
    zc: Array2<f64>,
    /// Softmax probabilities, n x 3.
    pub probs: Array2<f64>,
    /// Batch statistics actually used (train-mode batchnorm).
    bn_used: Option<BnStats>,
}

fn dropout_mask(rows: usize, cols: usize, rate: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let scale = 1.0 / (1.0 - rate);
    let mut m = Array2::<f64>::zeros((rows, cols));
    for v in m.iter_mut() {
        *v = if rng.random_range(0.0..1.0f64) < 1.0 - rate {
            scale
        } else {
            0.0
        };
    }
    m
}

/// Column mean/population-variance over the rows of a tall matrix.
fn bn_moments(m: &Array2<f64>) -> (Vec<f64>, Vec<f64>) {
    let rows = m.nrows() as f64;
    let mean: Vec<f64> = m.sum_axis(Axis(0)).iter().map(|v| v / rows).collect();
    let mut var = vec![0.0; m.ncols()];
    for r in 0..m.nrows() {
        for (c, v) in var.iter_mut().enumerate() {
            let d = m[[r, c]] - mean[c];
            *v += d * d;
        }
    }
    for v in var.iter_mut() {
        *v /= rows;
    }
    (mean, var)
}

fn bn_apply(m: &mut Array2<f64>, mean: &[f64], var: &[f64]) {
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            m[[r, c]] = (m[[r, c]] - mean[c]) / (var[c] + BN_EPS).sqrt();
        }
    }
}

/// Backward through per-unit batch normalization (no affine):
/// given g = dL/d(normalized), returns dL/d(raw input).
fn bn_backward(g: &Array2<f64>, normalized: &Array2<f64>, var: &[f64]) -> Array2<f64> {
    let rows = g.nrows() as f64;
    let cols = g.ncols();
    let mut g_mean = vec![0.0; cols];
    let mut gx_mean = vec![0.0; cols];
    for r in 0..g.nrows() {
        for c in 0..cols {
            g_mean[c] += g[[r, c]];
            gx_mean[c] += g[[r, c]] * normalized[[r, c]];
        }
    }
    for c in 0..cols {
        g_mean[c] /= rows;
        gx_mean[c] /= rows;
    }
    let mut out = Array2::<f64>::zeros(g.raw_dim());
    for r in 0..g.nrows() {
        for c in 0..cols {
            let s = (var[c] + BN_EPS).sqrt();
            out[[r, c]] = (g[[r, c]] - g_mean[c] - normalized[[r, c]] * gx_mean[c]) / s;
        }
    }
    out
}

fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut probs = logits.clone();
    for mut row in probs.rows_mut() {
        let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    probs
}

/// Batched forward pass over subjects sharing one propagation matrix.
///
/// `x` is N x p (subject rows), `c` is N x q'. Returns per-subject class
/// probabilities and the cache for the backward pass.
pub fn forward_batch(
    params: &GcnParams,
    propagation: &Array2<f64>,
    x: &Array2<f64>,
    c: &Array2<f64>,
    mode: Mode<'_>,
) -> Result<ForwardCache> {
    let n = x.nrows();
    let p = x.ncols();
    let d = params.hidden_dim();
    if n == 0 {
        return Err(CoreError::data("forward: empty batch"));
    }
    if propagation.nrows() != p || propagation.ncols() != p {
        return Err(CoreError::config(format!(
            "forward: propagation is {}x{} but features have {p} nodes",
            propagation.nrows(),
            propagation.ncols()
        )));
    }
    if c.nrows() != n || c.ncols() != params.covariate_input_dim() {
        return Err(CoreError::config(format!(
            "forward: covariate input is {}x{}, expected {}x{}",
            c.nrows(),
            c.ncols(),
            n,
            params.covariate_input_dim()
        )));
    }

    let (is_train, use_bn, dropout) = match &mode {
        Mode::Train {
            dropout, batchnorm, ..
        } => (true, *batchnorm, *dropout),
        Mode::Eval { bn } => (false, bn.is_some(), 0.0),
    };

    // Ã x for every subject: one (p x p) x (p x N) product.
    let ax_cols = propagation.dot(&x.t()); // p x N
    let mut ax = Array1::<f64>::zeros(n * p);
    for i in 0..n {
        for r in 0..p {
            ax[i * p + r] = ax_cols[[r, i]];
        }
    }

    // Layer 1 pre-activation: rank-1 per row.
    let mut a1 = Array2::<f64>::zeros((n * p, d));
    for row in 0..n * p
    {
        let a = ax[row];
        for u in 0..d {
            a1[[row, u]] = a * params.w0[[0, u]] + params.b0[u];
        }
    }

    let mut bn1_stats: Option<(Vec<f64>, Vec<f64>)> = None;
    if use_bn {
        let (mean, var) = match &mode {
            Mode::Train { .. } => bn_moments(&a1),
            Mode::Eval { bn } => {
                let s = bn.unwrap();
                (s.mean1.clone(), s.var1.clone())
            }
        };
        bn_apply(&mut a1, &mean, &var);
        bn1_stats = Some((mean, var));
    }

    let mut h1d = a1.mapv(|v| v.max(0.0));
    let mut m1 = None;
    if is_train && dropout > 0.0 {
        if let Mode::Train { rng, .. } = mode {
            let mask = dropout_mask(n * p, d, dropout, rng);
            h1d *= &mask;
            m1 = Some(mask);
            // Second mask drawn below from the same stream.
            let ah = propagate_blocks(propagation, &h1d, n, p);
            let mut a2 = ah.dot(&params.w1);
            for mut row in a2.rows_mut() {
                row += &params.b1;
            }
            let mut bn2_stats: Option<(Vec<f64>, Vec<f64>)> = None;
            if use_bn {
                let (mean, var) = bn_moments(&a2);
                bn_apply(&mut a2, &mean, &var);
                bn2_stats = Some((mean, var));
            }
            let mut h2d = a2.mapv(|v| v.max(0.0));
            let mask2 = dropout_mask(n * p, d, dropout, rng);
            h2d *= &mask2;
            return finish_forward(
                params, n, p, d, ax, a1, m1, ah, a2, Some(mask2), h2d, c,
                bn1_stats, bn2_stats,
            );
        }
        unreachable!();
    }

    let ah = propagate_blocks(propagation, &h1d, n, p);
    let mut a2 = ah.dot(&params.w1);
    for mut row in a2.rows_mut() {
        row += &params.b1;
    }
    let mut bn2_stats: Option<(Vec<f64>, Vec<f64>)> = None;
    if use_bn {
        let (mean, var) = match &mode {
            Mode::Train { .. } => bn_moments(&a2),
            Mode::Eval { bn } => {
                let s = bn.unwrap();
                (s.mean2.clone(), s.var2.clone())
            }
        };
        bn_apply(&mut a2, &mean, &var);
        bn2_stats = Some((mean, var));
    }
    let h2d = a2.mapv(|v| v.max(0.0));
    finish_forward(
        params, n, p, d, ax, a1, m1, ah, a2, None, h2d, c, bn1_stats, bn2_stats,
    )
}

/// Applies the propagation matrix to each subject's p x d block.
fn propagate_blocks(propagation: &Array2<f64>, tall: &Array2<f64>, n: usize, p: usize) -> Array2<f64> {
    let d = tall.ncols();
    let mut out = Array2::<f64>::zeros((n * p, d));
    for i in 0..n {
        let block = tall.slice(s![i * p..(i + 1) * p, ..]);
        let prod = propagation.dot(&block);
        out.slice_mut(s![i * p..(i + 1) * p, ..]).assign(&prod);
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn finish_forward(
    params: &GcnParams,
    n: usize,
    p: usize,
    d: usize,
    ax: Array1<f64>,
    a1: Array2<f64>,
    m1: Option<Array2<f64>>,
    ah: Array2<f64>,
    a2: Array2<f64>,
    m2: Option<Array2<f64>>,
    h2d: Array2<f64>,
    c: &Array2<f64>,
    bn1: Option<(Vec<f64>, Vec<f64>)>,
    bn2: Option<(Vec<f64>, Vec<f64>)>,
) -> Result<ForwardCache> {
    // Global mean pooling over nodes.
    let mut z = Array2::<f64>::zeros((n, d));
    for i in 0..n {
        let block = h2d.slice(s![i * p..(i + 1) * p, ..]);
        let mean = block.sum_axis(Axis(0)) / p as f64;
        z.row_mut(i).assign(&mean);
    }

    let mut ac = c.dot(&params.wc);
    for mut row in ac.rows_mut() {
        row += &params.bc;
    }
    let zc = ac.mapv(|v| v.max(0.0));

    let mut logits = z.dot(&params.wo.slice(s![..d, ..])) + zc.dot(&params.wo.slice(s![d.., ..]));
    for mut row in logits.rows_mut() {
        row += &params.bo;
    }
    let probs = softmax_rows(&logits);

    if probs.iter().any(|v| !v.is_finite()) {
        // Slow diagnostic path: attribute the first non-finite stage.
        let layer = if a1.iter().any(|v| !v.is_finite()) {
            "graph layer 1"
        } else if a2.iter().any(|v| !v.is_finite()) {
            "graph layer 2"
        } else if ac.iter().any(|v| !v.is_finite()) {
            "covariate layer"
        } else {
            "output layer"
        };
        return Err(CoreError::numeric(format!(
            "non-finite activation in {layer}"
        )));
    }

    let bn_used = match (bn1, bn2) {
        (Some((mean1, var1)), Some((mean2, var2))) => Some(BnStats {
            mean1,
            var1,
            mean2,
            var2,
        }),
        _ => None,
    };

    Ok(ForwardCache {
        n,
        p,
        ax,
        a1,
        m1,
        ah,
        a2,
        m2,
        z,
        ac,
        zc,
        probs,
        bn_used,
    })
}

/// Single-subject forward pass; see [`forward_batch`].
pub fn forward(
    params: &GcnParams,
    propagation: &Array2<f64>,
    x: &Array1<f64>,
    c: &Array1<f64>,
    mode: Mode<'_>,
) -> Result<([f64; 3], ForwardCache)> {
    let xb = x.clone().insert_axis(Axis(0));
    let cb = c.clone().insert_axis(Axis(0));
    let cache = forward_batch(params, propagation, &xb, &cb, mode)?;
    let probs = [cache.probs[[0, 0]], cache.probs[[0, 1]], cache.probs[[0, 2]]];
    Ok((probs, cache))
}

/// Mean cross-entropy of the cached probabilities against labels.
fn mean_cross_entropy(probs: &Array2<f64>, labels: &[usize]) -> f64 {
    let n = labels.len();
    let mut loss = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        loss -= probs[[i, y]].max(1e-300).ln();
    }
    loss / n as f64
}

fn ridge_penalty(params: &GcnParams, lambda: f64) -> f64 {
    let sq = |m: &Array2<f64>| m.iter().map(|v| v * v).sum::<f64>();
    lambda * (sq(&params.w0) + sq(&params.w1) + sq(&params.wc) + sq(&params.wo))
}

/// Loss and analytic gradients over one batch.
///
/// The cache must come from a forward pass over exactly this batch; the
/// dropout masks inside it stay fixed for the backward step. Returns
/// mean cross-entropy plus the ridge term and gradients matching
/// [`GcnParams`].
pub fn loss_and_gradients(
    params: &GcnParams,
    propagation: &Array2<f64>,
    cache: &ForwardCache,
    c: &Array2<f64>,
    labels: &[usize],
    lambda: f64,
) -> Result<(f64, GcnParams)> {
    let n = cache.n;
    let p = cache.p;
    let d = params.hidden_dim();
    if labels.len() != n {
        return Err(CoreError::data("gradients: label count != batch size"));
    }
    if lambda < 0.0 {
        return Err(CoreError::config("gradients: ridge must be >= 0"));
    }
    let loss = mean_cross_entropy(&cache.probs, labels) + ridge_penalty(params, lambda);

    let mut grads = params.zeros_like();

    // Softmax + cross-entropy: dlogits = (probs - onehot) / n.
    let mut dlogits = cache.probs.clone();
    for (i, &y) in labels.iter().enumerate() {
        dlogits[[i, y]] -= 1.0;
    }
    dlogits /= n as f64;

    // Output layer.
    grads.wo.slice_mut(s![..d, ..]).assign(&cache.z.t().dot(&dlogits));
    grads.wo.slice_mut(s![d.., ..]).assign(&cache.zc.t().dot(&dlogits));
    grads.bo.assign(&dlogits.sum_axis(Axis(0)));

    let ds = dlogits.dot(&params.wo.t()); // n x (d + dc)
    let dz = ds.slice(s![.., ..d]).to_owned();
    let dzc = ds.slice(s![.., d..]).to_owned();

    // Covariate branch.
    let mut dac = dzc;
    for i in 0..n {
        for u in 0..params.covariate_embed_dim() {
            if cache.ac[[i, u]] <= 0.0 {
                dac[[i, u]] = 0.0;
            }
        }
    }
    grads.wc.assign(&c.t().dot(&dac));
    grads.bc.assign(&dac.sum_axis(Axis(0)));

    // Pooling: every node row receives dz / p.
    let mut dh2d = Array2::<f64>::zeros((n * p, d));
    for i in 0..n {
        for r in 0..p {
            for u in 0..d {
                dh2d[[i * p + r, u]] = dz[[i, u]] / p as f64;
            }
        }
    }
    if let Some(m2) = &cache.m2 {
        dh2d *= m2;
    }
    // ReLU at layer 2 (a2 holds the post-batchnorm pre-activation).
    for r in 0..n * p {
        for u in 0..d {
            if cache.a2[[r, u]] <= 0.0 {
                dh2d[[r, u]] = 0.0;
            }
        }
    }
    let da2 = if let Some(bn) = &cache.bn_used {
        bn_backward(&dh2d, &cache.a2, &bn.var2)
    } else {
        dh2d
    };

    grads.w1.assign(&cache.ah.t().dot(&da2));
    grads.b1.assign(&da2.sum_axis(Axis(0)));

    let dah = da2.dot(&params.w1.t());
    // Ã is symmetric, so the adjoint of block propagation is itself.
    let mut dh1d = propagate_blocks(propagation, &dah, n, p);
    if let Some(m1) = &cache.m1 {
        dh1d *= m1;
    }
    for r in 0..n * p {
        for u in 0..d {
            if cache.a1[[r, u]] <= 0.0 {
                dh1d[[r, u]] = 0.0;
            }
        }
    }
    let da1 = if let Some(bn) = &cache.bn_used {
        bn_backward(&dh1d, &cache.a1, &bn.var1)
    } else {
        dh1d
    };

    for u in 0..d {
        let mut acc = 0.0;
        for r in 0..n * p {
            acc += cache.ax[r] * da1[[r, u]];
        }
        grads.w0[[0, u]] = acc;
    }
    grads.b0.assign(&da1.sum_axis(Axis(0)));

    // Ridge gradient on weight matrices only.
    if lambda > 0.0 {
        grads.w0.scaled_add(2.0 * lambda, &params.w0);
        grads.w1.scaled_add(2.0 * lambda, &params.w1);
        grads.wc.scaled_add(2.0 * lambda, &params.wc);
        grads.wo.scaled_add(2.0 * lambda, &params.wo);
    }

    Ok((loss, grads))
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

fn adam_update_mat(
    w: &mut Array2<f64>,
    g: &Array2<f64>,
    m: &mut Array2<f64>,
    v: &mut Array2<f64>,
    t: f64,
    lr: f64,
) {
    let c1 = 1.0 - BETA1.powf(t);
    let c2 = 1.0 - BETA2.powf(t);
    ndarray::Zip::from(w).and(g).and(m).and(v).for_each(|w, &g, m, v| {
        *m = BETA1 * *m + (1.0 - BETA1) * g;
        *v = BETA2 * *v + (1.0 - BETA2) * g * g;
        let mh = *m / c1;
        let vh = *v / c2;
        *w -= lr * mh / (vh.sqrt() + ADAM_EPS);
    });
}

fn adam_update_vec(
    w: &mut Array1<f64>,
    g: &Array1<f64>,
    m: &mut Array1<f64>,
    v: &mut Array1<f64>,
    t: f64,
    lr: f64,
) {
    let c1 = 1.0 - BETA1.powf(t);
    let c2 = 1.0 - BETA2.powf(t);
    ndarray::Zip::from(w).and(g).and(m).and(v).for_each(|w, &g, m, v| {
        *m = BETA1 * *m + (1.0 - BETA1) * g;
        *v = BETA2 * *v + (1.0 - BETA2) * g * g;
        let mh = *m / c1;
        let vh = *v / c2;
        *w -= lr * mh / (vh.sqrt() + ADAM_EPS);
    });
}

/// First and second moment accumulators for Adam over [`GcnParams`].
pub struct AdamState {
    m: GcnParams,
    v: GcnParams,
    t: usize,
}

impl AdamState {
    pub fn new(params: &GcnParams) -> Self {
        AdamState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    /// One Adam update with bias correction.
    pub fn step(&mut self, params: &mut GcnParams, grads: &GcnParams, lr: f64) {
        self.t += 1;
        let t = self.t as f64;
        adam_update_mat(&mut params.w0, &grads.w0, &mut self.m.w0, &mut self.v.w0, t, lr);
        adam_update_vec(&mut params.b0, &grads.b0, &mut self.m.b0, &mut self.v.b0, t, lr);
        adam_update_mat(&mut params.w1, &grads.w1, &mut self.m.w1, &mut self.v.w1, t, lr);
        adam_update_vec(&mut params.b1, &grads.b1, &mut self.m.b1, &mut self.v.b1, t, lr);
        adam_update_mat(&mut params.wc, &grads.wc, &mut self.m.wc, &mut self.v.wc, t, lr);
        adam_update_vec(&mut params.bc, &grads.bc, &mut self.m.bc, &mut self.v.bc, t, lr);
        adam_update_mat(&mut params.wo, &grads.wo, &mut self.m.wo, &mut self.v.wo, t, lr);
        adam_update_vec(&mut params.bo, &grads.bo, &mut self.m.bo, &mut self.v.bo, t, lr);
    }
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// A trained classifier bound to its propagation matrix and scaler.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub params: GcnParams,
    pub propagation: Array2<f64>,
    pub scaler: ScalerState,
    pub config: TrainConfig,
    pub val_loss_history: Vec<f64>,
    /// 1-based epoch whose parameters are retained; 0 when untrained.
    pub best_epoch: usize,
    /// Evaluation-time batchnorm statistics (when enabled).
    pub bn: Option<BnStats>,
    /// Seed the training run was derived from.
    pub seed: u64,
}

impl TrainedModel {
    /// Eval-mode probabilities for a batch, against an arbitrary
    /// propagation matrix (used by interventions).
    pub fn predict_batch_with(
        &self,
        propagation: &Array2<f64>,
        x: &Array2<f64>,
        c: &Array2<f64>,
    ) -> Result<Array2<f64>> {
        let cache = forward_batch(
            &self.params,
            propagation,
            x,
            c,
            Mode::Eval {
                bn: self.bn.as_ref(),
            },
        )?;
        Ok(cache.probs)
    }

    /// Eval-mode probabilities with the model's own propagation matrix.
    pub fn predict_batch(&self, x: &Array2<f64>, c: &Array2<f64>) -> Result<Array2<f64>> {
        let cache = forward_batch(
            &self.params,
            &self.propagation,
            x,
            c,
            Mode::Eval { bn: self.bn.as_ref() },
        )?;
        Ok(cache.probs)
    }
}

fn gather_rows(m: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    let mut out = Array2::<f64>::zeros((idx.len(), m.ncols()));
    for (r, &i) in idx.iter().enumerate() {
        out.row_mut(r).assign(&m.row(i));
    }
    out
}

fn gather_labels(labels: &[usize], idx: &[usize]) -> Vec<usize> {
    idx.iter().map(|&i| labels[i]).collect()
}

/// Refreshes batchnorm statistics over the full training set
/// (dropout off, current parameters).
fn refresh_bn_stats(
    params: &GcnParams,
    propagation: &Array2<f64>,
    x: &Array2<f64>,
    c: &Array2<f64>,
) -> Result<BnStats> {
    // A train-mode pass with dropout 0 computes batch statistics.
    let mut throwaway = stream_rng(0, "bn-refresh", 0);
    let cache = forward_batch(
        params,
        propagation,
        x,
        c,
        Mode::Train {
            dropout: 0.0,
            rng: &mut throwaway,
            batchnorm: true,
        },
    )?;
    Ok(cache.bn_used.expect("batchnorm stats requested"))
}

/// Trains the classifier on the split's train part, tracking validation
/// loss per epoch and retaining the best-validation-epoch parameters.
///
/// `covariate_input` selects the conditioning: the raw covariates for
/// the single-model path, or per-node adjustment vectors for per-node
/// models. Deterministic for a fixed seed.
#[allow(clippy::too_many_arguments)]
pub fn train(
    features: &Array2<f64>,
    covariate_input: &Array2<f64>,
    labels: &[usize],
    propagation: &Array2<f64>,
    split: &FoldSplit,
    config: &TrainConfig,
    scaler: &ScalerState,
    seed: u64,
) -> Result<TrainedModel> {
    config.validate()?;
    let n = features.nrows();
    if covariate_input.nrows() != n || labels.len() != n {
        return Err(CoreError::data("train: row counts disagree"));
    }
    for &i in split.train_idx.iter().chain(&split.val_idx) {
        if i >= n {
            return Err(CoreError::data("train: split index out of range"));
        }
    }
    if split.train_idx.is_empty() {
        return Err(CoreError::data("train: empty training set"));
    }

    let q_in = covariate_input.ncols();
    let mut init_rng = stream_rng(seed, "gcn-init", 0);
    let mut params = GcnParams::init(config.hidden_dim, config.covariate_embed_dim, q_in, &mut init_rng);
    let mut adam = AdamState::new(&params);
    let mut dropout_rng = stream_rng(seed, "gcn-dropout", 0);
    let mut shuffle_rng = stream_rng(seed, "gcn-batch", 0);

    let x_train = gather_rows(features, &split.train_idx);
    let c_train = gather_rows(covariate_input, &split.train_idx);
    let y_train = gather_labels(labels, &split.train_idx);
    let x_val = gather_rows(features, &split.val_idx);
    let c_val = gather_rows(covariate_input, &split.val_idx);
    let y_val = gather_labels(labels, &split.val_idx);

    let n_train = split.train_idx.len();
    let batch_size = config.batch_size.unwrap_or(n_train).min(n_train);

    let mut bn_stats: Option<BnStats> = if config.batchnorm {
        Some(refresh_bn_stats(&params, propagation, &x_train, &c_train)?)
    } else {
        None
    };

    let mut best_params = params.clone();
    let mut best_bn = bn_stats.clone();
    let mut best_epoch = 0usize;
    let mut best_val = f64::INFINITY;
    let mut val_loss_history = Vec::with_capacity(config.epochs);

    let mut order: Vec<usize> = (0..n_train).collect();
    for epoch in 1..=config.epochs {
        if batch_size < n_train {
            use rand::seq::SliceRandom;
            order.shuffle(&mut shuffle_rng);
        }
        for chunk in order.chunks(batch_size) {
            let xb = gather_rows(&x_train, chunk);
            let cb = gather_rows(&c_train, chunk);
            let yb = gather_labels(&y_train, chunk);
            let cache = forward_batch(
                &params,
                propagation,
                &xb,
                &cb,
                Mode::Train {
                    dropout: config.dropout,
                    rng: &mut dropout_rng,
                    batchnorm: config.batchnorm,
                },
            )
            .map_err(|e| wrap_epoch(e, epoch))?;
            let (loss, grads) =
                loss_and_gradients(&params, propagation, &cache, &cb, &yb, config.ridge)
                    .map_err(|e| wrap_epoch(e, epoch))?;
            if !loss.is_finite() {
                return Err(CoreError::numeric(format!(
                    "training diverged: non-finite loss at epoch {epoch}"
                )));
            }
            adam.step(&mut params, &grads, config.learning_rate);
        }

        if config.batchnorm {
            bn_stats = Some(
                refresh_bn_stats(&params, propagation, &x_train, &c_train)
                    .map_err(|e| wrap_epoch(e, epoch))?,
            );
        }

        if !split.val_idx.is_empty() {
            let cache = forward_batch(
                &params,
                propagation,
                &x_val,
                &c_val,
                Mode::Eval {
                    bn: bn_stats.as_ref(),
                },
            )
            .map_err(|e| wrap_epoch(e, epoch))?;
            let val_loss = mean_cross_entropy(&cache.probs, &y_val);
            if !val_loss.is_finite() {
                return Err(CoreError::numeric(format!(
                    "training diverged: non-finite validation loss at epoch {epoch}"
                )));
            }
            val_loss_history.push(val_loss);
            if val_loss < best_val {
                best_val = val_loss;
                best_params = params.clone();
                best_bn = bn_stats.clone();
                best_epoch = epoch;
            }
        } else {
            // No validation part: keep the final epoch.
            best_params = params.clone();
            best_bn = bn_stats.clone();
            best_epoch = epoch;
        }
    }

    Ok(TrainedModel {
        params: best_params,
        propagation: propagation.clone(),
        scaler: scaler.clone(),
        config: config.clone(),
        val_loss_history,
        best_epoch,
        bn: best_bn,
        seed,
    })
}

fn wrap_epoch(e: CoreError, epoch: usize) -> CoreError {
    match e {
        CoreError::Numeric(msg) => CoreError::Numeric(format!("epoch {epoch}: {msg}")),
        other => other,
    }
}

// ---------------------------------------------------------------------------
// MLP baseline
// ---------------------------------------------------------------------------

/// Baseline multilayer perceptron over flattened `[features ; covariates]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub w1: Array2<f64>, // (p + q) x d
    pub b1: Array1<f64>,
    pub w2: Array2<f64>, // d x d
    pub b2: Array1<f64>,
    pub wo: Array2<f64>, // d x 3
    pub bo: Array1<f64>,
}

impl MlpParams {
    pub fn init(input_dim: usize, hidden_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        MlpParams {
            w1: glorot(input_dim, hidden_dim, rng),
            b1: Array1::zeros(hidden_dim),
            w2: glorot(hidden_dim, hidden_dim, rng),
            b2: Array1::zeros(hidden_dim),
            wo: glorot(hidden_dim, 3, rng),
            bo: Array1::zeros(3),
        }
    }

    fn zeros_like(&self) -> Self {
        MlpParams {
            w1: Array2::zeros(self.w1.raw_dim()),
            b1: Array1::zeros(self.b1.raw_dim()),
            w2: Array2::zeros(self.w2.raw_dim()),
            b2: Array1::zeros(self.b2.raw_dim()),
            wo: Array2::zeros(self.wo.raw_dim()),
            bo: Array1::zeros(self.bo.raw_dim()),
        }
    }
}

struct MlpCache {
    a1: Array2<f64>,
    h1d: Array2<f64>,
    m1: Option<Array2<f64>>,
    a2: Array2<f64>,
    h2d: Array2<f64>,
    m2: Option<Array2<f64>>,
    probs: Array2<f64>,
}

fn mlp_forward(
    params: &MlpParams,
    input: &Array2<f64>,
    dropout: f64,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<MlpCache> {
    let n = input.nrows();
    let d = params.b1.len();
    let mut a1 = input.dot(&params.w1);
    for mut row in a1.rows_mut() {
        row += &params.b1;
    }
    let mut h1d = a1.mapv(|v| v.max(0.0));
    let mut m1 = None;
    let mut m2 = None;
    if let Some(rng) = rng {
        if dropout > 0.0 {
            let mask = dropout_mask(n, d, dropout, rng);
            h1d *= &mask;
            m1 = Some(mask);
            let mut a2 = h1d.dot(&params.w2);
            for mut row in a2.rows_mut() {
                row += &params.b2;
            }
            let mut h2d = a2.mapv(|v| v.max(0.0));
            let mask2 = dropout_mask(n, d, dropout, rng);
            h2d *= &mask2;
            m2 = Some(mask2);
            return mlp_finish(params, a1, h1d, m1, a2, h2d, m2);
        }
    }
    let mut a2 = h1d.dot(&params.w2);
    for mut row in a2.rows_mut() {
        row += &params.b2;
    }
    let h2d = a2.mapv(|v| v.max(0.0));
    mlp_finish(params, a1, h1d, m1, a2, h2d, m2)
}

fn mlp_finish(
    params: &MlpParams,
    a1: Array2<f64>,
    h1d: Array2<f64>,
    m1: Option<Array2<f64>>,
    a2: Array2<f64>,
    h2d: Array2<f64>,
    m2: Option<Array2<f64>>,
) -> Result<MlpCache> {
    let mut logits = h2d.dot(&params.wo);
    for mut row in logits.rows_mut() {
        row += &params.bo;
    }
    let probs = softmax_rows(&logits);
    if probs.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::numeric("non-finite activation in baseline MLP"));
    }
    Ok(MlpCache {
        a1,
        h1d,
        m1,
        a2,
        h2d,
        m2,
        probs,
    })
}

fn mlp_loss_and_gradients(
    params: &MlpParams,
    cache: &MlpCache,
    input: &Array2<f64>,
    labels: &[usize],
    lambda: f64,
) -> (f64, MlpParams) {
    let n = labels.len();
    let sq = |m: &Array2<f64>| m.iter().map(|v| v * v).sum::<f64>();
    let loss = mean_cross_entropy(&cache.probs, labels)
        + lambda * (sq(&params.w1) + sq(&params.w2) + sq(&params.wo));

    let mut grads = params.zeros_like();
    let mut dlogits = cache.probs.clone();
    for (i, &y) in labels.iter().enumerate() {
        dlogits[[i, y]] -= 1.0;
    }
    dlogits /= n as f64;

    grads.wo.assign(&cache.h2d.t().dot(&dlogits));
    grads.bo.assign(&dlogits.sum_axis(Axis(0)));

    let mut dh2d = dlogits.dot(&params.wo.t());
    if let Some(m2) = &cache.m2 {
        dh2d *= m2;
    }
    for r in 0..dh2d.nrows() {
        for c in 0..dh2d.ncols() {
            if cache.a2[[r, c]] <= 0.0 {
                dh2d[[r, c]] = 0.0;
            }
        }
    }
    grads.w2.assign(&cache.h1d.t().dot(&dh2d));
    grads.b2.assign(&dh2d.sum_axis(Axis(0)));

    let mut dh1d = dh2d.dot(&params.w2.t());
    if let Some(m1) = &cache.m1 {
        dh1d *= m1;
    }
    for r in 0..dh1d.nrows() {
        for c in 0..dh1d.ncols() {
            if cache.a1[[r, c]] <= 0.0 {
                dh1d[[r, c]] = 0.0;
            }
        }
    }
    grads.w1.assign(&input.t().dot(&dh1d));
    grads.b1.assign(&dh1d.sum_axis(Axis(0)));

    if lambda > 0.0 {
        grads.w1.scaled_add(2.0 * lambda, &params.w1);
        grads.w2.scaled_add(2.0 * lambda, &params.w2);
        grads.wo.scaled_add(2.0 * lambda, &params.wo);
    }
    (loss, grads)
}

/// Trained MLP baseline.
#[derive(Debug, Clone)]
pub struct MlpModel {
    pub params: MlpParams,
    pub config: TrainConfig,
    pub val_loss_history: Vec<f64>,
    pub best_epoch: usize,
    pub seed: u64,
}

impl MlpModel {
    /// Eval-mode probabilities for `[features ; covariates]` rows.
    pub fn predict_batch(&self, input: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(mlp_forward(&self.params, input, 0.0, None)?.probs)
    }
}

struct MlpAdam {
    m: MlpParams,
    v: MlpParams,
    t: usize,
}

impl MlpAdam {
    fn step(&mut self, params: &mut MlpParams, grads: &MlpParams, lr: f64) {
        self.t += 1;
        let t = self.t as f64;
        adam_update_mat(&mut params.w1, &grads.w1, &mut self.m.w1, &mut self.v.w1, t, lr);
        adam_update_vec(&mut params.b1, &grads.b1, &mut self.m.b1, &mut self.v.b1, t, lr);
        adam_update_mat(&mut params.w2, &grads.w2, &mut self.m.w2, &mut self.v.w2, t, lr);
        adam_update_vec(&mut params.b2, &grads.b2, &mut self.m.b2, &mut self.v.b2, t, lr);
        adam_update_mat(&mut params.wo, &grads.wo, &mut self.m.wo, &mut self.v.wo, t, lr);
        adam_update_vec(&mut params.bo, &grads.bo, &mut self.m.bo, &mut self.v.bo, t, lr);
    }
}

/// Trains the MLP baseline on flattened `[features ; covariates]` rows.
pub fn train_mlp(
    features: &Array2<f64>,
    covariates: &Array2<f64>,
    labels: &[usize],
    split: &FoldSplit,
    config: &TrainConfig,
    seed: u64,
) -> Result<MlpModel> {
    config.validate()?;
    let n = features.nrows();
    let input = {
        let mut m = Array2::<f64>::zeros((n, features.ncols() + covariates.ncols()));
        m.slice_mut(s![.., ..features.ncols()]).assign(features);
        m.slice_mut(s![.., features.ncols()..]).assign(covariates);
        m
    };
    let mut init_rng = stream_rng(seed, "mlp-init", 0);
    let mut params = MlpParams::init(input.ncols(), config.hidden_dim, &mut init_rng);
    let mut adam = MlpAdam {
        m: params.zeros_like(),
        v: params.zeros_like(),
        t: 0,
    };
    let mut dropout_rng = stream_rng(seed, "mlp-dropout", 0);
    let mut shuffle_rng = stream_rng(seed, "mlp-batch", 0);

    let x_train = gather_rows(&input, &split.train_idx);
    let y_train = gather_labels(labels, &split.train_idx);
    let x_val = gather_rows(&input, &split.val_idx);
    let y_val = gather_labels(labels, &split.val_idx);

    let n_train = split.train_idx.len();
    let batch_size = config.batch_size.unwrap_or(n_train).min(n_train);

    let mut best_params = params.clone();
    let mut best_epoch = 0usize;
    let mut best_val = f64::INFINITY;
    let mut history = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..n_train).collect();

    for epoch in 1..=config.epochs {
        if batch_size < n_train {
            use rand::seq::SliceRandom;
            order.shuffle(&mut shuffle_rng);
        }
        for chunk in order.chunks(batch_size) {
            let xb = gather_rows(&x_train, chunk);
            let yb = gather_labels(&y_train, chunk);
            let cache = mlp_forward(&params, &xb, config.dropout, Some(&mut dropout_rng))
                .map_err(|e| wrap_epoch(e, epoch))?;
            let (loss, grads) = mlp_loss_and_gradients(&params, &cache, &xb, &yb, config.ridge);
            if !loss.is_finite() {
                return Err(CoreError::numeric(format!(
                    "baseline MLP diverged at epoch {epoch}"
                )));
            }
            adam.step(&mut params, &grads, config.learning_rate);
        }
        if !split.val_idx.is_empty() {
            let cache = mlp_forward(&params, &x_val, 0.0, None).map_err(|e| wrap_epoch(e, epoch))?;
            let val_loss = mean_cross_entropy(&cache.probs, &y_val);
            history.push(val_loss);
            if val_loss < best_val {
                best_val = val_loss;
                best_params = params.clone();
                best_epoch = epoch;
            }
        } else {
            best_params = params.clone();
            best_epoch = epoch;
        }
    }

    Ok(MlpModel {
        params: best_params,
        config: config.clone(),
        val_loss_history: history,
        best_epoch,
        seed,
    })
}

/// Both baselines: the flattened-input MLP and a fresh GCN of the same
/// architecture trained from an independently derived seed (the vanilla
/// variant never enters the intervention machinery).
#[allow(clippy::too_many_arguments)]
pub fn train_baselines(
    features: &Array2<f64>,
    covariates: &Array2<f64>,
    labels: &[usize],
    propagation: &Array2<f64>,
    split: &FoldSplit,
    config: &TrainConfig,
    scaler: &ScalerState,
    seed: u64,
) -> Result<(MlpModel, TrainedModel)> {
    let mlp = train_mlp(features, covariates, labels, split, config, seed)?;
    let vanilla = train(
        features,
        covariates,
        labels,
        propagation,
        split,
        config,
        scaler,
        seed,
    )?;
    Ok((mlp, vanilla))
}

// ---------------------------------------------------------------------------
// Checkpointing
// ---------------------------------------------------------------------------

/// Row-major matrix with explicit shape, for checkpoint JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixData {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl MatrixData {
    fn from_array(m: &Array2<f64>) -> Self {
        MatrixData {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.iter().copied().collect(),
        }
    }

    fn to_array(&self) -> Result<Array2<f64>> {
        if self.data.len() != self.rows * self.cols {
            return Err(CoreError::data("checkpoint: matrix data length mismatch"));
        }
        Array2::from_shape_vec((self.rows, self.cols), self.data.clone())
            .map_err(|e| CoreError::data(format!("checkpoint: {e}")))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    version: String,
    config: TrainConfig,
    scaler: ScalerState,
    propagation: MatrixData,
    w0: MatrixData,
    b0: Vec<f64>,
    w1: MatrixData,
    b1: Vec<f64>,
    wc: MatrixData,
    bc: Vec<f64>,
    wo: MatrixData,
    bo: Vec<f64>,
    batchnorm_stats: Option<BnStats>,
    val_loss_history: Vec<f64>,
    best_epoch: usize,
    seed: u64,
}

impl TrainedModel {
    /// Serializes the model as versioned checkpoint JSON.
    pub fn to_checkpoint_json(&self) -> Result<String> {
        let ckpt = Checkpoint {
            version: CHECKPOINT_VERSION.to_string(),
            config: self.config.clone(),
            scaler: self.scaler.clone(),
            propagation: MatrixData::from_array(&self.propagation),
            w0: MatrixData::from_array(&self.params.w0),
            b0: self.params.b0.to_vec(),
            w1: MatrixData::from_array(&self.params.w1),
            b1: self.params.b1.to_vec(),
            wc: MatrixData::from_array(&self.params.wc),
            bc: self.params.bc.to_vec(),
            wo: MatrixData::from_array(&self.params.wo),
            bo: self.params.bo.to_vec(),
            batchnorm_stats: self.bn.clone(),
            val_loss_history: self.val_loss_history.clone(),
            best_epoch: self.best_epoch,
            seed: self.seed,
        };
        Ok(serde_json::to_string_pretty(&ckpt)?)
    }

    /// Restores a model from checkpoint JSON.
    pub fn from_checkpoint_json(json: &str) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(json)?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(CoreError::data(format!(
                "checkpoint version {:?} unsupported (expected {CHECKPOINT_VERSION:?})",
                ckpt.version
            )));
        }
        let params = GcnParams {
            w0: ckpt.w0.to_array()?,
            b0: Array1::from_vec(ckpt.b0),
            w1: ckpt.w1.to_array()?,
            b1: Array1::from_vec(ckpt.b1),
            wc: ckpt.wc.to_array()?,
            bc: Array1::from_vec(ckpt.bc),
            wo: ckpt.wo.to_array()?,
            bo: Array1::from_vec(ckpt.bo),
        };
        params.validate()?;
        Ok(TrainedModel {
            params,
            propagation: ckpt.propagation.to_array()?,
            scaler: ckpt.scaler,
            config: ckpt.config,
            val_loss_history: ckpt.val_loss_history,
            best_epoch: ckpt.best_epoch,
            bn: ckpt.batchnorm_stats,
            seed: ckpt.seed,
        })
    }

    /// Writes the checkpoint to a file.
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_checkpoint_json()?)?;
        Ok(())
    }

    /// Reads a checkpoint from a file.
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let json = std::fs::read_to_string(path)?;
        Self::from_checkpoint_json(&json)
    }
}
