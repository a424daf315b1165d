//! Cross-validated effect estimation: the end-to-end pipeline.
//!
//! For every stratified fold the pipeline standardizes on the training
//! subjects, trains the classifier, fits per-node adjustment bases,
//! computes per-node intervention contrasts on the fold's test
//! subjects, and optionally trains baselines and runs a no-retrain
//! node-ablation probe. Fold contrasts are averaged into effect
//! estimates, given percentile bootstrap confidence intervals by
//! resampling evaluation subjects, and ranked by the absolute effect on
//! the third class probability. Everything is deterministic for a fixed
//! seed and serializes into a versioned report plus CSV artifacts.
//!
//! The bootstrap resamples evaluation subjects around the trained
//! models: its intervals quantify evaluation-sampling uncertainty of
//! the fitted models' contrast, not uncertainty from retraining.

use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backdoor::{fit_all_bases, AdjustmentBasis};
use crate::error::{CoreError, Result};
use crate::gcn_model::{train, train_mlp, TrainConfig, TrainedModel};
use crate::graph_data::{
    fmt_float, normalize_adjacency, standardize, stratified_kfold, threshold_and_rescale,
    CohortDataset, FoldSplit, ThresholdSummary, AD_CLASS, CLASS_NAMES,
};
use crate::intervention::{
    compute_levels, mean_contrast, node_contrasts, severed_propagation, SeverMode,
};
use crate::linalg::{percentile, spearman};
use crate::seeding::{derive_seed, stream_rng};
use rand::Rng;

/// Report schema version.
pub const REPORT_VERSION: &str = "causal-gcn-report/1";

/// Density applied when an unthresholded adjacency has out-of-range weights.
pub const DEFAULT_DENSITY: f64 = 0.15;

/// How confounding is adjusted for during contrast evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conditioning {
    /// One model on `(X, C)`; contrasts average over evaluation
    /// subjects, integrating the adjustment variables empirically.
    Implicit,
    /// One model per node whose covariate input is `[C ; t_j]`, the
    /// covariates plus the node's complement projected onto its
    /// adjustment basis.
    Explicit,
}

/// Flat run configuration: pipeline settings plus training
/// hyperparameters, loadable from a single-level JSON object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed; every random stream derives from it.
    pub seed: u64,
    /// Stratified cross-validation folds.
    pub k_folds: usize,
    /// Adjustment style for contrast evaluation.
    pub conditioning: Conditioning,
    /// Principal components per adjustment basis.
    pub n_components: usize,
    /// Low reference-level percentile.
    pub pct_lo: f64,
    /// High reference-level percentile.
    pub pct_hi: f64,
    /// Bootstrap replicates for confidence intervals.
    pub n_bootstrap: usize,
    /// Two-sided interval level: (1 - alpha) coverage.
    pub alpha: f64,
    /// Propagation-matrix surgery mode.
    pub sever_mode: SeverMode,
    /// Train the MLP and vanilla-GCN baselines.
    pub baselines: bool,
    /// Run the no-retrain node-ablation probe.
    pub ablation: bool,
    /// Average over completed folds instead of failing when a fold
    /// aborts.
    pub permissive: bool,
    /// Absolute edge threshold (mutually exclusive with
    /// `target_density`).
    pub tau: Option<f64>,
    /// Edge-density target for thresholding.
    pub target_density: Option<f64>,
    /// Hidden width of both graph layers.
    pub hidden_dim: usize,
    /// Covariate embedding width.
    pub covariate_embed_dim: usize,
    /// Dropout rate.
    pub dropout: f64,
    /// Adam learning rate.
    pub learning_rate: f64,
    /// Ridge coefficient.
    pub ridge: f64,
    /// Training epochs.
    pub epochs: usize,
    /// Per-step batch size (full batch when absent).
    pub batch_size: Option<usize>,
    /// Per-hidden-unit batch normalization.
    pub batchnorm: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        RunConfig {
            seed: 42,
            k_folds: 5,
            conditioning: Conditioning::Implicit,
            n_components: 8,
            pct_lo: 10.0,
            pct_hi: 90.0,
            n_bootstrap: 200,
            alpha: 0.05,
            sever_mode: SeverMode::Renormalize,
            baselines: true,
            ablation: true,
            permissive: false,
            tau: None,
            target_density: None,
            hidden_dim: t.hidden_dim,
            covariate_embed_dim: t.covariate_embed_dim,
            dropout: t.dropout,
            learning_rate: t.learning_rate,
            ridge: t.ridge,
            epochs: t.epochs,
            batch_size: t.batch_size,
            batchnorm: t.batchnorm,
        }
    }
}

impl RunConfig {
    /// The training-hyperparameter view of this configuration.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            hidden_dim: self.hidden_dim,
            covariate_embed_dim: self.covariate_embed_dim,
            dropout: self.dropout,
            learning_rate: self.learning_rate,
            ridge: self.ridge,
            epochs: self.epochs,
            batch_size: self.batch_size,
            batchnorm: self.batchnorm,
        }
    }

    /// Checks every range constraint without touching data.
    pub fn validate(&self) -> Result<()> {
        if self.k_folds < 2 {
            return Err(CoreError::config("config: k_folds must be at least 2"));
        }
        if !(0.0 < self.pct_lo && self.pct_lo < self.pct_hi && self.pct_hi < 100.0) {
            return Err(CoreError::config(
                "config: percentiles must satisfy 0 < pct_lo < pct_hi < 100",
            ));
        }
        if self.n_bootstrap == 0 {
            return Err(CoreError::config("config: n_bootstrap must be positive"));
        }
        if !(0.0 < self.alpha && self.alpha < 1.0) {
            return Err(CoreError::config("config: alpha must be in (0, 1)"));
        }
        if self.n_components == 0 {
            return Err(CoreError::config("config: n_components must be positive"));
        }
        if self.tau.is_some() && self.target_density.is_some() {
            return Err(CoreError::config(
                "config: tau and target_density are mutually exclusive",
            ));
        }
        self.train_config().validate()
    }
}

// ---------------------------------------------------------------------------
// AUC
// ---------------------------------------------------------------------------

/// Macro-averaged one-vs-rest AUC from class probabilities.
///
/// Each class's AUC uses the rank statistic with ties counted half; a
/// class absent from (or filling) the evaluation set is skipped with a
/// warning. Returns `None` when no class is scoreable.
pub fn macro_auc(probs: &Array2<f64>, labels: &[usize]) -> (Option<f64>, Vec<String>) {
    let mut warnings = Vec::new();
    let mut aucs = Vec::new();
    for class in 0..3 {
        let scores: Vec<f64> = probs.column(class).iter().copied().collect();
        match class_auc(&scores, labels, class) {
            Some(auc) => aucs.push(auc),
            None => warnings.push(format!(
                "AUC for class {} skipped: class absent from evaluation set",
                CLASS_NAMES[class]
            )),
        }
    }
    if aucs.is_empty() {
        (None, warnings)
    } else {
        (Some(aucs.iter().sum::<f64>() / aucs.len() as f64), warnings)
    }
}

/// One-vs-rest AUC via the Mann-Whitney rank statistic (ties half).
fn class_auc(scores: &[f64], labels: &[usize], class: usize) -> Option<f64> {
    let n = labels.len();
    let n_pos = labels.iter().filter(|&&y| y == class).count();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let ranks = crate::linalg::average_ranks(scores);
    let rank_sum: f64 = labels
        .iter()
        .zip(&ranks)
        .filter(|(&y, _)| y == class)
        .map(|(_, &r)| r)
        .sum();
    Some((rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0) / (n_pos as f64 * n_neg as f64))
}

// ---------------------------------------------------------------------------
// Report types
// ---------------------------------------------------------------------------

/// One node's cross-validated effect estimate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub node_id: usize,
    pub node_name: String,
    /// Fold-averaged contrast per class (CN, MCI, AD order).
    pub delta: [f64; 3],
    /// Lower bootstrap bound per class.
    pub ci_lo: [f64; 3],
    /// Upper bootstrap bound per class.
    pub ci_hi: [f64; 3],
    /// |delta| on the AD class: the ranking key.
    pub abs_delta_ad: f64,
    /// 1-based position after ranking.
    pub rank: usize,
}

/// Classifier quality on one fold's test subjects.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold_id: usize,
    pub auc_model: Option<f64>,
    pub auc_mlp: Option<f64>,
    pub auc_gcn: Option<f64>,
}

/// Unaggregated per-fold contrast with its reference levels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawEffect {
    pub fold_id: usize,
    pub node_id: usize,
    pub x_lo: f64,
    pub x_hi: f64,
    pub delta: [f64; 3],
}

/// Fold-averaged AUC drop when a node is zeroed and severed at
/// evaluation time (no retraining).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationResult {
    pub node_id: usize,
    pub node_name: String,
    pub delta_auc: Option<f64>,
}

/// Agreement diagnostics between the effect ranking and other signals.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Concordance {
    /// Spearman correlation across nodes between |delta_AD| and the
    /// size |delta_auc| of the ablation response. Magnitudes on both
    /// sides: for a null node, removing its feature can nudge AUC
    /// either way, and the size of that nudge — not its sign — tracks
    /// how much the model leaned on the node.
    pub effect_vs_ablation: Option<f64>,
    /// Mean over nodes of the fraction of folds whose AD contrast sign
    /// matches the pooled sign.
    pub sign_agreement: Option<f64>,
    /// Mean pairwise Spearman correlation between per-fold |delta_AD|
    /// rankings.
    pub rank_stability: Option<f64>,
}

/// The complete, serializable result of one pipeline run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: String,
    pub config: RunConfig,
    pub n_subjects: usize,
    pub n_nodes: usize,
    pub class_counts: [usize; 3],
    /// Present when the adjacency was thresholded.
    pub threshold: Option<ThresholdSummary>,
    pub folds: Vec<FoldMetrics>,
    /// Ranked effect estimates (rank 1 first).
    pub effects: Vec<EffectEstimate>,
    pub raw_effects: Vec<RawEffect>,
    pub ablation: Vec<AblationResult>,
    pub concordance: Concordance,
    /// What the bootstrap intervals quantify.
    pub ci_note: String,
    pub warnings: Vec<String>,
}

/// Pipeline result: the report plus the per-fold models and the
/// adjustment bases of the first completed fold, for artifact output.
#[derive(Debug)]
pub struct PipelineOutput {
    pub report: RunReport,
    /// `(fold_id, model)` for every completed fold.
    pub fold_models: Vec<(usize, TrainedModel)>,
    /// Adjustment bases fitted on the first completed fold's training
    /// subjects.
    pub adjustment_bases: Vec<AdjustmentBasis>,
}

// ---------------------------------------------------------------------------
// Fold execution
// ---------------------------------------------------------------------------

struct FoldOutcome {
    fold_id: usize,
    model: TrainedModel,
    metrics: FoldMetrics,
    bases: Vec<AdjustmentBasis>,
    /// Per node: (x_lo, x_hi).
    levels: Vec<(f64, f64)>,
    /// Per node: test-subject contrast rows (n_test x 3).
    contrasts: Vec<Array2<f64>>,
    /// Per node: AUC drop under ablation, when computed.
    ablation: Vec<Option<f64>>,
    warnings: Vec<String>,
}

fn gather_rows(m: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    let mut out = Array2::<f64>::zeros((idx.len(), m.ncols()));
    for (r, &i) in idx.iter().enumerate() {
        out.row_mut(r).assign(&m.row(i));
    }
    out
}

fn run_fold(
    dataset: &CohortDataset,
    split: &FoldSplit,
    config: &RunConfig,
    k_eff: usize,
) -> Result<FoldOutcome> {
    let mut warnings = Vec::new();
    let (std_ds, scaler) = standardize(dataset, &split.train_idx)?;
    let propagation = normalize_adjacency(&std_ds.adjacency)?;
    let train_cfg = config.train_config();
    let p = dataset.n_nodes();
    let fold = split.fold_id;

    let model = train(
        &std_ds.features,
        &std_ds.covariates,
        &std_ds.labels,
        &propagation,
        split,
        &train_cfg,
        &scaler,
        derive_seed(config.seed, "train-base", fold as u64),
    )?;

    let x_test = gather_rows(&std_ds.features, &split.test_idx);
    let c_test = gather_rows(&std_ds.covariates, &split.test_idx);
    let y_test: Vec<usize> = split.test_idx.iter().map(|&i| std_ds.labels[i]).collect();

    let probs = model.predict_batch(&x_test, &c_test)?;
    let (auc_model, auc_warnings) = macro_auc(&probs, &y_test);
    for w in auc_warnings {
        warnings.push(format!("fold {fold}: {w}"));
    }

    let (auc_mlp, auc_gcn) = if config.baselines {
        let mlp = train_mlp(
            &std_ds.features,
            &std_ds.covariates,
            &std_ds.labels,
            split,
            &train_cfg,
            derive_seed(config.seed, "train-mlp", fold as u64),
        )?;
        let mut input = Array2::<f64>::zeros((x_test.nrows(), p + c_test.ncols()));
        input.slice_mut(ndarray::s![.., ..p]).assign(&x_test);
        input.slice_mut(ndarray::s![.., p..]).assign(&c_test);
        let mlp_probs = mlp.predict_batch(&input)?;
        let (auc_mlp, _) = macro_auc(&mlp_probs, &y_test);

        let vanilla = train(
            &std_ds.features,
            &std_ds.covariates,
            &std_ds.labels,
            &propagation,
            split,
            &train_cfg,
            &scaler,
            derive_seed(config.seed, "train-vanilla", fold as u64),
        )?;
        let gcn_probs = vanilla.predict_batch(&x_test, &c_test)?;
        let (auc_gcn, _) = macro_auc(&gcn_probs, &y_test);
        (auc_mlp, auc_gcn)
    } else {
        (None, None)
    };

    let x_train = gather_rows(&std_ds.features, &split.train_idx);
    let bases = fit_all_bases(&x_train, k_eff)?;

    // Per-node contrasts; explicit conditioning trains one model per
    // node, so the loop is parallel (deterministic: per-node seeds).
    // The ablation probe re-evaluates the node's model of record (the
    // shared model under implicit conditioning, the node's own model
    // under explicit conditioning) with the node's feature zeroed and
    // its edges severed; delta is that model's AUC minus the ablated
    // AUC, so both the contrast and the ablation probe interrogate the
    // same trained network.
    struct NodeOut {
        levels: (f64, f64),
        contrasts: Array2<f64>,
        ablation: Option<f64>,
    }
    let node_outs: Vec<NodeOut> = (0..p)
        .into_par_iter()
        .map(|node| -> Result<NodeOut> {
            let vals: Vec<f64> = x_test.column(node).iter().copied().collect();
            let (x_lo, x_hi) = compute_levels(
                &vals,
                config.pct_lo,
                config.pct_hi,
                &dataset.node_names[node],
            )?;
            let severed = severed_propagation(&std_ds.adjacency, node, config.sever_mode)?;

            let mut x_abl = x_test.clone();
            for i in 0..x_abl.nrows() {
                x_abl[[i, node]] = 0.0;
            }
            let ablation_delta = |record: &TrainedModel, cov: &Array2<f64>| -> Result<Option<f64>> {
                if !config.ablation {
                    return Ok(None);
                }
                let probs_full = record.predict_batch(&x_test, cov)?;
                let (auc_full, _) = macro_auc(&probs_full, &y_test);
                let probs_abl = record.predict_batch_with(&severed, &x_abl, cov)?;
                let (auc_abl, _) = macro_auc(&probs_abl, &y_test);
                Ok(match (auc_full, auc_abl) {
                    (Some(a), Some(b)) => Some(a - b),
                    _ => None,
                })
            };

            let (contrasts, ablation) = match config.conditioning {
                Conditioning::Implicit => (
                    node_contrasts(&model, &severed, &x_test, &c_test, node, x_lo, x_hi)?,
                    ablation_delta(&model, &c_test)?,
                ),
                Conditioning::Explicit => {
                    let z_all =
                        bases[node].adjustment_inputs(&std_ds.features, &std_ds.covariates)?;
                    let node_model = train(
                        &std_ds.features,
                        &z_all,
                        &std_ds.labels,
                        &propagation,
                        split,
                        &train_cfg,
                        &scaler,
                        derive_seed(
                            config.seed,
                            "train-node",
                            (fold * p + node) as u64,
                        ),
                    )?;
                    let z_test = gather_rows(&z_all, &split.test_idx);
                    (
                        node_contrasts(&node_model, &severed, &x_test, &z_test, node, x_lo, x_hi)?,
                        ablation_delta(&node_model, &z_test)?,
                    )
                }
            };
            Ok(NodeOut {
                levels: (x_lo, x_hi),
                contrasts,
                ablation,
            })
        })
        .collect::<Result<Vec<NodeOut>>>()?;

    Ok(FoldOutcome {
        fold_id: fold,
        model,
        metrics: FoldMetrics {
            fold_id: fold,
            auc_model,
            auc_mlp,
            auc_gcn,
        },
        bases,
        levels: node_outs.iter().map(|n| n.levels).collect(),
        ablation: node_outs.iter().map(|n| n.ablation).collect(),
        contrasts: node_outs.into_iter().map(|n| n.contrasts).collect(),
        warnings,
    })
}

// ---------------------------------------------------------------------------
// Bootstrap
// ---------------------------------------------------------------------------

/// Bootstrap replicates of the fold-averaged contrast.
///
/// Each replicate resamples every fold's evaluation subjects with
/// replacement (the same resample for all nodes, preserving cross-node
/// correlation), re-averages the precomputed per-subject contrasts, and
/// averages over folds. Output: `replicates[b][node][class]`.
pub fn bootstrap_replicates(
    fold_contrasts: &[&Vec<Array2<f64>>],
    n_bootstrap: usize,
    seed: u64,
) -> Vec<Vec<[f64; 3]>> {
    let n_folds = fold_contrasts.len();
    let p = fold_contrasts[0].len();
    let mut rng = stream_rng(seed, "bootstrap", 0);
    let mut replicates = Vec::with_capacity(n_bootstrap);
    for _ in 0..n_bootstrap {
        let mut acc = vec![[0.0f64; 3]; p];
        for contrasts in fold_contrasts {
            let n_test = contrasts[0].nrows();
            let idx: Vec<usize> = (0..n_test).map(|_| rng.random_range(0..n_test)).collect();
            for (node, tensor) in contrasts.iter().enumerate() {
                let mut sums = [0.0f64; 3];
                for &i in &idx {
                    for k in 0..3 {
                        sums[k] += tensor[[i, k]];
                    }
                }
                for k in 0..3 {
                    acc[node][k] += sums[k] / n_test as f64;
                }
            }
        }
        for node_acc in acc.iter_mut() {
            for k in 0..3 {
                node_acc[k] /= n_folds as f64;
            }
        }
        replicates.push(acc);
    }
    replicates
}

/// Percentile interval per node and class from bootstrap replicates.
pub fn bootstrap_cis(
    replicates: &[Vec<[f64; 3]>],
    alpha: f64,
) -> Result<(Vec<[f64; 3]>, Vec<[f64; 3]>)> {
    if replicates.is_empty() {
        return Err(CoreError::data("bootstrap: no replicates"));
    }
    let p = replicates[0].len();
    let mut lo = vec![[0.0f64; 3]; p];
    let mut hi = vec![[0.0f64; 3]; p];
    for node in 0..p {
        for k in 0..3 {
            let draws: Vec<f64> = replicates.iter().map(|r| r[node][k]).collect();
            lo[node][k] = percentile(&draws, alpha / 2.0)?;
            hi[node][k] = percentile(&draws, 1.0 - alpha / 2.0)?;
        }
    }
    Ok((lo, hi))
}

// ---------------------------------------------------------------------------
// Ranking and concordance
// ---------------------------------------------------------------------------

/// Sorts by |delta_AD| descending (ties: node id ascending) and assigns
/// 1-based ranks.
pub fn rank_effects(effects: &mut [EffectEstimate]) {
    effects.sort_by(|a, b| {
        b.abs_delta_ad
            .partial_cmp(&a.abs_delta_ad)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.node_id.cmp(&b.node_id))
    });
    for (i, e) in effects.iter_mut().enumerate() {
        e.rank = i + 1;
    }
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

fn concordance_metrics(
    outcomes: &[&FoldOutcome],
    pooled_delta: &[[f64; 3]],
    ablation: &[AblationResult],
) -> Concordance {
    let p = pooled_delta.len();

    let effect_vs_ablation = {
        let pairs: Vec<(f64, f64)> = (0..p)
            .filter_map(|node| {
                ablation[node]
                    .delta_auc
                    .map(|da| (pooled_delta[node][AD_CLASS].abs(), da.abs()))
            })
            .collect();
        if pairs.len() >= 3 {
            let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            spearman(&xs, &ys)
        } else {
            None
        }
    };

    let sign_agreement = if outcomes.is_empty() {
        None
    } else {
        let mut total = 0.0;
        for node in 0..p {
            let pooled_sign = sign(pooled_delta[node][AD_CLASS]);
            let agree = outcomes
                .iter()
                .filter(|o| sign(mean_contrast(&o.contrasts[node])[AD_CLASS]) == pooled_sign)
                .count();
            total += agree as f64 / outcomes.len() as f64;
        }
        Some(total / p as f64)
    };

    let rank_stability = if outcomes.len() >= 2 {
        let per_fold_abs: Vec<Vec<f64>> = outcomes
            .iter()
            .map(|o| {
                (0..p)
                    .map(|node| mean_contrast(&o.contrasts[node])[AD_CLASS].abs())
                    .collect()
            })
            .collect();
        let mut rhos = Vec::new();
        for a in 0..per_fold_abs.len() {
            for b in (a + 1)..per_fold_abs.len() {
                if let Some(r) = spearman(&per_fold_abs[a], &per_fold_abs[b]) {
                    rhos.push(r);
                }
            }
        }
        if rhos.is_empty() {
            None
        } else {
            Some(rhos.iter().sum::<f64>() / rhos.len() as f64)
        }
    } else {
        None
    };

    Concordance {
        effect_vs_ablation,
        sign_agreement,
        rank_stability,
    }
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

/// Runs the whole cross-validated estimation pipeline on a raw cohort.
pub fn run_pipeline(dataset: &CohortDataset, config: &RunConfig) -> Result<PipelineOutput> {
    config.validate()?;
    dataset.validate()?;
    let mut warnings: Vec<String> = Vec::new();
    let p = dataset.n_nodes();

    // Adjacency preprocessing.
    let mut working = dataset.clone();
    let mut threshold = None;
    if config.tau.is_some() || config.target_density.is_some() {
        let (adj, summary) =
            threshold_and_rescale(&working.adjacency, config.tau, config.target_density)?;
        working.adjacency = adj;
        threshold = Some(summary);
    } else if working.adjacency.iter().any(|&v| v > 1.0) {
        let (adj, summary) =
            threshold_and_rescale(&working.adjacency, None, Some(DEFAULT_DENSITY))?;
        warnings.push(format!(
            "adjacency weights exceed 1; thresholded to density {} (tau = {})",
            fmt_float(summary.density),
            fmt_float(summary.tau)
        ));
        working.adjacency = adj;
        threshold = Some(summary);
    }

    let mut k_eff = config.n_components;
    if k_eff > p - 1 {
        k_eff = p - 1;
        warnings.push(format!(
            "n_components clipped to {} (only {} complement nodes)",
            k_eff,
            p - 1
        ));
    }

    let folds = stratified_kfold(&working.labels, config.k_folds, config.seed)?;

    let mut outcomes: Vec<FoldOutcome> = Vec::new();
    for split in &folds {
        match run_fold(&working, split, config, k_eff) {
            Ok(o) => outcomes.push(o),
            Err(e) if config.permissive => {
                let msg = format!("fold {} failed and was skipped: {e}", split.fold_id);
                log::warn!("{msg}");
                warnings.push(msg);
            }
            Err(e) => return Err(e),
        }
    }
    if outcomes.is_empty() {
        return Err(CoreError::data("all folds failed; nothing to aggregate"));
    }
    for o in &outcomes {
        warnings.extend(o.warnings.iter().cloned());
    }

    summarize(working, config, threshold, outcomes, warnings, p)
}

fn summarize(
    dataset: CohortDataset,
    config: &RunConfig,
    threshold: Option<ThresholdSummary>,
    outcomes: Vec<FoldOutcome>,
    mut warnings: Vec<String>,
    p: usize,
) -> Result<PipelineOutput> {
    let refs: Vec<&FoldOutcome> = outcomes.iter().collect();

    // Fold-averaged deltas.
    let mut pooled = vec![[0.0f64; 3]; p];
    for o in &refs {
        for node in 0..p {
            let m = mean_contrast(&o.contrasts[node]);
            for k in 0..3 {
                pooled[node][k] += m[k];
            }
        }
    }
    for node_delta in pooled.iter_mut() {
        for k in 0..3 {
            node_delta[k] /= refs.len() as f64;
        }
    }

    // Bootstrap intervals.
    let fold_contrasts: Vec<&Vec<Array2<f64>>> = refs.iter().map(|o| &o.contrasts).collect();
    let replicates = bootstrap_replicates(&fold_contrasts, config.n_bootstrap, config.seed);
    let (ci_lo, ci_hi) = bootstrap_cis(&replicates, config.alpha)?;

    let mut effects: Vec<EffectEstimate> = (0..p)
        .map(|node| EffectEstimate {
            node_id: node,
            node_name: dataset.node_names[node].clone(),
            delta: pooled[node],
            ci_lo: ci_lo[node],
            ci_hi: ci_hi[node],
            abs_delta_ad: pooled[node][AD_CLASS].abs(),
            rank: 0,
        })
        .collect();
    rank_effects(&mut effects);

    let raw_effects: Vec<RawEffect> = refs
        .iter()
        .flat_map(|o| {
            (0..p).map(|node| RawEffect {
                fold_id: o.fold_id,
                node_id: node,
                x_lo: o.levels[node].0,
                x_hi: o.levels[node].1,
                delta: mean_contrast(&o.contrasts[node]),
            })
        })
        .collect();

    let ablation: Vec<AblationResult> = (0..p)
        .map(|node| {
            let vals: Vec<f64> = refs.iter().filter_map(|o| o.ablation[node]).collect();
            AblationResult {
                node_id: node,
                node_name: dataset.node_names[node].clone(),
                delta_auc: if vals.is_empty() {
                    None
                } else {
                    Some(vals.iter().sum::<f64>() / vals.len() as f64)
                },
            }
        })
        .collect();

    let concordance = concordance_metrics(&refs, &pooled, &ablation);
    if let Some(rho) = concordance.effect_vs_ablation {
        if rho < 0.0 {
            warnings.push(format!(
                "effect ranking anti-correlates with ablation probe (rho = {})",
                fmt_float(rho)
            ));
        }
    }

    let report = RunReport {
        schema_version: REPORT_VERSION.to_string(),
        config: config.clone(),
        n_subjects: dataset.n_subjects(),
        n_nodes: p,
        class_counts: dataset.class_counts(),
        threshold,
        folds: refs.iter().map(|o| o.metrics.clone()).collect(),
        effects,
        raw_effects,
        ablation,
        concordance,
        ci_note: "Percentile bootstrap over evaluation subjects with trained models held \
                  fixed: intervals reflect evaluation-sampling uncertainty of the fitted \
                  contrast, not retraining variability."
            .to_string(),
        warnings,
    };

    let adjustment_bases = outcomes[0].bases.clone();
    let fold_models = outcomes
        .into_iter()
        .map(|o| (o.fold_id, o.model))
        .collect();

    Ok(PipelineOutput {
        report,
        fold_models,
        adjustment_bases,
    })
}

// ---------------------------------------------------------------------------
// Artifact output
// ---------------------------------------------------------------------------

/// Serializes the report as deterministic pretty JSON.
pub fn report_json(report: &RunReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(report)?)
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(fmt_float).unwrap_or_default()
}

/// `effects.csv`: one row per node and class, in ranked node order.
pub fn effects_csv(report: &RunReport) -> String {
    let mut out = String::from("node_id,node_name,class,delta_mean,ci_lo,ci_hi,abs_delta_ad,rank\n");
    for e in &report.effects {
        for k in 0..3 {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                e.node_id,
                e.node_name,
                CLASS_NAMES[k],
                fmt_float(e.delta[k]),
                fmt_float(e.ci_lo[k]),
                fmt_float(e.ci_hi[k]),
                fmt_float(e.abs_delta_ad),
                e.rank
            ));
        }
    }
    out
}

/// `folds.csv`: per-fold AUC of the model and baselines.
pub fn folds_csv(report: &RunReport) -> String {
    let mut out = String::from("fold,auc_model,auc_mlp,auc_gcn\n");
    for f in &report.folds {
        out.push_str(&format!(
            "{},{},{},{}\n",
            f.fold_id,
            opt_cell(f.auc_model),
            opt_cell(f.auc_mlp),
            opt_cell(f.auc_gcn)
        ));
    }
    out
}

/// `effects_raw.csv`: per-fold contrasts with their reference levels.
pub fn effects_raw_csv(report: &RunReport) -> String {
    let mut out = String::from("fold,node_id,class,x_lo,x_hi,delta\n");
    for r in &report.raw_effects {
        for k in 0..3 {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.fold_id,
                r.node_id,
                CLASS_NAMES[k],
                fmt_float(r.x_lo),
                fmt_float(r.x_hi),
                fmt_float(r.delta[k])
            ));
        }
    }
    out
}

/// `ablation.csv`: fold-averaged AUC drop per node.
pub fn ablation_csv(report: &RunReport) -> String {
    let mut out = String::from("node_id,node_name,delta_auc\n");
    for a in &report.ablation {
        out.push_str(&format!(
            "{},{},{}\n",
            a.node_id,
            a.node_name,
            opt_cell(a.delta_auc)
        ));
    }
    out
}

/// Writes report.json, the CSV artifacts, per-node adjustment bases and
/// per-fold model checkpoints under `out_dir`.
pub fn write_artifacts(out_dir: &Path, output: &PipelineOutput) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("report.json"), report_json(&output.report)?)?;
    std::fs::write(out_dir.join("effects.csv"), effects_csv(&output.report))?;
    std::fs::write(out_dir.join("folds.csv"), folds_csv(&output.report))?;
    std::fs::write(
        out_dir.join("effects_raw.csv"),
        effects_raw_csv(&output.report),
    )?;
    if output.report.ablation.iter().any(|a| a.delta_auc.is_some()) {
        std::fs::write(out_dir.join("ablation.csv"), ablation_csv(&output.report))?;
    }
    let adj_dir = out_dir.join("adjustment");
    std::fs::create_dir_all(&adj_dir)?;
    for basis in &output.adjustment_bases {
        std::fs::write(
            adj_dir.join(format!("{}.json", basis.node_id)),
            basis.to_json()?,
        )?;
    }
    let ckpt_dir = out_dir.join("checkpoints");
    std::fs::create_dir_all(&ckpt_dir)?;
    for (fold_id, model) in &output.fold_models {
        model.save(&ckpt_dir.join(format!("fold_{fold_id}.json")))?;
    }
    Ok(())
}

/// Human-readable ranking table; effects scaled by 100 for legibility.
/// `top == 0` means all rows; `top` beyond the node count is clipped.
pub fn format_effect_table(effects: &[EffectEstimate], top: usize, alpha: f64) -> String {
    let n = if top == 0 {
        effects.len()
    } else {
        top.min(effects.len())
    };
    let level = 100.0 * (1.0 - alpha);
    let mut out = format!(
        "{:>4}  {:<16} {:>12} {:>24}\n",
        "rank",
        "node",
        "100·ΔAD",
        format!("{level:.0}% CI (x100)")
    );
    for e in effects.iter().take(n) {
        out.push_str(&format!(
            "{:>4}  {:<16} {:>12.3} {:>24}\n",
            e.rank,
            e.node_name,
            100.0 * e.delta[AD_CLASS],
            format!(
                "[{:.3}, {:.3}]",
                100.0 * e.ci_lo[AD_CLASS],
                100.0 * e.ci_hi[AD_CLASS]
            )
        ));
    }
    out
}
