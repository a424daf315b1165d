//! Synthetic cohorts from a known structural causal model.
//!
//! Covariates cause node features (confounding loadings) and the outcome
//! directly; node features gain graph-smoothed correlation from a latent
//! field propagated once through the normalized adjacency; the outcome is
//! a three-class multinomial logit whose AD logit is linear in features
//! and covariates. Because no feature depends on another feature, forcing
//! one node's value leaves every other structural equation untouched,
//! which makes the brute-force interventional oracle exact up to Monte
//! Carlo error.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::graph_data::{normalize_adjacency, CohortDataset};
use crate::linalg::percentile;
use crate::seeding::stream_rng;

/// Number of subject covariates (age, sex, apoe4 analogues).
pub const N_COVARIATES: usize = 3;

/// Full specification of the synthetic structural causal model.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScmSpec {
    /// Node count.
    pub p: usize,
    /// Shared symmetric adjacency (raw weights, zero diagonal).
    pub adjacency: Vec<Vec<f64>>,
    /// q x p loadings: effect of each covariate on each node feature.
    pub confounder_loadings: Vec<Vec<f64>>,
    /// Nodes with nonzero outcome weight.
    pub causal_nodes: Vec<usize>,
    /// AD-logit coefficient per node.
    pub outcome_weights: Vec<f64>,
    /// AD-logit coefficient per covariate.
    pub confounder_outcome_weights: Vec<f64>,
    /// Standard deviation of per-node feature noise.
    pub noise_sd: f64,
    /// Master seed for generation and the oracle.
    pub seed: u64,
}

impl ScmSpec {
    /// Validates internal consistency.
    pub fn validate(&self) -> Result<()> {
        if self.p < 2 {
            return Err(CoreError::config("scm: need at least 2 nodes"));
        }
        if self.adjacency.len() != self.p || self.adjacency.iter().any(|r| r.len() != self.p) {
            return Err(CoreError::config("scm: adjacency must be p x p"));
        }
        for i in 0..self.p {
            if self.adjacency[i][i] != 0.0 {
                return Err(CoreError::config("scm: adjacency diagonal must be zero"));
            }
            for j in 0..self.p {
                let (a, b) = (self.adjacency[i][j], self.adjacency[j][i]);
                if (a - b).abs() > 1e-9 {
                    return Err(CoreError::config(format!(
                        "scm: adjacency asymmetric at ({i},{j})"
                    )));
                }
                if !a.is_finite() || a < 0.0 {
                    return Err(CoreError::config("scm: adjacency weights must be >= 0"));
                }
            }
        }
        if self.confounder_loadings.len() != N_COVARIATES
            || self.confounder_loadings.iter().any(|r| r.len() != self.p)
        {
            return Err(CoreError::config(format!(
                "scm: confounder_loadings must be {N_COVARIATES} x p"
            )));
        }
        if self.outcome_weights.len() != self.p {
            return Err(CoreError::config("scm: outcome_weights must have length p"));
        }
        if self.confounder_outcome_weights.len() != N_COVARIATES {
            return Err(CoreError::config(format!(
                "scm: confounder_outcome_weights must have length {N_COVARIATES}"
            )));
        }
        for (j, &w) in self.outcome_weights.iter().enumerate() {
            let causal = self.causal_nodes.contains(&j);
            if causal && w == 0.0 {
                return Err(CoreError::config(format!(
                    "scm: causal node {j} has zero outcome weight"
                )));
            }
            if !causal && w != 0.0 {
                return Err(CoreError::config(format!(
                    "scm: node {j} has nonzero outcome weight but is not listed causal"
                )));
            }
        }
        if self.causal_nodes.iter().any(|&j| j >= self.p) {
            return Err(CoreError::config("scm: causal node id out of range"));
        }
        if !(self.noise_sd > 0.0) {
            return Err(CoreError::config("scm: noise_sd must be positive"));
        }
        Ok(())
    }

    fn adjacency_array(&self) -> Array2<f64> {
        let mut a = Array2::<f64>::zeros((self.p, self.p));
        for i in 0..self.p {
            for j in 0..self.p {
                a[[i, j]] = self.adjacency[i][j];
            }
        }
        a
    }
}

/// Ground-truth interventional contrasts and the metadata behind them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Per-node contrast in Pr(Y = AD) between the high and low levels.
    pub true_delta: Vec<f64>,
    /// Monte Carlo standard error per node.
    pub mc_se: Vec<f64>,
    /// Intervention levels used (population percentiles, clipped).
    pub x_lo: Vec<f64>,
    pub x_hi: Vec<f64>,
    /// Draw count behind the estimates.
    pub n_mc: usize,
    /// Seed of the oracle stream.
    pub seed: u64,
}

/// One oracle evaluation.
#[derive(Debug, Clone, Copy)]
pub struct OracleDelta {
    pub delta: f64,
    pub se: f64,
}

struct ScmSampler {
    p: usize,
    norm_adj: Array2<f64>,
    loadings: Array2<f64>,
    noise_sd: f64,
}

impl ScmSampler {
    fn new(spec: &ScmSpec) -> Result<Self> {
        spec.validate()?;
        let norm_adj = normalize_adjacency(&spec.adjacency_array())?;
        let mut loadings = Array2::<f64>::zeros((N_COVARIATES, spec.p));
        for c in 0..N_COVARIATES {
            for j in 0..spec.p {
                loadings[[c, j]] = spec.confounder_loadings[c][j];
            }
        }
        Ok(ScmSampler {
            p: spec.p,
            norm_adj,
            loadings,
            noise_sd: spec.noise_sd,
        })
    }

    /// Draws covariates: age ~ N(0,1), sex in {-1,+1} fair, apoe4 in
    /// {-1,+1} with P(+1) = 0.3.
    fn draw_covariates(&self, rng: &mut impl Rng) -> [f64; N_COVARIATES] {
        let age: f64 = rng.sample(StandardNormal);
        let sex = if rng.random_range(0.0..1.0f64) < 0.5 { 1.0 } else { -1.0 };
        let apoe4 = if rng.random_range(0.0..1.0f64) < 0.3 { 1.0 } else { -1.0 };
        [age, sex, apoe4]
    }

    /// Draws one subject's node features given covariates.
    fn draw_features(&self, cov: &[f64; N_COVARIATES], rng: &mut impl Rng) -> Array1<f64> {
        let mut latent = Array1::<f64>::zeros(self.p);
        for v in latent.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let smoothed = self.norm_adj.dot(&latent);
        let mut x = smoothed;
        for j in 0..self.p {
            let mut confound = 0.0;
            for c in 0..N_COVARIATES {
                confound += self.loadings[[c, j]] * cov[c];
            }
            let eps: f64 = rng.sample(StandardNormal);
            x[j] += confound + self.noise_sd * eps;
        }
        x
    }
}

/// AD-class probability of the three-class logit with logits
/// (0, l/2, l).
fn prob_ad(l: f64) -> f64 {
    // Stable evaluation for large |l|.
    let m = 0.0f64.max(l / 2.0).max(l);
    let z0 = (-m).exp();
    let z1 = (l / 2.0 - m).exp();
    let z2 = (l - m).exp();
    z2 / (z0 + z1 + z2)
}

fn class_probs(l: f64) -> [f64; 3] {
    let m = 0.0f64.max(l / 2.0).max(l);
    let z0 = (-m).exp();
    let z1 = (l / 2.0 - m).exp();
    let z2 = (l - m).exp();
    let s = z0 + z1 + z2;
    [z0 / s, z1 / s, z2 / s]
}

fn ad_logit(spec: &ScmSpec, x: &Array1<f64>, cov: &[f64; N_COVARIATES]) -> f64 {
    let mut l = 0.0;
    for j in 0..spec.p {
        l += spec.outcome_weights[j] * x[j];
    }
    for c in 0..N_COVARIATES {
        l += spec.confounder_outcome_weights[c] * cov[c];
    }
    l
}

/// Generates a cohort of `n_subjects` and the matching ground truth.
///
/// Deterministic for a fixed `spec.seed`; the cohort stream and the
/// oracle stream are derived independently, so cohort size does not
/// perturb the ground truth.
pub fn generate_cohort(spec: &ScmSpec, n_subjects: usize) -> Result<(CohortDataset, GroundTruth)> {
    if n_subjects == 0 {
        return Err(CoreError::config("generate_cohort: need at least 1 subject"));
    }
    let sampler = ScmSampler::new(spec)?;
    let mut rng = stream_rng(spec.seed, "scm-cohort", 0);

    let p = spec.p;
    let mut features = Array2::<f64>::zeros((n_subjects, p));
    let mut covariates = Array2::<f64>::zeros((n_subjects, N_COVARIATES));
    let mut labels = Vec::with_capacity(n_subjects);
    for i in 0..n_subjects {
        let cov = sampler.draw_covariates(&mut rng);
        let x = sampler.draw_features(&cov, &mut rng);
        let l = ad_logit(spec, &x, &cov);
        let probs = class_probs(l);
        let u: f64 = rng.random_range(0.0..1.0);
        let y = if u < probs[0] {
            0
        } else if u < probs[0] + probs[1] {
            1
        } else {
            2
        };
        for j in 0..p {
            features[[i, j]] = x[j];
        }
        for c in 0..N_COVARIATES {
            covariates[[i, c]] = cov[c];
        }
        labels.push(y);
    }

    let width = if p > 100 { 3 } else { 2 };
    let dataset = CohortDataset {
        subject_ids: (0..n_subjects).map(|i| format!("S{i:06}")).collect(),
        node_names: (0..p).map(|j| format!("node_{j:0width$}")).collect(),
        covariate_names: vec!["age".into(), "sex".into(), "apoe4".into()],
        features,
        covariates,
        labels,
        adjacency: spec.adjacency_array(),
    };
    dataset.validate()?;

    let truth = ground_truth(spec, DEFAULT_ORACLE_DRAWS)?;
    Ok((dataset, truth))
}

/// Default Monte Carlo draw count for the oracle.
pub const DEFAULT_ORACLE_DRAWS: usize = 100_000;

/// Population intervention levels per node: 10th/90th percentiles after
/// clipping to the (1%, 99%) quantiles, estimated from `n_draws`
/// simulated subjects.
pub fn oracle_levels(spec: &ScmSpec, n_draws: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let sampler = ScmSampler::new(spec)?;
    let mut rng = stream_rng(spec.seed, "scm-levels", 0);
    let p = spec.p;
    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(n_draws); p];
    for _ in 0..n_draws {
        let cov = sampler.draw_covariates(&mut rng);
        let x = sampler.draw_features(&cov, &mut rng);
        for j in 0..p {
            columns[j].push(x[j]);
        }
    }
    let mut lo = Vec::with_capacity(p);
    let mut hi = Vec::with_capacity(p);
    for col in &columns {
        let c_lo = percentile(col, 0.01)?;
        let c_hi = percentile(col, 0.99)?;
        let clipped: Vec<f64> = col.iter().map(|&v| v.clamp(c_lo, c_hi)).collect();
        lo.push(percentile(&clipped, 0.10)?);
        hi.push(percentile(&clipped, 0.90)?);
    }
    Ok((lo, hi))
}

/// Brute-force ground truth for every node in one shared-draw pass.
pub fn ground_truth(spec: &ScmSpec, n_mc: usize) -> Result<GroundTruth> {
    if n_mc < 10_000 {
        return Err(CoreError::config("oracle: need at least 10^4 draws"));
    }
    let (x_lo, x_hi) = oracle_levels(spec, n_mc.min(200_000))?;
    let sampler = ScmSampler::new(spec)?;
    let mut rng = stream_rng(spec.seed, "scm-oracle", 0);
    let p = spec.p;
    let mut sum = vec![0.0f64; p];
    let mut sumsq = vec![0.0f64; p];
    for _ in 0..n_mc {
        let cov = sampler.draw_covariates(&mut rng);
        let x = sampler.draw_features(&cov, &mut rng);
        let base = ad_logit(spec, &x, &cov);
        for j in 0..p {
            let rest = base - spec.outcome_weights[j] * x[j];
            let diff = prob_ad(rest + spec.outcome_weights[j] * x_hi[j])
                - prob_ad(rest + spec.outcome_weights[j] * x_lo[j]);
            sum[j] += diff;
            sumsq[j] += diff * diff;
        }
    }
    let n = n_mc as f64;
    let mut true_delta = Vec::with_capacity(p);
    let mut mc_se = Vec::with_capacity(p);
    for j in 0..p {
        let mean = sum[j] / n;
        let var = (sumsq[j] / n - mean * mean).max(0.0);
        true_delta.push(mean);
        mc_se.push((var / n).sqrt());
    }
    Ok(GroundTruth {
        true_delta,
        mc_se,
        x_lo,
        x_hi,
        n_mc,
        seed: spec.seed,
    })
}

/// Interventional contrast for one node at explicit levels.
///
/// Simulates the SCM with `X_j` forced to each level (all other
/// structural equations intact) and returns the mean difference in
/// Pr(Y = AD) plus its Monte Carlo standard error. Draws are shared
/// between the two levels, so swapping levels negates the result
/// exactly.
pub fn oracle_delta(
    spec: &ScmSpec,
    node_id: usize,
    x_lo: f64,
    x_hi: f64,
    n_mc: usize,
) -> Result<OracleDelta> {
    if n_mc < 10_000 {
        return Err(CoreError::config("oracle: need at least 10^4 draws"));
    }
    let sampler = ScmSampler::new(spec)?;
    if node_id >= spec.p {
        return Err(CoreError::config(format!(
            "oracle: node {node_id} out of range"
        )));
    }
    let mut rng = stream_rng(spec.seed, "scm-oracle", 0);
    let w = spec.outcome_weights[node_id];
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for _ in 0..n_mc {
        let cov = sampler.draw_covariates(&mut rng);
        let x = sampler.draw_features(&cov, &mut rng);
        let rest = ad_logit(spec, &x, &cov) - w * x[node_id];
        let diff = prob_ad(rest + w * x_hi) - prob_ad(rest + w * x_lo);
        sum += diff;
        sumsq += diff * diff;
    }
    let n = n_mc as f64;
    let mean = sum / n;
    let var = (sumsq / n - mean * mean).max(0.0);
    Ok(OracleDelta {
        delta: mean,
        se: (var / n).sqrt(),
    })
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

/// Ring lattice over `p` nodes plus a fixed set of chords, giving a
/// connected binary graph with heterogeneous degrees.
fn ring_with_chords(p: usize) -> Vec<Vec<f64>> {
    let mut a = vec![vec![0.0; p]; p];
    let mut connect = |i: usize, j: usize| {
        if i != j {
            a[i][j] = 1.0;
            a[j][i] = 1.0;
        }
    };
    for i in 0..p {
        connect(i, (i + 1) % p);
    }
    // Chords at fixed relative positions; node 0 becomes a hub.
    connect(0, p / 2);
    connect(0, p / 3);
    connect(1, 1 + p / 2);
    connect(2, 2 + p / 3);
    a
}

fn zeros(rows: usize, cols: usize) -> Vec<Vec<f64>> {
    vec![vec![0.0; cols]; rows]
}

/// Named cohort presets used by the CLI and the validation suite.
///
/// - `null`: no node influences the outcome; covariates influence the
///   outcome directly only.
/// - `single-cause`: one causal node, no confounding of features.
/// - `confounded`: one causal node plus a covariate that loads on four
///   non-causal nodes and on the outcome, so marginal correlation flags
///   the wrong nodes.
pub fn preset(name: &str, p: usize, seed: u64) -> Result<ScmSpec> {
    if p < 6 {
        return Err(CoreError::config("preset: need at least 6 nodes"));
    }
    let causal = 2usize;
    let confounded: Vec<usize> = vec![p / 2, p / 2 + 1, p / 2 + 2, p / 2 + 3 - usize::from(p / 2 + 3 >= p)];
    let spec = match name {
        "null" => ScmSpec {
            p,
            adjacency: ring_with_chords(p),
            confounder_loadings: zeros(N_COVARIATES, p),
            causal_nodes: vec![],
            outcome_weights: vec![0.0; p],
            confounder_outcome_weights: vec![0.8, 0.3, 0.5],
            noise_sd: 0.8,
            seed,
        },
        "single-cause" => {
            let mut w = vec![0.0; p];
            w[causal] = 1.6;
            ScmSpec {
                p,
                adjacency: ring_with_chords(p),
                confounder_loadings: zeros(N_COVARIATES, p),
                causal_nodes: vec![causal],
                outcome_weights: w,
                confounder_outcome_weights: vec![0.6, 0.2, 0.4],
                noise_sd: 0.8,
                seed,
            }
        }
        "confounded" => {
            let mut w = vec![0.0; p];
            w[causal] = 1.4;
            let mut loadings = zeros(N_COVARIATES, p);
            for &j in &confounded {
                loadings[0][j] = 1.2;
            }
            ScmSpec {
                p,
                adjacency: ring_with_chords(p),
                confounder_loadings: loadings,
                causal_nodes: vec![causal],
                outcome_weights: w,
                confounder_outcome_weights: vec![2.0, 0.25, 0.45],
                noise_sd: 0.7,
                seed,
            }
        }
        other => {
            return Err(CoreError::config(format!(
                "unknown preset {other:?}; expected null, single-cause or confounded"
            )))
        }
    };
    spec.validate()?;
    Ok(spec)
}

/// Node ids carrying confounder loadings in the `confounded` preset.
pub fn confounded_preset_nodes(p: usize) -> Vec<usize> {
    vec![p / 2, p / 2 + 1, p / 2 + 2, p / 2 + 3 - usize::from(p / 2 + 3 >= p)]
}
