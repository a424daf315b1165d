//! End-to-end validation suite.
//!
//! Ten numbered checks, each printing one `criterion NN: PASS — ...`
//! line (visible with `--nocapture`; a failure panics with the same
//! detail). Together they cover gradient correctness against finite
//! differences, forward and AUC oracle equivalence against scalar-loop
//! references, the algebra of the intervention operator, recovery of a
//! known causal node under deliberate confounding, sign agreement with
//! a simulation oracle, bootstrap interval behavior, byte determinism,
//! a train/test leakage canary, and effect-vs-ablation concordance.

use std::sync::OnceLock;
use std::time::Instant;

use ndarray::Array2;
use rand::Rng;

use causal_gcn_core::backdoor::fit_basis;
use causal_gcn_core::gcn_model::{
    forward_batch, loss_and_gradients, train, GcnParams, Mode, TrainConfig, TrainedModel,
};
use causal_gcn_core::graph_data::{
    normalize_adjacency, standardize, stratified_kfold, CohortDataset, AD_CLASS,
};
use causal_gcn_core::inference::{
    bootstrap_cis, bootstrap_replicates, effects_csv, macro_auc, report_json, run_pipeline,
    Conditioning, RunConfig,
};
use causal_gcn_core::intervention::{node_contrasts, severed_propagation, SeverMode};
use causal_gcn_core::linalg::pearson;
use causal_gcn_core::seeding::stream_rng;
use causal_gcn_core::synth_scm::{generate_cohort, preset};

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

fn random_symmetric_adjacency(p: usize, rng: &mut impl Rng) -> Array2<f64> {
    let mut a = Array2::<f64>::zeros((p, p));
    for i in 0..p {
        for j in (i + 1)..p {
            let w: f64 = if rng.random_range(0..3) > 0 {
                rng.random_range(0.1..1.0)
            } else {
                0.0
            };
            a[[i, j]] = w;
            a[[j, i]] = w;
        }
    }
    a
}

struct RandomInstance {
    params: GcnParams,
    propagation: Array2<f64>,
    x: Array2<f64>,
    c: Array2<f64>,
    labels: Vec<usize>,
}

/// Fixture for finite-difference checks: nonzero biases keep every
/// gradient path live, and moderate input ranges keep pre-activations
/// away from the ReLU kink at the probe step size.
fn fd_fixture(p: usize, d: usize, seed: u64) -> RandomInstance {
    let (d_c, q, n) = (4usize, 3usize, 5usize);
    let mut rng = stream_rng(seed, "fd-fixture", 0);
    let mut params = GcnParams::init(d, d_c, q, &mut rng);
    for v in params.b0.iter_mut() {
        *v = rng.random_range(-0.3..0.3);
    }
    for v in params.b1.iter_mut() {
        *v = rng.random_range(-0.3..0.3);
    }
    for v in params.bc.iter_mut() {
        *v = rng.random_range(-0.3..0.3);
    }
    for v in params.bo.iter_mut() {
        *v = rng.random_range(-0.3..0.3);
    }
    let mut a = Array2::<f64>::zeros((p, p));
    for i in 0..p {
        for j in (i + 1)..p {
            if rng.random_range(0.0..1.0f64) < 0.5 {
                a[[i, j]] = 1.0;
                a[[j, i]] = 1.0;
            }
        }
    }
    let propagation = normalize_adjacency(&a).unwrap();
    let mut x = Array2::<f64>::zeros((n, p));
    for v in x.iter_mut() {
        *v = rng.random_range(-1.5..1.5);
    }
    let mut c = Array2::<f64>::zeros((n, q));
    for v in c.iter_mut() {
        *v = rng.random_range(-1.5..1.5);
    }
    let labels = (0..n).map(|i| i % 3).collect();
    RandomInstance {
        params,
        propagation,
        x,
        c,
        labels,
    }
}

fn random_instance(p: usize, d: usize, n: usize, q: usize, d_c: usize, seed: u64) -> RandomInstance {
    let mut rng = stream_rng(seed, "acceptance-instance", 0);
    let params = GcnParams::init(d, d_c, q, &mut rng);
    let propagation = normalize_adjacency(&random_symmetric_adjacency(p, &mut rng)).unwrap();
    let mut x = Array2::<f64>::zeros((n, p));
    let mut c = Array2::<f64>::zeros((n, q));
    for v in x.iter_mut() {
        *v = rng.random_range(-2.0..2.0);
    }
    for v in c.iter_mut() {
        *v = rng.random_range(-2.0..2.0);
    }
    let labels = (0..n).map(|i| i % 3).collect();
    RandomInstance {
        params,
        propagation,
        x,
        c,
        labels,
    }
}

/// Trains a small model on a synthetic cohort and returns it with the
/// standardized evaluation data.
fn small_trained_model(
    seed: u64,
) -> (
    TrainedModel,
    CohortDataset,
    Array2<f64>,
    Array2<f64>,
    Vec<usize>,
) {
    let spec = preset("single-cause", 6, seed).unwrap();
    let (dataset, _) = generate_cohort(&spec, 180).unwrap();
    let folds = stratified_kfold(&dataset.labels, 3, seed).unwrap();
    let split = &folds[0];
    let (std_ds, scaler) = standardize(&dataset, &split.train_idx).unwrap();
    let propagation = normalize_adjacency(&std_ds.adjacency).unwrap();
    let config = TrainConfig {
        hidden_dim: 8,
        covariate_embed_dim: 4,
        dropout: 0.2,
        epochs: 20,
        ..TrainConfig::default()
    };
    let model = train(
        &std_ds.features,
        &std_ds.covariates,
        &std_ds.labels,
        &propagation,
        split,
        &config,
        &scaler,
        seed,
    )
    .unwrap();
    let rows = |m: &Array2<f64>| {
        let mut out = Array2::<f64>::zeros((split.test_idx.len(), m.ncols()));
        for (r, &i) in split.test_idx.iter().enumerate() {
            out.row_mut(r).assign(&m.row(i));
        }
        out
    };
    let x_test = rows(&std_ds.features);
    let c_test = rows(&std_ds.covariates);
    let y_test: Vec<usize> = split.test_idx.iter().map(|&i| std_ds.labels[i]).collect();
    (model, std_ds, x_test, c_test, y_test)
}

// ---------------------------------------------------------------------------
// 1. Gradient correctness against central finite differences
// ---------------------------------------------------------------------------

#[test]
fn criterion_01_analytic_gradients_match_finite_differences() {
    let started = Instant::now();
    let configs: Vec<(usize, usize)> = (0..20).map(|t| (2 + t % 7, if t % 2 == 0 { 4 } else { 8 })).collect();
    let lambda = 1e-3;
    let h = 1e-5;
    let mut worst: f64 = 0.0;

    for (t, &(p, d)) in configs.iter().enumerate() {
        let inst = fd_fixture(p, d, 40 + t as u64);
        let eval_loss = |pp: &GcnParams| -> f64 {
            let cache =
                forward_batch(pp, &inst.propagation, &inst.x, &inst.c, Mode::Eval { bn: None })
                    .unwrap();
            loss_and_gradients(pp, &inst.propagation, &cache, &inst.c, &inst.labels, lambda)
                .unwrap()
                .0
        };
        let cache = forward_batch(
            &inst.params,
            &inst.propagation,
            &inst.x,
            &inst.c,
            Mode::Eval { bn: None },
        )
        .unwrap();
        let (_, grads) = loss_and_gradients(
            &inst.params,
            &inst.propagation,
            &cache,
            &inst.c,
            &inst.labels,
            lambda,
        )
        .unwrap();

        let mut check = |get: &dyn Fn(&GcnParams) -> f64,
                         set: &dyn Fn(&mut GcnParams, f64),
                         analytic: f64| {
            let base = get(&inst.params);
            let mut plus = inst.params.clone();
            set(&mut plus, base + h);
            let mut minus = inst.params.clone();
            set(&mut minus, base - h);
            let numeric = (eval_loss(&plus) - eval_loss(&minus)) / (2.0 * h);
            let denom = analytic.abs().max(numeric.abs());
            if denom > 1e-6 {
                worst = worst.max((analytic - numeric).abs() / denom);
            } else {
                assert!(
                    (analytic - numeric).abs() < 1e-7,
                    "near-zero gradient mismatch: analytic {analytic} numeric {numeric}"
                );
            }
        };

        macro_rules! check_mat {
            ($field:ident) => {
                for r in 0..inst.params.$field.nrows() {
                    for cc in 0..inst.params.$field.ncols() {
                        check(
                            &|pp: &GcnParams| pp.$field[[r, cc]],
                            &|pp: &mut GcnParams, v| pp.$field[[r, cc]] = v,
                            grads.$field[[r, cc]],
                        );
                    }
                }
            };
        }
        macro_rules! check_vec {
            ($field:ident) => {
                for r in 0..inst.params.$field.len() {
                    check(
                        &|pp: &GcnParams| pp.$field[r],
                        &|pp: &mut GcnParams, v| pp.$field[r] = v,
                        grads.$field[r],
                    );
                }
            };
        }
        check_mat!(w0);
        check_vec!(b0);
        check_mat!(w1);
        check_vec!(b1);
        check_mat!(wc);
        check_vec!(bc);
        check_mat!(wo);
        check_vec!(bo);
    }

    let elapsed = started.elapsed();
    assert!(
        worst < 1e-4,
        "criterion 01: FAIL — max relative gradient error {worst:.3e} >= 1e-4"
    );
    assert!(
        elapsed.as_secs_f64() < 30.0,
        "criterion 01: FAIL — gradient check took {elapsed:?} (budget 30 s)"
    );
    println!(
        "criterion 01: PASS — max relative gradient error {worst:.3e} < 1e-4 over {} configs (p 2..8, d 4/8) in {elapsed:.2?}",
        configs.len()
    );
}

// ---------------------------------------------------------------------------
// 2. Forward oracle equivalence against a scalar-loop reference
// ---------------------------------------------------------------------------

/// Forward pass written with nothing but scalar loops.
fn scalar_forward(
    params: &GcnParams,
    prop: &Array2<f64>,
    x: &Array2<f64>,
    c: &Array2<f64>,
) -> Array2<f64> {
    let n = x.nrows();
    let p = x.ncols();
    let d = params.b0.len();
    let d_c = params.bc.len();
    let q = c.ncols();
    let relu = |v: f64| if v > 0.0 { v } else { 0.0 };
    let mut probs = Array2::<f64>::zeros((n, 3));

    for i in 0..n {
        // Layer 1: h1[u][k] = relu((prop x_i)[u] * w0[0][k] + b0[k]).
        let mut h1 = vec![vec![0.0f64; d]; p];
        for u in 0..p {
            let mut ax = 0.0;
            for v in 0..p {
                ax += prop[[u, v]] * x[[i, v]];
            }
            for k in 0..d {
                h1[u][k] = relu(ax * params.w0[[0, k]] + params.b0[k]);
            }
        }
        // Layer 2: h2[u][m] = relu(sum_k (prop h1)[u][k] w1[k][m] + b1[m]).
        let mut h2 = vec![vec![0.0f64; d]; p];
        for u in 0..p {
            let mut ah = vec![0.0f64; d];
            for v in 0..p {
                for k in 0..d {
                    ah[k] += prop[[u, v]] * h1[v][k];
                }
            }
            for m in 0..d {
                let mut acc = params.b1[m];
                for k in 0..d {
                    acc += ah[k] * params.w1[[k, m]];
                }
                h2[u][m] = relu(acc);
            }
        }
        // Column-mean pooling.
        let mut z = vec![0.0f64; d];
        for m in 0..d {
            for row in h2.iter() {
                z[m] += row[m];
            }
            z[m] /= p as f64;
        }
        // Covariate embedding.
        let mut zc = vec![0.0f64; d_c];
        for e in 0..d_c {
            let mut acc = params.bc[e];
            for r in 0..q {
                acc += c[[i, r]] * params.wc[[r, e]];
            }
            zc[e] = relu(acc);
        }
        // Output head + stable softmax.
        let mut logits = [0.0f64; 3];
        for (k, logit) in logits.iter_mut().enumerate() {
            let mut acc = params.bo[k];
            for (m, zv) in z.iter().enumerate() {
                acc += zv * params.wo[[m, k]];
            }
            for (e, zcv) in zc.iter().enumerate() {
                acc += zcv * params.wo[[d + e, k]];
            }
            *logit = acc;
        }
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        let mut exps = [0.0f64; 3];
        for k in 0..3 {
            exps[k] = (logits[k] - max).exp();
            denom += exps[k];
        }
        for k in 0..3 {
            probs[[i, k]] = exps[k] / denom;
        }
    }
    probs
}

#[test]
fn criterion_02_forward_matches_scalar_loop_reference() {
    let mut worst: f64 = 0.0;
    for t in 0..50u64 {
        let p = 2 + (t as usize) % 7;
        let d = if t % 2 == 0 { 4 } else { 8 };
        let inst = random_instance(p, d, 6, 3, 4, 400 + t);
        let cache = forward_batch(
            &inst.params,
            &inst.propagation,
            &inst.x,
            &inst.c,
            Mode::Eval { bn: None },
        )
        .unwrap();
        let reference = scalar_forward(&inst.params, &inst.propagation, &inst.x, &inst.c);
        for (a, b) in cache.probs.iter().zip(reference.iter()) {
            worst = worst.max((a - b).abs());
        }
    }
    assert!(
        worst < 1e-12,
        "criterion 02: FAIL — max |probs difference| {worst:.3e} >= 1e-12"
    );
    println!("criterion 02: PASS — eval forward matches scalar-loop reference, max abs diff {worst:.3e} < 1e-12 over 50 instances");
}

// ---------------------------------------------------------------------------
// 3. AUC oracle equivalence against O(n^2) pair counting
// ---------------------------------------------------------------------------

fn pair_counting_macro_auc(probs: &Array2<f64>, labels: &[usize]) -> Option<f64> {
    let mut aucs = Vec::new();
    for class in 0..3 {
        let pos: Vec<f64> = probs
            .column(class)
            .iter()
            .zip(labels)
            .filter(|(_, &y)| y == class)
            .map(|(&s, _)| s)
            .collect();
        let neg: Vec<f64> = probs
            .column(class)
            .iter()
            .zip(labels)
            .filter(|(_, &y)| y != class)
            .map(|(&s, _)| s)
            .collect();
        if pos.is_empty() || neg.is_empty() {
            continue;
        }
        let mut total = 0.0;
        for &a in &pos {
            for &b in &neg {
                total += if a > b {
                    1.0
                } else if a == b {
                    0.5
                } else {
                    0.0
                };
            }
        }
        aucs.push(total / (pos.len() * neg.len()) as f64);
    }
    if aucs.is_empty() {
        None
    } else {
        Some(aucs.iter().sum::<f64>() / aucs.len() as f64)
    }
}

#[test]
fn criterion_03_macro_auc_matches_pair_counting() {
    let mut rng = stream_rng(17, "acceptance-auc", 0);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = 40;
        let mut probs = Array2::<f64>::zeros((n, 3));
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            for k in 0..3 {
                // Coarse grid to force ties.
                probs[[i, k]] = (rng.random_range(0..10) as f64) / 10.0;
            }
            labels.push(rng.random_range(0..3usize));
        }
        let (fast, _) = macro_auc(&probs, &labels);
        let slow = pair_counting_macro_auc(&probs, &labels);
        match (fast, slow) {
            (Some(a), Some(b)) => worst = worst.max((a - b).abs()),
            (None, None) => {}
            other => panic!("criterion 03: FAIL — skip semantics disagree: {other:?}"),
        }
    }
    assert!(
        worst < 1e-12,
        "criterion 03: FAIL — max |AUC difference| {worst:.3e} >= 1e-12"
    );
    println!("criterion 03: PASS — rank-based macro AUC matches pair counting, max abs diff {worst:.3e} < 1e-12 over 100 fixtures");
}

// ---------------------------------------------------------------------------
// 4. Intervention algebra on a trained model
// ---------------------------------------------------------------------------

#[test]
fn criterion_04_intervention_algebra() {
    let (model, std_ds, x_test, c_test, _) = small_trained_model(9);
    let p = std_ds.n_nodes();
    let mut worst_sum: f64 = 0.0;

    for node in 0..p {
        let severed =
            severed_propagation(&std_ds.adjacency, node, SeverMode::Renormalize).unwrap();
        let (x_lo, x_hi) = (-1.1, 1.3);
        let fwd = node_contrasts(&model, &severed, &x_test, &c_test, node, x_lo, x_hi).unwrap();
        // Class components of each contrast row sum to zero.
        for row in fwd.rows() {
            worst_sum = worst_sum.max((row[0] + row[1] + row[2]).abs());
        }
        // Swapping the levels negates the contrast exactly.
        let rev = node_contrasts(&model, &severed, &x_test, &c_test, node, x_hi, x_lo).unwrap();
        for (a, b) in fwd.iter().zip(rev.iter()) {
            assert!(
                *a == -*b,
                "criterion 04: FAIL — level swap not an exact negation at node {node}: {a} vs {b}"
            );
        }
    }
    assert!(
        worst_sum < 1e-10,
        "criterion 04: FAIL — contrast components sum to {worst_sum:.3e} >= 1e-10"
    );

    // Severing an already-isolated node must not change predictions.
    let mut adj = Array2::<f64>::zeros((5, 5));
    for i in 0..3 {
        adj[[i, i + 1]] = 1.0;
        adj[[i + 1, i]] = 1.0;
    }
    // Node 4 stays isolated.
    let mut rng = stream_rng(77, "acceptance-isolated", 0);
    let n = 30;
    let mut x = Array2::<f64>::zeros((n, 5));
    let mut c = Array2::<f64>::zeros((n, 3));
    for v in x.iter_mut() {
        *v = rng.random_range(-1.5..1.5);
    }
    for v in c.iter_mut() {
        *v = rng.random_range(-1.5..1.5);
    }
    let params = GcnParams::init(8, 4, 3, &mut rng);
    let propagation = normalize_adjacency(&adj).unwrap();
    let severed = severed_propagation(&adj, 4, SeverMode::Renormalize).unwrap();
    let base = forward_batch(&params, &propagation, &x, &c, Mode::Eval { bn: None })
        .unwrap()
        .probs;
    let after = forward_batch(&params, &severed, &x, &c, Mode::Eval { bn: None })
        .unwrap()
        .probs;
    let mut worst_iso: f64 = 0.0;
    for (a, b) in base.iter().zip(after.iter()) {
        worst_iso = worst_iso.max((a - b).abs());
    }
    assert!(
        worst_iso < 1e-12,
        "criterion 04: FAIL — isolated-node severing moved probabilities by {worst_iso:.3e} >= 1e-12"
    );

    println!(
        "criterion 04: PASS — zero-sum {worst_sum:.3e} < 1e-10 on all {p} nodes, level swap exact, isolated-node no-op {worst_iso:.3e} < 1e-12"
    );
}

// ---------------------------------------------------------------------------
// 5 + 6. Confounded-null recovery and oracle sign agreement
// ---------------------------------------------------------------------------

struct RecoverySeed {
    causal_first: bool,
    marginal_confounded_first: bool,
    signs_agree: bool,
    top_node: usize,
    marginal_top: usize,
}

struct RecoveryStudy {
    seeds: Vec<RecoverySeed>,
    elapsed_s: f64,
}

const CAUSAL_NODE: usize = 2;
const CONFOUNDED_NODES: [usize; 4] = [5, 6, 7, 8];

fn recovery_config(seed: u64) -> RunConfig {
    RunConfig {
        seed,
        k_folds: 2,
        conditioning: Conditioning::Explicit,
        n_components: 8,
        n_bootstrap: 10,
        baselines: false,
        ablation: false,
        hidden_dim: 12,
        covariate_embed_dim: 8,
        dropout: 0.35,
        learning_rate: 5e-3,
        ridge: 5e-4,
        epochs: 80,
        batch_size: Some(256),
        ..RunConfig::default()
    }
}

fn recovery_study() -> &'static RecoveryStudy {
    static STUDY: OnceLock<RecoveryStudy> = OnceLock::new();
    STUDY.get_or_init(|| {
        let started = Instant::now();
        let mut seeds = Vec::new();
        for s in 0..10u64 {
            let seed = 1000 + s;
            let spec = preset("confounded", 10, seed).unwrap();
            let (dataset, truth) = generate_cohort(&spec, 2000).unwrap();
            let out = run_pipeline(&dataset, &recovery_config(seed)).unwrap();

            let top_node = out.report.effects[0].node_id;

            // Associational baseline: |corr(X_j, 1[Y = AD])|.
            let y: Vec<f64> = dataset
                .labels
                .iter()
                .map(|&l| (l == AD_CLASS) as u8 as f64)
                .collect();
            let marginal_top = (0..dataset.n_nodes())
                .map(|j| {
                    let col: Vec<f64> = dataset.features.column(j).iter().copied().collect();
                    (j, pearson(&col, &y).unwrap_or(0.0).abs())
                })
                .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                .unwrap()
                .0;

            // Sign agreement on every node with a material oracle effect.
            let signs_agree = (0..dataset.n_nodes()).all(|j| {
                if truth.true_delta[j].abs() <= 0.05 {
                    return true;
                }
                let est = out
                    .report
                    .effects
                    .iter()
                    .find(|e| e.node_id == j)
                    .unwrap()
                    .delta[AD_CLASS];
                est.signum() == truth.true_delta[j].signum()
            });

            seeds.push(RecoverySeed {
                causal_first: top_node == CAUSAL_NODE,
                marginal_confounded_first: CONFOUNDED_NODES.contains(&marginal_top),
                signs_agree,
                top_node,
                marginal_top,
            });
        }
        RecoveryStudy {
            seeds,
            elapsed_s: started.elapsed().as_secs_f64(),
        }
    })
}

#[test]
fn criterion_05_confounded_null_recovery_beats_marginal_correlation() {
    let study = recovery_study();
    let causal_first = study.seeds.iter().filter(|s| s.causal_first).count();
    let confounded_first = study
        .seeds
        .iter()
        .filter(|s| s.marginal_confounded_first)
        .count();
    let tops: Vec<usize> = study.seeds.iter().map(|s| s.top_node).collect();
    let marg: Vec<usize> = study.seeds.iter().map(|s| s.marginal_top).collect();
    assert!(
        causal_first >= 8,
        "criterion 05: FAIL — causal node ranked first in only {causal_first}/10 seeds (need >= 8); top nodes {tops:?}"
    );
    assert!(
        confounded_first >= 5,
        "criterion 05: FAIL — marginal correlation picked a confounded node first in only {confounded_first}/10 seeds (need >= 5); top nodes {marg:?}"
    );
    assert!(
        study.elapsed_s < 600.0,
        "criterion 05: FAIL — ten-seed study took {:.1} s (budget 600 s)",
        study.elapsed_s
    );
    println!(
        "criterion 05: PASS — causal node first in {causal_first}/10 seeds (>= 8), marginal correlation fooled in {confounded_first}/10 (>= 5), {:.1} s (< 600 s)",
        study.elapsed_s
    );
}

#[test]
fn criterion_06_estimated_signs_match_simulation_oracle() {
    let study = recovery_study();
    let agree = study.seeds.iter().filter(|s| s.signs_agree).count();
    assert!(
        agree >= 8,
        "criterion 06: FAIL — estimate signs matched the oracle on all material nodes in only {agree}/10 seeds (need >= 8)"
    );
    println!(
        "criterion 06: PASS — estimated effect signs match the simulation oracle (|oracle| > 0.05) in {agree}/10 seeds (>= 8)"
    );
}

// ---------------------------------------------------------------------------
// 7. Bootstrap interval behavior
// ---------------------------------------------------------------------------

#[test]
fn criterion_07_bootstrap_width_shrinks_and_degenerates_are_exact() {
    // Width versus evaluation-set size, averaged over 20 repetitions.
    let sizes = [200usize, 600, 2000];
    let mut mean_width = [0.0f64; 3];
    let reps = 20;
    let mut rng = stream_rng(23, "acceptance-bootstrap", 0);
    for _ in 0..reps {
        for (si, &n_eval) in sizes.iter().enumerate() {
            let mut tensor = Array2::<f64>::zeros((n_eval, 3));
            for i in 0..n_eval {
                let v: f64 = rng.random_range(-1.0..1.0) + 0.2;
                tensor[[i, AD_CLASS]] = v;
                tensor[[i, 0]] = -v / 2.0;
                tensor[[i, 1]] = -v / 2.0;
            }
            let contrasts = vec![tensor];
            let folds = vec![&contrasts];
            let replicate_seed: u64 = rng.random_range(0..u64::MAX);
            let draws = bootstrap_replicates(&folds, 200, replicate_seed);
            let (lo, hi) = bootstrap_cis(&draws, 0.05).unwrap();
            mean_width[si] += (hi[0][AD_CLASS] - lo[0][AD_CLASS]) / reps as f64;
        }
    }
    assert!(
        mean_width[0] > mean_width[1] && mean_width[1] > mean_width[2],
        "criterion 07: FAIL — mean CI width not decreasing in evaluation size: {mean_width:?}"
    );

    // Identical subjects: exactly zero width.
    let mut tied = Array2::<f64>::zeros((24, 3));
    for i in 0..24 {
        tied[[i, 0]] = 0.25;
        tied[[i, 1]] = -0.05;
        tied[[i, 2]] = -0.20;
    }
    let contrasts = vec![tied];
    let folds = vec![&contrasts];
    let draws = bootstrap_replicates(&folds, 200, 7);
    let (lo, hi) = bootstrap_cis(&draws, 0.05).unwrap();
    for k in 0..3 {
        assert!(
            lo[0][k] == hi[0][k],
            "criterion 07: FAIL — identical subjects gave nonzero width on class {k}"
        );
    }

    // Single replicate: both percentiles collapse onto it exactly.
    let mut spread = Array2::<f64>::zeros((40, 3));
    for i in 0..40 {
        spread[[i, 2]] = (i as f64) / 10.0 - 2.0;
    }
    let contrasts_one = vec![spread];
    let folds_one = vec![&contrasts_one];
    let draws_one = bootstrap_replicates(&folds_one, 1, 11);
    let (lo1, hi1) = bootstrap_cis(&draws_one, 0.05).unwrap();
    assert!(
        lo1[0][2] == hi1[0][2],
        "criterion 07: FAIL — single-replicate interval has nonzero width"
    );

    println!(
        "criterion 07: PASS — mean width {:.4} (n=200) > {:.4} (n=600) > {:.4} (n=2000) over 20 reps; degenerate cases exactly zero-width",
        mean_width[0], mean_width[1], mean_width[2]
    );
}

// ---------------------------------------------------------------------------
// 8. Byte-identical determinism
// ---------------------------------------------------------------------------

#[test]
fn criterion_08_reruns_are_byte_identical() {
    let spec = preset("confounded", 6, 31).unwrap();
    let (dataset, _) = generate_cohort(&spec, 120).unwrap();
    let config = RunConfig {
        seed: 5,
        k_folds: 2,
        n_components: 3,
        n_bootstrap: 50,
        hidden_dim: 8,
        covariate_embed_dim: 4,
        epochs: 12,
        dropout: 0.3,
        batch_size: Some(32),
        ..RunConfig::default()
    };
    let a = run_pipeline(&dataset, &config).unwrap();
    let b = run_pipeline(&dataset, &config).unwrap();
    let report_a = report_json(&a.report).unwrap();
    let report_b = report_json(&b.report).unwrap();
    let csv_a = effects_csv(&a.report);
    let csv_b = effects_csv(&b.report);
    assert!(
        report_a == report_b,
        "criterion 08: FAIL — report.json differs between identical runs"
    );
    assert!(
        csv_a == csv_b,
        "criterion 08: FAIL — effects.csv differs between identical runs"
    );
    println!(
        "criterion 08: PASS — two identical runs give byte-identical report.json ({} bytes) and effects.csv ({} bytes)",
        report_a.len(),
        csv_a.len()
    );
}

// ---------------------------------------------------------------------------
// 9. Leakage canary
// ---------------------------------------------------------------------------

#[test]
fn criterion_09_leaking_a_test_subject_changes_fitted_statistics() {
    let spec = preset("single-cause", 8, 13).unwrap();
    let (dataset, _) = generate_cohort(&spec, 150).unwrap();
    let folds = stratified_kfold(&dataset.labels, 3, 13).unwrap();
    let split = &folds[0];

    let (_, scaler_clean) = standardize(&dataset, &split.train_idx).unwrap();
    let mut leaked_idx = split.train_idx.clone();
    leaked_idx.push(split.test_idx[0]);
    let (_, scaler_leaked) = standardize(&dataset, &leaked_idx).unwrap();

    let scaler_shift = scaler_clean
        .feature_mean
        .iter()
        .zip(&scaler_leaked.feature_mean)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    assert!(
        scaler_shift > 1e-12,
        "criterion 09: FAIL — leaking a test subject left the scaler unchanged"
    );

    let gather = |idx: &[usize]| {
        let mut out = Array2::<f64>::zeros((idx.len(), dataset.n_nodes()));
        for (r, &i) in idx.iter().enumerate() {
            out.row_mut(r).assign(&dataset.features.row(i));
        }
        out
    };
    let basis_clean = fit_basis(&gather(&split.train_idx), 0, 4).unwrap();
    let basis_leaked = fit_basis(&gather(&leaked_idx), 0, 4).unwrap();
    let basis_shift = basis_clean
        .basis
        .iter()
        .zip(basis_leaked.basis.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    assert!(
        basis_shift > 1e-12,
        "criterion 09: FAIL — leaking a test subject left the adjustment basis unchanged"
    );

    println!(
        "criterion 09: PASS — one leaked test subject moves the scaler (max mean shift {scaler_shift:.3e}) and the adjustment basis (max entry shift {basis_shift:.3e}); fit-on-train is load-bearing"
    );
}

// ---------------------------------------------------------------------------
// 10. Effect-vs-ablation concordance on the single-cause fixture
// ---------------------------------------------------------------------------

fn concordance_config(seed: u64) -> RunConfig {
    RunConfig {
        k_folds: 3,
        n_components: 4,
        dropout: 0.1,
        epochs: 100,
        ablation: true,
        ..recovery_config(seed)
    }
}

#[test]
fn criterion_10_effect_ranking_concords_with_ablation_response() {
    let mut rhos = Vec::new();
    for s in 0..10u64 {
        let seed = 2000 + s;
        let spec = preset("single-cause", 10, seed).unwrap();
        let (dataset, _) = generate_cohort(&spec, 2000).unwrap();
        let out = run_pipeline(&dataset, &concordance_config(seed)).unwrap();
        rhos.push(
            out.report
                .concordance
                .effect_vs_ablation
                .expect("concordance must be reported when ablation ran"),
        );
    }
    let positive = rhos.iter().filter(|&&r| r > 0.3).count();
    let shown: Vec<f64> = rhos.iter().map(|r| (r * 1000.0).round() / 1000.0).collect();
    assert!(
        positive >= 8,
        "criterion 10: FAIL — Spearman(|effect|, |ablation response|) > 0.3 in only {positive}/10 seeds: {shown:?}"
    );
    println!(
        "criterion 10: PASS — effect-vs-ablation Spearman > 0.3 in {positive}/10 seeds (>= 8): {shown:?}"
    );
}
