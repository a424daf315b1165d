//! Cohort loading, validation, standardization and fold splitting.
//!
//! A cohort is a set of subjects sharing one graph topology: per-subject
//! scalar node features, a handful of subject covariates, a three-class
//! label, and a single symmetric adjacency over nodes. All functions here
//! are pure over immutable inputs and safe to call concurrently.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::seeding::stream_rng;

/// Canonical class names, in label-id order.
pub const CLASS_NAMES: [&str; 3] = ["CN", "MCI", "AD"];

/// Index of the AD class in label ids and probability vectors.
pub const AD_CLASS: usize = 2;

/// In-memory cohort: shared topology, per-subject features/covariates/labels.
#[derive(Debug, Clone)]
pub struct CohortDataset {
    /// Sorted subject identifiers; row order of all per-subject matrices.
    pub subject_ids: Vec<String>,
    /// Node names, column order of `features` and both axes of `adjacency`.
    pub node_names: Vec<String>,
    /// Covariate names (columns of `covariates`).
    pub covariate_names: Vec<String>,
    /// N x p scalar node features.
    pub features: Array2<f64>,
    /// N x q subject covariates.
    pub covariates: Array2<f64>,
    /// Class ids in {0, 1, 2}.
    pub labels: Vec<usize>,
    /// Shared p x p symmetric adjacency, zero diagonal, weights in [0, 1]
    /// once thresholded; the loader accepts any nonnegative weights.
    pub adjacency: Array2<f64>,
}

impl CohortDataset {
    /// Number of subjects.
    pub fn n_subjects(&self) -> usize {
        self.features.nrows()
    }

    /// Number of nodes.
    pub fn n_nodes(&self) -> usize {
        self.features.ncols()
    }

    /// Number of covariates.
    pub fn n_covariates(&self) -> usize {
        self.covariates.ncols()
    }

    /// Per-class subject counts.
    pub fn class_counts(&self) -> [usize; 3] {
        let mut counts = [0usize; 3];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Structural validation: shape agreement, adjacency symmetry and
    /// nonnegativity, finite values everywhere.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_subjects();
        let p = self.n_nodes();
        if self.subject_ids.len() != n {
            return Err(CoreError::data("subject id count != feature rows"));
        }
        if self.labels.len() != n {
            return Err(CoreError::data("label count != feature rows"));
        }
        if self.covariates.nrows() != n {
            return Err(CoreError::data("covariate rows != feature rows"));
        }
        if self.node_names.len() != p {
            return Err(CoreError::data("node name count != feature columns"));
        }
        if self.covariate_names.len() != self.covariates.ncols() {
            return Err(CoreError::data("covariate name count != covariate columns"));
        }
        if self.adjacency.nrows() != p || self.adjacency.ncols() != p {
            return Err(CoreError::data(format!(
                "adjacency is {}x{} but cohort has {} nodes",
                self.adjacency.nrows(),
                self.adjacency.ncols(),
                p
            )));
        }
        if self.labels.iter().any(|&y| y > 2) {
            return Err(CoreError::data("label id outside {0,1,2}"));
        }
        for m in [&self.features, &self.covariates, &self.adjacency] {
            if m.iter().any(|v| !v.is_finite()) {
                return Err(CoreError::data("non-finite value in cohort matrices"));
            }
        }
        check_symmetric(&self.adjacency)?;
        if self.adjacency.iter().any(|&v| v < 0.0) {
            return Err(CoreError::data("adjacency has negative weights"));
        }
        for i in 0..p {
            if self.adjacency[[i, i]] != 0.0 {
                return Err(CoreError::data(format!(
                    "adjacency diagonal must be zero (node {i})"
                )));
            }
        }
        Ok(())
    }
}

fn check_symmetric(a: &Array2<f64>) -> Result<()> {
    for i in 0..a.nrows() {
        for j in (i + 1)..a.ncols() {
            if (a[[i, j]] - a[[j, i]]).abs() > 1e-9 {
                return Err(CoreError::data(format!(
                    "adjacency asymmetric at ({i},{j}): {} vs {}",
                    a[[i, j]],
                    a[[j, i]]
                )));
            }
        }
    }
    Ok(())
}

/// One cross-validation split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldSplit {
    pub fold_id: usize,
    pub train_idx: Vec<usize>,
    pub val_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
}

/// Column means and standard deviations fitted on training subjects.
///
/// Standard deviations use the population convention (denominator n); a
/// constant column records sd 1 so it transforms to all zeros on the
/// fitting set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerState {
    pub feature_mean: Vec<f64>,
    pub feature_sd: Vec<f64>,
    pub covariate_mean: Vec<f64>,
    pub covariate_sd: Vec<f64>,
    /// Recorded convention for the sd denominator.
    pub sd_convention: String,
}

fn fit_columns(m: &Array2<f64>, rows: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let cols = m.ncols();
    let n = rows.len() as f64;
    let mut mean = vec![0.0; cols];
    let mut sd = vec![0.0; cols];
    for j in 0..cols {
        let mut s = 0.0;
        for &i in rows {
            s += m[[i, j]];
        }
        mean[j] = s / n;
        let mut ss = 0.0;
        for &i in rows {
            let d = m[[i, j]] - mean[j];
            ss += d * d;
        }
        let v = (ss / n).sqrt();
        sd[j] = if v > 0.0 { v } else { 1.0 };
    }
    (mean, sd)
}

fn transform_columns(m: &Array2<f64>, mean: &[f64], sd: &[f64]) -> Array2<f64> {
    let mut out = m.clone();
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            out[[i, j]] = (m[[i, j]] - mean[j]) / sd[j];
        }
    }
    out
}

impl ScalerState {
    /// Fits column statistics on the given subject rows.
    pub fn fit(dataset: &CohortDataset, fit_idx: &[usize]) -> Result<Self> {
        if fit_idx.is_empty() {
            return Err(CoreError::data("standardize: empty fitting index list"));
        }
        let n = dataset.n_subjects();
        if fit_idx.iter().any(|&i| i >= n) {
            return Err(CoreError::data("standardize: fitting index out of range"));
        }
        let (fm, fs) = fit_columns(&dataset.features, fit_idx);
        let (cm, cs) = fit_columns(&dataset.covariates, fit_idx);
        Ok(ScalerState {
            feature_mean: fm,
            feature_sd: fs,
            covariate_mean: cm,
            covariate_sd: cs,
            sd_convention: "population".to_string(),
        })
    }

    /// Applies the fitted statistics to every subject in the dataset.
    pub fn transform(&self, dataset: &CohortDataset) -> CohortDataset {
        let mut out = dataset.clone();
        out.features = transform_columns(&dataset.features, &self.feature_mean, &self.feature_sd);
        out.covariates =
            transform_columns(&dataset.covariates, &self.covariate_mean, &self.covariate_sd);
        out
    }
}

/// Z-scores features and covariates using statistics from `fit_idx` only.
///
/// Returns the transformed dataset (all subjects transformed with the
/// training statistics) and the fitted scaler for later reuse.
pub fn standardize(
    dataset: &CohortDataset,
    fit_idx: &[usize],
) -> Result<(CohortDataset, ScalerState)> {
    let scaler = ScalerState::fit(dataset, fit_idx)?;
    Ok((scaler.transform(dataset), scaler))
}

/// Outcome of adjacency thresholding.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ThresholdSummary {
    /// Threshold actually applied.
    pub tau: f64,
    /// Fraction of off-diagonal entries nonzero after rescaling.
    pub density: f64,
}

/// Symmetrizes (elementwise max), zeroes entries below a threshold and
/// min-max rescales the surviving weights to [0, 1].
///
/// Exactly one of `tau` / `target_density` may be given; with neither,
/// a target density of 0.15 is used. When a target density is given the
/// threshold is the matching quantile of the off-diagonal weights.
pub fn threshold_and_rescale(
    adjacency: &Array2<f64>,
    tau: Option<f64>,
    target_density: Option<f64>,
) -> Result<(Array2<f64>, ThresholdSummary)> {
    let p = adjacency.nrows();
    if p != adjacency.ncols() {
        return Err(CoreError::data("threshold: adjacency not square"));
    }
    if p < 2 {
        return Err(CoreError::data("threshold: need at least 2 nodes"));
    }
    if adjacency.iter().any(|&v| !v.is_finite() || v < 0.0) {
        return Err(CoreError::data(
            "threshold: adjacency must be finite and nonnegative",
        ));
    }
    if tau.is_some() && target_density.is_some() {
        return Err(CoreError::config(
            "threshold: tau and target_density are mutually exclusive",
        ));
    }

    let mut a = Array2::<f64>::zeros((p, p));
    for i in 0..p {
        for j in 0..p {
            if i != j {
                a[[i, j]] = adjacency[[i, j]].max(adjacency[[j, i]]);
            }
        }
    }

    let tau = match (tau, target_density) {
        (Some(t), None) => t,
        (maybe_none, density) => {
            let d = density.unwrap_or(0.15);
            debug_assert!(maybe_none.is_none());
            if !(0.0 < d && d <= 1.0) {
                return Err(CoreError::config(format!(
                    "threshold: target density {d} outside (0, 1]"
                )));
            }
            let mut weights = Vec::with_capacity(p * (p - 1));
            for i in 0..p {
                for j in 0..p {
                    if i != j {
                        weights.push(a[[i, j]]);
                    }
                }
            }
            crate::linalg::percentile(&weights, 1.0 - d)?
        }
    };

    for v in a.iter_mut() {
        if *v < tau {
            *v = 0.0;
        }
    }

    let survivors: Vec<f64> = a.iter().copied().filter(|&v| v > 0.0).collect();
    if survivors.is_empty() {
        return Err(CoreError::data("graph fully disconnected"));
    }
    let lo = survivors.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = survivors.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        for v in a.iter_mut() {
            if *v > 0.0 {
                *v = (*v - lo) / (hi - lo);
            }
        }
    } else {
        for v in a.iter_mut() {
            if *v > 0.0 {
                *v = 1.0;
            }
        }
    }

    let nonzero = a.iter().filter(|&&v| v != 0.0).count();
    let density = nonzero as f64 / (p * (p - 1)) as f64;
    if nonzero == 0 {
        return Err(CoreError::data("graph fully disconnected"));
    }
    Ok((a, ThresholdSummary { tau, density }))
}

/// Self-loop augmented symmetric normalization:
/// `Ã = D^{-1/2} (A + I) D^{-1/2}` with `D` the degree matrix of `A + I`.
pub fn normalize_adjacency(adjacency: &Array2<f64>) -> Result<Array2<f64>> {
    let p = adjacency.nrows();
    if p != adjacency.ncols() {
        return Err(CoreError::data("normalize: adjacency not square"));
    }
    check_symmetric(adjacency)?;
    if adjacency.iter().any(|&v| !v.is_finite() || v < 0.0) {
        return Err(CoreError::data(
            "normalize: adjacency must be finite and nonnegative",
        ));
    }
    let mut s = adjacency.clone();
    for i in 0..p {
        s[[i, i]] += 1.0;
    }
    let mut dinv = Array1::<f64>::zeros(p);
    for i in 0..p {
        let deg: f64 = s.row(i).sum();
        dinv[i] = 1.0 / deg.sqrt();
    }
    let mut out = s;
    for i in 0..p {
        for j in 0..p {
            out[[i, j]] *= dinv[i] * dinv[j];
        }
    }
    Ok(out)
}

/// Stratified k-fold splits with a validation carve.
///
/// Subjects of each class are shuffled once, dealt round-robin into k test
/// folds, and within each fold the last 20% of the remaining training
/// subjects of each class become the validation set. Deterministic for a
/// fixed seed. `k == n` (exact leave-one-out) is allowed even though
/// classes then hold fewer members than folds.
pub fn stratified_kfold(labels: &[usize], k: usize, seed: u64) -> Result<Vec<FoldSplit>> {
    let n = labels.len();
    if k < 2 {
        return Err(CoreError::config("kfold: need at least 2 folds"));
    }
    if k > n {
        return Err(CoreError::config(format!(
            "kfold: {k} folds but only {n} subjects"
        )));
    }
    if labels.iter().any(|&y| y > 2) {
        return Err(CoreError::data("kfold: label id outside {0,1,2}"));
    }
    let mut per_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &y) in labels.iter().enumerate() {
        per_class.entry(y).or_default().push(i);
    }
    if k < n {
        for (&c, members) in &per_class {
            if members.len() < k {
                return Err(CoreError::data(format!(
                    "kfold: class {} has {} members, fewer than {} folds",
                    CLASS_NAMES[c],
                    members.len(),
                    k
                )));
            }
        }
    }

    let mut rng = stream_rng(seed, "kfold", 0);
    let mut shuffled: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (&c, members) in &per_class {
        let mut m = members.clone();
        m.shuffle(&mut rng);
        shuffled.insert(c, m);
    }

    // Deal shuffled members of each class to consecutive test folds,
    // continuing the cursor across classes: per-class fold counts stay
    // within one of each other, and k == n is exact leave-one-out.
    let mut fold_of = vec![0usize; n];
    let mut cursor = 0usize;
    for members in shuffled.values() {
        for (pos, &s) in members.iter().enumerate() {
            fold_of[s] = (cursor + pos) % k;
        }
        cursor = (cursor + members.len()) % k;
    }

    let mut folds = Vec::with_capacity(k);
    for fold_id in 0..k {
        let mut test_idx = Vec::new();
        let mut train_idx = Vec::new();
        let mut val_idx = Vec::new();
        for members in shuffled.values() {
            let in_test: Vec<usize> = members
                .iter()
                .filter(|&&s| fold_of[s] == fold_id)
                .copied()
                .collect();
            let in_train: Vec<usize> = members
                .iter()
                .filter(|&&s| fold_of[s] != fold_id)
                .copied()
                .collect();
            let n_val = ((in_train.len() as f64) * 0.2).floor() as usize;
            let cut = in_train.len() - n_val;
            train_idx.extend_from_slice(&in_train[..cut]);
            val_idx.extend_from_slice(&in_train[cut..]);
            test_idx.extend(in_test);
        }
        train_idx.sort_unstable();
        val_idx.sort_unstable();
        test_idx.sort_unstable();
        if train_idx.is_empty() || test_idx.is_empty() {
            return Err(CoreError::data(format!(
                "kfold: fold {fold_id} has an empty train or test part"
            )));
        }
        folds.push(FoldSplit {
            fold_id,
            train_idx,
            val_idx,
            test_idx,
        });
    }
    Ok(folds)
}

// ---------------------------------------------------------------------------
// CSV input/output
// ---------------------------------------------------------------------------

fn parse_cell(raw: &str, file: &str, row: usize, col: &str) -> Result<f64> {
    match raw.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(CoreError::Csv(format!(
            "{file}: non-numeric cell at row {row}, column {col}: {raw:?}"
        ))),
    }
}

fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CoreError::Csv(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| CoreError::Csv(format!("{}: {e}", path.display())))?
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| CoreError::Csv(format!("{}: {e}", path.display())))?;
        rows.push(rec.iter().map(|s| s.to_string()).collect());
    }
    Ok((header, rows))
}

/// Parses a label token: canonical class names or numeric ids 0/1/2.
pub fn parse_label(raw: &str) -> Result<usize> {
    match raw.trim() {
        "CN" | "0" => Ok(0),
        "MCI" | "1" => Ok(1),
        "AD" | "2" => Ok(2),
        other => Err(CoreError::data(format!("unknown class label {other:?}"))),
    }
}

/// Loads a cohort from four CSV files.
///
/// `features.csv`: subject_id plus one column per node. `covariates.csv`:
/// subject_id plus numeric covariates. `labels.csv`: subject_id, label.
/// The adjacency file is either a dense p x p table (any header) or an
/// edge list with header `src,dst,weight`, symmetrized on load. Subjects
/// are joined on `subject_id` and ordered by sorted id.
pub fn load_cohort(
    features_path: &Path,
    covariates_path: &Path,
    labels_path: &Path,
    adjacency_path: &Path,
) -> Result<CohortDataset> {
    let (fheader, frows) = read_table(features_path)?;
    if fheader.len() < 2 || fheader[0] != "subject_id" {
        return Err(CoreError::data(format!(
            "{}: expected header starting with subject_id",
            features_path.display()
        )));
    }
    let node_names: Vec<String> = fheader[1..].to_vec();
    let p = node_names.len();

    let mut feat_map: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let fname = features_path.display().to_string();
    for (r, row) in frows.iter().enumerate() {
        if row.len() != p + 1 {
            return Err(CoreError::data(format!(
                "{fname}: row {} has {} cells, expected {}",
                r + 2,
                row.len(),
                p + 1
            )));
        }
        let mut vals = Vec::with_capacity(p);
        for (c, cell) in row[1..].iter().enumerate() {
            vals.push(parse_cell(cell, &fname, r + 2, &node_names[c])?);
        }
        if feat_map.insert(row[0].clone(), vals).is_some() {
            return Err(CoreError::data(format!(
                "{fname}: duplicate subject_id {:?}",
                row[0]
            )));
        }
    }

    let (cheader, crows) = read_table(covariates_path)?;
    if cheader.len() < 2 || cheader[0] != "subject_id" {
        return Err(CoreError::data(format!(
            "{}: expected header starting with subject_id",
            covariates_path.display()
        )));
    }
    let covariate_names: Vec<String> = cheader[1..].to_vec();
    let q = covariate_names.len();
    let cname = covariates_path.display().to_string();
    let mut cov_map: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (r, row) in crows.iter().enumerate() {
        if row.len() != q + 1 {
            return Err(CoreError::data(format!(
                "{cname}: row {} has {} cells, expected {}",
                r + 2,
                row.len(),
                q + 1
            )));
        }
        let mut vals = Vec::with_capacity(q);
        for (c, cell) in row[1..].iter().enumerate() {
            vals.push(parse_cell(cell, &cname, r + 2, &covariate_names[c])?);
        }
        if cov_map.insert(row[0].clone(), vals).is_some() {
            return Err(CoreError::data(format!(
                "{cname}: duplicate subject_id {:?}",
                row[0]
            )));
        }
    }

    let (lheader, lrows) = read_table(labels_path)?;
    if lheader.len() != 2 || lheader[0] != "subject_id" {
        return Err(CoreError::data(format!(
            "{}: expected header subject_id,label",
            labels_path.display()
        )));
    }
    let mut label_map: BTreeMap<String, usize> = BTreeMap::new();
    for row in &lrows {
        if row.len() != 2 {
            return Err(CoreError::data(format!(
                "{}: malformed label row",
                labels_path.display()
            )));
        }
        if label_map.insert(row[0].clone(), parse_label(&row[1])?).is_some() {
            return Err(CoreError::data(format!(
                "{}: duplicate subject_id {:?}",
                labels_path.display(),
                row[0]
            )));
        }
    }

    if feat_map.len() != cov_map.len() || feat_map.len() != label_map.len() {
        return Err(CoreError::data(format!(
            "row counts disagree: {} feature, {} covariate, {} label subjects",
            feat_map.len(),
            cov_map.len(),
            label_map.len()
        )));
    }
    for id in feat_map.keys() {
        if !cov_map.contains_key(id) {
            return Err(CoreError::data(format!("subject {id:?} missing covariates")));
        }
        if !label_map.contains_key(id) {
            return Err(CoreError::data(format!("subject {id:?} missing label")));
        }
    }

    let subject_ids: Vec<String> = feat_map.keys().cloned().collect();
    let n = subject_ids.len();
    if n == 0 {
        return Err(CoreError::data("cohort has no subjects"));
    }
    let mut features = Array2::<f64>::zeros((n, p));
    let mut covariates = Array2::<f64>::zeros((n, q));
    let mut labels = Vec::with_capacity(n);
    for (i, id) in subject_ids.iter().enumerate() {
        for (j, v) in feat_map[id].iter().enumerate() {
            features[[i, j]] = *v;
        }
        for (j, v) in cov_map[id].iter().enumerate() {
            covariates[[i, j]] = *v;
        }
        labels.push(label_map[id]);
    }

    let adjacency = load_adjacency(adjacency_path, &node_names)?;

    let dataset = CohortDataset {
        subject_ids,
        node_names,
        covariate_names,
        features,
        covariates,
        labels,
        adjacency,
    };
    dataset.validate()?;
    Ok(dataset)
}

fn load_adjacency(path: &Path, node_names: &[String]) -> Result<Array2<f64>> {
    let p = node_names.len();
    let (header, rows) = read_table(path)?;
    let fname = path.display().to_string();
    let is_edge_list = header == ["src", "dst", "weight"];
    let mut a = Array2::<f64>::zeros((p, p));
    if is_edge_list {
        let lookup: BTreeMap<&str, usize> = node_names
            .iter()
            .enumerate()
            .map(|(i, nm)| (nm.as_str(), i))
            .collect();
        let resolve = |token: &str, row: usize| -> Result<usize> {
            if let Some(&i) = lookup.get(token) {
                return Ok(i);
            }
            match token.parse::<usize>() {
                Ok(i) if i < p => Ok(i),
                _ => Err(CoreError::data(format!(
                    "{fname}: row {row}: unknown node {token:?}"
                ))),
            }
        };
        for (r, row) in rows.iter().enumerate() {
            if row.len() != 3 {
                return Err(CoreError::data(format!("{fname}: malformed edge row")));
            }
            let i = resolve(&row[0], r + 2)?;
            let j = resolve(&row[1], r + 2)?;
            let w = parse_cell(&row[2], &fname, r + 2, "weight")?;
            if w < 0.0 {
                return Err(CoreError::data(format!(
                    "{fname}: negative edge weight at row {}",
                    r + 2
                )));
            }
            if i == j {
                log::warn!("{fname}: ignoring self-edge on node {i}");
                continue;
            }
            a[[i, j]] = a[[i, j]].max(w);
            a[[j, i]] = a[[j, i]].max(w);
        }
    } else {
        if header.len() != p {
            return Err(CoreError::data(format!(
                "{fname}: dense adjacency has {} columns, cohort has {} nodes",
                header.len(),
                p
            )));
        }
        if rows.len() != p {
            return Err(CoreError::data(format!(
                "{fname}: dense adjacency has {} rows, cohort has {} nodes",
                rows.len(),
                p
            )));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(CoreError::data(format!(
                    "{fname}: row {} has {} cells, expected {p}",
                    i + 2,
                    row.len()
                )));
            }
            for (j, cell) in row.iter().enumerate() {
                a[[i, j]] = parse_cell(cell, &fname, i + 2, &header[j])?;
            }
        }
        for i in 0..p {
            for j in (i + 1)..p {
                if (a[[i, j]] - a[[j, i]]).abs() > 1e-9 {
                    return Err(CoreError::data(format!(
                        "{fname}: asymmetric adjacency at ({i},{j}): {} vs {}",
                        a[[i, j]],
                        a[[j, i]]
                    )));
                }
                // Remove sub-tolerance asymmetry so downstream exactness holds.
                let v = a[[i, j]];
                a[[j, i]] = v;
            }
        }
        for i in 0..p {
            if a[[i, i]] != 0.0 {
                log::warn!("{fname}: zeroing nonzero diagonal at node {i}");
                a[[i, i]] = 0.0;
            }
        }
    }
    if a.iter().any(|&v| v < 0.0) {
        return Err(CoreError::data(format!("{fname}: negative weights")));
    }
    Ok(a)
}

/// Formats a float for canonical CSV output (shortest round-trip form).
pub fn fmt_float(v: f64) -> String {
    let mut s = String::new();
    let _ = write!(s, "{v}");
    s
}

/// Writes the cohort as the four canonical CSV files into `dir`.
///
/// Uses shortest round-trip float formatting, so
/// `write_cohort(load_cohort(write_cohort(ds)))` is byte-stable.
pub fn write_cohort(dataset: &CohortDataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let n = dataset.n_subjects();
    let p = dataset.n_nodes();

    let mut features = String::new();
    features.push_str("subject_id");
    for name in &dataset.node_names {
        features.push(',');
        features.push_str(name);
    }
    features.push('\n');
    for i in 0..n {
        features.push_str(&dataset.subject_ids[i]);
        for j in 0..p {
            features.push(',');
            features.push_str(&fmt_float(dataset.features[[i, j]]));
        }
        features.push('\n');
    }
    std::fs::write(dir.join("features.csv"), features)?;

    let mut covariates = String::new();
    covariates.push_str("subject_id");
    for name in &dataset.covariate_names {
        covariates.push(',');
        covariates.push_str(name);
    }
    covariates.push('\n');
    for i in 0..n {
        covariates.push_str(&dataset.subject_ids[i]);
        for j in 0..dataset.n_covariates() {
            covariates.push(',');
            covariates.push_str(&fmt_float(dataset.covariates[[i, j]]));
        }
        covariates.push('\n');
    }
    std::fs::write(dir.join("covariates.csv"), covariates)?;

    let mut labels = String::from("subject_id,label\n");
    for i in 0..n {
        labels.push_str(&dataset.subject_ids[i]);
        labels.push(',');
        labels.push_str(CLASS_NAMES[dataset.labels[i]]);
        labels.push('\n');
    }
    std::fs::write(dir.join("labels.csv"), labels)?;

    let mut adjacency = String::new();
    for (j, name) in dataset.node_names.iter().enumerate() {
        if j > 0 {
            adjacency.push(',');
        }
        adjacency.push_str(name);
    }
    adjacency.push('\n');
    for i in 0..p {
        for j in 0..p {
            if j > 0 {
                adjacency.push(',');
            }
            adjacency.push_str(&fmt_float(dataset.adjacency[[i, j]]));
        }
        adjacency.push('\n');
    }
    std::fs::write(dir.join("adjacency.csv"), adjacency)?;
    Ok(())
}

/// Convenience loader for a directory holding the canonical file names.
pub fn load_cohort_dir(dir: &Path) -> Result<CohortDataset> {
    let adjacency = if dir.join("adjacency.csv").exists() {
        dir.join("adjacency.csv")
    } else {
        dir.join("edges.csv")
    };
    load_cohort(
        &dir.join("features.csv"),
        &dir.join("covariates.csv"),
        &dir.join("labels.csv"),
        &adjacency,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn toy_dataset() -> CohortDataset {
        CohortDataset {
            subject_ids: vec!["s1".into(), "s2".into(), "s3".into(), "s4".into()],
            node_names: vec!["n0".into(), "n1".into(), "n2".into()],
            covariate_names: vec!["age".into(), "sex".into(), "apoe4".into()],
            features: array![
                [1.0, 0.5, -0.25],
                [2.0, 1.5, 0.75],
                [3.0, 2.5, 1.75],
                [4.0, 3.5, 2.75]
            ],
            covariates: array![
                [60.0, 1.0, -1.0],
                [70.0, -1.0, 1.0],
                [80.0, 1.0, 1.0],
                [65.0, -1.0, -1.0]
            ],
            labels: vec![0, 1, 2, 0],
            adjacency: array![[0.0, 1.0, 0.0], [1.0, 0.0, 0.5], [0.0, 0.5, 0.0]],
        }
    }

    fn write_toy_files(dir: &Path) {
        write_cohort(&toy_dataset(), dir).unwrap();
    }

    #[test]
    fn load_toy_bundle() {
        let dir = tempfile::tempdir().unwrap();
        write_toy_files(dir.path());
        let ds = load_cohort_dir(dir.path()).unwrap();
        assert_eq!(ds.n_subjects(), 4);
        assert_eq!(ds.n_nodes(), 3);
        assert_eq!(ds.n_covariates(), 3);
        assert_eq!(ds.labels, vec![0, 1, 2, 0]);
        assert_eq!(ds.subject_ids, vec!["s1", "s2", "s3", "s4"]);
        assert_eq!(ds.adjacency[[0, 1]], 1.0);
    }

    #[test]
    fn roundtrip_is_byte_identical() {
        let dir1 = tempfile::tempdir().unwrap();
        write_toy_files(dir1.path());
        let ds = load_cohort_dir(dir1.path()).unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        write_cohort(&ds, dir2.path()).unwrap();
        for f in ["features.csv", "covariates.csv", "labels.csv", "adjacency.csv"] {
            let a = std::fs::read(dir1.path().join(f)).unwrap();
            let b = std::fs::read(dir2.path().join(f)).unwrap();
            assert_eq!(a, b, "{f} changed across a load/write cycle");
        }
    }

    #[test]
    fn asymmetric_adjacency_names_cell() {
        let dir = tempfile::tempdir().unwrap();
        write_toy_files(dir.path());
        std::fs::write(
            dir.path().join("adjacency.csv"),
            "n0,n1,n2\n0,1,0\n0.5,0,0.5\n0,0.5,0\n",
        )
        .unwrap();
        let err = load_cohort_dir(dir.path()).unwrap_err().to_string();
        assert!(err.contains("(0,1)"), "missing cell location: {err}");
    }

    #[test]
    fn unknown_class_label_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_toy_files(dir.path());
        std::fs::write(
            dir.path().join("labels.csv"),
            "subject_id,label\ns1,CN\ns2,3\ns3,AD\ns4,CN\n",
        )
        .unwrap();
        let err = load_cohort_dir(dir.path()).unwrap_err().to_string();
        assert!(err.contains("unknown class"), "{err}");
    }

    #[test]
    fn non_numeric_cell_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_toy_files(dir.path());
        std::fs::write(
            dir.path().join("features.csv"),
            "subject_id,n0,n1,n2\ns1,1,2,3\ns2,1,x,3\ns3,1,2,3\ns4,1,2,3\n",
        )
        .unwrap();
        let err = load_cohort_dir(dir.path()).unwrap_err().to_string();
        assert!(err.contains("non-numeric"), "{err}");
        assert!(err.contains("n1"), "{err}");
    }

    #[test]
    fn edge_list_adjacency_symmetrizes() {
        let dir = tempfile::tempdir().unwrap();
        write_toy_files(dir.path());
        std::fs::remove_file(dir.path().join("adjacency.csv")).unwrap();
        std::fs::write(dir.path().join("edges.csv"), "src,dst,weight\n0,1,1\nn1,n2,0.5\n")
            .unwrap();
        let ds = load_cohort_dir(dir.path()).unwrap();
        assert_eq!(ds.adjacency[[1, 0]], 1.0);
        assert_eq!(ds.adjacency[[2, 1]], 0.5);
        assert_eq!(ds.adjacency[[0, 2]], 0.0);
    }

    #[test]
    fn standardize_two_point_column() {
        let mut ds = toy_dataset();
        ds.features = array![[2.0, 0.0, 1.0], [4.0, 1.0, 1.0], [9.0, 9.0, 9.0], [9.0, 9.0, 9.0]];
        let (out, scaler) = standardize(&ds, &[0, 1]).unwrap();
        // Population sd of {2,4} is 1, so values map to -1 and +1.
        assert!((out.features[[0, 0]] + 1.0).abs() < 1e-12);
        assert!((out.features[[1, 0]] - 1.0).abs() < 1e-12);
        assert_eq!(scaler.sd_convention, "population");
    }

    #[test]
    fn standardize_constant_column_zeroes() {
        let mut ds = toy_dataset();
        ds.features = array![[5.0, 1.0, 2.0], [5.0, 2.0, 3.0], [5.0, 3.0, 4.0], [5.0, 4.0, 5.0]];
        let (out, scaler) = standardize(&ds, &[0, 1, 2, 3]).unwrap();
        assert_eq!(scaler.feature_sd[0], 1.0);
        for i in 0..4 {
            assert_eq!(out.features[[i, 0]], 0.0);
        }
    }

    #[test]
    fn held_out_subject_uses_training_stats() {
        // Fit on subjects {0,1} with column {1,2}: mean 1.5, population sd 0.5.
        // Held-out value 3 maps to (3 - 1.5) / 0.5 = 3.
        let mut ds = toy_dataset();
        ds.subject_ids.truncate(3);
        ds.labels.truncate(3);
        ds.features = array![[1.0, 0.0, 0.0], [2.0, 0.0, 0.0], [3.0, 0.0, 0.0]];
        ds.covariates = array![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]];
        let (out, _) = standardize(&ds, &[0, 1]).unwrap();
        assert!((out.features[[0, 0]] + 1.0).abs() < 1e-12);
        assert!((out.features[[1, 0]] - 1.0).abs() < 1e-12);
        assert!((out.features[[2, 0]] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn standardize_is_idempotent() {
        let ds = toy_dataset();
        let idx = [0usize, 1, 2, 3];
        let (once, _) = standardize(&ds, &idx).unwrap();
        let (twice, _) = standardize(&once, &idx).unwrap();
        for (a, b) in once.features.iter().zip(twice.features.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        // Fitting-set columns have mean ~0 and sd ~1 after one pass.
        for j in 0..once.n_nodes() {
            let col: Vec<f64> = idx.iter().map(|&i| once.features[[i, j]]).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let sd =
                (col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / col.len() as f64).sqrt();
            assert!(mean.abs() < 1e-8);
            assert!((sd - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn threshold_binary_is_stable() {
        let a = array![[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 0.0]];
        let (out, summary) = threshold_and_rescale(&a, Some(0.5), None).unwrap();
        assert_eq!(out, a);
        assert!((summary.density - 4.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn threshold_target_density_hits_mark() {
        use rand::Rng;
        let p = 12;
        let mut rng = stream_rng(3, "threshold-test", 0);
        let mut a = Array2::<f64>::zeros((p, p));
        for i in 0..p {
            for j in (i + 1)..p {
                let w: f64 = rng.random_range(0.0..1.0);
                a[[i, j]] = w;
                a[[j, i]] = w;
            }
        }
        let (out, summary) = threshold_and_rescale(&a, None, Some(0.15)).unwrap();
        let nonzero = out.iter().filter(|&&v| v != 0.0).count() as f64;
        let target = 0.15 * (p * (p - 1)) as f64;
        // One edge (two symmetric entries) of slack: the weakest survivor
        // rescales to exactly zero.
        assert!(
            (nonzero - target).abs() <= 2.0,
            "nonzero {nonzero} target {target}"
        );
        assert!(out.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(summary.density > 0.0);
    }

    #[test]
    fn threshold_all_zero_errors() {
        let a = Array2::<f64>::zeros((3, 3));
        let err = threshold_and_rescale(&a, Some(0.5), None).unwrap_err().to_string();
        assert!(err.contains("disconnected"), "{err}");
    }

    #[test]
    fn threshold_rejects_both_flags() {
        let a = array![[0.0, 1.0], [1.0, 0.0]];
        assert!(threshold_and_rescale(&a, Some(0.5), Some(0.15)).is_err());
    }

    #[test]
    fn normalize_zero_matrix_gives_identity() {
        let a = Array2::<f64>::zeros((3, 3));
        let out = normalize_adjacency(&a).unwrap();
        assert_eq!(out, Array2::<f64>::eye(3));
    }

    #[test]
    fn normalize_two_node_hand_value() {
        let a = array![[0.0, 1.0], [1.0, 0.0]];
        let out = normalize_adjacency(&a).unwrap();
        for v in out.iter() {
            assert!((v - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn normalize_spectrum_bounded() {
        use rand::Rng;
        let mut rng = stream_rng(5, "spectrum-test", 0);
        for trial in 0..20 {
            let p = 2 + (trial % 15);
            let mut a = Array2::<f64>::zeros((p, p));
            for i in 0..p {
                for j in (i + 1)..p {
                    if rng.random_range(0.0..1.0f64) < 0.4 {
                        let w: f64 = rng.random_range(0.0..1.0);
                        a[[i, j]] = w;
                        a[[j, i]] = w;
                    }
                }
            }
            let norm = normalize_adjacency(&a).unwrap();
            let na = nalgebra::DMatrix::from_fn(p, p, |i, j| norm[[i, j]]);
            let eig = na.symmetric_eigen();
            for &v in eig.eigenvalues.iter() {
                assert!(v <= 1.0 + 1e-9, "eigenvalue {v} above bound (p={p})");
                assert!(v >= -1.0 - 1e-9, "eigenvalue {v} below bound (p={p})");
            }
        }
    }

    #[test]
    fn kfold_class_counts_match_stratified_target() {
        let mut labels = Vec::new();
        labels.extend(std::iter::repeat(0).take(151));
        labels.extend(std::iter::repeat(1).take(231));
        labels.extend(std::iter::repeat(2).take(102));
        let folds = stratified_kfold(&labels, 5, 9).unwrap();
        assert_eq!(folds.len(), 5);
        let mut seen = vec![0usize; labels.len()];
        for fold in &folds {
            let counts = |idx: &[usize]| {
                let mut c = [0usize; 3];
                for &i in idx {
                    c[labels[i]] += 1;
                }
                c
            };
            let tc = counts(&fold.test_idx);
            assert!(tc[0] == 30 || tc[0] == 31, "CN test count {:?}", tc);
            assert!(tc[1] == 46 || tc[1] == 47, "MCI test count {:?}", tc);
            assert!(tc[2] == 20 || tc[2] == 21, "AD test count {:?}", tc);
            for &i in &fold.test_idx {
                seen[i] += 1;
            }
            // Each part stays within one subject of its stratified target.
            for part in [&fold.train_idx, &fold.val_idx] {
                let pc = counts(part);
                let total: usize = pc.iter().sum();
                for (c, &n_c) in [151usize, 231, 102].iter().enumerate() {
                    let target = total as f64 * n_c as f64 / 484.0;
                    assert!(
                        (pc[c] as f64 - target).abs() <= 1.0 + 1e-9,
                        "class {c} count {} target {target:.2} in part of size {total}",
                        pc[c]
                    );
                }
            }
            let mut all: Vec<usize> = fold
                .train_idx
                .iter()
                .chain(&fold.val_idx)
                .chain(&fold.test_idx)
                .copied()
                .collect();
            all.sort_unstable();
            let expected: Vec<usize> = (0..labels.len()).collect();
            assert_eq!(all, expected, "fold {} is not a partition", fold.fold_id);
        }
        assert!(seen.iter().all(|&c| c == 1), "test folds overlap");
    }

    #[test]
    fn kfold_leave_one_out_runs() {
        let labels = vec![0, 0, 0, 1, 1, 1, 2, 2, 2];
        let folds = stratified_kfold(&labels, 9, 4).unwrap();
        assert_eq!(folds.len(), 9);
        for fold in &folds {
            assert_eq!(fold.test_idx.len(), 1);
            assert_eq!(fold.train_idx.len() + fold.val_idx.len(), 8);
        }
    }

    #[test]
    fn kfold_small_class_errors_with_name() {
        let labels = vec![0, 0, 0, 1, 1, 1, 2, 2];
        let err = stratified_kfold(&labels, 3, 1).unwrap_err().to_string();
        assert!(err.contains("AD"), "{err}");
    }

    #[test]
    fn kfold_deterministic_per_seed() {
        let labels: Vec<usize> = (0..60).map(|i| i % 3).collect();
        let a = stratified_kfold(&labels, 4, 7).unwrap();
        let b = stratified_kfold(&labels, 4, 7).unwrap();
        let c = stratified_kfold(&labels, 4, 8).unwrap();
        for (fa, fb) in a.iter().zip(b.iter()) {
            assert_eq!(fa.train_idx, fb.train_idx);
            assert_eq!(fa.val_idx, fb.val_idx);
            assert_eq!(fa.test_idx, fb.test_idx);
        }
        assert!(a.iter().zip(c.iter()).any(|(x, y)| x.test_idx != y.test_idx));
    }
}
