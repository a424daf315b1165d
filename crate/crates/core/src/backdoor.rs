//! Per-node adjustment bases for confounding control.
//!
//! When node j is intervened on, the remaining nodes and the subject
//! covariates can confound the contrast. For each node this module fits
//! a principal-component basis of the other nodes' standardized
//! features on the training subjects only: the top-K eigenvectors of
//! the population covariance of `X[train, -j]`. Projecting a subject
//! onto that basis yields a compact summary `t` whose concatenation
//! with the covariates `[c ; t]` forms the adjustment input of the
//! per-node model variant. Test subjects must never enter the fit.

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::gcn_model::MatrixData;
use crate::linalg::symmetric_eigen;

/// Principal-component summary basis for one node's complement.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjustmentBasis {
    /// Node whose complement the basis summarizes.
    pub node_id: usize,
    /// Column means of `X[train, -node_id]`, length p-1.
    pub mean: Vec<f64>,
    /// Orthonormal basis, (p-1) x K, columns ordered by eigenvalue.
    pub basis: Array2<f64>,
    /// Eigenvalues (explained variances), nonincreasing, length K.
    pub eigenvalues: Vec<f64>,
}

/// Copy of a feature matrix with one column removed.
pub fn drop_column(features: &Array2<f64>, node_id: usize) -> Array2<f64> {
    let n = features.nrows();
    let p = features.ncols();
    let mut out = Array2::<f64>::zeros((n, p - 1));
    for i in 0..n {
        let mut c = 0;
        for j in 0..p {
            if j != node_id {
                out[[i, c]] = features[[i, j]];
                c += 1;
            }
        }
    }
    out
}

/// Fits the adjustment basis for `node_id` on training features.
///
/// `features_train` must hold only training subjects (standardized
/// rows); `k` principal components are retained, `1 <= k <= p-1`.
pub fn fit_basis(features_train: &Array2<f64>, node_id: usize, k: usize) -> Result<AdjustmentBasis> {
    let n = features_train.nrows();
    let p = features_train.ncols();
    if p < 2 {
        return Err(CoreError::data("adjustment: need at least 2 nodes"));
    }
    if node_id >= p {
        return Err(CoreError::data(format!(
            "adjustment: node {node_id} outside 0..{p}"
        )));
    }
    if k < 1 || k > p - 1 {
        return Err(CoreError::config(format!(
            "adjustment: K = {k} outside 1..={}",
            p - 1
        )));
    }
    if n < 2 {
        return Err(CoreError::data(
            "adjustment: need at least 2 training subjects",
        ));
    }

    let rest = drop_column(features_train, node_id);
    let m = p - 1;
    let mut mean = vec![0.0; m];
    for i in 0..n {
        for (j, mj) in mean.iter_mut().enumerate() {
            *mj += rest[[i, j]];
        }
    }
    for mj in mean.iter_mut() {
        *mj /= n as f64;
    }

    // Population covariance of the centered complement.
    let mut cov = Array2::<f64>::zeros((m, m));
    for i in 0..n {
        for a in 0..m {
            let da = rest[[i, a]] - mean[a];
            for b in a..m {
                cov[[a, b]] += da * (rest[[i, b]] - mean[b]);
            }
        }
    }
    for a in 0..m {
        for b in a..m {
            let v = cov[[a, b]] / n as f64;
            cov[[a, b]] = v;
            cov[[b, a]] = v;
        }
    }

    let (eigenvalues, vectors) = symmetric_eigen(&cov)?;
    let mut basis = Array2::<f64>::zeros((m, k));
    for c in 0..k {
        for r in 0..m {
            basis[[r, c]] = vectors[[r, c]];
        }
    }
    Ok(AdjustmentBasis {
        node_id,
        mean,
        basis,
        eigenvalues: eigenvalues.iter().take(k).copied().collect(),
    })
}

impl AdjustmentBasis {
    /// Number of retained components.
    pub fn k(&self) -> usize {
        self.basis.ncols()
    }

    /// Projects one subject's complement features (length p-1) onto the
    /// basis: `t = basis^T (x_rest - mean)`.
    pub fn project(&self, x_rest: ArrayView1<f64>) -> Result<Array1<f64>> {
        if x_rest.len() != self.mean.len() {
            return Err(CoreError::data(format!(
                "adjustment: projecting {} values against a basis over {}",
                x_rest.len(),
                self.mean.len()
            )));
        }
        let centered =
            Array1::from_iter(x_rest.iter().zip(&self.mean).map(|(x, m)| x - m));
        Ok(self.basis.t().dot(&centered))
    }

    /// Builds the per-node adjustment input `[c ; t]` for a batch:
    /// covariates concatenated with the projected complement of each
    /// subject's features. Output is N x (q + K).
    pub fn adjustment_inputs(
        &self,
        features: &Array2<f64>,
        covariates: &Array2<f64>,
    ) -> Result<Array2<f64>> {
        let n = features.nrows();
        if covariates.nrows() != n {
            return Err(CoreError::data(
                "adjustment: feature and covariate row counts disagree",
            ));
        }
        if features.ncols() != self.mean.len() + 1 {
            return Err(CoreError::data(format!(
                "adjustment: {} nodes but basis over {} complement features",
                features.ncols(),
                self.mean.len()
            )));
        }
        let rest = drop_column(features, self.node_id);
        let q = covariates.ncols();
        let k = self.k();
        let mut out = Array2::<f64>::zeros((n, q + k));
        for i in 0..n {
            for j in 0..q {
                out[[i, j]] = covariates[[i, j]];
            }
            let t = self.project(rest.row(i))?;
            for j in 0..k {
                out[[i, q + j]] = t[j];
            }
        }
        Ok(out)
    }

    /// Serializes the basis for the `adjustment/{node_id}.json` artifact.
    pub fn to_json(&self) -> Result<String> {
        let file = BasisFile {
            node_id: self.node_id,
            mean: self.mean.clone(),
            basis: MatrixData {
                rows: self.basis.nrows(),
                cols: self.basis.ncols(),
                data: self.basis.iter().copied().collect(),
            },
            eigenvalues: self.eigenvalues.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    /// Restores a basis from its JSON artifact.
    pub fn from_json(json: &str) -> Result<Self> {
        let file: BasisFile = serde_json::from_str(json)?;
        if file.basis.data.len() != file.basis.rows * file.basis.cols {
            return Err(CoreError::data("adjustment: basis data length mismatch"));
        }
        if file.mean.len() != file.basis.rows || file.eigenvalues.len() != file.basis.cols {
            return Err(CoreError::data("adjustment: inconsistent basis file"));
        }
        let basis = Array2::from_shape_vec((file.basis.rows, file.basis.cols), file.basis.data)
            .map_err(|e| CoreError::data(format!("adjustment: {e}")))?;
        Ok(AdjustmentBasis {
            node_id: file.node_id,
            mean: file.mean,
            basis,
            eigenvalues: file.eigenvalues,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct BasisFile {
    node_id: usize,
    mean: Vec<f64>,
    basis: MatrixData,
    eigenvalues: Vec<f64>,
}

/// Fits one basis per node on the training subjects.
pub fn fit_all_bases(
    features_train: &Array2<f64>,
    k: usize,
) -> Result<Vec<AdjustmentBasis>> {
    (0..features_train.ncols())
        .map(|j| fit_basis(features_train, j, k))
        .collect()
}
