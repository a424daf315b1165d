//! Small dense linear-algebra and order-statistics kernels.
//!
//! The eigensolver is a cyclic Jacobi sweep specialised to symmetric
//! matrices; node graphs here are small (tens of nodes), so a dependency
//! on an external LAPACK backend is not warranted. Tests cross-check the
//! solver against an independent dense implementation.

use ndarray::{Array1, Array2};

use crate::error::{CoreError, Result};

/// Eigen-decomposition of a symmetric matrix.
///
/// Returns eigenvalues in descending order and the matching eigenvectors
/// as columns. Each eigenvector is normalised so its entry of largest
/// magnitude (lowest index on ties) is positive, which pins the sign
/// ambiguity and keeps downstream projections reproducible.
pub fn symmetric_eigen(m: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(CoreError::numeric(format!(
            "eigen: matrix must be square, got {}x{}",
            n,
            m.ncols()
        )));
    }
    let sym_tol = 1e-9 * (1.0 + frobenius(m));
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[[i, j]] - m[[j, i]]).abs() > sym_tol {
                return Err(CoreError::numeric(format!(
                    "eigen: matrix not symmetric at ({i},{j})"
                )));
            }
        }
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::numeric("eigen: non-finite entry".to_string()));
    }

    let mut a = m.clone();
    let mut v = Array2::<f64>::eye(n);
    let tol = 1e-14 * (1.0 + frobenius(m));
    let max_sweeps = 100;
    for _ in 0..max_sweeps {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[[i, j]] * a[[i, j]];
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                if apq.abs() <= tol / (n as f64) {
                    continue;
                }
                let app = a[[p, p]];
                let aqq = a[[q, q]];
                let theta = (aqq - app) / (2.0 * apq);
                // Stable tangent of the rotation angle.
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a[[j, j]]
            .partial_cmp(&a[[i, i]])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let mut values = Array1::<f64>::zeros(n);
    let mut vectors = Array2::<f64>::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = a[[src, src]];
        let mut best = 0usize;
        let mut best_abs = -1.0;
        for k in 0..n {
            let av = v[[k, src]].abs();
            if av > best_abs + 1e-15 {
                best_abs = av;
                best = k;
            }
        }
        let flip = if v[[best, src]] < 0.0 { -1.0 } else { 1.0 };
        for k in 0..n {
            vectors[[k, dst]] = flip * v[[k, src]];
        }
    }
    Ok((values, vectors))
}

/// Frobenius norm.
pub fn frobenius(m: &Array2<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Percentile of a sample with linear interpolation at rank `(n-1) * q`.
///
/// `q` is a fraction in `[0, 1]`. The input need not be sorted.
pub fn percentile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(CoreError::data("percentile: empty sample"));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(CoreError::config(format!(
            "percentile: fraction {q} outside [0, 1]"
        )));
    }
    let mut sorted = values.to_vec();
    if sorted.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::data("percentile: non-finite value in sample"));
    }
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let pos = (n as f64 - 1.0) * q;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        return Ok(sorted[lo]);
    }
    let frac = pos - lo as f64;
    Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

/// Ranks with ties resolved by averaging (1-based ranks).
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        // Tied block spans sorted positions i..=j; average of 1-based ranks.
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[idx[k]] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation; returns `None` when either side is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    if n != y.len() || n < 2 {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for i in 0..n {
        let dx = x[i] - mx;
        let dy = y[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Spearman rank correlation; ties get averaged ranks. `None` when a side
/// is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    pearson(&average_ranks(x), &average_ranks(y))
}
