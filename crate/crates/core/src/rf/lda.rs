//! Two-axis linear discriminant projection.
//!
//! Features are standardized, then the generalized eigenproblem
//! `S_b w = λ (S_w + ridge · I) w` is reduced to a symmetric one through the
//! Cholesky factor of the regularized within-class covariance.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::RfError;

pub const LDA_RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaProjection {
    pub means: Vec<f64>,
    /// Standard deviations; zero marks a dropped constant feature.
    pub scales: Vec<f64>,
    /// Weights on the standardized features, one vector per axis.
    pub axes: [Vec<f64>; 2],
    pub eigenvalues: [f64; 2],
}

impl LdaProjection {
    pub fn project(&self, row: &[f64]) -> [f64; 2] {
        let mut out = [0.0; 2];
        for (j, &v) in row.iter().enumerate() {
            if self.scales[j] > 0.0 {
                let z = (v - self.means[j]) / self.scales[j];
                out[0] += self.axes[0][j] * z;
                out[1] += self.axes[1][j] * z;
            }
        }
        out
    }
}

/// Fits the projection on `rows` labelled `0..n_classes`.
pub fn fit_lda(rows: &[Vec<f64>], labels: &[usize]) -> Result<LdaProjection, RfError> {
    if rows.len() != labels.len() || rows.is_empty() {
        return Err(RfError::Config(
            "rows and labels must be non-empty and equal in number".into(),
        ));
    }
    let p = rows[0].len();
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut class_sizes = vec![0usize; n_classes];
    for &l in labels {
        class_sizes[l] += 1;
    }
    let present = class_sizes.iter().filter(|&&c| c > 0).count();
    if present < 2 {
        return Err(RfError::Config(format!("need at least 2 classes, found {present}")));
    }
    if let Some(c) = class_sizes.iter().position(|&c| c > 0 && c < 2) {
        return Err(RfError::SmallClass(c));
    }
    let n = rows.len() as f64;
    let means: Vec<f64> = (0..p).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let scales: Vec<f64> = (0..p)
        .map(|j| {
            let var = rows.iter().map(|r| (r[j] - means[j]).powi(2)).sum::<f64>() / (n - 1.0);
            let sd = var.sqrt();
            // columns constant up to rounding are dropped
            if sd > 1e-12 * means[j].abs().max(1e-300) {
                sd
            } else {
                0.0
            }
        })
        .collect();
    let active: Vec<usize> = (0..p).filter(|&j| scales[j] > 0.0).collect();
    let d = active.len();
    if d < 2 {
        return Err(RfError::Config(format!(
            "need at least 2 non-constant features, found {d}"
        )));
    }

    let z = DMatrix::from_fn(rows.len(), d, |i, k| {
        let j = active[k];
        (rows[i][j] - means[j]) / scales[j]
    });
    let mut class_means = DMatrix::<f64>::zeros(n_classes, d);
    for (i, &l) in labels.iter().enumerate() {
        for k in 0..d {
            class_means[(l, k)] += z[(i, k)];
        }
    }
    for c in 0..n_classes {
        if class_sizes[c] > 0 {
            for k in 0..d {
                class_means[(c, k)] /= class_sizes[c] as f64;
            }
        }
    }
    let mut centered = z.clone();
    for (i, &l) in labels.iter().enumerate() {
        for k in 0..d {
            centered[(i, k)] -= class_means[(l, k)];
        }
    }
    let mut within = centered.tr_mul(&centered) / (n - present as f64);
    for k in 0..d {
        within[(k, k)] += LDA_RIDGE;
    }
    // Standardized data have zero grand mean.
    let mut between = DMatrix::<f64>::zeros(d, d);
    for (c, &size) in class_sizes.iter().enumerate() {
        if size == 0 {
            continue;
        }
        let m = class_means.row(c).transpose();
        between += (&m * m.transpose()) * (size as f64 / n);
    }

    let chol = within
        .cholesky()
        .ok_or_else(|| RfError::Numerical("within-class covariance is not positive definite".into()))?;
    let l = chol.l();
    let l_inv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| RfError::Numerical("singular Cholesky factor".into()))?;
    let m = &l_inv * &between * l_inv.transpose();
    let m = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let l_inv_t = l_inv.transpose();
    let mut axes = [vec![0.0; p], vec![0.0; p]];
    let mut eigenvalues = [0.0; 2];
    for (axis, &k) in order.iter().take(2).enumerate() {
        let v: DVector<f64> = eig.eigenvectors.column(k).into_owned();
        let w = &l_inv_t * v;
        // sign convention: the largest-magnitude weight is positive
        let pivot = (0..d).max_by(|&a, &b| w[a].abs().total_cmp(&w[b].abs())).unwrap_or(0);
        let sign = if w[pivot] < 0.0 { -1.0 } else { 1.0 };
        for (kk, &j) in active.iter().enumerate() {
            axes[axis][j] = sign * w[kk];
        }
        eigenvalues[axis] = eig.eigenvalues[k].max(0.0);
    }
    Ok(LdaProjection {
        means,
        scales,
        axes,
        eigenvalues,
    })
}

/// Between-class over within-class variance of a one-dimensional score.
pub fn fisher_ratio(values: &[f64], labels: &[usize]) -> f64 {
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let n = values.len() as f64;
    let grand = values.iter().sum::<f64>() / n;
    let mut sums = vec![0.0; n_classes];
    let mut counts = vec![0.0; n_classes];
    for (&v, &l) in values.iter().zip(labels) {
        sums[l] += v;
        counts[l] += 1.0;
    }
    let means: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(s, c)| if *c > 0.0 { s / c } else { 0.0 })
        .collect();
    let between: f64 = means
        .iter()
        .zip(&counts)
        .map(|(m, c)| c * (m - grand).powi(2))
        .sum::<f64>()
        / n;
    let within: f64 = values
        .iter()
        .zip(labels)
        .map(|(v, &l)| (v - means[l]).powi(2))
        .sum::<f64>()
        / n;
    between / within
}
