//! Chatterjee's rank correlation and a smoothed version for training.

use crate::nn::DenseMatrix;

use super::LearningError;

pub const DEFAULT_TEMPERATURE: f64 = 1.0;

fn order_by(x: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    // Stable sort: ties in x keep index order. Adding 0.0 maps −0.0 to 0.0
    // so signed zeros tie.
    idx.sort_by(|&a, &b| (x[a] + 0.0).total_cmp(&(x[b] + 0.0)));
    idx
}

/// `ξ = 1 − 3 Σ |r_{i+1} − r_i| / (n² − 1)` where `r` are the ranks of `y`
/// (`r_i = #{j : y_j ≤ y_i}`) listed in increasing order of `x`.
pub fn xicor(x: &[f64], y: &[f64]) -> Result<f64, LearningError> {
    if x.len() != y.len() {
        return Err(LearningError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 2 {
        return Err(LearningError::TooFewSamples { needed: 2, got: n });
    }
    // r_i via one sort of y: the rank of a value is the end of its tie run.
    let by_y = order_by(y);
    let mut rank = vec![0usize; n];
    let mut start = 0;
    while start < n {
        let mut end = start;
        while end + 1 < n && y[by_y[end + 1]] == y[by_y[start]] {
            end += 1;
        }
        for &i in &by_y[start..=end] {
            rank[i] = end + 1;
        }
        start = end + 1;
    }
    let perm = order_by(x);
    let total: usize = perm
        .windows(2)
        .map(|w| rank[w[1]].abs_diff(rank[w[0]]))
        .sum();
    let n = n as f64;
    Ok(1.0 - 3.0 * total as f64 / (n * n - 1.0))
}

fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

fn standardize(y: &[f64]) -> Option<(Vec<f64>, f64)> {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    if !(sd > 1e-12 * (1.0 + mean.abs())) {
        return None;
    }
    Some((y.iter().map(|v| (v - mean) / sd).collect(), sd))
}

/// Smoothed `ξ(x, y)` and its gradient with respect to `y`.
///
/// Ranks of the standardised `y` are replaced by
/// `r̃_i = Σ_j σ((z_i − z_j)/τ)`; the ordering by `x` is held fixed, so no
/// gradient flows into `x`. Returns `None` when `y` is constant.
pub fn soft_xicor(x: &[f64], y: &[f64], tau: f64) -> Option<(f64, Vec<f64>)> {
    let n = y.len();
    let (z, sd) = standardize(y)?;
    let mut sig_prime = vec![0.0; n * n];
    let mut r = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            let s = sigmoid((z[i] - z[j]) / tau);
            r[i] += s;
            sig_prime[i * n + j] = s * (1.0 - s);
        }
    }
    let perm = order_by(x);
    let mut total = 0.0;
    let mut g_r = vec![0.0; n];
    for w in perm.windows(2) {
        let diff = r[w[1]] - r[w[0]];
        total += diff.abs();
        let sign = if diff > 0.0 {
            1.0
        } else if diff < 0.0 {
            -1.0
        } else {
            0.0
        };
        g_r[w[1]] += sign;
        g_r[w[0]] -= sign;
    }
    let nf = n as f64;
    let scale = -3.0 / (nf * nf - 1.0);
    let value = 1.0 + scale * total;
    // ∂r̃_i/∂z_j = (δ_ij Σ_l σ'_il − σ'_ij) / τ, with σ' symmetric.
    let mut g_z = vec![0.0; n];
    for j in 0..n {
        let mut acc = 0.0;
        for i in 0..n {
            acc += sig_prime[i * n + j] * (g_r[j] - g_r[i]);
        }
        g_z[j] = scale * acc / tau;
    }
    // Back through z = (y − mean)/sd with population sd.
    let mean_g = g_z.iter().sum::<f64>() / nf;
    let mean_gz = g_z.iter().zip(&z).map(|(g, zi)| g * zi).sum::<f64>() / nf;
    let g_y = g_z
        .iter()
        .zip(&z)
        .map(|(g, zi)| (g - mean_g - zi * mean_gz) / sd)
        .collect();
    Some((value, g_y))
}

/// `‖I − Ξ̃‖_F` over the embedding columns, with `Ξ̃_jj = 1`.
///
/// Fails with [`LearningError::DegenerateBatch`] when a column is constant;
/// see [`decorrelation_penalty_grad`] for the lenient variant.
pub fn decorrelation_penalty(emb: &DenseMatrix, tau: f64) -> Result<f64, LearningError> {
    for j in 0..emb.cols() {
        if standardize(&emb.column(j)).is_none() {
            return Err(LearningError::DegenerateBatch(j));
        }
    }
    Ok(decorrelation_penalty_grad(emb, tau)?.0)
}

/// Penalty and its gradient with respect to the embedding batch.
///
/// A constant column gets `Ξ̃_jj = 0` and zero off-diagonal entries, so it
/// contributes exactly 1 to the squared norm and nothing to the gradient.
pub fn decorrelation_penalty_grad(
    emb: &DenseMatrix,
    tau: f64,
) -> Result<(f64, DenseMatrix), LearningError> {
    let (n, k) = emb.shape();
    if n < 4 {
        return Err(LearningError::TooFewSamples { needed: 4, got: n });
    }
    let cols: Vec<Vec<f64>> = (0..k).map(|j| emb.column(j)).collect();
    let constant: Vec<bool> = cols.iter().map(|c| standardize(c).is_none()).collect();
    let mut sq = constant.iter().filter(|&&c| c).count() as f64;
    let mut entries = Vec::new();
    for a in 0..k {
        for b in 0..k {
            if a == b || constant[a] || constant[b] {
                continue;
            }
            let (xi, g) = soft_xicor(&cols[a], &cols[b], tau).expect("non-constant column");
            sq += xi * xi;
            entries.push((b, xi, g));
        }
    }
    let value = sq.sqrt();
    let mut grad = DenseMatrix::zeros(n, k);
    if value > 0.0 {
        for (b, xi, g) in entries {
            for (i, gi) in g.iter().enumerate() {
                grad[(i, b)] += xi / value * gi;
            }
        }
    }
    Ok((value, grad))
}
