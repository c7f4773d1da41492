//! Spectral and (2,1) norms, and the norm-based complexity diagnostic.

use rand::Rng as _;

use super::matrix::{l2_norm, DenseMatrix};
use super::{FeedForwardNet, NnError};
use crate::rng;

pub const SPECTRAL_ITERS: usize = 100;
const POWER_SEED: u64 = 0x5eed_5eed;

/// Largest singular value by power iteration on `MᵀM`.
pub fn spectral_norm(m: &DenseMatrix, iters: usize) -> f64 {
    let n = m.cols();
    if n == 0 || m.rows() == 0 {
        return 0.0;
    }
    let mut rng = rng::seeded(POWER_SEED);
    let mut x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let norm = l2_norm(&x);
    x.iter_mut().for_each(|v| *v /= norm);
    let mut sigma = 0.0;
    for _ in 0..iters.max(1) {
        let y = m.mat_vec(&x).expect("dimension from m");
        sigma = l2_norm(&y);
        if sigma == 0.0 {
            return 0.0;
        }
        // x ← Mᵀy / ‖Mᵀy‖
        let mut z = vec![0.0; n];
        for (r, &yr) in y.iter().enumerate() {
            for (zj, mj) in z.iter_mut().zip(m.row(r)) {
                *zj += yr * mj;
            }
        }
        let zn = l2_norm(&z);
        if zn == 0.0 {
            return 0.0;
        }
        x = z.into_iter().map(|v| v / zn).collect();
    }
    let y = m.mat_vec(&x).expect("dimension from m");
    l2_norm(&y).max(sigma)
}

/// Sum of the Euclidean norms of the columns.
pub fn norm_2_1(m: &DenseMatrix) -> f64 {
    (0..m.cols()).map(|j| l2_norm(&m.column(j))).sum()
}

/// `(1/√n)·B²·(∏ λᵢ‖Wᵢ‖)²·(Σ ‖Wᵢ‖₂,₁^{2/3} / ‖Wᵢ‖^{2/3})^{3/2}`.
///
/// A layer with zero spectral norm makes the ratio undefined; the bound is
/// then reported as 0 with a warning.
pub fn rademacher_bound(
    net: &FeedForwardNet,
    sample_count: usize,
    input_bound: f64,
    lipschitz: &[f64],
) -> Result<f64, NnError> {
    if sample_count == 0 {
        return Err(NnError::InvalidArgument("sample_count must be ≥ 1".into()));
    }
    if !(input_bound > 0.0) {
        return Err(NnError::InvalidArgument("input bound must be positive".into()));
    }
    if lipschitz.len() != net.depth() {
        return Err(NnError::ShapeMismatch {
            expected: format!("{} Lipschitz constants", net.depth()),
            found: format!("{}", lipschitz.len()),
        });
    }
    let mut product = 1.0;
    let mut ratio_sum = 0.0;
    for (layer, (w, &lam)) in net.weights().iter().zip(lipschitz).enumerate() {
        let spec = spectral_norm(w, SPECTRAL_ITERS);
        if spec == 0.0 {
            log::warn!("{}", NnError::ZeroSpectralNorm { layer });
            return Ok(0.0);
        }
        product *= lam * spec;
        ratio_sum += (norm_2_1(w) / spec).cbrt().powi(2);
    }
    Ok(input_bound * input_bound * product * product * ratio_sum * ratio_sum.sqrt()
        / (sample_count as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_diagonal() {
        let i3 = DenseMatrix::identity(3);
        assert!((spectral_norm(&i3, SPECTRAL_ITERS) - 1.0).abs() < 1e-12);
        assert_eq!(norm_2_1(&i3), 3.0);
        let d = DenseMatrix::from_diag(&[3.0, 1.0]);
        assert!((spectral_norm(&d, SPECTRAL_ITERS) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn spectral_norm_matches_svd() {
        let mut rng = rng::seeded(11);
        for _ in 0..10 {
            let data: Vec<f64> = (0..20).map(|_| rng.random_range(-1.0..1.0)).collect();
            let m = DenseMatrix::from_vec(5, 4, data.clone()).unwrap();
            let svd = nalgebra::DMatrix::from_row_slice(5, 4, &data).singular_values();
            let sv: Vec<f64> = svd.iter().copied().collect();
            let mut sorted = sv.clone();
            sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
            if sorted[1] / sorted[0] > 0.9 {
                continue;
            }
            let s = spectral_norm(&m, SPECTRAL_ITERS);
            assert!((s - sorted[0]).abs() / sorted[0] < 1e-6, "{s} vs {}", sorted[0]);
        }
    }

    #[test]
    fn bound_hand_case_and_scaling() {
        let net = FeedForwardNet::from_parts(
            vec![DenseMatrix::identity(2)],
            vec![vec![0.0; 2]],
            vec![],
        )
        .unwrap();
        let b1 = rademacher_bound(&net, 1, 1.0, &[1.0]).unwrap();
        assert!((b1 - 2.0).abs() < 1e-12);
        let b4 = rademacher_bound(&net, 4, 1.0, &[1.0]).unwrap();
        assert!((b4 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_layer_reports_zero() {
        let net = FeedForwardNet::from_parts(
            vec![DenseMatrix::zeros(2, 3), DenseMatrix::identity(2)],
            vec![vec![0.0; 2], vec![0.0; 2]],
            vec![0.25],
        )
        .unwrap();
        assert_eq!(rademacher_bound(&net, 10, 1.0, &[1.0, 1.0]).unwrap(), 0.0);
    }
}
