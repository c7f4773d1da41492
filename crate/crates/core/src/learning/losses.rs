//! Scalar losses and their derivatives.

use super::LearningError;

pub const DEFAULT_HUBER_DELTA: f64 = 1.0;

/// Quadratic for `|e| ≤ δ`, linear beyond.
pub fn huber_loss(pred: f64, target: f64, delta: f64) -> Result<f64, LearningError> {
    if !(delta > 0.0) {
        return Err(LearningError::NonpositiveDelta(delta));
    }
    let e = (pred - target).abs();
    Ok(if e <= delta {
        0.5 * e * e
    } else {
        delta * e - 0.5 * delta * delta
    })
}

/// `∂huber/∂pred`.
pub fn huber_grad(pred: f64, target: f64, delta: f64) -> f64 {
    (pred - target).clamp(-delta, delta)
}

/// `(1 − y)·d + y·max(m − d, 0)`; `y = 1` marks a dissimilar pair.
pub fn contrastive_loss(d: f64, y: u8, margin: f64) -> f64 {
    if y == 0 {
        d
    } else {
        (margin - d).max(0.0)
    }
}

/// `∂contrastive/∂d`.
pub fn contrastive_grad(d: f64, y: u8, margin: f64) -> f64 {
    match (y, d < margin) {
        (0, _) => 1.0,
        (_, true) => -1.0,
        _ => 0.0,
    }
}

pub fn triplet_loss(d_ap: f64, d_an: f64, margin: f64) -> f64 {
    (d_ap - d_an + margin).max(0.0)
}

/// `(∂/∂d_ap, ∂/∂d_an)`.
pub fn triplet_grad(d_ap: f64, d_an: f64, margin: f64) -> (f64, f64) {
    if d_ap - d_an + margin > 0.0 {
        (1.0, -1.0)
    } else {
        (0.0, 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn huber_examples() {
        assert_eq!(huber_loss(1.3, 1.3, 1.0).unwrap(), 0.0);
        assert_eq!(huber_loss(0.5, 0.0, 1.0).unwrap(), 0.125);
        assert_eq!(huber_loss(3.0, 0.0, 1.0).unwrap(), 2.5);
        assert!(matches!(huber_loss(1.0, 0.0, 0.0), Err(LearningError::NonpositiveDelta(_))));
    }

    #[test]
    fn huber_is_c1_at_the_knee() {
        let h = 1e-7;
        let left = huber_loss(1.0 - h, 0.0, 1.0).unwrap();
        let right = huber_loss(1.0 + h, 0.0, 1.0).unwrap();
        assert!(((right - left) / (2.0 * h) - 1.0).abs() < 1e-6);
        assert_eq!(huber_grad(1.0, 0.0, 1.0), 1.0);
    }

    #[test]
    fn contrastive_examples() {
        assert_eq!(contrastive_loss(0.3, 0, 0.1), 0.3);
        assert_eq!(contrastive_loss(0.3, 1, 0.1), 0.0);
        assert!((contrastive_loss(0.05, 1, 0.1) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn triplet_examples() {
        assert_eq!(triplet_loss(0.2, 0.5, 0.0), 0.0);
        assert!((triplet_loss(0.5, 0.2, 0.0) - 0.3).abs() < 1e-15);
        assert_eq!(triplet_loss(0.4, 0.4, 0.0), 0.0);
    }
}
