//! Softmax confidence as a function of distance to the decision boundary.
//!
//! If every boundary of the predicted class is at least `δ` away, each logit
//! gap `z_i − z_k` is at least `δ ‖W[i] − W[k]‖`, which bounds the top
//! softmax from below; conversely a boundary at distance `δ` caps the gap to
//! the nearest rival and bounds it from above.

use serde::{Deserialize, Serialize};

use crate::linalg::dist;
use crate::matrix::Matrix;
use crate::space::CompressedSpace;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BoundsError {
    #[error("tau must lie in (1/n, 1) = ({lo}, 1), got {tau}")]
    TauOutOfRange { tau: f64, lo: f64 },
    #[error("rho(W) is zero: two classes share the same weight row")]
    ZeroRho,
    #[error("at least two classes required")]
    TooFewClasses,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    /// Smallest pairwise row distance of W.
    pub rho: f64,
    /// Largest pairwise row distance of W.
    pub rho_prime: f64,
    pub n: usize,
    /// `‖W[i] − W[j]‖₂`
    pub pair_norms: Matrix,
}

impl BoundParams {
    pub fn pair_norm(&self, i: usize, j: usize) -> f64 {
        self.pair_norms.get(i, j)
    }

    pub fn is_degenerate(&self) -> bool {
        self.rho == 0.0
    }
}

/// Pairwise row distances of `W_ψ = U Σ` (equal to those of `W`).
pub fn compute_bound_params(space: &CompressedSpace) -> Result<BoundParams, BoundsError> {
    bound_params_from_rows(space.w_psi())
}

pub fn bound_params_from_rows(w: &Matrix) -> Result<BoundParams, BoundsError> {
    let n = w.rows();
    if n < 2 {
        return Err(BoundsError::TooFewClasses);
    }
    let mut pair_norms = Matrix::zeros(n, n);
    let mut rho = f64::INFINITY;
    let mut rho_prime: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let d = dist(w.row(i), w.row(j));
            pair_norms.set(i, j, d);
            pair_norms.set(j, i, d);
            rho = rho.min(d);
            rho_prime = rho_prime.max(d);
        }
    }
    Ok(BoundParams {
        rho,
        rho_prime,
        n,
        pair_norms,
    })
}

/// `e^{δ‖w‖} / (e^{δ‖w‖} + n − 1)`
pub fn confidence_lower_bound(delta: f64, pair_norm: f64, n: usize) -> f64 {
    let t = delta * pair_norm;
    let k = (n as f64 - 1.0).max(0.0);
    if t > 30.0 {
        // 1 / (1 + k e^{−t}) with k e^{−t} tiny.
        (-(k * (-t).exp()).ln_1p()).exp()
    } else {
        1.0 / (1.0 + k * (-t).exp())
    }
}

/// `e^{δρ′} / (e^{δρ′} + 1)`
pub fn confidence_upper_bound(delta: f64, rho_prime: f64) -> f64 {
    confidence_lower_bound(delta, rho_prime, 2)
}

/// Smallest boundary distance that guarantees top softmax `≥ tau`:
/// `δ = ln(τ (n − 1) / (1 − τ)) / ρ`.
pub fn delta_for_confidence(tau: f64, rho: f64, n: usize) -> Result<f64, BoundsError> {
    if n < 2 {
        return Err(BoundsError::TooFewClasses);
    }
    let lo = 1.0 / n as f64;
    if !(tau > lo && tau < 1.0) {
        return Err(BoundsError::TauOutOfRange { tau, lo });
    }
    if rho <= 0.0 {
        return Err(BoundsError::ZeroRho);
    }
    Ok((tau * (n as f64 - 1.0) / (1.0 - tau)).ln() / rho)
}
