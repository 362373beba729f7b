//! Closed-form `(r − 1)`-volume of a hyperplane section of the cube.
//!
//! For `w > 0` and the unit cube `[0, 1]^m`,
//!
//! ```text
//! vol(H ∩ [0,1]^m) = ‖w‖ / ((m − 1)! Π w_k) · Σ_K (−1)^{|K|} (t − w(K))_+^{m−1}
//! ```
//!
//! with `H = {w·x = t}` and `w(K) = Σ_{k∈K} w_k`. General boundaries are
//! brought to this form by mapping `[−a, a]` onto `[0, 1]`, reflecting
//! coordinates with negative coefficients and dropping zero coefficients.

use crate::boundary::pair_hyperplane;
use crate::linalg::norm;
use crate::space::CompressedSpace;

use super::RegionError;

/// Largest number of nonzero coefficients accepted (the sum has `2^m` terms).
pub const MAX_SLICE_DIM: usize = 20;

/// `(m − 1)`-volume of `{w·x = t} ∩ [0, 1]^m` for arbitrary real `w`.
pub fn unit_cube_slice(w: &[f64], t: f64) -> Result<f64, RegionError> {
    let scale = w.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Err(RegionError::DegenerateHyperplane);
    }
    let mut t = t;
    let mut coeffs = Vec::with_capacity(w.len());
    for &v in w {
        if v.abs() <= 1e-12 * scale {
            continue;
        }
        if v < 0.0 {
            t -= v;
            coeffs.push(-v);
        } else {
            coeffs.push(v);
        }
    }
    let m = coeffs.len();
    if m > MAX_SLICE_DIM {
        return Err(RegionError::DimensionTooHigh {
            dim: m,
            max: MAX_SLICE_DIM,
        });
    }
    // Zero coefficients contribute unit side lengths. With one coefficient
    // left the section is a full facet-parallel cube or empty.
    if m == 1 {
        let x = t / coeffs[0];
        return Ok(if (0.0..=1.0).contains(&x) { 1.0 } else { 0.0 });
    }
    let wn = norm(&coeffs);
    let prod: f64 = coeffs.iter().product();
    let fact: f64 = (1..m).map(|k| k as f64).product();
    let p = (m - 1) as i32;
    let mut sum = 0.0;
    for mask in 0u32..(1u32 << m) {
        let wk: f64 = (0..m).filter(|b| mask >> b & 1 == 1).map(|b| coeffs[b]).sum();
        let r = t - wk;
        if r > 0.0 {
            let term = r.powi(p);
            if mask.count_ones() % 2 == 0 {
                sum += term;
            } else {
                sum -= term;
            }
        }
    }
    Ok((wn / (fact * prod) * sum).max(0.0))
}

/// Volume of the `(i, j)` hyperplane inside `[−a, a]^r`, ignoring the other
/// classes. An upper bound on the boundary polytope's volume.
pub fn slice_volume_upper_bound(space: &CompressedSpace, i: usize, j: usize) -> Result<f64, RegionError> {
    let (w, c) = pair_hyperplane(space, i, j);
    if norm(&w) <= 1e-12 * space.w_psi().max_abs().max(f64::MIN_POSITIVE) {
        return Err(RegionError::DegeneratePair(i, j));
    }
    let a = space.a();
    let r = w.len();
    // w·y + c = 0 with y = a(2x − 1)  ⇔  (2a w)·x = a Σw − c.
    let w2: Vec<f64> = w.iter().map(|v| 2.0 * a * v).collect();
    let t = a * w.iter().sum::<f64>() - c;
    let unit = unit_cube_slice(&w2, t)?;
    Ok(unit * (2.0 * a).powi(r as i32 - 1))
}
