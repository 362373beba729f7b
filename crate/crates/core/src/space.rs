//! The compressed feature space Ψ.
//!
//! With `W = U Σ Vᵀ` the logits only see `Vᵀ x` through the first
//! `r = min(n, f)` coordinates, so a sample is represented by
//! `x_ψ = (Vᵀ x)[..r]` and the head becomes `z = U Σ x_ψ + b`. Rotations
//! preserve Euclidean distance, which is what makes hulls, boundaries and
//! balls computed in Ψ meaningful for Φ.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bundle::{EmbeddingSet, ModelHead};
use crate::linalg::{dot, norm, OrthoBasis};
use crate::matrix::Matrix;

pub const PHI_SAFETY_FACTOR: f64 = 1.1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpaceError {
    #[error("SVD did not converge")]
    SvdFailure,
    #[error("{frame:?}-frame vector must have length {expected}, found {found}")]
    FrameMismatch { frame: Frame, expected: usize, found: usize },
    #[error("domain bound must be finite and >= 0, got {0}")]
    NegativeBound(f64),
    #[error("no embeddings to bound")]
    EmptySet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Frame {
    Phi,
    Psi,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    pub coords: Vec<f64>,
    pub frame: Frame,
}

impl EmbeddingVector {
    pub fn phi(coords: Vec<f64>) -> Self {
        Self {
            coords,
            frame: Frame::Phi,
        }
    }

    pub fn psi(coords: Vec<f64>) -> Self {
        Self {
            coords,
            frame: Frame::Psi,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompressedSpace {
    /// n × n
    u: Matrix,
    s: Vec<f64>,
    /// First `r` rows of Vᵀ (r × f).
    vt: Matrix,
    /// `U Σ` restricted to the retained coordinates (n × r).
    w_psi: Matrix,
    w_phi: Matrix,
    bias: Vec<f64>,
    a: f64,
}

impl CompressedSpace {
    /// Builds a space whose Φ and Ψ frames coincide (`Vᵀ = I`). `U` and `Σ`
    /// still hold the SVD of `w_psi`. Used for fixtures that are easier to
    /// state directly in Ψ.
    pub fn from_psi(w_psi: Matrix, bias: Vec<f64>, a: f64) -> Result<Self, SpaceError> {
        let head = ModelHead::new(w_psi, bias);
        let mut space = decompose(&head)?;
        let r = space.psi_dim();
        if head.feature_dim() == r {
            space.vt = identity(r);
            space.w_psi = head.weights.clone();
        }
        space.set_domain_bound(a)
    }

    pub fn n_classes(&self) -> usize {
        self.w_psi.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.vt.cols()
    }

    pub fn psi_dim(&self) -> usize {
        self.w_psi.cols()
    }

    pub fn u(&self) -> &Matrix {
        &self.u
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.s
    }

    /// Retained rows of Vᵀ.
    pub fn vt(&self) -> &Matrix {
        &self.vt
    }

    pub fn w_psi(&self) -> &Matrix {
        &self.w_psi
    }

    pub fn w_phi(&self) -> &Matrix {
        &self.w_phi
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// Half-width of the Ψ cube `[−a, a]^r`.
    pub fn a(&self) -> f64 {
        self.a
    }

    /// The full f × f orthogonal Vᵀ (retained rows followed by an orthonormal
    /// completion).
    pub fn full_vt(&self) -> Matrix {
        complete_rows(&self.vt)
    }

    pub fn set_domain_bound(mut self, phi_l2_bound: f64) -> Result<Self, SpaceError> {
        if !(phi_l2_bound.is_finite() && phi_l2_bound >= 0.0) {
            return Err(SpaceError::NegativeBound(phi_l2_bound));
        }
        self.a = phi_l2_bound;
        Ok(self)
    }

    pub fn psi_coords(&self, x_phi: &[f64]) -> Result<Vec<f64>, SpaceError> {
        check_len(Frame::Phi, self.feature_dim(), x_phi.len())?;
        Ok(self.vt.mul_vec(x_phi))
    }

    pub fn to_psi(&self, x: &EmbeddingVector) -> Result<EmbeddingVector, SpaceError> {
        if x.frame != Frame::Phi {
            return Err(SpaceError::FrameMismatch {
                frame: Frame::Phi,
                expected: self.feature_dim(),
                found: x.coords.len(),
            });
        }
        self.psi_coords(&x.coords).map(EmbeddingVector::psi)
    }

    /// Row-wise Ψ projection of a Φ-frame matrix.
    pub fn to_psi_matrix(&self, x_phi: &Matrix) -> Result<Matrix, SpaceError> {
        check_len(Frame::Phi, self.feature_dim(), x_phi.cols())?;
        let rows: Vec<Vec<f64>> = (0..x_phi.rows())
            .into_par_iter()
            .map(|i| self.vt.mul_vec(x_phi.row(i)))
            .collect();
        Ok(Matrix::from_rows(&rows, self.psi_dim()).expect("uniform rows"))
    }

    /// `z = U Σ x_ψ + b`
    pub fn logits_psi(&self, x_psi: &[f64]) -> Result<Vec<f64>, SpaceError> {
        check_len(Frame::Psi, self.psi_dim(), x_psi.len())?;
        Ok(self.logits_psi_unchecked(x_psi))
    }

    pub(crate) fn logits_psi_unchecked(&self, x_psi: &[f64]) -> Vec<f64> {
        self.w_psi
            .iter_rows()
            .zip(&self.bias)
            .map(|(w, b)| dot(w, x_psi) + b)
            .collect()
    }

    /// `z = W x_φ + b`
    pub fn logits_phi(&self, x_phi: &[f64]) -> Result<Vec<f64>, SpaceError> {
        check_len(Frame::Phi, self.feature_dim(), x_phi.len())?;
        Ok(self
            .w_phi
            .iter_rows()
            .zip(&self.bias)
            .map(|(w, b)| dot(w, x_phi) + b)
            .collect())
    }

    pub fn logits(&self, x: &EmbeddingVector) -> Result<Vec<f64>, SpaceError> {
        match x.frame {
            Frame::Phi => self.logits_phi(&x.coords),
            Frame::Psi => self.logits_psi(&x.coords),
        }
    }

    /// Predicted class of a Ψ-frame point.
    pub fn classify_psi(&self, x_psi: &[f64]) -> usize {
        classify(&self.logits_psi_unchecked(x_psi))
    }
}

fn check_len(frame: Frame, expected: usize, found: usize) -> Result<(), SpaceError> {
    if expected == found {
        Ok(())
    } else {
        Err(SpaceError::FrameMismatch { frame, expected, found })
    }
}

fn identity(r: usize) -> Matrix {
    let mut m = Matrix::zeros(r, r);
    for i in 0..r {
        m.set(i, i, 1.0);
    }
    m
}

/// Extends orthonormal rows to a square orthogonal matrix.
fn complete_rows(rows: &Matrix) -> Matrix {
    let f = rows.cols();
    let mut basis = OrthoBasis::new();
    for r in rows.iter_rows() {
        basis.push(r, 1e-8);
    }
    let mut k = 0;
    while basis.rank() < f && k < f {
        let mut e = vec![0.0; f];
        e[k] = 1.0;
        basis.push(&e, 1e-6);
        k += 1;
    }
    let mut out = Matrix::zeros(f, f);
    for (i, v) in basis.vectors().iter().enumerate() {
        out.row_mut(i).copy_from_slice(v);
    }
    // Keep the supplied rows bit-for-bit.
    for (i, r) in rows.iter_rows().enumerate() {
        out.row_mut(i).copy_from_slice(r);
    }
    out
}

/// SVD of the head weights, singular values sorted nonincreasing.
pub fn decompose(head: &ModelHead) -> Result<CompressedSpace, SpaceError> {
    let w = &head.weights;
    let (n, f) = (w.rows(), w.cols());
    let r = n.min(f);
    let svd = nalgebra::linalg::SVD::try_new(w.to_nalgebra(), true, true, f64::EPSILON, 10_000)
        .ok_or(SpaceError::SvdFailure)?;
    let u = svd.u.as_ref().ok_or(SpaceError::SvdFailure)?;
    let v_t = svd.v_t.as_ref().ok_or(SpaceError::SvdFailure)?;
    if svd.singular_values.iter().any(|s| !s.is_finite()) {
        return Err(SpaceError::SvdFailure);
    }

    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&p, &q| svd.singular_values[q].total_cmp(&svd.singular_values[p]));

    let mut s = Vec::with_capacity(r);
    let mut u_thin = Matrix::zeros(r, n);
    let mut vt = Matrix::zeros(r, f);
    for (dst, &src) in order.iter().enumerate() {
        s.push(svd.singular_values[src].max(0.0));
        for i in 0..n {
            u_thin.set(dst, i, u[(i, src)]);
        }
        for j in 0..f {
            vt.set(dst, j, v_t[(src, j)]);
        }
    }
    // Columns of U are stored as rows of `u_thin`; complete and transpose.
    let u_full_t = complete_rows(&u_thin);
    let mut u_full = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            u_full.set(i, j, u_full_t.get(j, i));
        }
    }
    let mut w_psi = Matrix::zeros(n, r);
    for i in 0..n {
        for k in 0..r {
            w_psi.set(i, k, u_full.get(i, k) * s[k]);
        }
    }
    Ok(CompressedSpace {
        u: u_full,
        s,
        vt,
        w_psi,
        w_phi: w.clone(),
        bias: head.bias.clone(),
        a: 0.0,
    })
}

/// Max-subtracted softmax.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Argmax with ties going to the smallest index.
pub fn classify(z: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in z.iter().enumerate().skip(1) {
        if v > z[best] {
            best = k;
        }
    }
    best
}

/// Largest row norm over the given sets, times [`PHI_SAFETY_FACTOR`].
pub fn empirical_phi_bound<'a>(sets: impl IntoIterator<Item = &'a EmbeddingSet>) -> Result<f64, SpaceError> {
    let mut any = false;
    let mut best: f64 = 0.0;
    for set in sets {
        for row in set.x.iter_rows() {
            any = true;
            best = best.max(norm(row));
        }
    }
    if !any {
        return Err(SpaceError::EmptySet);
    }
    Ok(best * PHI_SAFETY_FACTOR)
}
