//! Small dense vector helpers shared by the solvers.
//!
//! Everything here works on plain `&[f64]` slices; the problem sizes in this
//! crate are tiny (tens of coordinates) so there is no point in pulling a
//! matrix type through every call site.

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

pub fn norm_inf(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn sub(x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(a, b)| a - b).collect()
}

pub fn dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// y += a * x
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn scale(x: &[f64], a: f64) -> Vec<f64> {
    x.iter().map(|v| a * v).collect()
}

/// Orthonormal basis of a span, built incrementally by modified Gram–Schmidt
/// with one reorthogonalization pass.
#[derive(Debug, Clone, Default)]
pub struct OrthoBasis {
    vectors: Vec<Vec<f64>>,
}

impl OrthoBasis {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rank(&self) -> usize {
        self.vectors.len()
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    /// Component of `v` orthogonal to the current span.
    pub fn residual(&self, v: &[f64]) -> Vec<f64> {
        let mut r = v.to_vec();
        for _ in 0..2 {
            for q in &self.vectors {
                let c = dot(q, &r);
                axpy(-c, q, &mut r);
            }
        }
        r
    }

    /// Adds `v` if its residual norm exceeds `tol * ‖v‖`. Returns whether the
    /// span grew.
    pub fn push(&mut self, v: &[f64], tol: f64) -> bool {
        let scale = norm(v);
        if scale == 0.0 {
            return false;
        }
        let r = self.residual(v);
        let rn = norm(&r);
        if rn <= tol * scale {
            return false;
        }
        self.vectors.push(r.into_iter().map(|x| x / rn).collect());
        true
    }

    /// Orthogonal projection of `v` onto the span.
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        let r = self.residual(v);
        sub(v, &r)
    }
}

/// Affine dimension of a point set (rank of the differences to the first
/// point).
pub fn affine_dim(points: &[&[f64]], tol: f64) -> usize {
    affine_basis(points, tol).rank()
}

pub fn affine_basis(points: &[&[f64]], tol: f64) -> OrthoBasis {
    let mut basis = OrthoBasis::new();
    if let Some((first, rest)) = points.split_first() {
        for p in rest {
            basis.push(&sub(p, first), tol);
        }
    }
    basis
}

/// Euclidean distance from `x` to the affine hull of `points`.
pub fn distance_to_affine_hull(x: &[f64], points: &[&[f64]], tol: f64) -> f64 {
    let basis = affine_basis(points, tol);
    let d = sub(x, points[0]);
    norm(&basis.residual(&d))
}

/// Solves the symmetric positive definite system `g λ = rhs` by Cholesky.
/// Returns `None` when `g` is numerically singular.
pub fn solve_spd(g: &[Vec<f64>], rhs: &[f64]) -> Option<Vec<f64>> {
    let m = rhs.len();
    let mat = nalgebra::DMatrix::from_fn(m, m, |i, j| g[i][j]);
    let chol = nalgebra::Cholesky::new(mat)?;
    let sol = chol.solve(&nalgebra::DVector::from_column_slice(rhs));
    Some(sol.iter().copied().collect())
}
