//! Per-class convex hulls of the training points in Ψ.

use serde::{Deserialize, Serialize};

use crate::bundle::EmbeddingSet;
use crate::linalg::{dist, dot};
use crate::lp::in_convex_hull;
use crate::matrix::Matrix;
use crate::mc::{count_hits, wilson, Proportion};
use crate::space::{CompressedSpace, SpaceError};

pub const DEFAULT_EPS_BAR: f64 = 0.01;
/// Largest Ψ dimension for which rejection sampling of the hull is attempted.
pub const MAX_VOLUME_DIM: usize = 12;
pub const MIN_VOLUME_SAMPLES: usize = 1000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HullError {
    #[error("class {0} has no training points")]
    EmptyClass(usize),
    #[error("class {0} is out of range")]
    ClassOutOfRange(usize),
    #[error("eps_bar must lie in (0, 1), got {0}")]
    InvalidEpsBar(f64),
    #[error("point has length {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("hull volume estimation supports at most {MAX_VOLUME_DIM} dimensions, got {0}")]
    DimensionTooHigh(usize),
    #[error("at least {MIN_VOLUME_SAMPLES} samples required, got {0}")]
    TooFewSamples(usize),
    #[error("box exceeds the domain [-{0}, {0}]")]
    BoxOutsideDomain(f64),
    #[error("offset must be finite and >= 0, got {0}")]
    InvalidOffset(f64),
    #[error(transparent)]
    Space(#[from] SpaceError),
}

/// Training points in Ψ grouped by class.
#[derive(Debug, Clone)]
pub struct TrainingGeometry {
    points: Matrix,
    labels: Vec<u32>,
    members: Vec<Vec<usize>>,
    centroids: Vec<Vec<f64>>,
    /// Largest centroid-to-member distance per class.
    spreads: Vec<f64>,
}

impl TrainingGeometry {
    pub fn new(points: Matrix, labels: &[u32], n_classes: usize) -> Result<Self, HullError> {
        let dim = points.cols();
        let mut members = vec![Vec::new(); n_classes];
        for (i, &l) in labels.iter().enumerate() {
            members
                .get_mut(l as usize)
                .ok_or(HullError::ClassOutOfRange(l as usize))?
                .push(i);
        }
        if let Some(k) = members.iter().position(Vec::is_empty) {
            return Err(HullError::EmptyClass(k));
        }
        let centroids: Vec<Vec<f64>> = members
            .iter()
            .map(|idx| {
                let mut c = vec![0.0; dim];
                for &i in idx {
                    for (cv, pv) in c.iter_mut().zip(points.row(i)) {
                        *cv += pv;
                    }
                }
                c.iter_mut().for_each(|v| *v /= idx.len() as f64);
                c
            })
            .collect();
        let spreads = members
            .iter()
            .zip(&centroids)
            .map(|(idx, c)| idx.iter().map(|&i| dist(points.row(i), c)).fold(0.0, f64::max))
            .collect();
        Ok(Self {
            points,
            labels: labels.to_vec(),
            members,
            centroids,
            spreads,
        })
    }

    /// Projects a labeled Φ-frame training set into `space`.
    pub fn from_space(space: &CompressedSpace, train: &EmbeddingSet) -> Result<Self, HullError> {
        let pts = space.to_psi_matrix(&train.x)?;
        let labels = train.labels.as_deref().unwrap_or(&[]);
        Self::new(pts, labels, space.n_classes())
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    pub fn n_classes(&self) -> usize {
        self.members.len()
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.rows() == 0
    }

    pub fn points(&self) -> &Matrix {
        &self.points
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// Global indices of the class-`k` points.
    pub fn members(&self, k: usize) -> &[usize] {
        &self.members[k]
    }

    pub fn class_counts(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }

    pub fn centroid(&self, k: usize) -> &[f64] {
        &self.centroids[k]
    }

    fn check_point(&self, x: &[f64]) -> Result<(), HullError> {
        if x.len() == self.dim() {
            Ok(())
        } else {
            Err(HullError::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            })
        }
    }

    pub fn project_to_hull(&self, x: &[f64], k: usize, eps_bar: f64) -> Result<HullProjection, HullError> {
        self.project_to_hull_excluding(x, k, eps_bar, None)
    }

    /// As [`project_to_hull`](Self::project_to_hull), leaving out training
    /// point `exclude` (a global index) unless it is the only member of the
    /// class.
    pub fn project_to_hull_excluding(
        &self,
        x: &[f64],
        k: usize,
        eps_bar: f64,
        exclude: Option<usize>,
    ) -> Result<HullProjection, HullError> {
        self.check_point(x)?;
        if !(eps_bar > 0.0 && eps_bar < 1.0) {
            return Err(HullError::InvalidEpsBar(eps_bar));
        }
        let all = self.members.get(k).ok_or(HullError::ClassOutOfRange(k))?;
        let verts: Vec<usize> = match exclude {
            Some(e) if all.len() > 1 && all.contains(&e) => all.iter().copied().filter(|&i| i != e).collect(),
            _ => all.clone(),
        };
        if verts.is_empty() {
            return Err(HullError::EmptyClass(k));
        }
        let spread = if verts.len() == all.len() { self.spreads[k] } else { 0.0 };
        Ok(frank_wolfe(x, &self.points, &verts, spread, eps_bar))
    }

    pub fn hull_distance_vector(&self, x: &[f64], eps_bar: f64) -> Result<Vec<f64>, HullError> {
        self.hull_distance_vector_excluding(x, eps_bar, None)
    }

    pub fn hull_distance_vector_excluding(
        &self,
        x: &[f64],
        eps_bar: f64,
        exclude: Option<usize>,
    ) -> Result<Vec<f64>, HullError> {
        (0..self.n_classes())
            .map(|k| Ok(self.project_to_hull_excluding(x, k, eps_bar, exclude)?.distance))
            .collect()
    }

    /// Distance from `x` to the nearest training point.
    pub fn gap_radius(&self, x: &[f64]) -> Result<f64, HullError> {
        self.gap_radius_excluding(x, None)
    }

    pub fn gap_radius_excluding(&self, x: &[f64], exclude: Option<usize>) -> Result<f64, HullError> {
        self.check_point(x)?;
        let best = self
            .points
            .iter_rows()
            .enumerate()
            .filter(|(i, _)| Some(*i) != exclude)
            .map(|(_, p)| sq_dist(x, p))
            .fold(f64::INFINITY, f64::min);
        Ok(best.sqrt())
    }

    pub fn bounding_box(&self) -> HullBox {
        let d = self.dim();
        let mut lower = vec![f64::INFINITY; d];
        let mut upper = vec![f64::NEG_INFINITY; d];
        for p in self.points.iter_rows() {
            for k in 0..d {
                lower[k] = lower[k].min(p[k]);
                upper[k] = upper[k].max(p[k]);
            }
        }
        HullBox {
            lower,
            upper,
            offset: None,
        }
    }

    /// Whether `x` lies in the convex hull of all training points.
    pub fn in_hull(&self, x: &[f64]) -> bool {
        let bbox = self.bounding_box();
        if !bbox.contains(x, 1e-9) {
            return false;
        }
        let pts: Vec<&[f64]> = self.points.iter_rows().collect();
        in_convex_hull(&pts, x)
    }

    /// Fraction of `[−a, a]^dim` covered by the pooled training hull.
    pub fn hull_volume_fraction(&self, a: f64, n_samples: usize, seed: u64) -> Result<Proportion, HullError> {
        let d = self.dim();
        if d > MAX_VOLUME_DIM {
            return Err(HullError::DimensionTooHigh(d));
        }
        if n_samples < MIN_VOLUME_SAMPLES {
            return Err(HullError::TooFewSamples(n_samples));
        }
        let bbox = self.bounding_box();
        let pts: Vec<&[f64]> = self.points.iter_rows().collect();
        let hits = count_hits(d, a, n_samples, seed, 1, |y, out| {
            out[0] = bbox.contains(y, 0.0) && in_convex_hull(&pts, y);
        });
        Ok(wilson(hits[0], n_samples as u64))
    }
}

fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[derive(Debug, Clone)]
pub struct HullProjection {
    pub point: Vec<f64>,
    pub distance: f64,
    /// Convex weights as `(global point index, weight)`, zero weights omitted.
    pub weights: Vec<(usize, f64)>,
    pub iterations: usize,
    /// Final Frank–Wolfe gap `max_s ⟨x − x̂, s − x̂⟩`.
    pub gap: f64,
    pub converged: bool,
}

/// Iteration budget for a given accuracy.
pub fn max_iterations(eps_bar: f64) -> usize {
    (4.0 / (eps_bar * eps_bar)).ceil() as usize
}

/// Frank–Wolfe with exact line search on `½‖x − y‖²` over the hull of
/// `verts`, warm-started at the nearest vertex. Stops once the gap is at most
/// `eps_bar² L² / 2` with `L ≤ diam(verts ∪ {x})`, which bounds the excess
/// distance by `eps_bar · diam`.
fn frank_wolfe(x: &[f64], points: &Matrix, verts: &[usize], spread: f64, eps_bar: f64) -> HullProjection {
    let mut nearest = 0;
    let mut nearest_d = f64::INFINITY;
    let mut far: f64 = 0.0;
    for (local, &g) in verts.iter().enumerate() {
        let d = sq_dist(x, points.row(g));
        if d < nearest_d {
            nearest_d = d;
            nearest = local;
        }
        far = far.max(d);
    }
    let diam_lb = far.sqrt().max(spread);
    let threshold = 0.5 * (eps_bar * diam_lb).powi(2);
    let budget = max_iterations(eps_bar);

    let mut y = points.row(verts[nearest]).to_vec();
    let mut w = vec![0.0; verts.len()];
    w[nearest] = 1.0;
    let mut r: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
    let mut gap = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = verts.len() == 1;

    if !converged {
        while iterations < budget {
            let ry = dot(&r, &y);
            let (best, best_score) = verts
                .iter()
                .enumerate()
                .map(|(l, &g)| (l, dot(&r, points.row(g))))
                .fold((0, f64::NEG_INFINITY), |acc, c| if c.1 > acc.1 { c } else { acc });
            gap = best_score - ry;
            if gap <= threshold {
                converged = true;
                break;
            }
            let s = points.row(verts[best]);
            let d: Vec<f64> = s.iter().zip(&y).map(|(a, b)| a - b).collect();
            let dd = dot(&d, &d);
            if dd == 0.0 {
                converged = true;
                break;
            }
            let gamma = (dot(&r, &d) / dd).clamp(0.0, 1.0);
            for (yi, di) in y.iter_mut().zip(&d) {
                *yi += gamma * di;
            }
            for wi in w.iter_mut() {
                *wi *= 1.0 - gamma;
            }
            w[best] += gamma;
            for (ri, (xi, yi)) in r.iter_mut().zip(x.iter().zip(&y)) {
                *ri = xi - yi;
            }
            iterations += 1;
        }
        if !converged {
            let ry = dot(&r, &y);
            gap = verts.iter().map(|&g| dot(&r, points.row(g))).fold(f64::NEG_INFINITY, f64::max) - ry;
            converged = gap <= threshold;
        }
    } else {
        gap = 0.0;
    }

    let weights = verts
        .iter()
        .zip(&w)
        .filter(|(_, &wi)| wi > 0.0)
        .map(|(&g, &wi)| (g, wi))
        .collect();
    HullProjection {
        distance: dist(x, &y),
        point: y,
        weights,
        iterations,
        gap: gap.max(0.0),
        converged,
    }
}

/// Axis-aligned box around the training points, optionally grown outward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HullBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// The offset `δʰ` if [`offset_box`] was applied.
    pub offset: Option<f64>,
}

impl HullBox {
    pub fn volume(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(l, u)| (u - l).max(0.0)).product()
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| *v >= l - tol && *v <= u + tol)
    }
}

/// Grows the box by `delta_h` per side, clamped to `[−a, a]`.
pub fn offset_box(b: &HullBox, delta_h: f64, a: f64) -> Result<HullBox, HullError> {
    if !(delta_h.is_finite() && delta_h >= 0.0) {
        return Err(HullError::InvalidOffset(delta_h));
    }
    let tol = 1e-12 * a.max(1.0);
    if b.lower.iter().chain(&b.upper).any(|v| v.abs() > a + tol) {
        return Err(HullError::BoxOutsideDomain(a));
    }
    Ok(HullBox {
        lower: b.lower.iter().map(|l| (l - delta_h).max(-a)).collect(),
        upper: b.upper.iter().map(|u| (u + delta_h).min(a)).collect(),
        offset: Some(delta_h),
    })
}
