//! Closest points on decision boundaries in Ψ.
//!
//! The direct interface between the predicted class `i` and a set `γ` of
//! other classes is
//!
//! ```text
//!     z_i(y) = z_j(y)      for j ∈ γ
//!     z_i(y) ≥ z_k(y)      for k ∉ {i} ∪ γ
//!     y ∈ [−a, a]^r
//! ```
//!
//! When it is empty the relaxed target is the whole (closed) region where
//! class `j` is on top. Both are polyhedra, so the closest point is a
//! Euclidean projection solved by [`crate::qp`].

use serde::{Deserialize, Serialize};

use crate::linalg::{dist, dot, norm};
use crate::lp::{feasible_point, Row};
use crate::qp::{normalized, project, QpError};
use crate::space::CompressedSpace;

/// Constraint satisfaction tolerance for flip points.
pub const CONSTRAINT_TOL: f64 = 1e-6;
/// Feasibility tolerance handed to the active-set solver (distance units).
pub const QP_FEAS_TOL: f64 = 1e-9;
/// Active-set iterations allowed per class.
pub const ITERATIONS_PER_CLASS: usize = 50;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BoundaryError {
    #[error("class {0} is out of range")]
    InvalidClass(usize),
    #[error("point has length {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("target class set is empty or contains the source class")]
    InvalidTargets,
    #[error("point is classified as {found}, not {expected}")]
    NotSourceClass { expected: usize, found: usize },
    #[error("point is already classified as the target class {0}")]
    NotTargetClass(usize),
    #[error("no interface between class {source_class} and {targets:?} inside the domain")]
    NoInterface { source_class: usize, targets: Vec<usize> },
    #[error("class {0} is not dominant anywhere inside the domain")]
    EmptyTargetRegion(usize),
    #[error("classes {0} and {1} have identical weight rows")]
    DegeneratePair(usize, usize),
    #[error("no boundary with any other class inside the domain")]
    AllTargetsEmpty,
    #[error("projection failed: {0}")]
    Solver(QpError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipPoint {
    pub point: Vec<f64>,
    pub source: usize,
    pub targets: Vec<usize>,
    pub distance: f64,
    /// The direct interface was empty and the class region was used instead.
    pub relaxed: bool,
    pub kkt_residual: f64,
}

/// `w = W_ψ[i] − W_ψ[j]`, `c = b[i] − b[j]`.
pub fn pair_hyperplane(space: &CompressedSpace, i: usize, j: usize) -> (Vec<f64>, f64) {
    let w = space.w_psi();
    let b = space.bias();
    let coeffs = w.row(i).iter().zip(w.row(j)).map(|(p, q)| p - q).collect();
    (coeffs, b[i] - b[j])
}

/// Distance from `x` to the unbounded hyperplane `z_i = z_j`.
pub fn hyperplane_distance(space: &CompressedSpace, x: &[f64], i: usize, j: usize) -> f64 {
    let (w, c) = pair_hyperplane(space, i, j);
    (dot(&w, x) + c).abs() / norm(&w)
}

fn is_degenerate(space: &CompressedSpace, i: usize, j: usize) -> bool {
    let (w, _) = pair_hyperplane(space, i, j);
    let scale = space.w_psi().max_abs().max(f64::MIN_POSITIVE);
    norm(&w) <= 1e-12 * scale
}

fn check_class(space: &CompressedSpace, k: usize) -> Result<(), BoundaryError> {
    if k < space.n_classes() {
        Ok(())
    } else {
        Err(BoundaryError::InvalidClass(k))
    }
}

fn check_point(space: &CompressedSpace, x: &[f64]) -> Result<(), BoundaryError> {
    if x.len() == space.psi_dim() {
        Ok(())
    } else {
        Err(BoundaryError::DimensionMismatch {
            expected: space.psi_dim(),
            found: x.len(),
        })
    }
}

fn box_rows(r: usize, a: f64) -> Vec<Row> {
    let mut rows = Vec::with_capacity(2 * r);
    for d in 0..r {
        let mut e = vec![0.0; r];
        e[d] = 1.0;
        rows.push(Row::new(e.clone(), a));
        e[d] = -1.0;
        rows.push(Row::new(e, a));
    }
    rows
}

/// `z_k(y) ≤ z_top(y)`, i.e. `(w_k − w_top)·y ≤ b_top − b_k`. `None` when a
/// zero-coefficient row can never hold.
fn dominance_row(space: &CompressedSpace, top: usize, k: usize) -> Option<Option<Row>> {
    let (w, c) = pair_hyperplane(space, k, top);
    let rhs = -c;
    if is_degenerate(space, k, top) {
        let tol = 1e-12 * space.bias().iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        return if rhs >= -tol { Some(None) } else { None };
    }
    Some(Some(Row::new(w, rhs)))
}

#[derive(Debug, Clone)]
pub(crate) struct Constraints {
    pub eq: Vec<Row>,
    pub le: Vec<Row>,
}

/// Interface between `i` and every class of `gamma`, inside the cube.
/// `None` if trivially infeasible.
pub(crate) fn interface_constraints(space: &CompressedSpace, i: usize, gamma: &[usize]) -> Option<Constraints> {
    let mut eq = Vec::new();
    for &j in gamma {
        let (w, c) = pair_hyperplane(space, i, j);
        eq.push(Row::new(w, -c));
    }
    let mut le = Vec::new();
    for k in 0..space.n_classes() {
        if k == i || gamma.contains(&k) {
            continue;
        }
        if let Some(row) = dominance_row(space, i, k)? {
            le.push(row);
        }
    }
    le.extend(box_rows(space.psi_dim(), space.a()));
    Some(Constraints {
        eq: normalized(eq),
        le: normalized(le),
    })
}

/// Closed region where `j` is (weakly) on top, inside the cube.
pub(crate) fn region_constraints(space: &CompressedSpace, j: usize) -> Option<Constraints> {
    let mut le = Vec::new();
    for k in 0..space.n_classes() {
        if k == j {
            continue;
        }
        if let Some(row) = dominance_row(space, j, k)? {
            le.push(row);
        }
    }
    le.extend(box_rows(space.psi_dim(), space.a()));
    Some(Constraints {
        eq: vec![],
        le: normalized(le),
    })
}

/// Whether the `(i, j)` interface meets the cube, by phase-1 feasibility.
pub fn check_interface(space: &CompressedSpace, i: usize, j: usize) -> bool {
    if i == j || i >= space.n_classes() || j >= space.n_classes() || is_degenerate(space, i, j) {
        return false;
    }
    match interface_constraints(space, i, &[j]) {
        Some(c) => feasible_point(space.psi_dim(), &c.eq, &c.le).is_some(),
        None => false,
    }
}

fn max_iter(space: &CompressedSpace) -> usize {
    ITERATIONS_PER_CLASS * space.n_classes()
}

/// Closest point of the `(i, j)` interface, where `i` is the class of `x`.
pub fn project_to_boundary(space: &CompressedSpace, x: &[f64], i: usize, j: usize) -> Result<FlipPoint, BoundaryError> {
    check_point(space, x)?;
    check_class(space, i)?;
    let found = space.classify_psi(x);
    if found != i {
        return Err(BoundaryError::NotSourceClass { expected: i, found });
    }
    project_to_multi(space, x, &[j])
}

/// Closest point where the class of `x` ties with every class in `gamma`
/// and beats the rest.
pub fn project_to_multi(space: &CompressedSpace, x: &[f64], gamma: &[usize]) -> Result<FlipPoint, BoundaryError> {
    check_point(space, x)?;
    for &k in gamma {
        check_class(space, k)?;
    }
    let i = space.classify_psi(x);
    if gamma.is_empty() || gamma.contains(&i) {
        return Err(BoundaryError::InvalidTargets);
    }
    if let Some(&j) = gamma.iter().find(|&&j| is_degenerate(space, i, j)) {
        return Err(BoundaryError::DegeneratePair(i, j));
    }
    let no_interface = || BoundaryError::NoInterface {
        source_class: i,
        targets: gamma.to_vec(),
    };
    let c = interface_constraints(space, i, gamma).ok_or_else(no_interface)?;
    match project(x, &c.eq, &c.le, QP_FEAS_TOL, max_iter(space)) {
        Ok(p) => Ok(FlipPoint {
            distance: dist(x, &p.point),
            point: p.point,
            source: i,
            targets: gamma.to_vec(),
            relaxed: false,
            kkt_residual: p.kkt_residual,
        }),
        Err(QpError::Infeasible) => Err(no_interface()),
        Err(e) => Err(BoundaryError::Solver(e)),
    }
}

/// Closest point of the region where class `j` is on top.
pub fn project_relaxed(space: &CompressedSpace, x: &[f64], j: usize) -> Result<FlipPoint, BoundaryError> {
    check_point(space, x)?;
    check_class(space, j)?;
    let i = space.classify_psi(x);
    if i == j {
        return Err(BoundaryError::NotTargetClass(j));
    }
    let c = region_constraints(space, j).ok_or(BoundaryError::EmptyTargetRegion(j))?;
    match project(x, &c.eq, &c.le, QP_FEAS_TOL, max_iter(space)) {
        Ok(p) => Ok(FlipPoint {
            distance: dist(x, &p.point),
            point: p.point,
            source: i,
            targets: vec![j],
            relaxed: true,
            kkt_residual: p.kkt_residual,
        }),
        Err(QpError::Infeasible) => Err(BoundaryError::EmptyTargetRegion(j)),
        Err(e) => Err(BoundaryError::Solver(e)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "flip", rename_all = "snake_case")]
pub enum BoundaryEntry {
    Source,
    Direct(FlipPoint),
    Relaxed(FlipPoint),
    EmptyTargetRegion,
    DegeneratePair,
}

impl BoundaryEntry {
    /// `0` for the source class, `+∞` when there is nothing to reach.
    pub fn distance(&self) -> f64 {
        match self {
            BoundaryEntry::Source => 0.0,
            BoundaryEntry::Direct(fp) | BoundaryEntry::Relaxed(fp) => fp.distance,
            BoundaryEntry::EmptyTargetRegion | BoundaryEntry::DegeneratePair => f64::INFINITY,
        }
    }

    pub fn flip(&self) -> Option<&FlipPoint> {
        match self {
            BoundaryEntry::Direct(fp) | BoundaryEntry::Relaxed(fp) => Some(fp),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryVector {
    pub source: usize,
    pub entries: Vec<BoundaryEntry>,
}

impl BoundaryVector {
    pub fn distances(&self) -> Vec<f64> {
        self.entries.iter().map(BoundaryEntry::distance).collect()
    }
}

/// Distance from `x` to the boundary with every other class.
pub fn boundary_distance_vector(space: &CompressedSpace, x: &[f64]) -> Result<BoundaryVector, BoundaryError> {
    check_point(space, x)?;
    let i = space.classify_psi(x);
    let mut entries = Vec::with_capacity(space.n_classes());
    for k in 0..space.n_classes() {
        let entry = if k == i {
            BoundaryEntry::Source
        } else if is_degenerate(space, i, k) {
            BoundaryEntry::DegeneratePair
        } else {
            match project_to_multi(space, x, &[k]) {
                Ok(fp) => BoundaryEntry::Direct(fp),
                Err(BoundaryError::NoInterface { .. }) => match project_relaxed(space, x, k) {
                    Ok(fp) => BoundaryEntry::Relaxed(fp),
                    Err(BoundaryError::EmptyTargetRegion(_)) => BoundaryEntry::EmptyTargetRegion,
                    Err(e) => return Err(e),
                },
                Err(e) => return Err(e),
            }
        };
        entries.push(entry);
    }
    Ok(BoundaryVector { source: i, entries })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinBoundary {
    pub distance: f64,
    pub class: usize,
    pub relaxed: bool,
}

/// Smallest finite entry over the non-source classes; ties go to the
/// smallest class index.
pub fn min_boundary_distance(v: &BoundaryVector) -> Result<MinBoundary, BoundaryError> {
    let mut best: Option<MinBoundary> = None;
    for (k, e) in v.entries.iter().enumerate() {
        if k == v.source {
            continue;
        }
        let Some(fp) = e.flip() else { continue };
        if best.is_none_or(|b| fp.distance < b.distance) {
            best = Some(MinBoundary {
                distance: fp.distance,
                class: k,
                relaxed: fp.relaxed,
            });
        }
    }
    best.ok_or(BoundaryError::AllTargetsEmpty)
}

/// Independent check of a flip point against its defining constraints.
/// Returns the worst violation (0 when satisfied).
pub fn flip_violation(space: &CompressedSpace, fp: &FlipPoint) -> f64 {
    let z = space.logits_psi_unchecked(&fp.point);
    let zmax = z.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let mut worst: f64 = 0.0;
    let a = space.a();
    for v in &fp.point {
        worst = worst.max(v.abs() - a);
    }
    if fp.relaxed {
        let j = fp.targets[0];
        for (k, zk) in z.iter().enumerate() {
            if k != j {
                worst = worst.max(zk - z[j]);
            }
        }
    } else {
        let i = fp.source;
        for &j in &fp.targets {
            worst = worst.max((z[i] - z[j]).abs() / (1.0 + zmax));
        }
        for (k, zk) in z.iter().enumerate() {
            if k != i && !fp.targets.contains(&k) {
                worst = worst.max(zk - z[i]);
            }
        }
    }
    worst.max(0.0)
}
