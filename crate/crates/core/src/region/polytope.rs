//! Vertex enumeration and volume of a pairwise decision-boundary polytope.
//!
//! The `(i, j)` boundary inside the cube is a polytope of dimension at most
//! `r − 1` living in the hyperplane `z_i = z_j`. It is parametrized as
//! `y = y₀ + B t` with `B` an orthonormal basis of the hyperplane, so all
//! work happens in `t ∈ ℝ^{r−1}` where the remaining constraints are plain
//! inequalities `G t ≤ g`.

use std::collections::{BTreeSet, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::boundary::interface_constraints;
use crate::linalg::{affine_basis, axpy, dist, dot, norm, OrthoBasis};
use crate::lp::{feasible_point, Row};
use crate::space::CompressedSpace;

use super::RegionError;

/// Largest Ψ dimension accepted by [`enumerate_boundary_vertices`].
pub const MAX_ENUM_DIM: usize = 12;
/// Cap on visited vertices; reaching it is reported as an error.
pub const MAX_VERTICES: usize = 200_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPolytope {
    pub pair: (usize, usize),
    /// Vertices in Ψ coordinates.
    pub vertices: Vec<Vec<f64>>,
    /// Affine dimension of the vertex set.
    pub dimension: usize,
    /// Dimension of a full-dimensional slice (`r − 1`).
    pub expected_dimension: usize,
    /// For each vertex, the ids of the facet-defining constraints tight at it.
    pub tight: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolytopeVolume {
    /// `expected_dimension`-dimensional measure.
    pub volume: f64,
    /// The vertex set spans fewer dimensions than expected (volume is 0).
    pub degenerate: bool,
}

struct Slice {
    origin: Vec<f64>,
    basis: Vec<Vec<f64>>,
    rows: Vec<Row>,
}

impl Slice {
    fn lift(&self, t: &[f64]) -> Vec<f64> {
        let mut y = self.origin.clone();
        for (b, tk) in self.basis.iter().zip(t) {
            axpy(*tk, b, &mut y);
        }
        y
    }
}

fn build_slice(space: &CompressedSpace, i: usize, j: usize) -> Result<Slice, RegionError> {
    let no_interface = RegionError::NoInterface(i, j);
    let c = interface_constraints(space, i, &[j]).ok_or(no_interface.clone())?;
    let eq = c.eq.first().ok_or(no_interface.clone())?;
    let r = space.psi_dim();
    // eq is normalized: ‖w‖ = 1, so y₀ = c w is the foot of the origin.
    let origin: Vec<f64> = eq.coeffs.iter().map(|w| w * eq.rhs).collect();
    let mut ortho = OrthoBasis::new();
    ortho.push(&eq.coeffs, 1e-12);
    let mut basis = Vec::with_capacity(r - 1);
    for k in 0..r {
        let mut e = vec![0.0; r];
        e[k] = 1.0;
        if ortho.push(&e, 1e-6) {
            basis.push(ortho.vectors().last().expect("just pushed").clone());
        }
        if basis.len() + 1 == r {
            break;
        }
    }
    let scale = 1.0 + space.a();
    let mut rows = Vec::with_capacity(c.le.len());
    for (id, row) in c.le.iter().enumerate() {
        let coeffs: Vec<f64> = basis.iter().map(|b| dot(&row.coeffs, b)).collect();
        let rhs = row.rhs - dot(&row.coeffs, &origin);
        let s = norm(&coeffs);
        if s <= 1e-12 {
            if rhs < -1e-9 * scale {
                return Err(no_interface);
            }
            // Constant, always satisfied: keep the slot so ids stay aligned.
            rows.push(Row::new(vec![0.0; coeffs.len()], f64::INFINITY));
            let _ = id;
            continue;
        }
        rows.push(Row::new(coeffs.iter().map(|v| v / s).collect(), rhs / s));
    }
    Ok(Slice { origin, basis, rows })
}

fn tight_set(rows: &[Row], t: &[f64], tol: f64) -> Vec<usize> {
    rows.iter()
        .enumerate()
        .filter(|(_, r)| r.rhs.is_finite() && (r.rhs - dot(&r.coeffs, t)).abs() <= tol)
        .map(|(k, _)| k)
        .collect()
}

/// Largest step along `d` that keeps `G t ≤ g`, ignoring rows in `skip`.
fn ray(rows: &[Row], t: &[f64], d: &[f64], skip: &[usize]) -> Option<f64> {
    let mut best = f64::INFINITY;
    for (k, r) in rows.iter().enumerate() {
        if !r.rhs.is_finite() || skip.contains(&k) {
            continue;
        }
        let g = dot(&r.coeffs, d);
        if g > 1e-12 {
            let slack = (r.rhs - dot(&r.coeffs, t)).max(0.0);
            best = best.min(slack / g);
        }
    }
    best.is_finite().then_some(best)
}

fn span(rows: &[Row], ids: &[usize]) -> OrthoBasis {
    let mut b = OrthoBasis::new();
    for &k in ids {
        b.push(&rows[k].coeffs, 1e-9);
    }
    b
}

/// Moves a feasible point to a vertex by ray shooting inside the null space
/// of the tight rows.
fn to_vertex(rows: &[Row], mut t: Vec<f64>, m: usize, tol: f64) -> Vec<f64> {
    for _ in 0..=m {
        let tight = tight_set(rows, &t, tol);
        let b = span(rows, &tight);
        if b.rank() >= m {
            break;
        }
        let d = (0..m)
            .map(|k| {
                let mut e = vec![0.0; m];
                e[k] = 1.0;
                b.residual(&e)
            })
            .max_by(|p, q| norm(p).total_cmp(&norm(q)))
            .expect("m > 0");
        let dn: Vec<f64> = d.iter().map(|v| v / norm(&d)).collect();
        let step = ray(rows, &t, &dn, &tight).or_else(|| {
            let neg: Vec<f64> = dn.iter().map(|v| -v).collect();
            ray(rows, &t, &neg, &tight).map(|s| -s)
        });
        match step {
            Some(s) => axpy(s, &dn, &mut t),
            None => break,
        }
    }
    t
}

fn combinations(items: &[usize], k: usize, out: &mut Vec<Vec<usize>>) {
    fn rec(items: &[usize], k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for p in start..items.len() {
            if items.len() - p < k - cur.len() {
                break;
            }
            cur.push(items[p]);
            rec(items, k, p + 1, cur, out);
            cur.pop();
        }
    }
    rec(items, k, 0, &mut Vec::new(), out);
}

/// All vertices of the `(i, j)` boundary polytope.
pub fn enumerate_boundary_vertices(space: &CompressedSpace, i: usize, j: usize) -> Result<BoundaryPolytope, RegionError> {
    let r = space.psi_dim();
    if r > MAX_ENUM_DIM {
        return Err(RegionError::DimensionTooHigh {
            dim: r,
            max: MAX_ENUM_DIM,
        });
    }
    let n = space.n_classes();
    if i == j || i >= n || j >= n {
        return Err(RegionError::NoInterface(i, j));
    }
    let (w, _) = crate::boundary::pair_hyperplane(space, i, j);
    if norm(&w) <= 1e-12 * space.w_psi().max_abs().max(f64::MIN_POSITIVE) {
        return Err(RegionError::DegeneratePair(i, j));
    }
    let slice = build_slice(space, i, j)?;
    let m = r - 1;
    let tol = 1e-9 * (1.0 + space.a());

    if m == 0 {
        let feasible = slice.rows.iter().all(|row| row.rhs >= -tol);
        if !feasible {
            return Err(RegionError::NoInterface(i, j));
        }
        return Ok(BoundaryPolytope {
            pair: (i, j),
            vertices: vec![slice.origin.clone()],
            dimension: 0,
            expected_dimension: 0,
            tight: vec![vec![]],
        });
    }

    let start = feasible_point(m, &[], &slice.rows).ok_or(RegionError::NoInterface(i, j))?;
    let v0 = to_vertex(&slice.rows, start, m, tol);

    let mut verts: Vec<Vec<f64>> = vec![v0.clone()];
    let mut queue = VecDeque::from([0usize]);
    let mut seen_bases: HashSet<Vec<usize>> = HashSet::new();
    while let Some(vi) = queue.pop_front() {
        let v = verts[vi].clone();
        let tight = tight_set(&slice.rows, &v, tol);
        let mut subsets = Vec::new();
        combinations(&tight, m - 1, &mut subsets);
        for sub in subsets {
            let b = span(&slice.rows, &sub);
            if b.rank() != m - 1 {
                continue;
            }
            let mut key = sub.clone();
            key.push(usize::MAX - vi);
            if !seen_bases.insert(key) {
                continue;
            }
            // Edge direction: the null space of the m − 1 rows.
            let d = (0..m)
                .map(|k| {
                    let mut e = vec![0.0; m];
                    e[k] = 1.0;
                    b.residual(&e)
                })
                .max_by(|p, q| norm(p).total_cmp(&norm(q)))
                .expect("m > 0");
            let dn = norm(&d);
            for sign in [1.0, -1.0] {
                let dir: Vec<f64> = d.iter().map(|x| sign * x / dn).collect();
                let blocked = tight
                    .iter()
                    .any(|&k| !sub.contains(&k) && dot(&slice.rows[k].coeffs, &dir) > 1e-9);
                if blocked {
                    continue;
                }
                let Some(step) = ray(&slice.rows, &v, &dir, &sub) else { continue };
                if step <= tol {
                    continue;
                }
                let mut u = v.clone();
                axpy(step, &dir, &mut u);
                if verts.iter().all(|p| dist(p, &u) > 1e3 * tol) {
                    if verts.len() >= MAX_VERTICES {
                        return Err(RegionError::TooManyVertices(MAX_VERTICES));
                    }
                    verts.push(u);
                    queue.push_back(verts.len() - 1);
                }
            }
        }
    }

    let tight: Vec<Vec<usize>> = verts.iter().map(|t| tight_set(&slice.rows, t, 1e3 * tol)).collect();
    let vertices: Vec<Vec<f64>> = verts.iter().map(|t| slice.lift(t)).collect();
    let refs: Vec<&[f64]> = vertices.iter().map(Vec::as_slice).collect();
    let dimension = affine_basis(&refs, 1e-9).rank();
    Ok(BoundaryPolytope {
        pair: (i, j),
        vertices,
        dimension,
        expected_dimension: m,
        tight,
    })
}

impl BoundaryPolytope {
    /// Builds a polytope from its vertices alone, recovering the facets by
    /// brute force over affinely independent vertex subsets. Meant for small
    /// hand-made inputs.
    pub fn from_vertices(pair: (usize, usize), vertices: Vec<Vec<f64>>, expected_dimension: usize) -> Self {
        let refs: Vec<&[f64]> = vertices.iter().map(Vec::as_slice).collect();
        let basis = affine_basis(&refs, 1e-9);
        let dimension = basis.rank();
        let mut tight = vec![Vec::new(); vertices.len()];
        if dimension > 0 && !vertices.is_empty() {
            let local: Vec<Vec<f64>> = vertices
                .iter()
                .map(|v| {
                    let d: Vec<f64> = v.iter().zip(&vertices[0]).map(|(p, q)| p - q).collect();
                    basis.vectors().iter().map(|b| dot(b, &d)).collect()
                })
                .collect();
            let ids: Vec<usize> = (0..vertices.len()).collect();
            let mut subsets = Vec::new();
            combinations(&ids, dimension, &mut subsets);
            let mut facets: BTreeSet<Vec<usize>> = BTreeSet::new();
            for sub in subsets {
                let anchor = &local[sub[0]];
                let mut ob = OrthoBasis::new();
                for &s in &sub[1..] {
                    let d: Vec<f64> = local[s].iter().zip(anchor).map(|(p, q)| p - q).collect();
                    ob.push(&d, 1e-9);
                }
                if ob.rank() + 1 != dimension {
                    continue;
                }
                let normal = (0..dimension)
                    .map(|k| {
                        let mut e = vec![0.0; dimension];
                        e[k] = 1.0;
                        ob.residual(&e)
                    })
                    .max_by(|p, q| norm(p).total_cmp(&norm(q)))
                    .expect("dimension > 0");
                let nn = norm(&normal);
                let side: Vec<f64> = local
                    .iter()
                    .map(|p| {
                        let d: Vec<f64> = p.iter().zip(anchor).map(|(a, b)| a - b).collect();
                        dot(&normal, &d) / nn
                    })
                    .collect();
                let scale = 1e-9 * (1.0 + local.iter().map(|p| norm(p)).fold(0.0, f64::max));
                let above = side.iter().any(|s| *s > scale);
                let below = side.iter().any(|s| *s < -scale);
                if above && below {
                    continue;
                }
                let on: Vec<usize> = (0..local.len()).filter(|&k| side[k].abs() <= scale).collect();
                facets.insert(on);
            }
            for (fid, f) in facets.iter().enumerate() {
                for &v in f {
                    tight[v].push(fid);
                }
            }
        }
        Self {
            pair,
            vertices,
            dimension,
            expected_dimension,
            tight,
        }
    }
}

/// Volume by fan triangulation from face centroids: every flag
/// `P ⊃ F₁ ⊃ … ⊃ edge [u, v]` contributes the simplex
/// `(c_P, c_{F₁}, …, u, v)`, measured with the Gram determinant.
pub fn polytope_volume(p: &BoundaryPolytope) -> PolytopeVolume {
    let m = p.expected_dimension;
    if p.vertices.is_empty() || p.dimension < m {
        return PolytopeVolume {
            volume: 0.0,
            degenerate: true,
        };
    }
    if m == 0 {
        return PolytopeVolume {
            volume: 1.0,
            degenerate: false,
        };
    }
    let all: Vec<usize> = (0..p.vertices.len()).collect();
    let mut chain = Vec::new();
    let volume = fan_volume(p, &all, m, &mut chain);
    PolytopeVolume {
        volume,
        degenerate: false,
    }
}

fn centroid(p: &BoundaryPolytope, ids: &[usize]) -> Vec<f64> {
    let mut c = vec![0.0; p.vertices[ids[0]].len()];
    for &v in ids {
        axpy(1.0, &p.vertices[v], &mut c);
    }
    c.iter_mut().for_each(|x| *x /= ids.len() as f64);
    c
}

fn face_dim(p: &BoundaryPolytope, ids: &[usize]) -> usize {
    let refs: Vec<&[f64]> = ids.iter().map(|&v| p.vertices[v].as_slice()).collect();
    affine_basis(&refs, 1e-9).rank()
}

fn fan_volume(p: &BoundaryPolytope, face: &[usize], dim: usize, chain: &mut Vec<Vec<f64>>) -> f64 {
    if dim == 1 {
        // An edge: its two extreme vertices.
        let (mut u, mut v) = (face[0], face[0]);
        let mut best = -1.0;
        for &a in face {
            for &b in face {
                let d = dist(&p.vertices[a], &p.vertices[b]);
                if d > best {
                    best = d;
                    u = a;
                    v = b;
                }
            }
        }
        let mut pts = chain.clone();
        pts.push(p.vertices[u].clone());
        pts.push(p.vertices[v].clone());
        return simplex_volume(&pts);
    }
    chain.push(centroid(p, face));
    let mut labels: BTreeSet<usize> = BTreeSet::new();
    for &v in face {
        labels.extend(p.tight[v].iter().copied());
    }
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    let mut total = 0.0;
    for k in labels {
        let sub: Vec<usize> = face.iter().copied().filter(|&v| p.tight[v].contains(&k)).collect();
        if sub.len() == face.len() || sub.len() < dim || !seen.insert(sub.clone()) {
            continue;
        }
        if face_dim(p, &sub) != dim - 1 {
            continue;
        }
        total += fan_volume(p, &sub, dim - 1, chain);
    }
    chain.pop();
    total
}

/// `√det(GᵀG) / m!` for the simplex with vertices `pts` (m + 1 points).
pub fn simplex_volume(pts: &[Vec<f64>]) -> f64 {
    let m = pts.len() - 1;
    let e: Vec<Vec<f64>> = pts[1..]
        .iter()
        .map(|q| q.iter().zip(&pts[0]).map(|(a, b)| a - b).collect())
        .collect();
    let gram = nalgebra::DMatrix::from_fn(m, m, |r, c| dot(&e[r], &e[c]));
    let det = gram.determinant().max(0.0);
    let fact: f64 = (1..=m).map(|k| k as f64).product();
    det.sqrt() / fact
}
