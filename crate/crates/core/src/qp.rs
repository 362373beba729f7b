//! Primal active-set method for Euclidean projection onto a polyhedron:
//!
//! ```text
//!     minimize    ½ ‖y − x‖²
//!     subject to  E y  = e
//!                 G y ≤ g
//! ```
//!
//! The Hessian is the identity, so every subproblem is an orthogonal
//! projection onto an affine set and the multipliers come from a small Gram
//! system.

use crate::linalg::{axpy, dot, norm, solve_spd, OrthoBasis};
use crate::lp::{feasible_point, Row};

/// Independence tolerance for working-set rows.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QpError {
    #[error("constraint set is empty")]
    Infeasible,
    #[error("active-set iteration limit reached")]
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct Projection {
    pub point: Vec<f64>,
    /// Indices into the inequality list that are in the final working set.
    pub active: Vec<usize>,
    pub kkt_residual: f64,
    pub iterations: usize,
}

/// Normalizes each row to unit length so feasibility tolerances are in
/// distance units.
pub fn normalized(rows: Vec<Row>) -> Vec<Row> {
    rows.into_iter()
        .filter_map(|r| {
            let s = norm(&r.coeffs);
            (s > 0.0).then(|| Row::new(r.coeffs.iter().map(|c| c / s).collect(), r.rhs / s))
        })
        .collect()
}

pub fn project(
    x: &[f64],
    eq: &[Row],
    le: &[Row],
    feas_tol: f64,
    max_iter: usize,
) -> Result<Projection, QpError> {
    let n = x.len();

    // Fast path: projection onto the equality set, if it happens to satisfy
    // every inequality.
    let (eq_basis, eq_rows) = independent_rows(eq);
    if let Some(y) = affine_projection(x, eq, &eq_rows, le, &[]) {
        if max_violation(&y, eq, le) <= feas_tol {
            let kkt = kkt_residual(x, &y, eq, le, &eq_rows, &[]);
            return Ok(Projection {
                point: y,
                active: vec![],
                kkt_residual: kkt,
                iterations: 0,
            });
        }
    }

    let mut y = feasible_point(n, eq, le).ok_or(QpError::Infeasible)?;

    let mut work: Vec<usize> = Vec::new();
    let mut basis = eq_basis.clone();
    for (i, row) in le.iter().enumerate() {
        let slack = row.rhs - dot(&row.coeffs, &y);
        if slack.abs() <= feas_tol && basis.push(&row.coeffs, RANK_TOL) {
            work.push(i);
        }
    }

    for iter in 0..max_iter {
        let basis = working_basis(eq, &eq_rows, le, &work);
        let r: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        let p = basis.residual(&r);
        let pn = norm(&p);
        let scale = 1.0 + norm(x).max(norm(&y));

        if pn <= 1e-13 * scale {
            // Stationary on the working set: check inequality multipliers.
            let lambda = multipliers(&r, eq, &eq_rows, le, &work);
            let offset = eq_rows.len();
            let worst = work
                .iter()
                .enumerate()
                .map(|(k, &i)| (i, lambda.as_ref().map_or(0.0, |l| l[offset + k])))
                .min_by(|a, b| a.1.total_cmp(&b.1));
            match worst {
                Some((i, mu)) if mu < -1e-12 * scale => {
                    work.retain(|&w| w != i);
                }
                _ => {
                    let kkt = kkt_residual(x, &y, eq, le, &eq_rows, &work);
                    return Ok(Projection {
                        point: y,
                        active: work,
                        kkt_residual: kkt,
                        iterations: iter + 1,
                    });
                }
            }
            continue;
        }

        let mut alpha = 1.0;
        let mut block = None;
        for (i, row) in le.iter().enumerate() {
            if work.contains(&i) {
                continue;
            }
            let gp = dot(&row.coeffs, &p);
            if gp > 1e-14 * pn {
                let slack = (row.rhs - dot(&row.coeffs, &y)).max(0.0);
                let step = slack / gp;
                if step < alpha {
                    alpha = step;
                    block = Some(i);
                }
            }
        }
        axpy(alpha, &p, &mut y);
        if let Some(i) = block {
            work.push(i);
        }
    }
    Err(QpError::IterationLimit)
}

fn independent_rows(eq: &[Row]) -> (OrthoBasis, Vec<usize>) {
    let mut basis = OrthoBasis::new();
    let mut kept = Vec::new();
    for (i, row) in eq.iter().enumerate() {
        if basis.push(&row.coeffs, RANK_TOL) {
            kept.push(i);
        }
    }
    (basis, kept)
}

fn working_basis(eq: &[Row], eq_rows: &[usize], le: &[Row], work: &[usize]) -> OrthoBasis {
    let mut basis = OrthoBasis::new();
    for &i in eq_rows {
        basis.push(&eq[i].coeffs, RANK_TOL);
    }
    for &i in work {
        basis.push(&le[i].coeffs, RANK_TOL);
    }
    basis
}

fn gather<'a>(eq: &'a [Row], eq_rows: &[usize], le: &'a [Row], work: &[usize]) -> Vec<&'a Row> {
    eq_rows
        .iter()
        .map(|&i| &eq[i])
        .chain(work.iter().map(|&i| &le[i]))
        .collect()
}

/// Least-squares multipliers `λ` with `r ≈ Aᵀ λ` for the working rows.
fn multipliers(r: &[f64], eq: &[Row], eq_rows: &[usize], le: &[Row], work: &[usize]) -> Option<Vec<f64>> {
    let rows = gather(eq, eq_rows, le, work);
    if rows.is_empty() {
        return Some(vec![]);
    }
    let gram: Vec<Vec<f64>> = rows
        .iter()
        .map(|a| rows.iter().map(|b| dot(&a.coeffs, &b.coeffs)).collect())
        .collect();
    let rhs: Vec<f64> = rows.iter().map(|a| dot(&a.coeffs, r)).collect();
    solve_spd(&gram, &rhs)
}

/// Projection of `x` onto `{A y = c}` for the selected rows.
fn affine_projection(
    x: &[f64],
    eq: &[Row],
    eq_rows: &[usize],
    le: &[Row],
    work: &[usize],
) -> Option<Vec<f64>> {
    let rows = gather(eq, eq_rows, le, work);
    if rows.is_empty() {
        return Some(x.to_vec());
    }
    let gram: Vec<Vec<f64>> = rows
        .iter()
        .map(|a| rows.iter().map(|b| dot(&a.coeffs, &b.coeffs)).collect())
        .collect();
    let rhs: Vec<f64> = rows.iter().map(|a| dot(&a.coeffs, x) - a.rhs).collect();
    let lambda = solve_spd(&gram, &rhs)?;
    let mut y = x.to_vec();
    for (l, a) in lambda.iter().zip(&rows) {
        axpy(-l, &a.coeffs, &mut y);
    }
    Some(y)
}

pub fn max_violation(y: &[f64], eq: &[Row], le: &[Row]) -> f64 {
    let e = eq
        .iter()
        .map(|r| (dot(&r.coeffs, y) - r.rhs).abs())
        .fold(0.0, f64::max);
    let g = le
        .iter()
        .map(|r| dot(&r.coeffs, y) - r.rhs)
        .fold(0.0, f64::max);
    e.max(g)
}

/// Stationarity residual plus dual-sign and primal violations at `y`.
fn kkt_residual(x: &[f64], y: &[f64], eq: &[Row], le: &[Row], eq_rows: &[usize], work: &[usize]) -> f64 {
    let r: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let rows = gather(eq, eq_rows, le, work);
    let Some(lambda) = multipliers(&r, eq, eq_rows, le, work) else {
        return f64::INFINITY;
    };
    let mut s = r.clone();
    for (l, a) in lambda.iter().zip(&rows) {
        axpy(-l, &a.coeffs, &mut s);
    }
    let dual = lambda[eq_rows.len()..]
        .iter()
        .fold(0.0_f64, |m, &l| m.max(-l));
    norm(&s) + dual + max_violation(y, eq, le)
}
