//! Dense phase-1 simplex.
//!
//! Only feasibility is ever needed here: interface existence, hull membership
//! and a starting vertex for polytope enumeration. The tableau uses Bland's
//! rule so degenerate problems (which are the norm for cube/hyperplane
//! intersections) terminate.

/// Pivot tolerance.
pub const PIVOT_TOL: f64 = 1e-10;
/// Feasibility tolerance on the phase-1 objective, relative to `max(1, ‖b‖∞)`.
pub const FEAS_TOL: f64 = 1e-8;

const MAX_PIVOTS: usize = 100_000;

/// A basic feasible solution of `A x = b, x ≥ 0`.
#[derive(Debug, Clone)]
pub struct BasicSolution {
    pub x: Vec<f64>,
    /// Basic column per kept row.
    pub basis: Vec<usize>,
    /// Indices of the rows of `A` that were kept (redundant rows dropped).
    pub rows: Vec<usize>,
}

/// Finds a basic feasible solution of `A x = b, x ≥ 0`, or `None` when the
/// system is infeasible.
pub fn phase_one(a: &[Vec<f64>], b: &[f64]) -> Option<BasicSolution> {
    let m = b.len();
    let ncols = a.first().map_or(0, Vec::len);
    let b_scale = b.iter().fold(1.0_f64, |s, v| s.max(v.abs()));

    // Flip rows so the right-hand side is nonnegative.
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut rhs = Vec::with_capacity(m);
    for (r, &br) in a.iter().zip(b) {
        if br < 0.0 {
            rows.push(r.iter().map(|v| -v).collect());
            rhs.push(-br);
        } else {
            rows.push(r.clone());
            rhs.push(br);
        }
    }

    // Reuse unit columns (slacks) as the initial basis where possible.
    let mut basis: Vec<Option<usize>> = vec![None; m];
    for j in 0..ncols {
        let mut hit = None;
        let mut unit = true;
        for (r, row) in rows.iter().enumerate() {
            let v = row[j];
            if v == 0.0 {
                continue;
            }
            if v == 1.0 && hit.is_none() {
                hit = Some(r);
            } else {
                unit = false;
                break;
            }
        }
        if let (true, Some(r)) = (unit, hit) {
            if basis[r].is_none() {
                basis[r] = Some(j);
            }
        }
    }

    let art_rows: Vec<usize> = (0..m).filter(|&r| basis[r].is_none()).collect();
    let total = ncols + art_rows.len();
    let width = total + 1;
    let mut t = vec![vec![0.0; width]; m];
    for r in 0..m {
        t[r][..ncols].copy_from_slice(&rows[r]);
        t[r][total] = rhs[r];
    }
    let mut basic = vec![0usize; m];
    for (k, &r) in art_rows.iter().enumerate() {
        t[r][ncols + k] = 1.0;
        basic[r] = ncols + k;
    }
    for r in 0..m {
        if let Some(j) = basis[r] {
            basic[r] = j;
        }
    }

    // Reduced costs of the phase-1 objective (sum of artificials).
    let mut cost = vec![0.0; width];
    for &r in &art_rows {
        for j in 0..width {
            cost[j] -= t[r][j];
        }
    }
    for k in 0..art_rows.len() {
        cost[ncols + k] = 0.0;
    }

    let mut pivots = 0;
    loop {
        let entering = (0..total).find(|&j| cost[j] < -PIVOT_TOL);
        let Some(e) = entering else { break };
        let mut leave: Option<(usize, f64)> = None;
        for r in 0..m {
            let d = t[r][e];
            if d > PIVOT_TOL {
                let ratio = t[r][total] / d;
                match leave {
                    None => leave = Some((r, ratio)),
                    Some((lr, lratio)) => {
                        if ratio < lratio - 1e-14
                            || (ratio <= lratio + 1e-14 && basic[r] < basic[lr])
                        {
                            leave = Some((r, ratio));
                        }
                    }
                }
            }
        }
        // Phase 1 is bounded below by zero, so an entering column always has
        // a positive entry; guard anyway against round-off.
        let Some((lr, _)) = leave else {
            cost[e] = 0.0;
            continue;
        };
        pivot(&mut t, &mut cost, lr, e);
        basic[lr] = e;
        pivots += 1;
        if pivots > MAX_PIVOTS {
            return None;
        }
    }

    let infeasibility = -cost[total];
    if infeasibility > FEAS_TOL * b_scale {
        return None;
    }

    // Drive remaining artificials out of the basis; drop redundant rows.
    let mut keep = vec![true; m];
    for r in 0..m {
        if basic[r] < ncols {
            continue;
        }
        let col = (0..ncols)
            .filter(|&j| t[r][j].abs() > 1e-9)
            .max_by(|&x, &y| t[r][x].abs().total_cmp(&t[r][y].abs()));
        match col {
            Some(j) => {
                pivot(&mut t, &mut cost, r, j);
                basic[r] = j;
            }
            None => keep[r] = false,
        }
    }

    let mut x = vec![0.0; ncols];
    let mut out_basis = Vec::new();
    let mut out_rows = Vec::new();
    for r in 0..m {
        if !keep[r] {
            continue;
        }
        x[basic[r]] = t[r][total].max(0.0);
        out_basis.push(basic[r]);
        out_rows.push(r);
    }
    Some(BasicSolution {
        x,
        basis: out_basis,
        rows: out_rows,
    })
}

fn pivot(t: &mut [Vec<f64>], cost: &mut [f64], pr: usize, pc: usize) {
    let width = t[pr].len();
    let p = t[pr][pc];
    for j in 0..width {
        t[pr][j] /= p;
    }
    let prow = t[pr].clone();
    for (r, row) in t.iter_mut().enumerate() {
        if r == pr {
            continue;
        }
        let f = row[pc];
        if f != 0.0 {
            for j in 0..width {
                row[j] -= f * prow[j];
            }
        }
    }
    let f = cost[pc];
    if f != 0.0 {
        for j in 0..width {
            cost[j] -= f * prow[j];
        }
    }
}

/// Constraint `coeffs · y (≤ | =) rhs` over free variables.
#[derive(Debug, Clone)]
pub struct Row {
    pub coeffs: Vec<f64>,
    pub rhs: f64,
}

impl Row {
    pub fn new(coeffs: Vec<f64>, rhs: f64) -> Self {
        Self { coeffs, rhs }
    }
}

/// Feasible point of `{E y = e, G y ≤ g}` over free `y`, or `None`.
pub fn feasible_point(nvars: usize, eq: &[Row], le: &[Row]) -> Option<Vec<f64>> {
    // y = p - q with p, q ≥ 0; one slack per inequality.
    let ncols = 2 * nvars + le.len();
    let mut a = Vec::with_capacity(eq.len() + le.len());
    let mut b = Vec::with_capacity(eq.len() + le.len());
    for row in eq {
        let mut r = vec![0.0; ncols];
        for k in 0..nvars {
            r[k] = row.coeffs[k];
            r[nvars + k] = -row.coeffs[k];
        }
        a.push(r);
        b.push(row.rhs);
    }
    for (s, row) in le.iter().enumerate() {
        let mut r = vec![0.0; ncols];
        for k in 0..nvars {
            r[k] = row.coeffs[k];
            r[nvars + k] = -row.coeffs[k];
        }
        r[2 * nvars + s] = 1.0;
        a.push(r);
        b.push(row.rhs);
    }
    let sol = phase_one(&a, &b)?;
    Some((0..nvars).map(|k| sol.x[k] - sol.x[nvars + k]).collect())
}

/// Whether `y` lies in the convex hull of `points` (feasibility of convex
/// combination weights).
pub fn in_convex_hull(points: &[&[f64]], y: &[f64]) -> bool {
    let m = points.len();
    if m == 0 {
        return false;
    }
    let dim = y.len();
    let mut a = vec![vec![0.0; m]; dim + 1];
    let mut b = vec![0.0; dim + 1];
    for (i, p) in points.iter().enumerate() {
        for k in 0..dim {
            a[k][i] = p[k];
        }
        a[dim][i] = 1.0;
    }
    b[..dim].copy_from_slice(y);
    b[dim] = 1.0;
    phase_one(&a, &b).is_some()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_feasible_system() {
        // x + y = 1, x - y <= 0, x >= 0.25 (as -x <= -0.25)
        let eq = [Row::new(vec![1.0, 1.0], 1.0)];
        let le = [Row::new(vec![1.0, -1.0], 0.0), Row::new(vec![-1.0, 0.0], -0.25)];
        let p = feasible_point(2, &eq, &le).unwrap();
        assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
        assert!(p[0] - p[1] <= 1e-12);
        assert!(p[0] >= 0.25 - 1e-12);
    }

    #[test]
    fn infeasible_system() {
        let le = [Row::new(vec![1.0], 0.0), Row::new(vec![-1.0], -1.0)];
        assert!(feasible_point(1, &[], &le).is_none());
    }

    #[test]
    fn hull_membership() {
        let sq: Vec<&[f64]> = vec![&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]];
        assert!(in_convex_hull(&sq, &[0.5, 0.5]));
        assert!(in_convex_hull(&sq, &[1.0, 1.0]));
        assert!(!in_convex_hull(&sq, &[1.2, 0.5]));
        assert!(!in_convex_hull(&[], &[0.0, 0.0]));
    }

    #[test]
    fn redundant_rows_are_dropped() {
        let a = vec![vec![1.0, 1.0], vec![2.0, 2.0]];
        let b = vec![1.0, 2.0];
        let sol = phase_one(&a, &b).unwrap();
        assert_eq!(sol.rows.len(), 1);
        assert!((sol.x[0] + sol.x[1] - 1.0).abs() < 1e-12);
    }
}
