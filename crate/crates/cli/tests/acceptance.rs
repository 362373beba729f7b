//! One PASS/FAIL line per acceptance criterion. Every check compares the
//! library against an oracle written here from scratch.

use std::time::{Duration, Instant};

use geoaudit::ambiguity::{zeta_components, AmbiguityConfig, Auditor};
use geoaudit::boundary::{boundary_distance_vector, project_to_boundary, BoundaryError};
use geoaudit::bounds::{compute_bound_params, confidence_lower_bound, confidence_upper_bound, delta_for_confidence};
use geoaudit::detector::{
    assemble_features, evaluate, split_of, train_detector, FeatureTable, Split, DEFAULT_CAP, DEFAULT_LAMBDA,
};
use geoaudit::hull::TrainingGeometry;
use geoaudit::mc::Interval;
use geoaudit::region::{
    enumerate_boundary_vertices, high_confidence_fraction_binary, high_confidence_fraction_multi,
    overconfident_unknown_fraction, polytope_volume, slice_volume_upper_bound, RegionError,
};
use geoaudit::space::{classify, decompose, CompressedSpace};
use geoaudit::synthetic::{binary_space, gaussian_clusters, random_head, symmetric_space, ClusterConfig};
use geoaudit::Matrix;
use geoaudit_cli::{cmd_regions, cmd_score, RegionOptions, ScoreOptions};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

fn softmax_top(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    1.0 / z.iter().map(|v| (v - m).exp()).sum::<f64>()
}

fn psi_logits(sp: &CompressedSpace, y: &[f64]) -> Vec<f64> {
    let w = sp.w_psi();
    (0..sp.n_classes()).map(|k| dot(w.row(k), y) + sp.bias()[k]).collect()
}

fn random_space(rng: &mut ChaCha8Rng, n: usize, r: usize, a: f64) -> CompressedSpace {
    let w: Vec<f64> = (0..n * r).map(|_| rng.random_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..n).map(|_| rng.random_range(-0.5..0.5)).collect();
    CompressedSpace::from_psi(Matrix::from_vec(n, r, w).unwrap(), b, a).unwrap()
}

fn svd_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    let mut mismatched = 0;
    for _ in 0..50 {
        let n = rng.random_range(2..=8);
        let f = rng.random_range(n..=2 * n);
        let head = random_head(&mut rng, n, f);
        let sp = decompose(&head).unwrap();
        for _ in 0..1000 {
            let x: Vec<f64> = (0..f).map(|_| rng.random_range(-2.0..2.0)).collect();
            let direct: Vec<f64> =
                (0..n).map(|k| dot(head.weights.row(k), &x) + head.bias[k]).collect();
            let y = sp.psi_coords(&x).unwrap();
            let z = sp.logits_psi(&y).unwrap();
            for (p, q) in direct.iter().zip(&z) {
                worst = worst.max((p - q).abs());
            }
            let top = |v: &[f64]| (0..n).fold(0, |b, k| if v[k] > v[b] { k } else { b });
            let margin = {
                let mut s = direct.clone();
                s.sort_by(|p, q| q.total_cmp(p));
                s[0] - s[1]
            };
            if top(&direct) != classify(&z) && margin > 1e-9 {
                mismatched += 1;
            }
        }
    }
    outcome(worst <= 1e-5 && mismatched == 0, format!("max |Δz| {worst:.2e}, class mismatches {mismatched}"))
}

/// Wolfe's minimum-norm-point algorithm on `{p − x}`.
fn min_norm_point(x: &[f64], pts: &[Vec<f64>]) -> f64 {
    let q: Vec<Vec<f64>> = pts.iter().map(|p| p.iter().zip(x).map(|(a, b)| a - b).collect()).collect();
    let scale = q.iter().map(|v| dot(v, v)).fold(0.0, f64::max).max(1e-300);
    let start = (0..q.len()).min_by(|&a, &b| dot(&q[a], &q[a]).total_cmp(&dot(&q[b], &q[b]))).unwrap();
    let mut set = vec![start];
    let mut lam = vec![1.0];
    let combine = |set: &[usize], lam: &[f64]| {
        let mut y = vec![0.0; x.len()];
        for (&s, &l) in set.iter().zip(lam) {
            for (yi, qi) in y.iter_mut().zip(&q[s]) {
                *yi += l * qi;
            }
        }
        y
    };
    let mut y = q[start].clone();
    for _ in 0..10_000 {
        let j = (0..q.len()).min_by(|&a, &b| dot(&q[a], &y).total_cmp(&dot(&q[b], &y))).unwrap();
        if dot(&y, &y) - dot(&y, &q[j]) <= 1e-13 * scale || set.contains(&j) {
            break;
        }
        set.push(j);
        lam.push(0.0);
        loop {
            let m = set.len();
            let mut k = DMatrix::zeros(m + 1, m + 1);
            let mut rhs = DVector::zeros(m + 1);
            for a in 0..m {
                for b in 0..m {
                    k[(a, b)] = dot(&q[set[a]], &q[set[b]]);
                }
                k[(a, m)] = 1.0;
                k[(m, a)] = 1.0;
            }
            rhs[m] = 1.0;
            let sol = k.svd(true, true).solve(&rhs, 1e-14).unwrap();
            let alpha: Vec<f64> = (0..m).map(|a| sol[a]).collect();
            if alpha.iter().all(|&v| v > 1e-14) {
                lam = alpha;
                break;
            }
            let mut theta: f64 = 1.0;
            for a in 0..m {
                if alpha[a] <= 1e-14 && lam[a] - alpha[a] > 0.0 {
                    theta = theta.min(lam[a] / (lam[a] - alpha[a]));
                }
            }
            for a in 0..m {
                lam[a] = theta * alpha[a] + (1.0 - theta) * lam[a];
            }
            let keep: Vec<bool> = lam.iter().map(|&l| l > 1e-14).collect();
            let mut k = 0;
            set.retain(|_| {
                k += 1;
                keep[k - 1]
            });
            lam.retain(|&l| l > 1e-14);
            let s: f64 = lam.iter().sum();
            lam.iter_mut().for_each(|l| *l /= s);
        }
        y = combine(&set, &lam);
    }
    dot(&y, &y).sqrt()
}

fn hull_oracle() -> Outcome {
    let eps_bar = 0.01;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (mut worst, mut below) = (0.0f64, 0.0f64);
    let mut failures = 0;
    for _ in 0..200 {
        let n = rng.random_range(2..=4);
        let d = rng.random_range(2..=5);
        let mut pts = Vec::new();
        let mut labels = Vec::new();
        for k in 0..n {
            let c: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
            for _ in 0..rng.random_range(1..=50) {
                pts.extend(c.iter().map(|v| v + rng.random_range(-1.0..1.0)));
                labels.push(k as u32);
            }
        }
        let m = labels.len();
        let geom = TrainingGeometry::new(Matrix::from_vec(m, d, pts.clone()).unwrap(), &labels, n).unwrap();
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
        for k in 0..n {
            let class: Vec<Vec<f64>> = (0..m)
                .filter(|&i| labels[i] == k as u32)
                .map(|i| pts[i * d..(i + 1) * d].to_vec())
                .collect();
            let exact = min_norm_point(&x, &class);
            let mut diam: f64 = 0.0;
            for p in class.iter().chain(std::iter::once(&x)) {
                for q in class.iter() {
                    diam = diam.max(dist(p, q));
                }
            }
            let fw = geom.project_to_hull(&x, k, eps_bar).unwrap().distance;
            let excess = (fw - exact) / diam.max(1e-12);
            worst = worst.max(excess);
            below = below.max(exact - fw);
            if excess > eps_bar || exact - fw > 1e-7 {
                failures += 1;
            }
        }
    }
    outcome(
        failures == 0,
        format!("max excess {worst:.2e}·diam (limit {eps_bar}), max undershoot {below:.2e}"),
    )
}

/// Raw `(i, j)` interface as `eq·y = rhs` and rows `g·y ≤ h`.
fn interface(sp: &CompressedSpace, i: usize, j: usize) -> (Vec<f64>, f64, Vec<(Vec<f64>, f64)>) {
    let w = sp.w_psi();
    let b = sp.bias();
    let r = sp.psi_dim();
    let eq: Vec<f64> = (0..r).map(|c| w.get(i, c) - w.get(j, c)).collect();
    let mut le = Vec::new();
    for k in 0..sp.n_classes() {
        if k != i && k != j {
            le.push(((0..r).map(|c| w.get(k, c) - w.get(i, c)).collect(), b[i] - b[k]));
        }
    }
    for c in 0..r {
        let mut e = vec![0.0; r];
        e[c] = 1.0;
        le.push((e.clone(), sp.a()));
        e[c] = -1.0;
        le.push((e, sp.a()));
    }
    (eq, b[j] - b[i], le)
}

fn subsets(n: usize, max: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for p in 0..n {
        let ext: Vec<Vec<usize>> = out
            .iter()
            .filter(|s| s.len() < max)
            .map(|s| {
                let mut t = s.clone();
                t.push(p);
                t
            })
            .collect();
        out.extend(ext);
    }
    out
}

/// Minimum over every active set of the projection onto its affine hull,
/// keeping feasible candidates only.
fn dense_projection(x: &[f64], eq: &[f64], rhs: f64, le: &[(Vec<f64>, f64)]) -> Option<(f64, Vec<f64>)> {
    let r = x.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for sub in subsets(le.len(), r - 1) {
        let mut rows = vec![(eq.to_vec(), rhs)];
        rows.extend(sub.iter().map(|&k| le[k].clone()));
        let m = rows.len();
        let a = DMatrix::from_fn(m, r, |p, c| rows[p].0[c]);
        let resid = DVector::from_fn(m, |p, _| dot(&rows[p].0, x) - rows[p].1);
        let gram = &a * a.transpose();
        let svd = gram.clone().svd(false, false);
        if svd.singular_values.min() < 1e-10 * svd.singular_values.max() {
            continue;
        }
        let Some(mu) = gram.lu().solve(&resid) else { continue };
        let step = a.transpose() * mu;
        let y: Vec<f64> = (0..r).map(|c| x[c] - step[c]).collect();
        if le.iter().all(|(g, h)| dot(g, &y) <= h + 1e-9) {
            let d = dist(x, &y);
            if best.as_ref().is_none_or(|b| d < b.0) {
                best = Some((d, y));
            }
        }
    }
    best
}

fn boundary_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let (mut worst, mut worst_con) = (0.0f64, 0.0f64);
    let (mut direct, mut empty, mut failures) = (0, 0, 0);
    for _ in 0..200 {
        let n = rng.random_range(2..=4);
        let r = rng.random_range(2..=n.max(3));
        let a = rng.random_range(1.0..3.0);
        let sp = random_space(&mut rng, n, r.min(n), a);
        let r = sp.psi_dim();
        let x: Vec<f64> = (0..r).map(|_| rng.random_range(-a..a)).collect();
        let i = classify(&psi_logits(&sp, &x));
        let j = (i + rng.random_range(1..n)) % n;
        let (eq, rhs, le) = interface(&sp, i, j);
        let oracle = dense_projection(&x, &eq, rhs, &le);
        match (project_to_boundary(&sp, &x, i, j), oracle) {
            (Ok(fp), Some((d, _))) => {
                direct += 1;
                worst = worst.max((fp.distance - d).abs());
                let z = psi_logits(&sp, &fp.point);
                let mut con = (z[i] - z[j]).abs();
                for k in 0..n {
                    con = con.max(z[k] - z[i]);
                }
                for c in &fp.point {
                    con = con.max(c.abs() - a);
                }
                worst_con = worst_con.max(con);
                if (fp.distance - d).abs() > 1e-6 || con > 1e-6 {
                    failures += 1;
                }
            }
            (Err(BoundaryError::NoInterface { .. }), None) => empty += 1,
            _ => failures += 1,
        }
    }
    outcome(
        failures == 0 && direct > 100,
        format!("{direct} direct, {empty} empty, max |Δd| {worst:.2e}, max constraint violation {worst_con:.2e}"),
    )
}

fn bound_fuzz() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let (mut lower_v, mut upper_v) = (0, 0);
    let mut worst: f64 = f64::NEG_INFINITY;
    for _ in 0..10_000 {
        let n = rng.random_range(2..=6);
        let r = rng.random_range(2..=n.max(2));
        let sp = random_space(&mut rng, n, r, 1e3);
        let x: Vec<f64> = (0..sp.psi_dim()).map(|_| rng.random_range(-3.0..3.0)).collect();
        let params = compute_bound_params(&sp).unwrap();
        let v = boundary_distance_vector(&sp, &x).unwrap();
        let delta = v
            .distances()
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != v.source)
            .map(|(_, d)| *d)
            .fold(f64::INFINITY, f64::min);
        if !delta.is_finite() {
            continue;
        }
        let p = softmax_top(&psi_logits(&sp, &x));
        let lo = confidence_lower_bound(delta, params.rho, n);
        let hi = confidence_upper_bound(delta, params.rho_prime);
        worst = worst.max(lo - p).max(p - hi);
        lower_v += (p < lo - 1e-9) as usize;
        upper_v += (p > hi + 1e-9) as usize;
    }
    outcome(
        lower_v == 0 && upper_v == 0,
        format!("lower violations {lower_v}, upper violations {upper_v}, worst excess {worst:.2e}"),
    )
}

fn example_arithmetic() -> Outcome {
    let lo = confidence_lower_bound(3.0, 0.876, 10);
    let d = delta_for_confidence(0.9, 0.876, 10).unwrap();
    let hi = confidence_upper_bound(0.42, 0.9692);
    let pass = (0.600..=0.615).contains(&lo) && (5.00..=5.10).contains(&d) && (0.595..=0.605).contains(&hi);
    outcome(pass, format!("lower {lo:.4}, delta {d:.4}, upper {hi:.4}"))
}

fn polytope_chain() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let (mut checked, mut failures) = (0, 0);
    let mut worst_gap: f64 = f64::NEG_INFINITY;
    for trial in 0..120 {
        let n = 3 + trial % 4;
        let a = rng.random_range(0.5..3.0);
        let sp = random_space(&mut rng, n, n, a);
        let (i, j) = (trial % n, (trial + 1) % n);
        let Ok(p) = enumerate_boundary_vertices(&sp, i, j) else { continue };
        let (eq, rhs, le) = interface(&sp, i, j);
        for v in &p.vertices {
            let bad = (dot(&eq, v) - rhs).abs() > 1e-6 || le.iter().any(|(g, h)| dot(g, v) > h + 1e-6);
            failures += bad as usize;
        }
        let vol = polytope_volume(&p).volume;
        let s = slice_volume_upper_bound(&sp, i, j).unwrap();
        worst_gap = worst_gap.max(vol - s);
        failures += (vol > s + 1e-6) as usize;
        checked += 1;
    }
    let mut binary_worst: f64 = 0.0;
    for _ in 0..50 {
        let a = rng.random_range(0.5..3.0);
        let sp = random_space(&mut rng, 2, 2, a);
        let s = slice_volume_upper_bound(&sp, 0, 1).unwrap();
        let vol = match enumerate_boundary_vertices(&sp, 0, 1) {
            Ok(p) => polytope_volume(&p).volume,
            Err(RegionError::NoInterface(..)) => 0.0,
            Err(_) => {
                failures += 1;
                continue;
            }
        };
        let rel = (vol - s).abs() / s.max(1e-12);
        if s > 1e-9 {
            binary_worst = binary_worst.max(rel);
            failures += (rel > 1e-6) as usize;
        }
    }
    outcome(
        failures == 0 && checked > 60,
        format!("{checked} polytopes, max vol − slice {worst_gap:.2e}, binary max rel diff {binary_worst:.2e}"),
    )
}

/// Head where classes other than 0 and 1 never win in the cube.
fn isolated_pair(rng: &mut ChaCha8Rng, n: usize, a: f64) -> CompressedSpace {
    let r = n - 1;
    let mut w: Vec<f64> = (0..n * r).map(|_| rng.random_range(-1.0..1.0)).collect();
    for v in w[2 * r..].iter_mut() {
        *v *= 0.1;
    }
    let l1 = |k: usize, w: &[f64]| w[k * r..(k + 1) * r].iter().map(|v| v.abs()).sum::<f64>() * a;
    let norm: f64 = (0..r).map(|c| (w[c] - w[r + c]).powi(2)).sum::<f64>().sqrt();
    let mut b = vec![0.0; n];
    b[1] = rng.random_range(-0.3..0.3) * norm * a;
    for k in 2..n {
        b[k] = -(l1(0, &w) + l1(1, &w) + b[1].abs() + l1(k, &w) + 1.0);
    }
    CompressedSpace::from_psi(Matrix::from_vec(n, r, w).unwrap(), b, a).unwrap()
}

fn slice_vs_mc() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let samples = 1_000_000;
    let mut worst: f64 = 0.0;
    let mut rows = Vec::new();
    for n in 3..=6 {
        for _ in 0..2 {
            let a = rng.random_range(0.5..2.0);
            let sp = isolated_pair(&mut rng, n, a);
            let r = sp.psi_dim();
            let s = slice_volume_upper_bound(&sp, 0, 1).unwrap();
            let w: Vec<f64> = (0..r).map(|c| sp.w_psi().get(0, c) - sp.w_psi().get(1, c)).collect();
            let c = sp.bias()[0] - sp.bias()[1];
            let wn = dot(&w, &w).sqrt();
            let h = 0.1 * a;
            let mut mc = ChaCha8Rng::seed_from_u64(n as u64);
            let (mut wide, mut narrow) = (0u64, 0u64);
            let mut y = vec![0.0; r];
            for _ in 0..samples {
                y.iter_mut().for_each(|v| *v = mc.random_range(-a..a));
                let d = (dot(&w, &y) + c).abs() / wn;
                wide += (d <= h) as u64;
                narrow += (d <= h / 2.0) as u64;
            }
            let cube = (2.0 * a).powi(r as i32);
            let area = |hits: u64, h: f64| hits as f64 / samples as f64 * cube / (2.0 * h);
            let est = (4.0 * area(narrow, h / 2.0) - area(wide, h)) / 3.0;
            let rel = (est - s).abs() / s;
            worst = worst.max(rel);
            rows.push(format!("n={n} {rel:.4}"));
        }
    }
    outcome(worst <= 0.02, format!("max rel diff {worst:.4} ({})", rows.join(", ")))
}

fn training_geometry(sp: &CompressedSpace, rng: &mut ChaCha8Rng) -> TrainingGeometry {
    let r = sp.psi_dim();
    let n = sp.n_classes();
    loop {
        let mut pts = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..60 {
            let y: Vec<f64> = (0..r).map(|_| rng.random_range(-1.0..1.0)).collect();
            labels.push(classify(&psi_logits(sp, &y)) as u32);
            pts.extend(y);
        }
        if (0..n as u32).all(|k| labels.contains(&k)) {
            return TrainingGeometry::new(Matrix::from_vec(60, r, pts).unwrap(), &labels, n).unwrap();
        }
    }
}

fn soundness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let samples = 200_000;
    let mut failures = Vec::new();
    let mut worst: f64 = f64::INFINITY;
    let check = |name: String, measured: &Interval, bound: &Interval, failures: &mut Vec<String>, worst: &mut f64| {
        let slack = 3.0 * measured.half_width().max(bound.half_width());
        let margin = measured.estimate - (bound.estimate - slack);
        *worst = worst.min(measured.estimate - bound.estimate);
        if margin < 0.0 {
            failures.push(name);
        }
    };
    for (label, sp) in [("binary", binary_space(3.0)), ("symmetric", symmetric_space(3.0))] {
        let geom = training_geometry(&sp, &mut rng);
        for tau in [0.6, 0.9] {
            let hc = high_confidence_fraction_multi(&sp, tau, samples, 1).unwrap();
            check(format!("{label} τ={tau} union"), &hc.measured.interval, &hc.bound, &mut failures, &mut worst);
            if sp.n_classes() == 2 {
                let chain = high_confidence_fraction_binary(&sp, tau).unwrap();
                for (k, b) in [("crude", chain.crude_bound), ("polytope", chain.polytope_bound)] {
                    check(format!("{label} τ={tau} {k}"), &hc.measured.interval, &Interval::exact(b), &mut failures, &mut worst);
                }
            }
            let oc = overconfident_unknown_fraction(&sp, &geom, tau, 0.5, samples, 2).unwrap();
            for v in &oc.variants {
                let m = &v.measured.interval;
                check(format!("{label} τ={tau} {:?}", v.kind), m, &v.bound, &mut failures, &mut worst);
                check(format!("{label} τ={tau} {:?} no ∩", v.kind), m, &v.bound_without_intersection, &mut failures, &mut worst);
            }
        }
    }
    outcome(
        failures.is_empty(),
        format!("min measured − bound {worst:.4}, failing: [{}]", failures.join(", ")),
    )
}

fn zeta_semantics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let mut bad = Vec::new();
    let pos = |rng: &mut ChaCha8Rng| 10f64.powf(rng.random_range(-3.0..2.0));
    for s in 0..1000 {
        let cfg = AmbiguityConfig {
            epsilon: 10f64.powf(rng.random_range(-4.0..-1.0)),
            alpha: rng.random_range(0.1..3.0),
            ..Default::default()
        };
        let limit = zeta_components(0.0, 0.0, 1.0, 1.0, &cfg);
        let expect = cfg.epsilon.powf(2.0 * cfg.alpha);
        if (limit - expect).abs() > 1e-12 * expect {
            bad.push(format!("limit#{s}"));
        }
        let (h, g, f, c) = (pos(&mut rng), pos(&mut rng), pos(&mut rng), pos(&mut rng));
        if zeta_components(h, g, 0.0, c, &cfg) != cfg.sentinel || zeta_components(h, g, f, 0.0, &cfg) != cfg.sentinel {
            bad.push(format!("sentinel#{s}"));
        }
        let base = zeta_components(h, g, f, c, &cfg);
        if !(base >= 0.0) {
            bad.push(format!("sign#{s}"));
        }
        let k = 1.0 + rng.random_range(0.01..1.0);
        let up = [
            zeta_components(h * k, g, f, c, &cfg),
            zeta_components(h, g * k, f, c, &cfg),
        ];
        let down = [
            zeta_components(h, g, f * k, c, &cfg),
            zeta_components(h, g, f, c * k, &cfg),
        ];
        if up.iter().any(|&v| v <= base) || down.iter().any(|&v| v >= base) {
            bad.push(format!("monotone#{s}"));
        }
        let (h2, g2, f2, c2) = (pos(&mut rng), pos(&mut rng), pos(&mut rng), pos(&mut rng));
        let other = AmbiguityConfig {
            alpha: rng.random_range(0.1..3.0),
            ..cfg.clone()
        };
        let sign = |cfg: &AmbiguityConfig| {
            zeta_components(h, g, f, c, cfg).partial_cmp(&zeta_components(h2, g2, f2, c2, cfg))
        };
        if sign(&cfg) != sign(&other) {
            bad.push(format!("rank#{s}"));
        }
    }
    outcome(bad.is_empty(), format!("{} violations {:?}", bad.len(), &bad[..bad.len().min(5)]))
}

fn abstention_utility() -> Outcome {
    let fx = gaussian_clusters(&ClusterConfig::default());
    let mut aud = Auditor::from_bundle(&fx.bundle, AmbiguityConfig::default()).unwrap();
    let tau = aud.calibrate(99.0).unwrap();
    let eval = aud.profile_set(fx.bundle.eval.as_ref().unwrap(), "eval").unwrap();
    let rate = |want: bool| {
        let hits: Vec<bool> = eval.iter().zip(&fx.ood).filter(|(_, o)| **o == want).map(|(p, _)| p.zeta > tau).collect();
        hits.iter().filter(|a| **a).count() as f64 / hits.len() as f64
    };
    let (ood, id) = (rate(true), rate(false));
    let is_ood = |id: &str| fx.ood[id.rsplit('-').next().unwrap().parse::<usize>().unwrap()];
    let feats = assemble_features(&eval, DEFAULT_CAP);
    let pos = feats.filter(|id| is_ood(id));
    let neg = feats.filter(|id| !is_ood(id));
    let train = |id: &str| split_of(id) == Split::Train;
    let rest = |id: &str| split_of(id) != Split::Train;
    let model = train_detector(&pos.filter(train), &neg.filter(train), DEFAULT_LAMBDA).unwrap();
    let m = evaluate(&model, &FeatureTable::labeled(&pos.filter(rest), &neg.filter(rest)).unwrap()).unwrap();
    outcome(
        ood >= 0.9 && id <= 0.03 && m.auroc >= 0.95,
        format!("τ {tau:.4}, OOD abstain {ood:.3}, ID abstain {id:.3}, detector AUROC {:.3}", m.auroc),
    )
}

fn determinism() -> Outcome {
    let fx = gaussian_clusters(&ClusterConfig {
        train_per_class: 60,
        eval_per_class: 40,
        seed: 3,
        ..Default::default()
    });
    let pool = |t: usize| rayon::ThreadPoolBuilder::new().num_threads(t).build().unwrap();
    let score = ScoreOptions {
        percentile: Some(99.0),
        ..Default::default()
    };
    let regions = RegionOptions {
        mc_samples: 20_000,
        seed: 9,
        ..Default::default()
    };
    let run = |t: usize| {
        pool(t).install(|| (cmd_score(&fx.bundle, &score).unwrap(), cmd_regions(&fx.bundle, &regions).unwrap()))
    };
    let (s1, r1) = run(1);
    let (s2, r2) = run(4);
    let (s3, r3) = run(4);
    let pass = s1 == s2 && s2 == s3 && r1 == r2 && r2 == r3;
    outcome(pass, format!("score {} bytes, regions {} bytes, threads 1/4/4", s1.len(), r1.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Duration); 11] = [
        ("svd_path_equivalence", svd_equivalence, Duration::from_secs(5)),
        ("hull_projection_oracle", hull_oracle, Duration::from_secs(30)),
        ("boundary_projection_oracle", boundary_oracle, Duration::from_secs(30)),
        ("confidence_bound_fuzz", bound_fuzz, Duration::from_secs(60)),
        ("worked_example_arithmetic", example_arithmetic, Duration::from_secs(1)),
        ("polytope_slice_chain", polytope_chain, Duration::from_secs(60)),
        ("slice_formula_vs_mc", slice_vs_mc, Duration::from_secs(120)),
        ("region_bound_soundness", soundness, Duration::from_secs(120)),
        ("ambiguity_semantics", zeta_semantics, Duration::from_secs(10)),
        ("abstention_utility", abstention_utility, Duration::from_secs(60)),
        ("determinism", determinism, Duration::from_secs(60)),
    ];
    let mut failed = 0;
    for (name, f, limit) in criteria {
        let t = Instant::now();
        let o = f();
        let elapsed = t.elapsed();
        let pass = o.pass && elapsed <= limit;
        failed += !pass as usize;
        println!(
            "{} {name}: {} [{:.2}s / {}s]",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            elapsed.as_secs_f64(),
            limit.as_secs()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
