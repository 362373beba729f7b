//! A small logistic model over geometric features that flags undesirable
//! inputs (misclassified, adversarial, out-of-distribution).

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ambiguity::GeometryProfile;
use crate::linalg::{dot, solve_spd};
use crate::matrix::Matrix;

pub const FEATURE_COLUMNS: [&str; 4] = ["d_hull_min", "d_gap", "d_f_min", "d_c"];
pub const DEFAULT_CAP: f64 = 1e6;
pub const DEFAULT_LAMBDA: f64 = 1e-4;
pub const GRAD_TOL: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DetectorError {
    #[error("{0} set is empty")]
    EmptyClassSet(&'static str),
    #[error("table columns {found:?} do not match the model's {expected:?}")]
    ColumnMismatch { expected: Vec<String>, found: Vec<String> },
    #[error("labels are required")]
    MissingLabels,
    #[error("labels contain a single class")]
    SingleClassLabels,
    #[error("non-finite feature at row {0}")]
    NonFinite(usize),
    #[error("lambda must be finite and > 0, got {0}")]
    InvalidLambda(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub columns: Vec<String>,
    pub ids: Vec<String>,
    pub x: Matrix,
    /// `true` marks an undesirable sample.
    pub labels: Option<Vec<bool>>,
}

impl FeatureTable {
    pub fn new(columns: Vec<String>, ids: Vec<String>, x: Matrix, labels: Option<Vec<bool>>) -> Self {
        Self { columns, ids, x, labels }
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    /// Stacks an undesirable and a normal table, labeling their rows.
    pub fn labeled(positive: &FeatureTable, negative: &FeatureTable) -> Result<Self, DetectorError> {
        if positive.columns != negative.columns {
            return Err(DetectorError::ColumnMismatch {
                expected: positive.columns.clone(),
                found: negative.columns.clone(),
            });
        }
        let cols = positive.columns.len();
        let mut data = positive.x.data().to_vec();
        data.extend_from_slice(negative.x.data());
        let n = positive.len() + negative.len();
        let mut ids = positive.ids.clone();
        ids.extend(negative.ids.iter().cloned());
        let mut labels = vec![true; positive.len()];
        labels.resize(n, false);
        Ok(Self {
            columns: positive.columns.clone(),
            ids,
            x: Matrix::from_vec(n, cols, data).expect("shapes agree"),
            labels: Some(labels),
        })
    }

    /// Keeps the rows for which `keep(id)` holds.
    pub fn filter(&self, keep: impl Fn(&str) -> bool) -> Self {
        let rows: Vec<usize> = (0..self.len()).filter(|&r| keep(&self.ids[r])).collect();
        let cols = self.columns.len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for &r in &rows {
            data.extend_from_slice(self.x.row(r));
        }
        Self {
            columns: self.columns.clone(),
            ids: rows.iter().map(|&r| self.ids[r].clone()).collect(),
            x: Matrix::from_vec(rows.len(), cols, data).expect("shapes agree"),
            labels: self.labels.as_ref().map(|l| rows.iter().map(|&r| l[r]).collect()),
        }
    }
}

/// One row per profile in the fixed column order, with values above `cap`
/// (including infinities) clamped to it.
pub fn assemble_features(profiles: &[GeometryProfile], cap: f64) -> FeatureTable {
    let mut data = Vec::with_capacity(profiles.len() * 4);
    for p in profiles {
        for v in [p.d_hull_min, p.d_gap, p.d_f_min, p.d_c] {
            data.push(if v.is_nan() { cap } else { v.min(cap) });
        }
    }
    FeatureTable {
        columns: FEATURE_COLUMNS.iter().map(|s| s.to_string()).collect(),
        ids: profiles.iter().map(|p| p.id.clone()).collect(),
        x: Matrix::from_vec(profiles.len(), 4, data).expect("4 columns"),
        labels: None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub columns: Vec<String>,
    /// Columns used by the model; zero-variance ones are dropped.
    pub kept: Vec<usize>,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    /// One weight per kept column, on standardized values.
    pub weights: Vec<f64>,
    pub bias: f64,
    pub lambda: f64,
    pub iterations: usize,
    pub converged: bool,
    pub grad_norm: f64,
    pub warnings: Vec<String>,
}

impl DetectorModel {
    fn standardized(&self, row: &[f64]) -> Vec<f64> {
        self.kept.iter().map(|&c| (row[c] - self.mean[c]) / self.scale[c]).collect()
    }

    pub fn linear_response(&self, row: &[f64]) -> f64 {
        dot(&self.weights, &self.standardized(row)) + self.bias
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^t)` without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

struct Problem<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    s: &'a [f64],
    lambda: f64,
}

impl Problem<'_> {
    /// Weighted mean logistic loss plus `λ/2 ‖w‖²`; `theta = (w, b)`.
    fn loss(&self, theta: &[f64]) -> f64 {
        let d = theta.len() - 1;
        let mut l = 0.0;
        for ((x, y), s) in self.x.iter().zip(self.y).zip(self.s) {
            let t = dot(&theta[..d], x) + theta[d];
            l += s * softplus(-y * t);
        }
        l + 0.5 * self.lambda * dot(&theta[..d], &theta[..d])
    }

    fn grad_hess(&self, theta: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let d = theta.len() - 1;
        let mut g = vec![0.0; d + 1];
        let mut h = vec![vec![0.0; d + 1]; d + 1];
        for ((x, y), s) in self.x.iter().zip(self.y).zip(self.s) {
            let t = dot(&theta[..d], x) + theta[d];
            let p = sigmoid(y * t);
            let coef = -s * y * (1.0 - p);
            let curv = s * p * (1.0 - p);
            for a in 0..=d {
                let xa = if a < d { x[a] } else { 1.0 };
                g[a] += coef * xa;
                for b in 0..=d {
                    let xb = if b < d { x[b] } else { 1.0 };
                    h[a][b] += curv * xa * xb;
                }
            }
        }
        for a in 0..d {
            g[a] += self.lambda * theta[a];
            h[a][a] += self.lambda;
        }
        // Keeps the bias direction invertible on separable data.
        h[d][d] += 1e-12;
        (g, h)
    }
}

/// Fits an L2-regularized logistic model separating `positive`
/// (undesirable) from `negative` rows, by damped Newton steps. Classes are
/// weighted by inverse frequency.
pub fn train_detector(
    positive: &FeatureTable,
    negative: &FeatureTable,
    lambda: f64,
) -> Result<DetectorModel, DetectorError> {
    if positive.is_empty() {
        return Err(DetectorError::EmptyClassSet("positive"));
    }
    if negative.is_empty() {
        return Err(DetectorError::EmptyClassSet("negative"));
    }
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(DetectorError::InvalidLambda(lambda));
    }
    let table = FeatureTable::labeled(positive, negative)?;
    if let Some(r) = (0..table.len()).find(|&r| table.x.row(r).iter().any(|v| !v.is_finite())) {
        return Err(DetectorError::NonFinite(r));
    }
    let cols = table.columns.len();
    let n = table.len() as f64;
    let mut mean = vec![0.0; cols];
    let mut scale = vec![1.0; cols];
    let mut kept = Vec::new();
    let mut warnings = Vec::new();
    for c in 0..cols {
        let m = table.x.iter_rows().map(|r| r[c]).sum::<f64>() / n;
        let var = table.x.iter_rows().map(|r| (r[c] - m) * (r[c] - m)).sum::<f64>() / n;
        mean[c] = m;
        let sd = var.sqrt();
        if sd <= 1e-12 * (1.0 + m.abs()) {
            warnings.push(format!("column {} has zero variance and was dropped", table.columns[c]));
        } else {
            scale[c] = sd;
            kept.push(c);
        }
    }
    let xs: Vec<Vec<f64>> = table
        .x
        .iter_rows()
        .map(|r| kept.iter().map(|&c| (r[c] - mean[c]) / scale[c]).collect())
        .collect();
    let labels = table.labels.as_ref().expect("labeled");
    let y: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect();
    let (np, nn) = (positive.len() as f64, negative.len() as f64);
    // Each class carries half the total weight; the loss is a mean.
    let s: Vec<f64> = labels.iter().map(|&l| if l { 0.5 / np } else { 0.5 / nn }).collect();
    let prob = Problem {
        x: &xs,
        y: &y,
        s: &s,
        lambda,
    };

    let d = kept.len();
    let mut theta = vec![0.0; d + 1];
    let mut loss = prob.loss(&theta);
    let mut iterations = 0;
    let mut converged = false;
    let mut grad_norm = f64::INFINITY;
    while iterations < MAX_ITERATIONS {
        let (g, h) = prob.grad_hess(&theta);
        grad_norm = dot(&g, &g).sqrt();
        if grad_norm <= GRAD_TOL {
            converged = true;
            break;
        }
        let step = solve_spd(&h, &g).unwrap_or_else(|| g.clone());
        let slope = dot(&g, &step);
        let mut t = 1.0;
        let mut moved = false;
        while t > 1e-12 {
            let cand: Vec<f64> = theta.iter().zip(&step).map(|(p, q)| p - t * q).collect();
            let l = prob.loss(&cand);
            if l <= loss - 1e-4 * t * slope {
                theta = cand;
                loss = l;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        iterations += 1;
        if !moved {
            break;
        }
    }
    Ok(DetectorModel {
        columns: table.columns.clone(),
        kept,
        mean,
        scale,
        weights: theta[..d].to_vec(),
        bias: theta[d],
        lambda,
        iterations,
        converged,
        grad_norm,
        warnings,
    })
}

/// Probability of being undesirable, per row.
pub fn detect(model: &DetectorModel, table: &FeatureTable) -> Result<Vec<f64>, DetectorError> {
    if table.columns != model.columns {
        return Err(DetectorError::ColumnMismatch {
            expected: model.columns.clone(),
            found: table.columns.clone(),
        });
    }
    Ok(table.x.iter_rows().map(|r| sigmoid(model.linear_response(r))).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorMetrics {
    pub auroc: f64,
    pub fpr_at_95_tpr: f64,
    pub accuracy: f64,
    pub n_positive: usize,
    pub n_negative: usize,
}

/// Area under the ROC curve as the Mann–Whitney statistic; tied scores
/// count one half.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64, DetectorError> {
    let pos = labels.iter().filter(|l| **l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(DetectorError::SingleClassLabels);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut k = 0;
    while k < order.len() {
        let mut e = k;
        while e + 1 < order.len() && scores[order[e + 1]] == scores[order[k]] {
            e += 1;
        }
        let avg = 0.5 * ((k + 1) + (e + 1)) as f64;
        for &o in &order[k..=e] {
            if labels[o] {
                rank_sum += avg;
            }
        }
        k = e + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// False positive rate at the highest threshold reaching 95% true
/// positives (`score ≥ t` predicts undesirable).
pub fn fpr_at_tpr(scores: &[f64], labels: &[bool], target: f64) -> Result<f64, DetectorError> {
    let pos = labels.iter().filter(|l| **l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(DetectorError::SingleClassLabels);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = 0;
    while k < order.len() {
        let s = scores[order[k]];
        while k < order.len() && scores[order[k]] == s {
            if labels[order[k]] {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        if tp as f64 >= target * pos as f64 - 1e-12 {
            return Ok(fp as f64 / neg as f64);
        }
    }
    Ok(1.0)
}

pub fn evaluate(model: &DetectorModel, table: &FeatureTable) -> Result<DetectorMetrics, DetectorError> {
    let labels = table.labels.as_ref().ok_or(DetectorError::MissingLabels)?;
    let scores = detect(model, table)?;
    evaluate_scores(&scores, labels)
}

pub fn evaluate_scores(scores: &[f64], labels: &[bool]) -> Result<DetectorMetrics, DetectorError> {
    let correct = scores.iter().zip(labels).filter(|(s, l)| (**s >= 0.5) == **l).count();
    let pos = labels.iter().filter(|l| **l).count();
    Ok(DetectorMetrics {
        auroc: auroc(scores, labels)?,
        fpr_at_95_tpr: fpr_at_tpr(scores, labels, 0.95)?,
        accuracy: correct as f64 / labels.len() as f64,
        n_positive: pos,
        n_negative: labels.len() - pos,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

/// 70/15/15 assignment from the SHA-256 of the row id.
pub fn split_of(id: &str) -> Split {
    let h = Sha256::digest(id.as_bytes());
    let v = u64::from_le_bytes(h[..8].try_into().expect("8 bytes")) % 100;
    match v {
        0..70 => Split::Train,
        70..85 => Split::Validation,
        _ => Split::Test,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn table(rows: &[[f64; 4]], prefix: &str) -> FeatureTable {
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        FeatureTable::new(
            FEATURE_COLUMNS.iter().map(|s| s.to_string()).collect(),
            (0..rows.len()).map(|r| format!("{prefix}{r}")).collect(),
            Matrix::from_vec(rows.len(), 4, data).unwrap(),
            None,
        )
    }

    fn cluster(rng: &mut ChaCha8Rng, centre: f64, n: usize) -> Vec<[f64; 4]> {
        (0..n)
            .map(|_| std::array::from_fn(|_| centre + rng.random_range(-0.5..0.5)))
            .collect()
    }

    #[test]
    fn separable_clusters() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pos = table(&cluster(&mut rng, 3.0, 40), "p");
        let neg = table(&cluster(&mut rng, 0.0, 60), "n");
        let m = train_detector(&pos, &neg, DEFAULT_LAMBDA).unwrap();
        assert!(m.converged, "{m:?}");
        let all = FeatureTable::labeled(&pos, &neg).unwrap();
        let e = evaluate(&m, &all).unwrap();
        assert_eq!(e.auroc, 1.0);
        assert_eq!(e.accuracy, 1.0);
        assert_eq!(e.fpr_at_95_tpr, 0.0);
    }

    #[test]
    fn identical_tables() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rows = cluster(&mut rng, 1.0, 50);
        let m = train_detector(&table(&rows, "p"), &table(&rows, "n"), DEFAULT_LAMBDA).unwrap();
        let all = FeatureTable::labeled(&table(&rows, "p"), &table(&rows, "n")).unwrap();
        assert!((evaluate(&m, &all).unwrap().auroc - 0.5).abs() < 1e-9);
    }

    #[test]
    fn constant_column_dropped() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = cluster(&mut rng, 3.0, 30);
        let mut n = cluster(&mut rng, 0.0, 30);
        p.iter_mut().chain(n.iter_mut()).for_each(|r| r[1] = 7.0);
        let m = train_detector(&table(&p, "p"), &table(&n, "n"), DEFAULT_LAMBDA).unwrap();
        assert_eq!(m.kept, vec![0, 2, 3]);
        assert_eq!(m.warnings.len(), 1);
        let s = detect(&m, &table(&p, "p")).unwrap();
        assert!(s.iter().all(|v| *v > 0.5));
    }

    #[test]
    fn detect_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pos = table(&cluster(&mut rng, 2.0, 20), "p");
        let neg = table(&cluster(&mut rng, 0.0, 20), "n");
        let m = train_detector(&pos, &neg, DEFAULT_LAMBDA).unwrap();
        let origin = table(&[[m.mean[0], m.mean[1], m.mean[2], m.mean[3]]; 2], "o");
        let s = detect(&m, &origin).unwrap();
        assert!((s[0] - sigmoid(m.bias)).abs() < 1e-15);
        assert_eq!(s[0], s[1]);
        let mut bad = origin.clone();
        bad.columns[0] = "x".into();
        assert!(matches!(detect(&m, &bad), Err(DetectorError::ColumnMismatch { .. })));
        assert_eq!(
            train_detector(&table(&[], "p"), &neg, DEFAULT_LAMBDA).unwrap_err(),
            DetectorError::EmptyClassSet("positive")
        );
    }

    #[test]
    fn metric_examples() {
        assert_eq!(auroc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.5; 6], &[true, false, true, false, true, false]).unwrap(), 0.5);
        assert_eq!(auroc(&[0.9, 0.1], &[false, true]).unwrap(), 0.0);
        assert!(matches!(auroc(&[0.1], &[true]), Err(DetectorError::SingleClassLabels)));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s: Vec<f64> = (0..10_000).map(|_| rng.random()).collect();
        let l: Vec<bool> = (0..10_000).map(|_| rng.random()).collect();
        assert!((auroc(&s, &l).unwrap() - 0.5).abs() < 0.02);
        // 20 positives, one scored below every negative: 19/20 = 95% reached
        // above all negatives.
        let mut s = vec![0.9; 19];
        s.push(0.0);
        s.extend([0.5; 10]);
        let mut l = vec![true; 20];
        l.extend([false; 10]);
        assert_eq!(fpr_at_tpr(&s, &l, 0.95).unwrap(), 0.0);
    }

    #[test]
    fn features_from_profiles() {
        let p = GeometryProfile {
            id: "a".into(),
            class: 0,
            d_hull: vec![0.0, 1.0],
            d_hull_min: 0.0,
            d_c: 1.0,
            d_f_min: f64::INFINITY,
            boundary_class: None,
            boundary_relaxed: false,
            d_gap: 0.5,
            zeta: 0.0,
            zeta_bar: 0.0,
            abstained: None,
            nearest_classes: (0, 1),
        };
        let t = assemble_features(&[p.clone(), p.clone(), p], DEFAULT_CAP);
        assert_eq!((t.x.rows(), t.x.cols()), (3, 4));
        assert_eq!(t.x.row(0), &[0.0, 0.5, DEFAULT_CAP, 1.0]);
        assert!(assemble_features(&[], DEFAULT_CAP).is_empty());
    }

    #[test]
    fn split_is_stable_and_proportional() {
        assert_eq!(split_of("sample-17"), split_of("sample-17"));
        let counts = (0..10_000).fold([0usize; 3], |mut c, k| {
            c[split_of(&format!("id{k}")) as usize] += 1;
            c
        });
        assert!((counts[0] as f64 / 1e4 - 0.70).abs() < 0.02);
        assert!((counts[1] as f64 / 1e4 - 0.15).abs() < 0.02);
    }
}
