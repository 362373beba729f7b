//! Failure-mode measures of a sample and the ambiguity score built from them.
//!
//! For a sample `x` predicted as class `i`:
//!
//! * `d_hull_min`: distance to the nearest class hull,
//! * `d_c`: second-nearest minus nearest hull distance,
//! * `d_f_min`: distance to the nearest decision boundary of `i`,
//! * `d_gap`: distance to the nearest training point,
//!
//! combined as `ζ = ((d_hull_min + ε)(d_gap + ε) / (d_f_min · d_c))^α`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundary::{boundary_distance_vector, min_boundary_distance, BoundaryError};
use crate::bundle::{EmbeddingSet, ModelBundle};
use crate::hull::{HullError, TrainingGeometry, DEFAULT_EPS_BAR};
use crate::matrix::Matrix;
use crate::space::{decompose, empirical_phi_bound, CompressedSpace, SpaceError};

pub const DEFAULT_EPSILON: f64 = 1e-3;
pub const DEFAULT_PERCENTILE: f64 = 99.0;

#[derive(Debug, thiserror::Error)]
pub enum AmbiguityError {
    #[error("at least two hull distances are required, got {0}")]
    TooFewClasses(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no scores to calibrate on")]
    EmptyScores,
    #[error("separating calibration needs one label per score")]
    MissingLabels,
    #[error("percentile must lie in [0, 100], got {0}")]
    InvalidPercentile(f64),
    #[error("threshold not calibrated")]
    UncalibratedThreshold,
    #[error("no calibration statistics available")]
    NoCalibrationStats,
    #[error("the training set has no labels")]
    UnlabeledTraining,
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Hull(#[from] HullError),
    #[error(transparent)]
    Boundary(#[from] BoundaryError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// JSON has no infinity; non-finite values are written as `f64::MAX` and
/// read back as `+∞`.
pub mod finite_json {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(if v.is_finite() { *v } else { f64::MAX })
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        let v = f64::deserialize(d)?;
        Ok(if v >= f64::MAX { f64::INFINITY } else { v })
    }

    pub mod opt {
        use super::*;

        pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
            match v {
                Some(x) => super::serialize(x, s),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
            Ok(Option::<f64>::deserialize(d)?.map(|v| if v >= f64::MAX { f64::INFINITY } else { v }))
        }
    }

    pub mod vec {
        use serde::ser::SerializeSeq;
        use super::*;

        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
            let mut seq = s.serialize_seq(Some(v.len()))?;
            for x in v {
                seq.serialize_element(&if x.is_finite() { *x } else { f64::MAX })?;
            }
            seq.end()
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            Ok(Vec::<f64>::deserialize(d)?
                .into_iter()
                .map(|v| if v >= f64::MAX { f64::INFINITY } else { v })
                .collect())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryProfile {
    pub id: String,
    pub class: usize,
    #[serde(with = "finite_json::vec")]
    pub d_hull: Vec<f64>,
    pub d_hull_min: f64,
    pub d_c: f64,
    #[serde(with = "finite_json")]
    pub d_f_min: f64,
    /// Class whose boundary attains `d_f_min`, if any is reachable.
    pub boundary_class: Option<usize>,
    pub boundary_relaxed: bool,
    pub d_gap: f64,
    #[serde(with = "finite_json")]
    pub zeta: f64,
    #[serde(with = "finite_json")]
    pub zeta_bar: f64,
    pub abstained: Option<bool>,
    /// The two classes with the smallest hull distances.
    pub nearest_classes: (usize, usize),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZetaBarVariant {
    /// `((d_hull_min + ε) / d_f_min)^α`
    #[default]
    Ratio,
    /// `d_hull_min − d_f_min`
    Difference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbiguityConfig {
    pub epsilon: f64,
    pub alpha: f64,
    pub eps_bar: f64,
    #[serde(with = "finite_json::opt")]
    pub tau: Option<f64>,
    /// Value reported when a denominator vanishes.
    #[serde(with = "finite_json")]
    pub sentinel: f64,
    pub zeta_bar: ZetaBarVariant,
}

impl Default for AmbiguityConfig {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            alpha: 1.0,
            eps_bar: DEFAULT_EPS_BAR,
            tau: None,
            sentinel: f64::INFINITY,
            zeta_bar: ZetaBarVariant::Ratio,
        }
    }
}

impl AmbiguityConfig {
    pub fn validate(&self) -> Result<(), AmbiguityError> {
        let bad = |m: String| Err(AmbiguityError::InvalidConfig(m));
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be > 0, got {}", self.epsilon));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be > 0, got {}", self.alpha));
        }
        if !(self.eps_bar > 0.0 && self.eps_bar < 1.0) {
            return bad(format!("eps_bar must lie in (0, 1), got {}", self.eps_bar));
        }
        if self.tau.is_some_and(f64::is_nan) {
            return bad("tau is NaN".into());
        }
        if self.sentinel.is_nan() || self.sentinel < f64::MAX {
            return bad("sentinel must be +inf or f64::MAX".into());
        }
        Ok(())
    }
}

/// `d_c`: second-smallest minus smallest entry.
pub fn class_margin(d_hull: &[f64]) -> Result<f64, AmbiguityError> {
    Ok(two_smallest(d_hull)?.2)
}

/// Indices of the two smallest entries (ties to the lower index) and their gap.
fn two_smallest(d: &[f64]) -> Result<(usize, usize, f64), AmbiguityError> {
    if d.len() < 2 {
        return Err(AmbiguityError::TooFewClasses(d.len()));
    }
    let mut idx: Vec<usize> = (0..d.len()).collect();
    idx.sort_by(|&p, &q| d[p].total_cmp(&d[q]).then(p.cmp(&q)));
    let (a, b) = (idx[0], idx[1]);
    Ok((a, b, (d[b] - d[a]).max(0.0)))
}

/// ζ from its four components.
pub fn zeta_components(d_hull_min: f64, d_gap: f64, d_f_min: f64, d_c: f64, config: &AmbiguityConfig) -> f64 {
    if d_f_min == 0.0 || d_c == 0.0 {
        return config.sentinel;
    }
    let num = (d_hull_min + config.epsilon) * (d_gap + config.epsilon);
    (num / (d_f_min * d_c)).powf(config.alpha)
}

pub fn zeta(p: &GeometryProfile, config: &AmbiguityConfig) -> f64 {
    zeta_components(p.d_hull_min, p.d_gap, p.d_f_min, p.d_c, config)
}

pub fn zeta_bar_components(d_hull_min: f64, d_f_min: f64, config: &AmbiguityConfig) -> f64 {
    match config.zeta_bar {
        ZetaBarVariant::Ratio => {
            if d_f_min == 0.0 {
                config.sentinel
            } else {
                ((d_hull_min + config.epsilon) / d_f_min).powf(config.alpha)
            }
        }
        ZetaBarVariant::Difference => d_hull_min - d_f_min,
    }
}

pub fn zeta_bar(p: &GeometryProfile, config: &AmbiguityConfig) -> f64 {
    zeta_bar_components(p.d_hull_min, p.d_f_min, config)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ThresholdMode {
    Percentile { p: f64 },
    /// Midpoint maximizing balanced accuracy of `score > τ` against labels.
    Separating,
}

/// Linear-interpolated percentile at rank `p/100 · (N − 1)`.
pub fn percentile(scores: &[f64], p: f64) -> Result<f64, AmbiguityError> {
    if scores.is_empty() {
        return Err(AmbiguityError::EmptyScores);
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(AmbiguityError::InvalidPercentile(p));
    }
    let mut s = scores.to_vec();
    s.sort_by(f64::total_cmp);
    let rank = p / 100.0 * (s.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let t = rank - lo as f64;
    if t == 0.0 || lo == hi {
        return Ok(s[lo]);
    }
    if !s[hi].is_finite() {
        return Ok(s[hi]);
    }
    Ok(s[lo] + t * (s[hi] - s[lo]))
}

/// Threshold for abstention from a score population. `labels[k]` marks
/// score `k` as a failure that should be abstained on.
pub fn calibrate_threshold(scores: &[f64], mode: ThresholdMode, labels: Option<&[bool]>) -> Result<f64, AmbiguityError> {
    if scores.is_empty() {
        return Err(AmbiguityError::EmptyScores);
    }
    match mode {
        ThresholdMode::Percentile { p } => percentile(scores, p),
        ThresholdMode::Separating => {
            let labels = labels.ok_or(AmbiguityError::MissingLabels)?;
            if labels.len() != scores.len() {
                return Err(AmbiguityError::MissingLabels);
            }
            let mut order: Vec<usize> = (0..scores.len()).collect();
            order.sort_by(|&p, &q| scores[p].total_cmp(&scores[q]));
            let pos = labels.iter().filter(|l| **l).count();
            let neg = labels.len() - pos;
            let mut best = (f64::NEG_INFINITY, scores[order[0]]);
            // Sweep: after index k, everything up to k is predicted normal.
            let (mut tn, mut fn_) = (0usize, 0usize);
            for k in 0..order.len() - 1 {
                if labels[order[k]] {
                    fn_ += 1;
                } else {
                    tn += 1;
                }
                let (s0, s1) = (scores[order[k]], scores[order[k + 1]]);
                if s0 == s1 {
                    continue;
                }
                let tpr = if pos == 0 { 1.0 } else { (pos - fn_) as f64 / pos as f64 };
                let tnr = if neg == 0 { 1.0 } else { tn as f64 / neg as f64 };
                let bacc = 0.5 * (tpr + tnr);
                if bacc > best.0 {
                    let mid = if s1.is_finite() { 0.5 * (s0 + s1) } else { s1 };
                    best = (bacc, mid);
                }
            }
            Ok(best.1)
        }
    }
}

/// Sorted component populations for percentile ranks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationStats {
    #[serde(with = "finite_json::vec")]
    pub zeta: Vec<f64>,
    pub d_hull_min: Vec<f64>,
    #[serde(with = "finite_json::vec")]
    pub d_f_min: Vec<f64>,
    pub d_gap: Vec<f64>,
    pub d_c: Vec<f64>,
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

impl CalibrationStats {
    pub fn from_profiles(profiles: &[GeometryProfile]) -> Result<Self, AmbiguityError> {
        if profiles.is_empty() {
            return Err(AmbiguityError::EmptyScores);
        }
        let col = |f: fn(&GeometryProfile) -> f64| sorted(profiles.iter().map(f).collect());
        Ok(Self {
            zeta: col(|p| p.zeta),
            d_hull_min: col(|p| p.d_hull_min),
            d_f_min: col(|p| p.d_f_min),
            d_gap: col(|p| p.d_gap),
            d_c: col(|p| p.d_c),
        })
    }

    /// Mid-rank percentile of `v` in a sorted population; `+∞` ranks 100.
    pub fn rank(population: &[f64], v: f64) -> f64 {
        if v == f64::INFINITY {
            return 100.0;
        }
        let below = population.partition_point(|x| *x < v);
        let upto = population.partition_point(|x| *x <= v);
        100.0 * (below as f64 + 0.5 * (upto - below) as f64) / population.len() as f64
    }

    /// ζ rescaled to `[0, 1]` over the finite calibration range.
    pub fn normalize(&self, z: f64) -> f64 {
        let finite: Vec<f64> = self.zeta.iter().copied().filter(|v| v.is_finite()).collect();
        let (Some(lo), Some(hi)) = (finite.first(), finite.last()) else {
            return if z.is_finite() { 0.0 } else { 1.0 };
        };
        if z == f64::INFINITY {
            return 1.0;
        }
        if hi <= lo {
            return if z > *hi { 1.0 } else { 0.0 };
        }
        ((z - lo) / (hi - lo)).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum Decision {
    Classify {
        class: usize,
        #[serde(with = "finite_json")]
        zeta: f64,
    },
    Abstain {
        class: usize,
        #[serde(with = "finite_json")]
        zeta: f64,
        explanation: Option<String>,
    },
}

impl Decision {
    pub fn abstained(&self) -> bool {
        matches!(self, Decision::Abstain { .. })
    }
}

/// Algorithm-level decision for a fixed threshold: abstain iff `ζ > τ`.
pub fn decide(class: usize, zeta: f64, tau: f64) -> Decision {
    if zeta > tau {
        Decision::Abstain {
            class,
            zeta,
            explanation: None,
        }
    } else {
        Decision::Classify { class, zeta }
    }
}

/// Everything needed to profile and gate samples of one model.
#[derive(Debug, Clone)]
pub struct Auditor {
    space: CompressedSpace,
    geom: TrainingGeometry,
    config: AmbiguityConfig,
    class_names: Vec<String>,
    stats: Option<CalibrationStats>,
}

impl Auditor {
    pub fn new(space: CompressedSpace, geom: TrainingGeometry, config: AmbiguityConfig) -> Result<Self, AmbiguityError> {
        config.validate()?;
        let class_names = (0..space.n_classes()).map(|k| k.to_string()).collect();
        Ok(Self {
            space,
            geom,
            config,
            class_names,
            stats: None,
        })
    }

    /// Builds Ψ and the training hulls from a bundle. The domain bound is
    /// the bundle's own when present, else the empirical one.
    pub fn from_bundle(bundle: &ModelBundle, config: AmbiguityConfig) -> Result<Self, AmbiguityError> {
        let bound = match bundle.phi_l2_bound {
            Some(b) => b,
            None => empirical_phi_bound(std::iter::once(&bundle.train).chain(bundle.eval.as_ref()))?,
        };
        let space = decompose(&bundle.head)?.set_domain_bound(bound)?;
        if bundle.train.labels.is_none() {
            return Err(AmbiguityError::UnlabeledTraining);
        }
        let geom = TrainingGeometry::from_space(&space, &bundle.train)?;
        let mut a = Self::new(space, geom, config)?;
        a.class_names = bundle.head.class_names.clone();
        Ok(a)
    }

    pub fn space(&self) -> &CompressedSpace {
        &self.space
    }

    pub fn geometry(&self) -> &TrainingGeometry {
        &self.geom
    }

    pub fn config(&self) -> &AmbiguityConfig {
        &self.config
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn stats(&self) -> Option<&CalibrationStats> {
        self.stats.as_ref()
    }

    pub fn set_tau(&mut self, tau: f64) {
        self.config.tau = Some(tau);
    }

    pub fn set_stats(&mut self, stats: CalibrationStats) {
        self.stats = Some(stats);
    }

    /// Profile of a Ψ point. `exclude` leaves one training point out of the
    /// hulls and the gap search (for profiling training points themselves).
    pub fn profile(&self, id: &str, x_psi: &[f64], exclude: Option<usize>) -> Result<GeometryProfile, AmbiguityError> {
        let d_hull = self.geom.hull_distance_vector_excluding(x_psi, self.config.eps_bar, exclude)?;
        let (c0, c1, d_c) = two_smallest(&d_hull)?;
        let d_hull_min = d_hull[c0];
        let d_gap = self.geom.gap_radius_excluding(x_psi, exclude)?;
        let bv = boundary_distance_vector(&self.space, x_psi)?;
        let (d_f_min, boundary_class, boundary_relaxed) = match min_boundary_distance(&bv) {
            Ok(m) => (m.distance, Some(m.class), m.relaxed),
            Err(BoundaryError::AllTargetsEmpty) => (f64::INFINITY, None, false),
            Err(e) => return Err(e.into()),
        };
        let z = zeta_components(d_hull_min, d_gap, d_f_min, d_c, &self.config);
        Ok(GeometryProfile {
            id: id.to_string(),
            class: bv.source,
            d_hull,
            d_hull_min,
            d_c,
            d_f_min,
            boundary_class,
            boundary_relaxed,
            d_gap,
            zeta: z,
            zeta_bar: zeta_bar_components(d_hull_min, d_f_min, &self.config),
            abstained: self.config.tau.map(|t| z > t),
            nearest_classes: (c0, c1),
        })
    }

    /// Profiles of Φ rows, in input order.
    pub fn profile_phi_batch(&self, ids: &[String], x_phi: &Matrix) -> Result<Vec<GeometryProfile>, AmbiguityError> {
        let psi = self.space.to_psi_matrix(x_phi)?;
        (0..psi.rows())
            .into_par_iter()
            .map(|r| self.profile(&ids[r], psi.row(r), None))
            .collect()
    }

    /// Profiles of an embedding set with ids `prefix-<row>`.
    pub fn profile_set(&self, set: &EmbeddingSet, prefix: &str) -> Result<Vec<GeometryProfile>, AmbiguityError> {
        let ids: Vec<String> = (0..set.x.rows()).map(|r| format!("{prefix}-{r}")).collect();
        self.profile_phi_batch(&ids, &set.x)
    }

    /// Leave-one-out profiles of the training points.
    pub fn training_profiles(&self) -> Result<Vec<GeometryProfile>, AmbiguityError> {
        let pts = self.geom.points();
        (0..pts.rows())
            .into_par_iter()
            .map(|r| self.profile(&format!("train-{r}"), pts.row(r), Some(r)))
            .collect()
    }

    /// Fits percentile statistics and τ on the leave-one-out training
    /// population.
    pub fn calibrate(&mut self, p: f64) -> Result<f64, AmbiguityError> {
        let profiles = self.training_profiles()?;
        self.calibrate_on(&profiles, ThresholdMode::Percentile { p }, None)
    }

    pub fn calibrate_on(
        &mut self,
        profiles: &[GeometryProfile],
        mode: ThresholdMode,
        labels: Option<&[bool]>,
    ) -> Result<f64, AmbiguityError> {
        let scores: Vec<f64> = profiles.iter().map(|p| p.zeta).collect();
        let tau = calibrate_threshold(&scores, mode, labels)?;
        self.stats = Some(CalibrationStats::from_profiles(profiles)?);
        self.config.tau = Some(tau);
        Ok(tau)
    }

    /// Classify or abstain for a Ψ point; abstentions carry an explanation
    /// when calibration statistics are present.
    pub fn infer(&self, id: &str, x_psi: &[f64]) -> Result<(GeometryProfile, Decision), AmbiguityError> {
        let tau = self.config.tau.ok_or(AmbiguityError::UncalibratedThreshold)?;
        let p = self.profile(id, x_psi, None)?;
        let mut d = decide(p.class, p.zeta, tau);
        if let Decision::Abstain { explanation, .. } = &mut d {
            *explanation = self.explain(&p).ok();
        }
        Ok((p, d))
    }

    fn name(&self, k: usize) -> &str {
        self.class_names.get(k).map(String::as_str).unwrap_or("?")
    }

    /// Plain-text account of a profile relative to the calibration
    /// population.
    pub fn explain(&self, p: &GeometryProfile) -> Result<String, AmbiguityError> {
        let s = self.stats.as_ref().ok_or(AmbiguityError::NoCalibrationStats)?;
        let ambiguous = match self.config.tau {
            Some(t) => p.zeta > t,
            None => p.zeta.is_infinite(),
        };
        let zr = CalibrationStats::rank(&s.zeta, p.zeta);
        let (verdict, cmp, share) = if ambiguous {
            ("ambiguous", "higher", zr)
        } else {
            ("unambiguous", "lower", 100.0 - zr)
        };
        let (a, b) = p.nearest_classes;
        Ok(format!(
            "Predicted class: {}. This input is {verdict}: its ambiguity score is {cmp} than {share:.1}% of reference samples.\n\
             Components:\n\
             - distance to the training hull: {:.1} percentile\n\
             - distance to the nearest decision boundary: {:.1} percentile\n\
             - nearest classes by hull distance: {} and {}\n\
             - gap radius around the input: {:.1} percentile\n",
            self.name(p.class),
            CalibrationStats::rank(&s.d_hull_min, p.d_hull_min),
            CalibrationStats::rank(&s.d_f_min, p.d_f_min),
            self.name(a),
            self.name(b),
            CalibrationStats::rank(&s.d_gap, p.d_gap),
        ))
    }
}

/// One JSON object per line.
pub fn write_jsonl<T: Serialize>(items: &[T], mut w: impl Write) -> Result<(), AmbiguityError> {
    for it in items {
        serde_json::to_writer(&mut w, it)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_profiles_jsonl(text: &str) -> Result<Vec<GeometryProfile>, AmbiguityError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(AmbiguityError::from))
        .collect()
}

#[derive(Serialize)]
struct CsvRow<'a> {
    id: &'a str,
    class: usize,
    d_hull_min: f64,
    d_c: f64,
    d_f_min: f64,
    d_gap: f64,
    zeta: f64,
    zeta_bar: f64,
    abstained: Option<bool>,
}

/// Scalar profile fields as CSV (the per-class hull vector is omitted).
pub fn write_profiles_csv(profiles: &[GeometryProfile], w: impl Write) -> Result<(), AmbiguityError> {
    let mut out = csv::Writer::from_writer(w);
    for p in profiles {
        out.serialize(CsvRow {
            id: &p.id,
            class: p.class,
            d_hull_min: p.d_hull_min,
            d_c: p.d_c,
            d_f_min: p.d_f_min,
            d_gap: p.d_gap,
            zeta: p.zeta,
            zeta_bar: p.zeta_bar,
            abstained: p.abstained,
        })?;
    }
    out.flush()?;
    Ok(())
}
