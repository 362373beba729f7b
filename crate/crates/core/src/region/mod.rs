//! Volumes of decision-boundary regions inside the domain cube and the
//! high-confidence and overconfident-unknown fractions they imply.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundary::pair_hyperplane;
use crate::bounds::{compute_bound_params, delta_for_confidence, BoundsError};
use crate::hull::{offset_box, HullBox, HullError, TrainingGeometry};
use crate::linalg::{dist, dot, norm};
use crate::mc::{count_hits, wilson, Interval, Proportion};
use crate::space::{classify, softmax, CompressedSpace};

pub mod polytope;
pub mod slice;

pub use polytope::{enumerate_boundary_vertices, polytope_volume, BoundaryPolytope, PolytopeVolume, MAX_ENUM_DIM};
pub use slice::{slice_volume_upper_bound, unit_cube_slice, MAX_SLICE_DIM};

pub const DEFAULT_SAMPLES: usize = 100_000;
pub const MIN_SAMPLES: usize = 1000;
pub const DEFAULT_WITNESS_CONFIDENCE: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RegionError {
    #[error("classes {0} and {1} share no boundary inside the domain")]
    NoInterface(usize, usize),
    #[error("dimension {dim} exceeds the supported maximum {max}")]
    DimensionTooHigh { dim: usize, max: usize },
    #[error("classes {0} and {1} have identical weight rows")]
    DegeneratePair(usize, usize),
    #[error("hyperplane has an all-zero normal")]
    DegenerateHyperplane,
    #[error("vertex enumeration stopped after {0} vertices")]
    TooManyVertices(usize),
    #[error("slab width must be finite and >= 0, got {0}")]
    InvalidDelta(f64),
    #[error("slab ({0}, {1}) already present")]
    DuplicatePair(usize, usize),
    #[error("at least {MIN_SAMPLES} samples required, got {0}")]
    TooFewSamples(usize),
    #[error("this bound needs exactly 2 classes, got {0}")]
    NotBinary(usize),
    #[error("geometry has dimension {found}, space has {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error(transparent)]
    Hull(#[from] HullError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slab {
    pub i: usize,
    pub j: usize,
    pub delta: f64,
    /// `W[i] − W[j]` in Ψ.
    pub w: Vec<f64>,
    /// `b[i] − b[j]`
    pub c: f64,
    pub norm: f64,
}

impl Slab {
    /// Hyperplane distance of `y` to the `(i, j)` boundary.
    pub fn distance(&self, y: &[f64]) -> f64 {
        (dot(&self.w, y) + self.c).abs() / self.norm
    }
}

/// Points within `δ` of at least one pairwise hyperplane.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SlabSet {
    slabs: Vec<Slab>,
}

impl SlabSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Every unordered pair with the same width.
    pub fn all_pairs(space: &CompressedSpace, delta: f64) -> Result<Self, RegionError> {
        let mut s = Self::new();
        let n = space.n_classes();
        for i in 0..n {
            for j in i + 1..n {
                s.push(space, i, j, delta)?;
            }
        }
        Ok(s)
    }

    pub fn push(&mut self, space: &CompressedSpace, i: usize, j: usize, delta: f64) -> Result<(), RegionError> {
        if !(delta.is_finite() && delta >= 0.0) {
            return Err(RegionError::InvalidDelta(delta));
        }
        if i == j {
            return Err(RegionError::DegeneratePair(i, j));
        }
        let (lo, hi) = (i.min(j), i.max(j));
        if self.slabs.iter().any(|s| (s.i, s.j) == (lo, hi)) {
            return Err(RegionError::DuplicatePair(lo, hi));
        }
        let (w, c) = pair_hyperplane(space, lo, hi);
        let nw = norm(&w);
        if nw <= 1e-12 * space.w_psi().max_abs().max(f64::MIN_POSITIVE) {
            return Err(RegionError::DegeneratePair(lo, hi));
        }
        self.slabs.push(Slab {
            i: lo,
            j: hi,
            delta,
            w,
            c,
            norm: nw,
        });
        Ok(())
    }

    pub fn slabs(&self) -> &[Slab] {
        &self.slabs
    }

    pub fn len(&self) -> usize {
        self.slabs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slabs.is_empty()
    }

    pub fn contains(&self, y: &[f64]) -> bool {
        self.slabs.iter().any(|s| s.distance(y) <= s.delta)
    }
}

/// A Monte Carlo volume: the hit fraction and its scaling to the cube.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeEstimate {
    pub fraction: Proportion,
    pub volume: Interval,
}

impl VolumeEstimate {
    fn new(hits: u64, n_samples: usize, cube_volume: f64) -> Self {
        let fraction = wilson(hits, n_samples as u64);
        Self {
            fraction,
            volume: fraction.interval.scale(cube_volume),
        }
    }
}

fn cube_volume(space: &CompressedSpace) -> f64 {
    (2.0 * space.a()).powi(space.psi_dim() as i32)
}

fn check_samples(n: usize) -> Result<(), RegionError> {
    if n < MIN_SAMPLES {
        return Err(RegionError::TooFewSamples(n));
    }
    Ok(())
}

/// `vol(∪ slabs)` inside `[−a, a]^r` by uniform sampling.
pub fn slab_volume_union(
    space: &CompressedSpace,
    slabs: &SlabSet,
    n_samples: usize,
    seed: u64,
) -> Result<VolumeEstimate, RegionError> {
    check_samples(n_samples)?;
    let hits = count_hits(space.psi_dim(), space.a(), n_samples, seed, 1, |y, out| {
        out[0] = slabs.contains(y);
    });
    Ok(VolumeEstimate::new(hits[0], n_samples, cube_volume(space)))
}

/// `1 − p` for an estimated proportion `p`, with the interval flipped.
fn complement(p: &Interval, offset: f64) -> Interval {
    let c = |v: f64| (1.0 - offset - v).clamp(0.0, 1.0);
    Interval {
        estimate: c(p.estimate),
        lower: c(p.upper),
        upper: c(p.lower),
    }
}

fn softmax_max(space: &CompressedSpace, y: &[f64]) -> f64 {
    let z = space.logits_psi_unchecked(y);
    softmax(&z).into_iter().fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryChain {
    pub tau: f64,
    pub delta: f64,
    /// `(r − 1)`-volume of the boundary inside the cube.
    pub boundary_volume: f64,
    /// `1 − √2 δ / a`
    pub crude_bound: f64,
    /// `1 − 2δ vol(Δ) / (2a)^r`
    pub polytope_bound: f64,
}

/// Lower bounds on the high-confidence fraction of a two-class head.
pub fn high_confidence_fraction_binary(space: &CompressedSpace, tau: f64) -> Result<BinaryChain, RegionError> {
    let n = space.n_classes();
    if n != 2 {
        return Err(RegionError::NotBinary(n));
    }
    let params = compute_bound_params(space)?;
    let delta = delta_for_confidence(tau, params.rho, n)?;
    let boundary_volume = match enumerate_boundary_vertices(space, 0, 1) {
        Ok(p) => polytope_volume(&p).volume,
        Err(RegionError::NoInterface(..)) => 0.0,
        Err(RegionError::DimensionTooHigh { .. }) => slice_volume_upper_bound(space, 0, 1)?,
        Err(e) => return Err(e),
    };
    let a = space.a();
    let crude_bound = (1.0 - 2f64.sqrt() * delta / a).clamp(0.0, 1.0);
    let polytope_bound = (1.0 - 2.0 * delta * boundary_volume / cube_volume(space)).clamp(0.0, 1.0);
    Ok(BinaryChain {
        tau,
        delta,
        boundary_volume,
        crude_bound,
        polytope_bound,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighConfidence {
    pub tau: f64,
    pub delta: f64,
    pub n_slabs: usize,
    pub slab_union: VolumeEstimate,
    /// `1 − vol(Γ∆) / (2a)^r`
    pub bound: Interval,
    /// Sampled fraction with top softmax `≥ τ`, same points as `slab_union`.
    pub measured: Proportion,
}

/// Slab-union bound on the fraction of the cube classified with confidence
/// at least `tau`, next to the directly sampled fraction.
pub fn high_confidence_fraction_multi(
    space: &CompressedSpace,
    tau: f64,
    n_samples: usize,
    seed: u64,
) -> Result<HighConfidence, RegionError> {
    check_samples(n_samples)?;
    let params = compute_bound_params(space)?;
    let delta = delta_for_confidence(tau, params.rho, space.n_classes())?;
    let slabs = SlabSet::all_pairs(space, delta)?;
    let hits = count_hits(space.psi_dim(), space.a(), n_samples, seed, 2, |y, out| {
        out[0] = slabs.contains(y);
        out[1] = softmax_max(space, y) >= tau;
    });
    let slab_union = VolumeEstimate::new(hits[0], n_samples, cube_volume(space));
    Ok(HighConfidence {
        tau,
        delta,
        n_slabs: slabs.len(),
        bound: complement(&slab_union.fraction.interval, 0.0),
        slab_union,
        measured: wilson(hits[1], n_samples as u64),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoxKind {
    /// Bounding box of the training points.
    Hull,
    /// The same box grown by `δʰ` per side.
    Offset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverconfidentVariant {
    pub kind: BoxKind,
    pub hull_box: HullBox,
    /// Exact box volume.
    pub box_volume: f64,
    pub slab_union: VolumeEstimate,
    pub intersection: VolumeEstimate,
    /// `1 − (vol(box) + vol(Γ∆) − vol(box ∩ Γ∆)) / (2a)^r`
    pub bound: Interval,
    /// The same without the intersection term.
    pub bound_without_intersection: Interval,
    /// Sampled fraction outside the box with top softmax `≥ τ`.
    pub measured: Proportion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overconfident {
    pub tau: f64,
    pub delta: f64,
    pub delta_h: f64,
    pub variants: Vec<OverconfidentVariant>,
}

/// Bound on the fraction of the cube that is away from the training data
/// yet classified with confidence at least `tau`. Both the plain and the
/// offset training box are evaluated on one shared sample stream.
pub fn overconfident_unknown_fraction(
    space: &CompressedSpace,
    geom: &TrainingGeometry,
    tau: f64,
    delta_h: f64,
    n_samples: usize,
    seed: u64,
) -> Result<Overconfident, RegionError> {
    check_samples(n_samples)?;
    if geom.dim() != space.psi_dim() {
        return Err(RegionError::DimensionMismatch {
            expected: space.psi_dim(),
            found: geom.dim(),
        });
    }
    let params = compute_bound_params(space)?;
    let delta = delta_for_confidence(tau, params.rho, space.n_classes())?;
    let slabs = SlabSet::all_pairs(space, delta)?;
    let a = space.a();
    let mut plain = offset_box(&geom.bounding_box(), 0.0, a)?;
    plain.offset = None;
    let grown = offset_box(&geom.bounding_box(), delta_h, a)?;
    let boxes = [plain, grown];
    // Flags: slab, then per box (slab ∧ box, slab ∧ ¬box, confident ∧ ¬box).
    let hits = count_hits(space.psi_dim(), a, n_samples, seed, 7, |y, out| {
        let s = slabs.contains(y);
        let conf = softmax_max(space, y) >= tau;
        out[0] = s;
        for (b, hb) in boxes.iter().enumerate() {
            let inside = hb.contains(y, 0.0);
            out[1 + 3 * b] = s && inside;
            out[2 + 3 * b] = s && !inside;
            out[3 + 3 * b] = conf && !inside;
        }
    });
    let cube = cube_volume(space);
    let slab_union = VolumeEstimate::new(hits[0], n_samples, cube);
    let variants = boxes
        .into_iter()
        .zip([BoxKind::Hull, BoxKind::Offset])
        .enumerate()
        .map(|(b, (hull_box, kind))| {
            let box_volume = hull_box.volume();
            let box_frac = box_volume / cube;
            let outside = wilson(hits[2 + 3 * b], n_samples as u64);
            OverconfidentVariant {
                kind,
                box_volume,
                slab_union,
                intersection: VolumeEstimate::new(hits[1 + 3 * b], n_samples, cube),
                bound: complement(&outside.interval, box_frac),
                bound_without_intersection: complement(&slab_union.fraction.interval, box_frac),
                measured: wilson(hits[3 + 3 * b], n_samples as u64),
                hull_box,
            }
        })
        .collect();
    Ok(Overconfident {
        tau,
        delta,
        delta_h,
        variants,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Witness {
    Found {
        point: Vec<f64>,
        class: usize,
        distance: f64,
        confidence: f64,
    },
    NotFound,
}

const WITNESS_ITERATIONS: usize = 200;
const CORNER_ENUM_DIM: usize = 12;

fn margin(z: &[f64], i: usize) -> f64 {
    let rival = z
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != i)
        .map(|(_, v)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    z[i] - rival
}

fn corner_candidates(space: &CompressedSpace, i: usize) -> Vec<Vec<f64>> {
    let r = space.psi_dim();
    let a = space.a();
    let w = space.w_psi();
    let mut out: Vec<Vec<f64>> = Vec::new();
    if r <= CORNER_ENUM_DIM {
        for mask in 0u32..(1u32 << r) {
            out.push((0..r).map(|k| if mask >> k & 1 == 1 { a } else { -a }).collect());
        }
    } else {
        // Sign patterns of W[i] − W[k] and of W[i] − mean of the rest.
        let n = space.n_classes();
        let mut dirs: Vec<Vec<f64>> = (0..n)
            .filter(|&k| k != i)
            .map(|k| w.row(i).iter().zip(w.row(k)).map(|(p, q)| p - q).collect())
            .collect();
        let mean: Vec<f64> = (0..r)
            .map(|c| w.row(i)[c] - (0..n).filter(|&k| k != i).map(|k| w.row(k)[c]).sum::<f64>() / (n - 1) as f64)
            .collect();
        dirs.push(mean);
        for d in dirs {
            out.push(d.iter().map(|v| if *v >= 0.0 { a } else { -a }).collect());
        }
    }
    let mut scored: Vec<(f64, Vec<f64>)> = out
        .into_iter()
        .map(|c| (margin(&space.logits_psi_unchecked(&c), i), c))
        .collect();
    scored.sort_by(|p, q| q.0.total_cmp(&p.0));
    scored.into_iter().map(|(_, c)| c).collect()
}

/// Searches for a point predicted as `x`'s class with confidence above
/// `threshold`, outside the training hull and far from `x`.
///
/// Starts at the cube corner with the largest class margin and climbs the
/// distance to `x` by projected gradient steps that are halved whenever
/// they would lose confidence. Heuristic: `NotFound` does not prove that no
/// witness exists.
pub fn find_overconfident_witness(
    space: &CompressedSpace,
    geom: &TrainingGeometry,
    x: &[f64],
    threshold: f64,
) -> Result<Witness, RegionError> {
    let r = space.psi_dim();
    if x.len() != r || geom.dim() != r {
        return Err(RegionError::DimensionMismatch {
            expected: r,
            found: if x.len() != r { x.len() } else { geom.dim() },
        });
    }
    let i = classify(&space.logits_psi_unchecked(x));
    let a = space.a();
    let conf_of = |y: &[f64]| {
        let z = space.logits_psi_unchecked(y);
        (classify(&z) == i).then(|| softmax(&z)[i])
    };
    let ok = |y: &[f64]| conf_of(y).is_some_and(|c| c > threshold);
    for start in corner_candidates(space, i) {
        if !ok(&start) {
            // Corners are sorted by margin, so later ones are no better.
            break;
        }
        let mut y = start;
        let mut step = a;
        for _ in 0..WITNESS_ITERATIONS {
            let d: Vec<f64> = y.iter().zip(x).map(|(p, q)| p - q).collect();
            let nd = norm(&d);
            if nd == 0.0 || step < 1e-9 * a {
                break;
            }
            let cand: Vec<f64> = y
                .iter()
                .zip(&d)
                .map(|(p, g)| (p + step * g / nd).clamp(-a, a))
                .collect();
            if dist(&cand, x) > nd + 1e-12 * a && ok(&cand) {
                y = cand;
            } else {
                step *= 0.5;
            }
        }
        if let Some(confidence) = conf_of(&y).filter(|c| *c > threshold) {
            if !geom.in_hull(&y) {
                return Ok(Witness::Found {
                    distance: dist(&y, x),
                    point: y,
                    class: i,
                    confidence,
                });
            }
        }
    }
    Ok(Witness::NotFound)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionConfig {
    pub tau: f64,
    pub delta_h: f64,
    pub n_samples: usize,
    pub seed: u64,
    pub enumerate_vertices: bool,
}

impl Default for RegionConfig {
    fn default() -> Self {
        Self {
            tau: 0.9,
            delta_h: 0.0,
            n_samples: DEFAULT_SAMPLES,
            seed: 0,
            enumerate_vertices: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairStatus {
    Ok,
    NoInterface,
    DegeneratePair,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairVolume {
    pub i: usize,
    pub j: usize,
    pub status: PairStatus,
    pub vertex_count: usize,
    /// Vertex-based volume, when enumerated.
    pub volume: Option<f64>,
    pub degenerate: bool,
    /// Closed-form section volume ignoring the other classes.
    pub slice_upper_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionParams {
    pub tau: f64,
    pub delta: f64,
    pub delta_h: f64,
    pub a: f64,
    pub rho: f64,
    pub rho_prime: f64,
    pub dim: usize,
    pub n_classes: usize,
    pub seed: u64,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionReport {
    pub params: RegionParams,
    pub pairs: Vec<PairVolume>,
    pub binary: Option<BinaryChain>,
    pub high_confidence: HighConfidence,
    pub overconfident: Option<Overconfident>,
    /// Fraction of the cube inside the pooled training hull.
    pub hull_fraction: Option<Proportion>,
    pub warnings: Vec<String>,
}

fn pair_volume(space: &CompressedSpace, i: usize, j: usize, enumerate: bool) -> PairVolume {
    let mut out = PairVolume {
        i,
        j,
        status: PairStatus::Ok,
        vertex_count: 0,
        volume: None,
        degenerate: false,
        slice_upper_bound: slice_volume_upper_bound(space, i, j).ok(),
    };
    if !enumerate {
        out.status = PairStatus::Skipped;
        return out;
    }
    match enumerate_boundary_vertices(space, i, j) {
        Ok(p) => {
            let v = polytope_volume(&p);
            out.vertex_count = p.vertices.len();
            out.volume = Some(v.volume);
            out.degenerate = v.degenerate;
        }
        Err(RegionError::NoInterface(..)) => {
            out.status = PairStatus::NoInterface;
            out.volume = Some(0.0);
        }
        Err(RegionError::DegeneratePair(..)) => out.status = PairStatus::DegeneratePair,
        Err(_) => out.status = PairStatus::Skipped,
    }
    out
}

/// Every region quantity for one head, with all parameters recorded.
pub fn region_report(
    space: &CompressedSpace,
    geom: Option<&TrainingGeometry>,
    config: &RegionConfig,
) -> Result<RegionReport, RegionError> {
    let mut warnings = Vec::new();
    let params = compute_bound_params(space)?;
    let n = space.n_classes();
    let r = space.psi_dim();
    let delta = delta_for_confidence(config.tau, params.rho, n)?;
    let mut enumerate = config.enumerate_vertices;
    if enumerate && r > MAX_ENUM_DIM {
        warnings.push(
            RegionError::DimensionTooHigh {
                dim: r,
                max: MAX_ENUM_DIM,
            }
            .to_string(),
        );
        enumerate = false;
    }
    let pair_ids: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let pairs: Vec<PairVolume> = pair_ids
        .par_iter()
        .map(|&(i, j)| pair_volume(space, i, j, enumerate))
        .collect();
    let binary = if n == 2 {
        Some(high_confidence_fraction_binary(space, config.tau)?)
    } else {
        None
    };
    let high_confidence = high_confidence_fraction_multi(space, config.tau, config.n_samples, config.seed)?;
    let (overconfident, hull_fraction) = match geom {
        Some(g) => {
            let oc = overconfident_unknown_fraction(space, g, config.tau, config.delta_h, config.n_samples, config.seed)?;
            let hf = match g.hull_volume_fraction(space.a(), config.n_samples, config.seed) {
                Ok(p) => Some(p),
                Err(e) => {
                    warnings.push(e.to_string());
                    None
                }
            };
            (Some(oc), hf)
        }
        None => (None, None),
    };
    Ok(RegionReport {
        params: RegionParams {
            tau: config.tau,
            delta,
            delta_h: config.delta_h,
            a: space.a(),
            rho: params.rho,
            rho_prime: params.rho_prime,
            dim: r,
            n_classes: n,
            seed: config.seed,
            n_samples: config.n_samples,
        },
        pairs,
        binary,
        high_confidence,
        overconfident,
        hull_fraction,
        warnings,
    })
}
