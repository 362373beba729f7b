//! Small seeded fixtures: analytic heads and a Gaussian-cluster bundle with
//! planted out-of-distribution points.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::bundle::{EmbeddingSet, ModelBundle, ModelHead};
use crate::matrix::Matrix;
use crate::space::CompressedSpace;

/// `z = (y₁, −y₁)`: boundary `y₁ = 0` in `[−a, a]²`.
pub fn binary_space(a: f64) -> CompressedSpace {
    let w = Matrix::from_vec(2, 2, vec![1.0, 0.0, -1.0, 0.0]).expect("2×2");
    CompressedSpace::from_psi(w, vec![0.0, 0.0], a).expect("valid head")
}

/// Three unit rows at 120° with zero bias in `[−a, a]²`.
pub fn symmetric_space(a: f64) -> CompressedSpace {
    let s = 3f64.sqrt() / 2.0;
    let w = Matrix::from_vec(3, 2, vec![1.0, 0.0, -0.5, s, -0.5, -s]).expect("3×2");
    CompressedSpace::from_psi(w, vec![0.0; 3], a).expect("valid head")
}

#[derive(Debug, Clone)]
pub struct ClusterConfig {
    pub n_classes: usize,
    pub feature_dim: usize,
    /// Distance of each class centre from the origin.
    pub radius: f64,
    pub sigma: f64,
    pub train_per_class: usize,
    pub eval_per_class: usize,
    /// Planted points as a fraction of the evaluation set.
    pub ood_fraction: f64,
    pub ood_sigma: f64,
    pub seed: u64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            n_classes: 3,
            feature_dim: 4,
            radius: 4.0,
            sigma: 0.5,
            train_per_class: 150,
            eval_per_class: 200,
            ood_fraction: 0.1,
            ood_sigma: 0.3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ClusterBundle {
    pub bundle: ModelBundle,
    /// Per evaluation row: planted out-of-distribution point.
    pub ood: Vec<bool>,
}

/// Classes are Gaussian blobs on a circle in the first two feature
/// coordinates; the head is the (slightly perturbed) prototype classifier.
/// Planted points sit between the blobs, near the common corner of the
/// decision regions: inside the coordinate range of the training cloud but
/// away from every class hull.
pub fn gaussian_clusters(cfg: &ClusterConfig) -> ClusterBundle {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (n, f) = (cfg.n_classes, cfg.feature_dim);
    let centre = |k: usize| {
        let th = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
        let mut c = vec![0.0; f];
        c[0] = cfg.radius * th.cos();
        c[1] = cfg.radius * th.sin();
        c
    };
    let mut w = Vec::with_capacity(n * f);
    for k in 0..n {
        for v in centre(k) {
            w.push(v / cfg.radius + 0.05 * rng.sample::<f64, _>(StandardNormal));
        }
    }
    let head = ModelHead::new(Matrix::from_vec(n, f, w).expect("n×f"), vec![0.0; n]);

    let draw = |per: usize, rng: &mut ChaCha8Rng| {
        let mut x = Vec::with_capacity(n * per * f);
        let mut y = Vec::with_capacity(n * per);
        for k in 0..n {
            let c = centre(k);
            for _ in 0..per {
                x.extend(c.iter().map(|m| m + cfg.sigma * rng.sample::<f64, _>(StandardNormal)));
                y.push(k as u32);
            }
        }
        (x, y)
    };
    let (tx, ty) = draw(cfg.train_per_class, &mut rng);
    let (mut ex, mut ey) = draw(cfg.eval_per_class, &mut rng);
    let n_id = ey.len();
    let n_ood = ((cfg.ood_fraction / (1.0 - cfg.ood_fraction)) * n_id as f64).round() as usize;
    for q in 0..n_ood {
        ex.extend((0..f).map(|_| cfg.ood_sigma * rng.sample::<f64, _>(StandardNormal)));
        ey.push((q % n) as u32);
    }
    let mut ood = vec![false; n_id];
    ood.resize(n_id + n_ood, true);

    let train = EmbeddingSet {
        x: Matrix::from_vec(ty.len(), f, tx).expect("train"),
        labels: Some(ty),
    };
    let eval = EmbeddingSet {
        x: Matrix::from_vec(ey.len(), f, ex).expect("eval"),
        labels: Some(ey),
    };
    ClusterBundle {
        bundle: ModelBundle::new(head, train, Some(eval)),
        ood,
    }
}

/// A random head with entries uniform in `[−1, 1]` and bias in `[−0.5, 0.5]`.
pub fn random_head(rng: &mut impl Rng, n: usize, f: usize) -> ModelHead {
    let w: Vec<f64> = (0..n * f).map(|_| rng.random_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..n).map(|_| rng.random_range(-0.5..0.5)).collect();
    ModelHead::new(Matrix::from_vec(n, f, w).expect("n×f"), b)
}
