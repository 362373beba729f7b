//! Seeded Monte Carlo over the domain cube.
//!
//! Sample `i` of a run with seed `s` is drawn from its own ChaCha8 stream
//! (key derived from `s`, stream id `i`), so a run gives the same counts no
//! matter how the index range is split across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// z for a two-sided 95% interval.
pub const Z95: f64 = 1.959_963_984_540_054;

const CHUNK: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn exact(v: f64) -> Self {
        Self {
            estimate: v,
            lower: v,
            upper: v,
        }
    }

    pub fn scale(self, k: f64) -> Self {
        Self {
            estimate: self.estimate * k,
            lower: self.lower * k,
            upper: self.upper * k,
        }
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.upper - self.lower)
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }
}

/// Binomial proportion with its Wilson score interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub successes: u64,
    pub trials: u64,
    pub interval: Interval,
}

impl Proportion {
    pub fn estimate(&self) -> f64 {
        self.interval.estimate
    }
}

pub fn wilson(successes: u64, trials: u64) -> Proportion {
    if trials == 0 {
        return Proportion {
            successes,
            trials,
            interval: Interval {
                estimate: 0.0,
                lower: 0.0,
                upper: 1.0,
            },
        };
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    Proportion {
        successes,
        trials,
        interval: Interval {
            estimate: p,
            lower: (centre - half).max(0.0).min(p),
            upper: (centre + half).min(1.0).max(p),
        },
    }
}

fn key(seed: u64) -> [u8; 32] {
    let mut k = [0u8; 32];
    ChaCha8Rng::seed_from_u64(seed).fill(&mut k);
    k
}

/// Generator for sample `index` of the run seeded with `seed`.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::from_seed(key(seed));
    rng.set_stream(index);
    rng
}

/// Fills `out` with a uniform point of `[−a, a]^len`.
pub fn uniform_in_cube(rng: &mut impl Rng, a: f64, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = a * (2.0 * rng.random::<f64>() - 1.0);
    }
}

/// Draws `n_samples` uniform points of `[−a, a]^dim` and counts, for each
/// of `n_flags` indicators, how many points set it. `classify` receives the
/// point and a cleared flag buffer.
pub fn count_hits<F>(dim: usize, a: f64, n_samples: usize, seed: u64, n_flags: usize, classify: F) -> Vec<u64>
where
    F: Fn(&[f64], &mut [bool]) + Sync,
{
    let k = key(seed);
    let chunks = n_samples.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut counts = vec![0u64; n_flags];
            let mut point = vec![0.0; dim];
            let mut flags = vec![false; n_flags];
            for i in c * CHUNK..((c + 1) * CHUNK).min(n_samples) {
                let mut rng = ChaCha8Rng::from_seed(k);
                rng.set_stream(i as u64);
                uniform_in_cube(&mut rng, a, &mut point);
                flags.iter_mut().for_each(|f| *f = false);
                classify(&point, &mut flags);
                for (c, &f) in counts.iter_mut().zip(&flags) {
                    *c += u64::from(f);
                }
            }
            counts
        })
        .reduce(
            || vec![0u64; n_flags],
            |mut x, y| {
                x.iter_mut().zip(&y).for_each(|(p, q)| *p += q);
                x
            },
        )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_contains_estimate() {
        for (s, n) in [(0, 10), (10, 10), (3, 10), (500, 1000), (1, 100_000)] {
            let p = wilson(s, n);
            assert!(p.interval.contains(p.estimate()));
            assert!(p.interval.lower >= 0.0 && p.interval.upper <= 1.0);
        }
        // Reference value: 50/100 → [0.4038, 0.5962].
        let p = wilson(50, 100);
        assert!((p.interval.lower - 0.403_832).abs() < 1e-5);
        assert!((p.interval.upper - 0.596_168).abs() < 1e-5);
    }

    #[test]
    fn counts_independent_of_thread_count() {
        let f = |p: &[f64], out: &mut [bool]| {
            out[0] = p[0] > 0.0;
            out[1] = p.iter().map(|v| v * v).sum::<f64>() < 1.0;
        };
        let a = count_hits(3, 1.0, 10_000, 9, 2, f);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| count_hits(3, 1.0, 10_000, 9, 2, f));
        assert_eq!(a, b);
        // Ball of radius 1 inside [−1,1]³: π/6.
        let frac = a[1] as f64 / 10_000.0;
        assert!((frac - std::f64::consts::PI / 6.0).abs() < 0.02);
    }

    #[test]
    fn streams_differ() {
        let mut x = sample_rng(1, 0);
        let mut y = sample_rng(1, 1);
        assert_ne!(x.random::<u64>(), y.random::<u64>());
    }
}
