//! Seeded sampling of the admissible region
//! `D = { u : u_i > 0, sum u_i < 1 }`.
//!
//! Hypothesis validation and the model constants are certified on dense
//! interior samples plus a fixed set of near-boundary probes; everything is
//! deterministic for a given seed.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Uniform samples of the open simplex with all coordinates (including the
/// vacancy slot) at least `margin`.
pub struct SimplexSampler {
    n: usize,
    margin: f64,
    rng: ChaCha8Rng,
}

impl SimplexSampler {
    pub fn new(n: usize, margin: f64, seed: u64) -> Self {
        assert!(n >= 1);
        assert!(margin >= 0.0 && margin * ((n + 1) as f64) < 1.0);
        Self { n, margin, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Next interior point. Exponential spacings give the uniform law on the
    /// simplex; the margin is enforced by rejection.
    pub fn sample(&mut self) -> Vec<f64> {
        loop {
            let mut e = Vec::with_capacity(self.n + 1);
            let mut total = 0.0;
            for _ in 0..=self.n {
                let x: f64 = -(1.0 - self.rng.gen::<f64>()).ln();
                e.push(x);
                total += x;
            }
            let u: Vec<f64> = e[..self.n].iter().map(|x| x / total).collect();
            let vacancy = e[self.n] / total;
            if u.iter().all(|&x| x >= self.margin) && vacancy >= self.margin {
                return u;
            }
        }
    }

    pub fn take(&mut self, count: usize) -> Vec<Vec<f64>> {
        (0..count).map(|_| self.sample()).collect()
    }
}

/// Deterministic probes near the boundary of `D`: each vertex, each face
/// center, the packed face `sum u = 1`, and the barycenter, all pushed
/// inside by `offset`.
pub fn boundary_offset_samples(n: usize, offset: f64) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    // near the origin
    out.push(vec![offset; n]);
    // near each vertex u_k = 1
    for k in 0..n {
        let mut u = vec![offset; n];
        u[k] = 1.0 - (n as f64 + 1.0) * offset;
        out.push(u);
    }
    // near each face u_k = 0 with the rest balanced
    for k in 0..n {
        let share = (1.0 - offset) / (n as f64 + 1.0);
        let mut u = vec![share; n];
        u[k] = offset;
        out.push(u);
    }
    // near the packed face, vacancy = offset
    out.push(vec![(1.0 - offset) / n as f64; n]);
    // barycenter of the closed simplex on u and vacancy
    out.push(vec![1.0 / (n as f64 + 1.0); n]);
    out
}

/// Seeded uniform scalar samples of the open interval (lo, hi).
pub fn interval_samples(lo: f64, hi: f64, count: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let t: f64 = rng.gen::<f64>();
            lo + (hi - lo) * t.clamp(1e-12, 1.0 - 1e-12)
        })
        .collect()
}

/// Seeded standard-normal-ish direction vectors (Box-Muller on ChaCha).
pub fn direction_samples(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            (0..dim)
                .map(|_| {
                    let u1: f64 = rng.gen::<f64>().max(1e-16);
                    let u2: f64 = rng.gen::<f64>();
                    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_stay_interior() {
        let mut s = SimplexSampler::new(3, 1e-3, 7);
        for u in s.take(500) {
            let sum: f64 = u.iter().sum();
            assert!(u.iter().all(|&x| x >= 1e-3));
            assert!(sum <= 1.0 - 1e-3);
        }
    }

    #[test]
    fn sampler_is_deterministic() {
        let a = SimplexSampler::new(2, 1e-6, 42).take(10);
        let b = SimplexSampler::new(2, 1e-6, 42).take(10);
        assert_eq!(a, b);
    }

    #[test]
    fn boundary_probes_are_admissible() {
        for u in boundary_offset_samples(2, 1e-6) {
            let sum: f64 = u.iter().sum();
            assert!(u.iter().all(|&x| x > 0.0));
            assert!(sum < 1.0, "sum = {sum}");
        }
    }
}
