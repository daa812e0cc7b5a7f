//! Deterministic random number generation.
//!
//! Every stochastic operation in the toolkit draws from [`SeededRng`], a
//! fixed-algorithm generator (ChaCha8 keyed via `seed_from_u64`), so a run is
//! reproducible bit for bit from its seed alone. Independent streams (one per
//! training epoch/case, one per phantom) are derived with a SplitMix64 mix of
//! the base seed and the stream coordinates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Seeded generator with a fixed, documented algorithm.
#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

/// SplitMix64 output function; used to mix stream coordinates into a seed.
fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SeededRng {
    /// Generator algorithm identifier. Fixed; changing it changes every
    /// seeded output in the toolkit.
    pub const ALGORITHM: &'static str = "chacha8/seed_from_u64";

    pub fn new(seed: u64) -> Self {
        SeededRng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// The seed this generator was created from.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent generator for a substream, e.g. `&[epoch, case]`.
    /// Deterministic in the base seed and the stream words.
    pub fn derive(base_seed: u64, stream: &[u64]) -> Self {
        let mut s = splitmix64(base_seed);
        for &w in stream {
            s = splitmix64(s ^ w);
        }
        SeededRng::new(s)
    }

    /// Uniform f64 in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    /// Uniform f64 in [lo, hi).
    pub fn range_f64(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform usize in [0, n). Panics if n == 0.
    pub fn range_usize(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }

    /// Bernoulli draw.
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// Standard normal via Box-Muller (one value per pair of uniforms; the
    /// sine branch is discarded to keep the draw count predictable).
    pub fn normal(&mut self) -> f64 {
        let u1 = self.next_f64();
        let u2 = self.next_f64();
        // 1 - u1 is in (0, 1], so the log is finite.
        (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = SeededRng::new(7);
        let mut b = SeededRng::new(7);
        for _ in 0..100 {
            assert_eq!(a.next_f64().to_bits(), b.next_f64().to_bits());
        }
    }

    #[test]
    fn different_seeds_differ() {
        let mut a = SeededRng::new(7);
        let mut b = SeededRng::new(8);
        let same = (0..32).filter(|_| a.next_f64() == b.next_f64()).count();
        assert!(same < 4);
    }

    #[test]
    fn derived_streams_are_independent_of_draw_order() {
        let mut first = SeededRng::derive(11, &[0, 3]);
        // Interleave another stream; the first stream's output is unchanged.
        let mut other = SeededRng::derive(11, &[1, 3]);
        let a0 = first.next_f64();
        let _ = other.next_f64();
        let a1 = first.next_f64();

        let mut replay = SeededRng::derive(11, &[0, 3]);
        assert_eq!(replay.next_f64().to_bits(), a0.to_bits());
        assert_eq!(replay.next_f64().to_bits(), a1.to_bits());
    }

    #[test]
    fn range_usize_covers_all_values() {
        let mut rng = SeededRng::new(3);
        let mut seen = [false; 5];
        for _ in 0..200 {
            seen[rng.range_usize(5)] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn normal_moments_are_sane() {
        let mut rng = SeededRng::new(42);
        let n = 20_000;
        let samples: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.03, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }
}
