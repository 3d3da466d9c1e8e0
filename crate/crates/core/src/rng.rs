//! Deterministic perturbation streams.
//!
//! Every perturbation vector is a pure function of `(seed, stream_offset, d)`.
//! The generator is ChaCha8 keyed by the seed (via `seed_from_u64`), and entry
//! `k` of the stream consumes exactly four 32-bit words starting at word
//! position `4 * (stream_offset + k)`. Each pair of 64-bit draws is mapped to a
//! standard normal with the cosine branch of Box-Muller, evaluated with `libm`
//! so the result does not depend on the platform's math library.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const WORDS_PER_NORMAL: u128 = 4;
const TWO_POW_MINUS_53: f64 = 1.0 / (1u64 << 53) as f64;

/// Seed of one perturbation vector z.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PerturbationSeed {
    pub seed: u64,
    pub stream_offset: u64,
}

impl PerturbationSeed {
    pub const fn new(seed: u64) -> Self {
        Self { seed, stream_offset: 0 }
    }

    pub const fn with_offset(seed: u64, stream_offset: u64) -> Self {
        Self { seed, stream_offset }
    }

    /// Seed of the `draw`-th independent direction for p-SPSA averaging.
    /// Draws occupy disjoint `d`-length segments of the same stream.
    pub fn draw(self, draw: usize, d: usize) -> Self {
        Self {
            seed: self.seed,
            stream_offset: self.stream_offset + (draw as u64) * (d as u64),
        }
    }

    pub fn stream(self) -> NormalStream {
        NormalStream::new(self)
    }
}

impl From<u64> for PerturbationSeed {
    fn from(seed: u64) -> Self {
        Self::new(seed)
    }
}

/// Infinite iterator of standard normal draws for one seed.
#[derive(Clone, Debug)]
pub struct NormalStream {
    rng: ChaCha8Rng,
}

impl NormalStream {
    pub fn new(seed: PerturbationSeed) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.seed);
        rng.set_word_pos(u128::from(seed.stream_offset) * WORDS_PER_NORMAL);
        Self { rng }
    }

    #[inline]
    pub fn next_normal(&mut self) -> f64 {
        // u1 in (0, 1], u2 in [0, 1)
        let u1 = ((self.rng.next_u64() >> 11) + 1) as f64 * TWO_POW_MINUS_53;
        let u2 = (self.rng.next_u64() >> 11) as f64 * TWO_POW_MINUS_53;
        libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(std::f64::consts::TAU * u2)
    }
}

impl Iterator for NormalStream {
    type Item = f64;

    #[inline]
    fn next(&mut self) -> Option<f64> {
        Some(self.next_normal())
    }
}

/// Regenerates the perturbation vector `z ∈ ℝ^d` for `seed`.
pub fn regenerate_z(seed: PerturbationSeed, d: usize) -> Vec<f64> {
    NormalStream::new(seed).take(d).collect()
}

/// Derivation domains for per-step seeds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum SeedDomain {
    Perturbation = 1,
    Batch = 2,
    AnchorBatch = 3,
    PerSample = 4,
    AnchorPerSample = 5,
    Init = 6,
}

#[inline]
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Derives the seed for `(domain, counter)` from a run's master seed.
///
/// `seed = splitmix64(splitmix64(master ^ splitmix64(domain)) ^ counter)`.
/// Trajectory files store only the master seed; every step seed is rebuilt
/// from this scheme.
pub fn derive_seed(master: u64, domain: SeedDomain, counter: u64) -> u64 {
    splitmix64(splitmix64(master ^ splitmix64(domain as u64)) ^ counter)
}

/// Seed for sample `index` within step `step` (per-sample estimators).
pub fn derive_sample_seed(master: u64, domain: SeedDomain, step: u64, index: u64) -> u64 {
    splitmix64(derive_seed(master, domain, step) ^ splitmix64(index))
}

/// A seeded generator for sampling minibatches and problem data.
pub fn chacha(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_vector() {
        let s = PerturbationSeed::new(42);
        let a = regenerate_z(s, 5);
        let b = regenerate_z(s, 5);
        assert_eq!(
            a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn offset_is_a_suffix_of_the_stream() {
        let full = regenerate_z(PerturbationSeed::new(9), 20);
        let tail = regenerate_z(PerturbationSeed::with_offset(9, 7), 13);
        assert_eq!(&full[7..], &tail[..]);
    }

    #[test]
    fn distinct_seeds_are_uncorrelated() {
        let d = 10_000;
        let a = regenerate_z(PerturbationSeed::new(42), d);
        let b = regenerate_z(PerturbationSeed::new(43), d);
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (ma, mb) = (mean(&a), mean(&b));
        let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        let corr = cov / (va * vb).sqrt();
        assert!(corr.abs() < 0.1, "corr = {corr}");
    }

    #[test]
    fn moments_match_standard_normal() {
        let z = regenerate_z(PerturbationSeed::new(7), 100_000);
        let n = z.len() as f64;
        let mean = z.iter().sum::<f64>() / n;
        let sd = (z.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!(mean.abs() < 0.02, "mean = {mean}");
        assert!((sd - 1.0).abs() < 0.02, "sd = {sd}");
    }

    #[test]
    fn derived_seeds_differ_by_domain_and_counter() {
        let a = derive_seed(1, SeedDomain::Perturbation, 0);
        let b = derive_seed(1, SeedDomain::Batch, 0);
        let c = derive_seed(1, SeedDomain::Perturbation, 1);
        let d = derive_seed(2, SeedDomain::Perturbation, 0);
        assert!(a != b && a != c && a != d && b != c);
        assert_eq!(a, derive_seed(1, SeedDomain::Perturbation, 0));
    }
}
