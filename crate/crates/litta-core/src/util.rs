//! Numeric and seeding primitives shared across the crate.

use rand_chacha::rand_core::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// log(exp(a) + exp(b)) with explicit handling of the -inf sentinel.
pub fn log_sum_exp2(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

pub fn log_sum_exp3(a: f64, b: f64, c: f64) -> f64 {
    log_sum_exp2(log_sum_exp2(a, b), c)
}

/// Numerically stable log-softmax of a score row.
pub fn log_softmax(row: &[f64], out: &mut Vec<f64>) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_z = row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln() + max;
    out.clear();
    out.extend(row.iter().map(|&x| x - log_z));
}

/// Numerically stable softmax of a score row.
pub fn softmax(row: &[f64], out: &mut Vec<f64>) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    out.clear();
    out.extend(row.iter().map(|&x| (x - max).exp()));
    let z: f64 = out.iter().sum();
    for p in out.iter_mut() {
        *p /= z;
    }
}

/// FNV-1a over bytes; the stable seed-mixing primitive used everywhere a
/// per-item stream must be derived from (seed, name).
pub fn stable_hash(parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for &b in *part {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        // separator so ("ab","c") != ("a","bc")
        h ^= 0xff;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derives the per-item seed for `name` from a global seed.
pub fn derive_seed(global: u64, name: &str) -> u64 {
    stable_hash(&[&global.to_le_bytes(), name.as_bytes()])
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform draw in [0, 1) with 53 bits of precision.
pub fn uniform_f64(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / ((1u64 << 53) as f64))
}

/// Uniform integer in [lo, hi] inclusive.
pub fn uniform_usize(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> usize {
    debug_assert!(lo <= hi);
    let span = (hi - lo + 1) as u64;
    lo + (rng.next_u64() % span) as usize
}

/// Deterministic standard-normal source (Box-Muller over the ChaCha stream).
pub struct GaussianSource {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl GaussianSource {
    pub fn from_seed(seed: u64) -> Self {
        GaussianSource {
            rng: rng_from_seed(seed),
            spare: None,
        }
    }

    pub fn from_rng(rng: ChaCha8Rng) -> Self {
        GaussianSource { rng, spare: None }
    }

    pub fn sample(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // u1 in (0, 1] so the log is finite
        let u1 = ((self.rng.next_u64() >> 11) + 1) as f64 * (1.0 / ((1u64 << 53) as f64));
        let u2 = uniform_f64(&mut self.rng);
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }
}
