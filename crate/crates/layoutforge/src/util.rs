//! Seeded randomness helpers shared by data generation, training and sampling.
//!
//! Every stochastic routine in this crate takes either a `&mut ChaCha12Rng`
//! or a `u64` seed from which it derives one, so runs are reproducible from
//! (config, seed) on a single thread.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type Prng = ChaCha12Rng;

pub fn rng_from_seed(seed: u64) -> Prng {
    ChaCha12Rng::seed_from_u64(seed)
}

/// Derive an independent stream for a named sub-task of a run.
pub fn derive_rng(seed: u64, tag: &str, index: u64) -> Prng {
    ChaCha12Rng::seed_from_u64(stable_hash(&[seed, stable_str_hash(tag), index]))
}

/// FNV-1a over little-endian words. Stable across platforms and runs; used
/// wherever embeddings or streams must be a pure function of identifiers.
pub fn stable_hash(words: &[u64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for w in words {
        for b in w.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

pub fn stable_str_hash(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Standard normal via Box-Muller. `rand_distr` is avoided so the byte
/// stream feeding each draw stays under this crate's control.
pub fn standard_normal(rng: &mut Prng) -> f64 {
    loop {
        let u1: f64 = rng.gen::<f64>();
        let u2: f64 = rng.gen::<f64>();
        if u1 > f64::MIN_POSITIVE {
            return (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        }
    }
}

pub fn normal_vec(rng: &mut Prng, n: usize) -> Vec<f64> {
    (0..n).map(|_| standard_normal(rng)).collect()
}

/// Sample an index from unnormalized non-negative weights.
pub fn sample_categorical(rng: &mut Prng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    debug_assert!(total > 0.0 && total.is_finite(), "bad categorical weights");
    let mut u = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        u -= w;
        if u <= 0.0 {
            return i;
        }
    }
    weights.len() - 1
}

/// A fixed unit vector determined only by (namespace, id, dim).
pub fn fixed_unit_vector(namespace: &str, id: u64, dim: usize) -> Vec<f64> {
    let mut rng =
        ChaCha12Rng::seed_from_u64(stable_hash(&[stable_str_hash(namespace), id, dim as u64]));
    loop {
        let v = normal_vec(&mut rng, dim);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Fisher-Yates shuffle driven by the supplied stream.
pub fn shuffle<T>(rng: &mut Prng, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = rng.gen_range(0..=i);
        items.swap(i, j);
    }
}

/// A uniformly random permutation of `0..n`.
pub fn random_permutation(rng: &mut Prng, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    shuffle(rng, &mut p);
    p
}
