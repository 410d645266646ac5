//! Deterministic condition encoding and the fixed positional/timestep
//! embeddings.
//!
//! Instructions are embedded without any pretrained encoder: every
//! category, relation and style id owns a fixed random unit vector, and a
//! fixed random projection maps the concatenated parts of each triplet (or
//! style tag) to one condition token. The same tables are pure functions of
//! the identifiers, so instruction embeddings never depend on run seeds.

use crate::core::{Instruction, Vocabularies};
use crate::mat::Mat;
use crate::util::{fixed_unit_vector, rng_from_seed, stable_str_hash, standard_normal};

pub const COND_PART_DIM: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionEmbedding {
    /// One row per instruction triplet and per style tag.
    pub tokens: Mat,
    /// Single zero token: the unconditional mode.
    pub is_zero: bool,
}

impl ConditionEmbedding {
    pub fn zero(d_cond: usize) -> Self {
        ConditionEmbedding { tokens: Mat::zeros(1, d_cond), is_zero: true }
    }
}

fn fixed_projection(tag: &str, rows: usize, cols: usize) -> Mat {
    let mut rng = rng_from_seed(stable_str_hash(tag));
    let scale = 1.0 / (rows as f64).sqrt();
    let data = (0..rows * cols).map(|_| standard_normal(&mut rng) * scale).collect();
    Mat::from_vec(rows, cols, data)
}

fn part(namespace: &str, id: usize) -> Vec<f64> {
    fixed_unit_vector(namespace, id as u64, COND_PART_DIM)
}

/// Embed an instruction as one token per triplet and per style tag. An
/// empty instruction becomes the single zero token.
pub fn condition_encode(instr: &Instruction, _vocab: &Vocabularies, d_cond: usize) -> ConditionEmbedding {
    if instr.is_empty() {
        return ConditionEmbedding::zero(d_cond);
    }
    let trip_proj = fixed_projection("cond-proj-triplet", 4 * COND_PART_DIM, d_cond);
    let style_proj = fixed_projection("cond-proj-style", 4 * COND_PART_DIM, d_cond);
    let mut rows = Vec::new();
    for t in &instr.triplets {
        let mut parts = Vec::with_capacity(4 * COND_PART_DIM);
        parts.extend(part("cond-cat", t.subject));
        parts.extend(part("cond-rel", t.relation));
        parts.extend(part("cond-cat", t.object));
        parts.extend(std::iter::repeat(0.0).take(COND_PART_DIM));
        let m = Mat::from_vec(1, 4 * COND_PART_DIM, parts);
        rows.push(m.matmul(&trip_proj).data);
    }
    for &(cat, style) in &instr.style_tags {
        let mut parts = Vec::with_capacity(4 * COND_PART_DIM);
        parts.extend(part("cond-cat", cat));
        parts.extend(part("cond-style", style));
        parts.extend(std::iter::repeat(0.0).take(2 * COND_PART_DIM));
        let m = Mat::from_vec(1, 4 * COND_PART_DIM, parts);
        rows.push(m.matmul(&style_proj).data);
    }
    ConditionEmbedding { tokens: Mat::from_rows(&rows), is_zero: false }
}

/// Fixed sinusoidal encoding per node slot, added after token embedding so
/// the network is deliberately not permutation-invariant.
pub fn positional_encoding(n: usize, d: usize) -> Mat {
    let mut m = Mat::zeros(n, d);
    for pos in 0..n {
        for i in 0..d / 2 {
            let freq = 1.0 / 10000f64.powf(2.0 * i as f64 / d as f64);
            m.set(pos, 2 * i, (pos as f64 * freq).sin());
            m.set(pos, 2 * i + 1, (pos as f64 * freq).cos());
        }
    }
    m
}

/// Sinusoidal base for the diffusion timestep. The input is normalized
/// progress t/T so one trained network can be sampled at a different step
/// count.
pub fn timestep_basis(t_norm: f64, d: usize) -> Mat {
    let mut m = Mat::zeros(1, d);
    let pos = t_norm * 1000.0;
    for i in 0..d / 2 {
        let freq = 1.0 / 10000f64.powf(2.0 * i as f64 / d as f64);
        m.set(0, 2 * i, (pos * freq).sin());
        m.set(0, 2 * i + 1, (pos * freq).cos());
    }
    m
}
