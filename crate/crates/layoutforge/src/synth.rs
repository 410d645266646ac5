//! Two-stage sampling (semantic graph prior, then spatial decoder) and the
//! zero-shot task harnesses built on mask filling.
//!
//! Known attributes are handled by clamping: under the absorbing kernel a
//! clean value is a legal intermediate state, so known slots are simply
//! held at their values while the sampler never queries posteriors for
//! them. Unknown categorical slots start at MASK (uniform for the uniform
//! kernel) and denoise normally.

use thiserror::Error;

use crate::core::{
    argmax_row, decode_argmax, encode_one_hot, Bounds, CoreError, Layout, OneHotGraphState, Rect,
    SemanticGraph, Vocabularies,
};
use crate::dcat::{reverse_step, softmax, KernelVariant, MaskedTransitionSchedule};
use crate::dgauss::{ddpm_step, DgaussError, GaussianSchedule, SpatialCodec};
use crate::mat::Mat;
use crate::model::{ConditionEmbedding, GraphTransformer};
use crate::util::{standard_normal, Prng};
use rand::Rng;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Gauss(#[from] DgaussError),
    #[error("inconsistent partial: known edge ({i},{j}) references an unknown node")]
    InconsistentPartial { i: usize, j: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZeroShotTask {
    Completion,
    Rearrangement,
    Stylization,
    Unconditional,
}

impl ZeroShotTask {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "complete" | "completion" => Some(Self::Completion),
            "rearrange" | "rearrangement" => Some(Self::Rearrangement),
            "stylize" | "stylization" => Some(Self::Stylization),
            "uncond" | "unconditional" => Some(Self::Unconditional),
            _ => None,
        }
    }
}

/// Known attributes per padded slot; `None` means "sample it".
#[derive(Debug, Clone, Default)]
pub struct PartialGraph {
    pub categories: Vec<Option<usize>>,
    pub features: Vec<Vec<Option<usize>>>,
    pub edges: Vec<Option<usize>>,
    /// Normalized spatial rows clamped at every decoder step.
    pub spatial: Vec<Option<Vec<f64>>>,
}

impl PartialGraph {
    pub fn unknown(vocab: &Vocabularies) -> Self {
        PartialGraph {
            categories: vec![None; vocab.n_max],
            features: vec![vec![None; vocab.n_f]; vocab.n_max],
            edges: vec![None; vocab.tri_count()],
            spatial: vec![None; vocab.n_max],
        }
    }

    fn validate(&self, vocab: &Vocabularies) -> Result<(), SynthError> {
        for (idx, (i, j)) in crate::core::tri_pairs(vocab.n_max).into_iter().enumerate() {
            if self.edges[idx].is_some()
                && (self.categories[i].is_none() || self.categories[j].is_none())
            {
                return Err(SynthError::InconsistentPartial { i, j });
            }
        }
        Ok(())
    }
}

fn all_mask_state(vocab: &Vocabularies, t: usize) -> OneHotGraphState {
    let point = |rows: usize, width: usize, idx: usize| {
        let mut m = Mat::zeros(rows, width);
        for i in 0..rows {
            m.set(i, idx, 1.0);
        }
        m
    };
    OneHotGraphState {
        t,
        c_rows: point(vocab.n_max, vocab.onehot_c(), vocab.mask_c()),
        f_rows: point(vocab.n_max * vocab.n_f, vocab.onehot_f(), vocab.mask_f()),
        e_rows: point(vocab.tri_count(), vocab.onehot_e(), vocab.mask_e()),
    }
}

fn uniform_random_state(vocab: &Vocabularies, t: usize, rng: &mut Prng) -> OneHotGraphState {
    let draw = |rows: usize, width: usize, clean: usize, rng: &mut Prng| {
        let mut m = Mat::zeros(rows, width);
        for i in 0..rows {
            m.set(i, rng.gen_range(0..clean), 1.0);
        }
        m
    };
    OneHotGraphState {
        t,
        c_rows: draw(vocab.n_max, vocab.onehot_c(), vocab.k_c + 1, rng),
        f_rows: draw(vocab.n_max * vocab.n_f, vocab.onehot_f(), vocab.k_f + 1, rng),
        e_rows: draw(vocab.tri_count(), vocab.onehot_e(), vocab.k_e + 1, rng),
    }
}

fn set_point(m: &mut Mat, row: usize, idx: usize) {
    m.row_mut(row).fill(0.0);
    m.set(row, idx, 1.0);
}

fn clamp_known(state: &mut OneHotGraphState, partial: &PartialGraph, vocab: &Vocabularies) {
    for (i, c) in partial.categories.iter().enumerate() {
        if let Some(c) = c {
            set_point(&mut state.c_rows, i, *c);
        }
    }
    for (i, feats) in partial.features.iter().enumerate() {
        for (s, f) in feats.iter().enumerate() {
            if let Some(f) = f {
                set_point(&mut state.f_rows, i * vocab.n_f + s, *f);
            }
        }
    }
    for (idx, e) in partial.edges.iter().enumerate() {
        if let Some(e) = e {
            set_point(&mut state.e_rows, idx, *e);
        }
    }
}

/// Mix conditional and unconditional logits: u + w (c - u). The zero
/// weight falls back to the conditional pass alone.
fn guide(cond_l: Mat, uncond_l: &Mat, w: f64) -> Mat {
    let mut out = cond_l;
    for (o, &u) in out.data.iter_mut().zip(uncond_l.data.iter()) {
        *o = u + w * (*o - u);
    }
    out
}

/// One reverse sweep of the categorical chain with optional clamping and
/// classifier-free guidance (condition dropout during training makes the
/// unconditional branch in-distribution).
fn reverse_chain(
    prior: &GraphTransformer,
    cond: &ConditionEmbedding,
    sched: &MaskedTransitionSchedule,
    vocab: &Vocabularies,
    partial: &PartialGraph,
    guidance: f64,
    rng: &mut Prng,
) -> Result<SemanticGraph, CoreError> {
    let t_max = sched.t_count;
    let mut state = match sched.kernel_variant {
        KernelVariant::Uniform => uniform_random_state(vocab, t_max, rng),
        KernelVariant::GaussianOnehot => {
            return gaussian_onehot_chain(prior, cond, sched, vocab, partial, rng);
        }
        _ => all_mask_state(vocab, t_max),
    };
    clamp_known(&mut state, partial, vocab);
    let guided = guidance > 0.0 && guidance != 1.0 && !cond.is_zero;
    let zero_cond = ConditionEmbedding::zero(cond.tokens.cols);

    for t in (1..=t_max).rev() {
        let (c_logits, f_logits, e_logits) = if guided {
            let (c, f, e) = prior.prior_forward(&state, t, t_max, cond);
            let (cu, fu, eu) = prior.prior_forward(&state, t, t_max, &zero_cond);
            (guide(c, &cu, guidance), guide(f, &fu, guidance), guide(e, &eu, guidance))
        } else {
            prior.prior_forward(&state, t, t_max, cond)
        };
        let mut next = state.clone();
        next.t = t - 1;
        for i in 0..vocab.n_max {
            if partial.categories[i].is_none() {
                let x_t = argmax_row(state.c_rows.row(i));
                let x = reverse_step(c_logits.row(i), x_t, t, &sched.c, rng);
                set_point(&mut next.c_rows, i, x);
            }
            for s in 0..vocab.n_f {
                if partial.features[i][s].is_none() {
                    let row = i * vocab.n_f + s;
                    let x_t = argmax_row(state.f_rows.row(row));
                    let x = reverse_step(f_logits.row(row), x_t, t, &sched.f, rng);
                    set_point(&mut next.f_rows, row, x);
                }
            }
        }
        for idx in 0..vocab.tri_count() {
            if partial.edges[idx].is_none() {
                let x_t = argmax_row(state.e_rows.row(idx));
                let x = reverse_step(e_logits.row(idx), x_t, t, &sched.e, rng);
                set_point(&mut next.e_rows, idx, x);
            }
        }
        state = next;
    }
    decode_argmax(&state, vocab)
}

/// Ablation path: one-hot rows under the Gaussian kernel, denoised with
/// the clean-state posterior mean and decoded by argmax at the end.
fn gaussian_onehot_chain(
    prior: &GraphTransformer,
    cond: &ConditionEmbedding,
    sched: &MaskedTransitionSchedule,
    vocab: &Vocabularies,
    partial: &PartialGraph,
    rng: &mut Prng,
) -> Result<SemanticGraph, CoreError> {
    let gs = sched.gaussian.as_ref().expect("gaussian companion schedule");
    let t_max = sched.t_count;
    let noise = |rows: usize, cols: usize, rng: &mut Prng| {
        let mut m = Mat::zeros(rows, cols);
        for v in &mut m.data {
            *v = standard_normal(rng);
        }
        m
    };
    let mut state = OneHotGraphState {
        t: t_max,
        c_rows: noise(vocab.n_max, vocab.onehot_c(), rng),
        f_rows: noise(vocab.n_max * vocab.n_f, vocab.onehot_f(), rng),
        e_rows: noise(vocab.tri_count(), vocab.onehot_e(), rng),
    };
    clamp_known(&mut state, partial, vocab);

    for t in (1..=t_max).rev() {
        let (c_logits, f_logits, e_logits) = prior.prior_forward(&state, t, t_max, cond);
        // x0-parameterized posterior mean over the one-hot coordinates
        let abar = gs.abar[t];
        let abar_prev = gs.abar[t - 1];
        let beta = gs.betas[t];
        let coef_x0 = abar_prev.sqrt() * beta / (1.0 - abar);
        let coef_xt = (1.0 - beta).sqrt() * (1.0 - abar_prev) / (1.0 - abar);
        let sigma = gs.sigma(t);
        let step = |rows_t: &mut Mat, logits: &Mat, clean: usize, rng: &mut Prng| {
            for i in 0..rows_t.rows {
                let probs = softmax(&logits.row(i)[..clean]);
                for j in 0..rows_t.cols {
                    let x0_hat = if j < clean { probs[j] } else { 0.0 };
                    let mu = coef_x0 * x0_hat + coef_xt * rows_t.at(i, j);
                    let z = if t > 1 { standard_normal(rng) } else { 0.0 };
                    rows_t.set(i, j, mu + sigma * z);
                }
            }
        };
        step(&mut state.c_rows, &c_logits, vocab.k_c + 1, rng);
        step(&mut state.f_rows, &f_logits, vocab.k_f + 1, rng);
        step(&mut state.e_rows, &e_logits, vocab.k_e + 1, rng);
        state.t = t - 1;
        clamp_known(&mut state, partial, vocab);
    }
    decode_argmax(&state, vocab)
}

/// Normalized protected-region channel for the decoder conditioning.
pub fn region4(region: Option<&Rect>, bounds: &Bounds) -> Option<[f64; 4]> {
    region.map(|r| [r.x / bounds.x, r.y / bounds.y, r.w / bounds.x, r.h / bounds.y])
}

/// Sample a semantic graph from the prior, starting from the all-MASK
/// state. Heads exclude MASK and the t = 1 posterior is a point mass on a
/// clean state, so the result is MASK-free for absorbing kernels.
pub fn sample_prior(
    cond: &ConditionEmbedding,
    prior: &GraphTransformer,
    sched: &MaskedTransitionSchedule,
    vocab: &Vocabularies,
    rng: &mut Prng,
) -> Result<SemanticGraph, CoreError> {
    reverse_chain(prior, cond, sched, vocab, &PartialGraph::unknown(vocab), 0.0, rng)
}

/// As [`sample_prior`] with classifier-free guidance weight `guidance`
/// (1.0 or 0.0 disables it).
pub fn sample_prior_guided(
    cond: &ConditionEmbedding,
    prior: &GraphTransformer,
    sched: &MaskedTransitionSchedule,
    vocab: &Vocabularies,
    guidance: f64,
    rng: &mut Prng,
) -> Result<SemanticGraph, CoreError> {
    reverse_chain(prior, cond, sched, vocab, &PartialGraph::unknown(vocab), guidance, rng)
}

/// Decode spatial placements for a MASK-free graph.
pub fn sample_layout(
    g: &SemanticGraph,
    decoder: &GraphTransformer,
    sched: &GaussianSchedule,
    vocab: &Vocabularies,
    codec: &SpatialCodec,
    product_region: Option<Rect>,
    rng: &mut Prng,
) -> Result<Layout, SynthError> {
    sample_layout_clamped(g, decoder, sched, vocab, codec, product_region, &[], rng)
}

/// As [`sample_layout`], holding the given (slot, normalized row) pairs
/// fixed at every step.
#[allow(clippy::too_many_arguments)]
pub fn sample_layout_clamped(
    g: &SemanticGraph,
    decoder: &GraphTransformer,
    sched: &GaussianSchedule,
    vocab: &Vocabularies,
    codec: &SpatialCodec,
    product_region: Option<Rect>,
    clamps: &[(usize, Vec<f64>)],
    rng: &mut Prng,
) -> Result<Layout, SynthError> {
    let state = encode_one_hot(g, vocab)?;
    let region = region4(product_region.as_ref(), &codec.bounds);
    let t_max = sched.t_count;
    let mut l = Mat::zeros(vocab.n_max, vocab.d_l());
    for v in &mut l.data {
        *v = standard_normal(rng);
    }
    let apply_clamps = |l: &mut Mat| {
        for (slot, row) in clamps {
            l.row_mut(*slot).copy_from_slice(row);
        }
    };
    apply_clamps(&mut l);
    for t in (1..=t_max).rev() {
        let eps_hat = decoder.decoder_forward_state(&l, t, t_max, &state, region);
        l = ddpm_step(&l, &eps_hat, t, sched, rng);
        apply_clamps(&mut l);
    }
    Ok(codec.matrix_to_layout(&l, g, product_region)?)
}

/// Instruction to layout: the full two-stage pipeline.
#[allow(clippy::too_many_arguments)]
pub fn generate(
    cond: &ConditionEmbedding,
    prior: &GraphTransformer,
    decoder: &GraphTransformer,
    prior_sched: &MaskedTransitionSchedule,
    dec_sched: &GaussianSchedule,
    vocab: &Vocabularies,
    codec: &SpatialCodec,
    product_region: Option<Rect>,
    rng: &mut Prng,
) -> Result<Layout, SynthError> {
    generate_guided(
        cond,
        prior,
        decoder,
        prior_sched,
        dec_sched,
        vocab,
        codec,
        product_region,
        0.0,
        rng,
    )
}

#[allow(clippy::too_many_arguments)]
pub fn generate_guided(
    cond: &ConditionEmbedding,
    prior: &GraphTransformer,
    decoder: &GraphTransformer,
    prior_sched: &MaskedTransitionSchedule,
    dec_sched: &GaussianSchedule,
    vocab: &Vocabularies,
    codec: &SpatialCodec,
    product_region: Option<Rect>,
    guidance: f64,
    rng: &mut Prng,
) -> Result<Layout, SynthError> {
    let g = sample_prior_guided(cond, prior, prior_sched, vocab, guidance, rng)?;
    sample_layout(&g, decoder, dec_sched, vocab, codec, product_region, rng)
}

/// Zero-shot task execution over a partial specification.
#[allow(clippy::too_many_arguments)]
pub fn zero_shot(
    task: ZeroShotTask,
    partial: &PartialGraph,
    cond: &ConditionEmbedding,
    prior: &GraphTransformer,
    decoder: &GraphTransformer,
    prior_sched: &MaskedTransitionSchedule,
    dec_sched: &GaussianSchedule,
    vocab: &Vocabularies,
    codec: &SpatialCodec,
    product_region: Option<Rect>,
    rng: &mut Prng,
) -> Result<Layout, SynthError> {
    zero_shot_guided(
        task,
        partial,
        cond,
        prior,
        decoder,
        prior_sched,
        dec_sched,
        vocab,
        codec,
        product_region,
        0.0,
        rng,
    )
}

#[allow(clippy::too_many_arguments)]
pub fn zero_shot_guided(
    task: ZeroShotTask,
    partial: &PartialGraph,
    cond: &ConditionEmbedding,
    prior: &GraphTransformer,
    decoder: &GraphTransformer,
    prior_sched: &MaskedTransitionSchedule,
    dec_sched: &GaussianSchedule,
    vocab: &Vocabularies,
    codec: &SpatialCodec,
    product_region: Option<Rect>,
    guidance: f64,
    rng: &mut Prng,
) -> Result<Layout, SynthError> {
    if task == ZeroShotTask::Rearrangement {
        partial.validate(vocab)?;
    }
    let effective_cond;
    let cond = match task {
        ZeroShotTask::Unconditional => {
            effective_cond = ConditionEmbedding::zero(cond.tokens.cols);
            &effective_cond
        }
        _ => cond,
    };
    let g = reverse_chain(prior, cond, prior_sched, vocab, partial, guidance, rng)?;
    let clamps: Vec<(usize, Vec<f64>)> = partial
        .spatial
        .iter()
        .enumerate()
        .filter_map(|(i, s)| s.as_ref().map(|row| (i, row.clone())))
        .collect();
    sample_layout_clamped(&g, decoder, dec_sched, vocab, codec, product_region, &clamps, rng)
}

/// Build the partial specification for each task from a known layout.
pub fn task_partial(
    task: ZeroShotTask,
    known: Option<&Layout>,
    vocab: &Vocabularies,
    codec: &SpatialCodec,
) -> Result<PartialGraph, SynthError> {
    let mut partial = PartialGraph::unknown(vocab);
    let Some(layout) = known else {
        return Ok(partial);
    };
    let g = crate::core::graph_from_layout(layout, vocab)?;
    let n = g.n;
    match task {
        ZeroShotTask::Unconditional => {}
        ZeroShotTask::Completion => {
            // known objects fixed in C/F/E and space; the rest sampled
            for i in 0..n {
                partial.categories[i] = Some(g.categories[i]);
                for s in 0..vocab.n_f {
                    partial.features[i][s] = Some(g.features[i][s]);
                }
                partial.spatial[i] = Some(codec.object_to_row(&layout.objects[i]));
            }
            for (idx, (i, j)) in crate::core::tri_pairs(vocab.n_max).into_iter().enumerate() {
                if j < n {
                    partial.edges[idx] = Some(g.edges[idx]);
                }
                let _ = i;
            }
        }
        ZeroShotTask::Rearrangement => {
            // categories, features and relations fixed; space resampled
            for i in 0..vocab.n_max {
                partial.categories[i] = Some(g.categories[i]);
                for s in 0..vocab.n_f {
                    partial.features[i][s] = Some(g.features[i][s]);
                }
            }
            for (idx, _) in crate::core::tri_pairs(vocab.n_max).into_iter().enumerate() {
                partial.edges[idx] = Some(g.edges[idx]);
            }
        }
        ZeroShotTask::Stylization => {
            // categories, relations and space fixed; features resampled
            for i in 0..vocab.n_max {
                partial.categories[i] = Some(g.categories[i]);
            }
            for i in 0..n {
                partial.spatial[i] = Some(codec.object_to_row(&layout.objects[i]));
            }
            for (idx, _) in crate::core::tri_pairs(vocab.n_max).into_iter().enumerate() {
                partial.edges[idx] = Some(g.edges[idx]);
            }
        }
    }
    Ok(partial)
}
