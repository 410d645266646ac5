//! The shared graph-transformer denoiser.
//!
//! Both networks run the same trunk: node tokens from category/feature
//! embeddings (plus noised spatial rows for the decoder variant), directed
//! edge states from the stored upper-triangle labels, and a stack of blocks
//! of graph attention, an edge update, optional cross-attention to the
//! condition tokens (prior only), and an MLP. Every sublayer is wrapped in
//! AdaLN driven by the timestep embedding. Edge features modulate the
//! attention logits per head: a_ij * (1 + s(e_ij)) + b(e_ij) before
//! softmax. Nothing is masked: EMPTY is a modeled state.

use serde::{Deserialize, Serialize};

use crate::core::{tri_pairs, OneHotGraphState, SemanticGraph, Vocabularies};
use crate::mat::Mat;
use crate::model::embed::{positional_encoding, timestep_basis, ConditionEmbedding};
use crate::nn::params::{gaussian_init, xavier, BoundParams, ParamSet};
use crate::nn::{Tape, Var};
use crate::util::{rng_from_seed, Prng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetVariant {
    Prior,
    Decoder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphTransformerConfig {
    pub variant: NetVariant,
    pub depth: usize,
    pub d_model: usize,
    pub heads: usize,
    pub d_edge: usize,
    pub d_cond: usize,
    pub n_max: usize,
    pub k_c: usize,
    pub k_f: usize,
    pub k_e: usize,
    pub n_f: usize,
    pub d_l: usize,
    pub seed: u64,
}

impl GraphTransformerConfig {
    pub fn desk_default(variant: NetVariant, vocab: &Vocabularies, seed: u64) -> Self {
        GraphTransformerConfig {
            variant,
            depth: 4,
            d_model: 128,
            heads: 4,
            d_edge: 32,
            d_cond: 64,
            n_max: vocab.n_max,
            k_c: vocab.k_c,
            k_f: vocab.k_f,
            k_e: vocab.k_e,
            n_f: vocab.n_f,
            d_l: vocab.d_l(),
            seed,
        }
    }

    pub fn validate(&self) {
        assert!(self.d_model % self.heads == 0, "d_model must divide into heads");
        assert!(self.d_model % 2 == 0 && self.depth >= 1);
    }

    fn tri(&self) -> usize {
        self.n_max * (self.n_max - 1) / 2
    }
}

/// Precomputed index maps for one graph size.
#[derive(Debug, Clone)]
struct Topology {
    /// Ordered-pair row per attention cell (row-major i, j), with self
    /// pairs pointing at the appended self-edge row.
    film_index: Vec<usize>,
    /// Source/target node of each directed edge row.
    src_idx: Vec<usize>,
    dst_idx: Vec<usize>,
    /// Node-major row i*n_f + s of the feature logits comes from
    /// slot-major row s*n + i.
    fmajor_gather: Vec<usize>,
    /// Per feature slot: the node-major input rows for that slot.
    fslot_rows: Vec<Vec<usize>>,
    /// Rows 0..tri of the directed edge state (the stored triangle).
    tri_rows: Vec<usize>,
}

impl Topology {
    fn new(cfg: &GraphTransformerConfig) -> Self {
        let n = cfg.n_max;
        let tri = cfg.tri();
        let pairs = tri_pairs(n);
        let mut directed = vec![0usize; n * n];
        for (k, &(i, j)) in pairs.iter().enumerate() {
            directed[i * n + j] = k;
            directed[j * n + i] = tri + k;
        }
        let mut film_index = vec![0usize; n * n];
        for i in 0..n {
            for j in 0..n {
                film_index[i * n + j] = if i == j { 2 * tri } else { directed[i * n + j] };
            }
        }
        let mut src_idx = vec![0usize; 2 * tri];
        let mut dst_idx = vec![0usize; 2 * tri];
        for (k, &(i, j)) in pairs.iter().enumerate() {
            src_idx[k] = i;
            dst_idx[k] = j;
            src_idx[tri + k] = j;
            dst_idx[tri + k] = i;
        }
        let mut fmajor_gather = vec![0usize; n * cfg.n_f];
        for i in 0..n {
            for s in 0..cfg.n_f {
                fmajor_gather[i * cfg.n_f + s] = s * n + i;
            }
        }
        let fslot_rows = (0..cfg.n_f)
            .map(|s| (0..n).map(|i| i * cfg.n_f + s).collect())
            .collect();
        Topology {
            film_index,
            src_idx,
            dst_idx,
            fmajor_gather,
            fslot_rows,
            tri_rows: (0..tri).collect(),
        }
    }
}

pub struct GraphTransformer {
    pub cfg: GraphTransformerConfig,
    pub params: ParamSet,
    topo: Topology,
    pub(crate) pe: Mat,
}

/// Clean-graph logits; heads never include a MASK class.
pub struct PriorLogits {
    /// [n_max, k_c + 1]
    pub c: Var,
    /// Node-major [n_max * n_f, k_f + 1]
    pub f: Var,
    /// [tri, k_e + 1]
    pub e: Var,
}

fn init_params(cfg: &GraphTransformerConfig, rng: &mut Prng) -> ParamSet {
    let d = cfg.d_model;
    let de = cfg.d_edge;
    let mut p = ParamSet::new();
    p.insert("embed.cat", gaussian_init(rng, cfg.k_c + 2, d, 0.02));
    for s in 0..cfg.n_f {
        p.insert(&format!("embed.feat{s}"), gaussian_init(rng, cfg.k_f + 2, d, 0.02));
    }
    p.insert("embed.edge_fwd", gaussian_init(rng, cfg.k_e + 2, de, 0.02));
    p.insert("embed.edge_bwd", gaussian_init(rng, cfg.k_e + 2, de, 0.02));
    p.insert("embed.self_edge", gaussian_init(rng, 1, de, 0.02));
    if cfg.variant == NetVariant::Decoder {
        p.insert("embed.spatial", xavier(rng, cfg.d_l, d));
        p.insert("embed.region", xavier(rng, 4, d));
    }
    p.insert("tmlp.w1", xavier(rng, d, d));
    p.insert("tmlp.b1", Mat::zeros(1, d));
    p.insert("tmlp.w2", xavier(rng, d, d));
    p.insert("tmlp.b2", Mat::zeros(1, d));
    for b in 0..cfg.depth {
        // AdaLN projections start at zero so modulation begins as identity
        p.insert(&format!("blk{b}.ada_attn.w"), Mat::zeros(d, 2 * d));
        p.insert(&format!("blk{b}.ada_attn.b"), Mat::zeros(1, 2 * d));
        p.insert(&format!("blk{b}.attn.w_q"), xavier(rng, d, d));
        p.insert(&format!("blk{b}.attn.w_k"), xavier(rng, d, d));
        p.insert(&format!("blk{b}.attn.w_v"), xavier(rng, d, d));
        p.insert(&format!("blk{b}.attn.w_o"), xavier(rng, d, d));
        p.insert(&format!("blk{b}.film.w"), Mat::zeros(de, 2 * cfg.heads));
        p.insert(&format!("blk{b}.film.b"), Mat::zeros(1, 2 * cfg.heads));
        p.insert(&format!("blk{b}.ada_edge.w"), Mat::zeros(d, 2 * de));
        p.insert(&format!("blk{b}.ada_edge.b"), Mat::zeros(1, 2 * de));
        p.insert(&format!("blk{b}.edge.w1"), xavier(rng, 2 * d + de, 2 * de));
        p.insert(&format!("blk{b}.edge.b1"), Mat::zeros(1, 2 * de));
        p.insert(&format!("blk{b}.edge.w2"), xavier(rng, 2 * de, de));
        p.insert(&format!("blk{b}.edge.b2"), Mat::zeros(1, de));
        if cfg.variant == NetVariant::Prior {
            p.insert(&format!("blk{b}.ada_cross.w"), Mat::zeros(d, 2 * d));
            p.insert(&format!("blk{b}.ada_cross.b"), Mat::zeros(1, 2 * d));
            p.insert(&format!("blk{b}.cross.w_q"), xavier(rng, d, d));
            p.insert(&format!("blk{b}.cross.w_k"), xavier(rng, cfg.d_cond, d));
            p.insert(&format!("blk{b}.cross.w_v"), xavier(rng, cfg.d_cond, d));
            p.insert(&format!("blk{b}.cross.w_o"), xavier(rng, d, d));
        }
        p.insert(&format!("blk{b}.ada_mlp.w"), Mat::zeros(d, 2 * d));
        p.insert(&format!("blk{b}.ada_mlp.b"), Mat::zeros(1, 2 * d));
        p.insert(&format!("blk{b}.mlp.w1"), xavier(rng, d, 4 * d));
        p.insert(&format!("blk{b}.mlp.b1"), Mat::zeros(1, 4 * d));
        p.insert(&format!("blk{b}.mlp.w2"), xavier(rng, 4 * d, d));
        p.insert(&format!("blk{b}.mlp.b2"), Mat::zeros(1, d));
    }
    match cfg.variant {
        NetVariant::Prior => {
            p.insert("head.c.w", gaussian_init(rng, d, cfg.k_c + 1, 0.02));
            p.insert("head.c.b", Mat::zeros(1, cfg.k_c + 1));
            for s in 0..cfg.n_f {
                p.insert(&format!("head.f{s}.w"), gaussian_init(rng, d, cfg.k_f + 1, 0.02));
                p.insert(&format!("head.f{s}.b"), Mat::zeros(1, cfg.k_f + 1));
            }
            p.insert("head.e.w", gaussian_init(rng, de, cfg.k_e + 1, 0.02));
            p.insert("head.e.b", Mat::zeros(1, cfg.k_e + 1));
        }
        NetVariant::Decoder => {
            p.insert("head.eps.w", gaussian_init(rng, d, cfg.d_l, 0.02));
            p.insert("head.eps.b", Mat::zeros(1, cfg.d_l));
        }
    }
    p
}

/// LayerNorm followed by the timestep-conditioned scale and shift.
fn ada_ln(tape: &mut Tape, bp: &BoundParams, prefix: &str, x: Var, t_emb: Var, width: usize) -> Var {
    let proj = tape.matmul(t_emb, bp.get(&format!("{prefix}.w")));
    let proj = tape.add_row(proj, bp.get(&format!("{prefix}.b")));
    let scale = tape.slice_cols(proj, 0, width);
    let shift = tape.slice_cols(proj, width, width);
    let ones = tape.leaf(Mat::from_vec(1, width, vec![1.0; width]));
    let scale1 = tape.add(scale, ones);
    let normed = tape.layer_norm_rows(x);
    let scaled = tape.mul_row(normed, scale1);
    tape.add_row(scaled, shift)
}

fn mlp2(tape: &mut Tape, bp: &BoundParams, w1: &str, b1: &str, w2: &str, b2: &str, x: Var) -> Var {
    let h = tape.matmul(x, bp.get(w1));
    let h = tape.add_row(h, bp.get(b1));
    let h = tape.silu(h);
    let h = tape.matmul(h, bp.get(w2));
    tape.add_row(h, bp.get(b2))
}

impl GraphTransformer {
    pub fn new(cfg: GraphTransformerConfig) -> Self {
        cfg.validate();
        let mut rng = rng_from_seed(cfg.seed);
        let params = init_params(&cfg, &mut rng);
        let topo = Topology::new(&cfg);
        let pe = positional_encoding(cfg.n_max, cfg.d_model);
        GraphTransformer { cfg, params, topo, pe }
    }

    pub fn from_params(cfg: GraphTransformerConfig, params: ParamSet) -> Self {
        cfg.validate();
        let topo = Topology::new(&cfg);
        let pe = positional_encoding(cfg.n_max, cfg.d_model);
        GraphTransformer { cfg, params, topo, pe }
    }

    pub fn timestep_embedding(&self, tape: &mut Tape, bp: &BoundParams, t: usize, t_max: usize) -> Var {
        let basis = tape.leaf(timestep_basis(t as f64 / t_max as f64, self.cfg.d_model));
        let h = tape.matmul(basis, bp.get("tmlp.w1"));
        let h = tape.add_row(h, bp.get("tmlp.b1"));
        let h = tape.silu(h);
        let h = tape.matmul(h, bp.get("tmlp.w2"));
        tape.add_row(h, bp.get("tmlp.b2"))
    }

    /// Directed edge states from the stored triangle: one row per ordered
    /// pair, forward and backward embeddings of the same label.
    fn edge_states(&self, tape: &mut Tape, bp: &BoundParams, e_rows: Var) -> Var {
        let fwd = tape.matmul(e_rows, bp.get("embed.edge_fwd"));
        let bwd = tape.matmul(e_rows, bp.get("embed.edge_bwd"));
        tape.concat_rows(fwd, bwd)
    }

    /// One block of graph attention plus the edge update: the core
    /// node-edge fusion. Returns the updated (node_states, edge_states).
    pub fn film_graph_attention(
        &self,
        tape: &mut Tape,
        bp: &BoundParams,
        block: usize,
        x: Var,
        e_state: Var,
        t_emb: Var,
    ) -> (Var, Var) {
        let cfg = &self.cfg;
        let (d, heads) = (cfg.d_model, cfg.heads);
        let dh = d / heads;
        let n = cfg.n_max;

        let xn = ada_ln(tape, bp, &format!("blk{block}.ada_attn"), x, t_emb, d);
        let q = tape.matmul(xn, bp.get(&format!("blk{block}.attn.w_q")));
        let k = tape.matmul(xn, bp.get(&format!("blk{block}.attn.w_k")));
        let v = tape.matmul(xn, bp.get(&format!("blk{block}.attn.w_v")));

        // per-head scale/bias from edge embeddings, scattered to the N x N grid
        let film_in = tape.concat_rows(e_state, bp.get("embed.self_edge"));
        let film = tape.matmul(film_in, bp.get(&format!("blk{block}.film.w")));
        let film = tape.add_row(film, bp.get(&format!("blk{block}.film.b")));
        let film_grid = tape.gather_rows(film, &self.topo.film_index);

        let mut head_outs: Option<Var> = None;
        for hi in 0..heads {
            let qh = tape.slice_cols(q, hi * dh, dh);
            let kh = tape.slice_cols(k, hi * dh, dh);
            let vh = tape.slice_cols(v, hi * dh, dh);
            let kt = tape.transpose(kh);
            let raw = tape.matmul(qh, kt);
            let scaled = tape.scale(raw, 1.0 / (dh as f64).sqrt());
            let s_col = tape.slice_cols(film_grid, hi, 1);
            let s_sq = tape.reshape(s_col, n, n);
            let b_col = tape.slice_cols(film_grid, heads + hi, 1);
            let b_sq = tape.reshape(b_col, n, n);
            let mod1 = tape.mul(scaled, s_sq);
            let mod2 = tape.add(scaled, mod1);
            let modulated = tape.add(mod2, b_sq);
            let attn = tape.softmax_rows(modulated);
            let out = tape.matmul(attn, vh);
            head_outs = Some(match head_outs {
                None => out,
                Some(acc) => tape.concat_cols(acc, out),
            });
        }
        let concat = head_outs.expect("at least one head");
        let o = tape.matmul(concat, bp.get(&format!("blk{block}.attn.w_o")));
        let x = tape.add(x, o);

        // two-layer edge update from the incident node pair
        let en = ada_ln(tape, bp, &format!("blk{block}.ada_edge"), e_state, t_emb, cfg.d_edge);
        let hi_rows = tape.gather_rows(x, &self.topo.src_idx);
        let hj_rows = tape.gather_rows(x, &self.topo.dst_idx);
        let pair = tape.concat_cols(hi_rows, hj_rows);
        let cat = tape.concat_cols(pair, en);
        let upd = mlp2(
            tape,
            bp,
            &format!("blk{block}.edge.w1"),
            &format!("blk{block}.edge.b1"),
            &format!("blk{block}.edge.w2"),
            &format!("blk{block}.edge.b2"),
            cat,
        );
        let e_state = tape.add(e_state, upd);
        (x, e_state)
    }

    fn cross_attention(
        &self,
        tape: &mut Tape,
        bp: &BoundParams,
        block: usize,
        x: Var,
        cond: Var,
        t_emb: Var,
    ) -> Var {
        let cfg = &self.cfg;
        let (d, heads) = (cfg.d_model, cfg.heads);
        let dh = d / heads;
        let xn = ada_ln(tape, bp, &format!("blk{block}.ada_cross"), x, t_emb, d);
        let q = tape.matmul(xn, bp.get(&format!("blk{block}.cross.w_q")));
        let k = tape.matmul(cond, bp.get(&format!("blk{block}.cross.w_k")));
        let v = tape.matmul(cond, bp.get(&format!("blk{block}.cross.w_v")));
        let mut head_outs: Option<Var> = None;
        for hi in 0..heads {
            let qh = tape.slice_cols(q, hi * dh, dh);
            let kh = tape.slice_cols(k, hi * dh, dh);
            let vh = tape.slice_cols(v, hi * dh, dh);
            let kt = tape.transpose(kh);
            let raw = tape.matmul(qh, kt);
            let scaled = tape.scale(raw, 1.0 / (dh as f64).sqrt());
            let attn = tape.softmax_rows(scaled);
            let out = tape.matmul(attn, vh);
            head_outs = Some(match head_outs {
                None => out,
                Some(acc) => tape.concat_cols(acc, out),
            });
        }
        let concat = head_outs.expect("at least one head");
        let o = tape.matmul(concat, bp.get(&format!("blk{block}.cross.w_o")));
        tape.add(x, o)
    }

    fn node_tokens(
        &self,
        tape: &mut Tape,
        bp: &BoundParams,
        g: &OneHotGraphState,
        spatial: Option<(&Mat, Option<[f64; 4]>)>,
        with_pe: bool,
    ) -> Var {
        let c_leaf = tape.leaf(g.c_rows.clone());
        let f_leaf = tape.leaf(g.f_rows.clone());
        let mut x = tape.matmul(c_leaf, bp.get("embed.cat"));
        for s in 0..self.cfg.n_f {
            let rows = tape.gather_rows(f_leaf, &self.topo.fslot_rows[s]);
            let emb = tape.matmul(rows, bp.get(&format!("embed.feat{s}")));
            x = tape.add(x, emb);
        }
        if let Some((l_t, region)) = spatial {
            let l_leaf = tape.leaf(l_t.clone());
            let sp = tape.matmul(l_leaf, bp.get("embed.spatial"));
            x = tape.add(x, sp);
            let region4 = region.unwrap_or([0.0; 4]);
            let r_leaf = tape.leaf(Mat::from_vec(1, 4, region4.to_vec()));
            let r_emb = tape.matmul(r_leaf, bp.get("embed.region"));
            x = tape.add_row(x, r_emb);
        }
        if with_pe {
            let pe = tape.leaf(self.pe.clone());
            x = tape.add(x, pe);
        }
        x
    }

    /// Build the prior's clean-graph logits on an existing tape.
    pub fn prior_logits_on_tape(
        &self,
        tape: &mut Tape,
        bp: &BoundParams,
        g_t: &OneHotGraphState,
        t: usize,
        t_max: usize,
        cond: &ConditionEmbedding,
    ) -> PriorLogits {
        assert_eq!(self.cfg.variant, NetVariant::Prior);
        let t_emb = self.timestep_embedding(tape, bp, t, t_max);
        let mut x = self.node_tokens(tape, bp, g_t, None, true);
        let e_leaf = tape.leaf(g_t.e_rows.clone());
        let mut e_state = self.edge_states(tape, bp, e_leaf);
        let cond_leaf = tape.leaf(cond.tokens.clone());
        for b in 0..self.cfg.depth {
            let (nx, ne) = self.film_graph_attention(tape, bp, b, x, e_state, t_emb);
            x = nx;
            e_state = ne;
            x = self.cross_attention(tape, bp, b, x, cond_leaf, t_emb);
            let xn = ada_ln(tape, bp, &format!("blk{b}.ada_mlp"), x, t_emb, self.cfg.d_model);
            let fed = mlp2(
                tape,
                bp,
                &format!("blk{b}.mlp.w1"),
                &format!("blk{b}.mlp.b1"),
                &format!("blk{b}.mlp.w2"),
                &format!("blk{b}.mlp.b2"),
                xn,
            );
            x = tape.add(x, fed);
        }
        let xf = tape.layer_norm_rows(x);
        let c = tape.matmul(xf, bp.get("head.c.w"));
        let c = tape.add_row(c, bp.get("head.c.b"));
        let mut slot_major: Option<Var> = None;
        for s in 0..self.cfg.n_f {
            let l = tape.matmul(xf, bp.get(&format!("head.f{s}.w")));
            let l = tape.add_row(l, bp.get(&format!("head.f{s}.b")));
            slot_major = Some(match slot_major {
                None => l,
                Some(acc) => tape.concat_rows(acc, l),
            });
        }
        let f = tape.gather_rows(slot_major.expect("n_f >= 1"), &self.topo.fmajor_gather);
        let e_tri = tape.gather_rows(e_state, &self.topo.tri_rows);
        let ef = tape.layer_norm_rows(e_tri);
        let e = tape.matmul(ef, bp.get("head.e.w"));
        let e = tape.add_row(e, bp.get("head.e.b"));
        PriorLogits { c, f, e }
    }

    /// Build the decoder's noise prediction on an existing tape. The graph
    /// must be a clean (t = 0) encoding.
    pub fn decoder_eps_on_tape(
        &self,
        tape: &mut Tape,
        bp: &BoundParams,
        l_t: &Mat,
        t: usize,
        t_max: usize,
        g0: &OneHotGraphState,
        region: Option<[f64; 4]>,
    ) -> Var {
        assert_eq!(self.cfg.variant, NetVariant::Decoder);
        let t_emb = self.timestep_embedding(tape, bp, t, t_max);
        let mut x = self.node_tokens(tape, bp, g0, Some((l_t, region)), true);
        let e_leaf = tape.leaf(g0.e_rows.clone());
        let mut e_state = self.edge_states(tape, bp, e_leaf);
        for b in 0..self.cfg.depth {
            let (nx, ne) = self.film_graph_attention(tape, bp, b, x, e_state, t_emb);
            x = nx;
            e_state = ne;
            let xn = ada_ln(tape, bp, &format!("blk{b}.ada_mlp"), x, t_emb, self.cfg.d_model);
            let fed = mlp2(
                tape,
                bp,
                &format!("blk{b}.mlp.w1"),
                &format!("blk{b}.mlp.b1"),
                &format!("blk{b}.mlp.w2"),
                &format!("blk{b}.mlp.b2"),
                xn,
            );
            x = tape.add(x, fed);
        }
        let xf = tape.layer_norm_rows(x);
        let eps = tape.matmul(xf, bp.get("head.eps.w"));
        tape.add_row(eps, bp.get("head.eps.b"))
    }

    /// Value-only prior forward: (C, F, E) logit matrices.
    pub fn prior_forward(
        &self,
        g_t: &OneHotGraphState,
        t: usize,
        t_max: usize,
        cond: &ConditionEmbedding,
    ) -> (Mat, Mat, Mat) {
        let mut tape = Tape::new();
        let bp = self.params.bind(&mut tape);
        let logits = self.prior_logits_on_tape(&mut tape, &bp, g_t, t, t_max, cond);
        (
            tape.value(logits.c).clone(),
            tape.value(logits.f).clone(),
            tape.value(logits.e).clone(),
        )
    }

    /// Value-only decoder forward from a semantic graph.
    pub fn decoder_forward(
        &self,
        l_t: &Mat,
        t: usize,
        t_max: usize,
        g: &SemanticGraph,
        vocab: &Vocabularies,
        region: Option<[f64; 4]>,
    ) -> Mat {
        let state = crate::core::encode_one_hot(g, vocab).expect("valid graph");
        self.decoder_forward_state(l_t, t, t_max, &state, region)
    }

    pub fn decoder_forward_state(
        &self,
        l_t: &Mat,
        t: usize,
        t_max: usize,
        g0: &OneHotGraphState,
        region: Option<[f64; 4]>,
    ) -> Mat {
        let mut tape = Tape::new();
        let bp = self.params.bind(&mut tape);
        let eps = self.decoder_eps_on_tape(&mut tape, &bp, l_t, t, t_max, g0, region);
        tape.value(eps).clone()
    }
}
