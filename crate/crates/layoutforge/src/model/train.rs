//! Training loops for both networks, the tape-built losses, permutation
//! augmentation, gradient checking and checkpointing.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::core::{tri_index, tri_pairs, OneHotGraphState};
use crate::dcat::{KernelVariant, MaskedTransitionSchedule};
use crate::dgauss::GaussianSchedule;
use crate::mat::Mat;
use crate::model::embed::ConditionEmbedding;
use crate::model::transformer::{GraphTransformer, GraphTransformerConfig};
use crate::nn::adam::{Adam, AdamConfig};
use crate::nn::params::{BoundParams, ParamSet};
use crate::nn::store::{self, StoreError};
use crate::nn::{Tape, Var};
use crate::relrules::inverse_relation_index;
use crate::util::{random_permutation, rng_from_seed};
use rand::Rng;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training loss diverged at step {step}")]
    DivergedLoss { step: usize },
    #[error("store: {0}")]
    Store(#[from] StoreError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("empty dataset")]
    EmptyDataset,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub grad_clip: f64,
    /// Probability of substituting the zero token for the condition, so
    /// unconditional generation is in-distribution.
    pub cond_dropout: f64,
    pub lambda_f: f64,
    pub lambda_e: f64,
    pub lambda_aux: f64,
    pub seed: u64,
    /// Checkpoints are written every this many epochs (dataset passes).
    pub checkpoint_every_epochs: usize,
    pub log_every: usize,
    /// Random node-order augmentation per training step.
    pub permutation_augmentation: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 2000,
            batch: 16,
            lr: 3e-4,
            grad_clip: 1.0,
            cond_dropout: 0.1,
            lambda_f: 1.0,
            lambda_e: 1.0,
            lambda_aux: 0.01,
            seed: 0,
            checkpoint_every_epochs: 4,
            log_every: 25,
            permutation_augmentation: true,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainLog {
    pub csv: String,
    pub loss_history: Vec<f64>,
    pub final_loss: f64,
    /// Checkpoint bytes written at epoch boundaries (kept in memory; the
    /// CLI persists them).
    pub checkpoints: Vec<(usize, Vec<u8>)>,
}

pub struct PriorTrainSample {
    pub state: OneHotGraphState,
    pub cond: ConditionEmbedding,
}

pub struct DecoderTrainSample {
    pub state: OneHotGraphState,
    pub spatial: Mat,
    pub n_real: usize,
    pub region: Option<[f64; 4]>,
}

/// Permute node slots of a one-hot state: `perm[i]` is the new slot of old
/// node `i`. Edge rows move to their reindexed pair; flipped pairs permute
/// the label distribution through the inverse-relation map.
pub fn permute_state(
    state: &OneHotGraphState,
    perm: &[usize],
    n_max: usize,
    n_f: usize,
    k_e: usize,
) -> OneHotGraphState {
    let mut out = state.clone();
    for i in 0..n_max {
        out.c_rows.row_mut(perm[i]).copy_from_slice(state.c_rows.row(i));
        for s in 0..n_f {
            out.f_rows
                .row_mut(perm[i] * n_f + s)
                .copy_from_slice(state.f_rows.row(i * n_f + s));
        }
    }
    for (i, j) in tri_pairs(n_max) {
        let src = tri_index(i, j, n_max);
        let (a, b) = (perm[i], perm[j]);
        if a < b {
            out.e_rows.row_mut(tri_index(a, b, n_max)).copy_from_slice(state.e_rows.row(src));
        } else {
            let row = state.e_rows.row(src);
            let dst = tri_index(b, a, n_max);
            let width = row.len();
            let mut flipped = vec![0.0; width];
            for (label, &mass) in row.iter().enumerate() {
                flipped[inverse_relation_index(label, k_e)] += mass;
            }
            out.e_rows.row_mut(dst).copy_from_slice(&flipped);
        }
    }
    out
}

pub fn permute_rows(m: &Mat, perm: &[usize]) -> Mat {
    let mut out = m.clone();
    for i in 0..m.rows {
        out.row_mut(perm[i]).copy_from_slice(m.row(i));
    }
    out
}

/// Loss pieces reported alongside the scalar tape node.
#[derive(Debug, Clone, Copy, Default)]
pub struct PriorLossParts {
    pub total: f64,
    pub l_c: f64,
    pub l_f: f64,
    pub l_e: f64,
}

fn family_ce(tape: &mut Tape, logits: Var, x0s: &[usize]) -> Var {
    let (rows, cols) = {
        let v = tape.value(logits);
        (v.rows, v.cols)
    };
    assert_eq!(rows, x0s.len());
    let s = tape.softmax_rows(logits);
    let lns = tape.ln_clamped(s, 1e-300);
    let mut pick = Mat::zeros(rows, cols);
    for (i, &x0) in x0s.iter().enumerate() {
        pick.set(i, x0, 1.0);
    }
    let mask = tape.leaf(pick);
    let picked = tape.mul(lns, mask);
    let total = tape.sum_all(picked);
    tape.scale(total, -1.0 / rows as f64)
}

/// Per-family variational bound on the tape: the KL between true and
/// predicted posteriors for t >= 2, reconstruction cross-entropy at t = 1.
/// Mirrors the reference evaluation in `dcat`.
fn family_vb(
    tape: &mut Tape,
    fam: &crate::dcat::FamilySchedule,
    logits: Var,
    xts: &[usize],
    x0s: &[usize],
    t: usize,
) -> Var {
    if t == 1 {
        return family_ce(tape, logits, x0s);
    }
    let rows = tape.value(logits).rows;
    let k_prime = fam.k_prime;
    let s = tape.softmax_rows(logits);
    // posterior tables depend only on (x_t, t); share them (and their tape
    // leaves) across slots with the same corrupted state
    let mut tables: Vec<Option<(crate::dcat::PosteriorTable, Var, Var)>> =
        vec![None; k_prime + 1];
    let mut terms: Option<Var> = None;
    for i in 0..rows {
        let x_t = xts[i];
        if tables[x_t].is_none() {
            let table = fam.posterior_table(x_t, t);
            let mut reach = Mat::zeros(k_prime, 1);
            for (x0, &r) in table.reachable.iter().enumerate() {
                if r {
                    reach.set(x0, 0, 1.0);
                }
            }
            let p_const = tape.leaf(table.rows.clone());
            let r_const = tape.leaf(reach);
            tables[x_t] = Some((table, p_const, r_const));
        }
        let (table, p_const, r_const) = tables[x_t].as_ref().unwrap();
        let (p_const, r_const) = (*p_const, *r_const);
        assert!(
            table.reachable[x0s[i]],
            "training states come from the forward chain"
        );
        let q = table.rows.row(x0s[i]).to_vec();

        let s_i = tape.gather_rows(s, &[i]);
        let mix = tape.matmul(s_i, p_const);
        let w = tape.matmul(s_i, r_const);
        let w_inv = tape.recip(w);
        let p = tape.mul_scalar(mix, w_inv);
        let lnp = tape.ln_clamped(p, 1e-30);
        let q_lnq: f64 = q.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum();
        let q_const = tape.leaf(Mat::from_vec(1, k_prime + 1, q));
        let dot = tape.mul(q_const, lnp);
        let cross = tape.sum_all(dot);
        let qq = tape.leaf(Mat::from_vec(1, 1, vec![q_lnq]));
        let kl = tape.sub(qq, cross);
        terms = Some(match terms {
            None => kl,
            Some(acc) => tape.add(acc, kl),
        });
    }
    let total = terms.expect("at least one slot");
    tape.scale(total, 1.0 / rows as f64)
}

fn argmaxes(m: &Mat) -> Vec<usize> {
    (0..m.rows).map(|i| crate::core::argmax_row(m.row(i))).collect()
}

/// The prior objective for one sample, built on the tape. Under the
/// gaussian-onehot ablation kernel the bound degenerates to plain
/// cross-entropy on the clean graph.
#[allow(clippy::too_many_arguments)]
pub fn prior_loss_on_tape(
    model: &GraphTransformer,
    tape: &mut Tape,
    bp: &BoundParams,
    g0: &OneHotGraphState,
    g_t: &OneHotGraphState,
    t: usize,
    cond: &ConditionEmbedding,
    sched: &MaskedTransitionSchedule,
    cfg: &TrainConfig,
) -> (Var, PriorLossParts) {
    let logits = model.prior_logits_on_tape(tape, bp, g_t, t, sched.t_count, cond);
    let c_x0 = argmaxes(&g0.c_rows);
    let f_x0 = argmaxes(&g0.f_rows);
    let e_x0 = argmaxes(&g0.e_rows);

    let (l_c, l_f, l_e) = if sched.kernel_variant == KernelVariant::GaussianOnehot {
        (
            family_ce(tape, logits.c, &c_x0),
            family_ce(tape, logits.f, &f_x0),
            family_ce(tape, logits.e, &e_x0),
        )
    } else {
        let c_xt = argmaxes(&g_t.c_rows);
        let f_xt = argmaxes(&g_t.f_rows);
        let e_xt = argmaxes(&g_t.e_rows);
        (
            family_vb(tape, &sched.c, logits.c, &c_xt, &c_x0, t),
            family_vb(tape, &sched.f, logits.f, &f_xt, &f_x0, t),
            family_vb(tape, &sched.e, logits.e, &e_xt, &e_x0, t),
        )
    };
    let aux_c = family_ce(tape, logits.c, &c_x0);
    let aux_f = family_ce(tape, logits.f, &f_x0);
    let aux_e = family_ce(tape, logits.e, &e_x0);

    let lf_scaled = tape.scale(l_f, cfg.lambda_f);
    let le_scaled = tape.scale(l_e, cfg.lambda_e);
    let af = tape.scale(aux_f, cfg.lambda_f);
    let ae = tape.scale(aux_e, cfg.lambda_e);
    let aux1 = tape.add(aux_c, af);
    let aux = tape.add(aux1, ae);
    let aux_scaled = tape.scale(aux, cfg.lambda_aux);
    let vb1 = tape.add(l_c, lf_scaled);
    let vb = tape.add(vb1, le_scaled);
    let total = tape.add(vb, aux_scaled);

    let parts = PriorLossParts {
        total: tape.value(total).data[0],
        l_c: tape.value(l_c).data[0],
        l_f: tape.value(l_f).data[0],
        l_e: tape.value(l_e).data[0],
    };
    (total, parts)
}

/// The decoder objective for one sample: noise-prediction MSE over the
/// rows flagged real, given the already-noised spatial rows. Permutation
/// augmentation scatters real nodes across slots, so the mask is explicit
/// rather than a prefix length.
#[allow(clippy::too_many_arguments)]
pub fn decoder_loss_on_tape(
    model: &GraphTransformer,
    tape: &mut Tape,
    bp: &BoundParams,
    state: &OneHotGraphState,
    l_t: &Mat,
    real_rows: &[bool],
    region: Option<[f64; 4]>,
    t: usize,
    eps: &Mat,
    sched: &GaussianSchedule,
) -> Var {
    let eps_hat = model.decoder_eps_on_tape(tape, bp, l_t, t, sched.t_count, state, region);
    let eps_const = tape.leaf(eps.clone());
    let diff = tape.sub(eps_hat, eps_const);
    let sq = tape.mul(diff, diff);
    let mut mask = Mat::zeros(eps.rows, eps.cols);
    let mut n_real = 0usize;
    for (i, &real) in real_rows.iter().enumerate() {
        if real {
            mask.row_mut(i).fill(1.0);
            n_real += 1;
        }
    }
    let mask_leaf = tape.leaf(mask);
    let masked = tape.mul(sq, mask_leaf);
    let total = tape.sum_all(masked);
    let count = (n_real * eps.cols).max(1);
    tape.scale(total, 1.0 / count as f64)
}

fn extract_param_grads(tape: &Tape, bp: &BoundParams, grads: &[Mat]) -> Vec<Mat> {
    let _ = tape;
    bp.vars().iter().map(|v| grads[v.0].clone()).collect()
}

fn write_checkpoint_bytes(model: &GraphTransformer) -> Vec<u8> {
    let mut buf = Vec::new();
    save_model(&mut buf, model).expect("in-memory checkpoint");
    buf
}

pub fn save_model<W: Write>(w: W, model: &GraphTransformer) -> Result<(), TrainError> {
    let cfg = serde_json::to_string(&model.cfg).expect("config serializes");
    store::write_checkpoint(w, b"LFNN1", &cfg, &model.params)?;
    Ok(())
}

pub fn load_model<R: Read>(r: R) -> Result<GraphTransformer, TrainError> {
    let (cfg_json, params) = store::read_checkpoint(r, b"LFNN1")?;
    let cfg: GraphTransformerConfig = serde_json::from_str(&cfg_json)
        .map_err(|e| StoreError::Malformed(format!("model config: {e}")))?;
    Ok(GraphTransformer::from_params(cfg, params))
}

/// Train the semantic-graph prior. Each step samples a timestep per batch
/// element, applies a fresh node permutation, corrupts the graph through
/// the forward kernel and takes one Adam step on the variational bound.
pub fn train_prior(
    model: &mut GraphTransformer,
    dataset: &[PriorTrainSample],
    sched: &MaskedTransitionSchedule,
    vocab: &crate::core::Vocabularies,
    cfg: &TrainConfig,
) -> Result<TrainLog, TrainError> {
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut rng = rng_from_seed(cfg.seed);
    let mut opt = Adam::new(
        AdamConfig { lr: cfg.lr, grad_clip: cfg.grad_clip, ..AdamConfig::default() },
        &model.params.sizes(),
    );
    let mut log = TrainLog { csv: String::from("step,loss,l_c,l_f,l_e\n"), ..Default::default() };
    let steps_per_epoch = (dataset.len() / cfg.batch).max(1);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut cursor = usize::MAX;

    for step in 1..=cfg.steps {
        let mut tape = Tape::new();
        let bp = model.params.bind(&mut tape);
        let mut batch_total: Option<Var> = None;
        let mut parts_sum = PriorLossParts::default();
        for _ in 0..cfg.batch {
            if cursor >= dataset.len() {
                crate::util::shuffle(&mut rng, &mut order);
                cursor = 0;
            }
            let sample = &dataset[order[cursor]];
            cursor += 1;

            let t = rng.gen_range(1..=sched.t_count);
            let g0 = if cfg.permutation_augmentation {
                let perm = random_permutation(&mut rng, vocab.n_max);
                permute_state(&sample.state, &perm, vocab.n_max, vocab.n_f, vocab.k_e)
            } else {
                sample.state.clone()
            };
            let g_t = crate::dcat::sample_forward(&g0, t, sched, vocab, &mut rng);
            let dropped;
            let cond = if cfg.cond_dropout > 0.0 && rng.gen::<f64>() < cfg.cond_dropout {
                dropped = ConditionEmbedding::zero(model.cfg.d_cond);
                &dropped
            } else {
                &sample.cond
            };
            let (loss, parts) =
                prior_loss_on_tape(model, &mut tape, &bp, &g0, &g_t, t, cond, sched, cfg);
            parts_sum.total += parts.total;
            parts_sum.l_c += parts.l_c;
            parts_sum.l_f += parts.l_f;
            parts_sum.l_e += parts.l_e;
            batch_total = Some(match batch_total {
                None => loss,
                Some(acc) => tape.add(acc, loss),
            });
        }
        let total = batch_total.expect("batch >= 1");
        let loss = tape.scale(total, 1.0 / cfg.batch as f64);
        let loss_val = tape.value(loss).data[0];
        if !loss_val.is_finite() {
            return Err(TrainError::DivergedLoss { step });
        }
        let grads = tape.backward(loss);
        let param_grads = extract_param_grads(&tape, &bp, &grads);
        drop(bp);
        drop(tape);
        opt.step(&mut model.params, &param_grads);

        log.loss_history.push(loss_val);
        log.final_loss = loss_val;
        if step % cfg.log_every == 0 || step == 1 || step == cfg.steps {
            let b = cfg.batch as f64;
            log.csv.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{:.6}\n",
                step,
                loss_val,
                parts_sum.l_c / b,
                parts_sum.l_f / b,
                parts_sum.l_e / b
            ));
        }
        let epoch_steps = steps_per_epoch * cfg.checkpoint_every_epochs.max(1);
        if step % epoch_steps == 0 || step == cfg.steps {
            log.checkpoints.push((step, write_checkpoint_bytes(model)));
        }
    }
    if !model.params.all_finite() {
        return Err(TrainError::DivergedLoss { step: cfg.steps });
    }
    Ok(log)
}

/// Train the spatial decoder with the noise-prediction objective.
pub fn train_decoder(
    model: &mut GraphTransformer,
    dataset: &[DecoderTrainSample],
    sched: &GaussianSchedule,
    vocab: &crate::core::Vocabularies,
    cfg: &TrainConfig,
) -> Result<TrainLog, TrainError> {
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut rng = rng_from_seed(cfg.seed);
    let mut opt = Adam::new(
        AdamConfig { lr: cfg.lr, grad_clip: cfg.grad_clip, ..AdamConfig::default() },
        &model.params.sizes(),
    );
    let mut log = TrainLog { csv: String::from("step,loss\n"), ..Default::default() };
    let steps_per_epoch = (dataset.len() / cfg.batch).max(1);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut cursor = usize::MAX;

    for step in 1..=cfg.steps {
        let mut tape = Tape::new();
        let bp = model.params.bind(&mut tape);
        let mut batch_total: Option<Var> = None;
        for _ in 0..cfg.batch {
            if cursor >= dataset.len() {
                crate::util::shuffle(&mut rng, &mut order);
                cursor = 0;
            }
            let base = &dataset[order[cursor]];
            cursor += 1;

            let t = rng.gen_range(1..=sched.t_count);
            let (state, spatial, real_rows) = if cfg.permutation_augmentation {
                let perm = random_permutation(&mut rng, vocab.n_max);
                let mut real = vec![false; vocab.n_max];
                for i in 0..base.n_real {
                    real[perm[i]] = true;
                }
                (
                    permute_state(&base.state, &perm, vocab.n_max, vocab.n_f, vocab.k_e),
                    permute_rows(&base.spatial, &perm),
                    real,
                )
            } else {
                let mut real = vec![false; vocab.n_max];
                for r in real.iter_mut().take(base.n_real) {
                    *r = true;
                }
                (base.state.clone(), base.spatial.clone(), real)
            };
            // EMPTY rows get noise too; the loss masks them out
            let mut eps = Mat::zeros(spatial.rows, spatial.cols);
            for v in &mut eps.data {
                *v = crate::util::standard_normal(&mut rng);
            }
            let l_t = crate::dgauss::q_sample(&spatial, t, &eps, sched);
            let loss = decoder_loss_on_tape(
                model, &mut tape, &bp, &state, &l_t, &real_rows, base.region, t, &eps, sched,
            );
            batch_total = Some(match batch_total {
                None => loss,
                Some(acc) => tape.add(acc, loss),
            });
        }
        let total = batch_total.expect("batch >= 1");
        let loss = tape.scale(total, 1.0 / cfg.batch as f64);
        let loss_val = tape.value(loss).data[0];
        if !loss_val.is_finite() {
            return Err(TrainError::DivergedLoss { step });
        }
        let grads = tape.backward(loss);
        let param_grads = extract_param_grads(&tape, &bp, &grads);
        drop(bp);
        drop(tape);
        opt.step(&mut model.params, &param_grads);

        log.loss_history.push(loss_val);
        log.final_loss = loss_val;
        if step % cfg.log_every == 0 || step == 1 || step == cfg.steps {
            log.csv.push_str(&format!("{},{:.6}\n", step, loss_val));
        }
        let epoch_steps = steps_per_epoch * cfg.checkpoint_every_epochs.max(1);
        if step % epoch_steps == 0 || step == cfg.steps {
            log.checkpoints.push((step, write_checkpoint_bytes(model)));
        }
    }
    if !model.params.all_finite() {
        return Err(TrainError::DivergedLoss { step: cfg.steps });
    }
    Ok(log)
}

/// Max relative error between analytic gradients and central finite
/// differences over a deterministic sample of coordinates.
pub fn gradcheck_max_rel_err(
    params: &ParamSet,
    loss_fn: &mut dyn FnMut(&ParamSet) -> f64,
    analytic: &[Mat],
    samples_per_param: usize,
    h: f64,
    seed: u64,
) -> f64 {
    let mut rng = rng_from_seed(seed);
    let mut worst = 0.0f64;
    let mut probe = params.clone();
    for pid in 0..params.len() {
        let len = params.mat(pid).data.len();
        for _ in 0..samples_per_param.min(len) {
            let i = rng.gen_range(0..len);
            let orig = params.mat(pid).data[i];
            probe.mat_mut(pid).data[i] = orig + h;
            let up = loss_fn(&probe);
            probe.mat_mut(pid).data[i] = orig - h;
            let down = loss_fn(&probe);
            probe.mat_mut(pid).data[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[pid].data[i];
            let denom = a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    worst
}

/// Convenience used by tests and the acceptance suite: analytic gradients
/// of an arbitrary tape-built loss for a full parameter set.
pub fn analytic_grads(
    params: &ParamSet,
    build: &mut dyn FnMut(&mut Tape, &BoundParams) -> Var,
) -> (f64, Vec<Mat>) {
    let mut tape = Tape::new();
    let bp = params.bind(&mut tape);
    let loss = build(&mut tape, &bp);
    let val = tape.value(loss).data[0];
    let grads = tape.backward(loss);
    let out = bp.vars().iter().map(|v| grads[v.0].clone()).collect();
    (val, out)
}
