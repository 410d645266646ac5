//! Mask-based categorical diffusion: transition schedules, cumulative
//! marginals, posteriors, reverse sampling, and the graph variational-bound
//! loss.
//!
//! State convention per family of size `K`: clean states are `0..K'` with
//! `K' = K + 1` (the last clean state is EMPTY), and `MASK = K'`. A
//! transition matrix column for a clean state keeps it with probability
//! `alpha_t`, leaks `beta_t` to each of the other `K' - 1` clean states and
//! moves to MASK with `gamma_t`; the MASK column is absorbing. Because the
//! matrix is symmetric over clean states, cumulative products collapse to
//! three scalars per step: stay `abar_t`, per-category leak `bbar_t`, mask
//! mass `gbar_t`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::core::{OneHotGraphState, Vocabularies};
use crate::dgauss::GaussianSchedule;
use crate::util::{sample_categorical, standard_normal, Prng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum KernelVariant {
    /// Per-slot masking with an absorbing MASK state (the default).
    #[default]
    IndependentMask,
    /// Uniform transitions without mask states.
    Uniform,
    /// One mask draw per node shared by its features and incident edges.
    JointMask,
    /// One-hot rows diffused by the continuous Gaussian kernel.
    GaussianOnehot,
}

#[derive(Debug, Error, PartialEq)]
pub enum DcatError {
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("state {x_t} unreachable from {x0} at t = {t}")]
    UnreachableState { x_t: usize, x0: usize, t: usize },
}

/// Per-step and cumulative transition scalars for one categorical family.
/// All vectors are indexed by `t` in `0..=T`; entry 0 is the identity.
/// Schedules are always rebuilt from (T, K', eta); the cumulative scalars
/// are never serialized.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilySchedule {
    pub t_count: usize,
    pub k_prime: usize,
    pub eta: f64,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub abar: Vec<f64>,
    pub bbar: Vec<f64>,
    pub gbar: Vec<f64>,
}

impl FamilySchedule {
    /// gamma_t = 1 / (T - t + 1) empties everything into MASK by t = T;
    /// beta_t = eta (1 - gamma_t) / (K' T) adds a small uniform leak that
    /// vanishes at the final step so alpha_T = 0 exactly.
    pub fn build(t_count: usize, k_prime: usize, eta: f64) -> Result<Self, DcatError> {
        if t_count < 1 {
            return Err(DcatError::InvalidSchedule("T must be >= 1".into()));
        }
        if k_prime < 2 {
            return Err(DcatError::InvalidSchedule("K' must be >= 2".into()));
        }
        if !(0.0..1.0).contains(&eta) {
            return Err(DcatError::InvalidSchedule(format!("eta {eta} outside [0, 1)")));
        }
        let t_f = t_count as f64;
        let mut alpha = vec![1.0; t_count + 1];
        let mut beta = vec![0.0; t_count + 1];
        let mut gamma = vec![0.0; t_count + 1];
        for t in 1..=t_count {
            let g = 1.0 / (t_f - t as f64 + 1.0);
            let b = eta * (1.0 - g) / (k_prime as f64 * t_f);
            let a = 1.0 - g - (k_prime as f64 - 1.0) * b;
            if a < 0.0 {
                return Err(DcatError::InvalidSchedule(format!("alpha_{t} = {a} < 0")));
            }
            gamma[t] = g;
            beta[t] = b;
            alpha[t] = a;
        }
        let mut abar = vec![1.0; t_count + 1];
        let mut bbar = vec![0.0; t_count + 1];
        let mut gbar = vec![0.0; t_count + 1];
        for t in 1..=t_count {
            let (a_prev, b_prev, g_prev) = (abar[t - 1], bbar[t - 1], gbar[t - 1]);
            abar[t] = alpha[t] * a_prev + beta[t] * (k_prime as f64 - 1.0) * b_prev;
            bbar[t] = beta[t] * a_prev + (alpha[t] + (k_prime as f64 - 2.0) * beta[t]) * b_prev;
            gbar[t] = g_prev + gamma[t] * (1.0 - g_prev);
        }
        // gamma_T = 1 forces full masking; pin it against rounding.
        debug_assert!((gbar[t_count] - 1.0).abs() < 1e-12);
        gbar[t_count] = 1.0;
        Ok(FamilySchedule { t_count, k_prime, eta, alpha, beta, gamma, abar, bbar, gbar })
    }

    /// Identity schedule used by the uniform variant: no mask state, a
    /// move-to-uniform probability of gamma_t per step.
    pub fn build_uniform(t_count: usize, k_prime: usize) -> Result<Self, DcatError> {
        if t_count < 1 || k_prime < 2 {
            return Err(DcatError::InvalidSchedule("T >= 1 and K' >= 2 required".into()));
        }
        let t_f = t_count as f64;
        let kf = k_prime as f64;
        let mut alpha = vec![1.0; t_count + 1];
        let mut beta = vec![0.0; t_count + 1];
        let gamma = vec![0.0; t_count + 1];
        let mut abar = vec![1.0; t_count + 1];
        let mut bbar = vec![0.0; t_count + 1];
        let gbar = vec![0.0; t_count + 1];
        let mut stay = 1.0; // cumulative keep probability
        for t in 1..=t_count {
            let move_p = 1.0 / (t_f - t as f64 + 1.0);
            beta[t] = move_p / kf;
            alpha[t] = 1.0 - move_p + move_p / kf;
            stay *= 1.0 - move_p;
            abar[t] = stay + (1.0 - stay) / kf;
            bbar[t] = (1.0 - stay) / kf;
        }
        Ok(FamilySchedule { t_count, k_prime, eta: 0.0, alpha, beta, gamma, abar, bbar, gbar })
    }

    pub fn mask_state(&self) -> usize {
        self.k_prime
    }

    pub fn state_count(&self) -> usize {
        self.k_prime + 1
    }

    /// Column of the one-step transition matrix Q_t for `from`.
    pub fn transition_column(&self, t: usize, from: usize) -> Vec<f64> {
        assert!(t >= 1 && t <= self.t_count);
        let mut col = vec![0.0; self.state_count()];
        if from == self.mask_state() {
            col[from] = 1.0;
            return col;
        }
        for j in 0..self.k_prime {
            col[j] = if j == from { self.alpha[t] } else { self.beta[t] };
        }
        col[self.mask_state()] = self.gamma[t];
        col
    }

    /// q(x_t | x_0) from the cached cumulative scalars.
    pub fn forward_marginal(&self, x0: usize, t: usize) -> Vec<f64> {
        assert!(x0 < self.k_prime, "x0 must be a clean state");
        assert!(t <= self.t_count);
        let mut row = vec![0.0; self.state_count()];
        for j in 0..self.k_prime {
            row[j] = if j == x0 { self.abar[t] } else { self.bbar[t] };
        }
        row[self.mask_state()] = self.gbar[t];
        row
    }

    /// One-step transition probability q(x_t = to | x_{t-1} = from)
    /// without materializing the column.
    #[inline]
    fn step_prob(&self, t: usize, from: usize, to: usize) -> f64 {
        let mask = self.mask_state();
        if from == mask {
            return if to == mask { 1.0 } else { 0.0 };
        }
        if to == mask {
            self.gamma[t]
        } else if to == from {
            self.alpha[t]
        } else {
            self.beta[t]
        }
    }

    /// All posteriors q(x_{t-1} | x_t, x0) for a fixed (x_t, t): one row
    /// per candidate clean x0 (zero row marked unreachable when x_t cannot
    /// arise from that x0).
    pub fn posterior_table(&self, x_t: usize, t: usize) -> PosteriorTable {
        assert!(t >= 1 && t <= self.t_count);
        let states = self.state_count();
        let mask = self.mask_state();
        let (a, b, g) = (self.abar[t - 1], self.bbar[t - 1], self.gbar[t - 1]);
        let mut rows = crate::mat::Mat::zeros(self.k_prime, states);
        let mut reachable = vec![false; self.k_prime];
        for x0 in 0..self.k_prime {
            let row = rows.row_mut(x0);
            let mut total = 0.0;
            for (j, slot) in row.iter_mut().enumerate() {
                let prior_j = if j == mask {
                    g
                } else if j == x0 {
                    a
                } else {
                    b
                };
                let w = prior_j * self.step_prob(t, j, x_t);
                *slot = w;
                total += w;
            }
            if total > 0.0 {
                reachable[x0] = true;
                for v in row.iter_mut() {
                    *v /= total;
                }
            } else {
                row.fill(0.0);
            }
        }
        PosteriorTable { rows, reachable }
    }

    /// q(x_{t-1} | x_t, x_0), proportional to q(x_t | x_{t-1}) q(x_{t-1} | x_0).
    pub fn posterior(&self, x_t: usize, x0: usize, t: usize) -> Result<Vec<f64>, DcatError> {
        assert!(t >= 1 && t <= self.t_count);
        let states = self.state_count();
        let mask = self.mask_state();
        let (a, b, g) = (self.abar[t - 1], self.bbar[t - 1], self.gbar[t - 1]);
        let mut out = vec![0.0; states];
        let mut total = 0.0;
        for (j, slot) in out.iter_mut().enumerate() {
            let prior_j = if j == mask {
                g
            } else if j == x0 {
                a
            } else {
                b
            };
            let w = prior_j * self.step_prob(t, j, x_t);
            *slot = w;
            total += w;
        }
        if total <= 0.0 {
            return Err(DcatError::UnreachableState { x_t, x0, t });
        }
        for v in &mut out {
            *v /= total;
        }
        Ok(out)
    }

    /// p(x_{t-1} | x_t) = sum over clean x0 of s[x0] * posterior(x_t, x0, t).
    ///
    /// At t = 1 the posterior given x0 is the point mass on x0 regardless of
    /// reachability, so the mixture is exactly `s`. For t >= 2, branches
    /// whose x0 cannot reach x_t are dropped and the rest renormalized; if
    /// every branch is unreachable (which cannot happen for on-chain states)
    /// the weights fall back to uniform over reachable clean states, and as
    /// a last resort to `s` itself.
    pub fn posterior_mixture(&self, s: &[f64], x_t: usize, t: usize) -> Vec<f64> {
        let table = if t >= 2 { Some(self.posterior_table(x_t, t)) } else { None };
        self.posterior_mixture_with(s, t, table.as_ref())
    }

    /// As [`posterior_mixture`], reusing a precomputed table for (x_t, t).
    pub fn posterior_mixture_with(
        &self,
        s: &[f64],
        t: usize,
        table: Option<&PosteriorTable>,
    ) -> Vec<f64> {
        assert_eq!(s.len(), self.k_prime);
        assert!(t >= 1 && t <= self.t_count);
        let mut out = vec![0.0; self.state_count()];
        if t == 1 {
            out[..self.k_prime].copy_from_slice(s);
            return out;
        }
        let table = table.expect("posterior table required for t >= 2");
        let n_reach = table.reachable.iter().filter(|&&r| r).count();
        if n_reach == 0 {
            out[..self.k_prime].copy_from_slice(s);
            return out;
        }
        let total: f64 =
            (0..self.k_prime).filter(|&x0| table.reachable[x0]).map(|x0| s[x0]).sum();
        for x0 in 0..self.k_prime {
            if !table.reachable[x0] {
                continue;
            }
            let w = if total > 0.0 { s[x0] / total } else { 1.0 / n_reach as f64 };
            for (j, &c) in table.rows.row(x0).iter().enumerate() {
                out[j] += w * c;
            }
        }
        out
    }
}

/// Normalized posterior rows for every candidate x0 at a fixed (x_t, t).
#[derive(Debug, Clone)]
pub struct PosteriorTable {
    /// Row per clean x0 over the states at t-1; zero rows are unreachable.
    pub rows: crate::mat::Mat,
    pub reachable: Vec<bool>,
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&x| (x - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// One ancestral step: re-parameterize logits over clean states into
/// p(x_{t-1} | x_t) and sample from it.
pub fn reverse_step(
    x0_logits: &[f64],
    x_t: usize,
    t: usize,
    fam: &FamilySchedule,
    rng: &mut Prng,
) -> usize {
    let s = softmax(x0_logits);
    let p = fam.posterior_mixture(&s, x_t, t);
    sample_categorical(rng, &p)
}

/// Schedules for the three categorical families. They share the timestep
/// count and kernel variant but may differ in their uniform-leak eta.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedTransitionSchedule {
    pub t_count: usize,
    pub kernel_variant: KernelVariant,
    pub c: FamilySchedule,
    pub f: FamilySchedule,
    pub e: FamilySchedule,
    /// Companion schedule for the gaussian-onehot ablation variant.
    pub gaussian: Option<GaussianSchedule>,
}

impl MaskedTransitionSchedule {
    pub fn build(
        t_count: usize,
        vocab: &Vocabularies,
        eta: (f64, f64, f64),
        variant: KernelVariant,
    ) -> Result<Self, DcatError> {
        let (kc, kf, ke) = (vocab.k_c + 1, vocab.k_f + 1, vocab.k_e + 1);
        let (c, f, e) = match variant {
            KernelVariant::Uniform => (
                FamilySchedule::build_uniform(t_count, kc)?,
                FamilySchedule::build_uniform(t_count, kf)?,
                FamilySchedule::build_uniform(t_count, ke)?,
            ),
            _ => (
                FamilySchedule::build(t_count, kc, eta.0)?,
                FamilySchedule::build(t_count, kf, eta.1)?,
                FamilySchedule::build(t_count, ke, eta.2)?,
            ),
        };
        let gaussian = match variant {
            KernelVariant::GaussianOnehot => Some(
                GaussianSchedule::cosine(t_count)
                    .map_err(|e| DcatError::InvalidSchedule(e.to_string()))?,
            ),
            _ => None,
        };
        Ok(MaskedTransitionSchedule { t_count, kernel_variant: variant, c, f, e, gaussian })
    }
}

fn row_index(row: &[f64]) -> usize {
    crate::core::argmax_row(row)
}

fn sample_slot(fam: &FamilySchedule, x0: usize, t: usize, rng: &mut Prng) -> usize {
    sample_categorical(rng, &fam.forward_marginal(x0, t))
}

/// Conditional forward sample given the slot did not mask.
fn sample_slot_unmasked(fam: &FamilySchedule, x0: usize, t: usize, rng: &mut Prng) -> usize {
    let mut row = fam.forward_marginal(x0, t);
    row[fam.mask_state()] = 0.0;
    sample_categorical(rng, &row)
}

/// Draw G_t ~ q(G_t | G_0). `g0` must hold point-mass rows at t = 0.
pub fn sample_forward(
    g0: &OneHotGraphState,
    t: usize,
    sched: &MaskedTransitionSchedule,
    vocab: &Vocabularies,
    rng: &mut Prng,
) -> OneHotGraphState {
    assert_eq!(g0.t, 0, "forward sampling starts from clean states");
    let mut out = g0.clone();
    out.t = t;
    match sched.kernel_variant {
        KernelVariant::IndependentMask | KernelVariant::Uniform => {
            for i in 0..out.c_rows.rows {
                let x0 = row_index(g0.c_rows.row(i));
                set_point_mass(out.c_rows.row_mut(i), sample_slot(&sched.c, x0, t, rng));
            }
            for i in 0..out.f_rows.rows {
                let x0 = row_index(g0.f_rows.row(i));
                set_point_mass(out.f_rows.row_mut(i), sample_slot(&sched.f, x0, t, rng));
            }
            for i in 0..out.e_rows.rows {
                let x0 = row_index(g0.e_rows.row(i));
                set_point_mass(out.e_rows.row_mut(i), sample_slot(&sched.e, x0, t, rng));
            }
        }
        KernelVariant::JointMask => {
            // One mask time per node drives its category, features and
            // incident edges; unmasked slots still see the uniform leak.
            let n = vocab.n_max;
            let masked: Vec<bool> = (0..n)
                .map(|_| {
                    let u: f64 = rand::Rng::gen(rng);
                    u < sched.c.gbar[t]
                })
                .collect();
            for i in 0..n {
                let x0 = row_index(g0.c_rows.row(i));
                let new = if masked[i] {
                    sched.c.mask_state()
                } else {
                    sample_slot_unmasked(&sched.c, x0, t, rng)
                };
                set_point_mass(out.c_rows.row_mut(i), new);
                for s in 0..vocab.n_f {
                    let idx = i * vocab.n_f + s;
                    let fx0 = row_index(g0.f_rows.row(idx));
                    let newf = if masked[i] {
                        sched.f.mask_state()
                    } else {
                        sample_slot_unmasked(&sched.f, fx0, t, rng)
                    };
                    set_point_mass(out.f_rows.row_mut(idx), newf);
                }
            }
            for (idx, (i, j)) in crate::core::tri_pairs(n).into_iter().enumerate() {
                let ex0 = row_index(g0.e_rows.row(idx));
                let new = if masked[i] || masked[j] {
                    sched.e.mask_state()
                } else {
                    sample_slot_unmasked(&sched.e, ex0, t, rng)
                };
                set_point_mass(out.e_rows.row_mut(idx), new);
            }
        }
        KernelVariant::GaussianOnehot => {
            let gs = sched.gaussian.as_ref().expect("gaussian companion schedule");
            let noise_row = |rng: &mut Prng, row: &mut [f64]| {
                let ab = gs.abar[t];
                for v in row.iter_mut() {
                    *v = ab.sqrt() * *v + (1.0 - ab).sqrt() * standard_normal(rng);
                }
            };
            for i in 0..out.c_rows.rows {
                noise_row(rng, out.c_rows.row_mut(i));
            }
            for i in 0..out.f_rows.rows {
                noise_row(rng, out.f_rows.row_mut(i));
            }
            for i in 0..out.e_rows.rows {
                noise_row(rng, out.e_rows.row_mut(i));
            }
        }
    }
    out
}

fn set_point_mass(row: &mut [f64], idx: usize) {
    row.fill(0.0);
    row[idx] = 1.0;
}

/// Loss value with its per-family pieces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphVbLoss {
    pub total: f64,
    pub l_c: f64,
    pub l_f: f64,
    pub l_e: f64,
    pub aux: f64,
}

/// Per-slot term of the variational bound at one timestep: a KL between the
/// true and predicted posteriors for t >= 2, the reconstruction
/// cross-entropy at t = 1.
pub fn vb_slot_term(fam: &FamilySchedule, logits: &[f64], x_t: usize, x0: usize, t: usize) -> f64 {
    let s = softmax(logits);
    if t == 1 {
        return -s[x0].max(1e-300).ln();
    }
    let q = fam
        .posterior(x_t, x0, t)
        .expect("training states are drawn from the forward chain");
    let p = fam.posterior_mixture(&s, x_t, t);
    let mut kl = 0.0;
    for (j, &qj) in q.iter().enumerate() {
        if qj > 0.0 {
            kl += qj * (qj.ln() - p[j].max(1e-30).ln());
        }
    }
    kl.max(0.0)
}

pub fn cross_entropy_term(logits: &[f64], x0: usize) -> f64 {
    let s = softmax(logits);
    -s[x0].max(1e-300).ln()
}

/// Reference (gradient-free) evaluation of the graph loss: the weighted sum
/// of per-family means of the per-slot bound terms, plus the auxiliary
/// cross-entropy on the reparameterized clean graph.
#[allow(clippy::too_many_arguments)]
pub fn graph_vb_loss(
    c_logits: &[Vec<f64>],
    f_logits: &[Vec<f64>],
    e_logits: &[Vec<f64>],
    g_t: &OneHotGraphState,
    g0: &OneHotGraphState,
    t: usize,
    sched: &MaskedTransitionSchedule,
    lambda_f: f64,
    lambda_e: f64,
    lambda_aux: f64,
) -> GraphVbLoss {
    let family = |fam: &FamilySchedule,
                  logits: &[Vec<f64>],
                  xt_rows: &crate::mat::Mat,
                  x0_rows: &crate::mat::Mat| {
        let mut vb = 0.0;
        let mut aux = 0.0;
        for (i, l) in logits.iter().enumerate() {
            let x_t = row_index(xt_rows.row(i));
            let x0 = row_index(x0_rows.row(i));
            vb += vb_slot_term(fam, l, x_t, x0, t);
            aux += cross_entropy_term(l, x0);
        }
        let n = logits.len().max(1) as f64;
        (vb / n, aux / n)
    };
    let (l_c, aux_c) = family(&sched.c, c_logits, &g_t.c_rows, &g0.c_rows);
    let (l_f, aux_f) = family(&sched.f, f_logits, &g_t.f_rows, &g0.f_rows);
    let (l_e, aux_e) = family(&sched.e, e_logits, &g_t.e_rows, &g0.e_rows);
    let aux = aux_c + lambda_f * aux_f + lambda_e * aux_e;
    GraphVbLoss {
        total: l_c + lambda_f * l_f + lambda_e * l_e + lambda_aux * aux,
        l_c,
        l_f,
        l_e,
        aux,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::rng_from_seed;

    #[test]
    fn eta_zero_gbar_is_linear() {
        let fam = FamilySchedule::build(4, 3, 0.0).unwrap();
        for t in 0..=4 {
            assert!((fam.gbar[t] - t as f64 / 4.0).abs() < 1e-12, "t = {t}");
            assert!((fam.abar[t] - (1.0 - t as f64 / 4.0)).abs() < 1e-12);
            assert_eq!(fam.bbar[t], 0.0);
        }
    }

    #[test]
    fn columns_sum_to_one() {
        for eta in [0.0, 0.05, 0.5] {
            let fam = FamilySchedule::build(7, 5, eta).unwrap();
            for t in 1..=7 {
                for from in 0..fam.state_count() {
                    let s: f64 = fam.transition_column(t, from).iter().sum();
                    assert!((s - 1.0).abs() < 1e-9, "t {t} from {from} eta {eta}: {s}");
                }
                // cumulative scalars stay a distribution too
                let s = fam.abar[t] + (fam.k_prime as f64 - 1.0) * fam.bbar[t] + fam.gbar[t];
                assert!((s - 1.0).abs() < 1e-9);
            }
            assert_eq!(fam.gbar[7], 1.0);
        }
    }

    #[test]
    fn terminal_marginal_is_all_mask() {
        let fam = FamilySchedule::build(5, 4, 0.3).unwrap();
        let row = fam.forward_marginal(2, 5);
        assert_eq!(row[fam.mask_state()], 1.0);
        assert!(row[..fam.k_prime].iter().all(|&v| v == 0.0));
        let t0 = fam.forward_marginal(2, 0);
        assert_eq!(t0[2], 1.0);
    }

    #[test]
    fn posterior_t1_is_point_mass_on_x0() {
        let fam = FamilySchedule::build(4, 3, 0.1).unwrap();
        let p = fam.posterior(fam.mask_state(), 1, 1).unwrap();
        assert!((p[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn posterior_same_state_eta_zero_is_point_mass() {
        let fam = FamilySchedule::build(6, 4, 0.0).unwrap();
        for t in 1..6 {
            let p = fam.posterior(2, 2, t).unwrap();
            assert!((p[2] - 1.0).abs() < 1e-12, "t = {t}");
        }
    }

    #[test]
    fn posterior_from_mask_supports_x0_and_mask() {
        let fam = FamilySchedule::build(4, 3, 0.0).unwrap();
        let t = 3;
        let x0 = 1;
        let p = fam.posterior(fam.mask_state(), x0, t).unwrap();
        let w_clean = fam.abar[t - 1] * fam.gamma[t];
        let w_mask = fam.gbar[t - 1];
        let z = w_clean + w_mask;
        assert!((p[x0] - w_clean / z).abs() < 1e-12);
        assert!((p[fam.mask_state()] - w_mask / z).abs() < 1e-12);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unreachable_state_is_an_error() {
        let fam = FamilySchedule::build(4, 3, 0.0).unwrap();
        // with no uniform leak, x_t = 0 cannot arise from x0 = 1
        assert_eq!(
            fam.posterior(0, 1, 2),
            Err(DcatError::UnreachableState { x_t: 0, x0: 1, t: 2 })
        );
    }

    #[test]
    fn mixture_at_t1_is_the_softmax() {
        let fam = FamilySchedule::build(4, 3, 0.0).unwrap();
        let logits = vec![0.3, -1.0, 2.0];
        let s = softmax(&logits);
        let p = fam.posterior_mixture(&s, 1, 1);
        for j in 0..3 {
            assert!((p[j] - s[j]).abs() < 1e-12);
        }
        assert_eq!(p[3], 0.0);
    }

    #[test]
    fn oracle_reverse_chain_recovers_x0() {
        let fam = FamilySchedule::build(8, 4, 0.0).unwrap();
        let mut rng = rng_from_seed(31);
        for trial in 0..200 {
            let x0 = trial % fam.k_prime;
            let mut oracle = vec![-1e3; fam.k_prime];
            oracle[x0] = 1e3;
            let mut x = fam.mask_state();
            for t in (1..=8).rev() {
                x = reverse_step(&oracle, x, t, &fam, &mut rng);
            }
            assert_eq!(x, x0, "trial {trial}");
        }
    }

    #[test]
    fn invalid_schedules_are_rejected() {
        assert!(matches!(FamilySchedule::build(0, 3, 0.0), Err(DcatError::InvalidSchedule(_))));
        assert!(matches!(FamilySchedule::build(4, 3, 1.0), Err(DcatError::InvalidSchedule(_))));
    }

    #[test]
    fn uniform_variant_has_no_mask_mass() {
        let fam = FamilySchedule::build_uniform(6, 4).unwrap();
        for t in 0..=6 {
            assert_eq!(fam.gbar[t], 0.0);
            let row = fam.forward_marginal(1, t);
            assert_eq!(row[fam.mask_state()], 0.0);
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        // terminal distribution is uniform over clean states
        let row = fam.forward_marginal(1, 6);
        for j in 0..4 {
            assert!((row[j] - 0.25).abs() < 1e-9);
        }
    }

    #[test]
    fn empirical_forward_marginal_matches_within_3_sigma() {
        let fam = FamilySchedule::build(6, 4, 0.1).unwrap();
        let (x0, t) = (2usize, 4usize);
        let expected = fam.forward_marginal(x0, t);
        let n = 100_000usize;
        let mut counts = vec![0usize; fam.state_count()];
        let mut rng = rng_from_seed(77);
        for _ in 0..n {
            counts[sample_categorical(&mut rng, &expected)] += 1;
        }
        for (j, &p) in expected.iter().enumerate() {
            let got = counts[j] as f64 / n as f64;
            let sigma = (p * (1.0 - p) / n as f64).sqrt();
            assert!(
                (got - p).abs() <= 3.0 * sigma + 1e-12,
                "state {j}: {got} vs {p} (3 sigma {})",
                3.0 * sigma
            );
        }
    }

    #[test]
    fn mixture_with_uniform_logits_is_the_average_posterior() {
        let fam = FamilySchedule::build(4, 3, 0.2).unwrap();
        let t = 3;
        let x_t = fam.mask_state();
        let s = vec![1.0 / 3.0; 3];
        let got = fam.posterior_mixture(&s, x_t, t);
        let mut avg = vec![0.0; fam.state_count()];
        let mut count = 0usize;
        for x0 in 0..3 {
            if let Ok(col) = fam.posterior(x_t, x0, t) {
                for (j, &c) in col.iter().enumerate() {
                    avg[j] += c;
                }
                count += 1;
            }
        }
        for v in &mut avg {
            *v /= count as f64;
        }
        for (a, b) in got.iter().zip(avg.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn oracle_logits_give_zero_vb() {
        let fam = FamilySchedule::build(4, 3, 0.05).unwrap();
        for x0 in 0..3 {
            let mut oracle = vec![-1e4; 3];
            oracle[x0] = 1e4;
            for t in 1..=4 {
                let marg = fam.forward_marginal(x0, t);
                for (x_t, &m) in marg.iter().enumerate() {
                    if m > 0.0 {
                        let term = vb_slot_term(&fam, &oracle, x_t, x0, t);
                        assert!(term.abs() < 1e-9, "x0 {x0} x_t {x_t} t {t}: {term}");
                    }
                }
            }
        }
    }
}
