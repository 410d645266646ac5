//! End-to-end wiring: feature assignment through the trained VQ, dataset
//! preparation, the train-everything entry point, controllability
//! evaluation, and the standalone kernel self-checks behind the CLI's
//! schedule-check command.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::core::{encode_one_hot, Instruction, Layout, LayoutKind, Rect, Vocabularies};
use crate::dcat::{KernelVariant, MaskedTransitionSchedule};
use crate::dgauss::{GaussianSchedule, SpatialCodec};
use crate::model::train::{
    train_decoder, train_prior, DecoderTrainSample, PriorTrainSample, TrainConfig, TrainError,
    TrainLog,
};
use crate::model::{condition_encode, ConditionEmbedding, GraphTransformer, GraphTransformerConfig, NetVariant};
use crate::qfeat::{train_vq, VqConfig, VqError, VqModel};
use crate::relrules::RelationRuleSet;
use crate::synth;
use crate::toydata::{toy_bounds, ToySample, FEATURE_DIM};
use crate::util::{derive_rng, Prng};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Vq(#[from] VqError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Dcat(#[from] crate::dcat::DcatError),
    #[error(transparent)]
    Dgauss(#[from] crate::dgauss::DgaussError),
    #[error(transparent)]
    Synth(#[from] crate::synth::SynthError),
    #[error(transparent)]
    Core(#[from] crate::core::CoreError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelDims {
    pub depth: usize,
    pub d_model: usize,
    pub heads: usize,
    pub d_edge: usize,
    pub d_cond: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims { depth: 4, d_model: 128, heads: 4, d_edge: 32, d_cond: 64 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub kind: LayoutKind,
    pub seed: u64,
    pub t_prior: usize,
    pub t_dec: usize,
    /// Classifier-free guidance weight applied when sampling conditionally;
    /// 0 or 1 disables guidance.
    #[serde(default)]
    pub guidance_weight: f64,
    pub eta: (f64, f64, f64),
    pub kernel_variant: KernelVariant,
    pub rules: RelationRuleSet,
    pub model: ModelDims,
    pub vq: VqConfig,
    pub prior_train: TrainConfig,
    pub decoder_train: TrainConfig,
}

impl PipelineConfig {
    pub fn desk_default(kind: LayoutKind, seed: u64) -> Self {
        PipelineConfig {
            kind,
            seed,
            t_prior: 100,
            t_dec: 10,
            guidance_weight: 3.0,
            eta: (0.05, 0.05, 0.05),
            kernel_variant: KernelVariant::IndependentMask,
            rules: RelationRuleSet::defaults(kind),
            model: ModelDims::default(),
            vq: VqConfig { seed, ..VqConfig::default() },
            prior_train: TrainConfig {
                seed: seed.wrapping_add(1),
                steps: 3500,
                batch: 16,
                lr: 1e-3,
                lambda_f: 0.25,
                lambda_aux: 1.0,
                ..TrainConfig::default()
            },
            decoder_train: TrainConfig {
                seed: seed.wrapping_add(2),
                steps: 2200,
                batch: 16,
                cond_dropout: 0.0,
                ..TrainConfig::default()
            },
        }
    }
}

/// The trained stack plus everything needed to sample from it.
pub struct Models {
    pub vocab: Vocabularies,
    pub codec: SpatialCodec,
    pub rules: RelationRuleSet,
    pub vq: Option<VqModel>,
    pub prior: GraphTransformer,
    pub decoder: GraphTransformer,
    pub prior_sched: MaskedTransitionSchedule,
    pub dec_sched: GaussianSchedule,
    pub d_cond: usize,
    pub guidance_weight: f64,
}

impl Models {
    pub fn condition(&self, instr: &Instruction) -> ConditionEmbedding {
        condition_encode(instr, &self.vocab, self.d_cond)
    }

    pub fn generate(
        &self,
        instr: &Instruction,
        region: Option<Rect>,
        rng: &mut Prng,
    ) -> Result<Layout, PipelineError> {
        let cond = self.condition(instr);
        Ok(synth::generate_guided(
            &cond,
            &self.prior,
            &self.decoder,
            &self.prior_sched,
            &self.dec_sched,
            &self.vocab,
            &self.codec,
            region,
            self.guidance_weight,
            rng,
        )?)
    }

    /// Sample with the zero condition token.
    pub fn generate_unconditional(
        &self,
        region: Option<Rect>,
        rng: &mut Prng,
    ) -> Result<Layout, PipelineError> {
        self.generate(&Instruction::empty(), region, rng)
    }

    /// Rebuild the sampling schedules at different step counts; the
    /// networks consume normalized timesteps, so one checkpoint serves any
    /// (T_prior, T_dec) pair.
    pub fn with_timesteps(&mut self, t_prior: usize, t_dec: usize) -> Result<(), PipelineError> {
        let eta = (self.prior_sched.c.eta, self.prior_sched.f.eta, self.prior_sched.e.eta);
        self.prior_sched = MaskedTransitionSchedule::build(
            t_prior,
            &self.vocab,
            eta,
            self.prior_sched.kernel_variant,
        )?;
        self.dec_sched = GaussianSchedule::cosine(t_dec)?;
        Ok(())
    }
}

/// Encode every object's synthetic feature vector into codebook indices,
/// updating the layout and graph consistently. The 2D path assigns Lab
/// bins at curation time and is left untouched.
pub fn assign_features(samples: &mut [ToySample], vq: &VqModel, vocab: &Vocabularies) {
    for sample in samples {
        if sample.feature_vectors.is_empty() {
            continue;
        }
        for (i, vec) in sample.feature_vectors.iter().enumerate() {
            let indices = vq.encode_indices(vec).expect("feature dims match the VQ config");
            assert_eq!(indices.len(), vocab.n_f);
            sample.layout.objects[i].features = indices.clone();
            sample.graph.features[i] = indices;
        }
    }
}

pub fn prepare_prior_dataset(
    samples: &[ToySample],
    vocab: &Vocabularies,
    d_cond: usize,
) -> Vec<PriorTrainSample> {
    samples
        .iter()
        .map(|s| PriorTrainSample {
            state: encode_one_hot(&s.graph, vocab).expect("corpus graphs encode"),
            cond: condition_encode(&s.instruction, vocab, d_cond),
        })
        .collect()
}

pub fn prepare_decoder_dataset(
    samples: &[ToySample],
    vocab: &Vocabularies,
    codec: &SpatialCodec,
) -> Vec<DecoderTrainSample> {
    samples
        .iter()
        .map(|s| DecoderTrainSample {
            state: encode_one_hot(&s.graph, vocab).expect("corpus graphs encode"),
            spatial: codec.layout_to_matrix(&s.layout, vocab),
            n_real: s.layout.objects.len(),
            region: synth::region4(s.layout.product_region.as_ref(), &codec.bounds),
        })
        .collect()
}

pub struct TrainedStack {
    pub models: Models,
    pub vq_report: Option<crate::qfeat::TrainReport>,
    pub prior_log: TrainLog,
    pub decoder_log: TrainLog,
}

/// Train VQ (3D), assign features, then train prior and decoder. The
/// corpus is mutated in place by the feature assignment.
pub fn train_all(
    corpus: &mut [ToySample],
    vocab: &Vocabularies,
    cfg: &PipelineConfig,
) -> Result<TrainedStack, PipelineError> {
    let codec = SpatialCodec::new(cfg.kind, toy_bounds(cfg.kind));

    let (vq, vq_report) = if cfg.kind == LayoutKind::ThreeD {
        let features: Vec<Vec<f64>> =
            corpus.iter().flat_map(|s| s.feature_vectors.iter().cloned()).collect();
        let vq_cfg = VqConfig {
            d_in: FEATURE_DIM,
            d_z: FEATURE_DIM,
            n_f: vocab.n_f,
            k_f: vocab.k_f,
            ..cfg.vq.clone()
        };
        let (vq, report) = train_vq(&features, vq_cfg)?;
        assign_features(corpus, &vq, vocab);
        (Some(vq), Some(report))
    } else {
        (None, None)
    };

    let prior_sched =
        MaskedTransitionSchedule::build(cfg.t_prior, vocab, cfg.eta, cfg.kernel_variant)?;
    let dec_sched = GaussianSchedule::cosine(cfg.t_dec)?;

    let mut prior = GraphTransformer::new(GraphTransformerConfig {
        variant: NetVariant::Prior,
        depth: cfg.model.depth,
        d_model: cfg.model.d_model,
        heads: cfg.model.heads,
        d_edge: cfg.model.d_edge,
        d_cond: cfg.model.d_cond,
        n_max: vocab.n_max,
        k_c: vocab.k_c,
        k_f: vocab.k_f,
        k_e: vocab.k_e,
        n_f: vocab.n_f,
        d_l: vocab.d_l(),
        seed: cfg.seed.wrapping_add(10),
    });
    let prior_data = prepare_prior_dataset(corpus, vocab, cfg.model.d_cond);
    let prior_log = train_prior(&mut prior, &prior_data, &prior_sched, vocab, &cfg.prior_train)?;

    let mut decoder = GraphTransformer::new(GraphTransformerConfig {
        variant: NetVariant::Decoder,
        depth: cfg.model.depth,
        d_model: cfg.model.d_model,
        heads: cfg.model.heads,
        d_edge: cfg.model.d_edge,
        d_cond: cfg.model.d_cond,
        n_max: vocab.n_max,
        k_c: vocab.k_c,
        k_f: vocab.k_f,
        k_e: vocab.k_e,
        n_f: vocab.n_f,
        d_l: vocab.d_l(),
        seed: cfg.seed.wrapping_add(11),
    });
    let decoder_data = prepare_decoder_dataset(corpus, vocab, &codec);
    let decoder_log =
        train_decoder(&mut decoder, &decoder_data, &dec_sched, vocab, &cfg.decoder_train)?;

    Ok(TrainedStack {
        models: Models {
            vocab: vocab.clone(),
            codec,
            rules: cfg.rules.clone(),
            vq,
            prior,
            decoder,
            prior_sched,
            dec_sched,
            d_cond: cfg.model.d_cond,
            guidance_weight: cfg.guidance_weight,
        },
        vq_report,
        prior_log,
        decoder_log,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ControllabilityReport {
    pub conditional_irecall: f64,
    pub baseline_irecall: f64,
    pub gap: f64,
    pub n: usize,
}

/// iRecall of instruction-conditioned generation against the same
/// instructions scored on unconditional samples.
pub fn evaluate_controllability(
    models: &Models,
    instructions: &[Instruction],
    n: usize,
    seed: u64,
) -> Result<ControllabilityReport, PipelineError> {
    assert!(!instructions.is_empty());
    let mut cond_total = 0.0;
    let mut base_total = 0.0;
    for i in 0..n {
        let instr = &instructions[i % instructions.len()];
        let required: std::collections::BTreeSet<_> = instr.triplets.iter().cloned().collect();
        let mut rng = derive_rng(seed, "ctl-cond", i as u64);
        let layout = models.generate(instr, None, &mut rng)?;
        cond_total += crate::eval::irecall(&layout, &required, &models.rules)
            .expect("instructions carry triplets");
        let mut rng = derive_rng(seed, "ctl-base", i as u64);
        let baseline = models.generate_unconditional(None, &mut rng)?;
        base_total += crate::eval::irecall(&baseline, &required, &models.rules)
            .expect("instructions carry triplets");
    }
    let conditional = cond_total / n as f64;
    let baseline = base_total / n as f64;
    Ok(ControllabilityReport {
        conditional_irecall: conditional,
        baseline_irecall: baseline,
        gap: conditional - baseline,
        n,
    })
}

/// Standalone kernel verification used by the CLI before any training: an
/// explicit matrix-product check of the cached cumulative scalars, a joint
/// enumeration check of the posterior, and the Gaussian schedule and
/// rotation-codec invariants. Returns one (name, passed, detail) row per
/// check.
pub fn schedule_self_check() -> Vec<(String, bool, String)> {
    let mut rows = Vec::new();

    // column sums and terminal mask mass
    let mut ok = true;
    let mut worst = 0.0f64;
    for &k_prime in &[2usize, 3, 5] {
        for &t_count in &[1usize, 4, 8] {
            for &eta in &[0.0, 0.05, 0.3] {
                let fam = crate::dcat::FamilySchedule::build(t_count, k_prime, eta).unwrap();
                for t in 1..=t_count {
                    for from in 0..fam.state_count() {
                        let s: f64 = fam.transition_column(t, from).iter().sum();
                        worst = worst.max((s - 1.0).abs());
                    }
                }
                ok &= fam.gbar[t_count] == 1.0;
            }
        }
    }
    ok &= worst < 1e-9;
    rows.push(("transition columns sum to one".into(), ok, format!("max dev {worst:.2e}")));

    // forward marginal vs explicit matrix products
    let mut worst = 0.0f64;
    for &k_prime in &[2usize, 3, 4, 5] {
        for &t_count in &[1usize, 3, 8] {
            for &eta in &[0.0, 0.2] {
                let fam = crate::dcat::FamilySchedule::build(t_count, k_prime, eta).unwrap();
                let states = fam.state_count();
                for x0 in 0..k_prime {
                    let mut dist = vec![0.0; states];
                    dist[x0] = 1.0;
                    for t in 1..=t_count {
                        let mut next = vec![0.0; states];
                        for (j, &dj) in dist.iter().enumerate() {
                            if dj > 0.0 {
                                for (m, q) in fam.transition_column(t, j).iter().enumerate() {
                                    next[m] += q * dj;
                                }
                            }
                        }
                        dist = next;
                        let fast = fam.forward_marginal(x0, t);
                        for (a, b) in fast.iter().zip(dist.iter()) {
                            worst = worst.max((a - b).abs());
                        }
                    }
                }
            }
        }
    }
    rows.push((
        "forward marginal matches matrix product".into(),
        worst < 1e-10,
        format!("max dev {worst:.2e}"),
    ));

    // posterior vs joint enumeration on K' = 3, T = 4
    let mut worst = 0.0f64;
    let fam = crate::dcat::FamilySchedule::build(4, 3, 0.1).unwrap();
    for t in 1..=4 {
        for x0 in 0..3 {
            for x_t in 0..fam.state_count() {
                let marg = fam.forward_marginal(x0, t);
                if marg[x_t] <= 0.0 {
                    continue;
                }
                let prev = fam.forward_marginal(x0, t - 1);
                let mut joint: Vec<f64> = (0..fam.state_count())
                    .map(|j| prev[j] * fam.transition_column(t, j)[x_t])
                    .collect();
                let z: f64 = joint.iter().sum();
                for v in &mut joint {
                    *v /= z;
                }
                let got = fam.posterior(x_t, x0, t).unwrap();
                for (a, b) in got.iter().zip(joint.iter()) {
                    worst = worst.max((a - b).abs());
                }
            }
        }
    }
    rows.push((
        "posterior matches joint enumeration".into(),
        worst < 1e-10,
        format!("max dev {worst:.2e}"),
    ));

    // Gaussian schedule invariants
    let mut ok = true;
    for &t in &[1usize, 10, 100] {
        ok &= GaussianSchedule::cosine(t).is_ok();
    }
    rows.push(("gaussian cosine schedule valid".into(), ok, "T in {1, 10, 100}".into()));

    // rotation codec round trip
    let mut worst = 0.0f64;
    let mut r = -std::f64::consts::PI;
    while r < std::f64::consts::PI {
        let back = crate::dgauss::decode_rotation(crate::dgauss::encode_rotation(r)).unwrap();
        worst = worst.max((back - r).abs());
        r += 1e-3;
    }
    rows.push((
        "rotation codec round trip".into(),
        worst < 1e-9,
        format!("max dev {worst:.2e}"),
    ));

    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn self_checks_pass() {
        for (name, ok, detail) in schedule_self_check() {
            assert!(ok, "{name}: {detail}");
        }
    }

    #[test]
    fn tiny_end_to_end_smoke() {
        // a miniature full pipeline: curate, train everything briefly,
        // generate, evaluate
        let kind = LayoutKind::ThreeD;
        let vocab = crate::toydata::toy_vocab(kind);
        let rules = RelationRuleSet::defaults(kind);
        let mut rng = crate::util::rng_from_seed(3);
        let mut corpus = crate::toydata::curate(kind, 24, &vocab, &rules, &mut rng).unwrap();

        let mut cfg = PipelineConfig::desk_default(kind, 5);
        cfg.t_prior = 8;
        cfg.t_dec = 4;
        cfg.model = ModelDims { depth: 1, d_model: 32, heads: 2, d_edge: 8, d_cond: 16 };
        cfg.vq.steps = 30;
        cfg.vq.batch = 8;
        cfg.vq.eval_every = 10;
        cfg.prior_train = TrainConfig { steps: 12, batch: 4, ..cfg.prior_train };
        cfg.decoder_train = TrainConfig { steps: 12, batch: 4, ..cfg.decoder_train };

        let stack = train_all(&mut corpus, &vocab, &cfg).unwrap();
        // feature assignment kept layouts and graphs in sync
        for s in &corpus {
            for (i, obj) in s.layout.objects.iter().enumerate() {
                assert_eq!(obj.features, s.graph.features[i]);
                assert!(obj.features.iter().all(|&f| f < vocab.k_f));
            }
        }
        let mut rng = crate::util::rng_from_seed(7);
        let layout = stack.models.generate(&corpus[0].instruction, None, &mut rng).unwrap();
        layout.validate(&vocab).unwrap();

        let report = evaluate_controllability(
            &stack.models,
            &[corpus[0].instruction.clone()],
            2,
            9,
        )
        .unwrap();
        assert!(report.conditional_irecall >= 0.0 && report.conditional_irecall <= 1.0);

        // resampling at different step counts still works
        let mut models = stack.models;
        models.with_timesteps(5, 3).unwrap();
        let l2 = models.generate(&corpus[0].instruction, None, &mut rng).unwrap();
        l2.validate(&vocab).unwrap();
    }
}
