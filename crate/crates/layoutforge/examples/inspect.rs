//! Diagnostic: decompose controllability into stages.
//! - graph recall: instructed triplet present among generated graph edges
//! - layout recall: instructed triplet realized geometrically
//! - oracle-graph recall: decoder run on the ground-truth graph

use layoutforge::core::*;
use layoutforge::pipeline::*;
use layoutforge::relrules::*;
use layoutforge::toydata::*;
use std::collections::BTreeSet;

fn graph_recall(g: &SemanticGraph, vocab: &Vocabularies, trips: &[RelationTriplet]) -> f64 {
    let full = g.full_relation_matrix(vocab);
    let mut hit = 0usize;
    for t in trips {
        let mut found = false;
        for i in 0..g.n {
            for j in 0..g.n {
                if i != j
                    && g.categories[i] == t.subject
                    && g.categories[j] == t.object
                    && full[i][j] == t.relation
                {
                    found = true;
                }
            }
        }
        hit += found as usize;
    }
    hit as f64 / trips.len() as f64
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n_corpus: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let steps: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1500);
    let dec_steps: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1000);
    let n_eval: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(60);
    let batch: usize = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(12);
    let lambda_aux: f64 = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(0.01);
    let lr: f64 = args.get(7).and_then(|s| s.parse().ok()).unwrap_or(3e-4);
    let lambda_f: f64 = args.get(8).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let guidance: f64 = args.get(9).and_then(|s| s.parse().ok()).unwrap_or(0.0);

    let kind = LayoutKind::ThreeD;
    let vocab = toy_vocab(kind);
    let rules = RelationRuleSet::defaults(kind);
    let mut rng = layoutforge::util::rng_from_seed(42);
    let corpus = curate(kind, n_corpus, &vocab, &rules, &mut rng).unwrap();
    let (mut train, _, test) = split(corpus, (0.92, 0.0, 0.08), &mut rng).unwrap();

    let mut cfg = PipelineConfig::desk_default(kind, 42);
    cfg.vq.steps = 600;
    cfg.prior_train.steps = steps;
    cfg.prior_train.batch = batch;
    cfg.prior_train.lambda_aux = lambda_aux;
    cfg.prior_train.lr = lr;
    cfg.prior_train.lambda_f = lambda_f;
    cfg.guidance_weight = guidance;
    cfg.decoder_train.steps = dec_steps;
    cfg.decoder_train.batch = batch;

    let t0 = std::time::Instant::now();
    let stack = train_all(&mut train, &vocab, &cfg).unwrap();
    eprintln!(
        "train {:.0}s prior_loss {:.4} dec_loss {:.4}",
        t0.elapsed().as_secs_f64(),
        stack.prior_log.final_loss,
        stack.decoder_log.final_loss
    );

    // sanity: corpus graphs satisfy their own instructions at graph level
    let mut sanity = 0.0;
    for s in test.iter().take(30) {
        sanity += graph_recall(&s.graph, &vocab, &s.instruction.triplets);
    }
    eprintln!("corpus graph-recall sanity: {:.3}", sanity / 30.0);

    // train-set conditional graph recall (memorization probe)
    let mut train_g = 0.0;
    for i in 0..30usize {
        let sample = &train[i * 7 % train.len()];
        let mut rng = layoutforge::util::derive_rng(8, "train-probe", i as u64);
        let cond = stack.models.condition(&sample.instruction);
        let g = layoutforge::synth::sample_prior_guided(
            &cond, &stack.models.prior, &stack.models.prior_sched, &vocab, guidance, &mut rng,
        ).unwrap();
        train_g += graph_recall(&g, &vocab, &sample.instruction.triplets);
    }
    eprintln!("train-set conditional graph recall: {:.3}", train_g / 30.0);

    // baseline and oracle realization are guidance-independent
    let mut oracle_l_recall = 0.0;
    let mut base_recall = 0.0;
    for i in 0..n_eval {
        let sample = &test[i % test.len()];
        let required: BTreeSet<_> = sample.instruction.triplets.iter().cloned().collect();
        let mut rng = layoutforge::util::derive_rng(7, "oracle", i as u64);
        let oracle_layout = layoutforge::synth::sample_layout(
            &sample.graph,
            &stack.models.decoder,
            &stack.models.dec_sched,
            &vocab,
            &stack.models.codec,
            None,
            &mut rng,
        )
        .unwrap();
        oracle_l_recall += layoutforge::eval::irecall(&oracle_layout, &required, &rules).unwrap();
        let mut rng2 = layoutforge::util::derive_rng(7, "diagbase", i as u64);
        let base = stack.models.generate_unconditional(None, &mut rng2).unwrap();
        base_recall += layoutforge::eval::irecall(&base, &required, &rules).unwrap();
    }
    let n = n_eval as f64;
    println!(
        "oracle-graph layout recall {:.3} | baseline {:.3}",
        oracle_l_recall / n,
        base_recall / n
    );

    for w in [guidance, guidance + 2.0, guidance + 5.0] {
        let mut g_recall = 0.0;
        let mut l_recall = 0.0;
        for i in 0..n_eval {
            let sample = &test[i % test.len()];
            let trips = &sample.instruction.triplets;
            let required: BTreeSet<_> = trips.iter().cloned().collect();
            let mut rng = layoutforge::util::derive_rng(7, "diag", i as u64);
            let cond = stack.models.condition(&sample.instruction);
            let g = layoutforge::synth::sample_prior_guided(
                &cond,
                &stack.models.prior,
                &stack.models.prior_sched,
                &vocab,
                w,
                &mut rng,
            )
            .unwrap();
            g_recall += graph_recall(&g, &vocab, trips);
            let layout = layoutforge::synth::sample_layout(
                &g,
                &stack.models.decoder,
                &stack.models.dec_sched,
                &vocab,
                &stack.models.codec,
                None,
                &mut rng,
            )
            .unwrap();
            l_recall += layoutforge::eval::irecall(&layout, &required, &rules).unwrap();
        }
        println!(
            "w = {:.1}: graph recall {:.3} | layout recall {:.3} | gap {:.3}",
            w,
            g_recall / n,
            l_recall / n,
            l_recall / n - base_recall / n
        );
    }
}
