//! Calibration run: train at reduced budget and report the controllability
//! gap, to size the acceptance experiment.

use layoutforge::core::LayoutKind;
use layoutforge::pipeline::*;
use layoutforge::relrules::RelationRuleSet;
use layoutforge::toydata::*;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n_corpus: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1500);
    let steps: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(800);
    let dec_steps: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(600);
    let eval_n: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(50);
    let batch: usize = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(8);

    let kind = LayoutKind::ThreeD;
    let vocab = toy_vocab(kind);
    let rules = RelationRuleSet::defaults(kind);
    let mut rng = layoutforge::util::rng_from_seed(42);
    let t0 = Instant::now();
    let corpus = curate(kind, n_corpus, &vocab, &rules, &mut rng).unwrap();
    let (mut train, _val, test) = split(corpus, (0.9, 0.02, 0.08), &mut rng).unwrap();
    println!("curate: {:.1}s ({} train / {} test)", t0.elapsed().as_secs_f64(), train.len(), test.len());

    let mut cfg = PipelineConfig::desk_default(kind, 42);
    cfg.vq.steps = 600;
    cfg.prior_train.steps = steps;
    cfg.prior_train.batch = batch;
    cfg.decoder_train.steps = dec_steps;
    cfg.decoder_train.batch = batch;

    let t0 = Instant::now();
    let stack = train_all(&mut train, &vocab, &cfg).unwrap();
    println!("train: {:.1}s (vq mse {:?}, prior loss {:.4}, dec loss {:.4})",
        t0.elapsed().as_secs_f64(),
        stack.vq_report.as_ref().map(|r| r.eval_mse.last().copied()),
        stack.prior_log.final_loss,
        stack.decoder_log.final_loss);

    let instructions: Vec<_> = test.iter().map(|s| s.instruction.clone()).collect();
    let t0 = Instant::now();
    let report = evaluate_controllability(&stack.models, &instructions, eval_n, 7).unwrap();
    println!("eval: {:.1}s", t0.elapsed().as_secs_f64());
    println!(
        "conditional iRecall {:.3}  baseline {:.3}  gap {:.3}",
        report.conditional_irecall, report.baseline_irecall, report.gap
    );
}
