//! Command-line surface for the layout synthesis pipeline.
//!
//! Every command reads the key=value config file, is reproducible from
//! (config, seed), writes its outputs under --out with write-then-rename,
//! and records a run manifest capturing the command, seed, timesteps and
//! resolved configuration.

mod config;
mod render;

use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};

use config::{load_config, FileConfig};
use layoutforge::core::jsonl::{read_records, write_records, Record, SCHEMA};
use layoutforge::core::LayoutKind;
use layoutforge::eval as metrics;
use layoutforge::model::train::{load_model, save_model};
use layoutforge::pipeline::{self, Models, PipelineConfig};
use layoutforge::qfeat;
use layoutforge::synth::{self, ZeroShotTask};
use layoutforge::toydata::{self, ToySample};
use layoutforge::util::derive_rng;

#[derive(Parser)]
#[command(name = "layoutforge", about = "Instruction-driven 2D/3D layout synthesis")]
struct Cli {
    /// Pipeline config file (key = value sections).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed override; defaults to the config's [vocab] seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; artifacts land in fixed subdirectories.
    #[arg(long, global = true, default_value = "runs/default")]
    out: PathBuf,
    /// Sampling steps as "Tprior+Tdec", e.g. 100+10.
    #[arg(long, global = true)]
    timesteps: Option<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a toy corpus and write train/val/test JSONL files.
    Curate {
        /// Sample count override.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Train the feature VQ (3D corpora).
    TrainVq,
    /// Train the semantic graph prior.
    TrainPrior,
    /// Train the spatial decoder.
    TrainDecoder,
    /// Sample layouts conditioned on held-out instructions and report
    /// metrics.
    Sample {
        #[arg(long, default_value_t = 20)]
        n: usize,
    },
    /// Run a zero-shot task over held-out layouts.
    Task {
        #[arg(long)]
        task: String,
        #[arg(long, default_value_t = 10)]
        n: usize,
    },
    /// Compute metrics over a JSONL file of layouts/tasks/samples.
    Eval {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Render layouts from a JSONL file to SVG.
    Render {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Verify the diffusion kernels against independent oracles.
    ScheduleCheck,
}

/// Exit 1: bad input (config, arguments, missing files). Exit 2: failures
/// at run time.
enum CliError {
    Validation(anyhow::Error),
    Runtime(anyhow::Error),
}

fn validation<E: Into<anyhow::Error>>(e: E) -> CliError {
    CliError::Validation(e.into())
}

fn runtime<E: Into<anyhow::Error>>(e: E) -> CliError {
    CliError::Runtime(e.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn parse_timesteps(s: &str) -> Result<(usize, usize)> {
    let (a, b) = s
        .split_once('+')
        .ok_or_else(|| anyhow!("--timesteps must look like 100+10, got {s:?}"))?;
    Ok((
        a.trim().parse().with_context(|| format!("bad prior steps in {s:?}"))?,
        b.trim().parse().with_context(|| format!("bad decoder steps in {s:?}"))?,
    ))
}

/// Write a file atomically: temp file in the same directory, then rename.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn write_manifest(
    out: &Path,
    command: &str,
    cfg: &PipelineConfig,
    seed: u64,
    timesteps: (usize, usize),
    extra: &BTreeMap<String, serde_json::Value>,
) -> Result<()> {
    let manifest = serde_json::json!({
        "schema": SCHEMA,
        "command": command,
        "seed": seed,
        "timesteps": format!("{}+{}", timesteps.0, timesteps.1),
        "config": cfg,
        "extra": extra,
    });
    write_atomic(
        &out.join(format!("manifest-{command}.json")),
        serde_json::to_string_pretty(&manifest)?.as_bytes(),
    )
}

fn require_config(cli_config: &Option<PathBuf>, seed: Option<u64>) -> Result<FileConfig> {
    let path = cli_config
        .as_ref()
        .ok_or_else(|| anyhow!("--config is required for this command"))?;
    if !path.exists() {
        bail!("config file not found: {}", path.display());
    }
    load_config(path, seed)
}

fn sample_to_record(s: &ToySample) -> Record {
    Record::Sample {
        schema: SCHEMA.into(),
        layout: s.layout.clone(),
        graph: s.graph.clone(),
        instruction: s.instruction.clone(),
        styles: s.styles.clone(),
        feature_vectors: s.feature_vectors.clone(),
    }
}

fn record_to_sample(r: Record) -> Option<ToySample> {
    match r {
        Record::Sample { layout, graph, instruction, styles, feature_vectors, .. } => {
            Some(ToySample { layout, graph, instruction, styles, feature_vectors })
        }
        _ => None,
    }
}

fn read_corpus(path: &Path) -> Result<Vec<ToySample>> {
    let file = fs::File::open(path)
        .with_context(|| format!("cannot open corpus {}", path.display()))?;
    let records = read_records(BufReader::new(file))?;
    Ok(records.into_iter().filter_map(record_to_sample).collect())
}

fn records_to_bytes(records: &[Record]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_records(&mut buf, records)?;
    Ok(buf)
}

fn ckpt_dir(out: &Path) -> PathBuf {
    out.join("ckpt")
}

fn load_models(out: &Path, file_cfg: &FileConfig, timesteps: (usize, usize)) -> Result<Models> {
    let cfg = &file_cfg.pipeline;
    let vocab = toydata::toy_vocab(cfg.kind);
    let dir = ckpt_dir(out);
    let prior = load_model(BufReader::new(
        fs::File::open(dir.join("prior.ckpt"))
            .with_context(|| format!("missing prior checkpoint in {}", dir.display()))?,
    ))?;
    let decoder = load_model(BufReader::new(
        fs::File::open(dir.join("decoder.ckpt"))
            .with_context(|| format!("missing decoder checkpoint in {}", dir.display()))?,
    ))?;
    let vq = if cfg.kind == LayoutKind::ThreeD {
        let path = dir.join("vq_model.ckpt");
        if path.exists() {
            Some(qfeat::VqModel::load(BufReader::new(fs::File::open(path)?))?)
        } else {
            None
        }
    } else {
        None
    };
    let prior_sched = layoutforge::dcat::MaskedTransitionSchedule::build(
        timesteps.0,
        &vocab,
        cfg.eta,
        cfg.kernel_variant,
    )?;
    let dec_sched = layoutforge::dgauss::GaussianSchedule::cosine(timesteps.1)?;
    Ok(Models {
        codec: layoutforge::dgauss::SpatialCodec::new(cfg.kind, toydata::toy_bounds(cfg.kind)),
        rules: cfg.rules.clone(),
        vocab,
        vq,
        prior,
        decoder,
        prior_sched,
        dec_sched,
        d_cond: cfg.model.d_cond,
        guidance_weight: cfg.guidance_weight,
    })
}

fn run(cli: Cli) -> std::result::Result<(), CliError> {
    let file_cfg = require_config(&cli.config, cli.seed).map_err(validation)?;
    let cfg = file_cfg.pipeline.clone();
    let seed = cfg.seed;
    let out = cli.out.clone();
    let timesteps = match &cli.timesteps {
        Some(s) => parse_timesteps(s).map_err(validation)?,
        None => (cfg.t_prior, cfg.t_dec),
    };
    fs::create_dir_all(&out).map_err(|e| runtime(anyhow!(e)))?;

    match &cli.cmd {
        Cmd::Curate { n } => {
            let n = n.unwrap_or(file_cfg.n_samples);
            let vocab = toydata::toy_vocab(cfg.kind);
            let mut rng = derive_rng(seed, "curate", 0);
            let corpus = toydata::curate(cfg.kind, n, &vocab, &cfg.rules, &mut rng)
                .map_err(|e| runtime(anyhow!(e)))?;
            let mut split_rng = derive_rng(seed, "split", 0);
            let (train, val, test) = toydata::split(corpus, file_cfg.split, &mut split_rng)
                .map_err(|e| validation(anyhow!(e)))?;
            for (name, part) in [("train", &train), ("val", &val), ("test", &test)] {
                let records: Vec<Record> = part.iter().map(sample_to_record).collect();
                let bytes = records_to_bytes(&records).map_err(runtime)?;
                write_atomic(&out.join("corpus").join(format!("{name}.jsonl")), &bytes)
                    .map_err(runtime)?;
            }
            let extra = BTreeMap::from([
                ("n_samples".into(), serde_json::json!(n)),
                ("split".into(), serde_json::json!([train.len(), val.len(), test.len()])),
            ]);
            write_manifest(&out, "curate", &cfg, seed, timesteps, &extra).map_err(runtime)?;
            println!("curated {} samples into {}", n, out.join("corpus").display());
            Ok(())
        }

        Cmd::TrainVq => {
            if cfg.kind != LayoutKind::ThreeD {
                return Err(validation(anyhow!("train-vq applies to 3D corpora only")));
            }
            let corpus = read_corpus(&out.join("corpus/train.jsonl")).map_err(validation)?;
            let features: Vec<Vec<f64>> =
                corpus.iter().flat_map(|s| s.feature_vectors.iter().cloned()).collect();
            let vocab = toydata::toy_vocab(cfg.kind);
            let vq_cfg = qfeat::VqConfig {
                d_in: toydata::FEATURE_DIM,
                d_z: toydata::FEATURE_DIM,
                n_f: vocab.n_f,
                k_f: vocab.k_f,
                ..cfg.vq.clone()
            };
            let (model, report) =
                qfeat::train_vq(&features, vq_cfg).map_err(|e| runtime(anyhow!(e)))?;
            let mut buf = Vec::new();
            model.save(&mut buf).map_err(|e| runtime(anyhow!(e)))?;
            write_atomic(&ckpt_dir(&out).join("vq_model.ckpt"), &buf).map_err(runtime)?;
            let mut cb = Vec::new();
            qfeat::save_codebook(&mut cb, &model.codebook()).map_err(|e| runtime(anyhow!(e)))?;
            write_atomic(&ckpt_dir(&out).join("vq_codebook.lfvq"), &cb).map_err(runtime)?;
            let mut csv = String::from("checkpoint,eval_mse\n");
            for (i, mse) in report.eval_mse.iter().enumerate() {
                csv.push_str(&format!("{i},{mse:.8}\n"));
            }
            write_atomic(&out.join("reports/vq_train.csv"), csv.as_bytes()).map_err(runtime)?;
            write_manifest(&out, "train-vq", &cfg, seed, timesteps, &BTreeMap::new())
                .map_err(runtime)?;
            println!("vq trained: final loss {:.5}", report.final_loss);
            Ok(())
        }

        Cmd::TrainPrior | Cmd::TrainDecoder => {
            let is_prior = matches!(cli.cmd, Cmd::TrainPrior);
            let mut corpus = read_corpus(&out.join("corpus/train.jsonl")).map_err(validation)?;
            let vocab = toydata::toy_vocab(cfg.kind);
            if cfg.kind == LayoutKind::ThreeD {
                let path = ckpt_dir(&out).join("vq_model.ckpt");
                let file = fs::File::open(&path).map_err(|_| {
                    validation(anyhow!("run train-vq first: missing {}", path.display()))
                })?;
                let vq = qfeat::VqModel::load(BufReader::new(file))
                    .map_err(|e| runtime(anyhow!(e)))?;
                pipeline::assign_features(&mut corpus, &vq, &vocab);
            }
            let (name, csv_name) = if is_prior {
                ("prior", "prior_train.csv")
            } else {
                ("decoder", "decoder_train.csv")
            };
            let log = if is_prior {
                let sched = layoutforge::dcat::MaskedTransitionSchedule::build(
                    cfg.t_prior,
                    &vocab,
                    cfg.eta,
                    cfg.kernel_variant,
                )
                .map_err(|e| runtime(anyhow!(e)))?;
                let mut model =
                    layoutforge::model::GraphTransformer::new(prior_config(&cfg, &vocab));
                let data = pipeline::prepare_prior_dataset(&corpus, &vocab, cfg.model.d_cond);
                let log = layoutforge::model::train::train_prior(
                    &mut model,
                    &data,
                    &sched,
                    &vocab,
                    &cfg.prior_train,
                )
                .map_err(|e| runtime(anyhow!(e)))?;
                let mut buf = Vec::new();
                save_model(&mut buf, &model).map_err(|e| runtime(anyhow!(e)))?;
                write_atomic(&ckpt_dir(&out).join("prior.ckpt"), &buf).map_err(runtime)?;
                log
            } else {
                let sched = layoutforge::dgauss::GaussianSchedule::cosine(cfg.t_dec)
                    .map_err(|e| runtime(anyhow!(e)))?;
                let codec =
                    layoutforge::dgauss::SpatialCodec::new(cfg.kind, toydata::toy_bounds(cfg.kind));
                let mut model =
                    layoutforge::model::GraphTransformer::new(decoder_config(&cfg, &vocab));
                let data = pipeline::prepare_decoder_dataset(&corpus, &vocab, &codec);
                let log = layoutforge::model::train::train_decoder(
                    &mut model,
                    &data,
                    &sched,
                    &vocab,
                    &cfg.decoder_train,
                )
                .map_err(|e| runtime(anyhow!(e)))?;
                let mut buf = Vec::new();
                save_model(&mut buf, &model).map_err(|e| runtime(anyhow!(e)))?;
                write_atomic(&ckpt_dir(&out).join("decoder.ckpt"), &buf).map_err(runtime)?;
                log
            };
            write_atomic(&out.join("reports").join(csv_name), log.csv.as_bytes())
                .map_err(runtime)?;
            write_manifest(&out, &format!("train-{name}"), &cfg, seed, timesteps, &BTreeMap::new())
                .map_err(runtime)?;
            println!("{name} trained: final loss {:.5}", log.final_loss);
            Ok(())
        }

        Cmd::Sample { n } => {
            let models = load_models(&out, &file_cfg, timesteps).map_err(validation)?;
            let test = read_corpus(&out.join("corpus/test.jsonl")).map_err(validation)?;
            if test.is_empty() {
                return Err(validation(anyhow!("test corpus is empty")));
            }
            let mut records = Vec::with_capacity(*n);
            for i in 0..*n {
                let sample = &test[i % test.len()];
                let mut rng = derive_rng(seed, "sample", i as u64);
                let region = sample.layout.product_region;
                let layout = models
                    .generate(&sample.instruction, region, &mut rng)
                    .map_err(|e| runtime(anyhow!(e)))?;
                records.push(Record::Task {
                    schema: SCHEMA.into(),
                    task: "generate".into(),
                    instruction: sample.instruction.clone(),
                    known: None,
                    result: layout,
                });
            }
            let bytes = records_to_bytes(&records).map_err(runtime)?;
            let tag = format!("{}+{}", timesteps.0, timesteps.1);
            let path = out.join("samples").join(format!("samples_{tag}.jsonl"));
            write_atomic(&path, &bytes).map_err(runtime)?;
            let report = eval_records(&records, &models).map_err(runtime)?;
            let report_path = out.join("reports").join(format!("sample_metrics_{tag}.json"));
            write_atomic(
                &report_path,
                serde_json::to_string_pretty(&report.json).unwrap().as_bytes(),
            )
            .map_err(runtime)?;
            let extra = BTreeMap::from([
                ("n".into(), serde_json::json!(n)),
                ("samples".into(), serde_json::json!(path.display().to_string())),
            ]);
            write_manifest(&out, "sample", &cfg, seed, timesteps, &extra).map_err(runtime)?;
            println!("sampled {} layouts at T = {tag} -> {}", n, path.display());
            Ok(())
        }

        Cmd::Task { task, n } => {
            let task_kind = ZeroShotTask::parse(task)
                .ok_or_else(|| validation(anyhow!("unknown task {task:?}")))?;
            let models = load_models(&out, &file_cfg, timesteps).map_err(validation)?;
            let test = read_corpus(&out.join("corpus/test.jsonl")).map_err(validation)?;
            if test.is_empty() {
                return Err(validation(anyhow!("test corpus is empty")));
            }
            let mut records = Vec::with_capacity(*n);
            for i in 0..*n {
                let sample = &test[i % test.len()];
                let mut rng = derive_rng(seed, "task", i as u64);
                let known = match task_kind {
                    ZeroShotTask::Unconditional => None,
                    ZeroShotTask::Completion => {
                        // keep the first half of the objects as the partial scene
                        let keep = sample.layout.objects.len().div_ceil(2);
                        let mut partial_layout = sample.layout.clone();
                        partial_layout.objects.truncate(keep);
                        Some(partial_layout)
                    }
                    _ => Some(sample.layout.clone()),
                };
                let partial =
                    synth::task_partial(task_kind, known.as_ref(), &models.vocab, &models.codec)
                        .map_err(|e| runtime(anyhow!(e)))?;
                let cond = models.condition(&sample.instruction);
                let result = synth::zero_shot_guided(
                    task_kind,
                    &partial,
                    &cond,
                    &models.prior,
                    &models.decoder,
                    &models.prior_sched,
                    &models.dec_sched,
                    &models.vocab,
                    &models.codec,
                    sample.layout.product_region,
                    models.guidance_weight,
                    &mut rng,
                )
                .map_err(|e| runtime(anyhow!(e)))?;
                records.push(Record::Task {
                    schema: SCHEMA.into(),
                    task: task.clone(),
                    instruction: sample.instruction.clone(),
                    known,
                    result,
                });
            }
            let bytes = records_to_bytes(&records).map_err(runtime)?;
            let path = out.join("samples").join(format!("task_{task}.jsonl"));
            write_atomic(&path, &bytes).map_err(runtime)?;
            let extra = BTreeMap::from([("n".into(), serde_json::json!(n))]);
            write_manifest(&out, &format!("task-{task}"), &cfg, seed, timesteps, &extra)
                .map_err(runtime)?;
            println!("ran task {task} on {n} layouts -> {}", path.display());
            Ok(())
        }

        Cmd::Eval { input } => {
            let models = load_models(&out, &file_cfg, timesteps).map_err(validation)?;
            let path = input.clone().unwrap_or_else(|| {
                out.join("samples")
                    .join(format!("samples_{}+{}.jsonl", timesteps.0, timesteps.1))
            });
            let file = fs::File::open(&path)
                .map_err(|_| validation(anyhow!("cannot open {}", path.display())))?;
            let records =
                read_records(BufReader::new(file)).map_err(|e| validation(anyhow!(e)))?;
            let report = eval_records(&records, &models).map_err(runtime)?;
            write_atomic(
                &out.join("reports/eval.json"),
                serde_json::to_string_pretty(&report.json).unwrap().as_bytes(),
            )
            .map_err(runtime)?;
            write_atomic(&out.join("reports/eval_per_sample.csv"), report.csv.as_bytes())
                .map_err(runtime)?;
            write_manifest(&out, "eval", &cfg, seed, timesteps, &BTreeMap::new())
                .map_err(runtime)?;
            println!("{}", serde_json::to_string_pretty(&report.json).unwrap());
            Ok(())
        }

        Cmd::Render { input } => {
            let path = input.clone().unwrap_or_else(|| {
                out.join("samples")
                    .join(format!("samples_{}+{}.jsonl", timesteps.0, timesteps.1))
            });
            let file = fs::File::open(&path)
                .map_err(|_| validation(anyhow!("cannot open {}", path.display())))?;
            let records =
                read_records(BufReader::new(file)).map_err(|e| validation(anyhow!(e)))?;
            let vocab = toydata::toy_vocab(cfg.kind);
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("layout");
            let mut count = 0usize;
            for (i, rec) in records.iter().enumerate() {
                let layout = match rec {
                    Record::Layout { layout, .. } => layout,
                    Record::Sample { layout, .. } => layout,
                    Record::Task { result, .. } => result,
                    _ => continue,
                };
                let bytes = render::render_svg(layout, &vocab.category_names);
                write_atomic(&out.join("svg").join(format!("{stem}_{i:04}.svg")), &bytes)
                    .map_err(runtime)?;
                count += 1;
            }
            write_manifest(&out, "render", &cfg, seed, timesteps, &BTreeMap::new())
                .map_err(runtime)?;
            println!("rendered {count} layouts into {}", out.join("svg").display());
            Ok(())
        }

        Cmd::ScheduleCheck => {
            let rows = pipeline::schedule_self_check();
            let mut all_ok = true;
            for (name, ok, detail) in &rows {
                println!("[{}] {name}: {detail}", if *ok { "PASS" } else { "FAIL" });
                all_ok &= *ok;
            }
            write_manifest(&out, "schedule-check", &cfg, seed, timesteps, &BTreeMap::new())
                .map_err(runtime)?;
            if all_ok {
                Ok(())
            } else {
                Err(runtime(anyhow!("kernel self-checks failed")))
            }
        }
    }
}

fn prior_config(
    cfg: &PipelineConfig,
    vocab: &layoutforge::core::Vocabularies,
) -> layoutforge::model::GraphTransformerConfig {
    layoutforge::model::GraphTransformerConfig {
        variant: layoutforge::model::NetVariant::Prior,
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
    }
}

fn decoder_config(
    cfg: &PipelineConfig,
    vocab: &layoutforge::core::Vocabularies,
) -> layoutforge::model::GraphTransformerConfig {
    layoutforge::model::GraphTransformerConfig {
        variant: layoutforge::model::NetVariant::Decoder,
        seed: cfg.seed.wrapping_add(11),
        ..prior_config(cfg, vocab)
    }
}

struct EvalReport {
    json: serde_json::Value,
    csv: String,
}

/// Metric table over a record file: iRecall wherever an instruction is
/// present, the graphic metrics for 2D layouts, color error for 2D task
/// records against their known layout, and the stylization gap for 3D
/// stylize records when a VQ model is available.
fn eval_records(records: &[Record], models: &Models) -> Result<EvalReport> {
    let mut csv = String::from(
        "index,irecall,val,ove,nali,und_l,und_s,occ,color_mse_ab,color_mae_l,delta\n",
    );
    let mut table: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let push = |table: &mut BTreeMap<&'static str, Vec<f64>>, key: &'static str, v: f64| {
        table.entry(key).or_default().push(v);
    };

    for (i, rec) in records.iter().enumerate() {
        let (layout, instruction, known, task) = match rec {
            Record::Layout { layout, .. } => (layout, None, None, None),
            Record::Sample { layout, instruction, .. } => (layout, Some(instruction), None, None),
            Record::Task { result, instruction, known, task, .. } => {
                (result, Some(instruction), known.as_ref(), Some(task.as_str()))
            }
            _ => continue,
        };
        let mut row: Vec<String> = vec![i.to_string()];

        let irecall = instruction.filter(|ins| !ins.triplets.is_empty()).map(|ins| {
            let required: std::collections::BTreeSet<_> = ins.triplets.iter().cloned().collect();
            metrics::irecall(layout, &required, &models.rules).expect("non-empty requirement")
        });
        if let Some(v) = irecall {
            push(&mut table, "irecall", v);
        }
        row.push(irecall.map(|v| format!("{v:.4}")).unwrap_or_default());

        if layout.kind == LayoutKind::TwoD {
            let val = metrics::validity(layout);
            push(&mut table, "val", val);
            row.push(format!("{val:.4}"));
            let ove = metrics::overlay(layout, models.vocab.underlay_category);
            push(&mut table, "ove", ove);
            row.push(format!("{ove:.4}"));
            let nali = metrics::non_alignment(layout).unwrap_or(0.0);
            push(&mut table, "nali", nali);
            row.push(format!("{nali:.4}"));
            let und = models
                .vocab
                .underlay_category
                .and_then(|u| metrics::underlay_effectiveness(layout, u));
            match und {
                Some((l, s)) => {
                    push(&mut table, "und_l", l);
                    push(&mut table, "und_s", s);
                    row.push(format!("{l:.4}"));
                    row.push(format!("{s:.4}"));
                }
                None => {
                    row.push(String::new());
                    row.push(String::new());
                }
            }
            let occ = metrics::occlusion(layout).ok();
            if let Some(o) = occ {
                push(&mut table, "occ", o);
            }
            row.push(occ.map(|o| format!("{o:.4}")).unwrap_or_default());

            // predicted colors vs the known layout's colors
            if let Some(known) = known {
                let bins = layoutforge::qfeat::LabBinning::shared();
                let mut pred = Vec::new();
                let mut reference = Vec::new();
                for (a, b) in layout.objects.iter().zip(known.objects.iter()) {
                    for (fa, fb) in a.features.iter().zip(b.features.iter()) {
                        if *fa < models.vocab.k_f && *fb < models.vocab.k_f {
                            pred.push(bins.dequantize(*fa));
                            reference.push(bins.dequantize(*fb));
                        }
                    }
                }
                if !pred.is_empty() {
                    let (mse, mae) = metrics::color_error(&pred, &reference)?;
                    push(&mut table, "color_mse_ab", mse);
                    push(&mut table, "color_mae_l", mae);
                    row.push(format!("{mse:.4}"));
                    row.push(format!("{mae:.4}"));
                } else {
                    row.push(String::new());
                    row.push(String::new());
                }
            } else {
                row.push(String::new());
                row.push(String::new());
            }
            row.push(String::new()); // delta is a 3D stylization metric
        } else {
            for _ in 0..8 {
                row.push(String::new());
            }
            // stylization gap when the features decode through the VQ
            let delta = match (task, models.vq.as_ref(), instruction) {
                (Some("stylize"), Some(vq), Some(ins)) if !ins.style_tags.is_empty() => {
                    let style = ins.style_tags[0].1;
                    let mut feats = Vec::new();
                    let mut styled = Vec::new();
                    let mut classes = Vec::new();
                    for obj in &layout.objects {
                        if obj.features.iter().all(|&f| f < models.vocab.k_f) {
                            feats.push(vq.decode_indices(&obj.features));
                            styled.push(qfeat::styled_reference(
                                obj.category,
                                style,
                                toydata::FEATURE_DIM,
                            ));
                            classes.push(qfeat::class_embedding(
                                obj.category,
                                toydata::FEATURE_DIM,
                            ));
                        }
                    }
                    if feats.is_empty() {
                        None
                    } else {
                        metrics::stylization_delta(&feats, &styled, &classes).ok()
                    }
                }
                _ => None,
            };
            if let Some(d) = delta {
                push(&mut table, "delta", d);
                row.push(format!("{d:.4}"));
            } else {
                row.push(String::new());
            }
        }
        csv.push_str(&row.join(","));
        csv.push('\n');
    }

    let mut json = serde_json::Map::new();
    for (key, values) in table {
        let summary = metrics::summarize(&values);
        json.insert(key.to_string(), serde_json::to_value(summary)?);
    }
    Ok(EvalReport { json: serde_json::Value::Object(json), csv })
}
