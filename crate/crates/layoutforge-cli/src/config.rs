//! The key=value section config file and its mapping onto the pipeline
//! configuration. Unknown keys are rejected so typos fail loudly.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use layoutforge::core::LayoutKind;
use layoutforge::dcat::KernelVariant;
use layoutforge::pipeline::PipelineConfig;

#[derive(Debug, Clone)]
pub struct FileConfig {
    pub pipeline: PipelineConfig,
    pub n_samples: usize,
    pub split: (f64, f64, f64),
}

pub type Sections = BTreeMap<String, BTreeMap<String, String>>;

pub fn parse_sections(text: &str) -> Result<Sections> {
    let mut sections: Sections = BTreeMap::new();
    let mut current = String::from("");
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            let name = line
                .strip_prefix('[')
                .and_then(|s| s.strip_suffix(']'))
                .ok_or_else(|| anyhow!("line {}: malformed section header", lineno + 1))?;
            current = name.trim().to_string();
            sections.entry(current.clone()).or_default();
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected key = value", lineno + 1))?;
        sections
            .entry(current.clone())
            .or_default()
            .insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(sections)
}

struct Section<'a> {
    name: &'a str,
    entries: BTreeMap<String, String>,
}

impl Section<'_> {
    fn take<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.remove(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|e| anyhow!("[{}] {key} = {v}: {e}", self.name)),
        }
    }

    fn finish(self) -> Result<()> {
        if let Some(k) = self.entries.keys().next() {
            bail!("[{}] unknown key {k:?}", self.name);
        }
        Ok(())
    }
}

fn section<'a>(sections: &mut Sections, name: &'a str) -> Section<'a> {
    Section { name, entries: sections.remove(name).unwrap_or_default() }
}

pub fn load_config(path: &Path, seed_override: Option<u64>) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config file {}", path.display()))?;
    let mut sections = parse_sections(&text)?;

    let mut vocab = section(&mut sections, "vocab");
    let kind = match vocab.take("kind", "3d".to_string())?.as_str() {
        "2d" => LayoutKind::TwoD,
        "3d" => LayoutKind::ThreeD,
        other => bail!("[vocab] kind must be 2d or 3d, got {other:?}"),
    };
    let seed_cfg: u64 = vocab.take("seed", 0u64)?;
    vocab.finish()?;
    let seed = seed_override.unwrap_or(seed_cfg);

    let mut cfg = PipelineConfig::desk_default(kind, seed);

    let mut sched = section(&mut sections, "schedules");
    cfg.t_prior = sched.take("t_prior", cfg.t_prior)?;
    cfg.t_dec = sched.take("t_dec", cfg.t_dec)?;
    cfg.eta.0 = sched.take("eta_c", cfg.eta.0)?;
    cfg.eta.1 = sched.take("eta_f", cfg.eta.1)?;
    cfg.eta.2 = sched.take("eta_e", cfg.eta.2)?;
    cfg.guidance_weight = sched.take("guidance", cfg.guidance_weight)?;
    let kernel: String = sched.take("kernel", "independent-mask".to_string())?;
    cfg.kernel_variant = match kernel.as_str() {
        "independent-mask" => KernelVariant::IndependentMask,
        "uniform" => KernelVariant::Uniform,
        "joint-mask" => KernelVariant::JointMask,
        "gaussian-onehot" => KernelVariant::GaussianOnehot,
        other => bail!("[schedules] unknown kernel {other:?}"),
    };
    sched.finish()?;

    let mut rules = section(&mut sections, "rules");
    cfg.rules.near_threshold = rules.take("near", cfg.rules.near_threshold)?;
    cfg.rules.far_threshold = rules.take("far", cfg.rules.far_threshold)?;
    rules.finish()?;

    let mut model = section(&mut sections, "model");
    cfg.model.depth = model.take("depth", cfg.model.depth)?;
    cfg.model.d_model = model.take("d_model", cfg.model.d_model)?;
    cfg.model.heads = model.take("heads", cfg.model.heads)?;
    cfg.model.d_edge = model.take("d_edge", cfg.model.d_edge)?;
    cfg.model.d_cond = model.take("d_cond", cfg.model.d_cond)?;
    model.finish()?;

    let mut vq = section(&mut sections, "vq");
    cfg.vq.steps = vq.take("steps", cfg.vq.steps)?;
    cfg.vq.batch = vq.take("batch", cfg.vq.batch)?;
    cfg.vq.lr = vq.take("lr", cfg.vq.lr)?;
    cfg.vq.d_model = vq.take("d_model", cfg.vq.d_model)?;
    cfg.vq.eval_every = vq.take("eval_every", cfg.vq.eval_every)?;
    cfg.vq.seed = seed;
    vq.finish()?;

    for (name, train) in
        [("train_prior", &mut cfg.prior_train), ("train_decoder", &mut cfg.decoder_train)]
    {
        let mut sec = section(&mut sections, name);
        train.steps = sec.take("steps", train.steps)?;
        train.batch = sec.take("batch", train.batch)?;
        train.lr = sec.take("lr", train.lr)?;
        train.grad_clip = sec.take("grad_clip", train.grad_clip)?;
        train.cond_dropout = sec.take("cond_dropout", train.cond_dropout)?;
        train.lambda_f = sec.take("lambda_f", train.lambda_f)?;
        train.lambda_e = sec.take("lambda_e", train.lambda_e)?;
        train.lambda_aux = sec.take("lambda_aux", train.lambda_aux)?;
        train.checkpoint_every_epochs =
            sec.take("checkpoint_every_epochs", train.checkpoint_every_epochs)?;
        train.log_every = sec.take("log_every", train.log_every)?;
        let aug: u8 = sec.take("permutation_augmentation", 1u8)?;
        train.permutation_augmentation = aug != 0;
        sec.finish()?;
    }
    cfg.prior_train.seed = seed.wrapping_add(1);
    cfg.decoder_train.seed = seed.wrapping_add(2);

    let mut data = section(&mut sections, "data");
    let n_samples: usize = data.take("n_samples", 5000usize)?;
    let split_str: String = data.take("split", "0.8,0.1,0.1".to_string())?;
    data.finish()?;
    let parts: Vec<f64> = split_str
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| anyhow!("bad split {split_str:?}: {e}")))
        .collect::<Result<_>>()?;
    if parts.len() != 3 {
        bail!("[data] split must have three comma-separated ratios");
    }

    if let Some(name) = sections.keys().next() {
        bail!("unknown config section [{name}]");
    }
    Ok(FileConfig { pipeline: cfg, n_samples, split: (parts[0], parts[1], parts[2]) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_defaults() {
        let text = "\n[vocab]\nkind = 2d\nseed = 9\n\n[schedules]\nt_prior = 25 # inline comment\n";
        let mut sections = parse_sections(text).unwrap();
        assert_eq!(sections["vocab"]["kind"], "2d");
        assert_eq!(sections["schedules"]["t_prior"], "25");
        sections.clear();
    }

    #[test]
    fn rejects_unknown_keys() {
        let dir = std::env::temp_dir().join("lf-config-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.cfg");
        std::fs::write(&path, "[vocab]\nkinnd = 3d\n").unwrap();
        let err = load_config(&path, None).unwrap_err();
        assert!(err.to_string().contains("kinnd"));
    }

    #[test]
    fn seed_override_wins() {
        let dir = std::env::temp_dir().join("lf-config-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("ok.cfg");
        std::fs::write(&path, "[vocab]\nkind = 3d\nseed = 4\n[data]\nn_samples = 10\n").unwrap();
        let cfg = load_config(&path, Some(99)).unwrap();
        assert_eq!(cfg.pipeline.seed, 99);
        assert_eq!(cfg.n_samples, 10);
        let cfg = load_config(&path, None).unwrap();
        assert_eq!(cfg.pipeline.seed, 4);
    }
}
