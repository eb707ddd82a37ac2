//! Flat `key = value` run configuration.

use std::path::{Path, PathBuf};

use crate::causal::{CcmdConfig, Placement};
use crate::denoiser::{format_domains, parse_domains, FusionMode, HfaConfig, ModelConfig};
use crate::error::{Error, Result};
use crate::objective::{default_layer_weights, LossWeights};
use crate::schedule::SamplerVariance;

#[derive(Clone, Debug, PartialEq)]
pub struct OptimConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub batch: usize,
    pub iters: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            batch: 64,
            iters: 2000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionConfig {
    pub steps: usize,
    pub guidance_scale: f64,
    pub cond_dropout: f64,
    pub variance: SamplerVariance,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        DiffusionConfig {
            steps: 50,
            guidance_scale: 4.0,
            cond_dropout: 0.1,
            variance: SamplerVariance::Posterior,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub model: ModelConfig,
    pub diffusion: DiffusionConfig,
    pub lambda_fcf: f64,
    pub lambda_p: f64,
    /// `None` selects the linear ramp for the configured block count.
    pub layer_weights: Option<Vec<f64>>,
    pub ccmd: CcmdConfig,
    pub optim: OptimConfig,
    pub corpus_size: usize,
    /// Read the corpus from here instead of generating it.
    pub corpus: Option<PathBuf>,
    pub checkpoint_every: usize,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            model: ModelConfig::default(),
            diffusion: DiffusionConfig::default(),
            lambda_fcf: 1.0,
            lambda_p: 10.0,
            layer_weights: None,
            ccmd: CcmdConfig::default(),
            optim: OptimConfig::default(),
            corpus_size: 64,
            corpus: None,
            checkpoint_every: 500,
            out: PathBuf::from("run"),
        }
    }
}

/// Every recognised key in echo order.
pub const KEYS: &[&str] = &[
    "seed",
    "model.J",
    "model.D",
    "model.M",
    "model.frames",
    "model.s",
    "model.heads",
    "model.ff_mult",
    "model.d_text",
    "model.domains",
    "model.fusion",
    "hfa.fft",
    "hfa.joint",
    "hfa.high",
    "diffusion.T",
    "diffusion.guidance_scale",
    "diffusion.cond_dropout",
    "diffusion.variance",
    "loss.lambda_fcf",
    "loss.lambda_p",
    "loss.layer_weights",
    "ccmd.enabled",
    "ccmd.placement",
    "ccmd.domains",
    "optim.lr",
    "optim.beta1",
    "optim.beta2",
    "optim.eps",
    "optim.weight_decay",
    "optim.batch",
    "optim.iters",
    "data.corpus_size",
    "data.corpus",
    "train.checkpoint_every",
    "paths.out",
];

/// Keys that change the parameter layout or the network function.
pub const MODEL_KEYS: &[&str] = &[
    "model.J",
    "model.D",
    "model.M",
    "model.frames",
    "model.s",
    "model.heads",
    "model.ff_mult",
    "model.d_text",
    "model.domains",
    "model.fusion",
    "hfa.fft",
    "hfa.joint",
    "hfa.high",
    "ccmd.enabled",
    "ccmd.placement",
    "ccmd.domains",
    "diffusion.T",
];

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("`{key}`: expected true/false, got `{v}`"))),
    }
}

fn cfg_err(key: &str, e: Error) -> Error {
    Error::Config(format!("`{key}`: {e}"))
}

fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let m = &mut self.model;
        match key {
            "seed" => self.seed = parse_num(key, v)?,
            "model.J" => m.blocks = parse_num(key, v)?,
            "model.D" => m.dim = parse_num(key, v)?,
            "model.M" => m.joints = parse_num(key, v)?,
            "model.frames" => m.frames = parse_num(key, v)?,
            "model.s" => m.stride = parse_num(key, v)?,
            "model.heads" => m.heads = parse_num(key, v)?,
            "model.ff_mult" => m.ff_mult = parse_num(key, v)?,
            "model.d_text" => m.d_text = parse_num(key, v)?,
            "model.domains" => m.domains = parse_domains(v).map_err(|e| cfg_err(key, e))?,
            "model.fusion" => m.fusion = v.parse::<FusionMode>().map_err(|e| cfg_err(key, e))?,
            "hfa.fft" => m.hfa.fft = parse_bool(key, v)?,
            "hfa.joint" => m.hfa.joint = parse_bool(key, v)?,
            "hfa.high" => m.hfa.high = parse_bool(key, v)?,
            "diffusion.T" => self.diffusion.steps = parse_num(key, v)?,
            "diffusion.guidance_scale" => self.diffusion.guidance_scale = parse_num(key, v)?,
            "diffusion.cond_dropout" => self.diffusion.cond_dropout = parse_num(key, v)?,
            "diffusion.variance" => {
                self.diffusion.variance = v.parse::<SamplerVariance>().map_err(|e| cfg_err(key, e))?
            }
            "loss.lambda_fcf" => self.lambda_fcf = parse_num(key, v)?,
            "loss.lambda_p" => self.lambda_p = parse_num(key, v)?,
            "loss.layer_weights" => {
                self.layer_weights = if v == "auto" {
                    None
                } else {
                    Some(
                        v.trim_matches(|c| c == '{' || c == '}' || c == '[' || c == ']')
                            .split(',')
                            .map(|p| parse_num(key, p.trim()))
                            .collect::<Result<_>>()?,
                    )
                }
            }
            "ccmd.enabled" => self.ccmd.enabled = parse_bool(key, v)?,
            "ccmd.placement" => self.ccmd.placement = v.parse::<Placement>().map_err(|e| cfg_err(key, e))?,
            "ccmd.domains" => self.ccmd.domains = parse_domains(v).map_err(|e| cfg_err(key, e))?,
            "optim.lr" => self.optim.lr = parse_num(key, v)?,
            "optim.beta1" => self.optim.beta1 = parse_num(key, v)?,
            "optim.beta2" => self.optim.beta2 = parse_num(key, v)?,
            "optim.eps" => self.optim.eps = parse_num(key, v)?,
            "optim.weight_decay" => self.optim.weight_decay = parse_num(key, v)?,
            "optim.batch" => self.optim.batch = parse_num(key, v)?,
            "optim.iters" => self.optim.iters = parse_num(key, v)?,
            "data.corpus_size" => self.corpus_size = parse_num(key, v)?,
            "data.corpus" => self.corpus = if v.is_empty() { None } else { Some(PathBuf::from(v)) },
            "train.checkpoint_every" => self.checkpoint_every = parse_num(key, v)?,
            "paths.out" => self.out = PathBuf::from(v),
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let m = &self.model;
        let b = |v: bool| v.to_string();
        Some(match key {
            "seed" => self.seed.to_string(),
            "model.J" => m.blocks.to_string(),
            "model.D" => m.dim.to_string(),
            "model.M" => m.joints.to_string(),
            "model.frames" => m.frames.to_string(),
            "model.s" => m.stride.to_string(),
            "model.heads" => m.heads.to_string(),
            "model.ff_mult" => m.ff_mult.to_string(),
            "model.d_text" => m.d_text.to_string(),
            "model.domains" => format_domains(&m.domains),
            "model.fusion" => m.fusion.to_string(),
            "hfa.fft" => b(m.hfa.fft),
            "hfa.joint" => b(m.hfa.joint),
            "hfa.high" => b(m.hfa.high),
            "diffusion.T" => self.diffusion.steps.to_string(),
            "diffusion.guidance_scale" => fmt_f64(self.diffusion.guidance_scale),
            "diffusion.cond_dropout" => fmt_f64(self.diffusion.cond_dropout),
            "diffusion.variance" => self.diffusion.variance.to_string(),
            "loss.lambda_fcf" => fmt_f64(self.lambda_fcf),
            "loss.lambda_p" => fmt_f64(self.lambda_p),
            "loss.layer_weights" => match &self.layer_weights {
                None => "auto".into(),
                Some(w) => w.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(", "),
            },
            "ccmd.enabled" => b(self.ccmd.enabled),
            "ccmd.placement" => self.ccmd.placement.to_string(),
            "ccmd.domains" => format_domains(&self.ccmd.domains),
            "optim.lr" => fmt_f64(self.optim.lr),
            "optim.beta1" => fmt_f64(self.optim.beta1),
            "optim.beta2" => fmt_f64(self.optim.beta2),
            "optim.eps" => fmt_f64(self.optim.eps),
            "optim.weight_decay" => fmt_f64(self.optim.weight_decay),
            "optim.batch" => self.optim.batch.to_string(),
            "optim.iters" => self.optim.iters.to_string(),
            "data.corpus_size" => self.corpus_size.to_string(),
            "data.corpus" => self.corpus.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            "train.checkpoint_every" => self.checkpoint_every.to_string(),
            "paths.out" => self.out.display().to_string(),
            _ => return None,
        })
    }

    /// Applies `key = value` lines on top of the defaults.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", no + 1)))?;
            self.set(k.trim(), v)
                .map_err(|e| Error::Config(format!("line {}: {e}", no + 1)))?;
        }
        self.validate()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    pub fn to_text(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k} = {}\n", self.get(k).expect("known key")))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.loss_weights()?;
        let o = &self.optim;
        if !(o.lr > 0.0) {
            return Err(Error::Config(format!("optim.lr must be > 0, got {}", o.lr)));
        }
        if o.batch == 0 {
            return Err(Error::Config("optim.batch must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.diffusion.cond_dropout) {
            return Err(Error::Config("diffusion.cond_dropout must lie in [0, 1]".into()));
        }
        if self.diffusion.steps == 0 {
            return Err(Error::Config("diffusion.T must be >= 1".into()));
        }
        if self.diffusion.guidance_scale < 0.0 {
            return Err(Error::Config("diffusion.guidance_scale must be >= 0".into()));
        }
        if self.corpus_size == 0 {
            return Err(Error::Config("data.corpus_size must be >= 1".into()));
        }
        Ok(())
    }

    pub fn loss_weights(&self) -> Result<LossWeights> {
        let layers = self
            .layer_weights
            .clone()
            .unwrap_or_else(|| default_layer_weights(self.model.blocks));
        if layers.len() != self.model.blocks {
            return Err(Error::Config(format!(
                "loss.layer_weights has {} entries for {} blocks",
                layers.len(),
                self.model.blocks
            )));
        }
        LossWeights::new(self.lambda_fcf, self.lambda_p, layers).map_err(|e| Error::Config(e.to_string()))
    }

    /// Keys in `keys` whose values differ between the two configs.
    pub fn diff(&self, other: &RunConfig, keys: &[&str]) -> Vec<String> {
        keys.iter()
            .filter(|k| self.get(k) != other.get(k))
            .map(|k| k.to_string())
            .collect()
    }

    pub fn hfa(&self) -> HfaConfig {
        self.model.hfa
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_text() {
        let cfg = RunConfig::default();
        let back = RunConfig::from_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(cfg.optim.lr, 1e-4);
        assert_eq!(cfg.diffusion.guidance_scale, 4.0);
        assert_eq!(cfg.diffusion.steps, 50);
        assert_eq!(cfg.loss_weights().unwrap().layers.len(), 4);
    }

    #[test]
    fn parses_overrides_and_comments() {
        let cfg = RunConfig::from_text(
            "# smoke\nmodel.J = 2  # two blocks\nmodel.domains = temp+freq\nloss.layer_weights = {0.25, 0.75}\nccmd.domains = temp\n",
        )
        .unwrap();
        assert_eq!(cfg.model.blocks, 2);
        assert_eq!(cfg.model.domains.len(), 2);
        assert_eq!(cfg.loss_weights().unwrap().layers, vec![0.25, 0.75]);
        let again = RunConfig::from_text(&cfg.to_text()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(RunConfig::from_text("model.width = 3").is_err());
        assert!(RunConfig::from_text("optim.lr = 0").is_err());
        assert!(RunConfig::from_text("loss.lambda_p = -1").is_err());
        assert!(RunConfig::from_text("model.J = 2\nloss.layer_weights = 1,2,3").is_err());
        assert!(RunConfig::from_text("ccmd.placement = middle").is_err());
        assert!(RunConfig::from_text("just words").is_err());
    }

    #[test]
    fn diff_lists_divergent_keys() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.model.dim = 16;
        b.optim.lr = 1.0;
        assert_eq!(a.diff(&b, MODEL_KEYS), vec!["model.D".to_string()]);
    }
}
