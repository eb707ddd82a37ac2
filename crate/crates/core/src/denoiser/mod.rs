//! Stacked tri-domain denoiser blocks predicting the clean motion.

mod hfa;
mod sfus;
mod stm;
mod tij;
mod tme;

pub use hfa::{dwt_haar, idwt_haar, irfft_frames, rfft_frames, HighBranch, Hfa, HfaConfig, HfaOutput, LowBranch, LowOutput, GN_GROUPS};
pub use sfus::{FusionMode, FusionOutput, SFus};
pub use stm::{Stm, GCN_LAYERS};
pub use tij::Tij;
pub use tme::{Tme, TmeOutput};

use crate::causal::{CausalBundle, Ccmd, CcmdConfig, Decode, Mode};
use crate::error::{invalid, Error, Result};
use crate::motion::{default_skeleton, Conditioning, MotionTensor, SkeletonGraph, TokenEmbedder, CHANNELS};
use crate::nn::{Init, LayerNorm, Linear};
use crate::numcore::{Graph, ParamStore, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Domain {
    Temp,
    Spa,
    Freq,
}

impl Domain {
    pub const ALL: [Domain; 3] = [Domain::Temp, Domain::Spa, Domain::Freq];
}

impl std::fmt::Display for Domain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Domain::Temp => "temp",
            Domain::Spa => "spa",
            Domain::Freq => "freq",
        })
    }
}

impl std::str::FromStr for Domain {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "temp" | "tme" => Ok(Domain::Temp),
            "spa" | "stm" => Ok(Domain::Spa),
            "freq" | "hfa" => Ok(Domain::Freq),
            other => Err(invalid!("unknown domain `{other}` (temp|spa|freq)")),
        }
    }
}

/// Parses `temp+spa`, `temp,freq`, `all`.
pub fn parse_domains(s: &str) -> Result<Vec<Domain>> {
    if s.trim() == "all" {
        return Ok(Domain::ALL.to_vec());
    }
    let mut out: Vec<Domain> = s
        .split(['+', ',', ' '])
        .filter(|p| !p.is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    out.sort();
    out.dedup();
    Ok(out)
}

pub fn format_domains(d: &[Domain]) -> String {
    d.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("+")
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub blocks: usize,
    pub dim: usize,
    pub joints: usize,
    /// Raw frames per sequence.
    pub frames: usize,
    pub stride: usize,
    pub heads: usize,
    pub ff_mult: usize,
    pub d_text: usize,
    pub domains: Vec<Domain>,
    pub fusion: FusionMode,
    pub hfa: HfaConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            blocks: 4,
            dim: 32,
            joints: 8,
            frames: 64,
            stride: 4,
            heads: 4,
            ff_mult: 2,
            d_text: 64,
            domains: Domain::ALL.to_vec(),
            fusion: FusionMode::Score,
            hfa: HfaConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let c = self;
        if c.blocks < 1 {
            return Err(invalid!("need at least one block"));
        }
        if c.dim == 0 || c.dim % 4 != 0 || c.dim % GN_GROUPS != 0 {
            return Err(invalid!("latent dim {} must be a positive multiple of 4", c.dim));
        }
        if c.heads == 0 || c.dim % c.heads != 0 {
            return Err(invalid!("latent dim {} not divisible by {} heads", c.dim, c.heads));
        }
        if c.joints == 0 || c.frames == 0 || c.stride == 0 || c.d_text == 0 || c.ff_mult == 0 {
            return Err(invalid!("joints, frames, stride, text dim and ff multiplier must be >= 1"));
        }
        if c.domains.is_empty() {
            return Err(invalid!("at least one denoiser domain is required"));
        }
        let mut d = c.domains.clone();
        d.sort();
        d.dedup();
        if d != c.domains {
            return Err(invalid!("domains must be unique and in temp, spa, freq order"));
        }
        Ok(())
    }

    /// Latent frames after downsampling.
    pub fn latent_frames(&self) -> usize {
        self.frames.div_ceil(self.stride)
    }
}

#[derive(Clone, Debug)]
pub struct Block {
    pub tme: Option<Tme>,
    pub stm: Option<Stm>,
    pub hfa: Option<Hfa>,
    pub fusion: SFus,
    pub tij: Tij,
}

pub struct BlockOutput {
    pub out: Var,
    /// Per active domain, in config order.
    pub feats: Vec<Var>,
    pub fused: Var,
    pub alpha: Option<Var>,
}

impl Block {
    fn new(init: &mut Init, j: usize, cfg: &ModelConfig, skeleton: &SkeletonGraph) -> Result<Self> {
        let name = format!("block.{j}");
        let has = |d| cfg.domains.contains(&d);
        Ok(Block {
            tme: if has(Domain::Temp) {
                Some(Tme::new(init, &format!("{name}.tme"), cfg.dim, cfg.heads, cfg.ff_mult)?)
            } else {
                None
            },
            stm: if has(Domain::Spa) {
                Some(Stm::new(init, &format!("{name}.stm"), cfg.dim, &skeleton.a_hat)?)
            } else {
                None
            },
            hfa: if has(Domain::Freq) {
                Some(Hfa::new(init, &format!("{name}.hfa"), cfg.dim, cfg.hfa)?)
            } else {
                None
            },
            fusion: SFus::new(init, &format!("{name}.sfus"), cfg.dim, cfg.d_text, cfg.domains.len(), cfg.fusion)?,
            tij: Tij::new(init, &format!("{name}.tij"), cfg.dim, cfg.d_text, cfg.heads)?,
        })
    }

    pub fn forward(&self, g: &mut Graph, x: Var, cls: Var, tau: Var) -> Result<BlockOutput> {
        let mut feats = Vec::with_capacity(3);
        if let Some(tme) = &self.tme {
            feats.push(tme.forward(g, x)?.out);
        }
        if let Some(stm) = &self.stm {
            feats.push(stm.forward(g, x)?);
        }
        if let Some(hfa) = &self.hfa {
            feats.push(hfa.forward(g, x)?.out);
        }
        let fused = self.fusion.forward(g, &feats, x, cls)?;
        let (out, _) = self.tij.forward(g, fused.out, tau)?;
        Ok(BlockOutput {
            out,
            feats,
            fused: fused.out,
            alpha: fused.alpha,
        })
    }
}

/// All learnable state of the denoiser plus its frozen skeleton.
#[derive(Clone, Debug)]
pub struct DenoiserState {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub skeleton: SkeletonGraph,
    pub embed: TokenEmbedder,
    pub blocks: Vec<Block>,
    pub final_norm: LayerNorm,
    pub head: Linear,
    pub ccmd: Option<Ccmd>,
}

pub struct DenoiserOutput {
    /// `[N_raw, M, 12]`.
    pub x0_hat: Var,
    pub bundle: Option<CausalBundle>,
    /// Fusion weights per block (score fusion only).
    pub alphas: Vec<Var>,
}

impl DenoiserState {
    pub fn new(config: &ModelConfig, ccmd: &CcmdConfig, seed: u64) -> Result<Self> {
        Self::with_skeleton(config, ccmd, default_skeleton(config.joints)?, seed)
    }

    pub fn with_skeleton(config: &ModelConfig, ccmd: &CcmdConfig, skeleton: SkeletonGraph, seed: u64) -> Result<Self> {
        config.validate()?;
        if skeleton.joints != config.joints {
            return Err(invalid!(
                "skeleton has {} joints, model expects {}",
                skeleton.joints,
                config.joints
            ));
        }
        let mut params = ParamStore::new();
        let mut init = Init::new(&mut params, seed);
        let embed = TokenEmbedder::new(&mut init, config.dim, config.d_text)?;
        let blocks = (0..config.blocks)
            .map(|j| Block::new(&mut init, j, config, &skeleton))
            .collect::<Result<Vec<_>>>()?;
        let final_norm = LayerNorm::new(&mut init, "head.norm", config.dim)?;
        let head = Linear::new(&mut init, "head.out", config.dim, CHANNELS)?;
        let ccmd = if ccmd.enabled {
            Some(Ccmd::new(&mut init, config.blocks, config.dim, &config.domains, ccmd.clone())?)
        } else {
            None
        };
        Ok(DenoiserState {
            config: config.clone(),
            params,
            skeleton,
            embed,
            blocks,
            final_norm,
            head,
            ccmd,
        })
    }

    /// Forward on a graph bound to `self.params`.
    pub fn forward(&self, g: &mut Graph, x_t: &Tensor, t: usize, cond: Conditioning, mode: Mode) -> Result<DenoiserOutput> {
        let c = &self.config;
        let expect = [c.frames, c.joints, CHANNELS];
        if x_t.shape() != expect {
            return Err(Error::shape("denoiser input", x_t.shape(), &expect));
        }
        let x = g.constant(x_t.clone());
        self.forward_var(g, x, t, cond, mode)
    }

    /// As [`DenoiserState::forward`] with the noisy input already on the tape.
    pub fn forward_var(&self, g: &mut Graph, x: Var, t: usize, cond: Conditioning, mode: Mode) -> Result<DenoiserOutput> {
        let c = &self.config;
        let (cls, tau) = self.embed.condition(g, cond)?;
        let h = self.embed.embed_motion(g, x, c.stride)?;
        let n = g.shape(h)[0];
        let mut h = self.embed.assemble_tokens(g, h, t, cls)?;
        let dec = Decode {
            motion_rows: n,
            stride: c.stride,
            raw_frames: c.frames,
        };
        let mut bundle = CausalBundle::default();
        let mut alphas = Vec::new();
        for (j, block) in self.blocks.iter().enumerate() {
            let out = block.forward(g, h, cls, tau)?;
            if let Some(ccmd) = &self.ccmd {
                if let Some(layer) = ccmd.apply(g, j, &c.domains, &out.feats, out.fused, mode, dec)? {
                    bundle.layers.push(layer);
                }
            }
            alphas.extend(out.alpha);
            h = out.out;
        }
        let y = g.slice(h, 0, 0, n)?;
        let y = self.final_norm.forward(g, y)?;
        let y = self.head.forward(g, y)?;
        let x0_hat = g.repeat_frames(y, c.stride, c.frames)?;
        let bundle = if bundle.layers.is_empty() { None } else { Some(bundle) };
        Ok(DenoiserOutput { x0_hat, bundle, alphas })
    }

    /// Inference-mode clean prediction.
    pub fn predict(&self, x_t: &MotionTensor, t: usize, cond: Conditioning) -> Result<MotionTensor> {
        let mut g = Graph::with_params(&self.params);
        let out = self.forward(&mut g, x_t.tensor(), t, cond, Mode::Inference)?;
        MotionTensor::new(g.value(out.x0_hat).clone())
    }

    /// Parameter ids belonging to the causal branch.
    pub fn ccmd_params(&self) -> Vec<crate::numcore::ParamId> {
        self.params.with_prefix("ccmd.").collect()
    }
}
