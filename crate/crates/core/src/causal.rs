//! Training-only factual/counterfactual gating and intervention branch.
//!
//! The branch reads block features and produces per-layer decoded
//! predictions for an auxiliary loss; it never feeds back into the blocks.

use crate::denoiser::Domain;
use crate::error::{invalid, Error, Result};
use crate::motion::CHANNELS;
use crate::nn::{Init, Linear};
use crate::numcore::{Graph, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Placement {
    /// On each domain's features before fusion.
    #[default]
    Pre,
    /// Once on the fused block output.
    Post,
}

impl std::str::FromStr for Placement {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pre" => Ok(Placement::Pre),
            "post" => Ok(Placement::Post),
            other => Err(invalid!("unknown placement `{other}` (pre|post)")),
        }
    }
}

impl std::fmt::Display for Placement {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Placement::Pre => "pre",
            Placement::Post => "post",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CcmdConfig {
    pub enabled: bool,
    pub placement: Placement,
    pub domains: Vec<Domain>,
}

impl Default for CcmdConfig {
    fn default() -> Self {
        CcmdConfig {
            enabled: true,
            placement: Placement::Pre,
            domains: Domain::ALL.to_vec(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Inference,
}

/// Which feature stream a branch reads.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Domain(Domain),
    Fused,
}

/// `Linear(omega * F) * F` with `omega = sigmoid(L2(relu(L1(avg(F) + max(F)))))`.
#[derive(Clone, Debug)]
pub struct Gate {
    pub squeeze: Linear,
    pub excite: Linear,
    pub out: Linear,
}

impl Gate {
    pub fn new(init: &mut Init, name: &str, dim: usize) -> Result<Self> {
        let hidden = (dim / 4).max(1);
        Ok(Gate {
            squeeze: Linear::new(init, &format!("{name}.l1"), dim, hidden)?,
            excite: Linear::new(init, &format!("{name}.l2"), hidden, dim)?,
            out: Linear::new(init, &format!("{name}.l3"), dim, dim)?,
        })
    }

    /// Returns `(result, omega [1, D])` for `f [L, M, D]`.
    pub fn extract(&self, g: &mut Graph, f: Var) -> Result<(Var, Var)> {
        let shape = g.shape(f).to_vec();
        let d = *shape.last().unwrap();
        let rows = g.value(f).len() / d;
        let flat = g.reshape(f, &[rows, d])?;
        let avg = g.mean_axis(flat, 0)?;
        let max = g.max_axis(flat, 0)?;
        let p = g.add(avg, max)?;
        let h = self.squeeze.forward(g, p)?;
        let h = g.relu(h);
        let h = self.excite.forward(g, h)?;
        let omega = g.sigmoid(h);
        let scaled = g.mul(flat, omega)?;
        let z = self.out.forward(g, scaled)?;
        let z = g.mul(z, flat)?;
        Ok((g.reshape(z, &shape)?, omega))
    }
}

/// `W_do(E) - W_do(C)` with a bias-free `W_do`.
pub fn intervene(g: &mut Graph, e: Var, c: Var, w_do: &Linear) -> Result<Var> {
    if g.shape(e) != g.shape(c) {
        return Err(Error::shape("intervene", g.shape(e), g.shape(c)));
    }
    let a = w_do.forward(g, e)?;
    let b = w_do.forward(g, c)?;
    g.sub(a, b)
}

#[derive(Clone, Debug)]
pub struct Branch {
    pub stream: Stream,
    pub factual: Gate,
    pub counterfactual: Gate,
    pub w_do: Linear,
}

#[derive(Clone, Debug)]
pub struct CcmdLayer {
    pub branches: Vec<Branch>,
    pub head: Linear,
}

#[derive(Clone, Debug)]
pub struct Ccmd {
    pub layers: Vec<CcmdLayer>,
    pub config: CcmdConfig,
}

#[derive(Clone, Debug)]
pub struct CausalDomain {
    pub stream: Stream,
    pub e: Var,
    pub c: Var,
    pub f_tilde: Var,
}

#[derive(Clone, Debug)]
pub struct CausalLayer {
    pub domains: Vec<CausalDomain>,
    /// `[N_raw, M, 12]`.
    pub tde: Var,
}

#[derive(Clone, Debug, Default)]
pub struct CausalBundle {
    pub layers: Vec<CausalLayer>,
}

/// Frame bookkeeping for decoding latents back to raw motion.
#[derive(Clone, Copy, Debug)]
pub struct Decode {
    pub motion_rows: usize,
    pub stride: usize,
    pub raw_frames: usize,
}

/// Concatenates intervened features, maps to 12 channels, drops the
/// conditioning rows and repeats frames back to raw length.
pub fn decode_tde(g: &mut Graph, f_tilde: &[Var], head: &Linear, dec: Decode) -> Result<Var> {
    if f_tilde.is_empty() {
        return Err(invalid!("no intervened features to decode"));
    }
    let cat = g.concat(f_tilde, 2)?;
    let y = head.forward(g, cat)?;
    let y = g.slice(y, 0, 0, dec.motion_rows)?;
    g.repeat_frames(y, dec.stride, dec.raw_frames)
}

impl Ccmd {
    /// `model_domains` are the branches the denoiser actually runs.
    pub fn new(init: &mut Init, blocks: usize, dim: usize, model_domains: &[Domain], config: CcmdConfig) -> Result<Self> {
        let streams: Vec<Stream> = match config.placement {
            Placement::Pre => {
                if config.domains.is_empty() {
                    return Err(invalid!("causal branch enabled with no domains"));
                }
                for d in &config.domains {
                    if !model_domains.contains(d) {
                        return Err(invalid!("causal domain `{d}` is not an active denoiser domain"));
                    }
                }
                config.domains.iter().map(|&d| Stream::Domain(d)).collect()
            }
            Placement::Post => vec![Stream::Fused],
        };
        let mut layers = Vec::with_capacity(blocks);
        for j in 0..blocks {
            let mut branches = Vec::new();
            for &stream in &streams {
                let tag = match stream {
                    Stream::Domain(d) => d.to_string(),
                    Stream::Fused => "fused".into(),
                };
                let name = format!("ccmd.{j}.{tag}");
                branches.push(Branch {
                    stream,
                    factual: Gate::new(init, &format!("{name}.fact"), dim)?,
                    counterfactual: Gate::new(init, &format!("{name}.cf"), dim)?,
                    w_do: Linear::no_bias(init, &format!("{name}.w_do"), dim, dim)?,
                });
            }
            let head = Linear::new(init, &format!("ccmd.{j}.head"), streams.len() * dim, CHANNELS)?;
            layers.push(CcmdLayer { branches, head });
        }
        Ok(Ccmd { layers, config })
    }

    /// Builds layer `j`'s bundle entry from the block's domain features
    /// (`feats` aligned with `model_domains`) and fused output. Inference
    /// mode emits nothing.
    pub fn apply(
        &self,
        g: &mut Graph,
        j: usize,
        model_domains: &[Domain],
        feats: &[Var],
        fused: Var,
        mode: Mode,
        dec: Decode,
    ) -> Result<Option<CausalLayer>> {
        if mode == Mode::Inference || !self.config.enabled {
            return Ok(None);
        }
        let layer = &self.layers[j];
        let mut domains = Vec::with_capacity(layer.branches.len());
        for br in &layer.branches {
            let f = match br.stream {
                Stream::Fused => fused,
                Stream::Domain(d) => {
                    let i = model_domains
                        .iter()
                        .position(|&m| m == d)
                        .ok_or_else(|| invalid!("domain `{d}` not produced by this block"))?;
                    feats[i]
                }
            };
            let (e, _) = br.factual.extract(g, f)?;
            let (c, _) = br.counterfactual.extract(g, f)?;
            let f_tilde = intervene(g, e, c, &br.w_do)?;
            domains.push(CausalDomain {
                stream: br.stream,
                e,
                c,
                f_tilde,
            });
        }
        let ft: Vec<Var> = domains.iter().map(|d| d.f_tilde).collect();
        let tde = decode_tde(g, &ft, &layer.head, dec)?;
        Ok(Some(CausalLayer { domains, tde }))
    }
}
