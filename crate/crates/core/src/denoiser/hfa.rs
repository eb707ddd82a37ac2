//! Haar + Fourier frequency branch.

use crate::error::{Error, Result};
use crate::nn::{Conv1d, DepthwiseConv1d, GroupNorm, Init, Linear};
use crate::numcore::{spectral, Graph, ParamStore, Tensor, Var};

pub const CONTEXT_KERNEL: usize = 3;
pub const DEPTHWISE_KERNEL: usize = 3;
pub const GN_GROUPS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HfaConfig {
    /// Process the low band in the Fourier domain.
    pub fft: bool,
    /// Joint-axis context conv and joint-axis depthwise conv.
    pub joint: bool,
    /// Enhance the high band; when off it passes through unchanged.
    pub high: bool,
}

impl Default for HfaConfig {
    fn default() -> Self {
        HfaConfig {
            fft: true,
            joint: true,
            high: true,
        }
    }
}

/// Haar analysis along axis 0; odd lengths are edge-padded first.
pub fn dwt_haar(x: &Tensor) -> Result<(Tensor, Tensor)> {
    let shape = x.shape();
    if shape.is_empty() || x.is_empty() {
        return Err(crate::error::invalid!("dwt_haar on an empty tensor"));
    }
    let len = shape[0];
    let cols = x.len() / len;
    let mut data = x.data().to_vec();
    if len % 2 == 1 {
        data.extend_from_slice(&x.data()[(len - 1) * cols..]);
    }
    let half = len.div_ceil(2);
    let y = spectral::haar_split(&data, 2 * half, cols);
    let mut bshape = shape.to_vec();
    bshape[0] = half;
    let (lo, hi) = y.split_at(half * cols);
    Ok((Tensor::new(&bshape, lo.to_vec())?, Tensor::new(&bshape, hi.to_vec())?))
}

/// Haar synthesis, trimmed to `len` frames.
pub fn idwt_haar(low: &Tensor, high: &Tensor, len: usize) -> Result<Tensor> {
    if low.shape() != high.shape() {
        return Err(Error::shape("idwt_haar", low.shape(), high.shape()));
    }
    let half = low.shape()[0];
    if len.div_ceil(2) != half {
        return Err(crate::error::invalid!("idwt_haar: {half} coefficients cannot give {len} frames"));
    }
    let cols = low.len() / half;
    let mut y = low.data().to_vec();
    y.extend_from_slice(high.data());
    let mut x = spectral::haar_merge(&y, half, cols);
    x.truncate(len * cols);
    let mut shape = low.shape().to_vec();
    shape[0] = len;
    Tensor::new(&shape, x)
}

/// Real DFT along axis 0: `(re, im)`, each `[L/2+1, ...]`.
pub fn rfft_frames(x: &Tensor) -> Result<(Tensor, Tensor)> {
    let len = x.shape()[0];
    let cols = x.len() / len;
    let (re, im) = spectral::rfft(x.data(), len, cols);
    let mut shape = x.shape().to_vec();
    shape[0] = spectral::rfft_bins(len);
    Ok((Tensor::new(&shape, re)?, Tensor::new(&shape, im)?))
}

pub fn irfft_frames(re: &Tensor, im: &Tensor, len: usize) -> Result<Tensor> {
    if re.shape() != im.shape() || re.shape()[0] != spectral::rfft_bins(len) {
        return Err(Error::shape("irfft_frames", re.shape(), im.shape()));
    }
    let cols = re.len() / re.shape()[0];
    let mut shape = re.shape().to_vec();
    shape[0] = len;
    Tensor::new(&shape, spectral::irfft(re.data(), im.data(), len, cols))
}

/// Gated low-band refinement: `S + Linear(S * (w_t w_s))`.
#[derive(Clone, Debug)]
pub struct LowBranch {
    pub ctx_t: Conv1d,
    pub ctx_s: Option<Conv1d>,
    pub proj: Linear,
}

pub struct LowOutput {
    pub out: Var,
    /// `[B, 1, 1]` after the sigmoid.
    pub w_t: Var,
    /// `[1, M, 1]`, absent without the joint branch.
    pub w_s: Option<Var>,
}

impl LowBranch {
    pub fn new(init: &mut Init, name: &str, channels: usize, joint: bool) -> Result<Self> {
        Ok(LowBranch {
            ctx_t: Conv1d::new(init, &format!("{name}.ctx_t"), CONTEXT_KERNEL, channels, 1)?,
            ctx_s: if joint {
                Some(Conv1d::new(init, &format!("{name}.ctx_s"), CONTEXT_KERNEL, channels, 1)?)
            } else {
                None
            },
            proj: Linear::new(init, &format!("{name}.proj"), channels, channels)?,
        })
    }

    /// `s [B, M, C]` (bins or frames, joints, channels).
    pub fn forward(&self, g: &mut Graph, s: Var) -> Result<LowOutput> {
        let shape = g.shape(s).to_vec();
        let (b, m, c) = (shape[0], shape[1], shape[2]);
        let pt = g.mean_axis(s, 1)?;
        let pt = g.reshape(pt, &[1, b, c])?;
        let wt = self.ctx_t.forward(g, pt)?;
        let wt = g.sigmoid(wt);
        let w_t = g.reshape(wt, &[b, 1, 1])?;
        let (gate, w_s) = match &self.ctx_s {
            Some(conv) => {
                let ps = g.mean_axis(s, 0)?;
                let ws = conv.forward(g, ps)?;
                let w_s = g.sigmoid(ws);
                (g.mul(w_t, w_s)?, Some(w_s))
            }
            None => (w_t, None),
        };
        let gated = g.mul(s, gate)?;
        let upd = self.proj.forward(g, gated)?;
        debug_assert_eq!(g.shape(upd), [b, m, c]);
        Ok(LowOutput {
            out: g.add(s, upd)?,
            w_t,
            w_s,
        })
    }
}

/// `S + GELU(GN(pointwise(depthwise_joint(depthwise_frame(S)))))`.
#[derive(Clone, Debug)]
pub struct HighBranch {
    pub dw_t: DepthwiseConv1d,
    pub dw_s: Option<DepthwiseConv1d>,
    pub pw: Linear,
    pub gn: GroupNorm,
}

impl HighBranch {
    pub fn new(init: &mut Init, name: &str, dim: usize, joint: bool) -> Result<Self> {
        Ok(HighBranch {
            dw_t: DepthwiseConv1d::new(init, &format!("{name}.dw_t"), DEPTHWISE_KERNEL, dim)?,
            dw_s: if joint {
                Some(DepthwiseConv1d::new(init, &format!("{name}.dw_s"), DEPTHWISE_KERNEL, dim)?)
            } else {
                None
            },
            pw: Linear::new(init, &format!("{name}.pw"), dim, dim)?,
            gn: GroupNorm::new(init, &format!("{name}.gn"), dim, GN_GROUPS)?,
        })
    }

    /// `h [K, M, D]`.
    pub fn forward(&self, g: &mut Graph, h: Var) -> Result<Var> {
        let ht = g.permute(h, &[1, 0, 2])?;
        let ht = self.dw_t.forward(g, ht)?;
        let mut z = g.permute(ht, &[1, 0, 2])?;
        if let Some(dw) = &self.dw_s {
            z = dw.forward(g, z)?;
        }
        let z = self.pw.forward(g, z)?;
        let z = self.gn.forward(g, z)?;
        let z = g.gelu(z);
        g.add(h, z)
    }
}

#[derive(Clone, Debug)]
pub struct Hfa {
    pub low: LowBranch,
    pub high: Option<HighBranch>,
    pub config: HfaConfig,
    pub dim: usize,
}

pub struct HfaOutput {
    pub out: Var,
    pub low: LowOutput,
    /// High band after its branch, before synthesis.
    pub high_band: Var,
}

impl Hfa {
    pub fn new(init: &mut Init, name: &str, dim: usize, config: HfaConfig) -> Result<Self> {
        let channels = if config.fft { 2 * dim } else { dim };
        Ok(Hfa {
            low: LowBranch::new(init, &format!("{name}.low"), channels, config.joint)?,
            high: if config.high {
                Some(HighBranch::new(init, &format!("{name}.high"), dim, config.joint)?)
            } else {
                None
            },
            config,
            dim,
        })
    }

    /// Zeroes the low projection and the high-branch norm affine so both
    /// branches reduce to their residual paths and the block to identity.
    pub fn set_residual_identity(&self, params: &mut ParamStore) {
        let mut ids = self.low.proj.params();
        if let Some(h) = &self.high {
            ids.extend([h.gn.gamma, h.gn.beta]);
        }
        for id in ids {
            params.get_mut(id).data_mut().fill(0.0);
        }
    }

    /// `[L, M, D] -> [L, M, D]`.
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<HfaOutput> {
        let shape = g.shape(x).to_vec();
        if shape.len() != 3 || shape[2] != self.dim {
            return Err(Error::shape("hfa", &shape, &[0, 0, self.dim]));
        }
        let (l, m, d) = (shape[0], shape[1], shape[2]);
        let half = l.div_ceil(2);
        let padded = g.pad_edge_frames(x, 2 * half - l)?;
        let bands = g.haar_split(padded)?;
        let lo = g.slice(bands, 0, 0, 1)?;
        let lo = g.reshape(lo, &[half, m, d])?;
        let hi = g.slice(bands, 0, 1, 1)?;
        let hi = g.reshape(hi, &[half, m, d])?;

        let low = if self.config.fft {
            let spec = g.rfft_frames(lo)?;
            let refined = self.low.forward(g, spec)?;
            let back = g.irfft_frames(refined.out, half)?;
            LowOutput { out: back, ..refined }
        } else {
            self.low.forward(g, lo)?
        };
        let high_band = match &self.high {
            Some(branch) => branch.forward(g, hi)?,
            None => hi,
        };
        let lo = g.reshape(low.out, &[1, half, m, d])?;
        let hi = g.reshape(high_band, &[1, half, m, d])?;
        let both = g.concat(&[lo, hi], 0)?;
        let merged = g.haar_merge(both)?;
        let out = g.slice(merged, 0, 0, l)?;
        Ok(HfaOutput { out, low, high_band })
    }
}
