use crate::error::{invalid, Result};
use crate::motion::{TextCondition, CHANNELS};
use crate::nn::{FeedForward, Init, Linear};
use crate::numcore::{Graph, ParamId, Tensor, Var};

const PE_BASE: f64 = 10000.0;

fn sinusoid(pos: f64, dim: usize, out: &mut [f64]) {
    for i in 0..dim / 2 {
        let freq = PE_BASE.powf(-(2.0 * i as f64) / dim as f64);
        out[2 * i] = (pos * freq).sin();
        out[2 * i + 1] = (pos * freq).cos();
    }
}

/// `[N, M, D]`: frame encoding in the first `D/2` channels, joint encoding
/// in the last `D/2`.
pub fn pos_encode_2d(frames: usize, joints: usize, dim: usize) -> Result<Tensor> {
    if dim == 0 || dim % 4 != 0 {
        return Err(invalid!("2-D positional encoding needs D divisible by 4, got {dim}"));
    }
    let half = dim / 2;
    let mut data = vec![0.0; frames * joints * dim];
    let mut tpe = vec![0.0; half];
    let mut jpe = vec![0.0; half];
    for n in 0..frames {
        sinusoid(n as f64, half, &mut tpe);
        for j in 0..joints {
            sinusoid(j as f64, half, &mut jpe);
            let row = &mut data[(n * joints + j) * dim..(n * joints + j + 1) * dim];
            row[..half].copy_from_slice(&tpe);
            row[half..].copy_from_slice(&jpe);
        }
    }
    Tensor::new(&[frames, joints, dim], data)
}

/// `[sin(t w_i) ..., cos(t w_i) ...]` with geometric `w_i`.
pub fn timestep_embedding(t: usize, dim: usize) -> Tensor {
    let half = dim / 2;
    let mut v = vec![0.0; dim];
    for i in 0..half {
        let freq = (-(PE_BASE.ln()) * i as f64 / half as f64).exp();
        v[i] = (t as f64 * freq).sin();
        v[half + i] = (t as f64 * freq).cos();
    }
    Tensor::new(&[dim], v).expect("dim >= 1")
}

/// Text conditioning or the learned null token.
#[derive(Clone, Copy, Debug)]
pub enum Conditioning<'a> {
    Text(&'a TextCondition),
    Null,
}

/// Input projection, positional encoding and conditioning tokens.
#[derive(Clone, Debug)]
pub struct TokenEmbedder {
    pub in_proj: Linear,
    pub time_ffn: FeedForward,
    pub cls_proj: Linear,
    pub null_cls: ParamId,
    pub null_tau: ParamId,
    pub dim: usize,
    pub d_text: usize,
}

impl TokenEmbedder {
    pub fn new(init: &mut Init, dim: usize, d_text: usize) -> Result<Self> {
        if dim % 4 != 0 {
            return Err(invalid!("latent dim must be divisible by 4, got {dim}"));
        }
        Ok(TokenEmbedder {
            in_proj: Linear::new(init, "embed.in", CHANNELS, dim)?,
            time_ffn: FeedForward::new(init, "embed.time", dim, dim, dim)?,
            cls_proj: Linear::new(init, "embed.cls", d_text, dim)?,
            null_cls: init.normal("embed.null_cls", &[d_text], 1.0 / (d_text as f64).sqrt())?,
            null_tau: init.normal("embed.null_tau", &[1, d_text], 1.0 / (d_text as f64).sqrt())?,
            dim,
            d_text,
        })
    }

    /// `(cls [d_text], tau [W, d_text])` graph nodes.
    pub fn condition(&self, g: &mut Graph, cond: Conditioning) -> Result<(Var, Var)> {
        match cond {
            Conditioning::Text(c) => {
                if c.dim() != self.d_text {
                    return Err(crate::error::Error::shape("text condition", c.cls.shape(), &[self.d_text]));
                }
                Ok((g.constant(c.cls.clone()), g.constant(c.tau.clone())))
            }
            Conditioning::Null => Ok((g.param(self.null_cls), g.param(self.null_tau))),
        }
    }

    /// `[N_raw, M, 12]` -> pooled, projected and position-encoded `[N, M, D]`.
    pub fn embed_motion(&self, g: &mut Graph, x: Var, stride: usize) -> Result<Var> {
        let pooled = g.avg_pool_frames(x, stride)?;
        let h = self.in_proj.forward(g, pooled)?;
        let (n, m) = (g.shape(h)[0], g.shape(h)[1]);
        let pe = g.constant(pos_encode_2d(n, m, self.dim)?);
        g.add(h, pe)
    }

    /// Appends the timestep and CLS tokens, each replicated over joints:
    /// `[N, M, D]` -> `[N + 2, M, D]`.
    pub fn assemble_tokens(&self, g: &mut Graph, x_motion: Var, t: usize, cls: Var) -> Result<Var> {
        let shape = g.shape(x_motion).to_vec();
        if shape.len() != 3 || shape[2] != self.dim {
            return Err(crate::error::Error::shape("assemble_tokens", &shape, &[0, 0, self.dim]));
        }
        let m = shape[1];
        let te = g.constant(timestep_embedding(t, self.dim).reshape(&[1, 1, self.dim])?);
        let time = self.time_ffn.forward(g, te)?;
        let time = g.broadcast_to(time, &[1, m, self.dim])?;
        let c = g.reshape(cls, &[1, 1, self.d_text])?;
        let c = self.cls_proj.forward(g, c)?;
        let c = g.broadcast_to(c, &[1, m, self.dim])?;
        g.concat(&[x_motion, time, c], 0)
    }
}
