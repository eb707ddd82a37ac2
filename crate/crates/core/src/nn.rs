//! Parameterized layers built on the tape.
//!
//! Layers only hold [`ParamId`]s; values live in a [`ParamStore`] and are
//! bound into a [`Graph`] on every forward.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::numcore::{Graph, ParamId, ParamStore, Tensor, Var};

pub const NORM_EPS: f64 = 1e-5;

/// Deterministic parameter factory: Kaiming-uniform weights, zero biases.
pub struct Init<'a> {
    pub store: &'a mut ParamStore,
    rng: ChaCha8Rng,
}

impl<'a> Init<'a> {
    pub fn new(store: &'a mut ParamStore, seed: u64) -> Self {
        Init {
            store,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn weight(&mut self, name: &str, shape: &[usize], fan_in: usize) -> Result<ParamId> {
        let t = Tensor::kaiming_uniform(shape, fan_in, &mut self.rng);
        self.store.add(name, t)
    }

    pub fn zeros(&mut self, name: &str, shape: &[usize]) -> Result<ParamId> {
        self.store.add(name, Tensor::zeros(shape))
    }

    pub fn ones(&mut self, name: &str, shape: &[usize]) -> Result<ParamId> {
        self.store.add(name, Tensor::full(shape, 1.0))
    }

    pub fn normal(&mut self, name: &str, shape: &[usize], std: f64) -> Result<ParamId> {
        let t = Tensor::randn(shape, &mut self.rng).map(|v| v * std);
        self.store.add(name, t)
    }
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn new(init: &mut Init, name: &str, fan_in: usize, fan_out: usize) -> Result<Self> {
        let w = init.weight(&format!("{name}.w"), &[fan_in, fan_out], fan_in)?;
        let b = Some(init.zeros(&format!("{name}.b"), &[fan_out])?);
        Ok(Linear {
            w,
            b,
            fan_in,
            fan_out,
        })
    }

    pub fn no_bias(init: &mut Init, name: &str, fan_in: usize, fan_out: usize) -> Result<Self> {
        let w = init.weight(&format!("{name}.w"), &[fan_in, fan_out], fan_in)?;
        Ok(Linear {
            w,
            b: None,
            fan_in,
            fan_out,
        })
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let w = g.param(self.w);
        let b = self.b.map(|b| g.param(b));
        g.linear(x, w, b)
    }

    pub fn params(&self) -> Vec<ParamId> {
        std::iter::once(self.w).chain(self.b).collect()
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new(init: &mut Init, name: &str, dim: usize) -> Result<Self> {
        Ok(LayerNorm {
            gamma: init.ones(&format!("{name}.gamma"), &[dim])?,
            beta: init.zeros(&format!("{name}.beta"), &[dim])?,
        })
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let gm = g.param(self.gamma);
        let bt = g.param(self.beta);
        g.layer_norm(x, gm, bt, NORM_EPS)
    }
}

#[derive(Clone, Debug)]
pub struct GroupNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub groups: usize,
}

impl GroupNorm {
    pub fn new(init: &mut Init, name: &str, channels: usize, groups: usize) -> Result<Self> {
        if groups == 0 || channels % groups != 0 {
            return Err(crate::error::invalid!(
                "group norm: {channels} channels not divisible by {groups} groups"
            ));
        }
        Ok(GroupNorm {
            gamma: init.ones(&format!("{name}.gamma"), &[channels])?,
            beta: init.zeros(&format!("{name}.beta"), &[channels])?,
            groups,
        })
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let gm = g.param(self.gamma);
        let bt = g.param(self.beta);
        g.group_norm(x, self.groups, gm, bt, NORM_EPS)
    }
}

/// Same-padded 1-D convolution, weights `[kernel, in, out]`.
#[derive(Clone, Debug)]
pub struct Conv1d {
    pub w: ParamId,
    pub b: ParamId,
}

impl Conv1d {
    pub fn new(init: &mut Init, name: &str, kernel: usize, cin: usize, cout: usize) -> Result<Self> {
        Ok(Conv1d {
            w: init.weight(&format!("{name}.w"), &[kernel, cin, cout], kernel * cin)?,
            b: init.zeros(&format!("{name}.b"), &[cout])?,
        })
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let w = g.param(self.w);
        let b = g.param(self.b);
        g.conv1d(x, w, Some(b))
    }
}

/// Same-padded per-channel convolution, weights `[kernel, channels]`.
#[derive(Clone, Debug)]
pub struct DepthwiseConv1d {
    pub w: ParamId,
    pub b: ParamId,
}

impl DepthwiseConv1d {
    pub fn new(init: &mut Init, name: &str, kernel: usize, channels: usize) -> Result<Self> {
        Ok(DepthwiseConv1d {
            w: init.weight(&format!("{name}.w"), &[kernel, channels], kernel)?,
            b: init.zeros(&format!("{name}.b"), &[channels])?,
        })
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let w = g.param(self.w);
        let b = g.param(self.b);
        g.depthwise_conv1d(x, w, Some(b))
    }
}

/// `Linear ∘ GELU ∘ Linear`.
#[derive(Clone, Debug)]
pub struct FeedForward {
    pub hidden: Linear,
    pub out: Linear,
}

impl FeedForward {
    pub fn new(init: &mut Init, name: &str, fan_in: usize, hidden: usize, fan_out: usize) -> Result<Self> {
        Ok(FeedForward {
            hidden: Linear::new(init, &format!("{name}.0"), fan_in, hidden)?,
            out: Linear::new(init, &format!("{name}.1"), hidden, fan_out)?,
        })
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let h = self.hidden.forward(g, x)?;
        let h = g.gelu(h);
        self.out.forward(g, h)
    }
}

/// Multi-head scaled dot-product attention over batched sequences.
#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub out: Linear,
    pub heads: usize,
    pub dim: usize,
}

pub struct AttentionOutput {
    pub out: Var,
    /// `[batch * heads, queries, keys]`, rows sum to one.
    pub weights: Var,
}

impl MultiHeadAttention {
    pub fn new(init: &mut Init, name: &str, dim: usize, kv_dim: usize, heads: usize) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(crate::error::invalid!(
                "attention dim {dim} not divisible by {heads} heads"
            ));
        }
        Ok(MultiHeadAttention {
            q: Linear::new(init, &format!("{name}.q"), dim, dim)?,
            k: Linear::new(init, &format!("{name}.k"), kv_dim, dim)?,
            v: Linear::new(init, &format!("{name}.v"), kv_dim, dim)?,
            out: Linear::new(init, &format!("{name}.out"), dim, dim)?,
            heads,
            dim,
        })
    }

    /// `queries [B, Lq, dim]`, `context [B, Lk, kv_dim]` -> `[B, Lq, dim]`.
    pub fn forward(&self, g: &mut Graph, queries: Var, context: Var) -> Result<AttentionOutput> {
        let (b, lq) = (g.shape(queries)[0], g.shape(queries)[1]);
        let lk = g.shape(context)[1];
        let (h, dh) = (self.heads, self.dim / self.heads);

        let q = self.q.forward(g, queries)?;
        let q = g.reshape(q, &[b, lq, h, dh])?;
        let q = g.permute(q, &[0, 2, 1, 3])?;
        let q = g.reshape(q, &[b * h, lq, dh])?;

        let k = self.k.forward(g, context)?;
        let k = g.reshape(k, &[b, lk, h, dh])?;
        let k = g.permute(k, &[0, 2, 3, 1])?;
        let k = g.reshape(k, &[b * h, dh, lk])?;

        let v = self.v.forward(g, context)?;
        let v = g.reshape(v, &[b, lk, h, dh])?;
        let v = g.permute(v, &[0, 2, 1, 3])?;
        let v = g.reshape(v, &[b * h, lk, dh])?;

        let scores = g.bmm(q, k)?;
        let scores = g.scale(scores, 1.0 / (dh as f64).sqrt());
        let weights = g.softmax(scores);
        let ctx = g.bmm(weights, v)?;
        let ctx = g.reshape(ctx, &[b, h, lq, dh])?;
        let ctx = g.permute(ctx, &[0, 2, 1, 3])?;
        let ctx = g.reshape(ctx, &[b, lq, self.dim])?;
        let out = self.out.forward(g, ctx)?;
        Ok(AttentionOutput { out, weights })
    }
}
