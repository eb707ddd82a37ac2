use crate::error::{Error, Result};
use crate::nn::{FeedForward, Init, LayerNorm, MultiHeadAttention};
use crate::numcore::{Graph, Var};

/// Pre-norm transformer layer along frames, applied to every joint
/// independently.
#[derive(Clone, Debug)]
pub struct Tme {
    pub norm1: LayerNorm,
    pub attn: MultiHeadAttention,
    pub norm2: LayerNorm,
    pub ffn: FeedForward,
}

pub struct TmeOutput {
    pub out: Var,
    /// `[M * heads, L, L]`.
    pub weights: Var,
}

impl Tme {
    pub fn new(init: &mut Init, name: &str, dim: usize, heads: usize, ff_mult: usize) -> Result<Self> {
        Ok(Tme {
            norm1: LayerNorm::new(init, &format!("{name}.norm1"), dim)?,
            attn: MultiHeadAttention::new(init, &format!("{name}.attn"), dim, dim, heads)?,
            norm2: LayerNorm::new(init, &format!("{name}.norm2"), dim)?,
            ffn: FeedForward::new(init, &format!("{name}.ffn"), dim, ff_mult * dim, dim)?,
        })
    }

    /// `[L, M, D] -> [L, M, D]`.
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<TmeOutput> {
        if g.shape(x).len() != 3 || g.shape(x)[2] != self.attn.dim {
            return Err(Error::shape("tme", g.shape(x), &[0, 0, self.attn.dim]));
        }
        let xt = g.permute(x, &[1, 0, 2])?;
        let h = self.norm1.forward(g, xt)?;
        let a = self.attn.forward(g, h, h)?;
        let h = g.add(xt, a.out)?;
        let f = self.norm2.forward(g, h)?;
        let f = self.ffn.forward(g, f)?;
        let h = g.add(h, f)?;
        Ok(TmeOutput {
            out: g.permute(h, &[1, 0, 2])?,
            weights: a.weights,
        })
    }
}
