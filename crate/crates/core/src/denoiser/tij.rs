use crate::error::{invalid, Result};
use crate::nn::{AttentionOutput, Init, LayerNorm, MultiHeadAttention};
use crate::numcore::{Graph, Var};

/// Cross-attention from every latent position to the word features.
#[derive(Clone, Debug)]
pub struct Tij {
    pub norm: LayerNorm,
    pub attn: MultiHeadAttention,
}

impl Tij {
    pub fn new(init: &mut Init, name: &str, dim: usize, d_text: usize, heads: usize) -> Result<Self> {
        Ok(Tij {
            norm: LayerNorm::new(init, &format!("{name}.norm"), dim)?,
            attn: MultiHeadAttention::new(init, &format!("{name}.attn"), dim, d_text, heads)?,
        })
    }

    /// `y [L, M, D]`, `tau [W, d_text]` -> (`[L, M, D]`, weights `[heads, L*M, W]`).
    pub fn forward(&self, g: &mut Graph, y: Var, tau: Var) -> Result<(Var, Var)> {
        let s = g.shape(y).to_vec();
        let ts = g.shape(tau).to_vec();
        if ts.len() != 2 || ts[0] == 0 {
            return Err(invalid!("word features must be a non-empty [W, d_text] matrix, got {ts:?}"));
        }
        let q = g.reshape(y, &[1, s[0] * s[1], s[2]])?;
        let q = self.norm.forward(g, q)?;
        let kv = g.reshape(tau, &[1, ts[0], ts[1]])?;
        let AttentionOutput { out, weights } = self.attn.forward(g, q, kv)?;
        let out = g.reshape(out, &s)?;
        Ok((g.add(y, out)?, weights))
    }
}
