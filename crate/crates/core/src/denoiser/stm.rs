use crate::error::{Error, Result};
use crate::nn::{Init, LayerNorm, Linear};
use crate::numcore::{Graph, Tensor, Var};

pub const GCN_LAYERS: usize = 3;

/// Residual stack of graph convolutions over the joint axis.
#[derive(Clone, Debug)]
pub struct Stm {
    pub layers: Vec<(Linear, LayerNorm)>,
    pub a_hat: Tensor,
}

impl Stm {
    pub fn new(init: &mut Init, name: &str, dim: usize, a_hat: &Tensor) -> Result<Self> {
        let layers = (0..GCN_LAYERS)
            .map(|k| {
                Ok((
                    Linear::new(init, &format!("{name}.gcn{k}"), dim, dim)?,
                    LayerNorm::new(init, &format!("{name}.norm{k}"), dim)?,
                ))
            })
            .collect::<Result<_>>()?;
        Ok(Stm {
            layers,
            a_hat: a_hat.clone(),
        })
    }

    /// `A_hat h W + b` per frame position of `h [L, M, D]`.
    pub fn gcn(&self, g: &mut Graph, h: Var, layer: &Linear) -> Result<Var> {
        let s = g.shape(h).to_vec();
        let m = self.a_hat.shape()[0];
        if s.len() != 3 || s[1] != m {
            return Err(Error::shape("stm joints", &s, self.a_hat.shape()));
        }
        let (l, d) = (s[0], s[2]);
        let a = g.constant(self.a_hat.clone());
        let hj = g.permute(h, &[1, 0, 2])?;
        let hj = g.reshape(hj, &[m, l * d])?;
        let mixed = g.matmul(a, hj)?;
        let mixed = g.reshape(mixed, &[m, l, d])?;
        let mixed = g.permute(mixed, &[1, 0, 2])?;
        layer.forward(g, mixed)
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let mut h = x;
        for (lin, norm) in &self.layers {
            let z = self.gcn(g, h, lin)?;
            let z = g.gelu(z);
            h = norm.forward(g, z)?;
        }
        g.add(x, h)
    }
}
