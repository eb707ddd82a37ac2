//! Reconstruction, causal and perceptual losses.

use crate::causal::CausalBundle;
use crate::error::{invalid, Error, Result};
use crate::motion::CHANNELS;
use crate::nn::Init;
use crate::numcore::{Graph, ParamId, ParamStore, Tensor, Var};

pub const PERCEPTUAL_SEED: u64 = 0x9e37_79b9;
pub const FEATURE_DIM: usize = 64;
const ENCODER_KERNEL: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct LossWeights {
    pub lambda_fcf: f64,
    pub lambda_p: f64,
    /// One weight per block.
    pub layers: Vec<f64>,
}

/// `w_j = j / sum(1..=J)`: `{0.1, 0.2, 0.3, 0.4}` for four blocks.
pub fn default_layer_weights(blocks: usize) -> Vec<f64> {
    let total = (blocks * (blocks + 1) / 2) as f64;
    (1..=blocks).map(|j| j as f64 / total).collect()
}

impl LossWeights {
    pub fn new(lambda_fcf: f64, lambda_p: f64, layers: Vec<f64>) -> Result<Self> {
        let w = LossWeights {
            lambda_fcf,
            lambda_p,
            layers,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn with_defaults(blocks: usize) -> Self {
        LossWeights {
            lambda_fcf: 1.0,
            lambda_p: 10.0,
            layers: default_layer_weights(blocks),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda_fcf, self.lambda_p].into_iter().chain(self.layers.iter().copied());
        for v in all {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(invalid!("loss weights must be finite and >= 0, got {v}"));
            }
        }
        Ok(())
    }
}

fn mse(g: &mut Graph, a: Var, b: Var) -> Result<Var> {
    if g.shape(a) != g.shape(b) {
        return Err(Error::shape("mse", g.shape(a), g.shape(b)));
    }
    let d = g.sub(a, b)?;
    let sq = g.square(d)?;
    Ok(g.mean_all(sq))
}

/// Mean squared error over all elements.
pub fn loss_simple(g: &mut Graph, x0: Var, x0_hat: Var) -> Result<Var> {
    mse(g, x0_hat, x0)
}

/// `sum_j w_j MSE(TDE_j, x0)`.
pub fn loss_fcf(g: &mut Graph, bundle: &CausalBundle, x0: Var, w_layers: &[f64]) -> Result<Var> {
    if bundle.layers.len() != w_layers.len() {
        return Err(invalid!(
            "{} layer weights for {} causal layers",
            w_layers.len(),
            bundle.layers.len()
        ));
    }
    let mut total = None;
    for (layer, &w) in bundle.layers.iter().zip(w_layers) {
        let l = mse(g, layer.tde, x0)?;
        let l = g.scale(l, w);
        total = Some(match total {
            None => l,
            Some(acc) => g.add(acc, l)?,
        });
    }
    total.ok_or_else(|| invalid!("empty causal bundle"))
}

/// Frozen random two-layer temporal conv network with mean pooling:
/// `[N_raw, M, 12] -> [64]`.
#[derive(Clone, Debug)]
pub struct PerceptualEncoder {
    store: ParamStore,
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
    joints: usize,
}

impl PerceptualEncoder {
    pub fn new(joints: usize) -> Result<Self> {
        Self::with_seed(joints, PERCEPTUAL_SEED)
    }

    pub fn with_seed(joints: usize, seed: u64) -> Result<Self> {
        let cin = joints * CHANNELS;
        let mut store = ParamStore::new();
        let mut init = Init::new(&mut store, seed);
        let w1 = init.weight("enc.conv1.w", &[ENCODER_KERNEL, cin, FEATURE_DIM], ENCODER_KERNEL * cin)?;
        let b1 = init.normal("enc.conv1.b", &[FEATURE_DIM], 0.1)?;
        let w2 = init.weight(
            "enc.conv2.w",
            &[ENCODER_KERNEL, FEATURE_DIM, FEATURE_DIM],
            ENCODER_KERNEL * FEATURE_DIM,
        )?;
        let b2 = init.normal("enc.conv2.b", &[FEATURE_DIM], 0.1)?;
        Ok(PerceptualEncoder {
            store,
            w1,
            b1,
            w2,
            b2,
            joints,
        })
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    /// Encodes a `[N_raw, M, 12]` node; weights enter the tape as constants.
    pub fn encode(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let s = g.shape(x).to_vec();
        if s.len() != 3 || s[1] != self.joints || s[2] != CHANNELS {
            return Err(Error::shape("perceptual encoder", &s, &[0, self.joints, CHANNELS]));
        }
        let h = g.reshape(x, &[1, s[0], self.joints * CHANNELS])?;
        let (w1, b1) = (g.frozen(&self.store, self.w1), g.frozen(&self.store, self.b1));
        let h = g.conv1d(h, w1, Some(b1))?;
        let h = g.gelu(h);
        let (w2, b2) = (g.frozen(&self.store, self.w2), g.frozen(&self.store, self.b2));
        let h = g.conv1d(h, w2, Some(b2))?;
        let h = g.mean_axis(h, 1)?;
        g.reshape(h, &[FEATURE_DIM])
    }

    /// Feature vector of a plain tensor.
    pub fn features(&self, x: &Tensor) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let v = g.constant(x.clone());
        let f = self.encode(&mut g, v)?;
        Ok(g.value(f).data().to_vec())
    }
}

/// `||E(x0_hat) - E(x0)||^2`.
pub fn loss_perceptual(g: &mut Graph, x0: Var, x0_hat: Var, enc: &PerceptualEncoder) -> Result<Var> {
    let a = enc.encode(g, x0_hat)?;
    let b = enc.encode(g, x0)?;
    let d = g.sub(a, b)?;
    let sq = g.square(d)?;
    Ok(g.sum_all(sq))
}

/// Loss components as tape nodes; `fcf` is absent without the causal branch.
#[derive(Clone, Copy, Debug)]
pub struct LossParts {
    pub simple: Var,
    pub fcf: Option<Var>,
    pub perceptual: Var,
}

/// `L_simple + lambda_fcf L_fcf + lambda_p L_p`.
pub fn loss_total(g: &mut Graph, parts: &LossParts, w: &LossWeights) -> Result<Var> {
    w.validate()?;
    let mut total = parts.simple;
    if let Some(f) = parts.fcf {
        let f = g.scale(f, w.lambda_fcf);
        total = g.add(total, f)?;
    }
    let p = g.scale(parts.perceptual, w.lambda_p);
    g.add(total, p)
}

/// Scalar form of [`loss_total`].
pub fn combine_losses(simple: f64, fcf: f64, perceptual: f64, w: &LossWeights) -> Result<f64> {
    w.validate()?;
    Ok(simple + w.lambda_fcf * fcf + w.lambda_p * perceptual)
}
