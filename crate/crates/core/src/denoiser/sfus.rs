use crate::error::{invalid, Error, Result};
use crate::nn::{FeedForward, Init, Linear};
use crate::numcore::{Graph, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum FusionMode {
    /// Softmax-weighted sum of the domains scored from motion and text.
    #[default]
    Score,
    /// Plain channel concatenation of every domain.
    Concat,
}

impl std::str::FromStr for FusionMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "score" | "sfus" => Ok(FusionMode::Score),
            "concat" => Ok(FusionMode::Concat),
            other => Err(invalid!("unknown fusion `{other}` (score|concat)")),
        }
    }
}

impl std::fmt::Display for FusionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FusionMode::Score => "score",
            FusionMode::Concat => "concat",
        })
    }
}

#[derive(Clone, Debug)]
pub struct SFus {
    pub f_mot: Option<FeedForward>,
    pub f_sem: Option<FeedForward>,
    pub out: Linear,
    pub domains: usize,
    pub mode: FusionMode,
    pub dim: usize,
}

pub struct FusionOutput {
    pub out: Var,
    /// `[L, M, k]` convex weights (score mode only).
    pub alpha: Option<Var>,
    pub logits: Option<Var>,
}

impl SFus {
    pub fn new(init: &mut Init, name: &str, dim: usize, d_text: usize, domains: usize, mode: FusionMode) -> Result<Self> {
        if domains == 0 {
            return Err(invalid!("fusion needs at least one domain"));
        }
        Ok(match mode {
            FusionMode::Score => SFus {
                f_mot: Some(FeedForward::new(init, &format!("{name}.f_mot"), domains * dim, dim, domains)?),
                f_sem: Some(FeedForward::new(init, &format!("{name}.f_sem"), dim + d_text, dim, 1)?),
                out: Linear::new(init, &format!("{name}.out"), 2 * dim, dim)?,
                domains,
                mode,
                dim,
            },
            FusionMode::Concat => SFus {
                f_mot: None,
                f_sem: None,
                out: Linear::new(init, &format!("{name}.out"), (domains + 1) * dim, dim)?,
                domains,
                mode,
                dim,
            },
        })
    }

    /// Raw domain logits `[L, M, k]` before the softmax.
    pub fn logits(&self, g: &mut Graph, feats: &[Var], cls: Var) -> Result<Var> {
        let (f_mot, f_sem) = match (&self.f_mot, &self.f_sem) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(invalid!("concat fusion has no domain scores")),
        };
        let shape = g.shape(feats[0]).to_vec();
        let cat = g.concat(feats, 2)?;
        let mot = f_mot.forward(g, cat)?;
        let d_text = g.value(cls).len();
        let c = g.reshape(cls, &[1, 1, d_text])?;
        let c = g.broadcast_to(c, &[shape[0], shape[1], d_text])?;
        let mut sem = Vec::with_capacity(feats.len());
        for &f in feats {
            let joined = g.concat(&[f, c], 2)?;
            sem.push(f_sem.forward(g, joined)?);
        }
        let sem = g.concat(&sem, 2)?;
        g.add(mot, sem)
    }

    /// Convex combination of `feats` from precomputed logits.
    pub fn combine(&self, g: &mut Graph, feats: &[Var], logits: Var) -> Result<(Var, Var)> {
        let alpha = g.softmax(logits);
        let mut fused = None;
        for (i, &f) in feats.iter().enumerate() {
            let a = g.slice(alpha, 2, i, 1)?;
            let term = g.mul(f, a)?;
            fused = Some(match fused {
                None => term,
                Some(acc) => g.add(acc, term)?,
            });
        }
        Ok((fused.expect("at least one domain"), alpha))
    }

    /// `feats` are the per-domain tensors `[L, M, D]`, `x` the block input,
    /// `cls [d_text]` the sentence feature.
    pub fn forward(&self, g: &mut Graph, feats: &[Var], x: Var, cls: Var) -> Result<FusionOutput> {
        if feats.len() != self.domains {
            return Err(invalid!("fusion built for {} domains, got {}", self.domains, feats.len()));
        }
        let shape = g.shape(x).to_vec();
        for &f in feats {
            if g.shape(f) != shape.as_slice() {
                return Err(Error::shape("sfus", g.shape(f), &shape));
            }
        }
        match self.mode {
            FusionMode::Score => {
                let logits = self.logits(g, feats, cls)?;
                let (fused, alpha) = self.combine(g, feats, logits)?;
                let joined = g.concat(&[x, fused], 2)?;
                Ok(FusionOutput {
                    out: self.out.forward(g, joined)?,
                    alpha: Some(alpha),
                    logits: Some(logits),
                })
            }
            FusionMode::Concat => {
                let mut all = vec![x];
                all.extend_from_slice(feats);
                let joined = g.concat(&all, 2)?;
                Ok(FusionOutput {
                    out: self.out.forward(g, joined)?,
                    alpha: None,
                    logits: None,
                })
            }
        }
    }
}
