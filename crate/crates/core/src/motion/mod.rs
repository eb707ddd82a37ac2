//! Frame-major motion tensors `[frames, joints, 12]`, the skeleton graph,
//! toy text conditioning, the synthetic corpus and token assembly.

mod corpus;
mod skeleton;
mod synth;
mod text;
mod tokens;

pub use corpus::{read_corpus, write_corpus, CorpusItem};
pub use skeleton::{default_skeleton, load_edges, save_edges, skeleton_adjacency, SkeletonGraph, DEFAULT_EDGES, DEFAULT_JOINTS};
pub use synth::{parse_prompt, synth_clean, synth_dataset, MotionSpec, Vocab, FRAMES_PER_CYCLE, SYNTH_NOISE};
pub use text::{toy_text_encode, TextCondition, TEXT_SEED};
pub use tokens::{pos_encode_2d, timestep_embedding, Conditioning, TokenEmbedder};

use crate::error::{invalid, Error, Result};
use crate::numcore::Tensor;

pub const CHANNELS: usize = 12;

#[derive(Clone, Debug, PartialEq)]
pub struct MotionTensor(Tensor);

impl MotionTensor {
    pub fn new(t: Tensor) -> Result<Self> {
        let s = t.shape();
        if s.len() != 3 || s[2] != CHANNELS {
            return Err(Error::shape("motion tensor", s, &[0, 0, CHANNELS]));
        }
        Ok(MotionTensor(t))
    }

    pub fn zeros(frames: usize, joints: usize) -> Self {
        MotionTensor(Tensor::zeros(&[frames, joints, CHANNELS]))
    }

    pub fn frames(&self) -> usize {
        self.0.shape()[0]
    }

    pub fn joints(&self) -> usize {
        self.0.shape()[1]
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn tensor_mut(&mut self) -> &mut Tensor {
        &mut self.0
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }

    pub fn get(&self, frame: usize, joint: usize, ch: usize) -> f64 {
        self.0.data()[(frame * self.joints() + joint) * CHANNELS + ch]
    }

    /// Root ground-plane (x, z) trajectory per frame.
    pub fn root_trajectory(&self) -> Vec<(f64, f64)> {
        (0..self.frames()).map(|f| (self.get(f, 0, 0), self.get(f, 0, 2))).collect()
    }
}

/// Stride-`s` average pooling over frames; output has `ceil(N_raw / s)` frames.
pub fn temporal_downsample(x: &MotionTensor, s: usize) -> Result<MotionTensor> {
    if s < 1 {
        return Err(invalid!("downsampling factor must be >= 1, got {s}"));
    }
    let (n_raw, m) = (x.frames(), x.joints());
    let inner = m * CHANNELS;
    let n = n_raw.div_ceil(s);
    let mut out = vec![0.0; n * inner];
    for o in 0..n {
        let lo = o * s;
        let hi = (lo + s).min(n_raw);
        let w = 1.0 / (hi - lo) as f64;
        for f in lo..hi {
            let src = &x.tensor().data()[f * inner..(f + 1) * inner];
            for (d, v) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                *d += v * w;
            }
        }
    }
    MotionTensor::new(Tensor::new(&[n, m, CHANNELS], out)?)
}

/// Nearest-frame repeat by `s`, trimmed to `n_raw` frames.
pub fn temporal_upsample(x: &MotionTensor, s: usize, n_raw: usize) -> Result<MotionTensor> {
    if s < 1 || n_raw.div_ceil(s) != x.frames() {
        return Err(invalid!(
            "cannot upsample {} frames by {s} to {n_raw}",
            x.frames()
        ));
    }
    let inner = x.joints() * CHANNELS;
    let mut out = Vec::with_capacity(n_raw * inner);
    for f in 0..n_raw {
        let src = f / s;
        out.extend_from_slice(&x.tensor().data()[src * inner..(src + 1) * inner]);
    }
    MotionTensor::new(Tensor::new(&[n_raw, x.joints(), CHANNELS], out)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counting(frames: usize, joints: usize) -> MotionTensor {
        let data = (0..frames * joints * CHANNELS).map(|i| (i / (joints * CHANNELS)) as f64).collect();
        MotionTensor::new(Tensor::new(&[frames, joints, CHANNELS], data).unwrap()).unwrap()
    }

    #[test]
    fn rejects_wrong_channel_count() {
        assert!(MotionTensor::new(Tensor::zeros(&[4, 2, 11])).is_err());
        assert!(MotionTensor::new(Tensor::zeros(&[4, 12])).is_err());
    }

    #[test]
    fn downsample_identity_and_counts() {
        let x = counting(10, 2);
        assert_eq!(temporal_downsample(&x, 1).unwrap(), x);
        assert_eq!(temporal_downsample(&counting(196, 1), 7).unwrap().frames(), 28);
        let y = temporal_downsample(&x, 4).unwrap();
        assert_eq!(y.frames(), 3);
        assert_eq!(y.get(0, 0, 0), 1.5);
        assert_eq!(y.get(1, 1, 5), 5.5);
        // last window holds frames 8 and 9
        assert_eq!(y.get(2, 0, 0), 8.5);
        assert!(temporal_downsample(&x, 0).is_err());
    }

    #[test]
    fn upsample_restores_frame_count() {
        let x = counting(10, 3);
        let y = temporal_downsample(&x, 4).unwrap();
        let z = temporal_upsample(&y, 4, 10).unwrap();
        assert_eq!(z.tensor().shape(), &[10, 3, 12]);
        assert_eq!(z.get(9, 2, 0), 8.5);
        assert!(temporal_upsample(&y, 4, 13).is_err());
    }
}
