use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::numcore::Tensor;

pub const TEXT_SEED: u64 = 0x7e57_c0de;

/// Sentence vector `cls` and per-word vectors `tau` for a prompt.
#[derive(Clone, Debug, PartialEq)]
pub struct TextCondition {
    pub cls: Tensor,
    /// `[words, d_text]`.
    pub tau: Tensor,
    pub prompt: String,
}

impl TextCondition {
    pub fn words(&self) -> usize {
        self.tau.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.cls.len()
    }
}

fn fnv1a(bytes: &[u8], seed: u64) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub(crate) fn tokenize(prompt: &str) -> Vec<String> {
    prompt
        .split_whitespace()
        .map(|w| {
            w.chars()
                .filter(|c| c.is_alphanumeric())
                .flat_map(char::to_lowercase)
                .collect::<String>()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

fn word_vector(word: &str, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(word.as_bytes(), TEXT_SEED));
    let v = Tensor::randn(&[dim], &mut rng).into_data();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

/// Hash-seeded unit vectors per lowercased word; `cls` is their mean.
pub fn toy_text_encode(prompt: &str, d_text: usize) -> Result<TextCondition> {
    if d_text == 0 {
        return Err(invalid!("text dimension must be >= 1"));
    }
    let words = tokenize(prompt);
    if words.is_empty() {
        return Err(invalid!("empty prompt"));
    }
    let mut tau = Vec::with_capacity(words.len() * d_text);
    let mut cls = vec![0.0; d_text];
    for w in &words {
        let v = word_vector(w, d_text);
        for (c, x) in cls.iter_mut().zip(&v) {
            *c += x;
        }
        tau.extend(v);
    }
    let n = words.len() as f64;
    cls.iter_mut().for_each(|c| *c /= n);
    Ok(TextCondition {
        cls: Tensor::new(&[d_text], cls)?,
        tau: Tensor::new(&[words.len(), d_text], tau)?,
        prompt: prompt.to_string(),
    })
}
