//! Dense row-major tensors and their text serialization.
//!
//! The text format is shared by checkpoints, motion files and corpora:
//!
//! ```text
//! TENSOR v1
//! <dim0> <dim1> ...
//! <value>
//! <value>
//! ...
//! ```
//!
//! Values are written one per line with 9 significant digits.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};

pub const TENSOR_MAGIC: &str = "TENSOR v1";

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    pub requires_grad: bool,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(invalid!("tensor extents must be positive, got {shape:?}"));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::shape("tensor", shape, &[data.len()]));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
            requires_grad: false,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
            requires_grad: false,
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor::full(&[1], value)
    }

    pub fn eye(n: usize) -> Self {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn randn<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Self {
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        Tensor {
            shape: shape.to_vec(),
            data,
            requires_grad: false,
        }
    }

    pub fn uniform<R: Rng + ?Sized>(shape: &[usize], bound: f64, rng: &mut R) -> Self {
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
        Tensor {
            shape: shape.to_vec(),
            data,
            requires_grad: false,
        }
    }

    /// Kaiming-uniform initialization with unit gain: U(-sqrt(3/fan_in), sqrt(3/fan_in)).
    pub fn kaiming_uniform<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Self {
        let bound = (3.0 / fan_in.max(1) as f64).sqrt();
        Tensor::uniform(shape, bound, rng)
    }

    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::shape("reshape", &self.shape, shape));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: f64) {
        let o = self.offset(index);
        self.data[o] = value;
    }

    fn offset(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.shape.len(), "index rank");
        index
            .iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &d)| {
                assert!(i < d, "index {i} out of bounds for extent {d}");
                acc * d + i
            })
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
            requires_grad: false,
        }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::shape("zip_map", &self.shape, &other.shape));
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            requires_grad: false,
        })
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(16 * self.data.len() + 32);
        out.push_str(TENSOR_MAGIC);
        out.push('\n');
        let dims: Vec<String> = self.shape.iter().map(|d| d.to_string()).collect();
        out.push_str(&dims.join(" "));
        out.push('\n');
        for v in &self.data {
            let _ = writeln!(out, "{}", format_value(*v));
        }
        out
    }

    /// Parses a tensor from the start of `lines`, consuming exactly the
    /// header, dims and value lines.
    pub fn parse_lines<'a, I>(lines: &mut I) -> Result<Tensor>
    where
        I: Iterator<Item = &'a str>,
    {
        let magic = lines
            .next()
            .ok_or_else(|| Error::Parse("missing tensor header".into()))?;
        if magic.trim() != TENSOR_MAGIC {
            return Err(Error::Parse(format!("expected `{TENSOR_MAGIC}`, got `{magic}`")));
        }
        let dims_line = lines
            .next()
            .ok_or_else(|| Error::Parse("missing tensor dims".into()))?;
        let shape = dims_line
            .split_whitespace()
            .map(|d| {
                d.parse::<usize>()
                    .map_err(|e| Error::Parse(format!("bad dim `{d}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if shape.is_empty() {
            return Err(Error::Parse("empty dims line".into()));
        }
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        while data.len() < n {
            let line = lines
                .next()
                .ok_or_else(|| Error::Parse(format!("expected {n} values, got {}", data.len())))?;
            for tok in line.split_whitespace() {
                data.push(
                    tok.parse::<f64>()
                        .map_err(|e| Error::Parse(format!("bad value `{tok}`: {e}")))?,
                );
            }
        }
        if data.len() != n {
            return Err(Error::Parse(format!("expected {n} values, got {}", data.len())));
        }
        Tensor::new(&shape, data)
    }

    pub fn from_text(text: &str) -> Result<Tensor> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let t = Tensor::parse_lines(&mut lines)?;
        if lines.next().is_some() {
            return Err(Error::Parse("trailing content after tensor".into()));
        }
        Ok(t)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Tensor> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Tensor::from_text(&text)
    }
}

/// Nine significant digits in scientific notation.
pub fn format_value(v: f64) -> String {
    format!("{v:.8e}")
}
