//! Computation tape with reverse-mode differentiation.
//!
//! Every forward op appends a node whose inputs are earlier nodes, so the
//! node vector is already in topological order and backward is a single
//! reverse sweep. Param leaves are bound lazily from a [`ParamStore`]; a
//! param used several times maps to one leaf.

use std::collections::HashMap;

use super::kernels::{self, gemm, split_at_axis};
use super::params::{ParamGrads, ParamId, ParamStore};
use super::spectral;
use super::tensor::Tensor;
use crate::error::{invalid, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    BroadcastTo(Var),
    MatMul(Var, Var),
    BatchMatMul(Var, Var),
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    /// Saves `tanh(u)` of the forward pass.
    Gelu(Var, Vec<f64>),
    Relu(Var),
    Sigmoid(Var),
    Ln(Var),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    GroupNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        groups: usize,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    Conv1d {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    DepthwiseConv1d {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    MeanAxis {
        x: Var,
        axis: usize,
    },
    MaxAxis {
        x: Var,
        axis: usize,
        argmax: Vec<usize>,
    },
    SumAll(Var),
    MeanAll(Var),
    Concat {
        inputs: Vec<Var>,
        axis: usize,
    },
    Slice {
        x: Var,
        axis: usize,
        start: usize,
    },
    Permute {
        x: Var,
        perm: Vec<usize>,
    },
    Reshape(Var),
    AvgPoolFrames {
        x: Var,
        stride: usize,
    },
    RepeatFrames {
        x: Var,
        stride: usize,
    },
    PadEdgeFrames {
        x: Var,
        extra: usize,
    },
    HaarSplit(Var),
    HaarMerge(Var),
    Rfft(Var),
    Irfft(Var),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

pub struct Graph<'p> {
    nodes: Vec<Node>,
    params: Option<&'p ParamStore>,
    bound: HashMap<ParamId, Var>,
    grads: Vec<Option<Vec<f64>>>,
    backward_done: bool,
}

impl Default for Graph<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'p> Graph<'p> {
    /// A graph with no parameter store; only inputs and constants.
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            params: None,
            bound: HashMap::new(),
            grads: Vec::new(),
            backward_done: false,
        }
    }

    pub fn with_params(params: &'p ParamStore) -> Self {
        Graph {
            params: Some(params),
            ..Graph::new()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    /// Leaf taking its differentiability from `t.requires_grad`.
    pub fn input(&mut self, t: Tensor) -> Var {
        let rg = t.requires_grad;
        self.push(t, Op::Leaf, rg)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, mut t: Tensor) -> Var {
        t.requires_grad = false;
        self.push(t, Op::Leaf, false)
    }

    /// Binds a parameter of the graph's store as a differentiable leaf.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.bound.get(&id) {
            return v;
        }
        let store = self
            .params
            .expect("Graph::param called on a graph without a parameter store");
        let t = store.get(id).clone();
        let v = self.push(t, Op::Leaf, true);
        self.bound.insert(id, v);
        v
    }

    /// Binds a parameter of a foreign store as a constant (frozen weights).
    pub fn frozen(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.constant(store.get(id).clone())
    }

    // ---- elementwise and broadcasting -------------------------------------

    fn broadcast_binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<(Tensor, bool)> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        let rg = self.rg(a) || self.rg(b);
        if sa == sb {
            let da = self.data(a);
            let db = self.data(b);
            let out: Vec<f64> = da.iter().zip(db).map(|(&x, &y)| f(x, y)).collect();
            return Ok((Tensor::new(&sa, out)?, rg));
        }
        let out_shape =
            kernels::broadcast_shape(&sa, &sb).ok_or_else(|| Error::shape(name, &sa, &sb))?;
        let oa = kernels::broadcast_offsets(&sa, &out_shape);
        let ob = kernels::broadcast_offsets(&sb, &out_shape);
        let da = self.data(a);
        let db = self.data(b);
        let out: Vec<f64> = oa.iter().zip(&ob).map(|(&i, &j)| f(da[i], db[j])).collect();
        Ok((Tensor::new(&out_shape, out)?, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (t, rg) = self.broadcast_binary("add", a, b, |x, y| x + y)?;
        Ok(self.push(t, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (t, rg) = self.broadcast_binary("sub", a, b, |x, y| x - y)?;
        Ok(self.push(t, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (t, rg) = self.broadcast_binary("mul", a, b, |x, y| x * y)?;
        Ok(self.push(t, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let t = self.value(a).map(|v| v * c);
        let rg = self.rg(a);
        self.push(t, Op::Scale(a, c), rg)
    }

    pub fn broadcast_to(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        match kernels::broadcast_shape(&sa, shape) {
            Some(s) if s == shape => {}
            _ => return Err(Error::shape("broadcast_to", &sa, shape)),
        }
        let offs = kernels::broadcast_offsets(&sa, shape);
        let d = self.data(a);
        let out: Vec<f64> = offs.iter().map(|&i| d[i]).collect();
        let t = Tensor::new(shape, out)?;
        let rg = self.rg(a);
        Ok(self.push(t, Op::BroadcastTo(a), rg))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let t = self.value(a).map(f);
        let rg = self.rg(a);
        self.push(t, op, rg)
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let x = self.data(a);
        let th: Vec<f64> = x.iter().map(|&v| kernels::gelu_tanh(v)).collect();
        let out: Vec<f64> = x.iter().zip(&th).map(|(&v, &t)| 0.5 * v * (1.0 + t)).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(a);
        self.push(Tensor::new(&shape, out).expect("same shape"), Op::Gelu(a, th), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |v| v.max(0.0), Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, kernels::sigmoid, Op::Sigmoid(a))
    }

    pub fn ln(&mut self, a: Var) -> Result<Var> {
        if self.data(a).iter().any(|&v| v <= 0.0) {
            return Err(invalid!("ln of a non-positive value"));
        }
        Ok(self.unary(a, f64::ln, Op::Ln(a)))
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.mul(a, a)
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Var {
        let shape = self.shape(a).to_vec();
        let c = *shape.last().unwrap();
        let mut out = self.data(a).to_vec();
        for row in out.chunks_mut(c) {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                s += *v;
            }
            for v in row.iter_mut() {
                *v /= s;
            }
        }
        let rg = self.rg(a);
        self.push(Tensor::new(&shape, out).unwrap(), Op::Softmax(a), rg)
    }

    // ---- matrix products --------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape("matmul", &sa, &sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.data(a), false, self.data(b), false, &mut out, false);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(&[m, n], out)?, Op::MatMul(a, b), rg))
    }

    /// `[B, m, k] x [B, k, n] -> [B, m, n]`.
    pub fn bmm(&mut self, a: Var, b: Var) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[1] {
            return Err(Error::shape("bmm", &sa, &sb));
        }
        let (bs, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
        let mut out = vec![0.0; bs * m * n];
        let da = self.data(a);
        let db = self.data(b);
        for i in 0..bs {
            gemm(
                m,
                k,
                n,
                &da[i * m * k..(i + 1) * m * k],
                false,
                &db[i * k * n..(i + 1) * k * n],
                false,
                &mut out[i * m * n..(i + 1) * m * n],
                false,
            );
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(&[bs, m, n], out)?, Op::BatchMatMul(a, b), rg))
    }

    /// `x[..., in] · w[in, out] + b[out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let sw = self.shape(w).to_vec();
        let fan_in = *sx.last().unwrap();
        if sw.len() != 2 || sw[0] != fan_in {
            return Err(Error::shape("linear", &sx, &sw));
        }
        let fan_out = sw[1];
        if let Some(b) = b {
            if self.shape(b) != [fan_out] {
                return Err(Error::shape("linear bias", self.shape(b), &[fan_out]));
            }
        }
        let rows = self.value(x).len() / fan_in;
        let mut out = vec![0.0; rows * fan_out];
        if let Some(b) = b {
            let bd = self.data(b);
            for r in out.chunks_mut(fan_out) {
                r.copy_from_slice(bd);
            }
        }
        gemm(
            rows,
            fan_in,
            fan_out,
            self.data(x),
            false,
            self.data(w),
            false,
            &mut out,
            b.is_some(),
        );
        let mut shape = sx;
        *shape.last_mut().unwrap() = fan_out;
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        Ok(self.push(Tensor::new(&shape, out)?, Op::Linear { x, w, b }, rg))
    }

    // ---- normalization -----------------------------------------------------

    /// Layer norm over the last axis with affine `gamma`, `beta`.
    /// A constant row normalizes to zero before the affine map.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let c = *shape.last().unwrap();
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(Error::shape("layer_norm", &shape, self.shape(gamma)));
        }
        let xd = self.data(x);
        let rows = xd.len() / c;
        let mut xhat = vec![0.0; xd.len()];
        let mut rstd = vec![0.0; rows];
        for r in 0..rows {
            let row = &xd[r * c..(r + 1) * c];
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let rs = 1.0 / (var + eps).sqrt();
            rstd[r] = rs;
            for j in 0..c {
                xhat[r * c + j] = (row[j] - mean) * rs;
            }
        }
        let g = self.data(gamma);
        let bt = self.data(beta);
        let out: Vec<f64> = xhat
            .iter()
            .enumerate()
            .map(|(i, &h)| h * g[i % c] + bt[i % c])
            .collect();
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        Ok(self.push(
            Tensor::new(&shape, out)?,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
            rg,
        ))
    }

    /// Group norm over channels (last axis) split into `groups`; statistics
    /// span every leading position and the channels of one group.
    pub fn group_norm(
        &mut self,
        x: Var,
        groups: usize,
        gamma: Var,
        beta: Var,
        eps: f64,
    ) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let c = *shape.last().unwrap();
        if groups == 0 || c % groups != 0 {
            return Err(invalid!(
                "group_norm: {c} channels not divisible by {groups} groups"
            ));
        }
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(Error::shape("group_norm", &shape, self.shape(gamma)));
        }
        let cg = c / groups;
        let xd = self.data(x);
        let positions = xd.len() / c;
        let count = (positions * cg) as f64;
        let mut xhat = vec![0.0; xd.len()];
        let mut rstd = vec![0.0; groups];
        for gi in 0..groups {
            let mut mean = 0.0;
            for p in 0..positions {
                for j in gi * cg..(gi + 1) * cg {
                    mean += xd[p * c + j];
                }
            }
            mean /= count;
            let mut var = 0.0;
            for p in 0..positions {
                for j in gi * cg..(gi + 1) * cg {
                    let d = xd[p * c + j] - mean;
                    var += d * d;
                }
            }
            var /= count;
            let rs = 1.0 / (var + eps).sqrt();
            rstd[gi] = rs;
            for p in 0..positions {
                for j in gi * cg..(gi + 1) * cg {
                    xhat[p * c + j] = (xd[p * c + j] - mean) * rs;
                }
            }
        }
        let g = self.data(gamma);
        let bt = self.data(beta);
        let out: Vec<f64> = xhat
            .iter()
            .enumerate()
            .map(|(i, &h)| h * g[i % c] + bt[i % c])
            .collect();
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        Ok(self.push(
            Tensor::new(&shape, out)?,
            Op::GroupNorm {
                x,
                gamma,
                beta,
                groups,
                xhat,
                rstd,
            },
            rg,
        ))
    }

    // ---- convolutions ------------------------------------------------------

    /// Same-padded 1-D convolution over axis 1 of `x[B, L, Cin]` with
    /// `w[K, Cin, Cout]` (K odd).
    pub fn conv1d(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let sw = self.shape(w).to_vec();
        if sx.len() != 3 || sw.len() != 3 || sw[1] != sx[2] || sw[0] % 2 == 0 {
            return Err(Error::shape("conv1d", &sx, &sw));
        }
        let (bs, l, cin) = (sx[0], sx[1], sx[2]);
        let (k, cout) = (sw[0], sw[2]);
        if let Some(b) = b {
            if self.shape(b) != [cout] {
                return Err(Error::shape("conv1d bias", self.shape(b), &[cout]));
            }
        }
        let pad = k / 2;
        let mut out = vec![0.0; bs * l * cout];
        if let Some(b) = b {
            let bd = self.data(b);
            for r in out.chunks_mut(cout) {
                r.copy_from_slice(bd);
            }
        }
        let xd = self.data(x);
        let wd = self.data(w);
        for bi in 0..bs {
            for tap in 0..k {
                // output rows l0..l1 read input rows l0+tap-pad..
                let (l0, l1) = conv_range(l, tap, pad);
                if l0 >= l1 {
                    continue;
                }
                let src0 = l0 + tap - pad;
                let rows = l1 - l0;
                gemm(
                    rows,
                    cin,
                    cout,
                    &xd[(bi * l + src0) * cin..(bi * l + src0 + rows) * cin],
                    false,
                    &wd[tap * cin * cout..(tap + 1) * cin * cout],
                    false,
                    &mut out[(bi * l + l0) * cout..(bi * l + l1) * cout],
                    true,
                );
            }
        }
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        Ok(self.push(
            Tensor::new(&[bs, l, cout], out)?,
            Op::Conv1d { x, w, b },
            rg,
        ))
    }

    /// Same-padded depth-wise convolution over axis 1 of `x[B, L, C]` with
    /// per-channel taps `w[K, C]`.
    pub fn depthwise_conv1d(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let sw = self.shape(w).to_vec();
        if sx.len() != 3 || sw.len() != 2 || sw[1] != sx[2] || sw[0] % 2 == 0 {
            return Err(Error::shape("depthwise_conv1d", &sx, &sw));
        }
        let (bs, l, c) = (sx[0], sx[1], sx[2]);
        let k = sw[0];
        if let Some(b) = b {
            if self.shape(b) != [c] {
                return Err(Error::shape("depthwise_conv1d bias", self.shape(b), &[c]));
            }
        }
        let pad = k / 2;
        let mut out = vec![0.0; bs * l * c];
        if let Some(b) = b {
            let bd = self.data(b);
            for r in out.chunks_mut(c) {
                r.copy_from_slice(bd);
            }
        }
        let xd = self.data(x);
        let wd = self.data(w);
        for bi in 0..bs {
            for tap in 0..k {
                let (l0, l1) = conv_range(l, tap, pad);
                for li in l0..l1 {
                    let src = li + tap - pad;
                    let o = &mut out[(bi * l + li) * c..(bi * l + li + 1) * c];
                    let xi = &xd[(bi * l + src) * c..(bi * l + src + 1) * c];
                    let wt = &wd[tap * c..(tap + 1) * c];
                    for j in 0..c {
                        o[j] += xi[j] * wt[j];
                    }
                }
            }
        }
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        Ok(self.push(
            Tensor::new(&[bs, l, c], out)?,
            Op::DepthwiseConv1d { x, w, b },
            rg,
        ))
    }

    /// Kernel-1 convolution: a channel-mixing linear map on the last axis.
    pub fn pointwise_conv1d(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        self.linear(x, w, b)
    }

    // ---- reductions ----------------------------------------------------------

    /// Mean over `axis`, keeping it with extent 1.
    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(invalid!("mean_axis: axis {axis} out of range for {shape:?}"));
        }
        let (outer, n, inner) = split_at_axis(&shape, axis);
        let d = self.data(x);
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for i in 0..n {
                let base = (o * n + i) * inner;
                for j in 0..inner {
                    out[o * inner + j] += d[base + j];
                }
            }
        }
        out.iter_mut().for_each(|v| *v /= n as f64);
        let mut oshape = shape;
        oshape[axis] = 1;
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(&oshape, out)?, Op::MeanAxis { x, axis }, rg))
    }

    /// Max over `axis`, keeping it with extent 1.
    pub fn max_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(invalid!("max_axis: axis {axis} out of range for {shape:?}"));
        }
        let (outer, n, inner) = split_at_axis(&shape, axis);
        let d = self.data(x);
        let mut out = vec![f64::NEG_INFINITY; outer * inner];
        let mut argmax = vec![0usize; outer * inner];
        for o in 0..outer {
            for i in 0..n {
                let base = (o * n + i) * inner;
                for j in 0..inner {
                    if d[base + j] > out[o * inner + j] {
                        out[o * inner + j] = d[base + j];
                        argmax[o * inner + j] = i;
                    }
                }
            }
        }
        let mut oshape = shape;
        oshape[axis] = 1;
        let rg = self.rg(x);
        Ok(self.push(
            Tensor::new(&oshape, out)?,
            Op::MaxAxis { x, axis, argmax },
            rg,
        ))
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::SumAll(x), rg)
    }

    pub fn mean_all(&mut self, x: Var) -> Var {
        let s = self.value(x).mean();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::MeanAll(x), rg)
    }

    // ---- layout -------------------------------------------------------------

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = inputs
            .first()
            .ok_or_else(|| invalid!("concat of zero tensors"))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(invalid!("concat: axis {axis} out of range for {base:?}"));
        }
        let mut total = 0;
        for &v in inputs {
            let s = self.shape(v);
            if s.len() != base.len()
                || s.iter()
                    .zip(&base)
                    .enumerate()
                    .any(|(i, (a, b))| i != axis && a != b)
            {
                return Err(Error::shape("concat", &base, s));
            }
            total += s[axis];
        }
        let (outer, _, inner) = split_at_axis(&base, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in inputs {
                let n = self.shape(v)[axis];
                let d = self.data(v);
                out.extend_from_slice(&d[o * n * inner..(o + 1) * n * inner]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let rg = inputs.iter().any(|&v| self.rg(v));
        Ok(self.push(
            Tensor::new(&shape, out)?,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            rg,
        ))
    }

    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(invalid!(
                "slice [{start}, {}) on axis {axis} out of range for {shape:?}",
                start + len
            ));
        }
        let (outer, n, inner) = split_at_axis(&shape, axis);
        let d = self.data(x);
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            out.extend_from_slice(&d[(o * n + start) * inner..(o * n + start + len) * inner]);
        }
        let mut oshape = shape;
        oshape[axis] = len;
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(&oshape, out)?, Op::Slice { x, axis, start }, rg))
    }

    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let mut seen = vec![false; shape.len()];
        if perm.len() != shape.len() || perm.iter().any(|&p| p >= shape.len() || std::mem::replace(&mut seen[p], true)) {
            return Err(invalid!("invalid permutation {perm:?} for {shape:?}"));
        }
        let (out, oshape) = kernels::permute(self.data(x), &shape, perm);
        let rg = self.rg(x);
        Ok(self.push(
            Tensor::new(&oshape, out)?,
            Op::Permute {
                x,
                perm: perm.to_vec(),
            },
            rg,
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshape(shape)?;
        let rg = self.rg(x);
        Ok(self.push(t, Op::Reshape(x), rg))
    }

    // ---- frame-axis resampling ---------------------------------------------

    /// Stride-`s` average pooling over axis 0; the last window may be short.
    pub fn avg_pool_frames(&mut self, x: Var, stride: usize) -> Result<Var> {
        if stride < 1 {
            return Err(invalid!("downsampling stride must be >= 1"));
        }
        let shape = self.shape(x).to_vec();
        let n_raw = shape[0];
        let inner = self.value(x).len() / n_raw;
        let n = n_raw.div_ceil(stride);
        let d = self.data(x);
        let mut out = vec![0.0; n * inner];
        for f in 0..n_raw {
            let o = f / stride;
            for j in 0..inner {
                out[o * inner + j] += d[f * inner + j];
            }
        }
        for o in 0..n {
            let count = (stride.min(n_raw - o * stride)) as f64;
            for j in 0..inner {
                out[o * inner + j] /= count;
            }
        }
        let mut oshape = shape;
        oshape[0] = n;
        let rg = self.rg(x);
        Ok(self.push(
            Tensor::new(&oshape, out)?,
            Op::AvgPoolFrames { x, stride },
            rg,
        ))
    }

    /// Nearest-frame upsampling over axis 0: output frame `f` copies input
    /// frame `f / stride`, for `f < out_len`.
    pub fn repeat_frames(&mut self, x: Var, stride: usize, out_len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let n = shape[0];
        if stride < 1 || out_len == 0 || out_len.div_ceil(stride) != n {
            return Err(invalid!(
                "repeat_frames: {n} frames at stride {stride} cannot produce {out_len}"
            ));
        }
        let inner = self.value(x).len() / n;
        let d = self.data(x);
        let mut out = Vec::with_capacity(out_len * inner);
        for f in 0..out_len {
            let s = f / stride;
            out.extend_from_slice(&d[s * inner..(s + 1) * inner]);
        }
        let mut oshape = shape;
        oshape[0] = out_len;
        let rg = self.rg(x);
        Ok(self.push(
            Tensor::new(&oshape, out)?,
            Op::RepeatFrames { x, stride },
            rg,
        ))
    }

    /// Appends `extra` copies of the last frame (axis 0).
    pub fn pad_edge_frames(&mut self, x: Var, extra: usize) -> Result<Var> {
        if extra == 0 {
            return Ok(x);
        }
        let shape = self.shape(x).to_vec();
        let n = shape[0];
        let inner = self.value(x).len() / n;
        let d = self.data(x);
        let mut out = d.to_vec();
        for _ in 0..extra {
            out.extend_from_slice(&d[(n - 1) * inner..n * inner]);
        }
        let mut oshape = shape;
        oshape[0] = n + extra;
        let rg = self.rg(x);
        Ok(self.push(
            Tensor::new(&oshape, out)?,
            Op::PadEdgeFrames { x, extra },
            rg,
        ))
    }

    // ---- spectral -------------------------------------------------------------

    /// Haar analysis on axis 0 (even length): `[L, ...] -> [2, L/2, ...]`
    /// with the low band at index 0.
    pub fn haar_split(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let l = shape[0];
        if l % 2 != 0 {
            return Err(invalid!("haar_split needs an even frame count, got {l}"));
        }
        let cols = self.value(x).len() / l;
        let out = spectral::haar_split(self.data(x), l, cols);
        let mut oshape = vec![2, l / 2];
        oshape.extend_from_slice(&shape[1..]);
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(&oshape, out)?, Op::HaarSplit(x), rg))
    }

    /// Haar synthesis: `[2, K, ...] -> [2K, ...]`.
    pub fn haar_merge(&mut self, y: Var) -> Result<Var> {
        let shape = self.shape(y).to_vec();
        if shape.len() < 2 || shape[0] != 2 {
            return Err(invalid!("haar_merge expects [2, K, ...], got {shape:?}"));
        }
        let half = shape[1];
        let cols = self.value(y).len() / (2 * half);
        let out = spectral::haar_merge(self.data(y), half, cols);
        let mut oshape = vec![2 * half];
        oshape.extend_from_slice(&shape[2..]);
        let rg = self.rg(y);
        Ok(self.push(Tensor::new(&oshape, out)?, Op::HaarMerge(y), rg))
    }

    /// Real DFT along axis 0 of `[L, ..., C]`, returning `[L/2+1, ..., 2C]`
    /// with real parts in the first C channels and imaginary in the last C.
    pub fn rfft_frames(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.len() < 2 {
            return Err(invalid!("rfft_frames expects rank >= 2, got {shape:?}"));
        }
        let l = shape[0];
        let c = *shape.last().unwrap();
        let cols = self.value(x).len() / l;
        let (re, im) = spectral::rfft(self.data(x), l, cols);
        let bins = spectral::rfft_bins(l);
        let out = interleave_channels(&re, &im, bins * cols / c, c);
        let mut oshape = shape;
        oshape[0] = bins;
        *oshape.last_mut().unwrap() = 2 * c;
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(&oshape, out)?, Op::Rfft(x), rg))
    }

    /// Inverse of [`Graph::rfft_frames`] to `len` frames.
    pub fn irfft_frames(&mut self, s: Var, len: usize) -> Result<Var> {
        let shape = self.shape(s).to_vec();
        let bins = spectral::rfft_bins(len);
        let c2 = *shape.last().unwrap();
        if shape.len() < 2 || shape[0] != bins || c2 % 2 != 0 {
            return Err(Error::shape("irfft_frames", &shape, &[bins]));
        }
        let c = c2 / 2;
        let rows = self.value(s).len() / c2;
        let (re, im) = split_channels(self.data(s), rows, c);
        let cols = rows / bins * c;
        let out = spectral::irfft(&re, &im, len, cols);
        let mut oshape = shape;
        oshape[0] = len;
        *oshape.last_mut().unwrap() = c;
        let rg = self.rg(s);
        Ok(self.push(Tensor::new(&oshape, out)?, Op::Irfft(s), rg))
    }

    // ---- backward ---------------------------------------------------------------

    /// Reverse sweep from a scalar `loss`. May be called once per graph.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(invalid!("backward already ran on this graph"));
        }
        if self.value(loss).len() != 1 {
            return Err(invalid!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            ));
        }
        self.backward_done = true;
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<f64>>> = (0..n).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    pub fn grad(&self, v: Var) -> Option<Tensor> {
        self.grads
            .get(v.0)
            .and_then(|g| g.as_ref())
            .map(|g| Tensor::new(self.shape(v), g.clone()).unwrap())
    }

    /// Whether node `i` is a bound parameter leaf.
    pub fn is_param_leaf(&self, i: usize) -> bool {
        self.bound.values().any(|v| v.0 == i)
    }

    pub fn param_var(&self, id: ParamId) -> Option<Var> {
        self.bound.get(&id).copied()
    }

    /// Gradient of a bound parameter (zeros if unused or unreached).
    pub fn param_grad(&self, id: ParamId) -> Option<Vec<f64>> {
        let v = self.param_var(id)?;
        Some(
            self.grads
                .get(v.0)
                .and_then(|g| g.clone())
                .unwrap_or_else(|| vec![0.0; self.value(v).len()]),
        )
    }

    /// Adds `scale * grad` of every bound parameter into `acc`, in
    /// parameter-id order.
    pub fn accumulate_param_grads(&self, acc: &mut ParamGrads, scale: f64) {
        let mut ids: Vec<ParamId> = self.bound.keys().copied().collect();
        ids.sort();
        for id in ids {
            let v = self.bound[&id];
            if let Some(Some(g)) = self.grads.get(v.0) {
                acc.add_scaled(id, g, scale);
            }
        }
    }

    fn backprop_node(
        &self,
        i: usize,
        g: &[f64],
        grads: &mut [Option<Vec<f64>>],
    ) -> Result<()> {
        let node = &self.nodes[i];
        let out_shape = node.value.shape();
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.acc_broadcast(*a, out_shape, g, 1.0, grads);
                self.acc_broadcast(*b, out_shape, g, 1.0, grads);
            }
            Op::Sub(a, b) => {
                self.acc_broadcast(*a, out_shape, g, 1.0, grads);
                self.acc_broadcast(*b, out_shape, g, -1.0, grads);
            }
            Op::Mul(a, b) => {
                for (x, y) in [(*a, *b), (*b, *a)] {
                    if !self.rg(x) {
                        continue;
                    }
                    let other = self.data(y);
                    let prod: Vec<f64> = if self.shape(y) == out_shape {
                        g.iter().zip(other).map(|(a, b)| a * b).collect()
                    } else {
                        let offs = kernels::broadcast_offsets(self.shape(y), out_shape);
                        g.iter().zip(&offs).map(|(a, &o)| a * other[o]).collect()
                    };
                    self.acc_broadcast(x, out_shape, &prod, 1.0, grads);
                }
            }
            Op::Scale(a, c) => {
                let gg: Vec<f64> = g.iter().map(|v| v * c).collect();
                acc_vec(grads, *a, gg);
            }
            Op::BroadcastTo(a) => self.acc_broadcast(*a, out_shape, g, 1.0, grads),
            Op::MatMul(a, b) => {
                let sa = self.shape(*a);
                let (m, k) = (sa[0], sa[1]);
                let nn = self.shape(*b)[1];
                if self.rg(*a) {
                    let mut ga = vec![0.0; m * k];
                    gemm(m, nn, k, g, false, self.data(*b), true, &mut ga, false);
                    acc_vec(grads, *a, ga);
                }
                if self.rg(*b) {
                    let mut gb = vec![0.0; k * nn];
                    gemm(k, m, nn, self.data(*a), true, g, false, &mut gb, false);
                    acc_vec(grads, *b, gb);
                }
            }
            Op::BatchMatMul(a, b) => {
                let sa = self.shape(*a);
                let (bs, m, k) = (sa[0], sa[1], sa[2]);
                let nn = self.shape(*b)[2];
                if self.rg(*a) {
                    let mut ga = vec![0.0; bs * m * k];
                    let db = self.data(*b);
                    for t in 0..bs {
                        gemm(
                            m,
                            nn,
                            k,
                            &g[t * m * nn..(t + 1) * m * nn],
                            false,
                            &db[t * k * nn..(t + 1) * k * nn],
                            true,
                            &mut ga[t * m * k..(t + 1) * m * k],
                            false,
                        );
                    }
                    acc_vec(grads, *a, ga);
                }
                if self.rg(*b) {
                    let mut gb = vec![0.0; bs * k * nn];
                    let da = self.data(*a);
                    for t in 0..bs {
                        gemm(
                            k,
                            m,
                            nn,
                            &da[t * m * k..(t + 1) * m * k],
                            true,
                            &g[t * m * nn..(t + 1) * m * nn],
                            false,
                            &mut gb[t * k * nn..(t + 1) * k * nn],
                            false,
                        );
                    }
                    acc_vec(grads, *b, gb);
                }
            }
            Op::Linear { x, w, b } => {
                let sw = self.shape(*w);
                let (fin, fout) = (sw[0], sw[1]);
                let rows = g.len() / fout;
                if self.rg(*x) {
                    let mut gx = vec![0.0; rows * fin];
                    gemm(rows, fout, fin, g, false, self.data(*w), true, &mut gx, false);
                    acc_vec(grads, *x, gx);
                }
                if self.rg(*w) {
                    let mut gw = vec![0.0; fin * fout];
                    gemm(fin, rows, fout, self.data(*x), true, g, false, &mut gw, false);
                    acc_vec(grads, *w, gw);
                }
                if let Some(b) = b {
                    if self.rg(*b) {
                        let mut gb = vec![0.0; fout];
                        for r in g.chunks(fout) {
                            for (a, v) in gb.iter_mut().zip(r) {
                                *a += v;
                            }
                        }
                        acc_vec(grads, *b, gb);
                    }
                }
            }
            Op::Gelu(a, th) => {
                let x = self.data(*a);
                let gg: Vec<f64> = g
                    .iter()
                    .zip(x)
                    .zip(th)
                    .map(|((g, &x), &t)| g * kernels::gelu_grad_with(x, t))
                    .collect();
                acc_vec(grads, *a, gg);
            }
            Op::Relu(a) => {
                let x = self.data(*a);
                let gg: Vec<f64> = g
                    .iter()
                    .zip(x)
                    .map(|(g, &x)| if x > 0.0 { *g } else { 0.0 })
                    .collect();
                acc_vec(grads, *a, gg);
            }
            Op::Sigmoid(a) => {
                let y = node.value.data();
                let gg: Vec<f64> = g.iter().zip(y).map(|(g, y)| g * y * (1.0 - y)).collect();
                acc_vec(grads, *a, gg);
            }
            Op::Ln(a) => {
                let x = self.data(*a);
                let gg: Vec<f64> = g.iter().zip(x).map(|(g, x)| g / x).collect();
                acc_vec(grads, *a, gg);
            }
            Op::Softmax(a) => {
                let y = node.value.data();
                let c = *out_shape.last().unwrap();
                let mut gg = vec![0.0; g.len()];
                for r in 0..g.len() / c {
                    let ys = &y[r * c..(r + 1) * c];
                    let gs = &g[r * c..(r + 1) * c];
                    let dot: f64 = ys.iter().zip(gs).map(|(a, b)| a * b).sum();
                    for j in 0..c {
                        gg[r * c + j] = ys[j] * (gs[j] - dot);
                    }
                }
                acc_vec(grads, *a, gg);
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            } => {
                let c = *out_shape.last().unwrap();
                let rows = g.len() / c;
                let gm = self.data(*gamma);
                if self.rg(*gamma) || self.rg(*beta) {
                    let mut gg = vec![0.0; c];
                    let mut gb = vec![0.0; c];
                    for (i, (&gv, &h)) in g.iter().zip(xhat).enumerate() {
                        gg[i % c] += gv * h;
                        gb[i % c] += gv;
                    }
                    acc_vec(grads, *gamma, gg);
                    acc_vec(grads, *beta, gb);
                }
                if self.rg(*x) {
                    let mut gx = vec![0.0; g.len()];
                    for r in 0..rows {
                        let mut mean_d = 0.0;
                        let mut mean_dh = 0.0;
                        for j in 0..c {
                            let d = g[r * c + j] * gm[j];
                            mean_d += d;
                            mean_dh += d * xhat[r * c + j];
                        }
                        mean_d /= c as f64;
                        mean_dh /= c as f64;
                        for j in 0..c {
                            let d = g[r * c + j] * gm[j];
                            gx[r * c + j] = rstd[r] * (d - mean_d - xhat[r * c + j] * mean_dh);
                        }
                    }
                    acc_vec(grads, *x, gx);
                }
            }
            Op::GroupNorm {
                x,
                gamma,
                beta,
                groups,
                xhat,
                rstd,
            } => {
                let c = *out_shape.last().unwrap();
                let positions = g.len() / c;
                let cg = c / groups;
                let gm = self.data(*gamma);
                if self.rg(*gamma) || self.rg(*beta) {
                    let mut gg = vec![0.0; c];
                    let mut gb = vec![0.0; c];
                    for (i, (&gv, &h)) in g.iter().zip(xhat).enumerate() {
                        gg[i % c] += gv * h;
                        gb[i % c] += gv;
                    }
                    acc_vec(grads, *gamma, gg);
                    acc_vec(grads, *beta, gb);
                }
                if self.rg(*x) {
                    let mut gx = vec![0.0; g.len()];
                    let count = (positions * cg) as f64;
                    for gi in 0..*groups {
                        let mut mean_d = 0.0;
                        let mut mean_dh = 0.0;
                        for p in 0..positions {
                            for j in gi * cg..(gi + 1) * cg {
                                let d = g[p * c + j] * gm[j];
                                mean_d += d;
                                mean_dh += d * xhat[p * c + j];
                            }
                        }
                        mean_d /= count;
                        mean_dh /= count;
                        for p in 0..positions {
                            for j in gi * cg..(gi + 1) * cg {
                                let d = g[p * c + j] * gm[j];
                                gx[p * c + j] =
                                    rstd[gi] * (d - mean_d - xhat[p * c + j] * mean_dh);
                            }
                        }
                    }
                    acc_vec(grads, *x, gx);
                }
            }
            Op::Conv1d { x, w, b } => {
                let sx = self.shape(*x);
                let (bs, l, cin) = (sx[0], sx[1], sx[2]);
                let sw = self.shape(*w);
                let (k, cout) = (sw[0], sw[2]);
                let pad = k / 2;
                let xd = self.data(*x);
                let wd = self.data(*w);
                let need_x = self.rg(*x);
                let need_w = self.rg(*w);
                let mut gx = vec![0.0; if need_x { xd.len() } else { 0 }];
                let mut gw = vec![0.0; if need_w { wd.len() } else { 0 }];
                for bi in 0..bs {
                    for tap in 0..k {
                        let (l0, l1) = conv_range(l, tap, pad);
                        if l0 >= l1 {
                            continue;
                        }
                        let src0 = l0 + tap - pad;
                        let rows = l1 - l0;
                        let gs = &g[(bi * l + l0) * cout..(bi * l + l1) * cout];
                        if need_x {
                            gemm(
                                rows,
                                cout,
                                cin,
                                gs,
                                false,
                                &wd[tap * cin * cout..(tap + 1) * cin * cout],
                                true,
                                &mut gx[(bi * l + src0) * cin..(bi * l + src0 + rows) * cin],
                                true,
                            );
                        }
                        if need_w {
                            gemm(
                                cin,
                                rows,
                                cout,
                                &xd[(bi * l + src0) * cin..(bi * l + src0 + rows) * cin],
                                true,
                                gs,
                                false,
                                &mut gw[tap * cin * cout..(tap + 1) * cin * cout],
                                true,
                            );
                        }
                    }
                }
                if need_x {
                    acc_vec(grads, *x, gx);
                }
                if need_w {
                    acc_vec(grads, *w, gw);
                }
                if let Some(b) = b {
                    if self.rg(*b) {
                        let mut gb = vec![0.0; cout];
                        for r in g.chunks(cout) {
                            for (a, v) in gb.iter_mut().zip(r) {
                                *a += v;
                            }
                        }
                        acc_vec(grads, *b, gb);
                    }
                }
            }
            Op::DepthwiseConv1d { x, w, b } => {
                let sx = self.shape(*x);
                let (bs, l, c) = (sx[0], sx[1], sx[2]);
                let k = self.shape(*w)[0];
                let pad = k / 2;
                let xd = self.data(*x);
                let wd = self.data(*w);
                let mut gx = vec![0.0; xd.len()];
                let mut gw = vec![0.0; wd.len()];
                for bi in 0..bs {
                    for tap in 0..k {
                        let (l0, l1) = conv_range(l, tap, pad);
                        for li in l0..l1 {
                            let src = li + tap - pad;
                            for j in 0..c {
                                let gv = g[(bi * l + li) * c + j];
                                gx[(bi * l + src) * c + j] += gv * wd[tap * c + j];
                                gw[tap * c + j] += gv * xd[(bi * l + src) * c + j];
                            }
                        }
                    }
                }
                acc_vec(grads, *x, gx);
                acc_vec(grads, *w, gw);
                if let Some(b) = b {
                    let mut gb = vec![0.0; c];
                    for r in g.chunks(c) {
                        for (a, v) in gb.iter_mut().zip(r) {
                            *a += v;
                        }
                    }
                    acc_vec(grads, *b, gb);
                }
            }
            Op::MeanAxis { x, axis } => {
                let (outer, n, inner) = split_at_axis(self.shape(*x), *axis);
                let mut gx = vec![0.0; outer * n * inner];
                for o in 0..outer {
                    for i in 0..n {
                        for j in 0..inner {
                            gx[(o * n + i) * inner + j] = g[o * inner + j] / n as f64;
                        }
                    }
                }
                acc_vec(grads, *x, gx);
            }
            Op::MaxAxis { x, axis, argmax } => {
                let (outer, n, inner) = split_at_axis(self.shape(*x), *axis);
                let mut gx = vec![0.0; outer * n * inner];
                for o in 0..outer {
                    for j in 0..inner {
                        let i = argmax[o * inner + j];
                        gx[(o * n + i) * inner + j] += g[o * inner + j];
                    }
                }
                acc_vec(grads, *x, gx);
            }
            Op::SumAll(x) => {
                let gx = vec![g[0]; self.value(*x).len()];
                acc_vec(grads, *x, gx);
            }
            Op::MeanAll(x) => {
                let n = self.value(*x).len();
                let gx = vec![g[0] / n as f64; n];
                acc_vec(grads, *x, gx);
            }
            Op::Concat { inputs, axis } => {
                let (outer, total, inner) = split_at_axis(out_shape, *axis);
                let mut offset = 0;
                for &v in inputs {
                    let n = self.shape(v)[*axis];
                    if self.rg(v) {
                        let mut gv = Vec::with_capacity(outer * n * inner);
                        for o in 0..outer {
                            let s = (o * total + offset) * inner;
                            gv.extend_from_slice(&g[s..s + n * inner]);
                        }
                        acc_vec(grads, v, gv);
                    }
                    offset += n;
                }
            }
            Op::Slice { x, axis, start } => {
                let (outer, n, inner) = split_at_axis(self.shape(*x), *axis);
                let len = out_shape[*axis];
                let mut gx = vec![0.0; outer * n * inner];
                for o in 0..outer {
                    let d = (o * n + start) * inner;
                    gx[d..d + len * inner]
                        .copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
                }
                acc_vec(grads, *x, gx);
            }
            Op::Permute { x, perm } => {
                let inv = kernels::inverse_permutation(perm);
                let (gx, _) = kernels::permute(g, out_shape, &inv);
                acc_vec(grads, *x, gx);
            }
            Op::Reshape(x) => acc(grads, *x, g),
            Op::AvgPoolFrames { x, stride } => {
                let n_raw = self.shape(*x)[0];
                let inner = self.value(*x).len() / n_raw;
                let mut gx = vec![0.0; n_raw * inner];
                for f in 0..n_raw {
                    let o = f / stride;
                    let count = (*stride).min(n_raw - o * stride) as f64;
                    for j in 0..inner {
                        gx[f * inner + j] = g[o * inner + j] / count;
                    }
                }
                acc_vec(grads, *x, gx);
            }
            Op::RepeatFrames { x, stride } => {
                let n = self.shape(*x)[0];
                let inner = self.value(*x).len() / n;
                let mut gx = vec![0.0; n * inner];
                for f in 0..out_shape[0] {
                    let s = f / stride;
                    for j in 0..inner {
                        gx[s * inner + j] += g[f * inner + j];
                    }
                }
                acc_vec(grads, *x, gx);
            }
            Op::PadEdgeFrames { x, extra } => {
                let n = self.shape(*x)[0];
                let inner = self.value(*x).len() / n;
                let mut gx = g[..n * inner].to_vec();
                for e in 0..*extra {
                    for j in 0..inner {
                        gx[(n - 1) * inner + j] += g[(n + e) * inner + j];
                    }
                }
                acc_vec(grads, *x, gx);
            }
            Op::HaarSplit(x) => {
                let half = out_shape[1];
                let cols = g.len() / (2 * half);
                acc(grads, *x, &spectral::haar_merge(g, half, cols));
            }
            Op::HaarMerge(y) => {
                let l = out_shape[0];
                let cols = g.len() / l;
                acc(grads, *y, &spectral::haar_split(g, l, cols));
            }
            Op::Rfft(x) => {
                let l = self.shape(*x)[0];
                let c = *self.shape(*x).last().unwrap();
                let bins = out_shape[0];
                let rows = g.len() / (2 * c);
                let (gr, gi) = split_channels(g, rows, c);
                let cols = rows / bins * c;
                acc(grads, *x, &spectral::rfft_adjoint(&gr, &gi, l, cols));
            }
            Op::Irfft(s) => {
                let l = out_shape[0];
                let c = *out_shape.last().unwrap();
                let cols = g.len() / l;
                let (gr, gi) = spectral::irfft_adjoint(g, l, cols);
                let bins = spectral::rfft_bins(l);
                acc(grads, *s, &interleave_channels(&gr, &gi, bins * cols / c, c));
            }
        }
        Ok(())
    }

    fn acc_broadcast(
        &self,
        v: Var,
        out_shape: &[usize],
        g: &[f64],
        sign: f64,
        grads: &mut [Option<Vec<f64>>],
    ) {
        if !self.rg(v) {
            return;
        }
        let shape = self.shape(v);
        if shape == out_shape {
            if sign == 1.0 {
                acc(grads, v, g);
            } else {
                let gg: Vec<f64> = g.iter().map(|x| x * sign).collect();
                acc_vec(grads, v, gg);
            }
            return;
        }
        let offs = kernels::broadcast_offsets(shape, out_shape);
        let mut gv = vec![0.0; self.value(v).len()];
        for (gi, &o) in g.iter().zip(&offs) {
            gv[o] += sign * gi;
        }
        acc_vec(grads, v, gv);
    }
}

fn acc_vec(grads: &mut [Option<Vec<f64>>], v: Var, g: Vec<f64>) {
    match &mut grads[v.0] {
        Some(existing) => {
            for (a, b) in existing.iter_mut().zip(&g) {
                *a += b;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

fn acc(grads: &mut [Option<Vec<f64>>], v: Var, g: &[f64]) {
    match &mut grads[v.0] {
        Some(existing) => {
            for (a, b) in existing.iter_mut().zip(g) {
                *a += b;
            }
        }
        slot @ None => *slot = Some(g.to_vec()),
    }
}

/// Output rows `[l0, l1)` that read a valid input row at this tap.
fn conv_range(l: usize, tap: usize, pad: usize) -> (usize, usize) {
    let l0 = pad.saturating_sub(tap);
    let l1 = (l + pad).saturating_sub(tap).min(l);
    (l0, l1)
}

/// `[rows, c]` real and imaginary parts -> `[rows, 2c]`.
fn interleave_channels(re: &[f64], im: &[f64], rows: usize, c: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows * 2 * c);
    for r in 0..rows {
        out.extend_from_slice(&re[r * c..(r + 1) * c]);
        out.extend_from_slice(&im[r * c..(r + 1) * c]);
    }
    out
}

fn split_channels(x: &[f64], rows: usize, c: usize) -> (Vec<f64>, Vec<f64>) {
    let mut re = Vec::with_capacity(rows * c);
    let mut im = Vec::with_capacity(rows * c);
    for r in 0..rows {
        re.extend_from_slice(&x[r * 2 * c..r * 2 * c + c]);
        im.extend_from_slice(&x[r * 2 * c + c..(r + 1) * 2 * c]);
    }
    (re, im)
}
