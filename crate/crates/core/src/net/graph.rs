//! Reverse-mode differentiation over a recorded operation tape.
//!
//! A [`Graph`] is built fresh for every forward pass. Each operation appends a
//! node holding its output value; [`Graph::backward`] walks the tape in reverse
//! and accumulates gradients for every leaf that requires them. Reductions run
//! in a fixed order, so identical inputs give bit-identical values and gradients.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;


use super::params::ParameterStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

const NORM_EPS: f64 = 1e-5;

/// Handle to a node on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Exp(Var),
    Silu(Var),
    AddChannel(Var, Var),
    Conv1d { x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize },
    ConvT1d { x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize },
    GroupNorm { x: Var, gamma: Var, beta: Var, groups: usize, xhat: Vec<f64>, rstd: Vec<f64> },
    Linear { x: Var, w: Var, b: Option<Var> },
    Concat(Var, Var),
    Attention { q: Var, k: Var, v: Var, probs: Vec<f64> },
    Gather { table: Var, idx: Vec<usize> },
    Reshape(Var),
    SumAll(Var),
    MeanAll(Var),
    Mse { pred: Var, target: Tensor },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: BTreeMap<String, Var>,
}

/// Leaf gradients produced by [`Graph::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradients of every parameter bound on `graph`, keyed by parameter name.
    /// Parameters that did not influence the root get a zero tensor.
    pub fn parameters(&self, graph: &Graph) -> ParameterStore {
        graph
            .params
            .iter()
            .map(|(name, &v)| {
                let g = self
                    .get(v)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(graph.value(v).shape()));
                (name.clone(), g)
            })
            .collect()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

/// Output positions `t` for which `t*stride + k - pad` lands inside `0..len_in`.
fn conv_range(k: usize, pad: usize, stride: usize, len_in: usize, len_out: usize) -> (usize, usize) {
    let lo = if pad > k { (pad - k).div_ceil(stride) } else { 0 };
    let top = len_in as isize - 1 + pad as isize - k as isize;
    if top < 0 {
        return (0, 0);
    }
    let hi = ((top as usize) / stride + 1).min(len_out);
    (lo.min(hi), hi)
}

/// Input positions `l` for which `l*stride + k - pad` lands inside `0..len_out`.
fn convt_range(k: usize, pad: usize, stride: usize, len_in: usize, len_out: usize) -> (usize, usize) {
    conv_range(k, pad, stride, len_out, len_in)
}

fn inner_len(shape: &[usize]) -> usize {
    shape[2..].iter().product()
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op, parents: &[Var]) -> Var {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    /// A constant input; no gradient is accumulated for it.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad: false });
        Var(self.nodes.len() - 1)
    }

    /// A leaf whose gradient is tracked.
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad: true });
        Var(self.nodes.len() - 1)
    }

    /// Bind a named parameter from `store`. Binding the same name twice returns the same node.
    pub fn param(&mut self, store: &ParameterStore, name: &str) -> Result<Var> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let v = self.variable(store.get(name)?.clone());
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Softmax weights recorded by an attention node, laid out `[B, T, T]`.
    pub fn attention_weights(&self, v: Var) -> Option<&[f64]> {
        match &self.nodes[v.0].op {
            Op::Attention { probs, .. } => Some(probs),
            _ => None,
        }
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), f)?;
        Ok(self.push(value, op, &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).map(|x| x * s);
        self.push(value, Op::Scale(a, s), &[a])
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).map(|x| x + s);
        self.push(value, Op::AddScalar(a), &[a])
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).map(libm::exp);
        self.push(value, Op::Exp(a), &[a])
    }

    /// Sigmoid-weighted linear unit `x * sigmoid(x)`.
    pub fn silu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x * sigmoid(x));
        self.push(value, Op::Silu(a), &[a])
    }

    /// `x[b, c, ..] + e[b, c]`, broadcasting `e` over the trailing axes.
    pub fn add_channel(&mut self, x: Var, e: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let es = self.shape(e);
        if xs.len() < 2 || es != [xs[0], xs[1]] {
            return Err(Error::ShapeMismatch(format!("add_channel {xs:?} + {es:?}")));
        }
        let inner = inner_len(&xs);
        let mut out = self.value(x).clone();
        let ev = self.value(e).data();
        for (row, &bias) in out.data_mut().chunks_mut(inner.max(1)).zip(ev) {
            row.iter_mut().for_each(|v| *v += bias);
        }
        Ok(self.push(out, Op::AddChannel(x, e), &[x, e]))
    }

    /// 1-D convolution. `x: [B, Cin, L]`, `w: [Cout, Cin, K]`, `b: [Cout]`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 3 || ws.len() != 3 || xs[1] != ws[1] || stride == 0 {
            return Err(Error::ShapeMismatch(format!("conv1d x{xs:?} w{ws:?}")));
        }
        let (bsz, cin, len) = (xs[0], xs[1], xs[2]);
        let (cout, k) = (ws[0], ws[2]);
        if len + 2 * pad < k {
            return Err(Error::ShapeMismatch(format!("conv1d kernel {k} longer than input {len}")));
        }
        if let Some(b) = b {
            if self.shape(b) != [cout] {
                return Err(Error::ShapeMismatch("conv1d bias".into()));
            }
        }
        let lout = (len + 2 * pad - k) / stride + 1;
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let mut y = vec![0.0; bsz * cout * lout];
        for bi in 0..bsz {
            for o in 0..cout {
                let yrow = &mut y[(bi * cout + o) * lout..][..lout];
                if let Some(b) = b {
                    yrow.fill(self.nodes[b.0].value.data()[o]);
                }
                for i in 0..cin {
                    let xrow = &xv[(bi * cin + i) * len..][..len];
                    for kk in 0..k {
                        let wk = wv[(o * cin + i) * k + kk];
                        let (t0, t1) = conv_range(kk, pad, stride, len, lout);
                        if stride == 1 {
                            let off = kk as isize - pad as isize;
                            let src = &xrow[(t0 as isize + off) as usize..(t1 as isize + off) as usize];
                            for (yv, xv) in yrow[t0..t1].iter_mut().zip(src) {
                                *yv += wk * xv;
                            }
                        } else {
                            for t in t0..t1 {
                                yrow[t] += wk * xrow[t * stride + kk - pad];
                            }
                        }
                    }
                }
            }
        }
        let value = Tensor::new(vec![bsz, cout, lout], y)?;
        let mut parents = vec![x, w];
        parents.extend(b);
        Ok(self.push(value, Op::Conv1d { x, w, b, stride, pad }, &parents))
    }

    /// Transposed 1-D convolution. `x: [B, Cin, L]`, `w: [Cin, Cout, K]`;
    /// output length `(L - 1) * stride - 2 * pad + K`.
    pub fn conv_transpose1d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 3 || ws.len() != 3 || xs[1] != ws[0] || stride == 0 {
            return Err(Error::ShapeMismatch(format!("conv_transpose1d x{xs:?} w{ws:?}")));
        }
        let (bsz, cin, len) = (xs[0], xs[1], xs[2]);
        let (cout, k) = (ws[1], ws[2]);
        let full = (len - 1) * stride + k;
        if full <= 2 * pad {
            return Err(Error::ShapeMismatch("conv_transpose1d padding too large".into()));
        }
        let lout = full - 2 * pad;
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let mut y = vec![0.0; bsz * cout * lout];
        for bi in 0..bsz {
            for o in 0..cout {
                let yrow = &mut y[(bi * cout + o) * lout..][..lout];
                if let Some(b) = b {
                    yrow.fill(self.nodes[b.0].value.data()[o]);
                }
                for i in 0..cin {
                    let xrow = &xv[(bi * cin + i) * len..][..len];
                    for kk in 0..k {
                        let wk = wv[(i * cout + o) * k + kk];
                        let (l0, l1) = convt_range(kk, pad, stride, len, lout);
                        for l in l0..l1 {
                            yrow[l * stride + kk - pad] += wk * xrow[l];
                        }
                    }
                }
            }
        }
        let value = Tensor::new(vec![bsz, cout, lout], y)?;
        let mut parents = vec![x, w];
        parents.extend(b);
        Ok(self.push(value, Op::ConvT1d { x, w, b, stride, pad }, &parents))
    }

    /// Group normalization over `[B, C, ..]` with per-channel affine parameters.
    pub fn group_norm(&mut self, x: Var, gamma: Var, beta: Var, groups: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() < 2 || groups == 0 || xs[1] % groups != 0 {
            return Err(Error::ShapeMismatch(format!("group_norm {xs:?} groups={groups}")));
        }
        let (bsz, c) = (xs[0], xs[1]);
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(Error::ShapeMismatch("group_norm affine".into()));
        }
        let inner = inner_len(&xs).max(1);
        let per = c / groups;
        let m = (per * inner) as f64;
        let xv = self.value(x).data();
        let gv = self.value(gamma).data();
        let bv = self.value(beta).data();
        let mut xhat = vec![0.0; xv.len()];
        let mut rstd = vec![0.0; bsz * groups];
        let mut y = vec![0.0; xv.len()];
        for bi in 0..bsz {
            for g in 0..groups {
                let start = (bi * c + g * per) * inner;
                let seg = &xv[start..start + per * inner];
                let mean = seg.iter().sum::<f64>() / m;
                let var = seg.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
                let r = 1.0 / libm::sqrt(var + NORM_EPS);
                rstd[bi * groups + g] = r;
                for (j, &v) in seg.iter().enumerate() {
                    let ch = g * per + j / inner;
                    let h = (v - mean) * r;
                    xhat[start + j] = h;
                    y[start + j] = h * gv[ch] + bv[ch];
                }
            }
        }
        let value = Tensor::new(xs, y)?;
        Ok(self.push(value, Op::GroupNorm { x, gamma, beta, groups, xhat, rstd }, &[x, gamma, beta]))
    }

    /// Dense layer. `x: [B, In]`, `w: [Out, In]`, `b: [Out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] {
            return Err(Error::ShapeMismatch(format!("linear x{xs:?} w{ws:?}")));
        }
        let (bsz, nin, nout) = (xs[0], xs[1], ws[0]);
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let mut y = vec![0.0; bsz * nout];
        for bi in 0..bsz {
            let xrow = &xv[bi * nin..][..nin];
            for o in 0..nout {
                let wrow = &wv[o * nin..][..nin];
                let mut acc = match b {
                    Some(b) => self.nodes[b.0].value.data()[o],
                    None => 0.0,
                };
                for (a, c) in xrow.iter().zip(wrow) {
                    acc += a * c;
                }
                y[bi * nout + o] = acc;
            }
        }
        let value = Tensor::new(vec![bsz, nout], y)?;
        let mut parents = vec![x, w];
        parents.extend(b);
        Ok(self.push(value, Op::Linear { x, w, b }, &parents))
    }

    /// Concatenate along axis 1.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        if sa.len() < 2 || sa.len() != sb.len() || sa[0] != sb[0] || sa[2..] != sb[2..] {
            return Err(Error::ShapeMismatch(format!("concat {sa:?} {sb:?}")));
        }
        let inner = inner_len(&sa);
        let (ra, rb) = (sa[1] * inner, sb[1] * inner);
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let mut y = Vec::with_capacity(av.len() + bv.len());
        for bi in 0..sa[0] {
            y.extend_from_slice(&av[bi * ra..(bi + 1) * ra]);
            y.extend_from_slice(&bv[bi * rb..(bi + 1) * rb]);
        }
        let mut shape = sa.clone();
        shape[1] += sb[1];
        let value = Tensor::new(shape, y)?;
        Ok(self.push(value, Op::Concat(a, b), &[a, b]))
    }

    /// Single-head scaled dot-product self-attention over the temporal axis.
    /// `q, k, v: [B, C, T]`; output `[B, C, T]`.
    pub fn attention(&mut self, q: Var, k: Var, v: Var) -> Result<Var> {
        let qs = self.shape(q).to_vec();
        if qs.len() != 3 || self.shape(k) != qs.as_slice() || self.shape(v) != qs.as_slice() {
            return Err(Error::ShapeMismatch("attention operands".into()));
        }
        let (bsz, c, t) = (qs[0], qs[1], qs[2]);
        let scale = 1.0 / libm::sqrt(c as f64);
        let qv = self.value(q).data();
        let kv = self.value(k).data();
        let vv = self.value(v).data();
        let mut probs = vec![0.0; bsz * t * t];
        let mut out = vec![0.0; bsz * c * t];
        let mut qt = vec![0.0; t * c];
        let mut kt = vec![0.0; t * c];
        for bi in 0..bsz {
            let base = bi * c * t;
            for ch in 0..c {
                for s in 0..t {
                    qt[s * c + ch] = qv[base + ch * t + s];
                    kt[s * c + ch] = kv[base + ch * t + s];
                }
            }
            let p = &mut probs[bi * t * t..][..t * t];
            for i in 0..t {
                let qi = &qt[i * c..][..c];
                let row = &mut p[i * t..][..t];
                for (j, r) in row.iter_mut().enumerate() {
                    let kj = &kt[j * c..][..c];
                    *r = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale;
                }
                let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for r in row.iter_mut() {
                    *r = libm::exp(*r - mx);
                    z += *r;
                }
                row.iter_mut().for_each(|r| *r /= z);
            }
            for ch in 0..c {
                let vrow = &vv[base + ch * t..][..t];
                for i in 0..t {
                    let prow = &p[i * t..][..t];
                    out[base + ch * t + i] = prow.iter().zip(vrow).map(|(a, b)| a * b).sum();
                }
            }
        }
        let value = Tensor::new(qs, out)?;
        Ok(self.push(value, Op::Attention { q, k, v, probs }, &[q, k, v]))
    }

    /// Rows of a `[V, D]` table selected by `idx`, giving `[idx.len(), D]`.
    pub fn gather_rows(&mut self, table: Var, idx: &[usize]) -> Result<Var> {
        let ts = self.shape(table).to_vec();
        if ts.len() != 2 {
            return Err(Error::ShapeMismatch("gather table must be 2-D".into()));
        }
        let d = ts[1];
        let tv = self.value(table).data();
        let mut y = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            if i >= ts[0] {
                return Err(Error::UnknownToken(i));
            }
            y.extend_from_slice(&tv[i * d..(i + 1) * d]);
        }
        let value = Tensor::new(vec![idx.len(), d], y)?;
        Ok(self.push(value, Op::Gather { table, idx: idx.to_vec() }, &[table]))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        Ok(self.push(value, Op::Reshape(x), &[x]))
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).sum());
        self.push(value, Op::SumAll(x), &[x])
    }

    pub fn mean_all(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let value = Tensor::scalar(t.sum() / t.numel() as f64);
        self.push(value, Op::MeanAll(x), &[x])
    }

    /// Mean squared error against a constant target, averaged over every element.
    pub fn mse(&mut self, pred: Var, target: &Tensor) -> Result<Var> {
        let p = self.value(pred);
        p.same_shape(target)?;
        let n = p.numel() as f64;
        let s: f64 = p.data().iter().zip(target.data()).map(|(a, b)| (a - b) * (a - b)).sum();
        let value = Tensor::scalar(s / n);
        Ok(self.push(value, Op::Mse { pred, target: target.clone() }, &[pred]))
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradients of the scalar `root` with respect to every tracked leaf.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        if self.value(root).numel() != 1 {
            return Err(Error::ShapeMismatch("backward root must be a scalar".into()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..=root.0).map(|_| None).collect();
        grads[root.0] = Some(Tensor::full(self.value(root).shape(), 1.0));
        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                grads[i] = None;
                continue;
            }
            let Some(gy) = grads[i].take() else { continue };
            if matches!(node.op, Op::Leaf) {
                grads[i] = Some(gy);
                continue;
            }
            self.backprop_node(node, &gy, &mut grads)?;
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, delta: Tensor) {
        match &mut grads[v.0] {
            Some(g) => g.axpy(1.0, &delta),
            slot @ None => *slot = Some(delta),
        }
    }

    fn backprop_node(&self, node: &Node, gy: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if self.needs(*a) {
                    self.accumulate(grads, *a, gy.clone());
                }
                if self.needs(*b) {
                    self.accumulate(grads, *b, gy.clone());
                }
            }
            Op::Sub(a, b) => {
                if self.needs(*a) {
                    self.accumulate(grads, *a, gy.clone());
                }
                if self.needs(*b) {
                    self.accumulate(grads, *b, gy.map(|v| -v));
                }
            }
            Op::Mul(a, b) => {
                if self.needs(*a) {
                    let d = gy.zip_map(self.value(*b), |g, v| g * v)?;
                    self.accumulate(grads, *a, d);
                }
                if self.needs(*b) {
                    let d = gy.zip_map(self.value(*a), |g, v| g * v)?;
                    self.accumulate(grads, *b, d);
                }
            }
            Op::Scale(a, s) => {
                let s = *s;
                self.accumulate(grads, *a, gy.map(|v| v * s));
            }
            Op::AddScalar(a) => self.accumulate(grads, *a, gy.clone()),
            Op::Exp(a) => {
                let d = gy.zip_map(y, |g, v| g * v)?;
                self.accumulate(grads, *a, d);
            }
            Op::Silu(a) => {
                let d = gy.zip_map(self.value(*a), |g, x| {
                    let s = sigmoid(x);
                    g * s * (1.0 + x * (1.0 - s))
                })?;
                self.accumulate(grads, *a, d);
            }
            Op::AddChannel(x, e) => {
                if self.needs(*x) {
                    self.accumulate(grads, *x, gy.clone());
                }
                if self.needs(*e) {
                    let inner = inner_len(y.shape()).max(1);
                    let d: Vec<f64> = gy.data().chunks(inner).map(|r| r.iter().sum()).collect();
                    let d = Tensor::new(self.shape(*e).to_vec(), d)?;
                    self.accumulate(grads, *e, d);
                }
            }
            Op::Conv1d { x, w, b, stride, pad } => self.conv1d_backward(*x, *w, *b, *stride, *pad, gy, grads)?,
            Op::ConvT1d { x, w, b, stride, pad } => self.convt1d_backward(*x, *w, *b, *stride, *pad, gy, grads)?,
            Op::GroupNorm { x, gamma, beta, groups, xhat, rstd } => {
                let xs = y.shape();
                let (bsz, c) = (xs[0], xs[1]);
                let inner = inner_len(xs).max(1);
                let per = c / groups;
                let m = (per * inner) as f64;
                let gv = self.value(*gamma).data();
                let g = gy.data();
                if self.needs(*gamma) || self.needs(*beta) {
                    let mut dg = vec![0.0; c];
                    let mut db = vec![0.0; c];
                    for bi in 0..bsz {
                        for ch in 0..c {
                            let off = (bi * c + ch) * inner;
                            for j in 0..inner {
                                dg[ch] += g[off + j] * xhat[off + j];
                                db[ch] += g[off + j];
                            }
                        }
                    }
                    if self.needs(*gamma) {
                        self.accumulate(grads, *gamma, Tensor::new(vec![c], dg)?);
                    }
                    if self.needs(*beta) {
                        self.accumulate(grads, *beta, Tensor::new(vec![c], db)?);
                    }
                }
                if self.needs(*x) {
                    let mut dx = vec![0.0; g.len()];
                    for bi in 0..bsz {
                        for grp in 0..*groups {
                            let start = (bi * c + grp * per) * inner;
                            let len = per * inner;
                            let mut s1 = 0.0;
                            let mut s2 = 0.0;
                            for j in 0..len {
                                let dh = g[start + j] * gv[grp * per + j / inner];
                                s1 += dh;
                                s2 += dh * xhat[start + j];
                            }
                            let r = rstd[bi * groups + grp];
                            for j in 0..len {
                                let dh = g[start + j] * gv[grp * per + j / inner];
                                dx[start + j] = r * (dh - s1 / m - xhat[start + j] * s2 / m);
                            }
                        }
                    }
                    self.accumulate(grads, *x, Tensor::new(xs.to_vec(), dx)?);
                }
            }
            Op::Linear { x, w, b } => {
                let xs = self.shape(*x);
                let (bsz, nin) = (xs[0], xs[1]);
                let nout = y.dim(1);
                let g = gy.data();
                let xv = self.value(*x).data();
                let wv = self.value(*w).data();
                if self.needs(*x) {
                    let mut dx = vec![0.0; bsz * nin];
                    for bi in 0..bsz {
                        let drow = &mut dx[bi * nin..][..nin];
                        for o in 0..nout {
                            let go = g[bi * nout + o];
                            for (d, wv) in drow.iter_mut().zip(&wv[o * nin..][..nin]) {
                                *d += go * wv;
                            }
                        }
                    }
                    self.accumulate(grads, *x, Tensor::new(vec![bsz, nin], dx)?);
                }
                if self.needs(*w) {
                    let mut dw = vec![0.0; nout * nin];
                    for bi in 0..bsz {
                        let xrow = &xv[bi * nin..][..nin];
                        for o in 0..nout {
                            let go = g[bi * nout + o];
                            for (d, xv) in dw[o * nin..][..nin].iter_mut().zip(xrow) {
                                *d += go * xv;
                            }
                        }
                    }
                    self.accumulate(grads, *w, Tensor::new(vec![nout, nin], dw)?);
                }
                if let Some(b) = b {
                    if self.needs(*b) {
                        let mut db = vec![0.0; nout];
                        for row in g.chunks(nout) {
                            for (d, v) in db.iter_mut().zip(row) {
                                *d += v;
                            }
                        }
                        self.accumulate(grads, *b, Tensor::new(vec![nout], db)?);
                    }
                }
            }
            Op::Concat(a, b) => {
                let sa = self.shape(*a).to_vec();
                let sb = self.shape(*b).to_vec();
                let inner = inner_len(&sa);
                let (ra, rb) = (sa[1] * inner, sb[1] * inner);
                let g = gy.data();
                let mut da = Vec::with_capacity(sa[0] * ra);
                let mut db = Vec::with_capacity(sb[0] * rb);
                for row in g.chunks(ra + rb) {
                    da.extend_from_slice(&row[..ra]);
                    db.extend_from_slice(&row[ra..]);
                }
                if self.needs(*a) {
                    self.accumulate(grads, *a, Tensor::new(sa, da)?);
                }
                if self.needs(*b) {
                    self.accumulate(grads, *b, Tensor::new(sb, db)?);
                }
            }
            Op::Attention { q, k, v, probs } => self.attention_backward(*q, *k, *v, probs, gy, grads)?,
            Op::Gather { table, idx } => {
                let ts = self.shape(*table).to_vec();
                let d = ts[1];
                let mut dt = vec![0.0; ts[0] * d];
                for (r, &i) in idx.iter().enumerate() {
                    for (a, b) in dt[i * d..(i + 1) * d].iter_mut().zip(&gy.data()[r * d..(r + 1) * d]) {
                        *a += b;
                    }
                }
                self.accumulate(grads, *table, Tensor::new(ts, dt)?);
            }
            Op::Reshape(x) => {
                let d = gy.clone().reshape(self.shape(*x))?;
                self.accumulate(grads, *x, d);
            }
            Op::SumAll(x) => {
                let d = Tensor::full(self.shape(*x), gy.data()[0]);
                self.accumulate(grads, *x, d);
            }
            Op::MeanAll(x) => {
                let n = self.value(*x).numel() as f64;
                let d = Tensor::full(self.shape(*x), gy.data()[0] / n);
                self.accumulate(grads, *x, d);
            }
            Op::Mse { pred, target } => {
                let p = self.value(*pred);
                let s = 2.0 * gy.data()[0] / p.numel() as f64;
                let d = p.zip_map(target, |a, b| s * (a - b))?;
                self.accumulate(grads, *pred, d);
            }
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn conv1d_backward(
        &self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
        gy: &Tensor,
        grads: &mut [Option<Tensor>],
    ) -> Result<()> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        let (bsz, cin, len) = (xs[0], xs[1], xs[2]);
        let (cout, k) = (ws[0], ws[2]);
        let lout = gy.dim(2);
        let g = gy.data();
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let need_x = self.needs(x);
        let need_w = self.needs(w);
        let mut dx = if need_x { vec![0.0; xv.len()] } else { Vec::new() };
        let mut dw = if need_w { vec![0.0; wv.len()] } else { Vec::new() };
        for bi in 0..bsz {
            for o in 0..cout {
                let grow = &g[(bi * cout + o) * lout..][..lout];
                for i in 0..cin {
                    let xoff = (bi * cin + i) * len;
                    for kk in 0..k {
                        let widx = (o * cin + i) * k + kk;
                        let (t0, t1) = conv_range(kk, pad, stride, len, lout);
                        if t0 >= t1 {
                            continue;
                        }
                        if need_x {
                            let wk = wv[widx];
                            let dxrow = &mut dx[xoff..xoff + len];
                            for t in t0..t1 {
                                dxrow[t * stride + kk - pad] += wk * grow[t];
                            }
                        }
                        if need_w {
                            let xrow = &xv[xoff..xoff + len];
                            let mut acc = 0.0;
                            for t in t0..t1 {
                                acc += grow[t] * xrow[t * stride + kk - pad];
                            }
                            dw[widx] += acc;
                        }
                    }
                }
            }
        }
        if need_x {
            self.accumulate(grads, x, Tensor::new(xs, dx)?);
        }
        if need_w {
            self.accumulate(grads, w, Tensor::new(ws, dw)?);
        }
        if let Some(b) = b {
            if self.needs(b) {
                let mut db = vec![0.0; cout];
                for (r, row) in g.chunks(lout).enumerate() {
                    db[r % cout] += row.iter().sum::<f64>();
                }
                self.accumulate(grads, b, Tensor::new(vec![cout], db)?);
            }
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn convt1d_backward(
        &self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
        gy: &Tensor,
        grads: &mut [Option<Tensor>],
    ) -> Result<()> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        let (bsz, cin, len) = (xs[0], xs[1], xs[2]);
        let (cout, k) = (ws[1], ws[2]);
        let lout = gy.dim(2);
        let g = gy.data();
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let need_x = self.needs(x);
        let need_w = self.needs(w);
        let mut dx = if need_x { vec![0.0; xv.len()] } else { Vec::new() };
        let mut dw = if need_w { vec![0.0; wv.len()] } else { Vec::new() };
        for bi in 0..bsz {
            for o in 0..cout {
                let grow = &g[(bi * cout + o) * lout..][..lout];
                for i in 0..cin {
                    let xoff = (bi * cin + i) * len;
                    for kk in 0..k {
                        let widx = (i * cout + o) * k + kk;
                        let (l0, l1) = convt_range(kk, pad, stride, len, lout);
                        if l0 >= l1 {
                            continue;
                        }
                        if need_x {
                            let wk = wv[widx];
                            for l in l0..l1 {
                                dx[xoff + l] += wk * grow[l * stride + kk - pad];
                            }
                        }
                        if need_w {
                            let mut acc = 0.0;
                            for l in l0..l1 {
                                acc += xv[xoff + l] * grow[l * stride + kk - pad];
                            }
                            dw[widx] += acc;
                        }
                    }
                }
            }
        }
        if need_x {
            self.accumulate(grads, x, Tensor::new(xs, dx)?);
        }
        if need_w {
            self.accumulate(grads, w, Tensor::new(ws, dw)?);
        }
        if let Some(b) = b {
            if self.needs(b) {
                let mut db = vec![0.0; cout];
                for (r, row) in g.chunks(lout).enumerate() {
                    db[r % cout] += row.iter().sum::<f64>();
                }
                self.accumulate(grads, b, Tensor::new(vec![cout], db)?);
            }
        }
        Ok(())
    }

    fn attention_backward(
        &self,
        q: Var,
        k: Var,
        v: Var,
        probs: &[f64],
        gy: &Tensor,
        grads: &mut [Option<Tensor>],
    ) -> Result<()> {
        let qs = self.shape(q).to_vec();
        let (bsz, c, t) = (qs[0], qs[1], qs[2]);
        let scale = 1.0 / libm::sqrt(c as f64);
        let qv = self.value(q).data();
        let kv = self.value(k).data();
        let vv = self.value(v).data();
        let g = gy.data();
        let mut dq = vec![0.0; qv.len()];
        let mut dk = vec![0.0; kv.len()];
        let mut dv = vec![0.0; vv.len()];
        let mut dp = vec![0.0; t * t];
        for bi in 0..bsz {
            let base = bi * c * t;
            let p = &probs[bi * t * t..][..t * t];
            // dV[c, j] = sum_i P[i, j] g[c, i]; dP[i, j] = sum_c g[c, i] v[c, j]
            dp.fill(0.0);
            for ch in 0..c {
                let grow = &g[base + ch * t..][..t];
                let vrow = &vv[base + ch * t..][..t];
                let dvrow = &mut dv[base + ch * t..][..t];
                for i in 0..t {
                    let gi = grow[i];
                    let prow = &p[i * t..][..t];
                    let dprow = &mut dp[i * t..][..t];
                    for j in 0..t {
                        dvrow[j] += prow[j] * gi;
                        dprow[j] += gi * vrow[j];
                    }
                }
            }
            // softmax backward in place: dS = P * (dP - rowsum(P * dP))
            for i in 0..t {
                let prow = &p[i * t..][..t];
                let dprow = &mut dp[i * t..][..t];
                let dot: f64 = prow.iter().zip(dprow.iter()).map(|(a, b)| a * b).sum();
                for j in 0..t {
                    dprow[j] = prow[j] * (dprow[j] - dot) * scale;
                }
            }
            for ch in 0..c {
                let qrow = &qv[base + ch * t..][..t];
                let krow = &kv[base + ch * t..][..t];
                for i in 0..t {
                    let dsrow = &dp[i * t..][..t];
                    let mut acc = 0.0;
                    for j in 0..t {
                        acc += dsrow[j] * krow[j];
                        dk[base + ch * t + j] += dsrow[j] * qrow[i];
                    }
                    dq[base + ch * t + i] += acc;
                }
            }
        }
        if self.needs(q) {
            self.accumulate(grads, q, Tensor::new(qs.clone(), dq)?);
        }
        if self.needs(k) {
            self.accumulate(grads, k, Tensor::new(qs.clone(), dk)?);
        }
        if self.needs(v) {
            self.accumulate(grads, v, Tensor::new(qs, dv)?);
        }
        Ok(())
    }
}
