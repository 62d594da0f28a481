use alloc::vec;
use alloc::vec::Vec;


use super::graph::{Graph, Var};
use super::params::{Initializer, ParameterStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Sinusoidal embedding of a scalar time: the first half holds
/// `sin(t * 10000^(-2k/dim))`, the second half the matching cosines.
pub fn sinusoidal_time_embedding(t: f64, dim: usize) -> Result<Vec<f64>> {
    if dim % 2 != 0 {
        return Err(Error::OddDim(dim));
    }
    let half = dim / 2;
    let mut out = vec![0.0; dim];
    for k in 0..half {
        let freq = libm::pow(10000.0, -2.0 * k as f64 / dim as f64);
        out[k] = libm::sin(t * freq);
        out[half + k] = libm::cos(t * freq);
    }
    Ok(out)
}

/// Embeddings for a batch of times, `[B, dim]`.
pub fn time_embedding_batch(times: &[f64], dim: usize) -> Result<Tensor> {
    let mut data = Vec::with_capacity(times.len() * dim);
    for &t in times {
        data.extend(sinusoidal_time_embedding(t, dim)?);
    }
    Tensor::new(vec![times.len(), dim], data)
}

/// Wide-and-deep condition embedding: a one-hot "wide" code concatenated with
/// a learned "deep" row, projected to `dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct WideDeep {
    pub vocab_size: usize,
    pub dim: usize,
    pub prefix: &'static str,
}

impl WideDeep {
    pub fn init(&self, init: &mut Initializer<'_>) -> Result<()> {
        let p = self.prefix;
        init.weight(&alloc::format!("{p}deep"), &[self.vocab_size, self.dim], 1)?;
        init.weight(&alloc::format!("{p}proj.w"), &[self.dim, self.vocab_size + self.dim], self.vocab_size + self.dim)?;
        init.constant(&alloc::format!("{p}proj.b"), &[self.dim], 0.0)
    }

    pub fn forward(&self, g: &mut Graph, store: &ParameterStore, tokens: &[usize]) -> Result<Var> {
        let v = self.vocab_size;
        if let Some(&bad) = tokens.iter().find(|&&t| t >= v) {
            return Err(Error::UnknownToken(bad));
        }
        let mut onehot = vec![0.0; tokens.len() * v];
        for (r, &t) in tokens.iter().enumerate() {
            onehot[r * v + t] = 1.0;
        }
        let wide = g.constant(Tensor::new(vec![tokens.len(), v], onehot)?);
        let table = g.param(store, &alloc::format!("{}deep", self.prefix))?;
        let deep = g.gather_rows(table, tokens)?;
        let joined = g.concat(wide, deep)?;
        let w = g.param(store, &alloc::format!("{}proj.w", self.prefix))?;
        let b = g.param(store, &alloc::format!("{}proj.b", self.prefix))?;
        g.linear(joined, w, Some(b))
    }

    /// Embedding of a single token, evaluated without recording gradients.
    pub fn embed(&self, store: &ParameterStore, token: usize) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let out = self.forward(&mut g, store, &[token])?;
        Ok(g.value(out).data().to_vec())
    }
}
