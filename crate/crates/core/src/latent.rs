//! Temporal convolutional VAE used to compress trajectories for the latent
//! generators (LDM, LFM).
//!
//! Encoder: stem conv, then per level a stride-2 convolution followed by a
//! residual block, then a convolution spanning the remaining length and two
//! dense heads for `mu` and `log_var`. The decoder mirrors it with transposed
//! convolutions.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{Graph, Initializer, Layers, ParameterStore, Tensor, Var};
use crate::rng::SeededRng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TcvaeConfig {
    pub in_channels: usize,
    pub sequence_length: usize,
    pub latent_dim: usize,
    pub base_channels: usize,
    /// Number of stride-2 reductions; `sequence_length` must be divisible by `2^levels`.
    pub levels: usize,
    pub kl_weight: f64,
    /// Fraction of training epochs over which the KL weight ramps up linearly.
    pub kl_warmup: f64,
}

impl Default for TcvaeConfig {
    fn default() -> Self {
        Self {
            in_channels: 5,
            sequence_length: 200,
            latent_dim: 64,
            base_channels: 32,
            levels: 3,
            kl_weight: 1e-3,
            kl_warmup: 0.1,
        }
    }
}

impl TcvaeConfig {
    pub fn new(in_channels: usize, sequence_length: usize) -> Self {
        Self { in_channels, sequence_length, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.in_channels == 0 || self.latent_dim == 0 || self.base_channels == 0 {
            return bad("vae channel counts and latent_dim must be positive");
        }
        if self.levels == 0 || self.sequence_length % (1 << self.levels) != 0 {
            return bad("vae sequence_length must be divisible by 2^levels");
        }
        if !(self.kl_weight >= 0.0) || !(0.0..=1.0).contains(&self.kl_warmup) {
            return bad("kl_weight must be non-negative and kl_warmup in [0, 1]");
        }
        Ok(())
    }

    pub fn channels(&self, level: usize) -> usize {
        self.base_channels << level
    }

    fn final_length(&self) -> usize {
        self.sequence_length >> self.levels
    }

    fn top_channels(&self) -> usize {
        self.channels(self.levels - 1)
    }

    /// KL weight in effect during `epoch` of `epochs`.
    pub fn kl_weight_at(&self, epoch: usize, epochs: usize) -> f64 {
        let warm = self.kl_warmup * epochs as f64;
        if warm <= 0.0 {
            self.kl_weight
        } else {
            self.kl_weight * ((epoch + 1) as f64 / warm).min(1.0)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tcvae {
    config: TcvaeConfig,
}

/// Encoder statistics and reconstruction for a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct VaeOutput {
    pub mu: Tensor,
    pub log_var: Tensor,
    pub reconstruction: Tensor,
}

#[derive(Clone, Debug)]
pub struct ElboOutput {
    pub loss: f64,
    pub reconstruction: f64,
    pub kl: f64,
    pub grads: ParameterStore,
}

/// `½ Σ (μ² + e^{lv} − 1 − lv)` averaged over the rows of `[B, D]` inputs.
pub fn kl_divergence(mu: &Tensor, log_var: &Tensor) -> Result<f64> {
    mu.same_shape(log_var)?;
    let rows = mu.dim(0).max(1) as f64;
    let s: f64 = mu
        .data()
        .iter()
        .zip(log_var.data())
        .map(|(m, lv)| m * m + libm::exp(*lv) - 1.0 - lv)
        .sum();
    Ok(0.5 * s / rows)
}

/// `z = μ + exp(½·log_var)·ε`.
pub fn reparameterize(mu: &Tensor, log_var: &Tensor, rng: &mut SeededRng) -> Result<Tensor> {
    let eps = Tensor::randn(mu.shape(), rng);
    reparameterize_with(mu, log_var, &eps)
}

pub fn reparameterize_with(mu: &Tensor, log_var: &Tensor, eps: &Tensor) -> Result<Tensor> {
    mu.same_shape(log_var)?;
    mu.same_shape(eps)?;
    let data = mu
        .data()
        .iter()
        .zip(log_var.data())
        .zip(eps.data())
        .map(|((m, lv), e)| m + libm::exp(0.5 * lv) * e)
        .collect();
    Tensor::new(mu.shape().to_vec(), data)
}

impl Tcvae {
    pub fn new(config: TcvaeConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &TcvaeConfig {
        &self.config
    }

    pub fn init(&self, rng: &mut SeededRng) -> Result<ParameterStore> {
        let c = &self.config;
        let mut store = ParameterStore::new();
        let mut init = Initializer { store: &mut store, rng };
        init.conv("enc.stem", c.in_channels, c.base_channels, 3)?;
        let mut cur = c.base_channels;
        for l in 0..c.levels {
            let ch = c.channels(l);
            init.conv(&format!("enc.down{l}"), cur, ch, 4)?;
            init_res(&mut init, &format!("enc.res{l}"), ch)?;
            cur = ch;
        }
        let top = c.top_channels();
        init.conv("enc.collapse", top, top, c.final_length())?;
        init.linear("enc.mu", top, c.latent_dim)?;
        init.linear("enc.log_var", top, c.latent_dim)?;

        init.linear("dec.input", c.latent_dim, top)?;
        init.conv_transpose("dec.expand", top, top, c.final_length())?;
        for l in (0..c.levels).rev() {
            let ch = c.channels(l);
            let out = if l == 0 { c.base_channels } else { c.channels(l - 1) };
            init_res(&mut init, &format!("dec.res{l}"), ch)?;
            init.conv_transpose(&format!("dec.up{l}"), ch, out, 4)?;
        }
        init.group_norm("dec.out.norm", c.base_channels)?;
        init.conv("dec.out.conv", c.base_channels, c.in_channels, 3)?;
        Ok(store)
    }

    /// `x: [B, C, T]` to `(mu, log_var)`, each `[B, latent_dim]`.
    pub fn encode_graph(&self, g: &mut Graph, store: &ParameterStore, x: Var) -> Result<(Var, Var)> {
        let c = &self.config;
        let xs = g.shape(x).to_vec();
        if xs.len() != 3 || xs[1] != c.in_channels || xs[2] != c.sequence_length {
            return Err(Error::ShapeMismatch(format!(
                "vae input {xs:?}, expected [B, {}, {}]",
                c.in_channels, c.sequence_length
            )));
        }
        let mut nn = Layers { g, store };
        let mut h = nn.conv("enc.stem", x, 1, 1)?;
        for l in 0..c.levels {
            h = nn.conv(&format!("enc.down{l}"), h, 2, 1)?;
            h = res_block(&mut nn, &format!("enc.res{l}"), h)?;
        }
        let h = nn.conv("enc.collapse", h, 1, 0)?;
        let h = nn.g.reshape(h, &[xs[0], c.top_channels()])?;
        let h = nn.g.silu(h);
        let mu = nn.linear("enc.mu", h)?;
        let log_var = nn.linear("enc.log_var", h)?;
        Ok((mu, log_var))
    }

    /// `z: [B, latent_dim]` to `[B, C, T]`.
    pub fn decode_graph(&self, g: &mut Graph, store: &ParameterStore, z: Var) -> Result<Var> {
        let c = &self.config;
        let zs = g.shape(z).to_vec();
        if zs.len() != 2 || zs[1] != c.latent_dim {
            return Err(Error::ShapeMismatch(format!("latent {zs:?}, expected [B, {}]", c.latent_dim)));
        }
        let mut nn = Layers { g, store };
        let h = nn.linear("dec.input", z)?;
        let h = nn.g.silu(h);
        let h = nn.g.reshape(h, &[zs[0], c.top_channels(), 1])?;
        let mut h = nn.conv_transpose("dec.expand", h, 1, 0)?;
        for l in (0..c.levels).rev() {
            h = res_block(&mut nn, &format!("dec.res{l}"), h)?;
            h = nn.conv_transpose(&format!("dec.up{l}"), h, 2, 1)?;
        }
        let h = nn.group_norm("dec.out.norm", h)?;
        let h = nn.g.silu(h);
        nn.conv("dec.out.conv", h, 1, 1)
    }

    pub fn encode(&self, store: &ParameterStore, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let (mu, lv) = self.encode_graph(&mut g, store, xv)?;
        Ok((g.value(mu).clone(), g.value(lv).clone()))
    }

    pub fn decode(&self, store: &ParameterStore, z: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let zv = g.constant(z.clone());
        let y = self.decode_graph(&mut g, store, zv)?;
        Ok(g.value(y).clone())
    }

    /// Encode, draw `z` with the given noise, decode.
    pub fn forward(&self, store: &ParameterStore, x: &Tensor, eps: &Tensor) -> Result<VaeOutput> {
        let (mu, log_var) = self.encode(store, x)?;
        let z = reparameterize_with(&mu, &log_var, eps)?;
        let reconstruction = self.decode(store, &z)?;
        Ok(VaeOutput { mu, log_var, reconstruction })
    }

    /// Negative ELBO with explicit reparameterization noise `eps: [B, latent_dim]`.
    pub fn elbo_loss_with(
        &self,
        store: &ParameterStore,
        x: &Tensor,
        kl_weight: f64,
        eps: &Tensor,
    ) -> Result<ElboOutput> {
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let (mu, lv) = self.encode_graph(&mut g, store, xv)?;
        g.value(mu).same_shape(eps)?;
        let e = g.constant(eps.clone());
        let half = g.scale(lv, 0.5);
        let std = g.exp(half);
        let noise = g.mul(std, e)?;
        let z = g.add(mu, noise)?;
        let recon = self.decode_graph(&mut g, store, z)?;
        let recon_loss = g.mse(recon, x)?;

        let mu2 = g.mul(mu, mu)?;
        let var = g.exp(lv);
        let t = g.add(mu2, var)?;
        let t = g.sub(t, lv)?;
        let t = g.add_scalar(t, -1.0);
        let kl_sum = g.sum_all(t);
        let kl = g.scale(kl_sum, 0.5 / x.dim(0) as f64);
        let weighted = g.scale(kl, kl_weight);
        let loss = g.add(recon_loss, weighted)?;
        let grads = g.backward(loss)?;
        Ok(ElboOutput {
            loss: g.value(loss).data()[0],
            reconstruction: g.value(recon_loss).data()[0],
            kl: g.value(kl).data()[0],
            grads: grads.parameters(&g),
        })
    }

    pub fn elbo_loss(
        &self,
        store: &ParameterStore,
        x: &Tensor,
        kl_weight: f64,
        rng: &mut SeededRng,
    ) -> Result<ElboOutput> {
        let eps = Tensor::randn(&[x.dim(0), self.config.latent_dim], rng);
        self.elbo_loss_with(store, x, kl_weight, &eps)
    }
}

fn init_res(init: &mut Initializer<'_>, name: &str, ch: usize) -> Result<()> {
    init.group_norm(&format!("{name}.norm1"), ch)?;
    init.conv(&format!("{name}.conv1"), ch, ch, 3)?;
    init.group_norm(&format!("{name}.norm2"), ch)?;
    init.conv(&format!("{name}.conv2"), ch, ch, 3)
}

fn res_block(nn: &mut Layers<'_, '_>, name: &str, x: Var) -> Result<Var> {
    let h = nn.group_norm(&format!("{name}.norm1"), x)?;
    let h = nn.g.silu(h);
    let h = nn.conv(&format!("{name}.conv1"), h, 1, 1)?;
    let h = nn.group_norm(&format!("{name}.norm2"), h)?;
    let h = nn.g.silu(h);
    let h = nn.conv(&format!("{name}.conv2"), h, 1, 1)?;
    nn.g.add(h, x)
}

/// Rows of a `[B, ...]` tensor as `B` separate latent vectors.
pub fn rows(t: &Tensor) -> Vec<Vec<f64>> {
    let b = t.dim(0);
    let w = t.numel() / b.max(1);
    t.data().chunks(w.max(1)).take(b).map(<[f64]>::to_vec).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use alloc::vec;

    fn tiny() -> TcvaeConfig {
        TcvaeConfig { in_channels: 2, sequence_length: 8, latent_dim: 3, base_channels: 4, levels: 2, ..TcvaeConfig::default() }
    }

    #[test]
    fn shapes_round_trip() {
        let vae = Tcvae::new(tiny()).unwrap();
        let mut rng = seeded(3);
        let p = vae.init(&mut rng).unwrap();
        let x = Tensor::randn(&[2, 2, 8], &mut rng);
        let (mu, lv) = vae.encode(&p, &x).unwrap();
        assert_eq!(mu.shape(), &[2, 3]);
        assert_eq!(lv.shape(), &[2, 3]);
        assert_ne!(&mu.data()[..3], &mu.data()[3..]);
        let y = vae.decode(&p, &mu).unwrap();
        assert_eq!(y.shape(), x.shape());
        assert_eq!(vae.decode(&p, &mu).unwrap(), y);
        assert!(vae.encode(&p, &Tensor::zeros(&[1, 2, 6])).is_err());
        assert!(vae.decode(&p, &Tensor::zeros(&[1, 4])).is_err());
    }

    #[test]
    fn closed_form_kl() {
        let zero = Tensor::zeros(&[1, 4]);
        assert_eq!(kl_divergence(&zero, &zero).unwrap(), 0.0);
        let one = Tensor::full(&[1, 1], 1.0);
        assert!((kl_divergence(&one, &Tensor::zeros(&[1, 1])).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn degenerate_variance_returns_mean() {
        let mu = Tensor::new(vec![1, 3], vec![0.5, -1.0, 2.0]).unwrap();
        let lv = Tensor::full(&[1, 3], -80.0);
        let z = reparameterize(&mu, &lv, &mut seeded(1)).unwrap();
        for (a, b) in z.data().iter().zip(mu.data()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn elbo_parts_add_up() {
        let vae = Tcvae::new(tiny()).unwrap();
        let mut rng = seeded(9);
        let p = vae.init(&mut rng).unwrap();
        let x = Tensor::randn(&[3, 2, 8], &mut rng);
        let eps = Tensor::randn(&[3, 3], &mut rng);
        let out = vae.elbo_loss_with(&p, &x, 0.25, &eps).unwrap();
        let fwd = vae.forward(&p, &x, &eps).unwrap();
        let recon = fwd.reconstruction.zip_map(&x, |a, b| (a - b) * (a - b)).unwrap().sum() / x.numel() as f64;
        let kl = kl_divergence(&fwd.mu, &fwd.log_var).unwrap();
        assert!((out.reconstruction - recon).abs() < 1e-12);
        assert!((out.kl - kl).abs() < 1e-12);
        assert!((out.loss - recon - 0.25 * kl).abs() < 1e-12);
    }

    #[test]
    fn warmup_ramps_linearly() {
        let c = TcvaeConfig::default();
        assert!((c.kl_weight_at(0, 100) - 1e-4).abs() < 1e-18);
        assert_eq!(c.kl_weight_at(9, 100), 1e-3);
        assert_eq!(c.kl_weight_at(50, 100), 1e-3);
    }
}
