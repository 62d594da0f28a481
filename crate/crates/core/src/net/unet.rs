use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::embed::{time_embedding_batch, WideDeep};
use super::graph::{Graph, Var};
use super::layers::Layers;
use super::params::{Initializer, ParameterStore};
use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Shape and width of a [`UNet1d`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub in_channels: usize,
    pub sequence_length: usize,
    pub base_channels: usize,
    /// Resolution levels; each level after the first halves the sequence.
    pub levels: usize,
    pub res_blocks: usize,
    pub attention: bool,
    pub time_embed_dim: usize,
    pub cond_embed_dim: usize,
    pub vocab_size: usize,
    /// Multiplier applied to normalized time before the sinusoidal embedding.
    pub time_scale: f64,
}

impl NetworkConfig {
    pub fn new(in_channels: usize, sequence_length: usize, vocab_size: usize) -> Self {
        Self {
            in_channels,
            sequence_length,
            base_channels: 32,
            levels: 3,
            res_blocks: 2,
            attention: true,
            time_embed_dim: 64,
            cond_embed_dim: 32,
            vocab_size,
            time_scale: 1000.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            self.in_channels,
            self.sequence_length,
            self.base_channels,
            self.levels,
            self.res_blocks,
            self.time_embed_dim,
            self.cond_embed_dim,
            self.vocab_size,
        ];
        if counts.contains(&0) {
            return Err(Error::InvalidConfig("network counts must be at least 1".into()));
        }
        let factor = 1usize << (self.levels - 1);
        if self.sequence_length % factor != 0 {
            return Err(Error::InvalidConfig(format!(
                "sequence length {} not divisible by {factor}",
                self.sequence_length
            )));
        }
        if self.time_embed_dim % 2 != 0 {
            return Err(Error::OddDim(self.time_embed_dim));
        }
        Ok(())
    }

    pub fn channels(&self, level: usize) -> usize {
        self.base_channels << level
    }
}

/// 1-D UNet: stem convolution, residual encoder stages with strided
/// downsampling, a bottleneck with self-attention, a mirrored decoder with
/// skip concatenations, and an output convolution.
#[derive(Clone, Debug, PartialEq)]
pub struct UNet1d {
    config: NetworkConfig,
}

impl UNet1d {
    pub fn new(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    fn condition(&self) -> WideDeep {
        WideDeep { vocab_size: self.config.vocab_size, dim: self.config.cond_embed_dim, prefix: "cond." }
    }

    pub fn init(&self, rng: &mut SeededRng) -> Result<ParameterStore> {
        let c = &self.config;
        let mut store = ParameterStore::new();
        let mut init = Initializer { store: &mut store, rng };
        let temb = c.time_embed_dim;
        init.linear("time.l1", temb, temb)?;
        init.linear("time.l2", temb, temb)?;
        self.condition().init(&mut init)?;
        init.conv("stem", c.in_channels, c.base_channels, 3)?;

        let mut cur = c.base_channels;
        let mut skips = Vec::new();
        for l in 0..c.levels {
            let ch = c.channels(l);
            for r in 0..c.res_blocks {
                self.init_res(&mut init, &format!("down{l}.res{r}"), cur, ch)?;
                cur = ch;
                skips.push(ch);
            }
            if l + 1 < c.levels {
                init.conv(&format!("down{l}.pool"), ch, ch, 4)?;
            }
        }
        self.init_res(&mut init, "mid.res0", cur, cur)?;
        if c.attention {
            init.group_norm("mid.attn.norm", cur)?;
            for n in ["q", "k", "v", "proj"] {
                init.conv(&format!("mid.attn.{n}"), cur, cur, 1)?;
            }
        }
        self.init_res(&mut init, "mid.res1", cur, cur)?;
        for l in (0..c.levels).rev() {
            let ch = c.channels(l);
            for r in 0..c.res_blocks {
                let skip = skips.pop().expect("skip stack balanced");
                self.init_res(&mut init, &format!("up{l}.res{r}"), cur + skip, ch)?;
                cur = ch;
            }
            if l > 0 {
                init.conv_transpose(&format!("up{l}.upsample"), ch, ch, 4)?;
            }
        }
        init.group_norm("out.norm", cur)?;
        init.conv("out.conv", cur, c.in_channels, 3)?;
        Ok(store)
    }

    fn init_res(&self, init: &mut Initializer<'_>, name: &str, cin: usize, cout: usize) -> Result<()> {
        init.group_norm(&format!("{name}.norm1"), cin)?;
        init.conv(&format!("{name}.conv1"), cin, cout, 3)?;
        init.linear(&format!("{name}.time"), self.config.time_embed_dim, cout)?;
        init.linear(&format!("{name}.cond"), self.config.cond_embed_dim, cout)?;
        init.group_norm(&format!("{name}.norm2"), cout)?;
        init.conv(&format!("{name}.conv2"), cout, cout, 3)?;
        if cin != cout {
            init.conv(&format!("{name}.skip"), cin, cout, 1)?;
        }
        Ok(())
    }

    /// Time and condition embeddings after their activations, `[B, temb]` and `[B, cemb]`.
    pub fn embeddings(&self, nn: &mut Layers<'_, '_>, time: &[f64], cond: &[usize]) -> Result<(Var, Var)> {
        let c = &self.config;
        let scaled: Vec<f64> = time.iter().map(|t| t * c.time_scale).collect();
        let sin = nn.g.constant(time_embedding_batch(&scaled, c.time_embed_dim)?);
        let h = nn.linear("time.l1", sin)?;
        let h = nn.g.silu(h);
        let h = nn.linear("time.l2", h)?;
        let temb = nn.g.silu(h);
        let cemb = self.condition().forward(nn.g, nn.store, cond)?;
        let cemb = nn.g.silu(cemb);
        Ok((temb, cemb))
    }

    fn res_block(&self, nn: &mut Layers<'_, '_>, name: &str, x: Var, temb: Var, cemb: Var) -> Result<Var> {
        let h = nn.group_norm(&format!("{name}.norm1"), x)?;
        let h = nn.g.silu(h);
        let h = nn.conv(&format!("{name}.conv1"), h, 1, 1)?;
        let t = nn.linear(&format!("{name}.time"), temb)?;
        let h = nn.g.add_channel(h, t)?;
        let cproj = nn.linear(&format!("{name}.cond"), cemb)?;
        let h = nn.g.add_channel(h, cproj)?;
        let h = nn.group_norm(&format!("{name}.norm2"), h)?;
        let h = nn.g.silu(h);
        let h = nn.conv(&format!("{name}.conv2"), h, 1, 1)?;
        let skip = if nn.store.contains(&format!("{name}.skip.w")) {
            nn.conv(&format!("{name}.skip"), x, 1, 0)?
        } else {
            x
        };
        nn.g.add(h, skip)
    }

    fn attention_block(&self, nn: &mut Layers<'_, '_>, x: Var) -> Result<(Var, Var)> {
        let h = nn.group_norm("mid.attn.norm", x)?;
        let q = nn.conv("mid.attn.q", h, 1, 0)?;
        let k = nn.conv("mid.attn.k", h, 1, 0)?;
        let v = nn.conv("mid.attn.v", h, 1, 0)?;
        let a = nn.g.attention(q, k, v)?;
        let out = nn.conv("mid.attn.proj", a, 1, 0)?;
        Ok((nn.g.add(x, out)?, a))
    }

    /// Forward pass. `x: [B, C, T]`, one normalized time and one token per batch row.
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParameterStore,
        x: Var,
        time: &[f64],
        cond: &[usize],
    ) -> Result<Var> {
        self.forward_traced(g, store, x, time, cond).map(|(y, _)| y)
    }

    /// Forward pass that also returns the attention node, when the bottleneck has one.
    pub fn forward_traced(
        &self,
        g: &mut Graph,
        store: &ParameterStore,
        x: Var,
        time: &[f64],
        cond: &[usize],
    ) -> Result<(Var, Option<Var>)> {
        let c = &self.config;
        let xs = g.shape(x).to_vec();
        if xs.len() != 3 || xs[1] != c.in_channels || xs[2] != c.sequence_length {
            return Err(Error::ShapeMismatch(format!(
                "unet input {xs:?}, expected [B, {}, {}]",
                c.in_channels, c.sequence_length
            )));
        }
        if time.len() != xs[0] || cond.len() != xs[0] {
            return Err(Error::ShapeMismatch("one time and one token per batch row".into()));
        }
        let mut nn = Layers { g, store };
        let (temb, cemb) = self.embeddings(&mut nn, time, cond)?;
        let mut h = nn.conv("stem", x, 1, 1)?;
        let mut skips = Vec::new();
        for l in 0..c.levels {
            for r in 0..c.res_blocks {
                h = self.res_block(&mut nn, &format!("down{l}.res{r}"), h, temb, cemb)?;
                skips.push(h);
            }
            if l + 1 < c.levels {
                h = nn.conv(&format!("down{l}.pool"), h, 2, 1)?;
            }
        }
        h = self.res_block(&mut nn, "mid.res0", h, temb, cemb)?;
        let mut attn = None;
        if c.attention {
            let (out, a) = self.attention_block(&mut nn, h)?;
            h = out;
            attn = Some(a);
        }
        h = self.res_block(&mut nn, "mid.res1", h, temb, cemb)?;
        for l in (0..c.levels).rev() {
            for r in 0..c.res_blocks {
                let skip = skips.pop().expect("skip stack balanced");
                let joined = nn.g.concat(h, skip)?;
                h = self.res_block(&mut nn, &format!("up{l}.res{r}"), joined, temb, cemb)?;
            }
            if l > 0 {
                h = nn.conv_transpose(&format!("up{l}.upsample"), h, 2, 1)?;
            }
        }
        let h = nn.group_norm("out.norm", h)?;
        let h = nn.g.silu(h);
        let y = nn.conv("out.conv", h, 1, 1)?;
        Ok((y, attn))
    }
}
