//! Model families and the conditional generator wrapping the UNet with either
//! a diffusion or a flow-matching objective.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::Scaler;
use crate::diffusion::{ddim_sample, ddpm_sample, dm_loss, NoiseSchedule, ScheduleConfig};
use crate::error::{Error, Result};
use crate::flowmatch::{flow_sample, fm_loss, FlowConfig};
use crate::latent::Tcvae;
use crate::net::{LossOutput, NetworkConfig, ParameterStore, Tensor, UNet1d, UNetField};
use crate::rng::SeededRng;

/// Model family tag stored in checkpoint manifests.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "DM")]
    Dm,
    #[serde(rename = "FM")]
    Fm,
    #[serde(rename = "LDM")]
    Ldm,
    #[serde(rename = "LFM")]
    Lfm,
    #[serde(rename = "TCVAE")]
    Tcvae,
}

impl Family {
    pub const GENERATORS: [Family; 4] = [Family::Dm, Family::Fm, Family::Ldm, Family::Lfm];

    pub fn tag(self) -> &'static str {
        match self {
            Family::Dm => "DM",
            Family::Fm => "FM",
            Family::Ldm => "LDM",
            Family::Lfm => "LFM",
            Family::Tcvae => "TCVAE",
        }
    }

    pub fn is_latent(self) -> bool {
        matches!(self, Family::Ldm | Family::Lfm)
    }

    pub fn is_diffusion(self) -> bool {
        matches!(self, Family::Dm | Family::Ldm)
    }

    /// Error unless `self == expected`.
    pub fn expect(self, expected: Family) -> Result<()> {
        if self == expected {
            Ok(())
        } else {
            Err(Error::FamilyMismatch { expected: expected.tag().into(), found: self.tag().into() })
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "DM" => Ok(Family::Dm),
            "FM" => Ok(Family::Fm),
            "LDM" => Ok(Family::Ldm),
            "LFM" => Ok(Family::Lfm),
            "TCVAE" => Ok(Family::Tcvae),
            _ => Err(Error::FamilyMismatch { expected: "DM|FM|LDM|LFM|TCVAE".into(), found: s.to_string() }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub network: NetworkConfig,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub flow: FlowConfig,
    /// Use deterministic DDIM sampling with this many steps instead of ancestral sampling.
    #[serde(default)]
    pub ddim_substeps: Option<usize>,
}

impl GeneratorConfig {
    pub fn new(network: NetworkConfig) -> Self {
        Self { network, schedule: ScheduleConfig::default(), flow: FlowConfig::default(), ddim_substeps: None }
    }
}

/// A conditional UNet trained as a diffusion (noise-prediction) or flow (velocity) model.
#[derive(Clone, Debug)]
pub struct Generator {
    family: Family,
    net: UNet1d,
    schedule: NoiseSchedule,
    config: GeneratorConfig,
}

impl Generator {
    pub fn new(family: Family, config: GeneratorConfig) -> Result<Self> {
        if family == Family::Tcvae {
            return Err(Error::FamilyMismatch { expected: "DM|FM|LDM|LFM".into(), found: family.tag().into() });
        }
        let net = UNet1d::new(config.network.clone())?;
        let schedule = config.schedule.build()?;
        if let Some(s) = config.ddim_substeps {
            crate::diffusion::ddim_steps(schedule.steps(), s)?;
        }
        Ok(Self { family, net, schedule, config })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn network(&self) -> &UNet1d {
        &self.net
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    pub fn sample_shape(&self) -> [usize; 2] {
        [self.config.network.in_channels, self.config.network.sequence_length]
    }

    pub fn init(&self, rng: &mut SeededRng) -> Result<ParameterStore> {
        self.net.init(rng)
    }

    pub fn loss(&self, params: &ParameterStore, batch: &Tensor, cond: &[usize], rng: &mut SeededRng) -> Result<LossOutput> {
        let field = UNetField { net: &self.net, params };
        if self.family.is_diffusion() {
            dm_loss(&field, batch, cond, &self.schedule, rng)
        } else {
            fm_loss(&field, batch, cond, rng)
        }
    }

    /// One sample per token, `[n, C, T]`.
    pub fn sample(&self, params: &ParameterStore, cond: &[usize], rng: &mut SeededRng) -> Result<Tensor> {
        let field = UNetField { net: &self.net, params };
        let shape = self.sample_shape();
        if self.family.is_diffusion() {
            match self.config.ddim_substeps {
                Some(s) => ddim_sample(&field, &self.schedule, cond, &shape, s, rng),
                None => ddpm_sample(&field, &self.schedule, cond, &shape, rng),
            }
        } else {
            flow_sample(&field, cond, &shape, self.config.flow, rng)
        }
    }
}

/// Encoder means for every trajectory, computed in chunks. Returns `[n, latent_dim]`.
pub fn encode_means(vae: &Tcvae, params: &ParameterStore, data: &[Tensor]) -> Result<Tensor> {
    let d = vae.config().latent_dim;
    let mut out = Vec::with_capacity(data.len() * d);
    for chunk in data.chunks(crate::diffusion::SAMPLE_CHUNK) {
        let (mu, _) = vae.encode(params, &Tensor::stack(chunk)?)?;
        out.extend(mu.into_data());
    }
    Tensor::new(alloc::vec![data.len(), d], out)
}

/// Everything needed to turn latent samples back into trajectories.
#[derive(Clone, Copy, Debug)]
pub struct LatentDecoder<'a> {
    pub vae: &'a Tcvae,
    pub params: &'a ParameterStore,
    /// Standardizes encoder means before generative training.
    pub scaler: &'a Scaler,
}

impl LatentDecoder<'_> {
    /// Invert the latent scaler and decode `[n, 1, latent_dim]` codes to `[n, C, T]`.
    pub fn decode(&self, latents: Tensor) -> Result<Tensor> {
        let n = latents.dim(0);
        let d = self.vae.config().latent_dim;
        if self.scaler.channels() != d {
            return Err(Error::ChannelMismatch { expected: d, found: self.scaler.channels() });
        }
        let mut z = latents.reshape(&[n, d])?;
        self.scaler.invert_values(z.data_mut());
        let mut out = Vec::new();
        let c = self.vae.config();
        for part in z.data().chunks(crate::diffusion::SAMPLE_CHUNK * d) {
            let rows = part.len() / d;
            let t = Tensor::new(alloc::vec![rows, d], part.to_vec())?;
            out.extend(self.vae.decode(self.params, &t)?.into_data());
        }
        Tensor::new(alloc::vec![n, c.in_channels, c.sequence_length], out)
    }
}

/// Sample latent codes with the latent generator, then decode them.
pub fn latent_generate(
    family: Family,
    generator: &Generator,
    params: &ParameterStore,
    decoder: LatentDecoder<'_>,
    cond: &[usize],
    rng: &mut SeededRng,
) -> Result<Tensor> {
    if !family.is_latent() {
        return Err(Error::FamilyMismatch { expected: String::from("LDM|LFM"), found: family.tag().into() });
    }
    generator.family().expect(family)?;
    let d = decoder.vae.config().latent_dim;
    if generator.sample_shape() != [1, d] {
        return Err(Error::ShapeMismatch("latent generator must produce [1, latent_dim] sequences".into()));
    }
    if cond.is_empty() {
        let c = decoder.vae.config();
        return Ok(Tensor::zeros(&[0, c.in_channels, c.sequence_length]));
    }
    let latents = generator.sample(params, cond, rng)?;
    decoder.decode(latents)
}
