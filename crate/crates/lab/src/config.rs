//! Run configuration, loaded from TOML with environment overrides.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use trajlab_core::dataset::{Layout, SplitRatios, ToyAirportSpec};
use trajlab_core::diffusion::ScheduleConfig;
use trajlab_core::flowmatch::FlowConfig;
use trajlab_core::latent::TcvaeConfig;
use trajlab_core::model::{Family, GeneratorConfig};
use trajlab_core::net::{AdamConfig, NetworkConfig};
use trajlab_core::train::TrainConfig;

use crate::error::{LabError, Result};

/// Toy spec given inline or as a path to a TOML file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ToySource {
    Path(PathBuf),
    Inline(ToyAirportSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub toy: Option<ToySource>,
    /// Number of flights drawn from a toy spec.
    #[serde(default = "DataSource::default_flights")]
    pub flights: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    /// Column map for `csv`; the default schema when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<PathBuf>,
}

impl DataSource {
    fn default_flights() -> usize {
        1000
    }

    pub fn toy(spec: ToyAirportSpec, flights: usize) -> Self {
        Self { toy: Some(ToySource::Inline(spec)), flights, csv: None, schema: None }
    }

    pub fn csv(path: impl Into<PathBuf>) -> Self {
        Self { toy: None, flights: Self::default_flights(), csv: Some(path.into()), schema: None }
    }

    /// Interpret an override path: `.csv` files are data, anything else a toy spec.
    fn from_override(path: &str) -> Self {
        let p = PathBuf::from(path);
        if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            Self::csv(p)
        } else {
            Self { toy: Some(ToySource::Path(p)), flights: Self::default_flights(), csv: None, schema: None }
        }
    }

    fn validate(&self, which: &str) -> Result<()> {
        match (&self.toy, &self.csv) {
            (Some(_), None) | (None, Some(_)) => Ok(()),
            _ => Err(LabError::Config(format!("{which}: give exactly one of `toy` or `csv`"))),
        }
    }

    fn resolve(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(ToySource::Path(p)) = &mut self.toy {
            join(p);
        }
        if let Some(p) = &mut self.csv {
            join(p);
        }
        if let Some(p) = &mut self.schema {
            join(p);
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    #[default]
    Kinematic,
    Geographic,
}

impl Representation {
    pub fn layout(self) -> Layout {
        match self {
            Representation::Kinematic => Layout::Kinematic,
            Representation::Geographic => Layout::Geographic,
        }
    }
}

/// UNet widths; channel count, length and vocabulary follow from the data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSettings {
    pub base_channels: usize,
    pub levels: usize,
    pub res_blocks: usize,
    pub attention: bool,
    pub time_embed_dim: usize,
    pub cond_embed_dim: usize,
    pub time_scale: f64,
}

impl Default for NetworkSettings {
    fn default() -> Self {
        let n = NetworkConfig::new(1, 1, 1);
        Self {
            base_channels: n.base_channels,
            levels: n.levels,
            res_blocks: n.res_blocks,
            attention: n.attention,
            time_embed_dim: n.time_embed_dim,
            cond_embed_dim: n.cond_embed_dim,
            time_scale: n.time_scale,
        }
    }
}

impl NetworkSettings {
    pub fn build(&self, in_channels: usize, sequence_length: usize, vocab_size: usize) -> NetworkConfig {
        NetworkConfig {
            in_channels,
            sequence_length,
            vocab_size,
            base_channels: self.base_channels,
            levels: self.levels,
            res_blocks: self.res_blocks,
            attention: self.attention,
            time_embed_dim: self.time_embed_dim,
            cond_embed_dim: self.cond_embed_dim,
            time_scale: self.time_scale,
        }
    }
}

/// Autoencoder settings for the latent families.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VaeSettings {
    pub latent_dim: usize,
    pub base_channels: usize,
    pub levels: usize,
    pub kl_weight: f64,
    pub kl_warmup: f64,
    /// Epochs of autoencoder training; `epochs` when absent.
    pub epochs: Option<usize>,
    /// Also train the autoencoder on the target fraction while fine-tuning.
    pub finetune: bool,
}

impl Default for VaeSettings {
    fn default() -> Self {
        let c = TcvaeConfig::default();
        Self {
            latent_dim: c.latent_dim,
            base_channels: c.base_channels,
            levels: c.levels,
            kl_weight: c.kl_weight,
            kl_warmup: c.kl_warmup,
            epochs: None,
            finetune: false,
        }
    }
}

impl VaeSettings {
    pub fn build(&self, in_channels: usize, sequence_length: usize) -> TcvaeConfig {
        TcvaeConfig {
            in_channels,
            sequence_length,
            latent_dim: self.latent_dim,
            base_channels: self.base_channels,
            levels: self.levels,
            kl_weight: self.kl_weight,
            kl_warmup: self.kl_warmup,
        }
    }
}

/// Evaluation settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub n_boot: usize,
    pub heatmap_grid: usize,
    /// Smoothing factor of the display-only EWMA in overlay plots.
    pub ewma_alpha: f64,
    /// Paths drawn per series in overlay plots.
    pub plot_paths: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self { n_boot: 20, heatmap_grid: 64, ewma_alpha: 0.3, plot_paths: 50 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model_family: Family,
    pub source: DataSource,
    pub target: DataSource,
    #[serde(default)]
    pub representation: Representation,
    #[serde(default = "RunConfig::default_fractions")]
    pub fractions: Vec<f64>,
    #[serde(default = "RunConfig::default_epochs")]
    pub epochs: usize,
    #[serde(default = "RunConfig::default_batch")]
    pub batch_size: usize,
    #[serde(default = "RunConfig::default_n")]
    pub n_generate: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "RunConfig::default_length")]
    pub sequence_length: usize,
    #[serde(default)]
    pub splits: SplitRatios,
    #[serde(default = "RunConfig::default_dropout")]
    pub cond_dropout: f64,
    #[serde(default = "RunConfig::default_ema")]
    pub ema_decay: f64,
    #[serde(default)]
    pub network: NetworkSettings,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub flow: FlowConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ddim_substeps: Option<usize>,
    #[serde(default)]
    pub optimizer: AdamConfig,
    #[serde(default)]
    pub vae: VaeSettings,
    #[serde(default)]
    pub eval: EvalSettings,
    /// Output directory of `experiment`.
    #[serde(default = "RunConfig::default_out")]
    pub out_dir: PathBuf,
}

impl RunConfig {
    fn default_fractions() -> Vec<f64> {
        vec![0.0, 0.05, 0.2, 0.5, 1.0]
    }
    fn default_epochs() -> usize {
        100
    }
    fn default_batch() -> usize {
        32
    }
    fn default_n() -> usize {
        100
    }
    fn default_length() -> usize {
        200
    }
    fn default_dropout() -> f64 {
        TrainConfig::default().cond_dropout
    }
    fn default_ema() -> f64 {
        TrainConfig::default().ema_decay
    }
    fn default_out() -> PathBuf {
        PathBuf::from("runs")
    }

    /// A configuration with every default except the required fields.
    pub fn new(model_family: Family, source: DataSource, target: DataSource) -> Self {
        Self {
            model_family,
            source,
            target,
            representation: Representation::default(),
            fractions: Self::default_fractions(),
            epochs: Self::default_epochs(),
            batch_size: Self::default_batch(),
            n_generate: Self::default_n(),
            seed: 0,
            sequence_length: Self::default_length(),
            splits: SplitRatios::default(),
            cond_dropout: Self::default_dropout(),
            ema_decay: Self::default_ema(),
            network: NetworkSettings::default(),
            schedule: ScheduleConfig::default(),
            flow: FlowConfig::default(),
            ddim_substeps: None,
            optimizer: AdamConfig::default(),
            vae: VaeSettings::default(),
            eval: EvalSettings::default(),
            out_dir: Self::default_out(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load, resolve relative paths against the file's directory, then apply
    /// `TRAJLAB_SEED`, `TRAJLAB_SOURCE`, `TRAJLAB_TARGET` and `TRAJLAB_OUT`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.source.resolve(base);
        cfg.target.resolve(base);
        if cfg.out_dir.is_relative() {
            cfg.out_dir = base.join(&cfg.out_dir);
        }
        cfg.apply_env(|k| std::env::var(k).ok())?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) -> Result<()> {
        if let Some(s) = var("TRAJLAB_SEED") {
            self.seed = s.trim().parse().map_err(|_| LabError::Config(format!("TRAJLAB_SEED={s:?} is not a u64")))?;
        }
        if let Some(p) = var("TRAJLAB_SOURCE") {
            self.source = DataSource { flights: self.source.flights, ..DataSource::from_override(&p) };
        }
        if let Some(p) = var("TRAJLAB_TARGET") {
            self.target = DataSource { flights: self.target.flights, ..DataSource::from_override(&p) };
        }
        if let Some(p) = var("TRAJLAB_OUT") {
            self.out_dir = PathBuf::from(p);
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(LabError::Config(m.into()));
        if self.model_family == Family::Tcvae {
            return bad("model_family must be one of DM, FM, LDM, LFM");
        }
        self.source.validate("source")?;
        self.target.validate("target")?;
        if self.fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return bad("fractions must lie in [0, 1]");
        }
        if self.fractions.windows(2).any(|w| !(w[0] < w[1])) {
            return bad("fractions must be strictly ascending");
        }
        if self.epochs == 0 || self.batch_size == 0 || self.n_generate == 0 {
            return bad("epochs, batch_size and n_generate must be at least 1");
        }
        if self.sequence_length < 2 {
            return bad("sequence_length must be at least 2");
        }
        self.train_config(self.epochs).validate()?;
        Ok(())
    }

    pub fn train_config(&self, epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: self.batch_size,
            cond_dropout: self.cond_dropout,
            adam: self.optimizer,
            ema_decay: self.ema_decay,
        }
    }

    pub fn generator_config(&self, in_channels: usize, sequence_length: usize, vocab_size: usize) -> GeneratorConfig {
        GeneratorConfig {
            network: self.network.build(in_channels, sequence_length, vocab_size),
            schedule: self.schedule,
            flow: self.flow,
            ddim_substeps: self.ddim_substeps,
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| LabError::Config(e.to_string()))
    }
}

pub fn load_toy_spec(path: &Path) -> Result<ToyAirportSpec> {
    let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    toml::from_str(&text).map_err(|e| LabError::Config(format!("{}: {e}", path.display())))
}
