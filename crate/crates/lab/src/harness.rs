//! The transfer protocol: pretrain on the source airport, fine-tune on
//! fractions of the target airport, compare against a from-scratch baseline.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use trajlab_core::dataset::{condition_label, ConditionToken, Scaler, Trajectory, Vocabulary};
use trajlab_core::kinematics::{lateral, Anchor};
use trajlab_core::latent::Tcvae;
use trajlab_core::metrics::{
    bootstrap_summary, heatmap, jsd, kl_div, mean_min_dtw, pca_project, BBox, MetricSummary, PairMetric, Provenance,
    SampleSet,
};
use trajlab_core::model::{encode_means, latent_generate, Family, Generator, LatentDecoder};
use trajlab_core::net::{AdamState, LossOutput, Tensor};
use trajlab_core::rng::{derive_seed, seeded};
use trajlab_core::train::train;
use trajlab_core::Error as CoreError;

use crate::checkpoint::{Checkpoint, Manifest};
use crate::config::{EvalSettings, RunConfig};
use crate::data::{load_raw, standardized, Domain};
use crate::error::{LabError, Result};
use crate::plot::{overlay_svg, pca_svg};
use crate::report::{significance_table, EvalReport, PcaCoords, PlotPaths, Protocol, SignificanceTable};

/// Loaded source and target domains plus the shared condition vocabulary.
pub struct Lab {
    pub config: RunConfig,
    pub source: Domain,
    pub target: Domain,
    pub vocabulary: Vocabulary,
    /// Reserved at pretraining time; every target flight carries it.
    pub target_token: ConditionToken,
    /// Print progress to stderr.
    pub verbose: bool,
}

/// Condition-matched samples, un-standardized, with their lateral paths.
#[derive(Clone, Debug)]
pub struct Generated {
    pub tokens: Vec<usize>,
    pub anchors: Vec<Option<Anchor>>,
    /// Standardized network output, `[N, C, T]`.
    pub samples: Tensor,
    pub trajectories: Vec<Trajectory>,
    pub paths: Vec<Vec<[f64; 2]>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub split: f64,
    pub checkpoint: String,
    pub report: EvalReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub config: RunConfig,
    pub pretrained: String,
    pub baseline_checkpoint: String,
    pub runs: Vec<RunEntry>,
    pub baseline: EvalReport,
    pub significance: SignificanceTable,
}

fn run_seed(cfg: &RunConfig, stage: &str) -> u64 {
    derive_seed(cfg.seed, &format!("{}/{stage}", cfg.model_family))
}

fn fraction_tag(s: f64) -> String {
    format!("s{s:.2}")
}

impl Lab {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let layout = config.representation.layout();
        let seed = config.seed;
        let src = load_raw(&config.source, derive_seed(seed, "data/source"))?;
        let tgt = load_raw(&config.target, derive_seed(seed, "data/target"))?;
        let mut source =
            Domain::build(src, layout, config.sequence_length, config.splits, derive_seed(seed, "splits/source"))?;
        let mut target =
            Domain::build(tgt, layout, config.sequence_length, config.splits, derive_seed(seed, "splits/target"))?;
        let mut vocabulary = Vocabulary::new();
        source.fit_tokens(&mut vocabulary)?;
        let target_token = vocabulary.reserve(&condition_label(target.airport(), None));
        target.set_token(target_token);
        if target.splits.test.is_empty() {
            return Err(CoreError::EmptySet.into());
        }
        Ok(Self { config, source, target, vocabulary, target_token, verbose: false })
    }

    fn log(&self, msg: impl FnOnce() -> String) {
        if self.verbose {
            eprintln!("[trajlab] {}", msg());
        }
    }

    fn family(&self) -> Family {
        self.config.model_family
    }

    /// Train on the source training split from a fresh initialization.
    pub fn pretrain(&self) -> Result<Checkpoint> {
        let data = self.source.select(&self.source.splits.train);
        self.fit(None, &data, "pretrain", None)
    }

    /// Continue training on `take_fraction(s)` of the target training split.
    /// `s = 0` returns the checkpoint unchanged.
    pub fn finetune(&self, ckpt: &Checkpoint, s: f64) -> Result<Checkpoint> {
        if !self.config.fractions.iter().any(|f| *f == s) {
            return Err(LabError::FractionNotConfigured(s));
        }
        ckpt.manifest.family.expect(self.family())?;
        if s == 0.0 {
            return Ok(ckpt.clone());
        }
        let idx = self.target.splits.take_fraction(s);
        let data = self.target.select(&idx);
        self.fit(Some(ckpt), &data, &format!("finetune/{s}"), Some(s))
    }

    /// Train from scratch on the full target training split.
    pub fn baseline(&self) -> Result<Checkpoint> {
        let data = self.target.select(&self.target.splits.train);
        self.fit(None, &data, "baseline", None)
    }

    fn fit(&self, init: Option<&Checkpoint>, data: &[Trajectory], stage: &str, fraction: Option<f64>) -> Result<Checkpoint> {
        let cfg = &self.config;
        let family = self.family();
        let seed = run_seed(cfg, stage);
        let start = Instant::now();
        let scaler = Scaler::fit(data)?;
        let (tensors, tokens) = standardized(data, &scaler)?;
        let (c, t) = (self.config.representation.layout().channels(), cfg.sequence_length);

        let mut vae = None;
        let mut latent_scaler = None;
        let (train_data, gen_cfg) = if family.is_latent() {
            let vae_ckpt = match init.map(|c| c.vae.as_deref()) {
                Some(Some(v)) if !cfg.vae.finetune => v.clone(),
                Some(Some(v)) => self.fit_vae(Some(v), &tensors, scaler.clone(), derive_seed(seed, "vae"))?,
                Some(None) => return Err(LabError::Checkpoint("latent checkpoint has no autoencoder".into())),
                None => self.fit_vae(None, &tensors, scaler.clone(), derive_seed(seed, "vae"))?,
            };
            let model = Tcvae::new(vae_ckpt.manifest.tcvae.clone().ok_or_else(missing("tcvae config"))?)?;
            let means = encode_means(&model, &vae_ckpt.params, &tensors)?;
            let d = model.config().latent_dim;
            let names = (0..d).map(|i| format!("z{i}")).collect();
            let ls = Scaler::fit_rows(std::iter::once(means.data()), d, names)?;
            let mut z = means;
            ls.apply_values(z.data_mut());
            let rows = z.data().chunks(d).map(|r| Tensor::new(vec![1, d], r.to_vec())).collect::<Result<Vec<_>, _>>()?;
            latent_scaler = Some(ls);
            vae = Some(Box::new(vae_ckpt));
            (rows, cfg.generator_config(1, d, self.vocabulary.len()))
        } else {
            (tensors, cfg.generator_config(c, t, self.vocabulary.len()))
        };

        let generator = Generator::new(family, gen_cfg.clone())?;
        let (mut params, mut adam) = match init {
            Some(ck) => {
                let p = ck.params.clone();
                let a = ck.adam.clone().unwrap_or_else(|| AdamState::new(&p));
                (p, a)
            }
            None => {
                let p = generator.init(&mut seeded(derive_seed(seed, "init")))?;
                let a = AdamState::new(&p);
                (p, a)
            }
        };
        let tc = cfg.train_config(cfg.epochs);
        let losses = train(&mut params, &mut adam, &train_data, &tokens, &tc, &mut seeded(derive_seed(seed, "train")), |p, b, rng| {
            generator.loss(p, b.x, b.cond, rng)
        })?;
        self.log(|| {
            format!(
                "{family} {stage}: {} samples, {} epochs, loss {:.4} -> {:.4} in {:.1?}",
                train_data.len(),
                cfg.epochs,
                losses.first().copied().unwrap_or(f64::NAN),
                losses.last().copied().unwrap_or(f64::NAN),
                start.elapsed()
            )
        });
        let vae_hash = vae.as_ref().map(|v| v.content_hash()).transpose()?;
        let parent = init.map(Checkpoint::content_hash).transpose()?;
        Ok(Checkpoint {
            manifest: Manifest {
                family,
                seed: cfg.seed,
                layout: cfg.representation.layout(),
                sequence_length: cfg.sequence_length,
                vocabulary: self.vocabulary.clone(),
                scaler,
                generator: Some(gen_cfg),
                tcvae: None,
                latent_scaler,
                vae_hash,
                parent,
                fraction,
                adam_step: Some(adam.step),
                losses,
            },
            params,
            adam: Some(adam),
            vae,
        })
    }

    /// Train the autoencoder on standardized trajectories.
    fn fit_vae(&self, init: Option<&Checkpoint>, data: &[Tensor], scaler: Scaler, seed: u64) -> Result<Checkpoint> {
        let cfg = &self.config;
        let start = Instant::now();
        let tcfg = cfg.vae.build(cfg.representation.layout().channels(), cfg.sequence_length);
        let vae = Tcvae::new(tcfg.clone())?;
        let (mut params, mut adam) = match init {
            Some(ck) => (ck.params.clone(), ck.adam.clone().unwrap_or_else(|| AdamState::new(&ck.params))),
            None => {
                let p = vae.init(&mut seeded(derive_seed(seed, "init")))?;
                let a = AdamState::new(&p);
                (p, a)
            }
        };
        let epochs = cfg.vae.epochs.unwrap_or(cfg.epochs);
        let tc = trajlab_core::train::TrainConfig { cond_dropout: 0.0, ..cfg.train_config(epochs) };
        let tokens = vec![0; data.len()];
        let losses = train(&mut params, &mut adam, data, &tokens, &tc, &mut seeded(derive_seed(seed, "train")), |p, b, rng| {
            let out = vae.elbo_loss(p, b.x, tcfg.kl_weight_at(b.epoch, epochs), rng)?;
            Ok(LossOutput { loss: out.loss, grads: out.grads })
        })?;
        self.log(|| {
            format!(
                "TCVAE: {} samples, {epochs} epochs, loss {:.4} -> {:.4} in {:.1?}",
                data.len(),
                losses.first().copied().unwrap_or(f64::NAN),
                losses.last().copied().unwrap_or(f64::NAN),
                start.elapsed()
            )
        });
        Ok(Checkpoint {
            manifest: Manifest {
                family: Family::Tcvae,
                seed: cfg.seed,
                layout: cfg.representation.layout(),
                sequence_length: cfg.sequence_length,
                vocabulary: self.vocabulary.clone(),
                scaler,
                generator: None,
                tcvae: Some(tcfg),
                latent_scaler: None,
                vae_hash: None,
                parent: init.map(Checkpoint::content_hash).transpose()?,
                fraction: None,
                adam_step: Some(adam.step),
                losses,
            },
            params,
            adam: Some(adam),
            vae: None,
        })
    }

    /// `N` samples whose tokens and anchors are drawn, with replacement, from the target test set.
    pub fn generate_condition_matched(&self, ckpt: &Checkpoint, n: usize, seed: u64) -> Result<Generated> {
        if n == 0 {
            return Err(LabError::Config("n_generate must be at least 1".into()));
        }
        let test = &self.target.splits.test;
        let mut rng = seeded(derive_seed(seed, "conditions"));
        let draws: Vec<usize> = (0..n).map(|_| test[rand_index(&mut rng, test.len())]).collect();
        let tokens: Vec<usize> = draws.iter().map(|&i| self.target.trajectories[i].condition.code).collect();
        let anchors: Vec<Option<Anchor>> = draws.iter().map(|&i| self.target.trajectories[i].anchor).collect();
        sample_paths(ckpt, &tokens, &anchors, derive_seed(seed, "samples"))
    }

    pub fn evaluate(&self, generated: &[Vec<[f64; 2]>], run: &str, split: f64) -> Result<EvalReport> {
        let protocol = Protocol {
            run: run.into(),
            split,
            seed: self.config.seed,
            n: generated.len(),
            model_family: self.family(),
            test_set: self.target.test_hash(),
            test_size: self.target.splits.test.len(),
            dtw_units: "standardized lateral".into(),
        };
        evaluate(generated, &self.target.test_lateral(), &self.config.eval, derive_seed(self.config.seed, "eval"), protocol)
    }

    fn generate_and_evaluate(&self, ckpt: &Checkpoint, run: &str, split: f64) -> Result<EvalReport> {
        let start = Instant::now();
        let g = self.generate_condition_matched(ckpt, self.config.n_generate, derive_seed(self.config.seed, "generate"))?;
        let report = self.evaluate(&g.paths, run, split)?;
        self.log(|| {
            format!(
                "{run} {split:.2}: dtw {:.3}, e-distance {:.4} in {:.1?}",
                report.metrics["dtw"].mean,
                report.metrics["e_distance"].mean,
                start.elapsed()
            )
        });
        Ok(report)
    }

    /// Pretrain, fine-tune and evaluate every fraction, train and evaluate the
    /// baseline, then build the significance table. With `out`, checkpoints,
    /// reports, tables and plots are written there.
    pub fn run_experiment(&self, out: Option<&Path>) -> Result<ExperimentRecord> {
        let dirs = out.map(OutputDirs::create).transpose()?;
        let pre = self.pretrain()?;
        let pretrained = match &dirs {
            Some(d) => pre.save(&d.checkpoints.join("pretrained.tgl"))?,
            None => pre.content_hash()?,
        };
        let mut runs = Vec::with_capacity(self.config.fractions.len());
        for &s in &self.config.fractions {
            let ck = self.finetune(&pre, s)?;
            let hash = match &dirs {
                Some(d) => ck.save(&d.checkpoints.join(format!("{}.tgl", fraction_tag(s))))?,
                None => ck.content_hash()?,
            };
            let report = self.generate_and_evaluate(&ck, "transfer", s)?;
            runs.push(RunEntry { split: s, checkpoint: hash, report });
        }
        let base = self.baseline()?;
        let baseline_checkpoint = match &dirs {
            Some(d) => base.save(&d.checkpoints.join("baseline.tgl"))?,
            None => base.content_hash()?,
        };
        let baseline = self.generate_and_evaluate(&base, "baseline", 1.0)?;
        let reports: Vec<EvalReport> = runs.iter().map(|r| r.report.clone()).collect();
        let significance = significance_table(&reports, &baseline)?;
        let record = ExperimentRecord {
            config: self.config.clone(),
            pretrained,
            baseline_checkpoint,
            runs,
            baseline,
            significance,
        };
        if let Some(d) = &dirs {
            write_outputs(&record, d, &self.config.eval)?;
        }
        Ok(record)
    }
}

fn missing(what: &'static str) -> impl Fn() -> LabError {
    move || LabError::Checkpoint(format!("manifest lacks {what}"))
}

fn rand_index(rng: &mut trajlab_core::rng::SeededRng, n: usize) -> usize {
    use rand::Rng;
    rng.random_range(0..n)
}

/// Sample standardized tensors for `tokens` with any generator checkpoint.
pub fn sample_tensor(ckpt: &Checkpoint, tokens: &[usize], seed: u64) -> Result<Tensor> {
    let m = &ckpt.manifest;
    let vocab = m.vocabulary.len();
    if let Some(&t) = tokens.iter().find(|&&t| t >= vocab) {
        return Err(CoreError::UnknownToken(t).into());
    }
    let generator = Generator::new(m.family, m.generator.clone().ok_or_else(missing("generator config"))?)?;
    let mut rng = seeded(seed);
    if m.family.is_latent() {
        let vck = ckpt.vae.as_deref().ok_or_else(missing("autoencoder"))?;
        let vae = Tcvae::new(vck.manifest.tcvae.clone().ok_or_else(missing("tcvae config"))?)?;
        let scaler = m.latent_scaler.as_ref().ok_or_else(missing("latent scaler"))?;
        let decoder = LatentDecoder { vae: &vae, params: &vck.params, scaler };
        Ok(latent_generate(m.family, &generator, &ckpt.params, decoder, tokens, &mut rng)?)
    } else {
        Ok(generator.sample(&ckpt.params, tokens, &mut rng)?)
    }
}

/// Sample, un-standardize with the checkpoint scaler and reconstruct lateral paths.
pub fn sample_paths(ckpt: &Checkpoint, tokens: &[usize], anchors: &[Option<Anchor>], seed: u64) -> Result<Generated> {
    decode_paths(ckpt, sample_tensor(ckpt, tokens, seed)?, tokens, anchors)
}

/// Un-standardize `[N, C, T]` samples with the checkpoint scaler and reconstruct lateral paths.
pub fn decode_paths(ckpt: &Checkpoint, samples: Tensor, tokens: &[usize], anchors: &[Option<Anchor>]) -> Result<Generated> {
    let m = &ckpt.manifest;
    let mut trajectories = Vec::with_capacity(tokens.len());
    let mut paths = Vec::with_capacity(tokens.len());
    for ((s, &tok), &anchor) in samples.unstack().iter().zip(tokens).zip(anchors) {
        let std = Trajectory::from_tensor(s, m.layout, ConditionToken { code: tok }, anchor)?;
        let traj = m.scaler.invert(&std)?;
        let path = lateral(&traj)?.points;
        if path.iter().flatten().any(|v| !v.is_finite()) {
            return Err(CoreError::NumericFailure(0).into());
        }
        trajectories.push(traj);
        paths.push(path);
    }
    Ok(Generated { tokens: tokens.to_vec(), anchors: anchors.to_vec(), samples, trajectories, paths })
}

/// Scaler over the `(lat, lon)` points of `paths`.
pub fn lateral_scaler(paths: &[Vec<[f64; 2]>]) -> Result<Scaler> {
    let flat: Vec<Vec<f64>> = paths.iter().map(|p| p.iter().flatten().copied().collect()).collect();
    Ok(Scaler::fit_rows(flat.iter().map(Vec::as_slice), 2, vec!["latitude".into(), "longitude".into()])?)
}

fn standardize_paths(paths: &[Vec<[f64; 2]>], scaler: &Scaler) -> Vec<Vec<[f64; 2]>> {
    paths
        .iter()
        .map(|p| {
            p.iter()
                .map(|q| {
                    let mut v = *q;
                    scaler.apply_values(&mut v);
                    v
                })
                .collect()
        })
        .collect()
}

/// Metric suite on lateral paths standardized by the test set's lateral scaler.
pub fn evaluate(
    generated: &[Vec<[f64; 2]>],
    real: &[Vec<[f64; 2]>],
    settings: &EvalSettings,
    seed: u64,
    protocol: Protocol,
) -> Result<EvalReport> {
    if generated.is_empty() || real.is_empty() {
        return Err(CoreError::EmptySet.into());
    }
    let scaler = lateral_scaler(real)?;
    let (g, r) = (standardize_paths(generated, &scaler), standardize_paths(real, &scaler));
    let gs = SampleSet::from_paths(&g, Provenance::Generated)?;
    let rs = SampleSet::from_paths(&r, Provenance::Real)?;
    let boot = derive_seed(seed, "bootstrap");
    let mut metrics = BTreeMap::new();
    for m in [PairMetric::EnergyDistance, PairMetric::Mmd] {
        metrics.insert(m.name().to_string(), bootstrap_summary(m, &gs, &rs, settings.n_boot, None, boot)?);
    }
    metrics.insert("dtw".into(), mean_min_dtw(&g, &r)?);
    let bbox = BBox::from_paths(&r)?;
    let hr = heatmap(&r, settings.heatmap_grid, bbox)?;
    let hg = heatmap(&g, settings.heatmap_grid, bbox)?;
    metrics.insert("kl".into(), MetricSummary::from_values("kl", vec![kl_div(&hr, &hg)?])?);
    metrics.insert("jsd".into(), MetricSummary::from_values("jsd", vec![jsd(&hr, &hg)?])?);

    let pca = pca_project(&[&rs, &gs], 2)?;
    let two = |set: &Vec<Vec<f64>>| set.iter().map(|c| [c[0], c[1]]).collect();
    let pca = PcaCoords { explained_ratio: pca.explained_ratio.clone(), real: two(&pca.coords[0]), generated: two(&pca.coords[1]) };
    let keep = settings.plot_paths;
    let paths = PlotPaths {
        real: real.iter().take(keep).cloned().collect(),
        generated: generated.iter().take(keep).cloned().collect(),
    };
    Ok(EvalReport { protocol, metrics, pca, paths })
}

struct OutputDirs {
    root: PathBuf,
    checkpoints: PathBuf,
    reports: PathBuf,
    plots: PathBuf,
}

impl OutputDirs {
    fn create(root: &Path) -> Result<Self> {
        let d = Self {
            root: root.to_path_buf(),
            checkpoints: root.join("checkpoints"),
            reports: root.join("reports"),
            plots: root.join("plots"),
        };
        for p in [&d.root, &d.checkpoints, &d.reports, &d.plots] {
            fs::create_dir_all(p).map_err(|e| LabError::io(p, e))?;
        }
        Ok(d)
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| LabError::io(path, e))
}

/// Overlay and PCA plots of one report, named after its label.
pub fn emit_plots(report: &EvalReport, dir: &Path, settings: &EvalSettings) -> Result<Vec<PathBuf>> {
    let name = match report.protocol.run.as_str() {
        "baseline" => "baseline".to_string(),
        _ => fraction_tag(report.protocol.split),
    };
    let title = format!("{} {}", report.protocol.model_family, report.label());
    let overlay = dir.join(format!("overlay_{name}.svg"));
    write(&overlay, &overlay_svg(&title, &report.paths.real, &report.paths.generated, settings.ewma_alpha)?)?;
    let pca = dir.join(format!("pca_{name}.svg"));
    write(&pca, &pca_svg(&format!("{title} PCA"), &report.pca.real, &report.pca.generated))?;
    Ok(vec![overlay, pca])
}

/// Significance tables as `table.txt` and `table.csv`.
pub fn write_tables(table: &SignificanceTable, dir: &Path) -> Result<()> {
    write(&dir.join("table.txt"), &table.to_text())?;
    write(&dir.join("table.csv"), &table.to_csv()?)
}

fn write_outputs(record: &ExperimentRecord, d: &OutputDirs, settings: &EvalSettings) -> Result<()> {
    for r in record.runs.iter().map(|r| &r.report).chain([&record.baseline]) {
        let name = if r.protocol.run == "baseline" { "baseline".into() } else { fraction_tag(r.protocol.split) };
        r.save(&d.reports.join(format!("{name}.json")))?;
        emit_plots(r, &d.plots, settings)?;
    }
    write_tables(&record.significance, &d.root)?;
    write(&d.root.join("config.toml"), &record.config.to_toml()?)?;
    let summary = serde_json::json!({
        "pretrained": record.pretrained,
        "baseline": record.baseline_checkpoint,
        "runs": record.runs.iter().map(|r| serde_json::json!({"split": r.split, "checkpoint": r.checkpoint})).collect::<Vec<_>>(),
        "significance": record.significance,
    });
    write(&d.root.join("record.json"), &(serde_json::to_string_pretty(&summary)? + "\n"))
}
