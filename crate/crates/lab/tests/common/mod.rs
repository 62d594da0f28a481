#![allow(dead_code)]

use trajlab::config::{DataSource, RunConfig};
use trajlab_core::dataset::{Corridor, ToyAirportSpec};
use trajlab_core::kinematics::Anchor;
use trajlab_core::model::Family;

fn corridor(runway: &str, entry: f64, final_heading: f64) -> Corridor {
    Corridor {
        runway: runway.into(),
        entry_bearing_deg: entry,
        turn_radius_km: 4.0,
        final_heading_deg: final_heading,
        weight: 1.0,
        noise_m: 300.0,
    }
}

pub fn source_spec() -> ToyAirportSpec {
    let reference = Anchor { latitude: 47.4647, longitude: 8.5492 };
    ToyAirportSpec::new("LSZH", reference, true, vec![corridor("14", 80.0, 140.0), corridor("28", 220.0, 280.0)])
}

pub fn target_spec() -> ToyAirportSpec {
    let reference = Anchor { latitude: 53.4213, longitude: -6.2701 };
    ToyAirportSpec::new("EIDW", reference, false, vec![corridor("10", 170.0, 100.0), corridor("28", 350.0, 280.0)])
}

/// A configuration small enough to train in a few seconds.
pub fn tiny_config(family: Family) -> RunConfig {
    let mut cfg = RunConfig::new(family, DataSource::toy(source_spec(), 40), DataSource::toy(target_spec(), 40));
    cfg.fractions = vec![0.0, 0.5, 1.0];
    cfg.epochs = 2;
    cfg.batch_size = 8;
    cfg.n_generate = 8;
    cfg.seed = 3;
    cfg.sequence_length = 16;
    cfg.network.base_channels = 8;
    cfg.network.levels = 1;
    cfg.network.time_embed_dim = 16;
    cfg.network.cond_embed_dim = 8;
    cfg.schedule.steps = 20;
    cfg.flow.steps = 8;
    cfg.vae.latent_dim = 4;
    cfg.vae.base_channels = 8;
    cfg.vae.levels = 1;
    cfg.eval.n_boot = 4;
    cfg.eval.heatmap_grid = 16;
    cfg.eval.plot_paths = 5;
    cfg
}
