mod common;

use std::fs;
use std::path::Path;

use trajlab::harness::{evaluate, sample_tensor, Lab};
use trajlab::report::Protocol;
use trajlab::LabError;
use trajlab_core::model::Family;
use trajlab_core::Error as CoreError;

fn lab(family: Family) -> Lab {
    Lab::new(common::tiny_config(family)).unwrap()
}

fn protocol(n: usize) -> Protocol {
    Protocol {
        run: "transfer".into(),
        split: 1.0,
        seed: 0,
        n,
        model_family: Family::Dm,
        test_set: String::new(),
        test_size: n,
        dtw_units: "standardized lateral".into(),
    }
}

#[test]
fn target_flights_share_a_reserved_token() {
    let lab = lab(Family::Dm);
    assert_eq!(lab.vocabulary.len(), 4, "NULL, two source runways and the target airport");
    assert!(lab.target.trajectories.iter().all(|t| t.condition == lab.target_token));
    assert!(lab.source.trajectories.iter().all(|t| t.condition != lab.target_token && t.condition.code != 0));
}

#[test]
fn pretraining_is_deterministic_and_learns() {
    let mut cfg = common::tiny_config(Family::Dm);
    cfg.epochs = 6;
    let a = Lab::new(cfg.clone()).unwrap().pretrain().unwrap();
    let b = Lab::new(cfg).unwrap().pretrain().unwrap();
    assert_eq!(a.content_hash().unwrap(), b.content_hash().unwrap());
    let losses = &a.manifest.losses;
    assert_eq!(losses.len(), 6);
    assert!(losses.last() < losses.first(), "{losses:?}");
}

#[test]
fn finetuning_records_lineage() {
    let lab = lab(Family::Fm);
    let pre = lab.pretrain().unwrap();
    let pre_hash = pre.content_hash().unwrap();

    let zero = lab.finetune(&pre, 0.0).unwrap();
    assert_eq!(zero.content_hash().unwrap(), pre_hash);

    let half = lab.finetune(&pre, 0.5).unwrap();
    assert_eq!(half.manifest.parent.as_deref(), Some(pre_hash.as_str()));
    assert_eq!(half.manifest.fraction, Some(0.5));
    assert!(half.manifest.adam_step > pre.manifest.adam_step);
    assert_ne!(half.params, pre.params);

    let base = lab.baseline().unwrap();
    assert_eq!(base.manifest.parent, None);
    assert_eq!(base.manifest.fraction, None);
}

#[test]
fn unconfigured_fraction_and_wrong_family_are_rejected() {
    let lab = lab(Family::Dm);
    let pre = lab.pretrain().unwrap();
    let err = lab.finetune(&pre, 0.3).unwrap_err();
    assert!(matches!(err, LabError::FractionNotConfigured(s) if s == 0.3));
    assert_eq!(err.exit_code(), 2);

    let fm = self::lab(Family::Fm).pretrain().unwrap();
    assert!(lab.finetune(&fm, 0.5).is_err());
}

#[test]
fn generation_is_condition_matched() {
    let lab = lab(Family::Dm);
    let ck = lab.pretrain().unwrap();
    let g = lab.generate_condition_matched(&ck, 5, 11).unwrap();
    assert_eq!(g.paths.len(), 5);
    assert!(g.tokens.iter().all(|&t| t == lab.target_token.code));
    assert!(g.anchors.iter().all(Option::is_some));
    for p in &g.paths {
        assert_eq!(p.len(), lab.config.sequence_length);
        assert!(p.iter().flatten().all(|v| v.is_finite()));
    }
    let again = lab.generate_condition_matched(&ck, 5, 11).unwrap();
    assert_eq!(again.paths, g.paths);

    let single = sample_tensor(&ck, &[lab.target_token.code], 1).unwrap();
    assert_eq!(single.shape(), &[1, lab.config.representation.layout().channels(), lab.config.sequence_length]);

    let err = sample_tensor(&ck, &[99], 1).unwrap_err();
    assert!(matches!(err, LabError::Core(CoreError::UnknownToken(99))));
    assert!(lab.generate_condition_matched(&ck, 0, 1).is_err());
}

#[test]
fn evaluating_the_test_set_against_itself() {
    let lab = lab(Family::Dm);
    let real = lab.target.test_lateral();
    let report = evaluate(&real, &real, &lab.config.eval, 5, protocol(real.len())).unwrap();
    assert_eq!(report.metrics["dtw"].mean, 0.0);
    assert!(report.metrics["jsd"].mean.abs() < 1e-12);
    assert!(report.metrics["kl"].mean.abs() < 1e-12);
    let shifted: Vec<Vec<[f64; 2]>> = real.iter().map(|p| p.iter().map(|q| [q[0] + 0.05, q[1]]).collect()).collect();
    let far = evaluate(&shifted, &real, &lab.config.eval, 5, protocol(real.len())).unwrap();
    for m in ["e_distance", "mmd", "dtw", "jsd"] {
        assert!(report.metrics[m].mean < far.metrics[m].mean, "{m}");
    }
    assert_eq!(report.metrics["dtw"].raw.len(), real.len());
    assert_eq!(report.pca.real.len(), real.len());
    assert!(report.paths.real.len() <= lab.config.eval.plot_paths);
}

#[test]
fn metrics_depend_only_on_lateral_paths() {
    // altitude, speed and timing changes leave the evaluated lateral paths untouched
    let lab = lab(Family::Dm);
    let real = lab.target.test_lateral();
    let shifted: Vec<Vec<[f64; 2]>> = real.iter().map(|p| p.iter().map(|q| [q[0] + 0.02, q[1]]).collect()).collect();
    let a = evaluate(&shifted, &real, &lab.config.eval, 5, protocol(real.len())).unwrap();
    let b = evaluate(&shifted, &real, &lab.config.eval, 5, protocol(real.len())).unwrap();
    assert_eq!(a, b);
    assert!(a.metrics["dtw"].mean > 0.0);

    let mut alt = lab.target.raw.clone();
    for f in &mut alt {
        for p in &mut f.points {
            p.altitude += 1000.0;
        }
    }
    let mut cfg = lab.config.clone();
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("alt.csv");
    trajlab::ingest::write_trajectories(&csv, &alt).unwrap();
    cfg.target = trajlab::config::DataSource::csv(&csv);
    let relab = Lab::new(cfg).unwrap();
    assert_eq!(relab.target.splits, lab.target.splits);
    for (x, y) in relab.target.test_lateral().iter().flatten().zip(real.iter().flatten()) {
        assert!((x[0] - y[0]).abs() < 1e-9 && (x[1] - y[1]).abs() < 1e-9);
    }
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for sub in ["reports", "plots"] {
        let mut names: Vec<_> = fs::read_dir(dir.join(sub)).unwrap().map(|e| e.unwrap().path()).collect();
        names.sort();
        for p in names {
            out.push((p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()));
        }
    }
    for f in ["table.txt", "table.csv", "record.json"] {
        out.push((f.into(), fs::read(dir.join(f)).unwrap()));
    }
    out
}

#[test]
fn experiment_outputs_are_reproducible() {
    let lab = lab(Family::Dm);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = lab.run_experiment(Some(a.path())).unwrap();
    let rb = lab.run_experiment(Some(b.path())).unwrap();
    assert_eq!(ra, rb);
    let (fa, fb) = (read_dir_bytes(a.path()), read_dir_bytes(b.path()));
    assert!(fa.iter().any(|(n, _)| n == "overlay_s0.50.svg"));
    assert!(fa.iter().any(|(n, _)| n == "baseline.json"));
    assert_eq!(fa, fb);
    assert_eq!(ra.significance.rows.len(), lab.config.fractions.len() + 1);
    assert!(a.path().join("checkpoints/pretrained.tgl").exists());
}

#[test]
fn latent_families_run_end_to_end() {
    for family in [Family::Ldm, Family::Lfm] {
        let record = lab(family).run_experiment(None).unwrap();
        assert_eq!(record.runs.len(), 3);
        assert!(record.runs.iter().all(|r| r.report.protocol.model_family == family));
        assert!(record.baseline.metrics["dtw"].mean.is_finite());
    }
}
