use proptest::prelude::*;
use serde::Deserialize;
use trajlab_core::metrics::*;
use trajlab_core::rng::{normal, seeded};

fn set(rows: &[&[f64]]) -> SampleSet {
    SampleSet::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>(), Provenance::Real).unwrap()
}

/// Minimum cost over every monotone alignment, by exhaustive recursion.
fn brute_dtw(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    fn go(a: &[[f64; 2]], b: &[[f64; 2]], i: usize, j: usize, acc: f64, best: &mut f64) {
        let (dx, dy) = (a[i][0] - b[j][0], a[i][1] - b[j][1]);
        let acc = acc + (dx * dx + dy * dy).sqrt();
        if i + 1 == a.len() && j + 1 == b.len() {
            *best = best.min(acc);
            return;
        }
        if i + 1 < a.len() {
            go(a, b, i + 1, j, acc, best);
        }
        if j + 1 < b.len() {
            go(a, b, i, j + 1, acc, best);
        }
        if i + 1 < a.len() && j + 1 < b.len() {
            go(a, b, i + 1, j + 1, acc, best);
        }
    }
    let mut best = f64::INFINITY;
    go(a, b, 0, 0, 0.0, &mut best);
    best
}

#[test]
fn dtw_matches_exhaustive_enumeration() {
    let mut rng = seeded(7);
    for _ in 0..200 {
        let n = 1 + (normal(&mut rng).abs() * 3.0) as usize % 6;
        let m = 1 + (normal(&mut rng).abs() * 3.0) as usize % 6;
        let a: Vec<[f64; 2]> = (0..n).map(|_| [normal(&mut rng), normal(&mut rng)]).collect();
        let b: Vec<[f64; 2]> = (0..m).map(|_| [normal(&mut rng), normal(&mut rng)]).collect();
        let fast = dtw(&a, &b).unwrap();
        assert_eq!(fast, brute_dtw(&a, &b));
        assert_eq!(fast, dtw(&b, &a).unwrap());
    }
}

#[test]
fn energy_and_mmd_hand_cases() {
    assert!((energy_distance(&set(&[&[0.0]]), &set(&[&[1.0]])).unwrap() - 2.0).abs() < 1e-9);
    assert!((energy_distance(&set(&[&[0.0], &[2.0]]), &set(&[&[1.0]])).unwrap() - 1.0).abs() < 1e-9);
    let a = set(&[&[0.3, 1.0], &[2.0, -1.0], &[0.3, 1.0]]);
    let b = set(&[&[2.0, -1.0], &[0.3, 1.0], &[0.3, 1.0]]);
    assert!(energy_distance(&a, &b).unwrap().abs() < 1e-12);
    assert!(mmd(&a, &b, None).unwrap().abs() < 1e-12);

    let expect = 2.0 - 2.0 * (-0.5f64).exp();
    assert!((mmd(&set(&[&[0.0]]), &set(&[&[1.0]]), Some(1.0)).unwrap() - expect).abs() < 1e-9);
    assert!((expect - 0.786939).abs() < 1e-6);
    assert!(mmd(&set(&[&[0.0]]), &set(&[&[1.0]]), Some(1e6)).unwrap() < 1e-9);
    assert!(matches!(energy_distance(&set(&[&[0.0]]), &set(&[&[0.0, 1.0]])), Err(_)));
}

#[test]
fn u_statistic_excludes_self_pairs() {
    let a = set(&[&[0.0], &[2.0]]);
    let b = set(&[&[1.0], &[1.0]]);
    // cross mean 1, within-A mean 2 (single distinct pair), within-B 0
    assert!((energy_distance_with(&a, &b, Estimator::U).unwrap() - 0.0).abs() < 1e-15);
    assert!((energy_distance_with(&a, &b, Estimator::V).unwrap() - 1.0).abs() < 1e-15);
}

#[test]
fn median_heuristic_uses_pooled_distinct_pairs() {
    // pooled {0, 1, 3}: distances 1, 3, 2 -> median 2
    let a = set(&[&[0.0], &[1.0]]);
    let b = set(&[&[3.0]]);
    assert_eq!(median_pairwise_distance(&a, &b).unwrap(), 2.0);
    assert_eq!(mmd(&a, &b, None).unwrap(), mmd(&a, &b, Some(2.0)).unwrap());
}

fn square(points: &[[f64; 2]]) -> Vec<Vec<[f64; 2]>> {
    vec![points.to_vec()]
}

#[test]
fn heatmap_cases() {
    let bbox = BBox { lat_min: 0.0, lat_max: 1.0, lon_min: 0.0, lon_max: 1.0 };
    let h = heatmap(&square(&[[0.5, 0.5]]), 64, bbox).unwrap();
    assert!((h.cells.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!((h.cell(32, 32) - 1.0).abs() < 1e-5);

    let mut rng = seeded(3);
    let pts: Vec<[f64; 2]> = (0..10_000)
        .map(|_| {
            let u: f64 = rand::Rng::random(&mut rng);
            let v: f64 = rand::Rng::random(&mut rng);
            [u, v]
        })
        .collect();
    let h = heatmap(&square(&pts), 2, bbox).unwrap();
    let band = 3.0 * (0.25f64 * 0.75 / 10_000.0).sqrt();
    assert!(h.cells.iter().all(|c| (c - 0.25).abs() < band));

    let outside = heatmap(&square(&[[-5.0, 9.0]]), 4, bbox).unwrap();
    assert!((outside.cell(0, 3) - 1.0).abs() < 1e-6);
    assert!(matches!(
        heatmap(&square(&[[0.0, 0.0]]), 4, BBox { lat_min: 1.0, lat_max: 1.0, lon_min: 0.0, lon_max: 1.0 }),
        Err(trajlab_core::Error::DegenerateBBox)
    ));
}

#[test]
fn divergences() {
    let bbox = BBox { lat_min: 0.0, lat_max: 1.0, lon_min: 0.0, lon_max: 1.0 };
    let p = heatmap(&square(&[[0.1, 0.1], [0.2, 0.1]]), 8, bbox).unwrap();
    let q = heatmap(&square(&[[0.9, 0.9]]), 8, bbox).unwrap();
    assert_eq!(kl_div(&p, &p).unwrap(), 0.0);
    assert_eq!(jsd(&p, &p).unwrap(), 0.0);
    assert!((jsd(&p, &q).unwrap() - std::f64::consts::LN_2).abs() < 1e-4);
    assert_eq!(jsd(&p, &q).unwrap().to_bits(), jsd(&q, &p).unwrap().to_bits());
    let other = heatmap(&square(&[[0.9, 0.9]]), 4, bbox).unwrap();
    assert!(matches!(kl_div(&p, &other), Err(trajlab_core::Error::GridMismatch)));
}

#[derive(Deserialize)]
struct WelchCase {
    a: Vec<f64>,
    b: Vec<f64>,
    t: f64,
    df: f64,
    p: f64,
}

#[derive(Deserialize)]
struct WelchOracle {
    cases: Vec<WelchCase>,
}

#[test]
fn welch_against_high_precision_oracle() {
    let oracle: WelchOracle = serde_json::from_str(include_str!("data/welch_oracle.json")).unwrap();
    assert!(oracle.cases.len() >= 50);
    for c in &oracle.cases {
        let w = welch_t_test(&c.a, &c.b).unwrap();
        assert!((w.t - c.t).abs() < 1e-9, "t {} vs {}", w.t, c.t);
        assert!((w.df - c.df).abs() < 1e-8 * c.df.max(1.0), "df {} vs {}", w.df, c.df);
        assert!((w.p - c.p).abs() < 1e-8, "p {} vs {}", w.p, c.p);
        let s = welch_t_test(&c.b, &c.a).unwrap();
        assert_eq!(s.t, -w.t);
        assert_eq!(s.p.to_bits(), w.p.to_bits());
    }
}

#[test]
fn pca_rank_one_and_isometry() {
    let dir: Vec<f64> = (0..10).map(|i| (i as f64 + 1.0).sin()).collect();
    let rows: Vec<Vec<f64>> = (0..20).map(|k| dir.iter().map(|d| d * (k as f64 - 7.5)).collect()).collect();
    let s = SampleSet::from_rows(&rows, Provenance::Real).unwrap();
    let p = pca_project(&[&s], 2).unwrap();
    assert!((p.explained_ratio[0] - 1.0).abs() < 1e-9);
    assert!(p.rank_deficient);

    // planar set: an orthonormal pair of directions in d = 6
    let u = [1.0, 1.0, 0.0, 0.0, 1.0, 1.0].map(|v: f64| v / 2.0);
    let v = [1.0, -1.0, 1.0, -1.0, 0.0, 0.0].map(|v: f64| v / 2.0);
    let mut rng = seeded(11);
    let planar: Vec<Vec<f64>> = (0..30)
        .map(|_| {
            let (x, y) = (3.0 * normal(&mut rng), normal(&mut rng));
            (0..6).map(|i| x * u[i] + y * v[i]).collect()
        })
        .collect();
    let half = planar.len() / 2;
    let real = SampleSet::from_rows(&planar[..half], Provenance::Real).unwrap();
    let generated = SampleSet::from_rows(&planar[half..], Provenance::Generated).unwrap();
    let p = pca_project(&[&real, &generated], 2).unwrap();
    assert!(!p.rank_deficient);
    for a in &p.components {
        for b in &p.components {
            let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let expect = if std::ptr::eq(a, b) { 1.0 } else { 0.0 };
            assert!((d - expect).abs() < 1e-9);
        }
    }
    let coords: Vec<&Vec<f64>> = p.coords.iter().flatten().collect();
    for i in 0..planar.len() {
        for j in 0..planar.len() {
            let orig: f64 = planar[i].iter().zip(&planar[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let proj: f64 = coords[i].iter().zip(coords[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!((orig - proj).abs() < 1e-8);
        }
    }
}

#[test]
fn bootstrap_behaviour() {
    let mut rng = seeded(5);
    let rows: Vec<Vec<f64>> = (0..40).map(|_| vec![normal(&mut rng), normal(&mut rng)]).collect();
    let a = SampleSet::from_rows(&rows, Provenance::Real).unwrap();
    let one = bootstrap_summary(PairMetric::EnergyDistance, &a, &a, 1, None, 3).unwrap();
    assert_eq!(one.std, 0.0);
    let s1 = bootstrap_summary(PairMetric::Mmd, &a, &a, 20, None, 9).unwrap();
    let s2 = bootstrap_summary(PairMetric::Mmd, &a, &a, 20, None, 9).unwrap();
    assert_eq!(s1, s2);
    assert_eq!(s1.n, 20);
    let e = bootstrap_summary(PairMetric::EnergyDistance, &a, &a, 20, Some(40), 1).unwrap();
    assert!(e.mean >= 0.0);
    assert!(bootstrap_summary(PairMetric::Mmd, &a, &a, 20, Some(41), 1).is_err());
}

#[test]
fn mean_min_dtw_properties() {
    let paths: Vec<Vec<[f64; 2]>> = (0..5).map(|k| (0..7).map(|i| [i as f64, (k * i) as f64 * 0.1]).collect()).collect();
    let s = mean_min_dtw(&paths[..2], &paths).unwrap();
    assert_eq!(s.mean, 0.0);
    let mut rev = paths.clone();
    rev.reverse();
    let other: Vec<Vec<[f64; 2]>> = vec![(0..4).map(|i| [i as f64 * 2.0, 0.3]).collect()];
    assert_eq!(mean_min_dtw(&other, &paths).unwrap(), mean_min_dtw(&other, &rev).unwrap());
}

fn rows_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-3.0..3.0f64, 3), 1..8)
}

proptest! {
    #[test]
    fn pair_metrics_symmetric_non_negative(a in rows_strategy(), b in rows_strategy()) {
        let a = SampleSet::from_rows(&a, Provenance::Real).unwrap();
        let b = SampleSet::from_rows(&b, Provenance::Generated).unwrap();
        let e1 = energy_distance(&a, &b).unwrap();
        let e2 = energy_distance(&b, &a).unwrap();
        prop_assert!(e1 >= -1e-12 && (e1 - e2).abs() < 1e-12);
        let m1 = mmd(&a, &b, None).unwrap();
        let m2 = mmd(&b, &a, None).unwrap();
        prop_assert!(m1 >= -1e-12 && (m1 - m2).abs() < 1e-12);
        prop_assert!(energy_distance(&a, &a).unwrap().abs() < 1e-12);
        prop_assert!(mmd(&a, &a, None).unwrap().abs() < 1e-12);
    }

    #[test]
    fn divergence_bounds(p in prop::collection::vec((0.0..1.0f64, 0.0..1.0f64), 1..40),
                         q in prop::collection::vec((0.0..1.0f64, 0.0..1.0f64), 1..40)) {
        let bbox = BBox { lat_min: 0.0, lat_max: 1.0, lon_min: 0.0, lon_max: 1.0 };
        let hp = heatmap(&[p.iter().map(|&(a, b)| [a, b]).collect()], 8, bbox).unwrap();
        let hq = heatmap(&[q.iter().map(|&(a, b)| [a, b]).collect()], 8, bbox).unwrap();
        prop_assert!(kl_div(&hp, &hq).unwrap() >= -1e-12);
        let j = jsd(&hp, &hq).unwrap();
        prop_assert!(j >= -1e-12 && j <= std::f64::consts::LN_2 + 1e-12);
        prop_assert_eq!(j.to_bits(), jsd(&hq, &hp).unwrap().to_bits());
    }
}
