use proptest::prelude::*;
use trajlab_core::dataset::*;
use trajlab_core::kinematics::{to_kinematic, Anchor};

fn two_corridor_spec(noise_m: f64) -> ToyAirportSpec {
    ToyAirportSpec::new(
        "LSZH",
        Anchor::new(47.458, 8.548),
        true,
        vec![
            Corridor { runway: "14".into(), entry_bearing_deg: 200.0, turn_radius_km: 4.0, final_heading_deg: 140.0, weight: 0.7, noise_m },
            Corridor { runway: "28".into(), entry_bearing_deg: 330.0, turn_radius_km: 3.0, final_heading_deg: 280.0, weight: 0.3, noise_m },
        ],
    )
}

#[test]
fn noiseless_corridor_is_deterministic_and_ends_at_reference() {
    let mut spec = two_corridor_spec(0.0);
    spec.corridors.truncate(1);
    let flights = synth_toy_dataset(&spec, 5, 1).unwrap();
    for f in &flights {
        f.validate().unwrap();
        let last = f.points.last().unwrap();
        assert_eq!((last.latitude, last.longitude), (spec.reference.latitude, spec.reference.longitude));
        assert_eq!(f.runway.as_deref(), Some("14"));
        let a: Vec<_> = f.points.iter().map(|p| (p.latitude, p.longitude, p.altitude)).collect();
        let b: Vec<_> = flights[0].points.iter().map(|p| (p.latitude, p.longitude, p.altitude)).collect();
        assert_eq!(a, b);
    }
    assert_eq!(flights[0].flight_id, "LSZH00000");
}

#[test]
fn corridor_mixture_follows_weights() {
    let spec = two_corridor_spec(200.0);
    let flights = synth_toy_dataset(&spec, 400, 9).unwrap();
    let n14 = flights.iter().filter(|f| f.runway.as_deref() == Some("14")).count() as f64;
    let n28 = 400.0 - n14;
    let chi2 = (n14 - 280.0).powi(2) / 280.0 + (n28 - 120.0).powi(2) / 120.0;
    // 99.9% quantile of chi-square with one degree of freedom
    assert!(chi2 < 10.83, "chi2 {chi2}");
    assert_eq!(flights, synth_toy_dataset(&spec, 400, 9).unwrap());
}

#[test]
fn airport_token_without_runway_labels() {
    let mut spec = two_corridor_spec(50.0);
    spec.runway_labels = false;
    spec.airport = "EIDW".into();
    let flights = synth_toy_dataset(&spec, 3, 2).unwrap();
    assert!(flights.iter().all(|f| f.runway.is_none()));
    let mut vocab = Vocabulary::new();
    let t = vocab.fit(&flights[0].airport, None).unwrap();
    assert_eq!(vocab.decode(t).unwrap(), "EIDW");
    assert!(matches!(vocab.encode("EGLL", None), Err(trajlab_core::Error::UnknownLabel(_))));
}

#[test]
fn invalid_specs() {
    let mut spec = two_corridor_spec(0.0);
    spec.corridors.clear();
    assert!(matches!(synth_toy_dataset(&spec, 1, 0), Err(trajlab_core::Error::InvalidSpec(_))));
}

#[test]
fn kinematic_layout_invariants() {
    let flights = synth_toy_dataset(&two_corridor_spec(300.0), 10, 4).unwrap();
    for f in &flights {
        let geo = resample(f, 200).unwrap();
        assert_eq!(geo.steps, 200);
        let kin = to_kinematic(&geo, &resample_speed_track(f, 200).unwrap()).unwrap();
        for i in 0..kin.steps {
            let r = kin.row(i);
            assert!((r[0] * r[0] + r[1] * r[1] - 1.0).abs() < 1e-6);
            assert!(r[4] > 0.0);
        }
    }
}

#[test]
fn scaler_hand_case() {
    let traj = Trajectory {
        values: vec![1.0, 5.0, 0.0, 3.0, 5.0, 0.0],
        steps: 2,
        layout: Layout::Geographic,
        condition: ConditionToken::NULL,
        anchor: None,
        dt: 1.0,
    };
    let s = Scaler::fit(std::slice::from_ref(&traj)).unwrap();
    assert_eq!(s.mean, vec![2.0, 5.0, 0.0]);
    assert_eq!(s.std, vec![1.0, 1.0, 1.0]);
    let scaled = s.apply(&traj).unwrap();
    assert_eq!(scaled.column(0), vec![-1.0, 1.0]);
    assert_eq!(scaled.column(1), vec![0.0, 0.0]);
    assert!(matches!(Scaler::fit(&[]), Err(trajlab_core::Error::EmptySet)));
}

fn geo_trajectories() -> impl Strategy<Value = Vec<Trajectory>> {
    prop::collection::vec(prop::collection::vec(-1e4..1e4f64, 12), 1..6).prop_map(|rows| {
        rows.into_iter()
            .map(|values| Trajectory {
                values,
                steps: 4,
                layout: Layout::Geographic,
                condition: ConditionToken::NULL,
                anchor: None,
                dt: 1.0,
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn nested_fractions(n in 1usize..3000, seed in any::<u64>(), s1 in 0.0..1.0f64, s2 in 0.0..1.0f64) {
        let split = make_splits(n, SplitRatios::default(), seed).unwrap();
        let mut all: Vec<usize> = split.train.iter().chain(&split.val).chain(&split.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        let (lo, hi) = if s1 <= s2 { (s1, s2) } else { (s2, s1) };
        let small = split.take_fraction(lo);
        let large = split.take_fraction(hi);
        prop_assert!(small.len() <= large.len());
        prop_assert_eq!(&large[..small.len()], &small[..]);
        prop_assert_eq!(split.take_fraction(0.0).len(), 0);
        prop_assert_eq!(split.take_fraction(1.0), split.train.clone());
        prop_assert_eq!(split, make_splits(n, SplitRatios::default(), seed).unwrap());
    }

    #[test]
    fn scaler_round_trip(trajs in geo_trajectories()) {
        let s = Scaler::fit(&trajs).unwrap();
        let scaled: Vec<Trajectory> = trajs.iter().map(|t| s.apply(t).unwrap()).collect();
        for (t, sc) in trajs.iter().zip(&scaled) {
            let back = s.invert(sc).unwrap();
            for (a, b) in back.values.iter().zip(&t.values) {
                prop_assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
            }
        }
        let refit = Scaler::fit(&scaled).unwrap();
        for c in 0..3 {
            prop_assert!(refit.mean[c].abs() < 1e-7);
            let degenerate = s.std[c] == 1.0 && refit.std[c] == 1.0;
            prop_assert!(degenerate || (refit.std[c] - 1.0).abs() < 1e-7);
        }
    }

    #[test]
    fn vocabulary_is_bijective(labels in prop::collection::btree_set("[A-Z]{4}", 1..10)) {
        let mut vocab = Vocabulary::new();
        let tokens: Vec<ConditionToken> = labels.iter().map(|l| vocab.fit(l, None).unwrap()).collect();
        for (l, t) in labels.iter().zip(&tokens) {
            prop_assert_eq!(vocab.decode(*t).unwrap(), l.as_str());
            prop_assert_eq!(vocab.lookup(l).unwrap(), *t);
        }
    }
}
