mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use projpost::io::*;
use projpost::sim::{Design, Scenario, SignalVariant};
use projpost::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

fn round_trip<T: Serialize + DeserializeOwned + PartialEq + std::fmt::Debug>(v: &T) {
    let text = serde_json::to_string(v).unwrap();
    let back: T = serde_json::from_str(&text).unwrap();
    assert_eq!(&back, v);
}

#[test]
fn chunked_gram_equals_direct() {
    let mut r = rng(8);
    let d = random_dataset(&mut r, 1000, 4, &[1.0, 0.0, 2.0, -1.0], 1.0);
    let mut whole = GramAccumulator::new(4);
    whole.ingest_chunk(d.x(), d.y()).unwrap();
    let mut merged = GramAccumulator::new(4);
    for start in (0..1000).step_by(137) {
        let len = 137.min(1000 - start);
        let mut part = GramAccumulator::new(4);
        part.ingest_chunk(
            &d.x().rows(start, len).into_owned(),
            &d.y().rows(start, len).into_owned(),
        )
        .unwrap();
        merged.merge(&part).unwrap();
    }
    assert_eq!(merged.count(), 1000);
    let scale = whole.sum_xtx().amax();
    assert!((merged.sum_xtx() - whole.sum_xtx()).amax() < 1e-12 * scale);
    assert!((merged.sum_xty() - whole.sum_xty()).amax() < 1e-12 * scale);
    let direct = d.x().transpose() * d.x() / 1000.0;
    assert!((d.gram() - &direct).amax() < 1e-12 * direct.amax());
}

#[test]
fn csv_reader_builds_same_dataset() {
    let mut r = rng(2);
    let d = random_dataset(&mut r, 9000, 3, &[1.0, -1.0, 0.5], 1.0);
    let mut text = String::from("a, y ,b,c\n");
    for i in 0..9000 {
        let x = d.x();
        text.push_str(&format!("{},{},{},{}\n", x[(i, 0)], d.y()[i], x[(i, 1)], x[(i, 2)]));
    }
    let loaded = read_csv(text.as_bytes(), "y", false).unwrap();
    assert_eq!(loaded.predictors, vec!["a", "b", "c"]);
    assert_eq!(loaded.dataset.x(), d.x());
    assert_eq!(loaded.dataset.y(), d.y());
    assert!((loaded.dataset.gram() - d.gram()).amax() < 1e-12 * d.gram().amax());
}

#[test]
fn csv_errors_name_the_line() {
    let ragged = "x1,x2,y\n1,2,3\n4,5\n";
    match read_csv(ragged.as_bytes(), "y", false) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
    let word = "x1,y\n1,2\n3,4\nfive,6\n";
    match read_csv(word.as_bytes(), "y", false) {
        Err(Error::Parse { line, message }) => {
            assert_eq!(line, 4);
            assert!(message.contains("five"));
        }
        other => panic!("{other:?}"),
    }
    assert!(read_csv("x1,z\n1,2\n".as_bytes(), "y", false).is_err());
    assert!(read_csv("y\n1\n".as_bytes(), "y", false).is_err());
    assert!(read_csv("x,y\n".as_bytes(), "y", false).is_err());
}

#[test]
fn standardized_columns() {
    let text = "x1,x2,y\n1,10,1\n2,20,2\n3,40,6\n";
    let loaded = read_csv(text.as_bytes(), "y", true).unwrap();
    let d = &loaded.dataset;
    for j in 0..2 {
        let col = d.x().column(j);
        assert!(col.sum().abs() < 1e-12);
        assert!((col.norm_squared() / 3.0 - 1.0).abs() < 1e-12);
    }
    assert!(d.y().sum().abs() < 1e-12);
    let st = loaded.standardization.unwrap();
    assert_eq!(st.response_mean, 3.0);
    assert!(read_csv("x1,x2,y\n1,5,1\n2,5,2\n".as_bytes(), "y", true).is_err());
}

#[test]
fn config_types_round_trip() {
    round_trip(&PriorConfig { a_n: 2.0, b1: 0.5, b2: 0.1 });
    round_trip(&FitConfig { lambda: Lambda::Fixed(0.3), target_coverage: Some(0.9), ..Default::default() });
    round_trip(&FitConfig::default());
    for sel in [
        NormSelector::Max,
        NormSelector::Euclidean,
        NormSelector::L1,
        NormSelector::Component(3),
        NormSelector::Rectangle(vec![0, 4]),
    ] {
        round_trip(&sel);
    }
    round_trip(&Scenario::five_signals(500, 20, Design::Ar1 { rho: 0.7 }, SignalVariant::Caption));
    round_trip(&projpost::limit::LimitCheckConfig::default());
    let single: Scenario = serde_json::from_str(
        r#"{"n": 100, "p": 2, "design": "independent", "theta0": [1, 0], "target_coverage": 0.9, "lambda": "auto"}"#,
    )
    .unwrap();
    assert_eq!(single.targets, vec![0.9]);
    assert_eq!(single.replications, 200);
}

#[test]
fn fit_report_round_trips() {
    let d = random_dataset(&mut rng(6), 100, 3, &[1.0, 0.0, -0.5], 1.0);
    let config = FitConfig { draws: 200, target_coverage: Some(0.95), seed: 4, ..Default::default() };
    let report = fit::fit(&d, &PriorConfig::default(), &config).unwrap();
    let back = fit::FitReport::from_json(&report.to_json().unwrap()).unwrap();
    assert_eq!(back, report);
    assert!(fit::FitReport::from_json(&report.to_json().unwrap().replace("\"schema\": 1", "\"schema\": 2")).is_err());
}

proptest! {
    #[test]
    fn dataset_round_trips(seed in any::<u64>(), n in 1usize..20, p in 1usize..4) {
        let mut r = rng(seed);
        let x = normal_matrix(&mut r, n, p) * 1e3;
        let y = normal_vector(&mut r, n) * 1e-3;
        let d = Dataset::new(x, y).unwrap();
        let text = serde_json::to_string(&d).unwrap();
        let back: Dataset = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, d);
    }

    #[test]
    fn draws_and_regions_round_trip(seed in any::<u64>(), p in 1usize..6) {
        let mut r = rng(seed);
        let theta = normal_vector(&mut r, p);
        let draw = PosteriorDraw { theta: theta.clone(), sigma: 0.7 };
        let text = serde_json::to_string(&draw).unwrap();
        prop_assert_eq!(serde_json::from_str::<PosteriorDraw>(&text).unwrap(), draw);
        let sparse = SparseDraw::new(theta.map(|v| if v.abs() < 0.5 { 0.0 } else { v }), 1e-13);
        let text = serde_json::to_string(&sparse).unwrap();
        prop_assert_eq!(serde_json::from_str::<SparseDraw>(&text).unwrap(), sparse);
        let region = CredibleRegion {
            selector: NormSelector::Rectangle((0..p).collect()),
            center: theta,
            radius: 1.25,
            level: 0.95,
            n: 40,
            intervals: Some(vec![(0, Interval { lo: -0.1, hi: 0.3 })]),
            zero_radius: false,
        };
        let text = serde_json::to_string(&region).unwrap();
        prop_assert_eq!(serde_json::from_str::<CredibleRegion>(&text).unwrap(), region);
    }

    #[test]
    fn lambda_round_trips(v in 1e-6f64..1e3) {
        round_trip(&Lambda::Fixed(v));
        round_trip(&Lambda::Auto);
    }
}

#[test]
fn invalid_data_rejected() {
    let x = DMatrix::from_row_slice(2, 1, &[1.0, f64::NAN]);
    assert!(Dataset::new(x, DVector::zeros(2)).is_err());
    assert!(Dataset::new(DMatrix::zeros(2, 1), DVector::zeros(3)).is_err());
}
