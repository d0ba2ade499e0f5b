mod common;

use nalgebra::{DMatrix, DVector};
use projpost::calibration::*;
use projpost::limit::*;
use projpost::NormSelector;

// P(|T*_j − ξ_j| ≤ |ξ_j| | Δ) from `draws` independent T* draws.
fn conditional_coverage(spec: &LimitSpec, delta: &DVector<f64>, j: usize, draws: u64) -> f64 {
    let xi = sample_xi(spec, delta).unwrap();
    let hits = (0..draws)
        .filter(|&s| {
            let t = sample_t_star(spec, delta, 10_000 + s).unwrap();
            (t[j] - xi[j]).abs() <= xi[j].abs()
        })
        .count();
    hits as f64 / draws as f64
}

#[test]
fn conditional_coverage_matches_h_functions() {
    let lambda = 1.0;
    let spec = LimitSpec::orthogonal(lambda, vec![1, -1, 0]).unwrap();
    let draws = 4000;
    for delta in [
        DVector::from_vec(vec![1.3, -0.2, 0.1]),
        DVector::from_vec(vec![-0.4, 0.9, 2.0]),
        DVector::from_vec(vec![0.5, 0.5, -0.7]),
    ] {
        let expected = [
            h_plus(lambda, delta[0]),
            h_minus(lambda, delta[1]),
            h_zero(lambda, delta[2]),
        ];
        for (j, &h) in expected.iter().enumerate() {
            let q = conditional_coverage(&spec, &delta, j, draws);
            let se = (h * (1.0 - h) / draws as f64).sqrt().max(1e-3);
            assert!((q - h).abs() < 3.0 * se, "Δ {delta:?} coord {j}: {q} vs {h}");
        }
    }
}

#[test]
fn zero_mass_positive_for_noise_specs() {
    let c = DMatrix::from_row_slice(3, 3, &[1.0, 0.4, 0.1, 0.4, 1.0, 0.3, 0.1, 0.3, 1.0]);
    let specs = [
        LimitSpec::orthogonal(0.5, vec![1, 0]).unwrap(),
        LimitSpec::orthogonal(2.0, vec![0, 0, -1]).unwrap(),
        LimitSpec::new(c, 1.5, 1.0, vec![1, -1, 0]).unwrap(),
    ];
    for (k, spec) in specs.iter().enumerate() {
        for delta in [DVector::zeros(spec.p()), DVector::from_element(spec.p(), 0.8)] {
            let est = zero_mass_probability(spec, &delta, 10_000, k as u64).unwrap();
            assert!(est.estimate > 0.0, "spec {k}");
        }
    }
    let none = LimitSpec::orthogonal(1.0, vec![1, -1]).unwrap();
    assert!(zero_mass_probability(&none, &DVector::zeros(2), 100, 0).is_err());
}

#[test]
fn zero_mass_matches_closed_form_at_zero_signal() {
    // T*_j = 0 iff |U_j| ≤ λ₀/2
    let spec = LimitSpec::orthogonal(1.0, vec![0]).unwrap();
    let est = zero_mass_probability(&spec, &DVector::zeros(1), 20_000, 3).unwrap();
    let exact = 2.0 * common::phi_cdf(0.5) - 1.0;
    assert!((est.estimate - exact).abs() < 3.0 * est.std_error);
}

// The calibration must act through λ₀/(σ₀√c_j): with C = 4I the calibrated
// levels reach the target, while levels computed from λ₀√c_j/σ₀ overshoot it.
#[test]
fn non_unit_gram_uses_standardized_penalty() {
    let config = LimitCheckConfig {
        c: Some(vec![vec![4.0, 0.0, 0.0], vec![0.0, 4.0, 0.0], vec![0.0, 0.0, 4.0]]),
        sigma0: 1.0,
        lambdas: vec![2.0],
        outer: 2000,
        inner: 1000,
        seed: 17,
        ..Default::default()
    };
    let rows = limit_check(&config).unwrap();
    for r in rows.iter().filter(|r| r.sign != 0) {
        let se = (0.95f64 * 0.05 / 2000.0).sqrt();
        assert!((r.estimate - 0.95).abs() < 3.0 * se, "{r:?}");
    }

    let spec = LimitSpec::new(DMatrix::identity(3, 3) * 4.0, 1.0, 2.0, vec![1, -1, 0]).unwrap();
    let wrong = solve_gamma(&CalibrationQuery::new(2.0 * 2.0, 0.95)).unwrap().gamma_level;
    let est = limiting_coverage_mc(&spec, &NormSelector::Component(0), wrong, 2000, 1000, 17).unwrap();
    assert!(est.estimate - 0.95 > 5.0 * est.std_error.max(1e-3), "{est:?}");
}

#[test]
fn error_scale_enters_like_inverse_gram_root() {
    let config = LimitCheckConfig {
        sigma0: 2.0,
        lambdas: vec![2.0],
        outer: 2000,
        inner: 1000,
        seed: 5,
        ..Default::default()
    };
    for r in limit_check(&config).unwrap() {
        let v = r.analytic;
        let se = (v * (1.0 - v) / 2000.0).sqrt().max(1e-3);
        assert!((r.estimate - v).abs() < 3.0 * se, "{r:?}");
    }
}

#[test]
fn estimates_are_thread_count_free() {
    let spec = LimitSpec::orthogonal(1.0, vec![1, 0]).unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                let a = limiting_coverage_mc(&spec, &NormSelector::Max, 0.9, 200, 200, 4).unwrap();
                let b = zero_mass_probability(&spec, &DVector::zeros(2), 5000, 4).unwrap();
                (a, b)
            })
    };
    assert_eq!(run(1), run(3));
}
