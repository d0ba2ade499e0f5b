mod common;

use common::*;
use nalgebra::DVector;
use proptest::prelude::*;
use projpost::regions::*;
use projpost::{NormSelector, SparseDraw};
use rand::Rng;

fn sample(seed: u64, count: usize, p: usize, sparsity: f64, level: f64) -> ProjectedSample {
    let mut r = rng(seed);
    let draws = (0..count)
        .map(|_| {
            let v = DVector::from_fn(p, |_, _| {
                if r.random::<f64>() < sparsity {
                    0.0
                } else {
                    r.random_range(-2.0..2.0)
                }
            });
            SparseDraw::new(v, 0.0)
        })
        .collect();
    ProjectedSample::new(draws, DVector::zeros(p), 25, level).unwrap()
}

fn selectors(p: usize) -> Vec<NormSelector> {
    vec![
        NormSelector::Max,
        NormSelector::Euclidean,
        NormSelector::L1,
        NormSelector::Component(p - 1),
        NormSelector::Rectangle((0..p).step_by(2).collect()),
    ]
}

#[test]
fn folded_normal_quantile() {
    let mut r = rng(77);
    let draws: Vec<SparseDraw> = (0..100_000)
        .map(|_| SparseDraw::new(normal_vector(&mut r, 1), 0.0))
        .collect();
    let s = ProjectedSample::new(draws, DVector::zeros(1), 1, 0.95).unwrap();
    let radius = s.radius(&NormSelector::Component(0));
    // density of |Z| at 1.96 is 2φ(1.96) ≈ 0.117, so the quantile s.e. is ≈ 0.0059
    assert!((radius - 1.959964).abs() < 0.02, "{radius}");
}

proptest! {
    #[test]
    fn radius_nondecreasing_in_level(seed in any::<u64>(), a in 0.01f64..0.99, b in 0.01f64..0.99) {
        let s = sample(seed, 200, 4, 0.4, 0.5);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        for sel in selectors(4) {
            let d = s.distances(&sel);
            prop_assert!(radius_at(&d, lo) <= radius_at(&d, hi));
        }
    }

    #[test]
    fn empirical_mass_brackets_level(seed in any::<u64>(), level in 0.01f64..0.99, count in 2usize..300) {
        let s = sample(seed, count, 3, 0.5, level);
        for sel in selectors(3) {
            let d = s.distances(&sel);
            let r = s.radius(&sel);
            let total = d.len() as f64;
            let within = d.iter().filter(|v| **v <= r).count() as f64 / total;
            let below = d.iter().filter(|v| **v < r).count() as f64 / total;
            prop_assert!(within >= level);
            prop_assert!(below < level);
            prop_assert!(d.contains(&r));
        }
    }

    #[test]
    fn model_probabilities_sum_to_one(seed in any::<u64>(), count in 2usize..500, sparsity in 0.0f64..1.0) {
        let s = sample(seed, count, 5, sparsity, 0.9);
        let probs = model_probabilities(&s);
        let total: f64 = probs.values().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        let incl = inclusion_probabilities(&s);
        for (j, v) in incl.iter().enumerate() {
            let from_models: f64 = probs.iter().filter(|(m, _)| m.contains(&j)).map(|(_, p)| p).sum();
            prop_assert!((v - from_models).abs() < 1e-12);
        }
    }

    #[test]
    fn rectangle_is_intersection_of_components(seed in any::<u64>(), r in 0.0f64..10.0) {
        let s = sample(seed, 50, 4, 0.3, 0.8);
        let set = vec![0, 2, 3];
        let rect = s.distances(&NormSelector::Rectangle(set.clone()));
        let comps: Vec<Vec<f64>> = set.iter().map(|&j| s.distances(&NormSelector::Component(j))).collect();
        for i in 0..rect.len() {
            let all = comps.iter().all(|c| c[i] <= r);
            prop_assert_eq!(rect[i] <= r, all);
        }
    }

    #[test]
    fn region_contains_matches_distance(seed in any::<u64>()) {
        let s = sample(seed, 80, 3, 0.3, 0.9);
        for sel in selectors(3) {
            let region = credible_region(&s, &sel).unwrap();
            let d = s.distances(&sel);
            for (draw, dist) in s.draws.iter().zip(&d) {
                prop_assert_eq!(region.contains(&draw.theta_star), *dist <= region.radius);
            }
        }
    }
}

#[test]
fn zero_radius_flag_for_mostly_sparse_component() {
    let s = sample(1, 400, 2, 0.97, 0.9);
    let region = credible_region(&s, &NormSelector::Component(0)).unwrap();
    assert!(region.zero_radius);
    assert_eq!(region.radius, 0.0);
    let iv = region.intervals.unwrap()[0].1;
    assert_eq!(iv.length(), 0.0);
    assert!(credible_region(&s, &NormSelector::Component(2)).is_err());
}
