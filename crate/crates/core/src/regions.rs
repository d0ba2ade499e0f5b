//! Credible regions built from projected posterior draws.

use std::collections::BTreeMap;

use log::warn;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{check_unit_open, CredibleRegion, Interval, NormSelector, SparseDraw};

/// Minkowski functional `‖x‖_K` for the supported choices of K.
pub fn minkowski_norm(x: &[f64], selector: &NormSelector) -> f64 {
    match selector {
        NormSelector::Max => x.iter().fold(0.0, |m, v| m.max(v.abs())),
        NormSelector::Euclidean => x.iter().map(|v| v * v).sum::<f64>().sqrt(),
        NormSelector::L1 => x.iter().map(|v| v.abs()).sum(),
        NormSelector::Component(j) => x[*j].abs(),
        NormSelector::Rectangle(set) => set.iter().fold(0.0, |m, &j| m.max(x[j].abs())),
    }
}

/// Sparse draws together with the LASSO center they are measured against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedSample {
    pub draws: Vec<SparseDraw>,
    pub center: DVector<f64>,
    pub n: usize,
    pub level: f64,
}

impl ProjectedSample {
    pub fn new(draws: Vec<SparseDraw>, center: DVector<f64>, n: usize, level: f64) -> Result<Self> {
        if draws.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "need at least 2 projected draws, got {}",
                draws.len()
            )));
        }
        if let Some(d) = draws.iter().find(|d| d.theta_star.len() != center.len()) {
            return Err(Error::DimensionMismatch(format!(
                "draw has length {}, center has length {}",
                d.theta_star.len(),
                center.len()
            )));
        }
        check_unit_open("level", level)?;
        Ok(Self {
            draws,
            center,
            n,
            level,
        })
    }

    pub fn p(&self) -> usize {
        self.center.len()
    }

    /// `‖√n(θ*_i − center)‖_K` for every draw, in draw order.
    pub fn distances(&self, selector: &NormSelector) -> Vec<f64> {
        let root_n = (self.n as f64).sqrt();
        let mut buf = vec![0.0; self.p()];
        self.draws
            .iter()
            .map(|d| {
                for (b, (t, c)) in buf.iter_mut().zip(d.theta_star.iter().zip(self.center.iter())) {
                    *b = root_n * (t - c);
                }
                minkowski_norm(&buf, selector)
            })
            .collect()
    }

    /// Radius at this sample's own level.
    pub fn radius(&self, selector: &NormSelector) -> f64 {
        radius_at(&self.distances(selector), self.level)
    }
}

/// Smallest observed distance `r` whose empirical mass `#{d_i ≤ r}/R` reaches `level`.
pub fn radius_at(distances: &[f64], level: f64) -> f64 {
    let mut sorted = distances.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted_radius(&sorted, level)
}

/// As [`radius_at`] for distances already sorted ascending.
pub fn sorted_radius(sorted: &[f64], level: f64) -> f64 {
    let r = sorted.len();
    // smallest k with k/R ≥ level; the relative slack absorbs round-off in level·R
    let needed = (level * r as f64 * (1.0 - 1e-12)).ceil() as usize;
    sorted[needed.clamp(1, r) - 1]
}

/// Empirical `level`-quantile of `‖√n(θ* − θ̂ᴸ)‖_K` over the sample.
pub fn radius_quantile(sample: &ProjectedSample, selector: &NormSelector) -> f64 {
    sample.radius(selector)
}

/// `[θ̂ᴸ_j − r/√n, θ̂ᴸ_j + r/√n]` with `r` the component radius at the sample level.
pub fn component_interval(sample: &ProjectedSample, j: usize) -> Interval {
    let r = sample.radius(&NormSelector::Component(j));
    interval_from_radius(sample.center[j], r, sample.n)
}

pub fn interval_from_radius(center: f64, radius: f64, n: usize) -> Interval {
    let half = radius / (n as f64).sqrt();
    Interval {
        lo: center - half,
        hi: center + half,
    }
}

/// Full region for a selector, including per-coordinate intervals where they exist.
pub fn credible_region(sample: &ProjectedSample, selector: &NormSelector) -> Result<CredibleRegion> {
    selector.validate(sample.p())?;
    let distances = sample.distances(selector);
    let radius = radius_at(&distances, sample.level);
    let at_center = distances.iter().filter(|d| **d == 0.0).count() as f64 / distances.len() as f64;
    let zero_radius = radius == 0.0 && at_center >= sample.level;
    if zero_radius {
        warn!(
            "{:.1}% of draws coincide with the center for {selector:?}; radius is 0",
            100.0 * at_center
        );
    }
    let intervals = match selector {
        NormSelector::Component(j) => Some(vec![(*j, interval_from_radius(sample.center[*j], radius, sample.n))]),
        NormSelector::Rectangle(set) => Some(
            set.iter()
                .map(|&j| (j, interval_from_radius(sample.center[j], radius, sample.n)))
                .collect(),
        ),
        _ => None,
    };
    Ok(CredibleRegion {
        selector: selector.clone(),
        center: sample.center.clone(),
        radius,
        level: sample.level,
        n: sample.n,
        intervals,
        zero_radius,
    })
}

/// Per-component level `(joint_level)^{1/k}` for a k-dimensional hyper-rectangle.
pub fn rectangle_levels(k: usize, joint_level: f64) -> f64 {
    joint_level.powf(1.0 / k.max(1) as f64)
}

/// Empirical frequency of each distinct support among the draws.
pub fn model_probabilities(sample: &ProjectedSample) -> BTreeMap<Vec<usize>, f64> {
    let mut counts: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    for d in &sample.draws {
        *counts.entry(d.support.clone()).or_default() += 1;
    }
    let total = sample.draws.len() as f64;
    counts
        .into_iter()
        .map(|(s, c)| (s, c as f64 / total))
        .collect()
}

/// Fraction of draws in which each coordinate is nonzero.
pub fn inclusion_probabilities(sample: &ProjectedSample) -> Vec<f64> {
    let mut counts = vec![0usize; sample.p()];
    for d in &sample.draws {
        for &j in &d.support {
            counts[j] += 1;
        }
    }
    let total = sample.draws.len() as f64;
    counts.into_iter().map(|c| c as f64 / total).collect()
}
