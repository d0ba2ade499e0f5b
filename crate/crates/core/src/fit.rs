//! End-to-end pipeline: penalty selection, LASSO center, posterior sampling,
//! projection and calibrated component intervals.

use std::collections::BTreeMap;

use log::info;
use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{solve_gamma, CalibrationQuery, CalibrationResult};
use crate::error::{Error, Result};
use crate::io::Standardization;
use crate::posterior::{factorize, ridge_residual_variance, PosteriorFactorization};
use crate::projection::{
    cross_validate_lambda, default_lambda_grid, fit_lasso, project, SolverSettings, DEFAULT_FOLDS,
    DEFAULT_GRID_LEN, DEFAULT_GRID_RATIO,
};
use crate::regions::{
    inclusion_probabilities, interval_from_radius, model_probabilities, sorted_radius, ProjectedSample,
};
use crate::types::{Dataset, FitConfig, Interval, Lambda, NormSelector, PriorConfig, SparseDraw};

/// Draws per warm-started block. Fixed so results do not depend on the thread count.
pub const DRAW_BLOCK: usize = 64;

pub const SCHEMA_VERSION: u32 = 1;

/// Chooses `λ_n`, either as given or by cross-validation on the default grid.
pub fn select_lambda(dataset: &Dataset, lambda: Lambda, seed: u64) -> Result<f64> {
    match lambda {
        Lambda::Fixed(v) => Ok(v),
        Lambda::Auto => {
            let grid = default_lambda_grid(dataset, DEFAULT_GRID_LEN, DEFAULT_GRID_RATIO);
            cross_validate_lambda(dataset, &grid, DEFAULT_FOLDS.min(dataset.n()), seed)
        }
    }
}

/// `count` posterior draws mapped through the sparse projection.
///
/// Draws are processed in blocks of [`DRAW_BLOCK`]; inside a block each solve is
/// warm-started from the previous solution, the first one from `start`.
pub fn projected_draws(
    dataset: &Dataset,
    fact: &PosteriorFactorization,
    lambda_n: f64,
    count: usize,
    seed: u64,
    start: &DVector<f64>,
) -> Result<Vec<SparseDraw>> {
    let blocks = count.div_ceil(DRAW_BLOCK);
    let nested: Vec<Vec<SparseDraw>> = (0..blocks)
        .into_par_iter()
        .map(|b| -> Result<Vec<SparseDraw>> {
            let lo = b * DRAW_BLOCK;
            let hi = (lo + DRAW_BLOCK).min(count);
            let mut out = Vec::with_capacity(hi - lo);
            let mut warm = start.clone();
            for i in lo..hi {
                let draw = fact.draw(seed, i as u64)?;
                let sparse = project(dataset, &draw.theta, lambda_n, &SolverSettings::default().warm(warm))?;
                warm = sparse.theta_star.clone();
                out.push(sparse);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(nested.into_iter().flatten().collect())
}

/// Projected posterior sample together with the quantities needed for calibration.
#[derive(Debug, Clone)]
pub struct ProjectionFit {
    pub lambda_n: f64,
    pub lambda0: f64,
    pub cross_validated: bool,
    /// `√(n⁻¹‖Y − Xθ̂ᴿ‖²)`.
    pub sigma_hat: f64,
    pub gram_diagonal: Vec<f64>,
    pub sample: ProjectedSample,
    pub max_kkt_residual: f64,
    sorted: Vec<Vec<f64>>,
}

impl ProjectionFit {
    pub fn new(dataset: &Dataset, prior: &PriorConfig, lambda: Lambda, draws: usize, seed: u64) -> Result<Self> {
        prior.validate()?;
        let lambda_n = select_lambda(dataset, lambda, seed)?;
        let settings = SolverSettings::default();
        let center = fit_lasso(dataset, lambda_n, &settings)?;
        let fact = factorize(dataset, prior)?;
        let sigma_hat = ridge_residual_variance(dataset, &fact).sqrt();
        let draws = projected_draws(dataset, &fact, lambda_n, draws, seed, &center)?;
        let max_kkt_residual = draws.iter().fold(0.0, |m: f64, d| m.max(d.kkt_residual));
        let n = dataset.n();
        // placeholder level; intervals below use their own levels
        let sample = ProjectedSample::new(draws, center, n, 0.5)?;
        let sorted = (0..dataset.p())
            .map(|j| {
                let mut d = sample.distances(&NormSelector::Component(j));
                d.sort_by(f64::total_cmp);
                d
            })
            .collect();
        Ok(Self {
            lambda_n,
            lambda0: lambda_n * (n as f64).sqrt(),
            cross_validated: matches!(lambda, Lambda::Auto),
            sigma_hat,
            gram_diagonal: dataset.gram().diagonal().iter().copied().collect(),
            sample,
            max_kkt_residual,
            sorted,
        })
    }

    pub fn p(&self) -> usize {
        self.gram_diagonal.len()
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.sample.center
    }

    /// Per-coefficient calibration for a target coverage, using `c_j` from the Gram
    /// diagonal and `σ̂` from the ridge residuals.
    pub fn calibrate(&self, target: f64) -> Result<Vec<CalibrationResult>> {
        if !(self.sigma_hat > 0.0) {
            return Err(Error::DegenerateScale(self.sigma_hat));
        }
        self.gram_diagonal
            .iter()
            .map(|&c_j| {
                if !(c_j > 0.0) {
                    return Err(Error::InvalidConfig(
                        "cannot calibrate a coefficient whose predictor is identically zero".into(),
                    ));
                }
                solve_gamma(&CalibrationQuery {
                    lambda0: self.lambda0,
                    target,
                    c_j,
                    sigma0: self.sigma_hat,
                })
            })
            .collect()
    }

    /// Radius of the component region for coefficient `j` at `level`.
    pub fn component_radius(&self, j: usize, level: f64) -> f64 {
        sorted_radius(&self.sorted[j], level)
    }

    pub fn component_interval(&self, j: usize, level: f64) -> Interval {
        interval_from_radius(self.sample.center[j], self.component_radius(j, level), self.sample.n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSummary {
    pub index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// LASSO estimate.
    pub center: f64,
    /// Credibility level used for this coefficient.
    pub level: f64,
    pub radius: f64,
    pub interval: Interval,
    pub inclusion_probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelProbability {
    pub support: Vec<usize>,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub max_kkt_residual: f64,
    pub sigma_hat: f64,
}

/// Everything a fit reports; serialized as the JSON output of the `fit` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub schema: u32,
    pub n: usize,
    pub p: usize,
    pub seed: u64,
    pub draws: usize,
    pub prior: PriorConfig,
    pub lambda_n: f64,
    pub lambda0: f64,
    pub cross_validated: bool,
    pub target_coverage: Option<f64>,
    /// Level for a unit-scale coefficient: the requested level, or the calibrated
    /// one when a target is set. Coefficients carry the level actually used.
    pub level: f64,
    pub coefficients: Vec<CoefficientSummary>,
    /// Distinct supports of the projected draws, most frequent first.
    pub model_probabilities: Vec<ModelProbability>,
    pub diagnostics: Diagnostics,
    /// Present when predictors were standardized on input; coefficients are then
    /// on the standardized scale.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standardization: Option<Standardization>,
}

impl FitReport {
    pub fn with_names(mut self, names: &[String]) -> Result<Self> {
        if names.len() != self.p {
            return Err(Error::DimensionMismatch(format!(
                "{} names for {} coefficients",
                names.len(),
                self.p
            )));
        }
        for (c, name) in self.coefficients.iter_mut().zip(names) {
            c.name = Some(name.clone());
        }
        Ok(self)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: Self = serde_json::from_str(text)?;
        if report.schema != SCHEMA_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported report schema {}",
                report.schema
            )));
        }
        Ok(report)
    }
}

/// Runs the full pipeline on a dataset.
pub fn fit(dataset: &Dataset, prior: &PriorConfig, config: &FitConfig) -> Result<FitReport> {
    config.validate()?;
    let pf = ProjectionFit::new(dataset, prior, config.lambda, config.draws, config.seed)?;
    let (level, levels) = match config.target_coverage {
        Some(target) => {
            let reference = solve_gamma(&CalibrationQuery::new(pf.lambda0, target))?.gamma_level;
            let levels = pf.calibrate(target)?.iter().map(|r| r.gamma_level).collect();
            (reference, levels)
        }
        None => (config.level, vec![config.level; pf.p()]),
    };
    let inclusion = inclusion_probabilities(&pf.sample);
    let coefficients = levels
        .iter()
        .enumerate()
        .map(|(j, &lv)| CoefficientSummary {
            index: j,
            name: None,
            center: pf.center()[j],
            level: lv,
            radius: pf.component_radius(j, lv),
            interval: pf.component_interval(j, lv),
            inclusion_probability: inclusion[j],
        })
        .collect();
    let model_probabilities = sorted_models(model_probabilities(&pf.sample));
    info!(
        "seed {} lambda_n {:.6e} lambda0 {:.6} level {:.6} max KKT residual {:.3e}",
        config.seed, pf.lambda_n, pf.lambda0, level, pf.max_kkt_residual
    );
    Ok(FitReport {
        schema: SCHEMA_VERSION,
        n: dataset.n(),
        p: dataset.p(),
        seed: config.seed,
        draws: config.draws,
        prior: *prior,
        lambda_n: pf.lambda_n,
        lambda0: pf.lambda0,
        cross_validated: pf.cross_validated,
        target_coverage: config.target_coverage,
        level,
        coefficients,
        model_probabilities,
        diagnostics: Diagnostics {
            max_kkt_residual: pf.max_kkt_residual,
            sigma_hat: pf.sigma_hat,
        },
        standardization: None,
    })
}

fn sorted_models(map: BTreeMap<Vec<usize>, f64>) -> Vec<ModelProbability> {
    let mut out: Vec<ModelProbability> = map
        .into_iter()
        .map(|(support, probability)| ModelProbability { support, probability })
        .collect();
    // stable sort keeps the lexicographic order among equal frequencies
    out.sort_by(|a, b| b.probability.total_cmp(&a.probability));
    out
}
