//! Monte-Carlo sampler for the limiting objects `ξ`, `W*`, `T*` and numerical
//! checks of the coverage bounds they imply.
//!
//! `ξ = argmin_v vᵀCv − 2σ₀vᵀC^{1/2}Δ + λ₀ pen(v)` and
//! `T* = argmin_t tᵀCt − 2tᵀCW* + λ₀ pen(t)` with
//! `W* | Δ ~ N(σ₀C^{−1/2}Δ, σ₀²C⁻¹)`, where `pen` is `s_j v_j` on signal
//! coordinates and `|v_j|` on noise coordinates.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{psi, psi_zero, solve_gamma, CalibrationQuery};
use crate::error::{Error, Result};
use crate::projection::{solve_quad_l1, CoordPenalty, QuadL1Problem, SolverSettings};
use crate::regions::minkowski_norm;
use crate::rng::{self, Domain};
use crate::types::NormSelector;

const EIGEN_FLOOR: f64 = 1e-12;
const SNAP: f64 = 1e-12;
const INNER_CHUNK: usize = 1024;

#[derive(Debug, Clone)]
pub struct LimitSpec {
    c: DMatrix<f64>,
    sigma0: f64,
    lambda0: f64,
    signs: Vec<i8>,
    kinds: Vec<CoordPenalty>,
    c_sqrt: DMatrix<f64>,
    c_inv_sqrt: DMatrix<f64>,
}

impl LimitSpec {
    /// `signs[j]` is the sign of the true coefficient; 0 marks a noise coordinate.
    pub fn new(c: DMatrix<f64>, sigma0: f64, lambda0: f64, signs: Vec<i8>) -> Result<Self> {
        let p = c.nrows();
        if c.ncols() != p || signs.len() != p || p == 0 {
            return Err(Error::DimensionMismatch(format!(
                "limiting Gram is {}x{}, {} signs given",
                c.nrows(),
                c.ncols(),
                signs.len()
            )));
        }
        if (&c - c.transpose()).amax() > 1e-12 * c.amax().max(1.0) {
            return Err(Error::InvalidConfig("limiting Gram is not symmetric".into()));
        }
        if !(sigma0.is_finite() && sigma0 > 0.0) || !(lambda0.is_finite() && lambda0 >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "need sigma0 > 0 and lambda0 >= 0 (sigma0 = {sigma0}, lambda0 = {lambda0})"
            )));
        }
        if signs.iter().any(|s| s.abs() > 1) {
            return Err(Error::InvalidConfig("signs must lie in {-1, 0, 1}".into()));
        }
        let eigen = SymmetricEigen::new(c.clone());
        if eigen.eigenvalues.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidConfig("limiting Gram is not positive definite".into()));
        }
        let root = |f: fn(f64) -> f64| {
            let d = DMatrix::from_diagonal(&eigen.eigenvalues.map(|v| f(v.max(EIGEN_FLOOR))));
            &eigen.eigenvectors * d * eigen.eigenvectors.transpose()
        };
        let c_sqrt = root(f64::sqrt);
        let c_inv_sqrt = root(|v| v.sqrt().recip());
        let kinds = signs.iter().map(|&s| CoordPenalty::from_sign(s)).collect();
        Ok(Self {
            c,
            sigma0,
            lambda0,
            signs,
            kinds,
            c_sqrt,
            c_inv_sqrt,
        })
    }

    /// Identity Gram, unit error scale.
    pub fn orthogonal(lambda0: f64, signs: Vec<i8>) -> Result<Self> {
        let p = signs.len();
        Self::new(DMatrix::identity(p, p), 1.0, lambda0, signs)
    }

    pub fn p(&self) -> usize {
        self.signs.len()
    }

    pub fn s0(&self) -> usize {
        self.signs.iter().filter(|s| **s != 0).count()
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn sigma0(&self) -> f64 {
        self.sigma0
    }

    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn noise_coordinates(&self) -> Vec<usize> {
        (0..self.p()).filter(|&j| self.signs[j] == 0).collect()
    }

    fn check_len(&self, v: &DVector<f64>) -> Result<()> {
        if v.len() == self.p() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "vector has length {}, spec has p = {}",
                v.len(),
                self.p()
            )))
        }
    }

    fn solve(&self, b: DVector<f64>, warm: Option<DVector<f64>>) -> Result<DVector<f64>> {
        let problem = QuadL1Problem::new_unchecked(&self.c, b, self.lambda0).with_kinds(&self.kinds)?;
        let settings = SolverSettings {
            warm_start: warm,
            ..Default::default()
        };
        let (mut u, _) = solve_quad_l1(&problem, &settings)?;
        u.iter_mut().filter(|v| v.abs() < SNAP).for_each(|v| *v = 0.0);
        Ok(u)
    }

    /// `W* = σ₀C^{−1/2}(Δ + U)` with `U ~ N(0, I)`.
    fn w_star(&self, delta: &DVector<f64>, noise: &DVector<f64>) -> DVector<f64> {
        &self.c_inv_sqrt * (delta + noise) * self.sigma0
    }

    fn draw_normal(&self, rng: &mut ChaCha8Rng) -> DVector<f64> {
        DVector::from_fn(self.p(), |_, _| rng.sample::<f64, _>(StandardNormal))
    }
}

/// Limit of `√n(θ̂ᴸ − θ⁰)` evaluated at a given `Δ`.
pub fn sample_xi(spec: &LimitSpec, delta: &DVector<f64>) -> Result<DVector<f64>> {
    spec.check_len(delta)?;
    spec.solve(&spec.c_sqrt * delta * spec.sigma0, None)
}

/// One draw of `T*` given `Δ`; the conditional noise comes from `seed`.
pub fn sample_t_star(spec: &LimitSpec, delta: &DVector<f64>, seed: u64) -> Result<DVector<f64>> {
    spec.check_len(delta)?;
    let mut rng = rng::stream(seed, Domain::LimitInner, 0);
    let w = spec.w_star(delta, &spec.draw_normal(&mut rng));
    spec.solve(&spec.c * w, None)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageEstimate {
    pub estimate: f64,
    pub std_error: f64,
}

impl CoverageEstimate {
    fn from_count(hits: usize, total: usize) -> Self {
        let c = hits as f64 / total as f64;
        Self {
            estimate: c,
            std_error: (c * (1.0 - c) / total as f64).sqrt(),
        }
    }
}

/// `P(q(Δ) ≤ level)` with `q(Δ) = P(‖T* − ξ‖_K ≤ ‖ξ‖_K | Δ)`, the upper bound on
/// the limiting coverage of a level credible region.
pub fn limiting_coverage_mc(
    spec: &LimitSpec,
    selector: &NormSelector,
    level: f64,
    outer: usize,
    inner: usize,
    seed: u64,
) -> Result<CoverageEstimate> {
    let out = limiting_coverage_mc_multi(spec, &[(selector.clone(), level)], outer, inner, seed)?;
    Ok(out[0])
}

/// As [`limiting_coverage_mc`] for several `(selector, level)` pairs sharing the
/// same draws of `Δ` and `W*`.
pub fn limiting_coverage_mc_multi(
    spec: &LimitSpec,
    queries: &[(NormSelector, f64)],
    outer: usize,
    inner: usize,
    seed: u64,
) -> Result<Vec<CoverageEstimate>> {
    if outer < 100 || inner < 100 {
        return Err(Error::InvalidConfig(format!(
            "outer and inner sample sizes must be at least 100 (got {outer}, {inner})"
        )));
    }
    for (selector, level) in queries {
        selector.validate(spec.p())?;
        crate::types::check_unit_open("level", *level)?;
    }
    let hits: Vec<Vec<bool>> = (0..outer as u64)
        .into_par_iter()
        .map(|i| -> Result<Vec<bool>> {
            let mut rng = rng::stream(seed, Domain::LimitOuter, i);
            let delta = spec.draw_normal(&mut rng);
            let xi = sample_xi(spec, &delta)?;
            let xi_norms: Vec<f64> = queries
                .iter()
                .map(|(s, _)| minkowski_norm(xi.as_slice(), s))
                .collect();
            let mut inside = vec![0usize; queries.len()];
            let mut diff = vec![0.0; spec.p()];
            let mut warm = xi.clone();
            for _ in 0..inner {
                let noise = spec.draw_normal(&mut rng);
                let b = &spec.c_sqrt * (&delta + noise) * spec.sigma0;
                let t = spec.solve(b, Some(warm))?;
                for ((d, tv), xv) in diff.iter_mut().zip(t.iter()).zip(xi.iter()) {
                    *d = tv - xv;
                }
                for (k, (s, _)) in queries.iter().enumerate() {
                    if minkowski_norm(&diff, s) <= xi_norms[k] {
                        inside[k] += 1;
                    }
                }
                warm = t;
            }
            Ok(queries
                .iter()
                .zip(&inside)
                .map(|((_, level), &c)| c as f64 / inner as f64 <= *level)
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok((0..queries.len())
        .map(|k| CoverageEstimate::from_count(hits.iter().filter(|h| h[k]).count(), outer))
        .collect())
}

/// Fraction of `T*` draws given `Δ` whose noise coordinates are all exactly zero.
pub fn zero_mass_probability(spec: &LimitSpec, delta: &DVector<f64>, inner: usize, seed: u64) -> Result<CoverageEstimate> {
    spec.check_len(delta)?;
    let noise = spec.noise_coordinates();
    if noise.is_empty() {
        return Err(Error::InvalidConfig("spec has no noise coordinate".into()));
    }
    if inner == 0 {
        return Err(Error::InvalidConfig("inner sample size must be positive".into()));
    }
    let chunks = inner.div_ceil(INNER_CHUNK);
    let zeros: usize = (0..chunks)
        .into_par_iter()
        .map(|c| -> Result<usize> {
            let mut rng = rng::stream(seed, Domain::LimitInner, c as u64);
            let len = INNER_CHUNK.min(inner - c * INNER_CHUNK);
            let mut count = 0;
            for _ in 0..len {
                let w = spec.w_star(delta, &spec.draw_normal(&mut rng));
                let t = spec.solve(&spec.c * w, None)?;
                if noise.iter().all(|&j| t[j] == 0.0) {
                    count += 1;
                }
            }
            Ok(count)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum();
    Ok(CoverageEstimate::from_count(zeros, inner))
}

/// Grid of limiting-coverage checks against the analytic `ψ`/`ψ₀`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LimitCheckConfig {
    pub c: Option<Vec<Vec<f64>>>,
    pub sigma0: f64,
    pub signs: Vec<i8>,
    pub lambdas: Vec<f64>,
    pub targets: Vec<f64>,
    pub outer: usize,
    pub inner: usize,
    pub seed: u64,
}

impl Default for LimitCheckConfig {
    fn default() -> Self {
        Self {
            c: None,
            sigma0: 1.0,
            signs: vec![1, -1, 0],
            lambdas: vec![0.5, 1.0, 2.0],
            targets: vec![0.95],
            outer: 2000,
            inner: 2000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitCheckRow {
    pub lambda0: f64,
    pub target: f64,
    pub coordinate: usize,
    pub sign: i8,
    /// Calibrated credibility used for the coordinate.
    pub level: f64,
    pub estimate: f64,
    pub mc_se: f64,
    /// `ψ` for signal coordinates, `ψ₀` for noise coordinates, at the calibrated level.
    pub analytic: f64,
}

impl LimitCheckConfig {
    pub fn gram(&self) -> Result<DMatrix<f64>> {
        let p = self.signs.len();
        match &self.c {
            None => Ok(DMatrix::identity(p, p)),
            Some(rows) => {
                if rows.len() != p || rows.iter().any(|r| r.len() != p) {
                    return Err(Error::DimensionMismatch(format!(
                        "limiting Gram must be {p}x{p}"
                    )));
                }
                Ok(DMatrix::from_fn(p, p, |i, j| rows[i][j]))
            }
        }
    }
}

/// Componentwise limiting coverage at calibrated levels for every `(λ₀, target)`.
pub fn limit_check(config: &LimitCheckConfig) -> Result<Vec<LimitCheckRow>> {
    let c = config.gram()?;
    let mut rows = Vec::new();
    for &lambda0 in &config.lambdas {
        let spec = LimitSpec::new(c.clone(), config.sigma0, lambda0, config.signs.clone())?;
        for &target in &config.targets {
            let calibrated = (0..spec.p())
                .map(|j| {
                    solve_gamma(&CalibrationQuery {
                        lambda0,
                        target,
                        c_j: c[(j, j)],
                        sigma0: config.sigma0,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let queries: Vec<(NormSelector, f64)> = calibrated
                .iter()
                .enumerate()
                .map(|(j, r)| (NormSelector::Component(j), r.gamma_level))
                .collect();
            let estimates = limiting_coverage_mc_multi(&spec, &queries, config.outer, config.inner, config.seed)?;
            for (j, (est, cal)) in estimates.iter().zip(&calibrated).enumerate() {
                let sign = config.signs[j];
                let analytic = if sign == 0 {
                    psi_zero(cal.gamma, cal.effective_lambda)
                } else {
                    psi(cal.gamma, cal.effective_lambda)
                };
                rows.push(LimitCheckRow {
                    lambda0,
                    target,
                    coordinate: j,
                    sign,
                    level: cal.gamma_level,
                    estimate: est.estimate,
                    mc_se: est.std_error,
                    analytic,
                });
            }
        }
    }
    Ok(rows)
}

pub fn limit_check_csv(rows: &[LimitCheckRow]) -> String {
    let mut out = String::from("lambda0,target,coordinate,sign,level,estimate,mc_se,analytic\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.lambda0, r.target, r.coordinate, r.sign, r.level, r.estimate, r.mc_se, r.analytic
        ));
    }
    out
}
