//! ℓ1-penalized quadratic problems: the sparse projection, the LASSO center and
//! the signed variants that appear in the limiting objectives.
//!
//! Every problem here has the form
//!
//! ```text
//! minimize  uᵀQu − 2uᵀb + λ [ Σ_{unsigned j} |u_j| + Σ_{signed j} s_j u_j ]
//! ```
//!
//! which is `n⁻¹‖Xθ − Xu‖² + λ‖u‖₁` up to a constant when `Q = C_n` and
//! `b = C_nθ`. Note the scaling: the soft-threshold level is `λ/2` per unit of
//! `Q_jj`, which is twice the `λ` of the `(2n)⁻¹‖·‖²` convention used by many
//! LASSO libraries.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gram::GramAccumulator;
use crate::rng::{self, Domain};
use crate::types::{Dataset, SparseDraw};

const SYMMETRY_TOL: f64 = 1e-12;
// Fresh recomputation of Qu to stop drift in the running product.
const REFRESH_EVERY: usize = 64;

/// How coordinate `j` enters the penalty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CoordPenalty {
    /// `λ|u_j|`
    Abs,
    /// `λ s_j u_j` with `s_j = ±1`.
    Signed(f64),
}

impl CoordPenalty {
    /// Maps a sign in {−1, 0, +1} to a penalty kind; 0 means an unsigned coordinate.
    pub fn from_sign(sign: i8) -> Self {
        match sign.signum() {
            0 => CoordPenalty::Abs,
            s => CoordPenalty::Signed(s as f64),
        }
    }
}

#[derive(Debug, Clone)]
pub struct QuadL1Problem<'a> {
    q: &'a DMatrix<f64>,
    b: DVector<f64>,
    penalty_scale: f64,
    kinds: Option<&'a [CoordPenalty]>,
}

impl<'a> QuadL1Problem<'a> {
    /// Unsigned problem; every coordinate carries `λ|u_j|`.
    pub fn new(q: &'a DMatrix<f64>, b: DVector<f64>, penalty_scale: f64) -> Result<Self> {
        let p = q.nrows();
        if q.ncols() != p || b.len() != p {
            return Err(Error::DimensionMismatch(format!(
                "quadratic term is {}x{}, linear term has length {}",
                q.nrows(),
                q.ncols(),
                b.len()
            )));
        }
        let scale = q.amax().max(1.0);
        for j in 0..p {
            for k in (j + 1)..p {
                if (q[(j, k)] - q[(k, j)]).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::InvalidConfig(format!(
                        "quadratic term is not symmetric at ({j}, {k})"
                    )));
                }
            }
        }
        if !(penalty_scale.is_finite() && penalty_scale >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "penalty scale must be nonnegative, got {penalty_scale}"
            )));
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("linear term".into()));
        }
        Ok(Self {
            q,
            b,
            penalty_scale,
            kinds: None,
        })
    }

    /// Skips the symmetry scan for hot loops over a matrix already validated once.
    pub(crate) fn new_unchecked(q: &'a DMatrix<f64>, b: DVector<f64>, penalty_scale: f64) -> Self {
        Self {
            q,
            b,
            penalty_scale,
            kinds: None,
        }
    }

    /// Replaces `|u_j|` by `s_j u_j` for the coordinates marked `Signed`.
    pub fn with_kinds(mut self, kinds: &'a [CoordPenalty]) -> Result<Self> {
        if kinds.len() != self.b.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} penalty kinds for {} coordinates",
                kinds.len(),
                self.b.len()
            )));
        }
        if let Some(j) = kinds
            .iter()
            .position(|k| matches!(k, CoordPenalty::Signed(s) if s.abs() != 1.0))
        {
            return Err(Error::InvalidConfig(format!("sign at coordinate {j} is not ±1")));
        }
        self.kinds = Some(kinds);
        Ok(self)
    }

    pub fn p(&self) -> usize {
        self.b.len()
    }

    pub fn q(&self) -> &DMatrix<f64> {
        self.q
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn penalty_scale(&self) -> f64 {
        self.penalty_scale
    }

    pub fn kind(&self, j: usize) -> CoordPenalty {
        self.kinds.map_or(CoordPenalty::Abs, |k| k[j])
    }

    pub fn objective(&self, u: &DVector<f64>) -> f64 {
        let penalty: f64 = u
            .iter()
            .enumerate()
            .map(|(j, v)| match self.kind(j) {
                CoordPenalty::Abs => v.abs(),
                CoordPenalty::Signed(s) => s * v,
            })
            .sum();
        u.dot(&(self.q * u)) - 2.0 * u.dot(&self.b) + self.penalty_scale * penalty
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_sweeps: usize,
    pub warm_start: Option<DVector<f64>>,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_sweeps: 10_000,
            warm_start: None,
        }
    }
}

impl SolverSettings {
    pub fn warm(&self, start: DVector<f64>) -> Self {
        Self {
            warm_start: Some(start),
            ..self.clone()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_sweeps == 0 {
            return Err(Error::InvalidConfig(format!(
                "solver needs tol > 0 and max_sweeps >= 1 (tol = {}, max_sweeps = {})",
                self.tol, self.max_sweeps
            )));
        }
        Ok(())
    }
}

fn soft_threshold(r: f64, t: f64) -> f64 {
    if r > t {
        r - t
    } else if r < -t {
        r + t
    } else {
        0.0
    }
}

fn mat_vec(q: &[f64], p: usize, u: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for (j, &uj) in u.iter().enumerate() {
        if uj != 0.0 {
            let col = &q[j * p..(j + 1) * p];
            for (o, c) in out.iter_mut().zip(col) {
                *o += uj * c;
            }
        }
    }
}

fn residual(problem: &QuadL1Problem<'_>, u: &[f64], qu: &[f64]) -> f64 {
    let lambda = problem.penalty_scale;
    let mut worst = 0.0f64;
    for j in 0..u.len() {
        let g = 2.0 * (qu[j] - problem.b[j]);
        let v = match problem.kind(j) {
            CoordPenalty::Signed(s) => (g + lambda * s).abs(),
            CoordPenalty::Abs if u[j] != 0.0 => (g + lambda * u[j].signum()).abs(),
            CoordPenalty::Abs => (g.abs() - lambda).max(0.0),
        };
        // NaN must count as a violation
        if !(v <= worst) {
            worst = v;
        }
    }
    worst
}

/// Maximal violation of the optimality conditions at `u`.
///
/// With `g = 2Qu − 2b`: on the support `g_j = −λ sign(u_j)` (or `−λ s_j` for
/// signed coordinates) and off the support `|g_j| ≤ λ`.
pub fn kkt_check(problem: &QuadL1Problem<'_>, u: &DVector<f64>) -> f64 {
    let p = problem.p();
    let mut qu = vec![0.0; p];
    mat_vec(problem.q.as_slice(), p, u.as_slice(), &mut qu);
    residual(problem, u.as_slice(), &qu)
}

/// Cyclic coordinate descent, stopped on the KKT residual.
pub fn solve_quad_l1(
    problem: &QuadL1Problem<'_>,
    settings: &SolverSettings,
) -> Result<(DVector<f64>, f64)> {
    settings.validate()?;
    let p = problem.p();
    let q = problem.q.as_slice();
    for j in 0..p {
        if !(q[j * p + j] > 0.0) {
            return Err(Error::DegenerateDiagonal(j));
        }
    }
    let mut u = match &settings.warm_start {
        Some(w) if w.len() == p => w.clone(),
        Some(w) => {
            return Err(Error::DimensionMismatch(format!(
                "warm start has length {}, problem has {p} coordinates",
                w.len()
            )))
        }
        None => DVector::zeros(p),
    };
    let half = 0.5 * problem.penalty_scale;
    let b = problem.b.as_slice();
    let mut qu = vec![0.0; p];
    mat_vec(q, p, u.as_slice(), &mut qu);

    let mut res = residual(problem, u.as_slice(), &qu);
    if res <= settings.tol {
        return Ok((u, res));
    }
    for sweep in 1..=settings.max_sweeps {
        let us = u.as_mut_slice();
        for j in 0..p {
            let col = &q[j * p..(j + 1) * p];
            let qjj = col[j];
            let r = b[j] - (qu[j] - qjj * us[j]);
            let next = match problem.kind(j) {
                CoordPenalty::Abs => soft_threshold(r, half) / qjj,
                CoordPenalty::Signed(s) => (r - half * s) / qjj,
            };
            let delta = next - us[j];
            if delta != 0.0 {
                for (o, c) in qu.iter_mut().zip(col) {
                    *o += delta * c;
                }
                us[j] = next;
            }
        }
        if sweep % REFRESH_EVERY == 0 {
            mat_vec(q, p, u.as_slice(), &mut qu);
        }
        res = residual(problem, u.as_slice(), &qu);
        if res <= settings.tol {
            mat_vec(q, p, u.as_slice(), &mut qu);
            res = residual(problem, u.as_slice(), &qu);
            if res <= settings.tol {
                return Ok((u, res));
            }
        }
    }
    Err(Error::NoConvergence {
        sweeps: settings.max_sweeps,
        residual: res,
    })
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("penalty must be positive, got {lambda}")))
    }
}

/// Sparse projection `ι(θ) = argmin_u n⁻¹‖Xθ − Xu‖² + λ_n‖u‖₁`.
pub fn project(
    dataset: &Dataset,
    theta: &DVector<f64>,
    lambda_n: f64,
    settings: &SolverSettings,
) -> Result<SparseDraw> {
    check_lambda(lambda_n)?;
    if theta.len() != dataset.p() {
        return Err(Error::DimensionMismatch(format!(
            "theta has length {}, dataset has p = {}",
            theta.len(),
            dataset.p()
        )));
    }
    let problem = QuadL1Problem::new_unchecked(dataset.gram(), dataset.gram() * theta, lambda_n);
    let (u, res) = solve_quad_l1(&problem, settings)?;
    Ok(SparseDraw::new(u, res))
}

/// LASSO estimate `argmin_u n⁻¹‖Y − Xu‖² + λ_n‖u‖₁`.
pub fn fit_lasso(dataset: &Dataset, lambda_n: f64, settings: &SolverSettings) -> Result<DVector<f64>> {
    check_lambda(lambda_n)?;
    let problem = QuadL1Problem::new_unchecked(dataset.gram(), dataset.xty().clone(), lambda_n);
    solve_quad_l1(&problem, settings).map(|(u, _)| u)
}

/// Smallest penalty at which the LASSO estimate is identically zero.
pub fn lambda_max(dataset: &Dataset) -> f64 {
    2.0 * dataset.xty().amax()
}

/// Log-spaced grid from `lambda_max` down to `ratio · lambda_max`, descending.
pub fn default_lambda_grid(dataset: &Dataset, len: usize, ratio: f64) -> Vec<f64> {
    let top = lambda_max(dataset).max(f64::MIN_POSITIVE);
    if len <= 1 {
        return vec![top];
    }
    let step = ratio.ln() / (len - 1) as f64;
    (0..len).map(|i| top * (step * i as f64).exp()).collect()
}

pub const DEFAULT_GRID_LEN: usize = 100;
pub const DEFAULT_GRID_RATIO: f64 = 1e-3;
pub const DEFAULT_FOLDS: usize = 10;

/// K-fold cross-validation of the LASSO penalty on squared prediction error.
///
/// Returns the grid value with the smallest mean held-out error; ties go to the
/// larger penalty.
pub fn cross_validate_lambda(
    dataset: &Dataset,
    grid: &[f64],
    folds: usize,
    seed: u64,
) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("lambda grid is empty".into()));
    }
    for &l in grid {
        check_lambda(l)?;
    }
    if folds < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 folds, got {folds}")));
    }
    let n = dataset.n();
    if n < folds {
        return Err(Error::InsufficientData(format!(
            "{n} observations cannot fill {folds} folds"
        )));
    }
    if grid.len() == 1 {
        return Ok(grid[0]);
    }

    let p = dataset.p();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, Domain::Folds, 0));
    let mut parts = vec![GramAccumulator::new(p); folds];
    let x = dataset.x();
    let mut row = vec![0.0; p];
    for (pos, &i) in order.iter().enumerate() {
        for (j, r) in row.iter_mut().enumerate() {
            *r = x[(i, j)];
        }
        parts[pos % folds].push_row(&row, dataset.y()[i])?;
    }
    let mut total = GramAccumulator::new(p);
    for part in &parts {
        total.merge(part)?;
    }

    // descending order so each fit warm-starts from a sparser neighbour
    let mut path: Vec<(usize, f64)> = grid.iter().copied().enumerate().collect();
    path.sort_by(|a, b| b.1.total_cmp(&a.1));

    let per_fold: Vec<Vec<f64>> = parts
        .par_iter()
        .map(|held_out| -> Result<Vec<f64>> {
            let train = total.without(held_out)?;
            let m = train.count() as f64;
            let q = train.sum_xtx() / m;
            let b = train.sum_xty() / m;
            let mut errors = vec![0.0; grid.len()];
            let mut settings = SolverSettings::default();
            for &(idx, lambda) in &path {
                let problem = QuadL1Problem::new_unchecked(&q, b.clone(), lambda);
                let (u, _) = solve_quad_l1(&problem, &settings)?;
                let sse = held_out.sum_yy() - 2.0 * u.dot(held_out.sum_xty())
                    + u.dot(&(held_out.sum_xtx() * &u));
                errors[idx] = sse / held_out.count() as f64;
                settings.warm_start = Some(u);
            }
            Ok(errors)
        })
        .collect::<Result<_>>()?;

    let mean_error = |idx: usize| per_fold.iter().map(|e| e[idx]).sum::<f64>() / folds as f64;
    let mut best = path[0];
    let mut best_err = mean_error(best.0);
    for &(idx, lambda) in &path[1..] {
        let err = mean_error(idx);
        // strict improvement beyond round-off; equal errors keep the larger penalty
        if err < best_err - 1e-12 * best_err.abs().max(1e-300) {
            best = (idx, lambda);
            best_err = err;
        }
    }
    Ok(best.1)
}
