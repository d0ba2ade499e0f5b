//! Unrestricted conjugate posterior of `(θ, σ)`.
//!
//! `θ | (Y, σ) ~ N(θ̂ᴿ, σ²(XᵀX + a_n I)⁻¹)` and
//! `σ⁻² | Y ~ Ga(b1 + n/2, b2 + ½ Yᵀ(I − X(XᵀX + a_n I)⁻¹Xᵀ)Y)`.
//! Draws use the Cholesky factor of the precision matrix, never its inverse.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Domain};
use crate::types::{Dataset, PosteriorDraw, PriorConfig};

// Pivots below this fraction of the largest diagonal entry mean the precision
// matrix is numerically singular.
const PIVOT_FLOOR: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorFactorization {
    /// `θ̂ᴿ = (XᵀX + a_n I)⁻¹XᵀY`.
    pub ridge_mean: DVector<f64>,
    /// Lower-triangular `L` with `LLᵀ = XᵀX + a_n I`.
    pub precision_chol: DMatrix<f64>,
    pub gamma_shape: f64,
    pub gamma_rate: f64,
}

pub fn factorize(dataset: &Dataset, prior: &PriorConfig) -> Result<PosteriorFactorization> {
    prior.validate()?;
    let n = dataset.n() as f64;
    let p = dataset.p();
    let precision = dataset.gram() * n + DMatrix::identity(p, p) * prior.a_n;
    let max_diag = precision.diagonal().max();
    let chol = precision.cholesky().ok_or(Error::SingularSystem)?;
    let l = chol.l();
    if l.diagonal().iter().any(|d| !(d * d > PIVOT_FLOOR * max_diag)) {
        return Err(Error::SingularSystem);
    }
    let xty = dataset.xty() * n;
    let ridge_mean = chol.solve(&xty);
    // Yᵀ(I − X(XᵀX + aI)⁻¹Xᵀ)Y = YᵀY − YᵀX θ̂ᴿ
    let quad = n * dataset.mean_square_response() - xty.dot(&ridge_mean);
    Ok(PosteriorFactorization {
        ridge_mean,
        precision_chol: l,
        gamma_shape: prior.b1 + n / 2.0,
        gamma_rate: prior.b2 + 0.5 * quad,
    })
}

impl PosteriorFactorization {
    pub fn p(&self) -> usize {
        self.ridge_mean.len()
    }

    /// Solves `Lᵀx = z` by back substitution.
    pub fn solve_upper(&self, z: &DVector<f64>) -> DVector<f64> {
        let l = &self.precision_chol;
        let p = self.p();
        let mut x = z.clone();
        for i in (0..p).rev() {
            let mut s = x[i];
            for k in (i + 1)..p {
                s -= l[(k, i)] * x[k];
            }
            x[i] = s / l[(i, i)];
        }
        x
    }

    fn gamma(&self) -> Result<Gamma<f64>> {
        if !(self.gamma_rate.is_finite() && self.gamma_rate > 0.0) {
            return Err(Error::DegenerateScale(self.gamma_rate));
        }
        Gamma::new(self.gamma_shape, 1.0 / self.gamma_rate)
            .map_err(|e| Error::InvalidConfig(format!("gamma posterior: {e}")))
    }

    /// Draw number `index` of the stream keyed by `seed`.
    pub fn draw(&self, seed: u64, index: u64) -> Result<PosteriorDraw> {
        let gamma = self.gamma()?;
        Ok(self.draw_with(&gamma, seed, index))
    }

    fn draw_with(&self, gamma: &Gamma<f64>, seed: u64, index: u64) -> PosteriorDraw {
        let mut rng = rng::stream(seed, Domain::Posterior, index);
        let tau: f64 = gamma.sample(&mut rng);
        let sigma = tau.sqrt().recip();
        let z = DVector::from_fn(self.p(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let theta = &self.ridge_mean + self.solve_upper(&z) * sigma;
        PosteriorDraw { theta, sigma }
    }
}

/// `count` independent posterior draws in canonical index order.
///
/// Draw `i` depends only on `(seed, i)`, so the output does not depend on the
/// number of worker threads.
pub fn sample_posterior(
    fact: &PosteriorFactorization,
    count: usize,
    seed: u64,
) -> Result<Vec<PosteriorDraw>> {
    let gamma = fact.gamma()?;
    Ok((0..count as u64)
        .into_par_iter()
        .map(|i| fact.draw_with(&gamma, seed, i))
        .collect())
}

/// `n⁻¹‖Y − Xθ̂ᴿ‖²`, the plug-in error variance used for calibration.
pub fn ridge_residual_variance(dataset: &Dataset, fact: &PosteriorFactorization) -> f64 {
    let m = &fact.ridge_mean;
    let fitted = m.dot(&(dataset.gram() * m));
    (dataset.mean_square_response() - 2.0 * m.dot(dataset.xty()) + fitted).max(0.0)
}
