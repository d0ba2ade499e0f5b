//! Limiting coverage of component credible intervals and calibration of the
//! credibility level.
//!
//! For a coefficient whose predictor is asymptotically uncorrelated with the
//! rest, a `(1 − α)` credible interval has limiting coverage `ψ(α, λ')` when the
//! coefficient is nonzero and `ψ₀(α, λ')` when it is zero, with the effective
//! penalty `λ' = λ₀/(σ₀√c_j)`. [`solve_gamma`] inverts `ψ` to find the inflated
//! level `1 − γ` whose limiting coverage equals a requested target.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal::{cdf, sf, upper_quantile};
use crate::types::check_unit_open;

/// Penalties printed in the published calibration table.
pub const DEFAULT_TABLE_LAMBDAS: [f64; 37] = [
    0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85,
    0.9, 0.95, 1.0, 1.1, 1.2, 1.3, 1.4, 1.5, 1.6, 1.7, 1.8, 1.9, 2.0, 2.2, 2.4, 2.6, 2.8, 3.0, 3.5,
    4.0,
];

/// Target coverages printed in the published calibration table.
pub const DEFAULT_TABLE_TARGETS: [f64; 5] = [0.9, 0.925, 0.95, 0.975, 0.99];

/// `h₊(λ₀, ζ) = 2Φ(|ζ − λ₀/2|) − 1`.
pub fn h_plus(lambda0: f64, zeta: f64) -> f64 {
    1.0 - 2.0 * sf((zeta - 0.5 * lambda0).abs())
}

/// `h₋(λ₀, ζ) = h₊(λ₀, −ζ)`.
pub fn h_minus(lambda0: f64, zeta: f64) -> f64 {
    h_plus(lambda0, -zeta)
}

/// `1 − h₀(λ₀, ζ)`, evaluated through upper tails so that it stays accurate
/// when `h₀` is close to one.
fn h_zero_complement(lambda0: f64, zeta: f64) -> f64 {
    let b = 0.5 * lambda0;
    if zeta > b {
        sf(zeta - b) + sf(zeta + b)
    } else if zeta < -b {
        cdf(zeta + b) + cdf(zeta - b)
    } else {
        sf(zeta + b) + cdf(zeta - b)
    }
}

/// Conditional coverage probability for a zero coefficient.
///
/// With `b = λ₀/2`: `Φ(ζ−b) − Φ(−ζ−b)` for `ζ > b`, `Φ(−ζ+b) − Φ(ζ+b)` for
/// `ζ < −b` and `Φ(ζ+b) − Φ(ζ−b)` for `|ζ| ≤ b`.
pub fn h_zero(lambda0: f64, zeta: f64) -> f64 {
    1.0 - h_zero_complement(lambda0, zeta)
}

/// `ψ(α, λ₀) = Φ(λ₀/2 + z_{α/2}) − Φ(λ₀/2 − z_{α/2})`.
pub fn psi(alpha: f64, lambda0: f64) -> f64 {
    psi_from_z(upper_quantile(0.5 * alpha), lambda0)
}

fn psi_from_z(z: f64, lambda0: f64) -> f64 {
    let a = 0.5 * lambda0;
    1.0 - sf(a + z) - cdf(a - z)
}

// Bisection on a monotone predicate until the bracket stops shrinking.
fn bisect(mut lo: f64, mut hi: f64, below: impl Fn(f64) -> bool) -> f64 {
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if below(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `ψ₀(α, λ₀) = ∫ 1{h₀(λ₀, ζ) ≤ 1 − α} φ(ζ) dζ`.
///
/// `h₀` is even in ζ, decreasing on `[0, λ₀/2]` and increasing on `[λ₀/2, ∞)`,
/// so the set is `{r₁ ≤ |ζ| ≤ r₂}` with both boundaries found by bisection.
pub fn psi_zero(alpha: f64, lambda0: f64) -> f64 {
    if !(alpha > 0.0) {
        // γ underflows for very large penalties; h₀ ≤ 1 holds everywhere
        return 1.0;
    }
    let b = 0.5 * lambda0;
    // h₀ ≤ 1 − α  ⇔  1 − h₀ ≥ α
    let inside = |zeta: f64| h_zero_complement(lambda0, zeta) >= alpha;
    if !inside(b) {
        return 0.0;
    }
    let mut top = b + 1.0;
    while inside(top) {
        top = b + 2.0 * (top - b);
    }
    let r2 = bisect(b, top, inside);
    let r1 = if inside(0.0) {
        0.0
    } else {
        bisect(0.0, b, |z| !inside(z))
    };
    // 2(Φ(r₂) − Φ(r₁))
    2.0 * ((0.5 - sf(r2)) + (0.5 - cdf(r1)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationQuery {
    /// Limiting penalty `λ₀ = λ_n√n`.
    pub lambda0: f64,
    /// Intended asymptotic coverage `1 − α`.
    pub target: f64,
    /// Limiting Gram diagonal of the coefficient.
    pub c_j: f64,
    /// Error standard deviation.
    pub sigma0: f64,
}

impl CalibrationQuery {
    pub fn new(lambda0: f64, target: f64) -> Self {
        Self {
            lambda0,
            target,
            c_j: 1.0,
            sigma0: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda0.is_finite() && self.lambda0 >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "lambda0 must be finite and nonnegative, got {}",
                self.lambda0
            )));
        }
        check_unit_open("target coverage", self.target)?;
        if !(self.c_j.is_finite() && self.c_j > 0.0) || !(self.sigma0.is_finite() && self.sigma0 > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "c_j and sigma0 must be positive (c_j = {}, sigma0 = {})",
                self.c_j, self.sigma0
            )));
        }
        Ok(())
    }

    /// Penalty on the standardized scale, `λ₀/(σ₀√c_j)`.
    ///
    /// Rescaling the coefficient by `√c_j/σ₀` turns the limiting problem into one
    /// with unit Gram diagonal and unit error scale; the threshold `λ₀/(2c_j)` on
    /// the original scale becomes `λ₀/(2σ₀√c_j)` in standard deviations.
    pub fn effective_lambda(&self) -> f64 {
        self.lambda0 / (self.sigma0 * self.c_j.sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    /// Credibility `1 − γ` to request.
    pub gamma_level: f64,
    /// `γ` itself, kept separately to avoid cancellation near one.
    pub gamma: f64,
    pub effective_lambda: f64,
    /// Limiting coverage of a nonzero coefficient at `γ`.
    pub psi_at_gamma: f64,
    /// Limiting coverage of a zero coefficient at `γ`.
    pub psi0_at_gamma: f64,
}

/// Credibility level whose limiting coverage for a nonzero coefficient equals the target.
///
/// `ψ` is strictly increasing in `z_{γ/2}`, so the root is bracketed and bisected.
pub fn solve_gamma(query: &CalibrationQuery) -> Result<CalibrationResult> {
    query.validate()?;
    let lambda = query.effective_lambda();
    let target = query.target;
    let below = |z: f64| psi_from_z(z, lambda) < target;
    let mut hi = 1.0;
    while below(hi) {
        hi *= 2.0;
    }
    let z = bisect(0.0, hi, below);
    let gamma = 2.0 * sf(z);
    Ok(CalibrationResult {
        gamma_level: 1.0 - gamma,
        gamma,
        effective_lambda: lambda,
        psi_at_gamma: psi(gamma, lambda),
        psi0_at_gamma: psi_zero(gamma, lambda),
    })
}

/// Calibrated levels for every `(λ₀, target)` pair; rows follow `lambdas`.
pub fn calibration_table(lambdas: &[f64], targets: &[f64]) -> Result<Vec<Vec<f64>>> {
    if lambdas.is_empty() || targets.is_empty() {
        return Err(Error::InvalidConfig("calibration grid is empty".into()));
    }
    lambdas
        .iter()
        .map(|&l| {
            targets
                .iter()
                .map(|&t| solve_gamma(&CalibrationQuery::new(l, t)).map(|r| r.gamma_level))
                .collect()
        })
        .collect()
}

/// CSV with one row per penalty and one column per target, e.g.
///
/// ```text
/// lambda,0.9,0.925,0.95,0.975,0.99
/// 0.05,0.9001...,...
/// ```
///
/// `digits` rounds the calibrated levels; `None` prints full precision.
pub fn table_csv(lambdas: &[f64], targets: &[f64], digits: Option<usize>) -> Result<String> {
    let table = calibration_table(lambdas, targets)?;
    let mut out = String::from("lambda");
    for t in targets {
        out.push_str(&format!(",{t}"));
    }
    out.push('\n');
    for (l, row) in lambdas.iter().zip(&table) {
        out.push_str(&l.to_string());
        for v in row {
            match digits {
                Some(d) => out.push_str(&format!(",{v:.d$}")),
                None => out.push_str(&format!(",{v}")),
            }
        }
        out.push('\n');
    }
    Ok(out)
}
