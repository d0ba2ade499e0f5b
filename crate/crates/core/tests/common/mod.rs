//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use projpost::projection::CoordPenalty;
use projpost::Dataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

pub fn normal_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// `AᵀA/p + 0.1 I`, symmetrized exactly.
pub fn random_spd(rng: &mut ChaCha8Rng, p: usize) -> DMatrix<f64> {
    let a = normal_matrix(rng, p + 2, p);
    let q = a.transpose() * &a / p as f64 + DMatrix::identity(p, p) * 0.1;
    (&q + q.transpose()) * 0.5
}

pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize, p: usize, theta: &[f64], noise: f64) -> Dataset {
    let x = normal_matrix(rng, n, p);
    let t = DVector::from_column_slice(theta);
    let y = &x * t + normal_vector(rng, n) * noise;
    Dataset::new(x, y).unwrap()
}

/// Normal CDF through `erfc`, separate from the crate's own routine.
pub fn phi_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

pub fn phi_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `uᵀQu − 2uᵀb + λ·pen(u)`.
pub fn objective(q: &DMatrix<f64>, b: &DVector<f64>, lambda: f64, kinds: &[CoordPenalty], u: &DVector<f64>) -> f64 {
    let mut pen = 0.0;
    for (j, k) in kinds.iter().enumerate() {
        pen += match k {
            CoordPenalty::Abs => u[j].abs(),
            CoordPenalty::Signed(s) => s * u[j],
        };
    }
    u.dot(&(q * u)) - 2.0 * u.dot(b) + lambda * pen
}

/// Exact minimizer by enumerating every sign pattern: unsigned coordinates
/// are −, 0 or +, signed coordinates are 0 or free. Each pattern fixes the
/// subgradient, leaving a linear system on the active set.
pub fn enumerate_min(q: &DMatrix<f64>, b: &DVector<f64>, lambda: f64, kinds: &[CoordPenalty]) -> (DVector<f64>, f64) {
    let p = b.len();
    let choices: Vec<Vec<i8>> = kinds
        .iter()
        .map(|k| match k {
            CoordPenalty::Abs => vec![-1, 0, 1],
            CoordPenalty::Signed(_) => vec![0, 2],
        })
        .collect();
    let mut best = (DVector::zeros(p), 0.0);
    best.1 = objective(q, b, lambda, kinds, &best.0);
    let mut idx = vec![0usize; p];
    loop {
        let pattern: Vec<i8> = (0..p).map(|j| choices[j][idx[j]]).collect();
        let active: Vec<usize> = (0..p).filter(|&j| pattern[j] != 0).collect();
        if !active.is_empty() {
            let m = active.len();
            let qa = DMatrix::from_fn(m, m, |r, c| q[(active[r], active[c])]);
            let rhs = DVector::from_fn(m, |r, _| {
                let j = active[r];
                let g = match kinds[j] {
                    CoordPenalty::Abs => pattern[j] as f64,
                    CoordPenalty::Signed(s) => s,
                };
                b[j] - 0.5 * lambda * g
            });
            if let Some(sol) = qa.lu().solve(&rhs) {
                let mut u = DVector::zeros(p);
                for (r, &j) in active.iter().enumerate() {
                    u[j] = sol[r];
                }
                let val = objective(q, b, lambda, kinds, &u);
                if val < best.1 {
                    best = (u, val);
                }
            }
        }
        let mut k = 0;
        loop {
            if k == p {
                return best;
            }
            idx[k] += 1;
            if idx[k] < choices[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// Adaptive Simpson quadrature.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64, m: f64, fm: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1) + rec(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    rec(f, a, fa, b, fb, m, fm, whole, tol, 50)
}

/// `h₀` written out from its three cases.
pub fn h0_reference(lambda0: f64, zeta: f64) -> f64 {
    let b = lambda0 / 2.0;
    if zeta > b {
        phi_cdf(zeta - b) - phi_cdf(-zeta - b)
    } else if zeta < -b {
        phi_cdf(-zeta + b) - phi_cdf(zeta + b)
    } else {
        phi_cdf(zeta + b) - phi_cdf(zeta - b)
    }
}

/// ψ₀ by brute quadrature of the indicator integral, split at the indicator's
/// jumps (located on a fine scan and refined by bisection) so Simpson only
/// sees smooth pieces.
pub fn psi_zero_quadrature(alpha: f64, lambda0: f64) -> f64 {
    let inside = |z: f64| h0_reference(lambda0, z) <= 1.0 - alpha;
    let (lo, hi) = (-10.0, 10.0);
    let steps = 200_000;
    let mut cuts = vec![lo];
    let mut prev = inside(lo);
    for i in 1..=steps {
        let z = lo + (hi - lo) * i as f64 / steps as f64;
        let now = inside(z);
        if now != prev {
            let (mut a, mut c) = (z - (hi - lo) / steps as f64, z);
            for _ in 0..200 {
                let m = 0.5 * (a + c);
                if inside(m) == prev {
                    a = m;
                } else {
                    c = m;
                }
            }
            cuts.push(0.5 * (a + c));
            prev = now;
        }
    }
    cuts.push(hi);
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        if inside(mid) {
            total += adaptive_simpson(&phi_pdf, w[0], w[1], 1e-14);
        }
    }
    total
}

/// `1 − γ` solving `ψ(γ, λ) = target` by Newton's method on `z = z_{γ/2}`.
pub fn newton_gamma_level(lambda: f64, target: f64) -> f64 {
    let a = lambda / 2.0;
    // f is increasing and concave for z ≥ a with f(a) < 0 on the tested range,
    // so iterates from z = a climb monotonically to the root
    let mut z: f64 = a;
    for _ in 0..200 {
        let f = phi_cdf(a + z) - phi_cdf(a - z) - target;
        let df = phi_pdf(a + z) + phi_pdf(a - z);
        let step = f / df;
        z -= step;
        if step.abs() < 1e-15 * z.abs().max(1.0) {
            break;
        }
    }
    // γ = 2(1 − Φ(z)) through the upper tail
    1.0 - libm::erfc(z / std::f64::consts::SQRT_2)
}

/// Standardized draws `Lᵀ(θ − θ̂ᴿ)/σ` have componentwise mean within 4/√count of
/// 0 and variance within 0.05 of 1; the mean of `τ = σ⁻²` is within 3 s.e. of
/// shape/rate. Checked on 10⁵ draws for a random dataset.
pub fn posterior_moment_check(seed: u64) -> Result<(), String> {
    use projpost::posterior::{factorize, sample_posterior};
    let mut r = rng(seed);
    let d = random_dataset(&mut r, 60, 4, &[0.8, -0.4, 0.0, 1.5], 1.0);
    let f = factorize(&d, &projpost::PriorConfig::default()).map_err(|e| e.to_string())?;
    let count = 100_000;
    let draws = sample_posterior(&f, count, seed).map_err(|e| e.to_string())?;
    let p = f.p();
    let mut sum = DVector::zeros(p);
    let mut sq = DVector::zeros(p);
    let (mut tau_sum, mut tau_sq) = (0.0, 0.0);
    for draw in &draws {
        let z = f.precision_chol.transpose() * (&draw.theta - &f.ridge_mean) / draw.sigma;
        sum += &z;
        sq += z.component_mul(&z);
        let tau = draw.sigma.powi(-2);
        tau_sum += tau;
        tau_sq += tau * tau;
    }
    let c = count as f64;
    for j in 0..p {
        let mean = sum[j] / c;
        let var = sq[j] / c - mean * mean;
        if mean.abs() >= 4.0 / c.sqrt() || (var - 1.0).abs() >= 0.05 {
            return Err(format!("seed {seed} coordinate {j}: mean {mean}, variance {var}"));
        }
    }
    let tau_mean = tau_sum / c;
    let tau_se = ((tau_sq / c - tau_mean * tau_mean) / c).sqrt();
    let expected = f.gamma_shape / f.gamma_rate;
    if (tau_mean - expected).abs() >= 3.0 * tau_se {
        return Err(format!("seed {seed}: mean precision {tau_mean}, expected {expected}"));
    }
    Ok(())
}
