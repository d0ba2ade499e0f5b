//! Value types shared across the crate: data, configuration, draws and regions.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::gram::GramAccumulator;

/// Response vector and design matrix together with the normalized cross products
/// `C_n = XᵀX/n` and `XᵀY/n`.
///
/// The projection and LASSO solvers only read `gram` and `xty`; `x` and `y` are
/// kept for fold construction and diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "DatasetRepr", try_from = "DatasetRepr")]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
    gram: DMatrix<f64>,
    xty: DVector<f64>,
    yy: f64,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch(format!(
                "design has {} rows but response has {} entries",
                x.nrows(),
                y.len()
            )));
        }
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::InsufficientData(format!(
                "design is {}x{}",
                x.nrows(),
                x.ncols()
            )));
        }
        if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
            let (i, j) = (pos % x.nrows(), pos / x.nrows());
            return Err(Error::NonFiniteInput(format!("design at row {i}, column {j}")));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput(format!("response at row {i}")));
        }
        let mut acc = GramAccumulator::new(x.ncols());
        acc.ingest_chunk(&x, &y)?;
        Ok(Self::assemble(x, y, &acc))
    }

    /// Builds a dataset whose cross products were accumulated elsewhere, e.g.
    /// chunk by chunk while reading a file.
    pub fn with_accumulator(x: DMatrix<f64>, y: DVector<f64>, acc: &GramAccumulator) -> Result<Self> {
        if acc.count() != x.nrows() || acc.p() != x.ncols() || y.len() != x.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "accumulator covers {} rows of {} predictors, data is {}x{}",
                acc.count(),
                acc.p(),
                x.nrows(),
                x.ncols()
            )));
        }
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::InsufficientData(format!("design is {}x{}", x.nrows(), x.ncols())));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("data".into()));
        }
        Ok(Self::assemble(x, y, acc))
    }

    fn assemble(x: DMatrix<f64>, y: DVector<f64>, acc: &GramAccumulator) -> Self {
        let n = x.nrows() as f64;
        Self {
            gram: acc.sum_xtx() / n,
            xty: acc.sum_xty() / n,
            yy: acc.sum_yy() / n,
            x,
            y,
        }
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    /// `C_n = XᵀX/n`.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// `XᵀY/n`.
    pub fn xty(&self) -> &DVector<f64> {
        &self.xty
    }

    /// `YᵀY/n`.
    pub fn mean_square_response(&self) -> f64 {
        self.yy
    }

    /// Ordinary least-squares solution, or `None` when `C_n` is singular.
    pub fn least_squares(&self) -> Option<DVector<f64>> {
        self.gram.clone().cholesky().map(|c| c.solve(&self.xty))
    }
}

/// Checks `X` and `Y` and precomputes the cross-product quantities.
pub fn validate_dataset(x: DMatrix<f64>, y: DVector<f64>) -> Result<Dataset> {
    Dataset::new(x, y)
}

#[derive(Serialize, Deserialize)]
struct DatasetRepr {
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
}

impl From<Dataset> for DatasetRepr {
    fn from(d: Dataset) -> Self {
        let x = (0..d.n())
            .map(|i| d.x.row(i).iter().copied().collect())
            .collect();
        Self {
            x,
            y: d.y.iter().copied().collect(),
        }
    }
}

impl TryFrom<DatasetRepr> for Dataset {
    type Error = Error;

    fn try_from(r: DatasetRepr) -> Result<Self> {
        let n = r.x.len();
        let p = r.x.first().map_or(0, Vec::len);
        if r.x.iter().any(|row| row.len() != p) {
            return Err(Error::DimensionMismatch("ragged design rows".into()));
        }
        let x = DMatrix::from_fn(n, p, |i, j| r.x[i][j]);
        Dataset::new(x, DVector::from_vec(r.y))
    }
}

/// Hyperparameters of `θ|σ ~ N(0, σ² a_n⁻¹ I)` and `σ⁻² ~ Ga(b1, b2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub a_n: f64,
    pub b1: f64,
    pub b2: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            a_n: 1.0,
            b1: 0.0,
            b2: 0.0,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("a_n", self.a_n), ("b1", self.b1), ("b2", self.b2)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Projection penalty: a fixed `λ_n` or one chosen by cross-validation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Lambda {
    #[default]
    Auto,
    Fixed(f64),
}

impl fmt::Display for Lambda {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Lambda::Auto => f.write_str("auto"),
            Lambda::Fixed(v) => write!(f, "{v}"),
        }
    }
}

impl FromStr for Lambda {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("auto") || s.eq_ignore_ascii_case("cv") {
            return Ok(Lambda::Auto);
        }
        let v: f64 = s
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("lambda must be 'auto' or a number, got {s:?}")))?;
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::InvalidConfig(format!("lambda must be positive, got {v}")));
        }
        Ok(Lambda::Fixed(v))
    }
}

impl Serialize for Lambda {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Lambda::Auto => s.serialize_str("auto"),
            Lambda::Fixed(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for Lambda {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) if v.is_finite() && v > 0.0 => Ok(Lambda::Fixed(v)),
            Repr::Num(v) => Err(serde::de::Error::custom(format!("lambda must be positive, got {v}"))),
            Repr::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub lambda: Lambda,
    pub draws: usize,
    pub seed: u64,
    /// Credibility `1 − γ` used directly when no target coverage is set.
    pub level: f64,
    /// Intended frequentist coverage; when set the level is calibrated per coefficient.
    pub target_coverage: Option<f64>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            lambda: Lambda::Auto,
            draws: 2000,
            seed: 0,
            level: 0.95,
            target_coverage: None,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.draws < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 draws, got {}",
                self.draws
            )));
        }
        check_unit_open("level", self.level)?;
        if let Some(t) = self.target_coverage {
            check_unit_open("target coverage", t)?;
        }
        if let Lambda::Fixed(v) = self.lambda {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!("lambda must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

pub(crate) fn check_unit_open(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("{name} must lie in (0, 1), got {v}")))
    }
}

/// One draw `(θ, σ)` from the unrestricted conjugate posterior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraw {
    pub theta: DVector<f64>,
    pub sigma: f64,
}

/// A posterior draw after the sparse projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseDraw {
    pub theta_star: DVector<f64>,
    /// Indices of the nonzero coordinates, ascending.
    pub support: Vec<usize>,
    pub kkt_residual: f64,
}

impl SparseDraw {
    pub fn new(theta_star: DVector<f64>, kkt_residual: f64) -> Self {
        let support = theta_star
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(j, _)| j)
            .collect();
        Self {
            theta_star,
            support,
            kkt_residual,
        }
    }
}

/// Geometry of a credible region, i.e. the Minkowski functional of the set K.
/// Coordinate indices are zero-based.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormSelector {
    Max,
    Euclidean,
    L1,
    Component(usize),
    Rectangle(Vec<usize>),
}

impl NormSelector {
    pub fn validate(&self, p: usize) -> Result<()> {
        match self {
            NormSelector::Component(j) if *j >= p => Err(Error::InvalidConfig(format!(
                "component {j} out of range for p = {p}"
            ))),
            NormSelector::Rectangle(set) => {
                if set.is_empty() {
                    return Err(Error::InvalidConfig("rectangle index set is empty".into()));
                }
                let mut sorted = set.clone();
                sorted.sort_unstable();
                sorted.dedup();
                if sorted.len() != set.len() {
                    return Err(Error::InvalidConfig("rectangle indices must be distinct".into()));
                }
                if let Some(j) = sorted.last().filter(|j| **j >= p) {
                    return Err(Error::InvalidConfig(format!(
                        "rectangle index {j} out of range for p = {p}"
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }
}

/// `{θ : ‖√n(θ − center)‖_K ≤ radius}` with its credibility level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CredibleRegion {
    pub selector: NormSelector,
    pub center: DVector<f64>,
    /// Radius on the √n scale.
    pub radius: f64,
    pub level: f64,
    pub n: usize,
    /// Per-coordinate intervals for component and rectangle selectors.
    pub intervals: Option<Vec<(usize, Interval)>>,
    /// More than `level` of the draws coincide with the center.
    pub zero_radius: bool,
}

impl CredibleRegion {
    pub fn contains(&self, theta: &DVector<f64>) -> bool {
        let diff = (theta - &self.center) * (self.n as f64).sqrt();
        crate::regions::minkowski_norm(diff.as_slice(), &self.selector) <= self.radius
    }
}
