//! Finite-sample coverage studies: synthetic data, repeated fits, aggregation
//! and CSV output.

use std::fmt::Write as _;
use std::time::Instant;

use log::info;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::fit::ProjectionFit;
use crate::rng::{self, Domain};
use crate::types::{check_unit_open, Dataset, Lambda, PriorConfig};

/// Signal strengths from the text of the study description.
pub const SIGNALS: [f64; 5] = [-2.0, -1.5, 0.5, 1.0, 2.0];
/// Variant listed with the published coverage table.
pub const SIGNALS_ALT: [f64; 5] = [-2.0, -1.5, 0.5, 1.0, 1.5];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    Independent,
    /// Rows are stationary AR(1) paths with unit marginal variance.
    Ar1 { rho: f64 },
}

impl Design {
    pub fn label(&self) -> String {
        match self {
            Design::Independent => "independent".into(),
            Design::Ar1 { rho } => format!("ar1({rho})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalVariant {
    #[default]
    Text,
    Caption,
}

impl SignalVariant {
    pub fn values(self) -> [f64; 5] {
        match self {
            SignalVariant::Text => SIGNALS,
            SignalVariant::Caption => SIGNALS_ALT,
        }
    }
}

fn one_or_many<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        One(f64),
        Many(Vec<f64>),
    }
    Ok(match Repr::deserialize(d)? {
        Repr::One(v) => vec![v],
        Repr::Many(v) => v,
    })
}

fn default_error_sd() -> f64 {
    1.0
}

fn default_replications() -> usize {
    200
}

fn default_draws() -> usize {
    2000
}

/// A simulation design. `target_coverage` accepts a single number or a list;
/// all targets share the same draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub n: usize,
    pub p: usize,
    pub design: Design,
    pub theta0: Vec<f64>,
    #[serde(default = "default_error_sd")]
    pub error_sd: f64,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_draws")]
    pub draws_per_rep: usize,
    #[serde(deserialize_with = "one_or_many", rename = "target_coverage")]
    pub targets: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub lambda: Lambda,
    #[serde(default)]
    pub prior: PriorConfig,
}

impl Scenario {
    /// `p` coefficients with the five signals first and zeros elsewhere.
    pub fn five_signals(n: usize, p: usize, design: Design, variant: SignalVariant) -> Self {
        let mut theta0 = vec![0.0; p];
        for (t, s) in theta0.iter_mut().zip(variant.values()) {
            *t = s;
        }
        Self {
            n,
            p,
            design,
            theta0,
            error_sd: 1.0,
            replications: default_replications(),
            draws_per_rep: default_draws(),
            targets: vec![0.95],
            seed: 0,
            lambda: Lambda::Auto,
            prior: PriorConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.p == 0 {
            return Err(Error::InvalidConfig(format!(
                "need n >= 2 and p >= 1 (n = {}, p = {})",
                self.n, self.p
            )));
        }
        if self.theta0.len() != self.p {
            return Err(Error::DimensionMismatch(format!(
                "theta0 has length {}, p = {}",
                self.theta0.len(),
                self.p
            )));
        }
        if self.theta0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("theta0".into()));
        }
        if !(self.error_sd.is_finite() && self.error_sd > 0.0) {
            return Err(Error::InvalidConfig(format!("error_sd must be positive, got {}", self.error_sd)));
        }
        if self.replications == 0 {
            return Err(Error::InvalidConfig("need at least one replication".into()));
        }
        if self.draws_per_rep < 2 {
            return Err(Error::InvalidConfig("need at least 2 draws per replication".into()));
        }
        if self.targets.is_empty() {
            return Err(Error::InvalidConfig("no target coverage given".into()));
        }
        for &t in &self.targets {
            check_unit_open("target coverage", t)?;
        }
        if let Design::Ar1 { rho } = self.design {
            if !(rho.abs() < 1.0) {
                return Err(Error::InvalidConfig(format!("AR(1) needs |rho| < 1, got {rho}")));
            }
        }
        self.prior.validate()
    }
}

/// Synthetic data for replication `rep_index`; depends only on `(seed, rep_index)`.
pub fn generate_data(scenario: &Scenario, rep_index: u64) -> Result<Dataset> {
    scenario.validate()?;
    let (n, p) = (scenario.n, scenario.p);
    let mut rng = rng::stream(scenario.seed, Domain::Data, rep_index);
    let mut x = DMatrix::zeros(n, p);
    let mut y = DVector::zeros(n);
    let mut normal = || -> f64 { rng.sample(StandardNormal) };
    for i in 0..n {
        match scenario.design {
            Design::Independent => {
                for j in 0..p {
                    x[(i, j)] = normal();
                }
            }
            Design::Ar1 { rho } => {
                let innovation = (1.0 - rho * rho).sqrt();
                x[(i, 0)] = normal();
                for j in 1..p {
                    x[(i, j)] = rho * x[(i, j - 1)] + innovation * normal();
                }
            }
        }
        let mean: f64 = (0..p).map(|j| x[(i, j)] * scenario.theta0[j]).sum();
        y[i] = mean + scenario.error_sd * normal();
    }
    Dataset::new(x, y)
}

/// Outcome of one replication. Vectors indexed `[target][component]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub rep: u64,
    pub theta0: Vec<f64>,
    pub targets: Vec<f64>,
    pub lambda_n: f64,
    pub lambda0: f64,
    pub sigma_hat: f64,
    pub levels: Vec<Vec<f64>>,
    pub covered: Vec<Vec<bool>>,
    pub lengths: Vec<Vec<f64>>,
    /// Components in the support of the LASSO center.
    pub selected: Vec<bool>,
    pub inclusion: Vec<f64>,
    pub max_kkt_residual: f64,
}

pub fn run_replication(scenario: &Scenario, rep_index: u64) -> Result<ReplicationRecord> {
    replicate(scenario, rep_index).map_err(|e| Error::Replication {
        rep: rep_index,
        source: Box::new(e),
    })
}

fn replicate(scenario: &Scenario, rep_index: u64) -> Result<ReplicationRecord> {
    let data = generate_data(scenario, rep_index)?;
    let seed = rng::derive_seed(scenario.seed, Domain::Replication, rep_index);
    let pf = ProjectionFit::new(&data, &scenario.prior, scenario.lambda, scenario.draws_per_rep, seed)?;
    let p = scenario.p;
    let mut levels = Vec::with_capacity(scenario.targets.len());
    let mut covered = Vec::with_capacity(scenario.targets.len());
    let mut lengths = Vec::with_capacity(scenario.targets.len());
    for &target in &scenario.targets {
        let lv: Vec<f64> = pf.calibrate(target)?.iter().map(|r| r.gamma_level).collect();
        let intervals: Vec<_> = (0..p).map(|j| pf.component_interval(j, lv[j])).collect();
        covered.push(
            intervals
                .iter()
                .zip(&scenario.theta0)
                .map(|(iv, t)| iv.contains(*t))
                .collect(),
        );
        lengths.push(intervals.iter().map(|iv| iv.length()).collect());
        levels.push(lv);
    }
    Ok(ReplicationRecord {
        rep: rep_index,
        theta0: scenario.theta0.clone(),
        targets: scenario.targets.clone(),
        lambda_n: pf.lambda_n,
        lambda0: pf.lambda0,
        sigma_hat: pf.sigma_hat,
        levels,
        covered,
        lengths,
        selected: pf.center().iter().map(|v| *v != 0.0).collect(),
        inclusion: crate::regions::inclusion_probabilities(&pf.sample),
        max_kkt_residual: pf.max_kkt_residual,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentCoverage {
    pub index: usize,
    pub truth: f64,
    pub target: f64,
    pub coverage: f64,
    pub mc_se: f64,
    pub mean_length: f64,
    pub mean_level: f64,
}

/// Averages over replications. `runtime_secs` is informational and never
/// written to CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub replications: usize,
    pub targets: Vec<f64>,
    pub theta0: Vec<f64>,
    /// Indexed `[target][component]`.
    pub components: Vec<Vec<ComponentCoverage>>,
    /// Fraction of replications whose LASSO center selects each component.
    pub selection_frequency: Vec<f64>,
    /// Mean posterior inclusion probability per component.
    pub mean_inclusion: Vec<f64>,
    pub mean_lambda0: f64,
    pub max_kkt_residual: f64,
    pub runtime_secs: f64,
}

impl CoverageReport {
    fn mean_over<F: Fn(&ComponentCoverage) -> bool>(&self, t: usize, keep: F) -> Option<f64> {
        let picked: Vec<f64> = self.components[t].iter().filter(|c| keep(c)).map(|c| c.coverage).collect();
        (!picked.is_empty()).then(|| picked.iter().sum::<f64>() / picked.len() as f64)
    }

    /// Mean coverage over the nonzero coefficients for target number `t`.
    pub fn signal_coverage(&self, t: usize) -> Option<f64> {
        self.mean_over(t, |c| c.truth != 0.0)
    }

    pub fn noise_coverage(&self, t: usize) -> Option<f64> {
        self.mean_over(t, |c| c.truth == 0.0)
    }
}

pub fn aggregate(records: &[ReplicationRecord]) -> Result<CoverageReport> {
    let first = records
        .first()
        .ok_or_else(|| Error::InsufficientData("no replication records".into()))?;
    let p = first.theta0.len();
    if records
        .iter()
        .any(|r| r.theta0 != first.theta0 || r.targets != first.targets)
    {
        return Err(Error::InvalidConfig("records come from different scenarios".into()));
    }
    let m = records.len() as f64;
    let mean = |f: &dyn Fn(&ReplicationRecord) -> f64| records.iter().map(f).sum::<f64>() / m;
    let components = (0..first.targets.len())
        .map(|t| {
            (0..p)
                .map(|j| {
                    let c = mean(&|r| r.covered[t][j] as u8 as f64);
                    ComponentCoverage {
                        index: j,
                        truth: first.theta0[j],
                        target: first.targets[t],
                        coverage: c,
                        mc_se: (c * (1.0 - c) / m).sqrt(),
                        mean_length: mean(&|r| r.lengths[t][j]),
                        mean_level: mean(&|r| r.levels[t][j]),
                    }
                })
                .collect()
        })
        .collect();
    Ok(CoverageReport {
        replications: records.len(),
        targets: first.targets.clone(),
        theta0: first.theta0.clone(),
        components,
        selection_frequency: (0..p).map(|j| mean(&|r| r.selected[j] as u8 as f64)).collect(),
        mean_inclusion: (0..p).map(|j| mean(&|r| r.inclusion[j])).collect(),
        mean_lambda0: mean(&|r| r.lambda0),
        max_kkt_residual: records.iter().fold(0.0, |a: f64, r| a.max(r.max_kkt_residual)),
        runtime_secs: 0.0,
    })
}

/// All replications of a scenario, aggregated.
pub fn run_scenario(scenario: &Scenario) -> Result<CoverageReport> {
    scenario.validate()?;
    let start = Instant::now();
    let records: Vec<ReplicationRecord> = (0..scenario.replications as u64)
        .into_par_iter()
        .map(|r| run_replication(scenario, r))
        .collect::<Result<_>>()?;
    let mut report = aggregate(&records)?;
    report.runtime_secs = start.elapsed().as_secs_f64();
    info!(
        "n {} p {} {}: {} replications, mean lambda0 {:.4}, max KKT residual {:.3e}, {:.1}s",
        scenario.n,
        scenario.p,
        scenario.design.label(),
        scenario.replications,
        report.mean_lambda0,
        report.max_kkt_residual,
        report.runtime_secs
    );
    Ok(report)
}

/// Reports for `θ⁰_j = 1` on the first `s` coordinates and 0 elsewhere, one per `s`.
pub fn sparsity_sweep(base: &Scenario, s_values: &[usize]) -> Result<Vec<CoverageReport>> {
    s_values
        .iter()
        .map(|&s| {
            if s > base.p {
                return Err(Error::InvalidConfig(format!("sparsity {s} exceeds p = {}", base.p)));
            }
            let mut scenario = base.clone();
            scenario.theta0 = (0..base.p).map(|j| if j < s { 1.0 } else { 0.0 }).collect();
            run_scenario(&scenario)
        })
        .collect()
}

/// `design,n,target,component,truth,coverage,mc_se,mean_length,mean_level,selection_frequency`
pub fn coverage_csv(rows: &[(&Scenario, &CoverageReport)]) -> String {
    let mut out =
        String::from("design,n,target,component,truth,coverage,mc_se,mean_length,mean_level,selection_frequency\n");
    for (scenario, report) in rows {
        for per_target in &report.components {
            for c in per_target {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{}",
                    scenario.design.label(),
                    scenario.n,
                    c.target,
                    c.index,
                    c.truth,
                    c.coverage,
                    c.mc_se,
                    c.mean_length,
                    c.mean_level,
                    report.selection_frequency[c.index]
                );
            }
        }
    }
    out
}

/// `s,n,target,signal_coverage,noise_coverage`; empty cells where a group is absent.
pub fn sparsity_csv(rows: &[(usize, usize, &CoverageReport)]) -> String {
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = String::from("s,n,target,signal_coverage,noise_coverage\n");
    for (s, n, report) in rows {
        for (t, target) in report.targets.iter().enumerate() {
            let _ = writeln!(
                out,
                "{s},{n},{target},{},{}",
                cell(report.signal_coverage(t)),
                cell(report.noise_coverage(t))
            );
        }
    }
    out
}
