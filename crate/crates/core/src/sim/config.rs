//! TOML description of a simulation run.

use serde::{Deserialize, Serialize};

use super::experiment::{LrtCalibration, Method};
use super::{haldane, Genotype, SimScenario};
use crate::error::{Error, Result};
use crate::estimate::FitConfig;
use crate::kernel::KernelFamily;

/// Replicate count of the full-budget mode.
pub const FULL_BUDGET_REPS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Type1,
    Power,
}

/// The `[scenario]` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    #[serde(default)]
    pub label: String,
    pub experiment: ExperimentKind,
    pub n: usize,
    /// Marker distance in cM; give this or `r`.
    pub d_cm: Option<f64>,
    pub r: Option<f64>,
    pub theta: f64,
    pub f1: Genotype,
    pub f2: Genotype,
    /// Defaults to the kernel of `f1`.
    pub fit_kernel: Option<KernelFamily>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Defaults to 5000 for type I and 1000 for power experiments.
    pub n_reps: Option<usize>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
}

fn default_alpha() -> f64 {
    0.05
}

fn default_seed() -> u64 {
    1
}

fn default_methods() -> Vec<Method> {
    vec![Method::Rn, Method::RnStar]
}

/// The `[calibration]` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    /// Draws of each limiting law.
    pub table_size: usize,
    pub table_seed: u64,
    /// Null replicates for Monte Carlo critical values.
    pub null_reps: usize,
    pub lrt: LrtCalibration,
    /// Use 10,000 replicates for the experiment and the null calibration.
    pub full: bool,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            table_size: 200_000,
            table_seed: 20_240_101,
            null_reps: FULL_BUDGET_REPS,
            lrt: LrtCalibration::MonteCarlo,
            full: false,
        }
    }
}

/// A whole simulation file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub calibration: CalibrationConfig,
}

impl SimConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SimConfig = parse_toml(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.fit.validate()?;
        if self.scenario.methods.is_empty() {
            return Err(Error::InvalidInput("no methods requested".into()));
        }
        if self.calibration.table_size == 0 {
            return Err(Error::InvalidInput("table_size must be positive".into()));
        }
        self.to_scenario()?.validate()
    }

    /// Replicates of the experiment itself.
    pub fn n_reps(&self) -> usize {
        if self.calibration.full {
            return FULL_BUDGET_REPS;
        }
        self.scenario.n_reps.unwrap_or(match self.scenario.experiment {
            ExperimentKind::Type1 => 5000,
            ExperimentKind::Power => 1000,
        })
    }

    pub fn null_reps(&self) -> usize {
        if self.calibration.full {
            self.calibration.null_reps.max(FULL_BUDGET_REPS)
        } else {
            self.calibration.null_reps
        }
    }

    pub fn to_scenario(&self) -> Result<SimScenario> {
        let s = &self.scenario;
        let (r, d_cm) = design(s.d_cm, s.r)?;
        Ok(SimScenario {
            label: s.label.clone(),
            n: s.n,
            r,
            d_cm,
            theta: s.theta,
            f1: s.f1,
            f2: s.f2,
            fit_kernel: s.fit_kernel.unwrap_or(s.f1.kernel),
            alpha: s.alpha,
            n_reps: self.n_reps(),
            seed: s.seed,
        })
    }
}

/// A single alternative for which the KL information is wanted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KlCase {
    #[serde(default)]
    pub label: String,
    pub d_cm: Option<f64>,
    pub r: Option<f64>,
    pub theta: f64,
    pub f1: Genotype,
    pub f2: Genotype,
    /// Family of the null density; defaults to the kernel of `f1`.
    pub fit_kernel: Option<KernelFamily>,
}

impl KlCase {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let case: KlCase = parse_toml(text)?;
        case.to_scenario()?;
        Ok(case)
    }

    /// The case as a scenario with `n = 8`; only the design and genotypes matter.
    pub fn to_scenario(&self) -> Result<SimScenario> {
        let (r, d_cm) = design(self.d_cm, self.r)?;
        let s = SimScenario {
            label: self.label.clone(),
            n: 8,
            r,
            d_cm,
            theta: self.theta,
            f1: self.f1,
            f2: self.f2,
            fit_kernel: self.fit_kernel.unwrap_or(self.f1.kernel),
            alpha: 0.05,
            n_reps: 1,
            seed: 1,
        };
        s.validate()?;
        Ok(s)
    }
}

fn design(d_cm: Option<f64>, r: Option<f64>) -> Result<(f64, Option<f64>)> {
    match (d_cm, r) {
        (Some(d), None) => Ok((haldane(d)?, Some(d))),
        (None, Some(r)) => Ok((r, None)),
        _ => Err(Error::InvalidInput("give exactly one of d_cm and r".into())),
    }
}

fn parse_toml<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| text[..s.start].lines().count().max(1)).unwrap_or(0);
        Error::parse(line, e.message().to_string())
    })
}
