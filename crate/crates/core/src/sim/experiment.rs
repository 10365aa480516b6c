//! Replicate loops, calibration and rejection summaries.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{gen_data, Genotype, SimScenario};
use crate::asymptotics::{davies_pvalue, sample_null, NullKind};
use crate::error::{Error, Result};
use crate::estimate::{fit_equal_scale, fit_null, fit_profiled, FitConfig, ModelKind};
use crate::kernel::KernelFamily;
use crate::lrt::ratio_statistic;
use crate::nonparam::{ad_asymptotic_critical, ad_ksample, ks_ksample, upper_quantile, MIN_CALIBRATION_REPS};
use crate::rng::{derive_seed, stream};

/// Largest tolerated fraction of replicates whose fit or data generation failed.
const MAX_FAILURE_FRACTION: f64 = 0.01;

/// A test together with the way it is calibrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "R_n")]
    Rn,
    #[serde(rename = "R_n_star")]
    RnStar,
    /// `R_n` with the Davies tail approximation.
    #[serde(rename = "R_n_davies")]
    RnDavies,
    #[serde(rename = "R_n_star_davies")]
    RnStarDavies,
    #[serde(rename = "KS")]
    Ks,
    #[serde(rename = "AD")]
    Ad,
    /// Standardized AD against the interpolated asymptotic percentiles.
    #[serde(rename = "AD_asymptotic")]
    AdAsymptotic,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Rn,
        Method::RnStar,
        Method::RnDavies,
        Method::RnStarDavies,
        Method::Ks,
        Method::Ad,
        Method::AdAsymptotic,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Rn => "R_n",
            Method::RnStar => "R_n_star",
            Method::RnDavies => "R_n_davies",
            Method::RnStarDavies => "R_n_star_davies",
            Method::Ks => "KS",
            Method::Ad => "AD",
            Method::AdAsymptotic => "AD_asymptotic",
        }
    }

    fn needs_full(&self) -> bool {
        matches!(self, Method::Rn | Method::RnDavies)
    }

    fn needs_equal_scale(&self) -> bool {
        matches!(self, Method::RnStar | Method::RnStarDavies)
    }

    /// Methods whose critical value comes from simulated statistics.
    fn is_tabulated(&self) -> bool {
        matches!(self, Method::Rn | Method::RnStar | Method::Ks | Method::Ad)
    }
}

/// How `R_n` and `R_n*` are calibrated in power experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrtCalibration {
    /// Null replicates at the design's `(n, r)`.
    #[default]
    MonteCarlo,
    /// Draws of the limiting law.
    Representation,
}

/// Statistics of one replicate. Fields of methods not requested stay `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub index: usize,
    pub sizes: [usize; 4],
    pub r_n: Option<f64>,
    pub r_n_star: Option<f64>,
    pub converged_full: bool,
    pub converged_equal_scale: bool,
    pub ks: Option<f64>,
    /// Standardized k-sample AD statistic.
    pub ad: Option<f64>,
    /// Number of non-empty groups entering the k-sample tests.
    pub k: usize,
    pub failure: Option<String>,
}

impl ReplicateRecord {
    fn failed(index: usize, err: Error) -> Self {
        Self {
            index,
            sizes: [0; 4],
            r_n: None,
            r_n_star: None,
            converged_full: false,
            converged_equal_scale: false,
            ks: None,
            ad: None,
            k: 0,
            failure: Some(err.to_string()),
        }
    }

    /// Statistic for a tabulated method.
    pub fn statistic(&self, method: Method) -> Option<f64> {
        match method {
            Method::Rn | Method::RnDavies => self.r_n,
            Method::RnStar | Method::RnStarDavies => self.r_n_star,
            Method::Ks => self.ks,
            Method::Ad | Method::AdAsymptotic => self.ad,
        }
    }

    /// Whether the fits behind `method` converged; always true for rank tests.
    pub fn converged(&self, method: Method) -> bool {
        if method.needs_full() {
            self.converged_full
        } else if method.needs_equal_scale() {
            self.converged_equal_scale
        } else {
            true
        }
    }
}

fn replicate(
    scenario: &SimScenario,
    cfg: &FitConfig,
    methods: &[Method],
    index: usize,
) -> Result<ReplicateRecord> {
    let mut rng = stream(scenario.seed, index as u64);
    let groups = gen_data(scenario, &mut rng)?;
    let want_full = methods.iter().any(Method::needs_full);
    let want_eq = want_full || methods.iter().any(Method::needs_equal_scale);
    let mut rec = ReplicateRecord {
        index,
        sizes: groups.sizes(),
        r_n: None,
        r_n_star: None,
        converged_full: false,
        converged_equal_scale: false,
        ks: None,
        ad: None,
        k: groups.sizes().iter().filter(|&&s| s > 0).count(),
        failure: None,
    };
    if want_eq {
        let kernel = scenario.fit_kernel;
        let null = fit_null(&groups, kernel)?;
        let eq = fit_equal_scale(&groups, kernel, cfg)?;
        if methods.iter().any(Method::needs_equal_scale) {
            rec.r_n_star = Some(ratio_statistic(&eq, &null));
            rec.converged_equal_scale = eq.converged;
        }
        if want_full {
            let full = fit_profiled(&groups, kernel, cfg, ModelKind::Full, &[eq.params])?;
            rec.r_n = Some(ratio_statistic(&full, &null));
            rec.converged_full = full.converged;
        }
    }
    if methods.contains(&Method::Ks) {
        rec.ks = Some(ks_ksample(groups.groups())?);
    }
    if methods.iter().any(|m| matches!(m, Method::Ad | Method::AdAsymptotic)) {
        rec.ad = Some(ad_ksample(groups.groups())?);
    }
    Ok(rec)
}

/// Simulates `scenario.n_reps` datasets and computes the statistics of
/// `methods`. Replicate `i` uses stream `(scenario.seed, i)`, so the records
/// do not depend on the number of worker threads. Failures are recorded,
/// not propagated.
pub fn run_replicates(scenario: &SimScenario, cfg: &FitConfig, methods: &[Method]) -> Result<Vec<ReplicateRecord>> {
    scenario.validate()?;
    cfg.validate()?;
    Ok((0..scenario.n_reps)
        .into_par_iter()
        .map(|i| {
            replicate(scenario, cfg, methods, i).unwrap_or_else(|e| {
                log::warn!("replicate {i} failed: {e}");
                ReplicateRecord::failed(i, e)
            })
        })
        .collect())
}

/// Null critical values estimated from simulated null replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullCalibration {
    /// Null density the replicates were drawn from.
    pub f0: Genotype,
    pub n: usize,
    pub r: f64,
    pub fit_kernel: KernelFamily,
    pub alpha: f64,
    pub n_reps: usize,
    pub seed: u64,
    pub failures: usize,
    /// Upper-α critical value per tabulated method.
    pub critical_values: BTreeMap<Method, f64>,
}

impl NullCalibration {
    /// Whether these critical values apply to `scenario`. The statistics are
    /// invariant under affine maps of the data, so the null density only
    /// matters through its kernel.
    pub fn applies_to(&self, scenario: &SimScenario) -> bool {
        self.n == scenario.n
            && (self.r - scenario.r).abs() < 1e-12
            && self.fit_kernel == scenario.fit_kernel
            && self.f0.kernel == scenario.fit_kernel
            && (self.alpha - scenario.alpha).abs() < 1e-15
    }

    pub fn critical_value(&self, method: Method) -> Option<f64> {
        self.critical_values.get(&method).copied()
    }
}

fn check_failures(failures: usize, reps: usize, what: &str) -> Result<()> {
    if failures as f64 > MAX_FAILURE_FRACTION * reps as f64 {
        return Err(Error::Numerical(format!(
            "{failures} of {reps} {what} replicates failed (limit {:.0}%)",
            100.0 * MAX_FAILURE_FRACTION
        )));
    }
    Ok(())
}

/// Critical values of the tabulated `methods` from `n_reps` replicates under
/// `f0` with the design of `scenario`.
pub fn calibrate_null(
    scenario: &SimScenario,
    f0: Genotype,
    cfg: &FitConfig,
    methods: &[Method],
    n_reps: usize,
    seed: u64,
) -> Result<NullCalibration> {
    if n_reps < MIN_CALIBRATION_REPS {
        return Err(Error::InvalidInput(format!(
            "null calibration needs at least {MIN_CALIBRATION_REPS} replicates"
        )));
    }
    let tabulated: Vec<Method> = methods.iter().copied().filter(Method::is_tabulated).collect();
    let null = SimScenario {
        f1: f0,
        f2: f0,
        n_reps,
        seed,
        ..scenario.clone()
    };
    let records = run_replicates(&null, cfg, &tabulated)?;
    let failures = records.iter().filter(|r| r.failure.is_some()).count();
    check_failures(failures, n_reps, "calibration")?;
    let mut critical_values = BTreeMap::new();
    for m in tabulated {
        let mut stats: Vec<f64> = records.iter().filter_map(|r| r.statistic(m)).collect();
        stats.sort_by(f64::total_cmp);
        critical_values.insert(m, upper_quantile(&stats, scenario.alpha));
    }
    Ok(NullCalibration {
        f0,
        n: scenario.n,
        r: scenario.r,
        fit_kernel: scenario.fit_kernel,
        alpha: scenario.alpha,
        n_reps,
        seed,
        failures,
        critical_values,
    })
}

/// One method's result in one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub label: String,
    pub experiment: String,
    pub n: usize,
    pub r: f64,
    pub d_cm: Option<f64>,
    pub theta: f64,
    pub kernel1: KernelFamily,
    pub mu1: f64,
    pub sigma1: f64,
    pub kernel2: KernelFamily,
    pub mu2: f64,
    pub sigma2: f64,
    pub fit_kernel: KernelFamily,
    pub alpha: f64,
    pub reps: usize,
    /// Replicates whose data generation or fit failed.
    pub failures: usize,
    /// Replicates counted as non-rejections because a fit did not converge.
    pub non_converged: usize,
    pub method: Method,
    /// Empty for the Davies methods, which reject on the approximate p-value.
    pub critical_value: Option<f64>,
    pub rejection_rate: f64,
    /// Binomial standard error of the rate.
    pub mc_std_error: f64,
}

/// Rejection rule of one method.
#[derive(Debug, Clone, Copy)]
enum Rule {
    Exceeds(f64),
    Davies(NullKind),
}

/// Rejection rates of `records` under the given rules. Failed and
/// non-converged replicates count as non-rejections.
fn rows_from(
    scenario: &SimScenario,
    experiment: &str,
    records: &[ReplicateRecord],
    rules: &[(Method, Rule)],
) -> Result<Vec<ExperimentRow>> {
    let reps = records.len();
    let failures = records.iter().filter(|r| r.failure.is_some()).count();
    check_failures(failures, reps, experiment)?;
    rules
        .iter()
        .map(|&(method, rule)| {
            let mut rejections = 0usize;
            let mut non_converged = 0usize;
            for rec in records.iter().filter(|r| r.failure.is_none()) {
                if !rec.converged(method) {
                    non_converged += 1;
                    continue;
                }
                let Some(stat) = rec.statistic(method) else {
                    return Err(Error::InvalidInput(format!("{} was not computed", method.name())));
                };
                let reject = match rule {
                    Rule::Exceeds(c) => stat > c,
                    Rule::Davies(kind) => davies_pvalue(stat, scenario.r, kind)? <= scenario.alpha,
                };
                rejections += reject as usize;
            }
            let rate = rejections as f64 / reps as f64;
            Ok(ExperimentRow {
                label: scenario.label.clone(),
                experiment: experiment.to_string(),
                n: scenario.n,
                r: scenario.r,
                d_cm: scenario.d_cm,
                theta: scenario.theta,
                kernel1: scenario.f1.kernel,
                mu1: scenario.f1.mu,
                sigma1: scenario.f1.sigma,
                kernel2: scenario.f2.kernel,
                mu2: scenario.f2.mu,
                sigma2: scenario.f2.sigma,
                fit_kernel: scenario.fit_kernel,
                alpha: scenario.alpha,
                reps,
                failures,
                non_converged,
                method,
                critical_value: match rule {
                    Rule::Exceeds(c) => Some(c),
                    Rule::Davies(_) => None,
                },
                rejection_rate: rate,
                mc_std_error: (rate * (1.0 - rate) / reps as f64).sqrt(),
            })
        })
        .collect()
}

/// Rejection rates of `records` at fixed critical values; methods absent
/// from `critical_values` other than the Davies ones are an error.
pub fn summarize(
    scenario: &SimScenario,
    experiment: &str,
    records: &[ReplicateRecord],
    methods: &[Method],
    critical_values: &BTreeMap<Method, f64>,
) -> Result<Vec<ExperimentRow>> {
    let rules = methods
        .iter()
        .map(|&m| {
            let rule = match m {
                Method::RnDavies => Rule::Davies(NullKind::Full),
                Method::RnStarDavies => Rule::Davies(NullKind::Star),
                _ => Rule::Exceeds(
                    *critical_values
                        .get(&m)
                        .ok_or_else(|| Error::InvalidInput(format!("no critical value for {}", m.name())))?,
                ),
            };
            Ok((m, rule))
        })
        .collect::<Result<Vec<_>>>()?;
    rows_from(scenario, experiment, records, &rules)
}

/// Critical values that do not need null replicates: limiting-law tables for
/// the likelihood ratio statistics and the asymptotic AD percentiles.
fn limiting_critical_values(
    scenario: &SimScenario,
    methods: &[Method],
    table_size: usize,
    table_seed: u64,
    out: &mut BTreeMap<Method, f64>,
) -> Result<()> {
    for &m in methods {
        let kind = match m {
            Method::Rn => NullKind::Full,
            Method::RnStar => NullKind::Star,
            _ => continue,
        };
        let table = sample_null(kind, scenario.r, table_size, derive_seed(table_seed, kind.dof() as u64))?;
        out.insert(m, table.critical_value(scenario.alpha)?);
    }
    Ok(())
}

/// Asymptotic AD critical value for the typical number of non-empty groups.
fn ad_asymptotic_cutoff(records: &[ReplicateRecord], alpha: f64) -> Result<Option<f64>> {
    let k = records.iter().filter(|r| r.failure.is_none()).map(|r| r.k).max();
    k.map(|k| ad_asymptotic_critical(k, alpha)).transpose()
}

/// Type I error rates under the null design `scenario` (`f₁ = f₂`).
///
/// `R_n` and `R_n*` are referred to `table_size` draws of their limiting
/// laws, KS and AD to `null_reps` independent null replicates, and the
/// Davies and asymptotic AD methods to their closed forms.
pub fn type1_experiment(
    scenario: &SimScenario,
    methods: &[Method],
    cfg: &FitConfig,
    table_size: usize,
    table_seed: u64,
    null_reps: usize,
) -> Result<Vec<ExperimentRow>> {
    if !scenario.is_null() {
        return Err(Error::InvalidInput("type I experiments need f1 = f2".into()));
    }
    let mut crit = BTreeMap::new();
    limiting_critical_values(scenario, methods, table_size, table_seed, &mut crit)?;
    let rank: Vec<Method> = methods.iter().copied().filter(|m| matches!(m, Method::Ks | Method::Ad)).collect();
    if !rank.is_empty() {
        let cal = calibrate_null(scenario, scenario.f1, cfg, &rank, null_reps, derive_seed(scenario.seed, 0x7ab1e))?;
        crit.extend(cal.critical_values);
    }
    let records = run_replicates(scenario, cfg, methods)?;
    if methods.contains(&Method::AdAsymptotic) {
        if let Some(c) = ad_asymptotic_cutoff(&records, scenario.alpha)? {
            crit.insert(Method::AdAsymptotic, c);
        }
    }
    summarize(scenario, "type1", &records, methods, &crit)
}

/// Power at `scenario`, calibrating at its KL-closest null density.
pub fn power_experiment(
    scenario: &SimScenario,
    methods: &[Method],
    cfg: &FitConfig,
    lrt: LrtCalibration,
    null_reps: usize,
    table_size: usize,
    table_seed: u64,
) -> Result<Vec<ExperimentRow>> {
    let (f0, _) = scenario.kl_null()?;
    let cal = calibrate_null(scenario, f0, cfg, methods, null_reps, derive_seed(scenario.seed, 0x7ab1e))?;
    power_experiment_with(scenario, methods, cfg, &cal, lrt, table_size, table_seed)
}

/// Power at `scenario` with precomputed null critical values, which may be
/// shared by every scenario with the same design and fit kernel.
pub fn power_experiment_with(
    scenario: &SimScenario,
    methods: &[Method],
    cfg: &FitConfig,
    calibration: &NullCalibration,
    lrt: LrtCalibration,
    table_size: usize,
    table_seed: u64,
) -> Result<Vec<ExperimentRow>> {
    if !calibration.applies_to(scenario) {
        return Err(Error::InvalidInput(
            "null calibration was computed for a different design, kernel or level".into(),
        ));
    }
    let mut crit = calibration.critical_values.clone();
    if lrt == LrtCalibration::Representation {
        limiting_critical_values(scenario, methods, table_size, table_seed, &mut crit)?;
    }
    let records = run_replicates(scenario, cfg, methods)?;
    if methods.contains(&Method::AdAsymptotic) {
        if let Some(c) = ad_asymptotic_cutoff(&records, scenario.alpha)? {
            crit.insert(Method::AdAsymptotic, c);
        }
    }
    summarize(scenario, "power", &records, methods, &crit)
}
