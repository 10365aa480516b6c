//! Simulation of backcross interval data and the type I error and power
//! experiments built on it.

mod config;
mod experiment;

pub use config::{CalibrationConfig, ExperimentKind, KlCase, ScenarioSection, SimConfig, FULL_BUDGET_REPS};
pub use experiment::{
    calibrate_null, power_experiment, power_experiment_with, run_replicates, summarize, type1_experiment,
    ExperimentRow, LrtCalibration, Method, NullCalibration, ReplicateRecord,
};

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::asymptotics::{backcross_group_probs, kl_information, KlComponent, LocalAlternative};
use crate::error::{Error, Result};
use crate::io::{Marker, ScanDataset};
use crate::kernel::{KernelFamily, LocScaleParams};
pub use crate::likelihood::haldane;
use crate::likelihood::PhenotypeGroups;

/// Redraws of the group sizes allowed before data generation gives up.
const MAX_SIZE_REDRAWS: usize = 100;

/// Distribution of one QTL genotype.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Genotype {
    pub kernel: KernelFamily,
    pub mu: f64,
    pub sigma: f64,
}

impl Genotype {
    pub fn new(kernel: KernelFamily, mu: f64, sigma: f64) -> Self {
        Self { kernel, mu, sigma }
    }

    pub fn params(&self) -> LocScaleParams {
        LocScaleParams {
            mu: self.mu,
            sigma: self.sigma,
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.kernel.sample(rng, self.params())
    }
}

/// One simulation setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub label: String,
    pub n: usize,
    /// Recombination fraction between the flanking markers.
    pub r: f64,
    /// Map distance the fraction came from, when given that way.
    pub d_cm: Option<f64>,
    /// QTL position within the interval as a fraction of `r`.
    pub theta: f64,
    pub f1: Genotype,
    pub f2: Genotype,
    /// Kernel used by the likelihood ratio tests.
    pub fit_kernel: KernelFamily,
    pub alpha: f64,
    pub n_reps: usize,
    pub seed: u64,
}

impl SimScenario {
    /// Scenario at map distance `d_cm`, testing with the kernel of `f1`.
    pub fn at_distance(n: usize, d_cm: f64, theta: f64, f1: Genotype, f2: Genotype) -> Result<Self> {
        Ok(Self {
            label: String::new(),
            n,
            r: haldane(d_cm)?,
            d_cm: Some(d_cm),
            theta,
            f1,
            f2,
            fit_kernel: f1.kernel,
            alpha: 0.05,
            n_reps: 1000,
            seed: 1,
        })
    }

    /// Local alternative around `N(μ₀, σ₀)`-type member of `alt.kernel`:
    /// `f₁ = (μ₀ − δ_μ/√n, σ₀ − δ_σ/√n)`, `f₂ = (μ₀ + δ_μ/√n, σ₀ + δ_σ/√n)`.
    pub fn local_alternative(n: usize, r: f64, mu0: f64, alt: &LocalAlternative) -> Result<Self> {
        alt.validate()?;
        let h = 1.0 / (n as f64).sqrt();
        let f1 = Genotype::new(alt.kernel, mu0 - h * alt.delta_mu, alt.sigma0 - h * alt.delta_sigma);
        let f2 = Genotype::new(alt.kernel, mu0 + h * alt.delta_mu, alt.sigma0 + h * alt.delta_sigma);
        let s = Self {
            label: String::new(),
            n,
            r,
            d_cm: None,
            theta: alt.theta0,
            f1,
            f2,
            fit_kernel: alt.kernel,
            alpha: 0.05,
            n_reps: 1000,
            seed: 1,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_reps(mut self, n_reps: usize, seed: u64) -> Self {
        self.n_reps = n_reps;
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 8 {
            return Err(Error::InvalidInput(format!("sample size {} below 8", self.n)));
        }
        if !(self.r > 0.0 && self.r < 1.0) {
            return Err(Error::Domain(format!("r = {} outside (0, 1)", self.r)));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::Domain(format!("theta = {} outside [0, 1]", self.theta)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Domain(format!("alpha = {} outside (0, 1)", self.alpha)));
        }
        for g in [self.f1, self.f2] {
            LocScaleParams::new(g.mu, g.sigma)?;
        }
        if self.n_reps == 0 {
            return Err(Error::InvalidInput("n_reps must be positive".into()));
        }
        Ok(())
    }

    /// `f₁ = f₂`.
    pub fn is_null(&self) -> bool {
        self.f1 == self.f2
    }

    /// The same design with both genotypes replaced by `f0`.
    pub fn null_version(&self, f0: Genotype) -> Self {
        Self {
            f1: f0,
            f2: f0,
            ..self.clone()
        }
    }

    /// Member of the fit kernel closest in weighted KL information to the
    /// alternative, with that information.
    pub fn kl_null(&self) -> Result<(Genotype, f64)> {
        let res = kl_information(
            backcross_group_probs(self.r),
            KlComponent { kernel: self.f1.kernel, params: self.f1.params() },
            KlComponent { kernel: self.f2.kernel, params: self.f2.params() },
            self.theta,
            self.fit_kernel,
        )?;
        Ok((Genotype::new(self.fit_kernel, res.null.mu, res.null.sigma), res.kl))
    }
}

/// Runs the experiment described by a simulation file.
pub fn run_config(cfg: &SimConfig) -> Result<Vec<ExperimentRow>> {
    cfg.validate()?;
    let scenario = cfg.to_scenario()?;
    let cal = &cfg.calibration;
    match cfg.scenario.experiment {
        ExperimentKind::Type1 => type1_experiment(
            &scenario,
            &cfg.scenario.methods,
            &cfg.fit,
            cal.table_size,
            cal.table_seed,
            cfg.null_reps(),
        ),
        ExperimentKind::Power => power_experiment(
            &scenario,
            &cfg.scenario.methods,
            &cfg.fit,
            cal.lrt,
            cfg.null_reps(),
            cal.table_size,
            cal.table_seed,
        ),
    }
}

/// Multinomial group sizes with cell probabilities `((1−r)/2, r/2, r/2, (1−r)/2)`.
pub fn gen_group_sizes<R: Rng + ?Sized>(n: usize, r: f64, rng: &mut R) -> Result<[usize; 4]> {
    if n == 0 {
        return Err(Error::InvalidInput("n must be positive".into()));
    }
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::Domain(format!("r = {r} outside [0, 1]")));
    }
    let binom = |trials: usize, p: f64, rng: &mut R| -> usize {
        if trials == 0 || p <= 0.0 {
            0
        } else if p >= 1.0 {
            trials
        } else {
            Binomial::new(trials as u64, p).expect("valid binomial").sample(rng) as usize
        }
    };
    let p = backcross_group_probs(r);
    let n1 = binom(n, p[0], rng);
    let rest = n - n1;
    let n2 = binom(rest, p[1] / (1.0 - p[0]), rng);
    let n3 = binom(rest - n2, p[2] / (p[2] + p[3]), rng);
    Ok([n1, n2, n3, rest - n2 - n3])
}

/// One dataset for `scenario`. Group sizes are redrawn while group 1 or 4
/// has fewer than two members.
pub fn gen_data<R: Rng + ?Sized>(scenario: &SimScenario, rng: &mut R) -> Result<PhenotypeGroups> {
    let mut sizes = gen_group_sizes(scenario.n, scenario.r, rng)?;
    let mut attempts = 1;
    while sizes[0] < 2 || sizes[3] < 2 {
        if attempts == MAX_SIZE_REDRAWS {
            return Err(Error::DegenerateData(format!(
                "groups 1 and 4 kept fewer than two members after {MAX_SIZE_REDRAWS} draws"
            )));
        }
        log::debug!("redrawing group sizes {sizes:?}");
        sizes = gen_group_sizes(scenario.n, scenario.r, rng)?;
        attempts += 1;
    }
    let (f1, f2, th) = (scenario.f1, scenario.f2, scenario.theta);
    let g1: Vec<f64> = (0..sizes[0]).map(|_| f1.sample(rng)).collect();
    let g2: Vec<f64> = (0..sizes[1])
        .map(|_| if rng.gen_bool(th) { f1.sample(rng) } else { f2.sample(rng) })
        .collect();
    let g3: Vec<f64> = (0..sizes[2])
        .map(|_| if rng.gen_bool(1.0 - th) { f1.sample(rng) } else { f2.sample(rng) })
        .collect();
    let g4: Vec<f64> = (0..sizes[3]).map(|_| f2.sample(rng)).collect();
    PhenotypeGroups::new(g1, g2, g3, g4)
}

/// A QTL placed inside one marker interval of a simulated chromosome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedQtl {
    /// Index of the interval (0 for the first pair of markers).
    pub interval: usize,
    /// Position as a fraction of the interval's map length.
    pub theta: f64,
    /// Phenotype distribution of QTL homozygotes.
    pub f1: Genotype,
    /// Phenotype distribution of QTL heterozygotes.
    pub f2: Genotype,
}

/// A backcross of `n` individuals genotyped at markers `positions_cm`
/// without crossover interference, with phenotypes from `qtl` or, when there
/// is none, from `background`. Individuals are named `i0, i1, ...`.
pub fn gen_scan_dataset<R: Rng + ?Sized>(
    positions_cm: &[f64],
    n: usize,
    qtl: Option<&PlantedQtl>,
    background: Genotype,
    rng: &mut R,
) -> Result<ScanDataset> {
    let markers: Vec<Marker> = positions_cm
        .iter()
        .enumerate()
        .map(|(i, &p)| Marker {
            name: format!("M{}", i + 1),
            position_cm: p,
        })
        .collect();
    if markers.len() < 2 || positions_cm.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Validation("need at least two strictly increasing marker positions".into()));
    }
    if let Some(q) = qtl {
        if q.interval + 1 >= markers.len() || !(q.theta > 0.0 && q.theta < 1.0) {
            return Err(Error::InvalidInput("planted QTL must lie strictly inside an existing interval".into()));
        }
    }
    let mut genotypes = Vec::with_capacity(n);
    let mut phenotypes = Vec::with_capacity(n);
    for _ in 0..n {
        let mut calls = Vec::with_capacity(markers.len());
        let mut state = rng.gen_bool(0.5);
        calls.push(Some(state));
        let mut qtl_state = None;
        for k in 1..markers.len() {
            let (a, b) = (positions_cm[k - 1], positions_cm[k]);
            match qtl.filter(|q| q.interval == k - 1) {
                Some(q) => {
                    let at = a + q.theta * (b - a);
                    if rng.gen_bool(haldane(at - a)?) {
                        state = !state;
                    }
                    qtl_state = Some(state);
                    if rng.gen_bool(haldane(b - at)?) {
                        state = !state;
                    }
                }
                None => {
                    if rng.gen_bool(haldane(b - a)?) {
                        state = !state;
                    }
                }
            }
            calls.push(Some(state));
        }
        let y = match (qtl, qtl_state) {
            (Some(q), Some(true)) => q.f1.sample(rng),
            (Some(q), _) => q.f2.sample(rng),
            (None, _) => background.sample(rng),
        };
        genotypes.push(calls);
        phenotypes.push(y);
    }
    Ok(ScanDataset {
        markers,
        ids: (0..n).map(|i| format!("i{i}")).collect(),
        genotypes,
        phenotypes,
        dropped_without_phenotype: 0,
    })
}
