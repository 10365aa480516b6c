//! Likelihood ratio statistics for a QTL effect in the flanking-marker interval.
//!
//! `R_n = 2{ℓ(full) − ℓ(null)}` tests for an effect in location and scale,
//! `R_n* = 2{ℓ(equal scale) − ℓ(null)}` for a location effect with a common
//! scale. Both are referred to stored draws of their limiting laws.

use serde::{Deserialize, Serialize};

use crate::asymptotics::{davies_pvalue, tau, NullDistTable, NullKind};
use crate::error::{Error, Result};
use crate::estimate::{fit_equal_scale, fit_null, fit_profiled, FitConfig, MixtureFit, ModelKind};
use crate::kernel::KernelFamily;
use crate::likelihood::{IntervalConfig, PhenotypeGroups};

/// Statistics within this distance below zero are rounding noise.
const NEGATIVE_NOISE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatisticKind {
    Full,
    EqualScale,
    ScoreForm,
}

impl StatisticKind {
    /// Null table kind the statistic is referred to.
    pub fn null_kind(&self) -> NullKind {
        match self {
            StatisticKind::EqualScale => NullKind::Star,
            _ => NullKind::Full,
        }
    }
}

/// A computed statistic with its fits and p-values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "OutcomeRecord")]
pub struct TestOutcome {
    pub statistic: f64,
    pub kind: StatisticKind,
    pub p_value_rep: f64,
    pub p_value_davies: Option<f64>,
    pub theta_hat: f64,
    pub fit: MixtureFit,
    pub null_fit: MixtureFit,
}

/// Flat JSON form of a [`TestOutcome`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub statistic: f64,
    pub kind: StatisticKind,
    pub p_value_rep: f64,
    pub p_value_davies: Option<f64>,
    pub theta_hat: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub mu0: f64,
    pub sigma0: f64,
    pub converged: bool,
}

impl From<TestOutcome> for OutcomeRecord {
    fn from(o: TestOutcome) -> Self {
        o.record()
    }
}

impl TestOutcome {
    pub fn record(&self) -> OutcomeRecord {
        let p = &self.fit.params;
        let p0 = &self.null_fit.params.comp1;
        OutcomeRecord {
            statistic: self.statistic,
            kind: self.kind,
            p_value_rep: self.p_value_rep,
            p_value_davies: self.p_value_davies,
            theta_hat: self.theta_hat,
            mu1: p.comp1.mu,
            mu2: p.comp2.mu,
            sigma1: p.comp1.sigma,
            sigma2: p.comp2.sigma,
            mu0: p0.mu,
            sigma0: p0.sigma,
            converged: self.fit.converged,
        }
    }

    /// Adds the Davies approximation for recombination fraction `r`.
    pub fn with_davies(mut self, r: f64) -> Result<Self> {
        self.p_value_davies = Some(davies_pvalue(self.statistic, r, self.kind.null_kind())?);
        Ok(self)
    }
}

/// `2(alt − null)`, with rounding noise below zero set to zero.
pub(crate) fn ratio_statistic(alt: &MixtureFit, null: &MixtureFit) -> f64 {
    let s = 2.0 * (alt.loglik - null.loglik);
    if s < 0.0 {
        if s < -NEGATIVE_NOISE {
            log::warn!("likelihood ratio statistic {s:.3e} below zero; set to 0");
        } else {
            log::debug!("likelihood ratio statistic {s:.3e} clamped to 0");
        }
        0.0
    } else {
        s
    }
}

fn outcome(
    kind: StatisticKind,
    fit: MixtureFit,
    null_fit: &MixtureFit,
    table: &NullDistTable,
) -> TestOutcome {
    let statistic = ratio_statistic(&fit, null_fit);
    TestOutcome {
        statistic,
        kind,
        p_value_rep: table.pvalue(statistic),
        p_value_davies: None,
        theta_hat: fit.params.theta,
        fit,
        null_fit: null_fit.clone(),
    }
}

/// Both statistics from one set of fits; the full fit is seeded from the
/// equal-scale optimum so that `R_n ≥ R_n*`.
pub fn lrt_both(
    groups: &PhenotypeGroups,
    kernel: KernelFamily,
    interval: &IntervalConfig,
    cfg: &FitConfig,
    full_table: &NullDistTable,
    star_table: &NullDistTable,
) -> Result<(TestOutcome, TestOutcome)> {
    full_table.check_matches(interval.r, NullKind::Full)?;
    star_table.check_matches(interval.r, NullKind::Star)?;
    let null = fit_null(groups, kernel)?;
    let eq = fit_equal_scale(groups, kernel, cfg)?;
    let full = fit_profiled(groups, kernel, cfg, ModelKind::Full, &[eq.params])?;
    Ok((
        outcome(StatisticKind::Full, full, &null, full_table),
        outcome(StatisticKind::EqualScale, eq, &null, star_table),
    ))
}

/// `R_n` referred to a table of its limiting law.
pub fn lrt_full(
    groups: &PhenotypeGroups,
    kernel: KernelFamily,
    interval: &IntervalConfig,
    cfg: &FitConfig,
    nulldist: &NullDistTable,
) -> Result<TestOutcome> {
    nulldist.check_matches(interval.r, NullKind::Full)?;
    let null = fit_null(groups, kernel)?;
    let eq = fit_equal_scale(groups, kernel, cfg)?;
    let full = fit_profiled(groups, kernel, cfg, ModelKind::Full, &[eq.params])?;
    Ok(outcome(StatisticKind::Full, full, &null, nulldist))
}

/// `R_n*` referred to a table of its limiting law.
pub fn lrt_equal_scale(
    groups: &PhenotypeGroups,
    kernel: KernelFamily,
    interval: &IntervalConfig,
    cfg: &FitConfig,
    nulldist: &NullDistTable,
) -> Result<TestOutcome> {
    nulldist.check_matches(interval.r, NullKind::Star)?;
    let null = fit_null(groups, kernel)?;
    let eq = fit_equal_scale(groups, kernel, cfg)?;
    Ok(outcome(StatisticKind::EqualScale, eq, &null, nulldist))
}

/// Per-group sums of the location and scale scores at the fitted null.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreVectors {
    /// `aᵢ = Σⱼ (T(zᵢⱼ), U(zᵢⱼ))` for groups 1 to 4.
    pub a: [[f64; 2]; 4],
}

impl ScoreVectors {
    /// Scores evaluated at the residuals `(y − μ̂₀)/σ̂₀` of the null fit.
    pub fn compute(groups: &PhenotypeGroups, kernel: KernelFamily) -> Result<Self> {
        let null = fit_null(groups, kernel)?.params.comp1;
        let mut a = [[0.0; 2]; 4];
        for (i, g) in groups.groups().iter().enumerate() {
            for &y in g {
                let (t, u) = kernel.score((y - null.mu) / null.sigma);
                a[i][0] += t;
                a[i][1] += u;
            }
        }
        Ok(Self { a })
    }

    /// `b(θ) = a₁ − a₄ + (2θ − 1)(a₂ − a₃)`.
    pub fn b_of_theta(&self, theta: f64) -> [f64; 2] {
        let [a1, a2, a3, a4] = self.a;
        let c = 2.0 * theta - 1.0;
        [
            a1[0] - a4[0] + c * (a2[0] - a3[0]),
            a1[1] - a4[1] + c * (a2[1] - a3[1]),
        ]
    }
}

/// Score-form approximation `sup_θ b(θ)ᵀ{nτ(θ)A}⁻¹b(θ)` of `R_n` over a uniform grid.
pub fn score_form_statistic(
    groups: &PhenotypeGroups,
    kernel: KernelFamily,
    interval: &IntervalConfig,
    theta_grid_size: usize,
) -> Result<f64> {
    if theta_grid_size < 2 {
        return Err(Error::InvalidInput("theta grid needs at least two points".into()));
    }
    let info = kernel.info_matrix();
    if !info.is_positive_definite() {
        return Err(Error::Numerical("information matrix is singular".into()));
    }
    let scores = ScoreVectors::compute(groups, kernel)?;
    let n = groups.n() as f64;
    let m = (theta_grid_size - 1) as f64;
    let sup = (0..theta_grid_size)
        .map(|k| {
            let th = k as f64 / m;
            info.inverse_quad_form(scores.b_of_theta(th)) / (n * tau(interval.r, th))
        })
        .fold(0.0f64, f64::max);
    Ok(sup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asymptotics::{sample_r, sample_rstar};
    use crate::kernel::LocScaleParams;
    use crate::rng;

    fn tables(r: f64) -> (NullDistTable, NullDistTable) {
        (sample_r(r, 4_000, 1).unwrap(), sample_rstar(r, 4_000, 2).unwrap())
    }

    fn data(seed: u64, sizes: [usize; 4], k: KernelFamily, shift: f64, scale: f64) -> PhenotypeGroups {
        let mut r = rng::stream(seed, 0);
        let mut d = |n: usize, p: LocScaleParams| -> Vec<f64> { (0..n).map(|_| k.sample(&mut r, p)).collect() };
        let a = LocScaleParams { mu: 0.0, sigma: 1.0 };
        let b = LocScaleParams { mu: shift, sigma: scale };
        PhenotypeGroups::new(d(sizes[0], a), d(sizes[1], a), d(sizes[2], b), d(sizes[3], b)).unwrap()
    }

    #[test]
    fn identical_groups_give_zero() {
        // every group has the same empirical distribution: the null is optimal
        let base = vec![-1.2, -0.3, 0.4, 1.1];
        let g = PhenotypeGroups::new(base.clone(), base.clone(), base.clone(), base).unwrap();
        let iv = IntervalConfig::from_r(0.1).unwrap();
        let (tf, ts) = tables(0.1);
        let (f, s) = lrt_both(&g, KernelFamily::Normal, &iv, &FitConfig::default(), &tf, &ts).unwrap();
        assert!(f.statistic < 1e-7 && s.statistic < 1e-7);
        if f.statistic == 0.0 {
            assert_eq!(f.p_value_rep, 1.0);
        }
    }

    #[test]
    fn table_mismatch_is_rejected() {
        let g = data(1, [10, 2, 2, 10], KernelFamily::Normal, 1.0, 1.0);
        let iv = IntervalConfig::from_r(0.2).unwrap();
        let (tf, ts) = tables(0.1);
        let cfg = FitConfig::default();
        assert!(matches!(lrt_full(&g, KernelFamily::Normal, &iv, &cfg, &tf), Err(Error::InvalidInput(_))));
        let iv = IntervalConfig::from_r(0.1).unwrap();
        assert!(lrt_full(&g, KernelFamily::Normal, &iv, &cfg, &ts).is_err());
        assert!(lrt_equal_scale(&g, KernelFamily::Normal, &iv, &cfg, &ts).is_ok());
    }

    #[test]
    fn strong_location_effect_is_detected() {
        let g = data(2, [60, 5, 5, 60], KernelFamily::Normal, 2.0, 1.0);
        let iv = IntervalConfig::from_r(0.0476).unwrap();
        let (tf, ts) = tables(0.0476);
        let (f, s) = lrt_both(&g, KernelFamily::Normal, &iv, &FitConfig::default(), &tf, &ts).unwrap();
        assert!(f.statistic >= s.statistic);
        assert!(f.p_value_rep < 0.01 && s.p_value_rep < 0.01);
        let f = f.with_davies(iv.r).unwrap();
        assert!(f.p_value_davies.unwrap() < 0.01);
    }

    #[test]
    fn outcome_json_has_flat_fields() {
        let g = data(3, [20, 3, 3, 20], KernelFamily::Logistic, 0.5, 1.5);
        let iv = IntervalConfig::from_r(0.1).unwrap();
        let (tf, _) = tables(0.1);
        let o = lrt_full(&g, KernelFamily::Logistic, &iv, &FitConfig::default(), &tf).unwrap();
        let v: serde_json::Value = serde_json::to_value(&o).unwrap();
        for key in [
            "statistic", "kind", "p_value_rep", "p_value_davies", "theta_hat", "mu1", "mu2", "sigma1",
            "sigma2", "mu0", "sigma0", "converged",
        ] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["kind"], "full");
    }

    #[test]
    fn score_vectors_identity() {
        let g = data(4, [15, 4, 6, 15], KernelFamily::Normal, 0.7, 1.0);
        let s = ScoreVectors::compute(&g, KernelFamily::Normal).unwrap();
        let b = s.b_of_theta(0.5);
        assert_eq!(b, [s.a[0][0] - s.a[3][0], s.a[0][1] - s.a[3][1]]);
        // normal scores at the fitted null sum to zero over all groups
        let tot: f64 = s.a.iter().map(|x| x[0]).sum();
        let totu: f64 = s.a.iter().map(|x| x[1]).sum();
        assert!(tot.abs() < 1e-9 && totu.abs() < 1e-9);
    }

    #[test]
    fn score_form_without_recombinants_peaks_at_midpoint() {
        let g = data(5, [30, 0, 0, 30], KernelFamily::Normal, 0.8, 1.0);
        let r = 0.2;
        let iv = IntervalConfig::from_r(r).unwrap();
        let s = ScoreVectors::compute(&g, KernelFamily::Normal).unwrap();
        let b = s.b_of_theta(0.3);
        let expected = KernelFamily::Normal.info_matrix().inverse_quad_form(b) / (60.0 * (1.0 - r));
        let got = score_form_statistic(&g, KernelFamily::Normal, &iv, 101).unwrap();
        assert!((got - expected).abs() < 1e-12 * expected.max(1.0));
    }

    #[test]
    fn score_form_is_zero_for_balanced_scores() {
        let base = vec![-1.0, 0.5, 2.0];
        let g = PhenotypeGroups::new(base.clone(), base.clone(), base.clone(), base).unwrap();
        let iv = IntervalConfig::from_r(0.3).unwrap();
        assert!(score_form_statistic(&g, KernelFamily::Logistic, &iv, 11).unwrap() < 1e-20);
    }
}
