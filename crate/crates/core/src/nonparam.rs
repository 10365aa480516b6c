//! Rank-based k-sample tests used as competitors to the likelihood ratio tests.
//!
//! * Kiefer's k-sample Kolmogorov–Smirnov statistic
//!   `T = sup_y Σᵢ nᵢ {F̂ᵢ(y) − F̂(y)}²`.
//! * The Scholz–Stephens k-sample Anderson–Darling statistic, standardised
//!   as `(A² − (k − 1)) / σ_N`. Without ties the continuous form `A²_kN` is
//!   used; with ties the midrank form `A²_akN`.
//!
//! Empty samples are dropped before either statistic is computed.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::rng::stream;

/// Smallest number of null replicates accepted by [`mc_calibrate`].
pub const MIN_CALIBRATION_REPS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NonparamTest {
    #[serde(rename = "KS_k")]
    Ks,
    #[serde(rename = "AD_k")]
    Ad,
}

impl NonparamTest {
    pub fn statistic<S: AsRef<[f64]>>(&self, samples: &[S]) -> Result<f64> {
        match self {
            NonparamTest::Ks => ks_ksample(samples),
            NonparamTest::Ad => ad_ksample(samples),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonparamResult {
    /// Non-negative for KS; the standardised AD statistic may be negative.
    pub statistic: f64,
    pub test: NonparamTest,
    pub critical_value: Option<f64>,
    pub reject: Option<bool>,
}

impl NonparamResult {
    pub fn new(test: NonparamTest, statistic: f64, critical_value: Option<f64>) -> Self {
        Self {
            statistic,
            test,
            critical_value,
            reject: critical_value.map(|c| statistic > c),
        }
    }
}

/// Which form of the Anderson–Darling statistic was evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdVariant {
    Continuous,
    Midrank,
}

/// Non-empty samples with their pooled, labelled and sorted observations.
struct Pooled {
    sizes: Vec<usize>,
    sorted: Vec<(f64, usize)>,
}

impl Pooled {
    fn new<S: AsRef<[f64]>>(samples: &[S]) -> Result<Self> {
        let kept: Vec<&[f64]> = samples.iter().map(|s| s.as_ref()).filter(|s| !s.is_empty()).collect();
        if kept.len() < 2 {
            return Err(Error::InvalidInput("k-sample tests need at least two non-empty samples".into()));
        }
        let mut sorted = Vec::with_capacity(kept.iter().map(|s| s.len()).sum());
        for (i, s) in kept.iter().enumerate() {
            for &y in s.iter() {
                if !y.is_finite() {
                    return Err(Error::InvalidInput(format!("non-finite observation {y}")));
                }
                sorted.push((y, i));
            }
        }
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self {
            sizes: kept.iter().map(|s| s.len()).collect(),
            sorted,
        })
    }

    fn n(&self) -> usize {
        self.sorted.len()
    }

    fn k(&self) -> usize {
        self.sizes.len()
    }

    /// Distinct values as `(multiplicity, per-sample counts at that value)`.
    fn runs(&self) -> Vec<(usize, Vec<usize>)> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < self.sorted.len() {
            let v = self.sorted[i].0;
            let mut counts = vec![0; self.k()];
            let start = i;
            while i < self.sorted.len() && self.sorted[i].0 == v {
                counts[self.sorted[i].1] += 1;
                i += 1;
            }
            out.push((i - start, counts));
        }
        out
    }
}

/// Kiefer's statistic, evaluated after each distinct pooled value.
pub fn ks_ksample<S: AsRef<[f64]>>(samples: &[S]) -> Result<f64> {
    let p = Pooled::new(samples)?;
    let n = p.n() as f64;
    let mut cum = vec![0usize; p.k()];
    let mut total = 0usize;
    let mut sup = 0.0f64;
    for (mult, counts) in p.runs() {
        total += mult;
        for (c, f) in cum.iter_mut().zip(&counts) {
            *c += f;
        }
        let pooled_cdf = total as f64 / n;
        let t: f64 = cum
            .iter()
            .zip(&p.sizes)
            .map(|(&c, &ni)| {
                let d = c as f64 / ni as f64 - pooled_cdf;
                ni as f64 * d * d
            })
            .sum();
        sup = sup.max(t);
    }
    Ok(sup)
}

/// Raw `A²` and the form used (continuous without ties, midrank with ties).
pub fn ad_ksample_raw<S: AsRef<[f64]>>(samples: &[S]) -> Result<(f64, AdVariant)> {
    let p = Pooled::new(samples)?;
    let runs = p.runs();
    if runs.len() == p.n() {
        Ok((ad_continuous(&p, &runs), AdVariant::Continuous))
    } else {
        Ok((ad_midrank(&p, &runs), AdVariant::Midrank))
    }
}

fn ad_continuous(p: &Pooled, runs: &[(usize, Vec<usize>)]) -> f64 {
    let n = p.n() as f64;
    let mut cum = vec![0usize; p.k()];
    let mut a2 = 0.0;
    // j runs over the first N − 1 order statistics
    for (j, (_, counts)) in runs.iter().enumerate().take(p.n() - 1) {
        for (c, f) in cum.iter_mut().zip(counts) {
            *c += f;
        }
        let jf = (j + 1) as f64;
        for (&m, &ni) in cum.iter().zip(&p.sizes) {
            let ni = ni as f64;
            a2 += (n * m as f64 - jf * ni).powi(2) / (jf * (n - jf)) / ni;
        }
    }
    a2 / n
}

fn ad_midrank(p: &Pooled, runs: &[(usize, Vec<usize>)]) -> f64 {
    let n = p.n() as f64;
    let mut cum = vec![0usize; p.k()];
    let mut b = 0usize;
    let mut a2 = 0.0;
    for (mult, counts) in runs {
        b += mult;
        let l = *mult as f64;
        let ba = b as f64 - 0.5 * l;
        let den = ba * (n - ba) - 0.25 * n * l;
        for (c, f) in cum.iter_mut().zip(counts) {
            *c += f;
        }
        if den <= 0.0 {
            continue;
        }
        for ((&m, &f), &ni) in cum.iter().zip(counts).zip(&p.sizes) {
            let ni = ni as f64;
            let ma = m as f64 - 0.5 * f as f64;
            a2 += l * (n * ma - ni * ba).powi(2) / den / ni;
        }
    }
    a2 * (n - 1.0) / (n * n)
}

/// Null variance of `A²` for sample sizes `sizes` (requires `N ≥ 4`).
pub fn ad_variance(sizes: &[usize]) -> Result<f64> {
    let n: usize = sizes.iter().sum();
    if n < 4 {
        return Err(Error::InvalidInput("Anderson–Darling variance needs at least 4 observations".into()));
    }
    let k = sizes.len() as f64;
    let nf = n as f64;
    let big_h: f64 = sizes.iter().map(|&s| 1.0 / s as f64).sum();
    // harmonic[i] = Σ_{j ≤ i} 1/j
    let mut harmonic = vec![0.0; n];
    for i in 1..n {
        harmonic[i] = harmonic[i - 1] + 1.0 / i as f64;
    }
    let h = harmonic[n - 1];
    let g: f64 = (1..=n - 2).map(|i| (h - harmonic[i]) / (n - i) as f64).sum();
    let a = (4.0 * g - 6.0) * (k - 1.0) + (10.0 - 6.0 * g) * big_h;
    let b = (2.0 * g - 4.0) * k * k + 8.0 * h * k + (2.0 * g - 14.0 * h - 4.0) * big_h - 8.0 * h + 4.0 * g
        - 6.0;
    let c = (6.0 * h + 2.0 * g - 2.0) * k * k + (4.0 * h - 4.0 * g + 6.0) * k + (2.0 * h - 6.0) * big_h
        + 4.0 * h;
    let d = (2.0 * h + 6.0) * k * k - 4.0 * h * k;
    Ok((a * nf.powi(3) + b * nf * nf + c * nf + d) / ((nf - 1.0) * (nf - 2.0) * (nf - 3.0)))
}

/// Standardised Anderson–Darling statistic `(A² − (k − 1)) / σ_N`.
pub fn ad_ksample<S: AsRef<[f64]>>(samples: &[S]) -> Result<f64> {
    let sizes: Vec<usize> = samples.iter().map(|s| s.as_ref().len()).filter(|&n| n > 0).collect();
    let (a2, _) = ad_ksample_raw(samples)?;
    let var = ad_variance(&sizes)?;
    Ok((a2 - (sizes.len() as f64 - 1.0)) / var.sqrt())
}

/// Upper-tail levels of the asymptotic Anderson–Darling table.
pub const AD_TABLE_ALPHAS: [f64; 5] = [0.25, 0.10, 0.05, 0.025, 0.01];
const AD_B0: [f64; 5] = [0.675, 1.281, 1.645, 1.960, 2.326];
const AD_B1: [f64; 5] = [-0.245, 0.250, 0.678, 1.149, 1.822];
const AD_B2: [f64; 5] = [-0.105, -0.305, -0.362, -0.391, -0.396];

/// Asymptotic critical value of the standardised statistic with `k` samples,
/// `b₀ + b₁/√m + b₂/m` with `m = k − 1`, interpolated linearly in `log α`
/// between tabulated levels.
pub fn ad_asymptotic_critical(k: usize, alpha: f64) -> Result<f64> {
    if k < 2 {
        return Err(Error::InvalidInput("need at least two samples".into()));
    }
    if !(AD_TABLE_ALPHAS[4]..=AD_TABLE_ALPHAS[0]).contains(&alpha) {
        return Err(Error::Domain(format!("α = {alpha} outside the tabulated range [0.01, 0.25]")));
    }
    let m = (k - 1) as f64;
    let t: Vec<f64> = (0..5).map(|i| AD_B0[i] + AD_B1[i] / m.sqrt() + AD_B2[i] / m).collect();
    let la = alpha.ln();
    for i in 0..4 {
        let (hi, lo) = (AD_TABLE_ALPHAS[i].ln(), AD_TABLE_ALPHAS[i + 1].ln());
        if la <= hi && la >= lo {
            let w = (hi - la) / (hi - lo);
            return Ok(t[i] + w * (t[i + 1] - t[i]));
        }
    }
    unreachable!("α checked against the table range")
}

/// Empirical upper-α quantile of `test_fn` over `n_reps` datasets from
/// `null_sampler`; replicate `i` draws from stream `(seed, i)`.
pub fn mc_calibrate<D, F, G>(test_fn: F, null_sampler: G, n_reps: usize, alpha: f64, seed: u64) -> Result<f64>
where
    F: Fn(&D) -> Result<f64> + Sync,
    G: Fn(&mut ChaCha8Rng) -> Result<D> + Sync,
{
    if n_reps < MIN_CALIBRATION_REPS {
        return Err(Error::InvalidInput(format!(
            "Monte Carlo calibration needs at least {MIN_CALIBRATION_REPS} replicates"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("α = {alpha} outside (0, 1)")));
    }
    let mut stats = mc_statistics(&test_fn, &null_sampler, n_reps, seed)?;
    stats.sort_by(f64::total_cmp);
    Ok(upper_quantile(&stats, alpha))
}

/// Statistic values over `n_reps` null replicates, in replicate order.
pub fn mc_statistics<D, F, G>(test_fn: &F, null_sampler: &G, n_reps: usize, seed: u64) -> Result<Vec<f64>>
where
    F: Fn(&D) -> Result<f64> + Sync,
    G: Fn(&mut ChaCha8Rng) -> Result<D> + Sync,
{
    (0..n_reps)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, i as u64);
            test_fn(&null_sampler(&mut rng)?)
        })
        .collect()
}

/// Smallest sorted value whose empirical distribution function reaches `1 − α`.
pub fn upper_quantile(sorted: &[f64], alpha: f64) -> f64 {
    let n = sorted.len();
    let idx = (((1.0 - alpha) * n as f64).ceil() as usize).clamp(1, n) - 1;
    sorted[idx]
}

/// Upper tail of the Kolmogorov distribution, `P(K > λ)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if !(lambda > 0.0) {
        return 1.0;
    }
    if lambda < 1.18 {
        // theta-function form, fast for small λ
        let c = -std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let cdf: f64 = (0..20)
            .map(|j| {
                let k = (2 * j + 1) as f64;
                (c * k * k).exp()
            })
            .sum::<f64>()
            * (2.0 * std::f64::consts::PI).sqrt()
            / lambda;
        (1.0 - cdf).clamp(0.0, 1.0)
    } else {
        let sf: f64 = (1..=100)
            .map(|k| {
                let k = k as f64;
                let sign = if k as u64 % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * k * k * lambda * lambda).exp()
            })
            .sum();
        (2.0 * sf).clamp(0.0, 1.0)
    }
}

/// One-sample KS distance to the normal with the sample mean and standard
/// deviation, and its asymptotic p-value `P(K > √n·D)`. No correction for
/// the estimated parameters is applied.
pub fn ks_normality(sample: &[f64]) -> Result<(f64, f64)> {
    let n = sample.len();
    if n < 2 {
        return Err(Error::InvalidInput("normality check needs at least two values".into()));
    }
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite observation".into()));
    }
    let nf = n as f64;
    let mean = sample.iter().sum::<f64>() / nf;
    let sd = (sample.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt();
    if !(sd > 0.0) {
        return Err(Error::DegenerateData("normality check on a constant sample".into()));
    }
    let normal = Normal::new(mean, sd).expect("positive scale");
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let d = sorted
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let f = normal.cdf(y);
            (f - i as f64 / nf).max((i + 1) as f64 / nf - f)
        })
        .fold(0.0f64, f64::max);
    Ok((d, kolmogorov_sf(nf.sqrt() * d)))
}

/// Permutation p-value `(1 + #{T* ≥ T}) / (B + 1)` of `test_fn` over `n_perm`
/// random reassignments of the pooled values to samples of the same sizes.
/// Permutation `b` draws from stream `(seed, b)`.
pub fn permutation_pvalue<S, F>(samples: &[S], test_fn: F, n_perm: usize, seed: u64) -> Result<f64>
where
    S: AsRef<[f64]> + Sync,
    F: Fn(&[Vec<f64>]) -> Result<f64> + Sync,
{
    if n_perm == 0 {
        return Err(Error::InvalidInput("permutation count must be positive".into()));
    }
    let sizes: Vec<usize> = samples.iter().map(|s| s.as_ref().len()).collect();
    let pooled: Vec<f64> = samples.iter().flat_map(|s| s.as_ref().iter().copied()).collect();
    let split = |v: &[f64]| -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(sizes.len());
        let mut at = 0;
        for &m in &sizes {
            out.push(v[at..at + m].to_vec());
            at += m;
        }
        out
    };
    let observed = test_fn(&split(&pooled))?;
    let exceed = (0..n_perm)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(seed, b as u64);
            let mut v = pooled.clone();
            v.shuffle(&mut rng);
            Ok((test_fn(&split(&v))? >= observed) as usize)
        })
        .collect::<Result<Vec<usize>>>()?
        .into_iter()
        .sum::<usize>();
    Ok((1 + exceed) as f64 / (n_perm + 1) as f64)
}
