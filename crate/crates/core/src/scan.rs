//! Interval-by-interval likelihood ratio scan of a marker dataset.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{sample_null, NullDistTable, NullKind};
use crate::error::{Error, Result};
use crate::estimate::FitConfig;
use crate::io::ScanDataset;
use crate::kernel::KernelFamily;
use crate::likelihood::{haldane, IntervalConfig, PhenotypeGroups};
use crate::lrt::lrt_both;
use crate::nonparam::{ad_ksample, ks_ksample, ks_normality, permutation_pvalue};
use crate::rng::derive_seed;

/// Settings of a scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    pub kernel: KernelFamily,
    pub fit: FitConfig,
    /// Draws in each limiting-law table.
    pub null_draws: usize,
    pub seed: u64,
    /// Permutation p-values for the k-sample KS and AD tests.
    pub nonparam: bool,
    pub permutations: usize,
    /// One-sample KS normality checks of groups 1 and 4.
    pub normality: bool,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            kernel: KernelFamily::Normal,
            fit: FitConfig::default(),
            null_draws: 100_000,
            seed: 1,
            nonparam: false,
            permutations: 999,
            normality: false,
        }
    }
}

/// Results for one marker interval. Statistics are empty when the interval
/// could not be tested; `note` then says why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalResult {
    pub left_marker: String,
    pub right_marker: String,
    pub d_cm: f64,
    pub r: f64,
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
    pub n4: usize,
    pub testable: bool,
    #[serde(rename = "R_n")]
    pub r_n: Option<f64>,
    #[serde(rename = "p_R")]
    pub p_r: Option<f64>,
    #[serde(rename = "R_n_star")]
    pub r_n_star: Option<f64>,
    #[serde(rename = "p_Rstar")]
    pub p_rstar: Option<f64>,
    pub theta_hat: Option<f64>,
    pub ks_p: Option<f64>,
    pub ad_p: Option<f64>,
    pub normality_p_g1: Option<f64>,
    pub normality_p_g4: Option<f64>,
    pub note: Option<String>,
}

/// Phenotypes of interval `index` split by flanking genotypes, with the
/// interval's recombination fraction. Individuals missing either flanking
/// call are left out.
pub fn interval_groups(ds: &ScanDataset, index: usize) -> Result<(PhenotypeGroups, f64)> {
    if index >= ds.n_intervals() {
        return Err(Error::InvalidInput(format!(
            "interval {index} out of range (dataset has {})",
            ds.n_intervals()
        )));
    }
    let r = haldane(ds.markers[index + 1].position_cm - ds.markers[index].position_cm)?;
    let mut groups: [Vec<f64>; 4] = Default::default();
    for (calls, &y) in ds.genotypes.iter().zip(&ds.phenotypes) {
        let g = match (calls[index], calls[index + 1]) {
            (Some(true), Some(true)) => 0,
            (Some(true), Some(false)) => 1,
            (Some(false), Some(true)) => 2,
            (Some(false), Some(false)) => 3,
            _ => continue,
        };
        groups[g].push(y);
    }
    let [g1, g2, g3, g4] = groups;
    Ok((PhenotypeGroups::new(g1, g2, g3, g4)?, r))
}

type TablePair = Arc<(NullDistTable, NullDistTable)>;
type Slot = Arc<OnceLock<std::result::Result<TablePair, String>>>;

/// Limiting-law tables shared across intervals, keyed by `r` rounded to four
/// decimals. Each key is built once; the draws depend only on the key, the
/// table size and the seed.
pub struct NullTableCache {
    draws: usize,
    seed: u64,
    slots: Mutex<HashMap<i64, Slot>>,
}

impl NullTableCache {
    pub fn new(draws: usize, seed: u64) -> Self {
        Self {
            draws,
            seed,
            slots: Mutex::new(HashMap::new()),
        }
    }

    pub fn key(r: f64) -> i64 {
        (r * 1e4).round() as i64
    }

    /// Tables for `R_n` and `R_n*` at `r`.
    pub fn get(&self, r: f64) -> Result<TablePair> {
        let key = Self::key(r);
        let slot = {
            let mut slots = self.slots.lock().expect("cache lock");
            slots.entry(key).or_default().clone()
        };
        slot.get_or_init(|| {
            let rr = key as f64 / 1e4;
            let build = |kind: NullKind| {
                let tag = 2 * key as u64 + (kind == NullKind::Star) as u64;
                sample_null(kind, rr, self.draws, derive_seed(self.seed, tag))
            };
            match (build(NullKind::Full), build(NullKind::Star)) {
                (Ok(a), Ok(b)) => Ok(Arc::new((a, b))),
                (Err(e), _) | (_, Err(e)) => Err(e.to_string()),
            }
        })
        .clone()
        .map_err(Error::Numerical)
    }

    pub fn len(&self) -> usize {
        self.slots.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn scan_interval(ds: &ScanDataset, index: usize, cfg: &ScanConfig, cache: &NullTableCache) -> IntervalResult {
    let left = &ds.markers[index];
    let right = &ds.markers[index + 1];
    let mut row = IntervalResult {
        left_marker: left.name.clone(),
        right_marker: right.name.clone(),
        d_cm: right.position_cm - left.position_cm,
        r: f64::NAN,
        n1: 0,
        n2: 0,
        n3: 0,
        n4: 0,
        testable: false,
        r_n: None,
        p_r: None,
        r_n_star: None,
        p_rstar: None,
        theta_hat: None,
        ks_p: None,
        ad_p: None,
        normality_p_g1: None,
        normality_p_g4: None,
        note: None,
    };
    let (groups, r) = match interval_groups(ds, index) {
        Ok(v) => v,
        Err(e) => {
            row.note = Some(e.to_string());
            return row;
        }
    };
    row.r = r;
    [row.n1, row.n2, row.n3, row.n4] = groups.sizes();
    if let Err(e) = groups.check_fittable() {
        row.note = Some(format!("untestable: {e}"));
        return row;
    }
    row.testable = true;
    let mut notes = Vec::new();
    let lrt = cache.get(r).and_then(|tables| {
        let interval = IntervalConfig::from_r(r)?;
        lrt_both(&groups, cfg.kernel, &interval, &cfg.fit, &tables.0, &tables.1)
    });
    match lrt {
        Ok((full, eq)) => {
            if !full.fit.converged || !eq.fit.converged {
                notes.push("fit did not converge".to_string());
            }
            row.r_n = Some(full.statistic);
            row.p_r = Some(full.p_value_rep);
            row.r_n_star = Some(eq.statistic);
            row.p_rstar = Some(eq.p_value_rep);
            row.theta_hat = Some(full.theta_hat);
        }
        Err(e) => notes.push(format!("likelihood ratio tests failed: {e}")),
    }
    if cfg.nonparam {
        let seed = derive_seed(cfg.seed, 0x5ca0_0000 + index as u64);
        match permutation_pvalue(groups.groups(), ks_ksample, cfg.permutations, seed) {
            Ok(p) => row.ks_p = Some(p),
            Err(e) => notes.push(format!("KS failed: {e}")),
        }
        match permutation_pvalue(groups.groups(), ad_ksample, cfg.permutations, seed) {
            Ok(p) => row.ad_p = Some(p),
            Err(e) => notes.push(format!("AD failed: {e}")),
        }
    }
    if cfg.normality {
        row.normality_p_g1 = ks_normality(groups.group(1)).ok().map(|(_, p)| p);
        row.normality_p_g4 = ks_normality(groups.group(4)).ok().map(|(_, p)| p);
    }
    if !notes.is_empty() {
        row.note = Some(notes.join("; "));
    }
    row
}

/// Tests every interval of `ds`, in parallel. Failures are recorded in the
/// affected rows. The output depends only on the dataset and `cfg`.
pub fn scan(ds: &ScanDataset, cfg: &ScanConfig) -> Result<Vec<IntervalResult>> {
    scan_with_cache(ds, cfg, &NullTableCache::new(cfg.null_draws, cfg.seed))
}

/// [`scan`] with a caller-held table cache, which must use the same table
/// size and seed as `cfg`.
pub fn scan_with_cache(ds: &ScanDataset, cfg: &ScanConfig, cache: &NullTableCache) -> Result<Vec<IntervalResult>> {
    cfg.fit.validate()?;
    if cache.draws != cfg.null_draws || cache.seed != cfg.seed {
        return Err(Error::InvalidInput("table cache built with other settings".into()));
    }
    if cfg.null_draws == 0 {
        return Err(Error::InvalidInput("null table size must be positive".into()));
    }
    Ok((0..ds.n_intervals())
        .into_par_iter()
        .map(|i| scan_interval(ds, i, cfg, cache))
        .collect())
}
