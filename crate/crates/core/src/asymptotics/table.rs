//! Stored null distributions and Monte Carlo p-values.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tables smaller than this give coarse p-values; they are accepted with a warning.
const RECOMMENDED_MIN: usize = 10_000;

/// Which supremum a table describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NullKind {
    /// `sup {Z₁² + Z₂²}`, the limit of the location-and-scale statistic.
    #[serde(rename = "R_full")]
    Full,
    /// `sup Z₁²`, the limit of the equal-scale statistic.
    #[serde(rename = "R_star")]
    Star,
}

impl NullKind {
    /// Degrees of freedom of the pointwise χ² marginal.
    pub fn dof(&self) -> u32 {
        match self {
            NullKind::Full => 2,
            NullKind::Star => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleMethod {
    Representation,
    Oracle,
}

/// JSON sidecar describing a stored table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableMeta {
    pub r: f64,
    pub kind: NullKind,
    #[serde(rename = "N")]
    pub n: usize,
    pub seed: u64,
    pub method: SampleMethod,
}

/// Sorted draws from a limiting null distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullDistTable {
    pub r: f64,
    pub kind: NullKind,
    samples: Vec<f64>,
    pub seed: u64,
    pub method: SampleMethod,
}

impl NullDistTable {
    /// Builds a table; the draws are sorted here.
    pub fn from_samples(
        r: f64,
        kind: NullKind,
        mut samples: Vec<f64>,
        seed: u64,
        method: SampleMethod,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidInput("null table has no samples".into()));
        }
        if let Some(bad) = samples.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidInput(format!("null table sample {bad} is not a finite non-negative value")));
        }
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::InvalidInput(format!("null table r = {r} outside (0, 1)")));
        }
        if samples.len() < RECOMMENDED_MIN {
            log::debug!("null table with only {} samples", samples.len());
        }
        samples.sort_by(f64::total_cmp);
        Ok(Self { r, kind, samples, seed, method })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn meta(&self) -> TableMeta {
        TableMeta {
            r: self.r,
            kind: self.kind,
            n: self.samples.len(),
            seed: self.seed,
            method: self.method,
        }
    }

    /// `(1 + #{samples ≥ stat}) / (N + 1)`.
    pub fn pvalue(&self, stat: f64) -> f64 {
        let below = self.samples.partition_point(|&s| s < stat);
        let at_or_above = self.samples.len() - below;
        (1 + at_or_above) as f64 / (self.samples.len() + 1) as f64
    }

    /// Smallest sample whose empirical distribution function reaches `p`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Domain(format!("probability {p} outside [0, 1]")));
        }
        let n = self.samples.len();
        let idx = ((p * n as f64).ceil() as usize).clamp(1, n) - 1;
        Ok(self.samples[idx])
    }

    /// Upper-α critical value.
    pub fn critical_value(&self, alpha: f64) -> Result<f64> {
        self.quantile(1.0 - alpha)
    }

    /// Fails unless the table was built for this `r` (to 4 decimals) and kind.
    pub fn check_matches(&self, r: f64, kind: NullKind) -> Result<()> {
        if kind != self.kind {
            return Err(Error::InvalidInput(format!(
                "null table is for {:?}, statistic needs {:?}",
                self.kind, kind
            )));
        }
        if (self.r - r).abs() > 5e-5 + 1e-12 {
            return Err(Error::InvalidInput(format!(
                "null table built for r = {}, interval has r = {r}",
                self.r
            )));
        }
        Ok(())
    }

    /// CSV body: header `sample`, one value per row.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::with_capacity(20 * self.samples.len() + 8);
        out.push_str("sample\n");
        for s in &self.samples {
            out.push_str(&format!("{s:?}\n"));
        }
        out
    }

    /// Parses a table from its CSV body and JSON sidecar.
    pub fn parse(csv_text: &str, sidecar_json: &str) -> Result<Self> {
        let meta: TableMeta = serde_json::from_str(sidecar_json)
            .map_err(|e| Error::parse(e.line(), format!("table sidecar: {e}")))?;
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(csv_text.as_bytes());
        let headers = rdr.headers().map_err(|e| Error::parse(1, e.to_string()))?;
        if headers.len() != 1 || &headers[0] != "sample" {
            return Err(Error::parse(1, "expected a single `sample` column"));
        }
        let mut samples = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| Error::parse(line, e.to_string()))?;
            let v: f64 = rec
                .get(0)
                .unwrap_or("")
                .parse()
                .map_err(|_| Error::parse(line, format!("`{}` is not a number", rec.get(0).unwrap_or(""))))?;
            samples.push(v);
        }
        if samples.len() != meta.n {
            return Err(Error::Validation(format!(
                "sidecar declares N = {} but the table holds {} samples",
                meta.n,
                samples.len()
            )));
        }
        Self::from_samples(meta.r, meta.kind, samples, meta.seed, meta.method)
    }

    /// Sidecar location for a table stored at `csv_path`.
    pub fn sidecar_path(csv_path: &Path) -> PathBuf {
        csv_path.with_extension("json")
    }

    /// Writes the CSV to `csv_path` and the sidecar next to it.
    pub fn write(&self, csv_path: &Path) -> Result<()> {
        fs::write(csv_path, self.to_csv_string())?;
        let meta = serde_json::to_string_pretty(&self.meta())
            .map_err(|e| Error::Numerical(format!("cannot encode sidecar: {e}")))?;
        fs::write(Self::sidecar_path(csv_path), meta)?;
        Ok(())
    }

    pub fn read(csv_path: &Path) -> Result<Self> {
        let csv_text = fs::read_to_string(csv_path)?;
        let meta = fs::read_to_string(Self::sidecar_path(csv_path))?;
        Self::parse(&csv_text, &meta)
    }
}

/// Monte Carlo p-value of `stat` against `table`.
pub fn pvalue(stat: f64, table: &NullDistTable) -> f64 {
    table.pvalue(stat)
}
