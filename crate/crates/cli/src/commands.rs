//! Subcommand implementations.

use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use bcqtl::asymptotics::{sample_null, NullDistTable};
use bcqtl::io::{load_dataset, read_groups};
use bcqtl::lrt::{lrt_equal_scale, lrt_full};
use bcqtl::nonparam::{ad_ksample, ks_ksample, permutation_pvalue};
use bcqtl::scan::{scan as run_scan, ScanConfig};
use bcqtl::sim::{run_config, KlCase, SimConfig};
use bcqtl::{Error, FitConfig, IntervalConfig, NullKind, Result};

use crate::{CritvalArgs, IntervalArg, KlArgs, OutFormat, ScanArgs, SimulateArgs, TestArgs, TestMethod};

type RankTest = fn(&[Vec<f64>]) -> Result<f64>;

fn io_err(e: impl std::error::Error + Send + Sync + 'static) -> Error {
    Error::Io(io::Error::other(e))
}

fn interval(arg: &IntervalArg) -> Result<IntervalConfig> {
    match (arg.r, arg.d) {
        (Some(r), None) => IntervalConfig::from_r(r),
        (None, Some(d)) => IntervalConfig::from_distance(d),
        _ => Err(Error::InvalidInput("give exactly one of --r and --d".into())),
    }
}

fn write_csv<T: Serialize>(out: impl Write, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(io_err)?;
    }
    w.flush()?;
    Ok(())
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(io_err)?;
    println!("{text}");
    Ok(())
}

#[derive(Serialize)]
struct CritvalRow {
    alpha: f64,
    critical_value: f64,
}

pub fn critval(a: &CritvalArgs) -> Result<()> {
    let iv = interval(&a.interval)?;
    let table = sample_null(a.kind.into(), iv.r, a.reps, a.seed)?;
    let rows = a
        .alpha
        .iter()
        .map(|&alpha| {
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(Error::Domain(format!("alpha = {alpha} outside (0, 1)")));
            }
            Ok(CritvalRow {
                alpha,
                critical_value: table.critical_value(alpha)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(path) = &a.save {
        table.write(path)?;
    }
    write_csv(io::stdout().lock(), &rows)
}

#[derive(Serialize)]
struct RankTestRecord {
    method: &'static str,
    statistic: f64,
    p_value: f64,
    permutations: usize,
}

pub fn test(a: &TestArgs) -> Result<()> {
    let groups = read_groups(&a.input)?;
    if a.method != TestMethod::Lrt {
        let (name, f): (&str, RankTest) = match a.method {
            TestMethod::Ks => ("KS", ks_ksample),
            _ => ("AD", ad_ksample),
        };
        let rec = RankTestRecord {
            method: name,
            statistic: f(groups.groups())?,
            p_value: permutation_pvalue(groups.groups(), f, a.reps, a.seed)?,
            permutations: a.reps,
        };
        return match a.out {
            OutFormat::Json => print_json(&rec),
            OutFormat::Csv => write_csv(io::stdout().lock(), &[rec]),
        };
    }
    let iv = interval(&a.interval)?;
    let kind = if a.equal_scale { NullKind::Star } else { NullKind::Full };
    let table = match &a.table {
        Some(path) => NullDistTable::read(path)?,
        None => sample_null(kind, iv.r, a.reps, a.seed)?,
    };
    let cfg = FitConfig::default();
    let kernel = a.kernel.into();
    let mut outcome = if a.equal_scale {
        lrt_equal_scale(&groups, kernel, &iv, &cfg, &table)?
    } else {
        lrt_full(&groups, kernel, &iv, &cfg, &table)?
    };
    if a.davies {
        outcome = outcome.with_davies(iv.r)?;
    }
    if !outcome.fit.converged {
        log::warn!("fit did not converge; the statistic is a lower bound");
    }
    match a.out {
        OutFormat::Json => print_json(&outcome),
        OutFormat::Csv => write_csv(io::stdout().lock(), &[outcome.record()]),
    }
}

pub fn scan(a: &ScanArgs) -> Result<()> {
    let ds = load_dataset(&a.map, &a.geno, &a.pheno)?;
    let cfg = ScanConfig {
        kernel: a.kernel.into(),
        fit: FitConfig::default(),
        null_draws: a.reps,
        seed: a.seed,
        nonparam: a.nonparam,
        permutations: a.permutations,
        normality: a.normality,
    };
    let rows = run_scan(&ds, &cfg)?;
    let untestable = rows.iter().filter(|r| !r.testable).count();
    if untestable > 0 {
        log::warn!("{untestable} of {} intervals could not be tested", rows.len());
    }
    write_csv(fs::File::create(&a.out)?, &rows)
}

#[derive(Serialize)]
struct Manifest<'a> {
    program: &'static str,
    version: &'static str,
    config: &'a SimConfig,
    n_reps: usize,
    null_reps: usize,
    table_size: usize,
    seed: u64,
    table_seed: u64,
    rows: usize,
    elapsed_seconds: f64,
}

fn manifest_path(out: &Path) -> std::path::PathBuf {
    out.with_extension("manifest.json")
}

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    let mut cfg = SimConfig::from_toml_str(&fs::read_to_string(&a.config)?)?;
    if a.full {
        cfg.calibration.full = true;
    }
    let start = Instant::now();
    let rows = run_config(&cfg)?;
    write_csv(fs::File::create(&a.out)?, &rows)?;
    let manifest = Manifest {
        program: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config: &cfg,
        n_reps: cfg.n_reps(),
        null_reps: cfg.null_reps(),
        table_size: cfg.calibration.table_size,
        seed: cfg.scenario.seed,
        table_seed: cfg.calibration.table_seed,
        rows: rows.len(),
        elapsed_seconds: start.elapsed().as_secs_f64(),
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(io_err)?;
    fs::write(manifest_path(&a.out), text + "\n")?;
    Ok(())
}

#[derive(Serialize)]
struct KlRecord {
    label: String,
    r: f64,
    theta: f64,
    kl: f64,
    mu0: f64,
    sigma0: f64,
}

pub fn kl(a: &KlArgs) -> Result<()> {
    let case = KlCase::from_toml_str(&fs::read_to_string(&a.config)?)?;
    let s = case.to_scenario()?;
    let (f0, kl) = s.kl_null()?;
    print_json(&KlRecord {
        label: s.label,
        r: s.r,
        theta: s.theta,
        kl,
        mu0: f0.mu,
        sigma0: f0.sigma,
    })
}
