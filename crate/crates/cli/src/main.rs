//! `bcqtl`: likelihood ratio tests for a QTL in a backcross marker interval.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

use bcqtl::{Error, KernelFamily, NullKind};

#[derive(Debug, Parser)]
#[command(name = "bcqtl", version, about = "Backcross interval QTL tests under location-scale kernels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Critical values of the limiting null laws.
    Critval(CritvalArgs),
    /// Test one interval from a groups CSV.
    Test(TestArgs),
    /// Test every interval of a marker dataset.
    Scan(ScanArgs),
    /// Run a type I error or power experiment from a TOML file.
    Simulate(SimulateArgs),
    /// KL information of an alternative from a TOML file.
    Kl(KlArgs),
}

/// Interval given by recombination fraction or map distance.
#[derive(Debug, Args)]
#[command(group(ArgGroup::new("interval").required(true).args(["r", "d"])))]
pub struct IntervalArg {
    /// Recombination fraction between the flanking markers.
    #[arg(long = "r")]
    pub r: Option<f64>,
    /// Map distance in cM (Haldane).
    #[arg(long = "d")]
    pub d: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Full,
    Star,
}

impl From<KindArg> for NullKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Full => NullKind::Full,
            KindArg::Star => NullKind::Star,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KernelArg {
    Normal,
    Logistic,
}

impl From<KernelArg> for KernelFamily {
    fn from(k: KernelArg) -> Self {
        match k {
            KernelArg::Normal => KernelFamily::Normal,
            KernelArg::Logistic => KernelFamily::Logistic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TestMethod {
    Lrt,
    Ks,
    Ad,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutFormat {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct CritvalArgs {
    #[command(flatten)]
    pub interval: IntervalArg,
    #[arg(long, value_enum)]
    pub kind: KindArg,
    /// Levels, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub alpha: Vec<f64>,
    /// Draws of the limiting law.
    #[arg(long, default_value_t = 100_000)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Also store the draws as CSV with a JSON sidecar.
    #[arg(long)]
    pub save: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = KernelArg::Normal)]
    pub kernel: KernelArg,
    #[command(flatten)]
    pub interval: IntervalArg,
    /// Report `R_n*` (location effect, common scale) instead of `R_n`.
    #[arg(long)]
    pub equal_scale: bool,
    /// Add the Davies tail approximation.
    #[arg(long)]
    pub davies: bool,
    #[arg(long, value_enum, default_value_t = TestMethod::Lrt)]
    pub method: TestMethod,
    /// Null table draws (likelihood ratio) or permutations (KS, AD).
    #[arg(long, default_value_t = 100_000)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Stored null table to use instead of fresh draws.
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutFormat::Json)]
    pub out: OutFormat,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    #[arg(long)]
    pub map: PathBuf,
    #[arg(long)]
    pub geno: PathBuf,
    #[arg(long)]
    pub pheno: PathBuf,
    #[arg(long, value_enum, default_value_t = KernelArg::Normal)]
    pub kernel: KernelArg,
    /// Permutation KS and AD p-values.
    #[arg(long)]
    pub nonparam: bool,
    #[arg(long, default_value_t = 999)]
    pub permutations: usize,
    /// KS normality checks of groups 1 and 4.
    #[arg(long)]
    pub normality: bool,
    /// Draws per null table.
    #[arg(long, default_value_t = 100_000)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// 10,000 replicates for the experiment and its calibration.
    #[arg(long)]
    pub full: bool,
}

#[derive(Debug, Args)]
pub struct KlArgs {
    #[arg(long)]
    pub config: PathBuf,
}

/// Process exit status for a failed command.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Numerical(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Critval(a) => commands::critval(&a),
        Command::Test(a) => commands::test(&a),
        Command::Scan(a) => commands::scan(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Kl(a) => commands::kl(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn numerical_failures_map_to_three() {
        assert_eq!(exit_code(&Error::Numerical("x".into())), 3);
        assert_eq!(exit_code(&Error::Validation("x".into())), 2);
        assert_eq!(exit_code(&Error::Domain("x".into())), 2);
    }

    #[test]
    fn command_definition_is_consistent() {
        Cli::command().debug_assert();
    }
}
