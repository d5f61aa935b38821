//! Command-line front end: argument parsing, subcommands and exit codes.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod output;
pub mod range;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use output::Format;

#[derive(Debug, Parser)]
#[command(name = "lidonor", version, about = "Stress-tuned Li donor qubits in silicon")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON object of constant overrides; falls back to $LIDONOR_CONFIG.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Single override, `key=value` in the units of `lidonor constants`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Output format; JSON for `simulate`, CSV otherwise.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Reserved; every path is deterministic.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Polar order of the phonon-shell quadrature (azimuthal order is twice this).
    #[arg(long, global = true)]
    pub quad_order: Option<usize>,
    /// Source of W10 in derived quantities.
    #[arg(long, global = true, value_enum, default_value = "closed-form")]
    pub rates: RatesArg,
    /// Fixed W21 in 1/s instead of the tabulated oracle.
    #[arg(long, global = true)]
    pub w21_override: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum RatesArg {
    ClosedForm,
    Oracle,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Material constants and derived quantities.
    Constants,
    /// Level structure against ε.
    Levels {
        #[arg(long, default_value = "0:0.5:0.05")]
        eps: String,
    },
    /// Lifetimes τ10 and τ21 against ε.
    Lifetimes {
        #[arg(long, default_value = "logN(0.001,1,31)")]
        eps: String,
    },
    /// Pair couplings against separation (nm).
    Coupling {
        #[arg(long, default_value = "logN(20,400,20)")]
        r: String,
        /// ε for the 1-0 transfer coupling.
        #[arg(long, default_value_t = 0.2)]
        eps10: f64,
        /// ε for the 2-1 transfer coupling.
        #[arg(long, default_value_t = 0.002)]
        eps21: f64,
        /// Add q-space quadrature columns (slow).
        #[arg(long)]
        oracle: bool,
    },
    /// Rabi frequency and π-pulse length of the ac stress drive.
    Rabi {
        /// Stress amplitude, dyn/cm².
        #[arg(long, default_value = "1e5")]
        amplitude: String,
        /// Qubit frequency ω10/2π in GHz.
        #[arg(long, conflicts_with = "eps")]
        freq_ghz: Option<f64>,
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Simulate a schedule file.
    Simulate {
        #[arg(long)]
        schedule: PathBuf,
        /// Time step in ns; chosen from the schedule when absent.
        #[arg(long)]
        dt_ns: Option<f64>,
        /// Population sampling interval in ns.
        #[arg(long)]
        sample_ns: Option<f64>,
        /// Validate and print the normalized schedule without simulating.
        #[arg(long)]
        validate_only: bool,
    },
    /// Quality factors, operating temperatures and figure tables.
    OperatingPoint(OperatingArgs),
    /// Compare production formulas with brute-force oracles.
    Verify {
        /// Skip the slow coupling quadratures.
        #[arg(long)]
        skip_couplings: bool,
    },
}

#[derive(Debug, Clone, Args)]
pub struct OperatingArgs {
    #[arg(long, value_enum, default_value = "point")]
    pub sweep: SweepArg,
    /// Separations, nm.
    #[arg(long, default_value = "50")]
    pub r: String,
    #[arg(long, default_value = "0.002")]
    pub eps: String,
    #[arg(long, default_value = "100")]
    pub temperature_mk: String,
    /// Target quality factors for the temperature sweep.
    #[arg(long, default_value = "1e3,1e4,3e4")]
    pub q: String,
    /// ħω21 held fixed in the temperature sweep, meV.
    #[arg(long, default_value_t = lidonor_core::operating::FIG3_HBAR_OMEGA21_MEV)]
    pub hbar_omega21_mev: f64,
    /// Add the closed form as printed next to the exact inversion (temperature sweep).
    #[arg(long)]
    pub printed: bool,
    /// ε of the 1-0 coupling column in the coupling sweep.
    #[arg(long, default_value_t = 0.2)]
    pub eps10: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepArg {
    Point,
    Fig1Lifetimes,
    Fig3Temperature,
    CouplingVsR,
    RatesVsOmega,
}

/// Exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_VERIFY_FAIL: i32 = 3;

/// Raised when any oracle comparison fails.
#[derive(Debug)]
pub struct VerifyFailed(pub usize);

impl std::fmt::Display for VerifyFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} oracle comparison(s) failed", self.0)
    }
}

impl std::error::Error for VerifyFailed {}

/// Maps an error chain to its exit code.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    use lidonor_core::Error as E;
    for cause in err.chain() {
        if cause.downcast_ref::<VerifyFailed>().is_some() {
            return EXIT_VERIFY_FAIL;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Numerical(_) | E::Invariant(_) => EXIT_NUMERICAL,
                _ => EXIT_VALIDATION,
            };
        }
    }
    EXIT_VALIDATION
}

/// Parses and runs; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args: Vec<std::ffi::OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let recorded: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match commands::dispatch(&cli, &recorded) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}
