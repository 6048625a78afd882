//! Command-line front end: solve single scenarios, run parameter sweeps,
//! evaluate symmetric closed forms, calibrate networks from balance sheets,
//! and validate inverse demand specs.
//!
//! Exit codes: 0 success, 2 solver nonconvergence, 3 invalid input.

use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use firesale::baseline::ClearingOutcome;
use firesale::calibration::{
    assemble_network, build_balance_sheets, estimate_matrix, network_from_rows,
    network_from_rows_with_matrix, read_balance_sheet_csv, BalanceSheets, CalibrationError,
};
use firesale::demand::{validate_admissibility, validate_uniqueness, InverseDemand};
use firesale::network::{read_matrix_csv, write_matrix_csv, FinancialNetwork, Mode, NetworkError};
use firesale::scenario::{
    run_scenario, run_sweep, write_sweep_csv, Regime, ResultDoc, ScenarioOutcome, SweepBase,
    SweepError, SweepSpec, SweptParameter,
};
use firesale::solver::{EquilibriumResult, SolverConfig, SolverError};
use firesale::symmetric::SymmetricScenario;

const EXIT_NONCONVERGENCE: u8 = 2;
const EXIT_INVALID_INPUT: u8 = 3;

#[derive(Parser)]
#[command(
    name = "firesale",
    version,
    about = "Clearing equilibria for interbank networks under fire sales and borrowing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one network under a single regime and print the result document
    Solve(SolveArgs),
    /// Evaluate metrics across a parameter grid and a set of regimes
    Sweep(SweepArgs),
    /// Closed-form equilibrium of a symmetric system
    Symmetric(SymmetricArgs),
    /// Build the liabilities matrix implied by a balance-sheet file
    Calibrate(CalibrateArgs),
    /// Check an inverse demand spec against the structural conditions
    ValidateIdf(ValidateIdfArgs),
}

#[derive(Args)]
struct NetworkInputs {
    /// Balance-sheet csv: bank_id,total_assets,capital,interbank_liabilities,tier1_ratio
    #[arg(long)]
    network: PathBuf,
    /// Bilateral liabilities csv (from,to,amount; to=0 external); estimated
    /// from the interbank totals when absent
    #[arg(long)]
    matrix: Option<PathBuf>,
    /// Uniform per-period interest rate applied to every bank
    #[arg(long, default_value_t = 0.05)]
    rate: f64,
    /// Inverse demand spec: linear:alpha=A | exp:alpha=A | hyp:eps=E
    #[arg(long)]
    idf: String,
    /// Market capitalization override (defaults to the total illiquid holdings)
    #[arg(long)]
    market_cap: Option<f64>,
}

impl NetworkInputs {
    fn load(&self) -> Result<(FinancialNetwork, InverseDemand), CliError> {
        let rows = read_balance_sheet_csv(open(&self.network)?)?;
        let (network, _sheets) = match &self.matrix {
            Some(path) => {
                let matrix = read_matrix_csv(open(path)?, rows.len())?;
                network_from_rows_with_matrix(&rows, matrix, self.rate)?
            }
            None => network_from_rows(&rows, self.rate)?,
        };
        let market_cap = self.market_cap.unwrap_or_else(|| network.total_illiquid());
        let demand = InverseDemand::parse(&self.idf, market_cap)?;
        Ok((network, demand))
    }
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    inputs: NetworkInputs,
    /// fire_sale | uncollateralized | collateralized
    #[arg(long, default_value = "uncollateralized")]
    mode: String,
    /// Stress-test haircut in (0,1); required in collateralized mode
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long, default_value = "json")]
    format: OutputFormat,
    /// Output path (stdout when absent)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Swept parameter: r | h | alpha
    #[arg(long)]
    param: String,
    #[arg(long)]
    lo: f64,
    #[arg(long)]
    hi: f64,
    /// Number of grid points, endpoints included
    #[arg(long)]
    steps: usize,
    /// Comma-separated subset of fire_sale,uncollateralized,collateralized
    #[arg(long, default_value = "fire_sale,uncollateralized,collateralized")]
    regimes: String,
    /// Permit impact ranges outside the admissible region
    #[arg(long)]
    allow_violations: bool,
    /// Stress-test haircut for the collateralized regime
    #[arg(long)]
    nu: Option<f64>,

    // network base
    #[arg(long)]
    network: Option<PathBuf>,
    #[arg(long)]
    matrix: Option<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    rate: f64,
    #[arg(long)]
    idf: Option<String>,
    #[arg(long)]
    market_cap: Option<f64>,

    // symmetric base
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,

    #[arg(long, default_value = "csv")]
    format: OutputFormat,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SymmetricArgs {
    #[arg(long)]
    n: usize,
    /// Common liquid shortfall
    #[arg(long)]
    h: f64,
    /// Common illiquid holding
    #[arg(long)]
    a: f64,
    /// Common interest rate
    #[arg(long)]
    r: f64,
    /// Linear price impact
    #[arg(long)]
    alpha: f64,
    /// Stress-test haircut; switches on the collateral cap checks
    #[arg(long)]
    nu: Option<f64>,
    /// uncollateralized | collateralized
    #[arg(long, default_value = "uncollateralized")]
    mode: String,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Balance-sheet csv to calibrate from
    #[arg(long)]
    network: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    rate: f64,
    /// Where to write the estimated liabilities matrix csv (stdout when absent)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateIdfArgs {
    #[arg(long)]
    idf: String,
    #[arg(long)]
    market_cap: f64,
    /// Haircut to include in the contraction bound
    #[arg(long)]
    nu: Option<f64>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum OutputFormat {
    Json,
    Csv,
}

impl FromStr for OutputFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "json" => Ok(OutputFormat::Json),
            "csv" => Ok(OutputFormat::Csv),
            other => Err(format!("unknown format `{other}`; use json or csv")),
        }
    }
}

enum CliError {
    Input(String),
    NonConvergence(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => EXIT_INVALID_INPUT,
            CliError::NonConvergence(_) => EXIT_NONCONVERGENCE,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::NonConvergence(m) => m,
        }
    }
}

impl From<SolverError> for CliError {
    fn from(err: SolverError) -> Self {
        match err {
            SolverError::OuterNonConvergence { .. }
            | SolverError::InnerNonConvergence { .. }
            | SolverError::MonotonicityViolation { .. } => {
                CliError::NonConvergence(err.to_string())
            }
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<SweepError> for CliError {
    fn from(err: SweepError) -> Self {
        match err {
            SweepError::Solver(inner) => inner.into(),
            other => CliError::Input(other.to_string()),
        }
    }
}

macro_rules! input_error_from {
    ($($ty:ty),*) => {$(
        impl From<$ty> for CliError {
            fn from(err: $ty) -> Self {
                CliError::Input(err.to_string())
            }
        }
    )*};
}

input_error_from!(
    NetworkError,
    CalibrationError,
    firesale::DemandError,
    firesale::SymmetricError,
    io::Error,
    serde_json::Error
);

fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| CliError::Input(format!("cannot open {}: {e}", path.display())))
}

fn output_writer(out: &Option<PathBuf>) -> Result<Box<dyn Write>, CliError> {
    match out {
        Some(path) => {
            let file = File::create(path).map_err(|e| {
                CliError::Input(format!("cannot create {}: {e}", path.display()))
            })?;
            Ok(Box::new(file))
        }
        None => Ok(Box::new(io::stdout())),
    }
}

fn parse_regime(s: &str) -> Result<Regime, CliError> {
    Regime::from_str(s).map_err(CliError::Input)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_INVALID_INPUT,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message());
            ExitCode::from(err.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Symmetric(args) => cmd_symmetric(args),
        Command::Calibrate(args) => cmd_calibrate(args),
        Command::ValidateIdf(args) => cmd_validate_idf(args),
    }
}

fn cmd_solve(args: SolveArgs) -> Result<(), CliError> {
    let (network, demand) = args.inputs.load()?;
    let regime = parse_regime(&args.mode)?;
    let config = SolverConfig::default();
    let run = run_scenario(&network, &demand, regime, args.nu, &config)?;
    let doc = ResultDoc::from_run(&run);
    let mut writer = output_writer(&args.out)?;
    match args.format {
        OutputFormat::Json => {
            serde_json::to_writer_pretty(&mut writer, &doc)?;
            writeln!(writer).map_err(CliError::from)?;
        }
        OutputFormat::Csv => write_solve_csv(&run.outcome, &doc, &mut writer)?,
    }
    Ok(())
}

fn write_solve_csv(
    outcome: &ScenarioOutcome,
    doc: &ResultDoc,
    writer: &mut dyn Write,
) -> Result<(), CliError> {
    writeln!(writer, "bank,case,regime,liquidation,borrowing,payment,price")?;
    let n = doc.liquidations.len();
    for i in 0..n {
        let case = match outcome {
            ScenarioOutcome::Equilibrium(EquilibriumResult { cases, .. }) => {
                format!("{:?}", cases[i])
            }
            ScenarioOutcome::Clearing(ClearingOutcome { .. }) => String::new(),
        };
        writeln!(
            writer,
            "{},{},{},{},{},{},{}",
            i + 1,
            case,
            doc.regimes[i],
            doc.liquidations[i],
            doc.borrowing[i],
            doc.payments[i],
            doc.price
        )?;
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<(), CliError> {
    let varied =
        SweptParameter::from_str(&args.param).map_err(CliError::Input)?;
    let regimes = args
        .regimes
        .split(',')
        .filter(|s| !s.is_empty())
        .map(parse_regime)
        .collect::<Result<Vec<_>, _>>()?;

    let symmetric_flags =
        [args.n.is_some(), args.h.is_some(), args.a.is_some(), args.r.is_some(), args.alpha.is_some()];
    let base = if let Some(network) = &args.network {
        if symmetric_flags.iter().any(|&f| f) {
            return Err(CliError::Input(
                "pass either --network or the symmetric parameters (--n/--h/--a/--r/--alpha), not both"
                    .to_string(),
            ));
        }
        let idf = args.idf.as_ref().ok_or_else(|| {
            CliError::Input("--idf is required with a network base".to_string())
        })?;
        let inputs = NetworkInputs {
            network: network.clone(),
            matrix: args.matrix.clone(),
            rate: args.rate,
            idf: idf.clone(),
            market_cap: args.market_cap,
        };
        let (network, demand) = inputs.load()?;
        SweepBase::Network {
            network,
            demand,
            haircut: args.nu,
        }
    } else {
        let (Some(n), Some(h), Some(a), Some(r), Some(alpha)) =
            (args.n, args.h, args.a, args.r, args.alpha)
        else {
            return Err(CliError::Input(
                "a sweep needs --network or all of --n/--h/--a/--r/--alpha".to_string(),
            ));
        };
        SweepBase::Symmetric(SymmetricScenario {
            n,
            shortfall: h,
            holdings: a,
            rate: r,
            alpha,
            haircut: args.nu,
            mode: Mode::Uncollateralized,
        })
    };

    let spec = SweepSpec {
        varied,
        lo: args.lo,
        hi: args.hi,
        steps: args.steps,
        regimes,
        base,
        allow_violations: args.allow_violations,
    };
    let rows = run_sweep(&spec, &SolverConfig::default())?;
    let mut writer = output_writer(&args.out)?;
    match args.format {
        OutputFormat::Csv => write_sweep_csv(&rows, &mut writer)?,
        OutputFormat::Json => {
            serde_json::to_writer_pretty(&mut writer, &rows)?;
            writeln!(writer).map_err(CliError::from)?;
        }
    }
    Ok(())
}

fn cmd_symmetric(args: SymmetricArgs) -> Result<(), CliError> {
    let mode = match args.mode.trim().to_ascii_lowercase().as_str() {
        "uncollateralized" | "uncoll" => Mode::Uncollateralized,
        "collateralized" | "coll" => Mode::Collateralized,
        other => {
            return Err(CliError::Input(format!(
                "unknown mode `{other}`; use uncollateralized or collateralized"
            )))
        }
    };
    let scenario = SymmetricScenario {
        n: args.n,
        shortfall: args.h,
        holdings: args.a,
        rate: args.r,
        alpha: args.alpha,
        haircut: args.nu,
        mode,
    };
    let solution = scenario.closed_form()?;
    println!("{}", serde_json::to_string_pretty(&solution)?);
    Ok(())
}

fn cmd_calibrate(args: CalibrateArgs) -> Result<(), CliError> {
    let rows = read_balance_sheet_csv(open(&args.network)?)?;
    let sheets = build_balance_sheets(&rows)?;
    let estimate = estimate_matrix(&sheets.interbank, &sheets.interbank)?;
    let rates = vec![args.rate; rows.len()];
    let network = assemble_network(&sheets, &estimate.matrix, &rates)?;
    let mut writer = output_writer(&args.out)?;
    write_matrix_csv(network.liabilities(), &mut writer)?;
    drop(writer);
    if args.out.is_some() {
        print_calibration_summary(&sheets, estimate.in_rescale, estimate.sweeps)?;
    }
    Ok(())
}

fn print_calibration_summary(
    sheets: &BalanceSheets,
    in_rescale: f64,
    sweeps: usize,
) -> Result<(), CliError> {
    let summary = serde_json::json!({
        "banks": sheets.ids.len(),
        "total_liquid": sheets.liquid.iter().sum::<f64>(),
        "total_illiquid": sheets.illiquid.iter().sum::<f64>(),
        "total_interbank": sheets.interbank.iter().sum::<f64>(),
        "in_rescale": in_rescale,
        "ipf_sweeps": sweeps,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn cmd_validate_idf(args: ValidateIdfArgs) -> Result<(), CliError> {
    let demand = InverseDemand::parse(&args.idf, args.market_cap)?;
    let admissibility = validate_admissibility(&demand);
    let uniqueness = validate_uniqueness(&demand, args.nu);
    let report = serde_json::json!({
        "spec": args.idf,
        "market_cap": args.market_cap,
        "admissibility": admissibility,
        "admissibility_passed": admissibility.passed(),
        "uniqueness": uniqueness,
        "uniqueness_passed": uniqueness.passed(),
        "passed": admissibility.passed() && uniqueness.passed(),
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solver_errors_map_to_exit_codes() {
        let nonconv: CliError = SolverError::OuterNonConvergence {
            iterations: 10,
            residual: 0.1,
        }
        .into();
        assert_eq!(nonconv.code(), EXIT_NONCONVERGENCE);
        let monotone: CliError = SolverError::MonotonicityViolation { iteration: 3 }.into();
        assert_eq!(monotone.code(), EXIT_NONCONVERGENCE);
        let invalid: CliError = SolverError::InvalidConfig("x".to_string()).into();
        assert_eq!(invalid.code(), EXIT_INVALID_INPUT);
        let sweep_nonconv: CliError = SweepError::Solver(SolverError::InnerNonConvergence {
            outer_iter: 1,
            iterations: 5,
            residual: 0.2,
        })
        .into();
        assert_eq!(sweep_nonconv.code(), EXIT_NONCONVERGENCE);
        let sweep_spec: CliError = SweepError::InvalidSpec("y".to_string()).into();
        assert_eq!(sweep_spec.code(), EXIT_INVALID_INPUT);
    }
}
