//! `horizon`: batch front-end for the Killing-horizon laboratory.
//!
//! Exit status is 0 when every check passes, 1 when a check or constraint
//! fails, and 2 for usage, input and parse errors.

mod commands;
mod input;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use horizon_core::catalog::{Branch, CatalogError, EntryName, EntrySpec};
use horizon_core::verify::Tolerances;
use thiserror::Error;

use report::Format;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Io(_) => 2,
            CliError::Failed(_) => 1,
        }
    }
}

impl From<CatalogError> for CliError {
    fn from(e: CatalogError) -> Self {
        match e {
            CatalogError::Geometry(_) | CatalogError::Data(_) => CliError::Failed(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "horizon",
    version,
    about = "Initial data and first-order expansions for Killing horizons"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the Killing and constant-length constraints of a data file.
    Validate(ValidateArgs),
    /// Induce horizon data numerically from catalog spacetimes and compare with closed forms.
    Induce(InduceArgs),
    /// Tabulate the first transversal derivative of the metric on a grid of horizon points.
    Expand(ExpandArgs),
    /// Run the residual suite.
    Verify(VerifyArgs),
}

fn positive(s: &str) -> Result<f64, String> {
    let x: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(format!("expected a positive number, got {s}"))
    }
}

fn count(s: &str) -> Result<usize, String> {
    let n: usize = s.parse().map_err(|e| format!("{e}"))?;
    if n >= 1 {
        Ok(n)
    } else {
        Err("expected at least 1".to_string())
    }
}

#[derive(Debug, Args)]
struct Selection {
    /// Catalog entry: schwarzschild, kerr, misner, quotient_schwarzschild, taub_nut.
    #[arg(long, value_name = "NAME")]
    spacetime: Option<String>,
    /// Every catalog entry with default parameters.
    #[arg(long, conflicts_with_all = ["spacetime", "m", "a", "l", "alpha", "branch"])]
    all: bool,
    #[arg(long, allow_negative_numbers = true)]
    m: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    a: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    l: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    /// Horizon branch: outer or inner (Kerr), plus or minus (Taub-NUT).
    #[arg(long)]
    branch: Option<String>,
}

impl Selection {
    fn specs(&self) -> Result<Vec<EntrySpec>, CliError> {
        if self.all {
            return Ok(EntryName::ALL.iter().map(|&n| EntrySpec::new(n)).collect());
        }
        let Some(name) = &self.spacetime else {
            return Err(CliError::Usage(
                "select a catalog entry with --spacetime NAME or --all".into(),
            ));
        };
        let mut spec = EntrySpec::new(name.parse::<EntryName>()?);
        spec.m = self.m.or(spec.m);
        spec.a = self.a.or(spec.a);
        spec.l = self.l.or(spec.l);
        spec.alpha = self.alpha.or(spec.alpha);
        if let Some(b) = &self.branch {
            spec.branch = Some(b.parse::<Branch>()?);
        }
        Ok(vec![spec])
    }

    fn is_empty(&self) -> bool {
        !self.all && self.spacetime.is_none()
    }
}

#[derive(Debug, Args)]
struct Output {
    /// Write the report here instead of standard output.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    /// Initial-data document (JSON).
    #[arg(long, value_name = "PATH")]
    input: PathBuf,
    /// Sample points per coordinate.
    #[arg(long, value_parser = count)]
    grid: Option<usize>,
    /// Bound on the Killing and length residuals.
    #[arg(long, value_parser = positive)]
    tol_constraint: Option<f64>,
    #[command(flatten)]
    output: Output,
}

#[derive(Debug, Args)]
struct InduceArgs {
    #[command(flatten)]
    selection: Selection,
    /// Horizon base points per entry.
    #[arg(long, value_parser = count)]
    theta_grid: Option<usize>,
    #[arg(long, value_parser = positive)]
    tol_induced: Option<f64>,
    #[arg(long, value_parser = positive)]
    tol_kappa: Option<f64>,
    #[command(flatten)]
    output: Output,
}

#[derive(Debug, Args)]
struct ExpandArgs {
    #[command(flatten)]
    selection: Selection,
    /// Initial-data document instead of a catalog entry.
    #[arg(long, value_name = "PATH", conflicts_with_all = ["spacetime", "all"])]
    input: Option<PathBuf>,
    /// Points along the sweep axis for catalog entries, per coordinate for data files.
    #[arg(long, value_parser = count)]
    grid: Option<usize>,
    #[arg(long, value_parser = positive)]
    tol_constraint: Option<f64>,
    #[command(flatten)]
    output: Output,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[command(flatten)]
    selection: Selection,
    /// Horizon base points per entry.
    #[arg(long, value_parser = count)]
    theta_grid: Option<usize>,
    /// Points per axis for the vacuum and structural grids.
    #[arg(long, value_parser = count)]
    grid: Option<usize>,
    /// Differencing step along the transversal geodesics.
    #[arg(long, value_parser = positive)]
    h: Option<f64>,
    /// Largest transversal parameter used; sets the differencing step to a third of it.
    #[arg(long, value_parser = positive, conflicts_with = "h")]
    t_max: Option<f64>,
    #[command(flatten)]
    tolerances: ToleranceArgs,
    #[command(flatten)]
    output: Output,
}

#[derive(Debug, Args)]
struct ToleranceArgs {
    #[arg(long, value_parser = positive)]
    tol_constraint: Option<f64>,
    #[arg(long, value_parser = positive)]
    tol_kappa: Option<f64>,
    #[arg(long, value_parser = positive)]
    tol_ricci: Option<f64>,
    #[arg(long, value_parser = positive)]
    tol_induced: Option<f64>,
    #[arg(long, value_parser = positive)]
    tol_q1: Option<f64>,
    #[arg(long, value_parser = positive)]
    tol_q1_kerr: Option<f64>,
    /// Allowed distance of the remainder slope from 2.
    #[arg(long, value_parser = positive)]
    tol_slope: Option<f64>,
    #[arg(long, value_parser = positive)]
    tol_transversal_row: Option<f64>,
    #[arg(long, value_parser = positive)]
    tol_commutator: Option<f64>,
    #[arg(long, value_parser = positive)]
    tol_nabla_t_w: Option<f64>,
    #[arg(long, value_parser = positive)]
    tol_transport: Option<f64>,
    #[arg(long, value_parser = positive)]
    tol_reconstruction: Option<f64>,
    #[arg(long, value_parser = positive)]
    tol_omega_v: Option<f64>,
    #[arg(long, value_parser = positive)]
    tol_lie_omega: Option<f64>,
    #[arg(long, value_parser = positive)]
    tol_kernel: Option<f64>,
    #[arg(long, value_parser = positive)]
    tol_equivariance: Option<f64>,
    #[arg(long, value_parser = positive)]
    tol_jet_fd: Option<f64>,
    #[arg(long, value_parser = positive)]
    tol_bianchi: Option<f64>,
    #[arg(long, value_parser = positive)]
    tol_null_drift: Option<f64>,
}

impl ToleranceArgs {
    fn apply(&self, t: &mut Tolerances) {
        let pairs = [
            (self.tol_kappa, &mut t.kappa),
            (self.tol_ricci, &mut t.ricci),
            (self.tol_induced, &mut t.induced),
            (self.tol_q1, &mut t.q1),
            (self.tol_q1_kerr, &mut t.q1_kerr),
            (self.tol_slope, &mut t.slope),
            (self.tol_transversal_row, &mut t.transversal_row),
            (self.tol_commutator, &mut t.commutator),
            (self.tol_nabla_t_w, &mut t.nabla_t_w),
            (self.tol_transport, &mut t.transport),
            (self.tol_reconstruction, &mut t.reconstruction),
            (self.tol_omega_v, &mut t.omega_v),
            (self.tol_lie_omega, &mut t.lie_omega),
            (self.tol_kernel, &mut t.kernel),
            (self.tol_equivariance, &mut t.equivariance),
            (self.tol_jet_fd, &mut t.jet_fd),
            (self.tol_bianchi, &mut t.bianchi),
            (self.tol_null_drift, &mut t.null_drift),
        ];
        for (value, slot) in pairs {
            if let Some(v) = value {
                *slot = v;
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Validate(args) => commands::validate(args),
        Command::Induce(args) => commands::induce(args),
        Command::Expand(args) => commands::expand(args),
        Command::Verify(args) => commands::verify(args),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
