//! Command line front end.
//!
//! Exit codes: 0 on success, 2 on invalid input, 3 on numerical failure.
//! Token indices on the command line and in JSON reports are one-based.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::amm::{AmmSpec, PriceVector};
use crate::error::AmmError;
use crate::il::{self, ErliConfig, ErliVerdict};
use crate::legendre::{self, ExchangeRates, HomogeneityEstimate};
use crate::stable::{SolverOptions, StableState};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Sweeps with at least this fraction of failed rows exit with [`EXIT_NUMERICAL`].
pub const SWEEP_FAILURE_LIMIT: f64 = 0.05;

#[derive(Debug, Parser)]
#[command(name = "amm-duality", version, about = "Impermanent loss and value-function duality for AMMs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Impermanent loss along one ratio axis, as CSV.
    Sweep(SweepArgs),
    /// Impermanent loss between two price vectors.
    Point(PointArgs),
    /// Exchange rate level independence test.
    Erli(ErliArgs),
    /// Value function, its gradient and the transform route at one rate vector.
    Legendre(LegendreArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// AMM spec file (JSON).
    #[arg(long)]
    pub spec: PathBuf,
    /// Liquidity surface level; defaults to `d` for stableswap.
    #[arg(long)]
    pub level: Option<f64>,
    /// Output file, or `-` for stdout.
    #[arg(long, default_value = "-")]
    pub out: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scale {
    Linear,
    Log,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Token whose rate ratio varies (1..n-1).
    #[arg(long, default_value_t = 1)]
    pub axis: usize,
    #[arg(long)]
    pub t_min: f64,
    #[arg(long)]
    pub t_max: f64,
    #[arg(long)]
    pub steps: usize,
    #[arg(long, value_enum, default_value_t = Scale::Log)]
    pub scale: Scale,
    /// Initial exchange rates of tokens 1..n-1; required for non-G3M pools.
    #[arg(long, value_delimiter = ',')]
    pub base_rates: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct PointArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_delimiter = ',', required = true)]
    pub p_init: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub p_final: Vec<f64>,
    /// Solver residual tolerance.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct ErliArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Tolerance on the direct spread and on homogeneity deviations.
    #[arg(long, default_value_t = il::DEFAULT_ERLI_TOLERANCE)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct LegendreArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Exchange rates of tokens 1..n-1 against token n.
    #[arg(long, value_delimiter = ',', required = true)]
    pub m: Vec<f64>,
}

/// A failed command: exit code plus message for the diagnostic stream.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn input(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }
}

impl From<AmmError> for CliError {
    fn from(e: AmmError) -> Self {
        CliError {
            code: if e.is_numerical() {
                EXIT_NUMERICAL
            } else {
                EXIT_INPUT
            },
            message: e.to_string(),
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(stderr, "{text}");
                    EXIT_INPUT
                }
            };
        }
    };
    match execute(&cli.command, stderr) {
        Ok((out, body, code)) => match emit(&out, &body, stdout) {
            Ok(()) => code,
            Err(e) => {
                let _ = writeln!(stderr, "error: {}", e.message);
                e.code
            }
        },
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.message);
            e.code
        }
    }
}

fn emit(out: &str, body: &str, stdout: &mut dyn Write) -> Result<(), CliError> {
    if out == "-" {
        stdout
            .write_all(body.as_bytes())
            .map_err(|e| CliError::input(format!("writing output: {e}")))
    } else {
        fs::write(out, body).map_err(|e| CliError::input(format!("writing {out}: {e}")))
    }
}

type Executed = (String, String, i32);

fn execute(command: &Command, stderr: &mut dyn Write) -> Result<Executed, CliError> {
    match command {
        Command::Sweep(a) => {
            let spec = load_spec(&a.common.spec)?;
            let level = resolve_level(&spec, a.common.level)?;
            let req = SweepRequest::from_args(&spec, level, a)?;
            let sweep = cmd_sweep(&spec, &req);
            for w in &sweep.warnings {
                let _ = writeln!(stderr, "warning: {w}");
            }
            let failed = sweep.failures as f64 / req.steps as f64;
            let code = if failed >= SWEEP_FAILURE_LIMIT {
                EXIT_NUMERICAL
            } else {
                EXIT_OK
            };
            Ok((a.common.out.clone(), sweep.csv, code))
        }
        Command::Point(a) => {
            let spec = load_spec(&a.common.spec)?;
            let level = resolve_level(&spec, a.common.level)?;
            let p_i = PriceVector::new(a.p_init.clone())?;
            let p_f = PriceVector::new(a.p_final.clone())?;
            let opts = SolverOptions {
                tol: a.tol,
                ..SolverOptions::default()
            };
            let report = cmd_point(&spec, level, &p_i, &p_f, &opts)?;
            Ok((a.common.out.clone(), to_json(&report), EXIT_OK))
        }
        Command::Erli(a) => {
            let spec = load_spec(&a.common.spec)?;
            let level = resolve_level(&spec, a.common.level)?;
            let report = cmd_erli(&spec, level, a.tol)?;
            Ok((a.common.out.clone(), to_json(&report), EXIT_OK))
        }
        Command::Legendre(a) => {
            let spec = load_spec(&a.common.spec)?;
            let level = resolve_level(&spec, a.common.level)?;
            if a.m.len() + 1 != spec.n() {
                return Err(CliError::input(format!(
                    "--m needs {} values (the numeraire rate 1 is implied), got {}",
                    spec.n() - 1,
                    a.m.len()
                )));
            }
            let m = ExchangeRates::from_non_numeraire(&a.m)?;
            let report = cmd_legendre(&spec, level, &m)?;
            Ok((a.common.out.clone(), to_json(&report), EXIT_OK))
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

pub fn load_spec(path: &std::path::Path) -> Result<AmmSpec, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("reading {}: {e}", path.display())))?;
    AmmSpec::from_json(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn resolve_level(spec: &AmmSpec, level: Option<f64>) -> Result<f64, CliError> {
    let level = match (level, spec.d()) {
        (Some(l), _) => l,
        (None, Some(d)) => d,
        (None, None) => return Err(CliError::input("--level is required for this family")),
    };
    spec.check_level(level)?;
    Ok(level)
}

/// A validated sweep over one ratio axis.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRequest {
    pub level: f64,
    /// Zero-based token index.
    pub axis: usize,
    pub t_min: f64,
    pub t_max: f64,
    pub steps: usize,
    pub scale: Scale,
    /// Initial rates including the numeraire's 1.
    pub base_rates: ExchangeRates,
}

impl SweepRequest {
    fn from_args(spec: &AmmSpec, level: f64, a: &SweepArgs) -> Result<Self, CliError> {
        let dim = spec.n() - 1;
        if a.axis == 0 || a.axis > dim {
            return Err(CliError::input(format!(
                "--axis must be between 1 and {dim}, got {}",
                a.axis
            )));
        }
        let base_rates = match &a.base_rates {
            Some(m) => {
                if m.len() != dim {
                    return Err(CliError::input(format!(
                        "--base-rates needs {dim} values, got {}",
                        m.len()
                    )));
                }
                ExchangeRates::from_non_numeraire(m)?
            }
            None if spec.is_geometric() => ExchangeRates::from_non_numeraire(&vec![1.0; dim])?,
            None => {
                return Err(CliError::input(
                    "--base-rates is required: impermanent loss of this family depends on the rate level",
                ))
            }
        };
        let req = SweepRequest {
            level,
            axis: a.axis - 1,
            t_min: a.t_min,
            t_max: a.t_max,
            steps: a.steps,
            scale: a.scale,
            base_rates,
        };
        req.validate()?;
        Ok(req)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.t_min.is_finite() && self.t_min > 0.0 && self.t_max.is_finite()) {
            return Err(CliError::input("--t-min and --t-max must be positive"));
        }
        if !(self.t_min < self.t_max) {
            return Err(CliError::input("--t-min must be below --t-max"));
        }
        if self.steps < 2 {
            return Err(CliError::input("--steps must be at least 2"));
        }
        Ok(())
    }

    /// Grid values of `t`, in row order.
    pub fn grid(&self) -> Vec<f64> {
        let last = (self.steps - 1) as f64;
        (0..self.steps)
            .map(|k| {
                let s = k as f64 / last;
                let t = match self.scale {
                    Scale::Linear => self.t_min + s * (self.t_max - self.t_min),
                    Scale::Log => (self.t_min.ln() + s * (self.t_max / self.t_min).ln()).exp(),
                };
                // land exactly on the no-move point when the grid passes through it
                if (t - 1.0).abs() < 1e-14 {
                    1.0
                } else {
                    t
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub csv: String,
    pub failures: usize,
    pub warnings: Vec<String>,
}

/// Impermanent loss for each grid ratio, as `t,il` CSV rows.
pub fn cmd_sweep(spec: &AmmSpec, req: &SweepRequest) -> SweepOutput {
    let opts = SolverOptions::default();
    let mut csv = String::from("t,il\n");
    let mut failures = 0;
    let mut warnings = Vec::new();
    let p_i = req.base_rates.as_prices();
    for t in req.grid() {
        let mut m_f = req.base_rates.to_vec();
        m_f[req.axis] *= t;
        let result = PriceVector::new(m_f)
            .and_then(|p_f| il::impermanent_loss(spec, req.level, &p_i, &p_f, &opts));
        match result {
            Ok(r) => csv.push_str(&format!("{},{}\n", format_sig(t), format_sig(r.il))),
            Err(e) => {
                failures += 1;
                warnings.push(format!("t={}: {e}", format_sig(t)));
                csv.push_str(&format!("{},nan\n", format_sig(t)));
            }
        }
    }
    SweepOutput {
        csv,
        failures,
        warnings,
    }
}

/// Significant digits in CSV output.
pub const SIG_DIGITS: usize = 12;

/// Formats `v` with [`SIG_DIGITS`] significant digits, `%g` style.
pub fn format_sig(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", SIG_DIGITS - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= SIG_DIGITS as i32 {
        format!("{}e{exp}", trim_zeros(mantissa))
    } else {
        let decimals = (SIG_DIGITS as i32 - 1 - exp) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Common wrapper of every JSON report.
#[derive(Debug, Clone, Serialize)]
pub struct ReportEnvelope<R, D> {
    pub tool_version: &'static str,
    pub spec_echo: AmmSpec,
    pub results: R,
    pub diagnostics: D,
}

fn envelope<R, D>(spec: &AmmSpec, results: R, diagnostics: D) -> ReportEnvelope<R, D> {
    ReportEnvelope {
        tool_version: env!("CARGO_PKG_VERSION"),
        spec_echo: spec.clone(),
        results,
        diagnostics,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Residuals {
    pub grad: f64,
    pub level: f64,
    pub iterations: usize,
}

impl From<&StableState> for Residuals {
    fn from(s: &StableState) -> Self {
        Residuals {
            grad: s.grad_residual,
            level: s.level_residual,
            iterations: s.iterations,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PointResiduals {
    pub initial: Residuals,
    #[serde(rename = "final")]
    pub final_: Residuals,
}

#[derive(Debug, Clone, Serialize)]
pub struct PointResults {
    pub il: f64,
    pub v_hold: f64,
    pub v_pool: f64,
    pub x_initial: Vec<f64>,
    pub x_final: Vec<f64>,
    pub t: Vec<f64>,
    pub residuals: PointResiduals,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverDiagnostics {
    pub level: f64,
    pub solver_tol: f64,
    pub max_grad_residual: f64,
    pub max_level_residual: f64,
}

pub type PointReport = ReportEnvelope<PointResults, SolverDiagnostics>;

pub fn cmd_point(
    spec: &AmmSpec,
    level: f64,
    p_i: &PriceVector,
    p_f: &PriceVector,
    opts: &SolverOptions,
) -> Result<PointReport, CliError> {
    let r = il::impermanent_loss(spec, level, p_i, p_f, opts)?;
    let diagnostics = SolverDiagnostics {
        level,
        solver_tol: opts.tol,
        max_grad_residual: r.x_initial.grad_residual.max(r.x_final.grad_residual),
        max_level_residual: r.x_initial.level_residual.max(r.x_final.level_residual),
    };
    let results = PointResults {
        il: r.il,
        v_hold: r.v_hold,
        v_pool: r.v_pool,
        residuals: PointResiduals {
            initial: (&r.x_initial).into(),
            final_: (&r.x_final).into(),
        },
        x_initial: r.x_initial.x.into_inner(),
        x_final: r.x_final.x.into_inner(),
        t: r.t.to_vec(),
    };
    Ok(envelope(spec, results, diagnostics))
}

#[derive(Debug, Clone, Serialize)]
pub struct DegreeEntry {
    /// One-based token index.
    pub coordinate: usize,
    pub degree: f64,
    pub deviation: f64,
}

impl From<&HomogeneityEstimate> for DegreeEntry {
    fn from(e: &HomogeneityEstimate) -> Self {
        DegreeEntry {
            coordinate: e.coordinate + 1,
            degree: e.degree,
            deviation: e.max_log_deviation,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ErliResults {
    pub verdict: ErliVerdict,
    pub direct_spread: f64,
    pub f_degrees: Vec<DegreeEntry>,
    pub w_degrees: Vec<DegreeEntry>,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ErliDiagnostics {
    pub level: f64,
    pub messages: Vec<String>,
}

pub type ErliCliReport = ReportEnvelope<ErliResults, ErliDiagnostics>;

pub fn cmd_erli(spec: &AmmSpec, level: f64, tolerance: f64) -> Result<ErliCliReport, CliError> {
    let config = ErliConfig {
        tolerance,
        ..ErliConfig::default_for(spec.n())
    };
    let r = il::erli_test(spec, level, &config)?;
    let results = ErliResults {
        verdict: r.verdict,
        direct_spread: r.direct_spread,
        f_degrees: r.f_degrees.iter().map(Into::into).collect(),
        w_degrees: r.w_degrees.iter().map(Into::into).collect(),
        tolerance: r.tolerance,
    };
    Ok(envelope(
        spec,
        results,
        ErliDiagnostics {
            level,
            messages: r.diagnostics,
        },
    ))
}

#[derive(Debug, Clone, Serialize)]
pub struct LegendreResults {
    pub w: f64,
    pub w_via_transform: f64,
    pub grad_w: Vec<f64>,
    pub stable_point: Vec<f64>,
    pub f_at_point: f64,
    pub grad_f: Vec<f64>,
}

pub type LegendreReport = ReportEnvelope<LegendreResults, SolverDiagnostics>;

pub fn cmd_legendre(
    spec: &AmmSpec,
    level: f64,
    m: &ExchangeRates,
) -> Result<LegendreReport, CliError> {
    let opts = SolverOptions::default();
    let state = crate::stable::solve_stable_point(spec, level, &m.as_prices(), &opts)?;
    let transform = legendre::legendre_transform(spec, level, m)?;
    let f_at_point = state.x[state.x.len() - 1];
    let grad_f = crate::stable::grad_f(spec, level, state.x_hat())?;
    let diagnostics = SolverDiagnostics {
        level,
        solver_tol: opts.tol,
        max_grad_residual: state.grad_residual,
        max_level_residual: state.level_residual,
    };
    let results = LegendreResults {
        w: state.value(m),
        w_via_transform: transform.w_via_transform,
        grad_w: state.x_hat().to_vec(),
        stable_point: state.x.to_vec(),
        f_at_point,
        grad_f,
    };
    Ok(envelope(spec, results, diagnostics))
}
