//! Argument parsing and dispatch for the `regem` binary.
//!
//! Everything except file output lives here so the integration tests can
//! call [`impute`] directly and compare it with the library.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use regem::constraints::{constrained_nls, constrained_nls_from, ConstraintSpec};
use regem::dataset::{self, PatternClass, DEFAULT_MISSING_TOKENS};
use regem::em::{self, run_em, EmInit, EmOptions, EmProblem};
use regem::nls::{self, build_concatenated, solve_concatenated, InitPolicy, NlsOptions};
use regem::report::{compare_reports, DfChoice, Report};
use regem::uncertainty::{
    bootstrap_impute, multiple_impute, two_way_impute, BootstrapOptions, Estimator, PointEstimate, SeConvention,
};
use regem::{impute_closed_form, Dataset, Error, Result};

#[derive(Debug, Parser)]
#[command(name = "regem", version, about = "Regression-based EM imputation for incomplete tables")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)]
pub enum Command {
    /// Impute the missing cells of a CSV file and write a JSON report.
    Impute(ImputeArgs),
    /// Merge two or more reports into a long `cell,method,point,se` table.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    ClosedForm,
    Em,
    Nls,
    Constrained,
    TwoWay,
    Bootstrap,
    Mi,
}

impl Method {
    fn name(self) -> &'static str {
        match self {
            Method::ClosedForm => "closed-form",
            Method::Em => "em",
            Method::Nls => "nls",
            Method::Constrained => "constrained",
            Method::TwoWay => "two-way",
            Method::Bootstrap => "bootstrap",
            Method::Mi => "mi",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum InitArg {
    #[default]
    CompleteCase,
    Zeros,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum DfArg {
    Raw,
    Adjusted,
    #[default]
    Both,
}

impl From<DfArg> for DfChoice {
    fn from(d: DfArg) -> Self {
        match d {
            DfArg::Raw => DfChoice::Raw,
            DfArg::Adjusted => DfChoice::Adjusted,
            DfArg::Both => DfChoice::Both,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ImputeArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub method: Method,
    /// Incomplete variable for closed-form and EM runs.
    #[arg(long)]
    pub response: Option<String>,
    /// Comma-separated predictors; defaults to every other column.
    #[arg(long, value_delimiter = ',')]
    pub predictors: Option<Vec<String>>,
    /// JSON constraint file (bounds, totals, reparameterizations).
    #[arg(long)]
    pub constraints: Option<PathBuf>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long = "max-iter")]
    pub max_iter: Option<usize>,
    /// Bootstrap replicates.
    #[arg(long = "B")]
    pub b: Option<usize>,
    /// Multiple imputations.
    #[arg(long = "M")]
    pub m: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-iteration EM trace (CSV).
    #[arg(long = "trace-out")]
    pub trace_out: Option<PathBuf>,
    /// Bootstrap or MI draws in long format (CSV).
    #[arg(long = "draws-out")]
    pub draws_out: Option<PathBuf>,
    #[arg(long = "df-convention", value_enum, default_value_t = DfArg::Both)]
    pub df_convention: DfArg,
    #[arg(long, value_enum, default_value_t = InitArg::CompleteCase)]
    pub init: InitArg,
    /// Extra token read as missing, on top of "", "." and "NA".
    #[arg(long = "missing-token")]
    pub missing_token: Vec<String>,
    /// Bootstrap replicates with any estimate below this are redrawn.
    #[arg(long = "min-valid", allow_negative_numbers = true)]
    pub min_valid: Option<f64>,
    /// Keep resampling until every cell has this many bootstrap draws.
    #[arg(long = "target-count")]
    pub target_count: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    /// Report files written by `regem impute`.
    #[arg(required = true)]
    pub reports: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub const DEFAULT_B: usize = 1000;
pub const DEFAULT_M: usize = 20;

/// What one `impute` run produces before anything touches the disk.
#[derive(Debug, Clone)]
pub struct Outputs {
    pub report: Report,
    pub trace_csv: Option<String>,
    pub draws_csv: Option<String>,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })
}

pub fn load_input(args: &ImputeArgs) -> Result<Dataset> {
    let mut tokens: Vec<&str> = DEFAULT_MISSING_TOKENS.to_vec();
    tokens.extend(args.missing_token.iter().map(String::as_str));
    let f = std::fs::File::open(&args.input).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", args.input.display())))
    })?;
    dataset::parse_csv(f, &tokens)
}

fn check_config(args: &ImputeArgs) -> Result<()> {
    use Method::*;
    let stochastic = matches!(args.method, Bootstrap | Mi);
    if stochastic && args.seed.is_none() {
        return Err(invalid(format!("--seed is required for --method {}", args.method.name())));
    }
    if args.method == Constrained && args.constraints.is_none() {
        return Err(invalid("--method constrained needs --constraints <json>"));
    }
    if args.constraints.is_some() && !matches!(args.method, Constrained | Bootstrap) {
        return Err(invalid("--constraints only applies to constrained and bootstrap runs"));
    }
    if args.trace_out.is_some() && args.method != Em {
        return Err(invalid("--trace-out only applies to --method em"));
    }
    if args.draws_out.is_some() && !stochastic {
        return Err(invalid("--draws-out only applies to bootstrap and mi runs"));
    }
    if args.b.is_some() && args.method != Bootstrap {
        return Err(invalid("--B only applies to --method bootstrap"));
    }
    if args.m.is_some() && args.method != Mi {
        return Err(invalid("--M only applies to --method mi"));
    }
    if (args.min_valid.is_some() || args.target_count.is_some()) && args.method != Bootstrap {
        return Err(invalid("--min-valid and --target-count only apply to --method bootstrap"));
    }
    if let Some(t) = args.tol {
        if !(t.is_finite() && t > 0.0) {
            return Err(invalid("--tol must be positive"));
        }
    }
    Ok(())
}

/// Response and predictor indices for single-response estimators. Without
/// `--response` the only incomplete column is used.
fn response_and_predictors(d: &Dataset, args: &ImputeArgs) -> Result<(usize, Vec<usize>)> {
    let response = match &args.response {
        Some(name) => d.column_index(name)?,
        None => {
            let incomplete: Vec<usize> = (0..d.n_cols()).filter(|&j| !d.missing_rows(j).is_empty()).collect();
            match incomplete.as_slice() {
                [j] => *j,
                [] => return Err(invalid("no column has missing values; pass --response")),
                _ => return Err(invalid("several columns have missing values; pass --response or use --method nls")),
            }
        }
    };
    let predictors = match &args.predictors {
        Some(names) => names.iter().map(|n| d.column_index(n)).collect::<Result<Vec<_>>>()?,
        None => (0..d.n_cols()).filter(|&j| j != response).collect(),
    };
    if predictors.contains(&response) {
        return Err(invalid("the response cannot also be a predictor"));
    }
    Ok((response, predictors))
}

/// Column subset for multi-variable estimators: `--response` and
/// `--predictors` together, or every column when neither is given.
fn selected_columns(d: &Dataset, args: &ImputeArgs) -> Result<Dataset> {
    let Some(preds) = &args.predictors else {
        return Ok(d.clone());
    };
    let mut cols = Vec::new();
    if let Some(r) = &args.response {
        cols.push(d.column_index(r)?);
    }
    for p in preds {
        let j = d.column_index(p)?;
        if cols.contains(&j) {
            return Err(invalid(format!("column `{p}` selected twice")));
        }
        cols.push(j);
    }
    Ok(d.select_columns(&cols))
}

pub fn nls_options(args: &ImputeArgs) -> NlsOptions {
    NlsOptions {
        tol: args.tol.unwrap_or(nls::DEFAULT_TOL),
        max_iter: args.max_iter.unwrap_or(nls::DEFAULT_MAX_ITER),
        ..NlsOptions::default()
    }
}

pub fn em_options(args: &ImputeArgs) -> EmOptions {
    EmOptions {
        tol: args.tol.unwrap_or(em::DEFAULT_TOL),
        max_iter: args.max_iter.unwrap_or(em::DEFAULT_MAX_ITER),
        ..EmOptions::default()
    }
}

fn load_constraints(args: &ImputeArgs) -> Result<Option<ConstraintSpec>> {
    args.constraints
        .as_deref()
        .map(|p| ConstraintSpec::from_json(&read_to_string(p)?))
        .transpose()
}

/// Single-response closed form when exactly one column is incomplete and
/// only the response is missing, the concatenated system otherwise.
fn bootstrap_estimator(d: &Dataset, args: &ImputeArgs, spec: Option<ConstraintSpec>) -> Result<Estimator> {
    if let Some(spec) = spec {
        return Ok(Estimator::Constrained(spec, nls_options(args)));
    }
    let pattern = dataset::validate(d)?;
    let incomplete = pattern.incomplete_variables();
    if pattern.class == PatternClass::ResponseOnly && incomplete.len() == 1 {
        let (response, predictors) = response_and_predictors(d, args)?;
        return Ok(Estimator::ClosedForm { response, predictors });
    }
    Ok(Estimator::Nls(nls_options(args)))
}

fn metadata(mut r: Report, args: &ImputeArgs) -> Report {
    let nls_o = nls_options(args);
    let em_o = em_options(args);
    let mut tokens: Vec<String> = DEFAULT_MISSING_TOKENS.iter().map(|s| s.to_string()).collect();
    tokens.extend(args.missing_token.iter().cloned());
    let df = match args.df_convention {
        DfArg::Raw => "raw",
        DfArg::Adjusted => "adjusted",
        DfArg::Both => "both",
    };
    r = r
        .with_meta("version", env!("CARGO_PKG_VERSION"))
        .with_meta("input", args.input.display().to_string())
        .with_meta("missing_tokens", tokens)
        .with_meta("response", args.response.clone())
        .with_meta("predictors", args.predictors.clone())
        .with_meta("init", if args.init == InitArg::Zeros { "zeros" } else { "complete-case" })
        .with_meta("nls_tol", nls_o.tol)
        .with_meta("nls_grad_tol", nls_o.grad_tol)
        .with_meta("nls_max_iter", nls_o.max_iter)
        .with_meta("nls_lambda_init", nls_o.lambda_init)
        .with_meta("em_tol", em_o.tol)
        .with_meta("em_max_iter", em_o.max_iter)
        .with_meta("df_convention", df)
        .with_meta(
            "df_definitions",
            json!({
                "raw": "stacked rows minus free parameters",
                "adjusted": "raw divided by the number of stacked equations",
                "prediction": "complete-case residual df",
            }),
        )
        .with_meta("seed", args.seed)
        .with_meta("B", (args.method == Method::Bootstrap).then(|| args.b.unwrap_or(DEFAULT_B)))
        .with_meta("M", (args.method == Method::Mi).then(|| args.m.unwrap_or(DEFAULT_M)))
        .with_meta("min_valid", args.min_valid)
        .with_meta("target_count", args.target_count)
        .with_meta("constraints", args.constraints.as_ref().map(|p| p.display().to_string()));
    r
}

/// Runs one estimator on the loaded data.
pub fn impute_dataset(d: &Dataset, args: &ImputeArgs) -> Result<Outputs> {
    check_config(args)?;
    let mut trace_csv = None;
    let mut draws_csv = None;
    let report = match args.method {
        Method::ClosedForm => {
            let (response, predictors) = response_and_predictors(d, args)?;
            let set = impute_closed_form(d, response, &predictors)?;
            Report::from_imputation_set("closed-form", &set, d.names())
        }
        Method::Em => {
            let (response, predictors) = response_and_predictors(d, args)?;
            let mut opts = em_options(args);
            if args.init == InitArg::Zeros {
                let k = EmProblem::new(d, response, &predictors)?.n_coefficients();
                opts.init = EmInit::Coefficients(vec![0.0; k]);
            }
            let out = run_em(d, response, &predictors, &opts)?;
            trace_csv = Some(out.trace.to_csv());
            Report::from_em(&out, d.names())
        }
        Method::Nls => {
            let sub = selected_columns(d, args)?;
            let sys = build_concatenated(&sub)?;
            let init = match args.init {
                InitArg::CompleteCase => InitPolicy::CompleteCase,
                InitArg::Zeros => InitPolicy::Theta(vec![0.0; sys.n_params()]),
            };
            let res = solve_concatenated(&sys, &init, &nls_options(args))?;
            Report::from_nls("nls", &res, args.df_convention.into())
        }
        Method::Constrained => {
            let spec = load_constraints(args)?.expect("checked in check_config");
            let sub = selected_columns(d, args)?;
            let sys = build_concatenated(&sub)?;
            let opts = nls_options(args);
            let res = match args.init {
                InitArg::CompleteCase => constrained_nls(&sys, &spec, &opts)?,
                InitArg::Zeros => {
                    constrained_nls_from(&sys, &spec, &InitPolicy::Theta(vec![0.0; sys.n_params()]), &opts)?
                }
            };
            Report::from_nls("constrained", &res, args.df_convention.into())
        }
        Method::TwoWay => {
            let sub = selected_columns(d, args)?;
            let set = two_way_impute(&sub)?;
            Report::from_imputation_set("two-way", &set, sub.names())
        }
        Method::Bootstrap => {
            let sub = selected_columns(d, args)?;
            let estimator = bootstrap_estimator(&sub, args, load_constraints(args)?)?;
            let opts = BootstrapOptions {
                b: args.b.unwrap_or(DEFAULT_B),
                seed: args.seed.expect("checked in check_config"),
                min_valid: args.min_valid,
                target_count: args.target_count,
                ..BootstrapOptions::default()
            };
            let draws = bootstrap_impute(&sub, &estimator, &opts)?;
            draws_csv = Some(draws.to_csv());
            Report::from_draws("bootstrap", &draws)
        }
        Method::Mi => {
            let sub = selected_columns(d, args)?;
            let pattern = dataset::validate(&sub)?;
            let estimates = if pattern.class == PatternClass::ResponseOnly && pattern.incomplete_variables().len() == 1
            {
                let (response, predictors) = response_and_predictors(&sub, args)?;
                PointEstimate::from_set(&impute_closed_form(&sub, response, &predictors)?, sub.names())
            } else {
                let sys = build_concatenated(&sub)?;
                let res = solve_concatenated(&sys, &InitPolicy::CompleteCase, &nls_options(args))?;
                let conv = match args.df_convention {
                    DfArg::Adjusted => SeConvention::Adjusted,
                    _ => SeConvention::Raw,
                };
                PointEstimate::from_nls(&res, conv)
            };
            let draws = multiple_impute(
                &estimates,
                args.m.unwrap_or(DEFAULT_M),
                args.seed.expect("checked in check_config"),
            )?;
            draws_csv = Some(draws.to_csv());
            Report::from_draws("mi", &draws)
        }
    };
    Ok(Outputs {
        report: metadata(report, args),
        trace_csv,
        draws_csv,
    })
}

pub fn impute(args: &ImputeArgs) -> Result<Outputs> {
    impute_dataset(&load_input(args)?, args)
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| {
            Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", p.display())))
        }),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Impute(args) => {
            let out = impute(&args)?;
            if let (Some(p), Some(csv)) = (&args.trace_out, &out.trace_csv) {
                write_or_print(Some(p), csv)?;
            }
            if let (Some(p), Some(csv)) = (&args.draws_out, &out.draws_csv) {
                write_or_print(Some(p), csv)?;
            }
            write_or_print(args.out.as_deref(), &out.report.to_json())
        }
        Command::Compare(args) => {
            let reports = args
                .reports
                .iter()
                .map(|p| Report::from_json(&read_to_string(p)?))
                .collect::<Result<Vec<_>>>()?;
            write_or_print(args.out.as_deref(), &compare_reports(&reports)?)
        }
    }
}

/// `{"schema":1,"error":{"kind":…,"message":…}}`
pub fn error_json(kind: &str, message: &str) -> String {
    json!({"schema": 1, "error": {"kind": kind, "message": message}}).to_string()
}
