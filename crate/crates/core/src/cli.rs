//! The `spheregap` command line.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or configuration
//! error, 3 computation error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::asymptotics::{fit_rate_unchecked, predicted_gap, run_sweep, RateKind, RateModel, DEFAULT_MISMATCH_THRESHOLD};
use crate::error::Error;
use crate::geometry::TwoSphereConfig;
use crate::images::{assemble, DEFAULT_TOL};
use crate::output::{to_json_string, write_atomic};
use crate::par::Execution;
use crate::potential::{compute_gap, gradient_lower_bound, HarmonicField};
use crate::verify::{run_verification, VerifyOptions};
use crate::FORMAT_VERSION;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_COMPUTE: i32 = 3;

/// Environment variable capping the worker threads used by `sweep`.
pub const THREADS_ENV: &str = "SPHEREGAP_THREADS";

#[derive(Debug, Parser)]
#[command(name = "spheregap", version, about = "Potential gap between two nearly touching spherical conductors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Potential gap, its truncation error and the field lower bound.
    Diff(CommonArgs),
    /// Gap over a decreasing eps list, with rate fits.
    Sweep(CommonArgs),
    /// Oracle checks of the construction; exit 1 if any fails.
    Verify(VerifyArgs),
    /// The image-charge system as JSON.
    Charges(CommonArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// JSON run configuration; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    r1: Option<f64>,
    #[arg(long)]
    r2: Option<f64>,
    /// Half-gap; `sweep` takes a comma-separated, strictly decreasing list.
    #[arg(long)]
    eps: Option<String>,
    /// Applied field: a builtin name such as `x1`, or JSON `{"linear":[...]}`.
    #[arg(long)]
    field: Option<String>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Test-only fault injection: relative error applied to Q2.
    #[arg(long, hide = true)]
    perturb_q: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum EpsSpec {
    Single(f64),
    List(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum FieldSpec {
    Named(String),
    Linear(LinearSpec),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearSpec {
    pub linear: Vec<f64>,
}

/// The `--config` file. Every entry may also be given as a flag.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub n: Option<usize>,
    pub r1: Option<f64>,
    pub r2: Option<f64>,
    pub eps: Option<EpsSpec>,
    pub field: Option<FieldSpec>,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
    pub format: Option<Format>,
    pub out: Option<PathBuf>,
}

/// A fully validated run.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub cfg: TwoSphereConfig,
    pub eps_list: Vec<f64>,
    pub field: HarmonicField,
    pub tol: f64,
    pub seed: u64,
    pub format: Option<Format>,
    pub out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Compute(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(_) | Error::DimensionMismatch { .. } | Error::InvalidSweep(_) | Error::NotHarmonic { .. } => {
                Failure::Usage(e.to_string())
            }
            _ => Failure::Compute(e.to_string()),
        }
    }
}

fn parse_field(spec: &FieldSpec, n: usize) -> Result<HarmonicField, Failure> {
    match spec {
        FieldSpec::Linear(l) => {
            if l.linear.len() != n {
                return Err(Failure::Usage(format!("field.linear has {} entries, expected n = {n}", l.linear.len())));
            }
            if l.linear.iter().any(|a| !a.is_finite()) {
                return Err(Failure::Usage("field.linear entries must be finite".into()));
            }
            Ok(HarmonicField::linear(l.linear.clone()))
        }
        FieldSpec::Named(name) => {
            let axis = name
                .strip_prefix('x')
                .and_then(|k| k.parse::<usize>().ok())
                .filter(|k| (1..=n).contains(k))
                .ok_or_else(|| Failure::Usage(format!("unknown field {name:?}; builtins are x1..x{n}")))?;
            Ok(HarmonicField::coordinate(n, axis))
        }
    }
}

fn parse_eps_flag(text: &str) -> Result<EpsSpec, Failure> {
    let values = text
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| Failure::Usage(format!("cannot parse eps value {s:?}"))))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(if values.len() == 1 { EpsSpec::Single(values[0]) } else { EpsSpec::List(values) })
}

fn load_config(path: &Path) -> Result<RunConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("invalid config {}: {e}", path.display())))
}

fn resolve(args: &CommonArgs) -> Result<Resolved, Failure> {
    let mut rc = match &args.config {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    if args.n.is_some() {
        rc.n = args.n;
    }
    if args.r1.is_some() {
        rc.r1 = args.r1;
    }
    if args.r2.is_some() {
        rc.r2 = args.r2;
    }
    if let Some(e) = &args.eps {
        rc.eps = Some(parse_eps_flag(e)?);
    }
    if let Some(f) = &args.field {
        let spec = serde_json::from_str::<FieldSpec>(f).unwrap_or_else(|_| FieldSpec::Named(f.clone()));
        rc.field = Some(spec);
    }
    if args.tol.is_some() {
        rc.tol = args.tol;
    }
    if args.seed.is_some() {
        rc.seed = args.seed;
    }
    if args.format.is_some() {
        rc.format = args.format;
    }
    if args.out.is_some() {
        rc.out = args.out.clone();
    }

    let missing = |name: &str| Failure::Usage(format!("missing required field `{name}`"));
    let n = rc.n.ok_or_else(|| missing("n"))?;
    let r1 = rc.r1.ok_or_else(|| missing("r1"))?;
    let r2 = rc.r2.ok_or_else(|| missing("r2"))?;
    let eps_list = match rc.eps.ok_or_else(|| missing("eps"))? {
        EpsSpec::Single(e) => vec![e],
        EpsSpec::List(v) if v.is_empty() => return Err(Failure::Usage("eps list is empty".into())),
        EpsSpec::List(v) => v,
    };
    let cfg = TwoSphereConfig::new(n, r1, r2, eps_list[0])?;
    for &e in &eps_list[1..] {
        cfg.with_eps(e)?;
    }
    let field = match &rc.field {
        Some(spec) => parse_field(spec, n)?,
        None => HarmonicField::coordinate(n, 1),
    };
    let tol = rc.tol.unwrap_or(DEFAULT_TOL);
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Failure::Usage(format!("tol must lie in (0, 1), got {tol}")));
    }
    Ok(Resolved { cfg, eps_list, field, tol, seed: rc.seed.unwrap_or(0), format: rc.format, out: rc.out })
}

fn single_eps(r: &Resolved) -> Result<(), Failure> {
    if r.eps_list.len() != 1 {
        return Err(Failure::Usage("this subcommand takes a single eps".into()));
    }
    Ok(())
}

fn json_only(r: &Resolved) -> Result<(), Failure> {
    if r.format == Some(Format::Csv) {
        return Err(Failure::Usage("format csv is only available for sweep".into()));
    }
    Ok(())
}

fn emit(out: &Option<PathBuf>, text: &str, stdout: &mut dyn Write) -> Result<(), Failure> {
    match out {
        Some(path) => write_atomic(path, text.as_bytes())
            .map_err(|e| Failure::Compute(format!("cannot write {}: {e}", path.display()))),
        None => stdout.write_all(text.as_bytes()).map_err(|e| Failure::Compute(format!("cannot write stdout: {e}"))),
    }
}

fn a1(field: &HarmonicField) -> f64 {
    match field {
        HarmonicField::Linear(a) => a[0],
        HarmonicField::Custom { dim, evaluate, .. } => {
            let mut e1 = vec![0.0; *dim];
            e1[0] = 1.0;
            evaluate(&e1) - evaluate(&vec![0.0; *dim])
        }
    }
}

fn cmd_diff(r: &Resolved, stdout: &mut dyn Write) -> Result<i32, Failure> {
    single_eps(r)?;
    json_only(r)?;
    let res = compute_gap(&r.cfg, &r.field, r.tol)?;
    let pred = predicted_gap(r.cfg.n, r.cfg.r1, r.cfg.r2, r.cfg.eps, a1(&r.field));
    let ratio = if pred.formula_value_scaled != 0.0 { res.value / pred.formula_value_scaled } else { f64::NAN };
    let doc = json!({
        "format_version": FORMAT_VERSION,
        "config": r.cfg,
        "delta_u": res.value,
        "method": res.method,
        "tail_error": res.tail_error,
        "gradient_lower_bound": gradient_lower_bound(&res),
        "predicted_gap": pred,
        "ratio": ratio,
    });
    emit(&r.out, &to_json_string(&doc), stdout)?;
    Ok(EXIT_OK)
}

fn fit_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".fit.json");
    PathBuf::from(s)
}

fn cmd_sweep(r: &Resolved, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32, Failure> {
    let table = run_sweep(&r.cfg, &r.field, &r.eps_list, r.tol, Execution::Parallel)?;
    let fits: Vec<_> = [RateKind::PotentialGap, RateKind::GradientLower]
        .into_iter()
        .map(|kind| {
            let model = RateModel::for_regime(r.cfg.n, kind);
            match fit_rate_unchecked(&table, model) {
                Ok(fit) => {
                    let mismatch = fit.residual > DEFAULT_MISMATCH_THRESHOLD;
                    json!({"fit": fit, "model_mismatch": mismatch})
                }
                Err(e) => json!({"model": model, "error": e.to_string()}),
            }
        })
        .collect();
    let fit_doc = json!({"format_version": FORMAT_VERSION, "fits": fits});

    let body = match r.format.unwrap_or(Format::Csv) {
        Format::Csv => table.to_csv(),
        Format::Json => to_json_string(&table),
    };
    emit(&r.out, &body, stdout)?;
    if let Some(out) = &r.out {
        let path = fit_path(out);
        write_atomic(&path, to_json_string(&fit_doc).as_bytes())
            .map_err(|e| Failure::Compute(format!("cannot write {}: {e}", path.display())))?;
    }
    let failed = table.rows.iter().filter(|row| row.failed()).count();
    let _ = writeln!(stderr, "sweep: {} rows, {} failed", table.rows.len(), failed);
    for f in &fits {
        if let Some(fit) = f.get("fit") {
            let _ = writeln!(
                stderr,
                "fit {}: coefficient {} residual {}{}",
                fit["model"].as_str().unwrap_or("?"),
                fit["coefficient"],
                fit["residual"],
                if f["model_mismatch"].as_bool() == Some(true) { " (model mismatch)" } else { "" }
            );
        } else {
            let _ = writeln!(stderr, "fit {}: {}", f["model"], f["error"].as_str().unwrap_or(""));
        }
    }
    Ok(EXIT_OK)
}

fn cmd_verify(r: &Resolved, perturb_q: Option<f64>, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32, Failure> {
    single_eps(r)?;
    json_only(r)?;
    let opts = VerifyOptions { tol: r.tol, seed: r.seed, perturb_q, exec: Execution::Parallel };
    let report = run_verification(&r.cfg, &r.field, &opts)?;
    emit(&r.out, &to_json_string(&report), stdout)?;
    for c in report.checks.iter().filter(|c| !c.pass) {
        let _ = writeln!(stderr, "FAIL {}: value {:e}, expected {:e}, tolerance {:e}", c.name, c.value, c.expected, c.tolerance);
    }
    Ok(if report.all_pass { EXIT_OK } else { EXIT_VERIFY_FAILED })
}

fn cmd_charges(r: &Resolved, stdout: &mut dyn Write) -> Result<i32, Failure> {
    single_eps(r)?;
    json_only(r)?;
    if r.cfg.n == 2 {
        return Err(Failure::Usage("n = 2: closed form has no ladder".into()));
    }
    let sys = assemble(&r.cfg, r.tol)?;
    emit(&r.out, &to_json_string(&sys.to_json()), stdout)?;
    Ok(EXIT_OK)
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| Failure::Usage(format!("{THREADS_ENV} must be a positive integer, got {value:?}")))?;
    #[cfg(feature = "parallel")]
    {
        // A pool installed earlier in this process keeps its size.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
    Ok(())
}

/// Runs the CLI with explicit output streams; returns the exit code.
pub fn run_with_io<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let target: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = write!(target, "{}", e.render());
            return code;
        }
    };
    let outcome = configure_threads().and_then(|()| match &cli.command {
        Command::Diff(a) => cmd_diff(&resolve(a)?, stdout),
        Command::Sweep(a) => cmd_sweep(&resolve(a)?, stdout, stderr),
        Command::Verify(v) => cmd_verify(&resolve(&v.common)?, v.perturb_q, stdout, stderr),
        Command::Charges(a) => cmd_charges(&resolve(a)?, stdout),
    });
    match outcome {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Compute(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_COMPUTE
        }
    }
}

/// Runs the CLI against the process streams.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with_io(args, &mut stdout.lock(), &mut stderr.lock())
}
