//! Command-line front end: `check`, `simulate`, `validate`, `solve`.
//!
//! Exit codes: 0 success, 2 invalid input (unreadable file, malformed
//! spec, bad flag value), 3 numerical tolerance breach.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::discrepancy::{tv_bound_with, w_bound_with, DictionaryOptions, DiscrepancyReport, Observed, DEFAULT_DICTIONARY_SEED, MARGINAL_TOL};
use crate::equation::{check_grid, solve, Source, RESIDUAL_TOL};
use crate::error::SteinError;
use crate::measures::{bin_samples, joint_table, ConditionalModel, FiniteLaw, JointTable, SampleSet};
use crate::operators::apply;
use crate::oracle::{characterize_finite, tv_exact, wasserstein_exact, SUPPORT_CAP, TABLE_TOL};
use crate::sim::{perturb, sample_model, Perturbation, Seed, GENERATOR};
use crate::validate::{run_suite, Suite, IDENTITY_TOL, LP_TOL, SE_BAND};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_TOLERANCE: i32 = 3;

/// Environment variable capping the worker threads.
pub const THREADS_ENV: &str = "CONDSTEIN_THREADS";

#[derive(Debug, Parser)]
#[command(name = "condstein", version, about = "Conditional Stein discrepancies for finite-Y models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// TV and Wasserstein bounds of samples or an exact joint against a model.
    Check(CheckArgs),
    /// Draw samples from a (possibly perturbed) model.
    Simulate(SimulateArgs),
    /// Run the built-in self-check suites.
    Validate(ValidateArgs),
    /// Tabulate Stein-equation solutions and residuals.
    Solve(SolveArgs),
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// Model spec JSON.
    #[arg(long)]
    pub model: PathBuf,
    /// Samples CSV with header `x,y`.
    #[arg(long, conflicts_with = "exact", required_unless_present = "exact")]
    pub samples: Option<PathBuf>,
    /// Exact joint table JSON.
    #[arg(long)]
    pub exact: Option<PathBuf>,
    /// Comma-separated bin edges; sample y values are replaced by bin midpoints.
    #[arg(long, allow_hyphen_values = true)]
    pub bins: Option<String>,
    /// Seed of the random dictionary members.
    #[arg(long, default_value_t = DEFAULT_DICTIONARY_SEED)]
    pub seed: u64,
    /// Report path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Add ε to every conditional mean.
    #[arg(long)]
    pub mean_shift: Option<f64>,
    /// Mix every conditional with `--noise` at weight ε.
    #[arg(long, requires = "noise")]
    pub contaminate: Option<f64>,
    /// Noise law as JSON `{"support": [...], "weights": [...]}`.
    #[arg(long)]
    pub noise: Option<String>,
    /// Exchange the conditionals at two y values, `ya,yb`.
    #[arg(long, allow_hyphen_values = true)]
    pub swap: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// identity, characterization, bounds, independence, or all.
    #[arg(long, default_value = "all")]
    pub suite: String,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Optional JSON summary.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Source h: `step:a`, `interval:a:b`, `point:a`, `const:c`, `poly:c0:c1:...`.
    #[arg(long, allow_hyphen_values = true)]
    pub h: String,
    /// `lo:hi:n` (inclusive, evenly spaced) or `support`.
    #[arg(long, default_value = "support", allow_hyphen_values = true)]
    pub grid: String,
    /// Largest accepted residual |N f − (h − E h)|; exceeding it exits with 3.
    #[arg(long, default_value_t = RESIDUAL_TOL)]
    pub tol: f64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Failure carrying its exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl CliError {
    fn invalid(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INVALID,
            message: message.into(),
        }
    }
}

impl From<SteinError> for CliError {
    fn from(e: SteinError) -> Self {
        Self::invalid(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let io = |e: std::io::Error| CliError::invalid(format!("{}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
}

/// Parses a model spec; diagnostics carry the line/column or the field name.
pub fn parse_model(text: &str, origin: &str) -> CliResult<ConditionalModel> {
    serde_json::from_str(text).map_err(|e| CliError::invalid(format!("{origin}: {e}")))
}

pub fn parse_joint(text: &str, origin: &str) -> CliResult<JointTable> {
    serde_json::from_str(text).map_err(|e| CliError::invalid(format!("{origin}: {e}")))
}

/// Reads a samples CSV with header `x,y`.
pub fn parse_samples(text: &str, origin: &str) -> CliResult<SampleSet> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| CliError::invalid(format!("{origin}: {e}")))?
        .clone();
    if headers.len() != 2 || &headers[0] != "x" || &headers[1] != "y" {
        return Err(CliError::invalid(format!("{origin}: header must be `x,y`")));
    }
    let mut pairs = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::invalid(format!("{origin}: {e}")))?;
        let line = rec.position().map_or(0, |p| p.line());
        let num = |i: usize| {
            rec[i]
                .parse::<f64>()
                .map_err(|_| CliError::invalid(format!("{origin}: line {line}: `{}` is not a number", &rec[i])))
        };
        pairs.push((num(0)?, num(1)?));
    }
    SampleSet::new(pairs, origin).map_err(|e| CliError::invalid(format!("{origin}: {e}")))
}

/// Shortest round-trip digits; exponent form outside [1e-4, 1e15).
pub fn format_number(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) || !a.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// CSV text with header `x,y`.
pub fn format_samples(samples: &SampleSet) -> String {
    let mut out = String::with_capacity(samples.len() * 24);
    out.push_str("x,y\n");
    for &(x, y) in samples.pairs() {
        out.push_str(&format!("{},{}\n", format_number(x), format_number(y)));
    }
    out
}

/// SHA-256 of the model's canonical JSON.
pub fn model_digest(model: &ConditionalModel) -> String {
    let canonical = serde_json::to_string(model).expect("model serializes");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

fn bound_json(rep: &DiscrepancyReport) -> Value {
    json!({
        "sup": rep.sup_value,
        "argmax": rep.argmax().map(|a| a.label.clone()),
        "lower_estimate": rep.lower_estimate,
        "per_function": rep.per_function,
    })
}

fn versions() -> Value {
    json!({ "condstein": env!("CARGO_PKG_VERSION"), "rng": GENERATOR })
}

fn parse_edges(spec: &str) -> CliResult<Vec<f64>> {
    spec.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| CliError::invalid(format!("--bins: `{s}` is not a number"))))
        .collect()
}

/// Runs `check`; returns the report and the exit code it implies.
pub fn cmd_check(args: &CheckArgs) -> CliResult<(Value, i32)> {
    let origin = args.model.display().to_string();
    let model = parse_model(&read(&args.model)?, &origin)?;
    let opts = DictionaryOptions {
        seed: args.seed,
        ..DictionaryOptions::default()
    };
    let mut code = EXIT_OK;
    let mut report = serde_json::Map::new();
    report.insert("model_digest".into(), json!(model_digest(&model)));
    report.insert("seed".into(), json!(args.seed));

    if let Some(path) = &args.exact {
        let joint = parse_joint(&read(path)?, &path.display().to_string())?;
        let tv = tv_bound_with(Observed::Exact(&joint), &model, &opts)?;
        let w = w_bound_with(Observed::Exact(&joint), &model, &opts)?;
        let y_matches = y_marginal_matches(&joint, &model);
        let (characterization, oracle) = if model.is_exact() {
            let table = joint_table(&model)?;
            let otv = tv_exact(&joint, &table);
            let ow = match wasserstein_exact(&joint, &table) {
                Ok(v) => Some(v),
                Err(SteinError::Size(..)) => None,
                Err(e) => return Err(e.into()),
            };
            if y_matches {
                let tv_breach = (tv.sup_value - otv).abs() > IDENTITY_TOL;
                let w_breach = ow.is_some_and(|ow| w.sup_value > ow + LP_TOL);
                if tv_breach || w_breach {
                    code = EXIT_TOLERANCE;
                }
            }
            (Some(characterize_finite(&joint, &model)?), Some(json!({ "tv": otv, "w": ow })))
        } else {
            (None, None)
        };
        report.insert("mode".into(), json!("exact"));
        report.insert("n".into(), Value::Null);
        report.insert("y_marginal_matches".into(), json!(y_matches));
        report.insert("tv".into(), bound_json(&tv));
        report.insert("w".into(), bound_json(&w));
        report.insert("characterization".into(), json!(characterization));
        report.insert("oracle".into(), oracle.unwrap_or(Value::Null));
    } else {
        let path = args.samples.as_ref().expect("clap requires samples or exact");
        let mut samples = parse_samples(&read(path)?, &path.display().to_string())?;
        if let Some(spec) = &args.bins {
            let binned = bin_samples(&samples, &parse_edges(spec)?)?;
            report.insert(
                "binning".into(),
                json!({ "out_of_range": binned.out_of_range, "empty_bins": binned.empty_bins }),
            );
            samples = binned.samples;
        }
        let tv = tv_bound_with(Observed::Empirical(&samples), &model, &opts)?;
        let w = w_bound_with(Observed::Empirical(&samples), &model, &opts)?;
        report.insert("mode".into(), json!("empirical"));
        report.insert("n".into(), json!(samples.len()));
        report.insert("tv".into(), bound_json(&tv));
        report.insert("w".into(), bound_json(&w));
        report.insert("characterization".into(), Value::Null);
        report.insert("oracle".into(), Value::Null);
    }
    report.insert(
        "tolerances".into(),
        json!({
            "identity": IDENTITY_TOL,
            "table": TABLE_TOL,
            "lp": LP_TOL,
            "se_band": SE_BAND,
            "oracle_support_cap": SUPPORT_CAP,
        }),
    );
    report.insert("versions".into(), versions());
    Ok((Value::Object(report), code))
}

fn y_marginal_matches(joint: &JointTable, model: &ConditionalModel) -> bool {
    let col = joint.y_marginal();
    let outside = joint
        .y_grid()
        .iter()
        .zip(&col)
        .any(|(&y, &m)| m > 0.0 && model.index_of(y).is_none());
    !outside
        && model.y_values().iter().zip(model.y_weights().weights()).all(|(&y, &w)| {
            let got = joint.y_grid().iter().position(|&v| v == y).map_or(0.0, |j| col[j]);
            (got - w).abs() <= MARGINAL_TOL
        })
}

fn parse_perturbation(args: &SimulateArgs) -> CliResult<Option<Perturbation>> {
    let given = [args.mean_shift.is_some(), args.contaminate.is_some(), args.swap.is_some()];
    if given.iter().filter(|&&g| g).count() > 1 {
        return Err(CliError::invalid("at most one of --mean-shift, --contaminate, --swap"));
    }
    if let Some(eps) = args.mean_shift {
        return Ok(Some(Perturbation::MeanShift(eps)));
    }
    if let Some(eps) = args.contaminate {
        let text = args.noise.as_deref().unwrap_or_default();
        let noise: FiniteLaw = serde_json::from_str(text).map_err(|e| CliError::invalid(format!("--noise: {e}")))?;
        return Ok(Some(Perturbation::Contaminate { eps, noise }));
    }
    if let Some(spec) = &args.swap {
        let parts: Vec<&str> = spec.split(',').collect();
        let parsed: Vec<f64> = parts.iter().filter_map(|s| s.trim().parse().ok()).collect();
        if parts.len() != 2 || parsed.len() != 2 {
            return Err(CliError::invalid("--swap expects `ya,yb`"));
        }
        return Ok(Some(Perturbation::SwapConditionals(parsed[0], parsed[1])));
    }
    Ok(None)
}

pub fn cmd_simulate(args: &SimulateArgs) -> CliResult<usize> {
    let mut model = parse_model(&read(&args.model)?, &args.model.display().to_string())?;
    if let Some(kind) = parse_perturbation(args)? {
        model = perturb(&model, &kind)?;
    }
    let samples = sample_model(&model, args.n, Seed(args.seed))?;
    write_atomic(&args.out, format_samples(&samples).as_bytes())?;
    Ok(samples.len())
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidateSummary {
    pub seed: u64,
    pub suites: Vec<crate::validate::SuiteReport>,
    pub passed: bool,
}

pub fn cmd_validate(args: &ValidateArgs) -> CliResult<ValidateSummary> {
    let suites: Vec<Suite> = if args.suite == "all" {
        Suite::ALL.to_vec()
    } else {
        args.suite
            .split(',')
            .map(|s| Suite::parse(s.trim()).ok_or_else(|| CliError::invalid(format!("unknown suite `{s}`"))))
            .collect::<CliResult<_>>()?
    };
    let reports = suites
        .into_iter()
        .map(|s| run_suite(s, args.seed))
        .collect::<Result<Vec<_>, _>>()?;
    let passed = reports.iter().all(|r| r.passed);
    Ok(ValidateSummary {
        seed: args.seed,
        suites: reports,
        passed,
    })
}

/// Source function from its command-line form.
pub fn parse_source(spec: &str) -> CliResult<Source> {
    let mut parts = spec.split(':');
    let kind = parts.next().unwrap_or_default();
    let nums: Vec<f64> = parts
        .map(|s| s.trim().parse::<f64>().map_err(|_| CliError::invalid(format!("--h: `{s}` is not a number"))))
        .collect::<CliResult<_>>()?;
    let arity = |n: usize| {
        if nums.len() == n {
            Ok(())
        } else {
            Err(CliError::invalid(format!("--h: `{kind}` takes {n} number(s)")))
        }
    };
    match kind {
        "step" => arity(1).map(|_| Source::step(nums[0])),
        "interval" => arity(2).map(|_| Source::interval(nums[0], nums[1])),
        "point" => arity(1).map(|_| {
            let a = nums[0];
            Source::new(format!("1{{x={a}}}"), move |x| if x == a { 1.0 } else { 0.0 })
        }),
        "const" => arity(1).map(|_| Source::constant(nums[0])),
        "poly" if !nums.is_empty() => {
            let c = nums.clone();
            Ok(Source::new(format!("poly{c:?}"), move |x| c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci)))
        }
        _ => Err(CliError::invalid(format!("--h: unknown source `{spec}`"))),
    }
}

fn parse_grid(spec: &str) -> CliResult<Option<Vec<f64>>> {
    if spec == "support" {
        return Ok(None);
    }
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || CliError::invalid(format!("--grid: expected `lo:hi:n` or `support`, got `{spec}`"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let n: usize = parts[2].parse().map_err(|_| bad())?;
    if n == 0 || !(lo.is_finite() && hi.is_finite()) || hi < lo {
        return Err(bad());
    }
    if n == 1 {
        return Ok(Some(vec![lo]));
    }
    Ok(Some((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()))
}

/// Writes `y,x,h,f,residual` rows for every y of the model; returns the
/// worst residual.
pub fn cmd_solve(args: &SolveArgs) -> CliResult<f64> {
    let model = parse_model(&read(&args.model)?, &args.model.display().to_string())?;
    let h = parse_source(&args.h)?;
    let grid = parse_grid(&args.grid)?;
    let mut out = String::from("y,x,h,f,residual\n");
    let mut worst: f64 = 0.0;
    for (&y, fam) in model.y_values().iter().zip(model.families()) {
        let sol = solve(fam, &h).map_err(|e| CliError::invalid(format!("y = {y}: {e}")))?;
        // grid points outside a family's domain are skipped for that y
        let xs = grid.clone().unwrap_or_else(|| check_grid(fam));
        for x in xs.into_iter().filter(|&x| fam.in_domain(x)) {
            let nf = apply(fam, &sol.f, x).map_err(|e| CliError::invalid(format!("y = {y}: {e}")))?;
            let hx = h.eval(x);
            let r = (nf - (hx - sol.centered_mean)).abs();
            worst = worst.max(r);
            let cells = [y, x, hx, sol.f.eval(x)].map(format_number).join(",");
            out.push_str(&format!("{cells},{r:e}\n"));
        }
    }
    write_atomic(&args.out, out.as_bytes())?;
    Ok(worst)
}

/// Applies `CONDSTEIN_THREADS` to the global worker pool.
pub fn configure_threads(value: Option<&str>) -> CliResult<()> {
    let Some(v) = value else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::invalid(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?;
    // a second configuration attempt in the same process is harmless
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Dispatches a parsed command line; returns the exit code.
pub fn run(cli: Cli) -> i32 {
    if let Err(e) = configure_threads(std::env::var(THREADS_ENV).ok().as_deref()) {
        eprintln!("error: {e}");
        return e.code;
    }
    let result = match &cli.command {
        Command::Check(a) => cmd_check(a).and_then(|(report, code)| {
            let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
            match &a.out {
                Some(p) => write_atomic(p, text.as_bytes())?,
                None => print!("{text}"),
            }
            if code == EXIT_TOLERANCE {
                eprintln!("error: oracle comparison outside tolerance");
            }
            Ok(code)
        }),
        Command::Simulate(a) => cmd_simulate(a).map(|n| {
            eprintln!("wrote {n} samples to {}", a.out.display());
            EXIT_OK
        }),
        Command::Validate(a) => cmd_validate(a).and_then(|summary| {
            println!("{:<18} {:>6} {:>9} {:>12} {:>10} {:>8}", "suite", "cases", "failures", "worst", "tolerance", "result");
            for r in &summary.suites {
                println!(
                    "{:<18} {:>6} {:>9} {:>12.3e} {:>10.1e} {:>8}",
                    r.suite.name(),
                    r.cases,
                    r.failures,
                    r.worst,
                    r.tolerance,
                    if r.passed { "pass" } else { "FAIL" }
                );
            }
            if let Some(p) = &a.out {
                write_atomic(p, (serde_json::to_string_pretty(&summary).expect("serializes") + "\n").as_bytes())?;
            }
            Ok(if summary.passed { EXIT_OK } else { EXIT_TOLERANCE })
        }),
        Command::Solve(a) => cmd_solve(a).map(|worst| {
            if worst > a.tol {
                eprintln!("error: residual {worst:e} exceeds {:e}", a.tol);
                EXIT_TOLERANCE
            } else {
                EXIT_OK
            }
        }),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

/// Entry point for the binary: parses `std::env::args` and runs.
pub fn main_from_env() -> i32 {
    match Cli::try_parse() {
        Ok(cli) => run(cli),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            code
        }
    }
}
