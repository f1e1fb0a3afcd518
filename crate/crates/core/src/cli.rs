//! Command-line front end: `generate`, `test`, `simulate` and `bench`.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 usage or validation error,
//! 3 degenerate statistic (a JSON error object is printed on stdout).
//!
//! Every long flag can also be set in a TOML file passed with `--config`,
//! either at top level or under a `[generate]`, `[test]`, `[simulate]` or
//! `[bench]` table; flags on the command line win.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dataset::Dataset;
use crate::dtetests::{
    run_test, Diagnostics, Method, PropensityMode, TestConfig, DEFAULT_ALPHA, DEFAULT_CLIP_EPS,
    DEFAULT_L2, DEFAULT_PERMUTATIONS,
};
use crate::error::Error;
use crate::harness::{
    bench_timing, null_statistic_sample, run_plan, DataSource, ExperimentPlan, RateTable,
    TimingRow,
};
use crate::numerics::KernelFamily;
use crate::scenarios::{generate, Design, Link, Scenario, ScenarioConfig, DEFAULT_DX};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DEGENERATE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "xkte", version, about = "Kernel tests for distributional treatment effects")]
struct Cli {
    /// TOML file with default flag values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Byte-reproducible output (drops the timestamp from result JSON).
    #[arg(long, global = true)]
    deterministic: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic scenario dataset as CSV.
    Generate(GenerateArgs),
    /// Run one test on a CSV dataset and print the result as JSON.
    Test(TestArgs),
    /// Monte Carlo rejection rates.
    Simulate(SimulateArgs),
    /// Mean wall-clock time per test call.
    Bench(BenchArgs),
}

#[derive(Debug, Args, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
struct GenerateArgs {
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    link: Option<String>,
    #[arg(long)]
    design: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of covariates.
    #[arg(long)]
    dx: Option<usize>,
    /// Output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Test options shared by `test` and `simulate`.
#[derive(Debug, Args, Serialize, Deserialize, Default, Clone)]
#[serde(rename_all = "kebab-case")]
struct TestOptions {
    #[arg(long)]
    alpha: Option<f64>,
    /// Permutations for kte and baseline-aipw.
    #[arg(long)]
    permutations: Option<usize>,
    #[arg(long, value_name = "rbf|linear")]
    kernel_x: Option<String>,
    #[arg(long, value_name = "rbf|linear")]
    kernel_y: Option<String>,
    /// Squared RBF bandwidth on covariates (median heuristic otherwise).
    #[arg(long)]
    bandwidth_x: Option<f64>,
    /// Squared RBF bandwidth on outcomes (median heuristic otherwise).
    #[arg(long)]
    bandwidth_y: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    clip_eps: Option<f64>,
    #[arg(long)]
    l2: Option<f64>,
    /// Use this known propensity instead of fitting a logistic model.
    #[arg(long)]
    known_propensity: Option<f64>,
    /// Use the U-statistic form of the KTE statistic.
    #[arg(long)]
    kte_unbiased: Option<bool>,
}

#[derive(Debug, Args, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
struct TestArgs {
    /// Dataset CSV with header x1,...,xd,a,y.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    method: Option<String>,
    /// Permutation seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Shuffle units before splitting into folds.
    #[arg(long)]
    split_seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    options: TestOptions,
}

#[derive(Debug, Args, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
struct SimulateArgs {
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    link: Option<String>,
    #[arg(long)]
    design: Option<String>,
    #[arg(long)]
    dx: Option<usize>,
    /// Resample from this CSV instead of a synthetic scenario.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Bootstrap sample size when resampling from `--input`.
    #[arg(long)]
    bootstrap: Option<usize>,
    /// Sample sizes, comma-separated.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write null-scenario statistics (one per replicate) to this CSV.
    #[arg(long)]
    statistics_out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    options: TestOptions,
}

#[derive(Debug, Args, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
struct BenchArgs {
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Timed calls per (method, n), after one warm-up call.
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    permutations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure carrying its exit code.
#[derive(Debug)]
struct CliError {
    code: i32,
    kind: &'static str,
    message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            kind: "usage",
            message: message.into(),
        }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        Self {
            code: EXIT_IO,
            kind: "io",
            message: format!("{}: {e}", path.display()),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let (code, kind) = match &e {
            Error::Io(_) => (EXIT_IO, "io"),
            Error::DegenerateStatistic(_) => (EXIT_DEGENERATE, "degenerate-statistic"),
            Error::DegenerateBandwidth => (EXIT_DEGENERATE, "degenerate-bandwidth"),
            Error::Numerical(_) => (EXIT_DEGENERATE, "numerical"),
            Error::Input(_) => (EXIT_USAGE, "invalid-input"),
            Error::Config(_) => (EXIT_USAGE, "invalid-config"),
            Error::Fit(_) => (EXIT_USAGE, "fit"),
        };
        Self {
            code,
            kind,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(stderr, "{}", e.render());
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            if e.code == EXIT_DEGENERATE {
                let obj = serde_json::json!({
                    "error": { "kind": e.kind, "message": e.message }
                });
                let _ = writeln!(stdout, "{obj}");
            }
            let _ = writeln!(stderr, "error: {}", e.message);
            e.code
        }
    }
}

fn dispatch(cli: Cli, stdout: &mut dyn Write) -> CliResult<()> {
    let file = match &cli.config {
        Some(path) => Some(load_config_file(path)?),
        None => None,
    };
    match cli.command {
        Command::Generate(a) => cmd_generate(merge(a, file.as_ref(), "generate")?, stdout),
        Command::Test(a) => cmd_test(merge(a, file.as_ref(), "test")?, cli.deterministic, stdout),
        Command::Simulate(a) => cmd_simulate(merge(a, file.as_ref(), "simulate")?, stdout),
        Command::Bench(a) => {
            if cli.deterministic {
                return Err(CliError::usage(
                    "bench reports wall-clock times and cannot be deterministic",
                ));
            }
            cmd_bench(merge(a, file.as_ref(), "bench")?, stdout)
        }
    }
}

fn load_config_file(path: &Path) -> CliResult<toml::Table> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    toml::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

/// Fills flags left unset on the command line from the config file. Keys of
/// the command's own table override top-level keys.
fn merge<A: Serialize + DeserializeOwned>(
    args: A,
    file: Option<&toml::Table>,
    section: &str,
) -> CliResult<A> {
    let Some(file) = file else {
        return Ok(args);
    };
    let to_json = |t: &toml::Table| -> CliResult<serde_json::Map<String, Value>> {
        match serde_json::to_value(t) {
            Ok(Value::Object(m)) => Ok(m),
            _ => Err(CliError::usage("config file is not a table")),
        }
    };
    let mut defaults = serde_json::Map::new();
    for (k, v) in to_json(file)? {
        if !matches!(k.as_str(), "generate" | "test" | "simulate" | "bench") {
            defaults.insert(k, v);
        }
    }
    if let Some(toml::Value::Table(t)) = file.get(section) {
        defaults.extend(to_json(t)?);
    }
    let Value::Object(mut flags) =
        serde_json::to_value(&args).map_err(|e| CliError::usage(e.to_string()))?
    else {
        unreachable!("argument structs serialize to objects");
    };
    // top-level keys may belong to other commands; keep only ours
    let known: Vec<String> = flags.keys().cloned().collect();
    for (k, v) in defaults {
        if !known.contains(&k) {
            if file.get(section).and_then(|s| s.get(&k)).is_some() {
                return Err(CliError::usage(format!("unknown key '{k}' in [{section}]")));
            }
            continue;
        }
        if flags.get(&k).is_none_or(Value::is_null) {
            flags.insert(k, v);
        }
    }
    serde_json::from_value(Value::Object(flags))
        .map_err(|e| CliError::usage(format!("config file: {e}")))
}

fn required<T>(v: Option<T>, flag: &str) -> CliResult<T> {
    v.ok_or_else(|| CliError::usage(format!("missing required flag --{flag}")))
}

fn parse_named<T: std::str::FromStr<Err = Error>>(s: Option<&str>, default: T) -> CliResult<T> {
    match s {
        Some(s) => Ok(s.parse()?),
        None => Ok(default),
    }
}

fn parse_kernel(s: Option<&str>) -> CliResult<KernelFamily> {
    match s {
        None | Some("rbf") => Ok(KernelFamily::Rbf),
        Some("linear") => Ok(KernelFamily::Linear),
        Some(other) => Err(CliError::usage(format!(
            "unknown kernel '{other}' (expected rbf or linear)"
        ))),
    }
}

fn parse_methods(names: Option<&[String]>, default: &[Method]) -> CliResult<Vec<Method>> {
    match names {
        None => Ok(default.to_vec()),
        Some(names) => {
            let mut out = Vec::with_capacity(names.len());
            for name in names {
                let m: Method = name.trim().parse()?;
                if out.contains(&m) {
                    return Err(CliError::usage(format!("method '{m}' listed twice")));
                }
                out.push(m);
            }
            Ok(out)
        }
    }
}

fn open_output<'a>(
    path: Option<&Path>,
    stdout: &'a mut dyn Write,
) -> CliResult<Box<dyn Write + 'a>> {
    match path {
        Some(p) => {
            let f = File::create(p).map_err(|e| CliError::io(p, e))?;
            Ok(Box::new(BufWriter::new(f)))
        }
        None => Ok(Box::new(stdout)),
    }
}

fn finish(mut w: Box<dyn Write + '_>, path: Option<&Path>) -> CliResult<()> {
    w.flush()
        .map_err(|e| CliError::io(path.unwrap_or(Path::new("<stdout>")), e))
}

fn io_err(path: Option<&Path>) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::io(path.unwrap_or(Path::new("<stdout>")), e)
}

fn cmd_generate(a: GenerateArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let config = ScenarioConfig {
        scenario: parse_named(Some(required(a.scenario, "scenario")?.as_str()), Scenario::I)?,
        link: parse_named(a.link.as_deref(), Link::Linear)?,
        design: parse_named(a.design.as_deref(), Design::Observational)?,
        n: required(a.n, "n")?,
        seed: a.seed.unwrap_or(0),
        d_x: a.dx.unwrap_or(DEFAULT_DX),
    };
    config.validate()?;
    let data = generate(&config)?;
    let path = a.out.as_deref();
    let mut w = open_output(path, stdout)?;
    write_dataset_csv(&data, &mut w).map_err(io_err(path))?;
    finish(w, path)
}

/// Writes `x1,...,xd,a,y` rows with shortest round-trip float formatting.
pub fn write_dataset_csv<W: Write>(data: &Dataset, w: W) -> std::io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> = (1..=data.d()).map(|j| format!("x{j}")).collect();
    header.push("a".into());
    header.push("y".into());
    out.write_record(&header)?;
    let mut record = Vec::with_capacity(data.d() + 2);
    for i in 0..data.n() {
        record.clear();
        record.extend((0..data.d()).map(|j| data.x()[(i, j)].to_string()));
        record.push(data.treatment()[i].to_string());
        record.push(data.outcomes()[i].to_string());
        out.write_record(&record)?;
    }
    out.flush()
}

/// Reads a dataset CSV. Rows are numbered from 1 after the header.
pub fn read_dataset_csv<R: Read>(r: R) -> crate::error::Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(r);
    let header = reader
        .headers()
        .map_err(|e| Error::Input(format!("header: {e}")))?
        .clone();
    let cols: Vec<&str> = header.iter().collect();
    let d = cols.len().saturating_sub(2);
    let expected: Vec<String> = (1..=d)
        .map(|j| format!("x{j}"))
        .chain(["a".to_string(), "y".to_string()])
        .collect();
    if d == 0 || cols != expected {
        return Err(Error::Input(format!(
            "header must be x1,...,xd,a,y with d >= 1, got '{}'",
            cols.join(",")
        )));
    }
    let mut rows = Vec::new();
    let mut a = Vec::new();
    let mut y = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let row = k + 1;
        let record = record.map_err(|e| Error::Input(format!("row {row}: {e}")))?;
        if record.len() != d + 2 {
            return Err(Error::Input(format!(
                "row {row}: expected {} cells, found {}",
                d + 2,
                record.len()
            )));
        }
        let mut values = Vec::with_capacity(d + 2);
        for (cell, name) in record.iter().zip(&expected) {
            if cell.is_empty() {
                return Err(Error::Input(format!("row {row}: missing value in column {name}")));
            }
            let v: f64 = cell.parse().map_err(|_| {
                Error::Input(format!("row {row}: column {name}: '{cell}' is not a number"))
            })?;
            if !v.is_finite() {
                return Err(Error::Input(format!("row {row}: column {name} is not finite")));
            }
            values.push(v);
        }
        let arm = match values[d] {
            v if v == 0.0 => 0,
            v if v == 1.0 => 1,
            v => {
                return Err(Error::Input(format!("row {row}: treatment must be 0 or 1, got {v}")))
            }
        };
        a.push(arm);
        y.push(values[d + 1]);
        values.truncate(d);
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(Error::Input("dataset has no rows".into()));
    }
    Dataset::from_rows(&rows, a, y)
}

fn read_dataset_file(path: &Path) -> CliResult<Dataset> {
    let f = File::open(path).map_err(|e| CliError::io(path, e))?;
    read_dataset_csv(std::io::BufReader::new(f)).map_err(|e| match e {
        Error::Input(m) => CliError::usage(format!("{}: {m}", path.display())),
        other => other.into(),
    })
}

fn build_test_config(o: &TestOptions, default_propensity: PropensityMode) -> CliResult<TestConfig> {
    let config = TestConfig {
        kernel_x: parse_kernel(o.kernel_x.as_deref())?,
        kernel_y: parse_kernel(o.kernel_y.as_deref())?,
        bandwidth_x: o.bandwidth_x,
        bandwidth_y: o.bandwidth_y,
        lambda: o.lambda,
        clip_eps: o.clip_eps.unwrap_or(DEFAULT_CLIP_EPS),
        l2: o.l2.unwrap_or(DEFAULT_L2),
        permutations: o.permutations.unwrap_or(DEFAULT_PERMUTATIONS),
        propensity: o
            .known_propensity
            .map(PropensityMode::Known)
            .unwrap_or(default_propensity),
        alpha: o.alpha.unwrap_or(DEFAULT_ALPHA),
        kte_unbiased: o.kte_unbiased.unwrap_or(false),
        ..TestConfig::default()
    };
    config.validate()?;
    Ok(config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub kernel_x: KernelFamily,
    pub kernel_y: KernelFamily,
    pub bandwidth_x: Option<f64>,
    pub bandwidth_y: Option<f64>,
    pub lambda: Option<f64>,
    pub clip_eps: f64,
    pub l2: f64,
    pub propensity: PropensityMode,
    pub split_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub permutations: Option<usize>,
}

/// Single-test output of the `test` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultJson {
    pub method: Method,
    pub n: usize,
    pub d: usize,
    pub statistic: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub reject: bool,
    pub n_effective: usize,
    pub config: ConfigEcho,
    pub diagnostics: Diagnostics,
    pub version: String,
    /// Seconds since the Unix epoch; absent under `--deterministic`.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub timestamp: Option<u64>,
}

fn cmd_test(a: TestArgs, deterministic: bool, stdout: &mut dyn Write) -> CliResult<()> {
    let input = required(a.input, "input")?;
    let method = parse_named(a.method.as_deref(), Method::AipwXkte)?;
    let mut config = build_test_config(&a.options, PropensityMode::Logistic)?;
    config.split_seed = a.split_seed;
    config.permutation_seed = a.seed.unwrap_or(0);
    let data = read_dataset_file(&input)?;
    if !data.has_both_arms() {
        return Err(CliError::usage(format!(
            "{}: data contains a single treatment arm",
            input.display()
        )));
    }
    let result = run_test(method, &data, &config)?;
    let uses_b = method.uses_permutations();
    let json = ResultJson {
        method,
        n: data.n(),
        d: data.d(),
        statistic: result.statistic,
        p_value: result.p_value,
        alpha: result.alpha,
        reject: result.reject,
        n_effective: result.n_effective,
        config: ConfigEcho {
            kernel_x: config.kernel_x,
            kernel_y: config.kernel_y,
            bandwidth_x: result
                .diagnostics
                .kernel_x
                .map(|k| k.bandwidth_sq)
                .or(config.bandwidth_x),
            bandwidth_y: result
                .diagnostics
                .kernel_y
                .map(|k| k.bandwidth_sq)
                .or(config.bandwidth_y),
            lambda: result.diagnostics.lambda.or(config.lambda),
            clip_eps: config.clip_eps,
            l2: config.l2,
            propensity: config.propensity,
            split_seed: config.split_seed,
            seed: uses_b.then_some(config.permutation_seed),
            permutations: uses_b.then_some(config.permutations),
        },
        diagnostics: result.diagnostics,
        version: crate::VERSION.to_string(),
        timestamp: (!deterministic).then(|| {
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0)
        }),
    };
    let path = a.out.as_deref();
    let mut w = open_output(path, stdout)?;
    serde_json::to_writer_pretty(&mut w, &json)
        .map_err(|e| io_err(path)(std::io::Error::other(e)))?;
    writeln!(w).map_err(io_err(path))?;
    finish(w, path)
}

fn cmd_simulate(a: SimulateArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let methods = parse_methods(a.methods.as_deref(), &[Method::AipwXkte])?;
    let (source, n_grid) = match (&a.input, &a.scenario) {
        (Some(_), Some(_)) => {
            return Err(CliError::usage("--scenario and --input are mutually exclusive"))
        }
        (Some(path), None) => {
            let m = required(a.bootstrap, "bootstrap")?;
            if a.n.is_some() {
                return Err(CliError::usage("--n does not apply with --input; use --bootstrap"));
            }
            let data = read_dataset_file(path)?;
            let label = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "bootstrap".into());
            (
                DataSource::Bootstrap {
                    data: Arc::new(data),
                    label,
                },
                vec![m],
            )
        }
        (None, Some(s)) => {
            if a.bootstrap.is_some() {
                return Err(CliError::usage("--bootstrap requires --input"));
            }
            let source = DataSource::Scenario {
                scenario: s.parse()?,
                link: parse_named(a.link.as_deref(), Link::Linear)?,
                design: parse_named(a.design.as_deref(), Design::Observational)?,
                d_x: a.dx.unwrap_or(DEFAULT_DX),
            };
            (source, required(a.n, "n")?)
        }
        (None, None) => return Err(CliError::usage("one of --scenario or --input is required")),
    };
    let default_propensity = match &source {
        DataSource::Scenario {
            design: Design::Experimental,
            ..
        } => PropensityMode::Known(0.5),
        _ => PropensityMode::Logistic,
    };
    let config = build_test_config(&a.options, default_propensity)?;
    let mut plan = ExperimentPlan::new(source, methods, n_grid, a.reps.unwrap_or(500));
    plan.alpha = config.alpha;
    plan.master_seed = a.seed.unwrap_or(0);
    plan.propensity = Some(config.propensity);
    plan.threads = a.threads;
    plan.config = config;

    let table = run_plan(&plan)?;
    let path = a.out.as_deref();
    let mut w = open_output(path, stdout)?;
    write_rate_table(&table, &mut w).map_err(io_err(path))?;
    finish(w, path)?;

    if let Some(stats_path) = a.statistics_out.as_deref() {
        let stats = null_statistic_sample(&plan)?;
        let f = File::create(stats_path).map_err(|e| CliError::io(stats_path, e))?;
        let mut out = csv::Writer::from_writer(BufWriter::new(f));
        let io = |e: csv::Error| CliError::io(stats_path, e.into());
        out.write_record(["statistic"]).map_err(io)?;
        for t in stats {
            out.write_record([t.to_string()]).map_err(io)?;
        }
        out.flush().map_err(|e| CliError::io(stats_path, e))?;
    }
    Ok(())
}

pub fn write_rate_table<W: Write>(table: &RateTable, w: W) -> std::io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for row in &table.rows {
        out.serialize(row)?;
    }
    if table.rows.is_empty() {
        out.write_record(["method", "scenario", "n", "rate", "std_error", "reps", "failures"])?;
    }
    out.flush()
}

pub fn write_timing_table<W: Write>(rows: &[TimingRow], w: W) -> std::io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for row in rows {
        out.serialize(row)?;
    }
    out.flush()
}

fn cmd_bench(a: BenchArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let methods = parse_methods(
        a.methods.as_deref(),
        &[Method::AipwXkte, Method::IpwXkte, Method::Kte],
    )?;
    let n_grid = a.n.unwrap_or_else(|| vec![150, 250, 350]);
    let rows = bench_timing(
        &methods,
        &n_grid,
        a.reps.unwrap_or(5),
        a.permutations.unwrap_or(DEFAULT_PERMUTATIONS),
        a.seed.unwrap_or(0),
    )?;
    let path = a.out.as_deref();
    let mut w = open_output(path, stdout)?;
    write_timing_table(&rows, &mut w).map_err(io_err(path))?;
    finish(w, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_rejects_missing_cell_with_row_number() {
        let text = "x1,x2,a,y\n0.1,0.2,1,3.0\n0.5,,0,1.0\n";
        let err = read_dataset_csv(text.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("row 2"), "{err}");
    }

    #[test]
    fn csv_rejects_bad_header_and_treatment() {
        assert!(read_dataset_csv("x1,b,y\n1,0,1\n".as_bytes()).is_err());
        let err = read_dataset_csv("x1,a,y\n1,2,1\n".as_bytes())
            .unwrap_err()
            .to_string();
        assert!(err.contains("row 1"), "{err}");
        assert!(read_dataset_csv("x1,a,y\n1,0\n".as_bytes()).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let data = generate(&ScenarioConfig::new(
            Scenario::IV,
            Link::Cosine,
            Design::Observational,
            60,
            3,
        ))
        .unwrap();
        let mut buf = Vec::new();
        write_dataset_csv(&data, &mut buf).unwrap();
        let back = read_dataset_csv(buf.as_slice()).unwrap();
        assert_eq!(back.x(), data.x());
        assert_eq!(back.treatment(), data.treatment());
        assert_eq!(back.outcomes(), data.outcomes());
    }

    #[test]
    fn config_file_fills_unset_flags_only() {
        let file: toml::Table = toml::from_str("n = 10\nseed = 3\n[generate]\nseed = 4\nscenario = \"II\"\n").unwrap();
        let args = GenerateArgs {
            n: Some(20),
            ..GenerateArgs::default()
        };
        let merged = merge(args, Some(&file), "generate").unwrap();
        assert_eq!(merged.n, Some(20));
        assert_eq!(merged.seed, Some(4));
        assert_eq!(merged.scenario.as_deref(), Some("II"));
    }

    #[test]
    fn config_file_rejects_unknown_section_key() {
        let file: toml::Table = toml::from_str("[generate]\nbogus = 1\n").unwrap();
        assert!(merge(GenerateArgs::default(), Some(&file), "generate").is_err());
    }
}
