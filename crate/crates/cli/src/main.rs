use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use pge1::bootstrap::{boot_p_from, boot_t_from, draws, BootstrapConfig};
use pge1::gof::{
    hist_overlay, ks_test, qq_series, GofMethod, GofReport, HistogramOverlay, QqSeries,
};
use pge1::io::{ingest_csv, serialize_report, Cell, Dataset, Format, Tabular};
use pge1::sim::{builtin_scenarios, run_scenario, SimReport};
use pge1::{
    asymptotic_ci, fit_mle, Category, Error, FitOptions, FitResult, FixedMask, Param,
    ReliabilityEstimate, Result, SeededRng, SsModel, TwoSample,
};

const DATA_DIR_VAR: &str = "PGE1_DATA_DIR";

#[derive(Parser)]
#[command(
    name = "pge1",
    version,
    about = "PGE-1 stress-strength reliability inference"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Maximum-likelihood fit of the two-sample model.
    Fit(FitArgs),
    /// Plug-in R and its asymptotic interval.
    Reliability(ReliabilityArgs),
    /// Percentile and studentized bootstrap intervals for R.
    Boot(BootArgs),
    /// Kolmogorov-Smirnov test, Q-Q and histogram data per group.
    Gof(GofArgs),
    /// Monte Carlo study over the built-in scenarios.
    Simulate(SimulateArgs),
    /// Draw a two-group sample from given parameters as CSV.
    Sample(SampleArgs),
}

#[derive(Args, Clone)]
struct Output {
    /// json, csv or table
    #[arg(long, default_value = "json")]
    format: String,
    /// Write to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args, Clone)]
struct DataArgs {
    /// CSV file; relative names are also looked up in $PGE1_DATA_DIR.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "value")]
    value_col: String,
    /// Column defining the two groups (first group is the strength X).
    #[arg(long, default_value = "group")]
    group_col: String,
    /// Numeric split: group column <= threshold is the first group.
    #[arg(long)]
    split_at: Option<f64>,
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// Hold a parameter fixed, e.g. --fix q=0.5 (repeatable).
    #[arg(long = "fix", value_name = "NAME=VALUE")]
    fix: Vec<String>,
    /// Constrain a(1-q) = 1.
    #[arg(long)]
    boundary: bool,
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct ReliabilityArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct BootArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long, default_value_t = 1000)]
    boot_n: usize,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct GofArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Parametric-bootstrap p-value with this many replications
    /// (default: asymptotic p-value).
    #[arg(long)]
    ks_boot: Option<usize>,
    #[arg(long, default_value_t = 20)]
    bins: usize,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct SimulateArgs {
    /// Built-in design; only "table1" exists.
    #[arg(long, default_value = "table1")]
    builtin: String,
    /// Restrict to setting 1, 2 or 3.
    #[arg(long)]
    setting: Option<usize>,
    /// Restrict to one per-group sample size.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    #[arg(long, default_value_t = 1000)]
    boot_n: usize,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Parameters held at the truth: "default" (a,delta,lambda,q), "none",
    /// or a comma list.
    #[arg(long, default_value = "default")]
    mask: String,
    #[arg(long, default_value_t = 0)]
    restarts: usize,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct SampleArgs {
    /// Parameter values, e.g. --fix a=4 (all six required unless --setting).
    #[arg(long = "fix", value_name = "NAME=VALUE")]
    fix: Vec<String>,
    /// Take the parameters of a built-in setting.
    #[arg(long)]
    setting: Option<usize>,
    #[arg(long)]
    n1: usize,
    #[arg(long)]
    n2: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "value")]
    value_col: String,
    #[arg(long, default_value = "group")]
    group_col: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    match e.category() {
        Category::Config => 2,
        Category::Data => 3,
        Category::Numerical => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit(a) => with_threads(&a.output, || cmd_fit(&a)),
        Command::Reliability(a) => with_threads(&a.output, || cmd_reliability(&a)),
        Command::Boot(a) => with_threads(&a.output, || cmd_boot(&a)),
        Command::Gof(a) => with_threads(&a.output, || cmd_gof(&a)),
        Command::Simulate(a) => with_threads(&a.output, || cmd_simulate(&a)),
        Command::Sample(a) => cmd_sample(&a),
    }
}

fn with_threads(out: &Output, f: impl FnOnce() -> Result<()> + Send) -> Result<()> {
    match out.threads {
        None => f(),
        Some(0) => Err(Error::Config("--threads must be positive".to_string())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(f),
    }
}

fn emit<T: Serialize + Tabular + ?Sized>(report: &T, out: &Output) -> Result<()> {
    let format: Format = out.format.parse()?;
    let bytes = serialize_report(report, format)?;
    match &out.out {
        Some(path) => fs::write(path, bytes)?,
        None => std::io::stdout().write_all(&bytes)?,
    }
    Ok(())
}

fn parse_assignments(items: &[String]) -> Result<Vec<(Param, f64)>> {
    items
        .iter()
        .map(|item| {
            let (name, value) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected NAME=VALUE, got '{item}'")))?;
            let p = Param::parse(name)
                .ok_or_else(|| Error::Config(format!("unknown parameter '{name}'")))?;
            let v: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("'{value}' is not a number for {name}")))?;
            Ok((p, v))
        })
        .collect()
}

fn mask_from(model: &ModelArgs) -> Result<FixedMask> {
    let mut mask = FixedMask::free();
    for (p, v) in parse_assignments(&model.fix)? {
        mask.set(p, Some(v));
    }
    mask.boundary = model.boundary;
    Ok(mask)
}

fn resolve_path(p: &Path) -> PathBuf {
    if p.exists() || p.is_absolute() {
        return p.to_path_buf();
    }
    match std::env::var_os(DATA_DIR_VAR) {
        Some(dir) => {
            let candidate = Path::new(&dir).join(p);
            if candidate.exists() {
                candidate
            } else {
                p.to_path_buf()
            }
        }
        None => p.to_path_buf(),
    }
}

fn load(args: &DataArgs) -> Result<(Dataset, TwoSample)> {
    let path = resolve_path(&args.data);
    if !path.exists() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("data file {} not found", path.display()),
        )));
    }
    let ds = ingest_csv(&path, &args.value_col, Some(&args.group_col), args.split_at)?;
    let (x, y) = ds.groups()?;
    let two = TwoSample::new(x, y)?;
    Ok((ds, two))
}

fn fit_from(
    args: &DataArgs,
    model: &ModelArgs,
) -> Result<(Dataset, TwoSample, FixedMask, FitResult)> {
    let (ds, d) = load(args)?;
    let mask = mask_from(model)?;
    let opts = FitOptions {
        restarts: model.restarts,
        seed: model.seed,
        ..FitOptions::default()
    };
    let fit = fit_mle(&d, &mask, None, &opts)?;
    Ok((ds, d, mask, fit))
}

#[derive(Serialize)]
struct FitReport {
    source: String,
    excluded_rows: Vec<usize>,
    split_rule: Option<String>,
    fit: FitResult,
}

impl Tabular for FitReport {
    fn columns(&self) -> Vec<String> {
        self.fit.columns()
    }
    fn rows(&self) -> Vec<Vec<Cell>> {
        self.fit.rows()
    }
}

fn cmd_fit(a: &FitArgs) -> Result<()> {
    let (ds, _, _, fit) = fit_from(&a.data, &a.model)?;
    let report = FitReport {
        source: ds.source,
        excluded_rows: ds.exclusions.non_positive_rows,
        split_rule: ds.split_rule,
        fit,
    };
    emit(&report, &a.output)
}

#[derive(Serialize)]
struct IntervalReport {
    n1: usize,
    n2: usize,
    r_hat: f64,
    intervals: Vec<ReliabilityEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    refit_failures: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    variance_failures: Option<usize>,
}

impl Tabular for IntervalReport {
    fn columns(&self) -> Vec<String> {
        self.intervals.columns()
    }
    fn rows(&self) -> Vec<Vec<Cell>> {
        self.intervals.rows()
    }
}

fn cmd_reliability(a: &ReliabilityArgs) -> Result<()> {
    let (_, d, _, fit) = fit_from(&a.data, &a.model)?;
    let aci = asymptotic_ci(&fit, a.level)?;
    let report = IntervalReport {
        n1: d.n1(),
        n2: d.n2(),
        r_hat: aci.r_hat,
        intervals: vec![aci],
        refit_failures: None,
        variance_failures: None,
    };
    emit(&report, &a.output)
}

fn cmd_boot(a: &BootArgs) -> Result<()> {
    let (_, d, mask, fit) = fit_from(&a.data, &a.model)?;
    let cfg = BootstrapConfig::new(a.boot_n, a.level, a.model.seed);
    let draws = draws(&fit, &d, &cfg, &mask, true)?;
    let bp = boot_p_from(&fit, &draws, &cfg)?;
    let bt = boot_t_from(&fit, &draws, &cfg)?;
    let report = IntervalReport {
        n1: d.n1(),
        n2: d.n2(),
        r_hat: bp.r_hat,
        intervals: vec![bp, bt],
        refit_failures: Some(draws.failures),
        variance_failures: Some(draws.variance_failures),
    };
    emit(&report, &a.output)
}

#[derive(Serialize)]
struct GroupFit {
    group: String,
    gof: GofReport,
    qq: QqSeries,
    histogram: HistogramOverlay,
}

#[derive(Serialize)]
struct GofOutput {
    estimates: SsModel,
    groups: Vec<GroupFit>,
}

impl Tabular for GofOutput {
    fn columns(&self) -> Vec<String> {
        ["group", "n", "ks_stat", "p_value", "method"]
            .iter()
            .map(|s| s.to_string())
            .collect()
    }
    fn rows(&self) -> Vec<Vec<Cell>> {
        self.groups
            .iter()
            .map(|g| {
                vec![
                    Cell::Text(g.group.clone()),
                    Cell::Int(g.gof.n),
                    Cell::Num(g.gof.ks_stat),
                    Cell::Num(g.gof.p_value),
                    Cell::Text(g.gof.method.clone()),
                ]
            })
            .collect()
    }
}

fn cmd_gof(a: &GofArgs) -> Result<()> {
    let (ds, d, mask, fit) = fit_from(&a.data, &a.model)?;
    let levels = ds
        .levels
        .clone()
        .unwrap_or_else(|| ["x".to_string(), "y".to_string()]);
    let m = fit.estimates;
    let mut groups = Vec::new();
    for (k, (sample, law)) in [(d.x(), m.strength_law()), (d.y(), m.stress_law())]
        .into_iter()
        .enumerate()
    {
        let method = match a.ks_boot {
            None => GofMethod::Asymptotic,
            Some(n) => {
                // re-estimate what the two-sample fit estimated
                let mut one = mask;
                if k == 1 {
                    one.eta1 = mask.eta2;
                }
                GofMethod::ParametricBootstrap {
                    replications: n,
                    seed: pge1::derive_seed(a.model.seed, k as u64),
                    mask: one,
                }
            }
        };
        groups.push(GroupFit {
            group: levels[k].clone(),
            gof: ks_test(sample, &law, &method)?,
            qq: qq_series(sample, &law)?,
            histogram: hist_overlay(sample, &law, a.bins)?,
        });
    }
    emit(
        &GofOutput {
            estimates: m,
            groups,
        },
        &a.output,
    )
}

fn simulation_mask(spec: &str, truth: &SsModel) -> Result<FixedMask> {
    match spec.trim() {
        "default" => Ok(FixedMask::shared_from(truth)),
        "none" => Ok(FixedMask::free()),
        list => {
            let mut mask = FixedMask::free();
            for name in list.split(',') {
                let p = Param::parse(name).ok_or_else(|| {
                    Error::Config(format!("unknown parameter '{name}' in --mask"))
                })?;
                mask.set(p, Some(truth.get(p)));
            }
            Ok(mask)
        }
    }
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    if a.builtin != "table1" {
        return Err(Error::Config(format!(
            "unknown built-in design '{}'",
            a.builtin
        )));
    }
    if let Some(k) = a.setting {
        if !(1..=3).contains(&k) {
            return Err(Error::Config(format!("setting must be 1, 2 or 3, got {k}")));
        }
    }
    let mut reports: Vec<SimReport> = Vec::new();
    for mut s in builtin_scenarios() {
        if a.setting.is_some_and(|k| s.setting != Some(k)) || a.n.is_some_and(|n| s.n1 != n) {
            continue;
        }
        s.replications = a.reps;
        s.boot_n = a.boot_n;
        s.level = a.level;
        s.seed = a.seed;
        s.mask = simulation_mask(&a.mask, &s.truth)?;
        s.fit = FitOptions::default().with_restarts(a.restarts);
        reports.push(run_scenario(&s)?);
    }
    if reports.is_empty() {
        return Err(Error::Config(format!(
            "no built-in scenario has n = {}",
            a.n.unwrap_or_default()
        )));
    }
    emit(&reports, &a.output)
}

fn cmd_sample(a: &SampleArgs) -> Result<()> {
    let mut theta = match a.setting {
        Some(k @ 1..=3) => pge1::sim::builtin_truths()[k - 1].to_array(),
        Some(k) => return Err(Error::Config(format!("setting must be 1, 2 or 3, got {k}"))),
        None => [f64::NAN; 6],
    };
    for (p, v) in parse_assignments(&a.fix)? {
        theta[p.index()] = v;
    }
    if let Some(p) = Param::ALL.iter().find(|p| theta[p.index()].is_nan()) {
        return Err(Error::Config(format!("parameter {} not given", p.name())));
    }
    let m = SsModel::from_array(theta)?;
    let mut rng = SeededRng::new(a.seed, 0);
    let x = m.strength_law().sample(a.n1, &mut rng);
    let y = m.stress_law().sample(a.n2, &mut rng);
    let mut text = format!("{},{}\n", a.value_col, a.group_col);
    for v in &x {
        text.push_str(&format!("{v},x\n"));
    }
    for v in &y {
        text.push_str(&format!("{v},y\n"));
    }
    match &a.out {
        Some(path) => fs::write(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}
