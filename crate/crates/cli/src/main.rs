//! `evfam`: condition reports, e-values, growth rates, sequential
//! simulations and figure data from the command line.

mod model_args;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use evfam::conditions::{Axis, CheckOptions, GridSpec, CONDITION_TOL};
use evfam::models::Pairing;
use evfam::sequential::{simulate_pairing, simulate_two_sample, PriorSpec, Truth};
use evfam::tilt::PSD_TOL;
use evfam::verify::{figure_data, Figure, FigureParams};
use evfam::{growth_rate_estimate, Overall, Vector};
use model_args::{build_pairing, catalog_entries, parse_list, ModelArgs};
use serde::Serialize;
use serde_json::{json, Value};

const EXIT_USAGE: u8 = 64;
const EXIT_DATA: u8 = 65;
const NOT_CERTIFICATE: &str = "not-an-e-variable-certificate";

/// Bad flags or configuration; exits with 64.
#[derive(Debug)]
pub struct UsageError(String);

impl UsageError {
    pub fn new(msg: impl Into<String>) -> Self {
        UsageError(msg.into())
    }
}

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Malformed input data; exits with 65.
#[derive(Debug)]
struct DataError(String);

impl std::fmt::Display for DataError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for DataError {}

#[derive(Parser, Debug)]
#[command(name = "evfam", version, about = "Simple e-variables for exponential-family nulls", args_override_self = true)]
struct Cli {
    /// `key = value` lines supplying defaults for any long flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
enum Command {
    /// Check whether the simple e-variable exists for a pairing.
    Check(CheckArgs),
    /// Evaluate simple e-values on a data file.
    Evalue(EvalueArgs),
    /// Growth rate `D(Q_mu || P_mu)` of the simple e-variable.
    Growth(GrowthArgs),
    /// Simulate anytime-valid sequential tests.
    Sequential(SequentialArgs),
    /// Emit figure data as CSV.
    Figure(FigureArgs),
    /// List the catalog of pairings.
    Catalog,
}

#[derive(Args, Debug, Clone, Serialize)]
struct GridArgs {
    /// Points per axis (default: 64 in one dimension, 8 per axis otherwise).
    #[arg(long)]
    grid_points: Option<usize>,
    /// Lower and upper grid bounds per axis, `lo:hi` separated by commas.
    #[arg(long, value_name = "RANGES", allow_hyphen_values = true)]
    grid_range: Option<String>,
    /// Quasi-random pairs for the two-point conditions.
    #[arg(long, default_value_t = evfam::conditions::DEFAULT_PAIRS)]
    pairs: usize,
    /// Scalar condition tolerance.
    #[arg(long, default_value_t = CONDITION_TOL)]
    tol: f64,
    /// Relative PSD tolerance.
    #[arg(long, default_value_t = PSD_TOL)]
    psd_tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug, Clone, Serialize)]
struct CheckArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    grid: GridArgs,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
enum Format {
    Json,
    Csv,
}

#[derive(Args, Debug, Clone, Serialize)]
struct EvalueArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    grid: GridArgs,
    /// CSV with one observation per row, one column per coordinate.
    #[arg(long)]
    data: PathBuf,
    /// Evaluate even when the pairing is not certified.
    #[arg(long)]
    force: bool,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
struct GrowthArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Mean at which to evaluate (default: the anchor).
    #[arg(long, value_name = "LIST", allow_hyphen_values = true)]
    at: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
struct SequentialArgs {
    /// Catalog pairing to simulate; omit for the two-sample Bernoulli plug-in test.
    #[command(flatten)]
    model: ModelArgs,
    /// True arm means of the two-sample Bernoulli test.
    #[arg(long, value_name = "P1,P2", default_value = "0.5,0.5")]
    arms: String,
    /// Beta prior shapes `a1,b1,a2,b2`.
    #[arg(long, default_value = "1,1,1,1")]
    prior: String,
    /// Data source for catalog pairings.
    #[arg(long, value_enum, default_value_t = TruthArg::Null)]
    under: TruthArg,
    #[arg(long, default_value_t = 500)]
    rounds: usize,
    #[arg(long, default_value_t = 10_000)]
    paths: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-path CSV.
    #[arg(long)]
    out_csv: Option<PathBuf>,
    /// Aggregate JSON (stdout when omitted).
    #[arg(long)]
    out_json: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
enum TruthArg {
    Null,
    Alternative,
}

#[derive(Args, Debug, Clone, Serialize)]
struct FigureArgs {
    /// fig1, fig2 or fig3.
    #[arg(long)]
    id: String,
    /// Inverse-Gaussian shape for fig3.
    #[arg(long)]
    lambda: Option<f64>,
    /// Anchor means for fig3, comma separated.
    #[arg(long, value_name = "LIST")]
    mus: Option<String>,
    /// Range `a:b` of the second Bernoulli mean for fig2.
    #[arg(long)]
    anchors: Option<String>,
    /// `(m, s2)` pairs for fig1, `m:s2` separated by commas.
    #[arg(long, value_name = "PAIRS", allow_hyphen_values = true)]
    scale_pairs: Option<String>,
    /// CSV output; metadata goes to `<out>.meta.json`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut s = std::io::stdout().lock();
            s.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn to_pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json");
    s.push('\n');
    s
}

fn grid_for(p: &Pairing, g: &GridArgs) -> anyhow::Result<GridSpec> {
    let mut grid = p.grid.clone();
    if let Some(ranges) = &g.grid_range {
        let rs: Vec<&str> = ranges.split(',').collect();
        if rs.len() != grid.dim() {
            bail!(UsageError::new(format!("--grid-range needs {} ranges", grid.dim())));
        }
        let mut axes = Vec::new();
        for (r, axis) in rs.iter().zip(&grid.axes) {
            let (lo, hi) = r.split_once(':').ok_or_else(|| UsageError::new(format!("--grid-range: '{r}' is not lo:hi")))?;
            let lo: f64 = lo.trim().parse().map_err(|_| UsageError::new(format!("--grid-range: bad number '{lo}'")))?;
            let hi: f64 = hi.trim().parse().map_err(|_| UsageError::new(format!("--grid-range: bad number '{hi}'")))?;
            let a = if axis.log && lo > 0.0 { Axis::log_spaced(lo, hi, axis.count) } else { Axis::new(lo, hi, axis.count) };
            axes.push(a.map_err(|e| UsageError::new(format!("--grid-range: {e}")))?);
        }
        grid.axes = axes;
    }
    if let Some(n) = g.grid_points {
        if n == 0 {
            bail!(UsageError::new("--grid-points must be positive"));
        }
        for a in grid.axes.iter_mut() {
            a.count = n;
        }
    }
    Ok(grid.with_pairs(g.pairs).with_seed(g.seed))
}

fn check_options(g: &GridArgs) -> CheckOptions {
    CheckOptions { tol: g.tol, psd_tol: g.psd_tol, ..CheckOptions::default() }
}

fn cmd_check(a: &CheckArgs, config: &Value) -> anyhow::Result<u8> {
    let pairing = build_pairing(&a.model)?;
    let grid = grid_for(&pairing, &a.grid)?;
    let pairing = pairing.with_grid(grid);
    let report = pairing.check(&check_options(&a.grid))?;
    let mut v = serde_json::to_value(&report)?;
    v["config"] = config.clone();
    emit(a.out.as_deref(), &to_pretty(&v))?;
    eprintln!("{}: {}", pairing.key, serde_json::to_value(report.overall)?.as_str().unwrap_or("?"));
    Ok(report.overall.exit_code() as u8)
}

/// Rows of numbers; a first line with no numeric field is a header.
fn read_data(path: &Path, width: usize) -> anyhow::Result<Vec<(usize, Vec<f64>)>> {
    let text = fs::read_to_string(path).map_err(|e| UsageError::new(format!("reading {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    let mut bad = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: Vec<Option<f64>> = fields.iter().map(|f| f.parse::<f64>().ok()).collect();
        if rows.is_empty() && bad.is_empty() && parsed.iter().all(Option::is_none) && line_no == 1 {
            continue;
        }
        match parsed.into_iter().collect::<Option<Vec<f64>>>() {
            Some(v) if v.len() == width && v.iter().all(|x| x.is_finite()) => rows.push((line_no, v)),
            _ => bad.push(line_no),
        }
    }
    if !bad.is_empty() {
        let list: Vec<String> = bad.iter().map(|n| n.to_string()).collect();
        bail!(DataError(format!(
            "{}: malformed rows (expected {width} numeric columns) at line(s) {}",
            path.display(),
            list.join(", ")
        )));
    }
    Ok(rows)
}

fn cmd_evalue(a: &EvalueArgs, config: &Value) -> anyhow::Result<u8> {
    let pairing = build_pairing(&a.model)?;
    let grid = grid_for(&pairing, &a.grid)?;
    let pairing = pairing.with_grid(grid);
    let width = match pairing.null.sample_space() {
        evfam::SampleSpace::Binary(k)
        | evfam::SampleSpace::Counts(k)
        | evfam::SampleSpace::Real(k)
        | evfam::SampleSpace::PositiveReal(k) => k,
    };
    let rows = read_data(&a.data, width)?;
    let report = pairing.check(&check_options(&a.grid))?;
    let certified = report.overall == Overall::SimpleEvariableCertified;
    if !certified && !a.force {
        eprintln!(
            "{}: pairing is {}; pass --force to evaluate anyway",
            pairing.key,
            serde_json::to_value(report.overall)?.as_str().unwrap_or("?")
        );
        return Ok(report.overall.exit_code() as u8);
    }
    let certificate = if certified { "certified" } else { NOT_CERTIFICATE };
    let mut values = Vec::with_capacity(rows.len());
    let mut bad = Vec::new();
    for (line, u) in &rows {
        match pairing.log_evalue(u) {
            Ok(le) => values.push((*line, le)),
            Err(e) => bad.push(format!("line {line}: {e}")),
        }
    }
    if !bad.is_empty() {
        bail!(DataError(format!("observations outside the sample space:\n  {}", bad.join("\n  "))));
    }
    let log_product: f64 = values.iter().fold(0.0, |acc, (_, le)| acc + le);
    let text = match a.format {
        Format::Json => {
            let mut v = json!({
                "report_version": evfam::conditions::REPORT_VERSION,
                "model": pairing.key,
                "certificate": certificate,
                "overall": report.overall,
                "rows": values.iter().map(|(line, le)| json!({"line": line, "e_value": le.exp(), "log_e_value": le})).collect::<Vec<_>>(),
                "count": values.len(),
                "product": log_product.exp(),
                "log_product": log_product,
                "config": config,
            });
            if !certified {
                v["banner"] = json!(NOT_CERTIFICATE);
            }
            to_pretty(&v)
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["row", "e_value", "log_e_value", "certificate"])?;
            for (line, le) in &values {
                w.write_record([line.to_string(), le.exp().to_string(), le.to_string(), certificate.to_string()])?;
            }
            w.write_record(["product".to_string(), log_product.exp().to_string(), log_product.to_string(), certificate.to_string()])?;
            String::from_utf8(w.into_inner()?)?
        }
    };
    emit(a.out.as_deref(), &text)?;
    Ok(0)
}

fn cmd_growth(a: &GrowthArgs, config: &Value) -> anyhow::Result<u8> {
    let pairing = build_pairing(&a.model)?;
    let mu = match &a.at {
        Some(s) => Vector::from_vec(parse_list(s, "at")?),
        None => pairing.mu_star().clone(),
    };
    if mu.len() != pairing.null.dim() {
        bail!(UsageError::new(format!("--at needs {} coordinates", pairing.null.dim())));
    }
    let est = growth_rate_estimate(&pairing.tilted, pairing.null.as_ref(), &mu)?;
    let v = json!({
        "report_version": evfam::conditions::REPORT_VERSION,
        "model": pairing.key,
        "mu": mu.as_slice(),
        "growth_rate": est.value.max(0.0),
        "estimate": est,
        "config": config,
    });
    emit(a.out.as_deref(), &to_pretty(&v))?;
    Ok(0)
}

fn cmd_sequential(a: &SequentialArgs, config: &Value) -> anyhow::Result<u8> {
    let (json_text, csv_text, crossing, alpha) = if a.model.model.is_some() {
        let pairing = build_pairing(&a.model)?;
        let truth = match a.under {
            TruthArg::Null => Truth::Null,
            TruthArg::Alternative => Truth::Alternative,
        };
        let s = simulate_pairing(&pairing, truth, a.rounds, a.alpha, a.seed, a.paths)
            .map_err(|e| UsageError::new(format!("{e}")))?;
        let mut v = serde_json::to_value(&s)?;
        v["config"] = config.clone();
        (to_pretty(&v), s.to_csv(), s.ever_crossing_fraction, s.alpha)
    } else {
        let arms = parse_list(&a.arms, "arms")?;
        let shapes = parse_list(&a.prior, "prior")?;
        if arms.len() != 2 || shapes.len() != 4 {
            bail!(UsageError::new("--arms needs two means and --prior four shapes"));
        }
        let prior = PriorSpec::BetaProduct { a1: shapes[0], b1: shapes[1], a2: shapes[2], b2: shapes[3] };
        let s = simulate_two_sample((arms[0], arms[1]), a.rounds, &prior, a.alpha, a.seed, a.paths)
            .map_err(|e| UsageError::new(format!("{e}")))?;
        let mut v = serde_json::to_value(&s)?;
        v["report_version"] = json!(evfam::conditions::REPORT_VERSION);
        v["config"] = config.clone();
        (to_pretty(&v), s.to_csv(), s.ever_crossing_fraction, s.alpha)
    };
    if let Some(p) = &a.out_csv {
        fs::write(p, csv_text).with_context(|| format!("writing {}", p.display()))?;
    }
    emit(a.out_json.as_deref(), &json_text)?;
    eprintln!("ever-crossing fraction {crossing} at alpha {alpha}");
    Ok(0)
}

fn cmd_figure(a: &FigureArgs, config: &Value) -> anyhow::Result<u8> {
    let which: Figure = a.id.parse().map_err(|e: evfam::Error| UsageError::new(e.to_string()))?;
    let mut params = FigureParams::default();
    if let Some(l) = a.lambda {
        params.lambda = l;
    }
    if let Some(m) = &a.mus {
        params.mus = parse_list(m, "mus")?;
    }
    if let Some(r) = &a.anchors {
        let (lo, hi) = r.split_once(':').ok_or_else(|| UsageError::new("--anchors expects a:b"))?;
        let lo: f64 = lo.parse().map_err(|_| UsageError::new("--anchors: bad number"))?;
        let hi: f64 = hi.parse().map_err(|_| UsageError::new("--anchors: bad number"))?;
        params.anchor_range = (lo, hi);
    }
    if let Some(sp) = &a.scale_pairs {
        params.scale_pairs = sp
            .split(',')
            .map(|pair| {
                let (m, s2) = pair.split_once(':').ok_or_else(|| UsageError::new("--scale-pairs expects m:s2"))?;
                Ok((
                    m.trim().parse().map_err(|_| UsageError::new("--scale-pairs: bad number"))?,
                    s2.trim().parse().map_err(|_| UsageError::new("--scale-pairs: bad number"))?,
                ))
            })
            .collect::<Result<_, UsageError>>()?;
    }
    let rows = figure_data(which, &params).map_err(|e| UsageError::new(e.to_string()))?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r)?;
    }
    let text = String::from_utf8(w.into_inner()?)?;
    let text = if rows.is_empty() { "figure,series,x,y,flag\n".to_string() } else { text };
    let meta = to_pretty(&json!({
        "report_version": evfam::conditions::REPORT_VERSION,
        "figure": which,
        "rows": rows.len(),
        "params": params,
        "config": config,
    }));
    match &a.out {
        Some(p) => {
            fs::write(p, text).with_context(|| format!("writing {}", p.display()))?;
            let mut mp = p.as_os_str().to_owned();
            mp.push(".meta.json");
            fs::write(PathBuf::from(mp), meta)?;
        }
        None => {
            emit(None, &text)?;
            eprint!("{meta}");
        }
    }
    Ok(0)
}

fn cmd_catalog() -> anyhow::Result<u8> {
    let mut s = String::from("key,flags,description\n");
    for (k, f, d) in catalog_entries() {
        s.push_str(&format!("{k},\"{f}\",{d}\n"));
    }
    emit(None, &s)?;
    Ok(0)
}

/// `key = value` lines become `--key value` arguments placed before the
/// command line's own, so flags win.
fn config_args(path: &Path) -> anyhow::Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| UsageError::new(format!("reading config {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| UsageError::new(format!("config line {}: expected key = value", i + 1)))?;
        let k = k.trim().replace('_', "-");
        let v = v.trim();
        match v {
            "true" => out.push(format!("--{k}")),
            "false" => {}
            _ => {
                out.push(format!("--{k}"));
                out.push(v.to_string());
            }
        }
    }
    Ok(out)
}

fn find_config(args: &[String]) -> Option<PathBuf> {
    args.iter().enumerate().find_map(|(i, a)| {
        if let Some(p) = a.strip_prefix("--config=") {
            Some(PathBuf::from(p))
        } else if a == "--config" {
            args.get(i + 1).map(PathBuf::from)
        } else {
            None
        }
    })
}

fn parse(args: Vec<String>) -> anyhow::Result<Cli> {
    let mut argv = args.clone();
    if let Some(cfg) = find_config(&args) {
        let extra = config_args(&cfg)?;
        // defaults follow the subcommand name so subcommand flags resolve
        let mut pos = None;
        let mut i = 1;
        while i < argv.len() {
            if argv[i] == "--config" {
                i += 2;
                continue;
            }
            if !argv[i].starts_with('-') {
                pos = Some(i);
                break;
            }
            i += 1;
        }
        if let Some(pos) = pos {
            let tail = argv.split_off(pos + 1);
            argv.extend(extra);
            argv.extend(tail);
        }
    }
    Cli::try_parse_from(argv).map_err(|e| anyhow::Error::new(ClapError(e)))
}

#[derive(Debug)]
struct ClapError(clap::Error);

impl std::fmt::Display for ClapError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ClapError {}

fn run() -> anyhow::Result<u8> {
    if let Ok(n) = std::env::var("EVFAM_THREADS") {
        let n: usize = n.parse().map_err(|_| UsageError::new(format!("EVFAM_THREADS must be a positive integer, got '{n}'")))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().ok();
    }
    let cli = parse(std::env::args().collect())?;
    let config = serde_json::to_value(&cli.command)?;
    match &cli.command {
        Command::Check(a) => cmd_check(a, &config),
        Command::Evalue(a) => cmd_evalue(a, &config),
        Command::Growth(a) => cmd_growth(a, &config),
        Command::Sequential(a) => cmd_sequential(a, &config),
        Command::Figure(a) => cmd_figure(a, &config),
        Command::Catalog => cmd_catalog(),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            if let Some(ClapError(ce)) = e.downcast_ref::<ClapError>() {
                let _ = ce.print();
                return match ce.kind() {
                    clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                    _ => ExitCode::from(EXIT_USAGE),
                };
            }
            eprintln!("error: {e:#}");
            if e.downcast_ref::<DataError>().is_some() {
                ExitCode::from(EXIT_DATA)
            } else if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
