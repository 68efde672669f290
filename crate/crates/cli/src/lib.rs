//! Command-line front end: config loading, the `train`, `curve` and
//! `verify` subcommands, and CSV/JSON emission.

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rfsurrogate::experiment::{
    pnr_grid, reproduce_with_cache, Figure, ModelCache, NodeRole, ResultTable, ScenarioConfig, TableMeta,
};
use rfsurrogate::verify;
use serde::{Deserialize, Serialize};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

pub const CSV_HEADER: &str = "scenario,pnr_db,success_rate,stderr,n_trials";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const TARGET_MODEL_FILE: &str = "model_t.rfs";
pub const SURROGATE_MODEL_FILE: &str = "model_a.rfs";

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

fn runtime(context: impl fmt::Display) -> impl FnOnce(rfsurrogate::Error) -> CliError {
    move |e| match e {
        rfsurrogate::Error::InvalidArgument(m) => CliError::Config(format!("{context}: {m}")),
        other => CliError::Runtime(format!("{context}: {other}")),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{}: {e}", path.display()))
}

#[derive(Parser, Debug)]
#[command(name = "rfsurrogate", version, about = "Surrogate-model adversarial attacks on a spectrum-sensing CNN")]
pub struct Cli {
    /// Worker threads for Monte Carlo trials (default: available cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train the transmitter and adversary classifiers of one scenario.
    Train {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Sweep attack success over PNR for one of the four studies.
    Curve {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum)]
        figure: Option<FigureArg>,
        /// Re-run a previous `curve` manifest (config and figure are taken
        /// from it; other flags still override).
        #[arg(long, conflicts_with = "config")]
        manifest: Option<PathBuf>,
    },
    /// Run the built-in invariant suites.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args, Debug, Clone, Default)]
pub struct CommonArgs {
    /// Scenario config (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, short = 'o')]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub pnr_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub pnr_max: Option<f64>,
    #[arg(long)]
    pub pnr_step: Option<f64>,
    /// Use the power search exactly as originally printed.
    #[arg(long)]
    pub alg1_literal: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum FigureArg {
    FixDba,
    FixDta,
    Methods,
    Arch,
}

impl From<FigureArg> for Figure {
    fn from(f: FigureArg) -> Self {
        match f {
            FigureArg::FixDba => Figure::FixDba,
            FigureArg::FixDta => Figure::FixDta,
            FigureArg::Methods => Figure::Methods,
            FigureArg::Arch => Figure::Arch,
        }
    }
}

/// Written next to every result set.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub figure: Option<Figure>,
    pub config_path: Option<PathBuf>,
    pub master_seed: u64,
    pub config: ScenarioConfig<f64>,
    pub outputs: Vec<String>,
    pub started_unix_secs: u64,
    pub elapsed_secs: f64,
}

/// Parses a scenario config. Errors name the offending key, e.g.
/// `topology.d_ba`.
pub fn parse_config(text: &str) -> Result<ScenarioConfig<f64>, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ScenarioConfig<f64> = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner().to_string();
        CliError::Config(describe_key_error(&path, &inner))
    })?;
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(cfg)
}

fn describe_key_error(path: &str, msg: &str) -> String {
    let join = |field: &str| if path == "." || path.is_empty() { field.to_string() } else { format!("{path}.{field}") };
    if let Some(field) = between(msg, "missing field `", "`") {
        return format!("missing required key `{}`", join(field));
    }
    if let Some(field) = between(msg, "unknown field `", "`") {
        return format!("unknown key `{}`", join(field));
    }
    format!("at `{path}`: {msg}")
}

fn between<'a>(s: &'a str, open: &str, close: &str) -> Option<&'a str> {
    let start = s.find(open)? + open.len();
    let len = s[start..].find(close)?;
    Some(&s[start..start + len])
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig<f64>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| match e {
        CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn apply_overrides(cfg: &mut ScenarioConfig<f64>, a: &CommonArgs) -> Result<(), CliError> {
    if let Some(s) = a.seed {
        cfg.master_seed = s;
    }
    if let Some(t) = a.trials {
        cfg.test_trials = t;
    }
    if a.pnr_min.is_some() || a.pnr_max.is_some() || a.pnr_step.is_some() {
        let min = a.pnr_min.unwrap_or(cfg.pnr_grid_db[0]);
        let max = a.pnr_max.unwrap_or(*cfg.pnr_grid_db.last().unwrap_or(&min));
        let step = a.pnr_step.unwrap_or(1.0);
        cfg.pnr_grid_db = pnr_grid(min, max, step).map_err(|e| CliError::Config(e.to_string()))?;
    }
    if a.alg1_literal {
        cfg.attack.literal_alg1 = true;
    }
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))
}

fn resolve_config(a: &CommonArgs, base: Option<ScenarioConfig<f64>>) -> Result<ScenarioConfig<f64>, CliError> {
    let mut cfg = match (base, &a.config) {
        (Some(c), _) => c,
        (None, Some(p)) => load_config(p)?,
        (None, None) => return Err(CliError::Config("--config <file> is required".into())),
    };
    apply_overrides(&mut cfg, a)?;
    Ok(cfg)
}

/// `%g`-style formatting with 6 significant digits.
pub fn fmt_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{}{:02}", trim_zeros(mantissa.to_string()), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub fn table_csv(t: &ResultTable<f64>) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for p in &t.points {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            t.scenario,
            fmt_sig6(p.pnr_db),
            fmt_sig6(p.success_rate),
            fmt_sig6(p.stderr),
            p.n_trials
        ));
    }
    out
}

pub fn csv_file_name(figure: Figure, scenario: &str) -> String {
    format!("{}_{}.csv", figure.name(), scenario)
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(io_err(&path))
}

fn to_json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("serializable");
    s.push(b'\n');
    s
}

fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

#[derive(Serialize)]
struct NodeMetrics {
    distance: f64,
    hidden_layers: Vec<usize>,
    train_accuracy: f64,
    validation_accuracy: f64,
    epochs: usize,
    file: &'static str,
}

#[derive(Serialize)]
struct TrainMetrics {
    master_seed: u64,
    target: NodeMetrics,
    surrogate: NodeMetrics,
}

fn cmd_train(a: &CommonArgs) -> Result<(), CliError> {
    let started = (now_unix(), Instant::now());
    let cfg = resolve_config(a, None)?;
    fs::create_dir_all(&a.out).map_err(io_err(&a.out))?;
    let mut cache = ModelCache::new();
    let t = cache.get(&cfg, NodeRole::Target, cfg.topology.d_bt, &cfg.arch_t).map_err(runtime("training target"))?;
    let s = cache
        .get(&cfg, NodeRole::Surrogate, cfg.topology.d_ba, &cfg.arch_a)
        .map_err(runtime("training surrogate"))?;
    write_file(&a.out, TARGET_MODEL_FILE, &t.to_bytes())?;
    write_file(&a.out, SURROGATE_MODEL_FILE, &s.to_bytes())?;
    let node = |m: &rfsurrogate::Model, d: f64, file| NodeMetrics {
        distance: d,
        hidden_layers: m.arch().hidden_layers.clone(),
        train_accuracy: m.meta().train_accuracy,
        validation_accuracy: m.meta().validation_accuracy,
        epochs: m.meta().epochs,
        file,
    };
    let metrics = TrainMetrics {
        master_seed: cfg.master_seed,
        target: node(&t, cfg.topology.d_bt, TARGET_MODEL_FILE),
        surrogate: node(&s, cfg.topology.d_ba, SURROGATE_MODEL_FILE),
    };
    write_file(&a.out, METRICS_FILE, &to_json(&metrics))?;
    println!(
        "target val acc {:.4}  surrogate val acc {:.4}  -> {}",
        metrics.target.validation_accuracy,
        metrics.surrogate.validation_accuracy,
        a.out.display()
    );
    write_manifest(&a.out, "train", None, a.config.clone(), cfg, started, vec![
        TARGET_MODEL_FILE.into(),
        SURROGATE_MODEL_FILE.into(),
        METRICS_FILE.into(),
    ])
}

fn write_manifest(
    out: &Path,
    command: &str,
    figure: Option<Figure>,
    config_path: Option<PathBuf>,
    config: ScenarioConfig<f64>,
    started: (u64, Instant),
    outputs: Vec<String>,
) -> Result<(), CliError> {
    let m = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        figure,
        config_path,
        master_seed: config.master_seed,
        config,
        outputs,
        started_unix_secs: started.0,
        elapsed_secs: started.1.elapsed().as_secs_f64(),
    };
    write_file(out, MANIFEST_FILE, &to_json(&m))
}

#[derive(Serialize)]
struct CurveMetrics<'a> {
    figure: Figure,
    master_seed: u64,
    tables: Vec<(&'a str, &'a TableMeta)>,
}

fn cmd_curve(a: &CommonArgs, figure: Option<FigureArg>, manifest: Option<&Path>) -> Result<(), CliError> {
    let started = (now_unix(), Instant::now());
    let (figure, cfg, config_path) = match manifest {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            let m: RunManifest = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: not a run manifest: {e}", p.display())))?;
            let fig = figure.map(Figure::from).or(m.figure).ok_or_else(|| {
                CliError::Config(format!("{}: manifest has no figure; pass --figure", p.display()))
            })?;
            m.config.validate().map_err(|e| CliError::Config(e.to_string()))?;
            (fig, resolve_config(a, Some(m.config))?, m.config_path)
        }
        None => {
            let fig = figure.ok_or_else(|| CliError::Config("--figure is required".into()))?;
            (fig.into(), resolve_config(a, None)?, a.config.clone())
        }
    };
    fs::create_dir_all(&a.out).map_err(io_err(&a.out))?;
    let tables = reproduce_with_cache(figure, &cfg, &mut ModelCache::new()).map_err(runtime(figure.name()))?;
    let mut outputs = Vec::new();
    for t in &tables {
        let name = csv_file_name(figure, &t.scenario);
        write_file(&a.out, &name, table_csv(t).as_bytes())?;
        let peak = t.points.iter().map(|p| p.success_rate).fold(0.0, f64::max);
        println!("{:<18} peak success {:.3}  -> {}", t.scenario, peak, name);
        outputs.push(name);
    }
    let metrics = CurveMetrics {
        figure,
        master_seed: cfg.master_seed,
        tables: tables.iter().map(|t| (t.scenario.as_str(), &t.meta)).collect(),
    };
    write_file(&a.out, METRICS_FILE, &to_json(&metrics))?;
    outputs.push(METRICS_FILE.into());
    write_manifest(&a.out, "curve", Some(figure), config_path, cfg, started, outputs)
}

fn cmd_verify(seed: u64, json: bool, out: &mut impl Write) -> Result<(), CliError> {
    let reports = verify::run_all(seed);
    let w = |e: std::io::Error| CliError::Runtime(e.to_string());
    if json {
        out.write_all(&to_json(&reports)).map_err(w)?;
    } else {
        for r in &reports {
            writeln!(
                out,
                "{} {}/{} ({} cases, {:.3} s)",
                if r.passed { "PASS" } else { "FAIL" },
                r.module,
                r.name,
                r.cases,
                r.elapsed.as_secs_f64()
            )
            .map_err(w)?;
            for n in &r.notes {
                writeln!(out, "    note: {n}").map_err(w)?;
            }
            for f in &r.failures {
                writeln!(out, "    {f}").map_err(w)?;
            }
        }
    }
    let failed: Vec<String> = reports.iter().filter(|r| !r.passed).map(|r| format!("{}/{}", r.module, r.name)).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Runtime(format!("invariant suites failed: {}", failed.join(", "))))
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        builder = builder.num_threads(j);
    }
    let pool = builder.build().map_err(|e| CliError::Runtime(e.to_string()))?;
    pool.install(|| match &cli.command {
        Command::Train { common } => cmd_train(common),
        Command::Curve { common, figure, manifest } => cmd_curve(common, *figure, manifest.as_deref()),
        Command::Verify { seed, json } => cmd_verify(*seed, *json, &mut std::io::stdout().lock()),
    })
}

/// Parses arguments, runs, and returns the process exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
