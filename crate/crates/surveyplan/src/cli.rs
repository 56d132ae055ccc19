//! Command-line front end: argument parsing, config-file defaults, and
//! file-path plumbing around the library calls.
//!
//! Every subcommand reads CSV inputs, writes CSV (and the odd SVG) outputs
//! into `--out-dir`, and drops a `run_manifest.json` describing the run.
//! Any value flag may instead come from a TOML config file (`--config`):
//! flags win over config, config wins over built-in defaults. Config keys
//! are the flag names with underscores, grouped in a table named after the
//! subcommand; `out_dir`, `jobs`, and `seed` may also sit at the top level.
//!
//! ```toml
//! out_dir = "runs/pilot"
//! seed = 42
//!
//! [allocate]
//! stages = 2
//! strata = "in/strata.csv"
//! errors = "in/errors.csv"
//! ```
//!
//! Exit codes: 0 on success, 1 when the run itself fails (bad data,
//! infeasible design, I/O), 2 for usage errors (unknown flags, missing
//! required values, malformed config).

use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::allocation::{beat_1st, BethelOptions, OneStageOptions};
use crate::error::Error;
use crate::evaluate::{eval_2stage, EvalOptions};
use crate::frame::{load_frame, prepare_inputs_scenario1, FrameColumns};
use crate::model::{
    check_input, load_design, load_inputs, load_psus, load_strata, InputPaths,
};
use crate::plot::{plot_allocation, plot_sensitivity, plot_weights};
use crate::report;
use crate::selection::{select_psu, select_ssu};
use crate::twostage::{beat_2st, sensitivity_min_ssu, StopRule, TwoStageOptions};

/// Environment variable consulted for the output directory when neither
/// `--out-dir` nor the config file names one.
pub const OUT_DIR_ENV: &str = "SURVEYPLAN_OUT_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "surveyplan",
    version,
    about = "Plan, allocate, draw and evaluate stratified one- and two-stage samples",
    long_about = None,
    propagate_version = true
)]
pub struct Cli {
    /// TOML file supplying defaults for any flag (flags win)
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Directory for all outputs (default: $SURVEYPLAN_OUT_DIR, then ".")
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,

    /// Worker threads for parallel steps (default: all cores)
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build planning inputs (strata, design, correlations) from a unit-level frame
    Prepare(PrepareArgs),
    /// Cross-check the strata table against the PSU file and write a corrected copy
    Check(CheckArgs),
    /// Solve the one- or two-stage allocation under the CV ceilings
    Allocate(AllocateArgs),
    /// Draw the first-stage (PSU) sample for an allocation
    SelectPsu(SelectPsuArgs),
    /// Draw the final-stage units inside the selected PSUs
    SelectSsu(SelectSsuArgs),
    /// Monte Carlo check of a design's precision against a frame
    Evaluate(EvaluateArgs),
    /// Re-solve the two-stage design over a grid of per-PSU workload floors
    Sensitivity(SensitivityArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Prepare(_) => "prepare",
            Command::Check(_) => "check",
            Command::Allocate(_) => "allocate",
            Command::SelectPsu(_) => "select-psu",
            Command::SelectSsu(_) => "select-ssu",
            Command::Evaluate(_) => "evaluate",
            Command::Sensitivity(_) => "sensitivity",
        }
    }
}

#[derive(Debug, Args)]
struct PrepareArgs {
    /// Unit-level frame CSV
    #[arg(long, value_name = "FILE")]
    frame: Option<PathBuf>,
    /// Column holding the PSU (cluster) identifier
    #[arg(long, value_name = "COL")]
    id_psu: Option<String>,
    /// Column holding the unit identifier
    #[arg(long, value_name = "COL")]
    id_ssu: Option<String>,
    /// Column holding the stratum label
    #[arg(long, value_name = "COL")]
    strata_var: Option<String>,
    /// Target variable columns, comma separated, in V1..VJ order
    #[arg(long, value_name = "COLS", value_delimiter = ',')]
    target_vars: Vec<String>,
    /// Subset of the target columns that are 0/1 proportions
    #[arg(long, value_name = "COLS", value_delimiter = ',')]
    binary_vars: Vec<String>,
    /// Cluster column for the intraclass-correlation split (default: --id-psu)
    #[arg(long, value_name = "COL")]
    deff_var: Option<String>,
    /// Domain column carried into the strata table
    #[arg(long, value_name = "COL")]
    domain_var: Option<String>,
    /// Workload scale factor written to the design file [default: 1]
    #[arg(long, value_name = "X")]
    delta: Option<f64>,
    /// Workload floor per PSU written to the design file
    #[arg(long, value_name = "N")]
    minimum: Option<u64>,
    /// Also write a suggested design-effect table from the correlations
    #[arg(long)]
    deff_sugg: bool,
}

#[derive(Debug, Args)]
struct CheckArgs {
    /// Strata table CSV
    #[arg(long, value_name = "FILE")]
    strata: Option<PathBuf>,
    /// PSU file CSV
    #[arg(long, value_name = "FILE")]
    psu: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AllocateArgs {
    /// 1 = element sampling, 2 = clustered two-stage design [default: 1]
    #[arg(long, value_name = "N")]
    stages: Option<u32>,
    /// Strata table CSV
    #[arg(long, value_name = "FILE")]
    strata: Option<PathBuf>,
    /// Precision (CV ceiling) table CSV
    #[arg(long, value_name = "FILE")]
    errors: Option<PathBuf>,
    /// PSU file CSV (required for --stages 2)
    #[arg(long, value_name = "FILE")]
    psu: Option<PathBuf>,
    /// Per-stratum design parameters CSV (required for --stages 2)
    #[arg(long, value_name = "FILE")]
    des: Option<PathBuf>,
    /// Intraclass correlations CSV (required for --stages 2)
    #[arg(long, value_name = "FILE")]
    rho: Option<PathBuf>,
    /// Baseline design effects CSV
    #[arg(long, value_name = "FILE")]
    deft: Option<PathBuf>,
    /// Estimator effect factors CSV
    #[arg(long, value_name = "FILE")]
    effst: Option<PathBuf>,
    /// Lower bound for every stratum's allocation
    #[arg(long, value_name = "N")]
    minnumstrat: Option<u64>,
    /// PSUs drawn per sub-stratum group
    #[arg(long, value_name = "N")]
    min_psu_strat: Option<u64>,
    /// Fixed-point tolerance of the allocation solver
    #[arg(long, value_name = "X")]
    epsilon: Option<f64>,
    /// Iteration cap of the allocation solver
    #[arg(long, value_name = "N")]
    max_iters: Option<usize>,
    /// Stop when the sample total moves by less than this many units
    #[arg(long, value_name = "N")]
    stop_ssu_diff: Option<u64>,
    /// Stop when no design effect moves by this much or more
    #[arg(long, value_name = "X")]
    stop_deft_diff: Option<f64>,
    /// Cap on the outer design-effect iterations
    #[arg(long, value_name = "N")]
    stop_max_iters: Option<usize>,
    /// Skip the ceiling-relaxation sensitivity table (it re-solves per ceiling)
    #[arg(long)]
    skip_sensitivity: bool,
}

#[derive(Debug, Args)]
struct SelectPsuArgs {
    /// Strata table CSV
    #[arg(long, value_name = "FILE")]
    strata: Option<PathBuf>,
    /// PSU file CSV
    #[arg(long, value_name = "FILE")]
    psu: Option<PathBuf>,
    /// Per-stratum design parameters CSV
    #[arg(long, value_name = "FILE")]
    des: Option<PathBuf>,
    /// Two-stage allocation CSV (as written by `allocate --stages 2`)
    #[arg(long, value_name = "FILE")]
    alloc: Option<PathBuf>,
    /// PSUs drawn per sub-stratum group
    #[arg(long, value_name = "N")]
    min_psu_strat: Option<u64>,
    /// Random seed (required; same seed, same sample)
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct SelectSsuArgs {
    /// Unit-level frame CSV
    #[arg(long, value_name = "FILE")]
    frame: Option<PathBuf>,
    /// Column holding the PSU identifier
    #[arg(long, value_name = "COL")]
    id_psu: Option<String>,
    /// Column holding the unit identifier
    #[arg(long, value_name = "COL")]
    id_ssu: Option<String>,
    /// Column holding the stratum label
    #[arg(long, value_name = "COL")]
    strata_var: Option<String>,
    /// First-stage sample CSV (as written by `select-psu`)
    #[arg(long, value_name = "FILE")]
    sample_psu: Option<PathBuf>,
    /// Random seed (required; same seed, same sample)
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Unit-level frame CSV
    #[arg(long, value_name = "FILE")]
    frame: Option<PathBuf>,
    /// Column holding the PSU identifier
    #[arg(long, value_name = "COL")]
    id_psu: Option<String>,
    /// Column holding the unit identifier
    #[arg(long, value_name = "COL")]
    id_ssu: Option<String>,
    /// Column holding the stratum label
    #[arg(long, value_name = "COL")]
    strata_var: Option<String>,
    /// Target variable columns, comma separated
    #[arg(long, value_name = "COLS", value_delimiter = ',')]
    target_vars: Vec<String>,
    /// Domain column for per-domain CVs
    #[arg(long, value_name = "COL")]
    domain_var: Option<String>,
    /// Strata table CSV
    #[arg(long, value_name = "FILE")]
    strata: Option<PathBuf>,
    /// PSU file CSV
    #[arg(long, value_name = "FILE")]
    psu: Option<PathBuf>,
    /// Per-stratum design parameters CSV
    #[arg(long, value_name = "FILE")]
    des: Option<PathBuf>,
    /// Allocation CSV to evaluate
    #[arg(long, value_name = "FILE")]
    alloc: Option<PathBuf>,
    /// Number of replicate samples [default: 500]
    #[arg(long, value_name = "N")]
    nsampl: Option<usize>,
    /// Redraw the PSUs in every replicate [default: true]
    #[arg(long, value_name = "BOOL")]
    redraw_psu: Option<bool>,
    /// PSUs drawn per sub-stratum group
    #[arg(long, value_name = "N")]
    min_psu_strat: Option<u64>,
    /// Random seed (required; same seed, same replicates)
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct SensitivityArgs {
    /// Strata table CSV
    #[arg(long, value_name = "FILE")]
    strata: Option<PathBuf>,
    /// Precision (CV ceiling) table CSV
    #[arg(long, value_name = "FILE")]
    errors: Option<PathBuf>,
    /// PSU file CSV
    #[arg(long, value_name = "FILE")]
    psu: Option<PathBuf>,
    /// Per-stratum design parameters CSV
    #[arg(long, value_name = "FILE")]
    des: Option<PathBuf>,
    /// Intraclass correlations CSV
    #[arg(long, value_name = "FILE")]
    rho: Option<PathBuf>,
    /// Baseline design effects CSV
    #[arg(long, value_name = "FILE")]
    deft: Option<PathBuf>,
    /// Estimator effect factors CSV
    #[arg(long, value_name = "FILE")]
    effst: Option<PathBuf>,
    /// Smallest workload floor to try
    #[arg(long, value_name = "N")]
    min_lo: Option<u64>,
    /// Largest workload floor to try
    #[arg(long, value_name = "N")]
    min_hi: Option<u64>,
    /// Number of grid points [default: 10]
    #[arg(long, value_name = "N")]
    points: Option<usize>,
    /// PSUs drawn per sub-stratum group
    #[arg(long, value_name = "N")]
    min_psu_strat: Option<u64>,
}

/// What went wrong, split by whose fault it is: `Usage` is a bad
/// invocation (exit 2), `Domain` is a failed run (exit 1).
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Domain(Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Domain(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Domain(e)
    }
}

type CResult<T> = std::result::Result<T, CliError>;

/// Config-file defaults for one subcommand: the table named after the
/// subcommand, plus the top level for the shared keys.
struct Config {
    root: toml::Table,
    section: toml::Table,
    section_name: String,
}

impl Config {
    fn load(path: Option<&Path>, section: &str) -> CResult<Config> {
        let root = match path {
            None => toml::Table::new(),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    CliError::Usage(format!("cannot read config {}: {e}", p.display()))
                })?;
                text.parse::<toml::Table>().map_err(|e| {
                    CliError::Usage(format!("config {}: {e}", p.display()))
                })?
            }
        };
        let sec = match root.get(section) {
            None => toml::Table::new(),
            Some(toml::Value::Table(t)) => t.clone(),
            Some(_) => {
                return Err(CliError::Usage(format!(
                    "config key `{section}` must be a table"
                )))
            }
        };
        Ok(Config { root, section: sec, section_name: section.to_string() })
    }

    fn type_err(&self, key: &str, want: &str) -> CliError {
        CliError::Usage(format!(
            "config key `{}.{key}` must be {want}",
            self.section_name
        ))
    }

    fn string(&self, key: &str) -> CResult<Option<String>> {
        match self.section.get(key) {
            None => Ok(None),
            Some(toml::Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(self.type_err(key, "a string")),
        }
    }

    fn path(&self, key: &str) -> CResult<Option<PathBuf>> {
        Ok(self.string(key)?.map(PathBuf::from))
    }

    fn u64_at(&self, key: &str, v: &toml::Value) -> CResult<u64> {
        match v {
            toml::Value::Integer(i) if *i >= 0 => Ok(*i as u64),
            _ => Err(self.type_err(key, "a non-negative integer")),
        }
    }

    fn u64(&self, key: &str) -> CResult<Option<u64>> {
        self.section.get(key).map(|v| self.u64_at(key, v)).transpose()
    }

    fn usize(&self, key: &str) -> CResult<Option<usize>> {
        Ok(self.u64(key)?.map(|v| v as usize))
    }

    fn u32(&self, key: &str) -> CResult<Option<u32>> {
        Ok(self.u64(key)?.map(|v| v as u32))
    }

    fn f64(&self, key: &str) -> CResult<Option<f64>> {
        match self.section.get(key) {
            None => Ok(None),
            Some(toml::Value::Float(x)) => Ok(Some(*x)),
            Some(toml::Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(_) => Err(self.type_err(key, "a number")),
        }
    }

    fn bool(&self, key: &str) -> CResult<Option<bool>> {
        match self.section.get(key) {
            None => Ok(None),
            Some(toml::Value::Boolean(b)) => Ok(Some(*b)),
            Some(_) => Err(self.type_err(key, "a boolean")),
        }
    }

    /// String list: a TOML array of strings or one comma-separated string.
    fn strings(&self, key: &str) -> CResult<Vec<String>> {
        match self.section.get(key) {
            None => Ok(Vec::new()),
            Some(toml::Value::String(s)) => Ok(s
                .split(',')
                .map(|t| t.trim().to_string())
                .filter(|t| !t.is_empty())
                .collect()),
            Some(toml::Value::Array(a)) => a
                .iter()
                .map(|v| match v {
                    toml::Value::String(s) => Ok(s.clone()),
                    _ => Err(self.type_err(key, "an array of strings")),
                })
                .collect(),
            Some(_) => Err(self.type_err(key, "an array of strings")),
        }
    }

    /// Shared keys (`out_dir`, `jobs`, `seed`): section first, then the
    /// top level of the config file.
    fn shared(&self, key: &str) -> Option<&toml::Value> {
        self.section.get(key).or_else(|| self.root.get(key))
    }

    fn shared_path(&self, key: &str) -> CResult<Option<PathBuf>> {
        match self.shared(key) {
            None => Ok(None),
            Some(toml::Value::String(s)) => Ok(Some(PathBuf::from(s))),
            Some(_) => Err(self.type_err(key, "a string")),
        }
    }

    fn shared_u64(&self, key: &str) -> CResult<Option<u64>> {
        self.shared(key).map(|v| self.u64_at(key, v)).transpose()
    }
}

fn req<T>(v: Option<T>, flag: &str) -> CResult<T> {
    v.ok_or_else(|| {
        CliError::Usage(format!(
            "missing --{} (set the flag or the config key `{}`)",
            flag.replace('_', "-"),
            flag
        ))
    })
}

fn resolve_seed(flag: Option<u64>, cfg: &Config) -> CResult<u64> {
    req(flag.or(cfg.shared_u64("seed")?), "seed")
}

fn resolve_out_dir(flag: Option<PathBuf>, cfg: &Config) -> CResult<PathBuf> {
    if let Some(p) = flag {
        return Ok(p);
    }
    if let Some(p) = cfg.shared_path("out_dir")? {
        return Ok(p);
    }
    match std::env::var(OUT_DIR_ENV) {
        Ok(v) if !v.is_empty() => Ok(PathBuf::from(v)),
        _ => Ok(PathBuf::from(".")),
    }
}

fn kv(k: &str, v: impl fmt::Display) -> (String, String) {
    (k.to_string(), v.to_string())
}

fn kv_path(k: &str, p: &Path) -> (String, String) {
    (k.to_string(), p.display().to_string())
}

/// Run a parsed invocation to completion and map the outcome to an exit
/// code. Logging goes to stderr without timestamps so reruns diff clean.
pub fn run(cli: Cli) -> i32 {
    let _ = env_logger::Builder::from_env(
        env_logger::Env::default().default_filter_or("info"),
    )
    .format_timestamp(None)
    .try_init();

    match execute(cli) {
        Ok(()) => 0,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            2
        }
        Err(CliError::Domain(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn execute(cli: Cli) -> CResult<()> {
    let cfg = Config::load(cli.config.as_deref(), cli.command.name())?;
    let out = resolve_out_dir(cli.out_dir, &cfg)?;
    std::fs::create_dir_all(&out).map_err(|e| {
        CliError::Domain(Error::FileWrite { path: out.clone(), source: e })
    })?;
    if let Some(jobs) = cli.jobs.or(cfg.shared_u64("jobs")?.map(|v| v as usize)) {
        // A second build_global (tests, repeated calls) is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }

    match cli.command {
        Command::Prepare(a) => cmd_prepare(a, &cfg, &out),
        Command::Check(a) => cmd_check(a, &cfg, &out),
        Command::Allocate(a) => cmd_allocate(a, &cfg, &out),
        Command::SelectPsu(a) => cmd_select_psu(a, &cfg, &out),
        Command::SelectSsu(a) => cmd_select_ssu(a, &cfg, &out),
        Command::Evaluate(a) => cmd_evaluate(a, &cfg, &out),
        Command::Sensitivity(a) => cmd_sensitivity(a, &cfg, &out),
    }
}

fn cmd_prepare(a: PrepareArgs, cfg: &Config, out: &Path) -> CResult<()> {
    let frame_path = req(a.frame.or(cfg.path("frame")?), "frame")?;
    let id_psu = req(a.id_psu.or(cfg.string("id_psu")?), "id_psu")?;
    let id_ssu = req(a.id_ssu.or(cfg.string("id_ssu")?), "id_ssu")?;
    let strata_var = req(a.strata_var.or(cfg.string("strata_var")?), "strata_var")?;
    let target_vars = {
        let v = if a.target_vars.is_empty() { cfg.strings("target_vars")? } else { a.target_vars };
        if v.is_empty() {
            return Err(CliError::Usage(
                "missing --target-vars (set the flag or the config key `target_vars`)".into(),
            ));
        }
        v
    };
    let binary_vars =
        if a.binary_vars.is_empty() { cfg.strings("binary_vars")? } else { a.binary_vars };
    for b in &binary_vars {
        if !target_vars.iter().any(|t| t == b) {
            return Err(CliError::Usage(format!(
                "--binary-vars names `{b}`, which is not in --target-vars"
            )));
        }
    }
    let deff_var = a.deff_var.or(cfg.string("deff_var")?);
    let domain_var = a.domain_var.or(cfg.string("domain_var")?);
    let delta = a.delta.or(cfg.f64("delta")?).unwrap_or(1.0);
    let minimum = req(a.minimum.or(cfg.u64("minimum")?), "minimum")?;
    let deff_sugg = a.deff_sugg || cfg.bool("deff_sugg")?.unwrap_or(false);

    let cols = FrameColumns {
        unit_id: id_ssu.clone(),
        psu_id: id_psu.clone(),
        stratum: strata_var.clone(),
        targets: target_vars.clone(),
        domain: domain_var.clone(),
        weight: None,
    };
    let frame = load_frame(&frame_path, &cols)?;

    // With --deff-var the correlation split runs over that column's groups
    // instead of the sampling PSUs.
    let clusters: Option<Vec<String>> = match &deff_var {
        Some(c) if !c.eq_ignore_ascii_case(&id_psu) => {
            let idx = frame
                .headers
                .iter()
                .position(|h| h.eq_ignore_ascii_case(c))
                .ok_or_else(|| {
                    Error::schema(format!(
                        "{}: no column named {c} for --deff-var",
                        frame_path.display()
                    ))
                })?;
            Some(
                frame
                    .records
                    .iter()
                    .map(|r| r.get(idx).unwrap_or("").trim().to_string())
                    .collect(),
            )
        }
        _ => None,
    };

    let binary: Vec<bool> =
        target_vars.iter().map(|t| binary_vars.iter().any(|b| b == t)).collect();
    let prep =
        prepare_inputs_scenario1(&frame, &binary, delta, minimum, deff_sugg, clusters.as_deref())?;

    let singletons = prep.strata.strata.iter().filter(|s| s.pop == 1).count();
    println!("Number of strata: {}", prep.strata.len());
    println!("... of which with only one unit: {singletons}");

    let outputs = report::write_prepared(out, &prep)?;
    let mut params = vec![
        kv_path("frame", &frame_path),
        kv("id_psu", &id_psu),
        kv("id_ssu", &id_ssu),
        kv("strata_var", &strata_var),
        kv("target_vars", target_vars.join(",")),
        kv("binary_vars", binary_vars.join(",")),
        kv("delta", delta),
        kv("minimum", minimum),
        kv("deff_sugg", deff_sugg),
    ];
    if let Some(c) = &deff_var {
        params.push(kv("deff_var", c));
    }
    if let Some(d) = &domain_var {
        params.push(kv("domain_var", d));
    }
    report::write_manifest(out, "prepare", &params, &[frame_path], &outputs)?;
    Ok(())
}

fn cmd_check(a: CheckArgs, cfg: &Config, out: &Path) -> CResult<()> {
    let strata_path = req(a.strata.or(cfg.path("strata")?), "strata")?;
    let psu_path = req(a.psu.or(cfg.path("psu")?), "psu")?;
    let strata = load_strata(&strata_path)?;
    let psus = load_psus(&psu_path)?;
    let rep = check_input(&strata, &psus)?;

    if rep.is_coherent() {
        println!("strata and PSU files agree ({} strata)", strata.len());
    } else {
        let off = rep.rows.iter().filter(|r| r.discrepancy != 0).count();
        println!(
            "{off} of {} strata corrected: population set to the PSU size total",
            strata.len()
        );
    }
    let (report_path, corrected_path) = report::write_check(out, &rep)?;
    report::write_manifest(
        out,
        "check",
        &[kv_path("strata", &strata_path), kv_path("psu", &psu_path)],
        &[strata_path, psu_path],
        &[report_path, corrected_path],
    )?;
    Ok(())
}

fn cmd_allocate(a: AllocateArgs, cfg: &Config, out: &Path) -> CResult<()> {
    let stages = a.stages.or(cfg.u32("stages")?).unwrap_or(1);
    if stages != 1 && stages != 2 {
        return Err(CliError::Usage(format!("--stages must be 1 or 2, not {stages}")));
    }
    let strata = req(a.strata.or(cfg.path("strata")?), "strata")?;
    let errors = req(a.errors.or(cfg.path("errors")?), "errors")?;
    let psu = a.psu.or(cfg.path("psu")?);
    let des = a.des.or(cfg.path("des")?);
    let rho = a.rho.or(cfg.path("rho")?);
    let deft = a.deft.or(cfg.path("deft")?);
    let effst = a.effst.or(cfg.path("effst")?);
    if stages == 2 && (psu.is_none() || des.is_none() || rho.is_none()) {
        return Err(CliError::Usage(
            "--stages 2 needs --psu, --des and --rho (or the config keys psu/des/rho)".into(),
        ));
    }
    let skip_sensitivity = a.skip_sensitivity || cfg.bool("skip_sensitivity")?.unwrap_or(false);

    let mut solver = BethelOptions::default();
    if let Some(v) = a.minnumstrat.or(cfg.u64("minnumstrat")?) {
        solver.minnumstrat = v;
    }
    if let Some(v) = a.epsilon.or(cfg.f64("epsilon")?) {
        solver.epsilon = v;
    }
    if let Some(v) = a.max_iters.or(cfg.usize("max_iters")?) {
        solver.max_iters = v;
    }

    let paths = InputPaths {
        strata: strata.clone(),
        errors: errors.clone(),
        psu: psu.clone(),
        des: des.clone(),
        rho: rho.clone(),
        deft: deft.clone(),
        effst: effst.clone(),
    };
    let inputs = load_inputs(&paths)?;

    let res = if stages == 1 {
        let opts = OneStageOptions { solver, skip_sensitivity };
        beat_1st(&inputs.strata, &inputs.constraints, &opts)?
    } else {
        let mut stop = StopRule::default();
        if let Some(v) = a.stop_ssu_diff.or(cfg.u64("stop_ssu_diff")?) {
            stop.ssu_diff = v;
        }
        if let Some(v) = a.stop_deft_diff.or(cfg.f64("stop_deft_diff")?) {
            stop.deft_diff = v;
        }
        if let Some(v) = a.stop_max_iters.or(cfg.usize("stop_max_iters")?) {
            stop.max_iters = v;
        }
        let opts = TwoStageOptions {
            solver,
            min_psu_strat: a.min_psu_strat.or(cfg.u64("min_psu_strat")?).unwrap_or(2),
            stop,
            skip_sensitivity,
        };
        beat_2st(&inputs, &opts)?
    };

    if !res.converged {
        log::warn!("allocation stopped at the iteration cap before stabilising");
    }
    if stages == 1 {
        println!("allocated {} units across {} strata", res.total_ssu(), res.rows.len());
    } else {
        println!(
            "allocated {} final-stage units in {} PSUs across {} strata",
            res.total_ssu(),
            res.total_psu(),
            res.rows.len()
        );
    }
    for (exp, plan) in res.expected_cv.iter().zip(&res.planned_cv) {
        let cvs: Vec<String> = exp
            .cvs
            .iter()
            .zip(&plan.cvs)
            .map(|(e, p)| format!("{e:.4}/{p:.4}"))
            .collect();
        println!("  {}: expected/planned CV {}", exp.domain, cvs.join(" "));
    }

    let mut outputs = vec![
        report::write_alloc(out, &res)?,
        report::write_expected_cv(out, &res)?,
        report::write_sensitivity(out, &res)?,
        report::write_iterations(out, &res)?,
    ];
    if stages == 2 {
        outputs.push(report::write_alloc2(out, &res)?);
        outputs.push(report::write_deft_trace(out, &res)?);
        let stem = out.join("alloc_chart");
        plot_allocation(&res.rows, &stem)?;
        outputs.push(stem.with_extension("svg"));
    }

    let mut params = res.params.clone();
    params.push(kv("stages", stages));
    params.push(kv_path("strata", &strata));
    params.push(kv_path("errors", &errors));
    let mut in_files = vec![strata, errors];
    for (key, p) in
        [("psu", &psu), ("des", &des), ("rho", &rho), ("deft", &deft), ("effst", &effst)]
    {
        if let Some(p) = p {
            params.push(kv_path(key, p));
            in_files.push(p.clone());
        }
    }
    report::write_manifest(out, "allocate", &params, &in_files, &outputs)?;
    Ok(())
}

fn cmd_select_psu(a: SelectPsuArgs, cfg: &Config, out: &Path) -> CResult<()> {
    let strata_path = req(a.strata.or(cfg.path("strata")?), "strata")?;
    let psu_path = req(a.psu.or(cfg.path("psu")?), "psu")?;
    let des_path = req(a.des.or(cfg.path("des")?), "des")?;
    let alloc_path = req(a.alloc.or(cfg.path("alloc")?), "alloc")?;
    let min_psu_strat = a.min_psu_strat.or(cfg.u64("min_psu_strat")?).unwrap_or(2);
    let seed = resolve_seed(a.seed, cfg)?;

    let strata = load_strata(&strata_path)?;
    let psus = load_psus(&psu_path)?;
    let design = load_design(&des_path)?;
    let alloc = report::read_alloc(&alloc_path, &strata)?;

    let sel = select_psu(&strata, &psus, &design, &alloc, min_psu_strat, seed)?;
    let totals = sel.totals();
    println!(
        "selected {} of {} PSUs ({} self-representing), {} final-stage units planned",
        totals.psu,
        sel.universe.len(),
        totals.psu_sr,
        totals.ssu
    );

    let outputs = vec![
        report::write_universe_psu(out, &sel)?,
        report::write_sample_psu(out, &sel)?,
        report::write_psu_stats(out, &sel)?,
    ];
    report::write_manifest(
        out,
        "select-psu",
        &[
            kv_path("strata", &strata_path),
            kv_path("psu", &psu_path),
            kv_path("des", &des_path),
            kv_path("alloc", &alloc_path),
            kv("min_psu_strat", min_psu_strat),
            kv("seed", seed),
        ],
        &[strata_path, psu_path, des_path, alloc_path],
        &outputs,
    )?;
    Ok(())
}

fn cmd_select_ssu(a: SelectSsuArgs, cfg: &Config, out: &Path) -> CResult<()> {
    let frame_path = req(a.frame.or(cfg.path("frame")?), "frame")?;
    let id_psu = req(a.id_psu.or(cfg.string("id_psu")?), "id_psu")?;
    let id_ssu = req(a.id_ssu.or(cfg.string("id_ssu")?), "id_ssu")?;
    let strata_var = req(a.strata_var.or(cfg.string("strata_var")?), "strata_var")?;
    let sample_psu = req(a.sample_psu.or(cfg.path("sample_psu")?), "sample_psu")?;
    let seed = resolve_seed(a.seed, cfg)?;

    let cols = FrameColumns {
        unit_id: id_ssu.clone(),
        psu_id: id_psu.clone(),
        stratum: strata_var.clone(),
        targets: Vec::new(),
        domain: None,
        weight: None,
    };
    let frame = load_frame(&frame_path, &cols)?;
    let psus = report::read_sample_psu(&sample_psu)?;
    let units = select_ssu(&frame, &psus, seed)?;
    println!("selected {} final-stage units in {} PSUs", units.len(), psus.len());

    let mut outputs = vec![report::write_sample_ssu(out, &frame, &units)?];
    let weights: Vec<f64> = units.iter().map(|u| u.weight).collect();
    let stem = out.join("weights_chart");
    plot_weights(&weights, &stem)?;
    outputs.push(stem.with_extension("svg"));
    report::write_manifest(
        out,
        "select-ssu",
        &[
            kv_path("frame", &frame_path),
            kv("id_psu", &id_psu),
            kv("id_ssu", &id_ssu),
            kv("strata_var", &strata_var),
            kv_path("sample_psu", &sample_psu),
            kv("seed", seed),
        ],
        &[frame_path, sample_psu],
        &outputs,
    )?;
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs, cfg: &Config, out: &Path) -> CResult<()> {
    let frame_path = req(a.frame.or(cfg.path("frame")?), "frame")?;
    let id_psu = req(a.id_psu.or(cfg.string("id_psu")?), "id_psu")?;
    let id_ssu = req(a.id_ssu.or(cfg.string("id_ssu")?), "id_ssu")?;
    let strata_var = req(a.strata_var.or(cfg.string("strata_var")?), "strata_var")?;
    let target_vars = {
        let v = if a.target_vars.is_empty() { cfg.strings("target_vars")? } else { a.target_vars };
        if v.is_empty() {
            return Err(CliError::Usage(
                "missing --target-vars (set the flag or the config key `target_vars`)".into(),
            ));
        }
        v
    };
    let domain_var = a.domain_var.or(cfg.string("domain_var")?);
    let strata_path = req(a.strata.or(cfg.path("strata")?), "strata")?;
    let psu_path = req(a.psu.or(cfg.path("psu")?), "psu")?;
    let des_path = req(a.des.or(cfg.path("des")?), "des")?;
    let alloc_path = req(a.alloc.or(cfg.path("alloc")?), "alloc")?;
    let opts = EvalOptions {
        nsampl: a.nsampl.or(cfg.usize("nsampl")?).unwrap_or(500),
        redraw_psu: a.redraw_psu.or(cfg.bool("redraw_psu")?).unwrap_or(true),
        min_psu_strat: a.min_psu_strat.or(cfg.u64("min_psu_strat")?).unwrap_or(2),
        seed: resolve_seed(a.seed, cfg)?,
    };

    let cols = FrameColumns {
        unit_id: id_ssu.clone(),
        psu_id: id_psu.clone(),
        stratum: strata_var.clone(),
        targets: target_vars.clone(),
        domain: domain_var.clone(),
        weight: None,
    };
    let frame = load_frame(&frame_path, &cols)?;
    let strata = load_strata(&strata_path)?;
    let psus = load_psus(&psu_path)?;
    let design = load_design(&des_path)?;
    let alloc = report::read_alloc(&alloc_path, &strata)?;

    let rep = eval_2stage(&frame, &strata, &psus, &design, &alloc, &opts)?;
    println!("empirical CVs over {} replicates:", rep.nsampl);
    for row in &rep.rows {
        let cvs: Vec<String> = row.cv.iter().map(|v| format!("{v:.4}")).collect();
        println!("  {}: {}", row.domain, cvs.join(" "));
    }

    let outputs = vec![report::write_coeff_var(out, &rep)?];
    report::write_manifest(
        out,
        "evaluate",
        &[
            kv_path("frame", &frame_path),
            kv("id_psu", &id_psu),
            kv("id_ssu", &id_ssu),
            kv("strata_var", &strata_var),
            kv("target_vars", target_vars.join(",")),
            kv_path("strata", &strata_path),
            kv_path("psu", &psu_path),
            kv_path("des", &des_path),
            kv_path("alloc", &alloc_path),
            kv("nsampl", opts.nsampl),
            kv("redraw_psu", opts.redraw_psu),
            kv("min_psu_strat", opts.min_psu_strat),
            kv("seed", opts.seed),
        ],
        &[frame_path, strata_path, psu_path, des_path, alloc_path],
        &outputs,
    )?;
    Ok(())
}

fn cmd_sensitivity(a: SensitivityArgs, cfg: &Config, out: &Path) -> CResult<()> {
    let strata = req(a.strata.or(cfg.path("strata")?), "strata")?;
    let errors = req(a.errors.or(cfg.path("errors")?), "errors")?;
    let psu = req(a.psu.or(cfg.path("psu")?), "psu")?;
    let des = req(a.des.or(cfg.path("des")?), "des")?;
    let rho = req(a.rho.or(cfg.path("rho")?), "rho")?;
    let deft = a.deft.or(cfg.path("deft")?);
    let effst = a.effst.or(cfg.path("effst")?);
    let lo = req(a.min_lo.or(cfg.u64("min_lo")?), "min_lo")?;
    let hi = req(a.min_hi.or(cfg.u64("min_hi")?), "min_hi")?;
    let points = a.points.or(cfg.usize("points")?).unwrap_or(10);

    let paths = InputPaths {
        strata: strata.clone(),
        errors: errors.clone(),
        psu: Some(psu.clone()),
        des: Some(des.clone()),
        rho: Some(rho.clone()),
        deft: deft.clone(),
        effst: effst.clone(),
    };
    let inputs = load_inputs(&paths)?;
    let opts = TwoStageOptions {
        min_psu_strat: a.min_psu_strat.or(cfg.u64("min_psu_strat")?).unwrap_or(2),
        ..TwoStageOptions::default()
    };
    let rows = sensitivity_min_ssu(&inputs, &opts, lo, hi, points)?;
    println!("workload floor {lo}..{hi} over {} grid points:", rows.len());
    for r in &rows {
        println!("  minimum {:>4}: {:>5} PSUs, {:>7} units", r.minimum, r.psu_total, r.ssu_total);
    }

    let mut outputs = vec![report::write_min_sensitivity(out, &rows)?];
    let stem = out.join("min_ssu_chart");
    plot_sensitivity(&rows, &stem)?;
    outputs.push(stem.with_extension("svg"));

    let mut params = vec![
        kv_path("strata", &strata),
        kv_path("errors", &errors),
        kv_path("psu", &psu),
        kv_path("des", &des),
        kv_path("rho", &rho),
        kv("min_lo", lo),
        kv("min_hi", hi),
        kv("points", points),
        kv("min_psu_strat", opts.min_psu_strat),
    ];
    let mut in_files = vec![strata, errors, psu, des, rho];
    for (key, p) in [("deft", &deft), ("effst", &effst)] {
        if let Some(p) = p {
            params.push(kv_path(key, p));
            in_files.push(p.clone());
        }
    }
    report::write_manifest(out, "sensitivity", &params, &in_files, &outputs)?;
    Ok(())
}
