//! Command-line front end for the `qhalt` library.
//!
//! Exit codes: 0 pass, 1 check failed, 2 usage or parse error. Reports go to
//! standard output as JSON; tables of numbers go to CSV.

pub mod document;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use qhalt::ancilla_model::{coherence, monitoring_effect, run_superposition, AncillaError};
use qhalt::halting_nogo::{
    gram_report, random_compliant_table, search_max_halting_mass, seeded_rng, verify_nogo, GramReport, NogoError,
    SearchConfig, SearchError,
};
use qhalt::qtm::{check_global_unitarity, check_ozawa_compliance, ComplianceReport, QtmError, UnitarityReport};
use qhalt::MachineDims;
use serde::Serialize;
use thiserror::Error;

use document::{DocumentError, MachineDef, ScenarioDef};

#[derive(Debug, Parser)]
#[command(name = "qhalt", version, about = "Halting checks for quantum Turing machines on a cyclic tape")]
pub struct Cli {
    /// Tolerance for pass/fail decisions.
    #[arg(long, global = true, default_value_t = 1e-10)]
    pub tol: f64,
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check global unitarity and the halting scheme of a machine file.
    Check { machine: PathBuf },
    /// Verify the orthogonality relations that rule out halting.
    Nogo {
        /// Machine file; omit when using --random.
        #[arg(required_unless_present = "random", conflicts_with = "random")]
        machine: Option<PathBuf>,
        /// Generate compliant unitary tables of the given shape, e.g. "M=2,S=2,N=6".
        #[arg(long, value_name = "DIMS")]
        random: Option<String>,
        #[arg(long, default_value_t = 100, requires = "random")]
        samples: usize,
    },
    /// Search for the largest halting amplitude a unitary table can carry.
    Search {
        #[arg(long, default_value = "M=2,S=2,N=6")]
        dims: String,
        #[arg(long, default_value_t = 20)]
        restarts: usize,
        #[arg(long, default_value_t = 500)]
        iterations: usize,
        /// Drop the halting-scheme constraint.
        #[arg(long)]
        no_ozawa: bool,
        /// Write the optimization trace as CSV to this path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Coherence and monitoring effect of a branch pair, one CSV row per step.
    Interfere {
        scenario: PathBuf,
        /// Branch ids "i,j".
        #[arg(long)]
        pair: String,
        /// Write the CSV here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Document { path: String, source: DocumentError },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        2
    }
}

impl From<QtmError> for CliError {
    fn from(e: QtmError) -> Self {
        CliError::Usage(e.to_string())
    }
}

/// Result of one command: exit code and the bytes for each stream.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Output {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io { path: path.display().to_string(), source })
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| CliError::Io { path: path.display().to_string(), source })
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

/// 17 significant digits, locale independent.
pub fn csv_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Parses "M=2,S=2,N=6" in any order.
pub fn parse_dims(text: &str) -> Result<MachineDims, CliError> {
    let bad = || CliError::Usage(format!("invalid dims {text:?}, expected \"M=..,S=..,N=..\""));
    let (mut m, mut s, mut n) = (None, None, None);
    for part in text.split(',') {
        let (k, v) = part.split_once('=').ok_or_else(bad)?;
        let v: usize = v.trim().parse().map_err(|_| bad())?;
        let slot = match k.trim() {
            "M" => &mut m,
            "S" => &mut s,
            "N" => &mut n,
            _ => return Err(bad()),
        };
        if slot.replace(v).is_some() {
            return Err(bad());
        }
    }
    let (m, s, n) = (m.ok_or_else(bad)?, s.ok_or_else(bad)?, n.ok_or_else(bad)?);
    MachineDims::new(m, s, n).map_err(|e| CliError::Usage(e.to_string()))
}

fn load_machine(path: &Path) -> Result<qhalt::TransitionTable, CliError> {
    let doc = |source| CliError::Document { path: path.display().to_string(), source };
    MachineDef::parse(&read(path)?).and_then(|d| d.to_table()).map_err(doc)
}

#[derive(Serialize)]
struct CheckReport {
    dims: MachineDims,
    tol: f64,
    unitarity: UnitarityReport,
    compliance: ComplianceReport,
    pass: bool,
}

fn cmd_check(path: &Path, tol: f64) -> Result<Output, CliError> {
    let table = load_machine(path)?;
    let unitarity = check_global_unitarity(&table, tol)?;
    let compliance = check_ozawa_compliance(&table);
    let pass = unitarity.pass && compliance.pass();
    let report = CheckReport { dims: *table.dims(), tol, unitarity, compliance, pass };
    Ok(Output { code: if pass { 0 } else { 1 }, stdout: json(&report), stderr: String::new() })
}

#[derive(Serialize)]
struct NogoFailure {
    precondition: &'static str,
    message: String,
}

#[derive(Serialize)]
struct SampleSummary {
    sample: usize,
    halting_mass: f64,
    max_residual: f64,
    pass: bool,
}

#[derive(Serialize)]
struct RandomNogoReport {
    dims: MachineDims,
    samples: usize,
    seed: u64,
    tol: f64,
    max_halting_mass: f64,
    max_residual: f64,
    pass: bool,
    worst_sample: Option<usize>,
    per_sample: Vec<SampleSummary>,
}

fn cmd_nogo_file(path: &Path, tol: f64) -> Result<Output, CliError> {
    let table = load_machine(path)?;
    match verify_nogo(&table, tol) {
        Ok(report) => {
            Ok(Output { code: if report.pass { 0 } else { 1 }, stdout: json(&report), stderr: String::new() })
        }
        Err(NogoError::Qtm(e)) => Err(e.into()),
        Err(e) => {
            let precondition = match e {
                NogoError::NotCompliant(_) => "halting scheme",
                NogoError::NotUnitary { .. } => "global unitarity",
                _ => "input",
            };
            let failure = NogoFailure { precondition, message: e.to_string() };
            Ok(Output { code: 1, stdout: json(&failure), stderr: format!("precondition failed: {e}\n") })
        }
    }
}

fn cmd_nogo_random(dims: &str, samples: usize, seed: u64, tol: f64) -> Result<Output, CliError> {
    let dims = parse_dims(dims)?;
    dims.dimension()
        .filter(|&d| d <= qhalt::qtm::DENSE_CAP)
        .ok_or_else(|| CliError::Usage(format!("{dims} exceeds the dense dimension cap {}", qhalt::qtm::DENSE_CAP)))?;
    let mut per_sample = Vec::with_capacity(samples);
    let mut worst: Option<(usize, f64)> = None;
    let (mut max_mass, mut max_res) = (0.0f64, 0.0f64);
    for i in 0..samples {
        let table = random_compliant_table(dims, &mut seeded_rng(seed, i as u64));
        let report: GramReport = match verify_nogo(&table, tol) {
            Ok(r) => r,
            // A generated table failing a precondition is itself a failure.
            Err(NogoError::NotUnitary { .. } | NogoError::NotCompliant(_)) => {
                let mut r = gram_report(&table, tol);
                r.pass = false;
                r
            }
            Err(e) => return Err(CliError::Usage(e.to_string())),
        };
        let score = report.halting_mass.max(report.max_residual());
        if worst.is_none_or(|(_, w)| score > w) {
            worst = Some((i, score));
        }
        max_mass = max_mass.max(report.halting_mass);
        max_res = max_res.max(report.max_residual());
        per_sample.push(SampleSummary {
            sample: i,
            halting_mass: report.halting_mass,
            max_residual: report.max_residual(),
            pass: report.pass,
        });
    }
    let pass = per_sample.iter().all(|s| s.pass);
    let report = RandomNogoReport {
        dims,
        samples,
        seed,
        tol,
        max_halting_mass: max_mass,
        max_residual: max_res,
        pass,
        worst_sample: worst.map(|(i, _)| i),
        per_sample,
    };
    Ok(Output { code: if pass { 0 } else { 1 }, stdout: json(&report), stderr: String::new() })
}

#[derive(Serialize)]
struct SearchReport {
    dims: MachineDims,
    config: SearchConfig,
    best_mass: f64,
    best_unitarity_deviation: f64,
    projection_residual: Option<f64>,
    projection_applied: bool,
    best_restart: usize,
    restarts: Vec<qhalt::halting_nogo::search::RestartSummary>,
}

fn cmd_search(
    dims: &str,
    restarts: usize,
    iterations: usize,
    seed: u64,
    no_ozawa: bool,
    out: Option<&Path>,
) -> Result<Output, CliError> {
    let dims = parse_dims(dims)?;
    let mut config = SearchConfig::new(restarts, iterations, seed);
    config.halting_scheme = !no_ozawa;
    let result = search_max_halting_mass(dims, &config).map_err(|e| match e {
        SearchError::InvalidArgument(m) => CliError::Usage(m),
        SearchError::Qtm(e) => e.into(),
    })?;
    if let Some(path) = out {
        let mut csv = String::from("iteration,objective\n");
        for p in &result.trace {
            writeln!(csv, "{},{}", p.iteration, csv_float(p.objective)).expect("string write");
        }
        write(path, &csv)?;
    }
    let stderr = if no_ozawa {
        "warning: halting scheme disabled; halted configurations may rewrite the tape and clear the halt bit\n".into()
    } else {
        String::new()
    };
    let report = SearchReport {
        dims,
        config,
        best_mass: result.best_mass,
        best_unitarity_deviation: result.best_unitarity_deviation,
        projection_residual: result.projection_residual,
        projection_applied: result.projection_applied,
        best_restart: result.best_restart,
        restarts: result.restarts,
    };
    Ok(Output { code: 0, stdout: json(&report), stderr })
}

fn ancilla(e: AncillaError) -> CliError {
    CliError::Usage(e.to_string())
}

fn cmd_interfere(path: &Path, pair: &str, out: Option<&Path>) -> Result<Output, CliError> {
    let doc = |source| CliError::Document { path: path.display().to_string(), source };
    let scenario = ScenarioDef::parse(&read(path)?).and_then(|d| d.to_scenario()).map_err(doc)?;
    let trace =
        run_superposition(&scenario.branches, &scenario.amps, &scenario.policy, scenario.t_max).map_err(ancilla)?;

    let bad_pair = || CliError::Usage(format!("invalid pair {pair:?}, expected two distinct branch ids \"i,j\""));
    let (a, b) = pair.split_once(',').ok_or_else(bad_pair)?;
    let id = |s: &str| s.trim().parse::<u64>().map_err(|_| bad_pair());
    let (a, b) = (id(a)?, id(b)?);
    if a == b {
        return Err(bad_pair());
    }
    let position = |id| trace.position(id).ok_or_else(|| CliError::Usage(format!("no branch with id {id}")));
    let (i, j) = (position(a)?, position(b)?);

    let mut csv = String::from("t,abs_coherence,monitored_delta\n");
    for t in 0..=trace.t_max() {
        let c = coherence(&trace, t, i, j).map_err(ancilla)?;
        let effect = monitoring_effect(&trace, (i, j), t).map_err(ancilla)?;
        writeln!(csv, "{t},{},{}", csv_float(c.norm()), csv_float(effect.delta)).expect("string write");
    }
    match out {
        Some(p) => {
            write(p, &csv)?;
            Ok(Output::default())
        }
        None => Ok(Output { code: 0, stdout: csv, stderr: String::new() }),
    }
}

/// Executes a parsed command line.
pub fn execute(cli: &Cli) -> Output {
    let result = match &cli.command {
        Command::Check { machine } => cmd_check(machine, cli.tol),
        Command::Nogo { machine: Some(path), .. } => cmd_nogo_file(path, cli.tol),
        Command::Nogo { random: Some(dims), samples, .. } => cmd_nogo_random(dims, *samples, cli.seed, cli.tol),
        Command::Nogo { .. } => Err(CliError::Usage("give a machine file or --random".into())),
        Command::Search { dims, restarts, iterations, no_ozawa, out } => {
            cmd_search(dims, *restarts, *iterations, cli.seed, *no_ozawa, out.as_deref())
        }
        Command::Interfere { scenario, pair, out } => cmd_interfere(scenario, pair, out.as_deref()),
    };
    result.unwrap_or_else(|e| Output { code: e.exit_code(), stdout: String::new(), stderr: format!("error: {e}\n") })
}

/// Parses arguments and executes; usage errors map to exit code 2.
pub fn run<I, T>(args: I) -> Output
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(&cli),
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            if code == 0 {
                Output { code, stdout: text, stderr: String::new() }
            } else {
                Output { code, stdout: String::new(), stderr: text }
            }
        }
    }
}
