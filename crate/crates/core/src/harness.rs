//! Experiment driver: convergence traces for one channel draw and Monte-Carlo
//! sweeps of weighted sum-rate against SNR, written as CSV.
//!
//! Configuration comes from an optional flat `key=value` file merged with
//! command-line flags; flags win. Progress goes to standard error, data only
//! to the output file.

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Parser;
use rayon::prelude::*;
use thiserror::Error;

use crate::bd::bd_design;
use crate::channel::{gen_channels, RngStream, StreamDomain};
use crate::link::weighted_sum_rate;
use crate::pso::{optimize, PsoParams, RandomMode};
use crate::system::{snr_to_power, SystemConfig};

pub const CONVERGENCE_HEADER: &str = "iteration,gbest_wsr_bits";
pub const SWEEP_HEADER: &str = "snr_db,method,mean_wsr_bits,std_wsr_bits,n";

/// Slack allowed when checking that the swarm never falls below its BD seed.
pub const DOMINANCE_TOL: f64 = 1e-9;

const DEFAULT_SWEEP_SNR_DB: [f64; 6] = [0.0, 5.0, 10.0, 15.0, 20.0, 25.0];
const DEFAULT_CONVERGENCE_SNR_DB: f64 = 10.0;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{}", .0.join("\n"))]
    Validation(Vec<String>),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("I/O failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// Help or version text requested; not a failure.
    #[error("{0}")]
    Info(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Info(_) => 0,
            HarnessError::Validation(_) => 1,
            HarnessError::Numerical(_) => 2,
            HarnessError::Io { .. } => 3,
        }
    }
}

impl From<crate::Error> for HarnessError {
    fn from(e: crate::Error) -> Self {
        match e {
            crate::Error::InvalidConfig(v) => HarnessError::Validation(v),
            crate::Error::InvalidParams(m) => HarnessError::Validation(vec![m]),
            other => HarnessError::Numerical(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Convergence,
    Sweep,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "convergence" => Ok(Mode::Convergence),
            "sweep" => Ok(Mode::Sweep),
            other => Err(format!("mode: expected 'convergence' or 'sweep', got '{other}'")),
        }
    }
}

fn parse_r_mode(s: &str) -> Result<RandomMode, String> {
    match s.trim() {
        "scalar" | "scalar-per-particle" => Ok(RandomMode::ScalarPerParticle),
        "per-entry" => Ok(RandomMode::PerEntry),
        other => Err(format!("r-mode: expected 'scalar' or 'per-entry', got '{other}'")),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    /// Scenario; `p_max` is replaced per SNR point.
    pub system: SystemConfig,
    pub snr_db_list: Vec<f64>,
    pub n_realizations: usize,
    pub pso: PsoParams,
    pub master_seed: u64,
    pub mode: Mode,
    pub out_path: PathBuf,
}

impl ExperimentSpec {
    pub fn system_at(&self, snr_db: f64) -> SystemConfig {
        self.system.with_p_max(snr_to_power(snr_db, self.system.noise_power))
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errors = Vec::new();
        if self.snr_db_list.is_empty() {
            errors.push("snr-db: at least one SNR value is required".to_string());
        }
        if self.snr_db_list.iter().any(|s| !s.is_finite()) {
            errors.push("snr-db: values must be finite".to_string());
        }
        if self.n_realizations == 0 {
            errors.push("realizations: must be at least 1".to_string());
        }
        let probe = self.system_at(self.snr_db_list.first().copied().unwrap_or(0.0));
        errors.extend(probe.validate().errors);
        if let Err(e) = self.pso.check() {
            errors.push(e.to_string());
        }
        errors
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Pso,
    Bd,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Pso => "pso",
            Method::Bd => "bd",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub snr_db: f64,
    pub method: Method,
    pub mean_wsr: f64,
    /// Population standard deviation over realizations.
    pub std_wsr: f64,
    pub n: usize,
}

/// Twelve significant digits in exponent form.
pub fn fmt_sig12(x: f64) -> String {
    format!("{x:.11e}")
}

/// PSO trace for one channel draw at the first SNR in the list.
pub fn run_convergence(spec: &ExperimentSpec) -> Result<Vec<(usize, f64)>, HarnessError> {
    let snr_db = spec.snr_db_list.first().copied().unwrap_or(DEFAULT_CONVERGENCE_SNR_DB);
    let cfg = spec.system_at(snr_db);
    cfg.check()?;
    let channel = RngStream::channel(spec.master_seed, 0);
    let swarm = RngStream::new(spec.master_seed, StreamDomain::Velocity);
    eprintln!("convergence {cfg} snr={snr_db}dB channel={channel:?}");
    let h = gen_channels(&cfg, &channel);
    let outcome = optimize(&cfg, &h, &spec.pso, swarm, None)?;
    if let Some(w) = outcome.trace.windows(2).find(|w| w[1].1 < w[0].1) {
        return Err(HarnessError::Numerical(format!(
            "global best decreased between iterations {} and {}",
            w[0].0, w[1].0
        )));
    }
    Ok(outcome.trace)
}

pub fn render_convergence(trace: &[(usize, f64)]) -> String {
    let mut out = String::from(CONVERGENCE_HEADER);
    out.push('\n');
    for (k, v) in trace {
        out.push_str(&format!("{k},{}\n", fmt_sig12(*v)));
    }
    out
}

/// One realization's BD and PSO scores; both use the general evaluator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RealizationResult {
    pub bd: f64,
    pub pso: f64,
}

/// Scores BD and PSO on one channel realization at one SNR. Fails if the
/// swarm ends below its BD seed.
pub fn run_realization(spec: &ExperimentSpec, snr_db: f64, realization: u64) -> Result<RealizationResult, HarnessError> {
    let cfg = spec.system_at(snr_db);
    let channel = RngStream::channel(spec.master_seed, realization);
    let swarm = RngStream::new(spec.master_seed, StreamDomain::Velocity).realization(realization);
    let h = gen_channels(&cfg, &channel);
    let bd = bd_design(&cfg, &h)?;
    let bd_wsr = weighted_sum_rate(&cfg, &h, &bd.precoders, &bd.decoders)?;
    let outcome = optimize(&cfg, &h, &spec.pso, swarm, Some(bd.precoders))?;
    if outcome.gbest_value < bd_wsr - DOMINANCE_TOL {
        return Err(HarnessError::Numerical(format!(
            "snr {snr_db} dB realization {realization}: PSO {} below BD {bd_wsr}",
            outcome.gbest_value
        )));
    }
    if outcome.trace.windows(2).any(|w| w[1].1 < w[0].1) {
        return Err(HarnessError::Numerical(format!(
            "snr {snr_db} dB realization {realization}: global best decreased"
        )));
    }
    eprintln!(
        "snr={snr_db}dB realization={realization} seed={} bd={bd_wsr:.6} pso={:.6}",
        spec.master_seed, outcome.gbest_value
    );
    Ok(RealizationResult { bd: bd_wsr, pso: outcome.gbest_value })
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Mean and spread of BD and PSO weighted sum-rate at every SNR point, rows
/// ordered by SNR then method (PSO first).
pub fn run_sweep(spec: &ExperimentSpec) -> Result<Vec<SweepRow>, HarnessError> {
    spec.system_at(spec.snr_db_list.first().copied().unwrap_or(0.0)).check()?;
    let mut rows = Vec::with_capacity(2 * spec.snr_db_list.len());
    for &snr_db in &spec.snr_db_list {
        let results = (0..spec.n_realizations as u64)
            .into_par_iter()
            .map(|r| run_realization(spec, snr_db, r))
            .collect::<Vec<_>>()
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?;
        let pso: Vec<f64> = results.iter().map(|r| r.pso).collect();
        let bd: Vec<f64> = results.iter().map(|r| r.bd).collect();
        for (method, xs) in [(Method::Pso, pso), (Method::Bd, bd)] {
            let (mean_wsr, std_wsr) = mean_std(&xs);
            rows.push(SweepRow { snr_db, method, mean_wsr, std_wsr, n: xs.len() });
        }
    }
    Ok(rows)
}

pub fn render_sweep(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_sig12(r.snr_db),
            r.method,
            fmt_sig12(r.mean_wsr),
            fmt_sig12(r.std_wsr),
            r.n
        ));
    }
    out
}

fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    fs::write(path, contents).map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })
}

/// Runs the experiment the spec describes and writes its CSV.
pub fn run(spec: &ExperimentSpec) -> Result<(), HarnessError> {
    let csv = match spec.mode {
        Mode::Convergence => render_convergence(&run_convergence(spec)?),
        Mode::Sweep => render_sweep(&run_sweep(spec)?),
    };
    write_file(&spec.out_path, &csv)?;
    eprintln!("wrote {}", spec.out_path.display());
    Ok(())
}

#[derive(Debug, Parser)]
#[command(
    name = "mimo-pso",
    version,
    about = "BD and particle-swarm transceiver design for the downlink MIMO broadcast channel"
)]
struct Cli {
    /// convergence | sweep
    #[arg(long)]
    mode: Option<String>,
    /// Flat key=value file; keys are flag names without the leading dashes
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of users K
    #[arg(long)]
    users: Option<String>,
    /// Transmit antennas N_t
    #[arg(long)]
    nt: Option<String>,
    /// Receive antennas per user N_r
    #[arg(long)]
    nr: Option<String>,
    /// Streams per user d
    #[arg(long)]
    streams: Option<String>,
    /// Comma-separated user weights (default: all ones)
    #[arg(long)]
    weights: Option<String>,
    /// Comma-separated SNR list in dB; convergence mode uses the first entry
    #[arg(long = "snr-db")]
    snr_db: Option<String>,
    /// Channel realizations per SNR point
    #[arg(long)]
    realizations: Option<String>,
    /// Swarm size S
    #[arg(long = "swarm-size")]
    swarm_size: Option<String>,
    /// PSO iterations K_max
    #[arg(long)]
    iters: Option<String>,
    /// Master seed
    #[arg(long)]
    seed: Option<String>,
    /// Output CSV path
    #[arg(long)]
    out: Option<String>,
    /// scalar | per-entry
    #[arg(long = "r-mode")]
    r_mode: Option<String>,
    /// Stop once the global best stalls for 100 iterations
    #[arg(long = "plateau-stop", num_args = 0..=1, default_missing_value = "true")]
    plateau_stop: Option<String>,
    /// Inertia weight
    #[arg(long)]
    c0: Option<String>,
    /// Cognitive weight
    #[arg(long)]
    c1: Option<String>,
    /// Social weight
    #[arg(long)]
    c2: Option<String>,
}

const KEYS: [&str; 17] = [
    "mode", "users", "nt", "nr", "streams", "weights", "snr-db", "realizations", "swarm-size", "iters", "seed",
    "out", "r-mode", "plateau-stop", "c0", "c1", "c2",
];

fn normalize_key(key: &str) -> String {
    key.trim().chars().filter(|c| *c != '-' && *c != '_').flat_map(char::to_lowercase).collect()
}

fn canonical_key(key: &str) -> Option<&'static str> {
    let norm = normalize_key(key);
    KEYS.iter().copied().find(|k| normalize_key(k) == norm)
}

/// Parses a flat `key=value` config. Blank lines and `#` comments are
/// skipped; keys accept dashes, underscores or neither.
pub fn parse_config(text: &str) -> Result<Vec<(&'static str, String)>, Vec<String>> {
    let mut entries = Vec::new();
    let mut errors = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match line.split_once('=') {
            Some((key, value)) => match canonical_key(key) {
                Some(k) => entries.push((k, value.trim().to_string())),
                None => errors.push(format!("config line {}: unknown key '{}'", n + 1, key.trim())),
            },
            None => errors.push(format!("config line {}: expected key=value, got '{line}'", n + 1)),
        }
    }
    if errors.is_empty() {
        Ok(entries)
    } else {
        Err(errors)
    }
}

fn parse_list(key: &str, raw: &str) -> Result<Vec<f64>, String> {
    raw.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| format!("{key}: '{}' is not a number", s.trim())))
        .collect()
}

fn parse_bool(key: &str, raw: &str) -> Result<bool, String> {
    match raw.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        other => Err(format!("{key}: expected true or false, got '{other}'")),
    }
}

/// Builds an [`ExperimentSpec`] from command-line arguments (program name
/// first) and the optional `--config` file.
pub fn parse_spec<I, T>(args: I) -> Result<ExperimentSpec, HarnessError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| match e.kind() {
        clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
            HarnessError::Info(e.to_string())
        }
        _ => HarnessError::Validation(vec![e.to_string()]),
    })?;

    let mut values: Vec<(&'static str, String)> = Vec::new();
    if let Some(path) = &cli.config {
        let text = fs::read_to_string(path).map_err(|source| HarnessError::Io { path: path.clone(), source })?;
        values = parse_config(&text).map_err(HarnessError::Validation)?;
    }
    let overrides = [
        ("mode", &cli.mode),
        ("users", &cli.users),
        ("nt", &cli.nt),
        ("nr", &cli.nr),
        ("streams", &cli.streams),
        ("weights", &cli.weights),
        ("snr-db", &cli.snr_db),
        ("realizations", &cli.realizations),
        ("swarm-size", &cli.swarm_size),
        ("iters", &cli.iters),
        ("seed", &cli.seed),
        ("out", &cli.out),
        ("r-mode", &cli.r_mode),
        ("plateau-stop", &cli.plateau_stop),
        ("c0", &cli.c0),
        ("c1", &cli.c1),
        ("c2", &cli.c2),
    ];
    for (key, value) in overrides {
        if let Some(v) = value {
            values.push((key, v.clone()));
        }
    }
    // last occurrence wins: config lines in order, then flags
    let get = |key: &str| values.iter().rev().find(|(k, _)| *k == key).map(|(_, v)| v.as_str());
    build_spec(get)
}

fn build_spec<'a>(get: impl Fn(&str) -> Option<&'a str>) -> Result<ExperimentSpec, HarnessError> {
    let mut errors = Vec::new();

    fn field<T: FromStr>(errors: &mut Vec<String>, key: &str, raw: Option<&str>, default: T) -> T {
        match raw {
            None => default,
            Some(s) => s.trim().parse().unwrap_or_else(|_| {
                errors.push(format!("{key}: cannot parse '{s}'"));
                default
            }),
        }
    }

    let mode = match get("mode") {
        None => {
            errors.push("mode: required (convergence or sweep)".to_string());
            Mode::Sweep
        }
        Some(s) => s.parse().unwrap_or_else(|e| {
            errors.push(e);
            Mode::Sweep
        }),
    };
    let out_path = match get("out") {
        Some(s) if !s.trim().is_empty() => PathBuf::from(s.trim()),
        _ => {
            errors.push("out: required output path".to_string());
            PathBuf::new()
        }
    };
    let users = field(&mut errors, "users", get("users"), 3usize);
    let tx_antennas = field(&mut errors, "nt", get("nt"), 6usize);
    let rx_antennas = field(&mut errors, "nr", get("nr"), 2usize);
    let streams = field(&mut errors, "streams", get("streams"), 1usize);
    let weights = match get("weights") {
        None => vec![1.0; users],
        Some(s) => parse_list("weights", s).unwrap_or_else(|e| {
            errors.push(e);
            vec![1.0; users]
        }),
    };
    let snr_db_list = match get("snr-db") {
        None if mode == Mode::Convergence => vec![DEFAULT_CONVERGENCE_SNR_DB],
        None => DEFAULT_SWEEP_SNR_DB.to_vec(),
        Some(s) => parse_list("snr-db", s).unwrap_or_else(|e| {
            errors.push(e);
            Vec::new()
        }),
    };
    let defaults = PsoParams::default();
    let pso = PsoParams {
        swarm_size: field(&mut errors, "swarm-size", get("swarm-size"), defaults.swarm_size),
        max_iters: field(&mut errors, "iters", get("iters"), defaults.max_iters),
        c0: field(&mut errors, "c0", get("c0"), defaults.c0),
        c1: field(&mut errors, "c1", get("c1"), defaults.c1),
        c2: field(&mut errors, "c2", get("c2"), defaults.c2),
        r_mode: match get("r-mode") {
            None => defaults.r_mode,
            Some(s) => parse_r_mode(s).unwrap_or_else(|e| {
                errors.push(e);
                defaults.r_mode
            }),
        },
        plateau_stop: match get("plateau-stop") {
            None => false,
            Some(s) => parse_bool("plateau-stop", s).unwrap_or_else(|e| {
                errors.push(e);
                false
            }),
        },
    };
    let n_realizations = field(&mut errors, "realizations", get("realizations"), 20usize);
    let master_seed = field(&mut errors, "seed", get("seed"), 1u64);

    let spec = ExperimentSpec {
        system: SystemConfig { users, tx_antennas, rx_antennas, streams, noise_power: 1.0, p_max: 1.0, weights },
        snr_db_list,
        n_realizations,
        pso,
        master_seed,
        mode,
        out_path,
    };
    if errors.is_empty() {
        errors = spec.validate();
    }
    if errors.is_empty() {
        Ok(spec)
    } else {
        Err(HarnessError::Validation(errors))
    }
}
