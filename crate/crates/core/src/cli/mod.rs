//! Command-line front end: config loading, command execution and result files.

mod output;
mod selftest;

pub use output::{
    write_json, write_record, write_sweep, write_timeseries, OutputFormat, SCHEMA_VERSION, SWEEP_COLUMNS,
    TIMESERIES_COLUMNS,
};
pub use selftest::{run_selftest, SelfCheck};

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{estimate_k_factor, rician_envelopes, KFactorEstimate};
use crate::error::{Error, Result};
use crate::scenario::{run_v2x_scenario, summarize, sweep_ber_vs_snr, ScenarioConfig, MIN_SWEEP_BITS};

pub const TOOL_NAME: &str = env!("CARGO_PKG_NAME");
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Parses TOML config text. Absent fields take the testbed defaults.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let de = toml::Deserializer::parse(text).map_err(|e| Error::config("<document>", e.to_string()))?;
    let cfg: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let field = if path == "." { "<document>".to_string() } else { path };
        Error::config(field, e.into_inner().to_string().trim_end())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// Reads and validates a TOML config file.
pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

pub fn config_to_toml(cfg: &ScenarioConfig) -> Result<String> {
    toml::to_string(cfg).map_err(|e| Error::invalid(format!("cannot serialize config: {e}")))
}

pub fn save_config(cfg: &ScenarioConfig, path: &Path) -> Result<()> {
    std::fs::write(path, config_to_toml(cfg)?).map_err(|e| Error::io(path, e))
}

/// SHA-256 of the canonical TOML form of `cfg`, as lowercase hex.
pub fn config_digest(cfg: &ScenarioConfig) -> Result<String> {
    let digest = Sha256::digest(config_to_toml(cfg)?.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Parses `a,b,c` lists and inclusive `start:step:stop` ranges, which may
/// be mixed. `-inf` selects a noise-only point.
pub fn parse_snr_grid(text: &str) -> Result<Vec<f64>> {
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::invalid(format!("bad SNR value `{}`", s.trim())))
    };
    let mut grid = Vec::new();
    for part in text.split(',').filter(|p| !p.trim().is_empty()) {
        let fields: Vec<&str> = part.split(':').collect();
        match fields.as_slice() {
            [v] => grid.push(num(v)?),
            [start, step, stop] => {
                let (start, step, stop) = (num(start)?, num(step)?, num(stop)?);
                if !(step > 0.0 && start.is_finite() && stop.is_finite()) {
                    return Err(Error::invalid(format!("bad SNR range `{part}`")));
                }
                let n = ((stop - start) / step + 1e-9).floor();
                if !(0.0..=10_000.0).contains(&n) {
                    return Err(Error::invalid(format!("bad SNR range `{part}`")));
                }
                grid.extend((0..=n as usize).map(|i| start + i as f64 * step));
            }
            _ => return Err(Error::invalid(format!("bad SNR grid entry `{part}`"))),
        }
    }
    if grid.is_empty() {
        return Err(Error::invalid("empty SNR grid"));
    }
    Ok(grid)
}

/// Record of one command invocation, written next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    pub config_digest: String,
    pub seed: u64,
    pub format: String,
    pub started_at: String,
    pub finished_at: String,
    pub outputs: Vec<String>,
    /// Command options beyond the config, such as the SNR grid.
    pub parameters: serde_json::Value,
    /// The effective config in TOML form.
    pub config: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum KSource {
    File(PathBuf),
    Synthetic { rician_k: f64, samples: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    RunScenario,
    SweepBer { snr_grid_db: Vec<f64>, min_bits: u64 },
    EstimateK(KSource),
    Selftest,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::RunScenario => "run-scenario",
            Command::SweepBer { .. } => "sweep-ber",
            Command::EstimateK(_) => "estimate-k",
            Command::Selftest => "selftest",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct KFactorRecord {
    k: f64,
    non_centrality: f64,
    scale: f64,
    log_likelihood: f64,
    samples: usize,
}

/// Reads whitespace- or comma-separated envelope values; `#` starts a comment.
pub fn read_envelopes(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut values = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("");
        for tok in line.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()) {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::invalid(format!("{}:{}: bad number `{tok}`", path.display(), n + 1)))?;
            values.push(v);
        }
    }
    Ok(values)
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Runs `command` with `cfg`, writes its outputs and `manifest.json` into
/// `out_dir`, and returns the manifest.
pub fn execute(command: &Command, cfg: &ScenarioConfig, out_dir: &Path, format: OutputFormat) -> Result<RunManifest> {
    let started_at = now();
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let ext = format.extension();
    let mut outputs = Vec::new();
    let mut parameters = serde_json::json!({});
    match command {
        Command::RunScenario => {
            let run = run_v2x_scenario(cfg)?;
            let series_path = out_dir.join(format!("timeseries.{ext}"));
            write_timeseries(&run.series, format, &series_path)?;
            let summary_path = out_dir.join("summary.json");
            write_json(&summarize(&run, cfg.outage_threshold_db)?, &summary_path)?;
            outputs.extend([series_path, summary_path]);
        }
        Command::SweepBer { snr_grid_db, min_bits } => {
            let curve = sweep_ber_vs_snr(cfg, snr_grid_db, *min_bits, cfg.seed)?;
            let path = out_dir.join(format!("sweep.{ext}"));
            write_sweep(&curve, format, &path)?;
            outputs.push(path);
            let grid: Vec<String> = snr_grid_db.iter().map(f64::to_string).collect();
            parameters = serde_json::json!({ "snr_grid_db": grid, "min_bits": min_bits });
        }
        Command::EstimateK(source) => {
            let envelopes = match source {
                KSource::File(path) => {
                    parameters = serde_json::json!({ "input": path.display().to_string() });
                    read_envelopes(path)?
                }
                KSource::Synthetic { rician_k, samples } => {
                    parameters = serde_json::json!({ "synthetic_k": rician_k, "samples": samples });
                    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                    rician_envelopes(*rician_k, *samples, &mut rng)?
                }
            };
            let KFactorEstimate {
                k,
                non_centrality,
                scale,
                log_likelihood,
            } = estimate_k_factor(&envelopes)?;
            let path = out_dir.join(format!("kfactor.{ext}"));
            let record = KFactorRecord {
                k,
                non_centrality,
                scale,
                log_likelihood,
                samples: envelopes.len(),
            };
            write_record(&record, format, &path)?;
            outputs.push(path);
        }
        Command::Selftest => {
            let checks = run_selftest();
            let path = out_dir.join(format!("selftest.{ext}"));
            write_rows_selftest(&checks, format, &path)?;
            outputs.push(path);
            if let Some(failed) = checks.iter().find(|c| !c.passed) {
                return Err(Error::EstimationFailed(format!(
                    "selftest `{}` failed: {}",
                    failed.name, failed.detail
                )));
            }
        }
    }
    let manifest = RunManifest {
        schema_version: SCHEMA_VERSION,
        tool: TOOL_NAME.to_string(),
        tool_version: TOOL_VERSION.to_string(),
        command: command.name().to_string(),
        config_digest: config_digest(cfg)?,
        seed: cfg.seed,
        format: format!("{format:?}").to_lowercase(),
        started_at,
        finished_at: now(),
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        parameters,
        config: config_to_toml(cfg)?,
    };
    write_json(&manifest, &out_dir.join("manifest.json"))?;
    Ok(manifest)
}

fn write_rows_selftest(checks: &[SelfCheck], format: OutputFormat, path: &Path) -> Result<()> {
    match format {
        OutputFormat::Text => {
            let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e))?;
            for c in checks {
                w.serialize(c).map_err(|e| Error::io(path, e))?;
            }
            w.flush().map_err(|e| Error::io(path, e))
        }
        OutputFormat::Records => {
            let mut text = String::new();
            for c in checks {
                text.push_str(&serde_json::to_string(c).map_err(|e| Error::io(path, e))?);
                text.push('\n');
            }
            std::fs::write(path, text).map_err(|e| Error::io(path, e))
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "noma-v2x", version, about = "Downlink power-domain NOMA OFDM link simulator for moving vehicles")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML scenario config; absent fields take the testbed defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "noma-v2x-out")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    pub format: OutputFormat,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Replay the stationary and mobile stages and write the per-symbol time series.
    RunScenario {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Monte Carlo BER against SNR under mobile-stage conditions.
    SweepBer {
        #[command(flatten)]
        common: CommonArgs,
        /// SNR points in dB: `0,10,20`, `0:5:40` or a mix; `-inf` for noise only.
        #[arg(long, default_value = "0:5:50", allow_hyphen_values = true)]
        snr_grid: String,
        /// Bits per user and SNR point from detected frames.
        #[arg(long, default_value_t = MIN_SWEEP_BITS)]
        min_bits: u64,
    },
    /// Maximum-likelihood Rician K-factor of an envelope file or a synthetic draw.
    EstimateK {
        #[command(flatten)]
        common: CommonArgs,
        /// Text file of envelope magnitudes.
        #[arg(long, conflicts_with_all = ["k", "samples"])]
        input: Option<PathBuf>,
        /// K of the synthetic envelopes.
        #[arg(long, default_value_t = 10.92)]
        k: f64,
        /// Number of synthetic envelopes.
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
    },
    /// Check the basic invariants of the codec, SIC and metrics.
    Selftest {
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn print_summary(command: &Command, manifest: &RunManifest) {
    println!("{} finished; outputs:", command.name());
    for o in &manifest.outputs {
        println!("  {o}");
    }
}

/// Parses `args` (including the program name), runs the command and reports
/// failures on stderr.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run_cli(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run_cli(cli: Cli) -> Result<()> {
    let (common, command) = match cli.command {
        CliCommand::RunScenario { common } => (common, Command::RunScenario),
        CliCommand::SweepBer {
            common,
            snr_grid,
            min_bits,
        } => (
            common,
            Command::SweepBer {
                snr_grid_db: parse_snr_grid(&snr_grid)?,
                min_bits,
            },
        ),
        CliCommand::EstimateK {
            common,
            input,
            k,
            samples,
        } => {
            let source = match input {
                Some(path) => KSource::File(path),
                None => KSource::Synthetic { rician_k: k, samples },
            };
            (common, Command::EstimateK(source))
        }
        CliCommand::Selftest { common } => (common, Command::Selftest),
    };
    let mut cfg = match &common.config {
        Some(path) => load_config(path)?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Command::Selftest = command {
        for c in run_selftest() {
            println!("{} {}: {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail);
        }
    }
    let manifest = execute(&command, &cfg, &common.out, common.format)?;
    if let Command::EstimateK(_) = command {
        let path = Path::new(&manifest.outputs[0]);
        println!("{}", std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?.trim_end());
    }
    print_summary(&command, &manifest);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_default() {
        assert_eq!(parse_config("").unwrap(), ScenarioConfig::default());
    }

    #[test]
    fn toml_roundtrip() {
        let cfg = ScenarioConfig::default();
        assert_eq!(parse_config(&config_to_toml(&cfg).unwrap()).unwrap(), cfg);
        let ideal = ScenarioConfig::ideal();
        assert_eq!(parse_config(&config_to_toml(&ideal).unwrap()).unwrap(), ideal);
    }

    #[test]
    fn diagnostics_name_the_field() {
        let err = parse_config("speed_mps = \"fast\"").unwrap_err();
        assert!(matches!(&err, Error::Config { field, .. } if field == "speed_mps"), "{err}");
        let err = parse_config("[channel]\nrician_kk = 3.0").unwrap_err();
        assert!(err.to_string().contains("rician_kk"), "{err}");
        let err = parse_config("[allocation]\npolicy = \"fixed\"\ncoefficients = [0.6, 0.2, 0.1]").unwrap_err();
        assert!(matches!(&err, Error::Config { field, .. } if field == "allocation.coefficients"), "{err}");
        let err = parse_config("[[users]]\nstart_distance_m = -4.0\nend_distance_m = 1.0").unwrap_err();
        assert!(matches!(&err, Error::Config { field, .. } if field == "users[0].start_distance_m"), "{err}");
    }

    #[test]
    fn digest_tracks_content() {
        let a = ScenarioConfig::default();
        let mut b = a.clone();
        assert_eq!(config_digest(&a).unwrap(), config_digest(&b).unwrap());
        b.seed = 2;
        assert_ne!(config_digest(&a).unwrap(), config_digest(&b).unwrap());
        assert_eq!(config_digest(&a).unwrap().len(), 64);
    }

    #[test]
    fn snr_grid_forms() {
        assert_eq!(parse_snr_grid("0,5,10").unwrap(), vec![0.0, 5.0, 10.0]);
        assert_eq!(parse_snr_grid("0:10:30").unwrap(), vec![0.0, 10.0, 20.0, 30.0]);
        assert_eq!(parse_snr_grid("-inf,20").unwrap(), vec![f64::NEG_INFINITY, 20.0]);
        assert!(parse_snr_grid("0:0:10").is_err());
        assert!(parse_snr_grid("x").is_err());
        assert!(parse_snr_grid("").is_err());
    }
}
