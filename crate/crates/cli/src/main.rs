//! `rotorient`: simulate THz-driven orientation of CH₃I and its FID signal.

mod config;

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rotorient::checks::run_diagnostics;
use rotorient::experiments::overlay;
use rotorient::io::{read_two_columns, write_columns};
use rotorient::{fit_trace, scan_amplitude, scan_tau, Error, FitOptions, Signal, CONSTANTS_VERSION};
use serde_json::json;

use crate::config::RunConfig;

const MANIFEST: &str = "manifest.json";

#[derive(Parser)]
#[command(name = "rotorient", version, about = "THz-driven orientation of symmetric-top molecules")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config with dotted keys, or a manifest.json from an earlier run
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides output.dir)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Cap on worker threads
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override one config key, e.g. --set pulse.tau=2
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Orientation trace and FID signal on the output grid
    Simulate,
    /// Revival-channel peaks as a function of pulse amplitude or duration
    Scan {
        #[arg(value_enum)]
        parameter: ScanParameter,
        /// Comma separated values (kV/cm for amplitude, ps for tau)
        #[arg(long, value_delimiter = ',', num_args = 1.., conflicts_with = "range")]
        values: Vec<f64>,
        /// start:stop:step, inclusive of stop
        #[arg(long)]
        range: Option<String>,
    },
    /// Least-squares scale and offset of the simulated FID against measured data
    Fit {
        /// Two-column CSV: delay_ps, signal
        #[arg(long)]
        data: PathBuf,
        /// Also search a time shift within ±this many ps
        #[arg(long)]
        max_shift: Option<f64>,
    },
    /// Run the numerical oracle suite
    Check,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScanParameter {
    Amplitude,
    Tau,
}

/// Exit code 2 for bad input, 1 for everything else.
enum Failure {
    Input(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<Error>() {
            Some(Error::Domain(_) | Error::Config(_) | Error::Truncation { .. } | Error::Parse { .. }) => {
                Failure::Input(e)
            }
            _ => Failure::Runtime(e),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

fn input(e: anyhow::Error) -> Failure {
    Failure::Input(e)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let Common { config, out, threads, overrides } = cli.common;
    if let Some(n) = threads {
        if n == 0 {
            return Err(input(anyhow!("--threads must be >= 1")));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Runtime(e.into()))?;
    }
    let mut cfg = RunConfig::load(config.as_deref(), &overrides).map_err(input)?;
    if let Some(dir) = out {
        cfg.output_dir = dir;
    }
    fs::create_dir_all(&cfg.output_dir)
        .with_context(|| format!("creating {}", cfg.output_dir.display()))
        .map_err(Failure::Runtime)?;

    match cli.command {
        Command::Simulate => simulate(&cfg),
        Command::Scan { parameter, values, range } => {
            let values = match range {
                Some(r) => parse_range(&r).map_err(input)?,
                None => values,
            };
            scan(&cfg, parameter, &values)
        }
        Command::Fit { data, max_shift } => fit(&cfg, &data, max_shift),
        Command::Check => check(&cfg),
    }
}

fn parse_range(text: &str) -> anyhow::Result<Vec<f64>> {
    let parts: Vec<f64> = text
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("--range expects start:stop:step, got '{text}'"))?;
    let [start, stop, step] = parts[..] else {
        bail!("--range expects start:stop:step, got '{text}'");
    };
    if !(step > 0.0) || stop < start {
        bail!("--range needs step > 0 and stop >= start");
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| start + i as f64 * step).collect())
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .with_context(|| format!("creating {}", path.display()))
        .map_err(Failure::Runtime)
}

fn write_manifest(cfg: &RunConfig, command: &str, arguments: serde_json::Value, outputs: &[&str]) -> Result<(), Failure> {
    let manifest = json!({
        "command": command,
        "arguments": arguments,
        "program_version": env!("CARGO_PKG_VERSION"),
        "constants_version": CONSTANTS_VERSION,
        "config": cfg.entries(),
        "outputs": outputs,
    });
    let out = create(&cfg.output_dir, MANIFEST)?;
    serde_json::to_writer_pretty(out, &manifest).map_err(|e| Failure::Runtime(e.into()))
}

fn write_json(cfg: &RunConfig, name: &str, value: serde_json::Value) -> Result<(), Failure> {
    let out = create(&cfg.output_dir, name)?;
    serde_json::to_writer_pretty(out, &value).map_err(|e| Failure::Runtime(e.into()))
}

fn simulate(cfg: &RunConfig) -> Result<(), Failure> {
    let (trace, signal) = cfg.sim.simulate()?;
    trace.write_csv(create(&cfg.output_dir, "orientation.csv")?, Some(MANIFEST))?;
    signal.write_csv(create(&cfg.output_dir, "fid.csv")?, "fid_kv_per_cm", Some(MANIFEST))?;
    write_manifest(cfg, "simulate", json!({}), &["orientation.csv", "fid.csv"])?;
    let peak = trace.peak_abs();
    println!(
        "wrote {} samples to {}; max |<cos theta>| = {:.4e} (dimensionless)",
        trace.len(),
        cfg.output_dir.display(),
        peak
    );
    Ok(())
}

fn scan(cfg: &RunConfig, parameter: ScanParameter, values: &[f64]) -> Result<(), Failure> {
    if values.is_empty() {
        return Err(input(anyhow!("scan needs at least one value (--values or --range)")));
    }
    let (name, unit) = match parameter {
        ScanParameter::Amplitude => ("amplitude", "kV/cm"),
        ScanParameter::Tau => ("tau", "ps"),
    };
    let total = values.len();
    let progress = |i: usize, v: f64| eprintln!("[{}/{total}] {name} = {v} {unit} done", i + 1);
    let result = match parameter {
        ScanParameter::Amplitude => scan_amplitude(&cfg.sim, values, &progress)?,
        ScanParameter::Tau => scan_tau(&cfg.sim, values, &progress)?,
    };
    let file = format!("scan_{name}.json");
    write_json(cfg, &file, json!({ "manifest": MANIFEST, "result": result }))?;
    write_manifest(cfg, "scan", json!({ "parameter": name, "values": values }), &[&file])?;
    for ch in &result.channels {
        let argmax = ch.argmax.map_or("-".into(), |a| format!("{a} {unit}"));
        let slope = ch.slope.map_or("-".into(), |s| format!("{s:.4e}"));
        let r2 = ch.r_squared.map_or("-".into(), |r| format!("{r:.6}"));
        println!("{:<12} argmax {argmax:<12} slope {slope} per {unit}  R^2 {r2}", ch.name);
    }
    Ok(())
}

fn fit(cfg: &RunConfig, data_path: &Path, max_shift: Option<f64>) -> Result<(), Failure> {
    if let Some(s) = max_shift {
        if !(s > 0.0) {
            return Err(input(anyhow!("--max-shift must be > 0, got {s}")));
        }
    }
    let file = File::open(data_path)
        .with_context(|| format!("opening {}", data_path.display()))
        .map_err(input)?;
    let (t, y) = read_two_columns(std::io::BufReader::new(file))
        .map_err(|e| Failure::from(anyhow::Error::from(e).context(format!("reading {}", data_path.display()))))?;
    let data = Signal::new(t, y)?;

    let (_, model) = cfg.sim.simulate()?;
    let options = FitOptions { max_time_shift_ps: max_shift };
    let result = fit_trace(&model, &data, &options)?;
    let (time, scaled, measured) = overlay(&model, &data, &result);

    model.write_csv(create(&cfg.output_dir, "fid.csv")?, "fid_kv_per_cm", Some(MANIFEST))?;
    write_columns(
        create(&cfg.output_dir, "overlay.csv")?,
        &["time_ps", "model_scaled_data_units", "data_data_units"],
        &[&time, &scaled, &measured],
        Some(MANIFEST),
    )?;
    write_json(cfg, "fit.json", json!({ "manifest": MANIFEST, "result": result }))?;
    write_manifest(
        cfg,
        "fit",
        json!({ "data": data_path.display().to_string(), "max_shift_ps": max_shift }),
        &["fid.csv", "overlay.csv", "fit.json"],
    )?;
    println!(
        "scale {:.6e} (data units per kV/cm), offset {:.6e} (data units), residual rms {:.6e} (data units), shift {} ps over {} samples",
        result.scale, result.offset, result.residual_rms, result.time_shift_ps, result.samples
    );
    Ok(())
}

fn check(cfg: &RunConfig) -> Result<(), Failure> {
    let outcomes = run_diagnostics(&cfg.sim);
    for c in &outcomes {
        let status = if c.passed { "PASS" } else { "FAIL" };
        let value = match (c.measured, c.threshold) {
            (Some(m), Some(t)) => format!("measured {m:.3e} (limit {t:.1e})"),
            _ => String::new(),
        };
        println!("{status} {:<22} {value}  {}", c.name, c.detail);
    }
    write_json(cfg, "check.json", json!({ "manifest": MANIFEST, "checks": outcomes }))?;
    write_manifest(cfg, "check", json!({}), &["check.json"])?;
    let failed = outcomes.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(Failure::Runtime(anyhow!("{failed} of {} checks failed", outcomes.len())));
    }
    Ok(())
}
