//! Command-line harness: generate data, run the chain, sweep parameters,
//! compare engines, and emit plot-ready exports.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime error.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::arith::FixedConfig;
use crate::chain::{
    self, ComparisonRecord, RunConfig, RunOutcome, SweepGrid, Tap,
};
use crate::error::{Error, Result};
use crate::io::{self, WaveformFormat};
use crate::lms::Engine;
use crate::signal::generate_pulse;

#[derive(Debug, Parser)]
#[command(
    name = "lms-anc",
    version,
    about = "Streaming LMS noise-cancellation simulator for pulsed readout signals"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate clean/noisy pulse waveform files without running the filter
    Gen(RunArgs),
    /// Execute the full chain and write a report plus recorded waveforms
    Run(RunArgs),
    /// Run one chain per grid point over mu / taps / noise-sigma values
    Sweep(SweepArgs),
    /// Run the same config on both engines and report the output deviation
    CompareEngines(RunArgs),
    /// Compare live LMS filtering against ensemble averaging alone
    ComparePostproc(RunArgs),
    /// Summarize a previously written run report
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct ConfigSource {
    /// Path to a run-config JSON file
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Name of an embedded preset (available: fig4)
    #[arg(long)]
    preset: Option<String>,
    /// Override the config's PRNG seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the arithmetic engine
    #[arg(long, value_parser = ["float", "fixed"])]
    engine: Option<String>,
    /// Comma-separated stream taps to record (subset of x,d,y,e,w)
    #[arg(long, value_delimiter = ',')]
    record: Option<Vec<String>>,
}

impl ConfigSource {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), None) => io::read_json::<RunConfig>(path)?,
            (None, Some(name)) => RunConfig::preset(name)?,
            (None, None) => {
                return Err(Error::invalid_config(
                    "config",
                    "either --config PATH or --preset NAME is required",
                ))
            }
            (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        match self.engine.as_deref() {
            Some("float") => cfg.lms.engine = Engine::Float64,
            Some("fixed") => {
                if !matches!(cfg.lms.engine, Engine::Fixed(_)) {
                    cfg.lms.engine = Engine::Fixed(FixedConfig::default());
                }
            }
            _ => {}
        }
        if let Some(names) = &self.record {
            cfg.record = names
                .iter()
                .map(|n| Tap::parse(n))
                .collect::<Result<_>>()?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    source: ConfigSource,
    /// Output directory for artifacts
    #[arg(short, long, default_value = "out")]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    source: ConfigSource,
    #[arg(short, long, default_value = "out")]
    output: PathBuf,
    /// Learning-rate grid values
    #[arg(long, value_delimiter = ',')]
    mu: Vec<f64>,
    /// Tap-count grid values
    #[arg(long, value_delimiter = ',')]
    taps: Vec<usize>,
    /// Noise-sigma grid values
    #[arg(long, value_delimiter = ',')]
    sigma: Vec<f64>,
    /// Parallel grid-point workers
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Path to a report.json produced by `run`
    #[arg(long)]
    input: PathBuf,
}

/// Sweep description as a config file: a base run plus grid axes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    pub base: RunConfig,
    #[serde(default)]
    pub grid: SweepGrid,
}

/// Parse `argv` and execute. Returns the process exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap handles --help/--version with success exits
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                1
            } else {
                2
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(args) => cmd_gen(&args),
        Command::Run(args) => cmd_run(&args),
        Command::Sweep(args) => cmd_sweep(&args),
        Command::CompareEngines(args) => cmd_compare_engines(&args),
        Command::ComparePostproc(args) => cmd_compare_postproc(&args),
        Command::Report(args) => cmd_report(&args),
    }
}

fn waveform_format(cfg: &RunConfig) -> WaveformFormat {
    match &cfg.lms.engine {
        Engine::Fixed(fc) if fc.sample_format.total_bits <= 16 => WaveformFormat::I16 {
            frac_bits: fc.sample_format.frac_bits as u8,
        },
        _ => WaveformFormat::F32,
    }
}

/// Stage all artifact bytes first, then write each atomically; on failure
/// remove whatever was already placed so no partial output set survives.
fn write_artifacts(dir: &Path, artifacts: Vec<(PathBuf, Vec<u8>)>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written: Vec<PathBuf> = Vec::new();
    for (path, bytes) in artifacts {
        if let Err(e) = io::atomic_write(&path, &bytes) {
            for prev in written {
                let _ = fs::remove_file(prev);
            }
            return Err(e);
        }
        written.push(path);
    }
    Ok(())
}

fn outcome_artifacts(cfg: &RunConfig, outcome: &RunOutcome, dir: &Path) -> Result<Vec<(PathBuf, Vec<u8>)>> {
    let mut artifacts = Vec::new();
    let mut report_json = serde_json::to_string_pretty(&outcome.report).map_err(|e| Error::Json {
        path: dir.join("report.json").display().to_string(),
        source: e,
    })?;
    report_json.push('\n');
    artifacts.push((dir.join("report.json"), report_json.into_bytes()));

    let format = waveform_format(cfg);
    let rate = cfg.pulse.sample_rate as u32;
    for (tap, frames) in &outcome.waveforms {
        // weight snapshots are not sample streams; always store them as f32
        let fmt = if *tap == Tap::W { WaveformFormat::F32 } else { format };
        let bytes = io::encode_waveform(frames, fmt, rate)?;
        artifacts.push((dir.join(format!("{}.lmsw", tap.name())), bytes));
    }

    let csv_taps: Vec<Tap> = [Tap::X, Tap::D, Tap::Y, Tap::E]
        .into_iter()
        .filter(|t| outcome.waveforms.contains_key(t))
        .collect();
    if !csv_taps.is_empty() {
        let csv = io::export_csv(&outcome.waveforms, &csv_taps, cfg.pulse.sample_rate)?;
        artifacts.push((dir.join("waveforms.csv"), csv.into_bytes()));
    }
    Ok(artifacts)
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let cfg = args.source.load()?;
    let outcome = chain::run(&cfg)?;
    let artifacts = outcome_artifacts(&cfg, &outcome, &args.output)?;
    write_artifacts(&args.output, artifacts)?;
    let last = outcome.report.pulses.last().expect("pulses >= 1");
    println!(
        "run complete: {} pulses, final error power {:.6e}, converged at {:?}, stability {:?}",
        outcome.report.pulses.len(),
        last.error_power,
        outcome.report.converged_at,
        outcome.report.stability
    );
    println!("artifacts written to {}", args.output.display());
    Ok(())
}

fn cmd_gen(args: &RunArgs) -> Result<()> {
    let cfg = args.source.load()?;
    let mut clean_frames = Vec::new();
    let mut noisy_frames = Vec::new();
    for k in 0..cfg.pulses {
        let (clean, noisy) = generate_pulse(&cfg.pulse, cfg.seed, k)?;
        clean_frames.push(clean);
        noisy_frames.push(noisy);
    }
    let rate = cfg.pulse.sample_rate as u32;
    let artifacts = vec![
        (
            args.output.join("clean.lmsw"),
            io::encode_waveform(&clean_frames, WaveformFormat::F32, rate)?,
        ),
        (
            args.output.join("noisy.lmsw"),
            io::encode_waveform(&noisy_frames, WaveformFormat::F32, rate)?,
        ),
    ];
    write_artifacts(&args.output, artifacts)?;
    println!(
        "generated {} pulses of {} samples into {}",
        cfg.pulses,
        cfg.pulse.frame_len(),
        args.output.display()
    );
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    // A sweep config file may carry its own grid; flags extend/override it.
    let (base, mut grid) = if let Some(path) = &args.source.config {
        let sc: SweepConfig = io::read_json(path)?;
        let mut source_no_file = ConfigSource {
            config: None,
            preset: None,
            seed: args.source.seed,
            engine: args.source.engine.clone(),
            record: args.source.record.clone(),
        };
        let base = apply_overrides(sc.base, &mut source_no_file)?;
        (base, sc.grid)
    } else {
        (args.source.load()?, SweepGrid::default())
    };
    if !args.mu.is_empty() {
        grid.mu = args.mu.clone();
    }
    if !args.taps.is_empty() {
        grid.taps = args.taps.clone();
    }
    if !args.sigma.is_empty() {
        grid.noise_sigma = args.sigma.clone();
    }

    let table = if args.jobs > 1 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(args.jobs)
            .build()
            .map_err(|e| Error::invalid_config("jobs", e.to_string()))?
            .install(|| chain::sweep(&base, &grid))?
    } else {
        chain::sweep(&base, &grid)?
    };
    write_artifacts(
        &args.output,
        vec![(
            args.output.join("sweep.json"),
            to_json_bytes(&table, &args.output.join("sweep.json"))?,
        )],
    )?;
    println!("sweep complete: {} grid points -> {}", table.rows.len(), args.output.display());
    for row in &table.rows {
        println!(
            "  mu={:<10} taps={:<4} sigma={:<6} stability={:?} final_error_power={:?}",
            row.mu, row.taps, row.noise_sigma, row.stability, row.final_error_power
        );
    }
    Ok(())
}

fn apply_overrides(mut cfg: RunConfig, source: &mut ConfigSource) -> Result<RunConfig> {
    if let Some(seed) = source.seed {
        cfg.seed = seed;
    }
    match source.engine.as_deref() {
        Some("float") => cfg.lms.engine = Engine::Float64,
        Some("fixed") => {
            if !matches!(cfg.lms.engine, Engine::Fixed(_)) {
                cfg.lms.engine = Engine::Fixed(FixedConfig::default());
            }
        }
        _ => {}
    }
    if let Some(names) = &source.record {
        cfg.record = names.iter().map(|n| Tap::parse(n)).collect::<Result<_>>()?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Result of running the same config on both arithmetic engines.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EngineComparison {
    pub config: RunConfig,
    /// Largest per-sample deviation of the fixed-engine error signal from
    /// the float-engine error signal over the whole run.
    pub max_abs_e_diff: f64,
    pub float_final_error_power: f64,
    pub fixed_final_error_power: f64,
}

pub fn compare_engines(cfg: &RunConfig) -> Result<EngineComparison> {
    let mut float_cfg = cfg.clone();
    float_cfg.lms.engine = Engine::Float64;
    float_cfg.record.insert(Tap::E);
    let mut fixed_cfg = cfg.clone();
    if !matches!(fixed_cfg.lms.engine, Engine::Fixed(_)) {
        fixed_cfg.lms.engine = Engine::Fixed(FixedConfig::default());
    }
    fixed_cfg.record.insert(Tap::E);

    let float_out = chain::run(&float_cfg)?;
    let fixed_out = chain::run(&fixed_cfg)?;
    let mut max_diff = 0.0f64;
    for (fa, fb) in float_out.waveforms[&Tap::E].iter().zip(&fixed_out.waveforms[&Tap::E]) {
        for (&a, &b) in fa.samples.iter().zip(&fb.samples) {
            max_diff = max_diff.max((a - b).abs());
        }
    }
    Ok(EngineComparison {
        config: cfg.clone(),
        max_abs_e_diff: max_diff,
        float_final_error_power: float_out.report.pulses.last().unwrap().error_power,
        fixed_final_error_power: fixed_out.report.pulses.last().unwrap().error_power,
    })
}

fn cmd_compare_engines(args: &RunArgs) -> Result<()> {
    let cfg = args.source.load()?;
    let cmp = compare_engines(&cfg)?;
    let path = args.output.join("engine_comparison.json");
    write_artifacts(&args.output, vec![(path.clone(), to_json_bytes(&cmp, &path)?)])?;
    println!("max |e_fixed - e_float| = {:.6e}", cmp.max_abs_e_diff);
    println!("comparison written to {}", path.display());
    Ok(())
}

fn cmd_compare_postproc(args: &RunArgs) -> Result<()> {
    let cfg = args.source.load()?;
    let cmp: ComparisonRecord = chain::compare_to_postprocessing(&cfg)?;
    let path = args.output.join("postproc_comparison.json");
    write_artifacts(&args.output, vec![(path.clone(), to_json_bytes(&cmp, &path)?)])?;
    println!("pulse  lms_snr_db      ensemble_snr_db  single_shot_snr_db");
    for p in &cmp.points {
        println!(
            "{:>5}  {:>14}  {:>15}  {:>18}",
            p.pulse_index,
            fmt_snr(&p.lms_snr_db),
            fmt_snr(&p.ensemble_snr_db),
            fmt_snr(&p.single_shot_snr_db)
        );
    }
    Ok(())
}

fn cmd_report(args: &ReportArgs) -> Result<()> {
    let report: chain::RunReport = io::read_json(&args.input)?;
    println!("report {}", args.input.display());
    println!("  spec version : {}", report.spec_version);
    println!("  prng         : {}", report.prng);
    println!("  pulses       : {}", report.pulses.len());
    println!("  stability    : {:?}", report.stability);
    println!("  converged at : {:?}", report.converged_at);
    println!("  pulse  error_power    output_snr   lag  saturations  |w|");
    for p in &report.pulses {
        println!(
            "  {:>5}  {:<13.6e}  {:>10}  {:>4}  {:>11}  {:.5}",
            p.pulse_index,
            p.error_power,
            fmt_snr(&p.output_snr_db),
            p.xcorr_lag_samples,
            p.saturation_count,
            p.weight_l2_norm
        );
    }
    Ok(())
}

fn fmt_snr(v: &crate::metrics::SnrValue) -> String {
    match v {
        crate::metrics::SnrValue::Db(db) => format!("{db:.2} dB"),
        crate::metrics::SnrValue::Infinite => "inf".into(),
        crate::metrics::SnrValue::Undefined => "undef".into(),
    }
}

fn to_json_bytes<T: serde::Serialize>(value: &T, path: &Path) -> Result<Vec<u8>> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
        path: path.display().to_string(),
        source: e,
    })?;
    text.push('\n');
    Ok(text.into_bytes())
}
