//! Command definitions and their execution.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use hifid_core::{identify, run_pipeline, FeederId, NeutralType, PipelineConfig, RunReport};
use hifid_sim::corpus::{build_record, Manifest};
use hifid_sim::oracle::max_abs_difference;
use hifid_sim::{default_manifest, draws, healthy_record, ode_oracle, solve, DistortionWaveform, HealthyScenario, TRANSFORMER_ID};

use crate::config::{echo, effective_config, ConfigFlags};
use crate::csvio::{export_csv, ingest_csv, IngestDefaults};
use crate::report::{emit_plot_data, emit_report, sha256_hex, summary, ReportFormat};

pub const EXIT_COMPLETED: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NO_DETECTION: i32 = 2;
pub const EXIT_NOT_IDENTIFIED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "hifid", version, about = "High impedance fault detection and faulty feeder identification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labelled synthetic corpus as CSV files
    Synth(SynthArgs),
    /// Run detection, and identification on trigger, on a CSV record
    Detect(RunArgs),
    /// Full pipeline; optionally identify around an externally supplied trigger cycle
    Identify(IdentifyArgs),
    /// Compare closed-form neutral currents with ODE integration
    Oracle(OracleArgs),
}

#[derive(Debug, clap::Args)]
pub struct SynthArgs {
    /// Scenario manifest (TOML); the bundled 28-scenario corpus when omitted
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    /// Also write this many healthy records
    #[arg(long, default_value_t = 0)]
    pub healthy: usize,
    /// Cycles per healthy record
    #[arg(long, default_value_t = 30)]
    pub healthy_cycles: usize,
    /// Base seed of the healthy records
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Drop measurement noise and impulses from the fault scenarios
    #[arg(long)]
    pub noise_free: bool,
}

#[derive(Debug, clap::Args)]
pub struct RunArgs {
    /// Input record (CSV)
    pub input: PathBuf,
    /// Write the structured JSON report here
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Write the human summary here (it is always printed)
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// Write per-channel plot data into this directory
    #[arg(long)]
    pub plot_dir: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigFlags,
}

#[derive(Debug, clap::Args)]
pub struct IdentifyArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Identify around this cycle instead of the detected trigger
    #[arg(long)]
    pub trigger_cycle: Option<usize>,
}

#[derive(Debug, clap::Args)]
pub struct OracleArgs {
    /// resonant or low_resistor
    #[arg(long, default_value = "resonant")]
    pub neutral: String,
    #[arg(long, default_value_t = 10)]
    pub draws: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 5)]
    pub cycles: usize,
    #[arg(long, default_value_t = 6400.0)]
    pub fs: f64,
    /// Write every draw's waveforms as CSV
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Exit status of a pipeline run.
pub fn exit_code(report: &RunReport) -> i32 {
    match &report.identification {
        Some(id) if id.chosen_feeder.is_some() => EXIT_COMPLETED,
        Some(_) => EXIT_NOT_IDENTIFIED,
        None if report.trigger.is_some() => EXIT_NOT_IDENTIFIED,
        None => EXIT_NO_DETECTION,
    }
}

pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    match cli.command {
        Command::Synth(a) => synth(&a, out),
        Command::Detect(a) => analyse(&a, None, out, err),
        Command::Identify(a) => analyse(&a.run, a.trigger_cycle, out, err),
        Command::Oracle(a) => oracle(&a, out),
    }
}

fn synth(a: &SynthArgs, out: &mut dyn Write) -> Result<i32> {
    let mut manifest = match &a.manifest {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
            Manifest::parse(&text).with_context(|| format!("{}", p.display()))?
        }
        None => default_manifest(),
    };
    if a.noise_free {
        for s in &mut manifest.scenarios {
            s.snr_db = f64::INFINITY;
            s.impulse_rate = 0.0;
        }
    }
    std::fs::create_dir_all(&a.out).with_context(|| format!("cannot create {}", a.out.display()))?;
    let mut labels = csv::Writer::from_path(a.out.join("labels.csv"))?;
    labels.write_record(["file", "neutral", "faulty", "inception_cycle", "fault_rms", "impulses", "snr_db"])?;
    for s in &manifest.scenarios {
        let r = build_record(&manifest, s)?;
        let file = format!("{}.csv", r.name);
        export_csv(
            &r.record,
            &a.out.join(&file),
            &[("scenario", r.name.clone()), ("faulty", r.faulty.to_string())],
        )?;
        labels.write_record([
            file,
            r.neutral.to_string(),
            r.faulty.to_string(),
            r.inception_cycle.to_string(),
            format!("{:.4}", r.fault_rms),
            r.has_impulses.to_string(),
            r.snr_db.to_string(),
        ])?;
    }
    for k in 0..a.healthy {
        let seed = a.seed + k as u64;
        let scenario = HealthyScenario::random(seed, a.healthy_cycles);
        let rec = healthy_record(&scenario, seed)?;
        let file = format!("healthy-{k:03}.csv");
        export_csv(&rec, &a.out.join(&file), &[("faulty", "none".into())])?;
        labels.write_record([
            file,
            rec.neutral().to_string(),
            String::new(),
            String::new(),
            "0".into(),
            (scenario.impulse_rate > 0.0).to_string(),
            scenario.snr_db.to_string(),
        ])?;
    }
    labels.flush()?;
    writeln!(
        out,
        "wrote {} fault records and {} healthy records to {}",
        manifest.scenarios.len(),
        a.healthy,
        a.out.display()
    )?;
    Ok(EXIT_COMPLETED)
}

fn analyse(a: &RunArgs, forced_trigger: Option<usize>, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let config = effective_config(&a.config)?;
    let bytes = std::fs::read(&a.input).with_context(|| format!("cannot read {}", a.input.display()))?;
    let ingested = ingest_csv(
        &a.input,
        IngestDefaults {
            fs: config.fs,
            f0: config.f0,
            neutral: config.neutral,
        },
    )?;
    let record = ingested.record;
    writeln!(err, "effective configuration:\n{}", echo(&config, Some(record.samples_per_cycle())))?;

    let mut report = run_pipeline(&record, &config)?;
    report.input_digest = Some(sha256_hex(&bytes));
    if let Some(cycle) = forced_trigger {
        report.identification = Some(identify(&record, Some(cycle), &config)?);
    }
    write_outputs(&report, &record, a, out)?;
    Ok(exit_code(&report))
}

fn write_outputs(report: &RunReport, record: &hifid_core::SynchronizedRecord, a: &RunArgs, out: &mut dyn Write) -> Result<()> {
    let text = summary(report);
    out.write_all(text.as_bytes())?;
    if let Some(p) = &a.report {
        emit_report(report, p, ReportFormat::Json)?;
    }
    if let Some(p) = &a.summary {
        emit_report(report, p, ReportFormat::Summary)?;
    }
    if let Some(dir) = &a.plot_dir {
        emit_plot_data(report, record, dir)?;
    }
    Ok(())
}

/// Closed-form and integrated neutral-branch distortion of one draw, with
/// the forcing, sampled over `cycles` cycles.
pub struct OracleComparison {
    pub forcing: Vec<f64>,
    pub closed_form: Vec<f64>,
    pub integrated: Vec<f64>,
    pub forcing_peak: f64,
}

impl OracleComparison {
    pub fn relative_error(&self) -> f64 {
        max_abs_difference(&self.closed_form, &self.integrated) / self.forcing_peak
    }
}

pub fn compare_with_oracle(neutral: NeutralType, seed: u64, fs: f64, cycles: usize) -> Result<OracleComparison> {
    let (params, spec) = match neutral {
        NeutralType::Resonant | NeutralType::LowResistor => draws::draw(neutral, seed),
        NeutralType::Isolated => bail!("the isolated neutral has no dynamic branch to integrate"),
    };
    let sol = solve(&params, &spec, fs, cycles)?;
    let psi = match neutral {
        NeutralType::Resonant => spec.phi - std::f64::consts::PI,
        _ => spec.phi - params.admittance_angle()?,
    };
    let forcing = DistortionWaveform::from_spec(&spec, psi, params.omega)?;
    let integrated = ode_oracle(&params, &forcing, fs, cycles)?.into_values();
    let closed_form = sol
        .channel(&FeederId::new(TRANSFORMER_ID))
        .expect("neutral branch channel present")
        .distortion
        .clone();
    Ok(OracleComparison {
        forcing: sol.fault.distortion.clone(),
        closed_form,
        integrated,
        forcing_peak: spec.i_fm_dist,
    })
}

fn oracle(a: &OracleArgs, out: &mut dyn Write) -> Result<i32> {
    let neutral: NeutralType = a.neutral.parse()?;
    let mut dump = match &a.out {
        Some(p) => {
            let mut w = csv::Writer::from_path(p).with_context(|| format!("cannot write {}", p.display()))?;
            w.write_record(["draw", "sample", "time", "forcing", "closed_form", "ode"])?;
            Some(w)
        }
        None => None,
    };
    writeln!(out, "draw  seed        max |closed - ode| / forcing peak")?;
    let mut worst: f64 = 0.0;
    for k in 0..a.draws {
        let seed = a.seed + k as u64;
        let c = compare_with_oracle(neutral, seed, a.fs, a.cycles)?;
        let e = c.relative_error();
        worst = worst.max(e);
        writeln!(out, "{k:<5} {seed:<11} {e:.3e}{}", if e < 0.01 { "" } else { "  above 1%" })?;
        if let Some(w) = dump.as_mut() {
            for n in 0..c.closed_form.len() {
                w.write_record([
                    k.to_string(),
                    n.to_string(),
                    (n as f64 / a.fs).to_string(),
                    c.forcing[n].to_string(),
                    c.closed_form[n].to_string(),
                    c.integrated[n].to_string(),
                ])?;
            }
        }
    }
    if let Some(w) = dump.as_mut() {
        w.flush()?;
    }
    writeln!(out, "worst {worst:.3e}")?;
    Ok(EXIT_COMPLETED)
}

/// Runs the pipeline on a record file with `config`, as `detect` does.
pub fn analyse_file(path: &Path, config: &PipelineConfig) -> Result<RunReport> {
    let bytes = std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    let rec = ingest_csv(
        path,
        IngestDefaults {
            fs: config.fs,
            f0: config.f0,
            neutral: config.neutral,
        },
    )?
    .record;
    let mut report = run_pipeline(&rec, config)?;
    report.input_digest = Some(sha256_hex(&bytes));
    Ok(report)
}
