//! Effective pipeline configuration: defaults, then command-line flags, then
//! the configuration file, each layer overriding the previous one.

use std::path::Path;

use anyhow::{Context, Result};
use clap::Args;
use hifid_core::{NeutralType, PipelineConfig};

/// Flags mirroring [`PipelineConfig`]; unset flags keep the default.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigFlags {
    /// TOML file with pipeline settings; its keys override the flags
    #[arg(long, value_name = "FILE")]
    pub config: Option<std::path::PathBuf>,
    /// Sampling rate in Hz
    #[arg(long)]
    pub fs: Option<f64>,
    /// Fundamental frequency in Hz
    #[arg(long)]
    pub f0: Option<f64>,
    /// Low-pass cut-off in Hz
    #[arg(long)]
    pub cutoff_hz: Option<f64>,
    /// Slope interval length in samples
    #[arg(long)]
    pub interval: Option<usize>,
    /// Half-cycle guard in samples
    #[arg(long)]
    pub guard: Option<usize>,
    /// Consecutive faulty cycles needed to trigger
    #[arg(long)]
    pub trigger_threshold: Option<usize>,
    /// Identification window: cycles before the trigger
    #[arg(long)]
    pub window_pre: Option<usize>,
    /// Identification window: cycles from the trigger on
    #[arg(long)]
    pub window_post: Option<usize>,
    /// Relative tolerance between the two maxima of an M shape
    #[arg(long)]
    pub rho: Option<f64>,
    /// Minimum relative depth of the M-shape notch
    #[arg(long)]
    pub epsilon_m: Option<f64>,
    /// Relative depth below which extrema are treated as ripple
    #[arg(long)]
    pub ripple: Option<f64>,
    /// Turn off the Grubbs test and robust refit
    #[arg(long)]
    pub no_refit: bool,
    /// Significance level of the Grubbs test
    #[arg(long)]
    pub grubbs_alpha: Option<f64>,
    /// Neutral arrangement, overriding the record's declaration
    #[arg(long, value_parser = parse_neutral)]
    pub neutral: Option<NeutralType>,
    /// Seed recorded in the report; the analysis itself is deterministic
    #[arg(long)]
    pub seed: Option<u64>,
}

fn parse_neutral(s: &str) -> Result<NeutralType, String> {
    s.parse().map_err(|e: hifid_core::Error| e.to_string())
}

impl ConfigFlags {
    fn apply(&self, mut c: PipelineConfig) -> PipelineConfig {
        macro_rules! set {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$flag { c.$($field).+ = v; })*
            };
        }
        set!(
            fs => fs,
            f0 => f0,
            cutoff_hz => cutoff_hz,
            trigger_threshold => trigger_threshold,
            window_pre => window.pre,
            window_post => window.post,
            rho => rho,
            epsilon_m => epsilon_m,
            ripple => ripple,
            grubbs_alpha => refit.alpha,
            seed => seed,
        );
        if self.interval.is_some() {
            c.interval = self.interval;
        }
        if self.guard.is_some() {
            c.guard = self.guard;
        }
        if self.neutral.is_some() {
            c.neutral = self.neutral;
        }
        if self.no_refit {
            c.refit.enabled = false;
        }
        c
    }
}

fn overlay(base: &mut toml::Table, top: toml::Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => overlay(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Layers `file_text` (TOML) over `below`.
pub fn merge_config_text(below: &PipelineConfig, file_text: &str, source: &str) -> Result<PipelineConfig> {
    let file: toml::Table = toml::from_str(file_text).with_context(|| format!("{source}: invalid TOML"))?;
    let mut table = toml::Table::try_from(below).context("configuration is not representable as TOML")?;
    overlay(&mut table, file);
    let merged: PipelineConfig = toml::Value::Table(table)
        .try_into()
        .with_context(|| format!("{source}: invalid pipeline settings"))?;
    merged.validate()?;
    Ok(merged)
}

/// Defaults, overridden by flags, overridden by the configuration file.
pub fn effective_config(flags: &ConfigFlags) -> Result<PipelineConfig> {
    let from_flags = flags.apply(PipelineConfig::default());
    let merged = match &flags.config {
        Some(path) => load_over(&from_flags, path)?,
        None => from_flags,
    };
    merged.validate()?;
    Ok(merged)
}

fn load_over(below: &PipelineConfig, path: &Path) -> Result<PipelineConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    merge_config_text(below, &text, &path.display().to_string())
}

/// TOML rendering of the configuration with the derived defaults spelled out.
pub fn echo(config: &PipelineConfig, samples_per_cycle: Option<usize>) -> String {
    let mut shown = config.clone();
    if let Some(nt) = samples_per_cycle {
        shown.interval.get_or_insert(nt / 8);
        shown.guard.get_or_insert(nt / 16);
    }
    toml::to_string(&shown).unwrap_or_else(|e| format!("# unprintable configuration: {e}\n"))
}
