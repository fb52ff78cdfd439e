//! End-to-end analysis of a synchronous record: slopes, M-shape verdicts,
//! trigger and faulty feeder identification.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::{cycle_verdicts, detect, CycleVerdict, DetectionState, MShapeConfig};
use crate::distortion::{interval_slope_series, IntervalSlopeSeries, RefitConfig, SlopeConfig};
use crate::error::{Error, Result};
use crate::identify::{identify_from, FeederView, IdentificationReport, WindowConfig};
use crate::signal::{FeederId, NeutralType, SynchronizedRecord, DEFAULT_CUTOFF_HZ};

pub const SCHEMA_VERSION: &str = "1.0";

/// Every tunable of the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub fs: f64,
    pub f0: f64,
    pub cutoff_hz: f64,
    /// Interval length `l`; defaults to an eighth of a cycle.
    pub interval: Option<usize>,
    /// Half-cycle guard `d`; defaults to a sixteenth of a cycle.
    pub guard: Option<usize>,
    pub trigger_threshold: usize,
    pub window: WindowConfig,
    pub rho: f64,
    pub epsilon_m: f64,
    /// Relative depth below which `|IS|` extrema count as ripple.
    pub ripple: f64,
    pub refit: RefitConfig,
    /// Overrides the neutral type declared by the record.
    pub neutral: Option<NeutralType>,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let m = MShapeConfig::default();
        Self {
            fs: 6400.0,
            f0: 50.0,
            cutoff_hz: DEFAULT_CUTOFF_HZ,
            interval: None,
            guard: None,
            trigger_threshold: DetectionState::DEFAULT_THRESHOLD,
            window: WindowConfig::default(),
            rho: m.rho,
            epsilon_m: m.epsilon_m,
            ripple: m.ripple,
            refit: RefitConfig::default(),
            neutral: None,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn slope_config(&self) -> SlopeConfig {
        SlopeConfig {
            cutoff_hz: self.cutoff_hz,
            interval: self.interval,
            refit: self.refit.clone(),
        }
    }

    pub fn m_shape_config(&self) -> MShapeConfig {
        MShapeConfig {
            guard: self.guard,
            rho: self.rho,
            epsilon_m: self.epsilon_m,
            ripple: self.ripple,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ratio = self.fs / self.f0;
        if !(self.fs > 0.0 && self.f0 > 0.0) || (ratio - ratio.round()).abs() > 1e-9 {
            return Err(Error::Parameter(format!(
                "fs / f0 must be a positive integer, got {} / {}",
                self.fs, self.f0
            )));
        }
        if !(self.rho > 0.0 && self.epsilon_m > 0.0 && self.epsilon_m < 1.0) {
            return Err(Error::Parameter("rho must be positive and epsilon_m in (0, 1)".into()));
        }
        if !(0.0..self.epsilon_m).contains(&self.ripple) {
            return Err(Error::Parameter("ripple must lie in [0, epsilon_m)".into()));
        }
        if self.trigger_threshold == 0 {
            return Err(Error::Parameter("trigger threshold must be at least one cycle".into()));
        }
        Ok(())
    }
}

/// Slopes and cycle verdicts of one feeder channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelAnalysis {
    pub feeder_id: FeederId,
    #[serde(skip)]
    pub slopes: Option<IntervalSlopeSeries>,
    pub verdicts: Vec<CycleVerdict>,
    pub detection: DetectionState,
}

impl ChannelAnalysis {
    pub fn faulty_cycles(&self) -> Vec<usize> {
        self.verdicts.iter().filter(|v| v.faulty).map(|v| v.cycle).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trigger {
    pub feeder_id: FeederId,
    pub cycle: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: String,
    pub config: PipelineConfig,
    pub neutral: NeutralType,
    pub samples: usize,
    pub cycles: usize,
    /// Cycles that received a verdict.
    pub analysed_cycles: Range<usize>,
    pub input_digest: Option<String>,
    pub channels: Vec<ChannelAnalysis>,
    pub trigger: Option<Trigger>,
    pub identification: Option<IdentificationReport>,
    #[serde(skip)]
    pub u0b_slopes: Option<IntervalSlopeSeries>,
}

impl RunReport {
    pub fn detected(&self) -> bool {
        self.trigger.is_some()
    }

    pub fn chosen_feeder(&self) -> Option<&FeederId> {
        self.identification.as_ref()?.chosen_feeder.as_ref()
    }
}

/// Cycles for which every half-cycle can be evaluated: the first and last
/// cycle of the record are left out since their slope intervals are cut.
pub fn analysable_cycles(total_cycles: usize) -> Range<usize> {
    if total_cycles < 3 {
        0..0
    } else {
        1..total_cycles - 1
    }
}

/// Runs detection on every feeder and, when triggered, identification.
pub fn run_pipeline(record: &SynchronizedRecord, config: &PipelineConfig) -> Result<RunReport> {
    config.validate()?;
    let u0b = record.u0b();
    if (u0b.fs() - config.fs).abs() > 1e-6 * config.fs || (u0b.f0() - config.f0).abs() > 1e-9 {
        return Err(Error::Parameter(format!(
            "record sampled at {} Hz / {} Hz but configuration expects {} Hz / {} Hz",
            u0b.fs(),
            u0b.f0(),
            config.fs,
            config.f0
        )));
    }
    let cycles = u0b.cycles();
    let analysed = analysable_cycles(cycles);
    if analysed.is_empty() {
        return Err(Error::Range(format!("record holds {cycles} cycles, at least 3 are needed")));
    }
    let neutral = config.neutral.unwrap_or(record.neutral());
    let slope_cfg = config.slope_config();
    let m_cfg = config.m_shape_config();

    let u0b_slopes = interval_slope_series(u0b, "u0b", &slope_cfg)?;
    let channels: Vec<ChannelAnalysis> = record
        .feeders()
        .par_iter()
        .map(|(id, s)| -> Result<ChannelAnalysis> {
            let slopes = interval_slope_series(s, id.as_str(), &slope_cfg)?;
            let verdicts = cycle_verdicts(&slopes, analysed.clone(), &m_cfg);
            let detection = detect(&verdicts, config.trigger_threshold)?;
            Ok(ChannelAnalysis {
                feeder_id: id.clone(),
                slopes: Some(slopes),
                verdicts,
                detection,
            })
        })
        .collect::<Result<_>>()?;

    let trigger = channels
        .iter()
        .filter_map(|c| c.detection.triggered_at.map(|t| (t, &c.feeder_id)))
        .min_by_key(|(t, _)| *t)
        .map(|(cycle, id)| Trigger {
            feeder_id: id.clone(),
            cycle,
        });

    let identification = match &trigger {
        Some(t) => {
            let views: Vec<FeederView<'_>> = channels
                .iter()
                .map(|c| FeederView {
                    id: &c.feeder_id,
                    slopes: c.slopes.as_ref().expect("slopes kept during the run"),
                    verdicts: &c.verdicts,
                })
                .collect();
            Some(identify_from(
                &u0b_slopes,
                &views,
                neutral,
                Some(t.cycle),
                analysed.clone(),
                config.window,
            )?)
        }
        None => None,
    };

    Ok(RunReport {
        schema_version: SCHEMA_VERSION.to_string(),
        config: config.clone(),
        neutral,
        samples: record.len(),
        cycles,
        analysed_cycles: analysed,
        input_digest: None,
        channels,
        trigger,
        identification,
        u0b_slopes: Some(u0b_slopes),
    })
}

/// Identification for a record and an externally supplied trigger cycle.
pub fn identify(
    record: &SynchronizedRecord,
    trigger_cycle: Option<usize>,
    config: &PipelineConfig,
) -> Result<IdentificationReport> {
    let trigger_cycle =
        trigger_cycle.ok_or_else(|| Error::Sequencing("no trigger cycle supplied".into()))?;
    let mut forced = config.clone();
    forced.trigger_threshold = usize::MAX;
    let report = run_pipeline(record, &forced)?;
    let u0b = report.u0b_slopes.as_ref().expect("slopes kept during the run");
    let views: Vec<FeederView<'_>> = report
        .channels
        .iter()
        .map(|c| FeederView {
            id: &c.feeder_id,
            slopes: c.slopes.as_ref().expect("slopes kept during the run"),
            verdicts: &c.verdicts,
        })
        .collect();
    identify_from(
        u0b,
        &views,
        report.neutral,
        Some(trigger_cycle),
        report.analysed_cycles.clone(),
        config.window,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::SampleSeries;
    use std::f64::consts::PI;

    fn sine_record(cycles: usize) -> SynchronizedRecord {
        let n = 128 * cycles;
        let u = SampleSeries::from_fn(n, 6400.0, 50.0, 0.0, |t| (100.0 * PI * t).sin()).unwrap();
        let a = SampleSeries::from_fn(n, 6400.0, 50.0, 0.0, |t| (100.0 * PI * t).cos()).unwrap();
        let b = a.scaled(-1.0);
        SynchronizedRecord::new(u, vec![("a".into(), a), ("b".into(), b)], NeutralType::Resonant)
            .unwrap()
    }

    #[test]
    fn sinusoids_do_not_trigger() {
        let r = run_pipeline(&sine_record(10), &PipelineConfig::default()).unwrap();
        assert!(!r.detected());
        assert!(r.identification.is_none());
        assert_eq!(r.analysed_cycles, 1..9);
        assert!(r.channels.iter().all(|c| c.faulty_cycles().is_empty()));
    }

    #[test]
    fn rejects_mismatched_rate() {
        let cfg = PipelineConfig {
            fs: 12800.0,
            ..PipelineConfig::default()
        };
        assert!(matches!(run_pipeline(&sine_record(10), &cfg), Err(Error::Parameter(_))));
    }

    #[test]
    fn rejects_short_record() {
        assert!(matches!(
            run_pipeline(&sine_record(2), &PipelineConfig::default()),
            Err(Error::Range(_))
        ));
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = PipelineConfig {
            neutral: Some(NeutralType::Isolated),
            interval: Some(20),
            ..PipelineConfig::default()
        };
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<PipelineConfig>(&text).unwrap(), cfg);
    }

    #[test]
    fn identify_without_trigger_is_sequencing_error() {
        assert!(matches!(
            identify(&sine_record(10), None, &PipelineConfig::default()),
            Err(Error::Sequencing(_))
        ));
    }
}
