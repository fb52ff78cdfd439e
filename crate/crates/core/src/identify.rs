//! Faulty feeder identification from the per-half-cycle INDEX.
//!
//! For every half-cycle of a faulty cycle, a feeder's INDEX is the relative
//! depth of its M-shape notch, signed by the bus-voltage coefficient `c_dir`
//! evaluated at the notch. Half-cycles of non-faulty cycles contribute zero.
//! The feeder whose mean INDEX over the identification window is strictly the
//! largest and strictly positive is reported as faulty.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::detect::{CycleVerdict, HalfCycleFeature};
use crate::distortion::IntervalSlopeSeries;
use crate::error::{Error, Result};
use crate::signal::{FeederId, NeutralType};

/// Which bus-voltage expression produced a `c_dir` value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CdirVariant {
    /// `+d IS_u0b / dn` (resonant neutral).
    SlopeDerivative,
    /// `−d IS_u0b / dn` (isolated neutral).
    NegatedSlopeDerivative,
    /// `−IS_u0b` (low-resistor neutral; alternate resonant form).
    NegatedSlope,
}

impl CdirVariant {
    /// Forms evaluated for a neutral, primary form first.
    pub fn for_neutral(neutral: NeutralType) -> &'static [CdirVariant] {
        match neutral {
            NeutralType::Resonant => &[CdirVariant::SlopeDerivative, CdirVariant::NegatedSlope],
            NeutralType::Isolated => &[CdirVariant::NegatedSlopeDerivative],
            NeutralType::LowResistor => &[CdirVariant::NegatedSlope],
        }
    }

    /// Un-normalised coefficient at sample `n`; derivatives are central
    /// first differences of the slope series.
    pub fn raw(self, u0b: &IntervalSlopeSeries, n: usize) -> Result<f64> {
        let undefined = || Error::Range(format!("bus-voltage slope undefined around sample {n}"));
        match self {
            CdirVariant::NegatedSlope => u0b.get(n).map(|v| -v).ok_or_else(undefined),
            CdirVariant::SlopeDerivative | CdirVariant::NegatedSlopeDerivative => {
                let prev = n.checked_sub(1).and_then(|p| u0b.get(p)).ok_or_else(undefined)?;
                let next = u0b.get(n + 1).ok_or_else(undefined)?;
                let derivative = 0.5 * (next - prev);
                Ok(if self == CdirVariant::SlopeDerivative {
                    derivative
                } else {
                    -derivative
                })
            }
        }
    }
}

/// Per-unit normalisation of one `c_dir` form over a sample window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cdir {
    pub variant: CdirVariant,
    scale: f64,
}

impl Cdir {
    /// Normalises by the largest `|raw|` over the defined samples of `window`.
    pub fn new(u0b: &IntervalSlopeSeries, variant: CdirVariant, window: Range<usize>) -> Self {
        let scale = window
            .filter_map(|n| variant.raw(u0b, n).ok())
            .fold(0.0_f64, |m, v| m.max(v.abs()));
        Self { variant, scale }
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Normalised coefficient in `[-1, 1]` (zero when the window is flat).
    pub fn at(&self, u0b: &IntervalSlopeSeries, n_min: usize) -> Result<f64> {
        let raw = self.variant.raw(u0b, n_min)?;
        if self.scale > 0.0 {
            Ok((raw / self.scale).clamp(-1.0, 1.0))
        } else {
            Ok(0.0)
        }
    }
}

/// Normalised `c_dir` at `n_min` for the primary form of `neutral`, scaled
/// over `window`.
pub fn c_dir(
    u0b: &IntervalSlopeSeries,
    n_min: usize,
    neutral: NeutralType,
    window: Range<usize>,
) -> Result<f64> {
    let variant = CdirVariant::for_neutral(neutral)[0];
    Cdir::new(u0b, variant, window).at(u0b, n_min)
}

/// INDEX of one half-cycle: `c_dir · (IS̄max − IS(n_min)) / |IS̄max|`, where
/// `IS̄max` is the mean signed slope at the two maxima. Zero unless the
/// half-cycle is an M shape, and zero when `|IS̄max|` is negligible.
pub fn compute_index(iss: &IntervalSlopeSeries, feature: &HalfCycleFeature, cdir: f64) -> f64 {
    let Some(e) = feature.m_extrema() else { return 0.0 };
    let (Some(a), Some(b), Some(m)) = (iss.get(e.n_max1), iss.get(e.n_max2), iss.get(e.n_min))
    else {
        return 0.0;
    };
    index_value(0.5 * (a + b), m, cdir, iss.peak())
}

/// The INDEX formula on scalar inputs.
pub fn index_value(mean_max: f64, at_min: f64, cdir: f64, channel_peak: f64) -> f64 {
    if mean_max.abs() <= 1e-12 * channel_peak || mean_max == 0.0 {
        return 0.0;
    }
    cdir * (mean_max - at_min) / mean_max.abs()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexSample {
    pub feeder_id: FeederId,
    /// Position of the half-cycle in the feeder's zero-crossing list.
    pub half_cycle_index: usize,
    pub cycle: usize,
    pub n_min: Option<usize>,
    pub index_value: f64,
    pub c_dir_variant: CdirVariant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeederMean {
    pub feeder_id: FeederId,
    pub mean_index: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantResult {
    pub variant: CdirVariant,
    pub means: Vec<FeederMean>,
    /// Top mean minus runner-up mean.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentificationReport {
    /// Inclusive cycle range `(start, end)`.
    pub window: (usize, usize),
    /// Set when fewer than the requested post-trigger cycles were available.
    pub short_window: bool,
    pub trigger_cycle: usize,
    pub variants: Vec<VariantResult>,
    pub chosen_variant: CdirVariant,
    pub chosen_feeder: Option<FeederId>,
    pub samples: Vec<IndexSample>,
}

impl IdentificationReport {
    pub fn means(&self) -> &[FeederMean] {
        self.variants
            .iter()
            .find(|v| v.variant == self.chosen_variant)
            .map(|v| v.means.as_slice())
            .unwrap_or(&[])
    }

    pub fn mean_of(&self, id: &FeederId) -> Option<f64> {
        self.means()
            .iter()
            .find(|m| &m.feeder_id == id)
            .map(|m| m.mean_index)
    }
}

/// Identification window settings in cycles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    pub pre: usize,
    pub post: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self { pre: 4, post: 20 }
    }
}

/// A feeder channel ready for identification.
pub struct FeederView<'a> {
    pub id: &'a FeederId,
    pub slopes: &'a IntervalSlopeSeries,
    pub verdicts: &'a [CycleVerdict],
}

/// Identification over pre-computed slopes and cycle verdicts.
///
/// `analysable` is the range of cycles for which verdicts exist; the window
/// is clamped to it.
pub fn identify_from(
    u0b: &IntervalSlopeSeries,
    feeders: &[FeederView<'_>],
    neutral: NeutralType,
    trigger_cycle: Option<usize>,
    analysable: Range<usize>,
    window: WindowConfig,
) -> Result<IdentificationReport> {
    let trigger = trigger_cycle
        .ok_or_else(|| Error::Sequencing("identification requested without a trigger".into()))?;
    if analysable.is_empty() || !analysable.contains(&trigger) {
        return Err(Error::Range(format!(
            "trigger cycle {trigger} lies outside the analysable cycles {analysable:?}"
        )));
    }
    let start = trigger.saturating_sub(window.pre).max(analysable.start);
    let wanted_end = trigger + window.post;
    let end = wanted_end.min(analysable.end - 1);
    let short_window = end < wanted_end;
    let cycles = end - start + 1;
    let denominator = 2.0 * cycles as f64;

    let nt = u0b.samples_per_cycle();
    let samples_window = start * nt..(end + 1) * nt;

    let mut variants = Vec::new();
    let mut samples = Vec::new();
    for &variant in CdirVariant::for_neutral(neutral) {
        let cdir = Cdir::new(u0b, variant, samples_window.clone());
        let mut means = Vec::with_capacity(feeders.len());
        for feeder in feeders {
            let mut sum = 0.0;
            for verdict in feeder.verdicts.iter().filter(|v| v.cycle >= start && v.cycle <= end) {
                for half in &verdict.half_cycles {
                    let half_cycle_index = feeder
                        .slopes
                        .zero_crossings
                        .binary_search(&half.bounds.0)
                        .unwrap_or_default();
                    let (value, n_min) = match (verdict.faulty, half.m_extrema()) {
                        (true, Some(e)) => {
                            let c = cdir.at(u0b, e.n_min)?;
                            (compute_index(feeder.slopes, half, c), Some(e.n_min))
                        }
                        _ => (0.0, None),
                    };
                    sum += value;
                    samples.push(IndexSample {
                        feeder_id: feeder.id.clone(),
                        half_cycle_index,
                        cycle: verdict.cycle,
                        n_min,
                        index_value: value,
                        c_dir_variant: variant,
                    });
                }
            }
            means.push(FeederMean {
                feeder_id: feeder.id.clone(),
                mean_index: sum / denominator,
            });
        }
        let margin = top_two_margin(&means);
        variants.push(VariantResult {
            variant,
            means,
            margin,
        });
    }

    let chosen = variants
        .iter()
        .fold(None::<&VariantResult>, |best, v| match best {
            Some(b) if b.margin >= v.margin => Some(b),
            _ => Some(v),
        })
        .expect("every neutral has at least one c_dir form");
    let chosen_feeder = strict_positive_argmax(&chosen.means);
    let chosen_variant = chosen.variant;

    Ok(IdentificationReport {
        window: (start, end),
        short_window,
        trigger_cycle: trigger,
        variants,
        chosen_variant,
        chosen_feeder,
        samples,
    })
}

fn top_two_margin(means: &[FeederMean]) -> f64 {
    let mut sorted: Vec<f64> = means.iter().map(|m| m.mean_index).collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    match sorted.as_slice() {
        [] => 0.0,
        [only] => *only,
        [top, second, ..] => top - second,
    }
}

/// The feeder whose mean is strictly larger than all others and strictly positive.
pub fn strict_positive_argmax(means: &[FeederMean]) -> Option<FeederId> {
    let best = means.iter().max_by(|a, b| a.mean_index.total_cmp(&b.mean_index))?;
    let unique = means
        .iter()
        .filter(|m| m.mean_index >= best.mean_index)
        .count()
        == 1;
    (unique && best.mean_index > 0.0).then(|| best.feeder_id.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::MExtrema;

    fn iss(slopes: Vec<f64>) -> IntervalSlopeSeries {
        let n = slopes.len();
        IntervalSlopeSeries {
            slopes,
            valid: 0..n,
            l: 16,
            source_id: "u0b".into(),
            zero_crossings: Vec::new(),
            fs: 6400.0,
            f0: 50.0,
            t0: 0.0,
        }
    }

    #[test]
    fn index_formula() {
        assert!((index_value(2.0, 0.5, 1.0, 2.0) - 0.75).abs() < 1e-15);
        assert!((index_value(2.0, 0.5, -0.5, 2.0) + 0.375).abs() < 1e-15);
        // negative half-cycle: the notch is shallower in magnitude, sign follows IS
        assert!((index_value(-2.0, -0.5, 1.0, 2.0) + 0.75).abs() < 1e-15);
        assert_eq!(index_value(1e-20, 0.0, 1.0, 1.0), 0.0);
    }

    #[test]
    fn index_is_zero_without_m_shape() {
        let s = iss(vec![1.0; 64]);
        let f = HalfCycleFeature {
            bounds: (0, 63),
            d: 8,
            extrema: Some(MExtrema {
                n_max1: 10,
                n_min: 30,
                n_max2: 50,
            }),
            is_m_shape: false,
        };
        assert_eq!(compute_index(&s, &f, 1.0), 0.0);
        let accepted = HalfCycleFeature {
            is_m_shape: true,
            ..f
        };
        let mut slopes = vec![0.0; 64];
        slopes[10] = 2.0;
        slopes[50] = 2.0;
        slopes[30] = 0.5;
        assert!((compute_index(&iss(slopes), &accepted, 1.0) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn low_resistor_cdir_at_negative_extreme_is_one() {
        let mut slopes: Vec<f64> = (0..256).map(|n| (n as f64 * 0.05).sin()).collect();
        slopes[100] = -3.0;
        let u = iss(slopes);
        let c = c_dir(&u, 100, NeutralType::LowResistor, 0..256).unwrap();
        assert_eq!(c, 1.0);
    }

    #[test]
    fn isolated_cdir_negative_on_rising_slope() {
        let u = iss((0..256).map(|n| 0.01 * n as f64 + (n as f64 * 0.1).sin()).collect());
        // rising between the first trough and the next crest of the sine term
        let n = 10;
        assert!(u.get(n + 1).unwrap() > u.get(n - 1).unwrap());
        let c = c_dir(&u, n, NeutralType::Isolated, 0..256).unwrap();
        assert!(c < 0.0);
        assert!(c >= -1.0);
    }

    #[test]
    fn cdir_outside_defined_region() {
        let mut u = iss(vec![1.0; 64]);
        u.valid = 8..56;
        assert!(matches!(
            CdirVariant::SlopeDerivative.raw(&u, 8),
            Err(Error::Range(_))
        ));
        assert!(CdirVariant::SlopeDerivative.raw(&u, 9).is_ok());
        assert!(matches!(CdirVariant::NegatedSlope.raw(&u, 56), Err(Error::Range(_))));
    }

    #[test]
    fn argmax_requires_strict_positive_winner() {
        let m = |id: &str, v: f64| FeederMean {
            feeder_id: id.into(),
            mean_index: v,
        };
        assert_eq!(
            strict_positive_argmax(&[m("a", 0.1), m("b", 0.3), m("c", -0.2)]),
            Some("b".into())
        );
        assert_eq!(strict_positive_argmax(&[m("a", 0.0), m("b", -0.3)]), None);
        assert_eq!(strict_positive_argmax(&[m("a", 0.3), m("b", 0.3)]), None);
        assert_eq!(strict_positive_argmax(&[]), None);
    }

    #[test]
    fn identification_needs_trigger() {
        let u = iss(vec![0.0; 1280]);
        let r = identify_from(&u, &[], NeutralType::Resonant, None, 1..9, WindowConfig::default());
        assert!(matches!(r, Err(Error::Sequencing(_))));
    }
}
