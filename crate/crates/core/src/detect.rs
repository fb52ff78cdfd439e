//! "M shape" recognition on half-cycles of the interval-slope curve and the
//! consecutive faulty-cycle trigger.

use serde::{Deserialize, Serialize};

use crate::distortion::IntervalSlopeSeries;
use crate::error::{Error, Result};

/// Thresholds of the M-shape criterion.
///
/// None of these are fixed by the underlying method; the defaults are the
/// values this implementation was validated with and can be overridden.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MShapeConfig {
    /// Guard margin at both ends of a half-cycle; `None` selects `N_T / 16`.
    pub guard: Option<usize>,
    /// Largest admissible spread between secondary minima, relative to the
    /// mean of the two maxima.
    pub rho: f64,
    /// Minimum relative depth of the notch between the two maxima.
    pub epsilon_m: f64,
    /// Extrema whose depth is below this fraction of the window's `|IS|` peak
    /// are merged into their neighbours before the gates run; 0 keeps every
    /// strict sign change of the first difference.
    #[serde(default = "default_ripple")]
    pub ripple: f64,
}

fn default_ripple() -> f64 {
    0.05
}

impl Default for MShapeConfig {
    fn default() -> Self {
        Self {
            guard: None,
            rho: 0.3,
            epsilon_m: 0.15,
            ripple: default_ripple(),
        }
    }
}

impl MShapeConfig {
    pub fn guard_for(&self, samples_per_cycle: usize) -> usize {
        self.guard.unwrap_or(samples_per_cycle / 16)
    }
}

/// Positions of the two `|IS|` maxima and the notch between them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MExtrema {
    pub n_max1: usize,
    pub n_min: usize,
    pub n_max2: usize,
}

/// Verdict for one half-cycle `[N0, N1]` of the slope curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfCycleFeature {
    pub bounds: (usize, usize),
    pub d: usize,
    /// Best candidate extrema, present whenever two maxima with a minimum
    /// between them exist, whether or not the remaining gates passed.
    pub extrema: Option<MExtrema>,
    pub is_m_shape: bool,
}

impl HalfCycleFeature {
    fn rejected(bounds: (usize, usize), d: usize, extrema: Option<MExtrema>) -> Self {
        Self {
            bounds,
            d,
            extrema,
            is_m_shape: false,
        }
    }

    /// Extrema of an accepted M shape.
    pub fn m_extrema(&self) -> Option<MExtrema> {
        self.extrema.filter(|_| self.is_m_shape)
    }

    pub fn midpoint(&self) -> usize {
        (self.bounds.0 + self.bounds.1) / 2
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Max,
    Min,
}

#[derive(Debug, Clone, Copy)]
struct Extremum {
    kind: Kind,
    pos: usize,
    value: f64,
}

/// Local extrema by strict sign change of the first difference; plateaus are
/// collapsed to their midpoint. End points are never extrema.
fn local_extrema(values: &[f64], offset: usize) -> Vec<Extremum> {
    // runs of equal values: (value, first, last)
    let mut runs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        match runs.last_mut() {
            Some(run) if run.0 == v => run.2 = i,
            _ => runs.push((v, i, i)),
        }
    }
    runs.windows(3)
        .filter_map(|w| {
            let (prev, cur, next) = (w[0].0, w[1], w[2].0);
            let kind = if cur.0 > prev && cur.0 > next {
                Kind::Max
            } else if cur.0 < prev && cur.0 < next {
                Kind::Min
            } else {
                return None;
            };
            Some(Extremum {
                kind,
                pos: offset + (cur.1 + cur.2) / 2,
                value: cur.0,
            })
        })
        .collect()
}

/// Drops shallow extrema: repeatedly takes the extremum with the smallest
/// depth and, while that depth is under `tolerance`, removes it together with
/// the weaker of its two neighbours so the max/min alternation is kept.
///
/// A maximum's depth is its height above the higher neighbouring minimum; a
/// minimum's depth is its drop below the lower neighbouring maximum, where
/// the window end values stand in for missing maxima. Window ends therefore
/// never make a hump look shallow, but a dip right next to an end does.
fn merge_ripple(mut ext: Vec<Extremum>, first: f64, last: f64, tolerance: f64) -> Vec<Extremum> {
    if tolerance <= 0.0 {
        return ext;
    }
    loop {
        let depth = |i: usize, ext: &[Extremum]| {
            let left = i.checked_sub(1).map(|j| ext[j].value);
            let right = ext.get(i + 1).map(|e| e.value);
            let v = ext[i].value;
            match ext[i].kind {
                Kind::Max => match (left, right) {
                    (None, None) => f64::INFINITY,
                    (l, r) => v - l.unwrap_or(f64::NEG_INFINITY).max(r.unwrap_or(f64::NEG_INFINITY)),
                },
                Kind::Min => left.unwrap_or(first).min(right.unwrap_or(last)) - v,
            }
        };
        let Some((i, dep)) = (0..ext.len())
            .map(|i| (i, depth(i, &ext)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
        else {
            return ext;
        };
        if dep >= tolerance {
            return ext;
        }
        if i == 0 || i + 1 == ext.len() {
            ext.remove(i);
            continue;
        }
        // the neighbours share a kind; keep the more extreme of them
        let (l, r) = (ext[i - 1], ext[i + 1]);
        let drop_right = match l.kind {
            Kind::Max => l.value >= r.value,
            Kind::Min => l.value <= r.value,
        };
        let neighbour = if drop_right { i + 1 } else { i - 1 };
        let (a, b) = if neighbour > i { (i, neighbour) } else { (neighbour, i) };
        ext.remove(b);
        ext.remove(a);
    }
}

/// Decides whether `|IS|` on `[N0 + d, N1 − d]` forms an M shape.
pub fn m_shape_half_cycle(
    iss: &IntervalSlopeSeries,
    n0: usize,
    n1: usize,
    config: &MShapeConfig,
) -> HalfCycleFeature {
    let d = config.guard_for(iss.samples_per_cycle());
    let bounds = (n0, n1);
    if n1 <= n0 || n1 - n0 + 1 < 2 * d + 3 {
        return HalfCycleFeature::rejected(bounds, d, None);
    }
    let (lo, hi) = (n0 + d, n1 - d);
    if !(iss.valid.contains(&lo) && iss.valid.contains(&hi)) {
        return HalfCycleFeature::rejected(bounds, d, None);
    }
    let magnitude: Vec<f64> = iss.slopes[lo..=hi].iter().map(|v| v.abs()).collect();
    let peak = magnitude.iter().fold(0.0_f64, |m, v| m.max(*v));
    let extrema = merge_ripple(
        local_extrema(&magnitude, lo),
        magnitude[0],
        magnitude[magnitude.len() - 1],
        config.ripple * peak,
    );

    let mut maxima: Vec<&Extremum> = extrema.iter().filter(|e| e.kind == Kind::Max).collect();
    if maxima.len() < 2 {
        return HalfCycleFeature::rejected(bounds, d, None);
    }
    maxima.sort_by(|a, b| b.value.total_cmp(&a.value).then(a.pos.cmp(&b.pos)));
    let (first, second) = if maxima[0].pos < maxima[1].pos {
        (maxima[0], maxima[1])
    } else {
        (maxima[1], maxima[0])
    };
    let Some(notch) = extrema
        .iter()
        .filter(|e| e.kind == Kind::Min && e.pos > first.pos && e.pos < second.pos)
        .min_by(|a, b| a.value.total_cmp(&b.value))
    else {
        return HalfCycleFeature::rejected(bounds, d, None);
    };
    let found = MExtrema {
        n_max1: first.pos,
        n_min: notch.pos,
        n_max2: second.pos,
    };

    let mean_max = 0.5 * (first.value + second.value);
    if !(mean_max > 0.0) {
        return HalfCycleFeature::rejected(bounds, d, Some(found));
    }
    let others_ok = extrema
        .iter()
        .filter(|e| e.kind == Kind::Min && e.pos != notch.pos)
        .all(|e| {
            e.pos >= first.pos
                && e.pos <= second.pos
                && (e.value - notch.value).abs() <= config.rho * mean_max
        });
    let prominent = (mean_max - notch.value) / mean_max >= config.epsilon_m;

    HalfCycleFeature {
        bounds,
        d,
        extrema: Some(found),
        is_m_shape: others_ok && prominent,
    }
}

/// A cycle is faulty when both of its half-cycles are M shapes ("double M").
pub fn cycle_is_faulty(first: &HalfCycleFeature, second: &HalfCycleFeature) -> bool {
    first.is_m_shape && second.is_m_shape
}

/// Per-feeder consecutive faulty-cycle counter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionState {
    pub consecutive_faulty: usize,
    pub trigger_threshold: usize,
    pub triggered_at: Option<usize>,
    pub last_cycle: Option<usize>,
}

impl DetectionState {
    pub const DEFAULT_THRESHOLD: usize = 4;

    pub fn new(trigger_threshold: usize) -> Self {
        Self {
            consecutive_faulty: 0,
            trigger_threshold: trigger_threshold.max(1),
            triggered_at: None,
            last_cycle: None,
        }
    }
}

impl Default for DetectionState {
    fn default() -> Self {
        Self::new(Self::DEFAULT_THRESHOLD)
    }
}

/// Advances the counter with the verdict of `cycle_index`.
///
/// Cycle indices must strictly increase; a skipped index counts as a
/// non-faulty cycle.
pub fn update_detection(
    state: &DetectionState,
    faulty: bool,
    cycle_index: usize,
) -> Result<DetectionState> {
    let mut next = state.clone();
    if let Some(last) = state.last_cycle {
        if cycle_index <= last {
            return Err(Error::Sequencing(format!(
                "cycle {cycle_index} presented after cycle {last}"
            )));
        }
        if cycle_index > last + 1 {
            next.consecutive_faulty = 0;
        }
    }
    next.last_cycle = Some(cycle_index);
    if faulty {
        next.consecutive_faulty += 1;
        if next.triggered_at.is_none() && next.consecutive_faulty >= next.trigger_threshold {
            next.triggered_at = Some(cycle_index);
        }
    } else {
        next.consecutive_faulty = 0;
    }
    Ok(next)
}

/// Half-cycle features grouped by power-frequency cycle of the record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleVerdict {
    pub cycle: usize,
    pub half_cycles: Vec<HalfCycleFeature>,
    pub faulty: bool,
}

/// Evaluates every half-cycle of `iss` and groups them by the record cycle
/// holding their midpoint, keeping cycles in `cycles`.
///
/// A cycle is faulty when it holds at least two half-cycles and all of them
/// are M shapes.
pub fn cycle_verdicts(
    iss: &IntervalSlopeSeries,
    cycles: std::ops::Range<usize>,
    config: &MShapeConfig,
) -> Vec<CycleVerdict> {
    let nt = iss.samples_per_cycle();
    let mut verdicts: Vec<CycleVerdict> = cycles
        .clone()
        .map(|cycle| CycleVerdict {
            cycle,
            half_cycles: Vec::new(),
            faulty: false,
        })
        .collect();
    for (n0, n1) in iss.half_cycles() {
        let cycle = ((n0 + n1) / 2) / nt;
        if !cycles.contains(&cycle) {
            continue;
        }
        let feature = m_shape_half_cycle(iss, n0, n1, config);
        verdicts[cycle - cycles.start].half_cycles.push(feature);
    }
    for v in &mut verdicts {
        v.faulty = v.half_cycles.len() >= 2
            && v.half_cycles.windows(2).all(|w| cycle_is_faulty(&w[0], &w[1]));
    }
    verdicts
}

/// Runs the trigger over ordered cycle verdicts.
pub fn detect(verdicts: &[CycleVerdict], trigger_threshold: usize) -> Result<DetectionState> {
    verdicts
        .iter()
        .try_fold(DetectionState::new(trigger_threshold), |state, v| {
            update_detection(&state, v.faulty, v.cycle)
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn curve(f: impl Fn(f64) -> f64, len: usize) -> IntervalSlopeSeries {
        let slopes = (0..len).map(|n| f(n as f64)).collect();
        IntervalSlopeSeries::from_slopes(slopes, 0..len, 16, "t", 6400.0, 50.0, 0.0)
    }

    /// Slope curve with a notch of relative depth `depth` centred in each half-cycle.
    fn m_curve(depth: f64) -> IntervalSlopeSeries {
        curve(
            |n| {
                let x = 2.0 * PI * n / 128.0;
                let centred = x.rem_euclid(PI) - PI / 2.0;
                x.sin() * (1.0 - depth * (-centred * centred / 0.18).exp())
            },
            1024,
        )
    }

    #[test]
    fn sinusoid_is_not_m_shape() {
        let iss = curve(|n| (2.0 * PI * n / 128.0).sin(), 1024);
        for (n0, n1) in iss.half_cycles() {
            let f = m_shape_half_cycle(&iss, n0, n1, &MShapeConfig::default());
            assert!(!f.is_m_shape);
        }
    }

    #[test]
    fn notched_curve_is_m_shape() {
        let iss = m_curve(0.6);
        let features: Vec<_> = iss
            .half_cycles()
            .map(|(n0, n1)| m_shape_half_cycle(&iss, n0, n1, &MShapeConfig::default()))
            .collect();
        assert!(!features.is_empty());
        for f in &features {
            assert!(f.is_m_shape, "{f:?}");
            let e = f.m_extrema().unwrap();
            assert!(f.bounds.0 + f.d <= e.n_max1 && e.n_max1 < e.n_min);
            assert!(e.n_min < e.n_max2 && e.n_max2 <= f.bounds.1 - f.d);
            // notch sits at the centre of the half-cycle
            assert!(e.n_min.abs_diff(f.midpoint()) <= 1);
        }
    }

    #[test]
    fn shallow_notch_fails_prominence_gate() {
        let iss = m_curve(0.05);
        for (n0, n1) in iss.half_cycles() {
            let f = m_shape_half_cycle(&iss, n0, n1, &MShapeConfig::default());
            assert!(!f.is_m_shape);
        }
    }

    #[test]
    fn stray_minimum_outside_maxima_rejects() {
        // two humps plus a third smaller hump near the edge
        let bump = |x: f64, c: f64, w: f64| (-(x - c).powi(2) / (2.0 * w * w)).exp();
        let vals: Vec<f64> = (0..64)
            .map(|n| {
                let x = n as f64;
                bump(x, 24.0, 4.0) + bump(x, 40.0, 4.0) + 0.6 * bump(x, 12.0, 2.0)
            })
            .collect();
        let mut slopes = vec![0.0; 256];
        slopes[64..128].copy_from_slice(&vals);
        let iss = IntervalSlopeSeries {
            slopes,
            valid: 0..256,
            l: 16,
            source_id: "x".into(),
            zero_crossings: vec![64, 128],
            fs: 6400.0,
            f0: 50.0,
            t0: 0.0,
        };
        let f = m_shape_half_cycle(&iss, 64, 127, &MShapeConfig::default());
        assert!(f.extrema.is_some());
        assert!(!f.is_m_shape);

        let loose = MShapeConfig {
            rho: 10.0,
            ..MShapeConfig::default()
        };
        // with the minimum outside the maxima the shape is still rejected
        assert!(!m_shape_half_cycle(&iss, 64, 127, &loose).is_m_shape);
    }

    #[test]
    fn degenerate_window() {
        let iss = m_curve(0.6);
        let f = m_shape_half_cycle(&iss, 100, 100 + 2 * 8 + 1, &MShapeConfig::default());
        assert!(!f.is_m_shape && f.extrema.is_none());
    }

    #[test]
    fn plateau_extrema_collapse_to_midpoint() {
        let v = [0.0, 1.0, 2.0, 2.0, 2.0, 1.0, 0.5, 0.5, 1.0, 0.0];
        let e = local_extrema(&v, 10);
        assert_eq!(e.len(), 3);
        assert_eq!((e[0].kind, e[0].pos), (Kind::Max, 13));
        assert_eq!((e[1].kind, e[1].pos), (Kind::Min, 16));
        assert_eq!((e[2].kind, e[2].pos), (Kind::Max, 18));
    }

    #[test]
    fn ripple_merge_keeps_dominant_extrema() {
        // hump, small wiggle on its flank, notch, hump
        let v = [0.0, 0.5, 0.97, 0.96, 0.98, 0.7, 0.95, 0.2];
        let strict = local_extrema(&v, 0);
        assert_eq!(strict.len(), 5);
        let merged = merge_ripple(strict.clone(), v[0], v[7], 0.05);
        let kinds: Vec<_> = merged.iter().map(|e| (e.kind, e.pos)).collect();
        assert_eq!(kinds, vec![(Kind::Max, 4), (Kind::Min, 5), (Kind::Max, 6)]);
        assert_eq!(merge_ripple(strict.clone(), v[0], v[7], 0.0).len(), strict.len());
    }

    #[test]
    fn hump_next_to_the_window_edge_survives() {
        let v = [0.98, 1.0, 0.8, 0.5, 0.8, 1.0, 0.99];
        let merged = merge_ripple(local_extrema(&v, 0), v[0], v[6], 0.05);
        assert_eq!(merged.len(), 3);
    }

    #[test]
    fn ripple_near_the_edge_is_removed() {
        let v = [0.50, 0.49, 0.495, 0.9, 0.6, 0.9, 0.3];
        let merged = merge_ripple(local_extrema(&v, 0), v[0], v[6], 0.05);
        let kinds: Vec<_> = merged.iter().map(|e| (e.kind, e.pos)).collect();
        assert_eq!(kinds, vec![(Kind::Max, 3), (Kind::Min, 4), (Kind::Max, 5)]);
    }

    fn half(m: bool) -> HalfCycleFeature {
        HalfCycleFeature {
            bounds: (0, 64),
            d: 8,
            extrema: None,
            is_m_shape: m,
        }
    }

    #[test]
    fn faulty_cycle_truth_table() {
        assert!(cycle_is_faulty(&half(true), &half(true)));
        assert!(!cycle_is_faulty(&half(true), &half(false)));
        assert!(!cycle_is_faulty(&half(false), &half(true)));
        assert!(!cycle_is_faulty(&half(false), &half(false)));
    }

    fn run(stream: &[bool]) -> DetectionState {
        stream
            .iter()
            .enumerate()
            .try_fold(DetectionState::default(), |s, (i, &f)| update_detection(&s, f, i))
            .unwrap()
    }

    #[test]
    fn trigger_after_four_consecutive() {
        assert_eq!(run(&[true, true, true, true]).triggered_at, Some(3));
        assert_eq!(run(&[true, true, true]).triggered_at, None);
    }

    #[test]
    fn counter_resets_on_healthy_cycle() {
        let s = run(&[true, true, false, true, true, true, true]);
        assert_eq!(s.triggered_at, Some(6));
        assert_eq!(run(&[false; 12]).triggered_at, None);
    }

    #[test]
    fn trigger_is_sticky() {
        let s = run(&[true, true, true, true, false, true, true, true, true]);
        assert_eq!(s.triggered_at, Some(3));
        assert_eq!(s.consecutive_faulty, 4);
    }

    #[test]
    fn out_of_order_cycles_rejected() {
        let s = update_detection(&DetectionState::default(), true, 5).unwrap();
        assert!(matches!(update_detection(&s, true, 5), Err(Error::Sequencing(_))));
        assert!(matches!(update_detection(&s, true, 2), Err(Error::Sequencing(_))));
        let gap = update_detection(&s, true, 7).unwrap();
        assert_eq!(gap.consecutive_faulty, 1);
    }
}
