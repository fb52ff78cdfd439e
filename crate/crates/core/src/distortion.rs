//! Interval-slope distortion descriptor.
//!
//! Each sample's slope is the least-squares slope of a line fitted to the
//! centred interval of `l` samples around it. Before fitting, the interval is
//! cleaned by iterative Grubbs outlier rejection followed by a robust local
//! linear regression smoother (tricube distance weights, bisquare robustness
//! weights), which suppresses arcing impulses that a plain derivative or
//! low-pass filter would amplify.
//!
//! The low-pass filter smears a single-sample impulse into a ringing burst
//! longer than the Grubbs removal budget, so the same Grubbs test is also
//! run on the raw samples first ([`despike`]); samples it flags in most of
//! the intervals that contain them are replaced by their robust fit.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::signal::{lowpass, phasor_of, SampleSeries};

/// Smallest interval accepted by the refit and the slope.
pub const MIN_INTERVAL: usize = 4;

/// Parameters of the Grubbs + robust local regression refit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefitConfig {
    /// Disable to compute plain least-squares slopes on the filtered signal.
    pub enabled: bool,
    /// Two-sided significance level of the Grubbs test.
    pub alpha: f64,
    /// Maximum removed samples per interval, as a fraction of its length.
    pub max_removal_fraction: f64,
    /// Bisquare reweighting passes after the initial local fit.
    pub robust_iterations: usize,
}

impl Default for RefitConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            alpha: 0.05,
            max_removal_fraction: 0.25,
            robust_iterations: 2,
        }
    }
}

impl RefitConfig {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }
}

/// Two-sided Grubbs critical value for `n` observations at significance `alpha`.
pub fn grubbs_critical(n: usize, alpha: f64) -> f64 {
    if n < 3 {
        return f64::INFINITY;
    }
    let nf = n as f64;
    let df = nf - 2.0;
    let t = StudentsT::new(0.0, 1.0, df)
        .map(|dist| dist.inverse_cdf(1.0 - alpha / (2.0 * nf)))
        .unwrap_or(f64::INFINITY);
    (nf - 1.0) / nf.sqrt() * (t * t / (df + t * t)).sqrt()
}

/// A refit engine for one interval length: Grubbs critical values and the
/// tricube weight table are computed once and reused for every interval.
#[derive(Debug, Clone)]
pub struct Refitter {
    len: usize,
    config: RefitConfig,
    critical: Vec<f64>,
    /// Tricube weights `w` of sample `i` for every centre `j` (row `i`), then
    /// `w·dx` and `w·dx²`, with `dx = i − j`.
    tricube: Vec<f64>,
    tricube_dx: Vec<f64>,
    tricube_dx2: Vec<f64>,
    /// Local fit with unit robustness weights as a matrix: row `j` maps the
    /// interval onto its fitted value at `j`.
    smoother: Vec<f64>,
}

/// Work buffers reused across intervals.
#[derive(Debug, Clone, Default)]
pub struct RefitScratch {
    /// 1 for samples still in the Grubbs set, 0 once set aside.
    kept: Vec<f64>,
    abscissae: Vec<f64>,
    order: Vec<usize>,
    outliers: Vec<bool>,
    robust: Vec<f64>,
    fitted: Vec<f64>,
    moments: Vec<f64>,
    /// Bit patterns of absolute residuals; for non-negative floats these
    /// order like the values.
    abs_res: Vec<u64>,
}

impl Refitter {
    pub fn new(len: usize, config: RefitConfig) -> Result<Self> {
        if len < MIN_INTERVAL {
            return Err(Error::Parameter(format!(
                "refit interval must hold at least {MIN_INTERVAL} samples, got {len}"
            )));
        }
        if !(config.alpha > 0.0 && config.alpha < 1.0) {
            return Err(Error::Parameter(format!(
                "Grubbs significance must lie in (0, 1), got {}",
                config.alpha
            )));
        }
        let critical = (0..=len).map(|n| grubbs_critical(n, config.alpha)).collect();
        let mut tricube = vec![0.0; len * len];
        let mut tricube_dx = vec![0.0; len * len];
        let mut tricube_dx2 = vec![0.0; len * len];
        for j in 0..len {
            // bandwidth reaches one sample beyond the farthest point of the interval
            let h = j.max(len - 1 - j) as f64 + 1.0;
            for i in 0..len {
                let dx = i as f64 - j as f64;
                let u = dx.abs() / h;
                let w = (1.0 - u * u * u).powi(3);
                tricube[i * len + j] = w;
                tricube_dx[i * len + j] = w * dx;
                tricube_dx2[i * len + j] = w * dx * dx;
            }
        }
        let mut smoother = vec![0.0; len * len];
        for j in 0..len {
            let col = |t: &[f64]| (0..len).map(|i| t[i * len + j]).sum::<f64>();
            let (s0, s1, s2) = (col(&tricube), col(&tricube_dx), col(&tricube_dx2));
            let det = s0 * s2 - s1 * s1;
            for i in 0..len {
                let k = i * len + j;
                smoother[j * len + i] = if det.abs() > 1e-12 * s0 * s2.max(1.0) {
                    (s2 * tricube[k] - s1 * tricube_dx[k]) / det
                } else {
                    tricube[k] / s0
                };
            }
        }
        Ok(Self {
            len,
            config,
            critical,
            tricube,
            tricube_dx,
            tricube_dx2,
            smoother,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn config(&self) -> &RefitConfig {
        &self.config
    }

    fn max_removals(&self) -> usize {
        (self.config.max_removal_fraction * self.len as f64).floor() as usize
    }

    /// Flags Grubbs outliers among the residuals of an affine fit, refitting
    /// after every removal.
    ///
    /// The test is run in its generalized (Rosner) form: the most extreme
    /// residual is set aside up to the removal budget, and the outliers are
    /// the first `k` set-aside samples, where `k` is the last step whose
    /// statistic exceeded its critical value. A cluster of similar outliers
    /// therefore cannot mask itself.
    pub fn grubbs_outliers(&self, window: &[f64]) -> Vec<bool> {
        let mut scratch = RefitScratch::default();
        self.grubbs_into(window, &mut scratch);
        scratch.outliers
    }

    fn grubbs_into(&self, window: &[f64], scratch: &mut RefitScratch) {
        let l = window.len();
        let RefitScratch {
            kept,
            abscissae,
            order,
            outliers,
            ..
        } = scratch;
        kept.clear();
        kept.resize(l, 1.0);
        if abscissae.len() != l {
            abscissae.clear();
            abscissae.extend((0..l).map(|i| i as f64));
        }
        order.clear();
        let scale = window.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let floor = 1e-12 * scale.max(f64::MIN_POSITIVE);
        let mut significant = 0;
        // running sums of the kept points: n, Σx, Σx², Σy, Σxy
        let mut sums = AffineSums::default();
        for (&x, &v) in abscissae.iter().zip(window) {
            sums.add(x, v);
        }
        for _ in 0..self.max_removals() {
            let count = l - order.len();
            if count < MIN_INTERVAL {
                break;
            }
            let Some((intercept, slope)) = sums.fit() else { break };
            let residual = |i: usize| window[i] - (intercept + slope * abscissae[i]);
            let [sum, sumsq, lo, hi] = residual_moments(window, kept, abscissae, intercept, slope);
            let mean = sum / count as f64;
            let var = ((sumsq - sum * mean) / (count - 1) as f64).max(0.0);
            let sd = var.sqrt();
            if !(sd > floor) {
                break;
            }
            let (target, dev) = if hi - mean > mean - lo { (hi, hi - mean) } else { (lo, mean - lo) };
            let Some(idx) = (0..l).position(|i| kept[i] == 1.0 && residual(i) == target) else {
                break;
            };
            kept[idx] = 0.0;
            sums.remove(abscissae[idx], window[idx]);
            order.push(idx);
            if dev / sd > self.critical[count.min(self.len)] {
                significant = order.len();
            }
        }
        outliers.clear();
        outliers.resize(l, false);
        for &i in &order[..significant] {
            outliers[i] = true;
        }
    }

    /// Replaces the interval by its robust local-regression fit; samples
    /// rejected by the Grubbs test take the fitted value of their position.
    pub fn refit(&self, window: &[f64]) -> Result<Vec<f64>> {
        let mut scratch = RefitScratch::default();
        self.refit_into(window, &mut scratch)?;
        Ok(scratch.fitted)
    }

    /// Least-squares slope of the refitted interval.
    pub fn refit_slope(&self, window: &[f64], scratch: &mut RefitScratch) -> Result<f64> {
        self.refit_into(window, scratch)?;
        Ok(least_squares_slope(&scratch.fitted))
    }

    fn refit_into(&self, window: &[f64], scratch: &mut RefitScratch) -> Result<()> {
        if window.len() != self.len {
            return Err(Error::Parameter(format!(
                "interval holds {} samples, refitter built for {}",
                window.len(),
                self.len
            )));
        }
        if !self.config.enabled {
            scratch.fitted.clear();
            scratch.fitted.extend_from_slice(window);
            return Ok(());
        }
        self.grubbs_into(window, scratch);
        let l = self.len;
        let RefitScratch {
            outliers,
            robust,
            fitted,
            moments,
            abs_res,
            ..
        } = scratch;
        robust.clear();
        robust.extend(outliers.iter().map(|&o| if o { 0.0 } else { 1.0 }));
        if outliers.iter().any(|&o| o) {
            self.local_fit(window, robust, moments, fitted);
        } else {
            fitted.clear();
            fitted.extend(self.smoother.chunks_exact(l).map(|row| dot(row, window)));
        }

        let scale = window.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for _ in 0..self.config.robust_iterations {
            abs_res.clear();
            abs_res.extend(
                (0..l)
                    .filter(|&i| !outliers[i])
                    .map(|i| (window[i] - fitted[i]).abs().to_bits()),
            );
            let mad = median_of_magnitudes(abs_res);
            if !(mad > 1e-12 * scale.max(f64::MIN_POSITIVE)) {
                break;
            }
            for i in 0..l {
                robust[i] = if outliers[i] {
                    0.0
                } else {
                    let u = (window[i] - fitted[i]) / (6.0 * mad);
                    if u.abs() < 1.0 {
                        (1.0 - u * u).powi(2)
                    } else {
                        0.0
                    }
                };
            }
            self.local_fit(window, robust, moments, fitted);
        }
        Ok(())
    }

    fn local_fit(&self, y: &[f64], robust: &[f64], moments: &mut Vec<f64>, fitted: &mut Vec<f64>) {
        let l = self.len;
        // moments[k * l + j]: Σw·r, Σw·dx·r, Σw·dx²·r, Σw·r·y, Σw·dx·r·y around centre j
        moments.clear();
        moments.resize(5 * l, 0.0);
        accumulate_moments(&self.tricube, &self.tricube_dx, &self.tricube_dx2, y, robust, moments);
        fitted.clear();
        fitted.extend((0..l).map(|j| {
            let [s0, s1, s2, t0, t1] = [0, 1, 2, 3, 4].map(|k| moments[k * l + j]);
            let det = s0 * s2 - s1 * s1;
            if det.abs() > 1e-12 * s0 * s2.max(1.0) {
                (s2 * t0 - s1 * t1) / det
            } else if s0 > 0.0 {
                t0 / s0
            } else {
                y[j]
            }
        }));
    }
}

const LANES: usize = 4;

/// `[Σr, Σr², min r, max r]` over the kept samples of the residuals
/// `r = y − (intercept + slope·x)`, accumulated in independent lanes.
fn residual_moments(y: &[f64], kept: &[f64], x: &[f64], intercept: f64, slope: f64) -> [f64; 4] {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: the CPU supports the enabled feature.
            return unsafe { residual_moments_avx2(y, kept, x, intercept, slope) };
        }
    }
    residual_moments_portable(y, kept, x, intercept, slope)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn residual_moments_avx2(y: &[f64], kept: &[f64], x: &[f64], intercept: f64, slope: f64) -> [f64; 4] {
    residual_moments_portable(y, kept, x, intercept, slope)
}

#[inline(always)]
fn residual_moments_portable(y: &[f64], kept: &[f64], x: &[f64], intercept: f64, slope: f64) -> [f64; 4] {
    let mut sum = [0.0; LANES];
    let mut sumsq = [0.0; LANES];
    let mut lo = [f64::INFINITY; LANES];
    let mut hi = [f64::NEG_INFINITY; LANES];
    let body = y.len() / LANES * LANES;
    let chunks = y[..body]
        .chunks_exact(LANES)
        .zip(kept[..body].chunks_exact(LANES))
        .zip(x[..body].chunks_exact(LANES));
    for ((yc, kc), xc) in chunks {
        let yc: &[f64; LANES] = yc.try_into().expect("exact chunk");
        let kc: &[f64; LANES] = kc.try_into().expect("exact chunk");
        let xc: &[f64; LANES] = xc.try_into().expect("exact chunk");
        let mut r = [0.0; LANES];
        for j in 0..LANES {
            r[j] = yc[j] - (intercept + slope * xc[j]);
        }
        for j in 0..LANES {
            let rk = r[j] * kc[j];
            sum[j] += rk;
            sumsq[j] += rk * r[j];
        }
        // set-aside samples are pushed to ±∞ so they never win
        for j in 0..LANES {
            let a = r[j] + (1.0 - kc[j]) * f64::MAX * 2.0;
            lo[j] = if a < lo[j] { a } else { lo[j] };
        }
        for j in 0..LANES {
            let b = r[j] - (1.0 - kc[j]) * f64::MAX * 2.0;
            hi[j] = if b > hi[j] { b } else { hi[j] };
        }
    }
    for i in body..y.len() {
        let r = y[i] - (intercept + slope * x[i]);
        sum[0] += r * kept[i];
        sumsq[0] += r * kept[i] * r;
        if kept[i] == 1.0 {
            lo[0] = if r < lo[0] { r } else { lo[0] };
            hi[0] = if r > hi[0] { r } else { hi[0] };
        }
    }
    [
        (sum[0] + sum[1]) + (sum[2] + sum[3]),
        (sumsq[0] + sumsq[1]) + (sumsq[2] + sumsq[3]),
        lo.iter().fold(f64::INFINITY, |m, &v| if v < m { v } else { m }),
        hi.iter().fold(f64::NEG_INFINITY, |m, &v| if v > m { v } else { m }),
    ]
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn accumulate_moments(w: &[f64], wdx: &[f64], wdx2: &[f64], y: &[f64], r: &[f64], out: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: the CPU supports the enabled feature.
            return unsafe { accumulate_moments_avx2(w, wdx, wdx2, y, r, out) };
        }
    }
    accumulate_moments_portable(w, wdx, wdx2, y, r, out)
}

/// The portable loop compiled for wider registers. No fused multiply-add is
/// enabled, so both paths round identically.
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn accumulate_moments_avx2(w: &[f64], wdx: &[f64], wdx2: &[f64], y: &[f64], r: &[f64], out: &mut [f64]) {
    accumulate_moments_portable(w, wdx, wdx2, y, r, out)
}

#[inline(always)]
fn accumulate_moments_portable(w: &[f64], wdx: &[f64], wdx2: &[f64], y: &[f64], r: &[f64], out: &mut [f64]) {
    let l = y.len();
    let (s0, rest) = out.split_at_mut(l);
    let (s1, rest) = rest.split_at_mut(l);
    let (s2, rest) = rest.split_at_mut(l);
    let (t0, t1) = rest.split_at_mut(l);
    let rows = w.chunks_exact(l).zip(wdx.chunks_exact(l)).zip(wdx2.chunks_exact(l));
    for (((w, wdx), wdx2), (&ri, &yi)) in rows.zip(r.iter().zip(y)) {
        if ri == 0.0 {
            continue;
        }
        let ryi = ri * yi;
        let outs = s0.iter_mut().zip(s1.iter_mut()).zip(s2.iter_mut()).zip(t0.iter_mut()).zip(t1.iter_mut());
        for (((((a0, a1), a2), b0), b1), ((&w, &wdx), &wdx2)) in outs.zip(w.iter().zip(wdx).zip(wdx2)) {
            *a0 += w * ri;
            *a1 += wdx * ri;
            *a2 += wdx2 * ri;
            *b0 += w * ryi;
            *b1 += wdx * ryi;
        }
    }
}

/// Sums for an ordinary least-squares line through a changing point set.
#[derive(Debug, Default, Clone, Copy)]
struct AffineSums {
    n: f64,
    sx: f64,
    sxx: f64,
    sy: f64,
    sxy: f64,
}

impl AffineSums {
    fn add(&mut self, x: f64, y: f64) {
        self.n += 1.0;
        self.sx += x;
        self.sxx += x * x;
        self.sy += y;
        self.sxy += x * y;
    }

    fn remove(&mut self, x: f64, y: f64) {
        self.n -= 1.0;
        self.sx -= x;
        self.sxx -= x * x;
        self.sy -= y;
        self.sxy -= x * y;
    }

    /// `(intercept, slope)`, if at least two distinct abscissae remain.
    fn fit(&self) -> Option<(f64, f64)> {
        let det = self.n * self.sxx - self.sx * self.sx;
        if self.n < 2.0 || det <= 0.0 {
            return None;
        }
        let slope = (self.n * self.sxy - self.sx * self.sy) / det;
        Some(((self.sy - slope * self.sx) / self.n, slope))
    }
}

/// Median of non-negative floats given as bit patterns.
fn median_of_magnitudes(bits: &mut [u64]) -> f64 {
    if bits.is_empty() {
        return 0.0;
    }
    let m = bits.len() / 2;
    let odd = bits.len() % 2 == 1;
    let (below, &mut upper, _) = bits.select_nth_unstable(m);
    let upper = f64::from_bits(upper);
    if below.is_empty() || odd {
        upper
    } else {
        let lower = f64::from_bits(below.iter().copied().max().unwrap_or(0));
        0.5 * (lower + upper)
    }
}

/// Grubbs + robust local regression refit of one interval with default parameters.
pub fn refit_interval(window: &[f64]) -> Result<Vec<f64>> {
    Refitter::new(window.len(), RefitConfig::default())?.refit(window)
}

/// Closed-form least-squares slope of `values` against their sample index:
/// `(l Σ n·i(n) − Σn Σi(n)) / (l Σn² − (Σn)²)`.
///
/// Indices are taken relative to the interval start; the slope is invariant
/// to that origin and the smaller sums keep the cancellation benign.
pub fn least_squares_slope(values: &[f64]) -> f64 {
    let l = values.len() as f64;
    let (mut sn, mut snn, mut si, mut sni) = (0.0, 0.0, 0.0, 0.0);
    for (k, &v) in values.iter().enumerate() {
        let n = k as f64;
        sn += n;
        snn += n * n;
        si += v;
        sni += n * v;
    }
    (l * sni - sn * si) / (l * snn - sn * sn)
}

fn interval_bounds(len: usize, n_s: usize, l: usize) -> Result<Range<usize>> {
    if l < MIN_INTERVAL || l % 2 != 0 {
        return Err(Error::Parameter(format!(
            "interval length must be even and at least {MIN_INTERVAL}, got {l}"
        )));
    }
    let half = l / 2;
    if n_s < half || n_s + half > len {
        return Err(Error::Range(format!(
            "interval of {l} samples centred on {n_s} does not fit in {len} samples"
        )));
    }
    Ok(n_s - half..n_s + half)
}

/// Interval slope at `n_s` of the series as given (no filtering), after the
/// default Grubbs-RLRS refit of the interval.
pub fn interval_slope(s: &SampleSeries, n_s: usize, l: usize) -> Result<f64> {
    let range = interval_bounds(s.len(), n_s, l)?;
    let refit = refit_interval(&s.values()[range])?;
    Ok(least_squares_slope(&refit))
}

/// Settings of the slope extraction stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeConfig {
    /// Low-pass cut-off applied before slope extraction, in Hz.
    pub cutoff_hz: f64,
    /// Interval length in samples; `None` selects `N_T / 8`.
    pub interval: Option<usize>,
    pub refit: RefitConfig,
}

impl Default for SlopeConfig {
    fn default() -> Self {
        Self {
            cutoff_hz: crate::signal::DEFAULT_CUTOFF_HZ,
            interval: None,
            refit: RefitConfig::default(),
        }
    }
}

impl SlopeConfig {
    pub fn interval_for(&self, samples_per_cycle: usize) -> usize {
        self.interval.unwrap_or(samples_per_cycle / 8)
    }
}

/// Per-sample interval slopes of one channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalSlopeSeries {
    /// Slopes in signal units per sample; `NaN` outside `valid`.
    pub slopes: Vec<f64>,
    pub valid: Range<usize>,
    /// Interval length in samples.
    pub l: usize,
    pub source_id: String,
    pub zero_crossings: Vec<usize>,
    pub fs: f64,
    pub f0: f64,
    pub t0: f64,
}

impl IntervalSlopeSeries {
    /// Wraps precomputed slopes; samples outside `valid` are ignored.
    pub fn from_slopes(
        slopes: Vec<f64>,
        valid: Range<usize>,
        l: usize,
        source_id: impl Into<String>,
        fs: f64,
        f0: f64,
        t0: f64,
    ) -> Self {
        let mut iss = Self {
            slopes,
            valid,
            l,
            source_id: source_id.into(),
            zero_crossings: Vec::new(),
            fs,
            f0,
            t0,
        };
        iss.zero_crossings = is_zero_crossings(&iss);
        iss
    }

    pub fn get(&self, n: usize) -> Option<f64> {
        self.valid.contains(&n).then(|| self.slopes[n])
    }

    pub fn len(&self) -> usize {
        self.slopes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slopes.is_empty()
    }

    pub fn samples_per_cycle(&self) -> usize {
        (self.fs / self.f0).round() as usize
    }

    /// Largest defined `|IS|`.
    pub fn peak(&self) -> f64 {
        self.slopes[self.valid.clone()]
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Consecutive zero-crossing pairs, i.e. the half-cycles of the slope curve.
    pub fn half_cycles(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.zero_crossings.windows(2).map(|w| (w[0], w[1]))
    }
}

/// Low-pass, refit and interval slope at every sample whose interval fits.
pub fn interval_slope_series(
    s: &SampleSeries,
    source_id: &str,
    config: &SlopeConfig,
) -> Result<IntervalSlopeSeries> {
    s.require_cycles(2)?;
    let l = config.interval_for(s.samples_per_cycle());
    if l < MIN_INTERVAL || l % 2 != 0 {
        return Err(Error::Parameter(format!(
            "interval length must be even and at least {MIN_INTERVAL}, got {l}"
        )));
    }
    let filtered = if config.refit.enabled {
        let refitter = Refitter::new(l, config.refit.clone())?;
        lowpass(&s.with_values(despike(s.values(), &refitter)), config.cutoff_hz)?
    } else {
        lowpass(s, config.cutoff_hz)?
    };
    slopes_of_filtered(&filtered, source_id, l, &config.refit)
}

/// Replaces isolated outliers of a raw series.
///
/// Every interval is Grubbs-tested; a sample flagged in at least half of the
/// intervals containing it is replaced by cubic interpolation from its two
/// neighbours on each side, or by the robust refit of the interval centred on
/// it when a neighbour is flagged too. Series shorter than one interval are
/// returned unchanged.
pub fn despike(values: &[f64], refitter: &Refitter) -> Vec<f64> {
    let l = refitter.len();
    let half = l / 2;
    let mut out = values.to_vec();
    if values.len() < l || !refitter.config().enabled {
        return out;
    }
    let starts = 0..=values.len() - l;
    let mut votes = vec![0u32; values.len()];
    let mut windows = vec![0u32; values.len()];
    let mut scratch = RefitScratch::default();
    for start in starts.clone() {
        refitter.grubbs_into(&values[start..start + l], &mut scratch);
        for (k, &flagged) in scratch.outliers.iter().enumerate() {
            windows[start + k] += 1;
            votes[start + k] += u32::from(flagged);
        }
    }
    let flagged: Vec<bool> = (0..values.len())
        .map(|n| votes[n] > 0 && 2 * votes[n] >= windows[n])
        .collect();
    for n in (0..values.len()).filter(|&n| flagged[n]) {
        let neighbours = [n.wrapping_sub(2), n.wrapping_sub(1), n + 1, n + 2];
        if neighbours.iter().all(|&k| k < values.len() && !flagged[k]) {
            // cubic through the two samples on either side
            let [a, b, c, d] = neighbours.map(|k| values[k]);
            out[n] = (4.0 * (b + c) - (a + d)) / 6.0;
            continue;
        }
        let start = n.saturating_sub(half).min(*starts.end());
        if let Ok(fit) = refitter.refit(&values[start..start + l]) {
            out[n] = fit[n - start];
        }
    }
    out
}

/// Slope extraction on an already filtered series.
pub fn slopes_of_filtered(
    filtered: &SampleSeries,
    source_id: &str,
    l: usize,
    refit: &RefitConfig,
) -> Result<IntervalSlopeSeries> {
    let refitter = Refitter::new(l, refit.clone())?;
    let x = filtered.values();
    let half = l / 2;
    let valid = if x.len() >= l { half..x.len() - half + 1 } else { 0..0 };
    let mut slopes = vec![f64::NAN; x.len()];
    slopes[valid.clone()]
        .par_chunks_mut(256)
        .enumerate()
        .try_for_each(|(chunk, out)| -> Result<()> {
            let first = valid.start + chunk * 256;
            let mut scratch = RefitScratch::default();
            for (k, slot) in out.iter_mut().enumerate() {
                let n_s = first + k;
                let window = &x[n_s - half..n_s + half];
                *slot = if refitter.config().enabled {
                    refitter.refit_slope(window, &mut scratch)?
                } else {
                    least_squares_slope(window)
                };
            }
            Ok(())
        })?;
    Ok(IntervalSlopeSeries::from_slopes(
        slopes,
        valid,
        l,
        source_id,
        filtered.fs(),
        filtered.f0(),
        filtered.t0(),
    ))
}

/// Zero-crossings of the slope curve.
///
/// For each complete cycle inside the defined region, the fundamental phasor of
/// the slopes gives nominal crossing positions; each is moved to the nearest
/// actual sign change within `±N_T/16` samples, otherwise kept as is.
pub fn is_zero_crossings(iss: &IntervalSlopeSeries) -> Vec<usize> {
    let nt = iss.samples_per_cycle();
    if nt == 0 || iss.valid.is_empty() {
        return Vec::new();
    }
    let omega = 2.0 * std::f64::consts::PI * iss.f0;
    let radius = (nt / 16).max(1);
    let first_cycle = iss.valid.start.div_ceil(nt);
    let mut found = Vec::new();
    let mut k = first_cycle;
    while (k + 1) * nt <= iss.valid.end {
        let start = k * nt;
        let t_start = iss.t0 + start as f64 / iss.fs;
        let (amp, phase) = phasor_of(&iss.slopes[start..start + nt], t_start, omega, iss.fs);
        k += 1;
        if amp == 0.0 {
            continue;
        }
        // slopes ~ A cos(w t + phase): zeros where the argument is pi/2 + m pi
        let theta0 = omega * t_start + phase;
        let half_pi = std::f64::consts::FRAC_PI_2;
        let mut m = ((theta0 - half_pi) / std::f64::consts::PI - 1e-9).ceil();
        for _ in 0..2 {
            let target = half_pi + m * std::f64::consts::PI;
            let offset = (target - theta0) / omega * iss.fs;
            m += 1.0;
            let nominal = (start as f64 + offset).round();
            if nominal < 0.0 {
                continue;
            }
            let nominal = nominal as usize;
            if !iss.valid.contains(&nominal) {
                continue;
            }
            found.push(calibrate(iss, nominal, radius));
        }
    }
    found.sort_unstable();
    let mut out: Vec<usize> = Vec::with_capacity(found.len());
    for z in found {
        if out.last().is_none_or(|&last| z >= last + nt / 4) {
            out.push(z);
        }
    }
    out
}

fn calibrate(iss: &IntervalSlopeSeries, nominal: usize, radius: usize) -> usize {
    let lo = nominal.saturating_sub(radius).max(iss.valid.start);
    let hi = (nominal + radius).min(iss.valid.end - 1);
    let s = &iss.slopes;
    let mut best: Option<(usize, usize)> = None;
    for i in lo..=hi {
        let crossing = if s[i] == 0.0 {
            Some(i)
        } else if i > iss.valid.start && i > lo && (s[i - 1] < 0.0) != (s[i] < 0.0) && s[i - 1] != 0.0 {
            Some(if s[i - 1].abs() < s[i].abs() { i - 1 } else { i })
        } else {
            None
        };
        if let Some(c) = crossing {
            let dist = c.abs_diff(nominal);
            if best.is_none_or(|(_, d)| dist < d) {
                best = Some((c, dist));
            }
        }
    }
    best.map_or(nominal, |(c, _)| c)
}
