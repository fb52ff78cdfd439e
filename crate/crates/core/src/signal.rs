//! Waveform containers and the handful of generic signal operations the
//! detector needs: zero-sequence composition, a zero-phase low-pass filter and
//! single-bin fundamental phasor estimation.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used when checking that `fs / f0` is an integer.
const CYCLE_RATIO_TOL: f64 = 1e-9;

/// Default low-pass cut-off applied before the interval slope.
pub const DEFAULT_CUTOFF_HZ: f64 = 1500.0;

/// A uniformly sampled waveform channel.
///
/// `fs / f0` must be an integer (the number of samples per power cycle).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSeries {
    values: Vec<f64>,
    fs: f64,
    f0: f64,
    t0: f64,
}

impl SampleSeries {
    pub fn new(values: Vec<f64>, fs: f64, f0: f64, t0: f64) -> Result<Self> {
        if !(fs.is_finite() && fs > 0.0 && f0.is_finite() && f0 > 0.0) {
            return Err(Error::Parameter(format!(
                "sampling rate and power frequency must be positive (fs={fs}, f0={f0})"
            )));
        }
        let ratio = fs / f0;
        if (ratio - ratio.round()).abs() > CYCLE_RATIO_TOL * ratio || ratio.round() < 2.0 {
            return Err(Error::Parameter(format!(
                "fs/f0 = {ratio} is not an integer number of samples per cycle"
            )));
        }
        if !t0.is_finite() {
            return Err(Error::Parameter("start time must be finite".into()));
        }
        Ok(Self { values, fs, f0, t0 })
    }

    /// Builds a series by evaluating `f(t)` at `len` sample instants.
    pub fn from_fn(len: usize, fs: f64, f0: f64, t0: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = (0..len).map(|n| f(t0 + n as f64 / fs)).collect();
        Self::new(values, fs, f0, t0)
    }

    /// A series sharing this one's sampling metadata.
    pub fn with_values(&self, values: Vec<f64>) -> Self {
        Self {
            values,
            fs: self.fs,
            f0: self.f0,
            t0: self.t0,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn f0(&self) -> f64 {
        self.f0
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Samples per power-frequency cycle (`N_T`).
    pub fn samples_per_cycle(&self) -> usize {
        (self.fs / self.f0).round() as usize
    }

    /// Number of complete cycles held by the series.
    pub fn cycles(&self) -> usize {
        self.len() / self.samples_per_cycle()
    }

    pub fn time(&self, n: usize) -> f64 {
        self.t0 + n as f64 / self.fs
    }

    pub fn omega(&self) -> f64 {
        2.0 * PI * self.f0
    }

    pub fn peak(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn rms(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        (self.values.iter().map(|v| v * v).sum::<f64>() / self.len() as f64).sqrt()
    }

    pub fn scaled(&self, a: f64) -> Self {
        self.with_values(self.values.iter().map(|v| a * v).collect())
    }

    /// True when both series have identical length and sampling metadata.
    pub fn is_aligned_with(&self, other: &SampleSeries) -> bool {
        self.len() == other.len()
            && self.fs == other.fs
            && self.f0 == other.f0
            && self.t0 == other.t0
    }

    /// Checks the minimum length required by the analysis operations.
    pub fn require_cycles(&self, cycles: usize) -> Result<()> {
        if self.len() < cycles * self.samples_per_cycle() {
            return Err(Error::Range(format!(
                "series holds {} samples, at least {} cycles ({} samples) are required",
                self.len(),
                cycles,
                cycles * self.samples_per_cycle()
            )));
        }
        Ok(())
    }
}

/// Grounding arrangement of the distribution network neutral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeutralType {
    Isolated,
    Resonant,
    LowResistor,
}

impl fmt::Display for NeutralType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            NeutralType::Isolated => "isolated",
            NeutralType::Resonant => "resonant",
            NeutralType::LowResistor => "low_resistor",
        })
    }
}

impl std::str::FromStr for NeutralType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "isolated" => Ok(NeutralType::Isolated),
            "resonant" | "compensated" => Ok(NeutralType::Resonant),
            "low_resistor" | "lowresistor" | "resistor" => Ok(NeutralType::LowResistor),
            other => Err(Error::Parameter(format!("unknown neutral type '{other}'"))),
        }
    }
}

/// Identifier of a measured feeder channel.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeederId(pub String);

impl FeederId {
    pub fn new(id: impl Into<String>) -> Self {
        FeederId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for FeederId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(&self.0)
    }
}

impl From<&str> for FeederId {
    fn from(s: &str) -> Self {
        FeederId(s.to_string())
    }
}

/// Time-aligned bus zero-sequence voltage plus the zero-sequence current of
/// every feeder (the transformer/neutral channel included).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynchronizedRecord {
    u0b: SampleSeries,
    feeders: Vec<(FeederId, SampleSeries)>,
    neutral: NeutralType,
}

impl SynchronizedRecord {
    pub fn new(
        u0b: SampleSeries,
        feeders: Vec<(FeederId, SampleSeries)>,
        neutral: NeutralType,
    ) -> Result<Self> {
        if feeders.is_empty() {
            return Err(Error::Parameter("record has no feeder channels".into()));
        }
        for (i, (id, s)) in feeders.iter().enumerate() {
            if !s.is_aligned_with(&u0b) {
                return Err(Error::Alignment(format!(
                    "feeder '{id}' is not synchronous with the bus voltage channel"
                )));
            }
            if feeders[..i].iter().any(|(other, _)| other == id) {
                return Err(Error::Parameter(format!("duplicate feeder id '{id}'")));
            }
        }
        Ok(Self {
            u0b,
            feeders,
            neutral,
        })
    }

    pub fn u0b(&self) -> &SampleSeries {
        &self.u0b
    }

    pub fn feeders(&self) -> &[(FeederId, SampleSeries)] {
        &self.feeders
    }

    pub fn feeder(&self, id: &FeederId) -> Option<&SampleSeries> {
        self.feeders.iter().find(|(f, _)| f == id).map(|(_, s)| s)
    }

    pub fn neutral(&self) -> NeutralType {
        self.neutral
    }

    pub fn len(&self) -> usize {
        self.u0b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u0b.is_empty()
    }

    pub fn samples_per_cycle(&self) -> usize {
        self.u0b.samples_per_cycle()
    }

    /// Applies `f` to every channel (bus voltage included), keeping ids and metadata.
    pub fn map_channels(&self, mut f: impl FnMut(&SampleSeries) -> SampleSeries) -> Result<Self> {
        let u0b = f(&self.u0b);
        let feeders = self
            .feeders
            .iter()
            .map(|(id, s)| (id.clone(), f(s)))
            .collect();
        Self::new(u0b, feeders, self.neutral)
    }

    /// Sum of all feeder currents at each sample (zero for a closed KCL node).
    pub fn feeder_sum(&self) -> Vec<f64> {
        let mut sum = vec![0.0; self.len()];
        for (_, s) in &self.feeders {
            for (acc, v) in sum.iter_mut().zip(s.values()) {
                *acc += v;
            }
        }
        sum
    }
}

/// Zero-sequence component `(a + b + c) / 3` of three phase channels.
pub fn zero_sequence(ia: &SampleSeries, ib: &SampleSeries, ic: &SampleSeries) -> Result<SampleSeries> {
    if !ia.is_aligned_with(ib) || !ia.is_aligned_with(ic) {
        return Err(Error::Alignment(
            "phase channels differ in length, sampling rate or start time".into(),
        ));
    }
    let values = ia
        .values()
        .iter()
        .zip(ib.values())
        .zip(ic.values())
        .map(|((a, b), c)| (a + b + c) / 3.0)
        .collect();
    Ok(ia.with_values(values))
}

/// One second-order section in transposed direct form II.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    /// Denominator `[a1, a2]` with `a0` normalised to one.
    pub a: [f64; 2],
}

impl Biquad {
    fn lowpass(k: f64, q: f64) -> Self {
        let norm = 1.0 / (1.0 + k / q + k * k);
        let b0 = k * k * norm;
        Biquad {
            b: [b0, 2.0 * b0, b0],
            a: [2.0 * (k * k - 1.0) * norm, (1.0 - k / q + k * k) * norm],
        }
    }

    /// Complex response at the normalised angular frequency `w` (rad/sample).
    pub fn response(&self, w: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -w);
        let z2 = z1 * z1;
        (self.b[0] + self.b[1] * z1 + self.b[2] * z2) / (1.0 + self.a[0] * z1 + self.a[1] * z2)
    }

    fn run(&self, x: &mut [f64]) {
        let Some(&first) = x.first() else { return };
        // state initialised to the steady state of a constant input equal to x[0]
        let dc = self.b.iter().sum::<f64>() / (1.0 + self.a[0] + self.a[1]);
        let y0 = dc * first;
        let mut s2 = self.b[2] * first - self.a[1] * y0;
        let mut s1 = self.b[1] * first - self.a[0] * y0 + s2;
        for v in x.iter_mut() {
            let input = *v;
            let y = self.b[0] * input + s1;
            s1 = self.b[1] * input - self.a[0] * y + s2;
            s2 = self.b[2] * input - self.a[1] * y;
            *v = y;
        }
    }
}

/// Digital Butterworth low-pass designed by the bilinear transform with
/// frequency pre-warping, realised as cascaded biquads.
#[derive(Debug, Clone, PartialEq)]
pub struct Butterworth {
    sections: Vec<Biquad>,
    order: usize,
    cutoff: f64,
    fs: f64,
}

impl Butterworth {
    pub const DEFAULT_ORDER: usize = 4;

    pub fn lowpass(order: usize, cutoff: f64, fs: f64) -> Result<Self> {
        if order == 0 || order % 2 != 0 {
            return Err(Error::Parameter(format!(
                "Butterworth order must be a positive even number, got {order}"
            )));
        }
        if !(cutoff > 0.0 && cutoff < fs / 2.0) {
            return Err(Error::Parameter(format!(
                "cut-off {cutoff} Hz must lie strictly between 0 and fs/2 = {} Hz",
                fs / 2.0
            )));
        }
        let k = (PI * cutoff / fs).tan();
        let sections = (0..order / 2)
            .map(|i| {
                let angle = PI * (2 * i + 1) as f64 / (2 * order) as f64;
                Biquad::lowpass(k, 1.0 / (2.0 * angle.cos()))
            })
            .collect();
        Ok(Self {
            sections,
            order,
            cutoff,
            fs,
        })
    }

    pub fn sections(&self) -> &[Biquad] {
        &self.sections
    }

    /// Magnitude of a single (causal) pass at frequency `f` in Hz.
    pub fn magnitude(&self, f: f64) -> f64 {
        let w = 2.0 * PI * f / self.fs;
        self.sections
            .iter()
            .map(|s| s.response(w))
            .fold(Complex64::new(1.0, 0.0), |acc, h| acc * h)
            .norm()
    }

    /// Closed-form magnitude of the bilinear Butterworth design:
    /// `1 / sqrt(1 + (tan(pi f/fs) / tan(pi fc/fs))^(2N))`.
    pub fn analytic_magnitude(&self, f: f64) -> f64 {
        let ratio = (PI * f / self.fs).tan() / (PI * self.cutoff / self.fs).tan();
        1.0 / (1.0 + ratio.powi(2 * self.order as i32)).sqrt()
    }

    /// Causal single pass.
    pub fn filter_in_place(&self, x: &mut [f64]) {
        for s in &self.sections {
            s.run(x);
        }
    }

    /// Zero-phase forward-backward application with odd reflection padding of
    /// `pad` samples at each end.
    pub fn filtfilt(&self, x: &[f64], pad: usize) -> Vec<f64> {
        let n = x.len();
        if n == 0 {
            return Vec::new();
        }
        let pad = pad.min(n - 1);
        let mut buf = Vec::with_capacity(n + 2 * pad);
        buf.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
        buf.extend_from_slice(x);
        buf.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));
        self.filter_in_place(&mut buf);
        buf.reverse();
        self.filter_in_place(&mut buf);
        buf.reverse();
        buf[pad..pad + n].to_vec()
    }
}

/// Zero-phase 4th-order Butterworth low-pass, reflect-padded by one cycle.
pub fn lowpass(s: &SampleSeries, fc: f64) -> Result<SampleSeries> {
    let filter = Butterworth::lowpass(Butterworth::DEFAULT_ORDER, fc, s.fs())?;
    Ok(s.with_values(filter.filtfilt(s.values(), s.samples_per_cycle())))
}

/// Amplitude and phase of the power-frequency component over one cycle.
///
/// The phase uses a cosine reference against absolute time: `A cos(w t + p)`
/// yields `(A, p)` with `p` in `(-pi, pi]`. A vanishing component reports a
/// phase of zero.
pub fn fundamental_phasor(s: &SampleSeries, cycle_index: usize) -> Result<(f64, f64)> {
    let nt = s.samples_per_cycle();
    let start = cycle_index
        .checked_mul(nt)
        .filter(|start| start + nt <= s.len())
        .ok_or_else(|| {
            Error::Range(format!(
                "cycle {cycle_index} is outside a series of {} complete cycles",
                s.cycles()
            ))
        })?;
    Ok(phasor_of(&s.values()[start..start + nt], s.time(start), s.omega(), s.fs()))
}

/// Single-bin DFT at `omega` over `window` whose first sample is at time `t_start`.
pub(crate) fn phasor_of(window: &[f64], t_start: f64, omega: f64, fs: f64) -> (f64, f64) {
    let n = window.len() as f64;
    let acc = window
        .iter()
        .enumerate()
        .fold(Complex64::new(0.0, 0.0), |acc, (i, &v)| {
            let t = t_start + i as f64 / fs;
            acc + v * Complex64::from_polar(1.0, -omega * t)
        });
    let x = acc * (2.0 / n);
    let amplitude = x.norm();
    let scale = window.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if amplitude <= 1e-13 * scale || amplitude == 0.0 {
        return (amplitude, 0.0);
    }
    let mut phase = x.arg();
    if phase <= -PI {
        phase = PI;
    }
    (amplitude, phase)
}
