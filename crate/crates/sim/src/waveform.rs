//! Piecewise model of the zero-crossing distortion of an arcing fault current.
//!
//! Within one cycle of the local angle `α = ωt + ψ (mod 2π)` the shape is
//! four quarter-pieces. On the first piece it is `−e^{cβ}·sin 2β` with `β`
//! running from 0 to π/2, the second piece mirrors the first, and the second
//! half-cycle repeats the first with opposite sign. `c = τ/ω`. A non-zero
//! offset moves the junction of the two mirrored pieces away from `α = π/2`
//! by time-warping both pieces.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use hifid_core::SampleSeries;
use num_complex::Complex64;

use crate::error::SimResult;
use crate::params::DistortionSpec;

/// One quarter-piece: on `[start, end)` in local angle the shape equals
/// `sign · e^{cβ} sin 2β` with `β = slope·α + intercept`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Piece {
    pub start: f64,
    pub end: f64,
    pub sign: f64,
    pub slope: f64,
    pub intercept: f64,
}

/// Analytic distortion attached to a sinusoid of phase `psi`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistortionWaveform {
    pub amplitude: f64,
    pub decay: f64,
    pub offset: f64,
    pub psi: f64,
    pub omega: f64,
    norm: f64,
}

impl DistortionWaveform {
    pub fn new(amplitude: f64, tau: f64, offset: f64, psi: f64, omega: f64) -> Self {
        let decay = tau / omega;
        let beta_peak = if decay == 0.0 {
            PI / 4.0
        } else {
            0.5 * (2.0 / decay.abs()).atan()
        };
        let norm = (decay * beta_peak).exp() * (2.0 * beta_peak).sin();
        Self {
            amplitude,
            decay,
            offset,
            psi,
            omega,
            norm,
        }
    }

    /// Fault current distortion of `spec`, attached to phase `psi`.
    pub fn from_spec(spec: &DistortionSpec, psi: f64, omega: f64) -> SimResult<Self> {
        spec.validate()?;
        Ok(Self::new(spec.i_fm_dist, spec.tau, spec.offset_delta, psi, omega))
    }

    /// Same shape and size, attached to a sinusoid shifted by `shift` radians.
    pub fn shifted(&self, shift: f64) -> Self {
        Self {
            psi: self.psi + shift,
            ..self.clone()
        }
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            amplitude: self.amplitude * gain,
            ..self.clone()
        }
    }

    /// The four pieces of one cycle in local angle.
    pub fn pieces(&self) -> [Piece; 4] {
        let rise = FRAC_PI_2 + self.offset;
        let fall = FRAC_PI_2 - self.offset;
        let s0 = FRAC_PI_2 / rise;
        let s1 = FRAC_PI_2 / fall;
        [
            Piece {
                start: 0.0,
                end: rise,
                sign: -1.0,
                slope: s0,
                intercept: 0.0,
            },
            Piece {
                start: rise,
                end: PI,
                sign: -1.0,
                slope: -s1,
                intercept: PI * s1,
            },
            Piece {
                start: PI,
                end: PI + rise,
                sign: 1.0,
                slope: s0,
                intercept: -PI * s0,
            },
            Piece {
                start: PI + rise,
                end: TAU,
                sign: 1.0,
                slope: -s1,
                intercept: TAU * s1,
            },
        ]
    }

    pub fn local_angle(&self, t: f64) -> f64 {
        (self.omega * t + self.psi).rem_euclid(TAU)
    }

    pub fn piece_of(&self, alpha: f64) -> Piece {
        let pieces = self.pieces();
        let k = pieces.iter().position(|p| alpha < p.end).unwrap_or(3);
        pieces[k]
    }

    /// Value at local angle `alpha ∈ [0, 2π)`.
    pub fn at_angle(&self, alpha: f64) -> f64 {
        let p = self.piece_of(alpha);
        let beta = p.slope * alpha + p.intercept;
        p.sign * self.amplitude / self.norm * (self.decay * beta).exp() * (2.0 * beta).sin()
    }

    /// Value at time `t`.
    pub fn value(&self, t: f64) -> f64 {
        if self.amplitude == 0.0 {
            return 0.0;
        }
        self.at_angle(self.local_angle(t))
    }

    /// Complex form of a piece: the shape equals `Im(G·e^{λα})` on the piece.
    pub fn piece_exponential(&self, p: &Piece) -> (Complex64, Complex64) {
        let k = Complex64::new(self.decay, 2.0);
        let g = k * p.intercept;
        let gain = p.sign * self.amplitude / self.norm;
        (g.exp() * gain, k * p.slope)
    }

    pub fn sample(&self, fs: f64, f0: f64, len: usize) -> SimResult<SampleSeries> {
        Ok(SampleSeries::from_fn(len, fs, f0, 0.0, |t| self.value(t))?)
    }
}

/// The fault current distortion for `spec`, attached to the fault current
/// phase `φ − π`, sampled over `cycles` cycles.
pub fn synth_fault_distortion(
    spec: &DistortionSpec,
    fs: f64,
    cycles: usize,
) -> SimResult<SampleSeries> {
    let f0 = 50.0;
    let omega = 2.0 * PI * f0;
    let wave = DistortionWaveform::from_spec(spec, spec.phi - PI, omega)?;
    let nt = (fs / f0).round() as usize;
    wave.sample(fs, f0, nt * cycles)
}
