//! Closed-form fault-state currents for the three neutral arrangements.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use hifid_core::{FeederId, NeutralType, SampleSeries, SynchronizedRecord};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{SimError, SimResult};
use crate::params::{DistortionSpec, NetworkParams};
use crate::waveform::DistortionWaveform;

pub const TRANSFORMER_ID: &str = "T";

pub fn feeder_id(index: usize) -> FeederId {
    FeederId::new(format!("F{}", index + 1))
}

/// A channel split into its sinusoidal and distorted parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub sinusoid: Vec<f64>,
    pub distortion: Vec<f64>,
}

impl Channel {
    fn new(len: usize) -> Self {
        Self {
            sinusoid: vec![0.0; len],
            distortion: vec![0.0; len],
        }
    }

    pub fn total(&self) -> Vec<f64> {
        self.sinusoid
            .iter()
            .zip(&self.distortion)
            .map(|(s, d)| s + d)
            .collect()
    }

    fn negated_sum<'a>(parts: impl Iterator<Item = &'a Channel>, len: usize) -> Self {
        let mut out = Self::new(len);
        for c in parts {
            for n in 0..len {
                out.sinusoid[n] -= c.sinusoid[n];
                out.distortion[n] -= c.distortion[n];
            }
        }
        out
    }
}

/// Noise-free solution of a faulted network with every component kept apart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSolution {
    pub params: NetworkParams,
    pub spec: DistortionSpec,
    pub fs: f64,
    pub f0: f64,
    /// Bus voltage sinusoid peak.
    pub u_m: f64,
    pub u0b: Channel,
    /// Feeders in order, transformer channel last.
    pub feeders: Vec<(FeederId, Channel)>,
    /// Fault current `i₀f`.
    pub fault: Channel,
}

impl NetworkSolution {
    pub fn faulty_id(&self) -> FeederId {
        feeder_id(self.params.faulty)
    }

    pub fn channel(&self, id: &FeederId) -> Option<&Channel> {
        self.feeders.iter().find(|(f, _)| f == id).map(|(_, c)| c)
    }

    pub fn to_record(&self) -> SimResult<SynchronizedRecord> {
        let series = |v: Vec<f64>| SampleSeries::new(v, self.fs, self.f0, 0.0);
        let feeders = self
            .feeders
            .iter()
            .map(|(id, c)| Ok((id.clone(), series(c.total())?)))
            .collect::<hifid_core::Result<Vec<_>>>()?;
        Ok(SynchronizedRecord::new(
            series(self.u0b.total())?,
            feeders,
            self.params.neutral,
        )?)
    }
}

fn check_grid(fs: f64, f0: f64, cycles: usize) -> SimResult<usize> {
    let ratio = fs / f0;
    if !(fs > 0.0) || (ratio - ratio.round()).abs() > 1e-9 || cycles == 0 {
        return Err(SimError::param(format!(
            "sampling rate {fs} Hz must be a multiple of {f0} Hz and cycles positive"
        )));
    }
    Ok(ratio.round() as usize * cycles)
}

fn sine(len: usize, fs: f64, omega: f64, amp: f64, phase: f64) -> Vec<f64> {
    (0..len)
        .map(|n| amp * (omega * n as f64 / fs + phase).sin())
        .collect()
}

fn sampled(w: &DistortionWaveform, len: usize, fs: f64) -> Vec<f64> {
    (0..len).map(|n| w.value(n as f64 / fs)).collect()
}

/// Trapezoidal integral of `x` with the mean of every complete cycle removed.
pub fn integrate_zero_mean(x: &[f64], fs: f64, samples_per_cycle: usize) -> Vec<f64> {
    let dt = 1.0 / fs;
    let mut out = Vec::with_capacity(x.len());
    let mut acc = 0.0;
    for (n, &v) in x.iter().enumerate() {
        if n > 0 {
            acc += 0.5 * dt * (x[n - 1] + v);
        }
        out.push(acc);
    }
    for chunk in out.chunks_mut(samples_per_cycle) {
        let mean = chunk.iter().sum::<f64>() / chunk.len() as f64;
        chunk.iter_mut().for_each(|v| *v -= mean);
    }
    out
}

/// Builds the record for whichever neutral `params` declares.
pub fn solve(
    params: &NetworkParams,
    spec: &DistortionSpec,
    fs: f64,
    cycles: usize,
) -> SimResult<NetworkSolution> {
    match params.neutral {
        NeutralType::Resonant => solve_resonant(params, spec, fs, cycles),
        NeutralType::Isolated => solve_isolated(params, spec, fs, cycles),
        NeutralType::LowResistor => solve_low_resistor(params, spec, fs, cycles),
    }
}

fn prepare(
    params: &NetworkParams,
    spec: &DistortionSpec,
    neutral: NeutralType,
) -> SimResult<()> {
    if params.neutral != neutral {
        return Err(SimError::param(format!(
            "expected a {neutral} network, got {}",
            params.neutral
        )));
    }
    params.validate()?;
    spec.validate()
}

/// Gains of the coil and of each feeder capacitance on the fault distortion:
/// `Δi₀L = g_L·Δi₀f` and `Δi₀C₀ᵢ = gᵢ·Δi₀f`.
pub fn resonant_gains(params: &NetworkParams) -> SimResult<(f64, Vec<f64>)> {
    resonant_gains_stretched(params, 1.0)
}

/// Gains for a distortion piece whose angle is warped by `stretch`, so that
/// it oscillates at `2·stretch` times the fundamental.
pub fn resonant_gains_stretched(params: &NetworkParams, stretch: f64) -> SimResult<(f64, Vec<f64>)> {
    let m = params.tuning()? * stretch * stretch;
    let denom = 1.0 - 4.0 * m;
    let c_sum = params.c0_sum();
    let g_l = 1.0 / denom;
    let g_c = params
        .c0
        .iter()
        .map(|c| -4.0 * m * (c / c_sum) / denom)
        .collect();
    Ok((g_l, g_c))
}

/// Resonant neutral: the coil and the feeder capacitances share the fault
/// distortion with gains fixed by `4ω²LC₀Σ`.
pub fn solve_resonant(
    params: &NetworkParams,
    spec: &DistortionSpec,
    fs: f64,
    cycles: usize,
) -> SimResult<NetworkSolution> {
    prepare(params, spec, NeutralType::Resonant)?;
    let f0 = params.omega / TAU;
    let len = check_grid(fs, f0, cycles)?;
    let omega = params.omega;
    let c_sum = params.c0_sum();
    let v = params.detuning()?;
    let l = params.inductance()?;
    // I_fM = U_M (1/(ωL) − ωC₀Σ) = −v·ω·C₀Σ·U_M
    let u_m = spec.i_fm / (-v * omega * c_sum);
    let i_ml = u_m / (omega * l);

    let phi = spec.phi;
    let fault_wave = DistortionWaveform::from_spec(spec, phi - PI, omega)?;
    let df = sampled(&fault_wave, len, fs);
    // the rising and falling pieces differ in stretch once the shape is offset
    let mut gains = Vec::with_capacity(2);
    for p in &fault_wave.pieces()[..2] {
        gains.push((p.slope.abs(), resonant_gains_stretched(params, p.slope.abs())?));
    }
    let gain_at = |n: usize| {
        let s = fault_wave.piece_of(fault_wave.local_angle(n as f64 / fs)).slope.abs();
        &gains.iter().find(|(k, _)| *k == s).expect("every piece stretch has gains").1
    };

    let coil = Channel {
        sinusoid: sine(len, fs, omega, i_ml, phi - PI),
        distortion: df.iter().enumerate().map(|(n, d)| gain_at(n).0 * d).collect(),
    };
    let caps: Vec<Channel> = params
        .c0
        .iter()
        .enumerate()
        .map(|(i, c)| Channel {
            sinusoid: sine(len, fs, omega, omega * c * u_m, phi),
            distortion: df.iter().enumerate().map(|(n, d)| gain_at(n).1[i] * d).collect(),
        })
        .collect();

    let n = params.faulty;
    let faulty = Channel::negated_sum(
        std::iter::once(&coil).chain(caps.iter().enumerate().filter(|(i, _)| *i != n).map(|(_, c)| c)),
        len,
    );
    let nt = len / cycles;
    let cap_dist_sum: Vec<f64> = df.iter().enumerate().map(|(n, d)| (1.0 - gain_at(n).0) * d).collect();
    let u0b = Channel {
        sinusoid: sine(len, fs, omega, u_m, phi - FRAC_PI_2),
        distortion: integrate_zero_mean(&cap_dist_sum, fs, nt)
            .into_iter()
            .map(|x| x / c_sum)
            .collect(),
    };
    let fault = Channel {
        sinusoid: sine(len, fs, omega, spec.i_fm, phi - PI),
        distortion: df,
    };

    let mut feeders: Vec<(FeederId, Channel)> = caps
        .into_iter()
        .enumerate()
        .map(|(i, c)| (feeder_id(i), if i == n { faulty.clone() } else { c }))
        .collect();
    feeders.push((FeederId::new(TRANSFORMER_ID), coil));
    Ok(NetworkSolution {
        params: params.clone(),
        spec: spec.clone(),
        fs,
        f0,
        u_m,
        u0b,
        feeders,
        fault,
    })
}

/// Isolated neutral: the fault current returns through the capacitances
/// alone, so each branch takes a capacitance-proportional share of the
/// distortion. The transformer channel is the capacitive branch `C₀L`.
pub fn solve_isolated(
    params: &NetworkParams,
    spec: &DistortionSpec,
    fs: f64,
    cycles: usize,
) -> SimResult<NetworkSolution> {
    prepare(params, spec, NeutralType::Isolated)?;
    let f0 = params.omega / TAU;
    let len = check_grid(fs, f0, cycles)?;
    let omega = params.omega;
    let total = params.c0_sum() + params.c0l;
    let u_m = spec.i_fm / (omega * total);
    let phi = spec.phi;
    let fault_wave = DistortionWaveform::from_spec(spec, phi, omega)?;
    let df = sampled(&fault_wave, len, fs);

    let branch = |c: f64| Channel {
        sinusoid: sine(len, fs, omega, omega * c * u_m, phi),
        distortion: df.iter().map(|d| c / total * d).collect(),
    };
    let n = params.faulty;
    let mut feeders: Vec<(FeederId, Channel)> =
        params.c0.iter().enumerate().map(|(i, &c)| (feeder_id(i), branch(c))).collect();
    let transformer = branch(params.c0l);
    let faulty = Channel::negated_sum(
        feeders
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != n)
            .map(|(_, (_, c))| c)
            .chain(std::iter::once(&transformer)),
        len,
    );
    feeders[n].1 = faulty;
    feeders.push((FeederId::new(TRANSFORMER_ID), transformer));

    let nt = len / cycles;
    let u0b = Channel {
        sinusoid: sine(len, fs, omega, u_m, phi - FRAC_PI_2),
        distortion: integrate_zero_mean(&df, fs, nt)
            .into_iter()
            .map(|x| x / total)
            .collect(),
    };
    let fault = Channel {
        sinusoid: sine(len, fs, omega, spec.i_fm, phi),
        distortion: df,
    };
    Ok(NetworkSolution {
        params: params.clone(),
        spec: spec.clone(),
        fs,
        f0,
        u_m,
        u0b,
        feeders,
        fault,
    })
}

/// Exact periodic solution of `x + κ·dx/dα = f(α)` for a piecewise
/// distortion forcing `f`, where `α` is the forcing's local angle.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstOrderResponse {
    pub forcing: DistortionWaveform,
    pub kappa: f64,
    /// `x` at the start of each piece.
    starts: [f64; 4],
}

impl FirstOrderResponse {
    pub fn new(forcing: DistortionWaveform, kappa: f64) -> Self {
        let mut r = Self {
            forcing,
            kappa,
            starts: [0.0; 4],
        };
        // march one period from x(0) = 0; the map x(0) -> x(2π) is affine with
        // slope e^{-2π/κ}, which fixes the periodic initial value
        let mut x = 0.0;
        for k in 0..4 {
            r.starts[k] = x;
            let p = r.forcing.pieces()[k];
            x = r.propagate(k, x, p.end);
        }
        let decay = (-TAU / kappa).exp();
        let x0 = x / (1.0 - decay);
        let mut x = x0;
        for k in 0..4 {
            r.starts[k] = x;
            let p = r.forcing.pieces()[k];
            x = r.propagate(k, x, p.end);
        }
        r
    }

    fn particular(&self, k: usize, alpha: f64) -> f64 {
        let p = self.forcing.pieces()[k];
        let (g, lambda) = self.forcing.piece_exponential(&p);
        (g * (lambda * alpha).exp() / (Complex64::new(1.0, 0.0) + lambda * self.kappa)).im
    }

    fn propagate(&self, k: usize, x_start: f64, alpha: f64) -> f64 {
        if self.forcing.amplitude == 0.0 {
            return x_start * (-(alpha - self.forcing.pieces()[k].start) / self.kappa).exp();
        }
        let start = self.forcing.pieces()[k].start;
        let xp0 = self.particular(k, start);
        self.particular(k, alpha) + (x_start - xp0) * (-(alpha - start) / self.kappa).exp()
    }

    pub fn at_angle(&self, alpha: f64) -> f64 {
        let pieces = self.forcing.pieces();
        let k = pieces.iter().position(|p| alpha < p.end).unwrap_or(3);
        self.propagate(k, self.starts[k], alpha)
    }

    pub fn value(&self, t: f64) -> f64 {
        self.at_angle(self.forcing.local_angle(t))
    }
}

/// Low-resistor neutral: the resistor branch low-pass filters the fault
/// distortion with time constant `R_N·C₀Σ`; the capacitances carry the rest.
pub fn solve_low_resistor(
    params: &NetworkParams,
    spec: &DistortionSpec,
    fs: f64,
    cycles: usize,
) -> SimResult<NetworkSolution> {
    prepare(params, spec, NeutralType::LowResistor)?;
    let f0 = params.omega / TAU;
    let len = check_grid(fs, f0, cycles)?;
    let omega = params.omega;
    let r_n = params.resistor()?;
    let c_sum = params.c0_sum();
    let theta = params.admittance_angle()?;
    if let Some(given) = spec.theta {
        if (given - theta).abs() > 1e-9 {
            return Err(SimError::param(format!(
                "spec lag {given} disagrees with the network admittance angle {theta}"
            )));
        }
    }
    let theta_f = params.faulty_feeder_angle()?;
    if !(theta < theta_f && theta_f < FRAC_PI_2) {
        return Err(SimError::param("faulty feeder lag must exceed the network lag"));
    }
    let u_m = spec.i_fm / ((1.0 / r_n).hypot(omega * c_sum));
    let phi = spec.phi;
    let fault_wave = DistortionWaveform::from_spec(spec, phi - theta, omega)?;
    let df = sampled(&fault_wave, len, fs);
    let kappa = omega * r_n * c_sum;
    let response = FirstOrderResponse::new(fault_wave, kappa);
    let dl: Vec<f64> = (0..len).map(|n| response.value(n as f64 / fs)).collect();

    let resistor = Channel {
        sinusoid: sine(len, fs, omega, u_m / r_n, phi - FRAC_PI_2),
        distortion: dl.clone(),
    };
    let caps: Vec<Channel> = params
        .c0
        .iter()
        .map(|c| Channel {
            sinusoid: sine(len, fs, omega, omega * c * u_m, phi),
            distortion: df.iter().zip(&dl).map(|(f, x)| c / c_sum * (f - x)).collect(),
        })
        .collect();
    let n = params.faulty;
    let faulty = Channel::negated_sum(
        std::iter::once(&resistor)
            .chain(caps.iter().enumerate().filter(|(i, _)| *i != n).map(|(_, c)| c)),
        len,
    );
    let mut feeders: Vec<(FeederId, Channel)> = caps
        .into_iter()
        .enumerate()
        .map(|(i, c)| (feeder_id(i), if i == n { faulty.clone() } else { c }))
        .collect();
    feeders.push((FeederId::new(TRANSFORMER_ID), resistor));

    let u0b = Channel {
        sinusoid: sine(len, fs, omega, u_m, phi - FRAC_PI_2),
        distortion: dl.iter().map(|x| r_n * x).collect(),
    };
    let fault = Channel {
        sinusoid: sine(len, fs, omega, spec.i_fm, phi - theta),
        distortion: df,
    };
    Ok(NetworkSolution {
        params: params.clone(),
        spec: spec.clone(),
        fs,
        f0,
        u_m,
        u0b,
        feeders,
        fault,
    })
}
