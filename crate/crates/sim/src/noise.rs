//! Measurement noise, arcing impulses and healthy-network records.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use hifid_core::{FeederId, NeutralType, SampleSeries, SynchronizedRecord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{SimError, SimResult};
use crate::network::{feeder_id, TRANSFORMER_ID};

fn channel_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn rebuild(
    record: &SynchronizedRecord,
    mut f: impl FnMut(usize, &SampleSeries) -> SampleSeries,
) -> SimResult<SynchronizedRecord> {
    let u0b = f(0, record.u0b());
    let feeders = record
        .feeders()
        .iter()
        .enumerate()
        .map(|(i, (id, s))| (id.clone(), f(i + 1, s)))
        .collect();
    Ok(SynchronizedRecord::new(u0b, feeders, record.neutral())?)
}

/// Adds white Gaussian noise at `snr_db` relative to each channel's RMS and
/// Poisson-placed single-sample impulses of `impulse_gain` times the channel
/// peak, `impulse_rate` per cycle on average.
///
/// Impulse instants are shared by all current channels (one arcing event is
/// seen by every feeder); signs are drawn per channel. An infinite `snr_db`
/// disables the Gaussian part.
pub fn add_noise(
    record: &SynchronizedRecord,
    snr_db: f64,
    impulse_rate: f64,
    impulse_gain: f64,
    seed: u64,
) -> SimResult<SynchronizedRecord> {
    if !(snr_db > 0.0) {
        return Err(SimError::param(format!("SNR must be positive, got {snr_db} dB")));
    }
    if !(impulse_rate >= 0.0 && impulse_rate.is_finite()) {
        return Err(SimError::param("impulse rate must be a non-negative number"));
    }
    let nt = record.samples_per_cycle();
    let len = record.len();
    let mut instants = Vec::new();
    if impulse_rate > 0.0 {
        let mut rng = channel_rng(seed, u64::MAX);
        let poisson = Poisson::new(impulse_rate).map_err(|e| SimError::param(e.to_string()))?;
        for start in (0..len).step_by(nt) {
            let count = poisson.sample(&mut rng) as usize;
            for _ in 0..count {
                instants.push(start + rng.random_range(0..nt.min(len - start)));
            }
        }
    }
    rebuild(record, |stream, s| {
        let mut rng = channel_rng(seed, stream as u64);
        let mut values = s.values().to_vec();
        if snr_db.is_finite() {
            let sigma = s.rms() / 10f64.powf(snr_db / 20.0);
            if sigma > 0.0 {
                let normal = Normal::new(0.0, sigma).expect("finite positive deviation");
                values.iter_mut().for_each(|v| *v += normal.sample(&mut rng));
            }
        }
        if stream > 0 {
            let peak = s.peak();
            for &n in &instants {
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                values[n] += sign * impulse_gain * peak;
            }
        }
        s.with_values(values)
    })
}

/// Adds exactly one single-sample impulse of `gain` times the channel peak to
/// every cycle of every current channel, at a random position and sign.
pub fn inject_impulses_per_cycle(
    record: &SynchronizedRecord,
    gain: f64,
    seed: u64,
) -> SimResult<SynchronizedRecord> {
    let nt = record.samples_per_cycle();
    rebuild(record, |stream, s| {
        if stream == 0 {
            return s.clone();
        }
        let mut rng = channel_rng(seed, stream as u64);
        let peak = s.peak();
        let mut values = s.values().to_vec();
        for start in (0..values.len()).step_by(nt) {
            let n = start + rng.random_range(0..nt.min(values.len() - start));
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            values[n] += sign * gain * peak;
        }
        s.with_values(values)
    })
}

/// A switching transient: at `cycle` the bus unbalance voltage steps by
/// `step` (relative) and feeder `feeder` draws a damped oscillation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchingEvent {
    pub cycle: f64,
    pub feeder: usize,
    pub step: f64,
    /// Oscillation frequency in Hz.
    pub frequency: f64,
    /// Oscillation peak relative to the feeder's steady current peak.
    pub magnitude: f64,
    /// Decay time constant in seconds.
    pub decay: f64,
}

/// Un-faulted network: capacitive unbalance currents plus disturbances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthyScenario {
    pub neutral: NeutralType,
    pub c0: Vec<f64>,
    /// Bus zero-sequence unbalance voltage peak, in volts.
    pub u_m: f64,
    pub phi: f64,
    /// Third-harmonic content of the unbalance voltage (relative).
    pub third_harmonic: f64,
    pub switching: Vec<SwitchingEvent>,
    pub snr_db: f64,
    pub impulse_rate: f64,
    pub impulse_gain: f64,
    pub cycles: usize,
    pub fs: f64,
    pub f0: f64,
}

impl HealthyScenario {
    /// A randomised scenario with 3 to 5 feeders, 30–45 dB noise, arcing-like
    /// impulses and one or two switching events.
    pub fn random(seed: u64, cycles: usize) -> Self {
        let mut rng = channel_rng(seed, 0);
        let feeders = rng.random_range(3..=5);
        let c0: Vec<f64> = (0..feeders).map(|_| rng.random_range(0.2e-6..4e-6)).collect();
        let events = rng.random_range(1..=2);
        let switching = (0..events)
            .map(|_| SwitchingEvent {
                cycle: rng.random_range(2.0..(cycles as f64 - 2.0)),
                feeder: rng.random_range(0..feeders),
                step: rng.random_range(-0.4..0.4),
                frequency: rng.random_range(250.0..1200.0),
                magnitude: rng.random_range(0.3..2.0),
                decay: rng.random_range(0.002..0.02),
            })
            .collect();
        let neutral = match rng.random_range(0..3) {
            0 => NeutralType::Isolated,
            1 => NeutralType::Resonant,
            _ => NeutralType::LowResistor,
        };
        Self {
            neutral,
            c0,
            u_m: rng.random_range(50.0..600.0),
            phi: rng.random_range(-PI..PI),
            third_harmonic: rng.random_range(0.0..0.02),
            switching,
            snr_db: rng.random_range(30.0..45.0),
            impulse_rate: rng.random_range(0.0..1.0),
            impulse_gain: rng.random_range(0.5..3.0),
            cycles,
            fs: 6400.0,
            f0: 50.0,
        }
    }
}

/// Generates the record of a healthy scenario; the transformer channel closes KCL.
pub fn healthy_record(scenario: &HealthyScenario, seed: u64) -> SimResult<SynchronizedRecord> {
    let s = scenario;
    let ratio = s.fs / s.f0;
    if (ratio - ratio.round()).abs() > 1e-9 || s.c0.is_empty() {
        return Err(SimError::param("healthy scenario needs fs/f0 integral and feeders"));
    }
    let nt = ratio.round() as usize;
    let len = nt * s.cycles;
    let omega = TAU * s.f0;
    let period = 1.0 / s.f0;
    // bus voltage u(t) and its derivative, both analytic
    let bus = |t: f64| -> (f64, f64) {
        let mut amp = s.u_m;
        for e in &s.switching {
            if t >= e.cycle * period {
                amp *= 1.0 + e.step;
            }
        }
        let a = omega * t + s.phi - FRAC_PI_2;
        let h = s.third_harmonic;
        (
            amp * (a.sin() + h * (3.0 * a).sin()),
            amp * omega * (a.cos() + 3.0 * h * (3.0 * a).cos()),
        )
    };
    let mut u0b = vec![0.0; len];
    let mut feeders: Vec<Vec<f64>> = vec![vec![0.0; len]; s.c0.len()];
    for n in 0..len {
        let t = n as f64 / s.fs;
        let (u, du) = bus(t);
        u0b[n] = u;
        for (i, c) in s.c0.iter().enumerate() {
            feeders[i][n] = c * du;
        }
        for e in &s.switching {
            let ts = e.cycle * period;
            if t >= ts && e.feeder < s.c0.len() {
                let steady = omega * s.c0[e.feeder] * s.u_m;
                let x = t - ts;
                feeders[e.feeder][n] +=
                    e.magnitude * steady * (-x / e.decay).exp() * (TAU * e.frequency * x).sin();
            }
        }
    }
    let transformer: Vec<f64> = (0..len).map(|n| -feeders.iter().map(|f| f[n]).sum::<f64>()).collect();
    let series = |v: Vec<f64>| SampleSeries::new(v, s.fs, s.f0, 0.0);
    let mut channels: Vec<(FeederId, SampleSeries)> = feeders
        .into_iter()
        .enumerate()
        .map(|(i, v)| Ok((feeder_id(i), series(v)?)))
        .collect::<hifid_core::Result<_>>()?;
    channels.push((FeederId::new(TRANSFORMER_ID), series(transformer)?));
    let clean = SynchronizedRecord::new(series(u0b)?, channels, s.neutral)?;
    add_noise(&clean, s.snr_db, s.impulse_rate, s.impulse_gain, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record() -> SynchronizedRecord {
        let s = HealthyScenario {
            switching: Vec::new(),
            snr_db: f64::INFINITY,
            impulse_rate: 0.0,
            ..HealthyScenario::random(3, 12)
        };
        healthy_record(&s, 0).unwrap()
    }

    #[test]
    fn infinite_snr_without_impulses_is_identity() {
        let r = record();
        assert_eq!(add_noise(&r, f64::INFINITY, 0.0, 5.0, 9).unwrap(), r);
    }

    #[test]
    fn same_seed_same_output() {
        let r = record();
        let a = add_noise(&r, 30.0, 0.5, 2.0, 42).unwrap();
        let b = add_noise(&r, 30.0, 0.5, 2.0, 42).unwrap();
        let c = add_noise(&r, 30.0, 0.5, 2.0, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn measured_snr_tracks_request() {
        let r = record();
        for snr in [20.0, 30.0, 40.0] {
            let noisy = add_noise(&r, snr, 0.0, 0.0, 7).unwrap();
            for ((_, clean), (_, dirty)) in r.feeders().iter().zip(noisy.feeders()) {
                let nt = 128;
                for w in 0..clean.len() / (10 * nt) {
                    let range = w * 10 * nt..(w + 1) * 10 * nt;
                    let sig: f64 = clean.values()[range.clone()].iter().map(|v| v * v).sum();
                    let noise: f64 = clean.values()[range.clone()]
                        .iter()
                        .zip(&dirty.values()[range])
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    let measured = 10.0 * (sig / noise).log10();
                    assert!((measured - snr).abs() < 0.5, "{measured} vs {snr}");
                }
            }
        }
    }

    #[test]
    fn one_impulse_per_cycle() {
        let r = record();
        let hit = inject_impulses_per_cycle(&r, 10.0, 5).unwrap();
        assert_eq!(hit.u0b(), r.u0b());
        for ((_, a), (_, b)) in r.feeders().iter().zip(hit.feeders()) {
            for c in 0..a.cycles() {
                let range = c * 128..(c + 1) * 128;
                let changed: Vec<f64> = a.values()[range.clone()]
                    .iter()
                    .zip(&b.values()[range])
                    .map(|(x, y)| (y - x).abs())
                    .filter(|d| *d > 0.0)
                    .collect();
                assert_eq!(changed.len(), 1);
                assert!((changed[0] - 10.0 * a.peak()).abs() < 1e-9 * a.peak());
            }
        }
    }

    #[test]
    fn healthy_record_closes_kcl_before_noise() {
        let s = HealthyScenario {
            snr_db: f64::INFINITY,
            impulse_rate: 0.0,
            ..HealthyScenario::random(11, 20)
        };
        let r = healthy_record(&s, 0).unwrap();
        let peak = r.feeders().iter().map(|(_, s)| s.peak()).fold(0.0, f64::max);
        assert!(r.feeder_sum().iter().all(|v| v.abs() < 1e-9 * peak));
    }

    #[test]
    fn rejects_non_positive_snr() {
        assert!(add_noise(&record(), 0.0, 0.0, 0.0, 1).is_err());
    }
}
