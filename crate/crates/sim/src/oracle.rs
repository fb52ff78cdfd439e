//! Numerical reference solutions for the distorted neutral-branch current.
//!
//! Low-resistor: the first-order equation `x + R_N C₀Σ·ẋ = f` is integrated
//! as an initial-value problem from rest with fixed-step RK4, and the first
//! two cycles are dropped.
//!
//! Resonant: the undamped second-order equation `x + LC₀Σ·ẍ = f` has no
//! decaying transient, so it is solved per quarter-piece of the forcing as a
//! boundary-value problem with `x = 0` at both ends (linear shooting, RK4).

use std::f64::consts::TAU;

use hifid_core::{NeutralType, SampleSeries};

use crate::error::{SimError, SimResult};
use crate::params::NetworkParams;
use crate::waveform::DistortionWaveform;

pub const OVERSAMPLING: usize = 8;
pub const DISCARD_CYCLES: usize = 2;

/// Reference `Δi₀L,dist` for `forcing` (the fault current distortion) over
/// `cycles` cycles at `fs`.
pub fn ode_oracle(
    params: &NetworkParams,
    forcing: &DistortionWaveform,
    fs: f64,
    cycles: usize,
) -> SimResult<SampleSeries> {
    params.validate()?;
    let f0 = params.omega / TAU;
    let nt = (fs / f0).round() as usize;
    let values = match params.neutral {
        NeutralType::LowResistor => {
            let tc = params.resistor()? * params.c0_sum();
            first_order_ivp(forcing, tc, fs, nt, cycles)?
        }
        NeutralType::Resonant => {
            let lc = params.inductance()? * params.c0_sum();
            let period = second_order_bvp(forcing, lc * params.omega * params.omega, fs, nt)?;
            period.iter().copied().cycle().take(nt * cycles).collect()
        }
        NeutralType::Isolated => {
            return Err(SimError::param(
                "an isolated network has no dynamic neutral branch to integrate",
            ))
        }
    };
    Ok(SampleSeries::new(values, fs, f0, 0.0)?)
}

fn first_order_ivp(
    forcing: &DistortionWaveform,
    tc: f64,
    fs: f64,
    nt: usize,
    cycles: usize,
) -> SimResult<Vec<f64>> {
    let h = 1.0 / (fs * OVERSAMPLING as f64);
    let t_start = -(DISCARD_CYCLES as f64) * nt as f64 / fs;
    let rhs = |t: f64, x: f64| (forcing.value(t) - x) / tc;
    let total = (DISCARD_CYCLES + cycles) * nt;
    let mut out = Vec::with_capacity(cycles * nt);
    let mut x = 0.0;
    let bound = 1e6 * (forcing.amplitude.abs() + 1.0);
    for n in 0..total {
        if n >= DISCARD_CYCLES * nt {
            out.push(x);
        }
        for k in 0..OVERSAMPLING {
            let t = t_start + (n * OVERSAMPLING + k) as f64 * h;
            let k1 = rhs(t, x);
            let k2 = rhs(t + 0.5 * h, x + 0.5 * h * k1);
            let k3 = rhs(t + 0.5 * h, x + 0.5 * h * k2);
            let k4 = rhs(t + h, x + h * k3);
            x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        if !x.is_finite() || x.abs() > bound {
            return Err(SimError::Diverged(format!("first-order response grew to {x} at sample {n}")));
        }
    }
    Ok(out)
}

/// One RK4 step of `x'' = (f(α) − x)/m` in local angle.
fn rk4_second_order(
    forcing: &DistortionWaveform,
    m: f64,
    with_forcing: bool,
    a: f64,
    (x, y): (f64, f64),
    h: f64,
) -> (f64, f64) {
    let acc = |a: f64, x: f64| {
        let f = if with_forcing { forcing.at_angle(a) } else { 0.0 };
        (f - x) / m
    };
    let (k1x, k1y) = (y, acc(a, x));
    let (k2x, k2y) = (y + 0.5 * h * k1y, acc(a + 0.5 * h, x + 0.5 * h * k1x));
    let (k3x, k3y) = (y + 0.5 * h * k2y, acc(a + 0.5 * h, x + 0.5 * h * k2x));
    let (k4x, k4y) = (y + h * k3y, acc(a + h, x + h * k3x));
    (
        x + h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x),
        y + h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y),
    )
}

/// Integrates from `start` to `end` with steps no larger than `h_max`.
fn integrate(
    forcing: &DistortionWaveform,
    m: f64,
    with_forcing: bool,
    start: f64,
    end: f64,
    init: (f64, f64),
    h_max: f64,
) -> (f64, f64) {
    if end <= start {
        return init;
    }
    let steps = ((end - start) / h_max).ceil().max(1.0) as usize;
    let h = (end - start) / steps as f64;
    let mut state = init;
    for k in 0..steps {
        // keep evaluations strictly inside the piece so the forcing branch is stable
        let a = start + k as f64 * h;
        state = rk4_second_order(forcing, m, with_forcing, a, state, h);
    }
    state
}

/// One period of samples of the per-piece boundary-value solution of
/// `x + m·x_αα = f(α)`, where `m = ω²LC₀Σ`.
fn second_order_bvp(forcing: &DistortionWaveform, m: f64, fs: f64, nt: usize) -> SimResult<Vec<f64>> {
    let h_max = TAU / (nt * OVERSAMPLING) as f64;
    let pieces = forcing.pieces();
    // inner evaluations use angles nudged inside each piece
    let eps = 1e-12;
    let shots: Vec<f64> = pieces
        .iter()
        .map(|p| {
            let (a, b) = (p.start + eps, p.end - eps);
            let forced = integrate(forcing, m, true, a, b, (0.0, 0.0), h_max).0;
            let free = integrate(forcing, m, false, a, b, (0.0, 1.0), h_max).0;
            if free.abs() < 1e-12 {
                return Err(SimError::param("boundary-value problem is singular for this tuning"));
            }
            Ok(-forced / free)
        })
        .collect::<SimResult<_>>()?;
    let mut out = Vec::with_capacity(nt);
    for n in 0..nt {
        let alpha = forcing.local_angle(n as f64 / fs);
        let k = pieces.iter().position(|p| alpha < p.end).unwrap_or(3);
        let a = pieces[k].start + eps;
        if alpha <= a {
            out.push(0.0);
            continue;
        }
        let forced = integrate(forcing, m, true, a, alpha, (0.0, 0.0), h_max).0;
        let free = integrate(forcing, m, false, a, alpha, (0.0, 1.0), h_max).0;
        let x = forced + shots[k] * free;
        if !x.is_finite() {
            return Err(SimError::Diverged(format!("non-finite response at angle {alpha}")));
        }
        out.push(x);
    }
    Ok(out)
}

/// Largest absolute difference between two equally long series.
pub fn max_abs_difference(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{solve_low_resistor, solve_resonant, TRANSFORMER_ID};
    use crate::params::DistortionSpec;
    use hifid_core::FeederId;
    use std::f64::consts::PI;

    fn spec() -> DistortionSpec {
        DistortionSpec {
            i_fm: 4.0,
            i_fm_dist: 1.5,
            ..DistortionSpec::default()
        }
    }

    #[test]
    fn zero_forcing_gives_zero() {
        let p = NetworkParams::new(NeutralType::LowResistor, vec![1e-6, 2e-6], 0).with_resistor(300.0);
        let w = DistortionWaveform::new(0.0, -0.5, 0.0, 0.0, p.omega);
        let out = ode_oracle(&p, &w, 6400.0, 4).unwrap();
        assert!(out.values().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn low_resistor_matches_closed_form() {
        let p = NetworkParams::new(NeutralType::LowResistor, vec![0.5e-6, 2e-6, 3e-6], 1)
            .with_resistor(250.0);
        let sol = solve_low_resistor(&p, &spec(), 6400.0, 10).unwrap();
        let theta = p.admittance_angle().unwrap();
        let w = DistortionWaveform::from_spec(&spec(), spec().phi - theta, p.omega).unwrap();
        let oracle = ode_oracle(&p, &w, 6400.0, 10).unwrap();
        let closed = &sol.channel(&FeederId::new(TRANSFORMER_ID)).unwrap().distortion;
        let err = max_abs_difference(oracle.values(), closed);
        assert!(err < 1e-4 * spec().i_fm_dist, "error {err}");
    }

    #[test]
    fn low_resistor_oracle_is_periodic_after_discard() {
        let p = NetworkParams::new(NeutralType::LowResistor, vec![1e-6, 2e-6], 0).with_resistor(300.0);
        let w = DistortionWaveform::new(1.0, -0.3, 0.1, 0.5, p.omega);
        let out = ode_oracle(&p, &w, 6400.0, 4).unwrap();
        let v = out.values();
        for n in 0..v.len() - 128 {
            assert!((v[n + 128] - v[n]).abs() < 1e-3);
        }
    }

    #[test]
    fn resonant_closed_form_within_one_percent() {
        let p = NetworkParams::new(NeutralType::Resonant, vec![0.3e-6, 2e-6, 3e-6], 0)
            .with_detuning(-0.05);
        let sol = solve_resonant(&p, &spec(), 6400.0, 10).unwrap();
        let w = DistortionWaveform::from_spec(&spec(), spec().phi - PI, p.omega).unwrap();
        let oracle = ode_oracle(&p, &w, 6400.0, 10).unwrap();
        let closed = &sol.channel(&FeederId::new(TRANSFORMER_ID)).unwrap().distortion;
        let err = max_abs_difference(&oracle.values()[3 * 128..], &closed[3 * 128..]);
        assert!(err < 0.01 * spec().i_fm_dist, "error {err}");
    }

    #[test]
    fn isolated_has_no_oracle() {
        let p = NetworkParams::new(NeutralType::Isolated, vec![1e-6, 2e-6], 0);
        let w = DistortionWaveform::new(1.0, -0.5, 0.0, 0.0, p.omega);
        assert!(ode_oracle(&p, &w, 6400.0, 2).is_err());
    }
}
