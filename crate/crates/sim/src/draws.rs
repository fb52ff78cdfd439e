//! Seeded random draws of network and distortion parameters, used by
//! property checks across the workspace.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use hifid_core::NeutralType;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::params::{DistortionSpec, NetworkParams};

/// Faulty capacitive share below which the resonant sign structure holds.
pub const RESONANT_SHARE_LIMIT: f64 = 0.738;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn capacitances(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = rng.random_range(3..=6);
    (0..n).map(|_| rng.random_range(0.2e-6..4.0e-6)).collect()
}

fn spec(rng: &mut ChaCha8Rng) -> DistortionSpec {
    let i_fm = rng.random_range(1.0..20.0);
    DistortionSpec {
        i_fm,
        i_fm_dist: rng.random_range(0.05..0.9) * i_fm,
        tau: rng.random_range(-0.95..-0.05),
        phi: rng.random_range(-PI..PI),
        offset_delta: rng.random_range(-0.3..0.3),
        theta: None,
    }
}

/// Resonant network with detuning in `[-0.1, 0)` and a faulty share under
/// [`RESONANT_SHARE_LIMIT`].
pub fn resonant(seed: u64) -> (NetworkParams, DistortionSpec) {
    let mut r = rng(seed);
    let (c0, faulty) = loop {
        let c0 = capacitances(&mut r);
        let faulty = r.random_range(0..c0.len());
        if c0[faulty] / c0.iter().sum::<f64>() < RESONANT_SHARE_LIMIT {
            break (c0, faulty);
        }
    };
    let v = r.random_range(-0.1..-0.002);
    let params = NetworkParams::new(NeutralType::Resonant, c0, faulty).with_detuning(v);
    (params, spec(&mut r))
}

pub fn isolated(seed: u64) -> (NetworkParams, DistortionSpec) {
    let mut r = rng(seed);
    let c0 = capacitances(&mut r);
    let faulty = r.random_range(0..c0.len());
    let c0l = r.random_range(0.0..0.05e-6);
    let params = NetworkParams::new(NeutralType::Isolated, c0, faulty).with_transformer_capacitance(c0l);
    (params, spec(&mut r))
}

/// Low-resistor network whose admittance angle is drawn from `(π/4, π/2)`
/// and realised through the neutral resistance.
pub fn low_resistor(seed: u64) -> (NetworkParams, DistortionSpec) {
    let mut r = rng(seed);
    let c0 = capacitances(&mut r);
    let faulty = r.random_range(0..c0.len());
    let theta = r.random_range(FRAC_PI_4 + 0.02..FRAC_PI_2 - 0.02);
    let omega = 100.0 * PI;
    let c_sum: f64 = c0.iter().sum();
    let r_n = 1.0 / (omega * c_sum * theta.tan());
    let params = NetworkParams::new(NeutralType::LowResistor, c0, faulty).with_resistor(r_n);
    (params, spec(&mut r))
}

/// Draw for `neutral`.
pub fn draw(neutral: NeutralType, seed: u64) -> (NetworkParams, DistortionSpec) {
    match neutral {
        NeutralType::Resonant => resonant(seed),
        NeutralType::Isolated => isolated(seed),
        NeutralType::LowResistor => low_resistor(seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn draws_are_valid_and_deterministic() {
        for seed in 0..200 {
            for n in [NeutralType::Resonant, NeutralType::Isolated, NeutralType::LowResistor] {
                let (p, s) = draw(n, seed);
                p.validate().unwrap();
                s.validate().unwrap();
                assert_eq!(draw(n, seed), (p, s));
            }
            assert!(resonant(seed).0.faulty_share() < RESONANT_SHARE_LIMIT);
        }
    }
}
