use std::f64::consts::{PI, TAU};

use hifid_core::{fundamental_phasor, FeederId, NeutralType, SampleSeries};
use hifid_sim::draws::{self, RESONANT_SHARE_LIMIT};
use hifid_sim::oracle::max_abs_difference;
use hifid_sim::{
    build_corpus, default_manifest, ode_oracle, solve, DistortionWaveform, NetworkSolution,
    TRANSFORMER_ID,
};

const FS: f64 = 6400.0;
const NT: usize = 128;
const NEUTRALS: [NeutralType; 3] = [NeutralType::Isolated, NeutralType::Resonant, NeutralType::LowResistor];

fn peak(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn kcl_residual(sol: &NetworkSolution) -> f64 {
    let rec = sol.to_record().unwrap();
    let largest = rec.feeders().iter().map(|(_, s)| s.peak()).fold(0.0, f64::max);
    peak(&rec.feeder_sum()) / largest
}

#[test]
fn kcl_closes_on_random_draws() {
    for seed in 0..60 {
        for neutral in NEUTRALS {
            let (params, mut spec) = draws::draw(neutral, seed);
            for with_distortion in [true, false] {
                if !with_distortion {
                    spec.i_fm_dist = 0.0;
                }
                let sol = solve(&params, &spec, FS, 6).unwrap();
                let r = kcl_residual(&sol);
                assert!(r < 1e-6, "{neutral:?} seed {seed}: residual {r}");
            }
        }
    }
}

proptest::proptest! {
    #![proptest_config(proptest::prelude::ProptestConfig::with_cases(40))]

    #[test]
    fn kcl_closes_for_any_seed(seed in proptest::prelude::any::<u64>(), which in 0usize..3, cycles in 2usize..6) {
        let (params, spec) = draws::draw(NEUTRALS[which], seed);
        let r = kcl_residual(&solve(&params, &spec, FS, cycles).unwrap());
        proptest::prop_assert!(r < 1e-6, "residual {}", r);
    }
}

#[test]
fn kcl_closes_on_the_noise_free_corpus() {
    let mut m = default_manifest();
    for s in &mut m.scenarios {
        s.snr_db = f64::INFINITY;
        s.impulse_rate = 0.0;
    }
    for r in build_corpus(&m).unwrap() {
        let largest = r.record.feeders().iter().map(|(_, s)| s.peak()).fold(0.0, f64::max);
        assert!(peak(&r.record.feeder_sum()) < 1e-6 * largest, "{}", r.name);
    }
}

#[test]
fn resonant_superposition_signs() {
    for seed in 0..100 {
        // the sign structure is derived for the symmetric shape
        let (params, mut spec) = draws::resonant(seed);
        spec.offset_delta = 0.0;
        assert!(params.faulty_share() < RESONANT_SHARE_LIMIT);
        let sol = solve(&params, &spec, FS, 4).unwrap();
        let faulty = sol.faulty_id();
        for (id, c) in &sol.feeders {
            let composite = peak(&c.total());
            let sinusoid = peak(&c.sinusoid);
            if *id == faulty {
                assert!(composite < sinusoid, "seed {seed}: faulty {id} not negative");
            } else {
                assert!(composite > sinusoid, "seed {seed}: {id} not positive");
            }
        }
    }
}

#[test]
fn isolated_negative_superposition_and_opposition() {
    for seed in 0..100 {
        let (params, spec) = draws::isolated(seed);
        let sol = solve(&params, &spec, FS, 4).unwrap();
        for (id, c) in &sol.feeders {
            if peak(&c.distortion) > 0.0 {
                assert!(peak(&c.total()) < peak(&c.sinusoid), "seed {seed}: {id}");
            }
        }
        let phase = |v: Vec<f64>| fundamental_phasor(&SampleSeries::new(v, FS, 50.0, 0.0).unwrap(), 1).unwrap().1;
        let faulty = phase(sol.channel(&sol.faulty_id()).unwrap().sinusoid.clone());
        for (id, c) in &sol.feeders {
            if *id == sol.faulty_id() || peak(&c.sinusoid) == 0.0 {
                continue;
            }
            let diff = (phase(c.sinusoid.clone()) - faulty).rem_euclid(TAU);
            assert!((diff - PI).abs() < 0.01, "seed {seed}: {id} at {diff}");
        }
    }
}

/// Interpolated sample positions where `v` changes sign.
fn sign_changes(v: &[f64]) -> Vec<f64> {
    (0..v.len() - 1)
        .filter(|&n| v[n] != 0.0 && v[n].signum() != v[n + 1].signum())
        .map(|n| n as f64 + v[n] / (v[n] - v[n + 1]))
        .collect()
}

/// First crossing in `crossings` at or after `from`.
fn next_after(crossings: &[f64], from: f64) -> Option<f64> {
    crossings.iter().copied().find(|z| *z >= from)
}

#[test]
fn low_resistor_distortion_leads_zero_crossings() {
    for seed in 0..50 {
        let (params, spec) = draws::low_resistor(seed);
        let sol = solve(&params, &spec, FS, 4).unwrap();
        let c = sol.channel(&sol.faulty_id()).unwrap();
        let theta = params.admittance_angle().unwrap();
        let theta_f = params.faulty_feeder_angle().unwrap();
        let per_rad = FS / params.omega;
        let sinusoid_zeros = sign_changes(&c.sinusoid);
        // the fault distortion, which the faulty feeder carries with reversed
        // sign, is centred θ′ − θ ahead of the faulty sinusoid's crossings
        let psi = spec.phi - theta;
        let fault_centres: Vec<f64> = (0..8)
            .map(|k| (k as f64 * PI - psi).rem_euclid(TAU) * per_rad + (k / 2) as f64 * NT as f64)
            .collect();
        // sampled crossings agree with the analytic centres
        for z in sign_changes(&sol.fault.distortion) {
            assert!(fault_centres.iter().any(|c| (c - z).abs() < 0.1));
        }
        for centre in &fault_centres {
            let Some(next) = next_after(&sinusoid_zeros, *centre) else { continue };
            let lead = next - centre;
            assert!(lead > 0.0 && (lead - (theta_f - theta) * per_rad).abs() < 0.02, "seed {seed}: {lead}");
        }
        // the faulty feeder's own capacitive share pulls its distortion
        // centre towards that of the resistor current, which lags
        let resistor = sol.channel(&FeederId::new(TRANSFORMER_ID)).unwrap();
        let own_centres = sign_changes(&c.distortion);
        let resistor_centres = sign_changes(&resistor.distortion);
        for centre in &fault_centres {
            let (Some(own), Some(lagging)) = (
                next_after(&own_centres, centre - 1.0),
                next_after(&resistor_centres, centre - 1.0),
            ) else {
                continue;
            };
            assert!(own > centre - 0.05 && own < lagging + 0.05, "seed {seed}: {centre} {own} {lagging}");
        }
    }
}

#[test]
fn closed_forms_match_the_ode_oracle() {
    let mut draws_done = 0;
    for seed in 0..25 {
        for neutral in [NeutralType::Resonant, NeutralType::LowResistor] {
            let (params, spec) = draws::draw(neutral, 500 + seed);
            let sol = solve(&params, &spec, FS, 5).unwrap();
            let psi = match neutral {
                NeutralType::Resonant => spec.phi - PI,
                _ => spec.phi - params.admittance_angle().unwrap(),
            };
            let forcing = DistortionWaveform::from_spec(&spec, psi, params.omega).unwrap();
            let oracle = ode_oracle(&params, &forcing, FS, 5).unwrap();
            let closed = &sol.channel(&FeederId::new(TRANSFORMER_ID)).unwrap().distortion;
            let err = max_abs_difference(oracle.values(), closed);
            assert!(err < 0.01 * spec.i_fm_dist, "{neutral:?} seed {seed}: {err} vs {}", spec.i_fm_dist);
            draws_done += 1;
        }
    }
    assert_eq!(draws_done, 50);
}

/// Faulty-feeder distortion gain relative to the fault distortion at phase φ.
fn faulty_gain(share: f64, v: f64) -> f64 {
    let m = 1.0 / (1.0 - v);
    (1.0 - 4.0 * m * (1.0 - share)) / (1.0 - 4.0 * m)
}

#[test]
fn faulty_gain_changes_sign_at_the_exact_share_bound() {
    // 4·ω²LC₀Σ·(1 − share) = 1 with ω²LC₀Σ = 1/(1 − v)
    for v in [-0.1, -0.05, -0.001] {
        let edge = (3.0 + v) / 4.0;
        assert!(faulty_gain(edge - 1e-3, v) > 0.0);
        assert!(faulty_gain(edge + 1e-3, v) < 0.0);
    }
    // the 0.738 limit is the edge for ω²LC₀Σ = 0.9535
    assert!((1.0 - 1.0 / (4.0 * 0.9535) - RESONANT_SHARE_LIMIT).abs() < 1e-3);
}

#[test]
fn strong_detuning_just_under_the_limit_flips_the_faulty_sign() {
    let v = -0.1;
    let params = hifid_sim::NetworkParams::new(NeutralType::Resonant, vec![0.733e-6, 0.267e-6], 0).with_detuning(v);
    assert!(params.faulty_share() < RESONANT_SHARE_LIMIT && params.faulty_share() > (3.0 + v) / 4.0);
    let spec = hifid_sim::DistortionSpec { i_fm: 5.0, i_fm_dist: 3.0, ..Default::default() };
    let sol = solve(&params, &spec, FS, 4).unwrap();
    let c = sol.channel(&sol.faulty_id()).unwrap();
    assert!(peak(&c.total()) > peak(&c.sinusoid));
}
