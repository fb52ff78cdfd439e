//! Labelled fault scenarios described by a TOML manifest.

use std::f64::consts::PI;

use hifid_core::{FeederId, NeutralType, SynchronizedRecord};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{SimError, SimResult};
use crate::network::{feeder_id, solve, NetworkSolution};
use crate::noise::add_noise;
use crate::params::{DistortionSpec, NetworkParams};

const DEFAULT_MANIFEST: &str = include_str!("../data/corpus.toml");

/// The manifest shipped with the crate.
pub fn default_manifest() -> Manifest {
    Manifest::parse(DEFAULT_MANIFEST).expect("bundled manifest is valid")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    #[serde(default = "defaults::fs")]
    pub fs: f64,
    #[serde(default = "defaults::f0")]
    pub f0: f64,
    #[serde(default = "defaults::cycles")]
    pub cycles: usize,
    /// Cycle at which the fault starts; earlier samples carry noise only.
    #[serde(default = "defaults::inception")]
    pub inception_cycle: usize,
    #[serde(rename = "scenario", default)]
    pub scenarios: Vec<Scenario>,
}

mod defaults {
    pub fn fs() -> f64 {
        6400.0
    }
    pub fn f0() -> f64 {
        50.0
    }
    pub fn cycles() -> usize {
        32
    }
    pub fn inception() -> usize {
        2
    }
    pub fn tau() -> f64 {
        -0.5
    }
    pub fn snr() -> f64 {
        f64::INFINITY
    }
}

/// One fault scenario. Capacitances are given in microfarads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub neutral: NeutralType,
    pub c0_uf: Vec<f64>,
    #[serde(default)]
    pub c0l_uf: f64,
    /// Zero-based index of the faulted feeder.
    pub faulty: usize,
    #[serde(default)]
    pub detuning: Option<f64>,
    #[serde(default)]
    pub r_n: Option<f64>,
    /// Sinusoidal fault current peak in amperes.
    pub i_fm: f64,
    /// Distortion peak relative to `i_fm`.
    pub dist_ratio: f64,
    #[serde(default = "defaults::tau")]
    pub tau: f64,
    #[serde(default)]
    pub phi: f64,
    #[serde(default)]
    pub offset: f64,
    #[serde(default = "defaults::snr")]
    pub snr_db: f64,
    #[serde(default)]
    pub impulse_rate: f64,
    #[serde(default)]
    pub impulse_gain: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Scenario {
    pub fn params(&self) -> NetworkParams {
        NetworkParams {
            c0: self.c0_uf.iter().map(|c| c * 1e-6).collect(),
            c0l: self.c0l_uf * 1e-6,
            r_n: self.r_n,
            v: self.detuning,
            omega: 100.0 * PI,
            neutral: self.neutral,
            faulty: self.faulty,
        }
    }

    pub fn spec(&self) -> DistortionSpec {
        DistortionSpec {
            i_fm: self.i_fm,
            i_fm_dist: self.dist_ratio * self.i_fm,
            tau: self.tau,
            phi: self.phi,
            offset_delta: self.offset,
            theta: None,
        }
    }

    pub fn has_impulses(&self) -> bool {
        self.impulse_rate > 0.0 && self.impulse_gain > 0.0
    }
}

impl Manifest {
    pub fn parse(text: &str) -> SimResult<Self> {
        let m: Manifest = toml::from_str(text).map_err(|e| SimError::Manifest(e.to_string()))?;
        m.check()?;
        Ok(m)
    }

    pub fn to_toml(&self) -> SimResult<String> {
        toml::to_string(self).map_err(|e| SimError::Manifest(e.to_string()))
    }

    fn check(&self) -> SimResult<()> {
        let ratio = self.fs / self.f0;
        if !(self.fs > 0.0 && self.f0 > 0.0) || (ratio - ratio.round()).abs() > 1e-9 {
            return Err(SimError::Manifest("fs must be an integer multiple of f0".into()));
        }
        if self.inception_cycle + 8 > self.cycles {
            return Err(SimError::Manifest(format!(
                "{} cycles leave too little fault time after inception cycle {}",
                self.cycles, self.inception_cycle
            )));
        }
        for (i, s) in self.scenarios.iter().enumerate() {
            if s.name.is_empty() {
                return Err(SimError::Manifest(format!("scenario {i} has no name")));
            }
            if self.scenarios[..i].iter().any(|o| o.name == s.name) {
                return Err(SimError::Manifest(format!("duplicate scenario name '{}'", s.name)));
            }
            if !(0.0..=1.0).contains(&s.dist_ratio) {
                return Err(SimError::Manifest(format!(
                    "scenario '{}': dist_ratio must lie in [0, 1]",
                    s.name
                )));
            }
        }
        Ok(())
    }
}

/// A generated record together with its ground truth.
#[derive(Debug, Clone)]
pub struct CorpusRecord {
    pub name: String,
    pub record: SynchronizedRecord,
    pub faulty: FeederId,
    pub neutral: NeutralType,
    pub inception_cycle: usize,
    /// RMS of the fault current over the faulted cycles, in amperes.
    pub fault_rms: f64,
    pub has_impulses: bool,
    pub snr_db: f64,
    pub solution: NetworkSolution,
}

/// Zeroes every component before `cycle` (the network was healthy and
/// unbalance-free until then).
pub fn gate_solution(sol: &mut NetworkSolution, cycle: usize) {
    let cut = (cycle as f64 * sol.fs / sol.f0).round() as usize;
    let channels = std::iter::once(&mut sol.u0b)
        .chain(std::iter::once(&mut sol.fault))
        .chain(sol.feeders.iter_mut().map(|(_, c)| c));
    for c in channels {
        let end = cut.min(c.sinusoid.len());
        c.sinusoid[..end].iter_mut().for_each(|v| *v = 0.0);
        c.distortion[..end].iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Generates one scenario of `manifest`.
pub fn build_record(manifest: &Manifest, s: &Scenario) -> SimResult<CorpusRecord> {
    let params = s.params();
    let wrap = |e: SimError| SimError::Manifest(format!("scenario '{}': {e}", s.name));
    let mut sol = solve(&params, &s.spec(), manifest.fs, manifest.cycles).map_err(wrap)?;
    gate_solution(&mut sol, manifest.inception_cycle);
    let clean = sol.to_record()?;
    let record = add_noise(&clean, s.snr_db, s.impulse_rate, s.impulse_gain, s.seed).map_err(wrap)?;
    let start = (manifest.inception_cycle as f64 * manifest.fs / manifest.f0).round() as usize;
    let fault = sol.fault.total();
    let tail = &fault[start..];
    let fault_rms = (tail.iter().map(|v| v * v).sum::<f64>() / tail.len() as f64).sqrt();
    Ok(CorpusRecord {
        name: s.name.clone(),
        record,
        faulty: feeder_id(s.faulty),
        neutral: s.neutral,
        inception_cycle: manifest.inception_cycle,
        fault_rms,
        has_impulses: s.has_impulses(),
        snr_db: s.snr_db,
        solution: sol,
    })
}

/// Generates every scenario in parallel, in manifest order.
pub fn build_corpus(manifest: &Manifest) -> SimResult<Vec<CorpusRecord>> {
    manifest
        .scenarios
        .par_iter()
        .map(|s| build_record(manifest, s))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_manifest_composition() {
        let m = default_manifest();
        assert_eq!(m.scenarios.len(), 28);
        assert_eq!(m.scenarios.iter().filter(|s| s.has_impulses()).count(), 6);
        for s in m.scenarios.iter().filter(|s| s.neutral == NeutralType::Resonant) {
            assert!(s.params().faulty_share() < 0.738, "{}", s.name);
        }
        for n in [NeutralType::Isolated, NeutralType::Resonant, NeutralType::LowResistor] {
            assert!(m.scenarios.iter().any(|s| s.neutral == n));
        }
    }

    #[test]
    fn labels_follow_the_faulty_index() {
        let m = default_manifest();
        let corpus = build_corpus(&m).unwrap();
        for (r, s) in corpus.iter().zip(&m.scenarios) {
            assert_eq!(r.faulty, feeder_id(s.faulty));
            assert_eq!(r.name, s.name);
            assert!(r.record.feeder(&r.faulty).is_some());
        }
        assert!(corpus.iter().filter(|r| r.fault_rms <= 1.0).count() >= 3);
        assert!(corpus.iter().filter(|r| r.fault_rms <= 6.0).count() >= 3);
        assert!(corpus.iter().all(|r| r.snr_db >= 30.0));
    }

    #[test]
    fn manifest_round_trips() {
        let m = default_manifest();
        assert_eq!(Manifest::parse(&m.to_toml().unwrap()).unwrap(), m);
    }

    #[test]
    fn schema_violations_are_reported() {
        assert!(matches!(Manifest::parse("cycles = 'many'"), Err(SimError::Manifest(_))));
        assert!(matches!(Manifest::parse("bogus = 1"), Err(SimError::Manifest(_))));
        let dup = r#"
            [[scenario]]
            name = "a"
            neutral = "isolated"
            c0_uf = [1.0, 2.0]
            faulty = 0
            i_fm = 1.0
            dist_ratio = 0.2
            [[scenario]]
            name = "a"
            neutral = "isolated"
            c0_uf = [1.0, 2.0]
            faulty = 0
            i_fm = 1.0
            dist_ratio = 0.2
        "#;
        assert!(matches!(Manifest::parse(dup), Err(SimError::Manifest(_))));
    }

    #[test]
    fn bad_scenario_names_itself() {
        let text = r#"
            [[scenario]]
            name = "broken"
            neutral = "resonant"
            c0_uf = [1.0, 2.0]
            faulty = 0
            i_fm = 1.0
            dist_ratio = 0.2
        "#;
        let m = Manifest::parse(text).unwrap();
        let err = build_corpus(&m).unwrap_err().to_string();
        assert!(err.contains("broken"));
    }
}
