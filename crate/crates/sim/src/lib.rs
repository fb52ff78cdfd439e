//! Synthetic zero-sequence records of arcing high impedance faults.
//!
//! [`network`] holds closed-form fault-state solutions for isolated,
//! resonant and low-resistor neutrals, [`oracle`] integrates the underlying
//! circuit equations numerically, [`noise`] adds measurement noise, arcing
//! impulses and healthy-network disturbances, and [`corpus`] builds labelled
//! scenario sets from a TOML manifest.

pub mod corpus;
pub mod draws;
pub mod error;
pub mod network;
pub mod noise;
pub mod oracle;
pub mod params;
pub mod waveform;

pub use corpus::{build_corpus, default_manifest, CorpusRecord, Manifest};
pub use error::{SimError, SimResult};
pub use network::{
    feeder_id, solve, solve_isolated, solve_low_resistor, solve_resonant, NetworkSolution,
    TRANSFORMER_ID,
};
pub use noise::{add_noise, healthy_record, inject_impulses_per_cycle, HealthyScenario};
pub use oracle::ode_oracle;
pub use params::{DistortionSpec, NetworkParams};
pub use waveform::{synth_fault_distortion, DistortionWaveform};
