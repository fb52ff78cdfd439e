//! Detection of high impedance faults and identification of the faulty feeder
//! from synchronous zero-sequence bus voltage and feeder currents.
//!
//! The analysis chain is
//! [`signal::lowpass`] → [`distortion::interval_slope_series`] →
//! [`detect::cycle_verdicts`] / [`detect::detect`] → [`identify::identify_from`],
//! bundled by [`pipeline::run_pipeline`].

pub mod detect;
pub mod distortion;
pub mod error;
pub mod identify;
pub mod pipeline;
pub mod signal;

pub use detect::{
    cycle_is_faulty, cycle_verdicts, detect, m_shape_half_cycle, update_detection, CycleVerdict,
    DetectionState, HalfCycleFeature, MExtrema, MShapeConfig,
};
pub use distortion::{
    despike, interval_slope, interval_slope_series, is_zero_crossings, least_squares_slope, refit_interval,
    IntervalSlopeSeries, RefitConfig, SlopeConfig,
};
pub use error::{Error, Result};
pub use identify::{
    c_dir, compute_index, identify_from, CdirVariant, IdentificationReport, IndexSample,
    WindowConfig,
};
pub use pipeline::{identify, run_pipeline, PipelineConfig, RunReport, SCHEMA_VERSION};
pub use signal::{
    fundamental_phasor, lowpass, zero_sequence, Butterworth, FeederId, NeutralType, SampleSeries,
    SynchronizedRecord,
};
