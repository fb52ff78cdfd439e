use std::f64::consts::PI;

use hifid_core::NeutralType;
use serde::{Deserialize, Serialize};

use crate::error::{SimError, SimResult};

/// Zero-sequence circuit constants of a radial network.
///
/// `c0[faulty]` is the feeder carrying the fault. The transformer (neutral)
/// channel is appended after the feeders when a record is built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    /// Per-feeder zero-sequence capacitance to ground, in farads.
    pub c0: Vec<f64>,
    /// Transformer feeder capacitance, in farads.
    pub c0l: f64,
    /// Neutral resistor in ohms (low-resistor neutral only).
    pub r_n: Option<f64>,
    /// Petersen coil detuning `v = 1 − 1/(ω²LC₀Σ)` (resonant neutral only).
    pub v: Option<f64>,
    pub omega: f64,
    pub neutral: NeutralType,
    pub faulty: usize,
}

impl NetworkParams {
    pub fn new(neutral: NeutralType, c0: Vec<f64>, faulty: usize) -> Self {
        Self {
            c0,
            c0l: 0.0,
            r_n: None,
            v: None,
            omega: 100.0 * PI,
            neutral,
            faulty,
        }
    }

    pub fn with_detuning(mut self, v: f64) -> Self {
        self.v = Some(v);
        self
    }

    pub fn with_resistor(mut self, r_n: f64) -> Self {
        self.r_n = Some(r_n);
        self
    }

    pub fn with_transformer_capacitance(mut self, c0l: f64) -> Self {
        self.c0l = c0l;
        self
    }

    /// Sum of the feeder capacitances, transformer feeder excluded.
    pub fn c0_sum(&self) -> f64 {
        self.c0.iter().sum()
    }

    /// Share of the faulty feeder in the total capacitance.
    pub fn faulty_share(&self) -> f64 {
        self.c0[self.faulty] / self.c0_sum()
    }

    /// `ω²LC₀Σ`, fixed by the detuning.
    pub fn tuning(&self) -> SimResult<f64> {
        let v = self.detuning()?;
        Ok(1.0 / (1.0 - v))
    }

    /// Coil inductance derived from the detuning.
    pub fn inductance(&self) -> SimResult<f64> {
        Ok(self.tuning()? / (self.omega * self.omega * self.c0_sum()))
    }

    pub fn detuning(&self) -> SimResult<f64> {
        self.v
            .ok_or_else(|| SimError::param("resonant network needs a detuning index"))
    }

    pub fn resistor(&self) -> SimResult<f64> {
        self.r_n
            .ok_or_else(|| SimError::param("low-resistor network needs a neutral resistance"))
    }

    /// `θ = arctan(1/(ω R_N C₀Σ))`, the lag of the fault current behind the
    /// capacitive currents in a low-resistor network.
    pub fn admittance_angle(&self) -> SimResult<f64> {
        Ok((1.0 / (self.omega * self.resistor()? * self.c0_sum())).atan())
    }

    /// Lag used for the faulty feeder sinusoid: the admittance angle of the
    /// network seen without the faulty feeder's own capacitance.
    pub fn faulty_feeder_angle(&self) -> SimResult<f64> {
        let rest = self.c0_sum() - self.c0[self.faulty];
        Ok((1.0 / (self.omega * self.resistor()? * rest)).atan())
    }

    pub fn validate(&self) -> SimResult<()> {
        if self.c0.len() < 2 {
            return Err(SimError::param("at least two feeders are required"));
        }
        if self.faulty >= self.c0.len() {
            return Err(SimError::param(format!(
                "faulty feeder index {} out of {} feeders",
                self.faulty,
                self.c0.len()
            )));
        }
        if self.c0.iter().any(|c| !(c.is_finite() && *c > 0.0)) || !(self.c0l >= 0.0) {
            return Err(SimError::param("capacitances must be positive"));
        }
        if !(self.omega > 0.0) {
            return Err(SimError::param("angular frequency must be positive"));
        }
        match self.neutral {
            NeutralType::Resonant => {
                let v = self.detuning()?;
                // v = 0 leaves no net fault current to scale the bus voltage from
                if !(-0.1..0.0).contains(&v) {
                    return Err(SimError::param(format!(
                        "detuning must lie in [-0.1, 0), got {v}"
                    )));
                }
            }
            NeutralType::LowResistor => {
                let r = self.resistor()?;
                if !(r.is_finite() && r > 0.0) {
                    return Err(SimError::param("neutral resistance must be positive"));
                }
                let theta = self.admittance_angle()?;
                if !(theta > PI / 4.0 && theta < PI / 2.0) {
                    return Err(SimError::param(format!(
                        "admittance angle {theta:.4} rad outside (π/4, π/2)"
                    )));
                }
            }
            NeutralType::Isolated => {}
        }
        Ok(())
    }
}

/// Shape and size of the fault current distortion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionSpec {
    /// Peak of the sinusoidal fault current, in amperes.
    pub i_fm: f64,
    /// Peak of the distorted component, in amperes.
    pub i_fm_dist: f64,
    /// Decay constant, `−1 < τ < 0`.
    pub tau: f64,
    /// Phase of the capacitive currents, in radians.
    pub phi: f64,
    /// Shift of the distortion midpoint away from the quarter-cycle axis, in radians.
    pub offset_delta: f64,
    /// Optional explicit low-resistor lag; must agree with the network when given.
    pub theta: Option<f64>,
}

impl Default for DistortionSpec {
    fn default() -> Self {
        Self {
            i_fm: 10.0,
            i_fm_dist: 3.0,
            tau: -0.5,
            phi: 0.3,
            offset_delta: 0.0,
            theta: None,
        }
    }
}

impl DistortionSpec {
    pub fn validate(&self) -> SimResult<()> {
        if !(self.i_fm.is_finite() && self.i_fm > 0.0) {
            return Err(SimError::param("sinusoidal fault current peak must be positive"));
        }
        if !(self.i_fm_dist >= 0.0 && self.i_fm_dist <= self.i_fm) {
            return Err(SimError::param(format!(
                "distortion peak {} must lie in [0, {}]",
                self.i_fm_dist, self.i_fm
            )));
        }
        if !(self.tau > -1.0 && self.tau < 0.0) {
            return Err(SimError::param(format!("tau must lie in (-1, 0), got {}", self.tau)));
        }
        if !self.phi.is_finite() {
            return Err(SimError::param("phase must be finite"));
        }
        if !(self.offset_delta.abs() < PI / 4.0) {
            return Err(SimError::param(format!(
                "offset {} rad must stay within ±π/4",
                self.offset_delta
            )));
        }
        Ok(())
    }
}
