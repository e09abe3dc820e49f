use serde::{Deserialize, Serialize};

use crate::error::{check_non_negative, check_positive, check_probability, invalid, Result};

/// Vacuum speed of light in km/s.
pub const SPEED_OF_LIGHT_KM_S: f64 = 299_792.458;

/// Group index of standard single-mode telecom fiber.
pub const FIBER_GROUP_INDEX: f64 = 1.468;

/// Source, channel, detector and multiplexing parameters of the repeater chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepeaterParams {
    /// Pair-generation probability per mode.
    pub rho: f64,
    /// Fiber loss in dB/km.
    pub alpha: f64,
    /// Detection-scheme exponent.
    pub beta: u32,
    /// Idler detection efficiency.
    pub eta_d_i: f64,
    /// Signal detection efficiency.
    pub eta_d_s: f64,
    /// Temporal modes per cycle.
    pub m_t: u32,
    /// Spectral modes per cycle.
    pub m_s: u32,
    /// Signal velocity in fiber, km/s.
    pub v: f64,
    /// Repetition rate of the storage cycle, Hz.
    pub nu: f64,
}

impl Default for RepeaterParams {
    /// Reference parameter set (M = 3 x 20 = 60).
    fn default() -> Self {
        Self {
            rho: 0.9,
            alpha: 0.21,
            beta: 2,
            eta_d_i: 0.9,
            eta_d_s: 0.9,
            m_t: 20,
            m_s: 3,
            v: SPEED_OF_LIGHT_KM_S / FIBER_GROUP_INDEX,
            nu: 1.0,
        }
    }
}

impl RepeaterParams {
    pub fn validate(&self) -> Result<()> {
        check_probability("rho", self.rho)?;
        check_non_negative("alpha", self.alpha)?;
        if self.beta < 1 {
            return Err(invalid("beta", "must be >= 1"));
        }
        check_probability("eta_d_i", self.eta_d_i)?;
        check_probability("eta_d_s", self.eta_d_s)?;
        if self.m_t < 1 {
            return Err(invalid("m_t", "must be >= 1"));
        }
        if self.m_s < 1 {
            return Err(invalid("m_s", "must be >= 1"));
        }
        check_positive("v", self.v)?;
        check_non_negative("nu", self.nu)?;
        Ok(())
    }

    /// Total multimode capacity M = M_s * M_t.
    pub fn modes(&self) -> u64 {
        u64::from(self.m_s) * u64::from(self.m_t)
    }

    pub fn with_modes(mut self, m_s: u32, m_t: u32) -> Self {
        self.m_s = m_s;
        self.m_t = m_t;
        self
    }
}

/// Memory performance: the analytic efficiency law plus the lifetime and
/// noise scale used by the ensemble engine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MemoryModel {
    /// Efficiency in the limit of zero storage time.
    pub eta_o: f64,
    /// Coherence time, s.
    pub t2: f64,
    /// Excited-state lifetime, s.
    pub t1: f64,
    /// Noise counts per unit of excited population decaying inside a window.
    pub noise_scale: f64,
}

impl Default for MemoryModel {
    /// Target memory of the repeater analysis: 65 % and 3 ms.
    fn default() -> Self {
        Self {
            eta_o: 0.65,
            t2: 3e-3,
            t1: 10.68e-3,
            noise_scale: 1.0,
        }
    }
}

impl MemoryModel {
    /// Demonstrated memory (804 us, 23.05 %), the star marker of the ratio maps.
    pub fn demonstrated() -> Self {
        Self {
            eta_o: 0.2305,
            t2: 804e-6,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_probability("eta_o", self.eta_o)?;
        check_positive("t2", self.t2)?;
        check_positive("t1", self.t1)?;
        check_non_negative("noise_scale", self.noise_scale)?;
        Ok(())
    }
}

/// Total chain length and the number of elementary links it is divided into.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkConfig {
    /// Total length L in km.
    pub total_length: f64,
    /// Number of elementary links n_l.
    pub n_links: u32,
}

impl LinkConfig {
    pub fn new(total_length: f64, n_links: u32) -> Result<Self> {
        let link = Self {
            total_length,
            n_links,
        };
        link.validate()?;
        Ok(link)
    }

    /// Zero length is accepted as the limit L -> 0.
    pub fn validate(&self) -> Result<()> {
        check_non_negative("total_length", self.total_length)?;
        if !self.total_length.is_finite() {
            return Err(invalid("total_length", "must be finite"));
        }
        if self.n_links < 1 {
            return Err(invalid("n_links", "must be >= 1"));
        }
        Ok(())
    }

    /// Length of one elementary link, km.
    pub fn link_length(&self) -> f64 {
        self.total_length / f64::from(self.n_links)
    }
}
