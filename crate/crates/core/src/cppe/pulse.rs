//! Control and input pulse shapes.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{check_non_negative, check_positive, invalid, Result};

/// Envelope of the chirped pulse falls to `sech(SECH_EDGE)` at the pulse edges.
pub const SECH_EDGE: f64 = 5.0;

/// Step bounds resolve the fastest rate with this many steps per cycle.
const STEPS_PER_CYCLE: f64 = 20.0;

/// Sech-envelope, linearly chirped control pulse.
///
/// `a0` is the peak Rabi frequency in rad/s; `delta` and `omega0` are in Hz.
/// With `t_rel` measured from the pulse center the instantaneous frequency is
/// `omega0 + 2 t_rel delta / tau_cp`, so the sweep covers `omega0 +- delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChirpPulse {
    pub a0: f64,
    pub tau_cp: f64,
    pub delta: f64,
    pub omega0: f64,
    pub t_start: f64,
}

impl ChirpPulse {
    pub fn validate(&self) -> Result<()> {
        check_non_negative("a0", self.a0)?;
        check_positive("tau_cp", self.tau_cp)?;
        check_non_negative("delta", self.delta)?;
        if !self.omega0.is_finite() || !self.t_start.is_finite() {
            return Err(invalid("omega0", "pulse timing and frequency must be finite"));
        }
        Ok(())
    }

    /// Peak Rabi frequency giving the adiabaticity factor
    /// `Q = a0^2 tau_cp / (2 pi delta)`.
    pub fn a0_for_adiabaticity(q: f64, tau_cp: f64, delta: f64) -> f64 {
        (q * 2.0 * PI * delta / tau_cp).sqrt()
    }

    pub fn adiabaticity(&self) -> f64 {
        if self.delta == 0.0 {
            f64::INFINITY
        } else {
            self.a0 * self.a0 * self.tau_cp / (2.0 * PI * self.delta)
        }
    }

    pub fn center(&self) -> f64 {
        self.t_start + 0.5 * self.tau_cp
    }

    pub fn end(&self) -> f64 {
        self.t_start + self.tau_cp
    }

    pub fn envelope(&self, t: f64) -> f64 {
        let t_rel = t - self.center();
        // Small slack so both edges evaluate to sech(5) despite rounding.
        if t_rel.abs() > 0.5 * self.tau_cp * (1.0 + 1e-12) {
            0.0
        } else {
            self.a0 / (2.0 * SECH_EDGE * t_rel / self.tau_cp).cosh()
        }
    }

    /// Phase in radians, `2 pi (omega0 t_rel + delta t_rel^2 / tau_cp)`.
    pub fn phase(&self, t: f64) -> f64 {
        let t_rel = t - self.center();
        2.0 * PI * (self.omega0 * t_rel + self.delta * t_rel * t_rel / self.tau_cp)
    }

    /// Instantaneous frequency in Hz.
    pub fn instantaneous_frequency(&self, t: f64) -> f64 {
        self.omega0 + 2.0 * (t - self.center()) * self.delta / self.tau_cp
    }

    /// Time (s) at which the sweep passes `freq`, if it does.
    pub fn crossing_time(&self, freq: f64) -> Option<f64> {
        if self.delta == 0.0 {
            return None;
        }
        let t_rel = (freq - self.omega0) * self.tau_cp / (2.0 * self.delta);
        (t_rel.abs() <= 0.5 * self.tau_cp).then_some(self.center() + t_rel)
    }
}

/// Constant-amplitude pulse at fixed frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SquarePulse {
    /// Rabi frequency, rad/s.
    pub rabi: f64,
    pub duration: f64,
    /// Carrier frequency, Hz.
    pub frequency: f64,
    pub phase: f64,
    pub t_start: f64,
}

impl SquarePulse {
    /// Resonant pulse of the given area (rad).
    pub fn with_area(area: f64, rabi: f64, frequency: f64, t_start: f64) -> Self {
        Self {
            rabi,
            duration: area / rabi,
            frequency,
            phase: 0.0,
            t_start,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_non_negative("rabi", self.rabi)?;
        check_positive("duration", self.duration)?;
        Ok(())
    }

    pub fn end(&self) -> f64 {
        self.t_start + self.duration
    }
}

/// A complex drive `Omega(t)` entering the rotating-frame Hamiltonian
/// `[[0, Omega/2], [conj(Omega)/2, 2 pi delta]]`.
pub trait Drive {
    fn amplitude(&self, t: f64) -> Complex64;

    /// Largest admissible fixed step for an atom at detuning `delta` (Hz).
    fn step_bound(&self, delta: f64) -> f64;
}

impl Drive for ChirpPulse {
    fn amplitude(&self, t: f64) -> Complex64 {
        let a = self.envelope(t);
        if a == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::from_polar(a, self.phase(t))
        }
    }

    fn step_bound(&self, delta: f64) -> f64 {
        let rate = (delta - self.omega0).abs() + self.delta;
        let rabi = self.a0 / (2.0 * PI);
        (1.0 / (STEPS_PER_CYCLE * rate)).min(1.0 / (STEPS_PER_CYCLE * rabi))
    }
}

impl Drive for SquarePulse {
    fn amplitude(&self, t: f64) -> Complex64 {
        if t < self.t_start || t > self.end() {
            return Complex64::new(0.0, 0.0);
        }
        Complex64::from_polar(
            self.rabi,
            self.phase + 2.0 * PI * self.frequency * (t - self.t_start),
        )
    }

    fn step_bound(&self, delta: f64) -> f64 {
        let rate = (delta - self.frequency).abs();
        let rabi = self.rabi / (2.0 * PI);
        (1.0 / (STEPS_PER_CYCLE * rate)).min(1.0 / (STEPS_PER_CYCLE * rabi))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ControlPulse {
    Chirp(ChirpPulse),
    Square(SquarePulse),
}

impl ControlPulse {
    pub fn start(&self) -> f64 {
        match self {
            Self::Chirp(p) => p.t_start,
            Self::Square(p) => p.t_start,
        }
    }

    pub fn end(&self) -> f64 {
        match self {
            Self::Chirp(p) => p.end(),
            Self::Square(p) => p.end(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Chirp(p) => p.validate(),
            Self::Square(p) => p.validate(),
        }
    }

    /// Shifts the carrier frequency by `offset` Hz.
    pub fn shifted(mut self, offset: f64) -> Self {
        match &mut self {
            Self::Chirp(p) => p.omega0 += offset,
            Self::Square(p) => p.frequency += offset,
        }
        self
    }
}

impl Drive for ControlPulse {
    fn amplitude(&self, t: f64) -> Complex64 {
        match self {
            Self::Chirp(p) => p.amplitude(t),
            Self::Square(p) => p.amplitude(t),
        }
    }

    fn step_bound(&self, delta: f64) -> f64 {
        match self {
            Self::Chirp(p) => p.step_bound(delta),
            Self::Square(p) => p.step_bound(delta),
        }
    }
}

/// Simultaneous pulses add their fields.
impl Drive for [ControlPulse] {
    fn amplitude(&self, t: f64) -> Complex64 {
        self.iter().map(|p| p.amplitude(t)).sum()
    }

    fn step_bound(&self, delta: f64) -> f64 {
        self.iter()
            .map(|p| p.step_bound(delta))
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputShape {
    /// Lorentzian field envelope `1 / (1 + (2 t / fwhm)^2)`.
    #[default]
    Lorentzian,
}

/// Weak probe pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputPulse {
    pub center: f64,
    /// Small rotation angle imparted to a resonant atom.
    pub amplitude: f64,
    pub fwhm: f64,
    /// Carrier frequency, Hz.
    pub offset: f64,
    #[serde(default)]
    pub shape: InputShape,
}

/// Input amplitudes at or above this are outside the linear regime.
pub const LINEAR_REGIME_LIMIT: f64 = 0.3;

impl InputPulse {
    pub fn validate(&self) -> Result<()> {
        check_positive("fwhm", self.fwhm)?;
        check_non_negative("amplitude", self.amplitude)?;
        if !self.center.is_finite() || !self.offset.is_finite() {
            return Err(invalid("center", "input timing and frequency must be finite"));
        }
        Ok(())
    }

    /// Spectral amplitude at detuning `delta`: the Fourier transform of the
    /// field envelope normalized to `amplitude` at the carrier.
    pub fn spectral_weight(&self, delta: f64) -> f64 {
        match self.shape {
            InputShape::Lorentzian => {
                self.amplitude * (-PI * self.fwhm * (delta - self.offset).abs()).exp()
            }
        }
    }

    /// Field envelope in time, peak `amplitude`.
    pub fn envelope(&self, t: f64) -> f64 {
        match self.shape {
            InputShape::Lorentzian => {
                let x = 2.0 * (t - self.center) / self.fwhm;
                self.amplitude / (1.0 + x * x)
            }
        }
    }
}
