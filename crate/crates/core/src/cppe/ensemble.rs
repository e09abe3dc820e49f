//! Inhomogeneously broadened atoms in spectrally separated memory cells.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::propagate::{State, GROUND};
use super::pulse::{InputPulse, LINEAR_REGIME_LIMIT};
use crate::error::{check_positive, invalid, Error, Result};

/// Default minimum spacing between cell centers, Hz.
pub const DEFAULT_MIN_CELL_SPACING: f64 = 4e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum CellProfile {
    Uniform,
    /// Lorentzian line of the given FWHM (Hz), cut at the cell edges.
    LorentzianTruncated { fwhm: f64 },
}

/// One spectral memory cell: a band of `atoms` detunings centered on
/// `center`, `width` wide.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemoryCellSpec {
    pub center: f64,
    pub width: f64,
    pub atoms: usize,
    pub profile: CellProfile,
    /// Ions per MHz at the profile peak.
    #[serde(default = "unit_density")]
    pub density: f64,
}

fn unit_density() -> f64 {
    1.0
}

impl MemoryCellSpec {
    pub fn uniform(center: f64, width: f64, atoms: usize) -> Self {
        Self {
            center,
            width,
            atoms,
            profile: CellProfile::Uniform,
            density: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.atoms < 1 {
            return Err(invalid("atoms", "a cell needs at least one atom"));
        }
        check_positive("width", self.width)?;
        check_positive("density", self.density)?;
        if let CellProfile::LorentzianTruncated { fwhm } = self.profile {
            check_positive("fwhm", fwhm)?;
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        self.width / self.atoms as f64
    }

    /// Midpoint grid of detunings, ascending.
    pub fn detunings(&self) -> Vec<f64> {
        let h = self.spacing();
        let lo = self.center - 0.5 * self.width;
        (0..self.atoms).map(|j| lo + (j as f64 + 0.5) * h).collect()
    }

    /// Ions represented by the sample at `delta`.
    pub fn weight(&self, delta: f64) -> f64 {
        let shape = match self.profile {
            CellProfile::Uniform => 1.0,
            CellProfile::LorentzianTruncated { fwhm } => {
                let x = 2.0 * (delta - self.center) / fwhm;
                1.0 / (1.0 + x * x)
            }
        };
        self.density * shape * self.spacing() * 1e-6
    }

    /// Time after which the uniform grid rephases on its own.
    pub fn recurrence_time(&self) -> f64 {
        1.0 / self.spacing()
    }

    pub fn contains(&self, freq: f64) -> bool {
        (freq - self.center).abs() <= 0.5 * self.width
    }
}

/// Checks cell parameters, band overlap and center spacing.
pub fn validate_cells(cells: &[MemoryCellSpec], min_spacing: f64) -> Result<()> {
    if cells.is_empty() {
        return Err(invalid("cells", "at least one memory cell is required"));
    }
    for c in cells {
        c.validate()?;
    }
    let mut order: Vec<&MemoryCellSpec> = cells.iter().collect();
    order.sort_by(|a, b| a.center.total_cmp(&b.center));
    for w in order.windows(2) {
        let gap = w[1].center - w[0].center;
        if gap < min_spacing {
            return Err(invalid(
                "cells",
                format!("cell centers {} and {} Hz closer than {min_spacing} Hz", w[0].center, w[1].center),
            ));
        }
        if w[0].center + 0.5 * w[0].width > w[1].center - 0.5 * w[1].width {
            return Err(invalid("cells", "cell bands overlap"));
        }
    }
    Ok(())
}

/// Ensemble state.
///
/// Each atom carries the control-driven amplitudes `base` (zeroth order in
/// the input), the input-linear correction `signal`, and a relaxed part
/// holding population that has decayed through T1 (`(p_g, p_e, rho_eg)`).
/// `base` and `signal` are propagated together, so the signal coherence
/// `conj(b_g) d_e + conj(d_g) b_e` is exactly linear in the input.
#[derive(Debug, Clone)]
pub struct AtomEnsemble {
    pub cell: Vec<usize>,
    pub detuning: Vec<f64>,
    pub weight: Vec<f64>,
    pub base: Vec<State>,
    pub signal: Vec<State>,
    pub relaxed: Vec<(f64, f64, Complex64)>,
    /// Grid spacing of each atom's cell, Hz.
    pub spacing: Vec<f64>,
}

impl AtomEnsemble {
    pub fn new(cells: &[MemoryCellSpec]) -> Result<Self> {
        for c in cells {
            c.validate()?;
        }
        let mut e = Self {
            cell: Vec::new(),
            detuning: Vec::new(),
            weight: Vec::new(),
            base: Vec::new(),
            signal: Vec::new(),
            relaxed: Vec::new(),
            spacing: Vec::new(),
        };
        for (k, c) in cells.iter().enumerate() {
            for d in c.detunings() {
                e.cell.push(k);
                e.detuning.push(d);
                e.weight.push(c.weight(d));
                e.spacing.push(c.spacing());
            }
        }
        let n = e.detuning.len();
        let zero = Complex64::new(0.0, 0.0);
        e.base = vec![GROUND; n];
        e.signal = vec![[zero, zero]; n];
        e.relaxed = vec![(0.0, 0.0, zero); n];
        Ok(e)
    }

    pub fn len(&self) -> usize {
        self.detuning.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detuning.is_empty()
    }

    /// Signal coherence of atom `j` (before the T2 observable factor).
    #[inline]
    pub fn signal_coherence(&self, j: usize) -> Complex64 {
        let b = self.base[j];
        let d = self.signal[j];
        b[0].conj() * d[1] + d[0].conj() * b[1]
    }

    #[inline]
    pub fn control_coherence(&self, j: usize) -> Complex64 {
        let b = self.base[j];
        b[0].conj() * b[1]
    }

    /// Excited population of atom `j`, unrelaxed plus relaxed.
    pub fn excited_population(&self, j: usize) -> f64 {
        self.base[j][1].norm_sqr() + self.relaxed[j].1
    }

    /// Total population of atom `j`; one up to rounding.
    pub fn total_population(&self, j: usize) -> f64 {
        self.base[j][0].norm_sqr() + self.base[j][1].norm_sqr() + self.relaxed[j].0 + self.relaxed[j].1
    }
}

/// First-order coherence imprinted by `input` on an atom at `delta`:
/// `-i * spectral_weight(delta)`.
pub fn imprint_amplitude(input: &InputPulse, delta: f64) -> Complex64 {
    Complex64::new(0.0, -input.spectral_weight(delta))
}

/// Adds the input's first-order perturbation to every atom. `scale`
/// multiplies the imprint (the engine uses it to carry the T2 reference
/// time). Returns a warning when the input leaves the linear regime.
pub fn imprint_input(ensemble: &mut AtomEnsemble, input: &InputPulse, scale: f64) -> Result<Option<String>> {
    input.validate()?;
    if !scale.is_finite() {
        return Err(Error::Config("imprint scale overflowed; shorten the run relative to T2".into()));
    }
    for j in 0..ensemble.len() {
        let a = imprint_amplitude(input, ensemble.detuning[j]) * scale;
        let b = ensemble.base[j];
        let d = &mut ensemble.signal[j];
        d[1] += a * b[0];
        d[0] -= a.conj() * b[1];
    }
    Ok((input.amplitude >= LINEAR_REGIME_LIMIT).then(|| {
        format!(
            "input amplitude {} >= {LINEAR_REGIME_LIMIT}: first-order imprint is inaccurate",
            input.amplitude
        )
    }))
}
