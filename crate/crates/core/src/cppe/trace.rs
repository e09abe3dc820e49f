//! Emission traces and the quantities read off them.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::ensemble::{imprint_amplitude, AtomEnsemble};
use super::pulse::InputPulse;
use super::schedule::{Window, WindowKind};
use crate::error::{check_non_negative, invalid, Result};
use crate::model::MemoryModel;
use crate::output::sig9;

/// Macroscopic emission sampled on a uniform grid.
///
/// `signal` is the input-linear coherence summed over all cells and
/// `intensity` its squared magnitude; with laser jitter both are averages
/// over cycles (the intensity is averaged directly). `channel_intensity`
/// resolves the emission per cell; `control_intensity` is the emission of
/// the control pulses' own coherence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionTrace {
    pub times: Vec<f64>,
    pub signal: Vec<Complex64>,
    pub intensity: Vec<f64>,
    pub channel_intensity: Vec<Vec<f64>>,
    pub control_intensity: Vec<f64>,
    pub windows: Vec<Window>,
}

pub const TRACE_HEADER: &str = "t_s,intensity,re_S,im_S";

impl EmissionTrace {
    pub fn dt(&self) -> f64 {
        if self.times.len() < 2 {
            0.0
        } else {
            self.times[1] - self.times[0]
        }
    }

    pub fn window(&self, kind: WindowKind, cell: Option<usize>, input: Option<usize>) -> Option<Window> {
        self.windows
            .iter()
            .find(|w| w.kind == kind && (cell.is_none() || w.cell == cell) && (input.is_none() || w.input == input))
            .copied()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRACE_HEADER);
        out.push('\n');
        for ((t, i), s) in self.times.iter().zip(&self.intensity).zip(&self.signal) {
            out.push_str(&format!("{},{},{},{}\n", sig9(*t), sig9(*i), sig9(s.re), sig9(s.im)));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EchoMetrics {
    /// A peak rose above the noise floor inside the window.
    pub present: bool,
    pub time: f64,
    pub energy: f64,
    pub efficiency: f64,
    pub fwhm: f64,
    pub peak: f64,
}

/// Peak time (parabolic refinement), trapezoid energy, efficiency proxy and
/// FWHM of `intensity` inside `[start, end]`. A window whose maximum does not
/// exceed `noise_floor` reports `present = false` and zero energy.
pub fn echo_metrics(
    times: &[f64],
    intensity: &[f64],
    start: f64,
    end: f64,
    reference_energy: f64,
    noise_floor: f64,
) -> Result<EchoMetrics> {
    if times.len() != intensity.len() {
        return Err(invalid("intensity", "length differs from the time grid"));
    }
    check_non_negative("noise_floor", noise_floor)?;
    let idx: Vec<usize> = (0..times.len())
        .filter(|&i| times[i] >= start && times[i] <= end)
        .collect();
    let absent = EchoMetrics {
        present: false,
        time: f64::NAN,
        energy: 0.0,
        efficiency: 0.0,
        fwhm: f64::NAN,
        peak: 0.0,
    };
    if idx.len() < 2 {
        return Ok(absent);
    }
    let (lo, hi) = (idx[0], idx[idx.len() - 1]);
    let mut energy = 0.0;
    for i in lo..hi {
        energy += 0.5 * (intensity[i] + intensity[i + 1]) * (times[i + 1] - times[i]);
    }
    let ip = (lo..=hi)
        .max_by(|&a, &b| intensity[a].total_cmp(&intensity[b]))
        .expect("non-empty window");
    let peak = intensity[ip];
    if !(peak > noise_floor) {
        return Ok(EchoMetrics { energy, ..absent });
    }
    let mut time = times[ip];
    if ip > lo && ip < hi {
        let (y0, y1, y2) = (intensity[ip - 1], intensity[ip], intensity[ip + 1]);
        let denom = y0 - 2.0 * y1 + y2;
        if denom != 0.0 {
            let shift = 0.5 * (y0 - y2) / denom;
            time += shift.clamp(-0.5, 0.5) * (times[ip + 1] - times[ip]);
        }
    }
    let half = 0.5 * peak;
    let mut left = times[lo];
    for i in (lo..ip).rev() {
        if intensity[i] <= half {
            let f = (half - intensity[i]) / (intensity[i + 1] - intensity[i]);
            left = times[i] + f * (times[i + 1] - times[i]);
            break;
        }
    }
    let mut right = times[hi];
    for i in ip + 1..=hi {
        if intensity[i] <= half {
            let f = (intensity[i - 1] - half) / (intensity[i - 1] - intensity[i]);
            right = times[i - 1] + f * (times[i] - times[i - 1]);
            break;
        }
    }
    let efficiency = if reference_energy > 0.0 {
        energy / reference_energy
    } else {
        f64::NAN
    };
    Ok(EchoMetrics {
        present: true,
        time,
        energy,
        efficiency,
        fwhm: right - left,
        peak,
    })
}

/// Energy the input would radiate if fully rephased: by Parseval, the
/// integral of `|S(t)|^2` over one recurrence period of the sampled
/// ensemble, `sum_j |w_j a_j|^2 / h_j`.
pub fn reference_input_energy(ensemble: &AtomEnsemble, input: &InputPulse) -> f64 {
    (0..ensemble.len())
        .map(|j| {
            let a = imprint_amplitude(input, ensemble.detuning[j]) * ensemble.weight[j];
            a.norm_sqr() / ensemble.spacing[j]
        })
        .sum()
}

/// Expected spontaneous-emission counts in `[start, end]` from ions left
/// excited at `t_ref`: `noise_scale * sum_j w_j p_e,j` times the fraction of
/// them decaying inside the window, `exp(-(start - t_ref)/T1) - exp(-(end - t_ref)/T1)`.
pub fn noise_model(
    weights: &[f64],
    excited: &[f64],
    mem: &MemoryModel,
    t_ref: f64,
    start: f64,
    end: f64,
) -> Result<f64> {
    mem.validate()?;
    if weights.len() != excited.len() {
        return Err(invalid("excited", "length differs from weights"));
    }
    if end < start {
        return Err(invalid("window", "end precedes start"));
    }
    let a = (start - t_ref).max(0.0);
    let b = (end - t_ref).max(0.0);
    let fraction = (-a / mem.t1).exp() - (-b / mem.t1).exp();
    let population: f64 = weights.iter().zip(excited).map(|(w, p)| w * p).sum();
    Ok(mem.noise_scale * population * fraction)
}

/// Echo counts over noise counts; infinite when the noise vanishes.
pub fn snr(echo: f64, noise: f64) -> f64 {
    if noise > 0.0 {
        echo / noise
    } else if echo > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}
