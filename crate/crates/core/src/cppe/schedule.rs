//! Pulse timing of the storage protocol and the built-in presets.

use serde::{Deserialize, Serialize};

use super::ensemble::MemoryCellSpec;
use super::pulse::{ChirpPulse, ControlPulse, InputPulse, InputShape, SquarePulse};
use crate::error::{check_non_negative, invalid, Error, Result};

/// Chirped pulse pair acting on one cell. `omega0` is relative to the cell
/// center; `tau2` overrides the schedule's CP1-to-CP2 delay for this cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CpPair {
    pub cell: usize,
    pub a0: f64,
    pub tau_cp: f64,
    pub delta: f64,
    #[serde(default)]
    pub omega0: f64,
    #[serde(default)]
    pub tau2: Option<f64>,
    /// Apply CP2. Without it only the storage pulse acts.
    #[serde(default = "yes")]
    pub recall: bool,
}

fn yes() -> bool {
    true
}

impl CpPair {
    pub fn adiabaticity(&self) -> f64 {
        self.pulse_at(0.0, 0.0).adiabaticity()
    }

    fn pulse_at(&self, t_start: f64, cell_center: f64) -> ChirpPulse {
        ChirpPulse {
            a0: self.a0,
            tau_cp: self.tau_cp,
            delta: self.delta,
            omega0: cell_center + self.omega0,
            t_start,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseRole {
    Storage,
    Recall,
    Extra,
}

/// A control pulse placed in time, with the cell it addresses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlacedPulse {
    pub pulse: ControlPulse,
    pub role: PulseRole,
    pub cell: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    Input,
    /// Where an unsilenced echo after CP1 alone would appear.
    PrimaryEcho,
    /// Echo revived by CP2.
    RevivedEcho,
    /// Echo of the control pulses themselves.
    CpEcho,
    /// Two-pulse echo after a refocusing pulse.
    TwoPulseEcho,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub kind: WindowKind,
    pub cell: Option<usize>,
    pub input: Option<usize>,
    pub center: f64,
    pub start: f64,
    pub end: f64,
}

impl Window {
    fn around(kind: WindowKind, cell: Option<usize>, input: Option<usize>, center: f64, half: f64) -> Self {
        Self {
            kind,
            cell,
            input,
            center,
            start: center - half,
            end: center + half,
        }
    }

    pub fn overlaps(&self, a: f64, b: f64) -> bool {
        self.start < b && a < self.end
    }
}

/// Inputs, delays and per-cell control pulses of one storage sequence.
///
/// Times are measured from the first input: CP1 starts `tau1` after it,
/// CP2 starts `tau2` after CP1 ends, so an input at `t_k` is revived at
/// `t_k + 2 (tau2 + tau_cp)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSchedule {
    pub inputs: Vec<InputPulse>,
    pub tau1: f64,
    pub tau2: f64,
    pub cp_pairs: Vec<CpPair>,
    /// Additional pulses at absolute times, e.g. refocusing pulses.
    #[serde(default)]
    pub extra_pulses: Vec<ControlPulse>,
    /// Suppress the warning for `2 tau1 >= tau2`.
    #[serde(default)]
    pub allow_short_tau2: bool,
}

/// Half-width of echo windows in units of the input FWHM.
pub const DEFAULT_WINDOW_HALF_WIDTH: f64 = 2.0;

impl PulseSchedule {
    pub fn reference_time(&self) -> f64 {
        self.inputs.iter().map(|i| i.center).reduce(f64::min).unwrap_or(0.0)
    }

    fn pair_tau2(&self, pair: &CpPair) -> f64 {
        pair.tau2.unwrap_or(self.tau2)
    }

    /// `T_s = 2 (tau2 + tau_cp)` of a pair.
    pub fn storage_time(&self, pair: &CpPair) -> f64 {
        2.0 * (self.pair_tau2(pair) + pair.tau_cp)
    }

    /// (CP1, CP2) of a pair in absolute time.
    pub fn pair_pulses(&self, pair: &CpPair, cells: &[MemoryCellSpec]) -> Result<(ChirpPulse, ChirpPulse)> {
        let cell = cells
            .get(pair.cell)
            .ok_or_else(|| invalid("cp_pairs", format!("cell index {} out of range", pair.cell)))?;
        let t1 = self.reference_time() + self.tau1;
        let cp1 = pair.pulse_at(t1, cell.center);
        let cp2 = pair.pulse_at(cp1.end() + self.pair_tau2(pair), cell.center);
        Ok((cp1, cp2))
    }

    pub fn control_pulses(&self, cells: &[MemoryCellSpec]) -> Result<Vec<PlacedPulse>> {
        let mut out = Vec::new();
        for pair in &self.cp_pairs {
            let (cp1, cp2) = self.pair_pulses(pair, cells)?;
            out.push(PlacedPulse {
                pulse: ControlPulse::Chirp(cp1),
                role: PulseRole::Storage,
                cell: Some(pair.cell),
            });
            if pair.recall {
                out.push(PlacedPulse {
                    pulse: ControlPulse::Chirp(cp2),
                    role: PulseRole::Recall,
                    cell: Some(pair.cell),
                });
            }
        }
        out.extend(self.extra_pulses.iter().map(|&pulse| PlacedPulse {
            pulse,
            role: PulseRole::Extra,
            cell: None,
        }));
        Ok(out)
    }

    /// Expected input, echo and CP-echo windows. Echo windows are annotated
    /// for every (input, pair) whose input carrier lies in the pair's cell.
    pub fn windows(&self, cells: &[MemoryCellSpec], half_width_fwhm: f64) -> Result<Vec<Window>> {
        let mut out = Vec::new();
        for (k, inp) in self.inputs.iter().enumerate() {
            let half = half_width_fwhm * inp.fwhm;
            let cell = cells.iter().position(|c| c.contains(inp.offset));
            out.push(Window::around(WindowKind::Input, cell, Some(k), inp.center, half));
        }
        for pair in &self.cp_pairs {
            let (cp1, cp2) = self.pair_pulses(pair, cells)?;
            let cell = &cells[pair.cell];
            for (k, inp) in self.inputs.iter().enumerate() {
                if !cell.contains(inp.offset) {
                    continue;
                }
                let half = half_width_fwhm * inp.fwhm;
                let primary = 2.0 * cp1.center() - inp.center;
                out.push(Window::around(WindowKind::PrimaryEcho, Some(pair.cell), Some(k), primary, half));
                if pair.recall {
                    let revived = inp.center + 2.0 * (cp2.center() - cp1.center());
                    out.push(Window::around(WindowKind::RevivedEcho, Some(pair.cell), Some(k), revived, half));
                }
            }
            if pair.recall {
                let c = 2.0 * cp2.center() - cp1.center();
                out.push(Window::around(WindowKind::CpEcho, Some(pair.cell), None, c, 0.5 * pair.tau_cp));
            }
        }
        for p in &self.extra_pulses {
            let c = 0.5 * (p.start() + p.end());
            for (k, inp) in self.inputs.iter().enumerate() {
                if c > inp.center {
                    let half = half_width_fwhm * inp.fwhm;
                    let cell = cells.iter().position(|cl| cl.contains(inp.offset));
                    out.push(Window::around(WindowKind::TwoPulseEcho, cell, Some(k), 2.0 * c - inp.center, half));
                }
            }
        }
        Ok(out)
    }

    /// Checks the schedule; returns non-fatal warnings.
    pub fn validate(&self, cells: &[MemoryCellSpec]) -> Result<Vec<String>> {
        check_non_negative("tau1", self.tau1)?;
        check_non_negative("tau2", self.tau2)?;
        for inp in &self.inputs {
            inp.validate()?;
        }
        for p in &self.extra_pulses {
            p.validate()?;
        }
        let mut warnings = Vec::new();
        if !self.allow_short_tau2 && 2.0 * self.tau1 >= self.tau2 {
            warnings.push(format!(
                "2*tau1 = {:e} s >= tau2 = {:e} s violates the 2 tau1 < tau2 rule; echoes may overlap control pulses",
                2.0 * self.tau1,
                self.tau2
            ));
        }
        let pulses = self.control_pulses(cells)?;
        for pair in &self.cp_pairs {
            self.pair_pulses(pair, cells)?.0.validate()?;
            if let Some(t2) = pair.tau2 {
                check_non_negative("tau2", t2)?;
            }
        }
        // Inputs must not overlap control pulses acting on their cell.
        for (k, inp) in self.inputs.iter().enumerate() {
            let (a, b) = (inp.center - inp.fwhm, inp.center + inp.fwhm);
            for p in &pulses {
                let same_cell = match p.cell {
                    Some(c) => cells[c].contains(inp.offset),
                    None => true,
                };
                if same_cell && a < p.pulse.end() && p.pulse.start() < b {
                    return Err(Error::Schedule(format!(
                        "input {k} at {:e} s overlaps a control pulse on [{:e}, {:e}] s",
                        inp.center,
                        p.pulse.start(),
                        p.pulse.end()
                    )));
                }
            }
        }
        for w in self.windows(cells, DEFAULT_WINDOW_HALF_WIDTH)? {
            if !matches!(w.kind, WindowKind::RevivedEcho | WindowKind::PrimaryEcho) {
                continue;
            }
            for p in &pulses {
                let same_cell = p.cell.is_none() || p.cell == w.cell;
                if same_cell && w.overlaps(p.pulse.start(), p.pulse.end()) {
                    warnings.push(format!(
                        "{:?} window at {:e} s overlaps a control pulse; keep 2 tau1 < tau2",
                        w.kind, w.center
                    ));
                }
            }
        }
        Ok(warnings)
    }
}

/// Input FWHM, chirp duration and span of a reference configuration, with
/// the efficiency (%) and SNR measured for it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: &'static str,
    pub input_fwhm: f64,
    pub tau_cp: f64,
    pub delta: f64,
    pub measured_efficiency: f64,
    pub measured_snr: f64,
}

pub const PRESETS: [Preset; 3] = [
    Preset {
        name: "750ns-30us-1.5MHz",
        input_fwhm: 750e-9,
        tau_cp: 30e-6,
        delta: 1.5e6,
        measured_efficiency: 8.49,
        measured_snr: 5.52,
    },
    Preset {
        name: "500ns-40us-2.2MHz",
        input_fwhm: 500e-9,
        tau_cp: 40e-6,
        delta: 2.2e6,
        measured_efficiency: 6.01,
        measured_snr: 4.11,
    },
    Preset {
        name: "250ns-60us-4.5MHz",
        input_fwhm: 250e-9,
        tau_cp: 60e-6,
        delta: 4.5e6,
        measured_efficiency: 1.62,
        measured_snr: 1.42,
    },
];

/// Adiabaticity factor used by the presets: the lowest value whose inversion
/// is >= 0.99 over the central half of the sweep for all three presets.
pub const DEFAULT_ADIABATICITY: f64 = 800.0;
/// Adiabaticity for several cells 4 MHz apart. At 800 the peak Rabi
/// frequency is comparable to the cell spacing and a lone recall pulse
/// leaves a light shift on its neighbours that the storage pulse never saw.
pub const MULTI_CELL_ADIABATICITY: f64 = 100.0;
pub const DEFAULT_ATOMS: usize = 2001;
pub const DEFAULT_TAU1: f64 = 10e-6;
pub const DEFAULT_INPUT_AMPLITUDE: f64 = 0.01;
/// Storage time the presets target, s.
pub const DEFAULT_STORAGE_TIME: f64 = 300e-6;

impl Preset {
    pub fn by_index(i: usize) -> Option<Self> {
        PRESETS.get(i).copied()
    }

    pub fn a0(&self, adiabaticity: f64) -> f64 {
        ChirpPulse::a0_for_adiabaticity(adiabaticity, self.tau_cp, self.delta)
    }

    /// Cell spanning the chirp sweep.
    pub fn cell(&self, center: f64, atoms: usize) -> MemoryCellSpec {
        MemoryCellSpec::uniform(center, 2.0 * self.delta, atoms)
    }

    pub fn pair(&self, cell: usize, adiabaticity: f64) -> CpPair {
        CpPair {
            cell,
            a0: self.a0(adiabaticity),
            tau_cp: self.tau_cp,
            delta: self.delta,
            omega0: 0.0,
            tau2: None,
            recall: true,
        }
    }

    pub fn input(&self, center: f64, offset: f64) -> InputPulse {
        InputPulse {
            center,
            amplitude: DEFAULT_INPUT_AMPLITUDE,
            fwhm: self.input_fwhm,
            offset,
            shape: InputShape::Lorentzian,
        }
    }

    /// `tau2` giving storage time `t_s`.
    pub fn tau2_for(&self, t_s: f64) -> f64 {
        0.5 * t_s - self.tau_cp
    }

    /// One input at t = 0 stored in a single cell and recalled at `t_s`.
    pub fn single_cell(&self, t_s: f64) -> (PulseSchedule, Vec<MemoryCellSpec>) {
        let schedule = PulseSchedule {
            inputs: vec![self.input(0.0, 0.0)],
            tau1: DEFAULT_TAU1,
            tau2: self.tau2_for(t_s),
            cp_pairs: vec![self.pair(0, DEFAULT_ADIABATICITY)],
            extra_pulses: Vec::new(),
            allow_short_tau2: false,
        };
        (schedule, vec![self.cell(0.0, DEFAULT_ATOMS)])
    }
}

/// Input followed by one short resonant pi pulse `tau12` later; the echo
/// appears at `2 tau12`.
pub fn two_pulse_echo(input_fwhm: f64, tau12: f64, cell: MemoryCellSpec) -> PulseSchedule {
    let rabi = 2.0 * std::f64::consts::PI * 10.0 * cell.width;
    let mut pi = SquarePulse::with_area(std::f64::consts::PI, rabi, cell.center, 0.0);
    pi.t_start = tau12 - 0.5 * pi.duration;
    PulseSchedule {
        inputs: vec![InputPulse {
            center: 0.0,
            amplitude: DEFAULT_INPUT_AMPLITUDE,
            fwhm: input_fwhm,
            offset: cell.center,
            shape: InputShape::Lorentzian,
        }],
        tau1: 0.0,
        tau2: 0.0,
        cp_pairs: Vec::new(),
        extra_pulses: vec![ControlPulse::Square(pi)],
        allow_short_tau2: true,
    }
}
