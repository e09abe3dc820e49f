//! Time marching of the ensemble through a pulse schedule.
//!
//! Time is cut at every pulse edge and imprint. Between cuts the atoms
//! evolve freely (closed form); under pulses they are stepped with the
//! Magnus integrator using drive samples shared by all atoms. T1 decay is
//! applied by operator splitting at every cut: the excited amplitudes are
//! damped by `exp(-dt / 2 T1)` and the lost population moves to the relaxed
//! part. T2 acts on the observables: the signal coherence of an input
//! imprinted at `t_k` carries `exp(-(t - t_k) / T2)`.
//!
//! All sums over atoms are taken in a fixed order, so traces do not depend
//! on the number of threads.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ensemble::{imprint_input, validate_cells, AtomEnsemble, MemoryCellSpec, DEFAULT_MIN_CELL_SPACING};
use super::propagate::{StepPropagator, NODES};
use super::pulse::{ControlPulse, Drive, InputPulse};
use super::schedule::{PulseRole, PulseSchedule, DEFAULT_WINDOW_HALF_WIDTH};
use super::trace::{reference_input_energy, EmissionTrace};
use crate::error::{check_non_negative, check_positive, invalid, Result};
use crate::model::MemoryModel;

const ATOM_CHUNK: usize = 64;
const SAMPLE_CHUNK: usize = 256;
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Per-cycle laser frequency offset applied to the recall pulses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Jitter {
    /// Standard deviation of the offset, Hz.
    pub sigma: f64,
    pub cycles: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunOptions {
    /// Output sample spacing; defaults to an eighth of the narrowest input FWHM.
    pub dt_out: Option<f64>,
    pub t_begin: Option<f64>,
    pub t_end: Option<f64>,
    /// Divides the integrator's resolution bound.
    pub step_refinement: f64,
    pub window_half_width: f64,
    pub min_cell_spacing: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            dt_out: None,
            t_begin: None,
            t_end: None,
            step_refinement: 1.0,
            window_half_width: DEFAULT_WINDOW_HALF_WIDTH,
            min_cell_spacing: DEFAULT_MIN_CELL_SPACING,
        }
    }
}

/// Ensemble populations right after the last control pulse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalPopulations {
    pub time: f64,
    pub cell: Vec<usize>,
    pub detuning: Vec<f64>,
    pub weight: Vec<f64>,
    pub excited: Vec<f64>,
}

impl FinalPopulations {
    /// Weights and excited populations of one cell.
    pub fn cell_slices(&self, cell: usize) -> (Vec<f64>, Vec<f64>) {
        self.cell
            .iter()
            .zip(self.weight.iter().zip(&self.excited))
            .filter(|(c, _)| **c == cell)
            .map(|(_, (w, p))| (*w, *p))
            .unzip()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub trace: EmissionTrace,
    pub populations: FinalPopulations,
    /// Fully rephased emission energy of each input.
    pub reference_energy: Vec<f64>,
    /// Adiabaticity factor of each CP pair.
    pub adiabaticity: Vec<f64>,
    /// Recall frequency offsets drawn for the jitter cycles, Hz.
    pub jitter_offsets: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Atom count that keeps the uniform grid's self-rephasing beyond `span`.
pub fn atoms_for_span(width: f64, span: f64) -> usize {
    let n = (1.2 * width * span).ceil() as usize;
    n | 1
}

struct Marcher<'a> {
    ens: AtomEnsemble,
    n_cells: usize,
    t: f64,
    mem: MemoryModel,
    /// Origin of the e^{t/T2} imprint scaling.
    t2_origin: f64,
    control_origin: f64,
    times: &'a [f64],
    next_sample: usize,
    channels: Vec<Vec<Complex64>>,
    control: Vec<Complex64>,
    next_imprint: usize,
    pop_time: f64,
    populations: Option<Vec<f64>>,
    refine: f64,
    extreme_detunings: (f64, f64),
}

impl<'a> Marcher<'a> {
    fn signal_factor(&self, t: f64) -> f64 {
        (-(t - self.t2_origin) / self.mem.t2).exp()
    }

    fn control_factor(&self, t: f64) -> f64 {
        if t > self.control_origin {
            (-(t - self.control_origin) / self.mem.t2).exp()
        } else {
            1.0
        }
    }

    fn snapshot_populations(&mut self) {
        self.populations = Some((0..self.ens.len()).map(|j| self.ens.excited_population(j)).collect());
    }

    /// T1 no-jump damping of the excited amplitudes over `dt`, moving the
    /// lost population to the relaxed part, with free rotation by `rotate`.
    fn relax(&mut self, dt: f64, rotate: bool) {
        let t1 = self.mem.t1;
        let damp = (-dt / (2.0 * t1)).exp();
        let pop_decay = (-dt / t1).exp();
        self.ens
            .base
            .par_iter_mut()
            .zip(self.ens.signal.par_iter_mut())
            .zip(self.ens.relaxed.par_iter_mut())
            .zip(self.ens.detuning.par_iter())
            .for_each(|(((b, d), r), &delta)| {
                let phase = if rotate {
                    Complex64::from_polar(1.0, -2.0 * PI * delta * dt)
                } else {
                    Complex64::new(1.0, 0.0)
                };
                let before = b[1].norm_sqr();
                b[1] *= phase * damp;
                d[1] *= phase * damp;
                let lost = before - b[1].norm_sqr();
                r.0 += r.1 * (1.0 - pop_decay) + lost;
                r.1 *= pop_decay;
                r.2 *= phase * damp;
            });
    }

    fn sample_range(&self, c: f64, last: bool) -> (usize, usize) {
        let s0 = self.next_sample;
        let mut s1 = s0;
        while s1 < self.times.len() && (self.times[s1] < c || (last && self.times[s1] <= c)) {
            s1 += 1;
        }
        (s0, s1)
    }

    fn free_segment(&mut self, c: f64, last: bool) {
        let (s0, s1) = self.sample_range(c, last);
        if s1 > s0 {
            let t = self.t;
            let times = &self.times[s0..s1];
            let ens = &self.ens;
            let n_cells = self.n_cells;
            let weighted: Vec<(Complex64, Complex64)> = (0..ens.len())
                .map(|j| (ens.signal_coherence(j) * ens.weight[j], ens.control_coherence(j) * ens.weight[j]))
                .collect();
            let active: Vec<usize> = (0..ens.len())
                .filter(|&j| weighted[j].0 != ZERO || weighted[j].1 != ZERO)
                .collect();
            let dt_out = if times.len() > 1 { times[1] - times[0] } else { 0.0 };
            let chunks: Vec<(Vec<Vec<Complex64>>, Vec<Complex64>)> = times
                .par_chunks(SAMPLE_CHUNK)
                .map(|ts| {
                    let m = ts.len();
                    let mut ch = vec![vec![ZERO; m]; n_cells];
                    let mut ctl = vec![ZERO; m];
                    for &j in &active {
                        let delta = ens.detuning[j];
                        let mut z = Complex64::from_polar(1.0, -2.0 * PI * delta * (ts[0] - t));
                        let step = Complex64::from_polar(1.0, -2.0 * PI * delta * dt_out);
                        let (sig, con) = weighted[j];
                        let row = &mut ch[ens.cell[j]];
                        for i in 0..m {
                            row[i] += sig * z;
                            ctl[i] += con * z;
                            z *= step;
                        }
                    }
                    (ch, ctl)
                })
                .collect();
            let damp_t1 = |ts: f64| (-(ts - t) / (2.0 * self.mem.t1)).exp();
            let mut s = s0;
            for (ch, ctl) in chunks {
                for i in 0..ctl.len() {
                    let ts = self.times[s];
                    let f1 = damp_t1(ts);
                    let fs = self.signal_factor(ts) * f1;
                    for k in 0..n_cells {
                        self.channels[k][s] = ch[k][i] * fs;
                    }
                    self.control[s] = ctl[i] * self.control_factor(ts) * f1;
                    s += 1;
                }
            }
            self.next_sample = s1;
        }
        let dt = c - self.t;
        if dt > 0.0 {
            self.relax(dt, true);
        }
        self.t = c;
    }

    fn driven_segment(&mut self, pulses: &[ControlPulse], c: f64, last: bool) -> Result<()> {
        let (lo, hi) = self.extreme_detunings;
        let bound = pulses.step_bound(lo).min(pulses.step_bound(hi)).min(
            pulses
                .iter()
                .map(|p| match p {
                    ControlPulse::Chirp(ch) if ch.omega0 >= lo && ch.omega0 <= hi => pulses.step_bound(ch.omega0),
                    ControlPulse::Square(sq) if sq.frequency >= lo && sq.frequency <= hi => {
                        pulses.step_bound(sq.frequency)
                    }
                    _ => f64::INFINITY,
                })
                .fold(f64::INFINITY, f64::min),
        ) / self.refine;
        let (s0, s1) = self.sample_range(c, last);
        // Cut points: segment start, sample times strictly inside, end.
        let mut cuts = vec![self.t];
        let mut marks = Vec::new();
        let mut steps: Vec<(f64, Complex64, Complex64)> = Vec::new();
        for s in s0..s1 {
            let ts = self.times[s];
            if ts > *cuts.last().expect("non-empty") {
                cuts.push(ts);
            }
            marks.push((usize::MAX, s));
        }
        if c > *cuts.last().expect("non-empty") {
            cuts.push(c);
        }
        // Steps between consecutive cuts; a sample at cut i is recorded
        // after the steps that reach it.
        let mut reach = vec![0usize; cuts.len()];
        for i in 0..cuts.len() - 1 {
            let (a, b) = (cuts[i], cuts[i + 1]);
            let n = (((b - a) / bound).ceil() as usize).max(1);
            let h = (b - a) / n as f64;
            for k in 0..n {
                let ts = a + k as f64 * h;
                steps.push((h, pulses.amplitude(ts + NODES[0] * h), pulses.amplitude(ts + NODES[1] * h)));
            }
            reach[i + 1] = steps.len();
        }
        for m in marks.iter_mut() {
            let ts = self.times[m.1];
            let i = cuts.iter().position(|&x| x == ts).expect("sample is a cut");
            m.0 = reach[i];
        }
        let n_cells = self.n_cells;
        let n_marks = marks.len();
        let ens = &mut self.ens;
        let partials: Vec<(Vec<Vec<Complex64>>, Vec<Complex64>)> = ens
            .base
            .par_chunks_mut(ATOM_CHUNK)
            .zip(ens.signal.par_chunks_mut(ATOM_CHUNK))
            .zip(ens.relaxed.par_chunks_mut(ATOM_CHUNK))
            .zip(ens.detuning.par_chunks(ATOM_CHUNK))
            .zip(ens.weight.par_chunks(ATOM_CHUNK))
            .zip(ens.cell.par_chunks(ATOM_CHUNK))
            .map(|(((((bs, ds), rs), deltas), ws), cells)| {
                let mut ch = vec![vec![ZERO; n_marks]; n_cells];
                let mut ctl = vec![ZERO; n_marks];
                for a in 0..bs.len() {
                    let (mut b, mut d, mut r) = (bs[a], ds[a], rs[a]);
                    let delta = deltas[a];
                    let mut mi = 0;
                    let mut record = |k: usize, b: &[Complex64; 2], d: &[Complex64; 2], mi: &mut usize| {
                        while *mi < n_marks && marks[*mi].0 == k {
                            let sig = b[0].conj() * d[1] + d[0].conj() * b[1];
                            ch[cells[a]][*mi] += sig * ws[a];
                            ctl[*mi] += b[0].conj() * b[1] * ws[a];
                            *mi += 1;
                        }
                    };
                    record(0, &b, &d, &mut mi);
                    for (k, &(h, w1, w2)) in steps.iter().enumerate() {
                        let u = StepPropagator::magnus(delta, h, w1, w2);
                        b = u.apply(b);
                        d = u.apply(d);
                        r = u.apply_density(r.0, r.1, r.2);
                        record(k + 1, &b, &d, &mut mi);
                    }
                    bs[a] = b;
                    ds[a] = d;
                    rs[a] = r;
                }
                (ch, ctl)
            })
            .collect();
        for (i, &(_, s)) in marks.iter().enumerate() {
            let ts = self.times[s];
            let fs = self.signal_factor(ts);
            let fc = self.control_factor(ts);
            for k in 0..n_cells {
                self.channels[k][s] = partials.iter().map(|p| p.0[k][i]).sum::<Complex64>() * fs;
            }
            self.control[s] = partials.iter().map(|p| p.1[i]).sum::<Complex64>() * fc;
        }
        self.next_sample = s1;
        let dt = c - self.t;
        self.relax(dt, false);
        self.t = c;
        Ok(())
    }

    /// Advances to `t_to`, applying imprints and pulses on the way.
    fn march(
        &mut self,
        pulses: &[ControlPulse],
        imprints: &[InputPulse],
        t_to: f64,
        t_final: f64,
        warnings: &mut Vec<String>,
    ) -> Result<()> {
        let mut cuts: Vec<f64> = pulses
            .iter()
            .flat_map(|p| [p.start(), p.end()])
            .chain(imprints.iter().map(|i| i.center))
            .chain([self.pop_time, t_to])
            .filter(|&c| c > self.t && c <= t_to)
            .collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        loop {
            while self.next_imprint < imprints.len() && imprints[self.next_imprint].center <= self.t {
                let inp = &imprints[self.next_imprint];
                let scale = ((inp.center - self.t2_origin) / self.mem.t2).exp();
                if let Some(w) = imprint_input(&mut self.ens, inp, scale)? {
                    warnings.push(w);
                }
                self.next_imprint += 1;
            }
            if self.t == self.pop_time {
                self.snapshot_populations();
            }
            let Some(&c) = cuts.iter().find(|&&c| c > self.t) else {
                break;
            };
            let active: Vec<ControlPulse> = pulses
                .iter()
                .filter(|p| p.start() <= self.t && p.end() >= c)
                .copied()
                .collect();
            let last = c >= t_final;
            if active.is_empty() {
                self.free_segment(c, last);
            } else {
                self.driven_segment(&active, c, last)?;
            }
        }
        Ok(())
    }
}

/// Runs the schedule on the given cells and returns the emission trace,
/// populations after the last control pulse and diagnostics.
pub fn run_sequence(
    schedule: &PulseSchedule,
    cells: &[MemoryCellSpec],
    mem: &MemoryModel,
    jitter: Option<Jitter>,
    options: &RunOptions,
) -> Result<RunResult> {
    mem.validate()?;
    validate_cells(cells, options.min_cell_spacing)?;
    check_positive("step_refinement", options.step_refinement)?;
    check_positive("window_half_width", options.window_half_width)?;
    let mut warnings = schedule.validate(cells)?;
    let placed = schedule.control_pulses(cells)?;
    let windows = schedule.windows(cells, options.window_half_width)?;

    let mut imprints = schedule.inputs.clone();
    imprints.sort_by(|a, b| a.center.total_cmp(&b.center));
    let min_fwhm = imprints.iter().map(|i| i.fwhm).fold(f64::INFINITY, f64::min);
    let dt_out = match options.dt_out {
        Some(dt) => {
            check_positive("dt_out", dt)?;
            dt
        }
        None if min_fwhm.is_finite() => min_fwhm / 8.0,
        None => 20e-9,
    };
    let first_pulse = placed.iter().map(|p| p.pulse.start()).fold(f64::INFINITY, f64::min);
    let t_begin = options.t_begin.unwrap_or_else(|| {
        let first_input = imprints.first().map(|i| i.center - 3.0 * i.fwhm);
        first_input.unwrap_or(first_pulse).min(first_pulse)
    });
    let t_end = options.t_end.unwrap_or_else(|| {
        windows
            .iter()
            .map(|w| w.end)
            .chain(placed.iter().map(|p| p.pulse.end()))
            .fold(t_begin, f64::max)
            + 5e-6
    });
    if !(t_end > t_begin) {
        return Err(invalid("t_end", "trace must end after it begins"));
    }
    let n_samples = ((t_end - t_begin) / dt_out).floor() as usize + 1;
    let times: Vec<f64> = (0..n_samples).map(|i| t_begin + i as f64 * dt_out).collect();
    let t_final = *times.last().expect("at least one sample");

    if let Some(first) = imprints.first() {
        for (k, c) in cells.iter().enumerate() {
            if t_final - first.center > 0.9 * c.recurrence_time() {
                warnings.push(format!(
                    "cell {k}: trace spans {:e} s past the first input but the {}-atom grid rephases after {:e} s; use at least {} atoms",
                    t_final - first.center,
                    c.atoms,
                    c.recurrence_time(),
                    atoms_for_span(c.width, t_final - first.center)
                ));
            }
        }
    }

    let ens = AtomEnsemble::new(cells)?;
    let reference_energy = schedule
        .inputs
        .iter()
        .map(|i| reference_input_energy(&ens, i))
        .collect();
    let lo = ens.detuning.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ens.detuning.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pop_time = placed.iter().map(|p| p.pulse.end()).fold(f64::NEG_INFINITY, f64::max);
    let mut marcher = Marcher {
        ens,
        n_cells: cells.len(),
        t: t_begin.min(imprints.first().map_or(t_begin, |i| i.center)),
        mem: *mem,
        t2_origin: imprints.first().map_or(t_begin, |i| i.center),
        control_origin: first_pulse,
        times: &times,
        next_sample: 0,
        channels: vec![vec![ZERO; n_samples]; cells.len()],
        control: vec![ZERO; n_samples],
        next_imprint: 0,
        pop_time: if pop_time.is_finite() { pop_time } else { t_final },
        populations: None,
        refine: options.step_refinement,
        extreme_detunings: (lo, hi),
    };
    // Samples before the first event are zero.
    while marcher.next_sample < n_samples && times[marcher.next_sample] < marcher.t {
        marcher.next_sample += 1;
    }

    let all: Vec<ControlPulse> = placed.iter().map(|p| p.pulse).collect();
    let (channels, control, populations, offsets, jitter_avg) = match jitter {
        None => {
            marcher.march(&all, &imprints, t_final, t_final, &mut warnings)?;
            let pops = marcher.populations.take().unwrap_or_default();
            (marcher.channels, marcher.control, pops, Vec::new(), None)
        }
        Some(j) => {
            check_non_negative("sigma", j.sigma)?;
            if j.cycles < 1 {
                return Err(invalid("cycles", "jitter needs at least one cycle"));
            }
            let recall_start = placed
                .iter()
                .filter(|p| p.role == PulseRole::Recall)
                .map(|p| p.pulse.start())
                .fold(f64::INFINITY, f64::min);
            let snap_time = recall_start.min(t_final);
            marcher.march(&all, &imprints, snap_time, t_final, &mut warnings)?;
            let normal = Normal::new(0.0, j.sigma).map_err(|e| invalid("sigma", e.to_string()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(j.seed);
            let offsets: Vec<f64> = (0..j.cycles).map(|_| normal.sample(&mut rng)).collect();
            let mut sum_s = vec![ZERO; n_samples];
            let mut sum_i = vec![0.0; n_samples];
            let mut sum_ch = vec![vec![0.0; n_samples]; cells.len()];
            let mut sum_ctl = vec![0.0; n_samples];
            let mut pops = Vec::new();
            for &f in &offsets {
                let shifted: Vec<ControlPulse> = placed
                    .iter()
                    .map(|p| if p.role == PulseRole::Recall { p.pulse.shifted(f) } else { p.pulse })
                    .collect();
                let mut m = Marcher {
                    ens: marcher.ens.clone(),
                    channels: marcher.channels.clone(),
                    control: marcher.control.clone(),
                    populations: marcher.populations.clone(),
                    ..marcher
                };
                m.march(&shifted, &imprints, t_final, t_final, &mut warnings)?;
                for s in 0..n_samples {
                    let total: Complex64 = (0..cells.len()).map(|k| m.channels[k][s]).sum();
                    sum_s[s] += total;
                    sum_i[s] += total.norm_sqr();
                    for k in 0..cells.len() {
                        sum_ch[k][s] += m.channels[k][s].norm_sqr();
                    }
                    sum_ctl[s] += m.control[s].norm_sqr();
                }
                if pops.is_empty() {
                    pops = m.populations.take().unwrap_or_default();
                }
            }
            let n = j.cycles as f64;
            let avg = (
                sum_s.into_iter().map(|s| s / n).collect::<Vec<_>>(),
                sum_i.into_iter().map(|s| s / n).collect::<Vec<_>>(),
                sum_ch
                    .into_iter()
                    .map(|c| c.into_iter().map(|s| s / n).collect())
                    .collect::<Vec<Vec<f64>>>(),
                sum_ctl.into_iter().map(|s| s / n).collect::<Vec<_>>(),
            );
            (Vec::new(), Vec::new(), pops, offsets, Some(avg))
        }
    };
    warnings.dedup();

    let trace = match jitter_avg {
        Some((signal, intensity, channel_intensity, control_intensity)) => EmissionTrace {
            times: times.clone(),
            signal,
            intensity,
            channel_intensity,
            control_intensity,
            windows: windows.clone(),
        },
        None => {
            let signal: Vec<Complex64> = (0..n_samples)
                .map(|s| (0..cells.len()).map(|k| channels[k][s]).sum())
                .collect();
            EmissionTrace {
                intensity: signal.iter().map(|s| s.norm_sqr()).collect(),
                signal,
                channel_intensity: channels
                    .iter()
                    .map(|c| c.iter().map(|s| s.norm_sqr()).collect())
                    .collect(),
                control_intensity: control.iter().map(|s| s.norm_sqr()).collect(),
                times: times.clone(),
                windows: windows.clone(),
            }
        }
    };
    let ens = AtomEnsemble::new(cells)?;
    Ok(RunResult {
        trace,
        populations: FinalPopulations {
            time: if pop_time.is_finite() { pop_time } else { t_final },
            cell: ens.cell,
            detuning: ens.detuning,
            weight: ens.weight,
            excited: populations,
        },
        reference_energy,
        adiabaticity: schedule.cp_pairs.iter().map(|p| p.adiabaticity()).collect(),
        jitter_offsets: offsets,
        warnings,
    })
}
