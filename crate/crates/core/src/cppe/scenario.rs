//! Ready-made storage sequences built from the `[pulse]` configuration, and
//! the per-window report of a run.

use serde::{Deserialize, Serialize};

use super::engine::{atoms_for_span, run_sequence, Jitter, RunOptions, RunResult};
use super::ensemble::MemoryCellSpec;
use super::schedule::{
    two_pulse_echo, CpPair, Preset, PulseSchedule, Window, WindowKind, DEFAULT_ADIABATICITY,
    MULTI_CELL_ADIABATICITY, PRESETS,
};
use super::trace::{echo_metrics, noise_model, snr, EchoMetrics};
use crate::config::{PulseMode, PulseSection};
use crate::error::{check_non_negative, check_positive, invalid, Result};
use crate::model::MemoryModel;

/// A schedule with its cells and run settings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub name: String,
    pub mode: PulseMode,
    pub preset: Preset,
    pub schedule: PulseSchedule,
    pub cells: Vec<MemoryCellSpec>,
    pub jitter: Option<Jitter>,
    pub options: RunOptions,
}

fn preset_of(cfg: &PulseSection) -> Result<Preset> {
    if cfg.preset == 0 {
        return Err(invalid("preset", "presets are numbered from 1"));
    }
    Preset::by_index(cfg.preset - 1)
        .ok_or_else(|| invalid("preset", format!("only {} presets exist", PRESETS.len())))
}

/// Builds the scenarios of `cfg`: one for every mode except the two-pulse
/// echo, which gets one per separation.
pub fn scenarios(cfg: &PulseSection) -> Result<Vec<Scenario>> {
    let preset = preset_of(cfg)?;
    let multi_cell = matches!(cfg.mode, PulseMode::Spectral | PulseMode::Sequential);
    let adiabaticity = cfg.adiabaticity.unwrap_or(if multi_cell {
        MULTI_CELL_ADIABATICITY
    } else {
        DEFAULT_ADIABATICITY
    });
    check_positive("adiabaticity", adiabaticity)?;
    check_non_negative("a0_scale", cfg.a0_scale)?;
    check_positive("mode_spacing", cfg.mode_spacing)?;
    check_non_negative("jitter_sigma", cfg.jitter_sigma)?;
    check_non_negative("input_amplitude", cfg.input_amplitude)?;
    if cfg.atoms == 0 {
        return Err(invalid("atoms", "must be >= 1"));
    }
    let options = RunOptions {
        dt_out: cfg.dt_out,
        step_refinement: cfg.step_refinement,
        window_half_width: cfg.window_half_width,
        ..RunOptions::default()
    };
    let jitter = (cfg.jitter_sigma > 0.0).then(|| Jitter {
        sigma: cfg.jitter_sigma,
        cycles: cfg.jitter_cycles.max(1),
        seed: cfg.seed.unwrap_or(0),
    });
    let mut pair = preset.pair(0, adiabaticity);
    pair.a0 *= cfg.a0_scale;
    let input = |center: f64, offset: f64| {
        let mut i = preset.input(center, offset);
        i.amplitude = cfg.input_amplitude;
        i
    };
    let train = |n: usize| -> Vec<f64> { (0..n).map(|k| k as f64 * cfg.mode_spacing).collect() };
    let tau1_train = |n: usize| cfg.tau1.unwrap_or(n as f64 * cfg.mode_spacing);

    let built: Vec<(String, PulseSchedule, Vec<MemoryCellSpec>)> = match cfg.mode {
        PulseMode::Single => {
            let t_s = cfg.storage_time.unwrap_or(300e-6);
            let schedule = PulseSchedule {
                inputs: vec![input(0.0, 0.0)],
                tau1: cfg.tau1.unwrap_or(super::schedule::DEFAULT_TAU1),
                tau2: preset.tau2_for(t_s),
                cp_pairs: vec![pair],
                extra_pulses: Vec::new(),
                allow_short_tau2: false,
            };
            vec![("single".into(), schedule, vec![preset.cell(0.0, cfg.atoms)])]
        }
        PulseMode::Train => {
            let n = cfg.temporal_modes.unwrap_or(25);
            let t_s = cfg.storage_time.unwrap_or(800e-6);
            let schedule = PulseSchedule {
                inputs: train(n).into_iter().map(|t| input(t, 0.0)).collect(),
                tau1: tau1_train(n),
                tau2: preset.tau2_for(t_s),
                cp_pairs: vec![pair],
                extra_pulses: Vec::new(),
                allow_short_tau2: false,
            };
            vec![("train".into(), schedule, vec![preset.cell(0.0, cfg.atoms)])]
        }
        PulseMode::Spectral => {
            let n = cfg.temporal_modes.unwrap_or(20);
            let t_s = cfg.storage_time.unwrap_or(800e-6);
            if cfg.spectral_cells == 0 {
                return Err(invalid("spectral_cells", "must be >= 1"));
            }
            if let Some(r) = cfg.recall_cell {
                if r >= cfg.spectral_cells {
                    return Err(invalid("recall_cell", "must index one of the spectral cells"));
                }
            }
            let centers: Vec<f64> = (0..cfg.spectral_cells).map(|c| c as f64 * cfg.cell_spacing).collect();
            let cells = centers.iter().map(|&c| preset.cell(c, cfg.atoms)).collect();
            let mut inputs = Vec::new();
            for &c in &centers {
                inputs.extend(train(n).into_iter().map(|t| input(t, c)));
            }
            let cp_pairs = (0..cfg.spectral_cells)
                .map(|c| CpPair {
                    cell: c,
                    recall: cfg.recall_cell.is_none_or(|r| r == c),
                    ..pair
                })
                .collect();
            let schedule = PulseSchedule {
                inputs,
                tau1: tau1_train(n),
                tau2: preset.tau2_for(t_s),
                cp_pairs,
                extra_pulses: Vec::new(),
                allow_short_tau2: false,
            };
            vec![("spectral".into(), schedule, cells)]
        }
        PulseMode::Sequential => {
            if cfg.sequential_times.is_empty() {
                return Err(invalid("sequential_times", "need at least one recall time"));
            }
            let k = cfg.sequential_times.len();
            let centers: Vec<f64> = (0..k).map(|c| c as f64 * cfg.cell_spacing).collect();
            let cp_pairs = cfg
                .sequential_times
                .iter()
                .enumerate()
                .map(|(c, &t)| CpPair {
                    cell: c,
                    tau2: Some(preset.tau2_for(t)),
                    ..pair
                })
                .collect();
            let schedule = PulseSchedule {
                inputs: centers.iter().map(|&c| input(0.0, c)).collect(),
                tau1: cfg.tau1.unwrap_or(super::schedule::DEFAULT_TAU1),
                tau2: preset.tau2_for(cfg.sequential_times[0]),
                cp_pairs,
                extra_pulses: Vec::new(),
                allow_short_tau2: false,
            };
            let cells = centers.iter().map(|&c| preset.cell(c, cfg.atoms)).collect();
            vec![("sequential".into(), schedule, cells)]
        }
        PulseMode::TwoPulseEcho => {
            if cfg.tau12.is_empty() {
                return Err(invalid("tau12", "need at least one pulse separation"));
            }
            cfg.tau12
                .iter()
                .map(|&tau12| {
                    check_positive("tau12", tau12)?;
                    let cell = preset.cell(0.0, cfg.atoms);
                    let mut s = two_pulse_echo(preset.input_fwhm, tau12, cell);
                    s.inputs[0].amplitude = cfg.input_amplitude;
                    Ok((format!("two_pulse_echo_{:.0}us", tau12 * 1e6), s, vec![cell]))
                })
                .collect::<Result<_>>()?
        }
    };

    built
        .into_iter()
        .map(|(name, schedule, mut cells)| {
            if cfg.auto_atoms {
                let span = trace_span(&schedule, &cells, &options)?;
                for c in &mut cells {
                    c.atoms = c.atoms.max(atoms_for_span(c.width, span));
                }
            }
            Ok(Scenario {
                name,
                mode: cfg.mode,
                preset,
                schedule,
                cells,
                jitter,
                options,
            })
        })
        .collect()
}

/// Time from the first input to the end of the default trace.
fn trace_span(schedule: &PulseSchedule, cells: &[MemoryCellSpec], options: &RunOptions) -> Result<f64> {
    let end = schedule
        .windows(cells, options.window_half_width)?
        .iter()
        .map(|w| w.end)
        .chain(schedule.control_pulses(cells)?.iter().map(|p| p.pulse.end()))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok((end + 5e-6 - schedule.reference_time()).max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub window: Window,
    pub metrics: EchoMetrics,
    /// Expected spontaneous-emission counts in the window.
    pub noise: Option<f64>,
    /// Calibrated echo counts over `noise`.
    pub snr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub name: String,
    pub mode: PulseMode,
    pub preset: String,
    pub a0: Vec<f64>,
    pub adiabaticity: Vec<f64>,
    pub atoms: Vec<usize>,
    /// Storage time of each CP pair.
    pub storage_times: Vec<f64>,
    pub reference_energy: Vec<f64>,
    pub windows: Vec<WindowReport>,
    pub jitter_offsets: Vec<f64>,
    pub warnings: Vec<String>,
}

impl ScenarioReport {
    pub fn find(&self, kind: WindowKind, cell: Option<usize>, input: Option<usize>) -> Option<&WindowReport> {
        self.windows.iter().find(|w| {
            w.window.kind == kind
                && (cell.is_none() || w.window.cell == cell)
                && (input.is_none() || w.window.input == input)
        })
    }
}

/// Runs a scenario and reports every annotated window.
pub fn run_scenario(
    scenario: &Scenario,
    mem: &MemoryModel,
    calibration: f64,
) -> Result<(RunResult, ScenarioReport)> {
    check_non_negative("detection_calibration", calibration)?;
    let result = run_sequence(
        &scenario.schedule,
        &scenario.cells,
        mem,
        scenario.jitter,
        &scenario.options,
    )?;
    let report = report(scenario, &result, mem, calibration)?;
    Ok((result, report))
}

/// Echo metrics, noise and SNR of every window of `result`. Windows of a
/// cell are read from that cell's channel when several cells are present.
pub fn report(
    scenario: &Scenario,
    result: &RunResult,
    mem: &MemoryModel,
    calibration: f64,
) -> Result<ScenarioReport> {
    let trace = &result.trace;
    let pops = &result.populations;
    let multi = scenario.cells.len() > 1;
    let mut windows = Vec::with_capacity(trace.windows.len());
    for w in &trace.windows {
        let intensity = match w.cell {
            Some(c) if multi => &trace.channel_intensity[c],
            _ => &trace.intensity,
        };
        let k = w.input.unwrap_or(0);
        let reference = result.reference_energy.get(k).copied().unwrap_or(0.0);
        let fwhm = scenario.schedule.inputs.get(k).map_or(1e-6, |i| i.fwhm);
        // Anything below a millionth of the rephased input peak is numerical dust.
        let floor = 1e-6 * reference / fwhm;
        let metrics = echo_metrics(&trace.times, intensity, w.start, w.end, reference, floor)?;
        let (weights, excited) = match w.cell {
            Some(c) => pops.cell_slices(c),
            None => (pops.weight.clone(), pops.excited.clone()),
        };
        // Populations are known only after the last control pulse; earlier
        // windows get no noise estimate.
        let (noise, snr) = if w.start >= pops.time {
            let n = noise_model(&weights, &excited, mem, pops.time, w.start, w.end)?;
            (Some(n), Some(snr(metrics.energy * calibration, n)))
        } else {
            (None, None)
        };
        windows.push(WindowReport {
            window: *w,
            metrics,
            noise,
            snr,
        });
    }
    Ok(ScenarioReport {
        name: scenario.name.clone(),
        mode: scenario.mode,
        preset: scenario.preset.name.to_string(),
        a0: scenario.schedule.cp_pairs.iter().map(|p| p.a0).collect(),
        adiabaticity: result.adiabaticity.clone(),
        atoms: scenario.cells.iter().map(|c| c.atoms).collect(),
        storage_times: scenario
            .schedule
            .cp_pairs
            .iter()
            .map(|p| scenario.schedule.storage_time(p))
            .collect(),
        reference_energy: result.reference_energy.clone(),
        windows,
        jitter_offsets: result.jitter_offsets.clone(),
        warnings: result.warnings.clone(),
    })
}
