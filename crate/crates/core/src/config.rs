//! TOML run configuration.
//!
//! Every section is optional and falls back to the reference defaults.
//! Times are in seconds, frequencies in Hz and lengths in km.
//!
//! ```toml
//! [source]
//! rho = 0.9
//! beta = 2
//!
//! [multiplexing]
//! m_t = 20
//! m_s = [3, 10, 100]
//!
//! [sweep]
//! lengths = { start = 0.0, stop = 1000.0, points = 201 }
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mc::{HeraldSampling, McOptions, TieBreak};
use crate::model::{linspace, DirectModel, MemoryModel, RepeaterParams, FIBER_GROUP_INDEX, SPEED_OF_LIGHT_KM_S};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceSection {
    pub rho: f64,
    pub beta: u32,
    /// Repetition rate of the storage cycle.
    pub nu: f64,
    /// Repetition rate of direct transmission; defaults to `nu`.
    pub nu_direct: Option<f64>,
}

impl Default for SourceSection {
    fn default() -> Self {
        let p = RepeaterParams::default();
        Self {
            rho: p.rho,
            beta: p.beta,
            nu: p.nu,
            nu_direct: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSection {
    /// Fiber loss, dB/km.
    pub alpha: f64,
    pub group_index: f64,
    pub direct_model: DirectModel,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self {
            alpha: RepeaterParams::default().alpha,
            group_index: FIBER_GROUP_INDEX,
            direct_model: DirectModel::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorSection {
    pub eta_d_i: f64,
    pub eta_d_s: f64,
}

impl Default for DetectorSection {
    fn default() -> Self {
        let p = RepeaterParams::default();
        Self {
            eta_d_i: p.eta_d_i,
            eta_d_s: p.eta_d_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MultiplexingSection {
    pub m_t: u32,
    /// Spectral mode counts; the analytic sweep writes one file per entry,
    /// other subcommands use the first.
    pub m_s: Vec<u32>,
}

impl Default for MultiplexingSection {
    fn default() -> Self {
        Self {
            m_t: 20,
            m_s: vec![3, 10, 100],
        }
    }
}

/// A grid given either as explicit values or as an inclusive linear range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Values(Vec<f64>),
    Range { start: f64, stop: f64, points: usize },
}

impl GridSpec {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Self::Values(v) => v.clone(),
            Self::Range { start, stop, points } => linspace(*start, *stop, *points),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub lengths: GridSpec,
    pub n_max: u32,
    /// Chain length of the heatmap, km.
    pub total_length: f64,
    pub t2: GridSpec,
    pub eta_o: GridSpec,
    /// Append the star and triangle marker rows to the heatmap.
    pub markers: bool,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            lengths: GridSpec::Range {
                start: 0.0,
                stop: 1000.0,
                points: 201,
            },
            n_max: crate::model::DEFAULT_MAX_LINKS,
            total_length: 500.0,
            t2: GridSpec::Range {
                start: 0.1e-3,
                stop: 5e-3,
                points: 50,
            },
            eta_o: GridSpec::Range {
                start: 0.0,
                stop: 1.0,
                points: 51,
            },
            markers: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingChoice {
    #[default]
    PerMode,
    FirstSuccess,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McSection {
    pub n_cycles: u64,
    pub total_length: f64,
    pub n_links: u32,
    /// Overrides the first `multiplexing.m_s` entry.
    pub m_s: Option<u32>,
    pub sampling: SamplingChoice,
    pub tie_break: TieBreak,
    pub channel_spacing: f64,
    pub reference_spectral_index: u32,
    /// Write every cycle outcome as JSON lines.
    pub stream_outcomes: bool,
    pub seed: Option<u64>,
}

impl Default for McSection {
    fn default() -> Self {
        Self {
            n_cycles: 1_000_000,
            total_length: 100.0,
            n_links: 2,
            m_s: None,
            sampling: SamplingChoice::default(),
            tie_break: TieBreak::default(),
            channel_spacing: 4e6,
            reference_spectral_index: 0,
            stream_outcomes: false,
            seed: None,
        }
    }
}

impl McSection {
    pub fn options(&self) -> McOptions {
        McOptions {
            sampling: match self.sampling {
                SamplingChoice::PerMode => HeraldSampling::PerMode {
                    tie_break: self.tie_break,
                },
                SamplingChoice::FirstSuccess => HeraldSampling::FirstSuccess,
            },
            channel_spacing: self.channel_spacing,
            reference_spectral_index: self.reference_spectral_index,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseMode {
    /// One input, one cell.
    #[default]
    Single,
    /// Temporal train in one cell.
    Train,
    /// Temporal trains in several spectral cells.
    Spectral,
    /// Cells recalled one after another.
    Sequential,
    /// Input and one refocusing pi pulse.
    TwoPulseEcho,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PulseSection {
    pub mode: PulseMode,
    /// Preset row, 1 to 3.
    pub preset: usize,
    /// Defaults to 300 us for a single input and 800 us for trains.
    pub storage_time: Option<f64>,
    /// Defaults to 10 us for a single input and one mode spacing past the
    /// last input for trains.
    pub tau1: Option<f64>,
    /// Defaults to 800 for one cell and 100 for several.
    pub adiabaticity: Option<f64>,
    /// Multiplies the preset peak Rabi frequency.
    pub a0_scale: f64,
    pub atoms: usize,
    /// Raise the atom count when the trace outlasts the grid recurrence.
    pub auto_atoms: bool,
    pub input_amplitude: f64,
    pub dt_out: Option<f64>,
    pub step_refinement: f64,
    pub window_half_width: f64,
    /// Inputs per cell; 25 for `train` and 20 for `spectral` by default.
    pub temporal_modes: Option<usize>,
    pub mode_spacing: f64,
    pub spectral_cells: usize,
    pub cell_spacing: f64,
    /// Recall only this cell (0-based) in spectral mode.
    pub recall_cell: Option<usize>,
    pub sequential_times: Vec<f64>,
    /// Two-pulse echo separations.
    pub tau12: Vec<f64>,
    pub jitter_sigma: f64,
    pub jitter_cycles: usize,
    pub seed: Option<u64>,
    /// Detected counts per unit of echo energy, used for the SNR.
    pub detection_calibration: f64,
}

impl Default for PulseSection {
    fn default() -> Self {
        Self {
            mode: PulseMode::Single,
            preset: 1,
            storage_time: None,
            tau1: None,
            adiabaticity: None,
            a0_scale: 1.0,
            atoms: crate::cppe::DEFAULT_ATOMS,
            auto_atoms: true,
            input_amplitude: crate::cppe::DEFAULT_INPUT_AMPLITUDE,
            dt_out: None,
            step_refinement: 1.0,
            window_half_width: crate::cppe::DEFAULT_WINDOW_HALF_WIDTH,
            temporal_modes: None,
            mode_spacing: 7e-6,
            spectral_cells: 3,
            cell_spacing: 4e6,
            recall_cell: None,
            sequential_times: vec![450e-6, 850e-6],
            tau12: vec![20e-6, 50e-6, 100e-6, 200e-6, 300e-6, 400e-6],
            jitter_sigma: 0.0,
            jitter_cycles: 16,
            seed: None,
            detection_calibration: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSection {
    pub model: Option<String>,
    pub input: Option<String>,
    pub background: bool,
}

impl Default for FitSection {
    fn default() -> Self {
        Self {
            model: None,
            input: None,
            background: false,
        }
    }
}

/// Complete configuration.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub source: SourceSection,
    pub channel: ChannelSection,
    pub detectors: DetectorSection,
    pub memory: MemoryModel,
    pub multiplexing: MultiplexingSection,
    pub sweep: SweepSection,
    pub mc: McSection,
    pub pulse: PulseSection,
    pub fit: FitSection,
}

impl Config {
    /// Parses TOML; errors carry the line number of the offending key.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            let msg = e.message().to_string();
            match line {
                Some(l) => Error::Config(format!("line {l}: {msg}")),
                None => Error::Config(msg),
            }
        })?;
        Ok(cfg)
    }

    /// Parses `text`, then applies `section.key=value` overrides. Values are
    /// read as TOML and fall back to plain strings.
    pub fn with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let base = Self::from_toml(text)?;
        if overrides.is_empty() {
            return Ok(base);
        }
        let mut root: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        for o in overrides {
            let (path, raw) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` is not of the form key=value")))?;
            let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
            let keys: Vec<&str> = path.trim().split('.').collect();
            let (last, parents) = keys.split_last().expect("split yields one item");
            let mut table = &mut root;
            for k in parents {
                let entry = table
                    .entry(k.to_string())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()));
                table = entry
                    .as_table_mut()
                    .ok_or_else(|| Error::Config(format!("override `{o}`: `{k}` is not a section")))?;
            }
            table.insert(last.to_string(), value);
        }
        toml::Value::Table(root)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("override: {}", e.message())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Repeater parameters with the given spectral mode count.
    pub fn repeater_params(&self, m_s: u32) -> Result<RepeaterParams> {
        if !(self.channel.group_index > 0.0) {
            return Err(invalid("group_index", "must be > 0"));
        }
        let p = RepeaterParams {
            rho: self.source.rho,
            alpha: self.channel.alpha,
            beta: self.source.beta,
            eta_d_i: self.detectors.eta_d_i,
            eta_d_s: self.detectors.eta_d_s,
            m_t: self.multiplexing.m_t,
            m_s,
            v: SPEED_OF_LIGHT_KM_S / self.channel.group_index,
            nu: self.source.nu,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn first_m_s(&self) -> Result<u32> {
        self.multiplexing
            .m_s
            .first()
            .copied()
            .ok_or_else(|| invalid("m_s", "at least one spectral mode count is required"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_default() {
        assert_eq!(Config::from_toml("").unwrap(), Config::default());
    }

    #[test]
    fn round_trip() {
        let c = Config::default();
        assert_eq!(Config::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn unknown_key_reports_line() {
        let err = Config::from_toml("[source]\nrho = 0.5\nrhoo = 1\n").unwrap_err();
        let Error::Config(msg) = err else { panic!() };
        assert!(msg.starts_with("line 3"), "{msg}");
    }

    #[test]
    fn overrides_take_precedence() {
        let text = "[mc]\nn_cycles = 10\n";
        let c = Config::with_overrides(text, &["mc.n_cycles=20".into(), "pulse.mode=train".into()]).unwrap();
        assert_eq!(c.mc.n_cycles, 20);
        assert_eq!(c.pulse.mode, PulseMode::Train);
        assert!(Config::with_overrides(text, &["mc.bogus=1".into()]).is_err());
        assert!(Config::with_overrides(text, &["mc.n_cycles".into()]).is_err());
    }

    #[test]
    fn grids() {
        let c = Config::from_toml("[sweep]\nlengths = [10.0]\n").unwrap();
        assert_eq!(c.sweep.lengths.values(), vec![10.0]);
        let c = Config::from_toml("[sweep]\nlengths = { start = 0.0, stop = 10.0, points = 3 }\n").unwrap();
        assert_eq!(c.sweep.lengths.values(), vec![0.0, 5.0, 10.0]);
    }

    #[test]
    fn params_from_sections() {
        let c = Config::from_toml("[channel]\nalpha = 0.2\n[multiplexing]\nm_s = [5]\n").unwrap();
        let p = c.repeater_params(c.first_m_s().unwrap()).unwrap();
        assert_eq!(p.alpha, 0.2);
        assert_eq!(p.modes(), 100);
    }
}
