//! Photon-count histograms and the efficiency/SNR read off them.

use serde::{Deserialize, Serialize};

use crate::error::{check_positive, invalid, Error, Result};

/// A named `[start, end)` interval in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountWindow {
    pub name: String,
    pub start: f64,
    pub end: f64,
}

impl CountWindow {
    pub fn new(name: &str, start: f64, end: f64) -> Self {
        Self {
            name: name.into(),
            start,
            end,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountHistogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub cycles: u64,
    pub windows: Vec<CountWindow>,
    /// Timestamps that fell outside the binned range.
    pub dropped: u64,
}

impl CountHistogram {
    pub fn new(edges: Vec<f64>, counts: Vec<u64>, cycles: u64, windows: Vec<CountWindow>) -> Result<Self> {
        let h = Self {
            edges,
            counts,
            cycles,
            windows,
            dropped: 0,
        };
        h.validate()?;
        Ok(h)
    }

    /// Uniform bins of `width` covering `[start, end)`.
    pub fn uniform_edges(start: f64, end: f64, width: f64) -> Result<Vec<f64>> {
        check_positive("width", width)?;
        if !(end > start) {
            return Err(invalid("range", "end must exceed start"));
        }
        // Tolerate rounding so an exact multiple does not gain a bin.
        let n = ((end - start) / width * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        Ok((0..=n).map(|i| start + i as f64 * width).collect())
    }

    pub fn validate(&self) -> Result<()> {
        if self.edges.len() < 2 {
            return Err(invalid("edges", "need at least one bin"));
        }
        if self.edges.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("edges", "edges must be strictly increasing"));
        }
        if self.counts.len() != self.edges.len() - 1 {
            return Err(invalid("counts", "one count per bin required"));
        }
        if self.cycles < 1 {
            return Err(invalid("cycles", "must be >= 1"));
        }
        let (lo, hi) = (self.edges[0], self.edges[self.edges.len() - 1]);
        for w in &self.windows {
            if !(w.end > w.start) || w.start < lo || w.end > hi {
                return Err(invalid("windows", format!("window `{}` outside the histogram range", w.name)));
            }
        }
        Ok(())
    }

    fn window(&self, name: &str) -> Result<&CountWindow> {
        self.windows
            .iter()
            .find(|w| w.name == name)
            .ok_or_else(|| invalid("windows", format!("no window named `{name}`")))
    }

    /// Bins whose centers fall in `[start, end)`.
    fn bins_in(&self, start: f64, end: f64) -> impl Iterator<Item = usize> + '_ {
        (0..self.counts.len()).filter(move |&i| {
            let c = 0.5 * (self.edges[i] + self.edges[i + 1]);
            c >= start && c < end
        })
    }

    /// Counts and covered duration of a named window.
    pub fn window_counts(&self, name: &str) -> Result<(u64, f64)> {
        let w = self.window(name)?;
        Ok(self.bins_in(w.start, w.end).fold((0, 0.0), |(n, len), i| {
            (n + self.counts[i], len + self.edges[i + 1] - self.edges[i])
        }))
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Bins timestamps into `edges`; out-of-range timestamps are counted in
/// `dropped`.
pub fn bin_timestamps(
    timestamps: &[f64],
    edges: Vec<f64>,
    cycles: u64,
    windows: Vec<CountWindow>,
) -> Result<CountHistogram> {
    let mut h = CountHistogram::new(edges.clone(), vec![0; edges.len() - 1], cycles, windows)?;
    for &t in timestamps {
        // partition_point gives the first edge greater than t.
        let k = edges.partition_point(|&e| e <= t);
        if k == 0 || k == edges.len() || !t.is_finite() {
            h.dropped += 1;
        } else {
            h.counts[k - 1] += 1;
        }
    }
    Ok(h)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyEstimate {
    pub efficiency: f64,
    /// Combined Poisson 1-sigma uncertainty before clamping.
    pub sigma: f64,
    /// Value before clamping to [0, 1].
    pub raw: f64,
    pub clamped: bool,
}

/// Window names used by [`efficiency_from_histogram`] and [`snr`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowNames {
    pub echo: String,
    pub noise: String,
    pub input: String,
}

impl Default for WindowNames {
    fn default() -> Self {
        Self {
            echo: "echo".into(),
            noise: "noise".into(),
            input: "input".into(),
        }
    }
}

/// Retrieval efficiency: echo counts minus background, over the reference
/// input counts, all per cycle, divided by `calibration`.
///
/// The background is the same echo window in `noise_run` when given,
/// otherwise the `noise` window of `h` scaled to the echo window length.
pub fn efficiency_from_histogram(
    h: &CountHistogram,
    reference: &CountHistogram,
    noise_run: Option<&CountHistogram>,
    names: &WindowNames,
    calibration: f64,
) -> Result<EfficiencyEstimate> {
    check_positive("calibration", calibration)?;
    h.validate()?;
    reference.validate()?;
    let (echo, echo_len) = h.window_counts(&names.echo)?;
    let (input, _) = reference.window_counts(&names.input)?;
    if input == 0 {
        return Err(Error::UndefinedEfficiency);
    }
    let nh = h.cycles as f64;
    // Background per cycle and its variance per cycle^2.
    let (bg, bg_var) = match noise_run {
        Some(n) => {
            n.validate()?;
            let (c, _) = n.window_counts(&names.echo)?;
            let nc = n.cycles as f64;
            (c as f64 / nc, c as f64 / (nc * nc))
        }
        None => {
            let (c, len) = h.window_counts(&names.noise)?;
            if len == 0.0 {
                return Err(invalid("windows", "noise window covers no bins"));
            }
            let s = echo_len / len;
            (c as f64 * s / nh, c as f64 * s * s / (nh * nh))
        }
    };
    let signal = echo as f64 / nh - bg;
    let signal_var = echo as f64 / (nh * nh) + bg_var;
    let nr = reference.cycles as f64;
    let refc = input as f64 / nr;
    let ref_var = input as f64 / (nr * nr);
    let raw = signal / refc / calibration;
    let sigma = (signal_var / (refc * refc) + signal * signal * ref_var / refc.powi(4)).sqrt() / calibration;
    let efficiency = raw.clamp(0.0, 1.0);
    Ok(EfficiencyEstimate {
        efficiency,
        sigma,
        raw,
        clamped: efficiency != raw,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrEstimate {
    pub snr: f64,
    /// The noise run recorded no counts in the window.
    pub infinite: bool,
}

/// Per-cycle echo-window counts with input over those of a run without input.
pub fn snr(h: &CountHistogram, noise_run: &CountHistogram, window: &str) -> Result<SnrEstimate> {
    h.validate()?;
    noise_run.validate()?;
    let (s, _) = h.window_counts(window)?;
    let (n, _) = noise_run.window_counts(window)?;
    let s = s as f64 / h.cycles as f64;
    if n == 0 {
        return Ok(SnrEstimate {
            snr: f64::INFINITY,
            infinite: true,
        });
    }
    Ok(SnrEstimate {
        snr: s / (n as f64 / noise_run.cycles as f64),
        infinite: false,
    })
}

/// One timestamp (s) per line; blank lines and `#` comments are skipped.
pub fn parse_timestamps(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: f64 = line
            .parse()
            .map_err(|_| Error::Config(format!("line {}: `{line}` is not a timestamp", i + 1)))?;
        out.push(v);
    }
    Ok(out)
}

/// Pre-binned `t_s,counts` CSV (header optional); `t_s` are bin starts and
/// the last bin takes the width of the one before it.
pub fn parse_binned_csv(text: &str, cycles: u64, windows: Vec<CountWindow>) -> Result<CountHistogram> {
    let mut starts = Vec::new();
    let mut counts = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (i == 0 && line.starts_with("t_s")) {
            continue;
        }
        let mut parts = line.split(',').map(str::trim);
        let (Some(t), Some(c), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::Config(format!("line {}: expected `t_s,counts`", i + 1)));
        };
        let t: f64 = t
            .parse()
            .map_err(|_| Error::Config(format!("line {}: bad time `{t}`", i + 1)))?;
        let c: u64 = c
            .parse()
            .map_err(|_| Error::Config(format!("line {}: bad count `{c}`", i + 1)))?;
        starts.push(t);
        counts.push(c);
    }
    if starts.len() < 2 {
        return Err(Error::Config("binned CSV needs at least two rows".into()));
    }
    let last = starts[starts.len() - 1] + (starts[starts.len() - 1] - starts[starts.len() - 2]);
    starts.push(last);
    CountHistogram::new(starts, counts, cycles, windows)
}
