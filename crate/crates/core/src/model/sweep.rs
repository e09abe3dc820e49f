//! Parameter sweeps over distance and over (T2, eta_o) memory grids.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::params::{MemoryModel, RepeaterParams};
use super::rate::{direct_transmission_probability, optimize_links, DirectModel, DEFAULT_MAX_LINKS};
use crate::error::{invalid, Result};

/// Axes of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SweepGrid {
    /// Total chain lengths, km.
    Distance { lengths: Vec<f64> },
    /// Coherence times (s) by zero-time efficiencies at a fixed length (km).
    Memory {
        total_length: f64,
        t2: Vec<f64>,
        eta_o: Vec<f64>,
    },
}

/// A named (T2, eta_o) point evaluated alongside a memory grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marker {
    pub label: String,
    pub t2: f64,
    pub eta_o: f64,
}

impl Marker {
    /// Demonstrated memory (star) and the achievable target (triangle).
    pub fn reference_markers() -> Vec<Marker> {
        vec![
            Marker {
                label: "star".into(),
                t2: 804e-6,
                eta_o: 0.2305,
            },
            Marker {
                label: "triangle".into(),
                t2: 3e-3,
                eta_o: 0.65,
            },
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub params: RepeaterParams,
    pub memory: MemoryModel,
    pub grid: SweepGrid,
    pub n_max: u32,
    /// Repetition rate of direct transmission; `None` uses `params.nu`.
    pub nu_direct: Option<f64>,
    pub direct_model: DirectModel,
    pub markers: Vec<Marker>,
}

impl SweepSpec {
    pub fn distance(params: RepeaterParams, memory: MemoryModel, lengths: Vec<f64>) -> Self {
        Self {
            params,
            memory,
            grid: SweepGrid::Distance { lengths },
            n_max: DEFAULT_MAX_LINKS,
            nu_direct: None,
            direct_model: DirectModel::default(),
            markers: Vec::new(),
        }
    }

    pub fn memory_map(
        params: RepeaterParams,
        total_length: f64,
        t2: Vec<f64>,
        eta_o: Vec<f64>,
    ) -> Self {
        Self {
            params,
            memory: MemoryModel::default(),
            grid: SweepGrid::Memory {
                total_length,
                t2,
                eta_o,
            },
            n_max: DEFAULT_MAX_LINKS,
            nu_direct: None,
            direct_model: DirectModel::default(),
            markers: Marker::reference_markers(),
        }
    }

    fn rate_ratio(&self, p_repeater: f64, p_direct: f64) -> f64 {
        let nu_direct = self.nu_direct.unwrap_or(self.params.nu);
        let num = self.params.nu * p_repeater;
        let den = nu_direct * p_direct;
        if num == 0.0 {
            0.0
        } else {
            num / den
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.memory.validate()?;
        if self.n_max < 1 {
            return Err(invalid("n_max", "must be >= 1"));
        }
        match &self.grid {
            SweepGrid::Distance { lengths } => check_grid("lengths", lengths, 1),
            SweepGrid::Memory { t2, eta_o, total_length } => {
                if !(*total_length >= 0.0) {
                    return Err(invalid("total_length", "must be >= 0"));
                }
                check_grid("t2", t2, 1)?;
                check_grid("eta_o", eta_o, 1)
            }
        }
    }
}

/// Grids must be non-empty and strictly increasing.
fn check_grid(name: &'static str, grid: &[f64], min_len: usize) -> Result<()> {
    if grid.len() < min_len {
        return Err(invalid(name, format!("grid needs at least {min_len} point(s)")));
    }
    if grid.iter().any(|x| !x.is_finite()) {
        return Err(invalid(name, "grid values must be finite"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid(name, "grid must be strictly increasing"));
    }
    Ok(())
}

/// `n` evenly spaced points from `start` to `stop` inclusive.
pub fn linspace(start: f64, stop: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..n)
            .map(|i| start + (stop - start) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceRow {
    pub length: f64,
    pub n_links: u32,
    /// Required storage time at the optimum, s.
    pub storage_time: f64,
    pub p_repeater: f64,
    pub p_direct: f64,
    pub ratio: f64,
    /// The optimal link count changed relative to the previous row.
    pub n_links_increment: bool,
}

pub fn sweep_distance(spec: &SweepSpec) -> Result<Vec<DistanceRow>> {
    spec.validate()?;
    let SweepGrid::Distance { lengths } = &spec.grid else {
        return Err(invalid("grid", "distance sweep needs a distance grid"));
    };
    let mut rows = lengths
        .par_iter()
        .map(|&length| {
            let opt = optimize_links(&spec.params, &spec.memory, length, spec.n_max)?;
            let p_direct = direct_transmission_probability(&spec.params, length, spec.direct_model)?;
            Ok(DistanceRow {
                length,
                n_links: opt.n_links,
                storage_time: opt.storage_time,
                p_repeater: opt.success_probability,
                p_direct,
                ratio: spec.rate_ratio(opt.success_probability, p_direct),
                n_links_increment: false,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    for i in 1..rows.len() {
        rows[i].n_links_increment = rows[i].n_links != rows[i - 1].n_links;
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapRow {
    pub t2: f64,
    pub eta_o: f64,
    pub ratio: f64,
    pub n_links: u32,
    /// `None` for grid cells, the marker label otherwise.
    pub marker: Option<String>,
}

/// Ratio of repeater to direct rate over the (T2, eta_o) grid, T2-major,
/// followed by one row per marker.
pub fn sweep_ratio_heatmap(spec: &SweepSpec) -> Result<Vec<HeatmapRow>> {
    spec.validate()?;
    let SweepGrid::Memory {
        total_length,
        t2,
        eta_o,
    } = &spec.grid
    else {
        return Err(invalid("grid", "heatmap needs a memory grid"));
    };
    let p_direct = direct_transmission_probability(&spec.params, *total_length, spec.direct_model)?;
    let mut points: Vec<(f64, f64, Option<String>)> = t2
        .iter()
        .flat_map(|&t| eta_o.iter().map(move |&e| (t, e, None)))
        .collect();
    points.extend(
        spec.markers
            .iter()
            .map(|m| (m.t2, m.eta_o, Some(m.label.clone()))),
    );
    points
        .into_par_iter()
        .map(|(t2, eta_o, marker)| {
            let memory = MemoryModel {
                t2,
                eta_o,
                ..spec.memory
            };
            let opt = optimize_links(&spec.params, &memory, *total_length, spec.n_max)?;
            Ok(HeatmapRow {
                t2,
                eta_o,
                ratio: spec.rate_ratio(opt.success_probability, p_direct),
                n_links: opt.n_links,
                marker,
            })
        })
        .collect()
}

/// Smallest length in `[lo, hi]` at which the optimized repeater beats direct
/// transmission, by bisection on `ratio - 1`. Returns `None` when the ratio
/// does not cross 1 inside the bracket.
pub fn crossover_distance(spec: &SweepSpec, lo: f64, hi: f64, tol: f64) -> Result<Option<f64>> {
    let ratio_at = |length: f64| -> Result<f64> {
        let opt = optimize_links(&spec.params, &spec.memory, length, spec.n_max)?;
        let p_direct = direct_transmission_probability(&spec.params, length, spec.direct_model)?;
        Ok(spec.rate_ratio(opt.success_probability, p_direct))
    };
    let (mut a, mut b) = (lo, hi);
    if ratio_at(a)? > 1.0 || ratio_at(b)? <= 1.0 {
        return Ok(None);
    }
    while b - a > tol {
        let mid = 0.5 * (a + b);
        if ratio_at(mid)? > 1.0 {
            b = mid;
        } else {
            a = mid;
        }
    }
    Ok(Some(b))
}
