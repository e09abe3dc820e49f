//! Cycle-level Monte Carlo of the multiplexed repeater protocol.
//!
//! Every elementary link attempts all `M_s * M_t` modes; a link heralds when
//! at least one mode passes the idler BSM. Recall is on demand and spectrally
//! selective, so neighbouring links may herald different modes. Once every
//! link has heralded, the `2 n_l` memories are read out after the required
//! storage time, each retrieved photon is detected, and `n_l - 1` swap BSMs
//! each succeed with probability 1/2.
//!
//! Each cycle draws from its own ChaCha stream keyed by the master seed, so
//! results do not depend on how cycles are scheduled across threads.

mod audit;

use rand::distr::{Bernoulli, Distribution};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Geometric;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::{
    memory_efficiency, per_mode_link_success, required_storage_time, LinkConfig, MemoryModel,
    RepeaterParams,
};

pub use audit::{storage_time_audit, AuditReport, StorageBudget};

/// Spectral and temporal index of one multiplexed mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ModeAddress {
    pub spectral_index: u32,
    pub temporal_index: u32,
}

impl ModeAddress {
    /// Spectral-major flat index.
    pub fn flat_index(&self, m_t: u32) -> usize {
        self.spectral_index as usize * m_t as usize + self.temporal_index as usize
    }

    pub fn from_flat_index(index: usize, m_t: u32) -> Self {
        Self {
            spectral_index: (index / m_t as usize) as u32,
            temporal_index: (index % m_t as usize) as u32,
        }
    }
}

/// Master seed plus the stream index of one cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngSpec {
    pub seed: u64,
    pub stream: u64,
}

impl RngSpec {
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// Which successful mode a link reports when several succeed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    #[default]
    LowestIndex,
    HighestIndex,
}

/// How per-mode herald outcomes are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum HeraldSampling {
    /// One Bernoulli draw per mode; always consumes `M` draws per link.
    PerMode { tie_break: TieBreak },
    /// Index of the first success drawn from a geometric law. Equivalent in
    /// distribution to `PerMode` with the lowest-index rule, O(1) per link.
    FirstSuccess,
}

impl Default for HeraldSampling {
    fn default() -> Self {
        Self::PerMode {
            tie_break: TieBreak::LowestIndex,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McOptions {
    pub sampling: HeraldSampling,
    /// Spacing between spectral channels, Hz.
    pub channel_spacing: f64,
    /// Spectral index every recalled mode is shifted onto.
    pub reference_spectral_index: u32,
}

impl Default for McOptions {
    fn default() -> Self {
        Self {
            sampling: HeraldSampling::default(),
            channel_spacing: 4e6,
            reference_spectral_index: 0,
        }
    }
}

/// Everything that happened in one repeater cycle.
///
/// `storage_durations`, `recalls`, `detections` and `frequency_shifts` hold
/// one entry per memory (link `k` owns memories `2k` and `2k + 1`) and are
/// empty when some link failed to herald. `swaps` holds the `n_l - 1` swap
/// BSM outcomes under the same condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleOutcome {
    pub stream: u64,
    pub heralds: Vec<Option<ModeAddress>>,
    pub storage_durations: Vec<f64>,
    pub recalls: Vec<bool>,
    pub detections: Vec<bool>,
    pub swaps: Vec<bool>,
    pub frequency_shifts: Vec<f64>,
    pub success: bool,
}

impl CycleOutcome {
    /// The success flag must equal this conjunction.
    pub fn expected_success(&self) -> bool {
        let n = self.heralds.len();
        self.heralds.iter().all(Option::is_some)
            && self.recalls.len() == 2 * n
            && self.recalls.iter().all(|&r| r)
            && self.detections.len() == 2 * n
            && self.detections.iter().all(|&d| d)
            && self.swaps.len() == n.saturating_sub(1)
            && self.swaps.iter().all(|&s| s)
    }
}

/// Per-cycle constants shared by all cycles of a run.
#[derive(Debug, Clone)]
pub struct CycleModel {
    n_links: u32,
    m_s: u32,
    m_t: u32,
    mode_success: Bernoulli,
    first_success: Option<Geometric>,
    recall: Bernoulli,
    detect: Bernoulli,
    swap: Bernoulli,
    storage_time: f64,
    options: McOptions,
    master: ChaCha8Rng,
}

impl CycleModel {
    pub fn new(
        params: &RepeaterParams,
        mem: &MemoryModel,
        link: &LinkConfig,
        seed: u64,
        options: McOptions,
    ) -> Result<Self> {
        let p = per_mode_link_success(params, link)?;
        let storage_time = required_storage_time(params, link)?;
        let eta_m = memory_efficiency(mem, storage_time)?;
        let bern = |name: &'static str, q: f64| {
            Bernoulli::new(q).map_err(|e| invalid(name, e.to_string()))
        };
        let first_success = if p > 0.0 {
            Some(Geometric::new(p).map_err(|e| invalid("p", e.to_string()))?)
        } else {
            None
        };
        if options.reference_spectral_index >= params.m_s {
            return Err(invalid("reference_spectral_index", "must be < m_s"));
        }
        Ok(Self {
            n_links: link.n_links,
            m_s: params.m_s,
            m_t: params.m_t,
            mode_success: bern("p", p)?,
            first_success,
            recall: bern("eta_m", eta_m)?,
            detect: bern("eta_d_s", params.eta_d_s)?,
            swap: bern("bsm", 0.5)?,
            storage_time,
            options,
            master: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn modes(&self) -> usize {
        self.m_s as usize * self.m_t as usize
    }

    pub fn storage_time(&self) -> f64 {
        self.storage_time
    }

    fn herald(&self, rng: &mut ChaCha8Rng) -> Option<usize> {
        let modes = self.modes();
        match self.options.sampling {
            HeraldSampling::FirstSuccess => {
                let geo = self.first_success.as_ref()?;
                let k = geo.sample(rng);
                (k < modes as u64).then_some(k as usize)
            }
            HeraldSampling::PerMode { tie_break } => {
                let mut chosen = None;
                for i in 0..modes {
                    if self.mode_success.sample(rng) {
                        match tie_break {
                            TieBreak::LowestIndex => {
                                chosen.get_or_insert(i);
                            }
                            TieBreak::HighestIndex => chosen = Some(i),
                        }
                    }
                }
                chosen
            }
        }
    }

    /// Runs the cycle with the given stream index.
    pub fn run(&self, stream: u64) -> CycleOutcome {
        let mut rng = self.master.clone();
        rng.set_stream(stream);
        let n = self.n_links as usize;
        let heralds: Vec<Option<ModeAddress>> = (0..n)
            .map(|_| {
                self.herald(&mut rng)
                    .map(|i| ModeAddress::from_flat_index(i, self.m_t))
            })
            .collect();
        let mut outcome = CycleOutcome {
            stream,
            heralds,
            storage_durations: Vec::new(),
            recalls: Vec::new(),
            detections: Vec::new(),
            swaps: Vec::new(),
            frequency_shifts: Vec::new(),
            success: false,
        };
        if outcome.heralds.iter().any(Option::is_none) {
            return outcome;
        }
        let memories = 2 * n;
        outcome.storage_durations = vec![self.storage_time; memories];
        outcome.recalls = (0..memories).map(|_| self.recall.sample(&mut rng)).collect();
        outcome.detections = (0..memories).map(|_| self.detect.sample(&mut rng)).collect();
        outcome.swaps = (0..n - 1).map(|_| self.swap.sample(&mut rng)).collect();
        let reference = f64::from(self.options.reference_spectral_index);
        outcome.frequency_shifts = outcome
            .heralds
            .iter()
            .flat_map(|h| {
                let mode = h.expect("all links heralded");
                let shift = (f64::from(mode.spectral_index) - reference) * self.options.channel_spacing;
                [shift, shift]
            })
            .collect();
        outcome.success = outcome.expected_success();
        outcome
    }

    /// Outcomes for streams `start..end`, in stream order.
    pub fn run_range(&self, start: u64, end: u64) -> Vec<CycleOutcome> {
        (start..end).into_par_iter().map(|s| self.run(s)).collect()
    }
}

/// Simulates one cycle.
pub fn simulate_cycle(
    params: &RepeaterParams,
    mem: &MemoryModel,
    link: &LinkConfig,
    rng: RngSpec,
    options: McOptions,
) -> Result<CycleOutcome> {
    Ok(CycleModel::new(params, mem, link, rng.seed, options)?.run(rng.stream))
}

/// Herald statistics of one elementary link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkHeraldStats {
    pub heralded: u64,
    /// Counts per heralded mode, spectral-major flat index.
    pub mode_counts: Vec<u64>,
}

impl LinkHeraldStats {
    /// Empirical distribution of the heralded spectral index.
    pub fn spectral_counts(&self, m_t: u32) -> Vec<u64> {
        self.mode_counts
            .chunks(m_t as usize)
            .map(|c| c.iter().sum())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessEstimate {
    pub n_cycles: u64,
    pub successes: u64,
    pub frequency: f64,
    pub standard_error: f64,
    pub links: Vec<LinkHeraldStats>,
}

impl SuccessEstimate {
    /// `(f - p) / sqrt(p (1 - p) / N)`: the deviation in units of the
    /// binomial error expected under the analytic value, which stays finite
    /// when no cycle succeeded. Zero when both vanish.
    pub fn z_score(&self, analytic: f64) -> f64 {
        let dev = self.frequency - analytic;
        let se = (analytic * (1.0 - analytic) / self.n_cycles as f64).sqrt();
        if se > 0.0 {
            dev / se
        } else if dev == 0.0 {
            0.0
        } else {
            dev.signum() * f64::INFINITY
        }
    }
}

#[derive(Clone)]
struct Tally {
    successes: u64,
    links: Vec<LinkHeraldStats>,
}

impl Tally {
    fn new(n_links: usize, modes: usize) -> Self {
        Self {
            successes: 0,
            links: vec![
                LinkHeraldStats {
                    heralded: 0,
                    mode_counts: vec![0; modes],
                };
                n_links
            ],
        }
    }

    fn add(&mut self, outcome: &CycleOutcome, m_t: u32) {
        self.successes += u64::from(outcome.success);
        for (stats, herald) in self.links.iter_mut().zip(&outcome.heralds) {
            if let Some(mode) = herald {
                stats.heralded += 1;
                stats.mode_counts[mode.flat_index(m_t)] += 1;
            }
        }
    }

    fn merge(mut self, other: Tally) -> Tally {
        self.successes += other.successes;
        for (a, b) in self.links.iter_mut().zip(other.links) {
            a.heralded += b.heralded;
            for (x, y) in a.mode_counts.iter_mut().zip(b.mode_counts) {
                *x += y;
            }
        }
        self
    }
}

const CHUNK: u64 = 4096;

/// Estimates the success probability from `n_cycles` cycles using streams
/// `0..n_cycles` of `seed`.
pub fn estimate_success(
    params: &RepeaterParams,
    mem: &MemoryModel,
    link: &LinkConfig,
    n_cycles: u64,
    seed: u64,
    options: McOptions,
) -> Result<SuccessEstimate> {
    if n_cycles == 0 {
        return Err(invalid("n_cycles", "must be >= 1"));
    }
    let model = CycleModel::new(params, mem, link, seed, options)?;
    let n_links = link.n_links as usize;
    let modes = model.modes();
    let chunks = n_cycles.div_ceil(CHUNK);
    // Integer tallies make the reduction order irrelevant.
    let tally = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut t = Tally::new(n_links, modes);
            for s in c * CHUNK..((c + 1) * CHUNK).min(n_cycles) {
                t.add(&model.run(s), params.m_t);
            }
            t
        })
        .reduce(|| Tally::new(n_links, modes), Tally::merge);
    let f = tally.successes as f64 / n_cycles as f64;
    Ok(SuccessEstimate {
        n_cycles,
        successes: tally.successes,
        frequency: f,
        standard_error: (f * (1.0 - f) / n_cycles as f64).sqrt(),
        links: tally.links,
    })
}
