use serde::{Deserialize, Serialize};

use super::CycleOutcome;
use crate::error::{check_positive, invalid, Result};
use crate::model::MemoryModel;

/// Longest storage duration a memory is allowed, s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StorageBudget {
    pub max_duration: f64,
}

impl StorageBudget {
    pub fn unlimited() -> Self {
        Self {
            max_duration: f64::INFINITY,
        }
    }

    /// Duration at which the efficiency law drops to `threshold`:
    /// `T = T2/4 * ln(eta_o / threshold)`, zero when `threshold >= eta_o`.
    pub fn from_efficiency_threshold(mem: &MemoryModel, threshold: f64) -> Result<Self> {
        check_positive("threshold", threshold)?;
        let max_duration = if threshold >= mem.eta_o {
            0.0
        } else {
            0.25 * mem.t2 * (mem.eta_o / threshold).ln()
        };
        Ok(Self { max_duration })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub cycles: usize,
    /// Cycles in which every link heralded and the memories were used.
    pub stored_cycles: usize,
    pub max_duration: f64,
    pub mean_duration: f64,
    /// Fraction of stored cycles whose longest storage exceeds the budget.
    pub exceed_fraction: f64,
    pub budget: StorageBudget,
}

/// Storage statistics over the cycles that reached the recall stage. The
/// duration of a cycle is the longest of its per-memory durations.
pub fn storage_time_audit(
    outcomes: &[CycleOutcome],
    mem: &MemoryModel,
    budget: StorageBudget,
) -> Result<AuditReport> {
    if outcomes.is_empty() {
        return Err(invalid("outcomes", "audit needs at least one outcome"));
    }
    mem.validate()?;
    let durations: Vec<f64> = outcomes
        .iter()
        .filter(|o| !o.storage_durations.is_empty())
        .map(|o| o.storage_durations.iter().copied().fold(0.0, f64::max))
        .collect();
    let stored = durations.len();
    let (max, mean, exceed) = if stored == 0 {
        (0.0, 0.0, 0.0)
    } else {
        let over = durations.iter().filter(|&&d| d > budget.max_duration).count();
        (
            durations.iter().copied().fold(0.0, f64::max),
            durations.iter().sum::<f64>() / stored as f64,
            over as f64 / stored as f64,
        )
    };
    Ok(AuditReport {
        cycles: outcomes.len(),
        stored_cycles: stored,
        max_duration: max,
        mean_duration: mean,
        exceed_fraction: exceed,
        budget,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stored(d: f64) -> CycleOutcome {
        CycleOutcome {
            stream: 0,
            heralds: vec![Some(super::super::ModeAddress {
                spectral_index: 0,
                temporal_index: 0,
            })],
            storage_durations: vec![d, d],
            recalls: vec![true, true],
            detections: vec![true, true],
            swaps: vec![],
            frequency_shifts: vec![0.0, 0.0],
            success: true,
        }
    }

    #[test]
    fn single_outcome() {
        let r = storage_time_audit(&[stored(1.5e-3)], &MemoryModel::default(), StorageBudget::unlimited())
            .unwrap();
        assert_eq!(r.max_duration, 1.5e-3);
        assert_eq!(r.mean_duration, 1.5e-3);
        assert_eq!(r.exceed_fraction, 0.0);
    }

    #[test]
    fn empty_is_error() {
        assert!(storage_time_audit(&[], &MemoryModel::default(), StorageBudget::unlimited()).is_err());
    }

    #[test]
    fn threshold_budget() {
        let mem = MemoryModel::default();
        let b = StorageBudget::from_efficiency_threshold(&mem, 0.01).unwrap();
        let eta = crate::model::memory_efficiency(&mem, b.max_duration).unwrap();
        assert!((eta - 0.01).abs() < 1e-12);
        assert_eq!(StorageBudget::from_efficiency_threshold(&mem, 0.9).unwrap().max_duration, 0.0);
    }
}
