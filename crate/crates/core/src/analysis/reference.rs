//! Measured values the simulator is compared against qualitatively.
//!
//! Absolute efficiencies depend on optical depth, mode overlap and detector
//! calibration that the models leave out; only orderings and trends are
//! checked against these numbers.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReferenceValue {
    pub label: &'static str,
    pub value: f64,
    pub unit: &'static str,
}

const fn rv(label: &'static str, value: f64, unit: &'static str) -> ReferenceValue {
    ReferenceValue { label, value, unit }
}

/// Single-mode storage at 300 us.
pub const EFFICIENCY_300US: ReferenceValue = rv("efficiency at T_s = 300 us", 10.36, "%");
pub const SNR_300US: ReferenceValue = rv("SNR at T_s = 300 us", 10.90, "");
/// Single-mode storage at 1 ms.
pub const EFFICIENCY_1MS: ReferenceValue = rv("efficiency at T_s = 1 ms", 1.42, "%");
pub const SNR_1MS: ReferenceValue = rv("SNR at T_s = 1 ms", 1.52, "");

/// 25 temporal modes.
pub const TRAIN_EFFICIENCY: ReferenceValue = rv("25-mode train efficiency", 2.67, "%");
pub const TRAIN_SNR: ReferenceValue = rv("25-mode train SNR", 9.18, "");

/// Three spectral cells with 20 temporal modes each.
pub const SPECTRAL_EFFICIENCIES: [ReferenceValue; 3] = [
    rv("spectral cell 1 efficiency", 1.20, "%"),
    rv("spectral cell 2 efficiency", 1.64, "%"),
    rv("spectral cell 3 efficiency", 1.66, "%"),
];

/// Sequential recall of two cells.
pub const SEQUENTIAL_FIRST: ReferenceValue = rv("sequential recall at 450 us", 9.33, "%");
pub const SEQUENTIAL_SECOND: ReferenceValue = rv("sequential recall at 850 us", 2.08, "%");
pub const SEQUENTIAL_TIMES: [f64; 2] = [450e-6, 850e-6];

/// Mean photon numbers of the example datasets.
pub const MEAN_PHOTONS_SINGLE: f64 = 720.0;
pub const MEAN_PHOTONS_TRAIN: f64 = 2489.0;
pub const MEAN_PHOTONS_PRESETS: f64 = 513.0;

/// Efficiency-decay fit.
pub const FIT_T2: ReferenceValue = rv("efficiency-decay T2", 858.4e-6, "s");
pub const FIT_T2_SIGMA: f64 = 80.4e-6;
pub const FIT_ETA_O: ReferenceValue = rv("zero-time efficiency", 0.2305, "");
/// Two-pulse echo (Mims) fit.
pub const MIMS_T2: ReferenceValue = rv("two-pulse echo T2", 806.1e-6, "s");
pub const MIMS_T2_SIGMA: f64 = 38.3e-6;
pub const MIMS_CHI: ReferenceValue = rv("spectral diffusion exponent", 0.94, "");
/// Excited-state lifetime fit.
pub const T1: ReferenceValue = rv("excited-state lifetime", 10.68e-3, "s");
pub const T1_SIGMA: f64 = 0.07e-3;

/// Detection-path efficiencies.
pub const ETA_AOM: f64 = 0.35;
pub const ETA_DETECTOR: f64 = 0.67;

/// Efficiency points `(T_s, %)` in order of increasing storage time.
pub fn single_mode_points() -> [(f64, ReferenceValue); 2] {
    [(300e-6, EFFICIENCY_300US), (1e-3, EFFICIENCY_1MS)]
}

pub fn all() -> Vec<ReferenceValue> {
    let mut v = vec![
        EFFICIENCY_300US,
        SNR_300US,
        EFFICIENCY_1MS,
        SNR_1MS,
        TRAIN_EFFICIENCY,
        TRAIN_SNR,
    ];
    v.extend(SPECTRAL_EFFICIENCIES);
    v.extend([SEQUENTIAL_FIRST, SEQUENTIAL_SECOND, FIT_T2, FIT_ETA_O, MIMS_T2, MIMS_CHI, T1]);
    v
}
