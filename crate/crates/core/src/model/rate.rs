//! Closed-form success probability of the multiplexed repeater chain.
//!
//! Each of the `n_l` elementary links attempts `M = M_s * M_t` modes in
//! parallel; a link heralds when at least one mode survives the idler BSM.
//! Heralded signals are then recalled from `2 n_l` memories and swapped with
//! `n_l - 1` linear-optics BSMs.

use serde::{Deserialize, Serialize};

use super::params::{LinkConfig, MemoryModel, RepeaterParams};
use crate::error::{check_non_negative, check_probability, invalid, Result};

/// Default upper bound of the link-count scan.
pub const DEFAULT_MAX_LINKS: u32 = 64;

/// Converts a fiber loss in dB into linear transmittance.
pub fn db_to_transmittance(loss_db: f64) -> f64 {
    10f64.powf(-loss_db / 10.0)
}

/// Transmittance of half an elementary link, `10^(-alpha (L / 2 n_l) / 10)`.
pub fn half_link_transmittance(params: &RepeaterParams, link: &LinkConfig) -> Result<f64> {
    params.validate()?;
    link.validate()?;
    Ok(db_to_transmittance(params.alpha * link.link_length() / 2.0))
}

/// Probability that a single mode of one elementary link survives the idler
/// BSM: `1/2 (rho t eta_d_i)^beta`.
pub fn per_mode_link_success(params: &RepeaterParams, link: &LinkConfig) -> Result<f64> {
    let t = half_link_transmittance(params, link)?;
    Ok(0.5 * (params.rho * t * params.eta_d_i).powi(params.beta as i32))
}

/// Probability that at least one of `modes` independent attempts succeeds.
pub fn at_least_one(p: f64, modes: u64) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    // 1 - (1 - p)^M without cancellation for small p.
    -((modes as f64) * (-p).ln_1p()).exp_m1()
}

/// Storage efficiency after `storage_time` seconds: `eta_o exp(-4 T_s / T_2)`.
pub fn memory_efficiency(mem: &MemoryModel, storage_time: f64) -> Result<f64> {
    if storage_time < 0.0 || storage_time.is_nan() {
        return Err(invalid(
            "storage_time",
            format!("{storage_time} must be >= 0"),
        ));
    }
    mem.validate()?;
    Ok(mem.eta_o * (-4.0 * storage_time / mem.t2).exp())
}

/// Storage time the classical heralding round trip imposes: `L / (n_l v)`.
pub fn required_storage_time(params: &RepeaterParams, link: &LinkConfig) -> Result<f64> {
    params.validate()?;
    link.validate()?;
    Ok(link.link_length() / params.v)
}

/// Overall entanglement-distribution success probability of one cycle.
///
/// The memory efficiency is always evaluated at the storage time required by
/// the link geometry.
pub fn success_probability(
    params: &RepeaterParams,
    mem: &MemoryModel,
    link: &LinkConfig,
) -> Result<f64> {
    let p = per_mode_link_success(params, link)?;
    let eta_m = memory_efficiency(mem, required_storage_time(params, link)?)?;
    Ok(success_from_parts(p, params.modes(), params.eta_d_s, eta_m, link.n_links))
}

pub(crate) fn success_from_parts(p: f64, modes: u64, eta_d_s: f64, eta_m: f64, n_links: u32) -> f64 {
    let n = n_links as i32;
    let herald = at_least_one(p, modes).powi(n);
    let recall = (eta_d_s * eta_m).powi(2 * n);
    herald * recall / 2f64.powi(n - 1)
}

/// Benchmark against which the repeater is compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectModel {
    /// One pair per cycle; the idler crosses the full length and both photons
    /// are detected: `rho 10^(-alpha L / 10) eta_d_i eta_d_s`.
    #[default]
    SingleMode,
    /// The same source multiplexed over all `M` modes, at least one of which
    /// must arrive.
    Multiplexed,
}

/// Success probability of direct transmission over `total_length` km.
pub fn direct_transmission_probability(
    params: &RepeaterParams,
    total_length: f64,
    model: DirectModel,
) -> Result<f64> {
    params.validate()?;
    check_non_negative("total_length", total_length)?;
    let single =
        params.rho * db_to_transmittance(params.alpha * total_length) * params.eta_d_i * params.eta_d_s;
    Ok(match model {
        DirectModel::SingleMode => single,
        DirectModel::Multiplexed => at_least_one(single, params.modes()),
    })
}

/// Entanglement distribution rate `R = nu P_s` in Hz.
pub fn distribution_rate(params: &RepeaterParams, p_s: f64) -> Result<f64> {
    check_probability("p_s", p_s)?;
    Ok(params.nu * p_s)
}

/// Best link count for a fixed chain length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkOptimum {
    pub n_links: u32,
    pub success_probability: f64,
    /// Required storage time at the optimum, s.
    pub storage_time: f64,
}

/// Exhaustive scan of `n_l` in `[1, n_max]`; ties go to the smaller count.
pub fn optimize_links(
    params: &RepeaterParams,
    mem: &MemoryModel,
    total_length: f64,
    n_max: u32,
) -> Result<LinkOptimum> {
    if n_max < 1 {
        return Err(invalid("n_max", "must be >= 1"));
    }
    let mut best: Option<LinkOptimum> = None;
    for n in 1..=n_max {
        let link = LinkConfig::new(total_length, n)?;
        let p_s = success_probability(params, mem, &link)?;
        if best.is_none_or(|b| p_s > b.success_probability) {
            best = Some(LinkOptimum {
                n_links: n,
                success_probability: p_s,
                storage_time: required_storage_time(params, &link)?,
            });
        }
    }
    Ok(best.expect("n_max >= 1"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> (RepeaterParams, MemoryModel) {
        (RepeaterParams::default(), MemoryModel::default())
    }

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(1e-300)
    }

    #[test]
    fn transmittance_examples() {
        let (p, _) = table();
        let zero = LinkConfig::new(0.0, 3).unwrap();
        assert_eq!(half_link_transmittance(&p, &zero).unwrap(), 1.0);

        let link = LinkConfig::new(500.0, 5).unwrap();
        let t = half_link_transmittance(&p, &link).unwrap();
        assert!(close(t, 10f64.powf(-1.05), 1e-14));
        assert!((t - 0.08913).abs() < 1e-5);

        let lossless = RepeaterParams { alpha: 0.0, ..p };
        let long = LinkConfig::new(1000.0, 2).unwrap();
        assert_eq!(half_link_transmittance(&lossless, &long).unwrap(), 1.0);
    }

    #[test]
    fn per_mode_examples() {
        let ideal = RepeaterParams {
            rho: 1.0,
            eta_d_i: 1.0,
            ..RepeaterParams::default()
        };
        let zero = LinkConfig::new(0.0, 1).unwrap();
        assert_eq!(per_mode_link_success(&ideal, &zero).unwrap(), 0.5);

        let (p, _) = table();
        assert!(close(per_mode_link_success(&p, &zero).unwrap(), 0.32805, 1e-14));

        let dark = RepeaterParams { rho: 0.0, ..p };
        assert_eq!(per_mode_link_success(&dark, &zero).unwrap(), 0.0);
    }

    #[test]
    fn memory_efficiency_examples() {
        let mem = MemoryModel {
            eta_o: 0.2305,
            t2: 858.4e-6,
            ..MemoryModel::default()
        };
        assert_eq!(memory_efficiency(&mem, 0.0).unwrap(), 0.2305);
        let eta = memory_efficiency(&mem, 300e-6).unwrap();
        assert!(close(eta, 0.2305 * (-1.2e-3 / 858.4e-6f64).exp(), 1e-14));
        assert!((eta - 0.05696).abs() < 2e-5);

        let forever = MemoryModel {
            t2: f64::INFINITY,
            ..mem
        };
        assert_eq!(memory_efficiency(&forever, 1.0).unwrap(), 0.2305);
        assert!(memory_efficiency(&mem, -1e-9).is_err());
    }

    #[test]
    fn storage_time_examples() {
        let (p, _) = table();
        let link = LinkConfig::new(400.0, 2).unwrap();
        let ts = required_storage_time(&p, &link).unwrap();
        assert!((ts - 0.979e-3).abs() < 1e-6);
        let doubled = LinkConfig::new(400.0, 4).unwrap();
        assert!(close(required_storage_time(&p, &doubled).unwrap(), ts / 2.0, 1e-15));
        let zero = LinkConfig::new(0.0, 1).unwrap();
        assert_eq!(required_storage_time(&p, &zero).unwrap(), 0.0);
    }

    #[test]
    fn success_probability_examples() {
        let p = RepeaterParams::default().with_modes(1, 1);
        let perfect = MemoryModel {
            eta_o: 1.0,
            ..MemoryModel::default()
        };
        let zero = LinkConfig::new(0.0, 1).unwrap();
        let ps = success_probability(&p, &perfect, &zero).unwrap();
        assert!(close(ps, 0.32805 * 0.81, 1e-14));
        assert!((ps - 0.26572).abs() < 1e-5);

        let dark = RepeaterParams { rho: 0.0, ..p };
        let link = LinkConfig::new(300.0, 3).unwrap();
        assert_eq!(success_probability(&dark, &perfect, &link).unwrap(), 0.0);

        let ideal = RepeaterParams {
            eta_d_s: 1.0,
            ..RepeaterParams::default().with_modes(1000, 1000)
        };
        let saturated = success_probability(&ideal, &perfect, &LinkConfig::new(0.0, 1).unwrap()).unwrap();
        assert!(close(saturated, 1.0, 1e-12));
    }

    #[test]
    fn direct_examples() {
        let (p, _) = table();
        let d0 = direct_transmission_probability(&p, 0.0, DirectModel::SingleMode).unwrap();
        assert!(close(d0, 0.729, 1e-14));
        let d500 = direct_transmission_probability(&p, 500.0, DirectModel::SingleMode).unwrap();
        assert!(close(d500, 0.729 * 10f64.powf(-10.5), 1e-12));
        assert!((d500 - 2.30e-11).abs() < 0.01e-11);
        let lossless = RepeaterParams { alpha: 0.0, ..p };
        assert_eq!(
            direct_transmission_probability(&lossless, 10.0, DirectModel::SingleMode).unwrap(),
            direct_transmission_probability(&lossless, 900.0, DirectModel::SingleMode).unwrap()
        );
        let mux = direct_transmission_probability(&p, 500.0, DirectModel::Multiplexed).unwrap();
        assert!(close(mux, -(60.0 * (-d500).ln_1p()).exp_m1(), 1e-12));
        assert!(close(mux, 60.0 * d500, 1e-6));
    }

    #[test]
    fn rate_examples() {
        let one_hz = RepeaterParams {
            nu: 1.0,
            ..RepeaterParams::default()
        };
        assert_eq!(distribution_rate(&one_hz, 0.5).unwrap(), 0.5);
        assert_eq!(distribution_rate(&one_hz, 0.0).unwrap(), 0.0);
        let mhz = RepeaterParams { nu: 1e6, ..one_hz };
        assert!(close(distribution_rate(&mhz, 2.3e-11).unwrap(), 2.3e-5, 1e-12));
        assert!(distribution_rate(&mhz, 1.5).is_err());
    }

    #[test]
    fn short_chain_prefers_one_link() {
        let (p, m) = table();
        let opt = optimize_links(&p, &m, 1e-6, 64).unwrap();
        assert_eq!(opt.n_links, 1);
    }

    #[test]
    fn optimizer_matches_exhaustive_scan_at_500_km() {
        let (p, m) = table();
        let opt = optimize_links(&p, &m, 500.0, 50).unwrap();
        let scan: Vec<f64> = (1..=50)
            .map(|n| success_probability(&p, &m, &LinkConfig::new(500.0, n).unwrap()).unwrap())
            .collect();
        let (best_idx, best) = scan
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        assert_eq!(opt.n_links as usize, best_idx + 1);
        assert_eq!(opt.success_probability, best);
        assert!(scan.iter().all(|&v| v <= opt.success_probability));
    }

    #[test]
    fn rejects_zero_scan_bound() {
        let (p, m) = table();
        assert!(optimize_links(&p, &m, 100.0, 0).is_err());
    }
}
