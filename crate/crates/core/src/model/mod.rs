//! Closed-form repeater model: link success, memory-efficiency law, link-count
//! optimization and parameter sweeps.

mod params;
mod rate;
mod sweep;

pub use params::{LinkConfig, MemoryModel, RepeaterParams, FIBER_GROUP_INDEX, SPEED_OF_LIGHT_KM_S};
pub use rate::{
    at_least_one, db_to_transmittance, direct_transmission_probability, distribution_rate,
    half_link_transmittance, memory_efficiency, optimize_links, per_mode_link_success,
    required_storage_time, success_probability, DirectModel, LinkOptimum, DEFAULT_MAX_LINKS,
};
pub use sweep::{
    crossover_distance, linspace, sweep_distance, sweep_ratio_heatmap, DistanceRow, HeatmapRow,
    Marker, SweepGrid, SweepSpec,
};
