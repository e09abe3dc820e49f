//! Histogram reduction and decay-curve fitting.

mod fit;
mod histogram;
pub mod reference;

pub use fit::{
    fit_efficiency_decay, fit_mims, fit_t1, DecayFit, DecayModel, FitOptions, FitParam, PoissonWeighting,
};
pub use histogram::{
    bin_timestamps, efficiency_from_histogram, parse_binned_csv, parse_timestamps, snr, CountHistogram,
    CountWindow, EfficiencyEstimate, SnrEstimate, WindowNames,
};

use crate::error::{Error, Result};

/// Points for a fit: `x,y` or `x,y,sigma` per line, optional header line.
pub fn parse_points_csv(text: &str) -> Result<(Vec<(f64, f64)>, Option<Vec<f64>>)> {
    let mut points = Vec::new();
    let mut sigma = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: std::result::Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
        let Ok(values) = parsed else {
            if points.is_empty() && i == 0 {
                continue;
            }
            return Err(Error::Config(format!("line {}: `{line}` is not numeric", i + 1)));
        };
        match values.as_slice() {
            [x, y] => points.push((*x, *y)),
            [x, y, s] => {
                points.push((*x, *y));
                sigma.push(*s);
            }
            _ => return Err(Error::Config(format!("line {}: expected 2 or 3 columns", i + 1))),
        }
    }
    if !sigma.is_empty() && sigma.len() != points.len() {
        return Err(Error::Config("sigma column must be present on every row or none".into()));
    }
    Ok((points, (!sigma.is_empty()).then_some(sigma)))
}
