//! CSV rendering with a fixed numeric format.

use std::fmt::Write;

use crate::model::{DistanceRow, HeatmapRow};

/// Formats `x` with 9 significant digits, C `%.9g` style.
pub fn sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if x.is_nan() {
        return "nan".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub const DISTANCE_HEADER: &str = "L_km,n_l_opt,T_s_ms,P_s_repeater,P_direct,ratio";
pub const HEATMAP_HEADER: &str = "T2_ms,eta_o,ratio,marker";

pub fn distance_csv(rows: &[DistanceRow]) -> String {
    let mut out = String::from(DISTANCE_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            sig9(r.length),
            r.n_links,
            sig9(r.storage_time * 1e3),
            sig9(r.p_repeater),
            sig9(r.p_direct),
            sig9(r.ratio)
        )
        .unwrap();
    }
    out
}

/// Grid rows carry `grid` in the marker column.
pub fn heatmap_csv(rows: &[HeatmapRow]) -> String {
    let mut out = String::from(HEATMAP_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{}",
            sig9(r.t2 * 1e3),
            sig9(r.eta_o),
            sig9(r.ratio),
            r.marker.as_deref().unwrap_or("grid")
        )
        .unwrap();
    }
    out
}
