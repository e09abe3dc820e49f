use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::sink::OutputSet;
use crate::Failure;
use qmemsim::analysis::{fit_efficiency_decay, fit_mims, fit_t1, parse_points_csv, DecayFit, FitOptions};
use qmemsim::config::{Config, PulseMode};
use qmemsim::cppe::{run_scenario, scenarios, EmissionTrace, Scenario, ScenarioReport, WindowKind};
use qmemsim::mc::{estimate_success, CycleModel};
use qmemsim::model::{
    sweep_distance, sweep_ratio_heatmap, success_probability, LinkConfig, Marker, SweepGrid, SweepSpec,
};
use qmemsim::output::{distance_csv, heatmap_csv, sig9};

fn warn(msg: &str) {
    eprintln!("warning: {msg}");
}

fn sweep_spec(cfg: &Config, m_s: u32, grid: SweepGrid) -> Result<SweepSpec, Failure> {
    Ok(SweepSpec {
        params: cfg.repeater_params(m_s)?,
        memory: cfg.memory,
        grid,
        n_max: cfg.sweep.n_max,
        nu_direct: cfg.source.nu_direct,
        direct_model: cfg.channel.direct_model,
        markers: Vec::new(),
    })
}

pub fn analytic(cfg: Config, out: &Path) -> Result<(), Failure> {
    if cfg.multiplexing.m_s.is_empty() {
        return Err(Failure::Usage("multiplexing.m_s is empty".into()));
    }
    let lengths = cfg.sweep.lengths.values();
    let mut set = OutputSet::new(out)?;
    for &m_s in &cfg.multiplexing.m_s {
        let spec = sweep_spec(&cfg, m_s, SweepGrid::Distance { lengths: lengths.clone() })?;
        let rows = sweep_distance(&spec)?;
        let m = spec.params.modes();
        set.write(&format!("distance_M{m}.csv"), &distance_csv(&rows))?;
    }
    set.commit("analytic", &cfg, None)
}

pub fn heatmap(cfg: Config, out: &Path) -> Result<(), Failure> {
    let grid = SweepGrid::Memory {
        total_length: cfg.sweep.total_length,
        t2: cfg.sweep.t2.values(),
        eta_o: cfg.sweep.eta_o.values(),
    };
    let mut spec = sweep_spec(&cfg, cfg.first_m_s()?, grid)?;
    if cfg.sweep.markers {
        spec.markers = Marker::reference_markers();
    }
    let rows = sweep_ratio_heatmap(&spec)?;
    let mut set = OutputSet::new(out)?;
    set.write("heatmap.csv", &heatmap_csv(&rows))?;
    set.commit("heatmap", &cfg, None)
}

pub const MC_HEADER: &str = "n_cycles,successes,frequency,stderr,analytic_P_s,z_score";

pub fn mc(mut cfg: Config, out: &Path) -> Result<(), Failure> {
    let seed = *cfg.mc.seed.get_or_insert_with(rand::random);
    let m_s = match cfg.mc.m_s {
        Some(m) => m,
        None => cfg.first_m_s()?,
    };
    let params = cfg.repeater_params(m_s)?;
    let link = LinkConfig::new(cfg.mc.total_length, cfg.mc.n_links)?;
    let options = cfg.mc.options();
    let est = estimate_success(&params, &cfg.memory, &link, cfg.mc.n_cycles, seed, options)?;
    let analytic = success_probability(&params, &cfg.memory, &link)?;
    let z = est.z_score(analytic);
    if z.abs() > 4.0 {
        warn(&format!("Monte Carlo frequency is {z:.2} standard errors from the analytic value"));
    }
    let mut set = OutputSet::new(out)?;
    let summary = format!(
        "{MC_HEADER}\n{},{},{},{},{},{}\n",
        est.n_cycles,
        est.successes,
        sig9(est.frequency),
        sig9(est.standard_error),
        sig9(analytic),
        sig9(z)
    );
    set.write("mc_summary.csv", &summary)?;
    set.write_json("mc_heralds.json", &est.links)?;
    if cfg.mc.stream_outcomes {
        let model = CycleModel::new(&params, &cfg.memory, &link, seed, options)?;
        let mut text = Vec::new();
        const BLOCK: u64 = 1 << 16;
        let mut start = 0;
        while start < cfg.mc.n_cycles {
            let end = (start + BLOCK).min(cfg.mc.n_cycles);
            for o in model.run_range(start, end) {
                serde_json::to_writer(&mut text, &o).map_err(|e| Failure::Runtime(e.to_string()))?;
                text.write_all(b"\n").expect("writing to memory");
            }
            start = end;
        }
        let text = String::from_utf8(text).expect("JSON is UTF-8");
        set.write("mc_outcomes.jsonl", &text)?;
    }
    set.commit("mc", &cfg, Some(seed))
}

/// JSON sidecar of a trace: the full scenario plus the annotated windows.
#[derive(Serialize)]
struct TraceSidecar<'a> {
    scenario: &'a Scenario,
    adiabaticity: &'a [f64],
    samples: usize,
    dt: f64,
    windows: &'a [qmemsim::cppe::Window],
    channels: usize,
}

fn channel_csv(trace: &EmissionTrace) -> String {
    let n = trace.channel_intensity.len();
    let mut out = String::from("t_s");
    for c in 0..n {
        out.push_str(&format!(",cell{c}"));
    }
    out.push('\n');
    for (i, t) in trace.times.iter().enumerate() {
        out.push_str(&sig9(*t));
        for ch in &trace.channel_intensity {
            out.push(',');
            out.push_str(&sig9(ch[i]));
        }
        out.push('\n');
    }
    out
}

pub fn pulse(mut cfg: Config, out: &Path) -> Result<(), Failure> {
    let seed = if cfg.pulse.jitter_sigma > 0.0 {
        Some(*cfg.pulse.seed.get_or_insert_with(rand::random))
    } else {
        cfg.pulse.seed
    };
    let list = scenarios(&cfg.pulse)?;
    let mut set = OutputSet::new(out)?;
    let mut two_pulse = String::from("tau12_s,echo_time_s,echo_energy,efficiency\n");
    for sc in &list {
        let (result, report): (_, ScenarioReport) =
            run_scenario(sc, &cfg.memory, cfg.pulse.detection_calibration)?;
        for w in &report.warnings {
            warn(&format!("{}: {w}", sc.name));
        }
        let trace = &result.trace;
        set.write(&format!("trace_{}.csv", sc.name), &trace.to_csv())?;
        if trace.channel_intensity.len() > 1 {
            set.write(&format!("channels_{}.csv", sc.name), &channel_csv(trace))?;
        }
        let sidecar = TraceSidecar {
            scenario: sc,
            adiabaticity: &result.adiabaticity,
            samples: trace.times.len(),
            dt: trace.dt(),
            windows: &trace.windows,
            channels: trace.channel_intensity.len(),
        };
        set.write_json(&format!("trace_{}.json", sc.name), &sidecar)?;
        set.write_json(&format!("metrics_{}.json", sc.name), &report)?;
        if cfg.pulse.mode == PulseMode::TwoPulseEcho {
            let echo = report
                .find(WindowKind::TwoPulseEcho, None, Some(0))
                .ok_or_else(|| Failure::Runtime("two-pulse echo window missing".into()))?;
            let tau12 = echo.window.center / 2.0;
            two_pulse.push_str(&format!(
                "{},{},{},{}\n",
                sig9(tau12),
                sig9(echo.metrics.time),
                sig9(echo.metrics.energy),
                sig9(echo.metrics.efficiency)
            ));
        }
    }
    if cfg.pulse.mode == PulseMode::TwoPulseEcho {
        set.write("two_pulse_echo.csv", &two_pulse)?;
    }
    set.commit("pulse", &cfg, seed)
}

#[derive(Serialize)]
struct FitReport<'a> {
    model: &'a str,
    input: String,
    n_points: usize,
    #[serde(flatten)]
    fit: &'a DecayFit,
}

pub fn fit(
    mut cfg: Config,
    out: &Path,
    input: Option<PathBuf>,
    model: Option<String>,
    background: bool,
) -> Result<(), Failure> {
    let input = input
        .or_else(|| cfg.fit.input.as_ref().map(PathBuf::from))
        .ok_or_else(|| Failure::Usage("no input file: pass --input or set fit.input".into()))?;
    let model = model
        .or_else(|| cfg.fit.model.clone())
        .ok_or_else(|| Failure::Usage("no model: pass --model or set fit.model".into()))?;
    let background = background || cfg.fit.background;
    cfg.fit.input = Some(input.display().to_string());
    cfg.fit.model = Some(model.clone());
    cfg.fit.background = background;

    let text = std::fs::read_to_string(&input)
        .map_err(|e| Failure::Runtime(format!("cannot read {}: {e}", input.display())))?;
    let (points, sigma) = parse_points_csv(&text).map_err(|e| match e {
        qmemsim::Error::Config(m) => Failure::Usage(format!("{}: {m}", input.display())),
        e => e.into(),
    })?;
    let options = FitOptions {
        sigma,
        background,
        ..FitOptions::default()
    };
    let result = match model.as_str() {
        "exp4" => fit_efficiency_decay(&points, &options),
        "mims" => fit_mims(&points, &options),
        "t1" => fit_t1(&points, &options),
        other => return Err(Failure::Usage(format!("unknown fit model `{other}` (exp4, mims, t1)"))),
    };
    // Bad data is a usage problem; a fit that fails on valid data is not.
    let fit = result.map_err(|e| match e {
        qmemsim::Error::InvalidParameter { .. } => Failure::Usage(e.to_string()),
        e => Failure::Runtime(e.to_string()),
    })?;
    if fit.unbounded {
        warn("the decay constant is not resolved by the data");
    }
    let report = FitReport {
        model: &model,
        input: input.display().to_string(),
        n_points: points.len(),
        fit: &fit,
    };
    let mut set = OutputSet::new(out)?;
    set.write_json(&format!("fit_{model}.json"), &report)?;
    set.commit("fit", &cfg, None)
}
