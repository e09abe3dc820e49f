use std::path::Path;
use std::process::{Command, Output};

fn qmemsim(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qmemsim"))
        .args(args)
        .arg("--out-dir")
        .arg(dir)
        .output()
        .expect("binary runs")
}

fn fixture(name: &str) -> String {
    format!("{}/../core/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn names(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(dir)
        .map(|d| d.map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect())
        .unwrap_or_default();
    v.sort();
    v
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn analytic_single_point_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = qmemsim(dir.path(), &["analytic", "--set", "sweep.lengths=[250.0]", "--set", "multiplexing.m_s=[3]"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(names(dir.path()), ["distance_M60.csv", "manifest.json", "timing.json"]);
    let csv = read(dir.path(), "distance_M60.csv");
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "L_km,n_l_opt,T_s_ms,P_s_repeater,P_direct,ratio");
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("250,"));
}

#[test]
fn manifest_records_seed_and_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = qmemsim(dir.path(), &["mc", "--seed", "77", "--set", "mc.n_cycles=1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: serde_json::Value = serde_json::from_str(&read(dir.path(), "manifest.json")).unwrap();
    assert_eq!(manifest["subcommand"], "mc");
    assert_eq!(manifest["seed"], 77);
    assert_eq!(manifest["config"]["mc"]["n_cycles"], 1);
    assert_eq!(manifest["outputs"], serde_json::json!(["mc_summary.csv", "mc_heralds.json"]));
    let summary = read(dir.path(), "mc_summary.csv");
    assert!(summary.starts_with("n_cycles,successes,frequency,stderr,analytic_P_s,z_score\n1,"));
}

#[test]
fn mc_without_seed_records_the_drawn_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = qmemsim(dir.path(), &["mc", "--set", "mc.n_cycles=100"]);
    assert!(out.status.success());
    let manifest: serde_json::Value = serde_json::from_str(&read(dir.path(), "manifest.json")).unwrap();
    let seed = manifest["seed"].as_u64().unwrap();
    let again = tempfile::tempdir().unwrap();
    let seed_arg = seed.to_string();
    assert!(qmemsim(again.path(), &["mc", "--set", "mc.n_cycles=100", "--seed", &seed_arg]).status.success());
    assert_eq!(read(dir.path(), "mc_summary.csv"), read(again.path(), "mc_summary.csv"));
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["mc", "--seed", "5", "--set", "mc.n_cycles=30000", "--set", "mc.stream_outcomes=true"];
    assert!(qmemsim(a.path(), &args).status.success());
    let mut threaded = args.to_vec();
    threaded.extend(["--threads", "2"]);
    assert!(qmemsim(b.path(), &threaded).status.success());
    for name in names(a.path()) {
        if name != "timing.json" {
            assert_eq!(read(a.path(), &name), read(b.path(), &name), "{name}");
        }
    }
}

#[test]
fn config_file_errors_carry_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[source]\nrho = 0.9\nbogus = 1\n").unwrap();
    let out = qmemsim(dir.path(), &["analytic", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");
    assert_eq!(names(dir.path()), ["bad.toml"]);
}

#[test]
fn invalid_parameters_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = qmemsim(dir.path(), &["analytic", "--set", "source.rho=1.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(names(dir.path()).is_empty());
    let out = qmemsim(dir.path(), &["mc", "--set", "mc.n_cycles=0"]);
    assert_eq!(out.status.code(), Some(2));
    let out = qmemsim(dir.path(), &["pulse", "--set", "pulse.preset=9"]);
    assert_eq!(out.status.code(), Some(2));
    let out = qmemsim(dir.path(), &["fit", "--model", "quadratic", "--input", "x.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn fit_errors_are_classified() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.csv");
    let out = qmemsim(dir.path(), &["fit", "--model", "t1", "--input", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "t,counts\n0,10\n1,abc\n").unwrap();
    let out = qmemsim(dir.path(), &["fit", "--model", "t1", "--input", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    let out = qmemsim(dir.path(), &["fit", "--model", "t1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn fit_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let input = fixture("two_pulse_echo.csv");
    let out = qmemsim(dir.path(), &["fit", "--model", "mims", "--input", &input]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&read(dir.path(), "fit_mims.json")).unwrap();
    assert_eq!(report["n_points"], 11);
    let t2 = report["params"][1]["value"].as_f64().unwrap();
    assert!((t2 - 806.1e-6).abs() < 50e-6, "{t2}");
}

#[test]
fn unwritable_output_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("occupied");
    std::fs::write(&file, "").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_qmemsim"))
        .args(["analytic", "--out-dir"])
        .arg(&file)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn no_partial_files_after_success() {
    let dir = tempfile::tempdir().unwrap();
    let out = qmemsim(
        dir.path(),
        &["pulse", "--set", "pulse.mode=\"two_pulse_echo\"", "--set", "pulse.tau12=[30e-6]"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let files = names(dir.path());
    assert!(files.iter().all(|n| !n.ends_with(".partial")), "{files:?}");
    assert!(files.contains(&"two_pulse_echo.csv".to_string()));
    assert!(files.contains(&"trace_two_pulse_echo_30us.csv".to_string()));
    let csv = read(dir.path(), "two_pulse_echo.csv");
    assert!(csv.starts_with("tau12_s,echo_time_s,echo_energy,efficiency\n3e-05,"));
}

#[test]
fn heatmap_single_cell_grid_with_markers() {
    let dir = tempfile::tempdir().unwrap();
    let out = qmemsim(dir.path(), &["heatmap", "--set", "sweep.t2=[1e-3]", "--set", "sweep.eta_o=[0.5]"]);
    assert!(out.status.success());
    let csv = read(dir.path(), "heatmap.csv");
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "T2_ms,eta_o,ratio,marker");
    assert_eq!(lines.len(), 4);
    assert!(lines[2].ends_with(",star"));
    assert!(lines[3].ends_with(",triangle"));
}
