use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use qmemsim::analysis::{
    efficiency_from_histogram, fit_efficiency_decay, fit_mims, fit_t1, parse_points_csv, reference, CountHistogram,
    CountWindow, FitOptions, WindowNames,
};

fn fixture(name: &str) -> (Vec<(f64, f64)>, Option<Vec<f64>>) {
    let path = format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    parse_points_csv(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn within(value: f64, truth: f64, sigma: f64, k: f64) -> bool {
    (value - truth).abs() <= k * sigma
}

#[test]
fn fixture_efficiency_decay() {
    let (points, sigma) = fixture("efficiency_decay.csv");
    let fit = fit_efficiency_decay(&points, &FitOptions { sigma, ..FitOptions::default() }).unwrap();
    assert!(within(fit.value("eta_o"), reference::FIT_ETA_O.value, fit.sigma("eta_o"), 3.0));
    assert!(within(fit.value("T2"), reference::FIT_T2.value, fit.sigma("T2"), 3.0));
    assert!(!fit.unbounded);
}

#[test]
fn fixture_two_pulse_echo() {
    let (points, sigma) = fixture("two_pulse_echo.csv");
    let fit = fit_mims(&points, &FitOptions { sigma, ..FitOptions::default() }).unwrap();
    assert!(within(fit.value("T2"), reference::MIMS_T2.value, fit.sigma("T2"), 3.0));
    assert!(within(fit.value("chi"), reference::MIMS_CHI.value, fit.sigma("chi"), 3.0));
}

#[test]
fn fixture_fluorescence() {
    let (points, sigma) = fixture("fluorescence_decay.csv");
    assert!(sigma.is_none());
    let fit = fit_t1(&points, &FitOptions::default()).unwrap();
    assert!(within(fit.value("T1"), reference::T1.value, fit.sigma("T1"), 3.0));
    let with_bg = fit_t1(
        &points,
        &FitOptions {
            background: true,
            ..FitOptions::default()
        },
    )
    .unwrap();
    assert!(within(with_bg.value("B"), 0.0, with_bg.sigma("B"), 3.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn noiseless_exp4_is_recovered(eta in 0.01..0.9f64, t2 in 1e-4..5e-3f64) {
        let points: Vec<(f64, f64)> = (0..10).map(|i| {
            let x = i as f64 * t2 / 8.0;
            (x, eta * (-4.0 * x / t2).exp())
        }).collect();
        let fit = fit_efficiency_decay(&points, &FitOptions::default()).unwrap();
        prop_assert!((fit.value("eta_o") / eta - 1.0).abs() < 1e-6);
        prop_assert!((fit.value("T2") / t2 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn scaling_y_scales_only_the_amplitude(c in 0.01..100.0f64) {
        let (points, _) = fixture("two_pulse_echo.csv");
        let scaled: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x, c * y)).collect();
        let a = fit_mims(&points, &FitOptions::default()).unwrap();
        let b = fit_mims(&scaled, &FitOptions::default()).unwrap();
        prop_assert!((b.value("I0") / (c * a.value("I0")) - 1.0).abs() < 1e-6);
        prop_assert!((b.value("T2") / a.value("T2") - 1.0).abs() < 1e-6);
        prop_assert!((b.value("chi") / a.value("chi") - 1.0).abs() < 1e-6);
    }

    #[test]
    fn rescaling_time_rescales_t1(s in 0.1..10.0f64) {
        let (points, _) = fixture("fluorescence_decay.csv");
        let stretched: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (s * x, y)).collect();
        let a = fit_t1(&points, &FitOptions::default()).unwrap();
        let b = fit_t1(&stretched, &FitOptions::default()).unwrap();
        prop_assert!((b.value("T1") / (s * a.value("T1")) - 1.0).abs() < 1e-6);
    }
}

#[test]
fn flat_data_is_unbounded() {
    let points: Vec<(f64, f64)> = (0..8).map(|i| (i as f64 * 1e-3, 100.0)).collect();
    assert!(fit_t1(&points, &FitOptions::default()).unwrap().unbounded);
}

fn poisson_histogram(rng: &mut ChaCha8Rng, rates: &[f64], cycles: u64, windows: &[CountWindow]) -> CountHistogram {
    let edges: Vec<f64> = (0..=rates.len()).map(|i| i as f64).collect();
    let counts = rates
        .iter()
        .map(|&r| match r * cycles as f64 {
            0.0 => 0,
            mean => Poisson::new(mean).unwrap().sample(rng) as u64,
        })
        .collect();
    CountHistogram::new(edges, counts, cycles, windows.to_vec()).unwrap()
}

#[test]
fn efficiency_error_matches_poisson_spread() {
    // Bin 0 holds the input, bin 1 the echo over background, bins 2..4 background.
    let windows = vec![
        CountWindow::new("input", 0.0, 1.0),
        CountWindow::new("echo", 1.0, 2.0),
        CountWindow::new("noise", 2.0, 4.0),
    ];
    let (input, echo, bg) = (2.0, 0.25, 0.05);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let trials = 2000;
    let mut values = Vec::with_capacity(trials);
    let mut sigmas = Vec::with_capacity(trials);
    for _ in 0..trials {
        let h = poisson_histogram(&mut rng, &[input, echo + bg, bg, bg], 1000, &windows);
        let reference = poisson_histogram(&mut rng, &[input, 0.0, 0.0, 0.0], 1000, &windows);
        let e = efficiency_from_histogram(&h, &reference, None, &WindowNames::default(), 1.0).unwrap();
        values.push(e.raw);
        sigmas.push(e.sigma);
    }
    let mean = values.iter().sum::<f64>() / trials as f64;
    let spread = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (trials - 1) as f64).sqrt();
    let reported = sigmas.iter().sum::<f64>() / trials as f64;
    assert!((mean / (echo / input) - 1.0).abs() < 0.01, "{mean}");
    assert!((reported / spread - 1.0).abs() < 0.08, "{reported} vs {spread}");
}

#[test]
fn reference_constants_are_present() {
    let all = reference::all();
    assert!(all.len() >= 10);
    assert!(reference::EFFICIENCY_300US.value > reference::EFFICIENCY_1MS.value);
    assert!(reference::SNR_300US.value > reference::SNR_1MS.value);
    assert!(reference::SEQUENTIAL_FIRST.value > reference::SEQUENTIAL_SECOND.value);
    assert!(reference::TRAIN_EFFICIENCY.value > 0.0);
}
