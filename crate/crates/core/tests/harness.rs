use raman_memory::harness::calibration::{DEFAULT_GAIN_RATE_PER_DENSITY, DEFAULT_SIGNAL_DELAY_FS};
use raman_memory::harness::{
    calibrate, fit_parameters, run_delay_scan, run_linearity_scan, run_pressure_scan, simulate_curves,
    time_bin_report, ExperimentConfig, FitOptions, FitParam, LineMode,
};

fn short_scan(mut c: ExperimentConfig) -> ExperimentConfig {
    c.delay_scan.stop_ps = 20.0;
    c.delay_scan.points = 201;
    c
}

#[test]
fn frozen_calibration_reproduces() {
    let cal = calibrate(&ExperimentConfig::default()).unwrap();
    assert!((cal.gain_rate_per_density_m4_per_j / DEFAULT_GAIN_RATE_PER_DENSITY - 1.0).abs() < 1e-4);
    assert!((cal.signal_delay_fs - DEFAULT_SIGNAL_DELAY_FS).abs() < 0.1, "{}", cal.signal_delay_fs);
    assert!((cal.coupling_at_anchor - 6.5).abs() < 1e-9);
    assert!((4.0..=8.0).contains(&cal.read_optimum_bar));
}

#[test]
fn calibration_is_independent_of_starting_gain() {
    let mut c = ExperimentConfig::default();
    c.medium.gain_rate_per_density_m4_per_j *= 3.0;
    let cal = calibrate(&c).unwrap();
    assert!((cal.gain_rate_per_density_m4_per_j / DEFAULT_GAIN_RATE_PER_DENSITY - 1.0).abs() < 1e-4);
}

#[test]
fn single_level_scan_decays_monotonically() {
    let mut c = short_scan(ExperimentConfig::default());
    c.medium.populated_levels = Some(vec![1]);
    let run = run_delay_scan(&c).unwrap();
    let v = run.scan.unwrap().values().to_vec();
    assert!(v.windows(2).all(|w| w[1] < w[0]));
    // e^{-2Γt} over the step.
    let expected = (-2.0 * run.gamma * 0.1e-12).exp();
    assert!((v[1] / v[0] - expected).abs() < 1e-9);
}

#[test]
fn undamped_scan_has_flat_envelope() {
    let mut c = short_scan(ExperimentConfig::default());
    c.medium.gamma_override_per_s = Some(0.0);
    c.medium.populated_levels = Some(vec![1]);
    let v = run_delay_scan(&c).unwrap().scan.unwrap().values().to_vec();
    assert!(v.iter().all(|x| (x / v[0] - 1.0).abs() < 1e-6));

    // Full ensemble: the scan is the undamped beat pattern times η_r(0).
    c.medium.populated_levels = None;
    let run = run_delay_scan(&c).unwrap();
    let protocol = c.base_protocol().unwrap();
    let ensemble = protocol.medium(c.medium.pressure_bar).unwrap().ensemble;
    let scan = run.scan.unwrap();
    let eta0 = scan.values()[0];
    for (t, v) in scan.delays().iter().zip(scan.values()) {
        let beat = ensemble.storage_factor(*t).unwrap().norm_sqr();
        assert!((v - eta0 * beat).abs() <= 1e-6 * eta0);
    }
}

#[test]
fn empirical_lines_shift_only_the_spectrum() {
    let mut c = ExperimentConfig::default();
    c.medium.line_mode = LineMode::Empirical;
    let run = run_delay_scan(&c).unwrap();
    let s = run.spectrum.unwrap();
    // (0,1) beat from the tabulated Q₁ lines.
    let expected = 4161.169 - 4155.255;
    assert!((s.nearest_peak(5.9).unwrap().wavenumber - expected).abs() < 0.05);
}

#[test]
fn short_scan_has_no_spectrum() {
    let mut c = ExperimentConfig::default();
    c.delay_scan.stop_ps = 10.0;
    c.delay_scan.points = 101;
    let run = run_delay_scan(&c).unwrap();
    assert!(run.scan.is_some() && run.spectrum.is_none() && run.errors.is_empty());
}

#[test]
fn dark_write_pulse_gives_zero_curves() {
    let mut c = ExperimentConfig::default();
    c.write.energy_uj = 0.0;
    let run = run_pressure_scan(&c).unwrap();
    assert!(run.points.iter().all(|p| p.eta_w == 0.0 && p.eta_r == 0.0 && p.eta_tot == 0.0));
}

#[test]
fn full_mode_match_reports_matched_efficiency() {
    let mut c = ExperimentConfig::default();
    c.protocol.alpha = 1.0;
    let run = run_pressure_scan(&c).unwrap();
    assert!(run.points.iter().all(|p| p.eta_w == p.eta_w_matched));
    let base = run_pressure_scan(&ExperimentConfig::default()).unwrap();
    for (a, b) in run.points.iter().zip(&base.points) {
        assert!((b.eta_w - 0.35 * a.eta_w).abs() < 1e-15);
        assert_eq!(a.eta_r, b.eta_r);
    }
}

#[test]
fn pressure_curves_have_expected_shape() {
    let run = run_pressure_scan(&ExperimentConfig::default()).unwrap();
    let eta_w: Vec<f64> = run.points.iter().map(|p| p.eta_w).collect();
    assert!(eta_w.windows(2).all(|w| w[1] >= w[0]));
    // Saturation: the last steps add far less than the first.
    assert!(eta_w[12] - eta_w[11] < 0.1 * (eta_w[1] - eta_w[0]));
    let opt = run.read_optimum().unwrap().pressure_bar;
    assert!((4.0..=8.0).contains(&opt));
}

#[test]
fn linearity_table() {
    let c = ExperimentConfig::default();
    let energies = c.linearity_scan.energies_nj.clone();
    let rows = run_linearity_scan(&c, &energies).unwrap();
    assert_eq!(rows.len(), energies.len());
    for r in &rows {
        assert!((r.eta_w / rows[0].eta_w - 1.0).abs() < 1e-10);
        assert!((r.eta_r / rows[0].eta_r - 1.0).abs() < 1e-10);
    }
    let scaled: Vec<f64> = energies.iter().map(|e| 10.0 * e).collect();
    let rows10 = run_linearity_scan(&c, &scaled).unwrap();
    for (a, b) in rows.iter().zip(&rows10) {
        assert!((a.eta_tot / b.eta_tot - 1.0).abs() < 1e-12);
        assert!((b.output_energy_j / a.output_energy_j - 10.0).abs() < 1e-9);
    }
    assert_eq!(run_linearity_scan(&c, &[42.0]).unwrap().len(), 1);
    assert!(run_linearity_scan(&c, &[-1.0]).is_err());
}

#[test]
fn time_bins_scale_with_pulse_and_decay() {
    let base = time_bin_report(&ExperimentConfig::default()).unwrap();
    assert!((base.bandwidth_thz - 10.0).abs() < 1e-12);
    assert!((base.storage_1e_ns - 1.0).abs() < 0.05, "{}", base.storage_1e_ns);
    assert!((base.bins / 1e4 - 1.0).abs() < 0.05);

    let mut long = ExperimentConfig::default();
    long.signal.duration_fs = 1000.0;
    let r = time_bin_report(&long).unwrap();
    assert!((r.bins / base.bins - 0.1).abs() < 1e-12);

    let mut fast = ExperimentConfig::default();
    fast.medium.gamma_override_per_s = Some(2.0 * base.gamma_per_s);
    let r = time_bin_report(&fast).unwrap();
    assert!((r.bins / base.bins - 0.5).abs() < 0.025, "{}", r.bins / base.bins);
}

#[test]
fn fit_recovers_dephasing_coefficients() {
    let truth = ExperimentConfig::default();
    let pressures: Vec<f64> = (1..=13).map(f64::from).collect();
    let data = simulate_curves(&truth, &pressures).unwrap();
    let mut start = truth.clone();
    start.medium.dephasing_c_diff_bar_per_s *= 0.8;
    start.medium.dephasing_c_coll_per_bar_s *= 1.25;
    start.protocol.alpha = 0.3;
    let free = [FitParam::Alpha, FitParam::CDiff, FitParam::CColl];
    let fit = fit_parameters(&data, &free, &start, &FitOptions::default()).unwrap();
    assert!(fit.converged && fit.residual_norm < 1e-8, "{fit:?}");
    for p in free {
        let rel = fit.value(p).unwrap() / p.get(&truth) - 1.0;
        assert!(rel.abs() < 0.01, "{p}: {rel}");
    }
    assert_eq!(fit.covariance.len(), 3);
}

#[test]
fn fit_recovers_gain() {
    let truth = ExperimentConfig::default();
    let data = simulate_curves(&truth, &[2.0, 4.0, 6.0, 8.0, 10.0]).unwrap();
    let mut start = truth.clone();
    start.medium.gain_rate_per_density_m4_per_j *= 1.3;
    let fit = fit_parameters(&data, &[FitParam::Gain], &start, &FitOptions::default()).unwrap();
    let rel = fit.values[0] / DEFAULT_GAIN_RATE_PER_DENSITY - 1.0;
    assert!(fit.converged && rel.abs() < 1e-6, "{fit:?}");
}

/// The waist cancels from G with the default interaction length, so its
/// column of the Jacobian vanishes and the fit leaves it in place.
#[test]
fn waist_is_unidentifiable_by_default() {
    let truth = ExperimentConfig::default();
    let data = simulate_curves(&truth, &[3.0, 6.0, 9.0]).unwrap();
    let mut start = truth.clone();
    start.protocol.alpha = 0.4;
    let fit = fit_parameters(&data, &[FitParam::Alpha, FitParam::Waist], &start, &FitOptions::default()).unwrap();
    assert!((fit.value(FitParam::Alpha).unwrap() - 0.35).abs() < 1e-6);
    assert!((fit.value(FitParam::Waist).unwrap() - 50.0).abs() < 1e-3);
}

#[test]
fn noisy_fit_reports_nonzero_residual() {
    let truth = ExperimentConfig::default();
    let pressures: Vec<f64> = (1..=13).map(f64::from).collect();
    let mut data = simulate_curves(&truth, &pressures).unwrap();
    for (i, v) in data.eta_w.iter_mut().enumerate() {
        *v = v.map(|x| x + if i % 2 == 0 { 0.004 } else { -0.004 });
    }
    let fit = fit_parameters(&data, &[FitParam::Alpha], &truth, &FitOptions::default()).unwrap();
    assert!(fit.residual_norm > 0.0);
    assert!((fit.values[0] - 0.35).abs() < 0.01);
    assert!(fit.covariance[0][0] > 0.0);
}
