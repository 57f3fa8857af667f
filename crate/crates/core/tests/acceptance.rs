//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

use std::cell::Cell;
use std::process::ExitCode;
use std::time::Instant;

use num_complex::Complex64;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

use raman_memory::coherence::local_maxima;
use raman_memory::harness::{
    fit_parameters, run_delay_scan, run_pressure_scan, simulate_curves, time_bin_report, ExperimentConfig,
    FitOptions, FitParam, LineMode,
};
use raman_memory::mbsolver::{coupling_parameter, write_stage, Envelope, GridSpec, MediumModel, MediumState, PulseSpec};
use raman_memory::spectroscopy::{
    boltzmann_populations, boltzmann_populations_weighted, thermal_vibrational_ratio, SpectroscopicConstants,
    SpinWeights, DEFAULT_J_MAX,
};

const TABLE_BEATS_CM1: [f64; 5] = [5.9, 11.8, 17.6, 29.4, 35.3];

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn beat_spectrum() -> Outcome {
    let mut details = Vec::new();
    let mut pass = true;
    for (mode, tol) in [(LineMode::Dunham, 0.3), (LineMode::Empirical, 0.15)] {
        let mut config = ExperimentConfig::default();
        config.medium.line_mode = mode;
        let start = Instant::now();
        let run = run_delay_scan(&config);
        let elapsed = start.elapsed().as_secs_f64();
        let Ok(run) = run else {
            return outcome(false, format!("{mode:?}: delay scan failed"));
        };
        let Some(spectrum) = run.spectrum else {
            return outcome(false, format!("{mode:?}: no spectrum"));
        };
        let worst = TABLE_BEATS_CM1
            .iter()
            .map(|&nu| spectrum.nearest_peak(nu).map_or(f64::INFINITY, |p| (p.wavenumber - nu).abs()))
            .fold(0.0, f64::max);
        pass &= worst <= tol && elapsed < 10.0;
        details.push(format!("{mode:?} max dev {worst:.3} cm-1 (tol {tol}), {elapsed:.2} s"));
    }
    outcome(pass, details.join("; "))
}

fn populations() -> Outcome {
    let c = SpectroscopicConstants::hydrogen();
    let pops = boltzmann_populations(&c, 295.0, DEFAULT_J_MAX).unwrap();
    let flat = boltzmann_populations_weighted(&c, 295.0, DEFAULT_J_MAX, SpinWeights::UNIFORM).unwrap();
    let factor = (pops.fraction(1) / pops.fraction(0)) / (flat.fraction(1) / flat.fraction(0));
    let f1 = pops.fraction(1);
    let pass = (f1 - 0.66).abs() <= 0.02 && SpinWeights::HYDROGEN.odd / SpinWeights::HYDROGEN.even == 3.0
        && (factor - 3.0).abs() < 1e-12;
    outcome(pass, format!("fraction(J=1) = {f1:.4}, odd:even factor = {factor}"))
}

fn thermal_occupation() -> Outcome {
    let r = thermal_vibrational_ratio(&SpectroscopicConstants::hydrogen(), 295.0).unwrap();
    let pass = (1e-9..=4e-9).contains(&r);
    outcome(pass, format!("N(v=1)/N(v=0) = {r:.3e} (target 2e-9, factor 2)"))
}

fn coupling_anchor() -> Outcome {
    let config = ExperimentConfig::default();
    let protocol = config.protocol().unwrap();
    let medium = protocol.medium(13.0).unwrap();
    let g = coupling_parameter(&medium, &protocol.write.with_energy(40e-6)).value;
    outcome((g - 6.5).abs() <= 0.5, format!("G(13 bar, 40 uJ, 100 fs) = {g:.4}"))
}

fn pressure_optimum() -> Outcome {
    let run = run_pressure_scan(&ExperimentConfig::default()).unwrap();
    let opt = run.read_optimum().map(|p| p.pressure_bar).unwrap_or(f64::NAN);
    let w: Vec<f64> = run
        .points
        .iter()
        .filter(|p| p.pressure_bar <= 10.0)
        .map(|p| p.eta_w)
        .collect();
    let monotone = w.windows(2).all(|x| x[1] >= x[0] - 1e-9);
    let pass = (4.0..=8.0).contains(&opt) && monotone && run.points.iter().all(|p| p.error.is_none());
    outcome(pass, format!("eta_r max at {opt} bar; eta_w non-decreasing over 1-10 bar: {monotone}"))
}

fn efficiency_anchors() -> Outcome {
    let run = run_pressure_scan(&ExperimentConfig::default()).unwrap();
    let Some(best) = run.best() else {
        return outcome(false, "no valid point".into());
    };
    let matched = best.eta_tot / run.alpha;
    let pass = (0.14..=0.22).contains(&best.eta_tot) && (0.45..=0.57).contains(&matched);
    outcome(
        pass,
        format!(
            "best at {} bar: eta_tot = {:.4}, eta_tot/alpha = {:.4} (storage {:.2} ps)",
            best.pressure_bar,
            best.eta_tot,
            matched,
            run.storage_time * 1e12
        ),
    )
}

fn runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(
        Config {
            cases,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    )
}

fn medium(coupling: f64, gamma: f64) -> MediumState {
    let control = PulseSpec::gaussian(800.0, 100e-15, 40e-6, 50e-6);
    let probe = MediumState::new(3.0, 0.02, &MediumModel::hydrogen(1.0)).unwrap();
    let per_unit = probe.gain_rate() * control.peak_intensity() * 0.02 * 100e-15;
    let mut model = MediumModel::hydrogen(coupling / per_unit);
    model.gamma_override = Some(gamma);
    MediumState::new(3.0, 0.02, &model).unwrap()
}

fn conservation_suite() -> Outcome {
    let start = Instant::now();
    let control = PulseSpec::gaussian(800.0, 100e-15, 40e-6, 50e-6);
    let signal = PulseSpec::gaussian(600.0, 100e-15, 1e-9, 50e-6);
    let grid = GridSpec { nz: 64, nt: 512, window: 1e-12 };

    let energy_err = Cell::new(0.0f64);
    let energy = runner(64).run(&(0.01f64..12.0, -100e-15f64..100e-15), |(g, delay)| {
        let m = medium(g, 0.0);
        let r = write_stage(&Envelope::from_pulse(&signal, delay, &grid), &control, &m, &grid).unwrap();
        let err = ((r.output_energy + r.stored_energy) / r.input_energy - 1.0).abs();
        energy_err.set(energy_err.get().max(err));
        prop_assert!(err <= 1e-6);
        Ok(())
    });

    let lin_err = Cell::new(0.0f64);
    let linearity = runner(64).run(&(0.1f64..10.0, 1e-3f64..1e3, 0.0f64..std::f64::consts::TAU), |(g, mag, phase)| {
        let m = medium(g, 1e9);
        let env = Envelope::from_pulse(&signal, 0.0, &grid);
        let s = Complex64::from_polar(mag, phase);
        let base = write_stage(&env, &control, &m, &grid).unwrap();
        let scaled = write_stage(&env.scaled(s), &control, &m, &grid).unwrap();
        let scale = base.signal_out.samples.iter().map(|a| a.norm()).fold(0.0, f64::max);
        let mut err = (scaled.efficiency - base.efficiency).abs() / base.efficiency;
        for (x, y) in scaled.signal_out.samples.iter().zip(&base.signal_out.samples) {
            err = err.max((x - y * s).norm() / (mag * scale));
        }
        lin_err.set(lin_err.get().max(err));
        prop_assert!(err <= 1e-10);
        Ok(())
    });

    let group_err = Cell::new(0.0f64);
    let ensemble = medium(1.0, 1e9).ensemble;
    let group = runner(256).run(&(0.0f64..1e-9, 0.0f64..1e-9), |(t1, t2)| {
        let a = ensemble.evolve_by(t1).unwrap().evolve_by(t2).unwrap();
        let b = ensemble.evolve_by(t1 + t2).unwrap();
        let t = t1 + t2;
        for ((ch, (_, x)), (_, y)) in ensemble.channels().iter().zip(a.amplitudes()).zip(b.amplitudes()) {
            let closed = ch.amplitude * Complex64::from_polar((-ensemble.gamma() * t).exp(), -ch.angular_frequency * t);
            let err = (x - y).norm().max((x - closed).norm());
            group_err.set(group_err.get().max(err));
            prop_assert!(err <= 1e-12);
        }
        Ok(())
    });

    let ratios = std::cell::RefCell::new(Vec::new());
    let convergence = runner(6).run(&(0.5f64..8.0), |g| {
        let m = medium(g, 1e9);
        let eta = |grid: GridSpec| {
            write_stage(&Envelope::from_pulse(&signal, 20e-15, &grid), &control, &m, &grid)
                .unwrap()
                .efficiency
        };
        let (e1, e2, e3) = (eta(grid), eta(grid.refined()), eta(grid.refined().refined()));
        let reference = e3 + (e3 - e2) / 3.0;
        let ratio = (e1 - reference).abs() / (e2 - reference).abs();
        ratios.borrow_mut().push(ratio);
        prop_assert!((3.5..=4.5).contains(&ratio));
        Ok(())
    });

    let elapsed = start.elapsed().as_secs_f64();
    let ratios = ratios.into_inner();
    let (rmin, rmax) = ratios
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| (a.min(*r), b.max(*r)));
    let pass = energy.is_ok() && linearity.is_ok() && group.is_ok() && convergence.is_ok() && elapsed < 60.0;
    outcome(
        pass,
        format!(
            "energy {:.1e}, linearity {:.1e}, group action {:.1e}, convergence ratio {rmin:.3}..{rmax:.3}, {elapsed:.1} s",
            energy_err.get(),
            lin_err.get(),
            group_err.get()
        ),
    )
}

fn rephasing_timing() -> Outcome {
    let run = run_delay_scan(&ExperimentConfig::default()).unwrap();
    let scan = run.scan.unwrap();
    let near: Vec<(f64, f64)> = local_maxima(&scan)
        .into_iter()
        .filter(|(t, _)| (t - 16e-12).abs() <= 1e-12)
        .collect();
    let best = near.iter().max_by(|a, b| a.1.total_cmp(&b.1));
    match best {
        Some((t, v)) => outcome(true, format!("{} local maxima within 16 +/- 1 ps, strongest at {:.3} ps (eta_r {v:.4})", near.len(), t * 1e12)),
        None => outcome(false, "no local maximum within 16 +/- 1 ps".into()),
    }
}

fn time_bins() -> Outcome {
    let r = time_bin_report(&ExperimentConfig::default()).unwrap();
    outcome(
        (5e3..=2e4).contains(&r.bins),
        format!("{:.0} bins = {:.1} THz x {:.3} ns", r.bins, r.bandwidth_thz, r.storage_1e_ns),
    )
}

fn fit_round_trip() -> Outcome {
    let truth = ExperimentConfig::default();
    let pressures: Vec<f64> = (1..=13).map(f64::from).collect();
    let data = simulate_curves(&truth, &pressures).unwrap();
    let mut start = truth.clone();
    start.protocol.alpha = 0.5;
    let fit = fit_parameters(&data, &[FitParam::Alpha], &start, &FitOptions::default()).unwrap();
    let alpha = fit.value(FitParam::Alpha).unwrap();
    outcome(
        (alpha - 0.35).abs() <= 0.01 && fit.converged,
        format!("alpha = {alpha:.6} from 0.5 start, {} iterations, residual {:.1e}", fit.iterations, fit.residual_norm),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("beat-spectrum", beat_spectrum),
        ("populations", populations),
        ("thermal-occupation", thermal_occupation),
        ("coupling-anchor", coupling_anchor),
        ("pressure-optimum", pressure_optimum),
        ("efficiency-anchors", efficiency_anchors),
        ("conservation-suite", conservation_suite),
        ("rephasing-timing", rephasing_timing),
        ("time-bins", time_bins),
        ("fit-round-trip", fit_round_trip),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let o = check();
        failed += usize::from(!o.pass);
        println!("{} {name:<20} {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {}/{} passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
