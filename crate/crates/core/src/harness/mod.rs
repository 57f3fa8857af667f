//! Scan orchestration, reports, persistence.
//!
//! Scan points run on the current rayon pool; callers choose the pool size.
//! Outputs are ordered by axis value whatever the pool size, and contain no
//! timestamps, so one config hash yields byte-identical files.

pub mod calibration;
pub mod config;
pub mod fit;

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::coherence::{
    csv_err, csv_writer, power_spectrum, retrieval_envelope, DelayScan, PowerSpectrum, ScanKind,
    MAX_SCAN_DELAY, MIN_SPECTRUM_POINTS, MIN_SPECTRUM_SPAN,
};
use crate::error::{Error, Result};
use crate::mbsolver::{coupling_parameter, pressure_scan, read_stage, write_stage, PressurePoint, StageResult};

pub use calibration::{calibrate, Calibration};
pub use config::{ExperimentConfig, LineMode};
pub use fit::{fit_parameters, simulate_curves, FitOptions, FitParam, FitResult, ObservedCurves};

/// Read efficiency against read delay, with the write stage run once.
#[derive(Debug, Clone)]
pub struct DelayScanRun {
    pub delays: Vec<f64>,
    /// `None` where the read stage failed.
    pub values: Vec<Option<f64>>,
    pub errors: Vec<(usize, String)>,
    pub write: StageResult,
    pub gamma: f64,
    pub pressure_bar: f64,
    /// Complete scans only.
    pub scan: Option<DelayScan>,
    /// Complete scans of sufficient length only.
    pub spectrum: Option<PowerSpectrum>,
}

pub fn run_delay_scan(config: &ExperimentConfig) -> Result<DelayScanRun> {
    config.validate()?;
    let protocol = config.base_protocol()?;
    let d = &config.delay_scan;
    let delays = DelayScan::uniform_grid(d.start_ps * 1e-12, d.stop_ps * 1e-12, d.points);
    let pressure = config.medium.pressure_bar;
    let medium = protocol.medium(pressure)?;
    let write = write_stage(&protocol.signal_envelope(), &protocol.write, &medium, &protocol.grid)?;
    let results: Vec<Result<f64>> = delays
        .par_iter()
        .map(|&t| {
            read_stage(&write.coherence_field, &protocol.read, &medium, t, &protocol.grid).map(|r| r.efficiency)
        })
        .collect();
    let mut values = Vec::with_capacity(delays.len());
    let mut errors = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => values.push(Some(v)),
            Err(e) => {
                errors.push((i, e.to_string()));
                values.push(None);
            }
        }
    }
    let scan = if errors.is_empty() {
        Some(DelayScan::new(
            delays.clone(),
            values.iter().map(|v| v.unwrap_or_default()).collect(),
            ScanKind::ReadEfficiency,
        )?)
    } else {
        None
    };
    let spectrum = match &scan {
        Some(s) if s.len() >= MIN_SPECTRUM_POINTS && s.span() >= MIN_SPECTRUM_SPAN => {
            Some(power_spectrum(s, &config.spectrum_options())?)
        }
        _ => None,
    };
    Ok(DelayScanRun {
        delays,
        values,
        errors,
        write,
        gamma: medium.gamma,
        pressure_bar: pressure,
        scan,
        spectrum,
    })
}

impl DelayScanRun {
    /// `delay_ps,efficiency`; failed points have an empty efficiency cell.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv_writer(path)?;
        w.write_record(["delay_ps", "efficiency"]).map_err(|e| csv_err(path, e))?;
        for (t, v) in self.delays.iter().zip(&self.values) {
            let cell = v.map(|x| format!("{x}")).unwrap_or_default();
            w.write_record([format!("{}", t * 1e12), cell]).map_err(|e| csv_err(path, e))?;
        }
        flush(w, path)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PressureScanRun {
    pub points: Vec<PressurePoint>,
    pub storage_time: f64,
    pub alpha: f64,
}

impl PressureScanRun {
    /// Valid point with the largest η_r.
    pub fn read_optimum(&self) -> Option<&PressurePoint> {
        self.valid().max_by(|a, b| a.eta_r.total_cmp(&b.eta_r))
    }

    /// Valid point with the largest η_tot.
    pub fn best(&self) -> Option<&PressurePoint> {
        self.valid().max_by(|a, b| a.eta_tot.total_cmp(&b.eta_tot))
    }

    fn valid(&self) -> impl Iterator<Item = &PressurePoint> {
        self.points.iter().filter(|p| p.error.is_none())
    }

    /// `pressure_bar,eta_w,eta_w_matched,eta_r,eta_tot,coupling_g,error`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv_writer(path)?;
        w.write_record(["pressure_bar", "eta_w", "eta_w_matched", "eta_r", "eta_tot", "coupling_g", "error"])
            .map_err(|e| csv_err(path, e))?;
        for p in &self.points {
            let num = |x: f64| if p.error.is_some() { String::new() } else { format!("{x}") };
            w.write_record([
                format!("{}", p.pressure_bar),
                num(p.eta_w),
                num(p.eta_w_matched),
                num(p.eta_r),
                num(p.eta_tot),
                num(p.coupling),
                p.error.clone().unwrap_or_default(),
            ])
            .map_err(|e| csv_err(path, e))?;
        }
        flush(w, path)
    }
}

pub fn run_pressure_scan(config: &ExperimentConfig) -> Result<PressureScanRun> {
    config.validate()?;
    let protocol = config.protocol()?;
    let points = pressure_scan(&config.pressure_scan.pressures_bar, &protocol)?;
    Ok(PressureScanRun {
        points,
        storage_time: protocol.storage_time,
        alpha: protocol.alpha,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearityRow {
    pub energy_nj: f64,
    pub eta_w: f64,
    pub eta_r: f64,
    pub eta_tot: f64,
    /// Retrieved energy, joules.
    pub output_energy_j: f64,
}

/// Write and read at the configured pressure and control delay for each
/// signal energy.
pub fn run_linearity_scan(config: &ExperimentConfig, energies_nj: &[f64]) -> Result<Vec<LinearityRow>> {
    config.validate()?;
    if energies_nj.is_empty() {
        return Err(Error::Config("linearity scan needs at least one energy".into()));
    }
    if let Some(e) = energies_nj.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        return Err(Error::Config(format!("signal energy {e} nJ must be positive")));
    }
    let base = config.protocol()?;
    let pressure = config.medium.pressure_bar;
    energies_nj
        .par_iter()
        .map(|&e| {
            let mut protocol = base.clone();
            protocol.signal = protocol.signal.with_energy(e * 1e-9);
            let cycle = protocol.run_cycle(pressure)?;
            Ok(LinearityRow {
                energy_nj: e,
                eta_w: cycle.eta_w(),
                eta_r: cycle.eta_r(),
                eta_tot: cycle.eta_tot(),
                output_energy_j: cycle.alpha * cycle.read.output_energy * e * 1e-9 / cycle.write.input_energy,
            })
        })
        .collect()
}

pub fn write_linearity_csv(rows: &[LinearityRow], path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["energy_nj", "eta_w", "eta_r", "eta_tot", "output_energy_j"])
        .map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record([r.energy_nj, r.eta_w, r.eta_r, r.eta_tot, r.output_energy_j].map(|x| format!("{x}")))
            .map_err(|e| csv_err(path, e))?;
    }
    flush(w, path)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeBinReport {
    /// 1/τ_FWHM of the signal.
    pub bandwidth_thz: f64,
    /// Amplitude 1/e time from the simulated retrieval envelope.
    pub storage_1e_ns: f64,
    pub bins: f64,
    pub pressure_bar: f64,
    pub gamma_per_s: f64,
}

/// Sampling step and window for the storage-time envelope.
const ENVELOPE_STEP: f64 = 10e-15;
const ENVELOPE_WINDOW: f64 = 20e-12;

pub fn time_bin_report(config: &ExperimentConfig) -> Result<TimeBinReport> {
    config.validate()?;
    let protocol = config.base_protocol()?;
    let medium = protocol.medium(config.medium.pressure_bar)?;
    let bandwidth = 1.0 / protocol.signal.duration;

    let per_window = (ENVELOPE_WINDOW / ENVELOPE_STEP).round() as usize;
    let windows = (MAX_SCAN_DELAY / ENVELOPE_WINDOW).round() as usize;
    let maxima: Vec<(f64, f64)> = (0..windows)
        .into_par_iter()
        .map(|w| {
            let start = w as f64 * ENVELOPE_WINDOW;
            let delays: Vec<f64> = (0..per_window).map(|i| start + i as f64 * ENVELOPE_STEP).collect();
            let scan = retrieval_envelope(&medium.ensemble, &delays, 1.0)?;
            let (t, v) = scan
                .delays()
                .iter()
                .zip(scan.values())
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(t, v)| (*t, *v))
                .expect("non-empty window");
            Ok((t, v))
        })
        .collect::<Result<_>>()?;

    let storage = if medium.gamma == 0.0 {
        f64::INFINITY
    } else {
        let pts: Vec<(f64, f64)> = maxima.iter().filter(|(_, v)| *v > 0.0).map(|(t, v)| (*t, v.ln())).collect();
        if pts.len() < 2 {
            return Err(Error::domain("retrieval envelope vanished before two windows"));
        }
        let n = pts.len() as f64;
        let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
        let slope = sxy / sxx;
        if !(slope < 0.0) {
            return Err(Error::domain("retrieval envelope does not decay"));
        }
        // Intensity decays at twice the amplitude rate.
        -2.0 / slope
    };
    Ok(TimeBinReport {
        bandwidth_thz: bandwidth * 1e-12,
        storage_1e_ns: storage * 1e9,
        bins: bandwidth * storage,
        pressure_bar: medium.pressure_bar,
        gamma_per_s: medium.gamma,
    })
}

/// Efficiencies at the configured pressure and the best point of the
/// configured pressure axis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EfficiencyReport {
    pub coupling_g: f64,
    pub storage_time_ps: f64,
    pub at_config: PressurePoint,
    pub best: Option<PressurePoint>,
}

pub fn efficiency_report(config: &ExperimentConfig) -> Result<EfficiencyReport> {
    config.validate()?;
    let protocol = config.protocol()?;
    let p = config.medium.pressure_bar;
    let at_config = pressure_scan(&[p], &protocol)?.remove(0);
    let run = PressureScanRun {
        points: pressure_scan(&config.pressure_scan.pressures_bar, &protocol)?,
        storage_time: protocol.storage_time,
        alpha: protocol.alpha,
    };
    let medium = protocol.medium(p)?;
    Ok(EfficiencyReport {
        coupling_g: coupling_parameter(&medium, &protocol.write).value,
        storage_time_ps: protocol.storage_time * 1e12,
        at_config,
        best: run.best().cloned(),
    })
}

/// JSON sidecar accompanying every CSV output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetadata {
    pub command: String,
    pub config_hash: String,
    pub calibration_id: String,
    /// Recorded only; every computation is deterministic.
    pub seed: u64,
    pub version: String,
    /// Column name to unit.
    pub columns: BTreeMap<String, String>,
    pub summary: serde_json::Value,
}

impl RunMetadata {
    pub fn new(command: &str, config: &ExperimentConfig, seed: u64, columns: &[(&str, &str)], summary: serde_json::Value) -> Self {
        Self {
            command: command.to_string(),
            config_hash: config.hash(),
            calibration_id: config.calibration_id.clone(),
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            columns: columns.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            summary,
        }
    }
}

/// Output directory holding CSVs, JSON sidecars, the effective config and
/// an append-only `run_log.jsonl`.
#[derive(Debug, Clone)]
pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|source| Error::Io {
            path: root.to_path_buf(),
            source,
        })?;
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let path = self.path(name);
        let text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
        write_file(&path, format!("{text}\n").as_bytes())?;
        Ok(path)
    }

    pub fn write_config(&self, config: &ExperimentConfig) -> Result<PathBuf> {
        let path = self.path("config.toml");
        write_file(&path, config.to_toml()?.as_bytes())?;
        Ok(path)
    }

    pub fn append_run_log(&self, metadata: &RunMetadata) -> Result<()> {
        let path = self.path("run_log.jsonl");
        let line = serde_json::to_string(metadata).map_err(|e| Error::Config(e.to_string()))?;
        let io = |source| Error::Io {
            path: path.clone(),
            source,
        };
        let mut f = OpenOptions::new().create(true).append(true).open(&path).map_err(io)?;
        writeln!(f, "{line}").map_err(io)
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn flush(mut w: csv::Writer<fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
