use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use raman_memory::coherence::{power_spectrum, DelayScan, ScanKind};
use raman_memory::harness::{
    calibrate, efficiency_report, fit_parameters, run_delay_scan, run_linearity_scan, run_pressure_scan,
    time_bin_report, write_linearity_csv, ExperimentConfig, FitOptions, FitParam, ObservedCurves, OutputDir,
    RunMetadata,
};
use raman_memory::{Error, Result};

#[derive(Parser)]
#[command(name = "raman-memory", version, about = "Raman quantum memory in H2: scans, calibration and fitting")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment config; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config's output_dir.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for scan points.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Recorded in metadata.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Read efficiency against read delay, plus its power spectrum.
    DelayScan,
    /// Write and read efficiencies against pressure.
    PressureScan,
    /// Efficiencies against signal energy.
    LinearityScan,
    /// Fit model parameters to measured pressure curves.
    Fit {
        /// CSV with columns pressure_bar,eta_w,eta_r.
        #[arg(long)]
        data: PathBuf,
        /// Free parameters: alpha, gain, c_diff, c_coll, waist.
        #[arg(long, value_delimiter = ',', default_value = "alpha")]
        free: Vec<FitParam>,
    },
    /// Power spectrum of a delay-scan CSV, or of a fresh delay scan.
    Spectrum {
        /// CSV with columns delay_ps,efficiency.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Derive the gain rate and signal timing from the coupling anchor.
    Calibrate,
    /// Efficiencies at the configured point and the time-bin count.
    Report,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({ "error": e.to_string(), "kind": e.kind() }));
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &cli.common.out {
        config.output_dir = out.clone();
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = cli.common.jobs {
        if jobs == 0 {
            return Err(Error::Config("--jobs must be at least 1".into()));
        }
        pool = pool.num_threads(jobs);
    }
    let pool = pool.build().map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| execute(&cli.command, &config, cli.common.seed))
}

fn execute(command: &Command, config: &ExperimentConfig, seed: u64) -> Result<()> {
    let out = OutputDir::create(&config.output_dir)?;
    out.write_config(config)?;
    let meta = |name: &str, columns: &[(&str, &str)], summary| RunMetadata::new(name, config, seed, columns, summary);
    let finish = |file: &str, m: RunMetadata| -> Result<()> {
        out.write_json(file, &m)?;
        out.append_run_log(&m)?;
        println!("{}", serde_json::to_string(&m.summary).unwrap_or_default());
        Ok(())
    };

    match command {
        Command::DelayScan => {
            let run = run_delay_scan(config)?;
            run.write_csv(&out.path("delay_scan.csv"))?;
            run.write.signal_out.write_csv(&out.path("write_transmitted.csv"))?;
            let peaks = match &run.spectrum {
                Some(s) => {
                    s.write_csv(&out.path("spectrum.csv"))?;
                    s.peaks.iter().map(|p| p.wavenumber).collect()
                }
                None => Vec::new(),
            };
            let summary = json!({
                "pressure_bar": run.pressure_bar,
                "gamma_per_s": run.gamma,
                "eta_w_matched": run.write.efficiency,
                "points": run.delays.len(),
                "failed_points": run.errors,
                "peaks_cm1": peaks,
            });
            finish(
                "delay_scan.json",
                meta("delay-scan", &[("delay_ps", "ps"), ("efficiency", "1"), ("wavenumber_cm1", "cm^-1"), ("power", "arb")], summary),
            )
        }
        Command::PressureScan => {
            let run = run_pressure_scan(config)?;
            run.write_csv(&out.path("pressure_scan.csv"))?;
            let summary = json!({
                "alpha": run.alpha,
                "storage_time_ps": run.storage_time * 1e12,
                "read_optimum_bar": run.read_optimum().map(|p| p.pressure_bar),
                "best": run.best(),
            });
            finish(
                "pressure_scan.json",
                meta("pressure-scan", &[("pressure_bar", "bar"), ("eta_w", "1"), ("eta_w_matched", "1"), ("eta_r", "1"), ("eta_tot", "1"), ("coupling_g", "1")], summary),
            )
        }
        Command::LinearityScan => {
            let rows = run_linearity_scan(config, &config.linearity_scan.energies_nj)?;
            write_linearity_csv(&rows, &out.path("linearity_scan.csv"))?;
            let summary = json!({ "rows": rows.len(), "eta_tot": rows.iter().map(|r| r.eta_tot).collect::<Vec<_>>() });
            finish(
                "linearity_scan.json",
                meta("linearity-scan", &[("energy_nj", "nJ"), ("eta_w", "1"), ("eta_r", "1"), ("eta_tot", "1"), ("output_energy_j", "J")], summary),
            )
        }
        Command::Fit { data, free } => {
            let observed = ObservedCurves::read_csv(data)?;
            let fit = fit_parameters(&observed, free, config, &FitOptions::default())?;
            let summary = serde_json::to_value(&fit).map_err(|e| Error::Config(e.to_string()))?;
            out.write_json("fit.json", &fit)?;
            finish("fit_meta.json", meta("fit", &[], summary))
        }
        Command::Spectrum { input } => {
            let scan = match input {
                Some(path) => DelayScan::read_csv(path, ScanKind::ReadEfficiency)?,
                None => run_delay_scan(config)?
                    .scan
                    .ok_or_else(|| Error::Domain("delay scan has failed points".into()))?,
            };
            let spectrum = power_spectrum(&scan, &config.spectrum_options())?;
            spectrum.write_csv(&out.path("spectrum.csv"))?;
            let summary = json!({ "peaks": spectrum.peaks, "source": input.as_deref().map(Path::display).map(|d| d.to_string()) });
            finish("spectrum.json", meta("spectrum", &[("wavenumber_cm1", "cm^-1"), ("power", "arb")], summary))
        }
        Command::Calibrate => {
            let calibration = calibrate(config)?;
            let mut calibrated = config.clone();
            calibration.apply(&mut calibrated);
            std::fs::write(out.path("calibrated.toml"), calibrated.to_toml()?).map_err(|source| Error::Io {
                path: out.path("calibrated.toml"),
                source,
            })?;
            let summary = serde_json::to_value(&calibration).map_err(|e| Error::Config(e.to_string()))?;
            finish("calibration.json", meta("calibrate", &[], summary))
        }
        Command::Report => {
            let bins = time_bin_report(config)?;
            let eff = efficiency_report(config)?;
            let summary = json!({ "time_bins": bins, "efficiency": eff });
            finish("report.json", meta("report", &[], summary))
        }
    }
}
