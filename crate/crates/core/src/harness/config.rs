//! Experiment configuration. Stored as TOML; every physical quantity carries
//! its unit in the key name.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coherence::{rephasing_maximum_near, SpectrumOptions, Window};
use crate::error::{Error, Result};
use crate::mbsolver::{DephasingModel, EnvelopeShape, GridSpec, MediumModel, MediumState, PulseSpec, ScanProtocol};
use crate::spectroscopy::{read_line_table, SpectroscopicConstants, DEFAULT_J_MAX};

use super::calibration::{DEFAULT_GAIN_RATE_PER_DENSITY, DEFAULT_SIGNAL_DELAY_FS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineMode {
    Dunham,
    Empirical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediumConfig {
    pub pressure_bar: f64,
    pub temperature_k: f64,
    pub dephasing_c_diff_bar_per_s: f64,
    pub dephasing_c_coll_per_bar_s: f64,
    /// g·Γ per molecule.
    pub gain_rate_per_density_m4_per_j: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_override_per_s: Option<f64>,
    pub line_mode: LineMode,
    /// Key/value constants file; built-in H₂ constants when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants_path: Option<PathBuf>,
    /// CSV `v,vp,J,wavenumber`; built-in Q₁ lines when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub empirical_lines_path: Option<PathBuf>,
    pub j_max: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub populated_levels: Option<Vec<u32>>,
    /// Replaces the two-Rayleigh-range default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interaction_length_mm: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseConfig {
    pub wavelength_nm: f64,
    pub duration_fs: f64,
    pub energy_uj: f64,
    pub waist_um: f64,
    pub shape: EnvelopeShape,
}

impl PulseConfig {
    pub fn to_spec(&self) -> PulseSpec {
        PulseSpec {
            center_wavelength_nm: self.wavelength_nm,
            duration: self.duration_fs * 1e-15,
            energy: self.energy_uj * 1e-6,
            waist: self.waist_um * 1e-6,
            shape: self.shape,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    /// Mode-matched fraction of the signal.
    pub alpha: f64,
    /// Signal arrival relative to the write pulse.
    pub signal_delay_fs: f64,
    /// Read delay for efficiency studies.
    pub control_delay_ps: f64,
    /// When positive, the read delay moves to the strongest rephasing
    /// maximum within ± this many ps of `control_delay_ps`.
    pub rephasing_snap_ps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nz: usize,
    pub nt: usize,
    pub window_fs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayScanConfig {
    pub start_ps: f64,
    pub stop_ps: f64,
    pub points: usize,
    pub window: Window,
    pub prominence: f64,
    pub zero_pad: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PressureScanConfig {
    pub pressures_bar: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearityScanConfig {
    pub energies_nj: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub calibration_id: String,
    pub output_dir: PathBuf,
    pub medium: MediumConfig,
    pub signal: PulseConfig,
    pub write: PulseConfig,
    pub read: PulseConfig,
    pub protocol: ProtocolConfig,
    pub grid: GridConfig,
    pub delay_scan: DelayScanConfig,
    pub pressure_scan: PressureScanConfig,
    pub linearity_scan: LinearityScanConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let dephasing = DephasingModel::default();
        let control = PulseConfig {
            wavelength_nm: 800.0,
            duration_fs: 100.0,
            energy_uj: 40.0,
            waist_um: 50.0,
            shape: EnvelopeShape::Gaussian,
        };
        Self {
            calibration_id: "default".into(),
            output_dir: PathBuf::from("out"),
            medium: MediumConfig {
                pressure_bar: 3.0,
                temperature_k: 295.0,
                dephasing_c_diff_bar_per_s: dephasing.c_diff,
                dephasing_c_coll_per_bar_s: dephasing.c_coll,
                gain_rate_per_density_m4_per_j: DEFAULT_GAIN_RATE_PER_DENSITY,
                gamma_override_per_s: None,
                line_mode: LineMode::Dunham,
                constants_path: None,
                empirical_lines_path: None,
                j_max: DEFAULT_J_MAX,
                populated_levels: None,
                interaction_length_mm: None,
            },
            signal: PulseConfig {
                wavelength_nm: 600.0,
                energy_uj: 0.05,
                ..control
            },
            write: control,
            read: PulseConfig {
                energy_uj: 34.0,
                ..control
            },
            protocol: ProtocolConfig {
                alpha: 0.35,
                signal_delay_fs: DEFAULT_SIGNAL_DELAY_FS,
                control_delay_ps: 16.0,
                rephasing_snap_ps: 1.5,
            },
            grid: GridConfig {
                nz: 128,
                nt: 1024,
                window_fs: 1000.0,
            },
            delay_scan: DelayScanConfig {
                start_ps: 0.0,
                stop_ps: 100.0,
                points: 1001,
                window: Window::Hann,
                prominence: 0.01,
                zero_pad: 16,
            },
            pressure_scan: PressureScanConfig {
                pressures_bar: (1..=13).map(f64::from).collect(),
            },
            linearity_scan: LinearityScanConfig {
                energies_nj: vec![5.0, 10.0, 20.0, 50.0, 100.0, 150.0],
            },
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config: Self = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        // Relative data paths resolve against the config file.
        if let Some(dir) = path.parent() {
            for p in [&mut config.medium.constants_path, &mut config.medium.empirical_lines_path]
                .into_iter()
                .flatten()
            {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// SHA-256 of the canonical JSON form, hex encoded. The output
    /// directory does not affect results and is excluded.
    pub fn hash(&self) -> String {
        let keyed = Self {
            output_dir: PathBuf::new(),
            ..self.clone()
        };
        let canonical = serde_json::to_string(&keyed).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.medium;
        if !(m.pressure_bar >= 0.5 && m.pressure_bar <= 20.0) {
            return Err(Error::Config(format!("medium.pressure_bar = {} outside [0.5, 20]", m.pressure_bar)));
        }
        if !(m.temperature_k > 0.0) {
            return Err(Error::Config("medium.temperature_k must be positive".into()));
        }
        if !(m.dephasing_c_diff_bar_per_s >= 0.0 && m.dephasing_c_coll_per_bar_s >= 0.0) {
            return Err(Error::Config("dephasing coefficients must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.protocol.alpha) {
            return Err(Error::Config("protocol.alpha outside [0, 1]".into()));
        }
        if !(self.protocol.control_delay_ps >= 0.0) || !(self.protocol.rephasing_snap_ps >= 0.0) {
            return Err(Error::Config("protocol delays must be >= 0".into()));
        }
        let d = &self.delay_scan;
        if !(d.start_ps >= 0.0 && d.stop_ps > d.start_ps && d.stop_ps <= 2000.0) || d.points < 2 {
            return Err(Error::Config("delay_scan must span a non-empty range within [0, 2000] ps".into()));
        }
        if let Some(p) = self
            .pressure_scan
            .pressures_bar
            .iter()
            .find(|p| !(**p >= 0.5 && **p <= 20.0))
        {
            return Err(Error::Config(format!("pressure_scan value {p} bar outside [0.5, 20]")));
        }
        if self.linearity_scan.energies_nj.iter().any(|e| !(*e > 0.0)) {
            return Err(Error::Config("linearity_scan energies must be positive".into()));
        }
        for pulse in [&self.signal, &self.write, &self.read] {
            pulse.to_spec().validate()?;
        }
        Ok(())
    }

    pub fn constants(&self) -> Result<SpectroscopicConstants> {
        let mut constants = match &self.medium.constants_path {
            Some(path) => SpectroscopicConstants::from_kv_file(path)?,
            None => SpectroscopicConstants::hydrogen(),
        };
        if self.medium.line_mode == LineMode::Empirical {
            constants.empirical_lines = Some(match &self.medium.empirical_lines_path {
                Some(path) => read_line_table(path)?,
                None => SpectroscopicConstants::hydrogen_empirical()
                    .empirical_lines
                    .expect("built-in line table"),
            });
        }
        constants.validate()?;
        Ok(constants)
    }

    pub fn medium_model(&self) -> Result<MediumModel> {
        Ok(MediumModel {
            temperature_k: self.medium.temperature_k,
            dephasing: DephasingModel {
                c_diff: self.medium.dephasing_c_diff_bar_per_s,
                c_coll: self.medium.dephasing_c_coll_per_bar_s,
            },
            gain_rate_per_density: self.medium.gain_rate_per_density_m4_per_j,
            gamma_override: self.medium.gamma_override_per_s,
            constants: self.constants()?,
            j_max: self.medium.j_max,
            populated_levels: self.medium.populated_levels.clone(),
        })
    }

    pub fn grid_spec(&self) -> GridSpec {
        GridSpec {
            nz: self.grid.nz,
            nt: self.grid.nt,
            window: self.grid.window_fs * 1e-15,
        }
    }

    pub fn spectrum_options(&self) -> SpectrumOptions {
        SpectrumOptions {
            window: self.delay_scan.window,
            prominence: self.delay_scan.prominence,
            zero_pad: self.delay_scan.zero_pad,
        }
    }

    /// Protocol with the configured control delay, before rephasing snap.
    pub fn base_protocol(&self) -> Result<ScanProtocol> {
        Ok(ScanProtocol {
            model: self.medium_model()?,
            signal: self.signal.to_spec(),
            write: self.write.to_spec(),
            read: self.read.to_spec(),
            signal_delay: self.protocol.signal_delay_fs * 1e-15,
            storage_time: self.protocol.control_delay_ps * 1e-12,
            alpha: self.protocol.alpha,
            grid: self.grid_spec(),
            interaction_length: self.medium.interaction_length_mm.map(|l| l * 1e-3),
        })
    }

    /// Protocol whose storage time is the resolved control delay.
    pub fn protocol(&self) -> Result<ScanProtocol> {
        let mut protocol = self.base_protocol()?;
        let medium = protocol.medium(self.medium.pressure_bar)?;
        protocol.storage_time = resolve_control_delay(&medium, &self.protocol)?;
        Ok(protocol)
    }
}

/// The configured control delay, moved to the strongest rephasing maximum
/// within the snap window when one exists there.
pub fn resolve_control_delay(medium: &MediumState, protocol: &ProtocolConfig) -> Result<f64> {
    let target = protocol.control_delay_ps * 1e-12;
    if protocol.rephasing_snap_ps <= 0.0 {
        return Ok(target);
    }
    let snapped = rephasing_maximum_near(&medium.ensemble, target, protocol.rephasing_snap_ps * 1e-12)?;
    Ok(snapped.map(|(t, _)| t).unwrap_or(target))
}
