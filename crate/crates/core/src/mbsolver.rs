//! One-dimensional linearized Maxwell-Bloch solver for Raman storage
//! (write) and retrieval (read).
//!
//! In the frame co-moving with the pulses (z, τ = t − z/v_g) the signal
//! envelope `a` and the vibrational coherence `B` obey
//!
//! ```text
//! write:  ∂a/∂z = −c(τ)·B          ∂B/∂τ = +c(τ)·a − Γ·B
//! read:   ∂a/∂z = +c(τ)·B          ∂B/∂τ = −c(τ)·a − Γ·B
//! ```
//!
//! with c(τ)² = g·Γ·I(τ)/2, so that under adiabatic elimination of B a
//! long control pulse attenuates the signal intensity as exp(−g·I·z), the
//! steady-state Raman response. For a control pulse of peak intensity I_w
//! and FWHM τ_w over a length z the coupling is then governed by the
//! dimensionless product G = g·I_w·z·Γ·τ_w.
//!
//! Envelopes are normalized so that ∫|a|²dτ and ∫|B|²dz are energies in
//! joules. The integrator is a box scheme on a staggered grid: `a` lives on
//! τ-cells at z-nodes, `B` on z-cells at τ-nodes, and each grid cell is
//! advanced by the trapezoidal rule in both directions. Every cell update is
//! a 2×2 Cayley transform, so with Γ = 0 the discrete energy
//! Σ dτ|a|² + Σ dz|B|² is conserved to rounding, and the scheme is second
//! order in (dz, dτ).

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coherence::{init_ensemble, CoherenceEnsemble, DelayScan, ScanKind};
use crate::error::{Error, Result};
use crate::spectroscopy::{boltzmann_populations, PopulationTable, SpectroscopicConstants, DEFAULT_J_MAX};
use crate::units::number_density;

/// Minimum number of τ samples per pulse FWHM.
pub const MIN_POINTS_PER_FWHM: f64 = 16.0;
/// Minimum number of z cells.
pub const MIN_NZ: usize = 64;
/// Minimum local-time window, in FWHM of the longest pulse.
pub const MIN_WINDOW_FWHM: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeShape {
    Gaussian,
    Sech2,
}

const SECH2_FWHM_FACTOR: f64 = 1.762_747_174_039_086; // 2·ln(1 + √2)

impl EnvelopeShape {
    /// Normalized intensity profile, unity at the peak; `x` is time in
    /// units of the intensity FWHM.
    pub fn profile(self, x: f64) -> f64 {
        match self {
            EnvelopeShape::Gaussian => (-4.0 * std::f64::consts::LN_2 * x * x).exp(),
            EnvelopeShape::Sech2 => {
                let s = 1.0 / (SECH2_FWHM_FACTOR * x).cosh();
                s * s
            }
        }
    }

    /// ∫ profile(τ/τ_FWHM) dτ / τ_FWHM.
    pub fn area_factor(self) -> f64 {
        match self {
            EnvelopeShape::Gaussian => (PI / (4.0 * std::f64::consts::LN_2)).sqrt(),
            EnvelopeShape::Sech2 => 2.0 / SECH2_FWHM_FACTOR,
        }
    }

    /// Transform-limited time-bandwidth product (intensity FWHM).
    pub fn time_bandwidth_product(self) -> f64 {
        match self {
            EnvelopeShape::Gaussian => 2.0 * std::f64::consts::LN_2 / PI,
            EnvelopeShape::Sech2 => 0.314_8,
        }
    }
}

/// One of the signal, write or read pulses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    pub center_wavelength_nm: f64,
    /// Intensity FWHM, seconds.
    pub duration: f64,
    /// Joules.
    pub energy: f64,
    /// 1/e² intensity radius, metres.
    pub waist: f64,
    pub shape: EnvelopeShape,
}

impl PulseSpec {
    pub fn gaussian(center_wavelength_nm: f64, duration: f64, energy: f64, waist: f64) -> Self {
        Self {
            center_wavelength_nm,
            duration,
            energy,
            waist,
            shape: EnvelopeShape::Gaussian,
        }
    }

    pub fn with_energy(self, energy: f64) -> Self {
        Self { energy, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::domain(format!("pulse duration {} must be positive", self.duration)));
        }
        if !(self.energy >= 0.0 && self.energy.is_finite()) {
            return Err(Error::domain(format!("pulse energy {} must be >= 0", self.energy)));
        }
        if !(self.waist > 0.0 && self.waist.is_finite()) {
            return Err(Error::domain(format!("beam waist {} must be positive", self.waist)));
        }
        if !(self.center_wavelength_nm > 0.0) {
            return Err(Error::domain("center wavelength must be positive"));
        }
        Ok(())
    }

    /// Peak on-axis intensity, W/m².
    pub fn peak_intensity(&self) -> f64 {
        let area = PI * self.waist * self.waist / 2.0;
        self.energy / (area * self.shape.area_factor() * self.duration)
    }

    /// Intensity at local time `tau` for a pulse centred at `center`.
    pub fn intensity(&self, tau: f64, center: f64) -> f64 {
        self.peak_intensity() * self.shape.profile((tau - center) / self.duration)
    }

    /// Instantaneous power for a pulse centred at `center`, W.
    pub fn power(&self, tau: f64, center: f64) -> f64 {
        self.energy / (self.shape.area_factor() * self.duration)
            * self.shape.profile((tau - center) / self.duration)
    }

    /// Rayleigh range for this waist and wavelength, metres.
    pub fn rayleigh_range(&self) -> f64 {
        PI * self.waist * self.waist / (self.center_wavelength_nm * 1e-9)
    }
}

/// Two-term Dicke-narrowing model of the coherence decay rate,
/// Γ(p) = c_diff/p + c_coll·p.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DephasingModel {
    /// bar/s.
    pub c_diff: f64,
    /// 1/(s·bar).
    pub c_coll: f64,
}

impl DephasingModel {
    /// Model with its minimum decay rate `gamma_min` at pressure `p_star`.
    pub fn from_minimum(p_star: f64, gamma_min: f64) -> Self {
        Self {
            c_diff: gamma_min * p_star / 2.0,
            c_coll: gamma_min / (2.0 * p_star),
        }
    }

    /// Pressure of minimum Γ, √(c_diff/c_coll).
    pub fn optimal_pressure(&self) -> f64 {
        (self.c_diff / self.c_coll).sqrt()
    }

    pub fn gamma(&self, p: f64) -> Result<f64> {
        gamma_of_pressure(p, self)
    }
}

impl Default for DephasingModel {
    /// Lifetime-maximizing pressure 3 bar, amplitude 1/e time 1 ns there.
    fn default() -> Self {
        Self::from_minimum(3.0, 1.0e9)
    }
}

pub fn gamma_of_pressure(p: f64, model: &DephasingModel) -> Result<f64> {
    if !(p > 0.0) || !p.is_finite() {
        return Err(Error::domain(format!("pressure {p} bar must be positive")));
    }
    Ok(model.c_diff / p + model.c_coll * p)
}

/// Pressure-independent description of the gas and its Raman response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediumModel {
    pub temperature_k: f64,
    pub dephasing: DephasingModel,
    /// g·Γ per molecule, m⁴/J. The product g·Γ is linear in density.
    pub gain_rate_per_density: f64,
    /// Replaces Γ(p) everywhere when set (the gain product g·Γ is kept).
    pub gamma_override: Option<f64>,
    pub constants: SpectroscopicConstants,
    pub j_max: u32,
    /// Restricts the populated rotational levels (populations elsewhere
    /// are zeroed, not renormalized).
    pub populated_levels: Option<Vec<u32>>,
}

impl MediumModel {
    pub fn hydrogen(gain_rate_per_density: f64) -> Self {
        Self {
            temperature_k: 295.0,
            dephasing: DephasingModel::default(),
            gain_rate_per_density,
            gamma_override: None,
            constants: SpectroscopicConstants::hydrogen(),
            j_max: DEFAULT_J_MAX,
            populated_levels: None,
        }
    }
}

/// Gas state at one pressure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MediumState {
    pub pressure_bar: f64,
    pub temperature_k: f64,
    /// m⁻³.
    pub number_density: f64,
    /// Steady-state Raman gain coefficient, m/W. Infinite when Γ = 0.
    pub g: f64,
    /// Coherence amplitude decay rate, s⁻¹.
    pub gamma: f64,
    /// Effective interaction length, m.
    pub length: f64,
    pub populations: PopulationTable,
    /// Post-write channel template used for storage-time evolution.
    pub ensemble: CoherenceEnsemble,
    gain_rate: f64,
}

impl MediumState {
    pub fn new(pressure_bar: f64, length: f64, model: &MediumModel) -> Result<Self> {
        if !(pressure_bar > 0.0) {
            return Err(Error::domain(format!("pressure {pressure_bar} bar must be positive")));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::domain(format!("interaction length {length} m must be positive")));
        }
        if !(model.gain_rate_per_density >= 0.0) {
            return Err(Error::domain("gain rate per density must be >= 0"));
        }
        let number_density = number_density(pressure_bar, model.temperature_k);
        let gamma = match model.gamma_override {
            Some(g) if g >= 0.0 => g,
            Some(g) => return Err(Error::domain(format!("decay rate override {g} must be >= 0"))),
            None => gamma_of_pressure(pressure_bar, &model.dephasing)?,
        };
        let gain_rate = model.gain_rate_per_density * number_density;
        let mut populations = boltzmann_populations(&model.constants, model.temperature_k, model.j_max)?;
        if let Some(levels) = &model.populated_levels {
            populations = populations.restricted_to(levels);
        }
        let ensemble = init_ensemble(&populations, &model.constants, gamma)?;
        Ok(Self {
            pressure_bar,
            temperature_k: model.temperature_k,
            number_density,
            g: gain_rate / gamma,
            gamma,
            length,
            populations,
            ensemble,
            gain_rate,
        })
    }

    /// g·Γ, 1/(s·W/m).
    pub fn gain_rate(&self) -> f64 {
        self.gain_rate
    }
}

/// G = g·I_w·z·Γ·τ_w and its factors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingParameter {
    pub value: f64,
    pub g: f64,
    pub intensity: f64,
    pub length: f64,
    pub gamma: f64,
    pub duration: f64,
}

pub fn coupling_parameter(medium: &MediumState, write: &PulseSpec) -> CouplingParameter {
    let intensity = write.peak_intensity();
    let value = if medium.gamma > 0.0 {
        medium.g * intensity * medium.length * medium.gamma * write.duration
    } else {
        medium.gain_rate * intensity * medium.length * write.duration
    };
    CouplingParameter {
        value,
        g: medium.g,
        intensity,
        length: medium.length,
        gamma: medium.gamma,
        duration: write.duration,
    }
}

/// Rectangular (z, τ) discretization. The local-time window is centred on
/// the control pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nz: usize,
    pub nt: usize,
    /// Full local-time window, seconds.
    pub window: f64,
}

impl GridSpec {
    pub fn dt(&self) -> f64 {
        self.window / self.nt as f64
    }

    /// Time at the centre of τ-cell `j`.
    pub fn tau(&self, j: usize) -> f64 {
        -0.5 * self.window + (j as f64 + 0.5) * self.dt()
    }

    pub fn taus(&self) -> Vec<f64> {
        (0..self.nt).map(|j| self.tau(j)).collect()
    }

    /// Halves dz and dτ over the same window.
    pub fn refined(&self) -> Self {
        Self {
            nz: self.nz * 2,
            nt: self.nt * 2,
            window: self.window,
        }
    }

    /// Checks that the grid resolves every pulse (≥ 16 samples per FWHM),
    /// contains it (window ≥ 6 FWHM plus twice its offset), and has ≥ 64
    /// z cells.
    pub fn check(&self, pulses: &[(&PulseSpec, f64)]) -> Result<()> {
        if self.nz < MIN_NZ {
            return Err(Error::Grid(format!("nz = {} < {MIN_NZ}", self.nz)));
        }
        if self.nt == 0 || !(self.window > 0.0) {
            return Err(Error::Grid("empty local-time window".into()));
        }
        for (pulse, offset) in pulses {
            let per_fwhm = pulse.duration / self.dt();
            if per_fwhm < MIN_POINTS_PER_FWHM {
                return Err(Error::Grid(format!(
                    "{per_fwhm:.1} samples per {:.1} fs FWHM (need {MIN_POINTS_PER_FWHM}); dt = {:.3} fs",
                    pulse.duration * 1e15,
                    self.dt() * 1e15
                )));
            }
            let needed = MIN_WINDOW_FWHM * pulse.duration + 2.0 * offset.abs();
            if self.window < needed {
                return Err(Error::Grid(format!(
                    "window {:.1} fs does not contain a {:.1} fs pulse at offset {:.1} fs (need {:.1} fs)",
                    self.window * 1e15,
                    pulse.duration * 1e15,
                    offset * 1e15,
                    needed * 1e15
                )));
            }
        }
        Ok(())
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            nz: 128,
            nt: 1024,
            window: 1.0e-12,
        }
    }
}

/// Complex envelope on the τ-cell centres of a grid, ∫|a|²dτ in joules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub dt: f64,
    /// Time of the first sample.
    pub t_first: f64,
    pub samples: Vec<Complex64>,
}

impl Envelope {
    /// Transform-limited pulse centred at `center` on `grid`.
    pub fn from_pulse(pulse: &PulseSpec, center: f64, grid: &GridSpec) -> Self {
        let samples = grid
            .taus()
            .into_iter()
            .map(|tau| Complex64::new(pulse.power(tau, center).sqrt(), 0.0))
            .collect();
        Self {
            dt: grid.dt(),
            t_first: grid.tau(0),
            samples,
        }
    }

    pub fn zeros(grid: &GridSpec) -> Self {
        Self {
            dt: grid.dt(),
            t_first: grid.tau(0),
            samples: vec![Complex64::new(0.0, 0.0); grid.nt],
        }
    }

    pub fn energy(&self) -> f64 {
        self.dt * self.samples.iter().map(|a| a.norm_sqr()).sum::<f64>()
    }

    pub fn scaled(&self, s: Complex64) -> Self {
        Self {
            samples: self.samples.iter().map(|a| a * s).collect(),
            ..self.clone()
        }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.samples.len()).map(move |j| self.t_first + j as f64 * self.dt)
    }

    fn matches(&self, grid: &GridSpec) -> Result<()> {
        if self.samples.len() != grid.nt || (self.dt - grid.dt()).abs() > 1e-9 * grid.dt() {
            return Err(Error::Grid(format!(
                "envelope with {} samples at dt = {} s does not match grid nt = {}, dt = {} s",
                self.samples.len(),
                self.dt,
                grid.nt,
                grid.dt()
            )));
        }
        Ok(())
    }

    /// Writes `tau_fs,re,im`.
    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        use crate::coherence::{csv_err, csv_writer};
        let mut w = csv_writer(path)?;
        w.write_record(["tau_fs", "re", "im"]).map_err(|e| csv_err(path, e))?;
        for (t, a) in self.times().zip(&self.samples) {
            w.write_record([format!("{}", t * 1e15), format!("{}", a.re), format!("{}", a.im)])
                .map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Write,
    Read,
}

impl Stage {
    fn name(self) -> &'static str {
        match self {
            Stage::Write => "write",
            Stage::Read => "read",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageResult {
    pub stage: Stage,
    /// Transmitted (write) or emitted (read) signal.
    pub signal_out: Envelope,
    /// B on the z-cell centres after the control pulse; Σ dz|B|² in joules.
    pub coherence_field: Vec<Complex64>,
    pub dz: f64,
    /// η_w for a write stage, η_r for a read stage.
    pub efficiency: f64,
    /// Signal energy entering the medium (write) or 0 (read).
    pub input_energy: f64,
    pub output_energy: f64,
    /// Stored excitation: after the write, or handed to the read.
    pub stored_energy: f64,
    pub grid: GridSpec,
}

impl StageResult {
    pub fn coherence_energy(&self) -> f64 {
        self.dz * self.coherence_field.iter().map(|b| b.norm_sqr()).sum::<f64>()
    }
}

/// Marches the box scheme across the grid. `sign` is −1 for storage and +1
/// for retrieval. Returns the field at z = L and B at the end of the window.
fn march(
    stage: Stage,
    coupling: &[f64],
    a_in: &[Complex64],
    b_in: &[Complex64],
    gamma: f64,
    dz: f64,
    dt: f64,
) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    let sign = match stage {
        Stage::Write => -1.0,
        Stage::Read => 1.0,
    };
    let r = gamma * dt / 2.0;
    let cells: Vec<(f64, f64, f64)> = coupling
        .iter()
        .map(|&c| {
            let p = sign * c * dz / 2.0;
            let q = sign * c * dt / 2.0;
            (p, q, 1.0 + r + p * q)
        })
        .collect();
    let mut a = a_in.to_vec();
    let mut b_out = Vec::with_capacity(b_in.len());
    let nz = b_in.len();
    let nt = a.len();
    for (i, &b0) in b_in.iter().enumerate() {
        let mut b = b0;
        for (a_j, &(p, q, denom)) in a.iter_mut().zip(&cells) {
            let b_next = (b * (2.0 - denom) - *a_j * (2.0 * q)) / denom;
            *a_j += (b + b_next) * p;
            b = b_next;
        }
        if !b.re.is_finite() || !b.im.is_finite() || a.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
            let t_index = a.iter().position(|x| !x.re.is_finite() || !x.im.is_finite()).unwrap_or(nt - 1);
            return Err(Error::NonFinite {
                stage: stage.name(),
                z_index: i,
                t_index,
                nz,
                nt,
            });
        }
        b_out.push(b);
    }
    Ok((a, b_out))
}

fn coupling_profile(control: &PulseSpec, medium: &MediumState, grid: &GridSpec) -> Vec<f64> {
    grid.taus()
        .into_iter()
        .map(|tau| (medium.gain_rate * control.intensity(tau, 0.0) / 2.0).sqrt())
        .collect()
}

/// Raman storage of `signal_in` by the `write` pulse (centred at τ = 0).
pub fn write_stage(
    signal_in: &Envelope,
    write: &PulseSpec,
    medium: &MediumState,
    grid: &GridSpec,
) -> Result<StageResult> {
    write.validate()?;
    grid.check(&[(write, 0.0)])?;
    signal_in.matches(grid)?;
    let dz = medium.length / grid.nz as f64;
    let coupling = coupling_profile(write, medium, grid);
    let b0 = vec![Complex64::new(0.0, 0.0); grid.nz];
    let (a_out, b_out) = march(Stage::Write, &coupling, &signal_in.samples, &b0, medium.gamma, dz, grid.dt())?;
    let signal_out = Envelope {
        samples: a_out,
        ..signal_in.clone()
    };
    let input_energy = signal_in.energy();
    let output_energy = signal_out.energy();
    let mut result = StageResult {
        stage: Stage::Write,
        signal_out,
        coherence_field: b_out,
        dz,
        efficiency: 0.0,
        input_energy,
        output_energy,
        stored_energy: 0.0,
        grid: *grid,
    };
    result.stored_energy = result.coherence_energy();
    if input_energy > 0.0 {
        result.efficiency = (1.0 - output_energy / input_energy).clamp(0.0, 1.0);
    }
    Ok(result)
}

/// Retrieval of a stored coherence by the `read` pulse after
/// `storage_time`. The multi-J rephasing and collisional decay over the
/// storage interval come from the medium's coherence ensemble.
pub fn read_stage(
    coherence_in: &[Complex64],
    read: &PulseSpec,
    medium: &MediumState,
    storage_time: f64,
    grid: &GridSpec,
) -> Result<StageResult> {
    read.validate()?;
    grid.check(&[(read, 0.0)])?;
    if coherence_in.len() != grid.nz {
        return Err(Error::Grid(format!(
            "coherence has {} z cells, grid has {}",
            coherence_in.len(),
            grid.nz
        )));
    }
    if !(storage_time >= 0.0) {
        return Err(Error::domain(format!("storage time {storage_time} s must be >= 0")));
    }
    let dz = medium.length / grid.nz as f64;
    let stored_energy = dz * coherence_in.iter().map(|b| b.norm_sqr()).sum::<f64>();
    let factor = medium.ensemble.storage_factor(storage_time)?;
    let b_read: Vec<Complex64> = coherence_in.iter().map(|b| b * factor).collect();
    let coupling = coupling_profile(read, medium, grid);
    let a0 = Envelope::zeros(grid);
    let (a_out, b_out) = march(Stage::Read, &coupling, &a0.samples, &b_read, medium.gamma, dz, grid.dt())?;
    let signal_out = Envelope { samples: a_out, ..a0 };
    let output_energy = signal_out.energy();
    let efficiency = if stored_energy > 0.0 {
        (output_energy / stored_energy).clamp(0.0, 1.0)
    } else {
        0.0
    };
    Ok(StageResult {
        stage: Stage::Read,
        signal_out,
        coherence_field: b_out,
        dz,
        efficiency,
        input_energy: 0.0,
        output_energy,
        stored_energy,
        grid: *grid,
    })
}

/// η_tot = η_w·η_r for a write/read pair on the same grid.
pub fn total_efficiency(write_result: &StageResult, read_result: &StageResult) -> Result<f64> {
    if write_result.stage != Stage::Write || read_result.stage != Stage::Read {
        return Err(Error::domain("total efficiency needs a write result and a read result"));
    }
    if write_result.grid.nz != read_result.grid.nz {
        return Err(Error::domain("write and read stages use different z grids"));
    }
    Ok(write_result.efficiency * read_result.efficiency)
}

/// Everything needed to simulate one write/read cycle apart from pressure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanProtocol {
    pub model: MediumModel,
    pub signal: PulseSpec,
    pub write: PulseSpec,
    pub read: PulseSpec,
    /// Arrival of the signal relative to the write pulse, seconds.
    pub signal_delay: f64,
    /// Read delay after storage, seconds.
    pub storage_time: f64,
    /// Mode-matched fraction of the input signal; scales η_w only.
    pub alpha: f64,
    pub grid: GridSpec,
    /// Overrides the default length of two Rayleigh ranges of the write beam.
    pub interaction_length: Option<f64>,
}

impl ScanProtocol {
    pub fn length(&self) -> f64 {
        self.interaction_length
            .unwrap_or_else(|| 2.0 * self.write.rayleigh_range())
    }

    pub fn medium(&self, pressure_bar: f64) -> Result<MediumState> {
        MediumState::new(pressure_bar, self.length(), &self.model)
    }

    pub fn signal_envelope(&self) -> Envelope {
        Envelope::from_pulse(&self.signal, self.signal_delay, &self.grid)
    }

    fn check(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::domain(format!("mode-match fraction {} outside [0, 1]", self.alpha)));
        }
        self.signal.validate()?;
        self.grid.check(&[
            (&self.signal, self.signal_delay),
            (&self.write, 0.0),
            (&self.read, 0.0),
        ])
    }

    /// One full write, storage and read cycle.
    pub fn run_cycle(&self, pressure_bar: f64) -> Result<Cycle> {
        self.check()?;
        let medium = self.medium(pressure_bar)?;
        let signal = self.signal_envelope();
        let write = write_stage(&signal, &self.write, &medium, &self.grid)?;
        let read = read_stage(&write.coherence_field, &self.read, &medium, self.storage_time, &self.grid)?;
        let coupling = coupling_parameter(&medium, &self.write);
        Ok(Cycle {
            medium,
            coupling,
            write,
            read,
            alpha: self.alpha,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Cycle {
    pub medium: MediumState,
    pub coupling: CouplingParameter,
    pub write: StageResult,
    pub read: StageResult,
    pub alpha: f64,
}

impl Cycle {
    /// Write efficiency including the mode-match fraction.
    pub fn eta_w(&self) -> f64 {
        self.alpha * self.write.efficiency
    }

    pub fn eta_r(&self) -> f64 {
        self.read.efficiency
    }

    pub fn eta_tot(&self) -> f64 {
        self.eta_w() * self.eta_r()
    }
}

/// Efficiencies at one pressure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PressurePoint {
    pub pressure_bar: f64,
    /// α·η_w(mode-matched).
    pub eta_w: f64,
    pub eta_w_matched: f64,
    pub eta_r: f64,
    pub eta_tot: f64,
    pub coupling: f64,
    pub error: Option<String>,
}

impl PressurePoint {
    fn failed(pressure_bar: f64, error: &Error) -> Self {
        Self {
            pressure_bar,
            eta_w: f64::NAN,
            eta_w_matched: f64::NAN,
            eta_r: f64::NAN,
            eta_tot: f64::NAN,
            coupling: f64::NAN,
            error: Some(error.to_string()),
        }
    }
}

pub const PRESSURE_RANGE_BAR: (f64, f64) = (0.5, 20.0);

/// Write and read efficiencies over a list of pressures. Points run in
/// parallel on the current rayon pool; output order follows the input.
/// A failing point is recorded with its error and the scan continues.
pub fn pressure_scan(pressures: &[f64], protocol: &ScanProtocol) -> Result<Vec<PressurePoint>> {
    let (lo, hi) = PRESSURE_RANGE_BAR;
    if let Some(p) = pressures.iter().find(|p| !(**p >= lo && **p <= hi)) {
        return Err(Error::domain(format!("pressure {p} bar outside [{lo}, {hi}]")));
    }
    protocol.check()?;
    Ok(pressures
        .par_iter()
        .map(|&p| match protocol.run_cycle(p) {
            Ok(cycle) => PressurePoint {
                pressure_bar: p,
                eta_w: cycle.eta_w(),
                eta_w_matched: cycle.write.efficiency,
                eta_r: cycle.eta_r(),
                eta_tot: cycle.eta_tot(),
                coupling: cycle.coupling.value,
                error: None,
            },
            Err(e) => PressurePoint::failed(p, &e),
        })
        .collect())
}

/// Write efficiency (mode-matched) as a function of the signal's arrival
/// time relative to the write pulse.
pub fn write_delay_scan(protocol: &ScanProtocol, pressure_bar: f64, delays: &[f64]) -> Result<DelayScan> {
    let medium = protocol.medium(pressure_bar)?;
    let values = delays
        .par_iter()
        .map(|&d| {
            protocol.grid.check(&[(&protocol.signal, d)])?;
            let signal = Envelope::from_pulse(&protocol.signal, d, &protocol.grid);
            Ok(write_stage(&signal, &protocol.write, &medium, &protocol.grid)?.efficiency)
        })
        .collect::<Result<Vec<_>>>()?;
    DelayScan::new(delays.to_vec(), values, ScanKind::WriteEfficiency)
}

/// Signal delay maximizing Raman absorption at `pressure_bar`, searched by
/// golden section within ±half a write-pulse duration.
pub fn optimize_signal_delay(protocol: &ScanProtocol, pressure_bar: f64) -> Result<f64> {
    let medium = protocol.medium(pressure_bar)?;
    let eta = |d: f64| -> Result<f64> {
        let signal = Envelope::from_pulse(&protocol.signal, d, &protocol.grid);
        Ok(write_stage(&signal, &protocol.write, &medium, &protocol.grid)?.efficiency)
    };
    let half = 0.5 * protocol.write.duration;
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (-half, half);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (eta(c)?, eta(d)?);
    while (b - a) > 1e-4 * protocol.write.duration {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = eta(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = eta(d)?;
        }
    }
    Ok(0.5 * (a + b))
}
