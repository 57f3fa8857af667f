//! Free evolution of the multi-J vibrational coherence between write and
//! read, read-delay scans with rephasing and collisional decay, and their
//! beat spectrum.
//!
//! Conventions: coherence amplitudes decay at Γ, so efficiencies (which are
//! quadratic in amplitude) decay at 2Γ. Each Q₀₁(J) channel rotates at its
//! own angular frequency 2πc·Q₀₁(J); the retrieved field is the equal-weight
//! sum over channels.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectroscopy::{q_branch_frequency, PopulationTable, SpectroscopicConstants, MAX_Q_BRANCH_J};
use crate::units::{hz_to_wavenumber, wavenumber_to_angular};

/// Longest delay accepted by [`retrieval_envelope`], seconds.
pub const MAX_SCAN_DELAY: f64 = 2e-9;

/// One Q₀₁(J) coherence channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub j: u32,
    /// Amplitude at the ensemble's creation epoch.
    pub amplitude: Complex64,
    /// rad/s.
    pub angular_frequency: f64,
}

/// Per-J coherence amplitudes sharing one decay rate.
///
/// The ensemble keeps its creation-time amplitudes and the elapsed time;
/// amplitudes at the current epoch are evaluated in closed form, so
/// successive evolutions compose without accumulating rounding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceEnsemble {
    channels: Vec<Channel>,
    gamma: f64,
    created: f64,
    elapsed: f64,
}

impl CoherenceEnsemble {
    pub fn new(channels: Vec<Channel>, gamma: f64, t0: f64) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::domain("coherence ensemble needs at least one channel"));
        }
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(Error::domain(format!("decay rate {gamma} must be finite and >= 0")));
        }
        Ok(Self {
            channels,
            gamma,
            created: t0,
            elapsed: 0.0,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Current epoch.
    pub fn t0(&self) -> f64 {
        self.created + self.elapsed
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn levels(&self) -> Vec<u32> {
        self.channels.iter().map(|c| c.j).collect()
    }

    /// Same channels with a different decay rate; the epoch is kept.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        let mut e = Self::new(self.channels.clone(), gamma, self.created)?;
        e.elapsed = self.elapsed;
        Ok(e)
    }

    /// Applies a uniform phase e^{iφ} to every channel.
    pub fn with_phase(&self, phi: f64) -> Self {
        let rot = Complex64::from_polar(1.0, phi);
        let mut e = self.clone();
        e.channels.iter_mut().for_each(|c| c.amplitude *= rot);
        e
    }

    fn propagator(&self, channel: &Channel, dt: f64) -> Complex64 {
        Complex64::from_polar((-self.gamma * dt).exp(), -channel.angular_frequency * dt)
    }

    /// (J, amplitude) at the current epoch.
    pub fn amplitudes(&self) -> Vec<(u32, Complex64)> {
        self.channels
            .iter()
            .map(|c| (c.j, c.amplitude * self.propagator(c, self.elapsed)))
            .collect()
    }

    pub fn amplitude(&self, j: u32) -> Option<Complex64> {
        self.channels
            .iter()
            .find(|c| c.j == j)
            .map(|c| c.amplitude * self.propagator(c, self.elapsed))
    }

    /// Σ_J |amplitude(J)|².
    pub fn total_excitation(&self) -> f64 {
        self.amplitudes().iter().map(|(_, a)| a.norm_sqr()).sum()
    }

    /// Equal-weight sum of the channel amplitudes: the field a read pulse
    /// scatters from.
    pub fn collective_amplitude(&self) -> Complex64 {
        self.amplitudes().iter().map(|(_, a)| a).sum()
    }

    /// Evolves to absolute time `t`.
    pub fn evolve(&self, t: f64) -> Result<Self> {
        let now = self.t0();
        if t < now {
            return Err(Error::domain(format!(
                "cannot evolve backwards from t0 = {now} s to {t} s"
            )));
        }
        Ok(Self {
            elapsed: t - self.created,
            ..self.clone()
        })
    }

    /// Evolves forward by a duration `dt` ≥ 0.
    pub fn evolve_by(&self, dt: f64) -> Result<Self> {
        if !(dt >= 0.0) {
            return Err(Error::domain(format!("evolution interval {dt} s must be >= 0")));
        }
        Ok(Self {
            elapsed: self.elapsed + dt,
            ..self.clone()
        })
    }

    /// Collective amplitude after a storage interval relative to the
    /// collective amplitude now. Includes the e^{-Γt} decay.
    pub fn storage_factor(&self, storage_time: f64) -> Result<Complex64> {
        let now = self.collective_amplitude();
        if now.norm() == 0.0 {
            return Err(Error::domain("ensemble has zero collective amplitude"));
        }
        Ok(self.evolve_by(storage_time)?.collective_amplitude() / now)
    }
}

/// Builds the post-write ensemble: amplitude(J) proportional to the
/// population of J, zero relative phase, frequencies 2πc·Q₀₁(J).
///
/// Channels are created for J ≤ 5; higher levels hold < 10⁻⁴ of the
/// population at room temperature.
pub fn init_ensemble(
    populations: &PopulationTable,
    constants: &SpectroscopicConstants,
    gamma: f64,
) -> Result<CoherenceEnsemble> {
    let mut channels = Vec::new();
    for (j, &fraction) in populations.fractions.iter().enumerate() {
        let j = j as u32;
        if j > MAX_Q_BRANCH_J || fraction <= 0.0 {
            continue;
        }
        channels.push(Channel {
            j,
            amplitude: Complex64::new(fraction, 0.0),
            angular_frequency: wavenumber_to_angular(q_branch_frequency(constants, j)?),
        });
    }
    if channels.is_empty() {
        return Err(Error::domain("population table has no populated levels"));
    }
    CoherenceEnsemble::new(channels, gamma, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanKind {
    ReadEfficiency,
    WriteEfficiency,
}

/// Efficiency sampled on a uniform delay grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayScan {
    delays: Vec<f64>,
    values: Vec<f64>,
    kind: ScanKind,
}

const EFFICIENCY_SLACK: f64 = 1e-9;

impl DelayScan {
    /// Validates a scan: at least two points, strictly increasing uniform
    /// delays, finite values in [0, 1].
    pub fn new(delays: Vec<f64>, values: Vec<f64>, kind: ScanKind) -> Result<Self> {
        if delays.len() != values.len() {
            return Err(Error::domain("delay and value arrays differ in length"));
        }
        if delays.len() < 2 {
            return Err(Error::domain("a scan needs at least two points"));
        }
        let step = delays[1] - delays[0];
        if !(step > 0.0) {
            return Err(Error::domain("delays must be strictly increasing"));
        }
        for (i, w) in delays.windows(2).enumerate() {
            let d = w[1] - w[0];
            if !(d > 0.0) || (d - step).abs() > 1e-6 * step {
                return Err(Error::domain(format!(
                    "non-uniform delay grid at index {}: step {d} vs {step}",
                    i + 1
                )));
            }
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < -EFFICIENCY_SLACK || **v > 1.0 + EFFICIENCY_SLACK)
        {
            return Err(Error::domain(format!("efficiency {v} at index {i} outside [0, 1]")));
        }
        Ok(Self { delays, values, kind })
    }

    /// Uniform grid `start, start + step, ...` with `n` points.
    pub fn uniform_grid(start: f64, stop: f64, n: usize) -> Vec<f64> {
        let step = (stop - start) / (n.max(2) - 1) as f64;
        (0..n).map(|i| start + step * i as f64).collect()
    }

    pub fn delays(&self) -> &[f64] {
        &self.delays
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> ScanKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.delays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delays.is_empty()
    }

    pub fn step(&self) -> f64 {
        self.delays[1] - self.delays[0]
    }

    pub fn span(&self) -> f64 {
        self.delays[self.delays.len() - 1] - self.delays[0]
    }

    /// Writes `delay_ps,efficiency`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv_writer(path)?;
        w.write_record(["delay_ps", "efficiency"]).map_err(|e| csv_err(path, e))?;
        for (t, v) in self.delays.iter().zip(&self.values) {
            w.write_record([format!("{}", t * 1e12), format!("{v}")])
                .map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn read_csv(path: &Path, kind: ScanKind) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
        let mut delays = Vec::new();
        let mut values = Vec::new();
        for (row, rec) in reader.deserialize::<(f64, f64)>().enumerate() {
            let (t, v) = rec.map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                message: format!("row {}: {e}", row + 1),
            })?;
            delays.push(t * 1e-12);
            values.push(v);
        }
        Self::new(delays, values, kind)
    }
}

pub(crate) fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| csv_err(path, e))
}

pub(crate) fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Read-efficiency scan over storage delays measured from the ensemble's
/// current epoch:
///
/// value(t) = η_r(0) · |Σ_J a_J e^{-iω_J t}|² / |Σ_J a_J|² · e^{-2Γt}.
pub fn retrieval_envelope(ensemble: &CoherenceEnsemble, delays: &[f64], eta_r0: f64) -> Result<DelayScan> {
    if let Some(t) = delays.iter().find(|t| !(**t >= 0.0 && **t <= MAX_SCAN_DELAY)) {
        return Err(Error::domain(format!("delay {t} s outside [0, 2 ns]")));
    }
    if !(0.0..=1.0).contains(&eta_r0) {
        return Err(Error::domain(format!("zero-delay read efficiency {eta_r0} outside [0, 1]")));
    }
    let reference = ensemble.collective_amplitude().norm_sqr();
    if reference == 0.0 {
        return Err(Error::domain("ensemble has zero collective amplitude"));
    }
    let values = delays
        .iter()
        .map(|&t| {
            let c = ensemble.evolve_by(t)?.collective_amplitude();
            Ok(eta_r0 * c.norm_sqr() / reference)
        })
        .collect::<Result<Vec<_>>>()?;
    DelayScan::new(delays.to_vec(), values, ScanKind::ReadEfficiency)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    Rectangular,
    /// Raised cosine (Hann).
    Hann,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumOptions {
    pub window: Window,
    /// Peaks must exceed this fraction of the maximum power.
    pub prominence: f64,
    /// Zero-padding factor applied on top of the next power of two.
    pub zero_pad: usize,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        Self {
            window: Window::Hann,
            prominence: 0.01,
            zero_pad: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    /// cm⁻¹.
    pub wavenumber: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSpectrum {
    /// cm⁻¹, from zero up to the Nyquist frequency.
    pub frequencies: Vec<f64>,
    pub power: Vec<f64>,
    pub peaks: Vec<Peak>,
}

impl PowerSpectrum {
    /// Writes `wavenumber_cm1,power`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv_writer(path)?;
        w.write_record(["wavenumber_cm1", "power"]).map_err(|e| csv_err(path, e))?;
        for (f, p) in self.frequencies.iter().zip(&self.power) {
            w.write_record([format!("{f}"), format!("{p}")])
                .map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    /// The detected peak closest to `wavenumber`.
    pub fn nearest_peak(&self, wavenumber: f64) -> Option<Peak> {
        self.peaks
            .iter()
            .copied()
            .min_by(|a, b| (a.wavenumber - wavenumber).abs().total_cmp(&(b.wavenumber - wavenumber).abs()))
    }
}

/// Minimum scan length for spectral analysis.
pub const MIN_SPECTRUM_POINTS: usize = 256;
/// Minimum scan span for spectral analysis, seconds.
pub const MIN_SPECTRUM_SPAN: f64 = 20e-12;

/// Power spectrum |F(ν)|² of the mean-subtracted, windowed scan.
pub fn power_spectrum(scan: &DelayScan, options: &SpectrumOptions) -> Result<PowerSpectrum> {
    let n = scan.len();
    if n < MIN_SPECTRUM_POINTS {
        return Err(Error::domain(format!(
            "power spectrum needs >= {MIN_SPECTRUM_POINTS} points, scan has {n}"
        )));
    }
    if scan.span() < MIN_SPECTRUM_SPAN * (1.0 - 1e-9) {
        return Err(Error::domain(format!(
            "power spectrum needs a span >= 20 ps, scan spans {} ps",
            scan.span() * 1e12
        )));
    }
    if !(0.0..1.0).contains(&options.prominence) || options.zero_pad == 0 {
        return Err(Error::domain("invalid spectrum options"));
    }

    let mean = scan.values().iter().sum::<f64>() / n as f64;
    let scale = scan.values().iter().fold(mean.abs(), |m, v| m.max(v.abs()));
    let deviation = scan.values().iter().fold(0.0f64, |m, v| m.max((v - mean).abs()));
    let constant = deviation <= 1e-12 * scale.max(f64::MIN_POSITIVE);

    let nfft = n.next_power_of_two() * options.zero_pad;
    let mut buffer = vec![Complex64::new(0.0, 0.0); nfft];
    if !constant {
        for (k, v) in scan.values().iter().enumerate() {
            let w = match options.window {
                Window::Rectangular => 1.0,
                Window::Hann => 0.5 * (1.0 - (2.0 * PI * k as f64 / (n - 1) as f64).cos()),
            };
            buffer[k] = Complex64::new((v - mean) * w, 0.0);
        }
        FftPlanner::new().plan_fft_forward(nfft).process(&mut buffer);
    }

    let half = nfft / 2;
    let df = 1.0 / (nfft as f64 * scan.step());
    let frequencies: Vec<f64> = (0..=half).map(|k| hz_to_wavenumber(k as f64 * df)).collect();
    let power: Vec<f64> = buffer[..=half].iter().map(|c| c.norm_sqr()).collect();

    // Skip the main lobe of the residual DC/trend component.
    let guard = match options.window {
        Window::Rectangular => 1,
        Window::Hann => 2,
    } * nfft
        / n;
    let peaks = detect_peaks(&power, guard.max(1), options.prominence)
        .into_iter()
        .map(|(k, height)| Peak {
            wavenumber: hz_to_wavenumber(k * df),
            height,
        })
        .collect();
    Ok(PowerSpectrum {
        frequencies,
        power,
        peaks,
    })
}

/// Local maxima at index ≥ `guard` exceeding `fraction` of the largest power
/// in that range. Positions are refined by a three-point parabola and
/// returned as fractional bin indices.
fn detect_peaks(power: &[f64], guard: usize, fraction: f64) -> Vec<(f64, f64)> {
    if power.len() < guard + 3 {
        return Vec::new();
    }
    let max = power[guard..].iter().cloned().fold(0.0, f64::max);
    if max <= 0.0 {
        return Vec::new();
    }
    let threshold = fraction * max;
    let mut peaks = Vec::new();
    for k in guard.max(1)..power.len() - 1 {
        let (l, c, r) = (power[k - 1], power[k], power[k + 1]);
        if c > l && c >= r && c > threshold {
            let denom = l - 2.0 * c + r;
            let shift = if denom < 0.0 { 0.5 * (l - r) / denom } else { 0.0 };
            let height = c - 0.25 * (l - r) * shift;
            peaks.push((k as f64 + shift, height));
        }
    }
    peaks
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RephasingMaxima {
    /// Seconds, ascending.
    pub times: Vec<f64>,
    /// False when fewer maxima than requested were found.
    pub complete: bool,
}

/// The `count` largest local maxima of the scan, ascending in time.
/// Endpoints count when they exceed their single neighbour.
pub fn find_rephasing_maxima(scan: &DelayScan, count: usize) -> Result<RephasingMaxima> {
    if scan.span() < count as f64 * 6e-12 * (1.0 - 1e-9) {
        return Err(Error::domain(format!(
            "scan spans {} ps, need >= {} ps for {count} maxima",
            scan.span() * 1e12,
            count * 6
        )));
    }
    let mut found = local_maxima(scan);
    found.sort_by(|a, b| b.1.total_cmp(&a.1));
    let complete = found.len() >= count;
    found.truncate(count);
    let mut times: Vec<f64> = found.into_iter().map(|(t, _)| t).collect();
    times.sort_by(f64::total_cmp);
    Ok(RephasingMaxima { times, complete })
}

/// All local maxima as (time, value); interior positions parabola-refined.
pub fn local_maxima(scan: &DelayScan) -> Vec<(f64, f64)> {
    let v = scan.values();
    let t = scan.delays();
    let n = v.len();
    let step = scan.step();
    let mut out = Vec::new();
    if v[0] > v[1] {
        out.push((t[0], v[0]));
    }
    for k in 1..n - 1 {
        if v[k] > v[k - 1] && v[k] >= v[k + 1] {
            let denom = v[k - 1] - 2.0 * v[k] + v[k + 1];
            let shift = if denom < 0.0 { 0.5 * (v[k - 1] - v[k + 1]) / denom } else { 0.0 };
            out.push((t[k] + shift * step, v[k]));
        }
    }
    if v[n - 1] > v[n - 2] {
        out.push((t[n - 1], v[n - 1]));
    }
    out
}

/// Strongest rephasing maximum of the collective amplitude within
/// `target ± half_window` (seconds from the ensemble's epoch). Returns the
/// time and the relative collective intensity |C(t)|²/|C(0)|² there, or
/// `None` when the window holds no interior maximum.
pub fn rephasing_maximum_near(
    ensemble: &CoherenceEnsemble,
    target: f64,
    half_window: f64,
) -> Result<Option<(f64, f64)>> {
    let start = (target - half_window).max(0.0);
    let stop = (target + half_window).min(MAX_SCAN_DELAY);
    if !(stop > start) {
        return Err(Error::domain("empty rephasing search window"));
    }
    let n = (((stop - start) / 5e-15).ceil() as usize).max(3) + 1;
    let delays = DelayScan::uniform_grid(start, stop, n);
    let scan = retrieval_envelope(ensemble, &delays, 1.0)?;
    let interior: Vec<(f64, f64)> = local_maxima(&scan)
        .into_iter()
        .filter(|(t, _)| *t > start && *t < stop)
        .collect();
    let best = interior.into_iter().max_by(|a, b| a.1.total_cmp(&b.1));
    Ok(best.map(|(t, _)| {
        let value = ensemble.storage_factor(t).map(|f| f.norm_sqr()).unwrap_or(0.0);
        (t, value)
    }))
}
