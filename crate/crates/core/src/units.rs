//! Physical constants (CODATA 2018 exact values where defined) and unit
//! conversions. Energies are carried in cm⁻¹ throughout the spectroscopy
//! code; the helpers here convert at presentation boundaries.

use std::f64::consts::PI;

/// Speed of light in cm/s.
pub const SPEED_OF_LIGHT_CM_S: f64 = 2.997_924_58e10;
/// Speed of light in m/s.
pub const SPEED_OF_LIGHT_M_S: f64 = 2.997_924_58e8;
/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Second radiation constant hc/k_B, cm·K.
pub const HC_OVER_KB_CM_K: f64 = 1.438_776_877;
/// Pascal per bar.
pub const PA_PER_BAR: f64 = 1.0e5;

/// cm⁻¹ → THz.
pub fn wavenumber_to_thz(nu_cm1: f64) -> f64 {
    nu_cm1 * SPEED_OF_LIGHT_CM_S * 1e-12
}

/// cm⁻¹ → angular frequency in rad/s.
pub fn wavenumber_to_angular(nu_cm1: f64) -> f64 {
    2.0 * PI * SPEED_OF_LIGHT_CM_S * nu_cm1
}

/// Ordinary frequency in Hz → cm⁻¹.
pub fn hz_to_wavenumber(f_hz: f64) -> f64 {
    f_hz / SPEED_OF_LIGHT_CM_S
}

/// Ideal-gas number density in m⁻³.
pub fn number_density(pressure_bar: f64, temperature_k: f64) -> f64 {
    pressure_bar * PA_PER_BAR / (BOLTZMANN * temperature_k)
}
