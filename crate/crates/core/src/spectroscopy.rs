//! Rovibrational structure of molecular hydrogen in the ground electronic
//! state: Dunham-type term values, Q-branch (Δv = 1, ΔJ = 0) transition
//! wavenumbers, thermal populations with ortho/para spin statistics, and the
//! pairwise beat frequencies between Q₀₁(J) coherences.
//!
//! All energies are in cm⁻¹.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::HC_OVER_KB_CM_K;

/// Highest vibrational level accepted by [`term_value`].
pub const MAX_V: u32 = 2;
/// Highest rotational level accepted by [`term_value`].
pub const MAX_TERM_J: u32 = 10;
/// Highest rotational level accepted by [`q_branch_frequency`].
pub const MAX_Q_BRANCH_J: u32 = 5;
/// Default rotational cutoff for population tables.
pub const DEFAULT_J_MAX: u32 = 7;

/// A vibrational transition `v → v'` at fixed rotational level `J`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LineKey {
    pub v: u32,
    pub vp: u32,
    pub j: u32,
}

/// Dunham-type constants (cm⁻¹) plus an optional table of measured lines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectroscopicConstants {
    /// Harmonic constant ω_e.
    pub we: f64,
    /// Anharmonicity ω_e x_e.
    pub wexe: f64,
    /// Rotational constant B_e.
    pub be: f64,
    /// Vibration-rotation coupling α_e.
    pub alpha_e: f64,
    /// Centrifugal distortion D_e.
    pub de: f64,
    /// Vibrational dependence of the centrifugal distortion.
    pub beta_e: f64,
    /// Measured transition wavenumbers; when present they override the
    /// Dunham value in [`q_branch_frequency`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub empirical_lines: Option<BTreeMap<LineKey, f64>>,
}

/// Measured Q₁(J) Raman lines of H₂ (cm⁻¹), J = 0..3.
///
/// External data: high-resolution stimulated/spontaneous Raman line
/// positions as tabulated in the standard H₂ Raman compilations.
pub const H2_Q1_LINES: [(u32, f64); 4] = [
    (0, 4161.169),
    (1, 4155.255),
    (2, 4143.465),
    (3, 4125.871),
];

impl SpectroscopicConstants {
    /// Effective constants for the v = 0 and v = 1 levels of H₂.
    ///
    /// External data. B_0 = 59.3392 and D_0 = 0.04599 are the published
    /// ground-level rotational constants and ω_e x_e = 121.33 is the
    /// Huber-Herzberg anharmonicity. α_e, β_e and ω_e are then fixed so the
    /// low-order expansion reproduces the measured Q₁(0..2) lines; H₂ has
    /// large higher-order Dunham terms, so the textbook equilibrium constants
    /// misplace the band origin by ~3 cm⁻¹ at this truncation.
    pub fn hydrogen() -> Self {
        let alpha_e = 2.960_166_7;
        let beta_e = -0.001_583_3;
        let wexe = 121.33;
        Self {
            we: 4161.169 + 2.0 * wexe,
            wexe,
            be: 59.3392 + 0.5 * alpha_e,
            alpha_e,
            de: 0.04599 - 0.5 * beta_e,
            beta_e,
            empirical_lines: None,
        }
    }

    /// [`Self::hydrogen`] with the measured Q₁(J) line table attached.
    pub fn hydrogen_empirical() -> Self {
        let lines = H2_Q1_LINES
            .iter()
            .map(|&(j, nu)| (LineKey { v: 0, vp: 1, j }, nu))
            .collect();
        Self {
            empirical_lines: Some(lines),
            ..Self::hydrogen()
        }
    }

    pub fn without_lines(&self) -> Self {
        Self {
            empirical_lines: None,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.we, self.wexe, self.be, self.alpha_e, self.de, self.beta_e]
            .iter()
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::domain("spectroscopic constants must be finite"));
        }
        if self.we <= 0.0 || self.be <= 0.0 {
            return Err(Error::domain("we and Be must be positive"));
        }
        if self.wexe < 0.0 || self.de < 0.0 {
            return Err(Error::domain("wexe and De must be non-negative"));
        }
        if let Some(lines) = &self.empirical_lines {
            if let Some((key, nu)) = lines.iter().find(|(_, nu)| !(**nu > 0.0)) {
                return Err(Error::domain(format!(
                    "empirical line v={} vp={} J={} has non-positive wavenumber {nu}",
                    key.v, key.vp, key.j
                )));
            }
        }
        Ok(())
    }

    /// Rotational constant B_v.
    pub fn b_v(&self, v: u32) -> f64 {
        self.be - self.alpha_e * (v as f64 + 0.5)
    }

    /// Centrifugal distortion constant D_v.
    pub fn d_v(&self, v: u32) -> f64 {
        self.de + self.beta_e * (v as f64 + 0.5)
    }

    /// Vibrational term G(v).
    pub fn vibrational_term(&self, v: u32) -> f64 {
        let x = v as f64 + 0.5;
        self.we * x - self.wexe * x * x
    }

    /// Rotational term F_v(J).
    pub fn rotational_term(&self, v: u32, j: u32) -> f64 {
        let x = (j * (j + 1)) as f64;
        self.b_v(v) * x - self.d_v(v) * x * x
    }

    /// Loads constants from a key/value text file.
    ///
    /// One `key = value` (or `key value`) pair per line; `#` starts a
    /// comment. Required keys: `we wexe Be alpha_e De beta_e`.
    pub fn from_kv_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse_kv(&text).map_err(|message| Error::Parse {
            path: path.to_path_buf(),
            message,
        })
    }

    pub fn parse_kv(text: &str) -> std::result::Result<Self, String> {
        let mut values: BTreeMap<&str, f64> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = match line.split_once('=') {
                Some((k, v)) => (k.trim(), v.trim()),
                None => {
                    let mut parts = line.split_whitespace();
                    match (parts.next(), parts.next()) {
                        (Some(k), Some(v)) => (k, v),
                        _ => return Err(format!("line {}: expected `key = value`", lineno + 1)),
                    }
                }
            };
            let parsed: f64 = value
                .parse()
                .map_err(|_| format!("line {}: cannot parse `{value}` as a number", lineno + 1))?;
            values.insert(key, parsed);
        }
        let get = |k: &str| {
            values
                .get(k)
                .copied()
                .ok_or_else(|| format!("missing key `{k}`"))
        };
        let constants = Self {
            we: get("we")?,
            wexe: get("wexe")?,
            be: get("Be")?,
            alpha_e: get("alpha_e")?,
            de: get("De")?,
            beta_e: get("beta_e")?,
            empirical_lines: None,
        };
        constants.validate().map_err(|e| e.to_string())?;
        Ok(constants)
    }

    /// Renders the constants in the key/value format read by
    /// [`Self::from_kv_file`].
    pub fn to_kv_string(&self) -> String {
        format!(
            "we = {}\nwexe = {}\nBe = {}\nalpha_e = {}\nDe = {}\nbeta_e = {}\n",
            self.we, self.wexe, self.be, self.alpha_e, self.de, self.beta_e
        )
    }
}

#[derive(Debug, Deserialize)]
struct LineRecord {
    v: u32,
    vp: u32,
    #[serde(rename = "J")]
    j: u32,
    wavenumber: f64,
}

/// Reads an empirical line table with columns `v,vp,J,wavenumber`.
pub fn read_line_table(path: &Path) -> Result<BTreeMap<LineKey, f64>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut lines = BTreeMap::new();
    for (row, record) in reader.deserialize::<LineRecord>().enumerate() {
        let rec = record.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: format!("row {}: {e}", row + 1),
        })?;
        if !(rec.wavenumber > 0.0) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                message: format!("row {}: wavenumber must be positive", row + 1),
            });
        }
        lines.insert(
            LineKey {
                v: rec.v,
                vp: rec.vp,
                j: rec.j,
            },
            rec.wavenumber,
        );
    }
    Ok(lines)
}

/// Term value G(v) + F_v(J) in cm⁻¹.
pub fn term_value(constants: &SpectroscopicConstants, v: u32, j: u32) -> Result<f64> {
    if v > MAX_V {
        return Err(Error::domain(format!("v = {v} outside 0..={MAX_V}")));
    }
    if j > MAX_TERM_J {
        return Err(Error::domain(format!("J = {j} outside 0..={MAX_TERM_J}")));
    }
    Ok(constants.vibrational_term(v) + constants.rotational_term(v, j))
}

/// Q₀₁(J) transition wavenumber. An empirical line, when tabulated, takes
/// precedence over the Dunham value.
pub fn q_branch_frequency(constants: &SpectroscopicConstants, j: u32) -> Result<f64> {
    if j > MAX_Q_BRANCH_J {
        return Err(Error::domain(format!("J = {j} outside 0..={MAX_Q_BRANCH_J}")));
    }
    if let Some(nu) = constants
        .empirical_lines
        .as_ref()
        .and_then(|lines| lines.get(&LineKey { v: 0, vp: 1, j }))
    {
        return Ok(*nu);
    }
    Ok(term_value(constants, 1, j)? - term_value(constants, 0, j)?)
}

/// Nuclear-spin statistical weights by J parity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinWeights {
    pub even: f64,
    pub odd: f64,
}

impl SpinWeights {
    /// Ortho/para hydrogen: 3 for odd J, 1 for even J.
    pub const HYDROGEN: SpinWeights = SpinWeights { even: 1.0, odd: 3.0 };
    pub const UNIFORM: SpinWeights = SpinWeights { even: 1.0, odd: 1.0 };

    pub fn weight(&self, j: u32) -> f64 {
        if j.is_multiple_of(2) {
            self.even
        } else {
            self.odd
        }
    }
}

/// Rotational populations of the v = 0 level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationTable {
    pub temperature: f64,
    /// Occupation fraction indexed by J.
    pub fractions: Vec<f64>,
    pub spin_weights: SpinWeights,
}

impl PopulationTable {
    pub fn fraction(&self, j: u32) -> f64 {
        self.fractions.get(j as usize).copied().unwrap_or(0.0)
    }

    pub fn j_max(&self) -> u32 {
        self.fractions.len().saturating_sub(1) as u32
    }

    pub fn odd_sum(&self) -> f64 {
        self.fractions.iter().skip(1).step_by(2).sum()
    }

    pub fn even_sum(&self) -> f64 {
        self.fractions.iter().step_by(2).sum()
    }

    /// A table with all population in a single J.
    pub fn single(j: u32, temperature: f64) -> Self {
        let mut fractions = vec![0.0; j as usize + 1];
        fractions[j as usize] = 1.0;
        Self {
            temperature,
            fractions,
            spin_weights: SpinWeights::HYDROGEN,
        }
    }

    /// Keeps only the listed J levels, without renormalizing.
    pub fn restricted_to(&self, levels: &[u32]) -> Self {
        let fractions = self
            .fractions
            .iter()
            .enumerate()
            .map(|(j, &f)| if levels.contains(&(j as u32)) { f } else { 0.0 })
            .collect();
        Self {
            fractions,
            ..self.clone()
        }
    }
}

/// Thermal populations of (v = 0, J ≤ `j_max`) with hydrogen spin
/// statistics.
pub fn boltzmann_populations(
    constants: &SpectroscopicConstants,
    temperature: f64,
    j_max: u32,
) -> Result<PopulationTable> {
    boltzmann_populations_weighted(constants, temperature, j_max, SpinWeights::HYDROGEN)
}

pub fn boltzmann_populations_weighted(
    constants: &SpectroscopicConstants,
    temperature: f64,
    j_max: u32,
    spin_weights: SpinWeights,
) -> Result<PopulationTable> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::domain(format!("temperature {temperature} K must be positive")));
    }
    if !(3..=MAX_TERM_J).contains(&j_max) {
        return Err(Error::domain(format!("J_max = {j_max} outside 3..={MAX_TERM_J}")));
    }
    let f0 = constants.rotational_term(0, 0);
    let mut fractions: Vec<f64> = (0..=j_max)
        .map(|j| {
            let energy = constants.rotational_term(0, j) - f0;
            spin_weights.weight(j)
                * (2 * j + 1) as f64
                * (-HC_OVER_KB_CM_K * energy / temperature).exp()
        })
        .collect();
    let total: f64 = fractions.iter().sum();
    fractions.iter_mut().for_each(|f| *f /= total);
    Ok(PopulationTable {
        temperature,
        fractions,
        spin_weights,
    })
}

/// Boltzmann ratio of the v = 1 to v = 0 vibrational populations.
pub fn thermal_vibrational_ratio(constants: &SpectroscopicConstants, temperature: f64) -> Result<f64> {
    if !(temperature > 0.0) {
        return Err(Error::domain(format!("temperature {temperature} K must be positive")));
    }
    let splitting = constants.vibrational_term(1) - constants.vibrational_term(0);
    Ok((-HC_OVER_KB_CM_K * splitting / temperature).exp())
}

/// Beat between the Q₀₁ coherences of two rotational levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Beat {
    pub j_a: u32,
    pub j_b: u32,
    /// |Q₀₁(J_a) − Q₀₁(J_b)| in cm⁻¹.
    pub wavenumber: f64,
}

/// All unordered-pair beats of the given J levels, ascending in wavenumber.
///
/// For H₂ the (0,2) and (2,3) beats fall within ~0.1 cm⁻¹ of one another;
/// both are reported.
pub fn beat_table(constants: &SpectroscopicConstants, levels: &[u32]) -> Result<Vec<Beat>> {
    let mut js: Vec<u32> = levels.to_vec();
    js.sort_unstable();
    js.dedup();
    let q = js
        .iter()
        .map(|&j| q_branch_frequency(constants, j))
        .collect::<Result<Vec<_>>>()?;
    let mut beats = Vec::with_capacity(js.len() * js.len().saturating_sub(1) / 2);
    for a in 0..js.len() {
        for b in a + 1..js.len() {
            beats.push(Beat {
                j_a: js[a],
                j_b: js[b],
                wavenumber: (q[a] - q[b]).abs(),
            });
        }
    }
    beats.sort_by(|x, y| x.wavenumber.total_cmp(&y.wavenumber));
    Ok(beats)
}
