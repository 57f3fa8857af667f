//! Least-squares fit of model parameters to measured pressure curves.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::coherence::{csv_err, csv_writer};
use crate::error::{Error, Result};
use crate::mbsolver::pressure_scan;

use super::config::ExperimentConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitParam {
    Alpha,
    /// Gain rate per molecule, g·Γ/n.
    Gain,
    CDiff,
    CColl,
    Waist,
}

impl FitParam {
    pub const ALL: [FitParam; 5] = [Self::Alpha, Self::Gain, Self::CDiff, Self::CColl, Self::Waist];

    pub fn name(self) -> &'static str {
        match self {
            Self::Alpha => "alpha",
            Self::Gain => "gain",
            Self::CDiff => "c_diff",
            Self::CColl => "c_coll",
            Self::Waist => "waist",
        }
    }

    /// Value in config units.
    pub fn get(self, config: &ExperimentConfig) -> f64 {
        match self {
            Self::Alpha => config.protocol.alpha,
            Self::Gain => config.medium.gain_rate_per_density_m4_per_j,
            Self::CDiff => config.medium.dephasing_c_diff_bar_per_s,
            Self::CColl => config.medium.dephasing_c_coll_per_bar_s,
            Self::Waist => config.write.waist_um,
        }
    }

    /// The waist applies to all three beams.
    pub fn set(self, config: &mut ExperimentConfig, value: f64) {
        match self {
            Self::Alpha => config.protocol.alpha = value,
            Self::Gain => config.medium.gain_rate_per_density_m4_per_j = value,
            Self::CDiff => config.medium.dephasing_c_diff_bar_per_s = value,
            Self::CColl => config.medium.dephasing_c_coll_per_bar_s = value,
            Self::Waist => {
                config.signal.waist_um = value;
                config.write.waist_um = value;
                config.read.waist_um = value;
            }
        }
    }
}

impl fmt::Display for FitParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FitParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown fit parameter '{s}' (alpha, gain, c_diff, c_coll, waist)")))
    }
}

/// Measured η_w and η_r against pressure. Missing values are `None` and
/// contribute no residual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedCurves {
    pub pressures_bar: Vec<f64>,
    pub eta_w: Vec<Option<f64>>,
    pub eta_r: Vec<Option<f64>>,
}

#[derive(Deserialize)]
struct ObservedRow {
    pressure_bar: f64,
    eta_w: Option<f64>,
    eta_r: Option<f64>,
}

impl ObservedCurves {
    pub fn new(pressures_bar: Vec<f64>, eta_w: Vec<Option<f64>>, eta_r: Vec<Option<f64>>) -> Result<Self> {
        if eta_w.len() != pressures_bar.len() || eta_r.len() != pressures_bar.len() {
            return Err(Error::domain("observed curves have mismatched lengths"));
        }
        let curves = Self {
            pressures_bar,
            eta_w,
            eta_r,
        };
        if curves.residual_count() == 0 {
            return Err(Error::domain("observed curves contain no values"));
        }
        Ok(curves)
    }

    /// Columns `pressure_bar,eta_w,eta_r`; empty cells are missing values.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
        let (mut p, mut w, mut r) = (Vec::new(), Vec::new(), Vec::new());
        for row in reader.deserialize::<ObservedRow>() {
            let row = row.map_err(|e| csv_err(path, e))?;
            p.push(row.pressure_bar);
            w.push(row.eta_w);
            r.push(row.eta_r);
        }
        Self::new(p, w, r)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv_writer(path)?;
        w.write_record(["pressure_bar", "eta_w", "eta_r"]).map_err(|e| csv_err(path, e))?;
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for i in 0..self.pressures_bar.len() {
            w.write_record([self.pressures_bar[i].to_string(), cell(self.eta_w[i]), cell(self.eta_r[i])])
                .map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    fn residual_count(&self) -> usize {
        self.eta_w.iter().chain(&self.eta_r).filter(|v| v.is_some()).count()
    }
}

/// Simulated curves on the observation pressures.
pub fn simulate_curves(config: &ExperimentConfig, pressures_bar: &[f64]) -> Result<ObservedCurves> {
    let protocol = config.protocol()?;
    let points = pressure_scan(pressures_bar, &protocol)?;
    if let Some(bad) = points.iter().find(|p| p.error.is_some()) {
        return Err(Error::domain(format!(
            "simulation failed at {} bar: {}",
            bad.pressure_bar,
            bad.error.as_deref().unwrap_or_default()
        )));
    }
    Ok(ObservedCurves {
        pressures_bar: pressures_bar.to_vec(),
        eta_w: points.iter().map(|p| Some(p.eta_w)).collect(),
        eta_r: points.iter().map(|p| Some(p.eta_r)).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// On ‖Jᵀr‖ in scaled parameters.
    pub gradient_tolerance: f64,
    pub step_tolerance: f64,
    /// Relative central-difference step.
    pub fd_step: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            gradient_tolerance: 1e-8,
            step_tolerance: 1e-10,
            fd_step: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub names: Vec<String>,
    pub values: Vec<f64>,
    /// ‖simulated − observed‖₂.
    pub residual_norm: f64,
    /// In config units; pseudo-inverse where the problem is degenerate.
    pub covariance: Vec<Vec<f64>>,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_norm: f64,
}

impl FitResult {
    pub fn value(&self, param: FitParam) -> Option<f64> {
        self.names.iter().position(|n| n == param.name()).map(|i| self.values[i])
    }
}

/// Levenberg-Marquardt over the free parameters, each scaled by its starting
/// value from `config`. Jacobians use central differences. Exhausting the
/// iteration budget returns the best point with `converged = false`.
pub fn fit_parameters(
    data: &ObservedCurves,
    free: &[FitParam],
    config: &ExperimentConfig,
    options: &FitOptions,
) -> Result<FitResult> {
    for (i, p) in free.iter().enumerate() {
        if free[..i].contains(p) {
            return Err(Error::Config(format!("fit parameter '{p}' listed twice")));
        }
    }
    let scales: Vec<f64> = free.iter().map(|p| p.get(config)).collect();
    if let Some(i) = scales.iter().position(|s| !(*s > 0.0)) {
        return Err(Error::Config(format!("starting value of '{}' must be positive", free[i])));
    }
    let m = data.residual_count();
    let n = free.len();

    let residuals = |x: &DVector<f64>| -> Result<DVector<f64>> {
        let mut c = config.clone();
        for ((p, s), xi) in free.iter().zip(&scales).zip(x.iter()) {
            p.set(&mut c, s * xi);
        }
        let sim = simulate_curves(&c, &data.pressures_bar)?;
        let pairs = sim
            .eta_w
            .iter()
            .zip(&data.eta_w)
            .chain(sim.eta_r.iter().zip(&data.eta_r));
        Ok(DVector::from_iterator(
            m,
            pairs.filter_map(|(s, o)| o.map(|o| s.unwrap_or(f64::NAN) - o)),
        ))
    };
    let jacobian = |x: &DVector<f64>| -> Result<DMatrix<f64>> {
        let mut jac = DMatrix::zeros(m, n);
        for k in 0..n {
            let h = options.fd_step * x[k].abs().max(1.0);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            let d = (residuals(&xp)? - residuals(&xm)?) / (2.0 * h);
            jac.set_column(k, &d);
        }
        Ok(jac)
    };

    let mut x = DVector::from_element(n, 1.0);
    let mut r = residuals(&x)?;
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut jac = jacobian(&x)?;
    let mut grad = jac.transpose() * &r;

    while iterations < options.max_iterations && n > 0 && grad.norm() > options.gradient_tolerance {
        iterations += 1;
        let jtj = jac.transpose() * &jac;
        let mut accepted = false;
        let mut small_step = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for k in 0..n {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(step) = a.lu().solve(&(-&grad)) else {
                lambda *= 10.0;
                continue;
            };
            small_step = step.norm() <= options.step_tolerance * (x.norm() + options.step_tolerance);
            let trial = &x + &step;
            let r_trial = residuals(&trial)?;
            let c_trial = r_trial.norm_squared();
            if c_trial.is_finite() && c_trial < cost {
                x = trial;
                r = r_trial;
                cost = c_trial;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                break;
            }
            lambda *= 10.0;
            if small_step {
                break;
            }
        }
        if !accepted {
            break;
        }
        jac = jacobian(&x)?;
        grad = jac.transpose() * &r;
        if small_step {
            break;
        }
    }

    let gradient_norm = grad.norm();
    let dof = m.saturating_sub(n).max(1) as f64;
    let s2 = cost / dof;
    let pinv = if n == 0 {
        DMatrix::zeros(0, 0)
    } else {
        (jac.transpose() * &jac)
            .pseudo_inverse(1e-12)
            .map_err(|e| Error::domain(format!("covariance: {e}")))?
    };
    let covariance = (0..n)
        .map(|i| (0..n).map(|j| s2 * pinv[(i, j)] * scales[i] * scales[j]).collect())
        .collect();

    Ok(FitResult {
        names: free.iter().map(|p| p.name().to_string()).collect(),
        values: x.iter().zip(&scales).map(|(xi, s)| xi * s).collect(),
        residual_norm: cost.sqrt(),
        covariance,
        iterations,
        converged: gradient_norm <= options.gradient_tolerance,
        gradient_norm,
    })
}
