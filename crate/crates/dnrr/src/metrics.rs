//! Scalar measures comparing trajectories, maps and noise processes.
//!
//! `E0` is the RMS distance between two trajectories, `Edyn` the RMS
//! one-step residual of a trajectory against a map, `Rdyn = 1 - Edyn(y)/
//! Edyn(x)` the relative dynamical noise reduction, `eta` the noise level
//! as a percentage of the signal standard deviation, and `TF` the tail
//! flatness `E|Z| / sd(Z)` of a mixture noise process.

use serde::{Deserialize, Serialize};

use crate::dynamics::{fill_window, MixtureNoise, PolynomialMap, Trajectory};
use crate::{Error, Result};

/// Floor for log10 residual traces at exact-zero residuals
/// (double-precision scale).
pub const LOG10_FLOOR: f64 = -16.0;

/// Average correction `E0(x, y) = sqrt(mean((x_i - y_i)^2))`.
pub fn avg_correction(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    let ss: f64 = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();
    Ok((ss / x.len() as f64).sqrt())
}

/// One-step residuals `z_i - g(theta, z_{i:d})` for `i = 1..n`, using the
/// trajectory's initial-condition block for the first `d` windows.
pub fn residuals(z: &Trajectory, map: &PolynomialMap) -> Result<Vec<f64>> {
    if z.lag() != map.lag {
        return Err(Error::DimensionMismatch {
            expected: map.lag,
            got: z.lag(),
        });
    }
    let d = map.lag;
    let ext = z.extended();
    let mut window = vec![0.0; d];
    let mut out = Vec::with_capacity(z.len());
    for i in 1..=z.len() {
        fill_window(&ext, d, i, &mut window);
        out.push(z.values[i - 1] - map.eval_unchecked(&window));
    }
    Ok(out)
}

/// Average dynamical error `Edyn(z; g) = sqrt(mean(residual^2))`.
pub fn avg_dynamical_error(z: &Trajectory, map: &PolynomialMap) -> Result<f64> {
    let r = residuals(z, map)?;
    if r.is_empty() {
        return Err(Error::Config("empty trajectory".into()));
    }
    Ok((r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64).sqrt())
}

/// Relative dynamical noise reduction `1 - edyn_y / edyn_x`.
pub fn relative_reduction(edyn_y: f64, edyn_x: f64) -> Result<f64> {
    if edyn_x <= 0.0 {
        return Err(Error::Numeric("Edyn(x) must be positive".into()));
    }
    Ok(1.0 - edyn_y / edyn_x)
}

/// Sample standard deviation (denominator `n - 1`).
pub fn sample_sd(series: &[f64]) -> f64 {
    if series.len() < 2 {
        return 0.0;
    }
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    (series.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Noise level `eta = 100 * noise_sd / sd(series)` (percent).
pub fn noise_level(noise_sd: f64, series: &[f64]) -> Result<f64> {
    let sd = sample_sd(series);
    if sd <= 0.0 {
        return Err(Error::Numeric("series has zero sample sd".into()));
    }
    Ok(100.0 * noise_sd / sd)
}

/// Tail flatness `TF = E|Z| / sd(Z) = sqrt(2/pi) sum_i p_i sigma_i / sd`.
/// Equals `sqrt(2/pi)` for a single normal and is strictly smaller for any
/// nondegenerate mixture.
pub fn tail_flatness(noise: &MixtureNoise) -> f64 {
    let num: f64 = noise
        .weights
        .iter()
        .zip(&noise.variances)
        .map(|(p, v)| p * v.sqrt())
        .sum();
    (2.0 / std::f64::consts::PI).sqrt() * num / noise.sd()
}

/// Percentage absolute relative errors of estimated coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PareReport {
    /// Per-coefficient PARE; entries at (near-)zero true coefficients hold
    /// `100 * |theta_hat - theta|` instead and are listed in `absolute_entries`.
    pub per_coefficient: Vec<f64>,
    pub mean: f64,
    pub l2: f64,
    /// Indices where the relative error was undefined (true value ~ 0).
    pub absolute_entries: Vec<usize>,
}

/// PAREs, their mean, and the l2 distance between coefficient vectors.
/// When `|theta_true| <= zero_eps` the relative error is undefined and the
/// absolute error (times 100) is reported instead.
pub fn pare(theta_hat: &[f64], theta_true: &[f64], zero_eps: f64) -> Result<PareReport> {
    if theta_hat.len() != theta_true.len() || theta_hat.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: theta_true.len(),
            got: theta_hat.len(),
        });
    }
    let mut per = Vec::with_capacity(theta_hat.len());
    let mut absolute_entries = Vec::new();
    for (k, (&h, &t)) in theta_hat.iter().zip(theta_true).enumerate() {
        if t.abs() > zero_eps {
            per.push(100.0 * (h - t).abs() / t.abs());
        } else {
            per.push(100.0 * (h - t).abs());
            absolute_entries.push(k);
        }
    }
    let mean = per.iter().sum::<f64>() / per.len() as f64;
    let l2 = theta_hat
        .iter()
        .zip(theta_true)
        .map(|(h, t)| (h - t).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(PareReport {
        per_coefficient: per,
        mean,
        l2,
        absolute_entries,
    })
}

/// Per-site `log10 |z_i - g(theta, z_{i:d})|`; exact zeros map to
/// [`LOG10_FLOOR`].
pub fn indeterminism_trace(z: &Trajectory, map: &PolynomialMap) -> Result<Vec<f64>> {
    Ok(residuals(z, map)?
        .into_iter()
        .map(|r| {
            let a = r.abs();
            if a > 0.0 {
                a.log10().max(LOG10_FLOOR)
            } else {
                LOG10_FLOOR
            }
        })
        .collect())
}

/// Full comparison of an observed trajectory `x` and its noise-reduced
/// counterpart `y` against an estimated map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseReductionReport {
    pub e0: f64,
    pub edyn_x: f64,
    pub edyn_y: f64,
    pub rdyn: f64,
    pub eta: Option<f64>,
    pub pare_x: Option<PareReport>,
    pub pare_y: Option<PareReport>,
    pub indeterminism_x: Vec<f64>,
    pub indeterminism_y: Vec<f64>,
}

impl NoiseReductionReport {
    pub fn compute(
        x: &Trajectory,
        y: &Trajectory,
        map_hat: &PolynomialMap,
        eta: Option<f64>,
    ) -> Result<Self> {
        let e0 = avg_correction(&x.values, &y.values)?;
        let edyn_x = avg_dynamical_error(x, map_hat)?;
        let edyn_y = avg_dynamical_error(y, map_hat)?;
        Ok(Self {
            e0,
            edyn_x,
            edyn_y,
            rdyn: relative_reduction(edyn_y, edyn_x)?,
            eta,
            pare_x: None,
            pare_y: None,
            indeterminism_x: indeterminism_trace(x, map_hat)?,
            indeterminism_y: indeterminism_trace(y, map_hat)?,
        })
    }
}
