//! Posterior summaries and diagnostics: Hartigan's dip test for
//! unimodality, kernel density estimation with Silverman bandwidth, MAP
//! and HPD summaries, a spectral-entropy forecastability index, and the
//! per-site estimator selection used to turn stored shadow-trajectory
//! draws into a single noise-reduced series.

use rand::Rng;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::orchestrator::PosteriorChain;
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Hartigan & Hartigan dip statistic.
// ---------------------------------------------------------------------------

/// Dip statistic of a sorted sample: the maximum distance between the
/// empirical CDF and the closest unimodal CDF, computed by the greatest
/// convex minorant / least concave majorant cycling algorithm.
pub fn dip_statistic_sorted(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 || x[n - 1] == x[0] {
        return 0.0;
    }
    debug_assert!(x.windows(2).all(|w| w[0] <= w[1]));

    // 1-based index arrays, following the classical formulation.
    let xi = |i: usize| x[i - 1];
    let mut mn = vec![0usize; n + 1];
    let mut mj = vec![0usize; n + 1];
    let mut gcm = vec![0usize; n + 1];
    let mut lcm = vec![0usize; n + 1];

    // Change-point candidates for the greatest convex minorant.
    mn[1] = 1;
    for j in 2..=n {
        mn[j] = j - 1;
        loop {
            let mnj = mn[j];
            let mnmnj = mn[mnj];
            if mnj == 1
                || (xi(j) - xi(mnj)) * ((mnj - mnmnj) as f64)
                    < (xi(mnj) - xi(mnmnj)) * ((j - mnj) as f64)
            {
                break;
            }
            mn[j] = mnmnj;
        }
    }
    // Change-point candidates for the least concave majorant.
    mj[n] = n;
    for k in (1..n).rev() {
        mj[k] = k + 1;
        loop {
            let mjk = mj[k];
            let mjmjk = mj[mjk];
            if mjk == n
                || (xi(k) - xi(mjk)) * ((mjk as i64 - mjmjk as i64) as f64)
                    < (xi(mjk) - xi(mjmjk)) * ((k as i64 - mjk as i64) as f64)
            {
                break;
            }
            mj[k] = mjmjk;
        }
    }

    let mut low = 1usize;
    let mut high = n;
    // Work with 2n * dip until the end.
    let mut dip = 1.0;
    loop {
        if low >= high {
            break;
        }
        // Collect GCM change points from high down to low.
        gcm[1] = high;
        let mut i = 1;
        while gcm[i] > low {
            gcm[i + 1] = mn[gcm[i]];
            i += 1;
        }
        let l_gcm = i;
        let mut ig = l_gcm;
        let mut ix = l_gcm - 1;
        // Collect LCM change points from low up to high.
        lcm[1] = low;
        let mut i = 1;
        while lcm[i] < high {
            lcm[i + 1] = mj[lcm[i]];
            i += 1;
        }
        let l_lcm = i;
        let mut ih = l_lcm;
        let mut iv = 2usize;

        // Largest distance between the GCM and the LCM on [low, high].
        let mut d = 0.0f64;
        if l_gcm != 2 || l_lcm != 2 {
            loop {
                let gcmix = gcm[ix];
                let lcmiv = lcm[iv];
                if gcmix > lcmiv {
                    let gcmi1 = gcm[ix + 1];
                    let dx = (lcmiv as i64 - gcmi1 as i64 + 1) as f64
                        - (xi(lcmiv) - xi(gcmi1)) * (gcmix - gcmi1) as f64
                            / (xi(gcmix) - xi(gcmi1));
                    iv += 1;
                    if dx >= d {
                        d = dx;
                        ig = ix + 1;
                        ih = iv - 1;
                    }
                } else {
                    let lcmiv1 = lcm[iv - 1];
                    let dx = (xi(gcmix) - xi(lcmiv1)) * (lcmiv - lcmiv1) as f64
                        / (xi(lcmiv) - xi(lcmiv1))
                        - (gcmix as i64 - lcmiv1 as i64 - 1) as f64;
                    ix -= 1;
                    if dx >= d {
                        d = dx;
                        ig = ix + 1;
                        ih = iv;
                    }
                }
                if ix < 1 {
                    ix = 1;
                }
                if iv > l_lcm {
                    iv = l_lcm;
                }
                if gcm[ix] == lcm[iv] {
                    break;
                }
            }
        } else {
            d = 1.0;
        }
        if d < dip {
            break;
        }

        // Dip within the convex minorant fit.
        let mut dip_l = 0.0f64;
        for j in ig..l_gcm {
            let mut max_t = 1.0f64;
            let jb = gcm[j + 1];
            let je = gcm[j];
            if je - jb > 1 && xi(je) != xi(jb) {
                let c = (je - jb) as f64 / (xi(je) - xi(jb));
                for jj in jb..=je {
                    let t = (jj - jb + 1) as f64 - (xi(jj) - xi(jb)) * c;
                    if t > max_t {
                        max_t = t;
                    }
                }
            }
            if dip_l < max_t {
                dip_l = max_t;
            }
        }
        // Dip within the concave majorant fit.
        let mut dip_u = 0.0f64;
        for j in ih..l_lcm {
            let mut max_t = 1.0f64;
            let jb = lcm[j];
            let je = lcm[j + 1];
            if je - jb > 1 && xi(je) != xi(jb) {
                let c = (je - jb) as f64 / (xi(je) - xi(jb));
                for jj in jb..=je {
                    let t = (xi(jj) - xi(jb)) * c - (jj as i64 - jb as i64 - 1) as f64;
                    if t > max_t {
                        max_t = t;
                    }
                }
            }
            if dip_u < max_t {
                dip_u = max_t;
            }
        }

        let dipnew = dip_l.max(dip_u);
        if dip < dipnew {
            dip = dipnew;
        }
        low = gcm[ig];
        high = lcm[ih];
        if dip >= d {
            break;
        }
    }
    dip / (2.0 * n as f64)
}

/// Dip statistic of an arbitrary sample (copies and sorts).
pub fn dip_statistic(sample: &[f64]) -> f64 {
    let mut x = sample.to_vec();
    x.sort_by(|a, b| a.partial_cmp(b).unwrap());
    dip_statistic_sorted(&x)
}

/// Null distribution of the dip statistic for samples of size `n`,
/// calibrated by Monte Carlo against the uniform distribution. Reusable
/// across many tests of the same sample size.
#[derive(Debug, Clone)]
pub struct DipCalibration {
    pub n: usize,
    /// Sorted null dip statistics.
    pub null_dips: Vec<f64>,
}

impl DipCalibration {
    pub fn new<R: Rng + ?Sized>(n: usize, calibration_draws: usize, rng: &mut R) -> Self {
        let mut null_dips: Vec<f64> = (0..calibration_draws)
            .map(|_| {
                let mut u: Vec<f64> = (0..n).map(|_| rng.random()).collect();
                u.sort_by(|a, b| a.partial_cmp(b).unwrap());
                dip_statistic_sorted(&u)
            })
            .collect();
        null_dips.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Self { n, null_dips }
    }

    /// Monte Carlo p-value `(1 + #{null >= observed}) / (B + 1)`.
    pub fn p_value(&self, observed: f64) -> f64 {
        let exceed = self.null_dips.iter().filter(|&&d| d >= observed).count();
        (1 + exceed) as f64 / (self.null_dips.len() + 1) as f64
    }
}

/// Default number of uniform calibration replicates for dip p-values.
pub const DIP_CALIBRATION_DRAWS: usize = 1000;
/// Default significance level for multimodality.
pub const DIP_ALPHA: f64 = 0.05;

/// Dip statistic and Monte Carlo p-value of a sample.
pub fn dip_test<R: Rng + ?Sized>(
    sample: &[f64],
    calibration_draws: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if sample.len() < 4 {
        return Err(Error::Config(format!(
            "dip test needs at least 4 points, got {}",
            sample.len()
        )));
    }
    let stat = dip_statistic(sample);
    let cal = DipCalibration::new(sample.len(), calibration_draws, rng);
    Ok((stat, cal.p_value(stat)))
}

// ---------------------------------------------------------------------------
// Kernel density estimation and the MAP estimator.
// ---------------------------------------------------------------------------

/// Silverman's rule of thumb: `0.9 min(sd, IQR/1.34) n^(-1/5)`.
pub fn silverman_bandwidth(sample: &[f64]) -> f64 {
    let n = sample.len();
    if n < 2 {
        return 1.0;
    }
    let sd = crate::metrics::sample_sd(sample);
    let mut sorted = sample.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = |p: f64| {
        let t = p * (n - 1) as f64;
        let lo = t.floor() as usize;
        let frac = t - lo as f64;
        if lo + 1 < n {
            sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac
        } else {
            sorted[lo]
        }
    };
    let iqr = q(0.75) - q(0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    if spread <= 0.0 {
        // degenerate sample; any positive bandwidth works
        return 1e-9;
    }
    0.9 * spread * (n as f64).powf(-0.2)
}

/// Gaussian KDE evaluated at one point.
pub fn kde_at(sample: &[f64], bandwidth: f64, x: f64) -> f64 {
    let norm = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * bandwidth * sample.len() as f64);
    sample
        .iter()
        .map(|&s| (-0.5 * ((x - s) / bandwidth).powi(2)).exp())
        .sum::<f64>()
        * norm
}

/// Gaussian KDE over a grid.
pub fn kde_grid(sample: &[f64], bandwidth: f64, grid: &[f64]) -> Vec<f64> {
    grid.iter().map(|&x| kde_at(sample, bandwidth, x)).collect()
}

/// Mode of the Gaussian KDE with Silverman bandwidth: grid search over the
/// sample range refined by golden-section.
pub fn map_estimate(sample: &[f64]) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::Config("map_estimate on empty sample".into()));
    }
    let lo = sample.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = sample.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return Ok(lo);
    }
    let bw = silverman_bandwidth(sample);
    const GRID: usize = 512;
    let step = (hi - lo) / (GRID - 1) as f64;
    let mut best_i = 0;
    let mut best_v = f64::NEG_INFINITY;
    for i in 0..GRID {
        let v = kde_at(sample, bw, lo + i as f64 * step);
        if v > best_v {
            best_v = v;
            best_i = i;
        }
    }
    // Golden-section refinement inside the bracketing cells.
    let mut a = lo + step * best_i.saturating_sub(1) as f64;
    let mut b = (lo + step * (best_i + 1) as f64).min(hi);
    let phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = kde_at(sample, bw, c);
    let mut fd = kde_at(sample, bw, d);
    for _ in 0..60 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = kde_at(sample, bw, c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = kde_at(sample, bw, d);
        }
    }
    Ok(0.5 * (a + b))
}

// ---------------------------------------------------------------------------
// HPD intervals.
// ---------------------------------------------------------------------------

/// Shortest interval containing `ceil(mass * size)` sorted sample points.
pub fn hpd_interval(sample: &[f64], mass: f64) -> Result<(f64, f64)> {
    if sample.is_empty() {
        return Err(Error::Config("hpd_interval on empty sample".into()));
    }
    if !(0.0 < mass && mass < 1.0) {
        return Err(Error::Config("mass must be in (0, 1)".into()));
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let k = ((mass * n as f64).ceil() as usize).clamp(1, n);
    let mut best = (sorted[0], sorted[k - 1]);
    let mut width = best.1 - best.0;
    for i in 1..=(n - k) {
        let w = sorted[i + k - 1] - sorted[i];
        if w < width {
            width = w;
            best = (sorted[i], sorted[i + k - 1]);
        }
    }
    Ok(best)
}

// ---------------------------------------------------------------------------
// Forecastability index.
// ---------------------------------------------------------------------------

/// Forecastability index `Omega = 1 - H(s) / log(m)`, where `s` is the
/// normalized smoothed periodogram over the `m` positive frequencies and
/// `H` its Shannon entropy. White noise gives a flat spectrum (maximal
/// entropy, `Omega` near 0); a pure tone concentrates the spectrum
/// (`Omega` near 1). A constant sequence has a zero-entropy spectrum and
/// returns 1 by convention.
///
/// The periodogram is smoothed with a 3-point modified Daniell kernel
/// (weights 1/4, 1/2, 1/4) before normalization.
pub fn forecastability(sample: &[f64]) -> Result<f64> {
    if sample.len() < 64 {
        return Err(Error::Config(format!(
            "forecastability needs at least 64 points, got {}",
            sample.len()
        )));
    }
    let n = sample.len();
    let mean = sample.iter().sum::<f64>() / n as f64;
    if sample.iter().all(|&v| (v - mean).abs() < 1e-300) {
        return Ok(1.0);
    }
    let mut buf: Vec<Complex<f64>> = sample
        .iter()
        .map(|&v| Complex::new(v - mean, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let m = n / 2;
    let raw: Vec<f64> = (1..=m).map(|k| buf[k].norm_sqr() / n as f64).collect();
    // Modified Daniell smoother, reflecting at the boundaries.
    let at = |i: i64| -> f64 {
        let idx = if i < 0 {
            (-i) as usize
        } else if i as usize >= m {
            2 * m - 2 - i as usize
        } else {
            i as usize
        };
        raw[idx.min(m - 1)]
    };
    let smooth: Vec<f64> = (0..m as i64)
        .map(|i| 0.25 * at(i - 1) + 0.5 * at(i) + 0.25 * at(i + 1))
        .collect();
    let total: f64 = smooth.iter().sum();
    if total <= 0.0 {
        return Ok(1.0);
    }
    let entropy: f64 = smooth
        .iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| {
            let s = v / total;
            -s * s.ln()
        })
        .sum();
    Ok((1.0 - entropy / (m as f64).ln()).clamp(0.0, 1.0))
}

// ---------------------------------------------------------------------------
// Per-site estimator selection.
// ---------------------------------------------------------------------------

/// Summary of one site's posterior marginal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalSummary {
    /// 1-based site index.
    pub site: usize,
    pub mean: f64,
    pub map_estimate: f64,
    pub dip_statistic: f64,
    pub dip_pvalue: f64,
    pub multimodal: bool,
    /// Forecastability of the site's draw sequence, when computable.
    pub omega: f64,
    /// The selected point estimate: MAP if multimodal, mean otherwise.
    pub chosen: f64,
}

/// Per-site selection outcome over a whole chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedEstimates {
    pub y_point: Vec<f64>,
    pub summaries: Vec<MarginalSummary>,
    /// Sites rejecting unimodality at the given significance level.
    pub m_ht: Vec<usize>,
    /// Sites whose forecastability lies above the 99th percentile.
    pub omega_ht: Vec<usize>,
}

/// Dip-test every site's posterior marginal and select mean/MAP point
/// estimates; collect the multimodal set and the high-forecastability set.
pub fn select_estimates<R: Rng + ?Sized>(
    chain: &PosteriorChain,
    alpha: f64,
    calibration_draws: usize,
    rng: &mut R,
) -> Result<SelectedEstimates> {
    if chain.y_draws.is_empty() {
        return Err(Error::Config("chain holds no shadow-trajectory draws".into()));
    }
    let draws = chain.y_draws.len();
    if draws < 4 {
        return Err(Error::Config(format!(
            "need at least 4 stored draws per site, got {draws}"
        )));
    }
    let cal = DipCalibration::new(draws, calibration_draws, rng);
    let n = chain.n;
    let mut summaries = Vec::with_capacity(n);
    let mut y_point = Vec::with_capacity(n);
    let mut m_ht = Vec::new();
    let omega_ok = draws >= 64;
    for site in 0..n {
        let sample = chain.y_marginal(site);
        let mean = sample.iter().sum::<f64>() / draws as f64;
        let map = map_estimate(&sample)?;
        let stat = dip_statistic(&sample);
        let pval = cal.p_value(stat);
        let multimodal = pval < alpha;
        let omega = if omega_ok {
            forecastability(&sample)?
        } else {
            0.0
        };
        let chosen = if multimodal { map } else { mean };
        if multimodal {
            m_ht.push(site + 1);
        }
        y_point.push(chosen);
        summaries.push(MarginalSummary {
            site: site + 1,
            mean,
            map_estimate: map,
            dip_statistic: stat,
            dip_pvalue: pval,
            multimodal,
            omega,
            chosen,
        });
    }
    // Top 1% of sites by forecastability.
    let keep = ((0.01 * n as f64).ceil() as usize).max(1).min(n);
    let mut by_omega: Vec<usize> = (0..n).collect();
    by_omega.sort_by(|&a, &b| {
        summaries[b]
            .omega
            .partial_cmp(&summaries[a].omega)
            .unwrap()
    });
    let mut omega_ht: Vec<usize> = by_omega[..keep].iter().map(|&i| i + 1).collect();
    omega_ht.sort_unstable();
    Ok(SelectedEstimates {
        y_point,
        summaries,
        m_ht,
        omega_ht,
    })
}

/// Gaussian KDE of the predictive noise draws evaluated on a grid.
pub fn noise_density_estimate(chain: &PosteriorChain, grid: &[f64]) -> Result<Vec<f64>> {
    if chain.noise_predictive_draws.is_empty() {
        return Err(Error::Config("chain holds no noise predictive draws".into()));
    }
    let bw = silverman_bandwidth(&chain.noise_predictive_draws);
    Ok(kde_grid(&chain.noise_predictive_draws, bw, grid))
}

/// Spearman rank correlation of two equal-length sequences.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let rank = |v: &[f64]| -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].partial_cmp(&v[j]).unwrap());
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    };
    let ra = rank(a);
    let rb = rank(b);
    let n = a.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let mut num = 0.0;
    let mut da = 0.0;
    let mut db = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        num += (x - mean) * (y - mean);
        da += (x - mean).powi(2);
        db += (y - mean).powi(2);
    }
    if da == 0.0 || db == 0.0 {
        return Err(Error::Numeric("constant ranks in spearman".into()));
    }
    Ok(num / (da * db).sqrt())
}
