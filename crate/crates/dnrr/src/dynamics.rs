//! Polynomial delay maps, finite Gaussian-mixture noise processes and
//! trajectory simulation.
//!
//! A [`PolynomialMap`] is a lag-`d` recurrence `x_i = g(theta, x_{i-1}, ..,
//! x_{i-d})` with `g` a polynomial over the delayed variables, stored as a
//! coefficient vector aligned with a fixed monomial basis. Trajectories are
//! iterated with additive noise drawn from a [`MixtureNoise`], a finite
//! zero-mean Gaussian mixture.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Enumerate all monomial exponent vectors over `lag` variables with total
/// degree at most `degree`.
///
/// The order is fixed so coefficient indices are stable across runs and
/// files: monomials are graded by total degree; within a degree they are
/// sorted by largest single exponent (ascending), ties broken by
/// lexicographically larger vector first. For `lag = 2, degree = 2` this
/// yields `(1, x1, x2, x1*x2, x1^2, x2^2)`, matching the conventional
/// ordering of the full-quadratic map coefficients; for `lag = 1` it is the
/// plain power basis `1, x, x^2, ...`.
pub fn monomial_basis(lag: usize, degree: usize) -> Vec<Vec<u32>> {
    fn rec(vars: usize, budget: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if vars == 0 {
            out.push(cur.clone());
            return;
        }
        for e in 0..=budget {
            cur.push(e);
            rec(vars - 1, budget - e, cur, out);
            cur.pop();
        }
    }
    let mut basis = Vec::new();
    rec(lag, degree as u32, &mut Vec::new(), &mut basis);
    basis.sort_by(|a, b| {
        let (ta, tb) = (a.iter().sum::<u32>(), b.iter().sum::<u32>());
        let (ma, mb) = (a.iter().max().copied(), b.iter().max().copied());
        ta.cmp(&tb).then(ma.cmp(&mb)).then_with(|| b.cmp(a))
    });
    basis
}

/// A lag-`d` delay map whose deterministic part is a polynomial in the
/// delayed variables, represented by coefficients over [`monomial_basis`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialMap {
    pub lag: usize,
    pub degree: usize,
    /// Exponent vectors, one per basis monomial, in the documented order.
    pub basis: Vec<Vec<u32>>,
    /// Coefficient vector aligned with `basis`.
    pub coefficients: Vec<f64>,
}

impl PolynomialMap {
    /// Build a map from a coefficient vector over the standard basis.
    pub fn new(lag: usize, degree: usize, coefficients: Vec<f64>) -> Result<Self> {
        if lag == 0 || degree == 0 {
            return Err(Error::Config("lag and degree must be positive".into()));
        }
        let basis = monomial_basis(lag, degree);
        if coefficients.len() != basis.len() {
            return Err(Error::DimensionMismatch {
                expected: basis.len(),
                got: coefficients.len(),
            });
        }
        Ok(Self {
            lag,
            degree,
            basis,
            coefficients,
        })
    }

    /// The Henon map `1.38 - x_{i-1}^2 + 0.27 x_{i-2}` over the full
    /// quadratic basis in two delayed variables.
    pub fn henon() -> Self {
        Self::new(2, 2, vec![1.38, 0.0, 0.27, 0.0, -1.0, 0.0]).unwrap()
    }

    /// The bistable cubic map `0.05 + theta x - 0.99 x^3`, embedded in the
    /// general quintic model space used for its reconstruction.
    pub fn cubic(theta: f64) -> Self {
        Self::new(1, 5, vec![0.05, theta, 0.0, -0.99, 0.0, 0.0]).unwrap()
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    fn check_window(&self, window: &[f64]) -> Result<()> {
        if window.len() != self.lag {
            return Err(Error::DimensionMismatch {
                expected: self.lag,
                got: window.len(),
            });
        }
        Ok(())
    }

    /// Evaluate every basis monomial at `window = (x_{i-1}, .., x_{i-d})`.
    pub fn eval_basis(&self, window: &[f64]) -> Result<Vec<f64>> {
        self.check_window(window)?;
        let mut out = Vec::with_capacity(self.basis.len());
        self.eval_basis_into(window, &mut out);
        Ok(out)
    }

    /// Allocation-free variant of [`Self::eval_basis`] for hot loops.
    /// The window length is assumed valid.
    pub fn eval_basis_into(&self, window: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for exps in &self.basis {
            let mut m = 1.0;
            for (x, &e) in window.iter().zip(exps) {
                m *= x.powi(e as i32);
            }
            out.push(m);
        }
    }

    /// Evaluate the deterministic part `g(theta, window)`.
    pub fn eval(&self, window: &[f64]) -> Result<f64> {
        self.check_window(window)?;
        Ok(self.eval_unchecked(window))
    }

    /// Window length assumed valid.
    pub fn eval_unchecked(&self, window: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (exps, &c) in self.basis.iter().zip(&self.coefficients) {
            if c == 0.0 {
                continue;
            }
            let mut m = c;
            for (x, &e) in window.iter().zip(exps) {
                m *= x.powi(e as i32);
            }
            acc += m;
        }
        acc
    }
}

/// A polynomial model space: the monomial basis of a [`PolynomialMap`]
/// without committed coefficients. The inference side evaluates candidate
/// coefficient vectors against this shared basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub lag: usize,
    pub degree: usize,
    pub basis: Vec<Vec<u32>>,
}

impl ModelSpec {
    pub fn new(lag: usize, degree: usize) -> Result<Self> {
        if lag == 0 || degree == 0 {
            return Err(Error::Config("lag and degree must be positive".into()));
        }
        Ok(Self {
            lag,
            degree,
            basis: monomial_basis(lag, degree),
        })
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Basis monomials at `window`, window length assumed valid.
    pub fn eval_basis_into(&self, window: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for exps in &self.basis {
            let mut m = 1.0;
            for (x, &e) in window.iter().zip(exps) {
                m *= x.powi(e as i32);
            }
            out.push(m);
        }
    }

    /// `g(theta, window)` for a candidate coefficient vector.
    pub fn eval_with(&self, theta: &[f64], window: &[f64]) -> f64 {
        debug_assert_eq!(theta.len(), self.basis.len());
        debug_assert_eq!(window.len(), self.lag);
        let mut acc = 0.0;
        for (exps, &c) in self.basis.iter().zip(theta) {
            if c == 0.0 {
                continue;
            }
            let mut m = c;
            for (x, &e) in window.iter().zip(exps) {
                m *= x.powi(e as i32);
            }
            acc += m;
        }
        acc
    }

    /// Commit a coefficient vector, producing a concrete map.
    pub fn to_map(&self, theta: Vec<f64>) -> Result<PolynomialMap> {
        if theta.len() != self.basis.len() {
            return Err(Error::DimensionMismatch {
                expected: self.basis.len(),
                got: theta.len(),
            });
        }
        Ok(PolynomialMap {
            lag: self.lag,
            degree: self.degree,
            basis: self.basis.clone(),
            coefficients: theta,
        })
    }
}

impl From<&PolynomialMap> for ModelSpec {
    fn from(map: &PolynomialMap) -> Self {
        Self {
            lag: map.lag,
            degree: map.degree,
            basis: map.basis.clone(),
        }
    }
}

/// Finite zero-mean Gaussian mixture noise: component `j` has weight
/// `weights[j]` and variance `variances[j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureNoise {
    pub weights: Vec<f64>,
    pub variances: Vec<f64>,
}

impl MixtureNoise {
    pub fn new(weights: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        if weights.len() != variances.len() || weights.is_empty() {
            return Err(Error::Config(
                "mixture weights and variances must be nonempty and equal length".into(),
            ));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "mixture weights sum to {sum}, expected 1"
            )));
        }
        if weights.iter().any(|&w| w <= 0.0) || variances.iter().any(|&v| v <= 0.0) {
            return Err(Error::Config(
                "mixture weights and variances must be strictly positive".into(),
            ));
        }
        Ok(Self { weights, variances })
    }

    /// Single normal component `N(0, sigma2)`.
    pub fn single(sigma2: f64) -> Result<Self> {
        Self::new(vec![1.0], vec![sigma2])
    }

    /// The two-component family `f_{2,l}`, `1 <= l <= 4`:
    /// `(5+l)/10 N(0, sigma2) + (5-l)/10 N(0, 100 sigma2)`.
    pub fn two_component(l: usize, sigma2: f64) -> Result<Self> {
        if !(1..=4).contains(&l) {
            return Err(Error::Config(format!("f_2,l requires 1 <= l <= 4, got {l}")));
        }
        let w1 = (5 + l) as f64 / 10.0;
        Self::new(vec![w1, 1.0 - w1], vec![sigma2, 100.0 * sigma2])
    }

    /// Mixture variance `sum_j p_j sigma_j^2`.
    pub fn variance(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.variances)
            .map(|(p, v)| p * v)
            .sum()
    }

    pub fn sd(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Mixture density at `z`.
    pub fn density(&self, z: f64) -> f64 {
        self.weights
            .iter()
            .zip(&self.variances)
            .map(|(p, v)| p * (-z * z / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt())
            .sum()
    }

    /// One draw: pick a component by weight, then a zero-mean normal.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut j = self.weights.len() - 1;
        for (k, &w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                j = k;
                break;
            }
        }
        Normal::new(0.0, self.variances[j].sqrt())
            .unwrap()
            .sample(rng)
    }

    /// `count` i.i.d. draws.
    pub fn sample_n<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<f64> {
        (0..count).map(|_| self.sample(rng)).collect()
    }
}

/// Generator metadata carried in trajectory file headers.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub generator: String,
    pub seed: Option<u64>,
    /// Realized noise level (percent), when known.
    pub eta: Option<f64>,
    /// Restarts consumed by realization selection.
    pub rejections: Option<usize>,
}

/// A simulated or observed series `x_1..x_n` together with its lag-`d`
/// initial condition block `(x_0, .., x_{1-d})` (most recent first).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub values: Vec<f64>,
    pub initial: Vec<f64>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn new(values: Vec<f64>, initial: Vec<f64>, meta: TrajectoryMeta) -> Result<Self> {
        if initial.is_empty() {
            return Err(Error::Config("initial condition block is empty".into()));
        }
        if !values.is_empty() && values.len() < initial.len() {
            return Err(Error::Config(format!(
                "series length {} shorter than lag {}",
                values.len(),
                initial.len()
            )));
        }
        Ok(Self {
            values,
            initial,
            meta,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn lag(&self) -> usize {
        self.initial.len()
    }

    /// Time-ordered extension `(x_{1-d}, .., x_0, x_1, .., x_n)`.
    pub fn extended(&self) -> Vec<f64> {
        extend_series(&self.initial, &self.values)
    }
}

/// Build the time-ordered extension of a series from its initial block
/// `(z_0, .., z_{1-d})` (most recent first) and values `z_1..z_n`.
pub fn extend_series(initial: &[f64], values: &[f64]) -> Vec<f64> {
    let mut ext = Vec::with_capacity(initial.len() + values.len());
    ext.extend(initial.iter().rev());
    ext.extend_from_slice(values);
    ext
}

/// Fill `buf` with the lag window `(z_{i-1}, .., z_{i-d})` for site `i`
/// (1-based) of an extended series produced by [`extend_series`].
#[inline]
pub fn fill_window(ext: &[f64], lag: usize, i: usize, buf: &mut [f64]) {
    debug_assert_eq!(buf.len(), lag);
    for (k, b) in buf.iter_mut().enumerate() {
        *b = ext[lag + i - 2 - k];
    }
}

fn sample_sd(series: &[f64]) -> f64 {
    let n = series.len() as f64;
    if series.len() < 2 {
        return 0.0;
    }
    let mean = series.iter().sum::<f64>() / n;
    (series.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Default divergence guard: realizations leaving `[-guard, guard]` have
/// escaped to the trapping set and are discarded.
pub const DEFAULT_GUARD: f64 = 1e3;
/// Default restart budget for realization selection.
pub const DEFAULT_RETRIES: usize = 100;

/// Simulate `n` steps of `x_i = g(theta, x_{i:d}) + e_i`.
///
/// Realizations that escape the guard are discarded and restarted with a
/// fresh noise realization. When `target_eta = Some((eta, tol))` the
/// realization is additionally required to have realized noise level
/// `100 * sd(noise) / sd(series)` within `eta +- tol`; restarts count
/// against the same retry budget and are reported in the metadata.
pub fn simulate<R: Rng + ?Sized>(
    map: &PolynomialMap,
    noise: &MixtureNoise,
    n: usize,
    initial: &[f64],
    rng: &mut R,
    guard: f64,
    target_eta: Option<(f64, f64)>,
) -> Result<Trajectory> {
    if initial.len() != map.lag {
        return Err(Error::DimensionMismatch {
            expected: map.lag,
            got: initial.len(),
        });
    }
    if guard <= 0.0 {
        return Err(Error::Config("guard must be positive".into()));
    }
    let d = map.lag;
    let mut window = vec![0.0; d];
    let mut rejections = 0usize;
    'attempt: for _ in 0..=DEFAULT_RETRIES {
        let mut ext = extend_series(initial, &[]);
        ext.reserve(n);
        for i in 1..=n {
            fill_window(&ext, d, i, &mut window);
            let x = map.eval_unchecked(&window) + noise.sample(rng);
            if !x.is_finite() || x.abs() > guard {
                rejections += 1;
                continue 'attempt;
            }
            ext.push(x);
        }
        let values = ext[d..].to_vec();
        let eta = if n >= 2 {
            100.0 * noise.sd() / sample_sd(&values)
        } else {
            0.0
        };
        if let Some((target, tol)) = target_eta {
            if n >= 2 && (eta - target).abs() > tol {
                rejections += 1;
                continue 'attempt;
            }
        }
        return Trajectory::new(
            values,
            initial.to_vec(),
            TrajectoryMeta {
                generator: format!("simulate(lag={}, degree={})", map.lag, map.degree),
                seed: None,
                eta: (n >= 2).then_some(eta),
                rejections: Some(rejections),
            },
        );
    }
    Err(Error::RetryExhausted {
        retries: DEFAULT_RETRIES,
    })
}

// ---------------------------------------------------------------------------
// Trajectory files: one value per line, `#`-prefixed metadata header.
// ---------------------------------------------------------------------------

impl Trajectory {
    /// Serialize to the plain-text trajectory format. Values are written
    /// with 17 significant digits so parsing round-trips bit-exactly.
    pub fn to_csv_string(&self) -> String {
        let mut s = String::new();
        writeln!(s, "# generator: {}", self.meta.generator).unwrap();
        if let Some(seed) = self.meta.seed {
            writeln!(s, "# seed: {seed}").unwrap();
        }
        if let Some(eta) = self.meta.eta {
            writeln!(s, "# eta: {eta:.6}").unwrap();
        }
        if let Some(r) = self.meta.rejections {
            writeln!(s, "# rejections: {r}").unwrap();
        }
        let init: Vec<String> = self.initial.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(s, "# initial: {}", init.join(" ")).unwrap();
        writeln!(s, "# n: {}", self.values.len()).unwrap();
        for v in &self.values {
            writeln!(s, "{v:.16e}").unwrap();
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|_| Error::MissingFile(path.to_path_buf()))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut meta = TrajectoryMeta::default();
        let mut initial: Vec<f64> = Vec::new();
        let mut values = Vec::new();
        let perr = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                if let Some((key, val)) = rest.split_once(':') {
                    let val = val.trim();
                    match key.trim() {
                        "generator" => meta.generator = val.to_string(),
                        "seed" => {
                            meta.seed = Some(val.parse().map_err(|e| {
                                perr(lineno, format!("bad seed {val:?}: {e}"))
                            })?)
                        }
                        "eta" => {
                            meta.eta = Some(val.parse().map_err(|e| {
                                perr(lineno, format!("bad eta {val:?}: {e}"))
                            })?)
                        }
                        "rejections" => {
                            meta.rejections = Some(val.parse().map_err(|e| {
                                perr(lineno, format!("bad rejections {val:?}: {e}"))
                            })?)
                        }
                        "initial" => {
                            initial = val
                                .split_whitespace()
                                .map(|t| {
                                    t.parse().map_err(|e| {
                                        perr(lineno, format!("bad initial value {t:?}: {e}"))
                                    })
                                })
                                .collect::<Result<_>>()?
                        }
                        _ => {} // unknown header keys are ignored
                    }
                }
                continue;
            }
            values.push(
                line.parse::<f64>()
                    .map_err(|e| perr(lineno, format!("bad value {line:?}: {e}")))?,
            );
        }
        if initial.is_empty() {
            return Err(perr(0, "missing `# initial:` header".into()));
        }
        Trajectory::new(values, initial, meta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn basis_order_two_vars_quadratic() {
        let b = monomial_basis(2, 2);
        assert_eq!(
            b,
            vec![
                vec![0, 0],
                vec![1, 0],
                vec![0, 1],
                vec![1, 1],
                vec![2, 0],
                vec![0, 2]
            ]
        );
    }

    #[test]
    fn basis_order_one_var_quintic() {
        let b = monomial_basis(1, 5);
        assert_eq!(b, (0..=5).map(|e| vec![e]).collect::<Vec<_>>());
    }

    #[test]
    fn henon_eval() {
        let m = PolynomialMap::henon();
        // 1.38 - 0.5^2 + 0.27 * 0.5
        assert!((m.eval(&[0.5, 0.5]).unwrap() - 1.265).abs() < 1e-15);
        assert!((m.eval(&[0.0, 0.0]).unwrap() - 1.38).abs() < 1e-15);
    }

    #[test]
    fn cubic_eval() {
        let m = PolynomialMap::cubic(2.55);
        assert!((m.eval(&[0.0]).unwrap() - 0.05).abs() < 1e-15);
        assert!((m.eval(&[1.0]).unwrap() - (0.05 + 2.55 - 0.99)).abs() < 1e-12);
    }

    #[test]
    fn eval_rejects_bad_window() {
        let m = PolynomialMap::henon();
        assert!(matches!(
            m.eval(&[0.5]),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn map_rejects_bad_coefficient_length() {
        assert!(PolynomialMap::new(2, 2, vec![1.0; 5]).is_err());
    }

    #[test]
    fn two_component_mixture_shape() {
        let f = MixtureNoise::two_component(1, 0.01).unwrap();
        assert_eq!(f.weights, vec![0.6, 0.4]);
        assert_eq!(f.variances, vec![0.01, 1.0]);
        assert!((f.variance() - 0.406).abs() < 1e-12);
        assert!(MixtureNoise::two_component(5, 0.01).is_err());
        assert!(MixtureNoise::new(vec![0.5, 0.4], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn mixture_density_integrates_to_one() {
        let f = MixtureNoise::two_component(2, 0.04).unwrap();
        let h = 0.01;
        let total: f64 = (-4000..4000).map(|k| f.density(k as f64 * h) * h).sum();
        assert!((total - 1.0).abs() < 1e-6, "integral {total}");
    }

    #[test]
    fn extend_and_window_ordering() {
        // initial (x_0, x_{-1}) = (a, b), so the extension is time-ordered.
        let ext = extend_series(&[1.0, 2.0], &[3.0, 4.0]);
        assert_eq!(ext, vec![2.0, 1.0, 3.0, 4.0]);
        let mut w = [0.0; 2];
        fill_window(&ext, 2, 1, &mut w);
        assert_eq!(w, [1.0, 2.0]); // (x_0, x_{-1})
        fill_window(&ext, 2, 2, &mut w);
        assert_eq!(w, [3.0, 1.0]); // (x_1, x_0)
    }

    #[test]
    fn simulate_is_deterministic_given_seed() {
        let map = PolynomialMap::henon();
        let noise = MixtureNoise::two_component(1, 0.21e-4).unwrap();
        let mut r1 = ChaCha8Rng::seed_from_u64(9);
        let mut r2 = ChaCha8Rng::seed_from_u64(9);
        let a = simulate(&map, &noise, 200, &[0.5, 0.5], &mut r1, DEFAULT_GUARD, None).unwrap();
        let b = simulate(&map, &noise, 200, &[0.5, 0.5], &mut r2, DEFAULT_GUARD, None).unwrap();
        assert_eq!(a.values, b.values);
        assert!(a.values.iter().all(|v| v.abs() < DEFAULT_GUARD));
    }

    #[test]
    fn simulate_hits_target_noise_level() {
        let map = PolynomialMap::henon();
        let noise = MixtureNoise::two_component(1, 0.21e-4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = simulate(
            &map,
            &noise,
            1000,
            &[0.5, 0.5],
            &mut rng,
            DEFAULT_GUARD,
            Some((3.0, 0.3)),
        )
        .unwrap();
        let eta = t.meta.eta.unwrap();
        assert!((eta - 3.0).abs() <= 0.3, "eta {eta}");
    }

    #[test]
    fn simulate_exhausts_retries_on_divergent_map() {
        // x_{i+1} = 10 x_i always escapes a unit guard from x_0 = 1.
        let map = PolynomialMap::new(1, 1, vec![0.0, 10.0]).unwrap();
        let noise = MixtureNoise::single(1e-6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = simulate(&map, &noise, 50, &[1.0], &mut rng, 1.0, None).unwrap_err();
        assert!(matches!(err, Error::RetryExhausted { .. }));
    }

    #[test]
    fn parse_reports_line_numbers() {
        let text = "# initial: 0.5\n1.0\nnot-a-number\n";
        let err = Trajectory::parse(text, Path::new("t.csv")).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn missing_initial_header_is_an_error() {
        assert!(Trajectory::parse("1.0\n2.0\n", Path::new("t.csv")).is_err());
    }

    proptest! {
        #[test]
        fn trajectory_csv_roundtrip(
            values in proptest::collection::vec(-1e6f64..1e6, 2..40),
            x0 in -1e3f64..1e3,
            x1 in -1e3f64..1e3,
        ) {
            let t = Trajectory::new(values, vec![x0, x1], TrajectoryMeta {
                generator: "test".into(),
                seed: Some(7),
                eta: None,
                rejections: Some(0),
            }).unwrap();
            let back = Trajectory::parse(&t.to_csv_string(), Path::new("x.csv")).unwrap();
            prop_assert_eq!(back.values, t.values);
            prop_assert_eq!(back.initial, t.initial);
        }

        #[test]
        fn basis_covers_all_monomials(lag in 1usize..4, degree in 1usize..5) {
            let b = monomial_basis(lag, degree);
            // Count matches binomial(lag + degree, lag) and entries are unique.
            let expect = {
                let mut c = 1usize;
                for k in 1..=lag { c = c * (degree + k) / k; }
                c
            };
            prop_assert_eq!(b.len(), expect);
            let mut s = b.clone();
            s.sort();
            s.dedup();
            prop_assert_eq!(s.len(), b.len());
            prop_assert!(b.iter().all(|e| e.iter().sum::<u32>() <= degree as u32));
        }
    }
}
