//! Reconstruction-stage Gibbs updates.
//!
//! These are the full conditionals of the group `G1 = {p, lambdas,
//! allocations, levels, theta, initial}` given the observed series, under
//! the geometric stick-breaking mixture error model: mixture weights form
//! the sequence `w_j = p (1-p)^(j-1)` and each observation carries a latent
//! truncation level `N_i` and allocation `d_i <= N_i`, keeping every Gibbs
//! sweep almost surely finite.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::dynamics::{extend_series, fill_window, ModelSpec, Trajectory};
use crate::{Error, Result};

/// Prior hyperparameters. Coefficients and initial conditions carry flat
/// (improper) priors and need no parameters here.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Priors {
    /// Beta(a1, a2) over the geometric probability `p`.
    pub p_shape: (f64, f64),
    /// Gamma(b1, b2) shape/rate over each mixture precision `lambda_j`.
    pub lambda_shape_rate: (f64, f64),
    /// Gamma(g1, g2) shape/rate over the replication precision `tau`.
    pub tau_shape_rate: (f64, f64),
}

impl Default for Priors {
    /// Arcsine prior on `p`, vague gamma on the precisions, and an
    /// informative gamma on `tau` concentrating the replication variance
    /// `delta = 1/tau` near zero.
    fn default() -> Self {
        Self {
            p_shape: (0.5, 0.5),
            lambda_shape_rate: (1e-3, 1e-3),
            tau_shape_rate: (1e4, 1e-2),
        }
    }
}

impl Priors {
    pub fn validate(&self) -> Result<()> {
        let vals = [
            self.p_shape.0,
            self.p_shape.1,
            self.lambda_shape_rate.0,
            self.lambda_shape_rate.1,
            self.tau_shape_rate.0,
            self.tau_shape_rate.1,
        ];
        if vals.iter().any(|&v| v <= 0.0 || !v.is_finite()) {
            return Err(Error::Config(
                "all prior shape/rate parameters must be strictly positive".into(),
            ));
        }
        Ok(())
    }
}

/// Latent state of the reconstruction group for one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconState {
    /// Geometric stick-breaking probability, in (0, 1).
    pub p: f64,
    /// Mixture precisions, grown lazily to the current `N*`.
    pub lambdas: Vec<f64>,
    /// Allocation `d_i` of each observation, 1-based component indices.
    pub allocations: Vec<usize>,
    /// Truncation levels `N_i >= d_i`.
    pub levels: Vec<usize>,
    /// Map coefficients over the model basis.
    pub theta: Vec<f64>,
    /// Sampled initial conditions `(x_0, .., x_{1-d})`, most recent first.
    pub initial: Vec<f64>,
}

impl ReconState {
    /// `N* = max_i N_i`, the number of active components this sweep.
    pub fn nstar(&self) -> usize {
        self.levels.iter().copied().max().unwrap_or(1)
    }

    /// Joint-support invariant `d_i <= N_i` plus positivity of precisions.
    pub fn check_invariants(&self) -> Result<()> {
        if self
            .allocations
            .iter()
            .zip(&self.levels)
            .any(|(&d, &n)| d == 0 || n == 0 || d > n)
        {
            return Err(Error::Numeric("allocation exceeds its level".into()));
        }
        if self.lambdas.len() < self.nstar() || self.lambdas.iter().any(|&l| l <= 0.0) {
            return Err(Error::Numeric("invalid precision list".into()));
        }
        Ok(())
    }
}

/// One-step residuals `x_i - g(theta, x_{i:d})` under the sampled initial
/// conditions held in `state` (not the trajectory's own initial block).
pub fn residuals(state: &ReconState, x: &Trajectory, spec: &ModelSpec) -> Vec<f64> {
    let d = spec.lag;
    let ext = extend_series(&state.initial, &x.values);
    let mut window = vec![0.0; d];
    (1..=x.len())
        .map(|i| {
            fill_window(&ext, d, i, &mut window);
            x.values[i - 1] - spec.eval_with(&state.theta, &window)
        })
        .collect()
}

fn sample_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    // rand_distr parameterizes by scale; clamp away underflow to zero so
    // log-weights stay finite.
    Gamma::new(shape, 1.0 / rate)
        .expect("gamma parameters")
        .sample(rng)
        .max(1e-300)
}

/// Geometric draw on {0, 1, 2, ...} with success probability `p`.
fn sample_geometric<R: Rng + ?Sized>(p: f64, rng: &mut R) -> usize {
    if p >= 1.0 - 1e-15 {
        return 0;
    }
    let u: f64 = rng.random();
    let g = (1.0 - u).ln() / (1.0 - p).ln();
    g.floor().max(0.0) as usize
}

/// S1: levels `N_i = d_i + Geometric(p)`, i.e. `pi(N_i | ..) ~
/// (1-p)^(N_i - 1) 1(N_i >= d_i)`.
pub fn update_levels<R: Rng + ?Sized>(state: &mut ReconState, rng: &mut R) {
    for (n, &d) in state.levels.iter_mut().zip(&state.allocations) {
        *n = d + sample_geometric(state.p, rng);
    }
}

/// Extend the precision list with prior draws up to `N*`, and drop unused
/// entries beyond it (exchangeability of empty components).
pub fn resize_lambdas<R: Rng + ?Sized>(state: &mut ReconState, priors: &Priors, rng: &mut R) {
    let nstar = state.nstar();
    let (b1, b2) = priors.lambda_shape_rate;
    while state.lambdas.len() < nstar {
        state.lambdas.push(sample_gamma(b1, b2, rng));
    }
    state.lambdas.truncate(nstar);
}

/// S2: allocations `d_i` over `{1..N_i}` with mass proportional to
/// `lambda_j^(1/2) exp(-lambda_j r_i^2 / 2)`.
pub fn update_allocations<R: Rng + ?Sized>(
    state: &mut ReconState,
    x: &Trajectory,
    spec: &ModelSpec,
    rng: &mut R,
) {
    let res = residuals(state, x, spec);
    let mut logw: Vec<f64> = Vec::new();
    for (i, &r) in res.iter().enumerate() {
        let n_i = state.levels[i];
        if n_i == 1 {
            state.allocations[i] = 1;
            continue;
        }
        logw.clear();
        logw.extend(
            state.lambdas[..n_i]
                .iter()
                .map(|&l| 0.5 * l.ln() - 0.5 * l * r * r),
        );
        let max = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for w in logw.iter_mut() {
            *w = (*w - max).exp();
            total += *w;
        }
        let mut u = rng.random::<f64>() * total;
        let mut pick = n_i;
        for (j, &w) in logw.iter().enumerate() {
            u -= w;
            if u <= 0.0 {
                pick = j + 1;
                break;
            }
        }
        state.allocations[i] = pick.min(n_i);
    }
}

/// S3: precisions `lambda_j ~ Gamma(b1 + n_j/2, b2 + S_j/2)` for
/// `j = 1..N*`; empty components are prior draws.
pub fn update_lambdas<R: Rng + ?Sized>(
    state: &mut ReconState,
    x: &Trajectory,
    spec: &ModelSpec,
    priors: &Priors,
    rng: &mut R,
) {
    let nstar = state.nstar();
    let res = residuals(state, x, spec);
    let mut counts = vec![0usize; nstar];
    let mut sums = vec![0.0; nstar];
    for (&d, &r) in state.allocations.iter().zip(&res) {
        counts[d - 1] += 1;
        sums[d - 1] += r * r;
    }
    let (b1, b2) = priors.lambda_shape_rate;
    state.lambdas.resize(nstar, 1.0);
    for j in 0..nstar {
        state.lambdas[j] = sample_gamma(b1 + counts[j] as f64 / 2.0, b2 + sums[j] / 2.0, rng);
    }
}

/// S6: geometric probability `p ~ Beta(a1 + 2n, a2 + sum_i (N_i - 1))`.
pub fn update_p<R: Rng + ?Sized>(state: &mut ReconState, priors: &Priors, rng: &mut R) {
    let n = state.levels.len() as f64;
    let excess: usize = state.levels.iter().map(|&l| l - 1).sum();
    let (a1, a2) = priors.p_shape;
    let beta = Beta::new(a1 + 2.0 * n, a2 + excess as f64).expect("beta parameters");
    state.p = beta.sample(rng).clamp(1e-12, 1.0 - 1e-12);
}

/// Weighted normal equations of the theta conditional: precision
/// `A = sum_i lambda_{d_i} phi_i phi_i^T` and right-hand side
/// `b = sum_i lambda_{d_i} x_i phi_i`.
fn theta_normal_equations(
    state: &ReconState,
    x: &Trajectory,
    spec: &ModelSpec,
) -> (DMatrix<f64>, DVector<f64>) {
    let m = spec.dim();
    let d = spec.lag;
    let ext = extend_series(&state.initial, &x.values);
    let mut window = vec![0.0; d];
    let mut phi = Vec::with_capacity(m);
    let mut a = DMatrix::<f64>::zeros(m, m);
    let mut b = DVector::<f64>::zeros(m);
    for i in 1..=x.len() {
        fill_window(&ext, d, i, &mut window);
        spec.eval_basis_into(&window, &mut phi);
        let w = state.lambdas[state.allocations[i - 1] - 1];
        for r in 0..m {
            b[r] += w * x.values[i - 1] * phi[r];
            for c in r..m {
                a[(r, c)] += w * phi[r] * phi[c];
            }
        }
    }
    for r in 0..m {
        for c in 0..r {
            a[(r, c)] = a[(c, r)];
        }
    }
    (a, b)
}

/// Cholesky with an explicit rank check: nalgebra accepts exactly
/// semi-definite matrices (zero pivots), which we must reject.
fn cholesky_checked(a: DMatrix<f64>) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    let scale = a.diagonal().amax().max(1e-300);
    let chol = Cholesky::new(a).ok_or(Error::RankDeficient)?;
    let l = chol.l_dirty();
    for i in 0..l.nrows() {
        if l[(i, i)].powi(2) <= 1e-12 * scale {
            return Err(Error::RankDeficient);
        }
    }
    Ok(chol)
}

/// Mean of the theta full conditional (the weighted least-squares
/// solution); exposed for oracle checks.
pub fn theta_conditional_mean(
    state: &ReconState,
    x: &Trajectory,
    spec: &ModelSpec,
) -> Result<Vec<f64>> {
    let (a, b) = theta_normal_equations(state, x, spec);
    let chol = cholesky_checked(a)?;
    Ok(chol.solve(&b).iter().copied().collect())
}

/// S5: draw `theta` from the multivariate normal with precision `A` and
/// mean `A^-1 b`. The flat prior contributes nothing.
pub fn update_theta<R: Rng + ?Sized>(
    state: &mut ReconState,
    x: &Trajectory,
    spec: &ModelSpec,
    rng: &mut R,
) -> Result<()> {
    let (a, b) = theta_normal_equations(state, x, spec);
    let chol = cholesky_checked(a)?;
    let mean = chol.solve(&b);
    // A = L L^T, so theta = mean + L^-T z has covariance A^-1.
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let z = DVector::from_iterator(spec.dim(), (0..spec.dim()).map(|_| std_normal.sample(rng)));
    let l = chol.l();
    let dev = l
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or(Error::RankDeficient)?;
    state.theta = (mean + dev).iter().copied().collect();
    Ok(())
}

/// S4: one random-walk Metropolis update per coordinate of the initial
/// condition vector, targeting the first `d` likelihood factors in which
/// it appears. Returns the number of accepted coordinate moves.
pub fn update_initial<R: Rng + ?Sized>(
    state: &mut ReconState,
    x: &Trajectory,
    spec: &ModelSpec,
    step: f64,
    rng: &mut R,
) -> usize {
    let d = spec.lag;
    let head = d.min(x.len());
    let log_target = |state: &ReconState| -> f64 {
        let ext = extend_series(&state.initial, &x.values);
        let mut window = vec![0.0; d];
        let mut acc = 0.0;
        for i in 1..=head {
            fill_window(&ext, d, i, &mut window);
            let r = x.values[i - 1] - spec.eval_with(&state.theta, &window);
            acc -= 0.5 * state.lambdas[state.allocations[i - 1] - 1] * r * r;
        }
        acc
    };
    let normal = Normal::new(0.0, step).expect("step must be positive");
    let mut accepted = 0;
    let mut cur = log_target(state);
    for k in 0..d {
        let old = state.initial[k];
        state.initial[k] = old + normal.sample(rng);
        let cand = log_target(state);
        if (cand - cur) >= rng.random::<f64>().ln() {
            accepted += 1;
            cur = cand;
        } else {
            state.initial[k] = old;
        }
    }
    accepted
}

/// S7: one draw from the estimated noise process: component `j` with
/// geometric weight `p (1-p)^(j-1)`, the residual mass beyond `N*` lumped
/// into component `N*`, then `N(0, 1/lambda_j)`.
pub fn sample_noise_predictive<R: Rng + ?Sized>(state: &ReconState, rng: &mut R) -> f64 {
    let nstar = state.nstar();
    let p = state.p;
    let mut u: f64 = rng.random();
    let mut pick = nstar;
    let mut w = p;
    for j in 1..nstar {
        u -= w;
        if u <= 0.0 {
            pick = j;
            break;
        }
        w *= 1.0 - p;
    }
    let lambda = state.lambdas[pick - 1];
    Normal::new(0.0, (1.0 / lambda).sqrt()).unwrap().sample(rng)
}

/// Ordinary (unit-weight) least-squares fit of the map coefficients;
/// used to initialize chains.
pub fn ols_fit(x: &Trajectory, spec: &ModelSpec) -> Result<Vec<f64>> {
    let state = ReconState {
        p: 0.5,
        lambdas: vec![1.0],
        allocations: vec![1; x.len()],
        levels: vec![1; x.len()],
        theta: vec![0.0; spec.dim()],
        initial: x.initial.clone(),
    };
    theta_conditional_mean(&state, x, spec)
}
