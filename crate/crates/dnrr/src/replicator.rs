//! Noise-reduction stage: per-site Metropolis-within-Gibbs updates of the
//! shadow trajectory `y`, the replication precision `tau`, and the
//! proximity machinery tying `y` to the observed series.
//!
//! Each site `y_j` has full conditional `pi(y_j | ..) ~ exp(-C(y_j)/2)`
//! where `C` collects the dynamics residuals in which `y_j` appears plus
//! the proximity penalty `rho (y_j - x_j)^2`.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};

use crate::dynamics::{extend_series, fill_window, ModelSpec, Trajectory};
use crate::gsbr::Priors;
use crate::{Error, Result};

/// State of the replication group `G2` for one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaState {
    /// Shadow trajectory `y_1..y_n`.
    pub y: Vec<f64>,
    /// Initial block `(y_0, .., y_{1-d})`, pinned to the sampled `x_{1:d}`.
    pub y_initial: Vec<f64>,
    /// Replication precision `tau = 1/delta`.
    pub tau: f64,
    /// Proximity parameter.
    pub rho: f64,
    /// Random-walk proposal standard deviation.
    pub nu: f64,
    /// Divergence guard; proposals outside `[-guard, guard]` are rejected.
    pub guard: f64,
}

impl ReplicaState {
    /// Initialize at the observed trajectory with the given sampled
    /// initial conditions.
    pub fn init(x: &Trajectory, x_initial: &[f64], tau: f64, rho: f64, nu: f64, guard: f64) -> Self {
        Self {
            y: x.values.clone(),
            y_initial: x_initial.to_vec(),
            tau,
            rho,
            nu,
            guard,
        }
    }
}

/// `h(m) = (y_m - g(theta, y_{m:d}))^2` over the extended shadow series,
/// with `y_candidate` substituted at site `j` when `m`'s window or left
/// side touches it (`yext` must already carry the substitution).
fn dynamics_term(
    yext: &[f64],
    d: usize,
    m: usize,
    theta: &[f64],
    spec: &ModelSpec,
    window: &mut [f64],
) -> f64 {
    fill_window(yext, d, m, window);
    let r = yext[d + m - 1] - spec.eval_with(theta, window);
    r * r
}

/// Sum of the dynamics terms in which site `j` appears: `h(j+k)` for
/// `k = 0..=d`, truncated to indices within `1..=n`.
fn local_dynamics_sum(
    yext: &[f64],
    d: usize,
    n: usize,
    j: usize,
    theta: &[f64],
    spec: &ModelSpec,
    window: &mut [f64],
) -> f64 {
    let kmax = d.min(n - j);
    (0..=kmax)
        .map(|k| dynamics_term(yext, d, j + k, theta, spec, window))
        .sum()
}

/// The full conditional cost `C(y_j | ..)` at a candidate value: the
/// `tau`-weighted dynamics terms touching site `j` plus the proximity
/// penalty `rho (y_j - x_j)^2`.
pub fn cost(
    j: usize,
    y_candidate: f64,
    state: &ReplicaState,
    theta: &[f64],
    spec: &ModelSpec,
    x: &Trajectory,
) -> Result<f64> {
    let n = state.y.len();
    if j == 0 || j > n {
        return Err(Error::Config(format!("site index {j} out of 1..={n}")));
    }
    let d = spec.lag;
    let mut yext = extend_series(&state.y_initial, &state.y);
    yext[d + j - 1] = y_candidate;
    let mut window = vec![0.0; d];
    let dyn_sum = local_dynamics_sum(&yext, d, n, j, theta, spec, &mut window);
    Ok(state.tau * dyn_sum + state.rho * (y_candidate - x.values[j - 1]).powi(2))
}

/// One sequential Metropolis-within-Gibbs sweep over `j = 1..n` (S8).
/// Proposals are symmetric normal steps of sd `nu`; acceptance probability
/// `min(1, exp(-(C(y*) - C(y))/2))`. Proposals beyond the guard are
/// rejected outright. Marks accepted sites in `accepted` and returns the
/// number of acceptances.
pub fn mh_sweep<R: Rng + ?Sized>(
    state: &mut ReplicaState,
    theta: &[f64],
    spec: &ModelSpec,
    x: &Trajectory,
    rng: &mut R,
    accepted: Option<&mut [u8]>,
) -> usize {
    let n = state.y.len();
    let d = spec.lag;
    let mut yext = extend_series(&state.y_initial, &state.y);
    let mut window = vec![0.0; d];
    let normal = Normal::new(0.0, state.nu).expect("nu must be positive");
    let mut marks = accepted;
    let mut n_accepted = 0;
    for j in 1..=n {
        let old = yext[d + j - 1];
        let proposal = old + normal.sample(rng);
        if !proposal.is_finite() || proposal.abs() > state.guard {
            continue;
        }
        let c_old = state.tau * local_dynamics_sum(&yext, d, n, j, theta, spec, &mut window)
            + state.rho * (old - x.values[j - 1]).powi(2);
        yext[d + j - 1] = proposal;
        let c_new = state.tau * local_dynamics_sum(&yext, d, n, j, theta, spec, &mut window)
            + state.rho * (proposal - x.values[j - 1]).powi(2);
        if -0.5 * (c_new - c_old) >= rng.random::<f64>().ln() {
            n_accepted += 1;
            if let Some(m) = marks.as_deref_mut() {
                m[j - 1] = 1;
            }
        } else {
            yext[d + j - 1] = old;
        }
    }
    state.y.copy_from_slice(&yext[d..]);
    n_accepted
}

/// S9: `tau ~ Gamma(g1 + n/2, g2 + sum (y_i - g(theta, y_{i:d}))^2 / 2)`.
pub fn update_tau<R: Rng + ?Sized>(
    state: &mut ReplicaState,
    theta: &[f64],
    spec: &ModelSpec,
    priors: &Priors,
    rng: &mut R,
) {
    let d = spec.lag;
    let n = state.y.len();
    let yext = extend_series(&state.y_initial, &state.y);
    let mut window = vec![0.0; d];
    let mut ss = 0.0;
    for m in 1..=n {
        ss += dynamics_term(&yext, d, m, theta, spec, &mut window);
    }
    let (g1, g2) = priors.tau_shape_rate;
    state.tau = Gamma::new(g1 + n as f64 / 2.0, 1.0 / (g2 + ss / 2.0))
        .expect("gamma parameters")
        .sample(rng);
}

/// Proximity probability under exponentially distributed squared radii
/// `gamma_i^2 ~ Exp(rho/2)`:
/// `P(all |x_i - y_i| < gamma_i) = exp(-(rho/2) sum (x_i - y_i)^2)`.
pub fn proximity_probability(x: &[f64], y: &[f64], rho: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    let ss: f64 = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();
    Ok((-0.5 * rho * ss).exp())
}

/// Hard-box proximity variant with constant radii: 1 if every
/// `|x_i - y_i| < gamma_bar_i`, else 0. Kept for testing; the sampler uses
/// the exponential-radius case.
pub fn proximity_probability_box(x: &[f64], y: &[f64], gamma_bars: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() != gamma_bars.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len().min(gamma_bars.len()),
        });
    }
    let inside = x
        .iter()
        .zip(y)
        .zip(gamma_bars)
        .all(|((a, b), g)| (a - b).abs() < *g);
    Ok(if inside { 1.0 } else { 0.0 })
}

/// Target acceptance band for the shadow-trajectory proposals.
pub const ACCEPTANCE_BAND: (f64, f64) = (0.25, 0.35);

/// Burn-in-only multiplicative step-size adaptation: widen when accepting
/// too often, shrink when too rarely, leave alone inside the band.
pub fn adapt_nu(nu: f64, observed_acceptance: f64) -> f64 {
    if observed_acceptance > ACCEPTANCE_BAND.1 {
        nu * 1.1
    } else if observed_acceptance < ACCEPTANCE_BAND.0 {
        nu / 1.1
    } else {
        nu
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::TrajectoryMeta;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zeros(n: usize) -> Trajectory {
        Trajectory::new(vec![0.0; n], vec![0.0], TrajectoryMeta::default()).unwrap()
    }

    fn flat_state(x: &Trajectory, tau: f64, rho: f64) -> ReplicaState {
        ReplicaState::init(x, &x.initial, tau, rho, 0.1, 1e3)
    }

    #[test]
    fn cost_reduces_to_proximity_when_tau_is_zero() {
        let x = zeros(3);
        let spec = ModelSpec::new(1, 1).unwrap();
        let s = flat_state(&x, 0.0, 2.0);
        let theta = vec![0.0, 0.0];
        let c = cost(2, 3.0, &s, &theta, &spec, &x).unwrap();
        assert!((c - 2.0 * 9.0).abs() < 1e-12);
    }

    #[test]
    fn cost_interior_site_flat_map() {
        // g identically zero, tau = rho = 1, x and y zero: moving the
        // interior site to 2 costs h(j) = 4, h(j+1) = 0, proximity 4.
        let x = zeros(3);
        let spec = ModelSpec::new(1, 1).unwrap();
        let s = flat_state(&x, 1.0, 1.0);
        let theta = vec![0.0, 0.0];
        let c = cost(2, 2.0, &s, &theta, &spec, &x).unwrap();
        assert!((c - 8.0).abs() < 1e-12);
    }

    #[test]
    fn cost_interior_site_identity_map() {
        // Identity map: the moved site also breaks the next transition,
        // h(j) = 4, h(j+1) = (0 - 2)^2 = 4, proximity 4.
        let x = zeros(3);
        let spec = ModelSpec::new(1, 1).unwrap();
        let s = flat_state(&x, 1.0, 1.0);
        let theta = vec![0.0, 1.0];
        let c = cost(2, 2.0, &s, &theta, &spec, &x).unwrap();
        assert!((c - 12.0).abs() < 1e-12);
    }

    #[test]
    fn cost_tail_site_has_single_dynamics_term() {
        let x = zeros(3);
        let spec = ModelSpec::new(1, 1).unwrap();
        let s = flat_state(&x, 1.0, 1.0);
        let theta = vec![0.0, 1.0];
        // j = n: only h(n) remains, (3 - 0)^2, plus proximity 9.
        let c = cost(3, 3.0, &s, &theta, &spec, &x).unwrap();
        assert!((c - 18.0).abs() < 1e-12);
    }

    #[test]
    fn cost_rejects_out_of_range_sites() {
        let x = zeros(3);
        let spec = ModelSpec::new(1, 1).unwrap();
        let s = flat_state(&x, 1.0, 1.0);
        assert!(cost(0, 0.0, &s, &[0.0, 0.0], &spec, &x).is_err());
        assert!(cost(4, 0.0, &s, &[0.0, 0.0], &spec, &x).is_err());
    }

    #[test]
    fn sweep_is_deterministic_and_bounded_by_guard() {
        let x = zeros(50);
        let spec = ModelSpec::new(1, 1).unwrap();
        let theta = vec![0.0, 0.9];
        let mut s1 = flat_state(&x, 10.0, 10.0);
        let mut s2 = flat_state(&x, 10.0, 10.0);
        let mut r1 = ChaCha8Rng::seed_from_u64(4);
        let mut r2 = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            mh_sweep(&mut s1, &theta, &spec, &x, &mut r1, None);
            mh_sweep(&mut s2, &theta, &spec, &x, &mut r2, None);
        }
        assert_eq!(s1.y, s2.y);
        assert!(s1.y.iter().all(|v| v.abs() <= s1.guard));
    }

    #[test]
    fn acceptance_marks_match_count() {
        let x = zeros(30);
        let spec = ModelSpec::new(1, 1).unwrap();
        let theta = vec![0.0, 0.5];
        let mut s = flat_state(&x, 1.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut marks = vec![0u8; 30];
        let a = mh_sweep(&mut s, &theta, &spec, &x, &mut rng, Some(&mut marks));
        assert_eq!(a, marks.iter().map(|&m| m as usize).sum::<usize>());
    }

    #[test]
    fn tau_update_matches_conjugate_moments() {
        // Flat map, fixed y: ss = sum y_i^2 is constant across draws.
        let x = zeros(4);
        let spec = ModelSpec::new(1, 1).unwrap();
        let mut s = flat_state(&x, 1.0, 1.0);
        s.y = vec![1.0, -1.0, 2.0, 0.0];
        let priors = Priors::default();
        let theta = vec![0.0, 0.0];
        let (g1, g2) = priors.tau_shape_rate;
        let want = (g1 + 2.0) / (g2 + 3.0);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let k = 20_000;
        let mut acc = 0.0;
        for _ in 0..k {
            update_tau(&mut s, &theta, &spec, &priors, &mut rng);
            acc += s.tau;
        }
        let got = acc / k as f64;
        assert!((got / want - 1.0).abs() < 0.01, "got {got}, want {want}");
    }

    #[test]
    fn proximity_probability_values() {
        let p = proximity_probability(&[1.0, 2.0], &[1.0, 2.0], 5.0).unwrap();
        assert!((p - 1.0).abs() < 1e-15);
        let p = proximity_probability(&[0.0], &[2.0], 1.0).unwrap();
        assert!((p - (-2.0f64).exp()).abs() < 1e-15);
        assert!(proximity_probability(&[0.0], &[0.0, 1.0], 1.0).is_err());
    }

    #[test]
    fn proximity_box_is_an_indicator() {
        let p = proximity_probability_box(&[0.0, 0.0], &[0.1, 0.2], &[0.2, 0.3]).unwrap();
        assert_eq!(p, 1.0);
        let p = proximity_probability_box(&[0.0, 0.0], &[0.1, 0.4], &[0.2, 0.3]).unwrap();
        assert_eq!(p, 0.0);
    }

    #[test]
    fn nu_adaptation_tracks_the_band() {
        assert!(adapt_nu(1.0, 0.5) > 1.0);
        assert!(adapt_nu(1.0, 0.1) < 1.0);
        assert_eq!(adapt_nu(1.0, 0.3), 1.0);
    }

    #[test]
    fn strong_proximity_pins_y_to_x() {
        // With rho huge and tau tiny, the shadow trajectory cannot drift
        // far from the observations.
        let x = Trajectory::new(
            (0..40).map(|i| (i as f64 * 0.7).sin()).collect(),
            vec![0.0],
            TrajectoryMeta::default(),
        )
        .unwrap();
        let spec = ModelSpec::new(1, 1).unwrap();
        let theta = vec![0.0, 0.0];
        let mut s = ReplicaState::init(&x, &x.initial, 1e-6, 1e8, 0.01, 1e3);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..200 {
            mh_sweep(&mut s, &theta, &spec, &x, &mut rng, None);
        }
        for (a, b) in s.y.iter().zip(&x.values) {
            assert!((a - b).abs() < 1e-2);
        }
    }
}
