//! The blocked Gibbs loop: per iteration, the reconstruction group `G1 =
//! {p, lambdas, allocations, levels, theta, initial}` is updated given the
//! observed series, then the replication group `G2 = {tau, y}` given `G1`.
//! Burn-in, proposal adaptation, thinning and chain persistence live here.

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{ModelSpec, Trajectory};
use crate::gsbr::{self, Priors, ReconState};
use crate::replicator::{self, ReplicaState};
use crate::{Error, Result};

/// Settings for one chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    /// Total Gibbs iterations K.
    pub iterations: usize,
    pub burn_in: usize,
    /// Thinning for scalar and coefficient draws.
    pub thin: usize,
    /// Thinning for stored shadow-trajectory rows (memory bound).
    pub y_thin: usize,
    pub seed: u64,
    /// Proximity parameter rho.
    pub rho: f64,
    pub priors: Priors,
    /// Sweeps per acceptance window during burn-in adaptation.
    pub adaptation_window: usize,
    /// Initial proposal sd for the shadow-trajectory sites.
    pub nu0: f64,
    /// Random-walk step for the initial-condition coordinates.
    pub initial_step: f64,
    pub guard: f64,
}

impl ChainConfig {
    /// Full-scale settings: 25e4 iterations with a 5e4 burn-in.
    pub fn full_scale(seed: u64, rho: f64) -> Self {
        Self {
            iterations: 250_000,
            burn_in: 50_000,
            thin: 10,
            y_thin: 100,
            seed,
            rho,
            priors: Priors::default(),
            adaptation_window: 100,
            nu0: 0.01,
            initial_step: 0.05,
            guard: crate::dynamics::DEFAULT_GUARD,
        }
    }

    /// Desk-scale settings backing the CI acceptance runs.
    pub fn desk_scale(seed: u64, rho: f64) -> Self {
        Self {
            iterations: 30_000,
            burn_in: 10_000,
            thin: 10,
            y_thin: 10,
            ..Self::full_scale(seed, rho)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.iterations {
            return Err(Error::Config("burn_in must be < iterations".into()));
        }
        if self.thin == 0 || self.y_thin == 0 {
            return Err(Error::Config("thin must be >= 1".into()));
        }
        if self.rho <= 0.0 || self.nu0 <= 0.0 || self.guard <= 0.0 || self.initial_step <= 0.0 {
            return Err(Error::Config(
                "rho, nu0, guard and initial_step must be positive".into(),
            ));
        }
        if self.adaptation_window == 0 {
            return Err(Error::Config("adaptation_window must be >= 1".into()));
        }
        self.priors.validate()
    }
}

/// Post-burn-in, thinned draws of one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorChain {
    pub config: ChainConfig,
    /// Series length n.
    pub n: usize,
    /// Coefficient draws, one row per stored draw.
    pub theta_draws: Vec<Vec<f64>>,
    pub tau_draws: Vec<f64>,
    pub p_draws: Vec<f64>,
    /// Predictive draws from the estimated noise process.
    pub noise_predictive_draws: Vec<f64>,
    /// Active-component count per stored draw.
    pub nstar_trace: Vec<usize>,
    /// Shadow-trajectory rows (draws x n), thinned by `y_thin`.
    pub y_draws: Vec<Vec<f64>>,
    /// Post-burn-in per-site acceptance rates of the y-sweep.
    pub acceptance_site: Vec<f64>,
    /// Post-burn-in global acceptance rate of the y-sweep.
    pub acceptance_global: f64,
    /// Frozen proposal sd after adaptation.
    pub nu_final: f64,
}

impl PosteriorChain {
    pub fn theta_mean(&self) -> Vec<f64> {
        let m = self.theta_draws.first().map_or(0, Vec::len);
        let mut mean = vec![0.0; m];
        for row in &self.theta_draws {
            for (a, b) in mean.iter_mut().zip(row) {
                *a += b;
            }
        }
        let k = self.theta_draws.len().max(1) as f64;
        mean.iter_mut().for_each(|v| *v /= k);
        mean
    }

    /// Column of per-site y draws.
    pub fn y_marginal(&self, site: usize) -> Vec<f64> {
        self.y_draws.iter().map(|row| row[site]).collect()
    }
}

fn init_state(x: &Trajectory, spec: &ModelSpec) -> Result<ReconState> {
    let theta = gsbr::ols_fit(x, spec)?;
    Ok(ReconState {
        p: 0.5,
        lambdas: vec![1.0],
        allocations: vec![1; x.len()],
        levels: vec![1; x.len()],
        theta,
        initial: x.initial.clone(),
    })
}

fn run_inner(
    x: &Trajectory,
    spec: &ModelSpec,
    config: &ChainConfig,
    reconstruction_only: bool,
) -> Result<PosteriorChain> {
    config.validate()?;
    if x.lag() != spec.lag {
        return Err(Error::DimensionMismatch {
            expected: spec.lag,
            got: x.lag(),
        });
    }
    if x.is_empty() {
        return Err(Error::Config("cannot run a chain on an empty series".into()));
    }
    let n = x.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut recon = init_state(x, spec)?;
    let tau0 = config.priors.tau_shape_rate.0 / config.priors.tau_shape_rate.1;
    let mut replica = ReplicaState::init(x, &recon.initial, tau0, config.rho, config.nu0, config.guard);

    let kept = (config.iterations - config.burn_in) / config.thin;
    let mut chain = PosteriorChain {
        config: *config,
        n,
        theta_draws: Vec::with_capacity(kept),
        tau_draws: Vec::new(),
        p_draws: Vec::with_capacity(kept),
        noise_predictive_draws: Vec::with_capacity(kept),
        nstar_trace: Vec::with_capacity(kept),
        y_draws: Vec::new(),
        acceptance_site: vec![0.0; n],
        acceptance_global: 0.0,
        nu_final: config.nu0,
    };

    let mut window_accepted = 0usize;
    let mut post_accepted = 0usize;
    let mut post_sweeps = 0usize;
    let mut site_accepts = vec![0u64; n];
    let mut marks = vec![0u8; n];

    for t in 1..=config.iterations {
        // G1: reconstruction given the observed series only.
        gsbr::update_levels(&mut recon, &mut rng);
        gsbr::resize_lambdas(&mut recon, &config.priors, &mut rng);
        gsbr::update_allocations(&mut recon, x, spec, &mut rng);
        gsbr::update_lambdas(&mut recon, x, spec, &config.priors, &mut rng);
        gsbr::update_initial(&mut recon, x, spec, config.initial_step, &mut rng);
        gsbr::update_theta(&mut recon, x, spec, &mut rng)?;
        gsbr::update_p(&mut recon, &config.priors, &mut rng);
        let z = gsbr::sample_noise_predictive(&recon, &mut rng);

        // G2: replication given G1.
        let accepted = if reconstruction_only {
            0
        } else {
            replica.y_initial.copy_from_slice(&recon.initial);
            marks.fill(0);
            let a = replicator::mh_sweep(
                &mut replica,
                &recon.theta,
                spec,
                x,
                &mut rng,
                Some(&mut marks),
            );
            replicator::update_tau(&mut replica, &recon.theta, spec, &config.priors, &mut rng);
            a
        };

        if t <= config.burn_in {
            window_accepted += accepted;
            if !reconstruction_only && t % config.adaptation_window == 0 {
                let rate = window_accepted as f64 / (config.adaptation_window * n) as f64;
                replica.nu = replicator::adapt_nu(replica.nu, rate);
                window_accepted = 0;
            }
            continue;
        }

        // Post burn-in: nu frozen, collect draws.
        let idx = t - config.burn_in;
        if !reconstruction_only {
            post_accepted += accepted;
            post_sweeps += 1;
            for (s, &m) in site_accepts.iter_mut().zip(&marks) {
                *s += m as u64;
            }
        }
        if idx % config.thin == 0 {
            chain.theta_draws.push(recon.theta.clone());
            chain.p_draws.push(recon.p);
            chain.noise_predictive_draws.push(z);
            chain.nstar_trace.push(recon.nstar());
            if !reconstruction_only {
                chain.tau_draws.push(replica.tau);
            }
        }
        if !reconstruction_only && idx % config.y_thin == 0 {
            if replica.y.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(
                    "shadow trajectory escaped the guard".into(),
                ));
            }
            chain.y_draws.push(replica.y.clone());
        }
    }

    chain.nu_final = replica.nu;
    if post_sweeps > 0 {
        chain.acceptance_global = post_accepted as f64 / (post_sweeps * n) as f64;
        for (r, &c) in chain.acceptance_site.iter_mut().zip(&site_accepts) {
            *r = c as f64 / post_sweeps as f64;
        }
    }
    Ok(chain)
}

/// Run the full DNRR chain: S1-S9 per iteration, deterministic given the
/// seed.
pub fn run_chain(x: &Trajectory, spec: &ModelSpec, config: &ChainConfig) -> Result<PosteriorChain> {
    run_inner(x, spec, config, false)
}

/// Reconstruction-only chain (no shadow trajectory): used to re-estimate
/// the map and noise density from an already noise-reduced series.
pub fn run_reconstruction(
    x: &Trajectory,
    spec: &ModelSpec,
    config: &ChainConfig,
) -> Result<PosteriorChain> {
    run_inner(x, spec, config, true)
}

/// Run independent chains over a parameter grid in parallel; per-chain
/// failures are isolated.
pub fn run_replicated(
    x: &Trajectory,
    spec: &ModelSpec,
    configs: &[ChainConfig],
) -> Vec<Result<PosteriorChain>> {
    configs
        .par_iter()
        .map(|cfg| run_chain(x, spec, cfg))
        .collect()
}

// ---------------------------------------------------------------------------
// Persistence: columnar CSVs plus a JSON manifest with a content hash.
// ---------------------------------------------------------------------------

fn fmt_row(vals: &[f64]) -> String {
    vals.iter()
        .map(|v| format!("{v:.16e}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text =
        std::fs::read_to_string(path).map_err(|_| Error::MissingFile(path.to_path_buf()))?;
    let mut lines = text.lines().enumerate();
    let header = lines
        .next()
        .map(|(_, l)| l.split(',').map(str::to_string).collect())
        .unwrap_or_default();
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|t| {
                t.trim().parse::<f64>().map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    message: format!("bad number {t:?}: {e}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    config: ChainConfig,
    n: usize,
    acceptance_global: f64,
    nu_final: f64,
    content_hash: String,
}

impl PosteriorChain {
    /// Persist the chain into `dir` as `theta.csv`, `scalars.csv`,
    /// `y.csv`, `acceptance.csv` and `manifest.json`. The manifest records
    /// the config, seed and a SHA-256 hash over the data files.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let m = self.theta_draws.first().map_or(0, Vec::len);
        let mut theta = (0..m)
            .map(|k| format!("theta{k}"))
            .collect::<Vec<_>>()
            .join(",");
        theta.push('\n');
        for row in &self.theta_draws {
            writeln!(theta, "{}", fmt_row(row)).unwrap();
        }

        let mut scalars = String::from("tau,p,z,nstar\n");
        for i in 0..self.p_draws.len() {
            let tau = self.tau_draws.get(i).copied().unwrap_or(f64::NAN);
            writeln!(
                scalars,
                "{:.16e},{:.16e},{:.16e},{}",
                tau, self.p_draws[i], self.noise_predictive_draws[i], self.nstar_trace[i]
            )
            .unwrap();
        }

        let mut y = (0..self.n)
            .map(|k| format!("y{k}"))
            .collect::<Vec<_>>()
            .join(",");
        y.push('\n');
        for row in &self.y_draws {
            writeln!(y, "{}", fmt_row(row)).unwrap();
        }

        let mut acc = String::from("site,rate\n");
        for (i, r) in self.acceptance_site.iter().enumerate() {
            writeln!(acc, "{},{:.16e}", i + 1, r).unwrap();
        }

        let mut hasher = Sha256::new();
        for part in [&theta, &scalars, &y, &acc] {
            hasher.update(part.as_bytes());
        }
        let hash = hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect::<String>();

        std::fs::write(dir.join("theta.csv"), theta)?;
        std::fs::write(dir.join("scalars.csv"), scalars)?;
        std::fs::write(dir.join("y.csv"), y)?;
        std::fs::write(dir.join("acceptance.csv"), acc)?;
        let manifest = Manifest {
            config: self.config,
            n: self.n,
            acceptance_global: self.acceptance_global,
            nu_final: self.nu_final,
            content_hash: hash,
        };
        std::fs::write(
            dir.join("manifest.json"),
            serde_json::to_string_pretty(&manifest)
                .map_err(|e| Error::Numeric(e.to_string()))?,
        )?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join("manifest.json");
        let manifest: Manifest = serde_json::from_str(
            &std::fs::read_to_string(&manifest_path)
                .map_err(|_| Error::MissingFile(manifest_path.clone()))?,
        )
        .map_err(|e| Error::Parse {
            path: manifest_path,
            line: 0,
            message: e.to_string(),
        })?;
        let (_, theta_rows) = parse_csv(&dir.join("theta.csv"))?;
        let (_, scalar_rows) = parse_csv(&dir.join("scalars.csv"))?;
        let (_, y_rows) = parse_csv(&dir.join("y.csv"))?;
        let (_, acc_rows) = parse_csv(&dir.join("acceptance.csv"))?;
        let mut tau_draws = Vec::new();
        let mut p_draws = Vec::new();
        let mut z_draws = Vec::new();
        let mut nstar = Vec::new();
        for row in &scalar_rows {
            if !row[0].is_nan() {
                tau_draws.push(row[0]);
            }
            p_draws.push(row[1]);
            z_draws.push(row[2]);
            nstar.push(row[3] as usize);
        }
        Ok(Self {
            config: manifest.config,
            n: manifest.n,
            theta_draws: theta_rows,
            tau_draws,
            p_draws,
            noise_predictive_draws: z_draws,
            nstar_trace: nstar,
            y_draws: y_rows,
            acceptance_site: acc_rows.iter().map(|r| r[1]).collect(),
            acceptance_global: manifest.acceptance_global,
            nu_final: manifest.nu_final,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{simulate, MixtureNoise, PolynomialMap};

    fn small_config(seed: u64) -> ChainConfig {
        ChainConfig {
            iterations: 400,
            burn_in: 100,
            thin: 5,
            y_thin: 10,
            ..ChainConfig::desk_scale(seed, 1e2)
        }
    }

    fn small_data(seed: u64) -> (Trajectory, ModelSpec) {
        let map = PolynomialMap::henon();
        let noise = MixtureNoise::two_component(1, 0.21e-4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = simulate(&map, &noise, 60, &[0.5, 0.5], &mut rng, 1e3, None).unwrap();
        (x, ModelSpec::from(&map))
    }

    #[test]
    fn config_validation() {
        let mut c = small_config(1);
        c.validate().unwrap();
        c.burn_in = c.iterations;
        assert!(c.validate().is_err());
        let mut c = small_config(1);
        c.thin = 0;
        assert!(c.validate().is_err());
        let mut c = small_config(1);
        c.rho = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn chains_are_deterministic_given_seed() {
        let (x, spec) = small_data(2);
        let cfg = small_config(7);
        let a = run_chain(&x, &spec, &cfg).unwrap();
        let b = run_chain(&x, &spec, &cfg).unwrap();
        assert_eq!(a, b);
        let c = run_chain(&x, &spec, &ChainConfig { seed: 8, ..cfg }).unwrap();
        assert_ne!(a.theta_draws, c.theta_draws);
    }

    #[test]
    fn chain_dimensions_match_config() {
        let (x, spec) = small_data(3);
        let cfg = small_config(5);
        let chain = run_chain(&x, &spec, &cfg).unwrap();
        let kept = (cfg.iterations - cfg.burn_in) / cfg.thin;
        assert_eq!(chain.theta_draws.len(), kept);
        assert_eq!(chain.p_draws.len(), kept);
        assert_eq!(chain.tau_draws.len(), kept);
        assert_eq!(chain.noise_predictive_draws.len(), kept);
        assert_eq!(chain.nstar_trace.len(), kept);
        assert_eq!(
            chain.y_draws.len(),
            (cfg.iterations - cfg.burn_in) / cfg.y_thin
        );
        assert!(chain.y_draws.iter().all(|row| row.len() == x.len()));
        assert!(chain.p_draws.iter().all(|&p| (0.0..1.0).contains(&p)));
        assert!(chain.tau_draws.iter().all(|&t| t > 0.0));
        assert!((0.0..=1.0).contains(&chain.acceptance_global));
    }

    #[test]
    fn reconstruction_only_skips_the_shadow_trajectory() {
        let (x, spec) = small_data(4);
        let chain = run_reconstruction(&x, &spec, &small_config(5)).unwrap();
        assert!(chain.y_draws.is_empty());
        assert!(chain.tau_draws.is_empty());
        assert!(!chain.theta_draws.is_empty());
    }

    #[test]
    fn replicated_runs_isolate_per_chain_failures() {
        let (x, spec) = small_data(5);
        let good = small_config(1);
        let bad = ChainConfig {
            burn_in: 400,
            ..good
        };
        let results = run_replicated(&x, &spec, &[good, bad, good]);
        assert!(results[0].is_ok());
        assert!(results[1].is_err());
        assert!(results[2].is_ok());
    }

    #[test]
    fn empty_series_is_rejected() {
        let spec = ModelSpec::new(1, 1).unwrap();
        let x = Trajectory::new(vec![], vec![0.5], Default::default()).unwrap();
        assert!(run_chain(&x, &spec, &small_config(1)).is_err());
    }

    #[test]
    fn save_load_roundtrip() {
        let (x, spec) = small_data(6);
        let chain = run_chain(&x, &spec, &small_config(9)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        chain.save(dir.path()).unwrap();
        let back = PosteriorChain::load(dir.path()).unwrap();
        assert_eq!(back, chain);
    }

    #[test]
    fn load_rejects_missing_manifest() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            PosteriorChain::load(dir.path()),
            Err(Error::MissingFile(_))
        ));
    }
}
