//! Trade-off between proximity and noise reduction: rerun the chain over
//! a log-spaced grid of the proximity parameter rho and tabulate the
//! average correction E0 against the residual indeterminism Edyn.
//!
//! ```sh
//! cargo run --release --example rho_sweep
//! ```

use dnrr::dynamics::{simulate, MixtureNoise, ModelSpec, PolynomialMap, Trajectory};
use dnrr::estimation::spearman;
use dnrr::metrics;
use dnrr::orchestrator::{run_replicated, ChainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let map = PolynomialMap::henon();
    let noise = MixtureNoise::two_component(1, 0.21e-4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = simulate(&map, &noise, 300, &[0.5, 0.5], &mut rng, 1e3, Some((3.0, 0.3))).unwrap();
    let spec = ModelSpec::from(&map);

    let lo: f64 = 1e2;
    let hi: f64 = 2e6;
    let ratio = (hi / lo).powf(1.0 / 9.0);
    let grid: Vec<f64> = (0..10).map(|k| lo * ratio.powi(k)).collect();
    let configs: Vec<ChainConfig> = grid
        .iter()
        .map(|&rho| ChainConfig {
            iterations: 20_000,
            burn_in: 5_000,
            ..ChainConfig::desk_scale(7, rho)
        })
        .collect();

    println!("running {} chains in parallel...", configs.len());
    let results = run_replicated(&x, &spec, &configs);

    println!("{:>12} {:>10} {:>10} {:>8}", "rho", "E0", "Edyn(y)", "Rdyn");
    let mut e0s = Vec::new();
    let mut edyns = Vec::new();
    for (rho, res) in grid.iter().zip(results) {
        let chain = res.unwrap();
        let k = chain.y_draws.len() as f64;
        let mut y_mean = vec![0.0; chain.n];
        for row in &chain.y_draws {
            for (a, b) in y_mean.iter_mut().zip(row) {
                *a += b / k;
            }
        }
        let y = Trajectory::new(y_mean, x.initial.clone(), Default::default()).unwrap();
        let map_hat = spec.to_map(chain.theta_mean()).unwrap();
        let e0 = metrics::avg_correction(&x.values, &y.values).unwrap();
        let ex = metrics::avg_dynamical_error(&x, &map_hat).unwrap();
        let ey = metrics::avg_dynamical_error(&y, &map_hat).unwrap();
        println!("{rho:>12.3e} {e0:>10.5} {ey:>10.5} {:>8.4}", 1.0 - ey / ex);
        e0s.push(e0);
        edyns.push(ey);
    }
    println!("spearman(rho, E0)   = {:+.3}", spearman(&grid, &e0s).unwrap());
    println!("spearman(rho, Edyn) = {:+.3}", spearman(&grid, &edyns).unwrap());
}
