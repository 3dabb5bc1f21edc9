//! Simulate a noisy chaotic series and write it to a trajectory file.
//!
//! ```sh
//! cargo run --release --example simulate_series -- out.csv
//! ```

use dnrr::dynamics::{simulate, MixtureNoise, PolynomialMap, DEFAULT_GUARD};
use dnrr::metrics;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let out = std::env::args().nth(1).unwrap_or_else(|| "trajectory.csv".into());

    let map = PolynomialMap::henon();
    let noise = MixtureNoise::two_component(1, 0.21e-4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);

    // Keep resampling until the realized noise level lands near 3%.
    let x = simulate(&map, &noise, 1000, &[0.5, 0.5], &mut rng, DEFAULT_GUARD, Some((3.0, 0.3)))
        .expect("bounded realization");

    println!("n = {}", x.len());
    println!("noise level = {:.3}%", x.meta.eta.unwrap());
    println!("restarts    = {}", x.meta.rejections.unwrap());
    println!("tail flatness of the noise = {:.3}", metrics::tail_flatness(&noise));

    x.save(std::path::Path::new(&out)).unwrap();
    println!("wrote {out}");
}
