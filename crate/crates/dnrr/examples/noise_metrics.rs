//! Closed-form properties of the two-component noise family: tail
//! flatness across the weight parameter and noise levels on a simulated
//! series.

use dnrr::dynamics::{simulate, MixtureNoise, PolynomialMap};
use dnrr::metrics::{noise_level, sample_sd, tail_flatness};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    println!("single normal: TF = {:.4} (= sqrt(2/pi))", tail_flatness(&MixtureNoise::single(1.0).unwrap()));
    for l in 1..=4 {
        let f = MixtureNoise::two_component(l, 0.21e-4).unwrap();
        println!(
            "f_2,{l}: weights ({:.1}, {:.1})  sd = {:.5}  TF = {:.3}",
            f.weights[0],
            f.weights[1],
            f.sd(),
            tail_flatness(&f)
        );
    }

    let map = PolynomialMap::cubic(2.55);
    let noise = MixtureNoise::two_component(1, 0.55e-4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = simulate(&map, &noise, 200, &[0.0], &mut rng, 1e3, None).unwrap();
    println!("cubic series: sd = {:.4}", sample_sd(&x.values));
    println!("noise level eta = {:.2}%", noise_level(noise.sd(), &x.values).unwrap());
}
