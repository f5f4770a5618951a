//! Fit the random forest surrogate on a 1-d function and print its mean
//! and spread on a grid.

use mfes_hb::{ForestParams, ForestSurrogate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> mfes_hb::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let data: Vec<(Vec<f64>, f64)> = (0..40)
        .map(|_| {
            let x: f64 = rng.random();
            (vec![x], (6.0 * x).sin() + 0.05 * rng.random::<f64>())
        })
        .collect();
    let forest = ForestSurrogate::fit(&data, &ForestParams::default(), &mut rng)?;
    println!("{:>5} {:>8} {:>8} {:>8}", "x", "truth", "mean", "std");
    for i in 0..=10 {
        let x = i as f64 / 10.0;
        let p = forest.predict(&[x])?;
        println!("{x:>5.2} {:>8.3} {:>8.3} {:>8.3}", (6.0 * x).sin(), p.mean, p.std_dev());
    }
    Ok(())
}
