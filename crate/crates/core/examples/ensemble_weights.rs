//! Build the multi-fidelity ensemble from three groups of increasingly
//! faithful measurements and show how the weights follow ranking quality.

use mfes_hb::ensemble::{build_ensemble, discriminate, FidelityGroup};
use mfes_hb::{ConfigurationSpace, EnsembleParams, ForestParams, ParameterSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> mfes_hb::Result<()> {
    println!("discriminate([0.5, 1.0], theta=3) = {:?}", discriminate(&[0.5, 1.0], 3));

    let space = ConfigurationSpace::new(vec![
        ParameterSpec::continuous("x", 0.0, 1.0)?,
        ParameterSpec::continuous("y", 0.0, 1.0)?,
    ])?;
    let truth = |v: &[f64]| (v[0] - 0.3).powi(2) + (v[1] - 0.6).powi(2);
    // low resources see a distorted objective
    let distortion = |v: &[f64]| (9.0 * v[0]).sin() * (7.0 * v[1]).cos();

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let levels = [(1.0, 0.6, 80), (3.0, 0.2, 40), (9.0, 0.0, 25)];
    let mut groups = Vec::new();
    for (resource, bias, n) in levels {
        let mut g = FidelityGroup::new(resource);
        for _ in 0..n {
            let c = space.sample_uniform(&mut rng);
            let v = space.encode(&c)?;
            g.push(c, truth(&v) + bias * distortion(&v));
        }
        groups.push(g);
    }

    let ens = build_ensemble(&groups, &space, &ForestParams::default(), &EnsembleParams::default(), &mut rng)?
        .expect("every group has data");
    for ((r, w), p) in ens.resources().iter().zip(ens.weights()).zip(ens.fractions()) {
        let p = p.map_or("-".to_owned(), |p| format!("{p:.3}"));
        println!("resource {r:>3}: order-preserving fraction {p:>6}, weight {w:.3}");
    }
    let fused = ens.predict(&[0.3, 0.6])?;
    println!("fused prediction at the optimum: mean {:.3}, std {:.3}", fused.mean, fused.std_dev());
    Ok(())
}
