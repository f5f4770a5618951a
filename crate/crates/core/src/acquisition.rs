//! Expected improvement and candidate selection.

use rand::Rng;
use serde::{Deserialize, Serialize};
use libm::erfc;

use crate::ensemble::EnsembleSurrogate;
use crate::error::{Error, Result};
use crate::space::{Configuration, ConfigurationSpace};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn normal_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Expected improvement below `best` of a Gaussian `N(mean, std^2)`.
/// With zero spread it reduces to `max(best - mean, 0)`.
pub fn expected_improvement(mean: f64, std: f64, best: f64) -> f64 {
    let gap = best - mean;
    if std <= 0.0 {
        return gap.max(0.0);
    }
    let z = gap / std;
    (gap * normal_cdf(z) + std * normal_pdf(z)).max(0.0)
}

/// Index of the largest value; the first one wins ties. `NaN`s are skipped.
pub fn argmax_first(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|b| b.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerParams {
    /// Probability of proposing a uniformly random configuration.
    pub rho: f64,
    /// Random candidates scored per acquisition step.
    pub n_candidates: usize,
}

impl Default for SamplerParams {
    fn default() -> Self {
        Self {
            rho: 0.2,
            n_candidates: 5000,
        }
    }
}

impl SamplerParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::invalid("rho", "must lie in [0, 1]"));
        }
        if self.n_candidates == 0 {
            return Err(Error::invalid("n_candidates", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalSource {
    Random,
    Acquisition,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub config: Configuration,
    pub source: ProposalSource,
}

/// Proposes the next configuration: uniformly random with probability
/// `rho` or when no ensemble is available, otherwise the candidate with
/// the highest expected improvement.
pub fn sample_next<R: Rng + ?Sized>(
    space: &ConfigurationSpace,
    ensemble: Option<&EnsembleSurrogate>,
    best: Option<f64>,
    params: &SamplerParams,
    rng: &mut R,
) -> Result<Proposal> {
    let explore = rng.random::<f64>() <= params.rho;
    let (Some(ensemble), Some(best), false) = (ensemble, best, explore) else {
        return Ok(Proposal {
            config: space.sample_uniform(rng),
            source: ProposalSource::Random,
        });
    };
    let candidates: Vec<Configuration> = (0..params.n_candidates)
        .map(|_| space.sample_uniform(rng))
        .collect();
    let scores = candidates
        .iter()
        .map(|c| {
            let p = ensemble.predict(&space.encode(c)?)?;
            Ok(expected_improvement(p.mean, p.std_dev(), best))
        })
        .collect::<Result<Vec<f64>>>()?;
    let i = argmax_first(&scores).unwrap_or(0);
    Ok(Proposal {
        config: candidates.into_iter().nth(i).expect("index within candidates"),
        source: ProposalSource::Acquisition,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{build_ensemble, EnsembleParams, FidelityGroup};
    use crate::forest::ForestParams;
    use crate::space::ParameterSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    // trapezoid rule over the improvement integrand, independent of the
    // closed form
    fn ei_numeric(mean: f64, std: f64, best: f64) -> f64 {
        let lo = mean - 12.0 * std;
        if best <= lo {
            return 0.0;
        }
        let n = 200_000;
        let h = (best - lo) / n as f64;
        let f = |y: f64| {
            let z = (y - mean) / std;
            (best - y) * (-0.5 * z * z).exp() / (std * (2.0 * std::f64::consts::PI).sqrt())
        };
        let mut total = 0.5 * (f(lo) + f(best));
        for i in 1..n {
            total += f(lo + i as f64 * h);
        }
        total * h
    }

    #[test]
    fn cdf_reference_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        let v = normal_cdf(1.0);
        assert!((v - 0.841_344_746_068_542_9).abs() < 1e-12, "{v}");
        assert!((normal_cdf(-1.959_963_984_540_054) - 0.025).abs() < 1e-12);
    }

    #[test]
    fn ei_matches_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..60 {
            let mean = rng.random_range(-3.0..3.0);
            let std = rng.random_range(0.05..2.0);
            let best = rng.random_range(-3.0..3.0);
            let a = expected_improvement(mean, std, best);
            let b = ei_numeric(mean, std, best);
            assert!((a - b).abs() < 1e-6, "{mean} {std} {best}: {a} vs {b}");
        }
    }

    #[test]
    fn ei_degenerate_spread() {
        assert_eq!(expected_improvement(1.0, 0.0, 3.0), 2.0);
        assert_eq!(expected_improvement(3.0, 0.0, 1.0), 0.0);
        assert!(expected_improvement(50.0, 1.0, 0.0) >= 0.0);
    }

    #[test]
    fn ei_monotone_in_mean_and_std() {
        let mut prev = f64::INFINITY;
        for i in 0..50 {
            let ei = expected_improvement(-2.0 + i as f64 * 0.1, 0.5, 0.0);
            assert!(ei <= prev);
            prev = ei;
        }
        let mut prev = 0.0;
        for i in 1..50 {
            let ei = expected_improvement(0.3, i as f64 * 0.05, 0.0);
            assert!(ei >= prev);
            prev = ei;
        }
    }

    #[test]
    fn argmax_keeps_first_tie() {
        assert_eq!(argmax_first(&[1.0, 3.0, 3.0, 2.0]), Some(1));
        assert_eq!(argmax_first(&[f64::NAN, 0.0]), Some(1));
        assert_eq!(argmax_first(&[]), None);
    }

    fn space() -> ConfigurationSpace {
        ConfigurationSpace::new(vec![ParameterSpec::continuous("x", 0.0, 1.0).unwrap()]).unwrap()
    }

    #[test]
    fn without_ensemble_always_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let params = SamplerParams { rho: 0.0, n_candidates: 10 };
        for _ in 0..20 {
            let p = sample_next(&space(), None, Some(0.0), &params, &mut rng).unwrap();
            assert_eq!(p.source, ProposalSource::Random);
        }
    }

    #[test]
    fn random_fraction_follows_rho() {
        let sp = space();
        let mut g = FidelityGroup::new(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let c = sp.sample_uniform(&mut rng);
            let x = c.get("x").unwrap().as_f64().unwrap();
            g.push(c, (x - 0.3).powi(2));
        }
        let ens = build_ensemble(&[g], &sp, &ForestParams::default(), &EnsembleParams::default(), &mut rng)
            .unwrap()
            .unwrap();
        let params = SamplerParams { rho: 0.2, n_candidates: 4 };
        let n = 10_000;
        let random = (0..n)
            .filter(|_| {
                sample_next(&sp, Some(&ens), Some(-1.0), &params, &mut rng).unwrap().source
                    == ProposalSource::Random
            })
            .count();
        let frac = random as f64 / n as f64;
        // 3-sigma band for a binomial proportion
        let band = 3.0 * (0.2f64 * 0.8 / n as f64).sqrt();
        assert!((frac - 0.2).abs() < band, "{frac}");
    }

    #[test]
    fn acquisition_prefers_low_predicted_region() {
        let sp = space();
        let mut g = FidelityGroup::new(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for i in 0..40 {
            let x = i as f64 / 39.0;
            let c = sp.decode(&[x]).unwrap();
            g.push(c, (x - 0.8).abs());
        }
        let ens = build_ensemble(&[g.clone()], &sp, &ForestParams::default(), &EnsembleParams::default(), &mut rng)
            .unwrap()
            .unwrap();
        let best = crate::ensemble::standardized_incumbent(&[g]);
        let params = SamplerParams { rho: 0.0, n_candidates: 500 };
        let p = sample_next(&sp, Some(&ens), best, &params, &mut rng).unwrap();
        assert_eq!(p.source, ProposalSource::Acquisition);
        let x = p.config.get("x").unwrap().as_f64().unwrap();
        assert!((x - 0.8).abs() < 0.2, "{x}");
    }

    #[test]
    fn two_basin_posterior_favors_deeper_basin() {
        // deep basin A around 0.2, shallow basin B around 0.7
        let sp = space();
        let mut g = FidelityGroup::new(1.0);
        for i in 0..60 {
            let x = i as f64 / 59.0;
            let a = 2.0 * (-((x - 0.2) / 0.06).powi(2)).exp();
            let b = 0.7 * (-((x - 0.7) / 0.06).powi(2)).exp();
            g.push(sp.decode(&[x]).unwrap(), 1.0 - a - b);
        }
        let best = crate::ensemble::standardized_incumbent(&[g.clone()]);
        let params = SamplerParams { rho: 0.0, n_candidates: 200 };
        let mut in_a = 0;
        for trial in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + trial);
            let ens = build_ensemble(&[g.clone()], &sp, &ForestParams::default(), &EnsembleParams::default(), &mut rng)
                .unwrap()
                .unwrap();
            let p = sample_next(&sp, Some(&ens), best, &params, &mut rng).unwrap();
            let x = p.config.get("x").unwrap().as_f64().unwrap();
            if (0.05..=0.35).contains(&x) {
                in_a += 1;
            }
        }
        assert!(in_a >= 190, "{in_a} of 200");
    }

    proptest::proptest! {
        #[test]
        fn argmax_invariant_under_positive_scaling(
            values in proptest::collection::vec(0.0f64..10.0, 1..50),
            scale in 1e-3f64..1e3,
        ) {
            let scaled: Vec<f64> = values.iter().map(|v| v * scale).collect();
            proptest::prop_assert_eq!(argmax_first(&values), argmax_first(&scaled));
        }
    }
}
