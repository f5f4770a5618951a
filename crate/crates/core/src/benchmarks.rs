//! Built-in synthetic multi-fidelity benchmarks.
//!
//! Each benchmark is a standard test function `f` plus a low-fidelity
//! distortion that fades linearly as the resource approaches the maximum:
//!
//! `loss = f(x) + bias * (1 - r / R) * b(u) + noise`
//!
//! where `u` is the encoded configuration and `b(u) = sin(2π ω·u + φ)` with
//! fixed per-benchmark `ω` and `φ`.

use std::f64::consts::PI;
use std::hash::{Hash, Hasher};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{EvaluationRequest, Failure, Objective};
use crate::space::{Configuration, ConfigurationSpace, ParameterSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchmarkKind {
    Branin,
    Hartmann3,
    Hartmann6,
    CountingOnes,
}

const COUNTING_ONES_BITS: usize = 4;
const COUNTING_ONES_REALS: usize = 4;

impl BenchmarkKind {
    pub const ALL: [BenchmarkKind; 4] = [
        BenchmarkKind::Branin,
        BenchmarkKind::Hartmann3,
        BenchmarkKind::Hartmann6,
        BenchmarkKind::CountingOnes,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchmarkKind::Branin => "branin",
            BenchmarkKind::Hartmann3 => "hartmann3",
            BenchmarkKind::Hartmann6 => "hartmann6",
            BenchmarkKind::CountingOnes => "counting_ones",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    pub fn description(self) -> &'static str {
        match self {
            BenchmarkKind::Branin => "Branin, 2 continuous parameters",
            BenchmarkKind::Hartmann3 => "Hartmann, 3 continuous parameters on [0,1]",
            BenchmarkKind::Hartmann6 => "Hartmann, 6 continuous parameters on [0,1]",
            BenchmarkKind::CountingOnes => "counting ones, 4 binary choices and 4 continuous parameters",
        }
    }

    pub fn space(self) -> ConfigurationSpace {
        let unit = |name: String| ParameterSpec::continuous(name, 0.0, 1.0).expect("valid bounds");
        let params = match self {
            BenchmarkKind::Branin => vec![
                ParameterSpec::continuous("x1", -5.0, 10.0).expect("valid bounds"),
                ParameterSpec::continuous("x2", 0.0, 15.0).expect("valid bounds"),
            ],
            BenchmarkKind::Hartmann3 => (1..=3).map(|i| unit(format!("x{i}"))).collect(),
            BenchmarkKind::Hartmann6 => (1..=6).map(|i| unit(format!("x{i}"))).collect(),
            BenchmarkKind::CountingOnes => {
                let mut p: Vec<ParameterSpec> = (1..=COUNTING_ONES_BITS)
                    .map(|i| ParameterSpec::categorical(format!("b{i}"), ["zero", "one"]).expect("valid choices"))
                    .collect();
                p.extend((1..=COUNTING_ONES_REALS).map(|i| unit(format!("x{i}"))));
                p
            }
        };
        ConfigurationSpace::new(params).expect("valid space")
    }

    /// Global minimum of the noise-free full-fidelity function.
    pub fn optimum(self) -> f64 {
        match self {
            BenchmarkKind::Branin => 0.397_887_357_729_738,
            BenchmarkKind::Hartmann3 => -3.862_779_787_332_77,
            BenchmarkKind::Hartmann6 => -3.322_368_011_391_339,
            BenchmarkKind::CountingOnes => -((COUNTING_ONES_BITS + COUNTING_ONES_REALS) as f64),
        }
    }

    /// Noise-free, bias-free objective value.
    pub fn true_loss(self, config: &Configuration) -> Result<f64> {
        let num = |name: &str| {
            config
                .get(name)
                .and_then(|v| v.as_f64())
                .ok_or_else(|| Error::Domain(format!("missing numeric parameter `{name}`")))
        };
        let xs = |n: usize| (1..=n).map(|i| num(&format!("x{i}"))).collect::<Result<Vec<f64>>>();
        Ok(match self {
            BenchmarkKind::Branin => branin(num("x1")?, num("x2")?),
            BenchmarkKind::Hartmann3 => hartmann3(&xs(3)?),
            BenchmarkKind::Hartmann6 => hartmann6(&xs(6)?),
            BenchmarkKind::CountingOnes => {
                let mut ones = 0.0;
                for i in 1..=COUNTING_ONES_BITS {
                    let name = format!("b{i}");
                    let v = config
                        .get(&name)
                        .and_then(|v| v.as_str())
                        .ok_or_else(|| Error::Domain(format!("missing choice `{name}`")))?;
                    if v == "one" {
                        ones += 1.0;
                    }
                }
                -(ones + xs(COUNTING_ONES_REALS)?.iter().sum::<f64>())
            }
        })
    }
}

pub fn branin(x1: f64, x2: f64) -> f64 {
    let b = 5.1 / (4.0 * PI * PI);
    let c = 5.0 / PI;
    let t = 1.0 / (8.0 * PI);
    (x2 - b * x1 * x1 + c * x1 - 6.0).powi(2) + 10.0 * (1.0 - t) * x1.cos() + 10.0
}

const HARTMANN_ALPHA: [f64; 4] = [1.0, 1.2, 3.0, 3.2];

fn hartmann<const D: usize>(x: &[f64], a: &[[f64; D]; 4], p: &[[f64; D]; 4]) -> f64 {
    let mut total = 0.0;
    for i in 0..4 {
        let inner: f64 = (0..D).map(|j| a[i][j] * (x[j] - p[i][j]).powi(2)).sum();
        total += HARTMANN_ALPHA[i] * (-inner).exp();
    }
    -total
}

pub fn hartmann3(x: &[f64]) -> f64 {
    const A: [[f64; 3]; 4] = [
        [3.0, 10.0, 30.0],
        [0.1, 10.0, 35.0],
        [3.0, 10.0, 30.0],
        [0.1, 10.0, 35.0],
    ];
    const P: [[f64; 3]; 4] = [
        [0.3689, 0.1170, 0.2673],
        [0.4699, 0.4387, 0.7470],
        [0.1091, 0.8732, 0.5547],
        [0.0381, 0.5743, 0.8828],
    ];
    hartmann(x, &A, &P)
}

pub fn hartmann6(x: &[f64]) -> f64 {
    const A: [[f64; 6]; 4] = [
        [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
        [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
        [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
        [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
    ];
    const P: [[f64; 6]; 4] = [
        [0.1312, 0.1696, 0.5569, 0.0124, 0.8283, 0.5886],
        [0.2329, 0.4135, 0.8307, 0.3736, 0.1004, 0.9991],
        [0.2348, 0.1451, 0.3522, 0.2883, 0.3047, 0.6650],
        [0.4047, 0.8828, 0.8732, 0.5743, 0.1091, 0.0381],
    ];
    hartmann(x, &A, &P)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub kind: BenchmarkKind,
    pub noise_std: f64,
    pub fidelity_bias: f64,
    pub max_resource: f64,
    pub seed: u64,
}

impl BenchmarkSpec {
    pub fn new(kind: BenchmarkKind, max_resource: f64) -> Self {
        Self {
            kind,
            noise_std: 0.0,
            fidelity_bias: 0.0,
            max_resource,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::invalid("noise_std", "must be finite and non-negative"));
        }
        if !self.fidelity_bias.is_finite() {
            return Err(Error::invalid("fidelity_bias", "must be finite"));
        }
        if !(self.max_resource > 0.0 && self.max_resource.is_finite()) {
            return Err(Error::invalid("max_resource", "must be positive"));
        }
        Ok(())
    }
}

/// Frequencies and phase of the distortion, fixed per benchmark.
fn distortion_coefficients(kind: BenchmarkKind, width: usize) -> (Vec<f64>, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6d66_6573 ^ kind as u64);
    let scale = 1.0 / (width as f64).sqrt();
    let omega = (0..width).map(|_| rng.random_range(0.5..1.5) * scale).collect();
    let phase = rng.random_range(0.0..2.0 * PI);
    (omega, phase)
}

/// A benchmark ready to evaluate: its space plus cached distortion terms.
#[derive(Debug, Clone)]
pub struct Benchmark {
    spec: BenchmarkSpec,
    space: ConfigurationSpace,
    omega: Vec<f64>,
    phase: f64,
}

impl Benchmark {
    pub fn new(spec: BenchmarkSpec) -> Result<Self> {
        spec.validate()?;
        let space = spec.kind.space();
        let (omega, phase) = distortion_coefficients(spec.kind, space.encoded_width());
        Ok(Self {
            spec,
            space,
            omega,
            phase,
        })
    }

    pub fn spec(&self) -> &BenchmarkSpec {
        &self.spec
    }

    pub fn space(&self) -> &ConfigurationSpace {
        &self.space
    }

    /// Unit-amplitude distortion `b(u)` of a configuration.
    pub fn distortion(&self, config: &Configuration) -> Result<f64> {
        let u = self.space.encode(config)?;
        let dot: f64 = u.iter().zip(&self.omega).map(|(a, b)| a * b).sum();
        Ok((2.0 * PI * dot + self.phase).sin())
    }

    /// Loss without observation noise.
    pub fn noiseless(&self, config: &Configuration, resource: f64) -> Result<f64> {
        let f = self.spec.kind.true_loss(config)?;
        let shortfall = (1.0 - resource / self.spec.max_resource).max(0.0);
        if shortfall == 0.0 || self.spec.fidelity_bias == 0.0 {
            return Ok(f);
        }
        Ok(f + self.spec.fidelity_bias * shortfall * self.distortion(config)?)
    }

    /// Observed loss; noise is drawn from a stream keyed by the
    /// configuration, resource and benchmark seed.
    pub fn observe(&self, config: &Configuration, resource: f64) -> Result<f64> {
        let clean = self.noiseless(config, resource)?;
        if self.spec.noise_std == 0.0 {
            return Ok(clean);
        }
        let mut h = std::collections::hash_map::DefaultHasher::new();
        (config.id, resource.to_bits(), self.spec.seed).hash(&mut h);
        let mut rng = ChaCha8Rng::seed_from_u64(h.finish());
        let eps: f64 = rng.sample(StandardNormal);
        Ok(clean + self.spec.noise_std * eps)
    }
}

impl Objective for Benchmark {
    fn evaluate(&self, request: &EvaluationRequest) -> std::result::Result<f64, Failure> {
        self.observe(&request.config, request.resource)
            .map_err(|e| Failure::new(e.to_string()))
    }
}

/// Loss of `config` at `resource` under `spec`, with the noise drawn from
/// the caller's random source instead of the keyed stream.
pub fn synthetic_objective<R: Rng + ?Sized>(
    spec: &BenchmarkSpec,
    config: &Configuration,
    resource: f64,
    rng: &mut R,
) -> Result<f64> {
    let bench = Benchmark::new(spec.clone())?;
    let clean = bench.noiseless(config, resource)?;
    let eps: f64 = rng.sample(StandardNormal);
    Ok(clean + spec.noise_std * eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::Value;
    use std::collections::BTreeMap;

    fn point(names: &[&str], xs: &[f64]) -> Configuration {
        let values: BTreeMap<String, Value> = names
            .iter()
            .zip(xs)
            .map(|(n, x)| (n.to_string(), Value::Float(*x)))
            .collect();
        Configuration::new(values)
    }

    #[test]
    fn known_minima() {
        // the three Branin minimizers
        for (a, b) in [(-PI, 12.275), (PI, 2.275), (9.424_78, 2.475)] {
            assert!((branin(a, b) - 0.397_887).abs() < 1e-4);
        }
        let h3 = hartmann3(&[0.114_614, 0.555_649, 0.852_547]);
        assert!((h3 - BenchmarkKind::Hartmann3.optimum()).abs() < 1e-4, "{h3}");
        let h6 = hartmann6(&[0.201_69, 0.150_011, 0.476_874, 0.275_332, 0.311_652, 0.6573]);
        assert!((h6 - BenchmarkKind::Hartmann6.optimum()).abs() < 1e-4, "{h6}");
    }

    #[test]
    fn full_resource_is_exact() {
        let spec = BenchmarkSpec {
            fidelity_bias: 1.0,
            ..BenchmarkSpec::new(BenchmarkKind::Branin, 27.0)
        };
        let b = Benchmark::new(spec).unwrap();
        let c = point(&["x1", "x2"], &[PI, 2.275]);
        assert!((b.observe(&c, 27.0).unwrap() - 0.397_887).abs() < 1e-4);
        assert_ne!(b.observe(&c, 1.0).unwrap(), b.observe(&c, 27.0).unwrap());
    }

    #[test]
    fn zero_bias_is_fidelity_free() {
        let b = Benchmark::new(BenchmarkSpec::new(BenchmarkKind::Hartmann3, 27.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            let c = b.space().sample_uniform(&mut rng);
            let full = b.observe(&c, 27.0).unwrap();
            for r in [1.0, 3.0, 9.0] {
                assert_eq!(b.observe(&c, r).unwrap(), full);
            }
        }
    }

    #[test]
    fn noise_is_keyed_and_scaled() {
        let spec = BenchmarkSpec {
            noise_std: 0.5,
            seed: 7,
            ..BenchmarkSpec::new(BenchmarkKind::Hartmann6, 27.0)
        };
        let b = Benchmark::new(spec.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut residuals = Vec::new();
        for _ in 0..2000 {
            let c = b.space().sample_uniform(&mut rng);
            let y = b.observe(&c, 27.0).unwrap();
            assert_eq!(y, b.observe(&c, 27.0).unwrap());
            residuals.push(y - b.noiseless(&c, 27.0).unwrap());
        }
        let n = residuals.len() as f64;
        let mean = residuals.iter().sum::<f64>() / n;
        let sd = (residuals.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() < 0.05 && (sd - 0.5).abs() < 0.05, "{mean} {sd}");
        let other = Benchmark::new(BenchmarkSpec { seed: 8, ..spec }).unwrap();
        let c = b.space().sample_uniform(&mut rng);
        assert_ne!(b.observe(&c, 27.0).unwrap(), other.observe(&c, 27.0).unwrap());
    }

    #[test]
    fn counting_ones_optimum() {
        let b = Benchmark::new(BenchmarkSpec::new(BenchmarkKind::CountingOnes, 9.0)).unwrap();
        let mut values = BTreeMap::new();
        for i in 1..=4 {
            values.insert(format!("b{i}"), Value::Choice("one".into()));
            values.insert(format!("x{i}"), Value::Float(1.0));
        }
        let c = b.space().validate(Configuration::new(values)).unwrap();
        assert_eq!(b.observe(&c, 9.0).unwrap(), -8.0);
    }

    #[test]
    fn names_round_trip() {
        for k in BenchmarkKind::ALL {
            assert_eq!(BenchmarkKind::from_name(k.name()), Some(k));
        }
        assert_eq!(BenchmarkKind::from_name("rosenbrock"), None);
    }

    #[test]
    fn distortion_is_unit_scale() {
        for k in BenchmarkKind::ALL {
            let b = Benchmark::new(BenchmarkSpec::new(k, 27.0)).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            for _ in 0..200 {
                let d = b.distortion(&b.space().sample_uniform(&mut rng)).unwrap();
                assert!((-1.0..=1.0).contains(&d));
            }
        }
    }
}
