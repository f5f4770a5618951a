//! Hyperparameter search spaces.
//!
//! A [`ConfigurationSpace`] is a flat, ordered list of parameters. Numeric
//! parameters encode to one coordinate in `[0, 1]` (after a log transform
//! when flagged); categorical parameters encode one-hot, so the forest
//! surrogate treats every choice symmetrically.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum ParameterKind {
    Continuous { low: f64, high: f64, log: bool },
    Integer { low: i64, high: i64, log: bool },
    Categorical { choices: Vec<String> },
}

/// One named dimension of the search space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParameterDef", into = "ParameterDef")]
pub struct ParameterSpec {
    name: String,
    kind: ParameterKind,
}

impl ParameterSpec {
    pub fn continuous(name: impl Into<String>, low: f64, high: f64) -> Result<Self> {
        Self::new(name, ParameterKind::Continuous { low, high, log: false })
    }

    pub fn log_continuous(name: impl Into<String>, low: f64, high: f64) -> Result<Self> {
        Self::new(name, ParameterKind::Continuous { low, high, log: true })
    }

    pub fn integer(name: impl Into<String>, low: i64, high: i64) -> Result<Self> {
        Self::new(name, ParameterKind::Integer { low, high, log: false })
    }

    pub fn log_integer(name: impl Into<String>, low: i64, high: i64) -> Result<Self> {
        Self::new(name, ParameterKind::Integer { low, high, log: true })
    }

    pub fn categorical<S: Into<String>>(
        name: impl Into<String>,
        choices: impl IntoIterator<Item = S>,
    ) -> Result<Self> {
        let choices = choices.into_iter().map(Into::into).collect();
        Self::new(name, ParameterKind::Categorical { choices })
    }

    pub fn new(name: impl Into<String>, kind: ParameterKind) -> Result<Self> {
        let name = name.into();
        if name.is_empty() {
            return Err(Error::invalid("name", "parameter name must not be empty"));
        }
        match &kind {
            ParameterKind::Continuous { low, high, log } => {
                if !(low.is_finite() && high.is_finite()) {
                    return Err(Error::invalid(&name, "bounds must be finite"));
                }
                check_bounds(&name, *low, *high, *log)?;
            }
            ParameterKind::Integer { low, high, log } => {
                check_bounds(&name, *low as f64, *high as f64, *log)?;
            }
            ParameterKind::Categorical { choices } => {
                let distinct: HashSet<&String> = choices.iter().collect();
                if choices.len() < 2 || distinct.len() != choices.len() {
                    return Err(Error::invalid(
                        &name,
                        "categorical needs at least 2 distinct choices",
                    ));
                }
            }
        }
        Ok(Self { name, kind })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> &ParameterKind {
        &self.kind
    }

    /// Number of coordinates this parameter occupies in an encoded vector.
    pub fn encoded_width(&self) -> usize {
        match &self.kind {
            ParameterKind::Categorical { choices } => choices.len(),
            _ => 1,
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Value {
        match &self.kind {
            ParameterKind::Continuous { low, high, log } => {
                let u: f64 = rng.random();
                let v = if *log {
                    (low.ln() + u * (high.ln() - low.ln())).exp()
                } else {
                    low + u * (high - low)
                };
                Value::Float(v.clamp(*low, *high))
            }
            ParameterKind::Integer { low, high, log } => {
                if *log {
                    let (a, b) = ((*low as f64 - 0.5).ln(), (*high as f64 + 0.5).ln());
                    let v = (a + rng.random::<f64>() * (b - a)).exp();
                    Value::Int(round_half_up(v).clamp(*low, *high))
                } else {
                    Value::Int(rng.random_range(*low..=*high))
                }
            }
            ParameterKind::Categorical { choices } => {
                Value::Choice(choices[rng.random_range(0..choices.len())].clone())
            }
        }
    }

    fn check_value(&self, value: &Value) -> Result<()> {
        let ok = match (&self.kind, value) {
            (ParameterKind::Continuous { low, high, .. }, Value::Float(v)) => {
                v.is_finite() && v >= low && v <= high
            }
            (ParameterKind::Integer { low, high, .. }, Value::Int(v)) => v >= low && v <= high,
            (ParameterKind::Categorical { choices }, Value::Choice(c)) => choices.contains(c),
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "value {value} is outside the domain of `{}`",
                self.name
            )))
        }
    }

    /// Coerces loosely typed values (for example an integral JSON number
    /// given for a continuous parameter) into this parameter's kind.
    fn coerce(&self, value: Value) -> Value {
        match (&self.kind, value) {
            (ParameterKind::Continuous { .. }, Value::Int(v)) => Value::Float(v as f64),
            (ParameterKind::Integer { .. }, Value::Float(v)) if v.fract() == 0.0 => {
                Value::Int(v as i64)
            }
            (_, v) => v,
        }
    }

    fn encode_into(&self, value: &Value, out: &mut Vec<f64>) {
        match (&self.kind, value) {
            (ParameterKind::Continuous { low, high, log }, Value::Float(v)) => {
                out.push(unit(*v, *low, *high, *log))
            }
            (ParameterKind::Integer { low, high, log }, Value::Int(v)) => {
                out.push(unit(*v as f64, *low as f64, *high as f64, *log))
            }
            (ParameterKind::Categorical { choices }, Value::Choice(c)) => {
                out.extend(choices.iter().map(|x| if x == c { 1.0 } else { 0.0 }))
            }
            _ => unreachable!("value kind checked before encoding"),
        }
    }

    fn decode(&self, coords: &[f64]) -> Value {
        match &self.kind {
            ParameterKind::Continuous { low, high, log } => {
                Value::Float(from_unit(coords[0], *low, *high, *log).clamp(*low, *high))
            }
            ParameterKind::Integer { low, high, log } => {
                let v = from_unit(coords[0], *low as f64, *high as f64, *log);
                Value::Int(round_half_up(v).clamp(*low, *high))
            }
            ParameterKind::Categorical { choices } => {
                // first maximal coordinate wins
                let mut best = 0;
                for (i, c) in coords.iter().enumerate() {
                    if *c > coords[best] {
                        best = i;
                    }
                }
                Value::Choice(choices[best].clone())
            }
        }
    }
}

fn check_bounds(name: &str, low: f64, high: f64, log: bool) -> Result<()> {
    if low >= high {
        return Err(Error::invalid(name, format!("low ({low}) must be < high ({high})")));
    }
    if log && low <= 0.0 {
        return Err(Error::invalid(name, "log scale requires low > 0"));
    }
    Ok(())
}

fn unit(v: f64, low: f64, high: f64, log: bool) -> f64 {
    if log {
        (v.ln() - low.ln()) / (high.ln() - low.ln())
    } else {
        (v - low) / (high - low)
    }
}

fn from_unit(u: f64, low: f64, high: f64, log: bool) -> f64 {
    if log {
        (low.ln() + u * (high.ln() - low.ln())).exp()
    } else {
        low + u * (high - low)
    }
}

fn round_half_up(v: f64) -> i64 {
    (v + 0.5).floor() as i64
}

/// Serialized form of a [`ParameterSpec`], shared by config files and history.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParameterDef {
    name: String,
    kind: KindName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    low: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    high: Option<f64>,
    #[serde(default, skip_serializing_if = "is_false")]
    log: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    choices: Option<Vec<String>>,
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum KindName {
    Continuous,
    Integer,
    Categorical,
}

impl TryFrom<ParameterDef> for ParameterSpec {
    type Error = Error;

    fn try_from(def: ParameterDef) -> Result<Self> {
        let bounds = |def: &ParameterDef| match (def.low, def.high) {
            (Some(l), Some(h)) => Ok((l, h)),
            _ => Err(Error::invalid(&def.name, "numeric parameter needs `low` and `high`")),
        };
        let kind = match def.kind {
            KindName::Continuous => {
                let (low, high) = bounds(&def)?;
                ParameterKind::Continuous { low, high, log: def.log }
            }
            KindName::Integer => {
                let (low, high) = bounds(&def)?;
                if low.fract() != 0.0 || high.fract() != 0.0 {
                    return Err(Error::invalid(&def.name, "integer bounds must be integral"));
                }
                ParameterKind::Integer {
                    low: low as i64,
                    high: high as i64,
                    log: def.log,
                }
            }
            KindName::Categorical => ParameterKind::Categorical {
                choices: def
                    .choices
                    .clone()
                    .ok_or_else(|| Error::invalid(&def.name, "categorical needs `choices`"))?,
            },
        };
        ParameterSpec::new(def.name, kind)
    }
}

impl From<ParameterSpec> for ParameterDef {
    fn from(spec: ParameterSpec) -> Self {
        let mut def = ParameterDef {
            name: spec.name,
            kind: KindName::Continuous,
            low: None,
            high: None,
            log: false,
            choices: None,
        };
        match spec.kind {
            ParameterKind::Continuous { low, high, log } => {
                def.low = Some(low);
                def.high = Some(high);
                def.log = log;
            }
            ParameterKind::Integer { low, high, log } => {
                def.kind = KindName::Integer;
                def.low = Some(low as f64);
                def.high = Some(high as f64);
                def.log = log;
            }
            ParameterKind::Categorical { choices } => {
                def.kind = KindName::Categorical;
                def.choices = Some(choices);
            }
        }
        def
    }
}

/// A concrete parameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Float(f64),
    Choice(String),
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(v) => Some(*v as f64),
            Value::Float(v) => Some(*v),
            Value::Choice(_) => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Choice(c) => Some(c),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Float(v) => write!(f, "{v}"),
            Value::Choice(c) => write!(f, "{c:?}"),
        }
    }
}

/// A point in a [`ConfigurationSpace`].
///
/// The id is a content hash of the values, so the same point always gets
/// the same id regardless of when or where it was created.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub id: u64,
    pub values: BTreeMap<String, Value>,
}

impl Configuration {
    pub fn new(values: BTreeMap<String, Value>) -> Self {
        let id = content_id(&values);
        Self { id, values }
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.values.get(name)
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, (k, v)) in self.values.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{k}: {v}")?;
        }
        write!(f, "}}")
    }
}

// FNV-1a over a canonical byte rendering of the values.
fn content_id(values: &BTreeMap<String, Value>) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0100_0000_01b3;
    let mut h = OFFSET;
    let mut feed = |bytes: &[u8]| {
        for b in bytes {
            h ^= u64::from(*b);
            h = h.wrapping_mul(PRIME);
        }
    };
    for (k, v) in values {
        feed(k.as_bytes());
        feed(&[0]);
        match v {
            Value::Int(i) => {
                feed(&[1]);
                feed(&i.to_le_bytes());
            }
            Value::Float(x) => {
                feed(&[2]);
                feed(&x.to_bits().to_le_bytes());
            }
            Value::Choice(c) => {
                feed(&[3]);
                feed(c.as_bytes());
            }
        }
        feed(&[0xff]);
    }
    h
}

/// An immutable, ordered set of parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ParameterSpec>", into = "Vec<ParameterSpec>")]
pub struct ConfigurationSpace {
    params: Vec<ParameterSpec>,
    width: usize,
}

impl TryFrom<Vec<ParameterSpec>> for ConfigurationSpace {
    type Error = Error;

    fn try_from(params: Vec<ParameterSpec>) -> Result<Self> {
        Self::new(params)
    }
}

impl From<ConfigurationSpace> for Vec<ParameterSpec> {
    fn from(space: ConfigurationSpace) -> Self {
        space.params
    }
}

impl ConfigurationSpace {
    pub fn new(params: Vec<ParameterSpec>) -> Result<Self> {
        if params.is_empty() {
            return Err(Error::invalid("space", "a space needs at least one parameter"));
        }
        let mut seen = HashSet::new();
        for p in &params {
            if !seen.insert(p.name.as_str()) {
                return Err(Error::invalid(&p.name, "duplicate parameter name"));
            }
        }
        let width = params.iter().map(ParameterSpec::encoded_width).sum();
        Ok(Self { params, width })
    }

    pub fn parameters(&self) -> &[ParameterSpec] {
        &self.params
    }

    pub fn dimension(&self) -> usize {
        self.params.len()
    }

    pub fn encoded_width(&self) -> usize {
        self.width
    }

    /// Draws every parameter independently and uniformly over its domain
    /// (log-uniformly when log-scaled).
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Configuration {
        let values = self
            .params
            .iter()
            .map(|p| (p.name.clone(), p.sample(rng)))
            .collect();
        Configuration::new(values)
    }

    /// Checks membership, coercing integral numbers to the declared kind.
    pub fn validate(&self, config: Configuration) -> Result<Configuration> {
        if config.values.len() != self.params.len() {
            return Err(Error::Domain(format!(
                "configuration has {} values, space has {} parameters",
                config.values.len(),
                self.params.len()
            )));
        }
        let mut values = BTreeMap::new();
        for p in &self.params {
            let v = config
                .values
                .get(&p.name)
                .ok_or_else(|| Error::Domain(format!("missing value for `{}`", p.name)))?;
            let v = p.coerce(v.clone());
            p.check_value(&v)?;
            values.insert(p.name.clone(), v);
        }
        Ok(Configuration::new(values))
    }

    pub fn encode(&self, config: &Configuration) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.width);
        if config.values.len() != self.params.len() {
            return Err(Error::Domain("configuration does not match space".into()));
        }
        for p in &self.params {
            let v = config
                .values
                .get(&p.name)
                .ok_or_else(|| Error::Domain(format!("missing value for `{}`", p.name)))?;
            p.check_value(v)?;
            p.encode_into(v, &mut out);
        }
        Ok(out)
    }

    pub fn decode(&self, vector: &[f64]) -> Result<Configuration> {
        if vector.len() != self.width {
            return Err(Error::Domain(format!(
                "vector width {} does not match space width {}",
                vector.len(),
                self.width
            )));
        }
        let mut offset = 0;
        let mut values = BTreeMap::new();
        for p in &self.params {
            let w = p.encoded_width();
            values.insert(p.name.clone(), p.decode(&vector[offset..offset + w]));
            offset += w;
        }
        Ok(Configuration::new(values))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mixed() -> ConfigurationSpace {
        ConfigurationSpace::new(vec![
            ParameterSpec::continuous("x", -5.0, 10.0).unwrap(),
            ParameterSpec::log_continuous("lr", 1e-7, 1e-2).unwrap(),
            ParameterSpec::integer("layers", 1, 8).unwrap(),
            ParameterSpec::categorical("act", ["a", "b", "c"]).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(ParameterSpec::continuous("x", 1.0, 1.0).is_err());
        assert!(ParameterSpec::log_continuous("x", 0.0, 1.0).is_err());
        assert!(ParameterSpec::categorical("c", ["a"]).is_err());
        assert!(ParameterSpec::categorical("c", ["a", "a"]).is_err());
        assert!(ConfigurationSpace::new(vec![]).is_err());
        let dup = vec![
            ParameterSpec::continuous("x", 0.0, 1.0).unwrap(),
            ParameterSpec::continuous("x", 0.0, 2.0).unwrap(),
        ];
        assert!(ConfigurationSpace::new(dup).is_err());
    }

    #[test]
    fn width_is_sum_of_parameter_widths() {
        assert_eq!(mixed().encoded_width(), 1 + 1 + 1 + 3);
    }

    #[test]
    fn unit_interval_samples_stay_in_domain() {
        let space =
            ConfigurationSpace::new(vec![ParameterSpec::continuous("x", 0.0, 1.0).unwrap()])
                .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let v = space.sample_uniform(&mut rng).values["x"].as_f64().unwrap();
            assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn categorical_frequencies_are_uniform() {
        let space =
            ConfigurationSpace::new(vec![ParameterSpec::categorical("c", ["a", "b", "c"]).unwrap()])
                .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 30_000;
        let mut counts = BTreeMap::new();
        for _ in 0..n {
            let c = space.sample_uniform(&mut rng);
            *counts.entry(c.values["c"].as_str().unwrap().to_owned()).or_insert(0usize) += 1;
        }
        for (_, k) in counts {
            assert!((k as f64 / n as f64 - 1.0 / 3.0).abs() < 0.01);
        }
    }

    #[test]
    fn log_scale_is_uniform_in_exponent() {
        let space =
            ConfigurationSpace::new(vec![ParameterSpec::log_continuous("lr", 1e-7, 1e-2).unwrap()])
                .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 20_000;
        // five equal-width bins over the exponent range [-7, -2]
        let mut bins = [0usize; 5];
        for _ in 0..n {
            let e = space.sample_uniform(&mut rng).values["lr"].as_f64().unwrap().log10();
            assert!((-7.0 - 1e-9..=-2.0 + 1e-9).contains(&e));
            bins[((e + 7.0).floor() as usize).min(4)] += 1;
        }
        for b in bins {
            assert!((b as f64 / n as f64 - 0.2).abs() < 0.015, "{bins:?}");
        }
    }

    #[test]
    fn samples_cover_the_full_range() {
        let space = mixed();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let xs: Vec<f64> = (0..10_000)
            .map(|_| space.sample_uniform(&mut rng).values["x"].as_f64().unwrap())
            .collect();
        let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(lo - -5.0 < 0.15 && 10.0 - hi < 0.15);
    }

    #[test]
    fn encode_boundaries_and_one_hot() {
        let space = mixed();
        let mut values = BTreeMap::new();
        values.insert("x".to_owned(), Value::Float(-5.0));
        values.insert("lr".to_owned(), Value::Float(1e-2));
        values.insert("layers".to_owned(), Value::Int(1));
        values.insert("act".to_owned(), Value::Choice("b".into()));
        let v = space.encode(&Configuration::new(values)).unwrap();
        assert_eq!(v[0], 0.0);
        assert!((v[1] - 1.0).abs() < 1e-12);
        assert_eq!(v[2], 0.0);
        assert_eq!(&v[3..], &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn encode_rejects_mismatched_config() {
        let space = mixed();
        let mut values = BTreeMap::new();
        values.insert("x".to_owned(), Value::Float(50.0));
        assert!(space.encode(&Configuration::new(values)).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut c = space.sample_uniform(&mut rng);
        c.values.insert("act".into(), Value::Choice("zzz".into()));
        assert!(matches!(space.encode(&c), Err(Error::Domain(_))));
    }

    #[test]
    fn integer_decode_rounds_half_up() {
        let space =
            ConfigurationSpace::new(vec![ParameterSpec::integer("n", 0, 10).unwrap()]).unwrap();
        assert_eq!(space.decode(&[0.25]).unwrap().values["n"], Value::Int(3));
        assert_eq!(space.decode(&[0.35]).unwrap().values["n"], Value::Int(4));
    }

    #[test]
    fn content_id_is_stable() {
        let space = mixed();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = space.sample_uniform(&mut rng);
        assert_eq!(Configuration::new(c.values.clone()).id, c.id);
        let d = space.sample_uniform(&mut rng);
        assert_ne!(c.id, d.id);
    }

    #[test]
    fn spec_serde_roundtrip_and_validation() {
        let space = mixed();
        let json = serde_json::to_string(&space).unwrap();
        let back: ConfigurationSpace = serde_json::from_str(&json).unwrap();
        assert_eq!(back, space);
        let bad = r#"[{"name":"x","kind":"continuous","low":2.0,"high":1.0}]"#;
        assert!(serde_json::from_str::<ConfigurationSpace>(bad).is_err());
        let unknown = r#"[{"name":"x","kind":"continuous","low":0.0,"high":1.0,"prior":"n"}]"#;
        assert!(serde_json::from_str::<ConfigurationSpace>(unknown).is_err());
    }

    #[test]
    fn validate_coerces_integral_numbers() {
        let space = mixed();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut c = space.sample_uniform(&mut rng);
        c.values.insert("x".into(), Value::Int(3));
        let fixed = space.validate(c).unwrap();
        assert_eq!(fixed.values["x"], Value::Float(3.0));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn decode_inverts_encode(seed in any::<u64>()) {
                let space = mixed();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let c = space.sample_uniform(&mut rng);
                let back = space.decode(&space.encode(&c).unwrap()).unwrap();
                for (name, v) in &c.values {
                    match (v, &back.values[name]) {
                        (Value::Float(a), Value::Float(b)) => {
                            prop_assert!((a - b).abs() < 1e-13 || ((a - b) / a).abs() < 1e-12, "{} vs {}", a, b)
                        }
                        (a, b) => prop_assert_eq!(a, b),
                    }
                }
            }
        }
    }
}
