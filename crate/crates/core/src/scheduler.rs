//! Hyperband brackets, successive halving, the fidelity-grouped measurement
//! store and the optimizer driver.

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::acquisition::{sample_next, ProposalSource, SamplerParams};
use crate::ensemble::{build_ensemble, standardized_incumbent, EnsembleParams, EnsembleSurrogate, FidelityGroup};
use crate::error::{Error, Result};
use crate::forest::ForestParams;
use crate::harness::{evaluate_batch, EvaluationRequest, EvaluationResult, Objective, Outcome};
use crate::history::{HistoryWriter, RunRecord};
use crate::space::{Configuration, ConfigurationSpace};

/// Relative tolerance used when comparing resource levels.
const LEVEL_TOL: f64 = 1e-9;

/// Total optimization budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    /// Seconds on the run clock.
    WallClockSecs(f64),
    /// Sum of the resources of all evaluations.
    ResourceUnits(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HBParams {
    pub max_resource: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    pub budget: Budget,
}

fn default_eta() -> f64 {
    3.0
}

impl HBParams {
    pub fn new(max_resource: f64, eta: f64, budget: Budget) -> Self {
        Self {
            max_resource,
            eta,
            budget,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 1.0 && self.eta.is_finite()) {
            return Err(Error::invalid("eta", "must be greater than 1"));
        }
        if !(self.max_resource.is_finite() && self.max_resource >= self.eta) {
            return Err(Error::invalid("max_resource", "must be at least eta"));
        }
        let (field, amount) = match self.budget {
            Budget::WallClockSecs(b) => ("budget.wall_clock_secs", b),
            Budget::ResourceUnits(b) => ("budget.resource_units", b),
        };
        if !(amount > 0.0 && amount.is_finite()) {
            return Err(Error::invalid(field, "must be positive"));
        }
        Ok(())
    }

    /// Largest `s` with `eta^s <= R`.
    pub fn s_max(&self) -> u32 {
        let mut s = 0;
        while self.eta.powi(s as i32 + 1) <= self.max_resource * (1.0 + LEVEL_TOL) {
            s += 1;
        }
        s
    }

    /// Resource levels `R * eta^-j`, ascending.
    pub fn levels(&self) -> Vec<f64> {
        let s_max = self.s_max() as i32;
        (0..=s_max)
            .map(|i| self.max_resource * self.eta.powi(i - s_max))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rung {
    pub n: usize,
    pub resource: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BracketPlan {
    pub s: u32,
    pub n1: usize,
    pub r1: f64,
    pub rungs: Vec<Rung>,
}

impl BracketPlan {
    /// Resource units spent if every rung runs in full.
    pub fn total_resource(&self) -> f64 {
        self.rungs.iter().map(|r| r.n as f64 * r.resource).sum()
    }

    pub fn evaluations(&self) -> usize {
        self.rungs.iter().map(|r| r.n).sum()
    }
}

/// The brackets of one Hyperband iteration, from `s_max` down to 0.
pub fn bracket_schedule(params: &HBParams) -> Result<Vec<BracketPlan>> {
    params.validate()?;
    let (r, eta) = (params.max_resource, params.eta);
    let s_max = params.s_max();
    Ok((0..=s_max)
        .rev()
        .map(|s| {
            let ratio = (s_max + 1) as f64 * eta.powi(s as i32) / (s + 1) as f64;
            let n1 = (ratio - LEVEL_TOL).ceil() as usize;
            let mut rungs = Vec::with_capacity(s as usize + 1);
            let mut n = n1;
            for i in 0..=s as i32 {
                rungs.push(Rung {
                    n,
                    resource: r * eta.powi(i - s as i32),
                });
                n = ((n as f64 / eta).floor() as usize).max(1);
            }
            BracketPlan {
                s,
                n1,
                r1: rungs[0].resource,
                rungs,
            }
        })
        .collect())
}

/// Resource units spent by one full Hyperband iteration.
pub fn iteration_resource(params: &HBParams) -> Result<f64> {
    Ok(bracket_schedule(params)?.iter().map(BracketPlan::total_resource).sum())
}

/// Measurements grouped by resource level, lowest level first.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementStore {
    groups: Vec<FidelityGroup>,
}

impl MeasurementStore {
    pub fn new(params: &HBParams) -> Self {
        Self {
            groups: params.levels().into_iter().map(FidelityGroup::new).collect(),
        }
    }

    pub fn groups(&self) -> &[FidelityGroup] {
        &self.groups
    }

    /// Number of fidelity levels.
    pub fn k(&self) -> usize {
        self.groups.len()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.groups.iter().map(FidelityGroup::len).collect()
    }

    pub fn total(&self) -> usize {
        self.groups.iter().map(FidelityGroup::len).sum()
    }

    pub fn level_index(&self, resource: f64) -> Option<usize> {
        self.groups
            .iter()
            .position(|g| (g.resource() - resource).abs() <= LEVEL_TOL * g.resource())
    }

    /// Records a loss; failures are stored as `+inf`.
    pub fn record(&mut self, config: Configuration, resource: f64, loss: f64) -> Result<()> {
        let i = self
            .level_index(resource)
            .ok_or_else(|| Error::Domain(format!("resource {resource} is not a bracket level")))?;
        self.groups[i].push(config, loss);
        Ok(())
    }

    /// Best measurement of the highest non-empty level that has a finite
    /// loss, with that level's resource.
    pub fn best(&self) -> Option<(Configuration, f64, f64)> {
        self.groups
            .iter()
            .rev()
            .find_map(|g| g.best().map(|(c, y)| (c.clone(), y, g.resource())))
    }
}

/// Survivors for the next rung: lowest losses first, ties broken by
/// completion order and then configuration id. Failures never survive.
pub fn promote(configs: &[Configuration], results: &[EvaluationResult], keep: usize) -> Vec<Configuration> {
    let mut order: Vec<usize> = (0..configs.len())
        .filter(|&i| results[i].outcome.loss_or_inf().is_finite())
        .collect();
    order.sort_by(|&a, &b| {
        let (ya, yb) = (results[a].outcome.loss_or_inf(), results[b].outcome.loss_or_inf());
        ya.total_cmp(&yb)
            .then(results[a].completion.cmp(&results[b].completion))
            .then(configs[a].id.cmp(&configs[b].id))
    });
    order.into_iter().take(keep).map(|i| configs[i].clone()).collect()
}

fn requests_for(configs: &[Configuration], resource: f64, prefix: &str) -> Vec<EvaluationRequest> {
    configs
        .iter()
        .enumerate()
        .map(|(i, c)| EvaluationRequest {
            request_id: format!("{prefix}-{i}"),
            config: c.clone(),
            resource,
        })
        .collect()
}

/// Runs one bracket on the given configurations without any budget limit,
/// recording every measurement into `store`. Returns the measurements in
/// evaluation order as `(configuration, resource, loss)`.
pub fn successive_halving(
    configs: Vec<Configuration>,
    plan: &BracketPlan,
    objective: &Arc<dyn Objective>,
    workers: usize,
    store: &mut MeasurementStore,
) -> Result<Vec<(Configuration, f64, f64)>> {
    if configs.len() != plan.n1 {
        return Err(Error::Domain(format!(
            "bracket expects {} configurations, got {}",
            plan.n1,
            configs.len()
        )));
    }
    let mut survivors = configs;
    let mut out = Vec::new();
    for (i, rung) in plan.rungs.iter().enumerate() {
        let requests = requests_for(&survivors, rung.resource, &format!("sh-r{i}"));
        let results = evaluate_batch(objective, &requests, workers, None);
        for (c, r) in survivors.iter().zip(&results) {
            let y = r.outcome.loss_or_inf();
            store.record(c.clone(), rung.resource, y)?;
            out.push((c.clone(), rung.resource, y));
        }
        if let Some(next) = plan.rungs.get(i + 1) {
            survivors = promote(&survivors, &results, next.n);
            if survivors.is_empty() {
                break;
            }
        }
    }
    Ok(out)
}

/// How timestamps and durations are produced.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockMode {
    /// Real elapsed time.
    #[default]
    Wall,
    /// Time advances by the resource of each evaluation, which makes
    /// histories reproducible byte for byte.
    Simulated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSettings {
    pub hyperband: HBParams,
    #[serde(default)]
    pub sampler: SamplerParams,
    #[serde(default)]
    pub forest: ForestParams,
    #[serde(default)]
    pub ensemble: EnsembleParams,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Per-evaluation ceiling enforced by the worker pool.
    #[serde(default)]
    pub eval_timeout_secs: Option<f64>,
    #[serde(default)]
    pub clock: ClockMode,
}

fn default_workers() -> usize {
    1
}

impl OptimizerSettings {
    pub fn new(hyperband: HBParams) -> Self {
        Self {
            hyperband,
            sampler: SamplerParams::default(),
            forest: ForestParams::default(),
            ensemble: EnsembleParams::default(),
            seed: 0,
            workers: 1,
            eval_timeout_secs: None,
            clock: ClockMode::Wall,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.hyperband.validate()?;
        self.sampler.validate()?;
        self.forest.validate()?;
        self.ensemble.validate()?;
        if self.workers == 0 {
            return Err(Error::invalid("workers", "must be at least 1"));
        }
        if let Some(t) = self.eval_timeout_secs {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::invalid("eval_timeout_secs", "must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    /// Best configuration, its loss and the resource it was measured at.
    pub best: Option<(Configuration, f64, f64)>,
    pub evaluations: usize,
    pub resource_used: f64,
    pub brackets_started: u64,
    pub elapsed: f64,
}

fn stream_seed(seed: u64, bracket: u64, stream: u64) -> u64 {
    // splitmix64 finalizer over the combined key
    let mut z = seed
        .wrapping_add(bracket.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(stream.wrapping_mul(0xd1b5_4a32_d192_ed03));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const SAMPLE_STREAM: u64 = 1;
const BUILD_STREAM: u64 = 2;

/// The optimizer: Hyperband brackets whose configurations are proposed by
/// the multi-fidelity ensemble.
pub struct MfesHb {
    space: ConfigurationSpace,
    settings: OptimizerSettings,
    objective: Arc<dyn Objective>,
    schedule: Vec<BracketPlan>,
    store: MeasurementStore,
    ensemble: Option<EnsembleSurrogate>,
    next_bracket: u64,
    resource_used: f64,
    clock_offset: f64,
    started: Option<Instant>,
    writer: Option<HistoryWriter>,
    evaluator_meta: serde_json::Value,
    records: Vec<RunRecord>,
    meta_written: bool,
}

impl std::fmt::Debug for MfesHb {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MfesHb")
            .field("settings", &self.settings)
            .field("next_bracket", &self.next_bracket)
            .field("resource_used", &self.resource_used)
            .finish_non_exhaustive()
    }
}

impl MfesHb {
    pub fn new(space: ConfigurationSpace, settings: OptimizerSettings, objective: Arc<dyn Objective>) -> Result<Self> {
        settings.validate()?;
        let schedule = bracket_schedule(&settings.hyperband)?;
        let store = MeasurementStore::new(&settings.hyperband);
        Ok(Self {
            space,
            settings,
            objective,
            schedule,
            store,
            ensemble: None,
            next_bracket: 0,
            resource_used: 0.0,
            clock_offset: 0.0,
            started: None,
            writer: None,
            evaluator_meta: serde_json::Value::Null,
            records: Vec::new(),
            meta_written: false,
        })
    }

    /// Streams records to a history file as they are produced.
    pub fn with_history(mut self, writer: HistoryWriter) -> Self {
        self.writer = Some(writer);
        self
    }

    /// Evaluator description stored in the `run_meta` record.
    pub fn with_evaluator_meta(mut self, meta: serde_json::Value) -> Self {
        self.evaluator_meta = meta;
        self
    }

    /// Rebuilds the optimizer state from a previous run's records so that
    /// `run` continues with the next bracket that was not started.
    pub fn resume(objective: Arc<dyn Objective>, records: &[RunRecord]) -> Result<Self> {
        let Some(RunRecord::RunMeta {
            space,
            settings,
            evaluator,
            ..
        }) = records.first()
        else {
            return Err(Error::MissingRunMeta);
        };
        let settings: OptimizerSettings = serde_json::from_value(settings.clone())?;
        let mut this = Self::new(space.clone(), settings, objective)?;
        this.evaluator_meta = evaluator.clone();
        this.meta_written = true;
        for r in records {
            match r {
                RunRecord::BracketStart { bracket, .. } => {
                    this.next_bracket = this.next_bracket.max(bracket + 1);
                }
                RunRecord::Measurement {
                    config,
                    resource,
                    loss,
                    ..
                } => {
                    let c = Configuration::new(config.clone());
                    this.store.record(c, *resource, loss.unwrap_or(f64::INFINITY))?;
                    this.resource_used += resource;
                }
                _ => {}
            }
            this.clock_offset = this.clock_offset.max(r.t());
        }
        this.records = records.to_vec();
        if this.next_bracket > 0 && !this.budget_exhausted() {
            this.rebuild_ensemble(this.next_bracket - 1, false)?;
        }
        Ok(this)
    }

    pub fn space(&self) -> &ConfigurationSpace {
        &self.space
    }

    pub fn settings(&self) -> &OptimizerSettings {
        &self.settings
    }

    pub fn schedule(&self) -> &[BracketPlan] {
        &self.schedule
    }

    pub fn store(&self) -> &MeasurementStore {
        &self.store
    }

    pub fn ensemble(&self) -> Option<&EnsembleSurrogate> {
        self.ensemble.as_ref()
    }

    /// Every record produced or loaded so far.
    pub fn records(&self) -> &[RunRecord] {
        &self.records
    }

    pub fn resource_used(&self) -> f64 {
        self.resource_used
    }

    fn now(&self) -> f64 {
        match self.settings.clock {
            ClockMode::Simulated => self.resource_used,
            ClockMode::Wall => self.clock_offset + self.started.map_or(0.0, |s| s.elapsed().as_secs_f64()),
        }
    }

    pub fn budget_exhausted(&self) -> bool {
        match self.settings.hyperband.budget {
            Budget::ResourceUnits(b) => self.resource_used >= b,
            Budget::WallClockSecs(b) => self.now() >= b,
        }
    }

    fn emit(&mut self, record: RunRecord) -> Result<()> {
        if let Some(w) = &mut self.writer {
            w.write(&record)?;
        }
        self.records.push(record);
        Ok(())
    }

    fn rebuild_ensemble(&mut self, bracket: u64, record: bool) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(self.settings.seed, bracket, BUILD_STREAM));
        self.ensemble = build_ensemble(
            self.store.groups(),
            &self.space,
            &self.settings.forest,
            &self.settings.ensemble,
            &mut rng,
        )?;
        if let (Some(e), true) = (&self.ensemble, record) {
            let rec = RunRecord::EnsembleBuild {
                t: self.now(),
                bracket,
                resources: e.resources(),
                weights: e.weights().to_vec(),
                fractions: e.fractions().to_vec(),
                safeguard: e.safeguard_fired(),
            };
            log::debug!("bracket {bracket}: ensemble weights {:?}", e.weights());
            self.emit(rec)?;
        }
        Ok(())
    }

    /// Runs brackets until the budget is exhausted.
    pub fn run(&mut self) -> Result<RunSummary> {
        self.started = Some(Instant::now());
        if !self.meta_written {
            let rec = RunRecord::RunMeta {
                t: 0.0,
                version: env!("CARGO_PKG_VERSION").to_owned(),
                seed: self.settings.seed,
                space: self.space.clone(),
                settings: serde_json::to_value(&self.settings)?,
                evaluator: self.evaluator_meta.clone(),
            };
            self.emit(rec)?;
            self.meta_written = true;
        }
        let first_bracket = self.next_bracket;
        while !self.budget_exhausted() {
            let bracket = self.next_bracket;
            self.next_bracket += 1;
            let completed = self.run_bracket(bracket)?;
            if !completed {
                break;
            }
            self.rebuild_ensemble(bracket, true)?;
        }
        let best = self.best();
        Ok(RunSummary {
            best,
            evaluations: self.store.total(),
            resource_used: self.resource_used,
            brackets_started: self.next_bracket - first_bracket,
            elapsed: self.now(),
        })
    }

    /// Best configuration in the top-fidelity group, falling back to the
    /// highest level with a successful measurement.
    pub fn best(&self) -> Option<(Configuration, f64, f64)> {
        let best = self.store.best();
        if let Some((_, _, r)) = &best {
            let top = self.store.groups().last().map_or(0.0, FidelityGroup::resource);
            if *r < top {
                log::warn!("no full-resource measurement; best comes from resource {r}");
            }
        }
        best
    }

    /// Returns false when the budget ran out before the last rung.
    fn run_bracket(&mut self, bracket: u64) -> Result<bool> {
        let plan = self.schedule[(bracket % self.schedule.len() as u64) as usize].clone();
        self.emit(RunRecord::BracketStart {
            t: self.now(),
            bracket,
            s: plan.s,
            n1: plan.n1,
            r1: plan.r1,
        })?;
        log::info!("bracket {bracket}: s={} n1={} r1={}", plan.s, plan.n1, plan.r1);

        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(self.settings.seed, bracket, SAMPLE_STREAM));
        let y_star = standardized_incumbent(self.store.groups());
        let mut survivors = Vec::with_capacity(plan.n1);
        let mut from_model = 0;
        for _ in 0..plan.n1 {
            let p = sample_next(&self.space, self.ensemble.as_ref(), y_star, &self.settings.sampler, &mut rng)?;
            if p.source == ProposalSource::Acquisition {
                from_model += 1;
            }
            survivors.push(p.config);
        }
        log::debug!("bracket {bracket}: {from_model}/{} proposals from the ensemble", plan.n1);

        let timeout = self.settings.eval_timeout_secs.map(Duration::from_secs_f64);
        for (i, rung) in plan.rungs.iter().enumerate() {
            let first_rung_of_run = i == 0 && self.store.total() == 0;
            if !first_rung_of_run && self.budget_exhausted() {
                return Ok(false);
            }
            let requests = requests_for(&survivors, rung.resource, &format!("b{bracket}-r{i}"));
            let results = evaluate_batch(&self.objective, &requests, self.settings.workers, timeout);
            for (req, res) in requests.iter().zip(&results) {
                self.record_result(bracket, i, req, res)?;
            }
            if let Some(next) = plan.rungs.get(i + 1) {
                survivors = promote(&survivors, &results, next.n);
                if survivors.is_empty() {
                    log::warn!("bracket {bracket}: every evaluation in rung {i} failed");
                    return Ok(true);
                }
            }
        }
        Ok(true)
    }

    fn record_result(&mut self, bracket: u64, rung: usize, req: &EvaluationRequest, res: &EvaluationResult) -> Result<()> {
        let loss = res.outcome.loss_or_inf();
        let failure = match &res.outcome {
            Outcome::Loss(_) => None,
            Outcome::Failed(f) => {
                log::warn!("{} failed: {}", req.request_id, f.reason);
                Some(f.reason.clone())
            }
        };
        self.store.record(req.config.clone(), req.resource, loss)?;
        self.resource_used += req.resource;
        let duration = match self.settings.clock {
            ClockMode::Simulated => req.resource,
            ClockMode::Wall => res.duration,
        };
        self.emit(RunRecord::Measurement {
            t: self.now(),
            bracket,
            rung,
            request_id: req.request_id.clone(),
            config_id: req.config.id,
            config: req.config.values.clone(),
            resource: req.resource,
            loss: loss.is_finite().then_some(loss),
            duration,
            failure,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::Failure;
    use crate::space::{ParameterSpec, Value};

    fn hb(r: f64) -> HBParams {
        HBParams::new(r, 3.0, Budget::ResourceUnits(1e9))
    }

    fn rungs(p: &BracketPlan) -> Vec<(usize, f64)> {
        p.rungs.iter().map(|r| (r.n, r.resource)).collect()
    }

    #[test]
    fn schedule_r81() {
        let s = bracket_schedule(&hb(81.0)).unwrap();
        assert_eq!(s.len(), 5);
        assert_eq!((s[0].s, s[0].n1, s[0].r1), (4, 81, 1.0));
        assert_eq!(rungs(&s[0]), vec![(81, 1.0), (27, 3.0), (9, 9.0), (3, 27.0), (1, 81.0)]);
        assert_eq!((s[1].n1, s[1].r1), (34, 3.0));
        let n1: Vec<usize> = s.iter().map(|p| p.n1).collect();
        assert_eq!(n1, vec![81, 34, 15, 8, 5]);
    }

    #[test]
    fn schedule_r9_and_r27() {
        let s = bracket_schedule(&hb(9.0)).unwrap();
        assert_eq!(rungs(&s[0]), vec![(9, 1.0), (3, 3.0), (1, 9.0)]);
        assert_eq!(s[0].evaluations(), 13);
        assert_eq!(iteration_resource(&hb(27.0)).unwrap(), 423.0);
    }

    #[test]
    fn largest_bracket_spends_s_plus_one_times_r() {
        for r in [9.0, 27.0, 81.0] {
            let s = bracket_schedule(&hb(r)).unwrap();
            let s_max = s[0].s as f64;
            assert_eq!(s[0].total_resource(), (s_max + 1.0) * r);
        }
    }

    #[test]
    fn schedule_invariants_for_non_powers() {
        for r in [4.0, 10.0, 50.0, 100.0, 243.0] {
            for eta in [2.0, 3.0, 4.0] {
                if r < eta {
                    continue;
                }
                let p = HBParams::new(r, eta, Budget::ResourceUnits(1.0));
                for plan in bracket_schedule(&p).unwrap() {
                    let last = plan.rungs.last().unwrap().resource;
                    assert!((last - r).abs() <= 1e-9 * r);
                    for w in plan.rungs.windows(2) {
                        assert!(w[1].resource > w[0].resource);
                        assert!(w[1].n < w[0].n || w[0].n == 1);
                    }
                    let store = MeasurementStore::new(&p);
                    assert_eq!(store.k(), p.s_max() as usize + 1);
                    for rung in &plan.rungs {
                        assert!(store.level_index(rung.resource).is_some());
                    }
                }
            }
        }
    }

    #[test]
    fn schedule_rejects_bad_params() {
        assert!(bracket_schedule(&HBParams::new(2.0, 3.0, Budget::ResourceUnits(1.0))).is_err());
        assert!(bracket_schedule(&HBParams::new(27.0, 1.0, Budget::ResourceUnits(1.0))).is_err());
        assert!(bracket_schedule(&HBParams::new(27.0, 3.0, Budget::WallClockSecs(0.0))).is_err());
    }

    fn space() -> ConfigurationSpace {
        ConfigurationSpace::new(vec![ParameterSpec::continuous("x", 0.0, 1.0).unwrap()]).unwrap()
    }

    fn x_of(c: &Configuration) -> f64 {
        c.get("x").and_then(Value::as_f64).unwrap()
    }

    #[test]
    fn successive_halving_counts_and_promotion() {
        let p = bracket_schedule(&hb(9.0)).unwrap().remove(0);
        let obj: Arc<dyn Objective> = Arc::new(|r: &EvaluationRequest| Ok(x_of(&r.config)));
        let configs: Vec<Configuration> = (0..9).map(|i| space().decode(&[i as f64 / 8.0]).unwrap()).collect();
        let mut store = MeasurementStore::new(&hb(9.0));
        let out = successive_halving(configs, &p, &obj, 2, &mut store).unwrap();
        assert_eq!(out.len(), 13);
        assert_eq!(store.counts(), vec![9, 3, 1]);
        let top: Vec<f64> = out.iter().filter(|m| m.1 == 3.0).map(|m| x_of(&m.0)).collect();
        assert_eq!(top, vec![0.0, 0.125, 0.25]);
        assert_eq!(x_of(&store.best().unwrap().0), 0.0);
    }

    #[test]
    fn ties_promote_by_completion() {
        let p = bracket_schedule(&hb(9.0)).unwrap().remove(0);
        let obj: Arc<dyn Objective> = Arc::new(|_: &EvaluationRequest| Ok(1.0));
        let configs: Vec<Configuration> = (0..9).map(|i| space().decode(&[i as f64 / 8.0]).unwrap()).collect();
        let mut store = MeasurementStore::new(&hb(9.0));
        let out = successive_halving(configs, &p, &obj, 1, &mut store).unwrap();
        let promoted: Vec<f64> = out.iter().filter(|m| m.1 == 3.0).map(|m| x_of(&m.0)).collect();
        assert_eq!(promoted, vec![0.0, 0.125, 0.25]);
    }

    #[test]
    fn failures_are_never_promoted() {
        let p = bracket_schedule(&hb(9.0)).unwrap().remove(0);
        let obj: Arc<dyn Objective> = Arc::new(|r: &EvaluationRequest| {
            let x = x_of(&r.config);
            if x < 0.3 {
                Err(Failure::new("crash"))
            } else {
                Ok(x)
            }
        });
        let configs: Vec<Configuration> = (0..9).map(|i| space().decode(&[i as f64 / 8.0]).unwrap()).collect();
        let mut store = MeasurementStore::new(&hb(9.0));
        let out = successive_halving(configs, &p, &obj, 1, &mut store).unwrap();
        let promoted: Vec<f64> = out.iter().filter(|m| m.1 == 3.0).map(|m| x_of(&m.0)).collect();
        assert_eq!(promoted, vec![0.375, 0.5, 0.625]);
        assert_eq!(store.groups()[0].n_finite(), 6);
    }

    #[test]
    fn single_config_chain() {
        let p = bracket_schedule(&hb(9.0)).unwrap().remove(2);
        assert_eq!(p.n1, 3);
        let one = BracketPlan {
            s: 2,
            n1: 1,
            r1: 1.0,
            rungs: vec![
                Rung { n: 1, resource: 1.0 },
                Rung { n: 1, resource: 3.0 },
                Rung { n: 1, resource: 9.0 },
            ],
        };
        let obj: Arc<dyn Objective> = Arc::new(|_: &EvaluationRequest| Ok(0.0));
        let mut store = MeasurementStore::new(&hb(9.0));
        let out = successive_halving(vec![space().decode(&[0.5]).unwrap()], &one, &obj, 1, &mut store).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(store.counts(), vec![1, 1, 1]);
    }

    fn settings(budget: Budget) -> OptimizerSettings {
        let mut s = OptimizerSettings::new(HBParams::new(9.0, 3.0, budget));
        s.sampler.n_candidates = 50;
        s.clock = ClockMode::Simulated;
        s.seed = 5;
        s
    }

    fn quadratic() -> Arc<dyn Objective> {
        Arc::new(|r: &EvaluationRequest| Ok((x_of(&r.config) - 0.3).powi(2) + 0.1 / r.resource))
    }

    #[test]
    fn tiny_budget_runs_one_rung() {
        let mut opt = MfesHb::new(space(), settings(Budget::ResourceUnits(0.5)), quadratic()).unwrap();
        let summary = opt.run().unwrap();
        assert_eq!(summary.evaluations, 9);
        assert_eq!(summary.brackets_started, 1);
        assert!(matches!(opt.records()[0], RunRecord::RunMeta { .. }));
    }

    #[test]
    fn full_iteration_counts_are_non_increasing() {
        let per_iter = iteration_resource(&hb(9.0)).unwrap();
        let mut opt = MfesHb::new(space(), settings(Budget::ResourceUnits(per_iter)), quadratic()).unwrap();
        let summary = opt.run().unwrap();
        assert_eq!(summary.resource_used, per_iter);
        assert_eq!(summary.brackets_started, 3);
        let counts = opt.store().counts();
        assert!(counts.windows(2).all(|w| w[0] >= w[1]), "{counts:?}");
        let (best, y, r) = summary.best.unwrap();
        assert_eq!(r, 9.0);
        let top_min = opt.store().groups()[2]
            .measurements()
            .iter()
            .map(|m| m.1)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(y, top_min);
        assert_eq!(opt.store().groups()[2].best().unwrap().0, &best);
        let builds = opt.records().iter().filter(|r| r.kind() == "ensemble_build").count();
        assert_eq!(builds, 3);
    }

    #[test]
    fn runs_are_deterministic() {
        let run = || {
            let mut opt = MfesHb::new(space(), settings(Budget::ResourceUnits(200.0)), quadratic()).unwrap();
            opt.run().unwrap();
            opt.records().to_vec()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn resume_rebuilds_identical_store() {
        let mut opt = MfesHb::new(space(), settings(Budget::ResourceUnits(100.0)), quadratic()).unwrap();
        opt.run().unwrap();
        let resumed = MfesHb::resume(quadratic(), opt.records()).unwrap();
        assert_eq!(resumed.store(), opt.store());
        assert_eq!(resumed.resource_used(), opt.resource_used());
    }

    #[test]
    fn resume_of_finished_run_does_nothing() {
        let mut opt = MfesHb::new(space(), settings(Budget::ResourceUnits(60.0)), quadratic()).unwrap();
        opt.run().unwrap();
        let n = opt.records().len();
        let mut resumed = MfesHb::resume(quadratic(), opt.records()).unwrap();
        let summary = resumed.run().unwrap();
        assert_eq!(summary.brackets_started, 0);
        assert_eq!(resumed.records().len(), n);
    }

    #[test]
    fn resumed_run_continues_where_it_stopped() {
        let full = {
            let mut opt = MfesHb::new(space(), settings(Budget::ResourceUnits(300.0)), quadratic()).unwrap();
            opt.run().unwrap();
            opt
        };
        // cut the history somewhere inside the fourth bracket
        let cut = full
            .records()
            .iter()
            .position(|r| matches!(r, RunRecord::BracketStart { bracket: 3, .. }))
            .unwrap()
            + 5;
        let mut resumed = MfesHb::resume(quadratic(), &full.records()[..cut]).unwrap();
        resumed.run().unwrap();
        let diff = full.store().total() as i64 - resumed.store().total() as i64;
        let biggest = bracket_schedule(&hb(9.0)).unwrap()[0].evaluations() as i64;
        assert!(diff.abs() <= biggest, "{diff}");
    }
}
