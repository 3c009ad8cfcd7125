//! Feedback-loop simulation and per-configuration Monte-Carlo.
//!
//! One time-step runs model → decision → (record snapshot) → environment
//! shift. Repeated runs of a configuration stop once the confidence
//! half-width of the long-term metric is small relative to its mean.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Configuration;
use crate::metrics::{sample_stats, MetricError, TraceMetric};
use crate::rng::{derive_stream, RngStream};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("degenerate population")]
    DegeneratePopulation,
    #[error("horizon must be at least 1")]
    InvalidHorizon,
    #[error("invalid monte-carlo limits: {0}")]
    InvalidLimits(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("run {run}: {source}")]
    Metric {
        run: u64,
        #[source]
        source: MetricError,
    },
    #[error("no configurations to simulate")]
    EmptyCampaign,
    #[error("config {config_id}: {message}")]
    Config { config_id: u64, message: String },
}

/// Per-group summary recorded in a snapshot.
///
/// `selected`/`total` count the decisions of the step; `positives` and
/// `true_positives` count ground-truth positives and the selected among them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub label: String,
    pub population: u64,
    pub mean_feature: f64,
    pub selected: u64,
    pub total: u64,
    pub positives: u64,
    pub true_positives: u64,
}

impl GroupStats {
    pub fn is_consistent(&self) -> bool {
        self.true_positives <= self.positives
            && self.selected <= self.total
            && self.mean_feature.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub step: usize,
    pub groups: Vec<GroupStats>,
    /// Utility earned in this step.
    pub utility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub config_id: u64,
    pub run: u64,
    pub snapshots: Vec<Snapshot>,
}

/// The environment side of the loop: state `q`, projection and shift.
pub trait EnvironmentModel {
    type State;
    type Batch;
    type Decisions;

    fn init(&self, rng: &mut RngStream) -> Self::State;

    /// Samples the system-observable inputs from the state.
    fn project(&self, state: &Self::State, rng: &mut RngStream) -> Result<Self::Batch, SimError>;

    fn batch_len(&self, batch: &Self::Batch) -> usize;

    /// Stochastic transition given the step's decisions.
    fn shift(
        &self,
        state: Self::State,
        batch: &Self::Batch,
        decisions: &Self::Decisions,
        rng: &mut RngStream,
    ) -> Self::State;

    fn summarize(
        &self,
        step: usize,
        state: &Self::State,
        batch: &Self::Batch,
        decisions: &Self::Decisions,
    ) -> Snapshot;
}

/// The system side: model `M` and decision maker `D`.
pub trait SystemAgent<Inputs> {
    type Outputs;
    type Decisions;

    fn predict(&self, inputs: &Inputs) -> Self::Outputs;

    /// Must be deterministic given the outputs.
    fn decide(&self, outputs: &Self::Outputs) -> Self::Decisions;

    /// Optional per-step refit on the observed inputs.
    fn retrain(&mut self, _inputs: &Inputs) {}
}

/// Runs the loop for `k` steps; no shift follows the last snapshot.
pub fn simulate_trace<E, A>(
    env: &E,
    agent: &mut A,
    config: &Configuration,
    k: usize,
    mut rng: RngStream,
) -> Result<Trace, SimError>
where
    E: EnvironmentModel,
    A: SystemAgent<E::Batch, Decisions = E::Decisions>,
{
    if k == 0 {
        return Err(SimError::InvalidHorizon);
    }
    let run = rng.key().map_or(0, |key| key.run_index);
    let mut state = env.init(&mut rng);
    let mut snapshots = Vec::with_capacity(k);
    for step in 1..=k {
        let batch = env.project(&state, &mut rng)?;
        if env.batch_len(&batch) == 0 {
            return Err(SimError::DegeneratePopulation);
        }
        agent.retrain(&batch);
        let outputs = agent.predict(&batch);
        let decisions = agent.decide(&outputs);
        snapshots.push(env.summarize(step, &state, &batch, &decisions));
        if step < k {
            state = env.shift(state, &batch, &decisions, &mut rng);
        }
    }
    Ok(Trace {
        config_id: config.id,
        run,
        snapshots,
    })
}

/// Something that can produce a trace for a configuration.
pub trait Scenario: Sync {
    fn simulate(
        &self,
        config: &Configuration,
        k: usize,
        rng: RngStream,
    ) -> Result<Trace, SimError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonteCarloLimits {
    pub min_runs: u64,
    pub max_runs: u64,
    pub z: f64,
    pub rel_tol: f64,
    pub abs_floor: f64,
}

impl Default for MonteCarloLimits {
    fn default() -> Self {
        Self {
            min_runs: 5,
            max_runs: 50,
            z: 1.96,
            rel_tol: 0.05,
            abs_floor: 0.005,
        }
    }
}

impl MonteCarloLimits {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.min_runs < 2 {
            return Err(SimError::InvalidLimits("min_runs must be at least 2".into()));
        }
        if self.max_runs < self.min_runs {
            return Err(SimError::InvalidLimits("max_runs must be >= min_runs".into()));
        }
        if !(self.z > 0.0) || !(self.rel_tol > 0.0) || !(self.abs_floor >= 0.0) {
            return Err(SimError::InvalidLimits(
                "z and rel_tol must be positive, abs_floor non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Which stopping branch, if any, fires for `m` runs with these statistics.
    pub fn stop_reason(&self, m: u64, mean: f64, std: f64) -> Option<StopReason> {
        if m < self.min_runs {
            return None;
        }
        let half_width = self.z * std / (m as f64).sqrt();
        if half_width / mean.abs() < self.rel_tol {
            Some(StopReason::Relative)
        } else if half_width < self.abs_floor {
            Some(StopReason::Absolute)
        } else if m >= self.max_runs {
            Some(StopReason::Cap)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Relative,
    Absolute,
    Cap,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::Relative => "relative",
            StopReason::Absolute => "absolute",
            StopReason::Cap => "cap",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub std: f64,
}

/// Which traces a Monte-Carlo run keeps in memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceRetention {
    None,
    #[default]
    FirstRun,
    All,
}

impl TraceRetention {
    fn keeps(&self, run: u64) -> bool {
        match self {
            TraceRetention::None => false,
            TraceRetention::FirstRun => run == 0,
            TraceRetention::All => true,
        }
    }
}

/// Monte-Carlo outcome for one configuration.
///
/// `values[i][r]` is metric `i` evaluated on run `r`; the first metric drives
/// the stopping rule.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSet {
    pub config_id: u64,
    pub m: u64,
    pub stop: StopReason,
    pub values: Vec<Vec<f64>>,
    pub stats: Vec<Stats>,
    pub traces: Vec<Trace>,
}

impl TraceSet {
    pub fn primary(&self) -> Stats {
        self.stats[0]
    }
}

pub fn run_monte_carlo(
    scenario: &dyn Scenario,
    config: &Configuration,
    k: usize,
    metrics: &[&dyn TraceMetric],
    global_seed: u64,
    limits: &MonteCarloLimits,
    retention: TraceRetention,
) -> Result<TraceSet, SimError> {
    limits.validate()?;
    if metrics.is_empty() {
        return Err(SimError::InvalidConfig("at least one metric required".into()));
    }
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); metrics.len()];
    let mut traces = Vec::new();
    let mut run = 0u64;
    let stop = loop {
        let trace = scenario.simulate(config, k, derive_stream(global_seed, config.id, run))?;
        for (slot, metric) in values.iter_mut().zip(metrics) {
            slot.push(
                metric
                    .evaluate(&trace)
                    .map_err(|source| SimError::Metric { run, source })?,
            );
        }
        if retention.keeps(run) {
            traces.push(trace);
        }
        run += 1;
        let (mean, std) = sample_stats(&values[0]);
        if let Some(reason) = limits.stop_reason(run, mean, std) {
            break reason;
        }
    };
    let stats = values
        .iter()
        .map(|v| {
            let (mean, std) = sample_stats(v);
            Stats { mean, std }
        })
        .collect();
    Ok(TraceSet {
        config_id: config.id,
        m: run,
        stop,
        values,
        stats,
        traces,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignResult {
    /// Successful configurations, in the order they were given.
    pub results: Vec<TraceSet>,
    pub failures: Vec<SimError>,
}

/// Runs Monte-Carlo over every configuration using up to `jobs` threads
/// (`0` = rayon default). Output order follows `configs` regardless of
/// scheduling.
#[allow(clippy::too_many_arguments)]
pub fn run_campaign(
    scenario: &dyn Scenario,
    configs: &[Configuration],
    k: usize,
    metrics: &[&dyn TraceMetric],
    global_seed: u64,
    limits: &MonteCarloLimits,
    retention: TraceRetention,
    jobs: usize,
) -> Result<CampaignResult, SimError> {
    if configs.is_empty() {
        return Err(SimError::EmptyCampaign);
    }
    limits.validate()?;
    if k == 0 {
        return Err(SimError::InvalidHorizon);
    }
    let run_one = |c: &Configuration| {
        run_monte_carlo(scenario, c, k, metrics, global_seed, limits, retention).map_err(|e| {
            SimError::Config {
                config_id: c.id,
                message: e.to_string(),
            }
        })
    };
    let outcomes: Vec<Result<TraceSet, SimError>> = if jobs == 1 {
        configs.iter().map(run_one).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        pool.install(|| configs.par_iter().map(run_one).collect())
    };
    let mut result = CampaignResult {
        results: Vec::new(),
        failures: Vec::new(),
    };
    for o in outcomes {
        match o {
            Ok(ts) => result.results.push(ts),
            Err(e) => result.failures.push(e),
        }
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{Criterion, LongTermMetric, LongTermMode};
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    /// A scenario whose single snapshot utility is a draw from N(mean, sd²).
    struct Gaussian {
        mean: f64,
        sd: f64,
    }

    struct UtilityTotal;

    impl TraceMetric for UtilityTotal {
        fn id(&self) -> String {
            "u".into()
        }
        fn evaluate(&self, t: &Trace) -> Result<f64, MetricError> {
            Ok(t.snapshots.iter().map(|s| s.utility).sum())
        }
    }

    impl Scenario for Gaussian {
        fn simulate(&self, c: &Configuration, _k: usize, mut rng: RngStream) -> Result<Trace, SimError> {
            let u = if self.sd == 0.0 {
                self.mean
            } else {
                Normal::new(self.mean, self.sd).unwrap().sample(&mut rng)
            };
            Ok(Trace {
                config_id: c.id,
                run: rng.key().unwrap().run_index,
                snapshots: vec![Snapshot {
                    step: 1,
                    groups: vec![],
                    utility: u,
                }],
            })
        }
    }

    fn cfg(id: u64) -> Configuration {
        Configuration {
            id,
            assignments: vec![],
        }
    }

    #[test]
    fn zero_variance_stops_at_min_runs() {
        let s = Gaussian { mean: 2.0, sd: 0.0 };
        let limits = MonteCarloLimits::default();
        let r = run_monte_carlo(&s, &cfg(0), 1, &[&UtilityTotal], 1, &limits, TraceRetention::All).unwrap();
        assert_eq!(r.m, limits.min_runs);
        assert_eq!(r.primary().std, 0.0);
        assert_eq!(r.traces.len() as u64, r.m);
    }

    #[test]
    fn zero_mean_zero_variance_uses_absolute_branch() {
        let s = Gaussian { mean: 0.0, sd: 0.0 };
        let limits = MonteCarloLimits::default();
        let r = run_monte_carlo(&s, &cfg(0), 1, &[&UtilityTotal], 1, &limits, TraceRetention::None).unwrap();
        assert_eq!(r.m, 5);
        assert_eq!(r.stop, StopReason::Absolute);
    }

    #[test]
    fn gaussian_stopping_matches_offline_criterion() {
        let s = Gaussian { mean: 1.0, sd: 0.1 };
        let limits = MonteCarloLimits {
            abs_floor: 0.0,
            max_runs: 500,
            ..Default::default()
        };
        let mut ms = Vec::new();
        for seed in 0..40 {
            let r = run_monte_carlo(&s, &cfg(3), 1, &[&UtilityTotal], seed, &limits, TraceRetention::None).unwrap();
            assert_eq!(r.stop, StopReason::Relative);
            let v = &r.values[0];
            // recompute the criterion on every prefix from the logged values
            let crit = |n: usize| {
                let xs = &v[..n];
                let mean = xs.iter().sum::<f64>() / n as f64;
                let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
                1.96 * var.sqrt() / (mean.abs() * (n as f64).sqrt())
            };
            assert!(crit(v.len()) < 0.05);
            for n in 5..v.len() {
                assert!(crit(n) >= 0.05);
            }
            ms.push(r.m);
        }
        // 1.96 * 0.1 / sqrt(m) < 0.05 needs m >= 16 at the true std; early
        // stops happen when the estimated std is small, so check the median.
        ms.sort();
        let median = ms[ms.len() / 2];
        assert!((12..=24).contains(&median), "median m = {median}, all {ms:?}");
    }

    #[test]
    fn cap_is_respected() {
        let s = Gaussian { mean: 0.1, sd: 5.0 };
        let limits = MonteCarloLimits {
            max_runs: 12,
            ..Default::default()
        };
        let r = run_monte_carlo(&s, &cfg(0), 1, &[&UtilityTotal], 9, &limits, TraceRetention::FirstRun).unwrap();
        assert_eq!(r.m, 12);
        assert_eq!(r.stop, StopReason::Cap);
        assert_eq!(r.traces.len(), 1);
    }

    #[test]
    fn invalid_limits_rejected() {
        let bad = MonteCarloLimits {
            min_runs: 1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = MonteCarloLimits {
            max_runs: 3,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn campaign_parallel_equals_serial() {
        let s = Gaussian { mean: 1.0, sd: 0.3 };
        let configs: Vec<_> = (0..16).map(cfg).collect();
        let limits = MonteCarloLimits::default();
        let a = run_campaign(&s, &configs, 1, &[&UtilityTotal], 5, &limits, TraceRetention::None, 1).unwrap();
        let b = run_campaign(&s, &configs, 1, &[&UtilityTotal], 5, &limits, TraceRetention::None, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.results.len(), 16);
    }

    #[test]
    fn campaign_reports_failures_and_continues() {
        struct FailOdd;
        impl Scenario for FailOdd {
            fn simulate(&self, c: &Configuration, _k: usize, _rng: RngStream) -> Result<Trace, SimError> {
                if c.id % 2 == 1 {
                    return Err(SimError::DegeneratePopulation);
                }
                Ok(Trace {
                    config_id: c.id,
                    run: 0,
                    snapshots: vec![Snapshot { step: 1, groups: vec![], utility: 1.0 }],
                })
            }
        }
        let configs: Vec<_> = (0..4).map(cfg).collect();
        let r = run_campaign(&FailOdd, &configs, 1, &[&UtilityTotal], 0, &MonteCarloLimits::default(), TraceRetention::None, 1).unwrap();
        assert_eq!(r.results.len(), 2);
        assert_eq!(r.failures.len(), 2);
        assert!(matches!(r.failures[0], SimError::Config { config_id: 1, .. }));
        assert!(run_campaign(&FailOdd, &[], 1, &[&UtilityTotal], 0, &MonteCarloLimits::default(), TraceRetention::None, 1).is_err());
    }

    /// Two-bin toy loop: the population is a count of "high" individuals out of
    /// `n`; the agent selects everyone when the high share is at least half.
    struct Toy {
        n: u64,
    }
    struct ToyAgent;

    impl EnvironmentModel for Toy {
        type State = u64;
        type Batch = u64;
        type Decisions = bool;
        fn init(&self, _rng: &mut RngStream) -> u64 {
            self.n / 2
        }
        fn project(&self, s: &u64, _rng: &mut RngStream) -> Result<u64, SimError> {
            Ok(*s)
        }
        fn batch_len(&self, _b: &u64) -> usize {
            self.n as usize
        }
        fn shift(&self, s: u64, _b: &u64, d: &bool, _rng: &mut RngStream) -> u64 {
            if *d {
                (s + 1).min(self.n)
            } else {
                s.saturating_sub(1)
            }
        }
        fn summarize(&self, step: usize, s: &u64, _b: &u64, d: &bool) -> Snapshot {
            Snapshot {
                step,
                groups: vec![GroupStats {
                    label: "all".into(),
                    population: self.n,
                    mean_feature: *s as f64,
                    selected: if *d { self.n } else { 0 },
                    total: self.n,
                    positives: *s,
                    true_positives: if *d { *s } else { 0 },
                }],
                utility: *s as f64,
            }
        }
    }

    impl SystemAgent<u64> for ToyAgent {
        type Outputs = u64;
        type Decisions = bool;
        fn predict(&self, b: &u64) -> u64 {
            *b
        }
        fn decide(&self, o: &u64) -> bool {
            *o >= 2
        }
    }

    #[test]
    fn toy_loop_matches_hand_table() {
        let t = simulate_trace(&Toy { n: 4 }, &mut ToyAgent, &cfg(0), 3, derive_stream(0, 0, 0)).unwrap();
        // step: state, decision -> next state
        // 1: 2, true -> 3; 2: 3, true -> 4; 3: 4, true (no shift)
        let states: Vec<f64> = t.snapshots.iter().map(|s| s.groups[0].mean_feature).collect();
        assert_eq!(states, vec![2.0, 3.0, 4.0]);
        assert_eq!(t.snapshots.iter().map(|s| s.step).collect::<Vec<_>>(), vec![1, 2, 3]);
    }

    #[test]
    fn single_step_applies_no_shift() {
        let t = simulate_trace(&Toy { n: 4 }, &mut ToyAgent, &cfg(0), 1, derive_stream(0, 0, 0)).unwrap();
        assert_eq!(t.snapshots.len(), 1);
        assert!(simulate_trace(&Toy { n: 4 }, &mut ToyAgent, &cfg(0), 0, derive_stream(0, 0, 0)).is_err());
        assert!(matches!(
            simulate_trace(&Toy { n: 0 }, &mut ToyAgent, &cfg(0), 2, derive_stream(0, 0, 0)),
            Err(SimError::DegeneratePopulation)
        ));
    }

    #[test]
    fn long_term_metric_drives_stopping() {
        // dp over a fixed two-group snapshot: constant, so stops at min_runs
        struct Fixed;
        impl Scenario for Fixed {
            fn simulate(&self, c: &Configuration, k: usize, mut rng: RngStream) -> Result<Trace, SimError> {
                let sel: u64 = rng.random_range(40..60);
                let g = |label: &str, selected| GroupStats {
                    label: label.into(),
                    population: 100,
                    mean_feature: 0.0,
                    selected,
                    total: 100,
                    positives: 10,
                    true_positives: 5,
                };
                Ok(Trace {
                    config_id: c.id,
                    run: 0,
                    snapshots: (1..=k)
                        .map(|step| Snapshot {
                            step,
                            groups: vec![g("a", 50), g("b", if step == 1 { 50 } else { sel })],
                            utility: 0.0,
                        })
                        .collect(),
                })
            }
        }
        let lf = LongTermMetric::new(Criterion::DemographicParity, LongTermMode::MaxInc);
        let r = run_monte_carlo(&Fixed, &cfg(0), 3, &[&lf], 0, &MonteCarloLimits::default(), TraceRetention::None).unwrap();
        assert!(r.m >= 5 && r.m <= 50);
    }
}
