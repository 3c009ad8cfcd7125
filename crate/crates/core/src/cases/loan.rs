//! Loan lending on a synthetic two-group credit-score population.
//!
//! Each step a batch of applicants is drawn from the population, a threshold
//! agent approves or rejects them, and the decisions move the applicants'
//! scores: repayment raises a score, default and rejection lower it.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::{ConfigSpace, Configuration, ParamKind, ParamValue, ParameterDef};
use crate::rng::RngStream;
use crate::sim::{simulate_trace, EnvironmentModel, GroupStats, Scenario, SimError, Snapshot, SystemAgent, Trace};

pub const CASE_ID: &str = "loan";
pub const PARAMETER_NAMES: [&str; 5] = [
    "agent",
    "bank_utility",
    "score_update_repay",
    "score_update_default",
    "shift_mode",
];

pub const MIN_SCORE: f64 = 300.0;
pub const MAX_SCORE: f64 = 850.0;
pub const BIN_WIDTH: f64 = 10.0;
/// Bins centred on 300, 310, ..., 850.
pub const BINS: usize = 56;
pub const GROUP_MEANS: [f64; 2] = [620.0, 560.0];
pub const INITIAL_SD: f64 = 60.0;
pub const GROUP_LABELS: [&str; 2] = ["a", "b"];
/// Score change of a rejected applicant (hard inquiry).
pub const REJECTION_PENALTY: f64 = -5.0;
/// Equal-opportunity agent: allowed TPR gap between groups.
pub const EQOP_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AgentKind {
    MaxUtil,
    EqOp,
}

impl AgentKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "max-util" => Some(AgentKind::MaxUtil),
            "eq-op" => Some(AgentKind::EqOp),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShiftMode {
    Expected,
    Normal,
    Aggressive,
}

impl ShiftMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "expected" => Some(ShiftMode::Expected),
            "normal" => Some(ShiftMode::Normal),
            "aggressive" => Some(ShiftMode::Aggressive),
            _ => None,
        }
    }

    /// Standard deviation of score updates.
    pub fn sigma(&self) -> f64 {
        match self {
            ShiftMode::Expected => 0.0,
            ShiftMode::Normal => 4.0,
            ShiftMode::Aggressive => 8.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoanParams {
    pub agent: AgentKind,
    pub bank_utility: f64,
    pub score_update_repay: f64,
    pub score_update_default: f64,
    pub shift_mode: ShiftMode,
}

impl LoanParams {
    pub fn decode(space: &ConfigSpace, config: &Configuration) -> Result<Self, SimError> {
        let get = |name: &str| {
            space
                .value(config, name)
                .ok_or_else(|| SimError::InvalidConfig(format!("missing parameter `{name}`")))
        };
        let num = |name: &str| {
            get(name)?
                .as_f64()
                .ok_or_else(|| SimError::InvalidConfig(format!("`{name}` must be numeric")))
        };
        let agent = get("agent")?
            .as_str()
            .and_then(AgentKind::parse)
            .ok_or_else(|| SimError::InvalidConfig("unknown agent".into()))?;
        let shift_mode = get("shift_mode")?
            .as_str()
            .and_then(ShiftMode::parse)
            .ok_or_else(|| SimError::InvalidConfig("unknown shift_mode".into()))?;
        Ok(Self {
            agent,
            bank_utility: num("bank_utility")?,
            score_update_repay: num("score_update_repay")?,
            score_update_default: num("score_update_default")?,
            shift_mode,
        })
    }
}

/// The full loan-lending space: 2 × 8 × 4 × 4 × 3 = 768 configurations.
///
/// `eq-op` is listed first so that it is the reference level and the
/// regression reports a `max-util` dummy.
pub fn default_space() -> ConfigSpace {
    ConfigSpace::new(vec![
        ParameterDef::categorical("agent", ParamKind::System, &["eq-op", "max-util"]),
        ParameterDef::numeric(
            "bank_utility",
            ParamKind::System,
            &[-10.0, -9.0, -8.0, -7.0, -6.0, -5.0, -4.0, -3.0],
        ),
        ParameterDef::numeric("score_update_repay", ParamKind::Environmental, &[8.0, 12.0, 16.0, 20.0]),
        ParameterDef::numeric(
            "score_update_default",
            ParamKind::Environmental,
            &[-40.0, -32.0, -24.0, -16.0],
        ),
        ParameterDef::categorical(
            "shift_mode",
            ParamKind::Environmental,
            &["expected", "normal", "aggressive"],
        ),
    ])
    .expect("static space is valid")
}

/// Checks one value of a loan parameter.
pub fn validate_value(name: &str, value: &ParamValue) -> Result<(), String> {
    match (name, value) {
        ("agent", ParamValue::Categorical(s)) if AgentKind::parse(s).is_some() => Ok(()),
        ("shift_mode", ParamValue::Categorical(s)) if ShiftMode::parse(s).is_some() => Ok(()),
        ("bank_utility", ParamValue::Numeric(u)) if *u < 0.0 && u.is_finite() => Ok(()),
        ("score_update_repay", ParamValue::Numeric(d)) if *d >= 0.0 && *d <= 550.0 => Ok(()),
        ("score_update_default", ParamValue::Numeric(d)) if *d <= 0.0 && *d >= -550.0 => Ok(()),
        ("agent", _) => Err("expected `max-util` or `eq-op`".into()),
        ("shift_mode", _) => Err("expected `expected`, `normal` or `aggressive`".into()),
        ("bank_utility", _) => Err("out of range: must be a negative number".into()),
        ("score_update_repay", _) => Err("out of range: must be in [0, 550]".into()),
        ("score_update_default", _) => Err("out of range: must be in [-550, 0]".into()),
        _ => Err(format!("unknown loan parameter `{name}`")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoanScale {
    pub population_per_group: usize,
    pub batch_size: usize,
}

impl Default for LoanScale {
    fn default() -> Self {
        Self {
            population_per_group: 10_000,
            batch_size: 1_000,
        }
    }
}

/// Probability of on-time repayment for a credit score.
pub fn repay_probability(score: f64) -> Result<f64, SimError> {
    if !(MIN_SCORE..=MAX_SCORE).contains(&score) {
        return Err(SimError::InvalidConfig(format!("score {score} outside [300, 850]")));
    }
    Ok(logistic(score))
}

#[inline]
fn logistic(score: f64) -> f64 {
    1.0 / (1.0 + (-(score - 550.0) / 60.0).exp())
}

#[inline]
pub fn bin_of(score: f64) -> usize {
    (((score - MIN_SCORE) / BIN_WIDTH).round() as usize).min(BINS - 1)
}

#[inline]
pub fn bin_center(bin: usize) -> f64 {
    MIN_SCORE + BIN_WIDTH * bin as f64
}

/// Individual credit scores per group. The binned histogram is derived.
#[derive(Debug, Clone, PartialEq)]
pub struct LoanEnvState {
    pub scores: [Vec<f64>; 2],
    pub step: usize,
}

impl LoanEnvState {
    pub fn histogram(&self, group: usize) -> [u64; BINS] {
        let mut h = [0u64; BINS];
        for &s in &self.scores[group] {
            h[bin_of(s)] += 1;
        }
        h
    }

    pub fn mean(&self, group: usize) -> f64 {
        let v = &self.scores[group];
        v.iter().sum::<f64>() / v.len() as f64
    }

    fn sd(&self, group: usize) -> f64 {
        let v = &self.scores[group];
        let m = self.mean(group);
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Applicant {
    pub group: usize,
    pub index: usize,
    pub score: f64,
    /// Ground-truth repayment if the loan were granted.
    pub repays: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoanBatch {
    pub applicants: Vec<Applicant>,
}

/// One flag per applicant, in batch order.
pub type LoanDecisions = Vec<bool>;

/// Draws both populations from truncated normals.
pub fn loan_init(scale: &LoanScale, rng: &mut RngStream) -> LoanEnvState {
    let scores = GROUP_MEANS.map(|mean| {
        let dist = Normal::new(mean, INITIAL_SD).expect("valid normal");
        (0..scale.population_per_group)
            .map(|_| loop {
                let s = dist.sample(rng);
                if (MIN_SCORE..=MAX_SCORE).contains(&s) {
                    break s;
                }
            })
            .collect()
    });
    LoanEnvState { scores, step: 0 }
}

/// Samples an applicant batch without replacement. Groups contribute in
/// proportion to their size. Within a group, bins are weighted by their count
/// times a normal density centred on the group mean with the group's spread;
/// per-bin counts come from systematic sampling and individuals are picked
/// uniformly inside each bin.
pub fn loan_project(state: &LoanEnvState, batch_size: usize, rng: &mut RngStream) -> Result<LoanBatch, SimError> {
    let sizes = [state.scores[0].len(), state.scores[1].len()];
    let population = sizes[0] + sizes[1];
    if sizes.contains(&0) {
        return Err(SimError::DegeneratePopulation);
    }
    let batch_size = batch_size.min(population);
    let first = ((batch_size * sizes[0]) as f64 / population as f64).round() as usize;
    let quota = [first.min(sizes[0]), (batch_size - first).min(sizes[1])];

    let mut applicants = Vec::with_capacity(batch_size);
    for g in 0..2 {
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); BINS];
        for (i, &s) in state.scores[g].iter().enumerate() {
            members[bin_of(s)].push(i);
        }
        let mean = state.mean(g);
        let sd = state.sd(g).max(BIN_WIDTH);
        let density: Vec<f64> = (0..BINS)
            .map(|b| (-0.5 * ((bin_center(b) - mean) / sd).powi(2)).exp())
            .collect();
        let mut weights: Vec<f64> = (0..BINS).map(|b| members[b].len() as f64 * density[b]).collect();
        if weights.iter().sum::<f64>() <= 0.0 {
            weights = members.iter().map(|m| m.len() as f64).collect();
        }
        let capacity: Vec<usize> = members.iter().map(Vec::len).collect();
        let counts = systematic_counts(&weights, &capacity, quota[g], rng);
        for (b, &c) in counts.iter().enumerate() {
            let pool = &mut members[b];
            for i in 0..c {
                let j = rng.random_range(i..pool.len());
                pool.swap(i, j);
                let index = pool[i];
                let score = state.scores[g][index];
                let repays = rng.random::<f64>() < logistic(score);
                applicants.push(Applicant { group: g, index, score, repays });
            }
        }
    }
    Ok(LoanBatch { applicants })
}

/// Splits `n` draws over bins in proportion to `weights` with systematic
/// sampling (one uniform offset, evenly spaced points), never exceeding a
/// bin's capacity. Overflow is re-spread over the bins with room left.
pub fn systematic_counts(weights: &[f64], capacity: &[usize], n: usize, rng: &mut RngStream) -> Vec<usize> {
    let mut counts = vec![0usize; weights.len()];
    let mut w = weights.to_vec();
    let mut left = n.min(capacity.iter().sum());
    while left > 0 {
        let total: f64 = w.iter().sum();
        if total <= 0.0 {
            // only zero-weight bins have room: fill them in order
            for (b, c) in counts.iter_mut().enumerate() {
                let take = (capacity[b] - *c).min(left);
                *c += take;
                left -= take;
            }
            break;
        }
        let step = total / left as f64;
        let mut point = rng.random::<f64>() * step;
        let mut acc = 0.0;
        let mut draws = vec![0usize; w.len()];
        let mut placed = 0;
        for (b, wb) in w.iter().enumerate() {
            acc += wb;
            while placed < left && point < acc {
                draws[b] += 1;
                placed += 1;
                point += step;
            }
        }
        // rounding can leave the last point just past the end
        if placed < left {
            let last = w.iter().rposition(|&x| x > 0.0).unwrap();
            draws[last] += left - placed;
        }
        let mut overflow = 0;
        for b in 0..w.len() {
            let room = capacity[b] - counts[b];
            let take = draws[b].min(room);
            counts[b] += take;
            overflow += draws[b] - take;
            if counts[b] == capacity[b] {
                w[b] = 0.0;
            }
        }
        left = overflow;
    }
    counts
}

/// Break-even repayment probability for a loss of `|u|` on default.
pub fn max_util_threshold(bank_utility: f64) -> f64 {
    let loss = bank_utility.abs();
    loss / (1.0 + loss)
}

/// Per-group bin thresholds (approve bins `>= t`, `t = BINS` approves nobody)
/// maximizing expected profit subject to a TPR gap of at most
/// [`EQOP_TOLERANCE`]. TPR is measured on the batch against its sampled
/// repayment outcomes; a group without repayers has TPR 0.
pub fn eqop_thresholds(applicants: &[Applicant], bank_utility: f64) -> [usize; 2] {
    let mut positives = [[0.0; BINS]; 2];
    let mut gain = [[0.0; BINS]; 2];
    for a in applicants {
        let b = bin_of(a.score);
        let p = logistic(a.score);
        positives[a.group][b] += f64::from(u8::from(a.repays));
        gain[a.group][b] += p + (1.0 - p) * bank_utility;
    }
    let mut tpr = [[0.0; BINS + 1]; 2];
    let mut profit = [[0.0; BINS + 1]; 2];
    for g in 0..2 {
        let total: f64 = positives[g].iter().sum();
        let (mut pos_above, mut profit_above) = (0.0, 0.0);
        for t in (0..BINS).rev() {
            pos_above += positives[g][t];
            profit_above += gain[g][t];
            tpr[g][t] = if total > 0.0 { pos_above / total } else { 0.0 };
            profit[g][t] = profit_above;
        }
    }
    let mut best = [BINS, BINS];
    let mut best_profit = 0.0;
    for ta in 0..=BINS {
        for tb in 0..=BINS {
            if (tpr[0][ta] - tpr[1][tb]).abs() <= EQOP_TOLERANCE {
                let p = profit[0][ta] + profit[1][tb];
                if p > best_profit + 1e-9 {
                    best_profit = p;
                    best = [ta, tb];
                }
            }
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub enum LoanRule {
    /// Approve when repayment probability reaches this value.
    Probability(f64),
    /// Approve when the applicant's score bin reaches the group's threshold.
    GroupBins([usize; 2]),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoanOutputs {
    pub probabilities: Vec<f64>,
    pub bins: Vec<usize>,
    pub groups: Vec<usize>,
    pub rule: LoanRule,
}

/// Threshold agent; the threshold is recomputed from the observed population
/// every step.
#[derive(Debug, Clone)]
pub struct LoanAgent {
    pub kind: AgentKind,
    pub bank_utility: f64,
}

impl SystemAgent<LoanBatch> for LoanAgent {
    type Outputs = LoanOutputs;
    type Decisions = LoanDecisions;

    fn predict(&self, batch: &LoanBatch) -> LoanOutputs {
        let rule = match self.kind {
            AgentKind::MaxUtil => LoanRule::Probability(max_util_threshold(self.bank_utility)),
            AgentKind::EqOp => LoanRule::GroupBins(eqop_thresholds(&batch.applicants, self.bank_utility)),
        };
        LoanOutputs {
            probabilities: batch.applicants.iter().map(|a| logistic(a.score)).collect(),
            bins: batch.applicants.iter().map(|a| bin_of(a.score)).collect(),
            groups: batch.applicants.iter().map(|a| a.group).collect(),
            rule,
        }
    }

    fn decide(&self, o: &LoanOutputs) -> LoanDecisions {
        match &o.rule {
            LoanRule::Probability(t) => o.probabilities.iter().map(|p| p >= t).collect(),
            LoanRule::GroupBins(t) => o.bins.iter().zip(&o.groups).map(|(b, g)| *b >= t[*g]).collect(),
        }
    }
}

/// Moves every applicant's score according to the decision and outcome.
pub fn loan_shift(
    mut state: LoanEnvState,
    batch: &LoanBatch,
    decisions: &LoanDecisions,
    params: &LoanParams,
    rng: &mut RngStream,
) -> LoanEnvState {
    let sigma = params.shift_mode.sigma();
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    for (a, &approved) in batch.applicants.iter().zip(decisions) {
        let mean = match (approved, a.repays) {
            (true, true) => params.score_update_repay,
            (true, false) => params.score_update_default,
            (false, _) => REJECTION_PENALTY,
        };
        let delta = if sigma > 0.0 {
            mean + sigma * noise.sample(rng)
        } else {
            mean
        };
        let s = &mut state.scores[a.group][a.index];
        *s = (*s + delta).clamp(MIN_SCORE, MAX_SCORE);
    }
    state.step += 1;
    state
}

/// Profit of one step: +1 per repaid loan, `u` per default.
pub fn step_profit(batch: &LoanBatch, decisions: &LoanDecisions, bank_utility: f64) -> f64 {
    batch
        .applicants
        .iter()
        .zip(decisions)
        .filter(|(_, &d)| d)
        .map(|(a, _)| if a.repays { 1.0 } else { bank_utility })
        .sum()
}

/// Cumulative bank profit over a snapshot stream and its per-step mean.
pub fn bank_profit(snapshots: &[Snapshot]) -> (f64, f64) {
    let total: f64 = snapshots.iter().map(|s| s.utility).sum();
    let mean = if snapshots.is_empty() {
        0.0
    } else {
        total / snapshots.len() as f64
    };
    (total, mean)
}

#[derive(Debug, Clone)]
pub struct LoanEnvironment {
    pub params: LoanParams,
    pub scale: LoanScale,
}

impl EnvironmentModel for LoanEnvironment {
    type State = LoanEnvState;
    type Batch = LoanBatch;
    type Decisions = LoanDecisions;

    fn init(&self, rng: &mut RngStream) -> LoanEnvState {
        loan_init(&self.scale, rng)
    }

    fn project(&self, state: &LoanEnvState, rng: &mut RngStream) -> Result<LoanBatch, SimError> {
        loan_project(state, self.scale.batch_size, rng)
    }

    fn batch_len(&self, batch: &LoanBatch) -> usize {
        batch.applicants.len()
    }

    fn shift(&self, state: LoanEnvState, batch: &LoanBatch, d: &LoanDecisions, rng: &mut RngStream) -> LoanEnvState {
        loan_shift(state, batch, d, &self.params, rng)
    }

    fn summarize(&self, step: usize, state: &LoanEnvState, batch: &LoanBatch, d: &LoanDecisions) -> Snapshot {
        let groups = (0..2)
            .map(|g| {
                let mut stats = GroupStats {
                    label: GROUP_LABELS[g].to_string(),
                    population: state.scores[g].len() as u64,
                    mean_feature: state.mean(g),
                    selected: 0,
                    total: 0,
                    positives: 0,
                    true_positives: 0,
                };
                for (a, &approved) in batch.applicants.iter().zip(d) {
                    if a.group != g {
                        continue;
                    }
                    stats.total += 1;
                    stats.selected += approved as u64;
                    stats.positives += a.repays as u64;
                    stats.true_positives += (approved && a.repays) as u64;
                }
                stats
            })
            .collect();
        Snapshot {
            step,
            groups,
            utility: step_profit(batch, d, self.params.bank_utility),
        }
    }
}

/// Loan lending over a configuration space.
#[derive(Debug, Clone)]
pub struct LoanCase {
    pub space: ConfigSpace,
    pub scale: LoanScale,
}

impl LoanCase {
    pub fn new(space: ConfigSpace, scale: LoanScale) -> Self {
        Self { space, scale }
    }
}

impl Default for LoanCase {
    fn default() -> Self {
        Self::new(default_space(), LoanScale::default())
    }
}

impl Scenario for LoanCase {
    fn simulate(&self, config: &Configuration, k: usize, rng: RngStream) -> Result<Trace, SimError> {
        let params = LoanParams::decode(&self.space, config)?;
        let env = LoanEnvironment {
            params,
            scale: self.scale,
        };
        let mut agent = LoanAgent {
            kind: params.agent,
            bank_utility: params.bank_utility,
        };
        simulate_trace(&env, &mut agent, config, k, rng)
    }
}
