//! Fairness criteria over snapshots, long-term criteria over traces, and
//! utility aggregators.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{Snapshot, Trace};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("empty group")]
    EmptyGroup,
    #[error("no positives in group")]
    NoPositives,
    #[error("criterion needs exactly two groups, snapshot has {0}")]
    GroupCount(usize),
    #[error("fewer than 2 districts")]
    TooFewDistricts,
    #[error("no selections in snapshot")]
    NoSelections,
    #[error("empty trace")]
    EmptyTrace,
    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<MetricError>,
    },
    #[error("unknown metric `{0}`")]
    Unknown(String),
}

fn two_groups(s: &Snapshot) -> Result<(&crate::sim::GroupStats, &crate::sim::GroupStats), MetricError> {
    match s.groups.as_slice() {
        [a, b] => Ok((a, b)),
        other => Err(MetricError::GroupCount(other.len())),
    }
}

/// |P[Ŷ=1 | a] − P[Ŷ=1 | b]| on the step's decisions.
pub fn demographic_parity(s: &Snapshot) -> Result<f64, MetricError> {
    let (a, b) = two_groups(s)?;
    if a.total == 0 || b.total == 0 {
        return Err(MetricError::EmptyGroup);
    }
    Ok((a.selected as f64 / a.total as f64 - b.selected as f64 / b.total as f64).abs())
}

/// Gap in true-positive rates.
pub fn equal_opportunity(s: &Snapshot) -> Result<f64, MetricError> {
    let (a, b) = two_groups(s)?;
    if a.positives == 0 || b.positives == 0 {
        return Err(MetricError::NoPositives);
    }
    Ok((a.true_positives as f64 / a.positives as f64
        - b.true_positives as f64 / b.positives as f64)
        .abs())
}

/// Gap in the groups' mean feature over the whole population.
pub fn mean_gap(s: &Snapshot) -> Result<f64, MetricError> {
    let (a, b) = two_groups(s)?;
    if a.population == 0 || b.population == 0 {
        return Err(MetricError::EmptyGroup);
    }
    Ok((a.mean_feature - b.mean_feature).abs())
}

/// Mean over unordered pairs of |x − y| / ((x + y) / 2); 0/0 pairs count as 0.
pub fn avg_pairwise_rpd(scores: &[f64]) -> Result<f64, MetricError> {
    if scores.len() < 2 {
        return Err(MetricError::TooFewDistricts);
    }
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for (i, &x) in scores.iter().enumerate() {
        for &y in &scores[i + 1..] {
            let mid = (x + y) / 2.0;
            if mid > 0.0 {
                sum += (x - y).abs() / mid;
            }
            pairs += 1;
        }
    }
    Ok(sum / pairs as f64)
}

/// Each group's share of selections divided by its share of the decision
/// units (for policing: share of hotspots over share of area).
pub fn selection_share_ratios(s: &Snapshot) -> Result<Vec<f64>, MetricError> {
    let selected: u64 = s.groups.iter().map(|g| g.selected).sum();
    let total: u64 = s.groups.iter().map(|g| g.total).sum();
    if selected == 0 {
        return Err(MetricError::NoSelections);
    }
    s.groups
        .iter()
        .map(|g| {
            if g.total == 0 {
                return Err(MetricError::EmptyGroup);
            }
            Ok((g.selected as f64 / selected as f64) / (g.total as f64 / total as f64))
        })
        .collect()
}

/// A per-snapshot fairness criterion `F`.
pub trait SnapshotCriterion: Send + Sync {
    fn id(&self) -> &str;
    fn evaluate(&self, s: &Snapshot) -> Result<f64, MetricError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Criterion {
    #[serde(rename = "dp")]
    DemographicParity,
    #[serde(rename = "eo")]
    EqualOpportunity,
    #[serde(rename = "mean_gap")]
    MeanGap,
    #[serde(rename = "rpd")]
    Rpd,
}

impl Criterion {
    pub const ALL: [Criterion; 4] = [
        Criterion::DemographicParity,
        Criterion::EqualOpportunity,
        Criterion::MeanGap,
        Criterion::Rpd,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Criterion::DemographicParity => "dp",
            Criterion::EqualOpportunity => "eo",
            Criterion::MeanGap => "mean_gap",
            Criterion::Rpd => "rpd",
        }
    }
}

impl SnapshotCriterion for Criterion {
    fn id(&self) -> &str {
        self.as_str()
    }

    fn evaluate(&self, s: &Snapshot) -> Result<f64, MetricError> {
        match self {
            Criterion::DemographicParity => demographic_parity(s),
            Criterion::EqualOpportunity => equal_opportunity(s),
            Criterion::MeanGap => mean_gap(s),
            Criterion::Rpd => avg_pairwise_rpd(&selection_share_ratios(s)?),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LongTermMode {
    AvgInc,
    MaxInc,
}

impl LongTermMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            LongTermMode::AvgInc => "avg_inc",
            LongTermMode::MaxInc => "max_inc",
        }
    }
}

fn criterion_values<C: SnapshotCriterion + ?Sized>(t: &Trace, f: &C) -> Result<Vec<f64>, MetricError> {
    if t.snapshots.is_empty() {
        return Err(MetricError::EmptyTrace);
    }
    t.snapshots
        .iter()
        .map(|s| {
            f.evaluate(s).map_err(|e| MetricError::AtStep {
                step: s.step,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Mean of `F` over the trace minus `F` at the first snapshot.
pub fn avg_inc<C: SnapshotCriterion + ?Sized>(t: &Trace, f: &C) -> Result<f64, MetricError> {
    let v = criterion_values(t, f)?;
    Ok(v.iter().sum::<f64>() / v.len() as f64 - v[0])
}

/// Maximum of `F` over the trace minus `F` at the first snapshot.
pub fn max_inc<C: SnapshotCriterion + ?Sized>(t: &Trace, f: &C) -> Result<f64, MetricError> {
    let v = criterion_values(t, f)?;
    Ok(v.iter().copied().fold(f64::NEG_INFINITY, f64::max) - v[0])
}

/// A scalar summary of one trace.
pub trait TraceMetric: Send + Sync {
    fn id(&self) -> String;
    fn evaluate(&self, t: &Trace) -> Result<f64, MetricError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LongTermMetric<C = Criterion> {
    pub criterion: C,
    pub mode: LongTermMode,
}

impl<C> LongTermMetric<C> {
    pub fn new(criterion: C, mode: LongTermMode) -> Self {
        Self { criterion, mode }
    }
}

impl<C: SnapshotCriterion> TraceMetric for LongTermMetric<C> {
    fn id(&self) -> String {
        format!("{}_{}", self.mode.as_str(), self.criterion.id())
    }

    fn evaluate(&self, t: &Trace) -> Result<f64, MetricError> {
        match self.mode {
            LongTermMode::AvgInc => avg_inc(t, &self.criterion),
            LongTermMode::MaxInc => max_inc(t, &self.criterion),
        }
    }
}

/// Utility aggregators over a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Utility {
    /// Sum of per-step utility (bank profit, discovered incidents).
    TotalUtility,
    MeanUtility,
    /// Selected positives over all positives, pooled across the trace.
    DiscoveryRate,
}

impl Utility {
    pub const ALL: [Utility; 3] = [Utility::TotalUtility, Utility::MeanUtility, Utility::DiscoveryRate];

    pub fn as_str(&self) -> &'static str {
        match self {
            Utility::TotalUtility => "total_utility",
            Utility::MeanUtility => "mean_utility",
            Utility::DiscoveryRate => "discovery_rate",
        }
    }
}

impl TraceMetric for Utility {
    fn id(&self) -> String {
        self.as_str().to_string()
    }

    fn evaluate(&self, t: &Trace) -> Result<f64, MetricError> {
        if t.snapshots.is_empty() {
            return Err(MetricError::EmptyTrace);
        }
        let total: f64 = t.snapshots.iter().map(|s| s.utility).sum();
        Ok(match self {
            Utility::TotalUtility => total,
            Utility::MeanUtility => total / t.snapshots.len() as f64,
            Utility::DiscoveryRate => {
                let (tp, pos) = t
                    .snapshots
                    .iter()
                    .flat_map(|s| &s.groups)
                    .fold((0u64, 0u64), |(tp, pos), g| (tp + g.true_positives, pos + g.positives));
                if pos == 0 {
                    0.0
                } else {
                    tp as f64 / pos as f64
                }
            }
        })
    }
}

/// Any metric addressable by id from an experiment file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MetricId {
    LongTerm(LongTermMetric),
    Utility(Utility),
}

impl MetricId {
    pub fn as_trace_metric(&self) -> &dyn TraceMetric {
        match self {
            MetricId::LongTerm(m) => m,
            MetricId::Utility(u) => u,
        }
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.as_trace_metric().id())
    }
}

impl FromStr for MetricId {
    type Err = MetricError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(u) = Utility::ALL.iter().find(|u| u.as_str() == s) {
            return Ok(MetricId::Utility(*u));
        }
        for mode in [LongTermMode::AvgInc, LongTermMode::MaxInc] {
            if let Some(rest) = s.strip_prefix(mode.as_str()).and_then(|r| r.strip_prefix('_')) {
                if let Some(c) = Criterion::ALL.iter().find(|c| c.as_str() == rest) {
                    return Ok(MetricId::LongTerm(LongTermMetric::new(*c, mode)));
                }
            }
        }
        Err(MetricError::Unknown(s.to_string()))
    }
}

/// Sample mean and sample standard deviation (divisor m − 1, 0 for m = 1).
pub fn sample_stats(values: &[f64]) -> (f64, f64) {
    let m = values.len();
    if m == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / m as f64;
    if m == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
    (mean, var.sqrt())
}

/// Sample mean and std of `lf` across traces.
pub fn trace_statistic_over_runs(
    traces: &[Trace],
    lf: &dyn TraceMetric,
) -> Result<crate::sim::Stats, MetricError> {
    if traces.is_empty() {
        return Err(MetricError::EmptyTrace);
    }
    let values = traces.iter().map(|t| lf.evaluate(t)).collect::<Result<Vec<_>, _>>()?;
    let (mean, std) = sample_stats(&values);
    Ok(crate::sim::Stats { mean, std })
}
