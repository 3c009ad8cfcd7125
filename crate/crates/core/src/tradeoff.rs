//! Pareto fronts over fairness and utility objectives.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TradeoffError {
    #[error("no points")]
    NoPoints,
    #[error("no objectives")]
    NoObjectives,
    #[error("point {id} has {got} objectives, expected {expected}")]
    Dimension { id: u64, got: usize, expected: usize },
    #[error("empty front")]
    EmptyFront,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSpec {
    pub metric: String,
    pub direction: Direction,
}

impl ObjectiveSpec {
    pub fn new(metric: &str, direction: Direction) -> Self {
        Self {
            metric: metric.to_string(),
            direction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub id: u64,
    pub objectives: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoFront {
    pub specs: Vec<ObjectiveSpec>,
    /// Members in input order.
    pub members: Vec<Point>,
    /// Ids of points dropped for non-finite objectives.
    pub excluded: Vec<u64>,
    /// Per-objective (min, max) over the members.
    pub scaling: Vec<(f64, f64)>,
}

/// `a` dominates `b`: no worse everywhere, strictly better somewhere.
pub fn dominates(a: &[f64], b: &[f64], specs: &[ObjectiveSpec]) -> bool {
    let mut strictly = false;
    for ((x, y), s) in a.iter().zip(b).zip(specs) {
        let (x, y) = match s.direction {
            Direction::Minimize => (*x, *y),
            Direction::Maximize => (-*x, -*y),
        };
        if x > y {
            return false;
        }
        if x < y {
            strictly = true;
        }
    }
    strictly
}

/// Non-dominated subset of `points`; identical vectors are all kept.
///
/// Points are visited in lexicographic order of their minimize-oriented
/// vectors, so a point can only be dominated by points visited before it,
/// and only front members need to be checked.
pub fn pareto_front(points: &[Point], specs: &[ObjectiveSpec]) -> Result<ParetoFront, TradeoffError> {
    if points.is_empty() {
        return Err(TradeoffError::NoPoints);
    }
    if specs.is_empty() {
        return Err(TradeoffError::NoObjectives);
    }
    let mut excluded = Vec::new();
    let mut oriented: Vec<(usize, Vec<f64>)> = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        if p.objectives.len() != specs.len() {
            return Err(TradeoffError::Dimension {
                id: p.id,
                got: p.objectives.len(),
                expected: specs.len(),
            });
        }
        if p.objectives.iter().any(|v| !v.is_finite()) {
            excluded.push(p.id);
            continue;
        }
        let v = p
            .objectives
            .iter()
            .zip(specs)
            .map(|(x, s)| match s.direction {
                Direction::Minimize => *x,
                Direction::Maximize => -*x,
            })
            .collect();
        oriented.push((i, v));
    }
    oriented.sort_by(|a, b| {
        a.1.iter()
            .zip(&b.1)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });

    let minimize_all: Vec<ObjectiveSpec> = specs
        .iter()
        .map(|s| ObjectiveSpec::new(&s.metric, Direction::Minimize))
        .collect();
    let mut front: Vec<usize> = Vec::new();
    for (k, (_, v)) in oriented.iter().enumerate() {
        if !front.iter().any(|&f| dominates(&oriented[f].1, v, &minimize_all)) {
            front.push(k);
        }
    }
    let mut member_idx: Vec<usize> = front.into_iter().map(|k| oriented[k].0).collect();
    member_idx.sort_unstable();
    let members: Vec<Point> = member_idx.into_iter().map(|i| points[i].clone()).collect();
    let scaling = (0..specs.len())
        .map(|j| {
            members.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), m| {
                (lo.min(m.objectives[j]), hi.max(m.objectives[j]))
            })
        })
        .collect();
    Ok(ParetoFront {
        specs: specs.to_vec(),
        members,
        excluded,
        scaling,
    })
}

/// Maps each objective affinely onto [0, 1] over the front, higher = better.
/// Constant objectives map to 1.
pub fn normalize_for_radar(front: &ParetoFront) -> Result<Vec<Vec<f64>>, TradeoffError> {
    if front.members.is_empty() {
        return Err(TradeoffError::EmptyFront);
    }
    Ok(front
        .members
        .iter()
        .map(|m| {
            m.objectives
                .iter()
                .zip(&front.scaling)
                .zip(&front.specs)
                .map(|((&x, &(lo, hi)), s)| {
                    if hi <= lo {
                        return 1.0;
                    }
                    let t = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
                    match s.direction {
                        Direction::Maximize => t,
                        Direction::Minimize => 1.0 - t,
                    }
                })
                .collect()
        })
        .collect())
}
