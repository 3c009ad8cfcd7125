//! Parameter spaces, configuration enumeration and covering-array sampling.
//!
//! A [`ConfigSpace`] is the cartesian product of its parameters' value lists.
//! Configurations are addressed by their rank in row-major order (the last
//! parameter varies fastest), so an id and an assignment vector are
//! interchangeable.

use std::collections::HashSet;
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::RngStream;

/// Number of random candidate rows scored per covering-array row.
pub const COVERING_CANDIDATES: usize = 50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("empty space")]
    EmptySpace,
    #[error("parameter `{0}` has no values")]
    NoValues(String),
    #[error("parameter `{name}` has duplicate value `{value}`")]
    DuplicateValue { name: String, value: String },
    #[error("parameter `{0}` mixes numeric and categorical values")]
    MixedValues(String),
    #[error("duplicate parameter name `{0}`")]
    DuplicateName(String),
    #[error("strength out of range: g = {g} with {params} parameters")]
    StrengthOutOfRange { g: usize, params: usize },
    #[error("configuration id {id} out of range (space has {size} configurations)")]
    IdOutOfRange { id: u64, size: u64 },
    #[error("invalid assignment: {0}")]
    InvalidAssignment(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    System,
    Environmental,
}

/// One level of a parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Numeric(f64),
    Categorical(String),
}

impl ParamValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ParamValue::Numeric(x) => Some(*x),
            ParamValue::Categorical(_) => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            ParamValue::Numeric(_) => None,
            ParamValue::Categorical(s) => Some(s),
        }
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, ParamValue::Numeric(_))
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Numeric(x) => write!(f, "{x}"),
            ParamValue::Categorical(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterDef {
    pub name: String,
    pub kind: ParamKind,
    pub values: Vec<ParamValue>,
}

impl ParameterDef {
    pub fn numeric(name: &str, kind: ParamKind, values: &[f64]) -> Self {
        Self {
            name: name.to_string(),
            kind,
            values: values.iter().map(|&v| ParamValue::Numeric(v)).collect(),
        }
    }

    pub fn categorical(name: &str, kind: ParamKind, values: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            kind,
            values: values
                .iter()
                .map(|v| ParamValue::Categorical(v.to_string()))
                .collect(),
        }
    }

    pub fn is_numeric(&self) -> bool {
        self.values.first().is_some_and(ParamValue::is_numeric)
    }

    pub fn level_count(&self) -> usize {
        self.values.len()
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if self.values.is_empty() {
            return Err(ConfigError::NoValues(self.name.clone()));
        }
        let numeric = self.values[0].is_numeric();
        if self.values.iter().any(|v| v.is_numeric() != numeric) {
            return Err(ConfigError::MixedValues(self.name.clone()));
        }
        for (i, v) in self.values.iter().enumerate() {
            if self.values[..i].contains(v) {
                return Err(ConfigError::DuplicateValue {
                    name: self.name.clone(),
                    value: v.to_string(),
                });
            }
        }
        Ok(())
    }
}

/// The product space of a list of parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSpace {
    parameters: Vec<ParameterDef>,
}

impl ConfigSpace {
    pub fn new(parameters: Vec<ParameterDef>) -> Result<Self, ConfigError> {
        if parameters.is_empty() {
            return Err(ConfigError::EmptySpace);
        }
        let mut names = HashSet::new();
        for p in &parameters {
            p.validate()?;
            if !names.insert(p.name.as_str()) {
                return Err(ConfigError::DuplicateName(p.name.clone()));
            }
        }
        Ok(Self { parameters })
    }

    pub fn parameters(&self) -> &[ParameterDef] {
        &self.parameters
    }

    pub fn len(&self) -> usize {
        self.parameters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parameters.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.parameters.iter().position(|p| p.name == name)
    }

    pub fn level_counts(&self) -> Vec<usize> {
        self.parameters.iter().map(ParameterDef::level_count).collect()
    }

    /// Total number of configurations (saturating on overflow).
    pub fn size(&self) -> u64 {
        self.parameters
            .iter()
            .fold(1u64, |acc, p| acc.saturating_mul(p.level_count() as u64))
    }

    pub fn config_from_id(&self, id: u64) -> Result<Configuration, ConfigError> {
        let size = self.size();
        if id >= size {
            return Err(ConfigError::IdOutOfRange { id, size });
        }
        let mut rest = id;
        let mut assignments = vec![0usize; self.len()];
        for (slot, p) in assignments.iter_mut().zip(&self.parameters).rev() {
            let n = p.level_count() as u64;
            *slot = (rest % n) as usize;
            rest /= n;
        }
        Ok(Configuration { id, assignments })
    }

    pub fn config_from_assignments(
        &self,
        assignments: Vec<usize>,
    ) -> Result<Configuration, ConfigError> {
        if assignments.len() != self.len() {
            return Err(ConfigError::InvalidAssignment(format!(
                "expected {} indices, got {}",
                self.len(),
                assignments.len()
            )));
        }
        let mut id = 0u64;
        for (&a, p) in assignments.iter().zip(&self.parameters) {
            if a >= p.level_count() {
                return Err(ConfigError::InvalidAssignment(format!(
                    "index {a} out of range for `{}`",
                    p.name
                )));
            }
            id = id * p.level_count() as u64 + a as u64;
        }
        Ok(Configuration { id, assignments })
    }

    /// Decoded value of parameter `name` in `config`.
    pub fn value<'a>(&'a self, config: &Configuration, name: &str) -> Option<&'a ParamValue> {
        let i = self.index_of(name)?;
        self.parameters[i].values.get(*config.assignments.get(i)?)
    }

    pub fn decode<'a>(&'a self, config: &Configuration) -> Vec<&'a ParamValue> {
        self.parameters
            .iter()
            .zip(&config.assignments)
            .map(|(p, &a)| &p.values[a])
            .collect()
    }
}

/// One point of a [`ConfigSpace`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Configuration {
    pub id: u64,
    pub assignments: Vec<usize>,
}

/// All configurations of `space` in row-major order.
pub fn enumerate_configs(space: &ConfigSpace) -> Result<Vec<Configuration>, ConfigError> {
    if space.is_empty() {
        return Err(ConfigError::EmptySpace);
    }
    (0..space.size()).map(|id| space.config_from_id(id)).collect()
}

/// Tracks which g-way value combinations are still uncovered.
///
/// One bitmap per parameter subset, indexed by the mixed-radix number formed
/// by the subset's value indices.
struct CoverageTable {
    subsets: Vec<Vec<usize>>,
    covered: Vec<Vec<bool>>,
    /// For each parameter, the subsets it belongs to.
    by_param: Vec<Vec<usize>>,
    levels: Vec<usize>,
    uncovered: usize,
}

impl CoverageTable {
    fn new(levels: &[usize], g: usize) -> Self {
        let subsets = combinations(levels.len(), g);
        let covered: Vec<Vec<bool>> = subsets
            .iter()
            .map(|s| vec![false; s.iter().map(|&i| levels[i]).product()])
            .collect();
        let uncovered = covered.iter().map(Vec::len).sum();
        let mut by_param = vec![Vec::new(); levels.len()];
        for (si, s) in subsets.iter().enumerate() {
            for &p in s {
                by_param[p].push(si);
            }
        }
        Self {
            subsets,
            covered,
            by_param,
            levels: levels.to_vec(),
            uncovered,
        }
    }

    fn slot(&self, subset: usize, row: &[usize]) -> usize {
        self.subsets[subset]
            .iter()
            .fold(0, |acc, &p| acc * self.levels[p] + row[p])
    }

    fn new_coverage(&self, row: &[usize]) -> usize {
        (0..self.subsets.len())
            .filter(|&s| !self.covered[s][self.slot(s, row)])
            .count()
    }

    fn mark(&mut self, row: &[usize]) {
        for s in 0..self.subsets.len() {
            let slot = self.slot(s, row);
            if !self.covered[s][slot] {
                self.covered[s][slot] = true;
                self.uncovered -= 1;
            }
        }
    }

    /// First uncovered (subset, slot) pair in table order.
    fn first_uncovered(&self) -> Option<(usize, usize)> {
        self.covered
            .iter()
            .enumerate()
            .find_map(|(s, bits)| bits.iter().position(|&c| !c).map(|slot| (s, slot)))
    }

    fn nth_uncovered(&self, mut n: usize) -> Option<(usize, usize)> {
        for (s, bits) in self.covered.iter().enumerate() {
            for (slot, &c) in bits.iter().enumerate() {
                if !c {
                    if n == 0 {
                        return Some((s, slot));
                    }
                    n -= 1;
                }
            }
        }
        None
    }

    fn decode_slot(&self, subset: usize, mut slot: usize) -> Vec<(usize, usize)> {
        let params = &self.subsets[subset];
        let mut out = vec![(0, 0); params.len()];
        for (i, &p) in params.iter().enumerate().rev() {
            out[i] = (p, slot % self.levels[p]);
            slot /= self.levels[p];
        }
        out
    }

    /// Uncovered tuples that would be completed by setting `param = value`
    /// given the already-fixed parameters of `row`.
    fn gain(&self, row: &[Option<usize>], param: usize, value: usize) -> usize {
        let mut count = 0;
        for &s in &self.by_param[param] {
            let mut slot = 0;
            let mut complete = true;
            for &p in &self.subsets[s] {
                let v = if p == param { Some(value) } else { row[p] };
                match v {
                    Some(v) => slot = slot * self.levels[p] + v,
                    None => {
                        complete = false;
                        break;
                    }
                }
            }
            if complete && !self.covered[s][slot] {
                count += 1;
            }
        }
        count
    }
}

/// All `k`-element subsets of `0..n` in lexicographic order.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let Some(i) = (0..k).rev().find(|&i| idx[i] < n - k + i) else {
            return out;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Builds a strength-`g` covering array greedily, one row at a time.
///
/// Each candidate row starts from an uncovered g-tuple and fills the remaining
/// parameters in random order, each with the value completing the most
/// uncovered tuples (ties: least used so far, then random). The best of
/// [`COVERING_CANDIDATES`] candidates is kept; ties go to the row whose values
/// have been used least, then to the lexicographically smallest. Keeping value
/// frequencies even matters for regression on the sample: a skewed array
/// correlates the main-effect and interaction columns. The result is returned
/// sorted by configuration id.
pub fn sample_covering_array(
    space: &ConfigSpace,
    g: usize,
    seed: u64,
) -> Result<Vec<Configuration>, ConfigError> {
    let n = space.len();
    if g < 2 || g > n {
        return Err(ConfigError::StrengthOutOfRange { g, params: n });
    }
    let levels = space.level_counts();
    let mut table = CoverageTable::new(&levels, g);
    let mut rng = RngStream::new(seed);
    let mut rows: Vec<Vec<usize>> = Vec::new();
    let mut order: Vec<usize> = (0..n).collect();
    let mut usage: Vec<Vec<usize>> = levels.iter().map(|&l| vec![0; l]).collect();

    while table.uncovered > 0 {
        let mut best: Option<(usize, usize, Vec<usize>)> = None;
        for c in 0..COVERING_CANDIDATES {
            // The first candidate always seeds from the first uncovered tuple,
            // so the loop makes progress even when random seeds are unlucky.
            let (subset, slot) = if c == 0 {
                table.first_uncovered()
            } else {
                table.nth_uncovered(rng.random_range(0..table.uncovered))
            }
            .expect("uncovered tuple exists");
            let mut row: Vec<Option<usize>> = vec![None; n];
            for (p, v) in table.decode_slot(subset, slot) {
                row[p] = Some(v);
            }
            order.shuffle(&mut rng);
            for &p in &order {
                if row[p].is_some() {
                    continue;
                }
                let mut best_v = Vec::new();
                let mut best_key = (0, 0);
                for v in 0..levels[p] {
                    // more gain first, then fewer previous uses
                    let key = (table.gain(&row, p, v), usize::MAX - usage[p][v]);
                    if best_v.is_empty() || key > best_key {
                        best_v.clear();
                        best_key = key;
                        best_v.push(v);
                    } else if key == best_key {
                        best_v.push(v);
                    }
                }
                row[p] = Some(best_v[rng.random_range(0..best_v.len())]);
            }
            let row: Vec<usize> = row.into_iter().map(|v| v.unwrap()).collect();
            let cover = table.new_coverage(&row);
            let used: usize = row.iter().enumerate().map(|(p, &v)| usage[p][v]).sum();
            let better = match &best {
                None => true,
                Some((bc, bu, br)) => (cover, usize::MAX - used, std::cmp::Reverse(&row)) > (*bc, usize::MAX - *bu, std::cmp::Reverse(br)),
            };
            if better {
                best = Some((cover, used, row));
            }
        }
        let (_, _, row) = best.expect("at least one candidate");
        table.mark(&row);
        for (p, &v) in row.iter().enumerate() {
            usage[p][v] += 1;
        }
        rows.push(row);
    }

    let mut configs = rows
        .into_iter()
        .map(|r| space.config_from_assignments(r))
        .collect::<Result<Vec<_>, _>>()?;
    configs.sort();
    configs.dedup();
    Ok(configs)
}

/// A g-way value combination: `(parameter index, value index)` pairs in
/// ascending parameter order.
pub type ValueTuple = Vec<(usize, usize)>;

/// Lists every g-way combination not present in any of `configs`.
pub fn verify_coverage(configs: &[Configuration], space: &ConfigSpace, g: usize) -> Vec<ValueTuple> {
    let levels = space.level_counts();
    if g == 0 || g > levels.len() {
        return Vec::new();
    }
    let mut table = CoverageTable::new(&levels, g);
    for c in configs {
        if c.assignments.len() == levels.len() {
            table.mark(&c.assignments);
        }
    }
    let mut missing = Vec::new();
    for (s, bits) in table.covered.iter().enumerate() {
        for (slot, &c) in bits.iter().enumerate() {
            if !c {
                missing.push(table.decode_slot(s, slot));
            }
        }
    }
    missing
}
