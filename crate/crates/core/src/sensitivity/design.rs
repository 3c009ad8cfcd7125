use serde::{Deserialize, Serialize};

use crate::config::{ConfigSpace, Configuration, ParamValue};

use super::SensitivityError;

/// Columns whose sample std falls below this are treated as constant.
const CONSTANT_STD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TermKind {
    Main { param: usize },
    Interaction { first: usize, second: usize },
}

/// A regression term and the design columns that encode it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub name: String,
    pub kind: TermKind,
    pub columns: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub term: usize,
    /// Dummy level(s) for categorical parameters, empty for numeric ones.
    pub dummy: String,
    pub values: Vec<f64>,
}

/// Standardized design with pairwise interactions.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub terms: Vec<Term>,
    pub columns: Vec<Column>,
    pub response: Vec<f64>,
    pub config_ids: Vec<u64>,
    /// Descriptions of columns dropped for being constant, and terms left
    /// without columns.
    pub dropped: Vec<String>,
}

impl DesignMatrix {
    pub fn rows(&self) -> usize {
        self.response.len()
    }

    pub fn ss_total(&self) -> f64 {
        let n = self.response.len() as f64;
        let mean = self.response.iter().sum::<f64>() / n;
        self.response.iter().map(|y| (y - mean).powi(2)).sum()
    }
}

/// Z-scores `v` in place with the sample std; `false` if `v` is constant.
pub fn standardize(v: &mut [f64]) -> bool {
    let n = v.len() as f64;
    if v.len() < 2 {
        return false;
    }
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    if !(sd > CONSTANT_STD * (1.0 + mean.abs())) {
        return false;
    }
    for x in v.iter_mut() {
        *x = (*x - mean) / sd;
    }
    true
}

struct RawColumn {
    dummy: String,
    values: Vec<f64>,
}

fn main_columns(space: &ConfigSpace, configs: &[Configuration], p: usize) -> Vec<RawColumn> {
    let def = &space.parameters()[p];
    if def.is_numeric() {
        let values = configs
            .iter()
            .map(|c| def.values[c.assignments[p]].as_f64().unwrap_or(f64::NAN))
            .collect();
        vec![RawColumn {
            dummy: String::new(),
            values,
        }]
    } else {
        // first-listed level is the reference
        def.values
            .iter()
            .enumerate()
            .skip(1)
            .map(|(level, v)| RawColumn {
                dummy: match v {
                    ParamValue::Categorical(s) => s.clone(),
                    ParamValue::Numeric(x) => x.to_string(),
                },
                values: configs
                    .iter()
                    .map(|c| if c.assignments[p] == level { 1.0 } else { 0.0 })
                    .collect(),
            })
            .collect()
    }
}

/// Encodes one row per configuration: z-scored main columns (categorical
/// parameters one-hot with the first level dropped) followed by re-standardized
/// pairwise products of the standardized main columns.
pub fn encode_design(
    space: &ConfigSpace,
    configs: &[Configuration],
    responses: &[f64],
) -> Result<DesignMatrix, SensitivityError> {
    if configs.len() != responses.len() {
        return Err(SensitivityError::Shape(format!(
            "{} configurations but {} responses",
            configs.len(),
            responses.len()
        )));
    }
    let mut distinct: Vec<&Vec<usize>> = configs.iter().map(|c| &c.assignments).collect();
    distinct.sort();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(SensitivityError::TooFewConfigurations);
    }
    if responses.iter().any(|y| !y.is_finite()) {
        return Err(SensitivityError::NonFiniteResponse);
    }
    if configs.iter().any(|c| c.assignments.len() != space.len()) {
        return Err(SensitivityError::Shape("configuration outside the space".into()));
    }

    let names: Vec<&str> = space.parameters().iter().map(|p| p.name.as_str()).collect();
    let mut terms = Vec::new();
    let mut columns: Vec<Column> = Vec::new();
    let mut dropped = Vec::new();
    // standardized main columns per parameter: (dummy, values)
    let mut mains: Vec<Vec<(String, Vec<f64>)>> = Vec::with_capacity(space.len());

    for p in 0..space.len() {
        let mut kept = Vec::new();
        for mut raw in main_columns(space, configs, p) {
            if standardize(&mut raw.values) {
                kept.push((raw.dummy, raw.values));
            } else {
                dropped.push(column_label(names[p], &raw.dummy));
            }
        }
        push_term(
            &mut terms,
            &mut columns,
            &mut dropped,
            names[p].to_string(),
            TermKind::Main { param: p },
            kept.clone(),
        );
        mains.push(kept);
    }

    for i in 0..space.len() {
        for j in i + 1..space.len() {
            let name = format!("{}:{}", names[i], names[j]);
            let mut kept = Vec::new();
            for (di, vi) in &mains[i] {
                for (dj, vj) in &mains[j] {
                    let mut prod: Vec<f64> = vi.iter().zip(vj).map(|(a, b)| a * b).collect();
                    let dummy = match (di.is_empty(), dj.is_empty()) {
                        (true, true) => String::new(),
                        (false, true) => di.clone(),
                        (true, false) => dj.clone(),
                        (false, false) => format!("({di}, {dj})"),
                    };
                    if standardize(&mut prod) {
                        kept.push((dummy, prod));
                    } else {
                        dropped.push(column_label(&name, &dummy));
                    }
                }
            }
            push_term(
                &mut terms,
                &mut columns,
                &mut dropped,
                name,
                TermKind::Interaction { first: i, second: j },
                kept,
            );
        }
    }

    Ok(DesignMatrix {
        terms,
        columns,
        response: responses.to_vec(),
        config_ids: configs.iter().map(|c| c.id).collect(),
        dropped,
    })
}

fn column_label(term: &str, dummy: &str) -> String {
    if dummy.is_empty() {
        term.to_string()
    } else {
        format!("{term}[{dummy}]")
    }
}

fn push_term(
    terms: &mut Vec<Term>,
    columns: &mut Vec<Column>,
    dropped: &mut Vec<String>,
    name: String,
    kind: TermKind,
    kept: Vec<(String, Vec<f64>)>,
) {
    if kept.is_empty() {
        dropped.push(format!("term {name} (no varying columns)"));
        return;
    }
    let term = terms.len();
    let mut idx = Vec::with_capacity(kept.len());
    for (dummy, values) in kept {
        idx.push(columns.len());
        columns.push(Column {
            term,
            dummy,
            values,
        });
    }
    terms.push(Term {
        name,
        kind,
        columns: idx,
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{enumerate_configs, ParamKind, ParameterDef};

    fn stats(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
    }

    #[test]
    fn numeric_column_uses_sample_std() {
        let space = ConfigSpace::new(vec![ParameterDef::numeric("x", ParamKind::System, &[1.0, 2.0, 3.0])]).unwrap();
        let configs = enumerate_configs(&space).unwrap();
        let d = encode_design(&space, &configs, &[0.0, 1.0, 5.0]).unwrap();
        assert_eq!(d.columns.len(), 1);
        let v = &d.columns[0].values;
        for (got, want) in v.iter().zip([-1.0, 0.0, 1.0]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn binary_categorical_gets_one_dummy() {
        let space = ConfigSpace::new(vec![
            ParameterDef::categorical("agent", ParamKind::System, &["eq-op", "max-util"]),
            ParameterDef::numeric("u", ParamKind::System, &[-3.0, -2.0]),
        ])
        .unwrap();
        let configs = enumerate_configs(&space).unwrap();
        let d = encode_design(&space, &configs, &[1.0, 2.0, 3.0, 5.0]).unwrap();
        assert_eq!(d.terms[0].name, "agent");
        assert_eq!(d.terms[0].columns.len(), 1);
        assert_eq!(d.columns[d.terms[0].columns[0]].dummy, "max-util");
        assert_eq!(d.terms[2].name, "agent:u");
        assert_eq!(d.columns[d.terms[2].columns[0]].dummy, "max-util");
        for c in &d.columns {
            let (m, s) = stats(&c.values);
            assert!(m.abs() < 1e-9 && (s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn three_level_categorical_interactions() {
        let space = ConfigSpace::new(vec![
            ParameterDef::categorical("mode", ParamKind::Environmental, &["expected", "normal", "aggressive"]),
            ParameterDef::categorical("agent", ParamKind::System, &["eq-op", "max-util"]),
        ])
        .unwrap();
        let configs = enumerate_configs(&space).unwrap();
        let y: Vec<f64> = (0..6).map(|i| i as f64).collect();
        let d = encode_design(&space, &configs, &y).unwrap();
        assert_eq!(d.terms[0].columns.len(), 2);
        let inter = &d.terms[2];
        let labels: Vec<&str> = inter.columns.iter().map(|&c| d.columns[c].dummy.as_str()).collect();
        assert_eq!(labels, vec!["(normal, max-util)", "(aggressive, max-util)"]);
    }

    #[test]
    fn constant_parameter_is_dropped() {
        let space = ConfigSpace::new(vec![
            ParameterDef::numeric("a", ParamKind::System, &[1.0, 2.0]),
            ParameterDef::numeric("b", ParamKind::System, &[1.0, 2.0]),
        ])
        .unwrap();
        let configs: Vec<_> = [0u64, 2].iter().map(|&i| space.config_from_id(i).unwrap()).collect();
        // b is 1.0 in both rows
        let d = encode_design(&space, &configs, &[1.0, 2.0]).unwrap();
        assert_eq!(d.terms.len(), 1);
        assert_eq!(d.terms[0].name, "a");
        assert!(d.dropped.iter().any(|s| s == "b"));
        assert!(d.dropped.iter().any(|s| s.contains("a:b")));
    }

    #[test]
    fn needs_two_distinct_rows() {
        let space = ConfigSpace::new(vec![ParameterDef::numeric("a", ParamKind::System, &[1.0, 2.0])]).unwrap();
        let c = space.config_from_id(0).unwrap();
        assert!(matches!(
            encode_design(&space, &[c.clone(), c], &[1.0, 2.0]),
            Err(SensitivityError::TooFewConfigurations)
        ));
    }
}
