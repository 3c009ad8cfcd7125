//! Experiment files: JSON describing one campaign end to end.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cases::{self, CaseStudy, LoanCase, LoanScale, PolicingCase, PolicingScale};
use crate::config::{ConfigSpace, ParameterDef};
use crate::metrics::{Criterion, LongTermMetric, LongTermMode, MetricId, TraceMetric, Utility};
use crate::sim::{MonteCarloLimits, TraceRetention};
use crate::tradeoff::ObjectiveSpec;

/// A parse or validation failure, tagged with the offending field path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExperimentError {
    pub field: String,
    pub message: String,
}

impl ExperimentError {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ExperimentError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.field.is_empty() || self.field == "." {
            f.write_str(&self.message)
        } else {
            write!(f, "{}: {}", self.field, self.message)
        }
    }
}

impl std::error::Error for ExperimentError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    #[default]
    Full,
    Covering,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sampling {
    #[serde(default)]
    pub mode: SamplingMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strength: Option<usize>,
}

/// A long-term fairness metric: criterion plus aggregation mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSpec {
    pub criterion: Criterion,
    pub mode: LongTermMode,
}

impl MetricSpec {
    pub fn metric(&self) -> LongTermMetric {
        LongTermMetric::new(self.criterion, self.mode)
    }

    pub fn id(&self) -> String {
        self.metric().id()
    }
}

fn default_output_dir() -> String {
    "out".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub case_study: String,
    /// Overrides the case study's full space.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameters: Option<Vec<ParameterDef>>,
    pub horizon: usize,
    #[serde(default)]
    pub monte_carlo: MonteCarloLimits,
    #[serde(default)]
    pub sampling: Sampling,
    pub metrics: Vec<MetricSpec>,
    #[serde(default)]
    pub utilities: Vec<Utility>,
    #[serde(default)]
    pub objectives: Vec<ObjectiveSpec>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loan: Option<LoanScale>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policing: Option<PolicingScale>,
    #[serde(default)]
    pub trace_output: TraceRetention,
}

/// Parses and validates an experiment file.
pub fn parse_experiment_config(text: &str) -> Result<ExperimentConfig, ExperimentError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        ExperimentError::new(field, e.into_inner().to_string())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

impl ExperimentConfig {
    /// A config over the case's full space with default settings.
    pub fn new(case_study: &str, horizon: usize, metrics: Vec<MetricSpec>) -> Self {
        Self {
            case_study: case_study.to_string(),
            parameters: None,
            horizon,
            monte_carlo: MonteCarloLimits::default(),
            sampling: Sampling::default(),
            metrics,
            utilities: Vec::new(),
            objectives: Vec::new(),
            seed: 0,
            output_dir: default_output_dir(),
            loan: None,
            policing: None,
            trace_output: TraceRetention::default(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let declared = cases::parameter_names(&self.case_study).ok_or_else(|| {
            ExperimentError::new(
                "case_study",
                format!(
                    "unknown case study `{}` (expected one of: {})",
                    self.case_study,
                    cases::CASE_IDS.join(", ")
                ),
            )
        })?;
        let space = self.space()?;
        if let Some(params) = &self.parameters {
            let given: BTreeSet<&str> = params.iter().map(|p| p.name.as_str()).collect();
            let want: BTreeSet<&str> = declared.iter().copied().collect();
            if let Some(extra) = given.difference(&want).next() {
                return Err(ExperimentError::new(
                    "parameters",
                    format!("unknown parameter `{extra}` for case `{}`", self.case_study),
                ));
            }
            if let Some(missing) = want.difference(&given).next() {
                return Err(ExperimentError::new(
                    "parameters",
                    format!("missing parameter `{missing}`"),
                ));
            }
            for (i, p) in params.iter().enumerate() {
                for (j, v) in p.values.iter().enumerate() {
                    cases::validate_value(&self.case_study, &p.name, v).map_err(|m| {
                        ExperimentError::new(format!("parameters[{i}].values[{j}]"), m)
                    })?;
                }
            }
        }
        if self.horizon == 0 {
            return Err(ExperimentError::new("horizon", "out of range: must be at least 1"));
        }
        self.monte_carlo
            .validate()
            .map_err(|e| ExperimentError::new("monte_carlo", e.to_string()))?;
        match (self.sampling.mode, self.sampling.strength) {
            (SamplingMode::Full, None) => {}
            (SamplingMode::Full, Some(_)) => {
                return Err(ExperimentError::new(
                    "sampling.strength",
                    "only allowed with mode `covering`",
                ))
            }
            (SamplingMode::Covering, None) => {
                return Err(ExperimentError::new("sampling.strength", "required for mode `covering`"))
            }
            (SamplingMode::Covering, Some(g)) => {
                if g < 2 || g > space.len() {
                    return Err(ExperimentError::new(
                        "sampling.strength",
                        format!("strength out of range: {g} not in 2..={}", space.len()),
                    ));
                }
            }
        }
        if self.metrics.is_empty() {
            return Err(ExperimentError::new("metrics", "at least one metric is required"));
        }
        let ids = self.metric_ids();
        let unique: BTreeSet<String> = ids.iter().map(|m| m.to_string()).collect();
        if unique.len() != ids.len() {
            return Err(ExperimentError::new("metrics", "duplicate metric"));
        }
        for (i, o) in self.objectives.iter().enumerate() {
            if !unique.contains(&o.metric) {
                return Err(ExperimentError::new(
                    format!("objectives[{i}].metric"),
                    format!("`{}` is not among the configured metrics or utilities", o.metric),
                ));
            }
        }
        let expects_two_groups = self.case_study == cases::loan::CASE_ID;
        for (i, m) in self.metrics.iter().enumerate() {
            let two_group = m.criterion != Criterion::Rpd;
            if two_group != expects_two_groups {
                return Err(ExperimentError::new(
                    format!("metrics[{i}].criterion"),
                    format!("criterion `{}` does not apply to case `{}`", m.criterion.as_str(), self.case_study),
                ));
            }
        }
        match self.case_study.as_str() {
            cases::loan::CASE_ID => {
                if self.policing.is_some() {
                    return Err(ExperimentError::new("policing", "options given for another case study"));
                }
                let s = self.loan.unwrap_or_default();
                if s.population_per_group == 0 {
                    return Err(ExperimentError::new("loan.population_per_group", "out of range: must be at least 1"));
                }
                if s.batch_size == 0 {
                    return Err(ExperimentError::new("loan.batch_size", "out of range: must be at least 1"));
                }
            }
            _ => {
                if self.loan.is_some() {
                    return Err(ExperimentError::new("loan", "options given for another case study"));
                }
                self.policing
                    .unwrap_or_default()
                    .validate()
                    .map_err(|e| ExperimentError::new("policing", e.to_string()))?;
            }
        }
        Ok(())
    }

    /// The configured space, or the case's full space.
    pub fn space(&self) -> Result<ConfigSpace, ExperimentError> {
        match &self.parameters {
            Some(p) => ConfigSpace::new(p.clone()).map_err(|e| ExperimentError::new("parameters", e.to_string())),
            None => cases::default_space(&self.case_study)
                .ok_or_else(|| ExperimentError::new("case_study", format!("unknown case study `{}`", self.case_study))),
        }
    }

    pub fn case(&self) -> Result<CaseStudy, ExperimentError> {
        let space = self.space()?;
        Ok(match self.case_study.as_str() {
            cases::loan::CASE_ID => CaseStudy::Loan(LoanCase::new(space, self.loan.unwrap_or_default())),
            cases::policing::CASE_ID => {
                CaseStudy::Policing(PolicingCase::new(space, self.policing.unwrap_or_default()))
            }
            other => return Err(ExperimentError::new("case_study", format!("unknown case study `{other}`"))),
        })
    }

    /// Fairness metrics first (the first one drives stopping), then utilities.
    pub fn metric_ids(&self) -> Vec<MetricId> {
        self.metrics
            .iter()
            .map(|m| MetricId::LongTerm(m.metric()))
            .chain(self.utilities.iter().map(|u| MetricId::Utility(*u)))
            .collect()
    }

    pub fn trace_metrics(&self) -> Vec<Box<dyn TraceMetric>> {
        self.metric_ids()
            .into_iter()
            .map(|m| -> Box<dyn TraceMetric> {
                match m {
                    MetricId::LongTerm(l) => Box::new(l),
                    MetricId::Utility(u) => Box::new(u),
                }
            })
            .collect()
    }

    /// SHA-256 of the canonical JSON form. Keys are sorted and defaults
    /// filled in, so key order in the source file does not matter. The
    /// output directory is left out: it says where results go, not what
    /// they are.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = value.as_object_mut() {
            obj.remove("output_dir");
        }
        let canonical = serde_json::to_string(&value).expect("value serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "case_study": "loan",
        "horizon": 10,
        "metrics": [{"criterion": "dp", "mode": "max_inc"}]
    }"#;

    #[test]
    fn minimal_defaults() {
        let c = parse_experiment_config(MINIMAL).unwrap();
        assert_eq!(c.monte_carlo.min_runs, 5);
        assert_eq!(c.monte_carlo.max_runs, 50);
        assert_eq!(c.monte_carlo.z, 1.96);
        assert_eq!(c.monte_carlo.rel_tol, 0.05);
        assert_eq!(c.sampling.mode, SamplingMode::Full);
        assert_eq!(c.space().unwrap().size(), 768);
        assert_eq!(c.trace_output, TraceRetention::FirstRun);
    }

    #[test]
    fn strength_one_rejected() {
        let text = MINIMAL.replace(
            r#""horizon": 10,"#,
            r#""horizon": 10, "sampling": {"mode": "covering", "strength": 1},"#,
        );
        let e = parse_experiment_config(&text).unwrap_err();
        assert_eq!(e.field, "sampling.strength");
        assert!(e.to_string().contains("strength out of range"), "{e}");
    }

    #[test]
    fn unknown_keys_name_their_path() {
        let text = MINIMAL.replace(r#""horizon": 10,"#, r#""horizon": 10, "monte_carlo": {"max_run": 3},"#);
        let e = parse_experiment_config(&text).unwrap_err();
        assert_eq!(e.field, "monte_carlo.max_run");
        assert!(e.message.contains("max_run"), "{e}");
        let text = MINIMAL.replace(r#""criterion": "dp""#, r#""criterion": "dpp""#);
        let e = parse_experiment_config(&text).unwrap_err();
        assert_eq!(e.field, "metrics[0].criterion");
    }

    #[test]
    fn missing_and_unknown() {
        let e = parse_experiment_config(r#"{"case_study": "loan", "metrics": []}"#).unwrap_err();
        assert!(e.message.contains("horizon"), "{e}");
        let e = parse_experiment_config(&MINIMAL.replace("\"loan\"", "\"lending\"")).unwrap_err();
        assert_eq!(e.field, "case_study");
        let text = MINIMAL.replace(r#""horizon": 10"#, r#""horizon": 0"#);
        assert_eq!(parse_experiment_config(&text).unwrap_err().field, "horizon");
    }

    #[test]
    fn table_values_verbatim() {
        let text = r#"{
            "case_study": "loan",
            "horizon": 5,
            "metrics": [{"criterion": "dp", "mode": "max_inc"}],
            "parameters": [
                {"name": "agent", "kind": "system", "values": ["eq-op", "max-util"]},
                {"name": "bank_utility", "kind": "system", "values": [-10, -9, -8, -7, -6, -5, -4, -3]},
                {"name": "score_update_repay", "kind": "environmental", "values": [8, 12, 16, 20]},
                {"name": "score_update_default", "kind": "environmental", "values": [-40, -32, -24, -16]},
                {"name": "shift_mode", "kind": "environmental", "values": ["expected", "normal", "aggressive"]}
            ]
        }"#;
        let c = parse_experiment_config(text).unwrap();
        assert_eq!(c.space().unwrap().size(), 768);
        let bad = text.replace("[-10, -9,", "[10, -9,");
        let e = parse_experiment_config(&bad).unwrap_err();
        assert_eq!(e.field, "parameters[1].values[0]");
        let renamed = text.replace("\"shift_mode\"", "\"shift\"");
        assert!(parse_experiment_config(&renamed).is_err());
    }

    #[test]
    fn objectives_must_reference_metrics() {
        let text = MINIMAL.replace(
            r#""horizon": 10,"#,
            r#""horizon": 10, "utilities": ["total_utility"],
               "objectives": [{"metric": "max_inc_eo", "direction": "minimize"}],"#,
        );
        let e = parse_experiment_config(&text).unwrap_err();
        assert_eq!(e.field, "objectives[0].metric");
    }

    #[test]
    fn round_trip_and_hash() {
        let mut c = parse_experiment_config(MINIMAL).unwrap();
        c.utilities = vec![Utility::TotalUtility];
        c.sampling = Sampling {
            mode: SamplingMode::Covering,
            strength: Some(2),
        };
        let again = parse_experiment_config(&c.to_json()).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.hash(), c.hash());
        // key order does not matter
        let reordered = r#"{
            "metrics": [{"mode": "max_inc", "criterion": "dp"}],
            "horizon": 10,
            "case_study": "loan"
        }"#;
        let a = parse_experiment_config(MINIMAL).unwrap();
        let b = parse_experiment_config(reordered).unwrap();
        assert_eq!(a.hash(), b.hash());
        let mut d = a.clone();
        d.output_dir = "elsewhere".into();
        assert_eq!(a.hash(), d.hash());
        d.seed = 1;
        assert_ne!(a.hash(), d.hash());
    }

    #[test]
    fn criterion_must_fit_case() {
        let text = MINIMAL.replace(r#""criterion": "dp""#, r#""criterion": "rpd""#);
        assert_eq!(parse_experiment_config(&text).unwrap_err().field, "metrics[0].criterion");
        let p = r#"{"case_study": "policing", "horizon": 3, "metrics": [{"criterion": "rpd", "mode": "avg_inc"}],
                    "policing": {"grid_size": 7}}"#;
        assert_eq!(parse_experiment_config(p).unwrap_err().field, "policing");
    }
}
