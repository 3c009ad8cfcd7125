//! Campaign orchestration: configurations → simulation → sensitivity → Pareto.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use thiserror::Error;

use super::experiment::{ExperimentConfig, ExperimentError, SamplingMode};
use super::output::{self, OutputError, RunManifest, StageStatus};
use crate::config::{enumerate_configs, sample_covering_array, ConfigError, Configuration};
use crate::metrics::TraceMetric;
use crate::sensitivity::{analyze, SensitivityError, SensitivityReport};
use crate::sim::{run_campaign, SimError, Trace};
use crate::tradeoff::{normalize_for_radar, pareto_front, Point, TradeoffError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Configs,
    Simulate,
    Analyze,
    Pareto,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Configs, Stage::Simulate, Stage::Analyze, Stage::Pareto];

    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Configs => "configs",
            Stage::Simulate => "simulate",
            Stage::Analyze => "analyze",
            Stage::Pareto => "pareto",
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{metric}: {source}")]
    Sensitivity {
        metric: String,
        #[source]
        source: SensitivityError,
    },
    #[error(transparent)]
    Tradeoff(#[from] TradeoffError),
    #[error(transparent)]
    Output(#[from] OutputError),
    #[error("{count} configuration(s) failed, first: {first}")]
    FailedConfigs { count: usize, first: String },
    #[error("{0}")]
    Missing(String),
}

#[derive(Debug, Clone, Default)]
pub struct PipelineOptions {
    /// Worker threads for the campaign (`0` = all cores).
    pub jobs: usize,
    /// Timestamp written to the manifest instead of the wall clock, for
    /// byte-reproducible output.
    pub fixed_time: Option<DateTime<Utc>>,
}

impl PipelineOptions {
    fn now(&self) -> String {
        self.fixed_time
            .unwrap_or_else(Utc::now)
            .to_rfc3339_opts(SecondsFormat::Secs, true)
    }
}

/// Runs every stage. Outputs go to `config.output_dir`.
pub fn run_pipeline(config: &ExperimentConfig, opts: &PipelineOptions) -> Result<RunManifest, PipelineError> {
    run_stages(config, &Stage::ALL, opts)
}

/// Runs `stages` in order and writes the manifest, also on failure.
///
/// An existing manifest for the same config hash is extended, so stages can
/// be run one at a time; a manifest for a different config is replaced.
pub fn run_stages(
    config: &ExperimentConfig,
    stages: &[Stage],
    opts: &PipelineOptions,
) -> Result<RunManifest, PipelineError> {
    config.validate()?;
    let out = PathBuf::from(&config.output_dir);
    fs::create_dir_all(&out).map_err(|e| OutputError::Io {
        path: out.clone(),
        source: e,
    })?;
    let hash = config.hash();
    let manifest_path = out.join(output::MANIFEST_FILE);
    let mut manifest = match output::read_json::<RunManifest>(&manifest_path) {
        Ok(m) if m.config_hash == hash => m,
        _ => RunManifest::new(&hash, opts.now()),
    };
    manifest.complete = false;
    manifest.failed_stage = None;
    manifest.error = None;

    let mut configs: Option<Vec<Configuration>> = None;
    let mut result = Ok(());
    for &stage in stages {
        let r = match stage {
            Stage::Configs => stage_configs(config, &out, &mut manifest).map(|c| configs = Some(c)),
            Stage::Simulate => {
                let cs = match configs.take() {
                    Some(cs) => Ok(cs),
                    None => load_configs(config, &out),
                };
                cs.and_then(|cs| stage_simulate(config, &cs, &out, &mut manifest, opts.jobs))
            }
            Stage::Analyze => stage_analyze(config, &out, &mut manifest).map(|_| ()),
            Stage::Pareto => stage_pareto(config, &out, &mut manifest),
        };
        if let Err(e) = r {
            manifest.set_stage(stage.as_str(), StageStatus::Failed, None);
            manifest.failed_stage = Some(stage.as_str().to_string());
            manifest.error = Some(e.to_string());
            result = Err(e);
            break;
        }
    }
    manifest.complete = result.is_ok()
        && Stage::ALL.iter().all(|s| {
            manifest
                .stage(s.as_str())
                .is_some_and(|r| r.status != StageStatus::Failed)
        });
    manifest.finished_at = opts.now();
    output::write_json(&manifest_path, &manifest)?;
    result.map(|_| manifest)
}

fn load_configs(config: &ExperimentConfig, out: &Path) -> Result<Vec<Configuration>, PipelineError> {
    let path = out.join(output::CONFIGS_FILE);
    if !path.exists() {
        return Err(PipelineError::Missing(format!(
            "{} not found; run the enumerate or sample stage first",
            path.display()
        )));
    }
    Ok(output::read_configs_csv(&path, &config.space()?)?)
}

/// Enumerates or samples configurations and writes the configs table.
pub fn stage_configs(
    config: &ExperimentConfig,
    out: &Path,
    manifest: &mut RunManifest,
) -> Result<Vec<Configuration>, PipelineError> {
    let space = config.space()?;
    let configs = match (config.sampling.mode, config.sampling.strength) {
        (SamplingMode::Covering, Some(g)) => sample_covering_array(&space, g, config.seed)?,
        _ => enumerate_configs(&space)?,
    };
    let rows = output::write_configs_csv(&out.join(output::CONFIGS_FILE), &space, &configs)?;
    manifest.record_file(out, output::CONFIGS_FILE, Some(rows))?;
    let note = match config.sampling.mode {
        SamplingMode::Full => format!("{rows} of {} configurations (full)", space.size()),
        SamplingMode::Covering => format!(
            "{rows} of {} configurations (covering, strength {})",
            space.size(),
            config.sampling.strength.unwrap_or_default()
        ),
    };
    manifest.set_stage(Stage::Configs.as_str(), StageStatus::Completed, Some(note));
    Ok(configs)
}

/// Monte-Carlo over `configs`; writes the campaign and traces tables.
pub fn stage_simulate(
    config: &ExperimentConfig,
    configs: &[Configuration],
    out: &Path,
    manifest: &mut RunManifest,
    jobs: usize,
) -> Result<(), PipelineError> {
    let case = config.case()?;
    let space = config.space()?;
    let metrics = config.trace_metrics();
    let metric_refs: Vec<&dyn TraceMetric> = metrics.iter().map(|m| m.as_ref()).collect();
    let campaign = run_campaign(
        &case,
        configs,
        config.horizon,
        &metric_refs,
        config.seed,
        &config.monte_carlo,
        config.trace_output,
        jobs,
    )?;
    let ids: Vec<String> = metrics.iter().map(|m| m.id()).collect();
    let rows = output::write_campaign_csv(&out.join(output::CAMPAIGN_FILE), &space, &ids, &campaign.results)?;
    manifest.record_file(out, output::CAMPAIGN_FILE, Some(rows))?;
    let traces: Vec<&Trace> = campaign.results.iter().flat_map(|r| &r.traces).collect();
    let trace_rows = output::write_traces_csv(&out.join(output::TRACES_FILE), &traces)?;
    manifest.record_file(out, output::TRACES_FILE, Some(trace_rows))?;

    manifest.failed_configs = campaign
        .failures
        .iter()
        .filter_map(|f| match f {
            SimError::Config { config_id, .. } => Some(*config_id),
            _ => None,
        })
        .collect();
    if let Some(first) = campaign.failures.first() {
        return Err(PipelineError::FailedConfigs {
            count: campaign.failures.len(),
            first: first.to_string(),
        });
    }
    let total_runs: u64 = campaign.results.iter().map(|r| r.m).sum();
    manifest.set_stage(
        Stage::Simulate.as_str(),
        StageStatus::Completed,
        Some(format!("{rows} configurations, {total_runs} runs")),
    );
    Ok(())
}

fn load_campaign(out: &Path) -> Result<output::CampaignTable, PipelineError> {
    let path = out.join(output::CAMPAIGN_FILE);
    if !path.exists() {
        return Err(PipelineError::Missing(format!(
            "{} not found; run the simulate stage first",
            path.display()
        )));
    }
    Ok(output::read_campaign_csv(&path)?)
}

/// One sensitivity report per fairness metric, from the campaign table.
pub fn stage_analyze(
    config: &ExperimentConfig,
    out: &Path,
    manifest: &mut RunManifest,
) -> Result<Vec<SensitivityReport>, PipelineError> {
    let space = config.space()?;
    let table = load_campaign(out)?;
    let configs = table
        .config_ids
        .iter()
        .map(|&id| space.config_from_id(id))
        .collect::<Result<Vec<_>, _>>()?;
    let mut reports = Vec::new();
    for m in &config.metrics {
        let id = m.id();
        let y = table
            .column(&id)
            .ok_or_else(|| PipelineError::Missing(format!("metric {id} not in campaign table")))?;
        let rep = analyze(&space, &configs, y, &id).map_err(|source| PipelineError::Sensitivity {
            metric: id.clone(),
            source,
        })?;
        reports.push(rep);
    }
    output::write_json(&out.join(output::SENSITIVITY_JSON), &reports)?;
    output::write_text(
        &out.join(output::SENSITIVITY_MD),
        &output::render_sensitivity_markdown(&reports),
    )?;
    manifest.record_file(out, output::SENSITIVITY_JSON, None)?;
    manifest.record_file(out, output::SENSITIVITY_MD, None)?;
    manifest.set_stage(
        Stage::Analyze.as_str(),
        StageStatus::Completed,
        Some(format!("{} report(s) over {} rows", reports.len(), configs.len())),
    );
    Ok(reports)
}

/// Pareto front over the configured objectives; skipped when there are none.
pub fn stage_pareto(config: &ExperimentConfig, out: &Path, manifest: &mut RunManifest) -> Result<(), PipelineError> {
    if config.objectives.is_empty() {
        manifest.set_stage(
            Stage::Pareto.as_str(),
            StageStatus::Skipped,
            Some("no objectives configured".into()),
        );
        return Ok(());
    }
    let space = config.space()?;
    let table = load_campaign(out)?;
    let cols = config
        .objectives
        .iter()
        .map(|o| {
            table
                .column(&o.metric)
                .ok_or_else(|| PipelineError::Missing(format!("objective {} not in campaign table", o.metric)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let points: Vec<Point> = table
        .config_ids
        .iter()
        .enumerate()
        .map(|(r, &id)| Point {
            id,
            objectives: cols.iter().map(|c| c[r]).collect(),
        })
        .collect();
    let front = pareto_front(&points, &config.objectives)?;
    let scaled = normalize_for_radar(&front)?;
    let rows = output::write_pareto_csv(&out.join(output::PARETO_CSV), &space, &front, &scaled)?;
    output::write_pareto_dat(&out.join(output::PARETO_DAT), &front, &scaled)?;
    manifest.record_file(out, output::PARETO_CSV, Some(rows))?;
    manifest.record_file(out, output::PARETO_DAT, Some(rows))?;
    let mut note = format!("{rows} of {} configurations on the front", points.len());
    if !front.excluded.is_empty() {
        note.push_str(&format!(", excluded non-finite: {:?}", front.excluded));
    }
    manifest.set_stage(Stage::Pareto.as_str(), StageStatus::Completed, Some(note));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::experiment::parse_experiment_config;

    fn tiny(dir: &Path, objectives: bool) -> ExperimentConfig {
        let obj = if objectives {
            r#", "objectives": [{"metric": "avg_inc_rpd", "direction": "minimize"},
                                {"metric": "total_utility", "direction": "maximize"}]"#
        } else {
            ""
        };
        let text = format!(
            r#"{{
                "case_study": "policing",
                "horizon": 4,
                "monte_carlo": {{"min_runs": 2, "max_runs": 3}},
                "metrics": [{{"criterion": "rpd", "mode": "avg_inc"}}],
                "utilities": ["total_utility"],
                "parameters": [
                    {{"name": "discovery_rate_hot", "kind": "environmental", "values": [0.6, 0.9]}},
                    {{"name": "discovery_rate_other", "kind": "environmental", "values": [0.0, 0.2]}},
                    {{"name": "effect_range", "kind": "system", "values": [1, 2]}}
                ],
                "policing": {{"grid_size": 6, "hotspot_count": 6}},
                "seed": 3,
                "output_dir": {:?}{obj}
            }}"#,
            dir.display().to_string()
        );
        parse_experiment_config(&text).unwrap()
    }

    #[test]
    fn full_run_and_manifest_counts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny(dir.path(), true);
        let m = run_pipeline(&cfg, &PipelineOptions::default()).unwrap();
        assert!(m.complete);
        for f in &m.files {
            let p = dir.path().join(&f.name);
            assert_eq!(output::file_sha256(&p).unwrap(), f.sha256);
            if f.name.ends_with(".csv") {
                assert_eq!(Some(output::count_csv_rows(&p).unwrap()), f.rows, "{}", f.name);
            }
        }
        let campaign = m.files.iter().find(|f| f.name == output::CAMPAIGN_FILE).unwrap();
        assert_eq!(campaign.rows, Some(8));
        assert!(dir.path().join(output::PARETO_DAT).exists());
    }

    #[test]
    fn pareto_skipped_without_objectives() {
        let dir = tempfile::tempdir().unwrap();
        let m = run_pipeline(&tiny(dir.path(), false), &PipelineOptions::default()).unwrap();
        assert_eq!(m.stage("pareto").unwrap().status, StageStatus::Skipped);
        assert!(m.complete);
        assert!(!dir.path().join(output::PARETO_CSV).exists());
    }

    #[test]
    fn analyze_without_campaign_fails_and_is_flagged() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny(dir.path(), false);
        let err = run_stages(&cfg, &[Stage::Analyze], &PipelineOptions::default()).unwrap_err();
        assert!(matches!(err, PipelineError::Missing(_)));
        let m: RunManifest = output::read_json(&dir.path().join(output::MANIFEST_FILE)).unwrap();
        assert!(!m.complete);
        assert_eq!(m.failed_stage.as_deref(), Some("analyze"));
    }

    #[test]
    fn stages_one_at_a_time_match_full_run() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let t = Some(DateTime::from_timestamp(0, 0).unwrap());
        let opts = PipelineOptions { jobs: 1, fixed_time: t };
        let full = run_pipeline(&tiny(a.path(), true), &opts).unwrap();
        let cfg = tiny(b.path(), true);
        for s in Stage::ALL {
            run_stages(&cfg, &[s], &opts).unwrap();
        }
        let piecewise: RunManifest = output::read_json(&b.path().join(output::MANIFEST_FILE)).unwrap();
        assert!(piecewise.complete);
        assert_eq!(full.files, piecewise.files);
    }
}
