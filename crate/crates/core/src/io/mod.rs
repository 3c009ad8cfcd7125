//! Experiment files, campaign orchestration and result files.

pub mod experiment;
pub mod output;
pub mod pipeline;

pub use experiment::{parse_experiment_config, ExperimentConfig, ExperimentError, MetricSpec, Sampling, SamplingMode};
pub use output::{RunManifest, StageStatus};
pub use pipeline::{run_pipeline, run_stages, PipelineError, PipelineOptions, Stage};
