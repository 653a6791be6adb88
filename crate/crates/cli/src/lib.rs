//! Config-driven pipeline runner and benchmark export for `nlpv`.

pub mod bench;
pub mod config;
pub mod pipeline;

pub use bench::{export_benchmark, load_bundle, verify_bundle, Bundle};
pub use config::{ConfigError, PipelineConfig};
pub use pipeline::{run_config, run_pipeline, RunOutput, StageError};
