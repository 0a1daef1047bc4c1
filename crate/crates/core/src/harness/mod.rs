//! End-to-end experiment orchestration: surrogate synthesis, mixing,
//! training, denoising, scoring and report tables.

mod pipeline;
mod plan;
pub mod report;
mod svg;
mod synth;

pub use pipeline::{
    denoise_file, evaluate_corpus, load_dataset, run_plan, train_config, waveform_dir, Denoiser, RunSummary,
};
pub use plan::{ExperimentPlan, Method, SurrogatePlan, TrainSettings, WaveformPlan, SNR_LIMITS_DB};
pub use report::{write_tables, ReportTables};
pub use svg::{line_chart, Series};
pub use synth::{activation_protocol, surrogate_ecg, surrogate_semg, synthesize_dataset, MANIFEST_NAME};
