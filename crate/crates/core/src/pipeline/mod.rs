//! End-to-end orchestration: real data, frozen VAE, GAN cycles with
//! query-filtered augmentation, classification sessions and reports.

mod config;
mod experiment;
mod report;

pub use config::ExperimentConfig;
pub use experiment::{
    blob_hash, fid_bookkeeping, params_hash, prepare_real_data, run_experiment, CycleReport,
    Experiment, InputHash, RealData,
};
pub use report::{
    classify_run_dir, montage, read_report, write_report, write_sessions, CycleSummary, Report,
    SessionSummary, MONTAGE_COLS, MONTAGE_PAD,
};
