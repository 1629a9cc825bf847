//! Experiment driver: configuration, dataset files, episodes and reports.

pub mod config;
pub mod dataset;
pub mod episode;
pub mod validate;

pub use config::{parse_pairs, ExperimentConfig};
pub use dataset::{format_dataset, load_dataset, parse_dataset, save_dataset};
pub use episode::{
    experiment_data, run_episode, run_experiment, EpisodeMetrics, Experiment, ExperimentReport,
    Summary, CSV_HEADER,
};
