//! Experiment drivers, statistics helpers and report serialization for the
//! `coalkit` binary.

pub mod experiments;
pub mod report;
pub mod stats;

pub use experiments::{
    exp_blocksize, exp_hydro, exp_phase, exp_threshold, run_experiment, ExperimentConfig,
};
pub use report::{ExperimentReport, Meta, Record, Verdict};
pub use stats::{gumbel_cdf, ks_statistic, mc_error, median, tv_histogram};
