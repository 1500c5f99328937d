//! Experiment runner for the pipelined IDD receiver.

pub mod config;
pub mod experiments;
pub mod link;
pub mod output;

use std::path::Path;
use std::time::Instant;

pub use config::{Experiment, ExperimentConfig, Overrides};
pub use experiments::Report;

/// Runs the configured experiment and writes `results.csv`, `meta.json`
/// and, when enabled, `diag.csv` into `out`.
pub fn run_to_dir(cfg: &ExperimentConfig, out: &Path) -> anyhow::Result<Report> {
    let start = Instant::now();
    let report = experiments::run(cfg)?;
    std::fs::create_dir_all(out)?;
    report.results.write_csv(&out.join("results.csv"))?;
    if let Some(d) = &report.diag {
        d.write_csv(&out.join("diag.csv"))?;
    }
    let meta = output::Meta {
        version: output::VERSION,
        experiment: cfg.experiment.name(),
        snr_convention: output::SNR_CONVENTION,
        config: cfg,
        summary: report.summary.clone(),
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    output::write_meta(&out.join("meta.json"), &meta)?;
    Ok(report)
}
