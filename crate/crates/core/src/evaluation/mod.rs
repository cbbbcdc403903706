//! Metrics, the cross-validated few-shot experiment, and report rendering.

mod experiment;
mod metrics;
mod report;

pub use experiment::{
    run_experiment, ExperimentConfig, ExperimentOutput, Method, Protocol, RunHistory, SweepReport,
    TrialRecord, TrialReport, LABEL_TARGET_MIN_PER_CLASS,
};
pub use metrics::{aggregate, unweighted_accuracy};
pub use report::{format_cell, parse_report_csv, render_report, ReportFormat, REPORT_CSV_HEADER};
