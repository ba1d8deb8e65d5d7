//! Simulation studies: data-generating processes, coverage studies and
//! consistency diagnostics.

pub mod dgp;
pub mod study;

pub use dgp::{gen_dataset, Dgp};
pub use study::{
    bootstrap_m_region, consistency_diagnostic, coverage_vs_eta_curve, crossing_eta, run_coverage_study, run_coverage_study_with,
    study_csv_rows, CurveRow, ConsistencyRow, RepRecord, StudyResult,
};
