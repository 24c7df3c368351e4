//! End-to-end experiment orchestration: the seven pipeline steps over a
//! content-addressed stage cache, transfer scenarios, sweeps and reports.

mod config;
mod oracle;
mod report;
mod run;

pub use config::{Paths, PipelineConfig, Resolved, Scale, Scenario};
pub use oracle::{oracle_cells, simulate_oracle, OracleCell, OracleConfig, OracleData};
pub use report::{
    build_report, emit_report, sweep_summary_csv, CellCurve, ExperimentReport, Format, Histogram, Provenance,
    StageRecord,
};
pub use run::{
    load_prepared, prepare, run_experiment_sweep, run_pipeline, run_scenario, run_stages, select_real, Prepared, StageOutput,
    Step, Sweep,
};
