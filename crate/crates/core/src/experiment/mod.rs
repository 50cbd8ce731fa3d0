//! Experiment orchestration behind the command-line tool.

mod benchmark;
mod config;
mod naturality;

pub use benchmark::{
    load_data, load_one, run_benchmark, write_runs_csv, write_table_csv, BenchmarkReport,
    BenchmarkSummary, DataProvenance, DesignFlags, LoadedData, RunRecord, RunStatus, TableRow,
    GROUP_ONLY_NORMALIZATION, RUNS_FILE, SUMMARY_FILE, TABLE_FILE,
};
pub use config::{parse_kinds, parse_seeds, DataSource, ExperimentConfig, CONFIG_KEYS};
pub use naturality::{
    run_naturality_suite, FamilyResidual, NaturalityConfig, NaturalityReport, MAX_CHAIN,
    NATURALITY_TOLERANCE,
};
