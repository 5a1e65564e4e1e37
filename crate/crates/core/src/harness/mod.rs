//! Experiment orchestration: sample-complexity search, module similarity,
//! grid sweeps from JSON configs, loss curves and result emission.

mod config;
mod curves;
mod records;
mod runner;
mod search;
mod similarity;

pub use config::{
    ArchKind, ArchitectureConfig, DimIterations, ExperimentConfig, ImageSource, InitMethod, InitSection,
    SearchSection, TaskConfig, TrainSection,
};
pub use curves::{simulate_curve, theory_curve, CurveConfig, CurveModel, ModularForm, SimulationSettings};
pub use records::{
    append_jsonl, emit_results, fmt_f64, read_jsonl, read_results, write_csv, CsvRow, CurveRow,
    ExperimentRecord, OutputFormat,
};
pub use runner::{
    grid, ground_truth_projections, load_image_sources, projection_directions, run_experiment, run_single,
    seed_projections, GridPoint, RunOutcome,
};
pub use search::{binary_search_sample_complexity, samples_for, Probe, SearchConfig, SearchResult};
pub use similarity::similarity_score;
