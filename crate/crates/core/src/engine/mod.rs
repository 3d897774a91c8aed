//! Scan orchestration: batch planning, the decode → score → emit pipeline,
//! and the output sinks.

pub mod config;
pub mod emit;
pub mod panel;
pub mod plan;
pub mod scan;

pub use config::{
    default_worker_count, DfMode, ModelOptions, OutputMode, ScanConfig, DEFAULT_BATCH_SIZE, DEFAULT_FULL_BUDGET_BYTES,
    DEFAULT_P_THRESHOLD, DEFAULT_TOP_K,
};
pub use emit::{
    read_assoc_tsv, read_full_matrix, AssocRecord, CollectSink, FullMatrix, FullSink, PValueNeed, ResultSink,
    ScanContext, ScoredBatch, ThresholdSink, TopKSink, FULL_MAGIC, TSV_HEADER,
};
pub use panel::{prepare_panel, PreparedPanel};
pub use plan::plan_batches;
pub use scan::{output_path, run_scan, scan_source, OutputFiles, ScanOptions, ScanOutcome, ScanSummary};
