//! Independent reference machinery: per-trait least squares, a synthetic
//! cohort simulator, and concordance metrics.
//!
//! The least-squares path uses its own normal-equation solver and shares no
//! linear algebra with the kernel; only the t → p routine is common.

pub mod concordance;
pub mod ols;
pub mod reference;
pub mod simulate;

pub use concordance::{concordance_report, pearson, ConcordanceReport, KeyedResult, PairDiscrepancy};
pub use ols::{ols_panel, ols_single, OlsResult};
pub use reference::{read_oracle_tsv, reference_scan, write_oracle_tsv, OracleLoop, OracleRecord};
pub use simulate::{read_truth, simulate_cohort, SimSpec, SimulatedDataset, TruthEntry};
