//! Batched linear association scans of genotype panels against many
//! quantitative phenotypes at once.
//!
//! The phenotype panel is residualized on the covariates and standardized
//! once; genotype batches are then standardized and correlated against it
//! with a single matrix product per batch, and correlations are turned into
//! t-statistics and two-sided p-values.

pub mod engine;
pub mod error;
pub mod genotype_io;
pub mod kernel;
pub mod oracle;
pub mod phenotype_io;

pub use engine::{
    plan_batches, run_scan, scan_source, AssocRecord, DfMode, ModelOptions, OutputMode, ScanConfig, ScanOptions,
    ScanSummary,
};
pub use error::{Error, Result};
pub use genotype_io::{
    open_genotype_source, CountedAllele, GenotypeFormat, GenotypeSource, GenotypeSpec, MarkerRecord, RawBatch, MISSING,
};
pub use kernel::{CovariateBasis, MarkerQc, Precision, SkipReason, StandardizedBatch, StatBlock};
pub use phenotype_io::{load_table, MissingPolicy, PhenotypePanel, Table};
