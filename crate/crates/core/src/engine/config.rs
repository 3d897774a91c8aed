use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::genotype_io::GenotypeSpec;
use crate::kernel::{Precision, DEFAULT_RANK_TOLERANCE};
use crate::phenotype_io::{MissingPolicy, DEFAULT_ID_COLUMN};

pub const DEFAULT_BATCH_SIZE: usize = 4096;
pub const DEFAULT_P_THRESHOLD: f64 = 1e-4;
pub const DEFAULT_TOP_K: usize = 100;
pub const DEFAULT_FULL_BUDGET_BYTES: u64 = 16 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DfMode {
    /// df = N − 2 regardless of covariates.
    #[default]
    PaperNMinus2,
    /// df = N − q − 1, q = rank of the covariate basis including the intercept.
    Adjusted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputMode {
    Threshold,
    TopK,
    Full,
}

/// Settings that shape the statistics, independent of where inputs and
/// outputs live.
#[derive(Debug, Clone)]
pub struct ModelOptions {
    pub precision: Precision,
    pub df_mode: DfMode,
    pub residualize_genotypes: bool,
    pub include_intercept: bool,
    pub missing_policy: MissingPolicy,
    pub rank_tolerance: f64,
}

impl Default for ModelOptions {
    fn default() -> Self {
        ModelOptions {
            precision: Precision::default(),
            df_mode: DfMode::default(),
            residualize_genotypes: false,
            include_intercept: true,
            missing_policy: MissingPolicy::default(),
            rank_tolerance: DEFAULT_RANK_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScanConfig {
    pub genotypes: GenotypeSpec,
    pub phenotype_path: PathBuf,
    pub covariate_path: Option<PathBuf>,
    pub keep_path: Option<PathBuf>,
    pub remove_path: Option<PathBuf>,
    pub id_column: String,
    pub delimiter: char,
    pub model: ModelOptions,
    pub batch_size: usize,
    pub output_mode: OutputMode,
    pub p_threshold: f64,
    pub top_k: usize,
    pub worker_count: usize,
    /// Output prefix; files are `<out>.tsv`, `<out>.bin`, `<out>.summary.json`, ...
    pub out: PathBuf,
    pub full_budget_bytes: u64,
    pub allow_over_budget: bool,
    pub write_qc: bool,
}

impl ScanConfig {
    pub fn new(genotypes: GenotypeSpec, phenotype_path: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        ScanConfig {
            genotypes,
            phenotype_path: phenotype_path.into(),
            covariate_path: None,
            keep_path: None,
            remove_path: None,
            id_column: DEFAULT_ID_COLUMN.to_string(),
            delimiter: '\t',
            model: ModelOptions::default(),
            batch_size: DEFAULT_BATCH_SIZE,
            output_mode: OutputMode::Threshold,
            p_threshold: DEFAULT_P_THRESHOLD,
            top_k: DEFAULT_TOP_K,
            worker_count: default_worker_count(),
            out: out.into(),
            full_budget_bytes: DEFAULT_FULL_BUDGET_BYTES,
            allow_over_budget: false,
            write_qc: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(self.p_threshold > 0.0 && self.p_threshold <= 1.0) {
            return Err(Error::Config(format!("p threshold {} is outside (0, 1]", self.p_threshold)));
        }
        if self.top_k == 0 {
            return Err(Error::Config("top-k must be at least 1".into()));
        }
        if self.worker_count == 0 {
            return Err(Error::Config("worker count must be at least 1".into()));
        }
        if !(self.model.rank_tolerance >= 0.0) {
            return Err(Error::Config("rank tolerance must be non-negative".into()));
        }
        Ok(())
    }
}

pub fn default_worker_count() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> ScanConfig {
        ScanConfig::new(GenotypeSpec::plink_prefix("x"), "y.tsv", "out")
    }

    #[test]
    fn defaults_are_valid() {
        let c = config();
        c.validate().unwrap();
        assert_eq!(c.batch_size, 4096);
        assert_eq!(c.p_threshold, 1e-4);
        assert_eq!(c.top_k, 100);
        assert_eq!(c.output_mode, OutputMode::Threshold);
        assert_eq!(c.model.precision, Precision::F32StoreF64Acc);
        assert_eq!(c.model.df_mode, DfMode::PaperNMinus2);
    }

    #[test]
    fn rejects_bad_values() {
        for edit in [
            (|c: &mut ScanConfig| c.batch_size = 0) as fn(&mut ScanConfig),
            |c| c.p_threshold = 0.0,
            |c| c.p_threshold = 1.5,
            |c| c.p_threshold = f64::NAN,
            |c| c.top_k = 0,
            |c| c.worker_count = 0,
        ] {
            let mut c = config();
            edit(&mut c);
            assert!(matches!(c.validate(), Err(Error::Config(_))));
        }
        let mut c = config();
        c.p_threshold = 1.0;
        c.validate().unwrap();
    }
}
