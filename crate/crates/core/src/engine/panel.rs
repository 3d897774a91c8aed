use ndarray::{Array2, Axis};

use super::config::{DfMode, ModelOptions};
use crate::error::{Error, Result};
use crate::kernel::{build_covariate_basis, residualize, standardize_columns, CovariateBasis, StoredMatrix};
use crate::phenotype_io::{align_samples, build_covariates, build_panel, ExclusionLog, PanelState, Table};

/// Phenotype-side state built once per scan and shared read-only by workers.
#[derive(Debug, Clone)]
pub struct PreparedPanel {
    /// Standardized residual phenotypes over kept samples, active columns only (N × P_active).
    pub y: StoredMatrix,
    pub phenotype_names: Vec<String>,
    /// Indices into `phenotype_names` of the columns kept in `y`.
    pub active: Vec<usize>,
    /// Zero-variance columns, skipped from output.
    pub skipped: Vec<usize>,
    pub phenotype_missing: Vec<usize>,
    pub kept_sample_ids: Vec<String>,
    /// Genotype columns to select, or `None` when every genotype sample is kept in order.
    pub genotype_columns: Option<Vec<usize>>,
    pub basis: CovariateBasis,
    pub df: f64,
    pub exclusion_log: ExclusionLog,
}

impl PreparedPanel {
    pub fn n_samples(&self) -> usize {
        self.kept_sample_ids.len()
    }

    pub fn active_names(&self) -> impl Iterator<Item = &str> {
        self.active.iter().map(|&j| self.phenotype_names[j].as_str())
    }
}

/// Aligns samples, then residualizes and standardizes the phenotype panel once.
pub fn prepare_panel(
    genotype_ids: &[String],
    phenotypes: &Table,
    covariates: Option<&Table>,
    keep: Option<&[String]>,
    remove: Option<&[String]>,
    options: &ModelOptions,
) -> Result<PreparedPanel> {
    let alignment = align_samples(genotype_ids, phenotypes, covariates, keep, remove)?;
    let mut panel = build_panel(phenotypes, &alignment, options.missing_policy)?;
    let n = alignment.n_kept();

    let (c, c_names) = match covariates {
        Some(table) => (build_covariates(table, &alignment)?, table.column_names.clone()),
        None => (Array2::zeros((n, 0)), Vec::new()),
    };
    let basis = build_covariate_basis(c.view(), &c_names, options.include_intercept, options.rank_tolerance)?;

    let raw_means: Vec<f64> = panel.y.mean_axis(Axis(0)).expect("kept samples").to_vec();
    panel.y = residualize(panel.y.view(), &basis)?;
    panel.state = PanelState::Residualized;
    let standardized = standardize_columns(panel.y.view(), Some(&raw_means));
    panel.state = PanelState::Standardized;

    let (active, skipped): (Vec<usize>, Vec<usize>) =
        (0..panel.n_phenotypes()).partition(|&j| !standardized.zero_variance[j]);
    for &j in &skipped {
        log::warn!("phenotype '{}' has zero variance after residualization; skipped", panel.names[j]);
    }
    let y = standardized.y.select(Axis(1), &active);

    // Centering always removes one degree of freedom, even without an intercept column.
    let absorbed = basis.rank() + usize::from(!options.include_intercept);
    let df = match options.df_mode {
        DfMode::PaperNMinus2 => n as f64 - 2.0,
        DfMode::Adjusted => n as f64 - absorbed as f64 - 1.0,
    };
    if df < 1.0 {
        return Err(Error::Config(format!("{n} samples leave {df} degrees of freedom")));
    }

    let genotype_columns =
        (!alignment.keeps_all_genotypes(genotype_ids.len())).then(|| alignment.genotype_row_index.clone());

    Ok(PreparedPanel {
        y: StoredMatrix::store(y, options.precision),
        phenotype_names: panel.names,
        active,
        skipped,
        phenotype_missing: panel.missing_count,
        kept_sample_ids: alignment.kept_sample_ids,
        genotype_columns,
        basis,
        df,
        exclusion_log: alignment.exclusion_log,
    })
}

#[cfg(test)]
mod tests {
    use ndarray::array;

    use super::*;

    fn table(ids: &[&str], names: &[&str], values: Array2<f64>) -> Table {
        let missing_count = values.columns().into_iter().map(|c| c.iter().filter(|v| v.is_nan()).count()).collect();
        Table {
            ids: ids.iter().map(|s| s.to_string()).collect(),
            column_names: names.iter().map(|s| s.to_string()).collect(),
            values,
            missing_count,
        }
    }

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn skips_constant_phenotype_and_sets_df() {
        let y = table(&["a", "b", "c", "d"], &["y1", "flat"], array![[1.0, 7.0], [3.0, 7.0], [2.0, 7.0], [4.0, 7.0]]);
        let p = prepare_panel(&ids(&["a", "b", "c", "d"]), &y, None, None, None, &ModelOptions::default()).unwrap();
        assert_eq!(p.active, [0]);
        assert_eq!(p.skipped, [1]);
        assert_eq!(p.df, 2.0);
        assert!(p.genotype_columns.is_none());
        assert_eq!(p.y.dim(), (4, 1));
    }

    #[test]
    fn adjusted_df_counts_covariates() {
        let y = table(&["a", "b", "c", "d", "e"], &["y"], array![[1.0], [3.0], [2.0], [4.0], [0.5]]);
        let c = table(&["a", "b", "c", "d", "e"], &["x"], array![[1.0], [2.0], [3.0], [4.0], [6.0]]);
        let options = ModelOptions { df_mode: DfMode::Adjusted, ..ModelOptions::default() };
        let p = prepare_panel(&ids(&["a", "b", "c", "d", "e"]), &y, Some(&c), None, None, &options).unwrap();
        assert_eq!(p.basis.rank(), 2);
        assert_eq!(p.df, 2.0);
    }

    #[test]
    fn genotype_subset_is_recorded() {
        let y = table(&["c", "a", "b"], &["y"], array![[1.0], [3.0], [2.0]]);
        let p = prepare_panel(&ids(&["a", "x", "b", "c"]), &y, None, None, None, &ModelOptions::default()).unwrap();
        assert_eq!(p.genotype_columns.as_deref(), Some(&[0, 2, 3][..]));
        assert_eq!(p.kept_sample_ids, ["a", "b", "c"]);
    }
}
