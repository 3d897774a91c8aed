//! Phenotype and covariate tables, keep/remove lists, and alignment of every
//! input to the genotype sample order.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use ndarray::Array2;
use serde::Serialize;

use crate::error::{Error, Result};

/// Cell values read as missing.
pub const MISSING_TOKENS: [&str; 5] = ["", "NA", "NaN", "nan", "-9"];

pub const DEFAULT_ID_COLUMN: &str = "IID";

/// A delimited numeric table keyed by sample ID.
#[derive(Debug, Clone)]
pub struct Table {
    pub ids: Vec<String>,
    pub column_names: Vec<String>,
    /// rows × columns; NaN marks missing or unparseable cells.
    pub values: Array2<f64>,
    /// Missing cells per column, as read.
    pub missing_count: Vec<usize>,
}

impl Table {
    pub fn n_rows(&self) -> usize {
        self.ids.len()
    }

    fn row_lookup(&self) -> HashMap<&str, usize> {
        self.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect()
    }
}

pub fn load_table(path: &Path, id_column: &str, delimiter: char) -> Result<Table> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let split = |line: &str| -> Vec<String> {
        line.trim_end_matches(['\r', '\n']).split(delimiter).map(|c| c.trim().to_string()).collect()
    };

    let header = loop {
        match lines.next() {
            Some((_, line)) => {
                let line = line.map_err(|e| Error::io(path, e))?;
                if !line.trim().is_empty() {
                    break split(&line);
                }
            }
            None => return Err(Error::format(path, "empty table; a header row is required")),
        }
    };
    let id_pos = header
        .iter()
        .position(|h| h == id_column)
        .ok_or_else(|| Error::format(path, format!("header lacks ID column '{id_column}'")))?;
    let column_names: Vec<String> =
        header.iter().enumerate().filter(|(i, _)| *i != id_pos).map(|(_, h)| h.clone()).collect();

    let width = column_names.len();
    let mut ids = Vec::new();
    let mut seen = HashSet::new();
    let mut flat = Vec::new();
    let mut missing_count = vec![0usize; width];
    let mut unparseable = vec![0usize; width];
    for (lineno, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let cells = split(&line);
        if cells.len() != header.len() {
            return Err(Error::format(
                path,
                format!("line {}: {} cells, header has {}", lineno + 1, cells.len(), header.len()),
            ));
        }
        let id = cells[id_pos].clone();
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateSample { id, context: path.display().to_string() });
        }
        ids.push(id);
        for (col, cell) in cells.iter().enumerate().filter(|(i, _)| *i != id_pos).map(|(_, c)| c).enumerate() {
            let value = if MISSING_TOKENS.contains(&cell.as_str()) {
                f64::NAN
            } else {
                cell.parse::<f64>().unwrap_or_else(|_| {
                    unparseable[col] += 1;
                    f64::NAN
                })
            };
            if value.is_nan() {
                missing_count[col] += 1;
            }
            flat.push(value);
        }
    }
    for (name, &n) in column_names.iter().zip(&unparseable) {
        if n > 0 {
            log::warn!("{}: column '{name}' has {n} non-numeric cells, read as missing", path.display());
        }
    }

    let values = Array2::from_shape_vec((ids.len(), width), flat).expect("rows checked against header");
    Ok(Table { ids, column_names, values, missing_count })
}

/// Counts of genotype samples dropped during alignment, by first matching
/// reason in the order the fields are declared.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ExclusionLog {
    pub remove_listed: usize,
    pub not_keep_listed: usize,
    pub not_in_phenotypes: usize,
    pub not_in_covariates: usize,
    /// Phenotype-table samples absent from the genotypes. Not part of
    /// [`ExclusionLog::dropped_genotype_samples`].
    pub not_in_genotypes: usize,
}

impl ExclusionLog {
    pub fn dropped_genotype_samples(&self) -> usize {
        self.remove_listed + self.not_keep_listed + self.not_in_phenotypes + self.not_in_covariates
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleAlignment {
    /// Kept samples in genotype-file order.
    pub kept_sample_ids: Vec<String>,
    pub genotype_row_index: Vec<usize>,
    pub phenotype_row_index: Vec<usize>,
    pub covariate_row_index: Option<Vec<usize>>,
    pub exclusion_log: ExclusionLog,
}

impl SampleAlignment {
    pub fn n_kept(&self) -> usize {
        self.kept_sample_ids.len()
    }

    /// True when every genotype sample is kept in its original position.
    pub fn keeps_all_genotypes(&self, n_genotype_samples: usize) -> bool {
        self.n_kept() == n_genotype_samples && self.genotype_row_index.iter().enumerate().all(|(i, &g)| i == g)
    }
}

/// Minimum kept samples; below this the N−2 degrees of freedom vanish.
pub const MIN_KEPT_SAMPLES: usize = 3;

pub fn align_samples(
    genotype_ids: &[String],
    phenotype: &Table,
    covariates: Option<&Table>,
    keep: Option<&[String]>,
    remove: Option<&[String]>,
) -> Result<SampleAlignment> {
    let pheno_rows = phenotype.row_lookup();
    let covar_rows = covariates.map(Table::row_lookup);
    let keep: Option<HashSet<&str>> = keep.map(|k| k.iter().map(String::as_str).collect());
    let remove: HashSet<&str> = remove.unwrap_or_default().iter().map(String::as_str).collect();

    let mut log = ExclusionLog::default();
    let mut kept_sample_ids = Vec::new();
    let mut genotype_row_index = Vec::new();
    let mut phenotype_row_index = Vec::new();
    let mut covariate_row_index = covariates.map(|_| Vec::new());

    for (g, id) in genotype_ids.iter().enumerate() {
        let id_str = id.as_str();
        if remove.contains(id_str) {
            log.remove_listed += 1;
            continue;
        }
        if keep.as_ref().is_some_and(|k| !k.contains(id_str)) {
            log.not_keep_listed += 1;
            continue;
        }
        let Some(&p) = pheno_rows.get(id_str) else {
            log.not_in_phenotypes += 1;
            continue;
        };
        let c = match &covar_rows {
            Some(rows) => match rows.get(id_str) {
                Some(&c) => Some(c),
                None => {
                    log.not_in_covariates += 1;
                    continue;
                }
            },
            None => None,
        };
        kept_sample_ids.push(id.clone());
        genotype_row_index.push(g);
        phenotype_row_index.push(p);
        if let (Some(idx), Some(c)) = (covariate_row_index.as_mut(), c) {
            idx.push(c);
        }
    }

    let genotype_set: HashSet<&str> = genotype_ids.iter().map(String::as_str).collect();
    log.not_in_genotypes = phenotype.ids.iter().filter(|id| !genotype_set.contains(id.as_str())).count();

    if kept_sample_ids.is_empty() {
        return Err(Error::Alignment(format!("no samples shared by all inputs ({log:?})")));
    }
    if kept_sample_ids.len() < MIN_KEPT_SAMPLES {
        return Err(Error::Alignment(format!(
            "only {} samples kept; at least {MIN_KEPT_SAMPLES} are required",
            kept_sample_ids.len()
        )));
    }
    Ok(SampleAlignment {
        kept_sample_ids,
        genotype_row_index,
        phenotype_row_index,
        covariate_row_index,
        exclusion_log: log,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MissingPolicy {
    Fail,
    #[default]
    MeanImpute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PanelState {
    Raw,
    Residualized,
    Standardized,
}

/// The N×P phenotype matrix over kept samples.
#[derive(Debug, Clone)]
pub struct PhenotypePanel {
    pub y: Array2<f64>,
    pub names: Vec<String>,
    pub missing_count: Vec<usize>,
    pub state: PanelState,
}

impl PhenotypePanel {
    pub fn n_samples(&self) -> usize {
        self.y.nrows()
    }

    pub fn n_phenotypes(&self) -> usize {
        self.y.ncols()
    }
}

pub fn build_panel(table: &Table, alignment: &SampleAlignment, policy: MissingPolicy) -> Result<PhenotypePanel> {
    if table.column_names.is_empty() {
        return Err(Error::Phenotype("table has no phenotype columns".into()));
    }
    let mut y = table.values.select(ndarray::Axis(0), &alignment.phenotype_row_index);
    let mut missing_count = Vec::with_capacity(y.ncols());
    for (name, mut col) in table.column_names.iter().zip(y.columns_mut()) {
        let (sum, n_present) = col.iter().filter(|v| !v.is_nan()).fold((0.0, 0usize), |(s, n), &v| (s + v, n + 1));
        let n_missing = col.len() - n_present;
        if n_present == 0 {
            return Err(Error::Phenotype(format!("phenotype column '{name}' entirely missing")));
        }
        if n_missing > 0 {
            match policy {
                MissingPolicy::Fail => {
                    return Err(Error::Phenotype(format!(
                        "phenotype column '{name}' has {n_missing} missing values among kept samples"
                    )));
                }
                MissingPolicy::MeanImpute => {
                    let mean = sum / n_present as f64;
                    log::warn!("phenotype '{name}': {n_missing} missing values imputed with mean {mean}");
                    col.mapv_inplace(|v| if v.is_nan() { mean } else { v });
                }
            }
        }
        missing_count.push(n_missing);
    }
    Ok(PhenotypePanel { y, names: table.column_names.clone(), missing_count, state: PanelState::Raw })
}

/// Covariate matrix over kept samples. Missing covariate cells are fatal.
pub fn build_covariates(table: &Table, alignment: &SampleAlignment) -> Result<Array2<f64>> {
    let rows = alignment
        .covariate_row_index
        .as_ref()
        .ok_or_else(|| Error::Covariate("alignment was built without a covariate table".into()))?;
    let c = table.values.select(ndarray::Axis(0), rows);
    for (name, col) in table.column_names.iter().zip(c.columns()) {
        if let Some(k) = col.iter().position(|v| v.is_nan()) {
            return Err(Error::Covariate(format!(
                "covariate '{name}' is missing for sample '{}'",
                alignment.kept_sample_ids[k]
            )));
        }
    }
    Ok(c)
}
