//! Genotype sources: PLINK binary filesets, a BGEN v1.2 subset, and dense
//! NPY arrays, all exposed as sequential marker-batch readers.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};

use crate::error::{Error, Result};

pub mod bgen;
pub mod memory;
pub mod npy;
pub mod plink;

pub use bgen::{bgen_expected_dosage, BgenSource};
pub use memory::MemorySource;
pub use npy::{write_npy, DenseOrientation, NpySource};
pub use plink::{decode_bed_codes, decode_bed_codes_into, encode_bed_codes, PlinkSource, PlinkWriter};

/// Missing-dosage sentinel.
pub const MISSING: f32 = f32::NAN;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenotypeFormat {
    PlinkBed,
    Bgen,
    Dense,
}

/// Which of the two listed alleles the dosage counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountedAllele {
    Allele1,
    Allele2,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkerRecord {
    pub chrom: String,
    pub id: String,
    pub pos: u64,
    pub allele1: String,
    pub allele2: String,
    /// 0-based ordinal in file order.
    pub source_index: usize,
}

impl MarkerRecord {
    /// Returns `(counted, other)` allele names.
    pub fn alleles_for(&self, counted: CountedAllele) -> (&str, &str) {
        match counted {
            CountedAllele::Allele1 => (&self.allele1, &self.allele2),
            CountedAllele::Allele2 => (&self.allele2, &self.allele1),
        }
    }
}

/// A block of decoded dosages, one row per marker and one column per sample
/// in source order. Missing entries hold [`MISSING`].
#[derive(Debug, Clone)]
pub struct RawBatch {
    pub markers: Vec<MarkerRecord>,
    pub dosages: Array2<f32>,
    pub missing_count: Vec<usize>,
}

impl RawBatch {
    /// Builds a batch and counts missing entries per row.
    pub fn new(markers: Vec<MarkerRecord>, dosages: Array2<f32>) -> Result<Self> {
        if markers.len() != dosages.nrows() {
            return Err(Error::Dimension(format!(
                "{} marker records for {} dosage rows",
                markers.len(),
                dosages.nrows()
            )));
        }
        let missing_count = dosages.axis_iter(Axis(0)).map(|row| row.iter().filter(|d| d.is_nan()).count()).collect();
        Ok(RawBatch { markers, dosages, missing_count })
    }

    pub fn n_markers(&self) -> usize {
        self.markers.len()
    }

    pub fn n_samples(&self) -> usize {
        self.dosages.ncols()
    }

    /// Restricts the batch to the given sample columns, in the given order.
    pub fn select_samples(&self, columns: &[usize]) -> RawBatch {
        let dosages = self.dosages.select(Axis(1), columns);
        let missing_count = dosages.axis_iter(Axis(0)).map(|row| row.iter().filter(|d| d.is_nan()).count()).collect();
        RawBatch { markers: self.markers.clone(), dosages, missing_count }
    }
}

/// Sequential, single-consumer reader of marker batches.
pub trait GenotypeSource: Send {
    fn format(&self) -> GenotypeFormat;
    fn n_samples(&self) -> usize;
    fn n_markers(&self) -> usize;
    fn sample_ids(&self) -> &[String];
    fn counted_allele(&self) -> CountedAllele;

    /// Reads markers `[start, start + min(count, n_markers - start))`.
    fn read_marker_batch(&mut self, start: usize, count: usize) -> Result<RawBatch>;
}

/// How to locate a genotype dataset on disk.
#[derive(Debug, Clone)]
pub enum GenotypeSpec {
    Plink { bed: PathBuf, bim: PathBuf, fam: PathBuf },
    Bgen { path: PathBuf, samples: Option<PathBuf> },
    Dense { path: PathBuf, samples: PathBuf, orientation: DenseOrientation },
}

impl GenotypeSpec {
    /// `prefix.bed`, `prefix.bim`, `prefix.fam`.
    pub fn plink_prefix(prefix: impl AsRef<Path>) -> Self {
        let prefix = prefix.as_ref().as_os_str().to_owned();
        let with = |ext: &str| {
            let mut p = prefix.clone();
            p.push(ext);
            PathBuf::from(p)
        };
        GenotypeSpec::Plink { bed: with(".bed"), bim: with(".bim"), fam: with(".fam") }
    }
}

pub fn open_genotype_source(spec: &GenotypeSpec) -> Result<Box<dyn GenotypeSource>> {
    Ok(match spec {
        GenotypeSpec::Plink { bed, bim, fam } => Box::new(PlinkSource::open(bed, bim, fam)?),
        GenotypeSpec::Bgen { path, samples } => Box::new(BgenSource::open(path, samples.as_deref())?),
        GenotypeSpec::Dense { path, samples, orientation } => Box::new(NpySource::open(path, samples, *orientation)?),
    })
}

/// Reads a newline-delimited list of sample IDs, skipping blank lines.
pub fn read_id_list(path: &Path) -> Result<Vec<String>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut ids = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let id = line.trim();
        if !id.is_empty() {
            ids.push(id.to_string());
        }
    }
    Ok(ids)
}

pub(crate) fn ensure_unique_ids(ids: &[String], context: &str) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::DuplicateSample { id: id.clone(), context: context.to_string() });
        }
    }
    Ok(())
}

pub(crate) fn check_batch_request(start: usize, count: usize, n_markers: usize) -> Result<usize> {
    if count == 0 {
        return Err(Error::Config("batch count must be at least 1".into()));
    }
    if start >= n_markers {
        return Err(Error::Dimension(format!("batch start {start} beyond {n_markers} markers")));
    }
    Ok(count.min(n_markers - start))
}

pub(crate) fn warn_if_same_alleles(marker: &MarkerRecord) {
    if marker.allele1 == marker.allele2 {
        log::warn!("marker {} has identical alleles '{}'", marker.id, marker.allele1);
    }
}
