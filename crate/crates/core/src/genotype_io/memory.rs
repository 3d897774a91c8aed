use ndarray::{s, Array2};

use super::{
    check_batch_request, ensure_unique_ids, CountedAllele, GenotypeFormat, GenotypeSource, MarkerRecord, RawBatch,
};
use crate::error::{Error, Result};

/// Genotypes held in memory, markers × samples. Reports itself as a dense source.
#[derive(Debug, Clone)]
pub struct MemorySource {
    sample_ids: Vec<String>,
    markers: Vec<MarkerRecord>,
    dosages: Array2<f32>,
}

impl MemorySource {
    pub fn new(sample_ids: Vec<String>, markers: Vec<MarkerRecord>, dosages: Array2<f32>) -> Result<Self> {
        if dosages.dim() != (markers.len(), sample_ids.len()) {
            return Err(Error::Dimension(format!(
                "dosage matrix {:?} does not match {} markers x {} samples",
                dosages.dim(),
                markers.len(),
                sample_ids.len()
            )));
        }
        ensure_unique_ids(&sample_ids, "in-memory genotypes")?;
        Ok(MemorySource { sample_ids, markers, dosages })
    }

    pub fn dosages(&self) -> &Array2<f32> {
        &self.dosages
    }

    pub fn markers(&self) -> &[MarkerRecord] {
        &self.markers
    }
}

impl GenotypeSource for MemorySource {
    fn format(&self) -> GenotypeFormat {
        GenotypeFormat::Dense
    }

    fn n_samples(&self) -> usize {
        self.sample_ids.len()
    }

    fn n_markers(&self) -> usize {
        self.markers.len()
    }

    fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    fn counted_allele(&self) -> CountedAllele {
        CountedAllele::Allele1
    }

    fn read_marker_batch(&mut self, start: usize, count: usize) -> Result<RawBatch> {
        let count = check_batch_request(start, count, self.markers.len())?;
        let rows = start..start + count;
        RawBatch::new(self.markers[rows.clone()].to_vec(), self.dosages.slice(s![rows, ..]).to_owned())
    }
}
