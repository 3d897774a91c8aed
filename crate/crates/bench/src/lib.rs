//! Seeded fixtures shared by the benchmarks.

use ndarray::Array2;
use panelgwas::genotype_io::encode_bed_codes;
use panelgwas::genotype_io::npy::synthetic_marker;
use panelgwas::kernel::{build_covariate_basis, residualize, standardize_columns, CovariateBasis, StoredMatrix};
use panelgwas::{Precision, RawBatch};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Hard-call dosages, M × N, allele frequency 0.3.
pub fn hard_calls(seed: u64, m: usize, n: usize) -> Array2<f32> {
    let mut r = rng(seed);
    Array2::from_shape_simple_fn((m, n), || (0..2).filter(|_| r.random::<f64>() < 0.3).count() as f32)
}

pub fn raw_batch(seed: u64, m: usize, n: usize) -> RawBatch {
    let markers = (0..m).map(synthetic_marker).collect();
    RawBatch::new(markers, hard_calls(seed, m, n)).expect("consistent shape")
}

/// Packed .bed bytes for every row of `dosages`.
pub fn packed_rows(dosages: &Array2<f32>) -> Vec<Vec<u8>> {
    dosages.rows().into_iter().map(|row| encode_bed_codes(&row.to_vec()).expect("hard calls")).collect()
}

/// Intercept plus `c` Gaussian-ish covariates over `n` samples.
pub fn basis(seed: u64, n: usize, c: usize) -> CovariateBasis {
    let mut r = rng(seed);
    let cov = Array2::from_shape_simple_fn((n, c), || r.random::<f64>() - 0.5);
    let names: Vec<String> = (0..c).map(|i| format!("C{i}")).collect();
    build_covariate_basis(cov.view(), &names, true, 1e-8).expect("full rank")
}

/// Residualized, standardized phenotype panel, N × P.
pub fn panel(seed: u64, n: usize, p: usize, basis: &CovariateBasis, precision: Precision) -> StoredMatrix {
    let mut r = rng(seed);
    let y = Array2::from_shape_simple_fn((n, p), || r.random::<f64>());
    let y_res = residualize(y.view(), basis).expect("matching rows");
    StoredMatrix::store(standardize_columns(y_res.view(), None).y, precision)
}

/// Correlations drawn uniformly from (−0.2, 0.2).
pub fn correlations(seed: u64, m: usize, p: usize) -> Array2<f64> {
    let mut r = rng(seed);
    Array2::from_shape_simple_fn((m, p), || 0.4 * r.random::<f64>() - 0.2)
}
