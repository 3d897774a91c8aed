//! Storage precision and the batched correlation product `R = G̃ Ỹ / N`.

use std::borrow::Cow;

use ndarray::Array2;

use crate::error::{Error, Result};

/// How standardized matrices are stored. Products always accumulate in f64.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    /// f32 storage, f64 accumulation. Uses the fastest available dgemm.
    #[default]
    F32StoreF64Acc,
    /// f64 storage. Each entry is a dot product with a fixed summation order,
    /// so output is bit-identical across batch sizes and worker counts.
    F64,
}

impl Precision {
    pub fn element_bytes(self) -> usize {
        match self {
            Precision::F32StoreF64Acc => 4,
            Precision::F64 => 8,
        }
    }
}

#[derive(Debug, Clone)]
pub enum StoredMatrix {
    F32(Array2<f32>),
    F64(Array2<f64>),
}

impl StoredMatrix {
    pub fn store(values: Array2<f64>, precision: Precision) -> Self {
        match precision {
            Precision::F32StoreF64Acc => StoredMatrix::F32(values.mapv(|v| v as f32)),
            Precision::F64 => StoredMatrix::F64(values),
        }
    }

    pub fn precision(&self) -> Precision {
        match self {
            StoredMatrix::F32(_) => Precision::F32StoreF64Acc,
            StoredMatrix::F64(_) => Precision::F64,
        }
    }

    pub fn dim(&self) -> (usize, usize) {
        match self {
            StoredMatrix::F32(a) => a.dim(),
            StoredMatrix::F64(a) => a.dim(),
        }
    }

    pub fn to_f64(&self) -> Cow<'_, Array2<f64>> {
        match self {
            StoredMatrix::F32(a) => Cow::Owned(a.mapv(f64::from)),
            StoredMatrix::F64(a) => Cow::Borrowed(a),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Correlation {
    pub r: Array2<f64>,
    /// Entries pulled back into [−1, 1] after the product.
    pub clamped: usize,
}

/// Correlates standardized genotype rows (M × N) with standardized
/// phenotype columns (N × P).
pub fn correlate(g: &StoredMatrix, y: &StoredMatrix) -> Result<Correlation> {
    let (m, n) = g.dim();
    let (n2, p) = y.dim();
    if n != n2 {
        return Err(Error::Dimension(format!("genotype batch has {n} samples, phenotype panel {n2}")));
    }
    if n == 0 {
        return Err(Error::Dimension("no samples to correlate".into()));
    }
    let deterministic = g.precision() == Precision::F64 && y.precision() == Precision::F64;
    let (g, y) = (g.to_f64(), y.to_f64());
    let mut r = Array2::<f64>::zeros((m, p));
    if m > 0 && p > 0 {
        let alpha = 1.0 / n as f64;
        if deterministic {
            fixed_order::mat_mul(alpha, &g, &y, &mut r);
        } else {
            gemm::fast(alpha, &g, &y, &mut r);
        }
    }
    let mut clamped = 0;
    r.mapv_inplace(|v| {
        if v > 1.0 {
            clamped += 1;
            1.0
        } else if v < -1.0 {
            clamped += 1;
            -1.0
        } else {
            v
        }
    });
    Ok(Correlation { r, clamped })
}

/// Limits the BLAS backend to one thread; parallelism comes from batch workers.
pub fn single_threaded_blas() {
    gemm::set_threads(1);
}

mod fixed_order {
    use ndarray::{Array2, ArrayView1, Axis};

    const LANES: usize = 8;
    const ROWS: usize = 4;

    fn reduce(acc: [f64; LANES], tail: f64) -> f64 {
        ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        let split = a.len() / LANES * LANES;
        let mut acc = [0.0; LANES];
        for (ca, cb) in a[..split].chunks_exact(LANES).zip(b[..split].chunks_exact(LANES)) {
            for l in 0..LANES {
                acc[l] += ca[l] * cb[l];
            }
        }
        let mut tail = 0.0;
        for k in split..a.len() {
            tail += a[k] * b[k];
        }
        reduce(acc, tail)
    }

    /// Same arithmetic per entry as [`dot`], four rows of `a` at a time.
    fn dot4(a: [&[f64]; ROWS], b: &[f64]) -> [f64; ROWS] {
        let split = b.len() / LANES * LANES;
        let mut acc = [[0.0; LANES]; ROWS];
        for (c, cb) in b[..split].chunks_exact(LANES).enumerate() {
            let base = c * LANES;
            for (r, row) in a.iter().enumerate() {
                let ca = &row[base..base + LANES];
                for l in 0..LANES {
                    acc[r][l] += ca[l] * cb[l];
                }
            }
        }
        let mut out = [0.0; ROWS];
        for r in 0..ROWS {
            let mut tail = 0.0;
            for k in split..b.len() {
                tail += a[r][k] * b[k];
            }
            out[r] = reduce(acc[r], tail);
        }
        out
    }

    fn contiguous(v: ArrayView1<'_, f64>) -> Vec<f64> {
        v.iter().copied().collect()
    }

    pub(super) fn mat_mul(alpha: f64, a: &Array2<f64>, b: &Array2<f64>, c: &mut Array2<f64>) {
        let a = a.as_standard_layout();
        let bt: Vec<Vec<f64>> = b.axis_iter(Axis(1)).map(contiguous).collect();
        let rows: Vec<&[f64]> = a.rows().into_iter().map(|r| r.to_slice().expect("standard layout")).collect();
        let mut i = 0;
        while i + ROWS <= rows.len() {
            let block = [rows[i], rows[i + 1], rows[i + 2], rows[i + 3]];
            for (j, col) in bt.iter().enumerate() {
                for (r, v) in dot4(block, col).into_iter().enumerate() {
                    c[[i + r, j]] = alpha * v;
                }
            }
            i += ROWS;
        }
        for (k, row) in rows.iter().enumerate().skip(i) {
            for (j, col) in bt.iter().enumerate() {
                c[[k, j]] = alpha * dot(row, col);
            }
        }
    }
}

#[cfg(feature = "openblas")]
mod gemm {
    use cblas_sys::{cblas_dgemm, CBLAS_LAYOUT, CBLAS_TRANSPOSE};
    use ndarray::Array2;

    // Links the system OpenBLAS, which also provides the cblas symbols.
    #[link(name = "openblas")]
    extern "C" {
        fn openblas_set_num_threads(n: std::os::raw::c_int);
    }

    pub(super) fn set_threads(n: usize) {
        // SAFETY: plain setter exported by OpenBLAS.
        unsafe { openblas_set_num_threads(n as std::os::raw::c_int) }
    }

    pub(super) fn fast(alpha: f64, a: &Array2<f64>, b: &Array2<f64>, c: &mut Array2<f64>) {
        let (m, k) = a.dim();
        let n = b.ncols();
        let a = a.as_standard_layout();
        let b = b.as_standard_layout();
        debug_assert!(c.is_standard_layout());
        // SAFETY: all three buffers are contiguous row-major with the leading
        // dimensions passed below, and `c` is exclusively borrowed.
        unsafe {
            cblas_dgemm(
                CBLAS_LAYOUT::CblasRowMajor,
                CBLAS_TRANSPOSE::CblasNoTrans,
                CBLAS_TRANSPOSE::CblasNoTrans,
                m as i32,
                n as i32,
                k as i32,
                alpha,
                a.as_ptr(),
                k as i32,
                b.as_ptr(),
                n as i32,
                0.0,
                c.as_mut_ptr(),
                n as i32,
            );
        }
    }
}

#[cfg(not(feature = "openblas"))]
mod gemm {
    use ndarray::Array2;

    pub(super) fn set_threads(_n: usize) {}

    pub(super) fn fast(alpha: f64, a: &Array2<f64>, b: &Array2<f64>, c: &mut Array2<f64>) {
        ndarray::linalg::general_mat_mul(alpha, a, b, 0.0, c);
    }
}

#[cfg(test)]
mod tests {
    use ndarray::{array, s};

    use super::*;

    fn standardize(v: &[f64]) -> Vec<f64> {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        v.iter().map(|x| (x - mean) / sd).collect()
    }

    fn row(v: Vec<f64>) -> Array2<f64> {
        Array2::from_shape_vec((1, v.len()), v).unwrap()
    }

    fn col(v: Vec<f64>) -> Array2<f64> {
        Array2::from_shape_vec((v.len(), 1), v).unwrap()
    }

    #[test]
    fn self_and_orthogonal_correlation() {
        for precision in [Precision::F64, Precision::F32StoreF64Acc] {
            let g = standardize(&[0.0, 1.0, 2.0, 1.0, 0.0]);
            let c = correlate(
                &StoredMatrix::store(row(g.clone()), Precision::F64),
                &StoredMatrix::store(col(g), precision),
            )
            .unwrap();
            assert!((c.r[[0, 0]] - 1.0).abs() < 1e-7);

            let a = standardize(&[1.0, -1.0, 1.0, -1.0]);
            let b = standardize(&[1.0, 1.0, -1.0, -1.0]);
            let c =
                correlate(&StoredMatrix::store(row(a), precision), &StoredMatrix::store(col(b), precision)).unwrap();
            assert_eq!(c.r[[0, 0]], 0.0);
        }
    }

    #[test]
    fn pearson_half() {
        let g = standardize(&[0.0, 1.0, 2.0, 1.0]);
        let y = standardize(&[0.0, 1.0, 1.0, 2.0]);
        let c = correlate(&StoredMatrix::F64(row(g)), &StoredMatrix::F64(col(y))).unwrap();
        assert!((c.r[[0, 0]] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn clamps_out_of_range_products() {
        let g = StoredMatrix::F64(array![[2.0, 2.0]]);
        let y = StoredMatrix::F64(array![[1.0], [1.0]]);
        let c = correlate(&g, &y).unwrap();
        assert_eq!(c.r[[0, 0]], 1.0);
        assert_eq!(c.clamped, 1);
    }

    #[test]
    fn inner_dimension_mismatch() {
        let g = StoredMatrix::F64(Array2::zeros((2, 3)));
        let y = StoredMatrix::F64(Array2::zeros((4, 1)));
        assert!(matches!(correlate(&g, &y), Err(Error::Dimension(_))));
    }

    #[test]
    fn f64_rows_do_not_depend_on_batch_composition() {
        let g = Array2::from_shape_fn((300, 500), |(i, j)| ((i * 7919 + j * 104_729) % 1009) as f64 / 1009.0 - 0.5);
        let y = StoredMatrix::F64(Array2::from_shape_fn((500, 300), |(i, j)| (((i * 31 + j * 17) % 97) as f64).cos()));
        let full = correlate(&StoredMatrix::F64(g.clone()), &y).unwrap().r;
        for (a, b) in [(0, 1), (1, 8), (8, 72), (72, 300)] {
            let part = correlate(&StoredMatrix::F64(g.slice(s![a..b, ..]).to_owned()), &y).unwrap().r;
            assert_eq!(part, full.slice(s![a..b, ..]));
        }
    }
}
