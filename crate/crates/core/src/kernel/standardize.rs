use ndarray::{Array2, ArrayView2, Axis};
use serde::Serialize;

use super::basis::CovariateBasis;
use super::correlate::{Precision, StoredMatrix};
use crate::genotype_io::RawBatch;

/// Variance (1/N convention) at or below which a marker is untestable.
pub const MONOMORPHIC_VARIANCE: f64 = 1e-12;

/// Relative sd below which a phenotype column counts as constant.
pub const ZERO_VARIANCE_SD: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct StandardizedColumns {
    pub y: Array2<f64>,
    pub sd: Vec<f64>,
    pub zero_variance: Vec<bool>,
}

/// Scales each column to zero mean and unit 1/N variance. A column whose sd is
/// at most `1e-12 · max(1, |raw mean|)` is flagged and zero-filled; `raw_means`
/// are the column means before any centering (zero when not supplied).
pub fn standardize_columns(y_res: ArrayView2<f64>, raw_means: Option<&[f64]>) -> StandardizedColumns {
    let n = y_res.nrows() as f64;
    let mut y = y_res.to_owned();
    let mut sd = Vec::with_capacity(y.ncols());
    let mut zero_variance = Vec::with_capacity(y.ncols());
    for (j, mut col) in y.axis_iter_mut(Axis(1)).enumerate() {
        let mean = col.sum() / n;
        col -= mean;
        let s = (col.dot(&col) / n).sqrt();
        let scale = raw_means.map_or(0.0, |m| m[j].abs()).max(1.0);
        let flat = !(s > ZERO_VARIANCE_SD * scale);
        if flat {
            col.fill(0.0);
        } else {
            col /= s;
        }
        sd.push(s);
        zero_variance.push(flat);
    }
    StandardizedColumns { y, sd, zero_variance }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    Monomorphic,
    AllMissing,
    /// No variance left after projecting out the covariates.
    CovariateCollinear,
}

impl SkipReason {
    pub fn as_str(self) -> &'static str {
        match self {
            SkipReason::Monomorphic => "monomorphic",
            SkipReason::AllMissing => "all_missing",
            SkipReason::CovariateCollinear => "covariate_collinear",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkerQc {
    /// Mean non-missing dosage / 2.
    pub allele_frequency: f64,
    pub missing_count: usize,
    pub variance_before_scaling: f64,
    pub skip: Option<SkipReason>,
}

#[derive(Debug, Clone)]
pub struct StandardizedBatch {
    /// M × N; skipped rows are zero.
    pub g: StoredMatrix,
    pub qc: Vec<MarkerQc>,
}

/// Mean-imputes, centers, optionally projects off the covariate basis, and
/// scales each marker row to unit 1/N variance.
pub fn prepare_genotype_batch(
    raw: &RawBatch,
    basis: Option<&CovariateBasis>,
    residualize_genotypes: bool,
    precision: Precision,
) -> StandardizedBatch {
    let (m, n) = raw.dosages.dim();
    let nf = n as f64;
    let mut g = Array2::<f64>::zeros((m, n));
    let mut qc = Vec::with_capacity(m);

    for ((raw_row, mut out), &missing_count) in
        raw.dosages.axis_iter(Axis(0)).zip(g.axis_iter_mut(Axis(0))).zip(&raw.missing_count)
    {
        let (sum, present) =
            raw_row.iter().filter(|d| !d.is_nan()).fold((0.0f64, 0usize), |(s, k), &d| (s + f64::from(d), k + 1));
        if present == 0 {
            qc.push(MarkerQc {
                allele_frequency: f64::NAN,
                missing_count,
                variance_before_scaling: 0.0,
                skip: Some(SkipReason::AllMissing),
            });
            continue;
        }
        let mean = sum / present as f64;
        let mut ss = 0.0;
        for (o, &d) in out.iter_mut().zip(raw_row) {
            let c = if d.is_nan() { 0.0 } else { f64::from(d) - mean };
            *o = c;
            ss += c * c;
        }
        let variance = ss / nf;
        let skip = (variance <= MONOMORPHIC_VARIANCE).then_some(SkipReason::Monomorphic);
        if skip.is_some() {
            out.fill(0.0);
        }
        qc.push(MarkerQc { allele_frequency: mean / 2.0, missing_count, variance_before_scaling: variance, skip });
    }

    if residualize_genotypes {
        if let Some(basis) = basis {
            basis.project_out_rows(&mut g);
        }
    }

    for (mut row, qc) in g.axis_iter_mut(Axis(0)).zip(qc.iter_mut()) {
        if qc.skip.is_some() {
            row.fill(0.0);
            continue;
        }
        if residualize_genotypes && basis.is_some() {
            let mean = row.sum() / nf;
            row -= mean;
        }
        let variance = row.dot(&row) / nf;
        if variance <= MONOMORPHIC_VARIANCE * qc.variance_before_scaling.max(1.0) {
            qc.skip = Some(SkipReason::CovariateCollinear);
            row.fill(0.0);
            continue;
        }
        row /= variance.sqrt();
    }

    StandardizedBatch { g: StoredMatrix::store(g, precision), qc }
}

#[cfg(test)]
mod tests {
    use ndarray::array;

    use super::*;
    use crate::genotype_io::{MarkerRecord, MISSING};

    fn batch(rows: &[&[f32]]) -> RawBatch {
        let n = rows[0].len();
        let flat: Vec<f32> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        let markers = (0..rows.len())
            .map(|i| MarkerRecord {
                chrom: "1".into(),
                id: format!("m{i}"),
                pos: i as u64,
                allele1: "A".into(),
                allele2: "G".into(),
                source_index: i,
            })
            .collect();
        RawBatch::new(markers, Array2::from_shape_vec((rows.len(), n), flat).unwrap()).unwrap()
    }

    fn f64_rows(b: &StandardizedBatch) -> Array2<f64> {
        b.g.to_f64().into_owned()
    }

    #[test]
    fn standardizes_simple_marker() {
        let b = prepare_genotype_batch(&batch(&[&[0.0, 1.0, 2.0, 1.0]]), None, false, Precision::F64);
        let g = f64_rows(&b);
        let sd = 0.5f64.sqrt();
        for (got, c) in g.row(0).iter().zip([-1.0, 0.0, 1.0, 0.0]) {
            assert!((got - c / sd).abs() < 1e-15);
        }
        assert_eq!(b.qc[0].allele_frequency, 0.5);
        assert!((b.qc[0].variance_before_scaling - 0.5).abs() < 1e-15);
    }

    #[test]
    fn flags_monomorphic_and_all_missing() {
        let b = prepare_genotype_batch(
            &batch(&[&[2.0, 2.0, 2.0, 2.0], &[MISSING, MISSING, MISSING, MISSING]]),
            None,
            false,
            Precision::F64,
        );
        assert_eq!(b.qc[0].skip, Some(SkipReason::Monomorphic));
        assert_eq!(b.qc[1].skip, Some(SkipReason::AllMissing));
        assert!(f64_rows(&b).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn imputes_missing_with_mean() {
        let with_missing = prepare_genotype_batch(&batch(&[&[0.0, MISSING, 2.0, 1.0]]), None, false, Precision::F64);
        let imputed = prepare_genotype_batch(&batch(&[&[0.0, 1.0, 2.0, 1.0]]), None, false, Precision::F64);
        assert_eq!(f64_rows(&with_missing), f64_rows(&imputed));
        assert_eq!(with_missing.qc[0].missing_count, 1);
        assert_eq!(with_missing.qc[0].allele_frequency, 0.5);
    }

    #[test]
    fn rows_are_standardized() {
        let b = prepare_genotype_batch(
            &batch(&[&[0.0, 1.0, 1.0, 2.0, 0.0, 1.0, 2.0], &[1.0, 1.0, 0.0, 0.0, 0.0, 2.0, MISSING]]),
            None,
            false,
            Precision::F64,
        );
        for row in f64_rows(&b).rows() {
            assert!(row.mean().unwrap().abs() <= 1e-8);
            assert!((row.dot(&row) / row.len() as f64 - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn column_standardization() {
        let s = standardize_columns(array![[-1.0, 3.0], [0.0, 3.0], [1.0, 3.0]].view(), None);
        assert!((s.sd[0] - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!(!s.zero_variance[0]);
        assert!(s.zero_variance[1]);
        let col = s.y.column(0);
        assert!(col.mean().unwrap().abs() < 1e-15);
        assert!((col.dot(&col) / 3.0 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn column_standardization_is_scale_invariant() {
        let y = array![[0.3], [-1.7], [2.2], [0.9], [5.1]];
        let a = standardize_columns(y.view(), None);
        let b = standardize_columns((&y * 5.0).view(), None);
        let diff = (&a.y - &b.y).iter().fold(0.0f64, |m, d| m.max(d.abs()));
        assert!(diff <= 1e-12);
    }

    #[test]
    fn covariate_collinear_marker_is_skipped() {
        use crate::kernel::basis::build_covariate_basis;
        let x = array![[0.0], [1.0], [2.0], [1.0], [0.0]];
        let basis = build_covariate_basis(x.view(), &["x".to_string()], true, 1e-9).unwrap();
        let b = prepare_genotype_batch(&batch(&[&[0.0, 1.0, 2.0, 1.0, 0.0]]), Some(&basis), true, Precision::F64);
        assert_eq!(b.qc[0].skip, Some(SkipReason::CovariateCollinear));
    }
}
