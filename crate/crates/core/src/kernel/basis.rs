use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

pub const DEFAULT_RANK_TOLERANCE: f64 = 1e-9;

/// Orthonormal basis (N × q) of the covariate space.
#[derive(Debug, Clone)]
pub struct CovariateBasis {
    pub q: Array2<f64>,
    /// Names of the columns that contributed a basis direction, in order.
    pub source_columns: Vec<String>,
    /// Columns dropped as linearly dependent on earlier ones.
    pub dropped_columns: Vec<String>,
}

impl CovariateBasis {
    pub fn rank(&self) -> usize {
        self.q.ncols()
    }

    pub fn n_samples(&self) -> usize {
        self.q.nrows()
    }

    /// Projects the columns of `x` (N × k) onto the orthogonal complement, in place.
    pub fn project_out_columns(&self, x: &mut Array2<f64>) {
        if self.rank() == 0 {
            return;
        }
        let coef = self.q.t().dot(&*x);
        *x -= &self.q.dot(&coef);
    }

    /// Projects the rows of `x` (k × N) onto the orthogonal complement, in place.
    pub fn project_out_rows(&self, x: &mut Array2<f64>) {
        if self.rank() == 0 {
            return;
        }
        let coef = x.dot(&self.q);
        *x -= &coef.dot(&self.q.t());
    }
}

/// Builds an orthonormal basis of span([1 | C]) (or span(C) without the
/// intercept) by Gram–Schmidt with one reorthogonalization pass. A column is
/// dropped when its residual norm is at most `rank_tolerance` times its norm.
pub fn build_covariate_basis(
    covariates: ArrayView2<f64>,
    names: &[String],
    include_intercept: bool,
    rank_tolerance: f64,
) -> Result<CovariateBasis> {
    let n = covariates.nrows();
    if names.len() != covariates.ncols() {
        return Err(Error::Dimension(format!("{} covariate names for {} columns", names.len(), covariates.ncols())));
    }
    if covariates.iter().any(|v| !v.is_finite()) {
        return Err(Error::Covariate("covariate matrix contains non-finite values".into()));
    }

    let mut candidates: Vec<(String, Array1<f64>)> = Vec::with_capacity(covariates.ncols() + 1);
    if include_intercept {
        candidates.push(("intercept".to_string(), Array1::ones(n)));
    }
    for (name, col) in names.iter().zip(covariates.axis_iter(Axis(1))) {
        candidates.push((name.clone(), col.to_owned()));
    }

    let mut basis: Vec<Array1<f64>> = Vec::new();
    let mut source_columns = Vec::new();
    let mut dropped_columns = Vec::new();
    for (name, mut v) in candidates {
        let norm0 = v.dot(&v).sqrt();
        if norm0 > 0.0 {
            for _ in 0..2 {
                for q in &basis {
                    let proj = q.dot(&v);
                    v.scaled_add(-proj, q);
                }
            }
        }
        let norm = v.dot(&v).sqrt();
        if norm0 == 0.0 || norm <= rank_tolerance * norm0 {
            log::warn!("covariate '{name}' is linearly dependent on earlier columns; dropped");
            dropped_columns.push(name);
            continue;
        }
        v /= norm;
        basis.push(v);
        source_columns.push(name);
    }

    let rank = basis.len();
    if n < rank + 2 {
        return Err(Error::Covariate(format!(
            "{n} samples leave no residual degrees of freedom for a rank-{rank} covariate basis"
        )));
    }
    let mut q = Array2::zeros((n, rank));
    for (j, v) in basis.iter().enumerate() {
        q.column_mut(j).assign(v);
    }
    Ok(CovariateBasis { q, source_columns, dropped_columns })
}

/// `(I − QQᵀ)(Y − Ȳ)`, computed as centered Y minus Q(Qᵀ centered Y).
pub fn residualize(y: ArrayView2<f64>, basis: &CovariateBasis) -> Result<Array2<f64>> {
    if y.nrows() != basis.n_samples() {
        return Err(Error::Dimension(format!(
            "phenotype matrix has {} rows, covariate basis {}",
            y.nrows(),
            basis.n_samples()
        )));
    }
    let mean = y.mean_axis(Axis(0)).expect("at least one row");
    let mut centered = &y - &mean;
    basis.project_out_columns(&mut centered);
    Ok(centered)
}
