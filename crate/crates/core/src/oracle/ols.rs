//! Reference least squares: normal equations solved with a diagonally
//! pivoted Cholesky factorization, everything in plain f64 loops.

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::kernel::p_from_t;

/// Pivots below this fraction of the largest diagonal entry count as rank loss.
const PIVOT_TOLERANCE: f64 = 1e-10;
/// Residual sum of squares at or below this fraction of the total sum of
/// squares is treated as an exact fit (se = 0).
const EXACT_FIT: f64 = 1e-26;

/// Statistics for the genotype term of `y ~ 1 + C + g`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OlsResult {
    pub beta: f64,
    pub se: f64,
    pub t: f64,
    pub p: f64,
    pub df: f64,
}

/// `Pᵀ A P = L Lᵀ` for a symmetric positive definite `A`, with the pivot
/// order chosen greedily by largest remaining diagonal.
struct PivotedCholesky {
    l: Vec<Vec<f64>>,
    perm: Vec<usize>,
}

impl PivotedCholesky {
    fn factor(a: &[Vec<f64>]) -> Result<Self> {
        let k = a.len();
        let mut a: Vec<Vec<f64>> = a.to_vec();
        let mut perm: Vec<usize> = (0..k).collect();
        let scale = (0..k).map(|i| a[i][i]).fold(0.0f64, f64::max);
        if !(scale > 0.0) {
            return Err(Error::RankDeficient("design matrix is zero".into()));
        }
        let mut l = vec![vec![0.0; k]; k];
        for j in 0..k {
            // Choose the largest remaining diagonal.
            let (pivot, _) = (j..k)
                .map(|i| {
                    let d = a[i][i] - (0..j).map(|m| l[i][m] * l[i][m]).sum::<f64>();
                    (i, d)
                })
                .fold((j, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pivot != j {
                a.swap(pivot, j);
                for row in a.iter_mut() {
                    row.swap(pivot, j);
                }
                l.swap(pivot, j);
                perm.swap(pivot, j);
            }
            let d = a[j][j] - (0..j).map(|m| l[j][m] * l[j][m]).sum::<f64>();
            if !(d > PIVOT_TOLERANCE * scale) {
                return Err(Error::RankDeficient(format!("design matrix has rank {j} < {k} columns")));
            }
            let ljj = d.sqrt();
            l[j][j] = ljj;
            for i in j + 1..k {
                let s = a[i][j] - (0..j).map(|m| l[i][m] * l[j][m]).sum::<f64>();
                l[i][j] = s / ljj;
            }
        }
        Ok(PivotedCholesky { l, perm })
    }

    /// Solves `A x = b`.
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let k = b.len();
        let pb: Vec<f64> = self.perm.iter().map(|&i| b[i]).collect();
        let mut z = vec![0.0; k];
        for i in 0..k {
            z[i] = (pb[i] - (0..i).map(|m| self.l[i][m] * z[m]).sum::<f64>()) / self.l[i][i];
        }
        let mut w = vec![0.0; k];
        for i in (0..k).rev() {
            w[i] = (z[i] - (i + 1..k).map(|m| self.l[m][i] * w[m]).sum::<f64>()) / self.l[i][i];
        }
        let mut x = vec![0.0; k];
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = w[i];
        }
        x
    }
}

/// Columns `[1, C..., g]` as rows of a row-major design.
fn design(g: ArrayView1<f64>, c: Option<ArrayView2<f64>>) -> Result<Array2<f64>> {
    let n = g.len();
    let q = c.map_or(0, |c| c.ncols());
    if let Some(c) = c {
        if c.nrows() != n {
            return Err(Error::Dimension(format!("{} covariate rows for {n} samples", c.nrows())));
        }
    }
    let k = q + 2;
    if n <= k {
        return Err(Error::RankDeficient(format!("{n} samples for {k} regression parameters")));
    }
    let mut x = Array2::zeros((n, k));
    for i in 0..n {
        x[[i, 0]] = 1.0;
        if let Some(c) = c {
            for j in 0..q {
                x[[i, 1 + j]] = c[[i, j]];
            }
        }
        x[[i, k - 1]] = g[i];
    }
    Ok(x)
}

/// Fits shared by every phenotype for one marker.
struct Fit {
    x: Array2<f64>,
    chol: PivotedCholesky,
    /// `[(XᵀX)⁻¹]_gg`.
    inv_gg: f64,
    df: f64,
}

impl Fit {
    fn new(g: ArrayView1<f64>, c: Option<ArrayView2<f64>>) -> Result<Self> {
        let x = design(g, c)?;
        let (n, k) = x.dim();
        let mut xtx = vec![vec![0.0; k]; k];
        for i in 0..n {
            for a in 0..k {
                let xa = x[[i, a]];
                for b in 0..=a {
                    xtx[a][b] += xa * x[[i, b]];
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                xtx[b][a] = xtx[a][b];
            }
        }
        let chol = PivotedCholesky::factor(&xtx)?;
        let mut e = vec![0.0; k];
        e[k - 1] = 1.0;
        let inv_gg = chol.solve(&e)[k - 1];
        Ok(Fit { x, chol, inv_gg, df: (n - k) as f64 })
    }

    fn regress(&self, y: ArrayView1<f64>) -> Result<OlsResult> {
        let (n, k) = self.x.dim();
        if y.len() != n {
            return Err(Error::Dimension(format!("{} phenotype values for {n} samples", y.len())));
        }
        let mut xty = vec![0.0; k];
        for i in 0..n {
            for (a, v) in xty.iter_mut().enumerate() {
                *v += self.x[[i, a]] * y[i];
            }
        }
        let coef = self.chol.solve(&xty);
        let mean = y.sum() / n as f64;
        let (mut rss, mut tss) = (0.0, 0.0);
        for i in 0..n {
            let fitted: f64 = (0..k).map(|a| self.x[[i, a]] * coef[a]).sum();
            let e = y[i] - fitted;
            rss += e * e;
            tss += (y[i] - mean) * (y[i] - mean);
        }
        let beta = coef[k - 1];
        let se = if rss <= EXACT_FIT * tss { 0.0 } else { (rss / self.df * self.inv_gg).sqrt() };
        let t = if se > 0.0 {
            beta / se
        } else if beta == 0.0 {
            0.0
        } else {
            f64::INFINITY.copysign(beta)
        };
        Ok(OlsResult { beta, se, t, p: p_from_t(t, self.df)?, df: self.df })
    }
}

/// Least-squares genotype effect for one trait.
pub fn ols_single(y: ArrayView1<f64>, g: ArrayView1<f64>, c: Option<ArrayView2<f64>>) -> Result<OlsResult> {
    Fit::new(g, c)?.regress(y)
}

/// [`ols_single`] for every column of `y` (N × P), factoring the design once.
pub fn ols_panel(y: ArrayView2<f64>, g: ArrayView1<f64>, c: Option<ArrayView2<f64>>) -> Result<Vec<OlsResult>> {
    let fit = Fit::new(g, c)?;
    y.columns().into_iter().map(|col| fit.regress(col)).collect()
}

#[cfg(test)]
mod tests {
    use ndarray::{array, Array1};

    use super::*;
    use crate::kernel::P_FLOOR;

    #[test]
    fn perfect_fit_gives_infinite_t() {
        let g = array![0.0, 1.0, 2.0, 1.0, 0.0];
        let r = ols_single(g.view(), g.view(), None).unwrap();
        assert_eq!(r.se, 0.0);
        assert_eq!(r.t, f64::INFINITY);
        assert_eq!(r.p, P_FLOOR);
    }

    #[test]
    fn orthogonal_phenotype_gives_zero() {
        let g = array![0.0, 1.0, 2.0, 1.0];
        let y = array![1.0, -1.0, 1.0, -1.0];
        let r = ols_single(y.view(), g.view(), None).unwrap();
        assert_eq!(r.beta, 0.0);
        assert_eq!(r.t, 0.0);
        assert_eq!(r.p, 1.0);
    }

    #[test]
    fn matches_kernel_example() {
        let r = ols_single(array![0.0, 1.0, 1.0, 2.0].view(), array![0.0, 1.0, 2.0, 1.0].view(), None).unwrap();
        assert!((r.t - (2.0f64 / 3.0).sqrt()).abs() < 1e-14);
        assert_eq!(r.df, 2.0);
    }

    #[test]
    fn matches_textbook_simple_regression() {
        let g: Array1<f64> = (0..40).map(|i| ((i * 7) % 3) as f64).collect();
        let y: Array1<f64> = (0..40).map(|i| (i as f64 * 0.37).sin() + 0.2 * g[i]).collect();
        let n = 40.0;
        let (gm, ym) = (g.sum() / n, y.sum() / n);
        let sxx: f64 = g.iter().map(|v| (v - gm).powi(2)).sum();
        let sxy: f64 = g.iter().zip(&y).map(|(a, b)| (a - gm) * (b - ym)).sum();
        let beta = sxy / sxx;
        let rss: f64 = g.iter().zip(&y).map(|(a, b)| (b - ym - beta * (a - gm)).powi(2)).sum();
        let se = (rss / (n - 2.0) / sxx).sqrt();
        let r = ols_single(y.view(), g.view(), None).unwrap();
        assert!((r.beta - beta).abs() <= 1e-12);
        assert!((r.se - se).abs() <= 1e-12);
        assert!((r.t - beta / se).abs() <= 1e-12 * (beta / se).abs().max(1.0));
    }

    #[test]
    fn rank_deficient_design_is_an_error() {
        let g = array![1.0, 1.0, 1.0, 1.0];
        assert!(matches!(ols_single(g.view(), g.view(), None), Err(Error::RankDeficient(_))));
        let g = array![0.0, 1.0, 2.0, 1.0, 0.0];
        let c = g.clone().insert_axis(ndarray::Axis(1));
        let y = array![0.3, 0.1, 0.9, 0.4, 0.2];
        assert!(matches!(ols_single(y.view(), g.view(), Some(c.view())), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn panel_matches_single() {
        let g = array![0.0, 1.0, 2.0, 1.0, 0.0, 2.0];
        let c = array![[0.5], [1.0], [-0.2], [0.3], [0.0], [0.9]];
        let y = array![[1.0, 0.3], [2.0, -0.1], [2.5, 0.8], [0.7, 0.4], [0.1, -0.6], [3.0, 0.2]];
        let panel = ols_panel(y.view(), g.view(), Some(c.view())).unwrap();
        for (j, r) in panel.iter().enumerate() {
            assert_eq!(*r, ols_single(y.column(j), g.view(), Some(c.view())).unwrap());
            assert_eq!(r.df, 3.0);
        }
    }
}
