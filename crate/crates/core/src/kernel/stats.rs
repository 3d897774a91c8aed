//! Correlation → t-statistic → two-sided p-value.

use ndarray::{Array2, Zip};

use super::special::{ln_reg_inc_beta_large_a_half, ln_reg_inc_beta_parts};
use crate::error::Result;

/// Smallest reported p-value; smaller values are floored here and counted.
pub const P_FLOOR: f64 = f64::MIN_POSITIVE;

/// At or above this df, and for t² ≤ df, the tail uses the large-parameter
/// expansion; the continued fraction loses about log10(df / t²) digits there.
const LARGE_DF: f64 = 1000.0;

/// Largest |r| fed to the t transform short of exact ±1.
pub const R_MAX: f64 = 1.0 - 1e-15;

/// `t = r √(df / (1 − r²))`. Exact |r| = 1 gives ±∞; |r| in `(R_MAX, 1)` is clamped to `R_MAX`.
pub fn t_from_r(r: f64, df: f64) -> f64 {
    if r == 0.0 {
        return 0.0;
    }
    if r.abs() >= 1.0 {
        return f64::INFINITY.copysign(r);
    }
    let a = r.abs().min(R_MAX);
    let one_minus_r2 = (1.0 - a) * (1.0 + a);
    (a * (df / one_minus_r2).sqrt()).copysign(r)
}

/// Natural log of the two-sided Student-t p-value, without flooring.
pub fn ln_p_from_t(t: f64, df: f64) -> Result<f64> {
    if t == 0.0 {
        return Ok(0.0);
    }
    if t.is_infinite() {
        return Ok(f64::NEG_INFINITY);
    }
    let t2 = t * t;
    // p = I_x(df/2, 1/2) with x = df / (df + t²), 1 − x = t² / (df + t²).
    let x = df / (df + t2);
    let y = t2 / (df + t2);
    let ln_x = -(t2 / df).ln_1p();
    if df >= LARGE_DF && t2 <= df {
        if let Ok(v) = ln_reg_inc_beta_large_a_half(0.5 * df, ln_x) {
            return Ok(v);
        }
    }
    let ln_y = -(df / t2).ln_1p();
    ln_reg_inc_beta_parts(0.5 * df, 0.5, x, y, ln_x, ln_y)
}

/// Two-sided p-value, floored at [`P_FLOOR`]. `p(0, df) = 1` exactly.
pub fn p_from_t(t: f64, df: f64) -> Result<f64> {
    Ok(floor_p(ln_p_from_t(t, df)?.exp()))
}

/// `-log10 p`, unfloored; +∞ for infinite t.
pub fn neg_log10_p_from_t(t: f64, df: f64) -> Result<f64> {
    Ok(-ln_p_from_t(t, df)? / std::f64::consts::LN_10)
}

pub fn floor_p(p: f64) -> f64 {
    if p < P_FLOOR {
        P_FLOOR
    } else {
        p.min(1.0)
    }
}

/// True when a p-value was raised to the floor.
pub fn is_floored(p: f64) -> bool {
    p <= P_FLOOR
}

/// Per-batch statistics for every (marker, phenotype) pair.
#[derive(Debug, Clone)]
pub struct StatBlock {
    pub r: Array2<f64>,
    pub t: Array2<f64>,
    pub p: Array2<f64>,
    pub df: f64,
    pub p_underflow: usize,
}

impl StatBlock {
    pub fn from_correlations(r: Array2<f64>, df: f64) -> Result<Self> {
        let t = t_matrix(&r, df);
        let mut p = Array2::zeros(t.dim());
        let mut failure = None;
        Zip::from(&mut p).and(&t).for_each(|p, &t| match p_from_t(t, df) {
            Ok(v) => *p = v,
            Err(e) => {
                failure.get_or_insert(e);
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
        let p_underflow = p.iter().filter(|&&v| is_floored(v)).count();
        Ok(StatBlock { r, t, p, df, p_underflow })
    }
}

pub fn t_matrix(r: &Array2<f64>, df: f64) -> Array2<f64> {
    r.mapv(|r| t_from_r(r, df))
}

/// Smallest |r| that can reach `p ≤ p_threshold` at `df`, lowered by a small
/// relative margin. Pairs below it are skipped without computing p; pairs
/// above it still have their exact p compared against the threshold.
pub fn r_screen_for_threshold(p_threshold: f64, df: f64) -> Result<f64> {
    if p_threshold >= 1.0 {
        return Ok(0.0);
    }
    // Bisection on |t| over p(|t|), which is non-increasing.
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while p_from_t(hi, df)? > p_threshold {
        hi *= 2.0;
        if hi > 1e150 {
            return Ok(R_MAX);
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if p_from_t(mid, df)? > p_threshold {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    let t = lo;
    let r = t / (df + t * t).sqrt();
    Ok((r * (1.0 - 1e-6)).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn t_examples() {
        assert_eq!(t_from_r(0.0, 17.0), 0.0);
        assert!((t_from_r(0.5, 2.0) - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(t_from_r(1.0, 10.0), f64::INFINITY);
        assert_eq!(t_from_r(-1.0, 10.0), f64::NEG_INFINITY);
        assert!(t_from_r(1.0 - 1e-16, 10.0).is_finite());
        assert_eq!(t_from_r(1.0 - 1e-16, 10.0), t_from_r(R_MAX, 10.0));
    }

    #[test]
    fn p_examples() {
        assert_eq!(p_from_t(0.0, 100.0).unwrap(), 1.0);
        assert!((p_from_t((2.0f64 / 3.0).sqrt(), 2.0).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(p_from_t(f64::INFINITY, 5.0).unwrap(), P_FLOOR);
        assert!(is_floored(p_from_t(1e80, 5.0).unwrap()));
        assert!(!is_floored(p_from_t(1e10, 5.0).unwrap()));
    }

    #[test]
    fn p_is_symmetric_in_t() {
        for t in [0.3, 2.0, 11.0] {
            assert_eq!(p_from_t(t, 7.0).unwrap(), p_from_t(-t, 7.0).unwrap());
        }
    }

    #[test]
    fn screen_never_excludes_a_passing_pair() {
        for df in [3.0, 48.0, 1998.0] {
            for thr in [0.5, 0.05, 1e-4, 1e-12] {
                let r0 = r_screen_for_threshold(thr, df).unwrap();
                // Just above the screen we may or may not pass; just below we must fail.
                let below = r0 * (1.0 - 1e-9);
                let p = p_from_t(t_from_r(below, df), df).unwrap();
                assert!(p > thr, "df={df} thr={thr}");
            }
        }
        assert_eq!(r_screen_for_threshold(1.0, 10.0).unwrap(), 0.0);
    }

    #[test]
    fn stat_block_shapes_and_signs() {
        let r = Array2::from_shape_vec((2, 2), vec![0.5, -0.5, 0.0, 1.0]).unwrap();
        let b = StatBlock::from_correlations(r, 2.0).unwrap();
        assert!(b.t[[0, 0]] > 0.0 && b.t[[0, 1]] < 0.0);
        assert_eq!(b.t[[1, 0]], 0.0);
        assert_eq!(b.p[[1, 0]], 1.0);
        assert_eq!(b.p_underflow, 1);
    }
}
