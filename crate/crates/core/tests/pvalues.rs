//! Two-sided t tail probabilities against a frozen 50-digit table.

use std::f64::consts::PI;

use panelgwas::kernel::{neg_log10_p_from_t, p_from_t, t_from_r, P_FLOOR};
use proptest::prelude::*;

const TABLE: &str = include_str!("oracles/pvalue_table.tsv");
const TABLE_LARGE_DF: &str = include_str!("oracles/pvalue_table_large_df.tsv");

fn parse(text: &str) -> Vec<(f64, f64, f64)> {
    text.lines()
        .skip(1)
        .map(|l| {
            let f: Vec<f64> = l.split('\t').map(|v| v.parse().unwrap()).collect();
            (f[0], f[1], f[2])
        })
        .collect()
}

#[test]
fn matches_high_precision_table() {
    let rows = parse(TABLE);
    assert_eq!(rows.len(), 35);
    for (df, t, expected) in rows {
        for sign in [1.0, -1.0] {
            let p = p_from_t(sign * t, df).unwrap();
            let rel = (p - expected).abs() / expected;
            assert!(rel <= 1e-10, "df={df} t={t}: {p} vs {expected} (rel {rel:e})");
        }
    }
}

#[test]
fn large_df_matches_high_precision_table() {
    let rows = parse(TABLE_LARGE_DF);
    assert_eq!(rows.len(), 24);
    for (df, t, expected) in rows {
        let p = p_from_t(t, df).unwrap();
        let rel = (p - expected).abs() / expected;
        assert!(rel <= 1e-12, "df={df} t={t}: {p} vs {expected} (rel {rel:e})");
    }
}

#[test]
fn closed_forms_for_one_and_two_df() {
    for t in [0.0f64, 0.5, 1.0, 2.0, 5.0, 10.0, 30.0] {
        let one = 2.0 / PI * (1.0 / t).atan();
        let s = (t * t + 2.0).sqrt();
        let two = 2.0 / (s * (s + t));
        let p1 = p_from_t(t, 1.0).unwrap();
        let p2 = p_from_t(t, 2.0).unwrap();
        assert!((p1 - one).abs() <= 1e-14 * one, "df=1 t={t}: {p1} vs {one}");
        assert!((p2 - two).abs() <= 1e-14 * two, "df=2 t={t}: {p2} vs {two}");
    }
}

#[test]
fn large_df_approaches_normal_tail() {
    // 2·Φ(−2) and 2·Φ(−5)
    let p = p_from_t(2.0, 1e9).unwrap();
    assert!((p - 0.045_500_264_166_313_25).abs() < 1e-15, "{p}");
    let p = p_from_t(5.0, 1e9).unwrap();
    assert!((p - 5.733_031_437_583_878e-7).abs() / 5.733e-7 < 1e-6);
}

#[test]
fn floor_and_log_scale() {
    assert_eq!(p_from_t(f64::INFINITY, 10.0).unwrap(), P_FLOOR);
    assert_eq!(p_from_t(1e200, 10.0).unwrap(), P_FLOOR);
    let nlp = neg_log10_p_from_t(30.0, 100.0).unwrap();
    assert!((nlp - 51.076_738_746_818_71).abs() < 1e-9, "{nlp}");
}

proptest! {
    #[test]
    fn p_in_unit_interval_and_symmetric(t in -60f64..60.0, df in 1f64..1e5) {
        let p = p_from_t(t, df).unwrap();
        prop_assert!(p > 0.0 && p <= 1.0);
        prop_assert_eq!(p, p_from_t(-t, df).unwrap());
    }

    #[test]
    fn p_decreases_in_abs_t(a in 0f64..20.0, gap in 1e-3f64..5.0, df in 1f64..1e4) {
        prop_assert!(p_from_t(a + gap, df).unwrap() < p_from_t(a, df).unwrap());
    }

    #[test]
    fn t_increases_in_abs_r(a in 0f64..0.99, gap in 1e-6f64..0.009, df in 1f64..1e4) {
        prop_assert!(t_from_r(a + gap, df) > t_from_r(a, df));
        prop_assert_eq!(t_from_r(-a, df), -t_from_r(a, df));
    }
}
