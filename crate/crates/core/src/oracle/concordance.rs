//! Agreement metrics between two sets of association results.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::reference::OracleRecord;
use crate::engine::AssocRecord;
use crate::error::{Error, Result};

pub const WORST_PAIRS: usize = 10;

/// The fields compared for one (marker, phenotype) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyedResult {
    pub marker_id: String,
    pub phenotype: String,
    pub t: f64,
    pub p: f64,
}

impl From<&AssocRecord> for KeyedResult {
    fn from(r: &AssocRecord) -> Self {
        KeyedResult { marker_id: r.id.clone(), phenotype: r.phenotype.clone(), t: r.t, p: r.p }
    }
}

impl From<&OracleRecord> for KeyedResult {
    fn from(r: &OracleRecord) -> Self {
        KeyedResult { marker_id: r.marker_id.clone(), phenotype: r.phenotype.clone(), t: r.ols.t, p: r.ols.p }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairDiscrepancy {
    pub marker_id: String,
    pub phenotype: String,
    pub t_engine: f64,
    pub t_oracle: f64,
    pub neg_log10_p_engine: f64,
    pub neg_log10_p_oracle: f64,
}

impl PairDiscrepancy {
    fn abs_dlogp(&self) -> f64 {
        (self.neg_log10_p_engine - self.neg_log10_p_oracle).abs()
    }

    fn abs_dt(&self) -> f64 {
        abs_diff(self.t_engine, self.t_oracle)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcordanceReport {
    pub n_pairs: usize,
    pub pearson_neg_log10_p: f64,
    pub max_abs_dt: f64,
    pub max_abs_d_neg_log10_p: f64,
    pub sign_agreement: f64,
    #[serde(skip)]
    pub worst: Vec<PairDiscrepancy>,
}

/// |a − b| with equal infinities treated as identical.
fn abs_diff(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs()
    }
}

fn neg_log10(p: f64) -> f64 {
    -p.log10()
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 && syy == 0.0 && x == y {
        return 1.0;
    }
    sxy / (sxx * syy).sqrt()
}

/// Compares every engine pair against the oracle. Every engine key must be
/// present in the oracle set; the oracle may hold extra pairs.
pub fn concordance_report(engine: &[KeyedResult], oracle: &[KeyedResult]) -> Result<ConcordanceReport> {
    let mut index: HashMap<(&str, &str), &KeyedResult> = HashMap::with_capacity(oracle.len());
    for r in oracle {
        if index.insert((&r.marker_id, &r.phenotype), r).is_some() {
            return Err(Error::Concordance(format!("duplicate oracle pair ({}, {})", r.marker_id, r.phenotype)));
        }
    }
    let mut pairs = Vec::with_capacity(engine.len());
    for e in engine {
        let o = index.get(&(e.marker_id.as_str(), e.phenotype.as_str())).ok_or_else(|| {
            Error::Concordance(format!("engine pair ({}, {}) has no oracle counterpart", e.marker_id, e.phenotype))
        })?;
        if !(e.p > 0.0 && e.p <= 1.0) || e.t.is_nan() {
            return Err(Error::Concordance(format!(
                "engine pair ({}, {}) has invalid t={} p={}",
                e.marker_id, e.phenotype, e.t, e.p
            )));
        }
        pairs.push(PairDiscrepancy {
            marker_id: e.marker_id.clone(),
            phenotype: e.phenotype.clone(),
            t_engine: e.t,
            t_oracle: o.t,
            neg_log10_p_engine: neg_log10(e.p),
            neg_log10_p_oracle: neg_log10(o.p),
        });
    }
    if pairs.is_empty() {
        return Err(Error::Concordance("no pairs in common".into()));
    }

    let xe: Vec<f64> = pairs.iter().map(|d| d.neg_log10_p_engine).collect();
    let xo: Vec<f64> = pairs.iter().map(|d| d.neg_log10_p_oracle).collect();
    let same_sign =
        pairs.iter().filter(|d| d.t_engine.signum() == d.t_oracle.signum() || d.t_engine == d.t_oracle).count();
    let max_abs_dt = pairs.iter().map(PairDiscrepancy::abs_dt).fold(0.0, f64::max);
    let max_abs_d_neg_log10_p = pairs.iter().map(PairDiscrepancy::abs_dlogp).fold(0.0, f64::max);

    let mut worst = pairs.clone();
    worst.sort_by(|a, b| b.abs_dlogp().total_cmp(&a.abs_dlogp()).then(b.abs_dt().total_cmp(&a.abs_dt())));
    worst.truncate(WORST_PAIRS);

    Ok(ConcordanceReport {
        n_pairs: pairs.len(),
        pearson_neg_log10_p: pearson(&xe, &xo),
        max_abs_dt,
        max_abs_d_neg_log10_p,
        sign_agreement: same_sign as f64 / pairs.len() as f64,
        worst,
    })
}

impl ConcordanceReport {
    pub fn to_key_values(&self) -> Vec<(&'static str, String)> {
        vec![
            ("n_pairs", self.n_pairs.to_string()),
            ("pearson_neg_log10_p", self.pearson_neg_log10_p.to_string()),
            ("max_abs_dt", self.max_abs_dt.to_string()),
            ("max_abs_d_neg_log10_p", self.max_abs_d_neg_log10_p.to_string()),
            ("sign_agreement", self.sign_agreement.to_string()),
        ]
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.to_key_values() {
            let _ = writeln!(s, "{k}={v}");
        }
        let _ = writeln!(s, "worst pairs (by |d -log10 p|):");
        let _ = writeln!(s, "  ID\tPHENO\tT_ENGINE\tT_ORACLE\tNLP_ENGINE\tNLP_ORACLE");
        for d in &self.worst {
            let _ = writeln!(
                s,
                "  {}\t{}\t{}\t{}\t{}\t{}",
                d.marker_id, d.phenotype, d.t_engine, d.t_oracle, d.neg_log10_p_engine, d.neg_log10_p_oracle
            );
        }
        s
    }

    /// Flat key/value metrics file, one `key=value` per line.
    pub fn write_metrics(&self, path: &Path) -> Result<()> {
        let mut s = String::new();
        for (k, v) in self.to_key_values() {
            let _ = writeln!(s, "{k}={v}");
        }
        std::fs::write(path, s).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kr(id: &str, ph: &str, t: f64, p: f64) -> KeyedResult {
        KeyedResult { marker_id: id.into(), phenotype: ph.into(), t, p }
    }

    #[test]
    fn identity() {
        let a = vec![kr("m1", "y", 1.5, 0.2), kr("m2", "y", -3.0, 0.004), kr("m3", "y", 0.1, 0.9)];
        let r = concordance_report(&a, &a).unwrap();
        assert_eq!(r.pearson_neg_log10_p, 1.0);
        assert_eq!(r.max_abs_dt, 0.0);
        assert_eq!(r.sign_agreement, 1.0);
        assert_eq!(r.n_pairs, 3);
    }

    #[test]
    fn missing_oracle_pair_is_error() {
        let e = vec![kr("m1", "y", 1.0, 0.3)];
        let o = vec![kr("m2", "y", 1.0, 0.3)];
        assert!(matches!(concordance_report(&e, &o), Err(Error::Concordance(_))));
        assert!(matches!(concordance_report(&[], &o), Err(Error::Concordance(_))));
    }

    #[test]
    fn worst_pairs_sorted() {
        let o: Vec<_> = (0..20).map(|i| kr(&format!("m{i}"), "y", 1.0, 0.1)).collect();
        let e: Vec<_> = (0..20).map(|i| kr(&format!("m{i}"), "y", 1.0, 0.1 / (1.0 + i as f64))).collect();
        let r = concordance_report(&e, &o).unwrap();
        assert_eq!(r.worst.len(), WORST_PAIRS);
        assert_eq!(r.worst[0].marker_id, "m19");
        assert!(r.to_text().contains("pearson_neg_log10_p="));
    }
}
