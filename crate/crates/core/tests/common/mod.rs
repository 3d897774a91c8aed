//! Shared builders for integration tests.
#![allow(dead_code)]

use ndarray::Array2;
use panelgwas::engine::{prepare_panel, scan_source, CollectSink, ModelOptions, ScanOptions};
use panelgwas::genotype_io::memory::MemorySource;
use panelgwas::oracle::simulate::{marker_record, phenotype_name, sample_id};
use panelgwas::oracle::{reference_scan, OracleLoop, OracleRecord};
use panelgwas::{AssocRecord, MissingPolicy, Table, MISSING};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Genotypes (M × N), phenotypes (N × P) and optional covariates (N × c).
#[derive(Debug, Clone)]
pub struct Instance {
    pub ids: Vec<String>,
    pub dosages: Array2<f32>,
    pub y: Array2<f64>,
    pub c: Option<Array2<f64>>,
}

impl Instance {
    pub fn random(seed: u64, n: usize, m: usize, p: usize, c: usize, missing_rate: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dosages = Array2::<f32>::zeros((m, n));
        for mut row in dosages.rows_mut() {
            let af: f64 = rng.random_range(0.1..0.5);
            for d in row.iter_mut() {
                *d = if rng.random_bool(missing_rate) {
                    MISSING
                } else {
                    (u8::from(rng.random_bool(af)) + u8::from(rng.random_bool(af))) as f32
                };
            }
        }
        let cov = (c > 0).then(|| Array2::from_shape_fn((n, c), |_| rng.random_range(-1.0..1.0)));
        let mut y = Array2::from_shape_fn((n, p), |_| rng.random_range(-1.0..1.0));
        if let Some(cov) = &cov {
            for j in 0..p {
                let w: Vec<f64> = (0..c).map(|_| rng.random_range(-1.0..1.0)).collect();
                for i in 0..n {
                    y[[i, j]] += (0..c).map(|k| w[k] * cov[[i, k]]).sum::<f64>();
                }
            }
        }
        for j in 0..p.min(m) {
            let beta: f64 = rng.random_range(-0.5..0.5);
            for i in 0..n {
                let d = dosages[[j, i]];
                if !d.is_nan() {
                    y[[i, j]] += beta * f64::from(d);
                }
            }
        }
        Instance { ids: (0..n).map(sample_id).collect(), dosages, y, c: cov }
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn source(&self) -> MemorySource {
        let markers = (0..self.dosages.nrows()).map(marker_record).collect();
        MemorySource::new(self.ids.clone(), markers, self.dosages.clone()).expect("valid instance")
    }

    pub fn phenotype_table(&self) -> Table {
        table(&self.ids, (0..self.y.ncols()).map(phenotype_name).collect(), self.y.clone())
    }

    pub fn covariate_table(&self) -> Option<Table> {
        self.c.as_ref().map(|c| table(&self.ids, (1..=c.ncols()).map(|k| format!("C{k}")).collect(), c.clone()))
    }

    pub fn engine(&self, model: &ModelOptions, batch_size: usize, worker_count: usize) -> Vec<AssocRecord> {
        let cov = self.covariate_table();
        let panel = prepare_panel(&self.ids, &self.phenotype_table(), cov.as_ref(), None, None, model).unwrap();
        let options = ScanOptions {
            precision: model.precision,
            residualize_genotypes: model.residualize_genotypes,
            batch_size,
            worker_count,
        };
        let mut sink = CollectSink::default();
        scan_source(&mut self.source(), &panel, &options, &mut sink).unwrap();
        sink.records
    }

    pub fn oracle(&self) -> Vec<OracleRecord> {
        let cov = self.covariate_table();
        reference_scan(
            &mut self.source(),
            &self.phenotype_table(),
            cov.as_ref(),
            None,
            None,
            MissingPolicy::MeanImpute,
            OracleLoop::SharedDesign,
        )
        .unwrap()
    }
}

pub fn table(ids: &[String], column_names: Vec<String>, values: Array2<f64>) -> Table {
    let missing_count = values.columns().into_iter().map(|c| c.iter().filter(|v| v.is_nan()).count()).collect();
    Table { ids: ids.to_vec(), column_names, values, missing_count }
}

pub fn neg_log10(p: f64) -> f64 {
    -p.log10()
}

/// Largest |Δt| and |Δ(−log10 p)| over engine pairs, matched to the oracle by key.
pub fn max_deltas(engine: &[AssocRecord], oracle: &[OracleRecord]) -> (f64, f64, usize) {
    let index: std::collections::HashMap<(&str, &str), &OracleRecord> =
        oracle.iter().map(|o| ((o.marker_id.as_str(), o.phenotype.as_str()), o)).collect();
    let (mut dt, mut dlp, mut matched) = (0.0f64, 0.0f64, 0);
    for e in engine {
        let o = index[&(e.id.as_str(), e.phenotype.as_str())];
        matched += 1;
        if e.t != o.ols.t {
            dt = dt.max((e.t - o.ols.t).abs());
        }
        dlp = dlp.max((neg_log10(e.p) - neg_log10(o.ols.p)).abs());
    }
    (dt, dlp, matched)
}
