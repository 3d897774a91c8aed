//! Per-marker reference scan with full least squares.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use super::ols::{ols_panel, ols_single, OlsResult};
use crate::engine::plan_batches;
use crate::error::{Error, Result};
use crate::genotype_io::GenotypeSource;
use crate::phenotype_io::{align_samples, build_covariates, build_panel, MissingPolicy, Table};

pub const ORACLE_HEADER: &str = "ID\tPHENO\tBETA\tSE\tT\tP\tDF";

#[derive(Debug, Clone, PartialEq)]
pub struct OracleRecord {
    pub marker_id: String,
    pub phenotype: String,
    pub ols: OlsResult,
}

/// How the reference scan loops over phenotypes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleLoop {
    /// One design factorization per marker shared by all phenotypes.
    SharedDesign,
    /// A fresh regression per (marker, phenotype), as a per-trait tool would run.
    PerTrait,
}

/// Regresses every phenotype on `1 + C + g` for every marker, over the same
/// samples the engine would keep. Missing dosages take the marker's
/// non-missing mean. Markers whose design is rank deficient are left out.
pub fn reference_scan(
    source: &mut dyn GenotypeSource,
    phenotypes: &Table,
    covariates: Option<&Table>,
    keep: Option<&[String]>,
    remove: Option<&[String]>,
    missing_policy: MissingPolicy,
    looping: OracleLoop,
) -> Result<Vec<OracleRecord>> {
    let alignment = align_samples(source.sample_ids(), phenotypes, covariates, keep, remove)?;
    let panel = build_panel(phenotypes, &alignment, missing_policy)?;
    let c: Option<Array2<f64>> = covariates.map(|t| build_covariates(t, &alignment)).transpose()?;
    let n = alignment.n_kept();

    let mut out = Vec::new();
    for (start, count) in plan_batches(source.n_markers(), 1024) {
        let batch = source.read_marker_batch(start, count)?;
        for (marker, row) in batch.markers.iter().zip(batch.dosages.rows()) {
            let mut g = Array1::<f64>::zeros(n);
            let (mut sum, mut present) = (0.0, 0usize);
            for (k, &col) in alignment.genotype_row_index.iter().enumerate() {
                let d = row[col];
                if !d.is_nan() {
                    g[k] = f64::from(d);
                    sum += g[k];
                    present += 1;
                }
            }
            if present == 0 {
                continue;
            }
            let mean = sum / present as f64;
            for (k, &col) in alignment.genotype_row_index.iter().enumerate() {
                if row[col].is_nan() {
                    g[k] = mean;
                }
            }
            let fits = match looping {
                OracleLoop::SharedDesign => ols_panel(panel.y.view(), g.view(), c.as_ref().map(|c| c.view())),
                OracleLoop::PerTrait => panel
                    .y
                    .columns()
                    .into_iter()
                    .map(|y| ols_single(y, g.view(), c.as_ref().map(|c| c.view())))
                    .collect(),
            };
            let fits = match fits {
                Ok(f) => f,
                Err(Error::RankDeficient(_)) => continue,
                Err(e) => return Err(e),
            };
            for (name, ols) in panel.names.iter().zip(fits) {
                out.push(OracleRecord { marker_id: marker.id.clone(), phenotype: name.clone(), ols });
            }
        }
    }
    Ok(out)
}

pub fn write_oracle_tsv(path: &Path, records: &[OracleRecord]) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(w, "{ORACLE_HEADER}").map_err(io)?;
    for r in records {
        let o = &r.ols;
        writeln!(w, "{}\t{}\t{:?}\t{:?}\t{:?}\t{:?}\t{}", r.marker_id, r.phenotype, o.beta, o.se, o.t, o.p, o.df)
            .map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_oracle_tsv(path: &Path) -> Result<Vec<OracleRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    match lines.next() {
        Some(Ok(h)) if h == ORACLE_HEADER => {}
        _ => return Err(Error::format(path, format!("expected header {ORACLE_HEADER:?}"))),
    }
    let mut out = Vec::new();
    for line in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 7 {
            return Err(Error::format(path, format!("expected 7 fields: {line:?}")));
        }
        let num = |i: usize| f[i].parse::<f64>().map_err(|_| Error::format(path, format!("bad number {:?}", f[i])));
        out.push(OracleRecord {
            marker_id: f[0].to_string(),
            phenotype: f[1].to_string(),
            ols: OlsResult { beta: num(2)?, se: num(3)?, t: num(4)?, p: num(5)?, df: num(6)? },
        });
    }
    Ok(out)
}
