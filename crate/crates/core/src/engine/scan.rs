use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use crossbeam_channel::{bounded, unbounded};
use ndarray::Array2;
use serde::Serialize;

use super::config::{OutputMode, ScanConfig};
use super::emit::{
    FullSink, PValueNeed, ResultSink, ScanContext, ScoredBatch, ThresholdSink, TopKSink, FULL_HEADER_BYTES,
};
use super::panel::{prepare_panel, PreparedPanel};
use super::plan::plan_batches;
use crate::error::{Error, Result};
use crate::genotype_io::{open_genotype_source, read_id_list, GenotypeSource, MarkerRecord, RawBatch};
use crate::kernel::correlate::single_threaded_blas;
use crate::kernel::stats::r_screen_for_threshold;
use crate::kernel::{correlate, is_floored, p_from_t, prepare_genotype_batch, t_from_r, Precision, SkipReason};
use crate::phenotype_io::load_table;

/// Per-scan execution settings for [`scan_source`].
#[derive(Debug, Clone, Copy)]
pub struct ScanOptions {
    pub precision: Precision,
    pub residualize_genotypes: bool,
    pub batch_size: usize,
    pub worker_count: usize,
}

/// Flat key/value record of one scan. Timings are summed over workers.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ScanSummary {
    pub n_markers: usize,
    pub markers_scanned: usize,
    pub markers_skipped_monomorphic: usize,
    pub markers_skipped_all_missing: usize,
    pub markers_skipped_covariate_collinear: usize,
    pub n_samples: usize,
    pub phenotypes_scanned: usize,
    pub phenotypes_skipped: usize,
    pub covariate_rank: usize,
    pub df: f64,
    pub records_emitted: usize,
    pub clamp_count: usize,
    pub p_underflow_count: usize,
    pub batches: usize,
    pub worker_count: usize,
    pub samples_removed: usize,
    pub samples_not_keep_listed: usize,
    pub samples_without_phenotype: usize,
    pub samples_without_covariates: usize,
    pub phenotype_ids_not_in_genotypes: usize,
    pub decode_seconds: f64,
    pub prepare_seconds: f64,
    pub correlate_seconds: f64,
    pub stats_seconds: f64,
    pub emit_seconds: f64,
    pub wall_seconds: f64,
}

impl ScanSummary {
    pub fn markers_skipped(&self) -> usize {
        self.markers_skipped_monomorphic + self.markers_skipped_all_missing + self.markers_skipped_covariate_collinear
    }

    /// Tested (marker, phenotype) pairs.
    pub fn tests(&self) -> usize {
        self.markers_scanned * self.phenotypes_scanned
    }

    /// `key=value` lines in field order.
    pub fn to_key_values(&self) -> Vec<(String, String)> {
        let value = serde_json::to_value(self).expect("plain struct");
        let mut out = Vec::new();
        if let serde_json::Value::Object(map) = value {
            for (k, v) in map {
                out.push((k, v.to_string()));
            }
        }
        out
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("plain struct");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Outcome of [`scan_source`]: the summary plus every skipped marker.
#[derive(Debug, Clone, Default)]
pub struct ScanOutcome {
    pub summary: ScanSummary,
    pub skipped_markers: Vec<(MarkerRecord, SkipReason)>,
}

#[derive(Default)]
struct WorkTimes {
    prepare: Duration,
    correlate: Duration,
    stats: Duration,
}

struct Scored {
    batch: ScoredBatch,
    clamped: usize,
    p_underflow: usize,
    times: WorkTimes,
}

fn score_batch(
    raw: RawBatch,
    panel: &PreparedPanel,
    options: &ScanOptions,
    need: PValueNeed,
    r_screen: f64,
) -> Result<Scored> {
    let mut times = WorkTimes::default();
    let clock = Instant::now();
    let raw = match &panel.genotype_columns {
        Some(columns) => raw.select_samples(columns),
        None => raw,
    };
    let prepared = prepare_genotype_batch(&raw, Some(&panel.basis), options.residualize_genotypes, options.precision);
    times.prepare = clock.elapsed();

    let clock = Instant::now();
    let corr = correlate(&prepared.g, &panel.y)?;
    times.correlate = clock.elapsed();

    let clock = Instant::now();
    let df = panel.df;
    let t = corr.r.mapv(|r| t_from_r(r, df));
    let mut p = Array2::from_elem(t.dim(), f64::NAN);
    let mut p_underflow = 0;
    if need != PValueNeed::None {
        for (i, qc) in prepared.qc.iter().enumerate() {
            if qc.skip.is_some() {
                continue;
            }
            for j in 0..t.ncols() {
                if corr.r[[i, j]].abs() < r_screen {
                    continue;
                }
                let v = p_from_t(t[[i, j]], df)?;
                p_underflow += usize::from(is_floored(v));
                p[[i, j]] = v;
            }
        }
    }
    times.stats = clock.elapsed();

    Ok(Scored {
        batch: ScoredBatch { markers: raw.markers, qc: prepared.qc, r: corr.r, t, p },
        clamped: corr.clamped,
        p_underflow,
        times,
    })
}

/// Streams every marker of `source` through the kernel into `sink`.
///
/// One producer decodes batches in order into a bounded queue, `worker_count`
/// workers score them, and the calling thread emits them in source order.
pub fn scan_source(
    source: &mut dyn GenotypeSource,
    panel: &PreparedPanel,
    options: &ScanOptions,
    sink: &mut dyn ResultSink,
) -> Result<ScanOutcome> {
    let wall = Instant::now();
    if options.batch_size == 0 || options.worker_count == 0 {
        return Err(Error::Config("batch size and worker count must be at least 1".into()));
    }
    let n_markers = source.n_markers();
    let plan = plan_batches(n_markers, options.batch_size);
    let workers = options.worker_count;
    if workers > 1 {
        single_threaded_blas();
    }

    let ctx = ScanContext {
        phenotype_names: panel.active_names().map(str::to_string).collect(),
        n_samples: panel.n_samples(),
        df: panel.df,
        counted_allele: source.counted_allele(),
        precision: options.precision,
    };
    let need = sink.p_values();
    let r_screen = match need {
        PValueNeed::AtMost(threshold) => r_screen_for_threshold(threshold, panel.df)?,
        _ => 0.0,
    };

    let log = &panel.exclusion_log;
    let mut summary = ScanSummary {
        n_markers,
        n_samples: panel.n_samples(),
        phenotypes_scanned: panel.active.len(),
        phenotypes_skipped: panel.skipped.len(),
        covariate_rank: panel.basis.rank(),
        df: panel.df,
        batches: plan.len(),
        worker_count: workers,
        samples_removed: log.remove_listed,
        samples_not_keep_listed: log.not_keep_listed,
        samples_without_phenotype: log.not_in_phenotypes,
        samples_without_covariates: log.not_in_covariates,
        phenotype_ids_not_in_genotypes: log.not_in_genotypes,
        ..ScanSummary::default()
    };
    let mut skipped_markers = Vec::new();

    sink.begin(&ctx)?;
    let in_flight = 3 * workers;
    let mut decode_time = Duration::ZERO;
    let mut work = WorkTimes::default();
    let mut emit_time = Duration::ZERO;

    std::thread::scope(|s| -> Result<()> {
        let (permit_tx, permit_rx) = bounded::<()>(in_flight);
        for _ in 0..in_flight {
            permit_tx.send(()).expect("receiver alive");
        }
        let (work_tx, work_rx) = bounded::<(usize, RawBatch)>(2 * workers);
        let (result_tx, result_rx) = unbounded::<(usize, Result<Scored>)>();

        let producer_results = result_tx.clone();
        let plan_ref = &plan;
        let producer = s.spawn(move || {
            let mut spent = Duration::ZERO;
            for (seq, &(start, count)) in plan_ref.iter().enumerate() {
                if permit_rx.recv().is_err() {
                    break;
                }
                let clock = Instant::now();
                let batch = source.read_marker_batch(start, count);
                spent += clock.elapsed();
                match batch {
                    Ok(batch) => {
                        if work_tx.send((seq, batch)).is_err() {
                            break;
                        }
                    }
                    Err(e) => {
                        let _ = producer_results.send((seq, Err(e)));
                        break;
                    }
                }
            }
            spent
        });

        for _ in 0..workers {
            let work_rx = work_rx.clone();
            let result_tx = result_tx.clone();
            s.spawn(move || {
                for (seq, raw) in work_rx {
                    let scored = score_batch(raw, panel, options, need, r_screen);
                    if result_tx.send((seq, scored)).is_err() {
                        break;
                    }
                }
            });
        }
        drop(work_rx);
        drop(result_tx);

        let mut pending: BTreeMap<usize, Scored> = BTreeMap::new();
        let mut next = 0;
        while next < plan.len() {
            let Ok((seq, scored)) = result_rx.recv() else {
                return Err(Error::Internal("scan pipeline stopped early".into()));
            };
            pending.insert(seq, scored?);
            while let Some(scored) = pending.remove(&next) {
                let clock = Instant::now();
                summary.records_emitted += sink.write_batch(&ctx, &scored.batch)?;
                emit_time += clock.elapsed();
                summary.clamp_count += scored.clamped;
                summary.p_underflow_count += scored.p_underflow;
                work.prepare += scored.times.prepare;
                work.correlate += scored.times.correlate;
                work.stats += scored.times.stats;
                for (marker, qc) in scored.batch.markers.into_iter().zip(&scored.batch.qc) {
                    match qc.skip {
                        None => summary.markers_scanned += 1,
                        Some(reason) => {
                            match reason {
                                SkipReason::Monomorphic => summary.markers_skipped_monomorphic += 1,
                                SkipReason::AllMissing => summary.markers_skipped_all_missing += 1,
                                SkipReason::CovariateCollinear => summary.markers_skipped_covariate_collinear += 1,
                            }
                            skipped_markers.push((marker, reason));
                        }
                    }
                }
                next += 1;
                let _ = permit_tx.send(());
            }
        }
        drop(permit_tx);
        decode_time = producer.join().expect("decode thread panicked");
        Ok(())
    })?;

    let clock = Instant::now();
    summary.records_emitted += sink.finish(&ctx)?;
    emit_time += clock.elapsed();

    summary.decode_seconds = decode_time.as_secs_f64();
    summary.prepare_seconds = work.prepare.as_secs_f64();
    summary.correlate_seconds = work.correlate.as_secs_f64();
    summary.stats_seconds = work.stats.as_secs_f64();
    summary.emit_seconds = emit_time.as_secs_f64();
    summary.wall_seconds = wall.elapsed().as_secs_f64();
    Ok(ScanOutcome { summary, skipped_markers })
}

/// `<prefix><suffix>`, e.g. `out` + `.tsv`.
pub fn output_path(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s: OsString = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Files written by [`run_scan`] for a given output prefix.
#[derive(Debug, Clone)]
pub struct OutputFiles {
    pub results_tsv: PathBuf,
    pub full_bin: PathBuf,
    pub markers_tsv: PathBuf,
    pub phenotypes_txt: PathBuf,
    pub summary_json: PathBuf,
    pub qc_tsv: PathBuf,
}

impl OutputFiles {
    pub fn for_prefix(prefix: &Path) -> Self {
        OutputFiles {
            results_tsv: output_path(prefix, ".tsv"),
            full_bin: output_path(prefix, ".bin"),
            markers_tsv: output_path(prefix, ".markers.tsv"),
            phenotypes_txt: output_path(prefix, ".phenotypes.txt"),
            summary_json: output_path(prefix, ".summary.json"),
            qc_tsv: output_path(prefix, ".qc.tsv"),
        }
    }
}

/// Opens every input named by `config`, runs the scan, and writes results,
/// the summary, and (optionally) the QC sidecar under the output prefix.
pub fn run_scan(config: &ScanConfig) -> Result<ScanSummary> {
    config.validate()?;
    let mut source = open_genotype_source(&config.genotypes)?;
    let phenotypes = load_table(&config.phenotype_path, &config.id_column, config.delimiter)?;
    let covariates =
        config.covariate_path.as_deref().map(|p| load_table(p, &config.id_column, config.delimiter)).transpose()?;
    let keep = config.keep_path.as_deref().map(read_id_list).transpose()?;
    let remove = config.remove_path.as_deref().map(read_id_list).transpose()?;
    let panel = prepare_panel(
        source.sample_ids(),
        &phenotypes,
        covariates.as_ref(),
        keep.as_deref(),
        remove.as_deref(),
        &config.model,
    )?;

    let files = OutputFiles::for_prefix(&config.out);
    if let Some(parent) = config.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut sink: Box<dyn ResultSink> = match config.output_mode {
        OutputMode::Threshold => Box::new(ThresholdSink::create(&files.results_tsv, config.p_threshold)?),
        OutputMode::TopK => Box::new(TopKSink::create(&files.results_tsv, config.top_k)?),
        OutputMode::Full => {
            let projected = FULL_HEADER_BYTES
                + source.n_markers() as u64 * panel.active.len() as u64 * config.model.precision.element_bytes() as u64;
            if projected > config.full_budget_bytes && !config.allow_over_budget {
                return Err(Error::Config(format!(
                    "FULL output would take {projected} bytes, over the {} byte budget",
                    config.full_budget_bytes
                )));
            }
            Box::new(FullSink::create(&files.full_bin, &files.markers_tsv, &files.phenotypes_txt)?)
        }
    };

    let options = ScanOptions {
        precision: config.model.precision,
        residualize_genotypes: config.model.residualize_genotypes,
        batch_size: config.batch_size,
        worker_count: config.worker_count,
    };
    let outcome = scan_source(source.as_mut(), &panel, &options, sink.as_mut())?;

    if config.write_qc {
        write_qc(&files.qc_tsv, &panel, &outcome.skipped_markers)?;
    }
    outcome.summary.write_json(&files.summary_json)?;
    Ok(outcome.summary)
}

fn write_qc(path: &Path, panel: &PreparedPanel, skipped: &[(MarkerRecord, SkipReason)]) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(w, "KIND\tCHR\tID\tPOS\tREASON").map_err(io)?;
    for (m, reason) in skipped {
        writeln!(w, "marker\t{}\t{}\t{}\t{}", m.chrom, m.id, m.pos, reason.as_str()).map_err(io)?;
    }
    for &j in &panel.skipped {
        writeln!(w, "phenotype\t.\t{}\t.\tzero_variance", panel.phenotype_names[j]).map_err(io)?;
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_paths_append_suffix() {
        let f = OutputFiles::for_prefix(Path::new("dir/run.v2"));
        assert_eq!(f.results_tsv, Path::new("dir/run.v2.tsv"));
        assert_eq!(f.summary_json, Path::new("dir/run.v2.summary.json"));
    }

    #[test]
    fn summary_key_values_are_flat() {
        let s = ScanSummary { n_markers: 3, markers_scanned: 2, markers_skipped_monomorphic: 1, ..Default::default() };
        let kv = s.to_key_values();
        assert_eq!(kv[0], ("n_markers".to_string(), "3".to_string()));
        assert_eq!(s.markers_scanned + s.markers_skipped(), s.n_markers);
    }
}
