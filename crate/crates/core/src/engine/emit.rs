//! Result records and the three output sinks.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::genotype_io::{CountedAllele, MarkerRecord};
use crate::kernel::{MarkerQc, Precision};

pub const TSV_HEADER: &str = "CHR\tID\tPOS\tA1\tA2\tAF\tN_MISS\tN\tDF\tR\tT\tP\tPHENO";
pub const MARKERS_HEADER: &str = "CHR\tID\tPOS\tA1\tA2\tAF\tN_MISS";
pub const FULL_MAGIC: &[u8; 16] = b"PANELGWAS-FULL\0\0";
pub const FULL_VERSION: u32 = 1;
pub const FULL_HEADER_BYTES: u64 = 16 + 4 + 8 + 8 + 4;

/// One (marker, phenotype) association. A1 is the counted allele.
#[derive(Debug, Clone, PartialEq)]
pub struct AssocRecord {
    pub chrom: String,
    pub id: String,
    pub pos: u64,
    pub counted_allele: String,
    pub other_allele: String,
    pub allele_frequency: f64,
    pub missing_count: usize,
    pub n: usize,
    pub df: f64,
    pub r: f64,
    pub t: f64,
    pub p: f64,
    pub phenotype: String,
}

impl AssocRecord {
    pub fn parse_tsv_line(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 13 {
            return Err(Error::Format {
                path: PathBuf::new(),
                reason: format!("expected 13 fields, found {}: {line:?}", f.len()),
            });
        }
        let bad = |what: &str, v: &str| Error::Format { path: PathBuf::new(), reason: format!("bad {what} {v:?}") };
        let float = |i: usize, what: &str| f[i].parse::<f64>().map_err(|_| bad(what, f[i]));
        let int = |i: usize, what: &str| f[i].parse::<u64>().map_err(|_| bad(what, f[i]));
        Ok(AssocRecord {
            chrom: f[0].to_string(),
            id: f[1].to_string(),
            pos: int(2, "POS")?,
            counted_allele: f[3].to_string(),
            other_allele: f[4].to_string(),
            allele_frequency: float(5, "AF")?,
            missing_count: int(6, "N_MISS")? as usize,
            n: int(7, "N")? as usize,
            df: float(8, "DF")?,
            r: float(9, "R")?,
            t: float(10, "T")?,
            p: float(11, "P")?,
            phenotype: f[12].to_string(),
        })
    }

    pub fn write_tsv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{:?}\t{}\t{}\t{}\t{:?}\t{:?}\t{:?}\t{}",
            self.chrom,
            self.id,
            self.pos,
            self.counted_allele,
            self.other_allele,
            self.allele_frequency,
            self.missing_count,
            self.n,
            self.df,
            self.r,
            self.t,
            self.p,
            self.phenotype
        )
    }
}

/// Reads a THRESHOLD/TOPK result file.
pub fn read_assoc_tsv(path: &Path) -> Result<Vec<AssocRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header =
        lines.next().ok_or_else(|| Error::format(path, "empty result file"))?.map_err(|e| Error::io(path, e))?;
    if header != TSV_HEADER {
        return Err(Error::format(path, format!("unexpected header {header:?}")));
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let rec = AssocRecord::parse_tsv_line(&line).map_err(|e| match e {
            Error::Format { reason, .. } => Error::format(path, format!("line {}: {reason}", i + 2)),
            other => other,
        })?;
        records.push(rec);
    }
    Ok(records)
}

/// Scan-wide facts every sink needs.
#[derive(Debug, Clone)]
pub struct ScanContext {
    /// Names of the phenotype columns present in each batch's statistics.
    pub phenotype_names: Vec<String>,
    pub n_samples: usize,
    pub df: f64,
    pub counted_allele: CountedAllele,
    pub precision: Precision,
}

/// Statistics for one batch, rows in marker order. Skipped markers keep
/// their rows (zeros) and are ignored by sinks.
#[derive(Debug, Clone)]
pub struct ScoredBatch {
    pub markers: Vec<MarkerRecord>,
    pub qc: Vec<MarkerQc>,
    pub r: Array2<f64>,
    pub t: Array2<f64>,
    /// NaN where the p-value was not needed.
    pub p: Array2<f64>,
}

impl ScoredBatch {
    pub fn record(&self, ctx: &ScanContext, i: usize, j: usize) -> AssocRecord {
        let m = &self.markers[i];
        let qc = &self.qc[i];
        let (a1, a2) = m.alleles_for(ctx.counted_allele);
        AssocRecord {
            chrom: m.chrom.clone(),
            id: m.id.clone(),
            pos: m.pos,
            counted_allele: a1.to_string(),
            other_allele: a2.to_string(),
            allele_frequency: qc.allele_frequency,
            missing_count: qc.missing_count,
            n: ctx.n_samples,
            df: ctx.df,
            r: self.r[[i, j]],
            t: self.t[[i, j]],
            p: self.p[[i, j]],
            phenotype: ctx.phenotype_names[j].clone(),
        }
    }

    fn tested_rows(&self) -> impl Iterator<Item = usize> + '_ {
        self.qc.iter().enumerate().filter(|(_, q)| q.skip.is_none()).map(|(i, _)| i)
    }
}

/// Which p-values a sink needs the workers to compute.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PValueNeed {
    None,
    All,
    /// Only pairs that can reach `p ≤ threshold`.
    AtMost(f64),
}

pub trait ResultSink {
    fn p_values(&self) -> PValueNeed;
    fn begin(&mut self, ctx: &ScanContext) -> Result<()>;
    /// Consumes one batch in source order; returns records written now.
    fn write_batch(&mut self, ctx: &ScanContext, batch: &ScoredBatch) -> Result<usize>;
    /// Flushes; returns records written at the end.
    fn finish(&mut self, ctx: &ScanContext) -> Result<usize>;
}

fn write_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

/// Streams every pair with `p ≤ threshold`.
pub struct ThresholdSink {
    path: PathBuf,
    out: BufWriter<File>,
    p_threshold: f64,
}

impl ThresholdSink {
    pub fn create(path: &Path, p_threshold: f64) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(ThresholdSink { path: path.to_path_buf(), out: BufWriter::new(file), p_threshold })
    }
}

impl ResultSink for ThresholdSink {
    fn p_values(&self) -> PValueNeed {
        PValueNeed::AtMost(self.p_threshold)
    }

    fn begin(&mut self, _ctx: &ScanContext) -> Result<()> {
        writeln!(self.out, "{TSV_HEADER}").map_err(write_err(&self.path))
    }

    fn write_batch(&mut self, ctx: &ScanContext, batch: &ScoredBatch) -> Result<usize> {
        let mut written = 0;
        for i in batch.tested_rows() {
            for (j, &p) in batch.p.row(i).iter().enumerate() {
                if p <= self.p_threshold {
                    batch.record(ctx, i, j).write_tsv(&mut self.out).map_err(write_err(&self.path))?;
                    written += 1;
                }
            }
        }
        Ok(written)
    }

    fn finish(&mut self, _ctx: &ScanContext) -> Result<usize> {
        self.out.flush().map_err(write_err(&self.path))?;
        Ok(0)
    }
}

struct Ranked {
    p: f64,
    source_index: usize,
    record: AssocRecord,
}

impl Ranked {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.p.total_cmp(&other.p).then(self.source_index.cmp(&other.source_index))
    }
}

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.key_cmp(other) == Ordering::Equal
    }
}

impl Eq for Ranked {}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key_cmp(other)
    }
}

/// Keeps the `k` smallest p-values per phenotype, ties broken by marker order.
pub struct TopKSink {
    path: PathBuf,
    out: BufWriter<File>,
    k: usize,
    heaps: Vec<BinaryHeap<Ranked>>,
}

impl TopKSink {
    pub fn create(path: &Path, k: usize) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(TopKSink { path: path.to_path_buf(), out: BufWriter::new(file), k, heaps: Vec::new() })
    }
}

impl ResultSink for TopKSink {
    fn p_values(&self) -> PValueNeed {
        PValueNeed::All
    }

    fn begin(&mut self, ctx: &ScanContext) -> Result<()> {
        self.heaps = (0..ctx.phenotype_names.len()).map(|_| BinaryHeap::with_capacity(self.k + 1)).collect();
        writeln!(self.out, "{TSV_HEADER}").map_err(write_err(&self.path))
    }

    fn write_batch(&mut self, ctx: &ScanContext, batch: &ScoredBatch) -> Result<usize> {
        for i in batch.tested_rows() {
            let source_index = batch.markers[i].source_index;
            for (j, heap) in self.heaps.iter_mut().enumerate() {
                let p = batch.p[[i, j]];
                if heap.len() == self.k {
                    let worst = heap.peek().expect("k ≥ 1");
                    let beats = p.total_cmp(&worst.p).then(source_index.cmp(&worst.source_index)).is_lt();
                    if !beats {
                        continue;
                    }
                    heap.pop();
                }
                heap.push(Ranked { p, source_index, record: batch.record(ctx, i, j) });
            }
        }
        Ok(0)
    }

    fn finish(&mut self, _ctx: &ScanContext) -> Result<usize> {
        let mut written = 0;
        for heap in std::mem::take(&mut self.heaps) {
            for ranked in heap.into_sorted_vec() {
                ranked.record.write_tsv(&mut self.out).map_err(write_err(&self.path))?;
                written += 1;
            }
        }
        self.out.flush().map_err(write_err(&self.path))?;
        Ok(written)
    }
}

/// Dense little-endian t matrix over tested markers and active phenotypes,
/// with marker and phenotype sidecars.
pub struct FullSink {
    bin_path: PathBuf,
    bin: BufWriter<File>,
    markers_path: PathBuf,
    markers: BufWriter<File>,
    phenotypes_path: PathBuf,
    rows: u64,
}

impl FullSink {
    pub fn create(bin_path: &Path, markers_path: &Path, phenotypes_path: &Path) -> Result<Self> {
        let bin = File::create(bin_path).map_err(|e| Error::io(bin_path, e))?;
        let markers = File::create(markers_path).map_err(|e| Error::io(markers_path, e))?;
        Ok(FullSink {
            bin_path: bin_path.to_path_buf(),
            bin: BufWriter::new(bin),
            markers_path: markers_path.to_path_buf(),
            markers: BufWriter::new(markers),
            phenotypes_path: phenotypes_path.to_path_buf(),
            rows: 0,
        })
    }
}

impl ResultSink for FullSink {
    fn p_values(&self) -> PValueNeed {
        PValueNeed::None
    }

    fn begin(&mut self, ctx: &ScanContext) -> Result<()> {
        let element = ctx.precision.element_bytes() as u32;
        let mut header = Vec::with_capacity(FULL_HEADER_BYTES as usize);
        header.extend_from_slice(FULL_MAGIC);
        header.extend_from_slice(&FULL_VERSION.to_le_bytes());
        header.extend_from_slice(&0u64.to_le_bytes());
        header.extend_from_slice(&(ctx.phenotype_names.len() as u64).to_le_bytes());
        header.extend_from_slice(&element.to_le_bytes());
        self.bin.write_all(&header).map_err(write_err(&self.bin_path))?;
        writeln!(self.markers, "{MARKERS_HEADER}").map_err(write_err(&self.markers_path))?;
        let mut names = String::new();
        for name in &ctx.phenotype_names {
            names.push_str(name);
            names.push('\n');
        }
        std::fs::write(&self.phenotypes_path, names).map_err(write_err(&self.phenotypes_path))
    }

    fn write_batch(&mut self, ctx: &ScanContext, batch: &ScoredBatch) -> Result<usize> {
        let mut written = 0;
        let mut buf = Vec::with_capacity(batch.t.ncols() * ctx.precision.element_bytes());
        for i in batch.tested_rows() {
            buf.clear();
            match ctx.precision {
                Precision::F32StoreF64Acc => {
                    batch.t.row(i).iter().for_each(|&t| buf.extend_from_slice(&(t as f32).to_le_bytes()))
                }
                Precision::F64 => batch.t.row(i).iter().for_each(|&t| buf.extend_from_slice(&t.to_le_bytes())),
            }
            self.bin.write_all(&buf).map_err(write_err(&self.bin_path))?;
            let m = &batch.markers[i];
            let qc = &batch.qc[i];
            let (a1, a2) = m.alleles_for(ctx.counted_allele);
            writeln!(
                self.markers,
                "{}\t{}\t{}\t{a1}\t{a2}\t{:?}\t{}",
                m.chrom, m.id, m.pos, qc.allele_frequency, qc.missing_count
            )
            .map_err(write_err(&self.markers_path))?;
            self.rows += 1;
            written += batch.t.ncols();
        }
        Ok(written)
    }

    fn finish(&mut self, _ctx: &ScanContext) -> Result<usize> {
        self.markers.flush().map_err(write_err(&self.markers_path))?;
        self.bin.flush().map_err(write_err(&self.bin_path))?;
        let file = self.bin.get_mut();
        file.seek(SeekFrom::Start(20)).map_err(write_err(&self.bin_path))?;
        file.write_all(&self.rows.to_le_bytes()).map_err(write_err(&self.bin_path))?;
        file.flush().map_err(write_err(&self.bin_path))?;
        Ok(0)
    }
}

/// A decoded FULL output file.
#[derive(Debug, Clone, PartialEq)]
pub struct FullMatrix {
    pub element_bytes: u32,
    pub t: Array2<f64>,
}

pub fn read_full_matrix(path: &Path) -> Result<FullMatrix> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < FULL_HEADER_BYTES as usize || &bytes[..16] != FULL_MAGIC {
        return Err(Error::format(path, "not a FULL result matrix"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let version = u32_at(16);
    if version != FULL_VERSION {
        return Err(Error::format(path, format!("unsupported version {version}")));
    }
    let (m, p, element_bytes) = (u64_at(20) as usize, u64_at(28) as usize, u32_at(36));
    let body = &bytes[FULL_HEADER_BYTES as usize..];
    if !matches!(element_bytes, 4 | 8) || body.len() != m * p * element_bytes as usize {
        return Err(Error::format(path, format!("{} payload bytes for {m} x {p} x {element_bytes}", body.len())));
    }
    let values: Vec<f64> = match element_bytes {
        4 => body.chunks_exact(4).map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap()))).collect(),
        _ => body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(),
    };
    let t = Array2::from_shape_vec((m, p), values).map_err(|e| Error::Internal(e.to_string()))?;
    Ok(FullMatrix { element_bytes, t })
}

/// Keeps every tested pair in memory.
#[derive(Debug, Default)]
pub struct CollectSink {
    pub records: Vec<AssocRecord>,
}

impl ResultSink for CollectSink {
    fn p_values(&self) -> PValueNeed {
        PValueNeed::All
    }

    fn begin(&mut self, _ctx: &ScanContext) -> Result<()> {
        Ok(())
    }

    fn write_batch(&mut self, ctx: &ScanContext, batch: &ScoredBatch) -> Result<usize> {
        let before = self.records.len();
        for i in batch.tested_rows() {
            for j in 0..batch.r.ncols() {
                self.records.push(batch.record(ctx, i, j));
            }
        }
        Ok(self.records.len() - before)
    }

    fn finish(&mut self, _ctx: &ScanContext) -> Result<usize> {
        Ok(0)
    }
}
