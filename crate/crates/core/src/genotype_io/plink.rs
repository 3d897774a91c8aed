//! PLINK 1 binary filesets (.bed/.bim/.fam), SNP-major only.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Lines, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::{
    check_batch_request, ensure_unique_ids, warn_if_same_alleles, CountedAllele, GenotypeFormat, GenotypeSource,
    MarkerRecord, RawBatch, MISSING,
};
use crate::error::{Error, Result};

pub const BED_MAGIC: [u8; 2] = [0x6C, 0x1B];
pub const BED_SNP_MAJOR: u8 = 0x01;
const BED_HEADER_LEN: u64 = 3;

/// Dosage of allele1 for each 2-bit code, indexed by the code value.
const CODE_DOSAGE: [f32; 4] = [2.0, MISSING, 1.0, 0.0];

const fn bytes_per_marker(n_samples: usize) -> usize {
    n_samples.div_ceil(4)
}

/// Decodes one SNP-major marker row. Samples are packed four per byte, first
/// sample in the lowest bit pair; padding past `n_samples` is ignored.
pub fn decode_bed_codes(packed: &[u8], n_samples: usize) -> Vec<f32> {
    let mut out = vec![0.0; n_samples];
    decode_bed_codes_into(packed, &mut out);
    out
}

/// Like [`decode_bed_codes`] but writes into `out` (its length is the sample
/// count) and returns the number of missing calls.
pub fn decode_bed_codes_into(packed: &[u8], out: &mut [f32]) -> usize {
    debug_assert!(packed.len() >= bytes_per_marker(out.len()));
    let mut missing = 0;
    for (chunk, &byte) in out.chunks_mut(4).zip(packed) {
        for (k, slot) in chunk.iter_mut().enumerate() {
            let code = (byte >> (2 * k)) & 0b11;
            missing += usize::from(code == 0b01);
            *slot = CODE_DOSAGE[code as usize];
        }
    }
    missing
}

/// Packs hard-call dosages (0, 1, 2 or missing) into SNP-major bytes.
pub fn encode_bed_codes(dosages: &[f32]) -> Result<Vec<u8>> {
    let mut packed = vec![0u8; bytes_per_marker(dosages.len())];
    for (i, &d) in dosages.iter().enumerate() {
        let code: u8 = if d.is_nan() {
            0b01
        } else if d == 2.0 {
            0b00
        } else if d == 1.0 {
            0b10
        } else if d == 0.0 {
            0b11
        } else {
            return Err(Error::Dimension(format!("dosage {d} is not a hard call; cannot encode as .bed")));
        };
        packed[i / 4] |= code << (2 * (i % 4));
    }
    Ok(packed)
}

pub struct PlinkSource {
    bed_path: PathBuf,
    bim_path: PathBuf,
    bed: BufReader<File>,
    bim: Lines<BufReader<File>>,
    bim_cursor: usize,
    sample_ids: Vec<String>,
    n_markers: usize,
    row_buf: Vec<u8>,
}

impl PlinkSource {
    pub fn open(bed_path: &Path, bim_path: &Path, fam_path: &Path) -> Result<Self> {
        let sample_ids = read_fam(fam_path)?;
        ensure_unique_ids(&sample_ids, &fam_path.display().to_string())?;
        let n_markers = count_data_lines(bim_path)?;

        let mut bed = File::open(bed_path).map_err(|e| Error::io(bed_path, e))?;
        let mut header = [0u8; 3];
        bed.read_exact(&mut header).map_err(|_| Error::format(bed_path, "file shorter than the 3-byte header"))?;
        if header[..2] != BED_MAGIC {
            return Err(Error::format(bed_path, format!("bad magic bytes {:#04x} {:#04x}", header[0], header[1])));
        }
        match header[2] {
            BED_SNP_MAJOR => {}
            0x00 => return Err(Error::format(bed_path, "unsupported sample-major layout")),
            other => return Err(Error::format(bed_path, format!("bad mode byte {other:#04x}"))),
        }

        let bpm = bytes_per_marker(sample_ids.len()) as u64;
        let actual = bed.metadata().map_err(|e| Error::io(bed_path, e))?.len();
        let expected = BED_HEADER_LEN + bpm * n_markers as u64;
        if actual != expected {
            return Err(Error::format(
                bed_path,
                format!(
                    "size {actual} bytes inconsistent with {} samples (.fam) x {n_markers} markers (.bim); expected {expected}",
                    sample_ids.len()
                ),
            ));
        }

        Ok(PlinkSource {
            bed_path: bed_path.to_path_buf(),
            bim_path: bim_path.to_path_buf(),
            bed: BufReader::new(bed),
            bim: open_lines(bim_path)?,
            bim_cursor: 0,
            sample_ids,
            n_markers,
            row_buf: vec![0; bpm as usize],
        })
    }

    fn next_marker(&mut self) -> Result<MarkerRecord> {
        loop {
            let line = match self.bim.next() {
                Some(line) => line.map_err(|e| Error::io(&self.bim_path, e))?,
                None => return Err(Error::format(&self.bim_path, "fewer marker lines than counted at open")),
            };
            if line.trim().is_empty() {
                continue;
            }
            let record = parse_bim_line(&line, self.bim_cursor).map_err(|reason| {
                Error::format(&self.bim_path, format!("line for marker {}: {reason}", self.bim_cursor))
            })?;
            self.bim_cursor += 1;
            return Ok(record);
        }
    }

    fn seek_bim(&mut self, start: usize) -> Result<()> {
        if start < self.bim_cursor {
            self.bim = open_lines(&self.bim_path)?;
            self.bim_cursor = 0;
        }
        while self.bim_cursor < start {
            self.next_marker()?;
        }
        Ok(())
    }
}

impl GenotypeSource for PlinkSource {
    fn format(&self) -> GenotypeFormat {
        GenotypeFormat::PlinkBed
    }

    fn n_samples(&self) -> usize {
        self.sample_ids.len()
    }

    fn n_markers(&self) -> usize {
        self.n_markers
    }

    fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    fn counted_allele(&self) -> CountedAllele {
        CountedAllele::Allele1
    }

    fn read_marker_batch(&mut self, start: usize, count: usize) -> Result<RawBatch> {
        let count = check_batch_request(start, count, self.n_markers)?;
        let n = self.sample_ids.len();
        let bpm = self.row_buf.len();

        self.seek_bim(start)?;
        let mut markers = Vec::with_capacity(count);
        for _ in 0..count {
            let marker = self.next_marker()?;
            warn_if_same_alleles(&marker);
            markers.push(marker);
        }

        self.bed
            .seek(SeekFrom::Start(BED_HEADER_LEN + (start * bpm) as u64))
            .map_err(|e| Error::io(&self.bed_path, e))?;
        let mut dosages = Array2::<f32>::zeros((count, n));
        let mut missing_count = Vec::with_capacity(count);
        for (m, mut row) in dosages.rows_mut().into_iter().enumerate() {
            self.bed
                .read_exact(&mut self.row_buf)
                .map_err(|e| Error::format(&self.bed_path, format!("truncated at marker {}: {e}", start + m)))?;
            let row = row.as_slice_mut().expect("standard layout");
            missing_count.push(decode_bed_codes_into(&self.row_buf, row));
        }
        Ok(RawBatch { markers, dosages, missing_count })
    }
}

fn open_lines(path: &Path) -> Result<Lines<BufReader<File>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(BufReader::new(file).lines())
}

fn count_data_lines(path: &Path) -> Result<usize> {
    let mut n = 0;
    for line in open_lines(path)? {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            n += 1;
        }
    }
    Ok(n)
}

fn read_fam(path: &Path) -> Result<Vec<String>> {
    let mut ids = Vec::new();
    for (lineno, line) in open_lines(path)?.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(Error::format(
                path,
                format!("line {}: expected 6 columns, found {}", lineno + 1, fields.len()),
            ));
        }
        ids.push(fields[1].to_string());
    }
    Ok(ids)
}

fn parse_bim_line(line: &str, source_index: usize) -> std::result::Result<MarkerRecord, String> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 6 {
        return Err(format!("expected 6 columns, found {}", fields.len()));
    }
    let pos = fields[3].parse::<u64>().map_err(|_| format!("bad position '{}'", fields[3]))?;
    Ok(MarkerRecord {
        chrom: fields[0].to_string(),
        id: fields[1].to_string(),
        pos,
        allele1: fields[4].to_string(),
        allele2: fields[5].to_string(),
        source_index,
    })
}

/// Streaming writer for a PLINK fileset `prefix.{bed,bim,fam}`.
pub struct PlinkWriter {
    bed: BufWriter<File>,
    bim: BufWriter<File>,
    bed_path: PathBuf,
    bim_path: PathBuf,
    n_samples: usize,
}

impl PlinkWriter {
    pub fn create(prefix: &Path, sample_ids: &[String]) -> Result<Self> {
        let path = |ext: &str| {
            let mut p = prefix.as_os_str().to_owned();
            p.push(ext);
            PathBuf::from(p)
        };
        let (bed_path, bim_path, fam_path) = (path(".bed"), path(".bim"), path(".fam"));

        let create = |p: &Path| File::create(p).map(BufWriter::new).map_err(|e| Error::io(p, e));
        let mut fam = create(&fam_path)?;
        for id in sample_ids {
            writeln!(fam, "{id}\t{id}\t0\t0\t0\t-9").map_err(|e| Error::io(&fam_path, e))?;
        }
        fam.flush().map_err(|e| Error::io(&fam_path, e))?;

        let mut bed = create(&bed_path)?;
        bed.write_all(&[BED_MAGIC[0], BED_MAGIC[1], BED_SNP_MAJOR]).map_err(|e| Error::io(&bed_path, e))?;
        let bim = create(&bim_path)?;
        Ok(PlinkWriter { bed, bim, bed_path, bim_path, n_samples: sample_ids.len() })
    }

    pub fn write_marker(&mut self, marker: &MarkerRecord, dosages: &[f32]) -> Result<()> {
        if dosages.len() != self.n_samples {
            return Err(Error::Dimension(format!(
                "marker {} has {} dosages for {} samples",
                marker.id,
                dosages.len(),
                self.n_samples
            )));
        }
        writeln!(
            self.bim,
            "{}\t{}\t0\t{}\t{}\t{}",
            marker.chrom, marker.id, marker.pos, marker.allele1, marker.allele2
        )
        .map_err(|e| Error::io(&self.bim_path, e))?;
        self.bed.write_all(&encode_bed_codes(dosages)?).map_err(|e| Error::io(&self.bed_path, e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.bim.flush().map_err(|e| Error::io(&self.bim_path, e))?;
        self.bed.flush().map_err(|e| Error::io(&self.bed_path, e))
    }
}
