//! BGEN v1.2 reader restricted to layout 2, zlib-compressed blocks, unphased
//! diploid biallelic variants and 8- or 16-bit probabilities.
//!
//! Dosage is the expected count of the second listed allele, `p(het) + 2 p(hom2)`.

use std::fs::File;
use std::io::{BufReader, Read, Seek, SeekFrom};
use std::path::{Path, PathBuf};

use flate2::read::ZlibDecoder;
use ndarray::Array2;

use super::{
    check_batch_request, ensure_unique_ids, read_id_list, warn_if_same_alleles, CountedAllele, GenotypeFormat,
    GenotypeSource, MarkerRecord, RawBatch, MISSING,
};
use crate::error::{Error, Result};

const FLAG_COMPRESSION_MASK: u32 = 0b11;
const FLAG_LAYOUT_SHIFT: u32 = 2;
const FLAG_LAYOUT_MASK: u32 = 0b1111;
const FLAG_SAMPLE_IDS: u32 = 1 << 31;

pub fn bgen_expected_dosage(p0: f64, p1: f64, p2: f64) -> f64 {
    debug_assert!((p0 + p1 + p2 - 1.0).abs() < 1e-3);
    p1 + 2.0 * p2
}

pub struct BgenSource {
    path: PathBuf,
    reader: BufReader<File>,
    sample_ids: Vec<String>,
    n_markers: usize,
    /// Byte offsets of variant blocks discovered so far; `offsets[i]` is variant `i`.
    offsets: Vec<u64>,
    compressed: Vec<u8>,
    block: Vec<u8>,
}

impl BgenSource {
    /// Opens a BGEN file. Sample IDs come from `samples` (newline-delimited)
    /// when given, otherwise from the file's identifier block.
    pub fn open(path: &Path, samples: Option<&Path>) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = BufReader::new(file);
        let fmt = |reason: String| Error::format(path, reason);

        let first_variant = u64::from(read_u32(&mut reader, path)?) + 4;
        let header_len = read_u32(&mut reader, path)?;
        let n_markers = read_u32(&mut reader, path)? as usize;
        let n_samples = read_u32(&mut reader, path)? as usize;
        let mut magic = [0u8; 4];
        read_exact(&mut reader, &mut magic, path)?;
        if &magic != b"bgen" && magic != [0u8; 4] {
            return Err(fmt(format!("bad magic {magic:?}")));
        }
        if header_len < 20 {
            return Err(fmt(format!("header length {header_len} below minimum 20")));
        }
        reader.seek(SeekFrom::Current(i64::from(header_len) - 20)).map_err(|e| Error::io(path, e))?;
        let flags = read_u32(&mut reader, path)?;

        match flags & FLAG_COMPRESSION_MASK {
            1 => {}
            0 => return Err(Error::UnsupportedBgen("uncompressed genotype blocks".into())),
            2 => return Err(Error::UnsupportedBgen("zstd compression".into())),
            c => return Err(Error::UnsupportedBgen(format!("compression code {c}"))),
        }
        let layout = (flags >> FLAG_LAYOUT_SHIFT) & FLAG_LAYOUT_MASK;
        if layout != 2 {
            return Err(Error::UnsupportedBgen(format!("layout {layout}")));
        }

        let embedded = if flags & FLAG_SAMPLE_IDS != 0 {
            reader.seek(SeekFrom::Start(4 + u64::from(header_len))).map_err(|e| Error::io(path, e))?;
            let _block_len = read_u32(&mut reader, path)?;
            let n = read_u32(&mut reader, path)? as usize;
            if n != n_samples {
                return Err(fmt(format!("identifier block lists {n} samples, header says {n_samples}")));
            }
            let mut ids = Vec::with_capacity(n);
            for _ in 0..n {
                ids.push(read_string_u16(&mut reader, path)?);
            }
            Some(ids)
        } else {
            None
        };

        let sample_ids = match (samples, embedded) {
            (Some(sidecar), _) => {
                let ids = read_id_list(sidecar)?;
                if ids.len() != n_samples {
                    return Err(Error::format(
                        sidecar,
                        format!("{} sample IDs for {n_samples} BGEN samples", ids.len()),
                    ));
                }
                ids
            }
            (None, Some(ids)) => ids,
            (None, None) => {
                return Err(fmt("no sample identifier block; supply a sample-ID file".into()));
            }
        };
        ensure_unique_ids(&sample_ids, &path.display().to_string())?;

        Ok(BgenSource {
            path: path.to_path_buf(),
            reader,
            sample_ids,
            n_markers,
            offsets: vec![first_variant],
            compressed: Vec::new(),
            block: Vec::new(),
        })
    }

    /// Positions the reader at variant `index`, walking forward over variant
    /// blocks not yet indexed.
    fn seek_variant(&mut self, index: usize) -> Result<()> {
        while self.offsets.len() <= index {
            let last = self.offsets.len() - 1;
            self.reader.seek(SeekFrom::Start(self.offsets[last])).map_err(|e| Error::io(&self.path, e))?;
            self.read_variant_header(last)?;
            let block_len = read_u32(&mut self.reader, &self.path)?;
            self.reader.seek(SeekFrom::Current(i64::from(block_len))).map_err(|e| Error::io(&self.path, e))?;
            let next = self.reader.stream_position().map_err(|e| Error::io(&self.path, e))?;
            self.offsets.push(next);
        }
        self.reader.seek(SeekFrom::Start(self.offsets[index])).map_err(|e| Error::io(&self.path, e))?;
        Ok(())
    }

    fn read_variant_header(&mut self, source_index: usize) -> Result<MarkerRecord> {
        let r = &mut self.reader;
        let path = self.path.as_path();
        let varid = read_string_u16(r, path)?;
        let rsid = read_string_u16(r, path)?;
        let chrom = read_string_u16(r, path)?;
        let pos = u64::from(read_u32(r, path)?);
        let n_alleles = read_u16(r, path)?;
        if n_alleles != 2 {
            return Err(Error::UnsupportedBgen(format!("multiallelic variant '{rsid}' with {n_alleles} alleles")));
        }
        let allele1 = read_string_u32(r, path)?;
        let allele2 = read_string_u32(r, path)?;
        let id = if rsid.is_empty() || rsid == "." { varid } else { rsid };
        Ok(MarkerRecord { chrom, id, pos, allele1, allele2, source_index })
    }

    /// Reads the genotype block following a variant header into `row`.
    fn read_probabilities(&mut self, marker: &MarkerRecord, row: &mut [f32]) -> Result<usize> {
        let path = self.path.clone();
        let block_len = read_u32(&mut self.reader, &path)? as usize;
        if block_len < 4 {
            return Err(Error::format(&path, format!("variant {}: genotype block too short", marker.id)));
        }
        let unpacked_len = read_u32(&mut self.reader, &path)? as usize;
        self.compressed.resize(block_len - 4, 0);
        read_exact(&mut self.reader, &mut self.compressed, &path)?;
        self.block.clear();
        self.block.reserve(unpacked_len);
        ZlibDecoder::new(self.compressed.as_slice())
            .read_to_end(&mut self.block)
            .map_err(|e| Error::format(&path, format!("variant {}: zlib decompression failed: {e}", marker.id)))?;
        if self.block.len() != unpacked_len {
            return Err(Error::format(
                &path,
                format!("variant {}: decompressed {} bytes, expected {unpacked_len}", marker.id, self.block.len()),
            ));
        }
        decode_layout2(&self.block, row).map_err(|reason| match reason {
            LayoutError::Unsupported(feature) => Error::UnsupportedBgen(feature),
            LayoutError::Malformed(reason) => Error::format(&path, format!("variant {}: {reason}", marker.id)),
        })
    }
}

impl GenotypeSource for BgenSource {
    fn format(&self) -> GenotypeFormat {
        GenotypeFormat::Bgen
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
        CountedAllele::Allele2
    }

    fn read_marker_batch(&mut self, start: usize, count: usize) -> Result<RawBatch> {
        let count = check_batch_request(start, count, self.n_markers)?;
        let mut dosages = Array2::<f32>::zeros((count, self.sample_ids.len()));
        let mut markers = Vec::with_capacity(count);
        let mut missing_count = Vec::with_capacity(count);
        self.seek_variant(start)?;
        for (k, mut row) in dosages.rows_mut().into_iter().enumerate() {
            let index = start + k;
            let marker = self.read_variant_header(index)?;
            warn_if_same_alleles(&marker);
            let row = row.as_slice_mut().expect("standard layout");
            missing_count.push(self.read_probabilities(&marker, row)?);
            markers.push(marker);
            if self.offsets.len() == index + 1 {
                let next = self.reader.stream_position().map_err(|e| Error::io(&self.path, e))?;
                self.offsets.push(next);
            }
        }
        Ok(RawBatch { markers, dosages, missing_count })
    }
}

enum LayoutError {
    Unsupported(String),
    Malformed(String),
}

/// Decodes an uncompressed layout-2 probability block into expected dosages.
fn decode_layout2(block: &[u8], row: &mut [f32]) -> std::result::Result<usize, LayoutError> {
    let malformed = |s: &str| LayoutError::Malformed(s.to_string());
    let n = row.len();
    if block.len() < 10 + n {
        return Err(malformed("probability block shorter than its header"));
    }
    let n_block = u32::from_le_bytes(block[0..4].try_into().unwrap()) as usize;
    if n_block != n {
        return Err(LayoutError::Malformed(format!("block lists {n_block} samples, expected {n}")));
    }
    let n_alleles = u16::from_le_bytes(block[4..6].try_into().unwrap());
    if n_alleles != 2 {
        return Err(LayoutError::Unsupported(format!("{n_alleles} alleles in probability block")));
    }
    let ploidy = &block[8..8 + n];
    let phased = block[8 + n];
    if phased != 0 {
        return Err(LayoutError::Unsupported("phased probabilities".into()));
    }
    let bits = block[9 + n];
    let width = match bits {
        8 => 1,
        16 => 2,
        b => return Err(LayoutError::Unsupported(format!("{b}-bit probability precision"))),
    };
    let data = &block[10 + n..];
    if data.len() != n * 2 * width {
        return Err(LayoutError::Malformed(format!(
            "{} probability bytes for {n} diploid samples at {bits} bits",
            data.len()
        )));
    }
    let scale = f64::from((1u32 << bits) - 1);
    let value = |i: usize| -> f64 {
        match width {
            1 => f64::from(data[i]),
            _ => f64::from(u16::from_le_bytes([data[2 * i], data[2 * i + 1]])),
        }
    };

    let mut missing = 0;
    for (s, slot) in row.iter_mut().enumerate() {
        let flag = ploidy[s];
        if flag & 0x80 != 0 {
            *slot = MISSING;
            missing += 1;
            continue;
        }
        if flag & 0x3F != 2 {
            return Err(LayoutError::Unsupported(format!("ploidy {}", flag & 0x3F)));
        }
        let p0 = value(2 * s) / scale;
        let p1 = value(2 * s + 1) / scale;
        let p2 = (1.0 - p0 - p1).max(0.0);
        *slot = bgen_expected_dosage(p0, p1, p2) as f32;
    }
    Ok(missing)
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], path: &Path) -> Result<()> {
    r.read_exact(buf).map_err(|e| Error::format(path, format!("truncated file: {e}")))
}

fn read_u16(r: &mut impl Read, path: &Path) -> Result<u16> {
    let mut b = [0u8; 2];
    read_exact(r, &mut b, path)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32(r: &mut impl Read, path: &Path) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, path)?;
    Ok(u32::from_le_bytes(b))
}

fn read_string(r: &mut impl Read, len: usize, path: &Path) -> Result<String> {
    let mut buf = vec![0u8; len];
    read_exact(r, &mut buf, path)?;
    String::from_utf8(buf).map_err(|_| Error::format(path, "non-UTF-8 string field"))
}

fn read_string_u16(r: &mut impl Read, path: &Path) -> Result<String> {
    let len = read_u16(r, path)? as usize;
    read_string(r, len, path)
}

fn read_string_u32(r: &mut impl Read, path: &Path) -> Result<String> {
    let len = read_u32(r, path)? as usize;
    read_string(r, len, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expected_dosage() {
        assert_eq!(bgen_expected_dosage(1.0, 0.0, 0.0), 0.0);
        assert_eq!(bgen_expected_dosage(0.0, 0.0, 1.0), 2.0);
        assert_eq!(bgen_expected_dosage(0.25, 0.5, 0.25), 1.0);
    }

    fn block(ploidy: &[u8], bits: u8, probs: &[u16]) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend((ploidy.len() as u32).to_le_bytes());
        b.extend(2u16.to_le_bytes());
        b.extend([2u8, 2u8]);
        b.extend(ploidy);
        b.push(0);
        b.push(bits);
        for &p in probs {
            if bits == 8 {
                b.push(p as u8);
            } else {
                b.extend(p.to_le_bytes());
            }
        }
        b
    }

    #[test]
    fn decodes_8_bit_with_missing() {
        let blk = block(&[2, 0x82, 2], 8, &[255, 0, 0, 0, 0, 0]);
        let mut row = [0f32; 3];
        assert!(matches!(decode_layout2(&blk, &mut row), Ok(1)));
        assert_eq!(row[0], 0.0);
        assert!(row[1].is_nan());
        assert_eq!(row[2], 2.0);
    }

    #[test]
    fn decodes_16_bit() {
        let blk = block(&[2], 16, &[0, 65535]);
        let mut row = [0f32; 1];
        assert!(decode_layout2(&blk, &mut row).is_ok());
        assert_eq!(row[0], 1.0);
    }

    #[test]
    fn rejects_unsupported_precision_and_ploidy() {
        let mut row = [0f32; 1];
        let blk = block(&[2], 8, &[0, 0]);
        let mut bad_bits = blk.clone();
        bad_bits[10] = 4;
        assert!(matches!(decode_layout2(&bad_bits, &mut row), Err(LayoutError::Unsupported(_))));
        let haploid = block(&[1], 8, &[0, 0]);
        assert!(matches!(decode_layout2(&haploid, &mut row), Err(LayoutError::Unsupported(f)) if f.contains("ploidy")));
    }
}
