//! Dense dosage arrays in NPY v1.0 format (2-D, C order, little-endian f4/f8).
//!
//! NPY carries no identifiers: sample IDs come from a newline-delimited sidecar
//! and marker records are synthesized from the marker ordinal.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::{
    check_batch_request, ensure_unique_ids, read_id_list, CountedAllele, GenotypeFormat, GenotypeSource, MarkerRecord,
    RawBatch,
};
use crate::error::{Error, Result};

const NPY_MAGIC: &[u8; 6] = b"\x93NUMPY";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DenseOrientation {
    MarkersBySamples,
    SamplesByMarkers,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NpyDtype {
    F32,
    F64,
}

impl NpyDtype {
    fn width(self) -> usize {
        match self {
            NpyDtype::F32 => 4,
            NpyDtype::F64 => 8,
        }
    }

    fn descr(self) -> &'static str {
        match self {
            NpyDtype::F32 => "<f4",
            NpyDtype::F64 => "<f8",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct NpyHeader {
    dtype: NpyDtype,
    shape: (usize, usize),
    data_offset: u64,
}

fn parse_header(r: &mut impl Read, path: &Path) -> Result<NpyHeader> {
    let bad = |reason: &str| Error::format(path, reason.to_string());
    let mut pre = [0u8; 10];
    r.read_exact(&mut pre).map_err(|_| bad("shorter than the NPY preamble"))?;
    if &pre[..6] != NPY_MAGIC {
        return Err(bad("not an NPY file (bad magic)"));
    }
    if pre[6] != 1 {
        return Err(Error::format(path, format!("NPY version {}.{} unsupported; need 1.0", pre[6], pre[7])));
    }
    let header_len = u16::from_le_bytes([pre[8], pre[9]]) as usize;
    let mut text = vec![0u8; header_len];
    r.read_exact(&mut text).map_err(|_| bad("truncated NPY header"))?;
    let text = String::from_utf8(text).map_err(|_| bad("NPY header is not text"))?;

    let descr = dict_value(&text, "descr").ok_or_else(|| bad("NPY header lacks 'descr'"))?;
    let dtype = match descr.trim_matches(|c| c == '\'' || c == '"') {
        "<f4" => NpyDtype::F32,
        "<f8" => NpyDtype::F64,
        other => return Err(Error::format(path, format!("element type {other} unsupported; need <f4 or <f8"))),
    };
    let fortran = dict_value(&text, "fortran_order").ok_or_else(|| bad("NPY header lacks 'fortran_order'"))?;
    if fortran.trim() != "False" {
        return Err(bad("Fortran-ordered arrays unsupported"));
    }
    let shape_text = dict_value(&text, "shape").ok_or_else(|| bad("NPY header lacks 'shape'"))?;
    let dims: Vec<usize> = shape_text
        .trim_matches(|c| c == '(' || c == ')')
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::format(path, format!("bad shape {shape_text}")))?;
    if dims.len() != 2 {
        return Err(Error::format(path, format!("array must be 2-D, found {} dimensions", dims.len())));
    }
    Ok(NpyHeader { dtype, shape: (dims[0], dims[1]), data_offset: (10 + header_len) as u64 })
}

/// Extracts the raw text of `key`'s value from a Python dict literal.
fn dict_value<'a>(dict: &'a str, key: &str) -> Option<&'a str> {
    let needle_sq = format!("'{key}'");
    let needle_dq = format!("\"{key}\"");
    let at = dict.find(&needle_sq).or_else(|| dict.find(&needle_dq))?;
    let rest = &dict[at + needle_sq.len()..];
    let rest = rest.trim_start().strip_prefix(':')?.trim_start();
    let end = if rest.starts_with('(') { rest.find(')')? + 1 } else { rest.find([',', '}']).unwrap_or(rest.len()) };
    Some(&rest[..end])
}

pub struct NpySource {
    path: PathBuf,
    reader: BufReader<File>,
    header: NpyHeader,
    orientation: DenseOrientation,
    sample_ids: Vec<String>,
    n_markers: usize,
    buf: Vec<u8>,
}

impl NpySource {
    pub fn open(path: &Path, samples: &Path, orientation: DenseOrientation) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let file_len = file.metadata().map_err(|e| Error::io(path, e))?.len();
        let mut reader = BufReader::new(file);
        let header = parse_header(&mut reader, path)?;
        let (n_markers, n_samples) = match orientation {
            DenseOrientation::MarkersBySamples => header.shape,
            DenseOrientation::SamplesByMarkers => (header.shape.1, header.shape.0),
        };

        let sample_ids = read_id_list(samples)?;
        if sample_ids.len() != n_samples {
            return Err(Error::format(
                path,
                format!(
                    "array shape {:?} implies {n_samples} samples but {} lists {}",
                    header.shape,
                    samples.display(),
                    sample_ids.len()
                ),
            ));
        }
        ensure_unique_ids(&sample_ids, &samples.display().to_string())?;

        let needed = header.data_offset + (n_markers * n_samples * header.dtype.width()) as u64;
        if file_len < needed {
            return Err(Error::format(path, format!("truncated: {file_len} bytes, shape needs {needed}")));
        }

        Ok(NpySource { path: path.to_path_buf(), reader, header, orientation, sample_ids, n_markers, buf: Vec::new() })
    }

    fn read_values(&mut self, offset_elems: usize, n: usize, out: &mut [f32]) -> Result<()> {
        let width = self.header.dtype.width();
        self.buf.resize(n * width, 0);
        self.reader
            .seek(SeekFrom::Start(self.header.data_offset + (offset_elems * width) as u64))
            .map_err(|e| Error::io(&self.path, e))?;
        self.reader.read_exact(&mut self.buf).map_err(|e| Error::format(&self.path, format!("truncated data: {e}")))?;
        match self.header.dtype {
            NpyDtype::F32 => {
                for (o, b) in out.iter_mut().zip(self.buf.chunks_exact(4)) {
                    *o = f32::from_le_bytes(b.try_into().unwrap());
                }
            }
            NpyDtype::F64 => {
                for (o, b) in out.iter_mut().zip(self.buf.chunks_exact(8)) {
                    *o = f64::from_le_bytes(b.try_into().unwrap()) as f32;
                }
            }
        }
        Ok(())
    }
}

impl GenotypeSource for NpySource {
    fn format(&self) -> GenotypeFormat {
        GenotypeFormat::Dense
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
        let mut dosages = Array2::<f32>::zeros((count, n));
        match self.orientation {
            DenseOrientation::MarkersBySamples => {
                let out = dosages.as_slice_mut().expect("standard layout");
                self.read_values(start * n, count * n, out)?;
            }
            DenseOrientation::SamplesByMarkers => {
                let mut column = vec![0f32; count];
                for s in 0..n {
                    self.read_values(s * self.n_markers + start, count, &mut column)?;
                    for (m, &v) in column.iter().enumerate() {
                        dosages[[m, s]] = v;
                    }
                }
            }
        }

        for ((m, s), &d) in dosages.indexed_iter() {
            if !d.is_nan() && !(0.0..=2.0).contains(&d) {
                return Err(Error::format(
                    &self.path,
                    format!("dosage {d} outside [0, 2] at marker {}, sample {}", start + m, self.sample_ids[s]),
                ));
            }
        }
        let markers = (start..start + count).map(synthetic_marker).collect();
        RawBatch::new(markers, dosages)
    }
}

/// Marker record for an ordinal in a dense array: chromosome "0", ID
/// `dense_<index>`, position = index, alleles "A1"/"A2".
pub fn synthetic_marker(index: usize) -> MarkerRecord {
    MarkerRecord {
        chrom: "0".into(),
        id: format!("dense_{index}"),
        pos: index as u64,
        allele1: "A1".into(),
        allele2: "A2".into(),
        source_index: index,
    }
}

/// Writes a 2-D C-order array as NPY v1.0.
pub fn write_npy<T: NpyElement>(path: &Path, array: &Array2<T>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let (rows, cols) = array.dim();
    let mut dict = format!("{{'descr': '{}', 'fortran_order': False, 'shape': ({rows}, {cols}), }}", T::DTYPE.descr());
    // Pad so the data starts on a 64-byte boundary; the header ends in '\n'.
    let unpadded = NPY_MAGIC.len() + 4 + dict.len() + 1;
    dict.push_str(&" ".repeat(unpadded.next_multiple_of(64) - unpadded));
    dict.push('\n');

    let io = |e| Error::io(path, e);
    w.write_all(NPY_MAGIC).map_err(io)?;
    w.write_all(&[1, 0]).map_err(io)?;
    w.write_all(&(dict.len() as u16).to_le_bytes()).map_err(io)?;
    w.write_all(dict.as_bytes()).map_err(io)?;
    for v in array.iter() {
        v.write_le(&mut w).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub trait NpyElement: Copy {
    const DTYPE: NpyDtype;
    fn write_le(&self, w: &mut impl Write) -> std::io::Result<()>;
}

impl NpyElement for f32 {
    const DTYPE: NpyDtype = NpyDtype::F32;
    fn write_le(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(&self.to_le_bytes())
    }
}

impl NpyElement for f64 {
    const DTYPE: NpyDtype = NpyDtype::F64;
    fn write_le(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(&self.to_le_bytes())
    }
}
