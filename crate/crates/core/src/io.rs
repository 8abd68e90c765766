//! File formats: EMB1 embedding matrices, JSON transforms and gold scores.
//!
//! EMB1 is a 32-byte little-endian header followed by the row-major payload:
//!
//! | offset | size | field                                 |
//! |--------|------|---------------------------------------|
//! | 0      | 4    | magic `EMB1`                          |
//! | 4      | 4    | version, u32 = 1                      |
//! | 8      | 8    | count (rows), u64                     |
//! | 16     | 4    | dim, u32                              |
//! | 20     | 1    | dtype: 0 = float32, 1 = float64       |
//! | 21     | 11   | reserved, zero                        |

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::whitening::WhiteningTransform;

pub const EMB1_MAGIC: [u8; 4] = *b"EMB1";
pub const EMB1_VERSION: u32 = 1;
pub const EMB1_HEADER_LEN: usize = 32;
pub const TRANSFORM_FORMAT: &str = "whitening-v1";

/// Element type of an EMB1 payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn code(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Dtype::F32),
            1 => Ok(Dtype::F64),
            other => Err(Error::UnsupportedDtype(other)),
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

/// Decoded EMB1 header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Emb1Header {
    pub count: u64,
    pub dim: u32,
    pub dtype: Dtype,
}

impl Emb1Header {
    pub fn payload_len(&self) -> u64 {
        self.count
            .saturating_mul(self.dim as u64)
            .saturating_mul(self.dtype.size() as u64)
    }

    pub fn encode(&self) -> [u8; EMB1_HEADER_LEN] {
        let mut h = [0u8; EMB1_HEADER_LEN];
        h[0..4].copy_from_slice(&EMB1_MAGIC);
        h[4..8].copy_from_slice(&EMB1_VERSION.to_le_bytes());
        h[8..16].copy_from_slice(&self.count.to_le_bytes());
        h[16..20].copy_from_slice(&self.dim.to_le_bytes());
        h[20] = self.dtype.code();
        h
    }

    pub fn decode(bytes: &[u8; EMB1_HEADER_LEN]) -> Result<Self> {
        let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
        if magic != EMB1_MAGIC {
            return Err(Error::BadMagic { found: magic });
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != EMB1_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let count = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let dim = u32::from_le_bytes(bytes[16..20].try_into().unwrap());
        let dtype = Dtype::from_code(bytes[20])?;
        if dim == 0 {
            return Err(Error::EmptyInput("EMB1 header declares dim 0"));
        }
        if bytes[21..].iter().any(|&b| b != 0) {
            return Err(Error::SchemaMismatch(
                "EMB1 reserved bytes must be zero".into(),
            ));
        }
        Ok(Self { count, dim, dtype })
    }
}

/// Row-at-a-time EMB1 reader, for streaming files larger than memory.
pub struct Emb1Reader<R> {
    inner: R,
    header: Emb1Header,
    remaining: u64,
    buf: Vec<u8>,
    row: Vec<f64>,
}

impl Emb1Reader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let len = file.metadata().map_err(|e| Error::io(path, e))?.len();
        let reader = Self::new(BufReader::new(file))?;
        let expected = EMB1_HEADER_LEN as u64 + reader.header.payload_len();
        if len < expected {
            return Err(Error::TruncatedPayload {
                expected: reader.header.payload_len(),
                found: len.saturating_sub(EMB1_HEADER_LEN as u64),
            });
        }
        if len > expected {
            return Err(Error::TrailingData {
                found: len - expected,
            });
        }
        Ok(reader)
    }
}

impl<R: Read> Emb1Reader<R> {
    /// Reads and validates the header.
    pub fn new(mut inner: R) -> Result<Self> {
        let mut h = [0u8; EMB1_HEADER_LEN];
        let got = read_full(&mut inner, &mut h)?;
        if got < EMB1_HEADER_LEN {
            if got >= 4 && h[0..4] != EMB1_MAGIC {
                return Err(Error::BadMagic {
                    found: h[0..4].try_into().unwrap(),
                });
            }
            return Err(Error::TruncatedPayload {
                expected: EMB1_HEADER_LEN as u64,
                found: got as u64,
            });
        }
        let header = Emb1Header::decode(&h)?;
        let dim = header.dim as usize;
        Ok(Self {
            inner,
            remaining: header.count,
            buf: vec![0u8; dim * header.dtype.size()],
            row: vec![0.0; dim],
            header,
        })
    }

    pub fn header(&self) -> Emb1Header {
        self.header
    }

    /// Next row, or `None` once `count` rows have been read.
    pub fn next_row(&mut self) -> Result<Option<&[f64]>> {
        if self.remaining == 0 {
            return Ok(None);
        }
        let got = read_full(&mut self.inner, &mut self.buf)?;
        if got < self.buf.len() {
            let done = (self.header.count - self.remaining) * self.buf.len() as u64;
            return Err(Error::TruncatedPayload {
                expected: self.header.payload_len(),
                found: done + got as u64,
            });
        }
        match self.header.dtype {
            Dtype::F64 => {
                for (v, b) in self.row.iter_mut().zip(self.buf.chunks_exact(8)) {
                    *v = f64::from_le_bytes(b.try_into().unwrap());
                }
            }
            Dtype::F32 => {
                for (v, b) in self.row.iter_mut().zip(self.buf.chunks_exact(4)) {
                    *v = f32::from_le_bytes(b.try_into().unwrap()) as f64;
                }
            }
        }
        if self.row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("EMB1 payload"));
        }
        self.remaining -= 1;
        Ok(Some(&self.row))
    }
}

fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(Error::io("<stream>", e)),
        }
    }
    Ok(filled)
}

/// Reads a whole EMB1 file; float32 payloads are widened to f64.
pub fn read_emb1(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let mut reader = Emb1Reader::open(path)?;
    let h = reader.header();
    let mut data = Vec::with_capacity(h.count as usize * h.dim as usize);
    while let Some(row) = reader.next_row()? {
        data.extend_from_slice(row);
    }
    EmbeddingMatrix::new(h.count as usize, h.dim as usize, data)
}

/// Parses EMB1 bytes held in memory.
pub fn decode_emb1(bytes: &[u8]) -> Result<EmbeddingMatrix> {
    let mut reader = Emb1Reader::new(bytes)?;
    let h = reader.header();
    let expected = EMB1_HEADER_LEN as u64 + h.payload_len();
    let len = bytes.len() as u64;
    if len < expected {
        return Err(Error::TruncatedPayload {
            expected: h.payload_len(),
            found: len - EMB1_HEADER_LEN as u64,
        });
    }
    if len > expected {
        return Err(Error::TrailingData {
            found: len - expected,
        });
    }
    let mut data = Vec::with_capacity(h.count as usize * h.dim as usize);
    while let Some(row) = reader.next_row()? {
        data.extend_from_slice(row);
    }
    EmbeddingMatrix::new(h.count as usize, h.dim as usize, data)
}

/// Serializes a matrix to EMB1 bytes.
pub fn encode_emb1<W: Write>(
    out: &mut W,
    data: &EmbeddingMatrix,
    dtype: Dtype,
) -> std::io::Result<()> {
    let header = Emb1Header {
        count: data.count() as u64,
        dim: u32::try_from(data.dim()).expect("dimension fits in u32"),
        dtype,
    };
    out.write_all(&header.encode())?;
    match dtype {
        Dtype::F64 => {
            for v in data.as_slice() {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Dtype::F32 => {
            for v in data.as_slice() {
                out.write_all(&(*v as f32).to_le_bytes())?;
            }
        }
    }
    Ok(())
}

/// Writes a float64 EMB1 file.
pub fn write_emb1(path: impl AsRef<Path>, data: &EmbeddingMatrix) -> Result<()> {
    write_emb1_as(path, data, Dtype::F64)
}

pub fn write_emb1_as(path: impl AsRef<Path>, data: &EmbeddingMatrix, dtype: Dtype) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    encode_emb1(&mut w, data, dtype)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct TransformDoc<'a> {
    format: &'a str,
    input_dim: usize,
    output_dim: usize,
    mean: &'a [f64],
    matrix: Vec<&'a [f64]>,
    fit_count: u64,
    eps: f64,
}

/// Renders a transform as a `whitening-v1` JSON document.
pub fn transform_to_json(t: &WhiteningTransform) -> String {
    let doc = TransformDoc {
        format: TRANSFORM_FORMAT,
        input_dim: t.input_dim(),
        output_dim: t.output_dim(),
        mean: t.mean(),
        matrix: (0..t.input_dim()).map(|i| t.matrix_row(i)).collect(),
        fit_count: t.fit_count(),
        eps: t.eps(),
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("finite values serialize");
    s.push('\n');
    s
}

/// Parses a `whitening-v1` JSON document.
pub fn transform_from_json(text: &str) -> Result<WhiteningTransform> {
    let doc: Value = match serde_json::from_str(text) {
        Ok(v) => v,
        Err(e) => {
            if has_non_finite_literal(text) {
                return Err(Error::NonFinite("transform document"));
            }
            return Err(Error::SchemaMismatch(format!("invalid JSON: {e}")));
        }
    };
    let obj = doc
        .as_object()
        .ok_or_else(|| Error::SchemaMismatch("top level must be an object".into()))?;
    let field = |key: &str| {
        obj.get(key)
            .ok_or_else(|| Error::SchemaMismatch(format!("missing key {key:?}")))
    };

    match field("format")?.as_str() {
        Some(TRANSFORM_FORMAT) => {}
        _ => {
            return Err(Error::SchemaMismatch(format!(
                "format must be {TRANSFORM_FORMAT:?}"
            )))
        }
    }
    let input_dim = as_count(field("input_dim")?, "input_dim")?;
    let output_dim = as_count(field("output_dim")?, "output_dim")?;
    let fit_count = field("fit_count")?
        .as_u64()
        .ok_or_else(|| Error::SchemaMismatch("fit_count must be a non-negative integer".into()))?;
    let eps = as_number(field("eps")?, "eps")?;

    let mean = as_numbers(field("mean")?, "mean")?;
    if mean.len() != input_dim {
        return Err(Error::SchemaMismatch(format!(
            "mean has {} entries, input_dim is {input_dim}",
            mean.len()
        )));
    }
    let rows = field("matrix")?
        .as_array()
        .ok_or_else(|| Error::SchemaMismatch("matrix must be an array of rows".into()))?;
    if rows.len() != input_dim {
        return Err(Error::SchemaMismatch(format!(
            "matrix has {} rows, input_dim is {input_dim}",
            rows.len()
        )));
    }
    let mut matrix = Vec::with_capacity(input_dim * output_dim);
    for (i, row) in rows.iter().enumerate() {
        let row = as_numbers(row, "matrix row")?;
        if row.len() != output_dim {
            return Err(Error::SchemaMismatch(format!(
                "matrix row {i} has {} entries, output_dim is {output_dim}",
                row.len()
            )));
        }
        matrix.extend(row);
    }
    WhiteningTransform::from_parts(mean, matrix, output_dim, fit_count, eps).map_err(|e| match e {
        Error::InvalidK { requested, dim } => {
            Error::SchemaMismatch(format!("output_dim {requested} must lie in 1..={dim}"))
        }
        other => other,
    })
}

pub fn save_transform(path: impl AsRef<Path>, t: &WhiteningTransform) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, transform_to_json(t)).map_err(|e| Error::io(path, e))
}

pub fn load_transform(path: impl AsRef<Path>) -> Result<WhiteningTransform> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    transform_from_json(&text)
}

fn as_count(v: &Value, what: &str) -> Result<usize> {
    v.as_u64()
        .and_then(|n| usize::try_from(n).ok())
        .ok_or_else(|| Error::SchemaMismatch(format!("{what} must be a non-negative integer")))
}

fn as_number(v: &Value, what: &str) -> Result<f64> {
    match v {
        Value::Number(n) => n
            .as_f64()
            .filter(|x| x.is_finite())
            .ok_or(Error::NonFinite("transform document")),
        Value::String(s) if is_non_finite_token(s) => Err(Error::NonFinite("transform document")),
        _ => Err(Error::SchemaMismatch(format!(
            "{what} must contain only numbers"
        ))),
    }
}

fn as_numbers(v: &Value, what: &str) -> Result<Vec<f64>> {
    v.as_array()
        .ok_or_else(|| Error::SchemaMismatch(format!("{what} must be an array")))?
        .iter()
        .map(|x| as_number(x, what))
        .collect()
}

fn is_non_finite_token(s: &str) -> bool {
    let s = s.trim_start_matches(['+', '-']);
    ["nan", "inf", "infinity"]
        .iter()
        .any(|t| s.eq_ignore_ascii_case(t))
}

// Bare NaN / Infinity tokens (outside strings) make the document invalid JSON;
// they are reported as non-finite values rather than as a syntax error.
fn has_non_finite_literal(text: &str) -> bool {
    let mut in_string = false;
    let mut escaped = false;
    let bytes = text.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        if in_string {
            match (escaped, b) {
                (true, _) => escaped = false,
                (false, b'\\') => escaped = true,
                (false, b'"') => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'N' | b'I' | b'n' | b'i' => {
                let word: String = text[i..]
                    .chars()
                    .take_while(|c| c.is_ascii_alphabetic())
                    .collect();
                let starts_word = i == 0 || !bytes[i - 1].is_ascii_alphabetic();
                if starts_word && is_non_finite_token(&word) {
                    return true;
                }
            }
            _ => {}
        }
    }
    false
}

/// Reads one decimal score per line. A blank final line is allowed.
pub fn read_gold(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_gold(BufReader::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn parse_gold<R: BufRead>(reader: R) -> Result<Vec<f64>> {
    let lines = reader
        .lines()
        .collect::<std::io::Result<Vec<String>>>()
        .map_err(|e| Error::io("<gold>", e))?;
    let mut scores = Vec::with_capacity(lines.len());
    let last = lines.len();
    for (i, line) in lines.iter().enumerate() {
        let text = line.strip_suffix('\r').unwrap_or(line).trim();
        if text.is_empty() && i + 1 == last {
            break;
        }
        let v: f64 = text.parse().map_err(|_| Error::ParseError {
            line: i + 1,
            text: text.to_string(),
        })?;
        if !v.is_finite() {
            return Err(Error::ParseError {
                line: i + 1,
                text: text.to_string(),
            });
        }
        scores.push(v);
    }
    Ok(scores)
}
