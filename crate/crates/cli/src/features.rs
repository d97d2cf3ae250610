//! Feature files: a little-endian binary container, with a CSV fallback for
//! small hand-written inputs.
//!
//! Binary layout:
//!
//! ```text
//! "LPMTFEAT"            8 bytes
//! version   u32 LE      currently 1
//! n         u64 LE      instance count
//! d         u64 LE      dimension
//! n ids     u32 LE byte length, then UTF-8 bytes
//! payload   n*d f32 LE, row-major
//! ```

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rerank_core::FeatureSet;

use crate::error::{CliError, FormatError};
use crate::output::write_atomic;

pub const MAGIC: &[u8; 8] = b"LPMTFEAT";
pub const VERSION: u32 = 1;

/// Ids plus row-major `f32` values, exactly as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct RawFeatures {
    pub ids: Vec<String>,
    pub d: usize,
    pub values: Vec<f32>,
}

impl RawFeatures {
    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn to_feature_set(&self) -> Result<FeatureSet, rerank_core::Error> {
        FeatureSet::from_f32(self.ids.clone(), &self.values, self.d)
    }

    /// Narrow to `f32` for storage.
    pub fn from_feature_set(fs: &FeatureSet) -> Self {
        Self {
            ids: fs.ids().to_vec(),
            d: fs.d(),
            values: fs.data().iter().map(|&v| v as f32).collect(),
        }
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: u64, what: &'static str) -> Result<&'a [u8], FormatError> {
        let available = (self.bytes.len() - self.pos) as u64;
        if len > available {
            return Err(FormatError::Truncated {
                what,
                offset: self.pos as u64,
                needed: len,
                available,
            });
        }
        let out = &self.bytes[self.pos..self.pos + len as usize];
        self.pos += len as usize;
        Ok(out)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

/// Parse the binary container. Nothing is returned unless the whole file is
/// valid.
pub fn decode_binary(bytes: &[u8]) -> Result<RawFeatures, FormatError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(FormatError::BadMagic {
            found: bytes[..bytes.len().min(MAGIC.len())].to_vec(),
        });
    }
    let mut cur = Cursor { bytes, pos: MAGIC.len() };
    let version = cur.u32("version")?;
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion { version });
    }
    let n = cur.u64("instance count")?;
    let d = cur.u64("dimension")?;
    if n == 0 || d == 0 {
        return Err(FormatError::Empty);
    }
    let mut ids = Vec::new();
    let mut seen = HashSet::new();
    for _ in 0..n {
        let offset = cur.pos as u64;
        let len = cur.u32("id length")?;
        let raw = cur.take(u64::from(len), "id bytes")?;
        let id = std::str::from_utf8(raw)
            .map_err(|_| FormatError::InvalidUtf8 { offset })?
            .to_string();
        if !seen.insert(id.clone()) {
            return Err(FormatError::DuplicateId { id, offset });
        }
        ids.push(id);
    }
    let payload_start = cur.pos as u64;
    let payload_len = n
        .checked_mul(d)
        .and_then(|x| x.checked_mul(4))
        .ok_or(FormatError::Truncated {
            what: "payload",
            offset: payload_start,
            needed: u64::MAX,
            available: (bytes.len() as u64) - payload_start,
        })?;
    let payload = cur.take(payload_len, "payload")?;
    if cur.pos != bytes.len() {
        return Err(FormatError::TrailingBytes {
            offset: cur.pos as u64,
            extra: (bytes.len() - cur.pos) as u64,
        });
    }
    let values: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
        let pos = pos as u64;
        return Err(FormatError::NonFinite {
            row: pos / d,
            col: pos % d,
            offset: payload_start + 4 * pos,
        });
    }
    Ok(RawFeatures {
        ids,
        d: d as usize,
        values,
    })
}

pub fn encode_binary(raw: &RawFeatures) -> Vec<u8> {
    let mut out = Vec::with_capacity(28 + raw.values.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(raw.n() as u64).to_le_bytes());
    out.extend_from_slice(&(raw.d as u64).to_le_bytes());
    for id in &raw.ids {
        out.extend_from_slice(&(id.len() as u32).to_le_bytes());
        out.extend_from_slice(id.as_bytes());
    }
    for v in &raw.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parse `id,f0,...,f{d-1}` CSV.
pub fn decode_csv(text: &str) -> Result<RawFeatures, FormatError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| FormatError::Line {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let d = header.len().saturating_sub(1);
    let expected: Vec<String> = std::iter::once("id".to_string())
        .chain((0..d).map(|j| format!("f{j}")))
        .collect();
    if d == 0 || header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(FormatError::Line {
            line: 1,
            message: format!("header must be `id,f0,...,f{{d-1}}`, got `{}`", header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut ids = Vec::new();
    let mut values = Vec::new();
    let mut seen = HashSet::new();
    for (r, record) in reader.records().enumerate() {
        let line = r + 2;
        let record = record.map_err(|e| FormatError::Line {
            line,
            message: e.to_string(),
        })?;
        if record.len() != d + 1 {
            return Err(FormatError::Line {
                line,
                message: format!("expected {} fields, got {}", d + 1, record.len()),
            });
        }
        let id = record[0].to_string();
        if !seen.insert(id.clone()) {
            return Err(FormatError::Line {
                line,
                message: format!("duplicate id `{id}`"),
            });
        }
        for (j, field) in record.iter().skip(1).enumerate() {
            let v: f32 = field.parse().map_err(|_| FormatError::Line {
                line,
                message: format!("column f{j}: `{field}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(FormatError::Line {
                    line,
                    message: format!("column f{j} is not finite"),
                });
            }
            values.push(v);
        }
        ids.push(id);
    }
    if ids.is_empty() {
        return Err(FormatError::Empty);
    }
    Ok(RawFeatures { ids, d, values })
}

pub fn encode_csv(raw: &RawFeatures) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<String> = std::iter::once("id".to_string())
        .chain((0..raw.d).map(|j| format!("f{j}")))
        .collect();
    w.write_record(&header).expect("in-memory write");
    for (i, id) in raw.ids.iter().enumerate() {
        let row = &raw.values[i * raw.d..(i + 1) * raw.d];
        let record: Vec<String> = std::iter::once(id.clone())
            .chain(row.iter().map(|v| format!("{v:?}")))
            .collect();
        w.write_record(&record).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn looks_like_csv(path: &Path, bytes: &[u8]) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) || bytes.starts_with(b"id,")
}

/// Load either format; binary unless the file is clearly CSV.
pub fn load_raw(path: &Path) -> Result<RawFeatures, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let parsed = if !bytes.starts_with(MAGIC) && looks_like_csv(path, &bytes) {
        let text = std::str::from_utf8(&bytes).map_err(|_| {
            CliError::format(path, FormatError::InvalidUtf8 { offset: 0 })
        })?;
        decode_csv(text)
    } else {
        decode_binary(&bytes)
    };
    parsed.map_err(|e| CliError::format(path, e))
}

pub fn load_features(path: &Path) -> Result<FeatureSet, CliError> {
    Ok(load_raw(path)?.to_feature_set()?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum FeatureFormat {
    Binary,
    Csv,
}

pub fn save_raw(path: &Path, raw: &RawFeatures, format: FeatureFormat) -> Result<(), CliError> {
    let bytes = match format {
        FeatureFormat::Binary => encode_binary(raw),
        FeatureFormat::Csv => encode_csv(raw),
    };
    write_atomic(path, |w| w.write_all(&bytes))
}
