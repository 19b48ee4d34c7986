//! Dataset files.
//!
//! Binary layout (little-endian): magic `TADM`, version `u32`, `m: u64`,
//! `n: u64`, target kind `u8` (0 values, 1 labels), `m·n` row-major `f64`,
//! then `m` targets.
//!
//! Text layout: a header line `m n kind` (`values` or `labels`), then one
//! line per row holding `n` entries followed by the target. Blank lines and
//! lines starting with `#` are skipped.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::prox::check_labels;

const MAGIC: &[u8; 4] = b"TADM";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetKind {
    Values,
    Labels,
}

impl TargetKind {
    fn code(self) -> u8 {
        match self {
            TargetKind::Values => 0,
            TargetKind::Labels => 1,
        }
    }

    fn name(self) -> &'static str {
        match self {
            TargetKind::Values => "values",
            TargetKind::Labels => "labels",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub matrix: DenseMatrix,
    pub targets: Vec<f64>,
    pub kind: TargetKind,
}

impl Dataset {
    pub fn new(matrix: DenseMatrix, targets: Vec<f64>, kind: TargetKind) -> Result<Self> {
        Error::check_len("dataset targets", matrix.rows(), targets.len())?;
        Error::check_finite("dataset targets", &targets)?;
        if kind == TargetKind::Labels {
            check_labels(&targets)?;
        }
        Ok(Self {
            matrix,
            targets,
            kind,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Binary,
    Text,
}

pub fn encode_binary(ds: &Dataset) -> Vec<u8> {
    let (m, n) = (ds.matrix.rows(), ds.matrix.cols());
    let mut out = Vec::with_capacity(25 + 8 * (m * n + m));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(m as u64).to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.push(ds.kind.code());
    for v in ds.matrix.values().iter().chain(&ds.targets) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn parse_err(location: String, message: impl Into<String>) -> Error {
    Error::Parse {
        location,
        message: message.into(),
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, k: usize, what: &str) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < k {
            return Err(parse_err(
                format!("byte offset {}", self.pos),
                format!("truncated file while reading {what}"),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + k];
        self.pos += k;
        Ok(s)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8, what)?.try_into().expect("8 bytes"),
        ))
    }
}

pub fn decode_binary(bytes: &[u8]) -> Result<Dataset> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(parse_err(
            "byte offset 0".into(),
            "bad magic, expected TADM",
        ));
    }
    let version = u32::from_le_bytes(r.take(4, "version")?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(parse_err(
            "byte offset 4".into(),
            format!("unsupported version {version}"),
        ));
    }
    let m = r.u64("row count")? as usize;
    let n = r.u64("column count")? as usize;
    let kind = match r.take(1, "target kind")?[0] {
        0 => TargetKind::Values,
        1 => TargetKind::Labels,
        k => {
            return Err(parse_err(
                "byte offset 24".into(),
                format!("unknown target kind {k}"),
            ))
        }
    };
    let count = m
        .checked_mul(n)
        .and_then(|c| c.checked_add(m))
        .filter(|c| c.checked_mul(8).is_some_and(|b| b == bytes.len() - r.pos))
        .ok_or_else(|| {
            parse_err(
                format!("byte offset {}", r.pos),
                format!(
                    "payload is {} bytes, header declares m = {m}, n = {n}",
                    bytes.len() - r.pos
                ),
            )
        })?;
    let vals: Vec<f64> = r
        .take(8 * count, "values")?
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let (a, t) = vals.split_at(m * n);
    Dataset::new(DenseMatrix::new(m, n, a.to_vec())?, t.to_vec(), kind)
}

pub fn encode_text(ds: &Dataset) -> String {
    let (m, n) = (ds.matrix.rows(), ds.matrix.cols());
    let mut s = format!("{m} {n} {}\n", ds.kind.name());
    for i in 0..m {
        for v in ds.matrix.row(i) {
            s.push_str(&format!("{v:e} "));
        }
        s.push_str(&format!("{:e}\n", ds.targets[i]));
    }
    s
}

pub fn decode_text(text: &str) -> Result<Dataset> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (hl, header) = lines
        .next()
        .ok_or_else(|| parse_err("line 1".into(), "missing header"))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 3 {
        return Err(parse_err(format!("line {hl}"), "header must be `m n kind`"));
    }
    let num = |s: &str, what: &str| {
        s.parse::<usize>()
            .map_err(|_| parse_err(format!("line {hl}"), format!("bad {what} `{s}`")))
    };
    let (m, n) = (num(parts[0], "row count")?, num(parts[1], "column count")?);
    let kind = match parts[2] {
        "values" => TargetKind::Values,
        "labels" => TargetKind::Labels,
        k => {
            return Err(parse_err(
                format!("line {hl}"),
                format!("unknown target kind `{k}`"),
            ))
        }
    };
    let mut values = Vec::with_capacity(m * n);
    let mut targets = Vec::with_capacity(m);
    for (ln, line) in lines {
        if targets.len() == m {
            return Err(parse_err(
                format!("line {ln}"),
                format!("more than the declared {m} rows"),
            ));
        }
        let row: Vec<f64> = line
            .split_whitespace()
            .enumerate()
            .map(|(c, tok)| {
                tok.parse::<f64>().map_err(|_| {
                    parse_err(
                        format!("line {ln}, field {}", c + 1),
                        format!("not a number: `{tok}`"),
                    )
                })
            })
            .collect::<Result<_>>()?;
        if row.len() != n + 1 {
            return Err(parse_err(
                format!("line {ln}"),
                format!("expected {} fields, found {}", n + 1, row.len()),
            ));
        }
        values.extend_from_slice(&row[..n]);
        targets.push(row[n]);
    }
    if targets.len() != m {
        return Err(parse_err(
            "end of file".into(),
            format!("expected {m} rows, found {}", targets.len()),
        ));
    }
    Dataset::new(DenseMatrix::new(m, n, values)?, targets, kind)
}

/// Writes through a temporary file in the target directory, then renames.
pub fn save_dataset(path: &Path, ds: &Dataset, format: Format) -> Result<()> {
    let bytes = match format {
        Format::Binary => encode_binary(ds),
        Format::Text => encode_text(ds).into_bytes(),
    };
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(&bytes)?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Reads either format, recognised by the magic bytes.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(MAGIC) {
        decode_binary(&bytes)
    } else {
        let text = String::from_utf8(bytes).map_err(|e| {
            parse_err(
                format!("byte offset {}", e.utf8_error().valid_up_to()),
                "not a dataset file",
            )
        })?;
        decode_text(&text)
    }
}
