//! Matrix files.
//!
//! Two formats are supported:
//!
//! * `csv`: one row per line, comma-separated, no header. Values are written
//!   with 17 significant digits so that reading them back is value-exact.
//! * `f64le`: two little-endian `u64` dimensions (rows, cols) followed by the
//!   row-major entries as little-endian IEEE-754 doubles.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{io_err, Error, Result};
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Csv,
    F64Le,
}

impl MatrixFormat {
    /// `.csv` selects CSV; everything else is the binary layout.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => MatrixFormat::Csv,
            _ => MatrixFormat::F64Le,
        }
    }
}

pub fn read_matrix(path: &Path, format: MatrixFormat) -> Result<DenseMatrix> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    match format {
        MatrixFormat::Csv => parse_csv(path, &bytes),
        MatrixFormat::F64Le => decode_binary(path, &bytes).map(|(m, _)| m),
    }
}

pub fn write_matrix(mat: &DenseMatrix, path: &Path, format: MatrixFormat) -> Result<()> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    match format {
        MatrixFormat::Csv => {
            for i in 0..mat.rows() {
                let line: Vec<String> = mat.row(i).iter().map(|v| format_f64(*v)).collect();
                writeln!(w, "{}", line.join(",")).map_err(io_err(path))?;
            }
        }
        MatrixFormat::F64Le => {
            w.write_all(&encode_binary(mat)).map_err(io_err(path))?;
        }
    }
    w.flush().map_err(io_err(path))
}

/// Shortest-roundtrip-safe rendering with 17 significant digits.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn encode_binary(mat: &DenseMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * mat.data().len());
    out.extend_from_slice(&(mat.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(mat.cols() as u64).to_le_bytes());
    for v in mat.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Decodes one binary matrix from the front of `bytes`; returns it together
/// with the number of bytes consumed.
pub fn decode_binary(path: &Path, bytes: &[u8]) -> Result<(DenseMatrix, usize)> {
    let fail = |msg: String| Error::Format {
        path: path.to_path_buf(),
        msg,
    };
    if bytes.len() < 16 {
        return Err(fail(format!("{} bytes is too short for a header", bytes.len())));
    }
    let rows = u64::from_le_bytes(bytes[0..8].try_into().unwrap());
    let cols = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let count = rows
        .checked_mul(cols)
        .and_then(|c| usize::try_from(c).ok())
        .ok_or_else(|| fail(format!("dimensions {rows}x{cols} overflow")))?;
    let need = count
        .checked_mul(8)
        .and_then(|b| b.checked_add(16))
        .ok_or_else(|| fail(format!("dimensions {rows}x{cols} overflow")))?;
    if bytes.len() < need {
        return Err(fail(format!(
            "payload truncated: {rows}x{cols} needs {need} bytes, found {}",
            bytes.len()
        )));
    }
    let data = bytes[16..need]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mat = DenseMatrix::from_vec(rows as usize, cols as usize, data).map_err(|e| fail(e.to_string()))?;
    Ok((mat, need))
}

fn parse_csv(path: &Path, bytes: &[u8]) -> Result<DenseMatrix> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let mut cols = None;
    let mut rows = 0;
    let mut data = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            msg,
        };
        let mut count = 0;
        for tok in line.split(',') {
            let tok = tok.trim();
            let v: f64 = tok
                .parse()
                .map_err(|_| parse_err(format!("non-numeric token {tok:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(format!("non-finite value {tok:?}")));
            }
            data.push(v);
            count += 1;
        }
        match cols {
            None => cols = Some(count),
            Some(c) if c != count => {
                return Err(parse_err(format!("expected {c} values, found {count}")));
            }
            _ => {}
        }
        rows += 1;
    }
    DenseMatrix::from_vec(rows, cols.unwrap_or(0), data)
}
