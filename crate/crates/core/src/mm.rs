//! MatrixMarket coordinate-format reader and writer.
//!
//! Supports `real`, `integer` and `pattern` fields with `general` or
//! `symmetric` symmetry. Pattern entries get value 1; symmetric files have
//! their off-diagonal entries mirrored. Complex and Hermitian variants are
//! rejected.

use std::io::BufRead;

use crate::error::{Error, Result};
use crate::matrix::{CooMatrix, CsrMatrix};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Field {
    Real,
    Integer,
    Pattern,
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

/// Parses a MatrixMarket coordinate stream into a canonical [`CooMatrix`]
/// (0-based, duplicates summed).
pub fn parse_matrix_market<T: Scalar>(reader: impl BufRead) -> Result<CooMatrix<T>> {
    let mut lines = reader.lines().enumerate();

    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty input"))?
        .1
        .map(|h| (0, h))
        .map_err(Error::Io)?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() < 5 || !fields[0].eq_ignore_ascii_case("%%MatrixMarket") {
        return Err(parse_err(1, "header must start with %%MatrixMarket"));
    }
    if !fields[1].eq_ignore_ascii_case("matrix") || !fields[2].eq_ignore_ascii_case("coordinate") {
        return Err(parse_err(1, "only `matrix coordinate` objects are supported"));
    }
    let field = match fields[3].to_ascii_lowercase().as_str() {
        "real" => Field::Real,
        "integer" => Field::Integer,
        "pattern" => Field::Pattern,
        other => return Err(parse_err(1, format!("unsupported value field `{other}`"))),
    };
    let symmetric = match fields[4].to_ascii_lowercase().as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(parse_err(1, format!("unsupported symmetry `{other}`"))),
    };

    // Dimension line: first non-comment, non-blank line.
    let mut dims: Option<(usize, usize, usize)> = None;
    let mut entries: Vec<(usize, usize, T)> = Vec::new();
    let mut remaining = 0usize;

    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line.map_err(Error::Io)?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        let mut tok = trimmed.split_whitespace();
        if dims.is_none() {
            let m = parse_count(tok.next(), lineno, "rows")?;
            let n = parse_count(tok.next(), lineno, "columns")?;
            let nnz = parse_count(tok.next(), lineno, "nonzeros")?;
            dims = Some((m, n, nnz));
            remaining = nnz;
            entries.reserve(if symmetric { 2 * nnz } else { nnz });
            continue;
        }
        let (m, n, _) = dims.unwrap();
        if remaining == 0 {
            return Err(parse_err(lineno, "more entries than declared"));
        }
        let i = parse_count(tok.next(), lineno, "row index")?;
        let j = parse_count(tok.next(), lineno, "column index")?;
        if i < 1 || i > m || j < 1 || j > n {
            return Err(parse_err(lineno, format!("index ({i}, {j}) out of range for {m}x{n}")));
        }
        let value = match field {
            Field::Pattern => 1.0,
            Field::Real | Field::Integer => {
                let raw = tok
                    .next()
                    .ok_or_else(|| parse_err(lineno, "missing value"))?;
                raw.parse::<f64>()
                    .map_err(|_| parse_err(lineno, format!("non-numeric value {raw:?}")))?
            }
        };
        let (i, j) = (i - 1, j - 1);
        entries.push((i, j, T::from_f64_lossy(value)));
        if symmetric && i != j {
            entries.push((j, i, T::from_f64_lossy(value)));
        }
        remaining -= 1;
    }

    let (m, n, _) = dims.ok_or_else(|| parse_err(1, "missing dimension line"))?;
    if remaining > 0 {
        return Err(parse_err(0, format!("{remaining} entries missing at end of stream")));
    }
    CooMatrix::from_entries(m, n, entries)
}

fn parse_count(tok: Option<&str>, lineno: usize, what: &str) -> Result<usize> {
    let raw = tok.ok_or_else(|| parse_err(lineno, format!("missing {what}")))?;
    raw.parse::<usize>()
        .map_err(|_| parse_err(lineno, format!("cannot parse {what} from {raw:?}")))
}

/// Writes a CSR matrix as `coordinate real general`, 1-based, shortest
/// round-trip number formatting.
pub fn write_matrix_market<T: Scalar>(a: &CsrMatrix<T>) -> String {
    let mut out = String::from("%%MatrixMarket matrix coordinate real general\n");
    out.push_str(&format!("{} {} {}\n", a.num_rows, a.num_cols, a.nnz()));
    for (i, j, v) in a.iter() {
        out.push_str(&format!("{} {} {}\n", i + 1, j + 1, v));
    }
    out
}
