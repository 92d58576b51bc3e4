//! Matrix text formats.
//!
//! * dense CSV: one matrix row per line, comma separated.
//! * sparse coordinate: header `d m nnz`, then `row col value` lines with
//!   1-based indices.
//!
//! Values are written with 17 significant digits so a write/read cycle
//! reproduces every `f64` bit for bit.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use super::{DataMatrix, SparseMatrix};
use crate::error::{Error, Result};

pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(tok: &str, line: usize) -> Result<f64> {
    let v: f64 = tok
        .trim()
        .parse()
        .map_err(|_| Error::input(format!("line {line}: cannot parse number {tok:?}")))?;
    if !v.is_finite() {
        return Err(Error::input(format!("line {line}: non-finite value {tok:?}")));
    }
    Ok(v)
}

pub fn read_dense_csv<R: Read>(reader: R) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (n, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line.split(',').map(|t| parse_f64(t, n + 1)).collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::input(format!(
                    "line {}: expected {} columns, found {}",
                    n + 1,
                    first.len(),
                    row.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() || rows[0].is_empty() {
        return Err(Error::input("empty matrix file"));
    }
    let (d, m) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_fn(d, m, |i, j| rows[i][j]))
}

pub fn write_dense_csv<W: Write>(mut w: W, m: &DMatrix<f64>) -> Result<()> {
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|&v| format_f64(v)).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

fn parse_header(line: &str, lineno: usize) -> Result<(usize, usize, usize)> {
    let toks: Vec<&str> = line.split_whitespace().collect();
    if toks.len() != 3 {
        return Err(Error::input(format!("line {lineno}: expected header `d m nnz`")));
    }
    let p = |t: &str| {
        t.parse::<usize>()
            .map_err(|_| Error::input(format!("line {lineno}: bad header count {t:?}")))
    };
    Ok((p(toks[0])?, p(toks[1])?, p(toks[2])?))
}

/// Reads `d m nnz` followed by 1-based `row col value` triplets.
pub fn read_coordinate<R: Read>(reader: R) -> Result<SparseMatrix> {
    let mut lines = BufReader::new(reader).lines().enumerate().filter_map(|(n, l)| match l {
        Ok(s) if s.trim().is_empty() || s.trim_start().starts_with('#') => None,
        other => Some((n + 1, other)),
    });
    let (hn, header) = lines.next().ok_or_else(|| Error::input("empty coordinate file"))?;
    let (d, m, nnz) = parse_header(&header?, hn)?;
    let mut trip = Vec::with_capacity(nnz);
    for (n, line) in lines {
        let line = line?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(Error::input(format!("line {n}: expected `row col value`")));
        }
        let idx = |t: &str, bound: usize| -> Result<usize> {
            let i: usize =
                t.parse().map_err(|_| Error::input(format!("line {n}: bad index {t:?}")))?;
            if i == 0 || i > bound {
                return Err(Error::input(format!("line {n}: index {i} outside 1..={bound}")));
            }
            Ok(i - 1)
        };
        trip.push((idx(toks[0], d)?, idx(toks[1], m)?, parse_f64(toks[2], n)?));
    }
    if trip.len() != nnz {
        return Err(Error::input(format!("header declares {nnz} entries, found {}", trip.len())));
    }
    SparseMatrix::from_triplets(d, m, trip)
}

pub fn write_coordinate<W: Write>(mut w: W, s: &SparseMatrix) -> Result<()> {
    writeln!(w, "{} {} {}", s.nrows(), s.ncols(), s.nnz())?;
    for (i, j, v) in s.triplets() {
        writeln!(w, "{} {} {}", i + 1, j + 1, format_f64(v))?;
    }
    Ok(())
}

/// Loads a matrix file, picking the format from its first content line: three
/// whitespace-separated integers mean sparse coordinate, anything else CSV.
pub fn read_matrix(path: &Path) -> Result<DataMatrix> {
    let text = fs::read_to_string(path)?;
    let first = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'))
        .ok_or_else(|| Error::input(format!("{}: empty file", path.display())))?;
    let toks: Vec<&str> = first.split_whitespace().collect();
    let is_coord =
        !first.contains(',') && toks.len() == 3 && toks.iter().all(|t| t.parse::<usize>().is_ok());
    if is_coord {
        DataMatrix::sparse(read_coordinate(text.as_bytes())?)
    } else {
        DataMatrix::dense(read_dense_csv(text.as_bytes())?)
    }
}

pub fn write_matrix(path: &Path, m: &DataMatrix) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    match m {
        DataMatrix::Dense(d) => write_dense_csv(&mut f, d)?,
        DataMatrix::Sparse(s) => write_coordinate(&mut f, s)?,
    }
    f.flush()?;
    Ok(())
}
