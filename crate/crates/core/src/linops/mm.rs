//! Matrix Market reader and writer (real `coordinate` and `array` formats).
//!
//! Values are written with 17 significant digits, which round-trips every
//! finite `f64` exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{Matrix, SymmetricOperator, Vector};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    Coordinate,
    Array,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Symmetry {
    General,
    Symmetric,
}

fn fmt_value(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `m` in Matrix Market format. With [`Symmetry::Symmetric`] only the
/// lower triangle is emitted; the caller guarantees `m` is symmetric.
pub fn write_matrix<W: Write>(
    out: &mut W,
    m: &Matrix,
    layout: Layout,
    symmetry: Symmetry,
) -> std::io::Result<()> {
    let (rows, cols) = m.shape();
    let sym = match symmetry {
        Symmetry::General => "general",
        Symmetry::Symmetric => "symmetric",
    };
    let in_triangle = |i: usize, j: usize| symmetry == Symmetry::General || i >= j;
    match layout {
        Layout::Coordinate => {
            writeln!(out, "%%MatrixMarket matrix coordinate real {sym}")?;
            let mut entries = Vec::new();
            for j in 0..cols {
                for i in 0..rows {
                    if in_triangle(i, j) && m[(i, j)] != 0.0 {
                        entries.push((i, j, m[(i, j)]));
                    }
                }
            }
            writeln!(out, "{rows} {cols} {}", entries.len())?;
            for (i, j, v) in entries {
                writeln!(out, "{} {} {}", i + 1, j + 1, fmt_value(v))?;
            }
        }
        Layout::Array => {
            writeln!(out, "%%MatrixMarket matrix array real {sym}")?;
            writeln!(out, "{rows} {cols}")?;
            for j in 0..cols {
                for i in 0..rows {
                    if in_triangle(i, j) {
                        writeln!(out, "{}", fmt_value(m[(i, j)]))?;
                    }
                }
            }
        }
    }
    Ok(())
}

/// Reads a real Matrix Market matrix. Symmetric files are expanded to the
/// full matrix. Integer fields are accepted and converted.
pub fn read_matrix<R: BufRead>(input: R, context: &str) -> Result<(Matrix, Symmetry)> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(context, "empty file"))?
        .map_err(|e| Error::io(context, e))?;
    let tokens: Vec<String> = header
        .split_whitespace()
        .map(|t| t.to_ascii_lowercase())
        .collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(Error::parse(context, format!("bad header `{header}`")));
    }
    let layout = match tokens[2].as_str() {
        "coordinate" => Layout::Coordinate,
        "array" => Layout::Array,
        other => return Err(Error::parse(context, format!("unsupported layout `{other}`"))),
    };
    if tokens[3] != "real" && tokens[3] != "integer" && tokens[3] != "double" {
        return Err(Error::parse(
            context,
            format!("unsupported field `{}`", tokens[3]),
        ));
    }
    let symmetry = match tokens[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        other => return Err(Error::parse(context, format!("unsupported symmetry `{other}`"))),
    };

    let mut body = Vec::new();
    for line in lines {
        let line = line.map_err(|e| Error::io(context, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        body.push(trimmed.to_string());
    }
    let mut rows_iter = body.into_iter();
    let size_line = rows_iter
        .next()
        .ok_or_else(|| Error::parse(context, "missing size line"))?;
    let sizes = parse_numbers::<usize>(&size_line, context)?;

    let parse_f = |s: &str| {
        s.parse::<f64>()
            .map_err(|e| Error::parse(context, format!("bad value `{s}`: {e}")))
    };

    let m = match layout {
        Layout::Coordinate => {
            if sizes.len() != 3 {
                return Err(Error::parse(context, "coordinate size line needs 3 fields"));
            }
            let (rows, cols, nnz) = (sizes[0], sizes[1], sizes[2]);
            let mut m = Matrix::zeros(rows, cols);
            let mut count = 0;
            for line in rows_iter {
                let fields: Vec<&str> = line.split_whitespace().collect();
                if fields.len() != 3 {
                    return Err(Error::parse(context, format!("bad entry line `{line}`")));
                }
                let i: usize = fields[0]
                    .parse()
                    .map_err(|e| Error::parse(context, format!("bad row `{}`: {e}", fields[0])))?;
                let j: usize = fields[1]
                    .parse()
                    .map_err(|e| Error::parse(context, format!("bad col `{}`: {e}", fields[1])))?;
                if i == 0 || j == 0 || i > rows || j > cols {
                    return Err(Error::parse(context, format!("index out of range in `{line}`")));
                }
                let v = parse_f(fields[2])?;
                m[(i - 1, j - 1)] = v;
                if symmetry == Symmetry::Symmetric {
                    m[(j - 1, i - 1)] = v;
                }
                count += 1;
            }
            if count != nnz {
                return Err(Error::parse(
                    context,
                    format!("expected {nnz} entries, found {count}"),
                ));
            }
            m
        }
        Layout::Array => {
            if sizes.len() != 2 {
                return Err(Error::parse(context, "array size line needs 2 fields"));
            }
            let (rows, cols) = (sizes[0], sizes[1]);
            let mut values = Vec::new();
            for line in rows_iter {
                for tok in line.split_whitespace() {
                    values.push(parse_f(tok)?);
                }
            }
            let mut m = Matrix::zeros(rows, cols);
            let mut it = values.into_iter();
            for j in 0..cols {
                for i in 0..rows {
                    if symmetry == Symmetry::Symmetric && i < j {
                        continue;
                    }
                    let v = it
                        .next()
                        .ok_or_else(|| Error::parse(context, "too few array values"))?;
                    m[(i, j)] = v;
                    if symmetry == Symmetry::Symmetric {
                        m[(j, i)] = v;
                    }
                }
            }
            if it.next().is_some() {
                return Err(Error::parse(context, "too many array values"));
            }
            m
        }
    };
    Ok((m, symmetry))
}

fn parse_numbers<T: std::str::FromStr>(line: &str, context: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    line.split_whitespace()
        .map(|t| {
            t.parse::<T>()
                .map_err(|e| Error::parse(context, format!("bad size `{t}`: {e}")))
        })
        .collect()
}

pub fn operator_to_string(op: &SymmetricOperator) -> String {
    let mut buf = Vec::new();
    write_matrix(&mut buf, op.matrix(), Layout::Coordinate, Symmetry::Symmetric)
        .expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("ascii output")
}

pub fn vector_to_string(v: &Vector) -> String {
    let mut buf = Vec::new();
    let m = Matrix::from_column_slice(v.len(), 1, v.as_slice());
    write_matrix(&mut buf, &m, Layout::Array, Symmetry::General)
        .expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("ascii output")
}

pub fn operator_from_str(text: &str) -> Result<SymmetricOperator> {
    let (m, _) = read_matrix(text.as_bytes(), "<string>")?;
    SymmetricOperator::new(m)
}

pub fn vector_from_str(text: &str) -> Result<Vector> {
    let (m, _) = read_matrix(text.as_bytes(), "<string>")?;
    matrix_to_vector(m, "<string>")
}

fn matrix_to_vector(m: Matrix, context: &str) -> Result<Vector> {
    if m.ncols() != 1 {
        return Err(Error::parse(context, format!("expected one column, found {}", m.ncols())));
    }
    Ok(m.column(0).into_owned())
}

pub fn write_matrix_file(
    path: impl AsRef<Path>,
    m: &Matrix,
    layout: Layout,
    symmetry: Symmetry,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_matrix(&mut out, m, layout, symmetry).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_matrix_file(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(read_matrix(BufReader::new(file), &path.display().to_string())?.0)
}

pub fn write_operator_file(path: impl AsRef<Path>, op: &SymmetricOperator) -> Result<()> {
    write_matrix_file(path, op.matrix(), Layout::Coordinate, Symmetry::Symmetric)
}

pub fn read_operator_file(path: impl AsRef<Path>) -> Result<SymmetricOperator> {
    SymmetricOperator::new(read_matrix_file(path)?)
}

pub fn write_vector_file(path: impl AsRef<Path>, v: &Vector) -> Result<()> {
    let m = Matrix::from_column_slice(v.len(), 1, v.as_slice());
    write_matrix_file(path, &m, Layout::Array, Symmetry::General)
}

pub fn read_vector_file(path: impl AsRef<Path>) -> Result<Vector> {
    let path = path.as_ref();
    matrix_to_vector(read_matrix_file(path)?, &path.display().to_string())
}
