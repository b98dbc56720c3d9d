//! Matrix Market exchange format: `coordinate` and `array` layouts with the
//! `real` field and `general` or `symmetric` structure.
//!
//! Coordinate files become sparse matrices and array files dense ones.
//! Symmetric files store the lower triangle and are expanded on read.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{MtxError, Result, SketchError};
use crate::linalg::{DenseMatrix, Matrix, SparseMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MtxLayout {
    Coordinate,
    Array,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MtxSymmetry {
    General,
    Symmetric,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Header {
    layout: MtxLayout,
    symmetry: MtxSymmetry,
}

pub fn read_matrix_market(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| SketchError::io(path, e))?;
    parse_matrix_market(&text, path)
}

/// Parses file contents; `origin` only labels diagnostics.
pub fn parse_matrix_market(text: &str, origin: &Path) -> Result<Matrix> {
    let fail = |line: usize, kind: MtxError| SketchError::MatrixMarket {
        path: origin.to_path_buf(),
        line,
        kind,
    };

    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (hline, htext) = lines
        .next()
        .ok_or_else(|| fail(1, MtxError::MalformedHeader("empty file".into())))?;
    let header = parse_header(htext).map_err(|k| fail(hline, k))?;

    let mut body = lines.filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('%')
    });

    let (sline, stext) = body
        .next()
        .ok_or_else(|| fail(hline, MtxError::MalformedSize("missing size line".into())))?;
    let size: Vec<usize> = stext
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| fail(sline, MtxError::MalformedSize(stext.trim().to_string())))?;
    let want = match header.layout {
        MtxLayout::Coordinate => 3,
        MtxLayout::Array => 2,
    };
    if size.len() != want {
        return Err(fail(sline, MtxError::MalformedSize(stext.trim().to_string())));
    }
    let (rows, cols) = (size[0], size[1]);
    if header.symmetry == MtxSymmetry::Symmetric && rows != cols {
        return Err(fail(
            sline,
            MtxError::MalformedSize(format!("symmetric matrix must be square, got {rows}×{cols}")),
        ));
    }

    match header.layout {
        MtxLayout::Coordinate => {
            let expected = size[2];
            let mut triplets = Vec::with_capacity(expected * 2);
            let mut found = 0usize;
            let mut last_line = sline;
            for (ln, l) in body {
                last_line = ln;
                found += 1;
                if found > expected {
                    return Err(fail(ln, MtxError::EntryCountMismatch { expected, found }));
                }
                let mut tok = l.split_whitespace();
                let (Some(ti), Some(tj), Some(tv), None) =
                    (tok.next(), tok.next(), tok.next(), tok.next())
                else {
                    return Err(fail(ln, MtxError::MalformedEntry(l.trim().to_string())));
                };
                let (i, j, v) = match (ti.parse::<usize>(), tj.parse::<usize>(), parse_real(tv)) {
                    (Ok(i), Ok(j), Some(v)) => (i, j, v),
                    _ => return Err(fail(ln, MtxError::MalformedEntry(l.trim().to_string()))),
                };
                if i == 0 || j == 0 || i > rows || j > cols {
                    return Err(fail(
                        ln,
                        MtxError::IndexOutOfBounds {
                            row: i,
                            col: j,
                            rows,
                            cols,
                        },
                    ));
                }
                triplets.push((i - 1, j - 1, v));
                if header.symmetry == MtxSymmetry::Symmetric && i != j {
                    triplets.push((j - 1, i - 1, v));
                }
            }
            if found != expected {
                return Err(fail(last_line, MtxError::EntryCountMismatch { expected, found }));
            }
            Ok(SparseMatrix::from_triplets(rows, cols, &triplets)?.into())
        }
        MtxLayout::Array => {
            let expected = match header.symmetry {
                MtxSymmetry::General => rows * cols,
                MtxSymmetry::Symmetric => rows * (rows + 1) / 2,
            };
            let mut values = Vec::with_capacity(expected);
            let mut last_line = sline;
            for (ln, l) in body {
                last_line = ln;
                for t in l.split_whitespace() {
                    let v = parse_real(t)
                        .ok_or_else(|| fail(ln, MtxError::MalformedEntry(l.trim().to_string())))?;
                    values.push(v);
                    if values.len() > expected {
                        return Err(fail(
                            ln,
                            MtxError::EntryCountMismatch {
                                expected,
                                found: values.len(),
                            },
                        ));
                    }
                }
            }
            if values.len() != expected {
                return Err(fail(
                    last_line,
                    MtxError::EntryCountMismatch {
                        expected,
                        found: values.len(),
                    },
                ));
            }
            let mut m = DenseMatrix::zeros(rows, cols);
            let mut it = values.into_iter();
            for j in 0..cols {
                let start = match header.symmetry {
                    MtxSymmetry::General => 0,
                    MtxSymmetry::Symmetric => j,
                };
                for i in start..rows {
                    let v = it.next().expect("count checked");
                    m[(i, j)] = v;
                    if header.symmetry == MtxSymmetry::Symmetric {
                        m[(j, i)] = v;
                    }
                }
            }
            Ok(m.into())
        }
    }
}

fn parse_real(t: &str) -> Option<f64> {
    t.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn parse_header(line: &str) -> std::result::Result<Header, MtxError> {
    let tokens: Vec<String> = line.split_whitespace().map(|t| t.to_ascii_lowercase()).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(MtxError::MalformedHeader(line.trim().to_string()));
    }
    let layout = match tokens[2].as_str() {
        "coordinate" => MtxLayout::Coordinate,
        "array" => MtxLayout::Array,
        other => return Err(MtxError::MalformedHeader(format!("unknown layout {other:?}"))),
    };
    match tokens[3].as_str() {
        "real" | "double" => {}
        other @ ("integer" | "complex" | "pattern") => {
            return Err(MtxError::Unsupported(format!("field {other:?}")))
        }
        other => return Err(MtxError::MalformedHeader(format!("unknown field {other:?}"))),
    }
    let symmetry = match tokens[4].as_str() {
        "general" => MtxSymmetry::General,
        "symmetric" => MtxSymmetry::Symmetric,
        other @ ("skew-symmetric" | "hermitian") => {
            return Err(MtxError::Unsupported(format!("symmetry {other:?}")))
        }
        other => return Err(MtxError::MalformedHeader(format!("unknown symmetry {other:?}"))),
    };
    Ok(Header { layout, symmetry })
}

/// Serializes `m` in its natural layout: coordinate for sparse storage,
/// array for dense. With `MtxSymmetry::Symmetric` only the lower triangle is
/// written and `m` must be exactly symmetric.
pub fn format_matrix_market(m: &Matrix, symmetry: MtxSymmetry) -> Result<String> {
    if symmetry == MtxSymmetry::Symmetric && !m.is_symmetric(0.0) {
        return Err(SketchError::NotSymmetric {
            asymmetry: m.to_dense().asymmetry(),
        });
    }
    let qual = match symmetry {
        MtxSymmetry::General => "general",
        MtxSymmetry::Symmetric => "symmetric",
    };
    let mut out = String::new();
    match m {
        Matrix::Sparse(s) => {
            let entries: Vec<(usize, usize, f64)> = s
                .triplets()
                .filter(|&(i, j, _)| symmetry == MtxSymmetry::General || i >= j)
                .collect();
            let _ = writeln!(out, "%%MatrixMarket matrix coordinate real {qual}");
            let _ = writeln!(out, "{} {} {}", s.rows(), s.cols(), entries.len());
            for (i, j, v) in entries {
                let _ = writeln!(out, "{} {} {:e}", i + 1, j + 1, v);
            }
        }
        Matrix::Dense(d) => {
            let _ = writeln!(out, "%%MatrixMarket matrix array real {qual}");
            let _ = writeln!(out, "{} {}", d.rows(), d.cols());
            for j in 0..d.cols() {
                let start = if symmetry == MtxSymmetry::Symmetric { j } else { 0 };
                for i in start..d.rows() {
                    let _ = writeln!(out, "{:e}", d[(i, j)]);
                }
            }
        }
    }
    Ok(out)
}

pub fn write_matrix_market(path: impl AsRef<Path>, m: &Matrix, symmetry: MtxSymmetry) -> Result<()> {
    let path = path.as_ref();
    let text = format_matrix_market(m, symmetry)?;
    std::fs::write(path, text).map_err(|e| SketchError::io(path, e))
}

/// Reads a vector stored as an `n×1` (or `1×n`) Matrix Market array or
/// coordinate file, or as plain whitespace-separated numbers.
pub fn read_vector(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| SketchError::io(path, e))?;
    if text.trim_start().starts_with("%%") {
        let m = parse_matrix_market(&text, path)?;
        if m.cols() != 1 && m.rows() != 1 {
            return Err(SketchError::Parse {
                path: path.to_path_buf(),
                line: 2,
                message: format!("expected a vector, found a {}×{} matrix", m.rows(), m.cols()),
            });
        }
        let d = m.to_dense();
        return Ok(d.into_vec());
    }
    let mut out = Vec::new();
    for (ln, l) in text.lines().enumerate() {
        let l = l.split(['#', '%']).next().unwrap_or("");
        for t in l.split_whitespace() {
            out.push(parse_real(t).ok_or_else(|| SketchError::Parse {
                path: path.to_path_buf(),
                line: ln + 1,
                message: format!("not a finite number: {t:?}"),
            })?);
        }
    }
    Ok(out)
}

pub fn write_vector(path: impl AsRef<Path>, v: &[f64]) -> Result<()> {
    let d = DenseMatrix::from_row_major(v.len(), 1, v.to_vec())?;
    write_matrix_market(path, &Matrix::Dense(d), MtxSymmetry::General)
}
