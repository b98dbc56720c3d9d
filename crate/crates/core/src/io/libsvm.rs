//! LIBSVM text datasets: one sample per line, `label idx:val idx:val ...`
//! with 1-based strictly increasing feature indices.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Result, SketchError};
use crate::linalg::SparseMatrix;

pub fn read_libsvm(path: impl AsRef<Path>) -> Result<(SparseMatrix, Vec<f64>)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| SketchError::io(path, e))?;
    parse_libsvm(&text, path)
}

/// Blank lines and `#` comments are skipped. The feature dimension is the
/// largest index seen.
pub fn parse_libsvm(text: &str, origin: &Path) -> Result<(SparseMatrix, Vec<f64>)> {
    let fail = |line: usize, message: String| SketchError::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut triplets = Vec::new();
    let mut labels = Vec::new();
    let mut cols = 0usize;
    for (ln, raw) in text.lines().enumerate() {
        let ln = ln + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line");
        let label = finite(label_tok).ok_or_else(|| fail(ln, format!("non-numeric label {label_tok:?}")))?;
        let row = labels.len();
        labels.push(label);
        let mut prev = 0usize;
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| fail(ln, format!("expected idx:val, found {tok:?}")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| fail(ln, format!("non-numeric feature index in {tok:?}")))?;
            let val = finite(val).ok_or_else(|| fail(ln, format!("non-numeric feature value in {tok:?}")))?;
            if idx == 0 {
                return Err(fail(ln, "feature indices are 1-based".into()));
            }
            if idx <= prev {
                return Err(fail(ln, format!("feature index {idx} does not increase past {prev}")));
            }
            prev = idx;
            cols = cols.max(idx);
            triplets.push((row, idx - 1, val));
        }
    }
    let a = SparseMatrix::from_triplets(labels.len(), cols, &triplets)?;
    Ok((a, labels))
}

pub fn format_libsvm(a: &SparseMatrix, labels: &[f64]) -> Result<String> {
    if labels.len() != a.rows() {
        return Err(SketchError::dims("libsvm labels", a.rows(), labels.len()));
    }
    let mut out = String::new();
    for (i, label) in labels.iter().enumerate() {
        let _ = write!(out, "{label}");
        let (idx, val) = a.row(i);
        for (j, v) in idx.iter().zip(val) {
            let _ = write!(out, " {}:{v:e}", j + 1);
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_libsvm(path: impl AsRef<Path>, a: &SparseMatrix, labels: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let text = format_libsvm(a, labels)?;
    std::fs::write(path, text).map_err(|e| SketchError::io(path, e))
}

fn finite(t: &str) -> Option<f64> {
    t.parse::<f64>().ok().filter(|v| v.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMatrix;

    fn parse(text: &str) -> Result<(SparseMatrix, Vec<f64>)> {
        parse_libsvm(text, Path::new("data.libsvm"))
    }

    #[test]
    fn single_line() {
        let (a, y) = parse("1 1:0.5 3:2.0\n").unwrap();
        assert_eq!(y, vec![1.0]);
        assert_eq!(a.to_dense(), DenseMatrix::from_rows(&[vec![0.5, 0.0, 2.0]]));
    }

    #[test]
    fn label_only_line_is_a_zero_row() {
        let (a, y) = parse("-1\n+1 2:1\n").unwrap();
        assert_eq!(y, vec![-1.0, 1.0]);
        assert_eq!(a.row(0).0.len(), 0);
        assert_eq!(a.cols(), 2);
    }

    #[test]
    fn dimension_is_max_index() {
        let (a, _) = parse("1 4:1\n0 2:1\n").unwrap();
        assert_eq!((a.rows(), a.cols()), (2, 4));
    }

    #[test]
    fn rejects_bad_tokens() {
        assert!(parse("x 1:1\n").is_err());
        assert!(parse("1 a:1\n").is_err());
        assert!(parse("1 1:zz\n").is_err());
        assert!(parse("1 3:1 2:1\n").is_err());
        assert!(parse("1 2:1 2:1\n").is_err());
        assert!(parse("1 0:1\n").is_err());
        let err = parse("1 1:1\n1 3:1 2:1\n").unwrap_err();
        assert!(matches!(err, SketchError::Parse { line: 2, .. }));
    }

    #[test]
    fn round_trip() {
        let (a, y) = parse("1 1:0.25 3:-2\n-1\n0.5 2:1e-3\n").unwrap();
        let (b, z) = parse(&format_libsvm(&a, &y).unwrap()).unwrap();
        assert_eq!(a, b);
        assert_eq!(y, z);
    }
}
