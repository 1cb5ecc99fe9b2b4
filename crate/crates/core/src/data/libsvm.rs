use std::fs;
use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};

/// Reads a sparse `label idx:value ...` file with 1-based indices into a
/// dense dataset. The dimension is the largest index seen, or `min_dim` if
/// that is larger.
pub fn parse_libsvm(path: &Path, min_dim: Option<usize>) -> Result<Dataset> {
    let text = fs::read(path)?;
    let text = String::from_utf8(text).map_err(|_| Error::Format {
        path: path.to_path_buf(),
        msg: "file is not valid UTF-8".into(),
    })?;
    parse_str(&text, path, min_dim)
}

pub(crate) fn parse_str(text: &str, path: &Path, min_dim: Option<usize>) -> Result<Dataset> {
    let err = |line: usize, msg: String| Error::Parse { path: path.to_path_buf(), line, msg };
    let mut labels = Vec::new();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut d = min_dim.unwrap_or(0);
    for (ln, raw) in text.lines().enumerate() {
        let line_no = ln + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut toks = line.split_whitespace();
        let label_tok = toks.next().unwrap();
        let label: f64 = label_tok
            .parse()
            .map_err(|_| err(line_no, format!("bad label {label_tok:?}")))?;
        if !label.is_finite() {
            return Err(err(line_no, format!("non-finite label {label_tok:?}")));
        }
        let mut row = Vec::new();
        let mut prev = 0usize;
        for tok in toks {
            let (i, v) = tok
                .split_once(':')
                .ok_or_else(|| err(line_no, format!("expected idx:value, got {tok:?}")))?;
            let i: usize = i.parse().map_err(|_| err(line_no, format!("bad index {i:?}")))?;
            if i == 0 {
                return Err(err(line_no, "feature index 0 (indices are 1-based)".into()));
            }
            if i <= prev {
                return Err(err(line_no, format!("index {i} is not increasing")));
            }
            prev = i;
            let v: f64 = v.parse().map_err(|_| err(line_no, format!("bad value {v:?}")))?;
            if !v.is_finite() {
                return Err(err(line_no, format!("non-finite value at index {i}")));
            }
            d = d.max(i);
            row.push((i - 1, v));
        }
        labels.push(label);
        rows.push(row);
    }
    let mut features = vec![0.0; rows.len() * d];
    for (r, row) in rows.iter().enumerate() {
        for &(j, v) in row {
            features[r * d + j] = v;
        }
    }
    Dataset::new(d, features, labels, None)
}
