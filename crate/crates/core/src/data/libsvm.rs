use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Rows of `(feature index, value)` pairs with 1-based, strictly increasing
/// indices, and labels mapped to `{1, 2}` (smaller raw label to 1).
#[derive(Clone, Debug, PartialEq)]
pub struct SparseDataset {
    pub rows: Vec<Vec<(usize, f64)>>,
    pub labels: Vec<u8>,
    /// Raw label values mapped to classes 1 and 2.
    pub raw_labels: [f64; 2],
    /// Largest feature index.
    pub d: usize,
}

impl SparseDataset {
    pub fn n(&self) -> usize {
        self.rows.len()
    }
}

fn parse_error(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Parses LIBSVM text. Everything after `#` on a line is ignored, as are
/// blank lines.
pub fn parse_libsvm<R: Read>(source: R) -> Result<SparseDataset> {
    let reader = BufReader::new(source);
    let mut rows = Vec::new();
    let mut raw = Vec::new();
    let mut classes: Vec<f64> = Vec::with_capacity(2);
    let mut d = 0;
    for (k, line) in reader.lines().enumerate() {
        let lineno = k + 1;
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line has a token");
        let label: f64 = label_tok
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| parse_error(lineno, format!("invalid label `{label_tok}`")))?;
        if !classes.contains(&label) {
            if classes.len() == 2 {
                return Err(parse_error(
                    lineno,
                    format!("third class `{label_tok}`; only two-class data is supported"),
                ));
            }
            classes.push(label);
        }
        let mut row = Vec::new();
        let mut last = 0usize;
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| parse_error(lineno, format!("expected index:value, got `{tok}`")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| parse_error(lineno, format!("invalid feature index `{idx}`")))?;
            if idx == 0 {
                return Err(parse_error(lineno, "feature indices start at 1"));
            }
            if idx <= last {
                return Err(parse_error(
                    lineno,
                    format!("feature index {idx} does not increase (previous {last})"),
                ));
            }
            let val: f64 = val
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| parse_error(lineno, format!("invalid feature value `{val}`")))?;
            last = idx;
            row.push((idx, val));
        }
        d = d.max(last);
        rows.push(row);
        raw.push(label);
    }
    if classes.len() != 2 {
        return Err(parse_error(0, format!("expected two classes, found {}", classes.len())));
    }
    classes.sort_by(f64::total_cmp);
    let labels = raw.iter().map(|&v| if v == classes[0] { 1 } else { 2 }).collect();
    Ok(SparseDataset {
        rows,
        labels,
        raw_labels: [classes[0], classes[1]],
        d,
    })
}

pub fn read_libsvm(path: &Path) -> Result<SparseDataset> {
    parse_libsvm(std::fs::File::open(path)?)
}

/// Writes `data` in LIBSVM format with raw labels; values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_libsvm<W: Write>(data: &SparseDataset, mut out: W) -> Result<()> {
    for (row, &label) in data.rows.iter().zip(&data.labels) {
        write!(out, "{}", data.raw_labels[usize::from(label - 1)])?;
        for (idx, val) in row {
            write!(out, " {idx}:{val}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}
