//! Matrix Market array format and headerless CSV.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::DenseMatrix;
use crate::error::{Error, ParseErrorKind, Result};

const MM_HEADER: &str = "%%MatrixMarket matrix array real general";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    MatrixMarket,
    Csv,
}

impl MatrixFormat {
    /// Guesses from the file extension: `.csv` is CSV, anything else Matrix Market.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => MatrixFormat::Csv,
            _ => MatrixFormat::MatrixMarket,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            MatrixFormat::MatrixMarket => "mtx",
            MatrixFormat::Csv => "csv",
        }
    }
}

impl FromStr for MatrixFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mm" | "mtx" | "matrix-market" => Ok(MatrixFormat::MatrixMarket),
            "csv" => Ok(MatrixFormat::Csv),
            other => Err(Error::InvalidArgument(format!("unknown matrix format `{other}`"))),
        }
    }
}

pub fn read_matrix(path: &Path, format: MatrixFormat) -> Result<DenseMatrix> {
    let text = fs::read_to_string(path)?;
    match format {
        MatrixFormat::MatrixMarket => parse_matrix_market(&text),
        MatrixFormat::Csv => parse_csv(&text),
    }
}

pub fn write_matrix(m: &DenseMatrix, path: &Path, format: MatrixFormat) -> Result<()> {
    m.ensure_finite()?;
    let text = match format {
        MatrixFormat::MatrixMarket => format_matrix_market(m),
        MatrixFormat::Csv => format_csv(m),
    };
    fs::write(path, text)?;
    Ok(())
}

// 17 significant digits round-trips every finite f64.
fn fmt_value(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_value(token: &str, line: usize) -> Result<f64> {
    let x: f64 = token
        .parse()
        .map_err(|_| Error::parse(line, ParseErrorKind::NonNumeric(token.to_string())))?;
    if !x.is_finite() {
        return Err(Error::parse(line, ParseErrorKind::NonFinite(token.to_string())));
    }
    Ok(x)
}

pub fn format_matrix_market(m: &DenseMatrix) -> String {
    let mut out = String::with_capacity(m.data().len() * 26 + 64);
    out.push_str(MM_HEADER);
    out.push('\n');
    let _ = writeln!(out, "{} {}", m.rows(), m.cols());
    for &x in m.data() {
        out.push_str(&fmt_value(x));
        out.push('\n');
    }
    out
}

pub fn parse_matrix_market(text: &str) -> Result<DenseMatrix> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));

    let (_, header) = lines.next().ok_or(Error::parse(1, ParseErrorKind::Empty))?;
    let tokens: Vec<String> = header
        .split_whitespace()
        .map(|t| t.to_ascii_lowercase())
        .collect();
    if tokens != ["%%matrixmarket", "matrix", "array", "real", "general"] {
        return Err(Error::parse(1, ParseErrorKind::MalformedHeader(header.trim().to_string())));
    }

    let mut body = lines.filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('%')
    });

    let (size_line, size) = body.next().ok_or(Error::parse(2, ParseErrorKind::Empty))?;
    let dims: Vec<&str> = size.split_whitespace().collect();
    let bad_size = || Error::parse(size_line, ParseErrorKind::MalformedHeader(size.trim().to_string()));
    if dims.len() != 2 {
        return Err(bad_size());
    }
    let rows: usize = dims[0].parse().map_err(|_| bad_size())?;
    let cols: usize = dims[1].parse().map_err(|_| bad_size())?;
    if rows == 0 || cols == 0 {
        return Err(bad_size());
    }

    let expected = rows * cols;
    let mut data = Vec::with_capacity(expected);
    let mut last_line = size_line;
    for (line, content) in body {
        last_line = line;
        for token in content.split_whitespace() {
            if data.len() == expected {
                return Err(Error::parse(
                    line,
                    ParseErrorKind::RecordCount {
                        expected,
                        found: expected + 1,
                    },
                ));
            }
            data.push(parse_value(token, line)?);
        }
    }
    if data.len() != expected {
        return Err(Error::parse(
            last_line,
            ParseErrorKind::RecordCount {
                expected,
                found: data.len(),
            },
        ));
    }
    DenseMatrix::from_col_major(rows, cols, data)
}

pub fn format_csv(m: &DenseMatrix) -> String {
    let mut out = String::with_capacity(m.data().len() * 26);
    for i in 0..m.rows() {
        let row: Vec<String> = (0..m.cols()).map(|j| fmt_value(m[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn parse_csv(text: &str) -> Result<DenseMatrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|t| parse_value(t.trim(), line_no))
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::parse(
                    line_no,
                    ParseErrorKind::RaggedRow {
                        expected: first.len(),
                        found: row.len(),
                    },
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::parse(1, ParseErrorKind::Empty));
    }
    DenseMatrix::from_rows(&rows)
}
