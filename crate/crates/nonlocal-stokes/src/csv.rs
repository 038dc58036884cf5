//! Deterministic CSV emission.
//!
//! Floats are written in scientific notation with 12 significant digits,
//! newline is `\n`, encoding UTF-8, no locale involvement anywhere. A NaN
//! serializes as the literal `nan` and is reported to the caller so the
//! run can flag it in its exit status. Missing values (e.g. the order
//! column on the first rung of a rate report) are empty fields.

use crate::error::Result;
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub enum CsvValue {
    Int(i64),
    Float(f64),
    Str(String),
    Missing,
}

impl From<f64> for CsvValue {
    fn from(x: f64) -> Self {
        CsvValue::Float(x)
    }
}

impl From<i64> for CsvValue {
    fn from(x: i64) -> Self {
        CsvValue::Int(x)
    }
}

impl From<usize> for CsvValue {
    fn from(x: usize) -> Self {
        CsvValue::Int(x as i64)
    }
}

impl From<&str> for CsvValue {
    fn from(s: &str) -> Self {
        CsvValue::Str(s.to_string())
    }
}

/// Scientific notation with 12 significant digits; `-0` normalizes to `0`,
/// NaN becomes the literal `nan`.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        return "nan".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".to_string() } else { "-inf".to_string() };
    }
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{x:.11e}")
}

fn render(value: &CsvValue) -> String {
    match value {
        CsvValue::Int(i) => i.to_string(),
        CsvValue::Float(x) => format_float(*x),
        CsvValue::Str(s) => s.clone(),
        CsvValue::Missing => String::new(),
    }
}

/// Render a whole document: header row then data rows.
pub fn render_csv(header: &[&str], rows: &[Vec<CsvValue>]) -> (String, bool) {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    let mut has_nan = false;
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        let rendered: Vec<String> = row
            .iter()
            .map(|v| {
                if matches!(v, CsvValue::Float(x) if x.is_nan()) {
                    has_nan = true;
                }
                render(v)
            })
            .collect();
        out.push_str(&rendered.join(","));
        out.push('\n');
    }
    (out, has_nan)
}

/// Write a document to disk; returns whether any NaN was serialized.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<CsvValue>]) -> Result<bool> {
    let (text, has_nan) = render_csv(header, rows);
    let mut file = std::fs::File::create(path)?;
    file.write_all(text.as_bytes())?;
    Ok(has_nan)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_is_twelve_significant_digits() {
        assert_eq!(format_float(12.566370614359172), "1.25663706144e1");
        assert_eq!(format_float(0.0), "0.00000000000e0");
        assert_eq!(format_float(-0.0), "0.00000000000e0");
        assert_eq!(format_float(-3.5e-7), "-3.50000000000e-7");
        assert_eq!(format_float(f64::NAN), "nan");
    }

    #[test]
    fn header_only_document() {
        let (text, has_nan) = render_csv(&["a", "b"], &[]);
        assert_eq!(text, "a,b\n");
        assert!(!has_nan);
    }

    #[test]
    fn identical_rows_render_identically() {
        let rows = vec![
            vec![CsvValue::Int(1), CsvValue::Float(0.25), CsvValue::Str("x".into())],
            vec![CsvValue::Int(2), CsvValue::Float(-1.5e-9), CsvValue::Missing],
        ];
        let (a, _) = render_csv(&["i", "v", "s"], &rows);
        let (b, _) = render_csv(&["i", "v", "s"], &rows);
        assert_eq!(a, b);
        assert_eq!(a, "i,v,s\n1,2.50000000000e-1,x\n2,-1.50000000000e-9,\n");
    }

    #[test]
    fn nan_is_flagged() {
        let rows = vec![vec![CsvValue::Float(f64::NAN)]];
        let (text, has_nan) = render_csv(&["v"], &rows);
        assert!(text.contains("nan"));
        assert!(has_nan);
    }
}
