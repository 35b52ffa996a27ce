//! Matrix CSV: row-major, headerless, 17 significant digits.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{validation_err, Result};

/// Formats `v` with 17 significant digits so that parsing it back is exact.
pub fn format_f64(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    format!("{v:.16e}")
}

pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format_f64(*v)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn matrix_from_csv(text: &str) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| validation_err(format!("line {}: {e}", k + 1)))?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(validation_err(format!("line {} has a different column count", k + 1)));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(validation_err("matrix CSV is empty"));
    }
    let (r, c) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_row_iterator(r, c, rows.into_iter().flatten()))
}

pub fn write_matrix(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    fs::write(path, matrix_to_csv(m))?;
    Ok(())
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    matrix_from_csv(&fs::read_to_string(path)?)
}
