//! Plain CSV tables with a header row.

use std::fmt::Write as _;
use std::path::Path;

use crate::benchmark::PdeSlice;
use crate::error::{Error, Result};

/// Columns of equal length rendered as CSV, numbers in shortest round-trip form.
pub fn columns_to_csv(header: &[&str], columns: &[&[f64]]) -> Result<String> {
    if header.len() != columns.len() {
        return Err(Error::Shape {
            expected: header.len(),
            got: columns.len(),
        });
    }
    let rows = columns.first().map_or(0, |c| c.len());
    if let Some(c) = columns.iter().find(|c| c.len() != rows) {
        return Err(Error::Shape {
            expected: rows,
            got: c.len(),
        });
    }
    let mut out = header.join(",");
    out.push('\n');
    for i in 0..rows {
        for (k, c) in columns.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            write!(out, "{}", c[i]).expect("writing to a String cannot fail");
        }
        out.push('\n');
    }
    Ok(out)
}

/// `s,V0` table of a learned price curve.
pub fn price_curve_csv(curve: &[(f64, f64)]) -> String {
    let (s, v): (Vec<f64>, Vec<f64>) = curve.iter().copied().unzip();
    columns_to_csv(&["s", "V0"], &[&s, &v]).expect("columns have equal length")
}

/// `s,price` table of a finite-difference slice.
pub fn pde_slice_csv(slice: &PdeSlice) -> String {
    columns_to_csv(&["s", "price"], &[&slice.s, &slice.values])
        .expect("slice columns have equal length")
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}
