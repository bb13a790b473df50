use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::simulate::PriceTrajectory;
use crate::error::{Error, Result};

/// Reads one positive decimal price per line. A first line starting with a
/// character that cannot begin a number is treated as a header. Blank lines
/// are ignored.
pub fn load_prices(path: &Path, dt: f64) -> Result<PriceTrajectory> {
    let text = fs::read_to_string(path)?;
    parse_prices(&text, dt).map_err(|e| match e {
        Error::Ingestion { line, message, .. } => Error::Ingestion {
            path: path.to_path_buf(),
            line,
            message,
        },
        other => other,
    })
}

pub fn parse_prices(text: &str, dt: f64) -> Result<PriceTrajectory> {
    let mut prices = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if idx == 0 && is_header(line) {
            continue;
        }
        let value: f64 = line.parse().map_err(|_| Error::Ingestion {
            path: Default::default(),
            line: idx + 1,
            message: format!("cannot parse {line:?} as a price"),
        })?;
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::Ingestion {
                path: Default::default(),
                line: idx + 1,
                message: format!("price {value} is not positive"),
            });
        }
        prices.push(value);
    }
    if prices.len() < 2 {
        return Err(Error::Size(format!(
            "price file holds {} prices, need at least 2",
            prices.len()
        )));
    }
    PriceTrajectory::new(prices, dt)
}

fn is_header(line: &str) -> bool {
    line.chars()
        .next()
        .is_some_and(|c| !(c.is_ascii_digit() || matches!(c, '-' | '+' | '.')))
}

/// Writes prices in the format `load_prices` reads, with a `price` header.
pub fn write_prices(path: &Path, traj: &PriceTrajectory) -> Result<()> {
    let mut out = String::with_capacity(traj.len() * 20 + 6);
    out.push_str("price\n");
    for p in traj.prices() {
        writeln!(out, "{p}").expect("writing to a String");
    }
    fs::write(path, out)?;
    Ok(())
}
