//! Implied-volatility curves against moneyness `S / K`.
//!
//! Out-of-the-money quotes are inverted: calls below moneyness one, puts
//! above it, and the option's own kind at exactly one. Points whose price
//! cannot be inverted are kept as gaps.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::implied_vol::implied_vol;
use crate::error::{Error, Result};
use crate::market_data::{OptionKind, OptionSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IvSource {
    Learned,
    PdeBenchmark,
    McKernel,
}

impl std::fmt::Display for IvSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            IvSource::Learned => "learned",
            IvSource::PdeBenchmark => "pde_benchmark",
            IvSource::McKernel => "mc_kernel",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IvPoint {
    pub moneyness: f64,
    /// `None` marks a gap.
    pub implied_vol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IvCurve {
    pub source: IvSource,
    pub points: Vec<IvPoint>,
}

/// Largest absolute difference between two curves over a moneyness range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveDeviation {
    pub max_abs: f64,
    pub compared: usize,
    pub gaps: usize,
}

/// Kind of the out-of-the-money quote used at moneyness `m`.
pub fn otm_kind(m: f64, default: OptionKind) -> OptionKind {
    if m < 1.0 {
        OptionKind::Call
    } else if m > 1.0 {
        OptionKind::Put
    } else {
        default
    }
}

/// `n` evenly spaced moneyness values from `lo` to `hi` inclusive.
pub fn moneyness_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo) || n < 2 {
        return Err(Error::InvalidSpec(format!(
            "bad moneyness grid [{lo}, {hi}] with {n} points"
        )));
    }
    Ok((0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect())
}

/// Inverts `price_fn(option, s)` at `s = m K` for every grid point, with
/// time to expiry `option.maturity` and no dividends.
pub fn iv_curve(
    price_fn: impl Fn(&OptionSpec, f64) -> Result<f64>,
    option: &OptionSpec,
    r: f64,
    moneyness: &[f64],
    source: IvSource,
) -> IvCurve {
    let points = moneyness
        .iter()
        .map(|&m| {
            let quote = option.with_kind(otm_kind(m, option.kind));
            let s = m * option.strike;
            let implied_vol = price_fn(&quote, s)
                .and_then(|p| implied_vol(&quote, p, s, r, 0.0, option.maturity))
                .ok();
            IvPoint {
                moneyness: m,
                implied_vol,
            }
        })
        .collect();
    IvCurve { source, points }
}

impl IvCurve {
    pub fn gap_count(&self) -> usize {
        self.points
            .iter()
            .filter(|p| p.implied_vol.is_none())
            .count()
    }

    /// Compares with `other` on grid points in `[lo, hi]` present in both.
    pub fn deviation(&self, other: &IvCurve, lo: f64, hi: f64) -> Result<CurveDeviation> {
        if self.points.len() != other.points.len()
            || self
                .points
                .iter()
                .zip(&other.points)
                .any(|(a, b)| a.moneyness != b.moneyness)
        {
            return Err(Error::Shape {
                expected: self.points.len(),
                got: other.points.len(),
            });
        }
        let mut out = CurveDeviation {
            max_abs: 0.0,
            compared: 0,
            gaps: 0,
        };
        for (a, b) in self.points.iter().zip(&other.points) {
            if a.moneyness < lo - 1e-12 || a.moneyness > hi + 1e-12 {
                continue;
            }
            match (a.implied_vol, b.implied_vol) {
                (Some(x), Some(y)) => {
                    out.compared += 1;
                    out.max_abs = out.max_abs.max((x - y).abs());
                }
                _ => out.gaps += 1,
            }
        }
        Ok(out)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("moneyness,implied_vol,source,gap_flag\n");
        for p in &self.points {
            match p.implied_vol {
                Some(v) => writeln!(out, "{},{},{},0", p.moneyness, v, self.source),
                None => writeln!(out, "{},,{},1", p.moneyness, self.source),
            }
            .expect("writing to a String cannot fail");
        }
        out
    }
}

/// Several curves in one table; they must share a moneyness grid.
pub fn curves_to_csv(curves: &[IvCurve]) -> Result<String> {
    let mut out = String::from("moneyness,implied_vol,source,gap_flag\n");
    for c in curves {
        if let Some(first) = curves.first() {
            c.deviation(first, f64::NEG_INFINITY, f64::INFINITY)?;
        }
        out.push_str(c.to_csv().split_once('\n').map_or("", |(_, body)| body));
    }
    Ok(out)
}
