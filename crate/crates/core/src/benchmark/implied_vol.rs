use super::black_scholes::{bs_price, bs_vega, price_bounds};
use crate::error::{Error, Result};
use crate::market_data::OptionSpec;

pub const VOL_MIN: f64 = 1e-4;
pub const VOL_MAX: f64 = 5.0;
/// Price residual every returned volatility satisfies.
pub const PRICE_TOLERANCE: f64 = 1e-10;

/// Inverts the Black–Scholes formula by Newton's method safeguarded with a
/// bisection bracket on `[VOL_MIN, VOL_MAX]`.
pub fn implied_vol(
    option: &OptionSpec,
    price: f64,
    s: f64,
    r: f64,
    q: f64,
    tau: f64,
) -> Result<f64> {
    if !(s > 0.0 && tau > 0.0 && price.is_finite()) {
        return Err(Error::NoSolution(format!(
            "invalid inputs s={s}, tau={tau}, price={price}"
        )));
    }
    let (lower, upper) = price_bounds(option, s, r, q, tau);
    if price <= lower || price >= upper {
        return Err(Error::NoSolution(format!(
            "price {price:e} outside the no-arbitrage interval ({lower:e}, {upper:e})"
        )));
    }
    let f = |sig: f64| bs_price(option, s, r, q, sig, tau) - price;
    let (mut lo, mut hi) = (VOL_MIN, VOL_MAX);
    if f(lo) > 0.0 || f(hi) < 0.0 {
        return Err(Error::NoSolution(format!(
            "price {price:e} needs a volatility outside [{VOL_MIN}, {VOL_MAX}]"
        )));
    }
    let mut sig = 0.2_f64.clamp(lo, hi);
    for _ in 0..200 {
        let diff = f(sig);
        if diff == 0.0 {
            return Ok(sig);
        }
        if diff > 0.0 {
            hi = sig;
        } else {
            lo = sig;
        }
        let vega = bs_vega(option, s, r, q, sig, tau);
        let newton = sig - diff / vega;
        let next = if vega > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - sig).abs() <= 1e-15 * sig.max(1.0) || hi - lo <= 1e-15 {
            sig = next;
            break;
        }
        sig = next;
    }
    let residual = f(sig).abs();
    if residual < PRICE_TOLERANCE {
        Ok(sig)
    } else {
        Err(Error::NoSolution(format!(
            "inversion stalled with residual {residual:e}"
        )))
    }
}
