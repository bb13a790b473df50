use super::normal::{norm_cdf, norm_pdf};
use crate::market_data::{OptionKind, OptionSpec};

fn d1_d2(s: f64, k: f64, r: f64, q: f64, sigma: f64, tau: f64) -> (f64, f64) {
    let vol_sqrt = sigma * tau.sqrt();
    let d1 = ((s / k).ln() + (r - q + 0.5 * sigma * sigma) * tau) / vol_sqrt;
    (d1, d1 - vol_sqrt)
}

/// Black–Scholes value of a European option with continuous dividend
/// yield `q` and time to expiry `tau` (the option's own maturity is ignored).
pub fn bs_price(option: &OptionSpec, s: f64, r: f64, q: f64, sigma: f64, tau: f64) -> f64 {
    let k = option.strike;
    let fwd_s = s * (-q * tau).exp();
    let disc_k = k * (-r * tau).exp();
    let (d1, d2) = d1_d2(s, k, r, q, sigma, tau);
    match option.kind {
        OptionKind::Call => fwd_s * norm_cdf(d1) - disc_k * norm_cdf(d2),
        OptionKind::Put => disc_k * norm_cdf(-d2) - fwd_s * norm_cdf(-d1),
    }
}

/// Derivative of the price with respect to `sigma`.
pub fn bs_vega(option: &OptionSpec, s: f64, r: f64, q: f64, sigma: f64, tau: f64) -> f64 {
    let (d1, _) = d1_d2(s, option.strike, r, q, sigma, tau);
    s * (-q * tau).exp() * norm_pdf(d1) * tau.sqrt()
}

/// No-arbitrage price interval `[discounted intrinsic, upper bound]`.
pub fn price_bounds(option: &OptionSpec, s: f64, r: f64, q: f64, tau: f64) -> (f64, f64) {
    let fwd_s = s * (-q * tau).exp();
    let disc_k = option.strike * (-r * tau).exp();
    match option.kind {
        OptionKind::Call => ((fwd_s - disc_k).max(0.0), fwd_s),
        OptionKind::Put => ((disc_k - fwd_s).max(0.0), disc_k),
    }
}
