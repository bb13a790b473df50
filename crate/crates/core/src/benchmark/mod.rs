//! Model-based oracles: closed-form prices, implied-volatility inversion, a
//! finite-difference pricer under the true dynamics, and Monte-Carlo
//! estimates through a given kernel.

pub mod black_scholes;
pub mod implied_vol;
pub mod iv_curve;
pub mod monte_carlo;
pub mod normal;
pub mod pde;

pub use black_scholes::{bs_price, bs_vega, price_bounds};
pub use implied_vol::implied_vol;
pub use iv_curve::{
    curves_to_csv, iv_curve, moneyness_grid, otm_kind, CurveDeviation, IvCurve, IvPoint, IvSource,
};
pub use monte_carlo::{mc_kernel_mean, mc_price_with_kernel, theoretical_log_value, McEstimate};
pub use normal::{norm_cdf, norm_pdf};
pub use pde::{fd_pde_price, fd_pde_price_at, PdeGrid, PdeSlice};
