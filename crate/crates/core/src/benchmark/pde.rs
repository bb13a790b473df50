//! Crank–Nicolson solver for the risk-neutral pricing equation
//!
//! ```text
//! V_tau = r s V_s + sigma(s)^2 s^2 V_ss / 2 - r V
//! ```
//!
//! in time to expiry `tau`, on a uniform price grid with Dirichlet
//! far-field values. The first steps are taken as implicit Euler half-steps
//! (Rannacher start) so the payoff kink does not leave undamped oscillations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{OptionKind, OptionSpec, SdeModel};
use crate::price_learner::payoff;

fn default_rannacher() -> usize {
    2
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdeGrid {
    pub s_min: f64,
    pub s_max: f64,
    /// Number of price intervals; the grid has `n_space + 1` nodes.
    pub n_space: usize,
    pub n_time: usize,
    /// Crank–Nicolson weight on the implicit side.
    pub theta: f64,
    /// Leading steps replaced by two implicit half-steps each.
    #[serde(default = "default_rannacher")]
    pub rannacher_steps: usize,
}

impl Default for PdeGrid {
    fn default() -> Self {
        Self {
            s_min: 0.2,
            s_max: 3.0,
            n_space: 600,
            n_time: 300,
            theta: 0.5,
            rannacher_steps: 2,
        }
    }
}

impl PdeGrid {
    pub fn with_sizes(self, n_space: usize, n_time: usize) -> Self {
        Self {
            n_space,
            n_time,
            ..self
        }
    }

    pub fn validate(&self, strike: f64) -> Result<()> {
        if !(self.s_min >= 0.0
            && self.s_min < strike
            && strike < self.s_max
            && self.s_max.is_finite())
        {
            return Err(Error::InvalidSpec(format!(
                "grid [{}, {}] must strictly contain the strike {strike}",
                self.s_min, self.s_max
            )));
        }
        if self.n_space < 2 || self.n_time < 2 {
            return Err(Error::InvalidSpec(
                "grid needs at least 2 space and 2 time steps".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::InvalidSpec(format!(
                "scheme weight {} outside [0, 1]",
                self.theta
            )));
        }
        if self.rannacher_steps > self.n_time {
            return Err(Error::InvalidSpec(
                "more start-up steps than time steps".into(),
            ));
        }
        Ok(())
    }

    pub fn nodes(&self) -> Vec<f64> {
        let h = self.spacing();
        (0..=self.n_space)
            .map(|i| self.s_min + i as f64 * h)
            .collect()
    }

    pub fn spacing(&self) -> f64 {
        (self.s_max - self.s_min) / self.n_space as f64
    }
}

/// Values on the grid nodes at one time to expiry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeSlice {
    pub s: Vec<f64>,
    pub values: Vec<f64>,
    pub tau: f64,
}

impl PdeSlice {
    /// Linear interpolation between nodes.
    pub fn value_at(&self, s: f64) -> Result<f64> {
        let (lo, hi) = (self.s[0], self.s[self.s.len() - 1]);
        if !(s >= lo && s <= hi) {
            return Err(Error::Domain(format!(
                "price {s} outside the grid [{lo}, {hi}]"
            )));
        }
        let h = (hi - lo) / (self.s.len() - 1) as f64;
        let i = (((s - lo) / h).floor() as usize).min(self.s.len() - 2);
        let w = (s - self.s[i]) / h;
        Ok((1.0 - w) * self.values[i] + w * self.values[i + 1])
    }
}

/// Time-0 value slice for the option's maturity.
pub fn fd_pde_price(
    model: &SdeModel,
    option: &OptionSpec,
    r: f64,
    grid: &PdeGrid,
) -> Result<PdeSlice> {
    fd_pde_price_at(model, option, r, grid, option.maturity)
}

/// Value slice at time to expiry `tau`; `tau = 0` returns the payoff.
pub fn fd_pde_price_at(
    model: &SdeModel,
    option: &OptionSpec,
    r: f64,
    grid: &PdeGrid,
    tau: f64,
) -> Result<PdeSlice> {
    grid.validate(option.strike)?;
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::Domain(format!(
            "time to expiry must be non-negative, got {tau}"
        )));
    }
    let s = grid.nodes();
    let mut v: Vec<f64> = s.iter().map(|&x| payoff(option, x)).collect();
    if tau == 0.0 {
        return Ok(PdeSlice { s, values: v, tau });
    }
    let h = grid.spacing();
    let n = grid.n_space;
    // interior operator coefficients: (L V)_i = a_i V_{i-1} + b_i V_i + c_i V_{i+1}
    let mut a = vec![0.0; n + 1];
    let mut b = vec![0.0; n + 1];
    let mut c = vec![0.0; n + 1];
    for i in 1..n {
        let x = s[i];
        let sigma = model.vol_rate(x).map_err(|e| Error::Singularity {
            s: x,
            reason: e.to_string(),
        })?;
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Singularity {
                s: x,
                reason: format!("volatility {sigma} on the grid"),
            });
        }
        let diff = 0.5 * sigma * sigma * x * x / (h * h);
        let conv = r * x / (2.0 * h);
        a[i] = diff - conv;
        b[i] = -2.0 * diff - r;
        c[i] = diff + conv;
    }
    let boundary = |t: f64| -> (f64, f64) {
        let disc_k = option.strike * (-r * t).exp();
        match option.kind {
            OptionKind::Call => (0.0, grid.s_max - disc_k),
            OptionKind::Put => ((disc_k - grid.s_min).max(0.0), 0.0),
        }
    };
    let dtau = tau / grid.n_time as f64;
    let mut t = 0.0;
    let mut work = Workspace::new(n + 1);
    for step in 0..grid.n_time {
        if step < grid.rannacher_steps {
            for _ in 0..2 {
                t += 0.5 * dtau;
                theta_step(&mut v, &a, &b, &c, 1.0, 0.5 * dtau, boundary(t), &mut work)?;
            }
        } else {
            t += dtau;
            theta_step(&mut v, &a, &b, &c, grid.theta, dtau, boundary(t), &mut work)?;
        }
    }
    Ok(PdeSlice { s, values: v, tau })
}

struct Workspace {
    rhs: Vec<f64>,
    c_star: Vec<f64>,
}

impl Workspace {
    fn new(len: usize) -> Self {
        Self {
            rhs: vec![0.0; len],
            c_star: vec![0.0; len],
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn theta_step(
    v: &mut [f64],
    a: &[f64],
    b: &[f64],
    c: &[f64],
    theta: f64,
    dt: f64,
    (left, right): (f64, f64),
    work: &mut Workspace,
) -> Result<()> {
    let n = v.len() - 1;
    let explicit = (1.0 - theta) * dt;
    for i in 1..n {
        work.rhs[i] = v[i] + explicit * (a[i] * v[i - 1] + b[i] * v[i] + c[i] * v[i + 1]);
    }
    let imp = theta * dt;
    work.rhs[1] += imp * a[1] * left;
    work.rhs[n - 1] += imp * c[n - 1] * right;
    // Thomas algorithm on rows 1..n-1 of (I - imp L)
    let lower = |i: usize| -imp * a[i];
    let diag = |i: usize| 1.0 - imp * b[i];
    let upper = |i: usize| -imp * c[i];
    let mut denom = diag(1);
    work.c_star[1] = upper(1) / denom;
    work.rhs[1] /= denom;
    for i in 2..n {
        denom = diag(i) - lower(i) * work.c_star[i - 1];
        if denom == 0.0 || !denom.is_finite() {
            return Err(Error::Singularity {
                s: f64::NAN,
                reason: "singular pricing system".into(),
            });
        }
        work.c_star[i] = upper(i) / denom;
        work.rhs[i] = (work.rhs[i] - lower(i) * work.rhs[i - 1]) / denom;
    }
    v[n - 1] = work.rhs[n - 1];
    for i in (1..n - 1).rev() {
        v[i] = work.rhs[i] - work.c_star[i] * v[i + 1];
    }
    v[0] = left;
    v[n] = right;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmark::black_scholes::bs_price;
    use crate::market_data::ImpliedVolFn;

    fn call() -> OptionSpec {
        OptionSpec::new(OptionKind::Call, 1.0, 0.1).unwrap()
    }

    fn max_central_error(slice: &PdeSlice, option: &OptionSpec, sigma: f64, r: f64) -> f64 {
        let (lo, hi) = (slice.s[0], slice.s[slice.s.len() - 1]);
        let (c_lo, c_hi) = (lo + 0.25 * (hi - lo), hi - 0.25 * (hi - lo));
        slice
            .s
            .iter()
            .zip(&slice.values)
            .filter(|(s, _)| **s >= c_lo && **s <= c_hi)
            .map(|(&s, &v)| (v - bs_price(option, s, r, 0.0, sigma, slice.tau)).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn constant_vol_matches_closed_form() {
        let model = SdeModel::gbm(0.1, 0.2).unwrap();
        let grid = PdeGrid::default().with_sizes(400, 200);
        for kind in [OptionKind::Call, OptionKind::Put] {
            let opt = call().with_kind(kind);
            let slice = fd_pde_price(&model, &opt, 0.019, &grid).unwrap();
            assert!(max_central_error(&slice, &opt, 0.2, 0.019) < 1e-3);
        }
    }

    #[test]
    fn second_order_in_space() {
        let model = SdeModel::gbm(0.1, 0.2).unwrap();
        let opt = call();
        let errs: Vec<f64> = [140, 280, 560]
            .iter()
            .map(|&n| {
                let slice = fd_pde_price(
                    &model,
                    &opt,
                    0.019,
                    &PdeGrid::default().with_sizes(n, 4 * n),
                )
                .unwrap();
                max_central_error(&slice, &opt, 0.2, 0.019)
            })
            .collect();
        for w in errs.windows(2) {
            assert!((w[0] / w[1]).log2() > 1.8, "{errs:?}");
        }
    }

    #[test]
    fn zero_expiry_is_payoff() {
        let slice = fd_pde_price_at(
            &SdeModel::cir_default(),
            &call(),
            0.019,
            &PdeGrid::default(),
            0.0,
        )
        .unwrap();
        for (s, v) in slice.s.iter().zip(&slice.values) {
            assert_eq!(*v, (s - 1.0f64).max(0.0));
        }
    }

    #[test]
    fn monotone_in_price() {
        for model in [SdeModel::cir_default(), SdeModel::glv_default()] {
            let c = fd_pde_price(&model, &call(), 0.019, &PdeGrid::default()).unwrap();
            assert!(c.values.windows(2).all(|w| w[1] >= w[0] - 1e-12));
            let p = fd_pde_price(
                &model,
                &call().with_kind(OptionKind::Put),
                0.019,
                &PdeGrid::default(),
            )
            .unwrap();
            assert!(p.values.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        }
    }

    #[test]
    fn interpolation() {
        let slice = PdeSlice {
            s: vec![1.0, 2.0, 3.0],
            values: vec![0.0, 1.0, 4.0],
            tau: 0.1,
        };
        assert_eq!(slice.value_at(2.5).unwrap(), 2.5);
        assert_eq!(slice.value_at(3.0).unwrap(), 4.0);
        assert!(slice.value_at(3.5).is_err());
    }

    #[test]
    fn invalid_grids() {
        let model = SdeModel::cir_default();
        let bad = [
            PdeGrid {
                s_min: 1.1,
                ..PdeGrid::default()
            },
            PdeGrid {
                s_max: 0.9,
                ..PdeGrid::default()
            },
            PdeGrid::default().with_sizes(1, 10),
            PdeGrid {
                theta: 1.5,
                ..PdeGrid::default()
            },
        ];
        for g in bad {
            assert!(matches!(
                fd_pde_price(&model, &call(), 0.019, &g),
                Err(Error::InvalidSpec(_))
            ));
        }
    }

    #[test]
    fn degenerate_volatility_is_reported() {
        // a strongly concave smile drives the local-variance denominator negative
        let iv = ImpliedVolFn::new((-50.0, 100.0, -49.5), 0.95, 1.05, 0.375, 0.375).unwrap();
        let model = SdeModel::glv(3.0, 0.98, iv, 0.1, 0.019).unwrap();
        assert!(matches!(
            fd_pde_price(&model, &call(), 0.019, &PdeGrid::default()),
            Err(Error::Singularity { .. })
        ));
    }
}
