//! Monte-Carlo oracles on fresh objective-measure paths.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel_learner::{terminal_kernels, theoretical_policy, Policy};
use crate::market_data::{
    simulate_paths, simulate_trajectory, steps_for_maturity, OptionSpec, SdeModel, WindowSet,
};
use crate::price_learner::payoff;

/// Paths simulated and priced together; bounds memory and keeps the policy
/// evaluations batched.
const PATH_CHUNK: usize = 4096;

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
}

impl McEstimate {
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        let n = samples.len();
        if n < 2 {
            return Err(Error::Size("an estimate needs at least 2 samples".into()));
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Ok(Self {
            mean,
            std_error: (var / n as f64).sqrt(),
            n_paths: n,
        })
    }

    /// Distance to `x` in standard errors.
    pub fn z_score(&self, x: f64) -> f64 {
        (self.mean - x) / self.std_error
    }
}

/// Price `E[h(S_N) rho_N]` with `rho` built by `policy` along simulated paths
/// from `s0`; `N = round(maturity / dt)`. Path `i` uses seed `seed + i`.
#[allow(clippy::too_many_arguments)]
pub fn mc_price_with_kernel<P: Policy + ?Sized>(
    model: &SdeModel,
    policy: &P,
    s0: f64,
    option: &OptionSpec,
    r: f64,
    dt: f64,
    n_paths: usize,
    seed: u64,
) -> Result<McEstimate> {
    option.validate()?;
    let n_steps = steps_for_maturity(option.maturity, dt)?;
    let samples = kernel_weighted(model, policy, s0, r, dt, n_steps, n_paths, seed, |s| {
        payoff(option, s)
    })?;
    McEstimate::from_samples(&samples)
}

/// Mean of `rho_N` alone over simulated paths of `n_steps` steps.
#[allow(clippy::too_many_arguments)]
pub fn mc_kernel_mean<P: Policy + ?Sized>(
    model: &SdeModel,
    policy: &P,
    s0: f64,
    r: f64,
    dt: f64,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
) -> Result<McEstimate> {
    let samples = kernel_weighted(model, policy, s0, r, dt, n_steps, n_paths, seed, |_| 1.0)?;
    McEstimate::from_samples(&samples)
}

#[allow(clippy::too_many_arguments)]
fn kernel_weighted<P: Policy + ?Sized>(
    model: &SdeModel,
    policy: &P,
    s0: f64,
    r: f64,
    dt: f64,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
    weight: impl Fn(f64) -> f64,
) -> Result<Vec<f64>> {
    let mut samples = Vec::with_capacity(n_paths);
    let mut done = 0;
    while done < n_paths {
        let count = PATH_CHUNK.min(n_paths - done);
        let paths = simulate_paths(
            model,
            s0,
            dt,
            n_steps,
            count,
            seed.wrapping_add(done as u64),
        )?;
        let windows = WindowSet::from_trajectories(&paths)?;
        let kernels = terminal_kernels(policy, &windows, r)?;
        samples.extend(
            windows
                .iter()
                .zip(kernels)
                .map(|(w, rho)| weight(w[n_steps]) * rho),
        );
        done += count;
    }
    Ok(samples)
}

/// Maximal expected log-wealth over `N` steps, `r T + E[sum theta(S_n)^2 dt / 2]`,
/// with `theta = (mu - r) / sigma` along simulated paths.
pub fn theoretical_log_value(
    model: &SdeModel,
    r: f64,
    s0: f64,
    dt: f64,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
) -> Result<McEstimate> {
    let policy = theoretical_policy(model, r);
    let samples: Vec<f64> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let path = simulate_trajectory(model, s0, dt, n_steps, seed.wrapping_add(i as u64))?;
            let mut acc = 0.0;
            for &s in &path.prices()[..n_steps] {
                let theta = policy.market_price_of_risk(s)?;
                acc += 0.5 * theta * theta * dt;
            }
            Ok(r * n_steps as f64 * dt + acc)
        })
        .collect::<Result<_>>()?;
    McEstimate::from_samples(&samples)
}
