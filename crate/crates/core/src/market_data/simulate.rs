use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::SdeModel;
use crate::error::{Error, Result};

/// Floor at which drift and diffusion are evaluated (full truncation).
pub const POSITIVITY_FLOOR: f64 = 1e-8;

/// An ordered series of strictly positive prices sampled every `dt` years.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceTrajectory {
    prices: Vec<f64>,
    dt: f64,
}

impl PriceTrajectory {
    pub fn new(prices: Vec<f64>, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Domain(format!(
                "time step must be positive, got {dt}"
            )));
        }
        if prices.len() < 2 {
            return Err(Error::Size(format!(
                "a trajectory needs at least 2 prices, got {}",
                prices.len()
            )));
        }
        if let Some(i) = prices.iter().position(|p| !(*p > 0.0 && p.is_finite())) {
            return Err(Error::Domain(format!(
                "price {} at index {i} is not positive",
                prices[i]
            )));
        }
        Ok(Self { prices, dt })
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn s0(&self) -> f64 {
        self.prices[0]
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    pub fn into_prices(self) -> Vec<f64> {
        self.prices
    }
}

/// Whether the Brownian increment is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Noise {
    #[default]
    Brownian,
    /// Diffusion forced to zero; the drift ODE under Euler stepping.
    Zero,
}

/// Euler–Maruyama path of `dS = mu(S) S dt + sigma(S) S dB` with `steps`
/// increments (so `steps + 1` prices).
///
/// Coefficients are evaluated at `max(S, POSITIVITY_FLOOR)` and emitted prices
/// are floored at the same level.
pub fn simulate_trajectory(
    model: &SdeModel,
    s0: f64,
    dt: f64,
    steps: usize,
    seed: u64,
) -> Result<PriceTrajectory> {
    simulate_with_noise(model, s0, dt, steps, seed, Noise::Brownian)
}

pub fn simulate_with_noise(
    model: &SdeModel,
    s0: f64,
    dt: f64,
    steps: usize,
    seed: u64,
    noise: Noise,
) -> Result<PriceTrajectory> {
    if !(s0 > 0.0 && s0.is_finite()) {
        return Err(Error::Domain(format!(
            "initial price must be positive, got {s0}"
        )));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Domain(format!(
            "time step must be positive, got {dt}"
        )));
    }
    if steps == 0 {
        return Err(Error::Size("simulation needs at least one step".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sqrt_dt = dt.sqrt();
    let mut prices = Vec::with_capacity(steps + 1);
    prices.push(s0);
    let mut state = s0;
    for _ in 0..steps {
        let s = state.max(POSITIVITY_FLOOR);
        let mut next = state + model.drift_rate(s)? * s * dt;
        if noise == Noise::Brownian {
            let z: f64 = StandardNormal.sample(&mut rng);
            next += model.vol_rate(s)? * s * sqrt_dt * z;
        }
        state = next;
        prices.push(state.max(POSITIVITY_FLOOR));
    }
    PriceTrajectory::new(prices, dt)
}

/// Independent paths from a common start; path `i` uses seed `seed + i`.
pub fn simulate_paths(
    model: &SdeModel,
    s0: f64,
    dt: f64,
    steps: usize,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<PriceTrajectory>> {
    (0..n_paths)
        .into_par_iter()
        .map(|i| simulate_trajectory(model, s0, dt, steps, seed.wrapping_add(i as u64)))
        .collect()
}
