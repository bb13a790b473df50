//! Fixtures shared by the benchmarks.

use pricer_core::kernel_learner::TrainConfig;
use pricer_core::market_data::{extract_windows, simulate_trajectory, WindowSet};
use pricer_core::neural::{Activation, MlpModel, MlpSpec, OptimizerConfig};
use pricer_core::SdeModel;

pub const DT: f64 = 3e-3;
pub const N_STEPS: usize = 33;
pub const RATE: f64 = 0.019;

/// Overlapping windows of a simulated square-root trajectory.
pub fn cir_windows(steps: usize) -> WindowSet {
    let traj =
        simulate_trajectory(&SdeModel::cir_default(), 1.0, DT, steps, 1).expect("valid model");
    extract_windows(&traj, N_STEPS, 1).expect("trajectory longer than a window")
}

/// Freshly initialized scalar network.
pub fn network(input_dim: usize, depth: usize, width: usize, residual: bool) -> MlpModel {
    let spec =
        MlpSpec::uniform(input_dim, depth, width, Activation::Relu, residual).expect("valid spec");
    MlpModel::init(spec, 3).expect("valid spec")
}

/// Training settings with the given network and run length.
pub fn train_config(network: MlpSpec, episodes: usize, batch_size: usize) -> TrainConfig {
    TrainConfig {
        network,
        episodes,
        batch_size,
        riskless_rate: RATE,
        seed: 7,
        optimizer: OptimizerConfig::default(),
        validate_every: 0,
        standardize_inputs: true,
    }
}
