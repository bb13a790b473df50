use pricer_core::benchmark::{fd_pde_price, iv_curve, moneyness_grid, IvSource, PdeGrid};
use pricer_core::kernel_learner::{terminal_kernels, train_policy, TrainConfig};
use pricer_core::market_data::{
    extract_windows, parse_prices, simulate_trajectory, steps_for_maturity,
};
use pricer_core::neural::{
    Activation, Checkpoint, MlpSpec, OptimizerConfig, Role, TrainingMetadata,
};
use pricer_core::price_learner::{price_curve, train_v0};
use pricer_core::report::price_curve_csv;
use pricer_core::{OptionKind, OptionSpec, SdeModel};

fn config(depth: usize, episodes: usize) -> TrainConfig {
    TrainConfig {
        network: MlpSpec::uniform(1, depth, 8, Activation::Relu, false).unwrap(),
        episodes,
        batch_size: 128,
        riskless_rate: 0.019,
        seed: 4,
        optimizer: OptimizerConfig {
            learning_rate: 3e-3,
            ..Default::default()
        },
        validate_every: 0,
        standardize_inputs: true,
    }
}

#[test]
fn trajectory_to_implied_volatility() {
    let model = SdeModel::cir_default();
    let traj = simulate_trajectory(&model, 1.0, 3e-3, 50_000, 3).unwrap();
    let option = OptionSpec::new(OptionKind::Call, 1.0, 0.1).unwrap();
    let n = steps_for_maturity(option.maturity, traj.dt()).unwrap();
    let windows = extract_windows(&traj, n, 1).unwrap();

    let policy = train_policy(&windows, &config(3, 200), None).unwrap().model;
    let rho = terminal_kernels(&policy, &windows, 0.019).unwrap();
    assert!(rho.iter().all(|r| r.is_finite() && *r > 0.0));

    // the policy survives a checkpoint round trip exactly
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("policy.json");
    Checkpoint::new(Role::Policy, &policy, TrainingMetadata::default())
        .save(&path)
        .unwrap();
    let restored = Checkpoint::load_role(&path, Role::Policy)
        .unwrap()
        .model()
        .unwrap();
    assert_eq!(restored, policy);

    let value = train_v0(&restored, &windows, &option, &config(4, 300))
        .unwrap()
        .model;
    let curve = price_curve(&value, &[0.9, 1.0, 1.1]).unwrap();
    assert!(price_curve_csv(&curve).starts_with("s,V0\n"));

    // the learned curve and the benchmark are inverted on the same grid
    let quoted = option.with_maturity(n as f64 * traj.dt());
    let grid = moneyness_grid(0.9, 1.1, 5).unwrap();
    let pde = fd_pde_price(&model, &quoted, 0.019, &PdeGrid::default()).unwrap();
    let put = fd_pde_price(
        &model,
        &quoted.with_kind(OptionKind::Put),
        0.019,
        &PdeGrid::default(),
    )
    .unwrap();
    let bench = iv_curve(
        |o, s| {
            if o.kind == OptionKind::Call {
                pde.value_at(s)
            } else {
                put.value_at(s)
            }
        },
        &quoted,
        0.019,
        &grid,
        IvSource::PdeBenchmark,
    );
    assert_eq!(bench.gap_count(), 0);
    let learned = iv_curve(
        |_, s| value.forward(&[s]),
        &quoted,
        0.019,
        &grid,
        IvSource::Learned,
    );
    assert_eq!(learned.points.len(), bench.points.len());
}

#[test]
fn ingested_prices_train_like_simulated_ones() {
    let traj = simulate_trajectory(&SdeModel::cir_default(), 1.0, 3e-3, 5_000, 8).unwrap();
    let text: String = traj.prices().iter().map(|p| format!("{p}\n")).collect();
    let ingested = parse_prices(&format!("price\n{text}"), 3e-3).unwrap();
    assert_eq!(ingested.prices(), traj.prices());

    let a = train_policy(
        &extract_windows(&traj, 33, 1).unwrap(),
        &config(2, 20),
        None,
    )
    .unwrap();
    let b = train_policy(
        &extract_windows(&ingested, 33, 1).unwrap(),
        &config(2, 20),
        None,
    )
    .unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.history.to_csv(), b.history.to_csv());
}
