//! Option values by least-squares regression of kernel-weighted payoffs.
//!
//! Given a frozen policy, each window yields the target `h(S_N) rho_N`. The
//! time-0 value `V0(s)` is the conditional mean of that target given the
//! window head, so it is learned by minimizing the mean squared error. The
//! full surface `V(t, s)` regresses `h(S_N) rho_N / rho_n` at every step.

use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel_learner::{kernel_paths, terminal_kernels, Policy};
use crate::market_data::{steps_for_maturity, OptionKind, OptionSpec, WindowSet};
use crate::neural::MlpModel;
use crate::training::{descend, initial_model, TrainConfig, Trained};

pub fn payoff(option: &OptionSpec, s: f64) -> f64 {
    match option.kind {
        OptionKind::Call => (s - option.strike).max(0.0),
        OptionKind::Put => (option.strike - s).max(0.0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricedPath {
    pub prices: Vec<f64>,
    pub kernel: Vec<f64>,
}

/// Regression data derived from one window under a fixed policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricedWindow {
    pub head: f64,
    pub payoff: f64,
    pub terminal_kernel: f64,
    /// Full price and kernel paths; only kept for surface training.
    pub path: Option<Box<PricedPath>>,
}

impl PricedWindow {
    /// `h(S_N) rho_N`, the time-0 regression target.
    pub fn target(&self) -> f64 {
        self.payoff * self.terminal_kernel
    }
}

fn check_maturity(windows: &WindowSet, option: &OptionSpec) -> Result<()> {
    option.validate()?;
    let n = steps_for_maturity(option.maturity, windows.dt())?;
    if n != windows.n_steps() {
        return Err(Error::Size(format!(
            "option maturity {} spans {n} steps of {}, but windows have {} steps",
            option.maturity,
            windows.dt(),
            windows.n_steps()
        )));
    }
    Ok(())
}

/// Regression targets for every window. Kernel failures name the window.
pub fn price_windows<P: Policy + ?Sized>(
    policy: &P,
    windows: &WindowSet,
    option: &OptionSpec,
    r: f64,
    keep_paths: bool,
) -> Result<Vec<PricedWindow>> {
    check_maturity(windows, option)?;
    if keep_paths {
        let paths = kernel_paths(policy, windows, r)?;
        Ok(windows
            .iter()
            .zip(paths)
            .map(|(w, k)| PricedWindow {
                head: w[0],
                payoff: payoff(option, w[w.len() - 1]),
                terminal_kernel: k.terminal_kernel(),
                path: Some(Box::new(PricedPath {
                    prices: w.to_vec(),
                    kernel: k.kernel,
                })),
            })
            .collect())
    } else {
        let rho = terminal_kernels(policy, windows, r)?;
        Ok(windows
            .iter()
            .zip(rho)
            .map(|(w, rho)| PricedWindow {
                head: w[0],
                payoff: payoff(option, w[w.len() - 1]),
                terminal_kernel: rho,
                path: None,
            })
            .collect())
    }
}

fn check_value_net(value: &MlpModel, dim: usize) -> Result<()> {
    if value.input_dim() != dim {
        return Err(Error::Shape {
            expected: dim,
            got: value.input_dim(),
        });
    }
    Ok(())
}

/// `(1/J) sum_j (V0(S_0j) - h(S_Nj) rho_Nj)^2`.
pub fn v0_loss(value: &MlpModel, priced: &[PricedWindow]) -> Result<f64> {
    check_value_net(value, 1)?;
    if priced.is_empty() {
        return Err(Error::Size("no priced windows".into()));
    }
    let heads: Vec<f64> = priced.iter().map(|p| p.head).collect();
    let v = value.predict_scalar(&heads)?;
    let sum: f64 = v
        .iter()
        .zip(priced)
        .map(|(v, p)| (v - p.target()).powi(2))
        .sum();
    Ok(sum / priced.len() as f64)
}

/// Least-squares constant for a batch: the sample mean of the targets.
pub fn best_constant(priced: &[PricedWindow]) -> f64 {
    priced.iter().map(PricedWindow::target).sum::<f64>() / priced.len() as f64
}

/// Learns `V0` for one option from a frozen policy.
pub fn train_v0<P: Policy + ?Sized>(
    policy: &P,
    windows: &WindowSet,
    option: &OptionSpec,
    cfg: &TrainConfig,
) -> Result<Trained> {
    let priced = price_windows(policy, windows, option, cfg.riskless_rate, false)?;
    train_v0_on(&priced, cfg)
}

/// Learns `V0` from precomputed targets.
pub fn train_v0_on(priced: &[PricedWindow], cfg: &TrainConfig) -> Result<Trained> {
    if cfg.network.input_dim != 1 {
        return Err(Error::InvalidSpec("V0 networks take one input".into()));
    }
    if priced.is_empty() {
        return Err(Error::Size("no priced windows".into()));
    }
    let model = initial_model(cfg, || Ok(priced.iter().map(|p| p.head).collect()))?;
    let mut heads = Vec::new();
    let mut targets = Vec::new();
    let batch_loss = |model: &MlpModel, idx: &[usize], episode: usize| -> Result<(f64, Vec<f64>)> {
        heads.clear();
        targets.clear();
        heads.extend(idx.iter().map(|&j| priced[j].head));
        targets.extend(idx.iter().map(|&j| priced[j].target()));
        let scale = 1.0 / idx.len() as f64;
        let inputs = ArrayView2::from_shape((heads.len(), 1), &heads[..]).expect("column");
        let ys = &targets;
        let (loss, grad) = model.loss_and_grad(inputs, |start, vs| {
            let mut loss = 0.0;
            let up = vs
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let e = v - ys[start + i];
                    loss += e * e;
                    2.0 * e * scale
                })
                .collect();
            (loss * scale, up)
        })?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                episode,
                window: idx[0],
            });
        }
        Ok((loss, grad))
    };
    descend(
        model,
        priced.len(),
        cfg,
        batch_loss,
        None::<fn(&MlpModel) -> Result<f64>>,
    )
}

/// Surface network input: `(t / horizon, s)`.
pub fn surface_input(t: f64, s: f64, horizon: f64) -> [f64; 2] {
    [t / horizon, s]
}

/// Evaluates a surface network at calendar time `t` (years from the window
/// start) and price `s`.
pub fn surface_value(surface: &MlpModel, t: f64, s: f64, horizon: f64) -> Result<f64> {
    check_value_net(surface, 2)?;
    surface.forward(&surface_input(t, s, horizon))
}

fn surface_rows(
    priced: &[PricedWindow],
    idx: impl Iterator<Item = usize>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    for j in idx {
        let p = &priced[j];
        let path = p
            .path
            .as_ref()
            .ok_or_else(|| Error::Size(format!("priced window {j} has no kernel path")))?;
        let n = path.prices.len() - 1;
        let terminal = p.target();
        for k in 0..n {
            inputs.push(k as f64 / n as f64);
            inputs.push(path.prices[k]);
            targets.push(terminal / path.kernel[k]);
        }
    }
    Ok((inputs, targets))
}

/// `(1/J) sum_j sum_{n<N} (V(n dt, S_nj) - h(S_Nj) rho_Nj / rho_nj)^2 dt`.
pub fn surface_ml_loss(surface: &MlpModel, priced: &[PricedWindow], dt: f64) -> Result<f64> {
    check_value_net(surface, 2)?;
    if priced.is_empty() {
        return Err(Error::Size("no priced windows".into()));
    }
    let (inputs, targets) = surface_rows(priced, 0..priced.len())?;
    let v =
        surface.predict(ArrayView2::from_shape((targets.len(), 2), &inputs[..]).expect("rows"))?;
    let sum: f64 = v.iter().zip(&targets).map(|(v, y)| (v - y).powi(2)).sum();
    Ok(sum * dt / priced.len() as f64)
}

/// Learns `V(t, s)` for one option from a frozen policy.
pub fn train_surface<P: Policy + ?Sized>(
    policy: &P,
    windows: &WindowSet,
    option: &OptionSpec,
    cfg: &TrainConfig,
) -> Result<Trained> {
    let priced = price_windows(policy, windows, option, cfg.riskless_rate, true)?;
    train_surface_on(&priced, windows.dt(), cfg)
}

pub fn train_surface_on(priced: &[PricedWindow], dt: f64, cfg: &TrainConfig) -> Result<Trained> {
    if cfg.network.input_dim != 2 {
        return Err(Error::InvalidSpec("surface networks take (t, s)".into()));
    }
    if priced.is_empty() {
        return Err(Error::Size("no priced windows".into()));
    }
    let model = initial_model(cfg, || surface_rows(priced, 0..priced.len()).map(|r| r.0))?;
    let batch_loss = |model: &MlpModel, idx: &[usize], episode: usize| -> Result<(f64, Vec<f64>)> {
        let (inputs, targets) = surface_rows(priced, idx.iter().copied())?;
        let scale = dt / idx.len() as f64;
        let view = ArrayView2::from_shape((targets.len(), 2), &inputs[..]).expect("rows");
        let (loss, grad) = model.loss_and_grad(view, |start, vs| {
            let mut loss = 0.0;
            let up = vs
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let e = v - targets[start + i];
                    loss += e * e;
                    2.0 * e * scale
                })
                .collect();
            (loss * scale, up)
        })?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                episode,
                window: idx[0],
            });
        }
        Ok((loss, grad))
    };
    descend(
        model,
        priced.len(),
        cfg,
        batch_loss,
        None::<fn(&MlpModel) -> Result<f64>>,
    )
}

/// `V0` on a grid of prices, as `(s, value)` rows.
pub fn price_curve(value: &MlpModel, prices: &[f64]) -> Result<Vec<(f64, f64)>> {
    check_value_net(value, 1)?;
    let v = value.predict_scalar(prices)?;
    Ok(prices.iter().copied().zip(v).collect())
}

/// Sample mean of the targets of windows whose head lies within `half_width`
/// of `s`; a model-free local estimate of `V0(s)`.
pub fn local_mean_target(priced: &[PricedWindow], s: f64, half_width: f64) -> Option<(f64, usize)> {
    let (sum, count) = priced
        .par_iter()
        .filter(|p| (p.head - s).abs() <= half_width)
        .map(|p| (p.target(), 1usize))
        .reduce(|| (0.0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    (count > 0).then(|| (sum / count as f64, count))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel_learner::theoretical_policy;
    use crate::market_data::{extract_windows, simulate_trajectory, SdeModel};
    use crate::neural::{Activation, MlpSpec, OptimizerConfig, Schedule};

    fn call() -> OptionSpec {
        OptionSpec::new(OptionKind::Call, 1.0, 0.1).unwrap()
    }

    fn constant_net(c: f64, dim: usize) -> MlpModel {
        let spec = MlpSpec::uniform(dim, 1, 1, Activation::Relu, false).unwrap();
        let mut p = vec![0.0; spec.param_count()];
        *p.last_mut().unwrap() = c;
        MlpModel::from_params(spec, p).unwrap()
    }

    fn window(head: f64, payoff: f64, rho: f64) -> PricedWindow {
        PricedWindow {
            head,
            payoff,
            terminal_kernel: rho,
            path: None,
        }
    }

    #[test]
    fn payoffs() {
        let c = call();
        assert!((payoff(&c, 1.2) - 0.2).abs() < 1e-15);
        assert_eq!(payoff(&c.with_kind(OptionKind::Put), 1.2), 0.0);
        assert_eq!(payoff(&c, 1.0), 0.0);
        assert!((payoff(&c.with_kind(OptionKind::Put), 0.7) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn v0_loss_cases() {
        let perfect = vec![window(1.0, 0.5, 0.8), window(1.1, 0.25, 1.6)];
        assert_eq!(v0_loss(&constant_net(0.4, 1), &perfect).unwrap(), 0.0);
        let single = vec![window(1.0, 0.3, 1.0)];
        assert!((v0_loss(&constant_net(0.5, 1), &single).unwrap() - 0.04).abs() < 1e-15);
        let batch = vec![window(0.9, 0.1, 1.0), window(1.2, 0.3, 0.9)];
        let doubled: Vec<_> = batch.iter().chain(&batch).cloned().collect();
        let m = constant_net(0.2, 1);
        assert!((v0_loss(&m, &batch).unwrap() - v0_loss(&m, &doubled).unwrap()).abs() < 1e-15);
        assert!(v0_loss(&m, &[]).is_err());
    }

    #[test]
    fn least_squares_constant_is_the_sample_mean() {
        let batch = vec![
            window(1.0, 0.1, 0.99),
            window(1.0, 0.0, 1.01),
            window(1.0, 0.3, 0.97),
        ];
        let c = best_constant(&batch);
        let at = |v: f64| v0_loss(&constant_net(v, 1), &batch).unwrap();
        assert!(at(c) < at(c + 1e-4) && at(c) < at(c - 1e-4));
        // the loss is quadratic in the constant with its vertex at the mean
        let h = 1e-3;
        let slope = (at(c + h) - at(c - h)) / (2.0 * h);
        assert!(slope.abs() < 1e-12);
    }

    #[test]
    fn maturity_must_match_windows() {
        let t = simulate_trajectory(&SdeModel::cir_default(), 1.0, 3e-3, 100, 1).unwrap();
        let ws = extract_windows(&t, 33, 1).unwrap();
        let policy = constant_net(0.0, 1);
        assert!(price_windows(&policy, &ws, &call(), 0.019, false).is_ok());
        let long = call().with_maturity(0.2);
        assert!(matches!(
            price_windows(&policy, &ws, &long, 0.019, false),
            Err(Error::Size(_))
        ));
    }

    #[test]
    fn targets_are_reproducible() {
        let t = simulate_trajectory(&SdeModel::cir_default(), 1.0, 3e-3, 200, 2).unwrap();
        let ws = extract_windows(&t, 33, 1).unwrap();
        let f = theoretical_policy(&SdeModel::cir_default(), 0.019);
        let a = price_windows(&f, &ws, &call(), 0.019, false).unwrap();
        let b = price_windows(&f, &ws, &call(), 0.019, false).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn surface_loss_identities() {
        let t = simulate_trajectory(&SdeModel::cir_default(), 1.0, 3e-3, 120, 3).unwrap();
        let dt = 3e-3;
        let option = call().with_maturity(dt);
        // one-step windows: the surface loss is dt times the V0 loss
        let one = extract_windows(&t, 1, 1).unwrap();
        let f = theoretical_policy(&SdeModel::cir_default(), 0.019);
        let priced = price_windows(&f, &one, &option, 0.019, true).unwrap();
        let surface = constant_net(0.01, 2);
        let v0 = constant_net(0.01, 1);
        let lhs = surface_ml_loss(&surface, &priced, dt).unwrap();
        let rhs = dt * v0_loss(&v0, &priced).unwrap();
        assert!((lhs - rhs).abs() < 1e-15 * rhs.max(1.0));
    }

    #[test]
    fn bond_only_surface_targets_are_discounted_payoff() {
        // payoff is constant when the strike is far below every price
        let t = simulate_trajectory(&SdeModel::cir_default(), 1.0, 3e-3, 100, 4).unwrap();
        let ws = extract_windows(&t, 33, 1).unwrap();
        let option = OptionSpec::new(OptionKind::Call, 1e-9, 0.099).unwrap();
        let zero = constant_net(0.0, 1);
        let r = 0.019;
        let priced = price_windows(&zero, &ws, &option, r, true).unwrap();
        let growth = 1.0 + r * 3e-3;
        for p in &priced {
            let path = p.path.as_ref().unwrap();
            for n in 0..33 {
                let target = p.target() / path.kernel[n];
                let expect = p.payoff * growth.powi(-(33 - n as i32));
                assert!((target - expect).abs() < 1e-13);
            }
        }
        assert!(matches!(
            surface_ml_loss(
                &constant_net(0.0, 2),
                &price_windows(&zero, &ws, &option, r, false).unwrap(),
                3e-3
            ),
            Err(Error::Size(_))
        ));
    }

    fn cfg(dim: usize, episodes: usize) -> TrainConfig {
        TrainConfig {
            network: MlpSpec::uniform(dim, 2, 8, Activation::leaky(), false).unwrap(),
            episodes,
            batch_size: 32,
            riskless_rate: 0.019,
            seed: 5,
            optimizer: OptimizerConfig {
                learning_rate: 1e-3,
                schedule: Schedule::Constant,
                ..Default::default()
            },
            validate_every: 0,
            standardize_inputs: true,
        }
    }

    #[test]
    fn zero_episodes_keep_the_initial_networks() {
        let t = simulate_trajectory(&SdeModel::cir_default(), 1.0, 3e-3, 100, 5).unwrap();
        let ws = extract_windows(&t, 33, 1).unwrap();
        let policy = constant_net(0.3, 1);
        let c = cfg(1, 0);
        let v = train_v0(&policy, &ws, &call(), &c).unwrap();
        assert_eq!(
            v.model.params(),
            MlpModel::init(c.network.clone(), c.seed).unwrap().params()
        );
        let c2 = cfg(2, 0);
        let s = train_surface(&policy, &ws, &call(), &c2).unwrap();
        assert_eq!(
            s.model.params(),
            MlpModel::init(c2.network.clone(), c2.seed)
                .unwrap()
                .params()
        );
    }

    #[test]
    fn short_training_reduces_the_loss() {
        let t = simulate_trajectory(&SdeModel::cir_default(), 1.0, 3e-3, 2000, 6).unwrap();
        let ws = extract_windows(&t, 33, 1).unwrap();
        let policy = constant_net(0.3, 1);
        let priced = price_windows(&policy, &ws, &call(), 0.019, false).unwrap();
        let c = cfg(1, 300);
        let before = v0_loss(&train_v0_on(&priced, &cfg(1, 0)).unwrap().model, &priced).unwrap();
        let after = v0_loss(&train_v0_on(&priced, &c).unwrap().model, &priced).unwrap();
        assert!(after < before, "{after} >= {before}");
    }
}
