//! Policy learning by discrete log-utility maximization, and the pricing
//! kernel it induces.
//!
//! For a window `S_0..S_N` and a fraction-of-wealth policy `f`, the loss is
//!
//! ```text
//! -sum_n [ r(1 - f(S_n))dt + f(S_n) R_n - f(S_n)^2 R_n^2 / 2 ],   R_n = (S_{n+1} - S_n) / S_n
//! ```
//!
//! the negated discrete expected log-return. Its minimizer over `f` is the
//! growth-optimal fraction `(mu - r) / sigma^2`, whose wealth `X_n` is the
//! reciprocal of the pricing kernel.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{SdeModel, WindowSet};
use crate::neural::MlpModel;
use crate::training::{descend, initial_model};
pub use crate::training::{EpisodeRecord, LossHistory, TrainConfig, Trained};

/// Smallest wealth for which a kernel `1 / X` is formed.
pub const WEALTH_FLOOR: f64 = 1e-10;

/// Wealth of the self-financing strategy started from one unit, and the
/// kernel `rho_n = 1 / X_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelPath {
    pub wealth: Vec<f64>,
    pub kernel: Vec<f64>,
}

impl KernelPath {
    pub fn terminal_kernel(&self) -> f64 {
        *self.kernel.last().expect("kernel path is never empty")
    }
}

/// A fraction-of-wealth rule `s -> f(s)`, learned or known.
pub trait Policy: Sync {
    fn fractions(&self, prices: &[f64]) -> Result<Vec<f64>>;
}

impl Policy for MlpModel {
    fn fractions(&self, prices: &[f64]) -> Result<Vec<f64>> {
        check_policy(self)?;
        self.predict_scalar(prices)
    }
}

impl Policy for TheoreticalPolicy {
    fn fractions(&self, prices: &[f64]) -> Result<Vec<f64>> {
        prices.iter().map(|&s| self.eval(s)).collect()
    }
}

fn check_policy(policy: &MlpModel) -> Result<()> {
    if policy.input_dim() != 1 {
        return Err(Error::Shape {
            expected: 1,
            got: policy.input_dim(),
        });
    }
    Ok(())
}

fn check_window(window: &[f64]) -> Result<()> {
    if window.len() < 2 {
        return Err(Error::Size("a window needs at least 2 prices".into()));
    }
    if let Some(p) = window.iter().find(|p| !(**p > 0.0 && p.is_finite())) {
        return Err(Error::Domain(format!(
            "window holds non-positive price {p}"
        )));
    }
    Ok(())
}

#[inline]
fn step_utility(f: f64, ret: f64, r_dt: f64) -> f64 {
    r_dt * (1.0 - f) + f * ret - 0.5 * f * f * ret * ret
}

/// Loss of a single window (the quantity Algorithm-style SGD descends).
pub fn path_loss(policy: &MlpModel, window: &[f64], r: f64, dt: f64) -> Result<f64> {
    check_policy(policy)?;
    check_window(window)?;
    let fs = policy.predict_scalar(&window[..window.len() - 1])?;
    Ok(window_loss(window, &fs, r * dt))
}

fn window_loss(window: &[f64], fs: &[f64], r_dt: f64) -> f64 {
    -window
        .windows(2)
        .zip(fs)
        .map(|(w, &f)| step_utility(f, (w[1] - w[0]) / w[0], r_dt))
        .sum::<f64>()
}

/// Policy values at every point of the window set's storage, so that
/// overlapping windows share evaluations.
fn policy_on_source<P: Policy + ?Sized>(policy: &P, windows: &WindowSet) -> Result<Vec<f64>> {
    policy.fractions(windows.source())
}

/// Mean window loss, no parameter updates.
pub fn validation_loss(policy: &MlpModel, windows: &WindowSet, r: f64) -> Result<f64> {
    check_policy(policy)?;
    if windows.is_empty() {
        return Err(Error::Size("validation set is empty".into()));
    }
    let fs = policy_on_source(policy, windows)?;
    let n = windows.n_steps();
    let r_dt = r * windows.dt();
    let total: f64 = windows
        .starts()
        .iter()
        .map(|&s| window_loss(&windows.source()[s..=s + n], &fs[s..s + n], r_dt))
        .sum();
    Ok(total / windows.len() as f64)
}

/// Trains a policy network on the window set by mini-batch descent on the
/// mean window loss.
pub fn train_policy(
    windows: &WindowSet,
    cfg: &TrainConfig,
    validation: Option<&WindowSet>,
) -> Result<Trained> {
    if cfg.network.input_dim != 1 {
        return Err(Error::InvalidSpec("policy networks take one input".into()));
    }
    if let Some(v) = validation {
        if v.is_empty() {
            return Err(Error::Size("validation set is empty".into()));
        }
    }
    let model = initial_model(cfg, || Ok(windows.source().to_vec()))?;
    let n = windows.n_steps();
    let r_dt = cfg.riskless_rate * windows.dt();
    let r = cfg.riskless_rate;

    let mut prices = Vec::new();
    let mut returns = Vec::new();
    let batch_loss = |model: &MlpModel, idx: &[usize], episode: usize| -> Result<(f64, Vec<f64>)> {
        prices.clear();
        returns.clear();
        for &j in idx {
            let w = windows.window(j);
            for k in 0..n {
                prices.push(w[k]);
                returns.push((w[k + 1] - w[k]) / w[k]);
            }
        }
        let scale = 1.0 / idx.len() as f64;
        let inputs = ArrayView2::from_shape((prices.len(), 1), &prices[..]).expect("column");
        let rets = &returns;
        let (loss, grad) = model.loss_and_grad(inputs, |start, fs| {
            let mut loss = 0.0;
            let mut up = Vec::with_capacity(fs.len());
            for (i, &f) in fs.iter().enumerate() {
                let ret = rets[start + i];
                loss -= step_utility(f, ret, r_dt);
                up.push(-(ret - r_dt - f * ret * ret) * scale);
            }
            (loss * scale, up)
        })?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            let window = idx
                .iter()
                .copied()
                .find(|&j| {
                    !path_loss(model, windows.window(j), r, windows.dt()).is_ok_and(f64::is_finite)
                })
                .unwrap_or(idx[0]);
            return Err(Error::NonFiniteLoss { episode, window });
        }
        Ok((loss, grad))
    };
    let validate = validation.map(|v| move |m: &MlpModel| validation_loss(m, v, r));
    descend(model, windows.len(), cfg, batch_loss, validate)
}

/// Wealth and kernel along one window, from `X_0 = 1`:
/// `X_{n+1} = X_n [1 + r dt + f(S_n)(R_n - r dt)]`.
pub fn wealth_and_kernel<P: Policy + ?Sized>(
    policy: &P,
    window: &[f64],
    r: f64,
    dt: f64,
) -> Result<KernelPath> {
    check_window(window)?;
    let fs = policy.fractions(&window[..window.len() - 1])?;
    kernel_from_policy_values(window, &fs, r * dt, 0)
}

fn kernel_from_policy_values(
    window: &[f64],
    fs: &[f64],
    r_dt: f64,
    window_index: usize,
) -> Result<KernelPath> {
    let mut wealth = Vec::with_capacity(window.len());
    let mut x = 1.0;
    wealth.push(x);
    for (n, (w, &f)) in window.windows(2).zip(fs).enumerate() {
        x *= 1.0 + r_dt + f * ((w[1] - w[0]) / w[0] - r_dt);
        if !(x > WEALTH_FLOOR) {
            return Err(Error::KernelDegeneracy {
                window: window_index,
                step: n + 1,
                wealth: x,
            });
        }
        wealth.push(x);
    }
    let kernel = wealth.iter().map(|x| 1.0 / x).collect();
    Ok(KernelPath { wealth, kernel })
}

/// Kernel paths for every window; errors name the failing window.
pub fn kernel_paths<P: Policy + ?Sized>(
    policy: &P,
    windows: &WindowSet,
    r: f64,
) -> Result<Vec<KernelPath>> {
    let fs = policy_on_source(policy, windows)?;
    let n = windows.n_steps();
    let r_dt = r * windows.dt();
    windows
        .starts()
        .iter()
        .enumerate()
        .map(|(j, &s)| {
            kernel_from_policy_values(&windows.source()[s..=s + n], &fs[s..s + n], r_dt, j)
        })
        .collect()
}

/// Terminal kernel `rho_N` of every window, without keeping the paths.
pub fn terminal_kernels<P: Policy + ?Sized>(
    policy: &P,
    windows: &WindowSet,
    r: f64,
) -> Result<Vec<f64>> {
    let fs = policy_on_source(policy, windows)?;
    let n = windows.n_steps();
    let r_dt = r * windows.dt();
    let src = windows.source();
    windows
        .starts()
        .iter()
        .enumerate()
        .map(|(j, &s)| {
            let mut x = 1.0;
            for k in s..s + n {
                x *= 1.0 + r_dt + fs[k] * ((src[k + 1] - src[k]) / src[k] - r_dt);
                if !(x > WEALTH_FLOOR) {
                    return Err(Error::KernelDegeneracy {
                        window: j,
                        step: k - s + 1,
                        wealth: x,
                    });
                }
            }
            Ok(1.0 / x)
        })
        .collect()
}

/// Growth-optimal fraction `(mu(s) - r) / sigma(s)^2` of a known model.
#[derive(Debug, Clone)]
pub struct TheoreticalPolicy {
    model: SdeModel,
    r: f64,
}

pub fn theoretical_policy(model: &SdeModel, r: f64) -> TheoreticalPolicy {
    TheoreticalPolicy {
        model: model.clone(),
        r,
    }
}

impl TheoreticalPolicy {
    pub fn eval(&self, s: f64) -> Result<f64> {
        let sigma = self.model.vol_rate(s)?;
        if sigma == 0.0 {
            return Err(Error::Singularity {
                s,
                reason: "zero volatility".into(),
            });
        }
        Ok((self.model.drift_rate(s)? - self.r) / (sigma * sigma))
    }

    /// Market price of risk `(mu(s) - r) / sigma(s)`.
    pub fn market_price_of_risk(&self, s: f64) -> Result<f64> {
        let sigma = self.model.vol_rate(s)?;
        if sigma == 0.0 {
            return Err(Error::Singularity {
                s,
                reason: "zero volatility".into(),
            });
        }
        Ok((self.model.drift_rate(s)? - self.r) / sigma)
    }
}

/// Central `mass` quantile range of `values`, e.g. `0.9` for the 5%..95% range.
pub fn central_range(values: &[f64], mass: f64) -> (f64, f64) {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    let tail = (1.0 - mass) / 2.0;
    let at = |q: f64| v[((q * (v.len() - 1) as f64).round() as usize).min(v.len() - 1)];
    (at(tail), at(1.0 - tail))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::{extract_windows, simulate_trajectory};
    use crate::neural::{Activation, MlpSpec, OptimizerConfig, Schedule};

    /// Network whose output is the constant `c`.
    fn constant(c: f64) -> MlpModel {
        let spec = MlpSpec::uniform(1, 1, 1, Activation::Relu, false).unwrap();
        MlpModel::from_params(spec, vec![0.0, 0.0, 0.0, c]).unwrap()
    }

    /// Network computing `f(s) = s` for positive inputs.
    fn identity() -> MlpModel {
        let spec = MlpSpec::uniform(1, 1, 1, Activation::Relu, false).unwrap();
        MlpModel::from_params(spec, vec![1.0, 0.0, 1.0, 0.0]).unwrap()
    }

    fn cir_window(seed: u64) -> Vec<f64> {
        simulate_trajectory(&SdeModel::cir_default(), 1.0, 3e-3, 33, seed)
            .unwrap()
            .into_prices()
    }

    #[test]
    fn zero_policy_loss_is_minus_bond_return() {
        let w = cir_window(1);
        let loss = path_loss(&constant(0.0), &w, 0.019, 3e-3).unwrap();
        assert!((loss - -1.881e-3).abs() < 1e-15, "{loss}");
    }

    #[test]
    fn flat_window_with_zero_rate_has_zero_loss() {
        let w = vec![1.2; 34];
        for m in [constant(0.0), constant(3.0), identity()] {
            assert_eq!(path_loss(&m, &w, 0.0, 3e-3).unwrap(), 0.0);
        }
    }

    #[test]
    fn constant_policy_loss_is_a_convex_quadratic() {
        let w = cir_window(2);
        let r = 0.019;
        let dt = 3e-3;
        let l = |c: f64| path_loss(&constant(c), &w, r, dt).unwrap();
        let curvature: f64 = w.windows(2).map(|p| ((p[1] - p[0]) / p[0]).powi(2)).sum();
        // second difference of a quadratic is exact
        let h = 0.5;
        let second = (l(1.0 + h) - 2.0 * l(1.0) + l(1.0 - h)) / (h * h);
        assert!((second - curvature).abs() < 1e-10 * curvature.max(1.0));
        assert!(curvature > 0.0);
    }

    #[test]
    fn bond_only_and_fully_invested_wealth() {
        let w = cir_window(3);
        let (r, dt) = (0.019, 3e-3);
        let bond = wealth_and_kernel(&constant(0.0), &w, r, dt).unwrap();
        let expect = (1.0 + r * dt).powi(33);
        assert!((bond.wealth[33] - expect).abs() < 1e-14);
        assert!((bond.terminal_kernel() - 1.0 / expect).abs() < 1e-14);

        let full = wealth_and_kernel(&constant(1.0), &w, r, dt).unwrap();
        assert!((full.wealth[33] - w[33] / w[0]).abs() < 1e-12);
        for (x, rho) in full.wealth.iter().zip(&full.kernel) {
            assert!((x * rho - 1.0).abs() < 1e-15);
        }
        assert_eq!(full.kernel[0], 1.0);
    }

    #[test]
    fn one_step_wealth_by_hand() {
        // f(1) = 2 through a constant net
        let k = wealth_and_kernel(&constant(2.0), &[1.0, 1.01], 0.019, 3e-3).unwrap();
        assert!((k.wealth[1] - 1.019943).abs() < 1e-12);
    }

    #[test]
    fn degenerate_wealth_is_an_error() {
        let err = wealth_and_kernel(&constant(200.0), &[1.0, 0.99, 0.98], 0.0, 1e-3).unwrap_err();
        assert!(
            matches!(err, Error::KernelDegeneracy { step: 1, .. }),
            "{err}"
        );
    }

    #[test]
    fn batch_kernels_match_single_window() {
        let t = simulate_trajectory(&SdeModel::cir_default(), 1.0, 3e-3, 200, 4).unwrap();
        let ws = extract_windows(&t, 33, 5).unwrap();
        let m = identity();
        let paths = kernel_paths(&m, &ws, 0.019).unwrap();
        let terminal = terminal_kernels(&m, &ws, 0.019).unwrap();
        for (j, w) in ws.iter().enumerate() {
            let single = wealth_and_kernel(&m, w, 0.019, 3e-3).unwrap();
            assert_eq!(paths[j], single);
            assert!((terminal[j] - single.terminal_kernel()).abs() < 1e-15);
        }
    }

    #[test]
    fn log_wealth_matches_loss_to_third_order() {
        let t = simulate_trajectory(&SdeModel::cir_default(), 1.0, 3e-3, 2000, 5).unwrap();
        let ws = extract_windows(&t, 33, 7).unwrap();
        let m = identity();
        let r = 0.019;
        for w in ws.iter() {
            let loss = path_loss(&m, w, r, 3e-3).unwrap();
            let log_x = wealth_and_kernel(&m, w, r, 3e-3).unwrap().wealth[33].ln();
            // ln(1+u) = u - u^2/2 + O(u^3) with u the one-step portfolio return
            // plus the cross terms between the bond leg and the stock leg
            let r_dt = r * 3e-3;
            let bound: f64 = w
                .windows(2)
                .map(|p| {
                    let f = p[0];
                    let ret = (p[1] - p[0]) / p[0];
                    let u = (r_dt + f * (ret - r_dt)).abs();
                    u.powi(3) / (1.0 - u).powi(3)
                        + (f * ret * r_dt * (1.0 - f)).abs()
                        + (r_dt * (1.0 - f)).powi(2)
                })
                .sum();
            assert!((-loss - log_x).abs() <= bound, "{} vs {}", -loss, log_x);
        }
    }

    #[test]
    fn validation_loss_is_the_mean_window_loss() {
        let t = simulate_trajectory(&SdeModel::cir_default(), 1.0, 3e-3, 300, 6).unwrap();
        let ws = extract_windows(&t, 33, 3).unwrap();
        let m = identity();
        let mean: f64 = ws
            .iter()
            .map(|w| path_loss(&m, w, 0.019, 3e-3).unwrap())
            .sum::<f64>()
            / ws.len() as f64;
        assert!((validation_loss(&m, &ws, 0.019).unwrap() - mean).abs() < 1e-15);
        assert!(validation_loss(&constant(1.0), &ws, 0.019).is_ok());
    }

    #[test]
    fn theoretical_policy_values() {
        let gbm = SdeModel::gbm(0.1, 0.2).unwrap();
        assert!((theoretical_policy(&gbm, 0.019).eval(3.0).unwrap() - 2.025).abs() < 1e-12);
        let cir = SdeModel::cir_default();
        assert!((theoretical_policy(&cir, 0.019).eval(1.0).unwrap() - 0.275).abs() < 1e-12);
        assert!(theoretical_policy(&cir, 0.0).eval(1.3).unwrap().abs() < 1e-12);
        let expect = (0.1 * (1.3 - 1.3) - 0.019 * 1.3) / 0.04;
        assert!((theoretical_policy(&cir, 0.019).eval(1.3).unwrap() - expect).abs() < 1e-12);
        assert!((expect + 0.6175).abs() < 1e-12);
    }

    fn small_cfg(episodes: usize) -> TrainConfig {
        TrainConfig {
            network: MlpSpec::uniform(1, 2, 8, Activation::Relu, false).unwrap(),
            episodes,
            batch_size: 16,
            riskless_rate: 0.019,
            seed: 3,
            optimizer: OptimizerConfig {
                learning_rate: 1e-3,
                schedule: Schedule::Constant,
                ..Default::default()
            },
            validate_every: 1,
            standardize_inputs: true,
        }
    }

    #[test]
    fn zero_episodes_returns_the_initial_model() {
        let t = simulate_trajectory(&SdeModel::cir_default(), 1.0, 3e-3, 100, 7).unwrap();
        let ws = extract_windows(&t, 33, 1).unwrap();
        let cfg = small_cfg(0);
        let trained = train_policy(&ws, &cfg, None).unwrap();
        assert_eq!(
            trained.model.params(),
            MlpModel::init(cfg.network.clone(), cfg.seed)
                .unwrap()
                .params()
        );
        assert!(trained.history.records.is_empty());
    }

    #[test]
    fn training_records_losses_and_is_reproducible() {
        let t = simulate_trajectory(&SdeModel::cir_default(), 1.0, 3e-3, 600, 8).unwrap();
        let ws = extract_windows(&t, 33, 1).unwrap();
        let cfg = small_cfg(20);
        let a = train_policy(&ws, &cfg, Some(&ws)).unwrap();
        let b = train_policy(&ws, &cfg, Some(&ws)).unwrap();
        assert_eq!(a.history.to_csv(), b.history.to_csv());
        assert_eq!(a.history.records.len(), 20);
        let last = a.history.records.last().unwrap();
        assert_eq!(
            last.validation_loss.unwrap(),
            validation_loss(&a.model, &ws, 0.019).unwrap()
        );
    }

    #[test]
    fn empty_validation_set_is_a_size_error() {
        assert!(matches!(
            WindowSet::from_windows(&[], 3e-3),
            Err(Error::Size(_))
        ));
    }

    #[test]
    fn exploding_policy_reports_the_episode() {
        let t = simulate_trajectory(&SdeModel::cir_default(), 1.0, 3e-3, 100, 9).unwrap();
        let ws = extract_windows(&t, 33, 1).unwrap();
        let mut cfg = small_cfg(5);
        cfg.optimizer = OptimizerConfig {
            kind: crate::neural::OptimizerKind::Sgd,
            learning_rate: 1e300,
            schedule: Schedule::Constant,
        };
        match train_policy(&ws, &cfg, None) {
            Err(Error::NonFiniteLoss { episode, .. }) => assert!(episode > 0),
            other => panic!("expected a non-finite loss, got {other:?}"),
        }
    }
}
