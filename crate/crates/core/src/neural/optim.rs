use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Learning-rate multiplier as a function of the episode index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    Constant,
    /// Multiply by `factor` every `every` episodes.
    StepDecay {
        every: usize,
        factor: f64,
    },
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::StepDecay {
            every: 2000,
            factor: 0.5,
        }
    }
}

impl Schedule {
    pub fn multiplier(&self, episode: usize) -> f64 {
        match *self {
            Schedule::Constant => 1.0,
            Schedule::StepDecay { every, factor } => factor.powi((episode / every.max(1)) as i32),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam {
        #[serde(default = "beta1")]
        beta1: f64,
        #[serde(default = "beta2")]
        beta2: f64,
        #[serde(default = "eps")]
        eps: f64,
    },
}

fn beta1() -> f64 {
    0.9
}
fn beta2() -> f64 {
    0.999
}
fn eps() -> f64 {
    1e-8
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam {
            beta1: beta1(),
            beta2: beta2(),
            eps: eps(),
        }
    }
}

/// Serializable optimizer settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    #[serde(default)]
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    #[serde(default)]
    pub schedule: Schedule,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::default(),
            learning_rate: 1e-3,
            schedule: Schedule::default(),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if let Schedule::StepDecay { every, factor } = self.schedule {
            if every == 0 || !(factor > 0.0 && factor.is_finite()) {
                return Err(Error::InvalidSpec(
                    "step decay needs every >= 1 and factor > 0".into(),
                ));
            }
        }
        if let OptimizerKind::Adam { beta1, beta2, eps } = self.kind {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || !(eps > 0.0) {
                return Err(Error::InvalidSpec(
                    "Adam needs betas in [0, 1) and eps > 0".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Optimizer state for one parameter vector.
#[derive(Debug, Clone)]
pub struct OptState {
    config: OptimizerConfig,
    first: Vec<f64>,
    second: Vec<f64>,
    steps: u64,
}

impl OptState {
    pub fn new(config: OptimizerConfig, n_params: usize) -> Result<Self> {
        config.validate()?;
        let moments = match config.kind {
            OptimizerKind::Sgd => 0,
            OptimizerKind::Adam { .. } => n_params,
        };
        Ok(Self {
            config,
            first: vec![0.0; moments],
            second: vec![0.0; moments],
            steps: 0,
        })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Effective rate `gamma(episode) * alpha`.
    pub fn rate(&self, episode: usize) -> f64 {
        self.config.schedule.multiplier(episode) * self.config.learning_rate
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], episode: usize) {
        assert_eq!(params.len(), grad.len(), "gradient length");
        let rate = self.rate(episode);
        self.steps += 1;
        match self.config.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= rate * g;
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                assert_eq!(self.first.len(), params.len(), "moment length");
                let t = self.steps as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for i in 0..params.len() {
                    let g = grad[i];
                    self.first[i] = beta1 * self.first[i] + (1.0 - beta1) * g;
                    self.second[i] = beta2 * self.second[i] + (1.0 - beta2) * g * g;
                    let m_hat = self.first[i] / c1;
                    let v_hat = self.second[i] / c2;
                    params[i] -= rate * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sgd(lr: f64) -> OptimizerConfig {
        OptimizerConfig {
            kind: OptimizerKind::Sgd,
            learning_rate: lr,
            schedule: Schedule::Constant,
        }
    }

    #[test]
    fn sgd_one_step() {
        let mut opt = OptState::new(sgd(0.1), 1).unwrap();
        let mut p = [1.0];
        opt.step(&mut p, &[2.0], 0);
        assert!((p[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        for cfg in [sgd(0.1), OptimizerConfig::default()] {
            let mut opt = OptState::new(cfg, 3).unwrap();
            let mut p = [1.0, -2.0, 0.5];
            for e in 0..5 {
                opt.step(&mut p, &[0.0; 3], e);
            }
            assert_eq!(p, [1.0, -2.0, 0.5]);
        }
    }

    #[test]
    fn adam_first_step_has_magnitude_rate() {
        // m_hat = g, v_hat = g^2, so the update is -rate * g / (|g| + eps)
        let cfg = OptimizerConfig {
            learning_rate: 0.01,
            schedule: Schedule::Constant,
            ..Default::default()
        };
        let mut opt = OptState::new(cfg, 2).unwrap();
        let mut p = [0.0, 0.0];
        opt.step(&mut p, &[3.0, -0.5], 0);
        assert!((p[0] + 0.01).abs() < 1e-10);
        assert!((p[1] - 0.01).abs() < 1e-9);
    }

    #[test]
    fn step_decay_schedule() {
        let s = Schedule::StepDecay {
            every: 2000,
            factor: 0.5,
        };
        assert_eq!(s.multiplier(0), 1.0);
        assert_eq!(s.multiplier(1999), 1.0);
        assert_eq!(s.multiplier(2000), 0.5);
        assert_eq!(s.multiplier(4500), 0.25);
    }

    #[test]
    fn invalid_configs() {
        assert!(OptState::new(sgd(0.0), 1).is_err());
        let bad = OptimizerConfig {
            kind: OptimizerKind::Adam {
                beta1: 1.0,
                beta2: 0.999,
                eps: 1e-8,
            },
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    proptest::proptest! {
        #[test]
        fn adam_first_step_ignores_loss_scale(
            g in proptest::collection::vec(-10.0f64..10.0, 1..6),
            c in 1e-3f64..1e3,
        ) {
            let cfg = OptimizerConfig::default();
            let mut a = vec![0.0; g.len()];
            let mut b = a.clone();
            OptState::new(cfg, g.len()).unwrap().step(&mut a, &g, 0);
            let scaled: Vec<f64> = g.iter().map(|x| c * x).collect();
            OptState::new(cfg, g.len()).unwrap().step(&mut b, &scaled, 0);
            for ((x, y), gi) in a.iter().zip(&b).zip(&g) {
                proptest::prop_assert_eq!(x.signum(), y.signum());
                if gi.abs().min(c * gi.abs()) > 1e-2 {
                    proptest::prop_assert!((x - y).abs() < 1e-6 * cfg.learning_rate);
                }
            }
        }
    }
}
