//! Finite-difference checks of analytic gradients, and the network shapes
//! used in the experiments.

use super::mlp::{Activation, MlpModel, MlpSpec};
use crate::error::Result;

/// Components more than this factor below the largest gradient component are
/// measured against that fraction of it instead of their own size. Central
/// differences with a step of 1e-5 through a deep network carry rounding
/// errors near 1e-10, so the relative accuracy of a 1e-7 component is
/// meaningless.
const SCALE_FLOOR: f64 = 1e-4;

/// Largest relative discrepancy between [`MlpModel::grad_params`] and central
/// differences of `forward(x)` with step `h`, over every parameter.
///
/// The discrepancy of coordinate `k` is
/// `|a_k - n_k| / max(|a_k|, |n_k|, 1e-4 max_j |a_j|)`.
pub fn gradient_check(model: &MlpModel, x: &[f64], h: f64) -> Result<f64> {
    let analytic = model.grad_params(x, 1.0)?;
    let largest = analytic.iter().fold(0.0_f64, |m, a| m.max(a.abs()));
    let floor = (SCALE_FLOOR * largest).max(f64::MIN_POSITIVE);
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for (k, &a) in analytic.iter().enumerate() {
        let orig = probe.params()[k];
        probe.params_mut()[k] = orig + h;
        let up = probe.forward(x)?;
        probe.params_mut()[k] = orig - h;
        let down = probe.forward(x)?;
        probe.params_mut()[k] = orig;
        let numeric = (up - down) / (2.0 * h);
        let scale = a.abs().max(numeric.abs()).max(floor);
        worst = worst.max((a - numeric).abs() / scale);
    }
    Ok(worst)
}

/// Every network shape of the two experiments with the given width: the
/// policy, the call and put value networks, and a two-input surface network.
pub fn experiment_architectures(width: usize) -> Result<Vec<(&'static str, MlpSpec)>> {
    let relu = Activation::Relu;
    let leaky = Activation::leaky();
    Ok(vec![
        ("cir_policy", MlpSpec::uniform(1, 3, width, relu, false)?),
        ("glv_policy", MlpSpec::uniform(1, 15, width, relu, true)?),
        ("cir_call", MlpSpec::uniform(1, 6, width, relu, false)?),
        ("cir_put", MlpSpec::uniform(1, 4, width, leaky, false)?),
        ("glv_call", MlpSpec::uniform(1, 9, width, leaky, false)?),
        ("glv_put", MlpSpec::uniform(1, 13, width, relu, true)?),
        ("surface", MlpSpec::uniform(2, 6, width, relu, false)?),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn every_architecture_passes_at_width_8() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (name, spec) in experiment_architectures(8).unwrap() {
            for draw in 0..3 {
                let model = MlpModel::init(spec.clone(), 100 + draw).unwrap();
                let x: Vec<f64> = (0..spec.input_dim)
                    .map(|_| rng.random_range(0.5..1.5))
                    .collect();
                let err = gradient_check(&model, &x, 1e-5).unwrap();
                assert!(err < 1e-5, "{name} draw {draw}: {err:e}");
            }
        }
    }

    #[test]
    fn detects_a_wrong_gradient() {
        // a perturbed model disagrees with the gradient of the original
        let spec = MlpSpec::uniform(1, 2, 4, Activation::Relu, false).unwrap();
        let model = MlpModel::init(spec, 1).unwrap();
        let analytic = model.grad_params(&[1.0], 1.0).unwrap();
        let mut scaled = model.clone();
        for p in scaled.params_mut() {
            *p *= 1.5;
        }
        let other = scaled.grad_params(&[1.0], 1.0).unwrap();
        assert_ne!(analytic, other);
        assert!(gradient_check(&model, &[1.0], 1e-5).unwrap() < 1e-6);
    }
}
