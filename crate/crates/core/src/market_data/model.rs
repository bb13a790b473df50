//! Objective-measure dynamics `dS/S = mu(S) dt + sigma(S) dB`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Allowed mismatch between the quadratic smile and the flat wing levels at
/// the knees. The published coefficients are rounded to three decimals and
/// miss the wing levels by about 4.4e-4, so the check cannot be tighter.
pub const KNEE_TOLERANCE: f64 = 1e-3;

/// Piecewise implied-volatility smile in strike: quadratic between the
/// knees, flat outside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawImpliedVol")]
pub struct ImpliedVolFn {
    c2: f64,
    c1: f64,
    c0: f64,
    k_lo: f64,
    k_hi: f64,
    v_lo: f64,
    v_hi: f64,
}

#[derive(Deserialize)]
struct RawImpliedVol {
    c2: f64,
    c1: f64,
    c0: f64,
    k_lo: f64,
    k_hi: f64,
    v_lo: f64,
    v_hi: f64,
}

impl TryFrom<RawImpliedVol> for ImpliedVolFn {
    type Error = Error;

    fn try_from(r: RawImpliedVol) -> Result<Self> {
        ImpliedVolFn::new((r.c2, r.c1, r.c0), r.k_lo, r.k_hi, r.v_lo, r.v_hi)
    }
}

impl ImpliedVolFn {
    pub fn new(quad: (f64, f64, f64), k_lo: f64, k_hi: f64, v_lo: f64, v_hi: f64) -> Result<Self> {
        let (c2, c1, c0) = quad;
        let all = [c2, c1, c0, k_lo, k_hi, v_lo, v_hi];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel(
                "implied-vol coefficients must be finite".into(),
            ));
        }
        if !(k_lo > 0.0 && k_lo < k_hi) {
            return Err(Error::InvalidModel(format!(
                "implied-vol knees must satisfy 0 < k_lo < k_hi, got {k_lo}, {k_hi}"
            )));
        }
        if v_lo <= 0.0 || v_hi <= 0.0 {
            return Err(Error::InvalidModel(
                "flat implied-vol levels must be positive".into(),
            ));
        }
        let f = Self {
            c2,
            c1,
            c0,
            k_lo,
            k_hi,
            v_lo,
            v_hi,
        };
        let gap_lo = (f.quadratic(k_lo) - v_lo).abs();
        let gap_hi = (f.quadratic(k_hi) - v_hi).abs();
        if gap_lo > KNEE_TOLERANCE || gap_hi > KNEE_TOLERANCE {
            return Err(Error::InvalidModel(format!(
                "implied-vol smile is discontinuous at the knees (gaps {gap_lo:.2e}, {gap_hi:.2e})"
            )));
        }
        // minimum of the quadratic over the knee interval
        let mut lowest = f.quadratic(k_lo).min(f.quadratic(k_hi));
        if c2 != 0.0 {
            let vertex = -c1 / (2.0 * c2);
            if vertex > k_lo && vertex < k_hi {
                lowest = lowest.min(f.quadratic(vertex));
            }
        }
        if lowest <= 0.0 {
            return Err(Error::InvalidModel(
                "implied-vol smile is not strictly positive".into(),
            ));
        }
        Ok(f)
    }

    /// The smile used by the generalized local-volatility experiment:
    /// `2.681K^2 - 5.466K + 2.981` on (0.60, 1.33), 0.667 below, 0.454 above.
    pub fn glv_default() -> Self {
        Self::new((2.681, -5.466, 2.981), 0.60, 1.33, 0.667, 0.454).expect("default smile is valid")
    }

    pub fn knees(&self) -> (f64, f64) {
        (self.k_lo, self.k_hi)
    }

    pub fn flat_levels(&self) -> (f64, f64) {
        (self.v_lo, self.v_hi)
    }

    pub fn coefficients(&self) -> (f64, f64, f64) {
        (self.c2, self.c1, self.c0)
    }

    /// The quadratic piece, evaluated anywhere.
    pub fn quadratic(&self, k: f64) -> f64 {
        (self.c2 * k + self.c1) * k + self.c0
    }

    pub fn value(&self, k: f64) -> f64 {
        if k <= self.k_lo {
            self.v_lo
        } else if k >= self.k_hi {
            self.v_hi
        } else {
            self.quadratic(k)
        }
    }

    // At the knees themselves the derivatives come from the quadratic side.
    fn in_quadratic_closure(&self, k: f64) -> bool {
        k >= self.k_lo && k <= self.k_hi
    }

    pub fn first_derivative(&self, k: f64) -> f64 {
        if self.in_quadratic_closure(k) {
            2.0 * self.c2 * k + self.c1
        } else {
            0.0
        }
    }

    pub fn second_derivative(&self, k: f64) -> f64 {
        if self.in_quadratic_closure(k) {
            2.0 * self.c2
        } else {
            0.0
        }
    }
}

/// Dynamics of the underlying under the objective measure.
///
/// Every variant is written in relative form, `dS/S = mu(S) dt + sigma(S) dB`:
/// the mean-reverting variants have `mu(s) = a(b - s)/s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "lowercase", try_from = "RawModel")]
pub enum SdeModel {
    /// Square-root diffusion, `sigma(s) = sigma0 / sqrt(s)`.
    Cir {
        a: f64,
        b: f64,
        sigma0: f64,
    },
    /// Mean-reverting drift with a Dupire local volatility reconstructed from
    /// an implied smile calibrated at maturity `t_star` and rate `r_star`.
    Glv {
        a: f64,
        b: f64,
        iv: ImpliedVolFn,
        t_star: f64,
        r_star: f64,
    },
    Gbm {
        mu: f64,
        sigma: f64,
    },
}

#[derive(Deserialize)]
#[serde(tag = "variant", rename_all = "lowercase")]
enum RawModel {
    Cir {
        a: f64,
        b: f64,
        sigma0: f64,
    },
    Glv {
        a: f64,
        b: f64,
        iv: ImpliedVolFn,
        t_star: f64,
        r_star: f64,
    },
    Gbm {
        mu: f64,
        sigma: f64,
    },
}

impl TryFrom<RawModel> for SdeModel {
    type Error = Error;

    fn try_from(raw: RawModel) -> Result<Self> {
        match raw {
            RawModel::Cir { a, b, sigma0 } => SdeModel::cir(a, b, sigma0),
            RawModel::Glv {
                a,
                b,
                iv,
                t_star,
                r_star,
            } => SdeModel::glv(a, b, iv, t_star, r_star),
            RawModel::Gbm { mu, sigma } => SdeModel::gbm(mu, sigma),
        }
    }
}

impl SdeModel {
    /// Rejects parameters that violate the Feller condition `2ab > sigma0^2`.
    pub fn cir(a: f64, b: f64, sigma0: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0 && sigma0 > 0.0) || !(a * b * sigma0).is_finite() {
            return Err(Error::InvalidModel(format!(
                "CIR needs a, b, sigma0 > 0 (got a={a}, b={b}, sigma0={sigma0})"
            )));
        }
        if 2.0 * a * b <= sigma0 * sigma0 {
            return Err(Error::InvalidModel(format!(
                "CIR violates the Feller condition: 2ab = {} <= sigma0^2 = {}",
                2.0 * a * b,
                sigma0 * sigma0
            )));
        }
        Ok(SdeModel::Cir { a, b, sigma0 })
    }

    pub fn glv(a: f64, b: f64, iv: ImpliedVolFn, t_star: f64, r_star: f64) -> Result<Self> {
        if !(a.is_finite() && b > 0.0 && t_star > 0.0 && r_star.is_finite()) {
            return Err(Error::InvalidModel(format!(
                "GLV needs finite a, b > 0, t_star > 0 (got a={a}, b={b}, t_star={t_star})"
            )));
        }
        Ok(SdeModel::Glv {
            a,
            b,
            iv,
            t_star,
            r_star,
        })
    }

    pub fn gbm(mu: f64, sigma: f64) -> Result<Self> {
        if !mu.is_finite() || !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidModel(format!(
                "GBM needs finite mu and sigma > 0 (got mu={mu}, sigma={sigma})"
            )));
        }
        Ok(SdeModel::Gbm { mu, sigma })
    }

    /// Parameters of the mean-reverting square-root experiment.
    pub fn cir_default() -> Self {
        SdeModel::Cir {
            a: 0.1,
            b: 1.3,
            sigma0: 0.2,
        }
    }

    /// Parameters of the generalized local-volatility experiment.
    pub fn glv_default() -> Self {
        SdeModel::Glv {
            a: 3.0,
            b: 0.98,
            iv: ImpliedVolFn::glv_default(),
            t_star: 0.1,
            r_star: 0.019,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SdeModel::Cir { .. } => "cir",
            SdeModel::Glv { .. } => "glv",
            SdeModel::Gbm { .. } => "gbm",
        }
    }

    /// Relative drift `mu(s)`.
    pub fn drift_rate(&self, s: f64) -> Result<f64> {
        check_price(s)?;
        Ok(match *self {
            SdeModel::Cir { a, b, .. } | SdeModel::Glv { a, b, .. } => a * (b - s) / s,
            SdeModel::Gbm { mu, .. } => mu,
        })
    }

    /// Relative diffusion coefficient `sigma(s)`.
    pub fn vol_rate(&self, s: f64) -> Result<f64> {
        check_price(s)?;
        match self {
            SdeModel::Cir { sigma0, .. } => Ok(sigma0 / s.sqrt()),
            SdeModel::Gbm { sigma, .. } => Ok(*sigma),
            SdeModel::Glv {
                iv, t_star, r_star, ..
            } => dupire_local_vol(iv, s, *t_star, *r_star),
        }
    }
}

fn check_price(s: f64) -> Result<()> {
    if s > 0.0 && s.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "price must be positive and finite, got {s}"
        )))
    }
}

/// Dupire local volatility at strike `k` from a maturity-`t_star` smile.
fn dupire_local_vol(iv: &ImpliedVolFn, k: f64, t_star: f64, r_star: f64) -> Result<f64> {
    let sig = iv.value(k);
    let d_sig = iv.first_derivative(k);
    let dd_sig = iv.second_derivative(k);
    let sqrt_t = t_star.sqrt();
    let d1 = (-k.ln() + t_star * (r_star + 0.5 * sig * sig)) / (sig * sqrt_t);

    let numerator = sig * sig + 2.0 * r_star * sig * k * t_star * d_sig;
    let lead = 1.0 + k * d1 * sqrt_t * d_sig;
    let denominator = lead * lead + sig * t_star * k * k * (dd_sig - d1 * d_sig * d_sig * sqrt_t);

    if !(denominator > 0.0) {
        return Err(Error::Singularity {
            s: k,
            reason: format!("Dupire denominator {denominator:e} is not positive"),
        });
    }
    if !(numerator > 0.0) {
        return Err(Error::Singularity {
            s: k,
            reason: format!("Dupire numerator {numerator:e} is not positive"),
        });
    }
    Ok((numerator / denominator).sqrt())
}
