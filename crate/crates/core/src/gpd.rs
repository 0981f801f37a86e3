//! Generalized Pareto distribution with the location fixed at zero.
//!
//! Loss evaluation uses the density without its `1/eta` normalizer, so
//! `pdf(0) == 1` and values decay towards zero in the tail. Parameters are
//! estimated by the method of moments, which is closed form and cheap enough
//! to run once per training batch.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this magnitude the shape is treated as exactly zero (exponential limit).
pub const XI_ZERO_TOL: f64 = 1e-8;

/// Moment estimates approach 0.5 as the sample variance blows up relative to
/// the mean; estimates above this value are clamped to it by [`fit_gpd_mom`].
pub const XI_CLAMP: f64 = 0.45;

/// Shape `xi` and scale `eta` of a GPD located at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpdParams {
    pub xi: f64,
    pub eta: f64,
}

impl GpdParams {
    pub fn new(xi: f64, eta: f64) -> Result<Self> {
        let params = Self { xi, eta };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.xi.is_finite() {
            return Err(Error::InvalidParams(format!("shape must be finite, got {}", self.xi)));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "scale must be positive and finite, got {}",
                self.eta
            )));
        }
        Ok(())
    }

    /// Location is always zero.
    pub fn mu(&self) -> f64 {
        0.0
    }

    /// Right end of the support, `-eta/xi` for negative shapes.
    pub fn upper_bound(&self) -> f64 {
        if self.xi < -XI_ZERO_TOL {
            -self.eta / self.xi
        } else {
            f64::INFINITY
        }
    }

    fn is_exponential(&self) -> bool {
        self.xi.abs() < XI_ZERO_TOL
    }

    fn check_support(&self, a: f64) -> Result<()> {
        let upper = self.upper_bound();
        if !(a >= 0.0 && a <= upper) {
            return Err(Error::OutOfSupport { value: a, upper });
        }
        Ok(())
    }

    /// Unnormalized density and its derivative in `a`, without support checks.
    /// Beyond the upper endpoint of a bounded support both are zero.
    pub(crate) fn density_and_slope(&self, a: f64) -> (f64, f64) {
        if self.is_exponential() {
            let d = (-a / self.eta).exp();
            return (d, -d / self.eta);
        }
        let base = 1.0 + self.xi * a / self.eta;
        if base <= 0.0 {
            return (0.0, 0.0);
        }
        let c = -(1.0 / self.xi + 1.0);
        let d = base.powf(c);
        let slope = c * (self.xi / self.eta) * base.powf(c - 1.0);
        (d, slope)
    }
}

/// Unnormalized GPD density `(1 + xi*a/eta)^-(1/xi + 1)`.
pub fn gpd_pdf(a: f64, params: &GpdParams) -> Result<f64> {
    params.validate()?;
    params.check_support(a)?;
    Ok(params.density_and_slope(a).0)
}

/// Inverse CDF: maps `u` in `[0, 1)` to a GPD variate.
pub fn gpd_quantile(u: f64, params: &GpdParams) -> Result<f64> {
    params.validate()?;
    if !(0.0..1.0).contains(&u) {
        return Err(Error::InvalidParams(format!("probability must lie in [0, 1), got {u}")));
    }
    if params.is_exponential() {
        Ok(-params.eta * (-u).ln_1p())
    } else {
        Ok(params.eta * ((1.0 - u).powf(-params.xi) - 1.0) / params.xi)
    }
}

/// Draws `n` variates by inverse-CDF sampling from a generator seeded with `seed`.
pub fn gpd_sample(params: &GpdParams, n: usize, seed: u64) -> Result<Vec<f64>> {
    params.validate()?;
    if n == 0 {
        return Err(Error::InvalidParams("sample size must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| gpd_quantile(rng.random::<f64>(), params)).collect()
}

/// Result of a moment fit. `clamped` is set when the raw shape estimate exceeded
/// [`XI_CLAMP`]; the estimator is bounded by 0.5, where the variance of the
/// distribution stops existing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpdFit {
    pub params: GpdParams,
    pub raw_xi: f64,
    pub clamped: bool,
}

/// Method-of-moments fit: `xi = (1 - mean^2/var)/2`, `eta = mean*(1 - xi)`,
/// with the unbiased sample variance.
///
/// Shape estimates above [`XI_CLAMP`] are clamped and flagged so that a
/// training run survives an extreme batch.
pub fn fit_gpd_mom(samples: &[f64]) -> Result<GpdFit> {
    if samples.len() < 2 {
        return Err(Error::DegenerateSample(format!(
            "need at least 2 samples, got {}",
            samples.len()
        )));
    }
    if let Some(bad) = samples.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::InvalidParams(format!("samples must be finite and nonnegative, got {bad}")));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if !var.is_finite() || !(mean * mean).is_finite() {
        return Err(Error::InvalidParams("sample moments overflow".into()));
    }
    if !(var > 0.0) || !(mean > 0.0) {
        return Err(Error::DegenerateSample("sample variance is zero".into()));
    }
    let raw_xi = 0.5 * (1.0 - mean * mean / var);
    let clamped = raw_xi > XI_CLAMP;
    let xi = if clamped { XI_CLAMP } else { raw_xi };
    let params = GpdParams::new(xi, mean * (1.0 - xi))?;
    Ok(GpdFit { params, raw_xi, clamped })
}

/// Like [`fit_gpd_mom`] but reports the divergent case as an error.
pub fn fit_gpd_mom_strict(samples: &[f64]) -> Result<GpdParams> {
    let fit = fit_gpd_mom(samples)?;
    if fit.clamped {
        return Err(Error::FitDiverged { xi: fit.raw_xi });
    }
    Ok(fit.params)
}
