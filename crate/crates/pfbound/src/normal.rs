//! Standard-normal primitives and the Gaussian CDF sandwich bounds used by
//! the Lipschitz-constant analysis.
//!
//! The CDF goes through `erfc` so that tail values around the reliability
//! indices of interest (beta = 3..5) keep full relative accuracy; every
//! downstream probability in the crate leans on that.

use crate::error::{Error, Result};

pub const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_68;
const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Standard normal density.
#[inline]
pub fn std_normal_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF via the complementary error function.
///
/// Relative accuracy is a few ulp on [-10, 10] and the tail stays accurate
/// down to the underflow threshold (x ~ -38).
pub fn std_normal_cdf(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("std_normal_cdf: non-finite input {x}")));
    }
    Ok(0.5 * libm::erfc(-x / SQRT_2))
}

/// log of the standard normal CDF, usable far into the left tail where the
/// CDF itself underflows.
pub fn ln_std_normal_cdf(x: f64) -> f64 {
    if x > -30.0 {
        (0.5 * libm::erfc(-x / SQRT_2)).ln()
    } else {
        // Mills-ratio asymptotics: Phi(x) = phi(x)/(-x) * (1 - 1/x^2 + 3/x^4 - 15/x^6 + 105/x^8 ...)
        let x2 = x * x;
        let series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2)
            + 105.0 / (x2 * x2 * x2 * x2);
        -0.5 * x2 - (-x).ln() - 0.918_938_533_204_672_74 + series.ln()
    }
}

/// Standard normal quantile, Acklam's rational approximation polished by one
/// Newton step on the erfc-based CDF.
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("std_normal_quantile: p = {p} outside (0,1)")));
    }
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    let p_low = 0.02425;
    let mut x = if p < p_low {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    // one Newton step: x -= (Phi(x) - p)/phi(x)
    let cdf = 0.5 * libm::erfc(-x / SQRT_2);
    x -= (cdf - p) / std_normal_pdf(x);
    Ok(x)
}

/// A scalar Gaussian N(mean, variance), the distribution of W = alpha^T U for
/// an affine-linear limit state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianScalar {
    mean: f64,
    variance: f64,
}

impl GaussianScalar {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !(variance > 0.0) || !variance.is_finite() || !mean.is_finite() {
            return Err(Error::Domain(format!(
                "GaussianScalar requires finite mean and variance > 0, got ({mean}, {variance})"
            )));
        }
        Ok(Self { mean, variance })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn std(&self) -> f64 {
        self.variance.sqrt()
    }

    /// CDF F_W(w).
    pub fn cdf(&self, w: f64) -> Result<f64> {
        std_normal_cdf((w - self.mean) / self.std())
    }
}

/// Gordon bounds for the centred Gaussian CDF F_W(w) = Phi(w/sigma), w < 0.
///
/// Returns `(lower, upper)` with `lower <= Phi(w/sigma) <= upper` and the
/// exact ratio `upper/lower = (w^2 + sigma^2)/w^2`, which for sigma = 1 is the
/// (beta^2+1)/beta^2 identity used by the Lipschitz bound.
pub fn cdf_bounds_gordon(w: f64, sigma: f64) -> Result<(f64, f64)> {
    if !(w < 0.0) || !w.is_finite() {
        return Err(Error::Domain(format!(
            "cdf_bounds_gordon: bounds only defined for negative inputs, got w = {w}"
        )));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Domain(format!("cdf_bounds_gordon: sigma = {sigma} must be > 0")));
    }
    // density prefactor through one exp of summed logs, which keeps the
    // bounds alive over the full subnormal range of the CDF itself
    let dens = (sigma.ln() - w * w / (2.0 * sigma * sigma) - 0.918_938_533_204_672_74).exp();
    let lower = dens * (-w) / (w * w + sigma * sigma);
    let upper = dens / (-w);
    Ok((lower, upper))
}

/// Sharper sandwich bounds for Phi(w/sigma), valid on w <= 0 and finite at 0.
pub fn cdf_bounds_sharp(w: f64, sigma: f64) -> Result<(f64, f64)> {
    if !(w <= 0.0) || !w.is_finite() {
        return Err(Error::Domain(format!(
            "cdf_bounds_sharp: bounds only defined for w <= 0, got w = {w}"
        )));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Domain(format!("cdf_bounds_sharp: sigma = {sigma} must be > 0")));
    }
    let r = -w / sigma; // >= 0
    let scale = ((2.0 / std::f64::consts::PI).ln() / 2.0 - 0.5 * r * r).exp();
    let lower = scale / ((4.0 + r * r).sqrt() + r);
    let upper = scale / ((2.0 + r * r).sqrt() + r);
    Ok((lower, upper))
}
