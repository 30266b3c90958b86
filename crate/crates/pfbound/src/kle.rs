//! Karhunen-Loeve expansion of a stationary Gaussian field with exponential
//! covariance on (0,1), plus the two diffusion-coefficient transforms.
//!
//! The eigenpairs of the correlation kernel exp(-|x-y|/lambda) are known in
//! closed form up to the roots of two transcendental equations. On the
//! symmetric interval [-1/2, 1/2] with c = 1/lambda the even modes solve
//! `theta*tan(theta) = c/2` on ((j-1)pi, (j-1/2)pi) and the odd modes solve
//! `tan(theta) = -2*theta/c` on ((j-1/2)pi, j*pi); both sequences interleave,
//! so sorting by frequency gives the eigenvalues in decreasing order. Each
//! root is bracketed analytically and bisected to 1e-12, which keeps the
//! construction free of any dense eigensolver.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Parity {
    Even,
    Odd,
}

#[derive(Debug, Clone)]
struct KleMode {
    omega: f64,
    nu: f64,
    /// signed amplitude so that z(x) = amp * cos/sin(omega*(x - 1/2)) is
    /// L2(0,1)-normalized with z(0) >= 0
    amp: f64,
    parity: Parity,
}

impl KleMode {
    #[inline]
    fn eval(&self, x: f64) -> f64 {
        let t = self.omega * (x - 0.5);
        match self.parity {
            Parity::Even => self.amp * t.cos(),
            Parity::Odd => self.amp * t.sin(),
        }
    }
}

/// Which positive transform maps the Gaussian field to a diffusion coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiffusionKind {
    /// a(x) = 2 + tanh(Z(x)), uniformly bounded in (1, 3)
    TanhShifted,
    /// a(x) = exp(Z(x)), log-normal (pathwise bounded only)
    LogNormal,
}

/// Truncated KL expansion Z_n(x) = mean + std * sum_m sqrt(nu_m) z_m(x) u_m
/// of a stationary Gaussian field with exponential covariance on (0,1).
#[derive(Debug, Clone)]
pub struct ExpCovKle {
    mean: f64,
    std: f64,
    corr_len: f64,
    modes: Vec<KleMode>,
}

/// Bisection on a sign change; the transcendental forms below are pole-free.
fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64, mode: usize) -> Result<f64> {
    let (flo, fhi) = (f(lo), f(hi));
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::KleRoot { mode });
    }
    let mut flo = flo;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Builds the n-term expansion; roots solved to 1e-12, eigenfunctions
/// normalized in L2(0,1) with the sign convention z_m(0) >= 0.
pub fn build_kle(mean: f64, std: f64, corr_len: f64, n: usize) -> Result<ExpCovKle> {
    if !(std > 0.0) || !std.is_finite() {
        return Err(Error::Domain(format!("build_kle: std = {std} must be > 0")));
    }
    if !(corr_len > 0.0) || !corr_len.is_finite() {
        return Err(Error::Domain(format!("build_kle: corr_len = {corr_len} must be > 0")));
    }
    if n == 0 {
        return Err(Error::Domain("build_kle: truncation order must be >= 1".into()));
    }
    let c = 1.0 / corr_len;
    let half = 0.5; // interval half-width after shifting (0,1) to (-1/2,1/2)
    let ca = c * half;
    let pi = std::f64::consts::PI;

    let mut modes = Vec::with_capacity(n);
    for m in 1..=n {
        let (theta, parity) = if m % 2 == 1 {
            // even mode j: theta*tan(theta) = ca on ((j-1)pi, (j-1/2)pi),
            // written pole-free as theta*sin - ca*cos = 0
            let j = (m + 1) / 2;
            let lo = (j as f64 - 1.0) * pi;
            let hi = (j as f64 - 0.5) * pi;
            let th = bisect(lo, hi, |t| t * t.sin() - ca * t.cos(), m)?;
            (th, Parity::Even)
        } else {
            // odd mode j: tan(theta) = -theta/ca on ((j-1/2)pi, j*pi),
            // written pole-free as ca*sin + theta*cos = 0
            let j = m / 2;
            let lo = (j as f64 - 0.5) * pi;
            let hi = j as f64 * pi;
            let th = bisect(lo, hi, |t| ca * t.sin() + t * t.cos(), m)?;
            (th, Parity::Odd)
        };
        let omega = theta / half;
        let nu = 2.0 * c / (omega * omega + c * c);
        let sin2 = (2.0 * omega * half).sin() / (2.0 * omega);
        let norm = match parity {
            Parity::Even => (half + sin2).sqrt(),
            Parity::Odd => (half - sin2).sqrt(),
        };
        let mut mode = KleMode { omega, nu, amp: 1.0 / norm, parity };
        if mode.eval(0.0) < 0.0 {
            mode.amp = -mode.amp;
        }
        modes.push(mode);
    }
    Ok(ExpCovKle { mean, std, corr_len, modes })
}

impl ExpCovKle {
    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn std(&self) -> f64 {
        self.std
    }

    pub fn corr_len(&self) -> f64 {
        self.corr_len
    }

    /// Truncation order n.
    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    /// m-th eigenvalue of the unit-variance correlation operator (1-based).
    pub fn eigenvalue(&self, m: usize) -> f64 {
        self.modes[m - 1].nu
    }

    /// m-th L2(0,1)-orthonormal eigenfunction (1-based).
    pub fn eigenfunction(&self, m: usize, x: f64) -> f64 {
        self.modes[m - 1].eval(x)
    }

    /// Fraction of the field variance captured by the truncation: sum nu_m.
    /// The correlation operator on (0,1) has unit trace, so this is <= 1.
    pub fn captured_variance(&self) -> f64 {
        self.modes.iter().map(|m| m.nu).sum()
    }

    /// Fills out[m] = std * sqrt(nu_m) * z_m(x), the coefficient row mapping a
    /// parameter vector to the centred field value at x.
    pub fn weighted_basis(&self, x: f64, out: &mut [f64]) {
        assert_eq!(out.len(), self.modes.len());
        for (o, mode) in out.iter_mut().zip(&self.modes) {
            *o = self.std * mode.nu.sqrt() * mode.eval(x);
        }
    }

    /// Z_n(x; u) = mean + std * sum_m sqrt(nu_m) z_m(x) u_m.
    pub fn field_value(&self, u: &[f64], x: f64) -> Result<f64> {
        if u.len() != self.modes.len() {
            return Err(Error::DimensionMismatch { expected: self.modes.len(), got: u.len() });
        }
        let mut acc = self.mean;
        for (mode, &um) in self.modes.iter().zip(u) {
            acc += self.std * mode.nu.sqrt() * mode.eval(x) * um;
        }
        Ok(acc)
    }

    /// Diffusion coefficient at x for the given transform; positive for any
    /// finite field value.
    pub fn diffusion_value(&self, kind: DiffusionKind, u: &[f64], x: f64) -> Result<f64> {
        let z = self.field_value(u, x)?;
        Ok(match kind {
            DiffusionKind::TanhShifted => 2.0 + z.tanh(),
            DiffusionKind::LogNormal => z.exp(),
        })
    }
}
