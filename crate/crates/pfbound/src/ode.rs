//! Time steppers for the scalar decay problem y' = -u*y, y(0) = 1 on (0,1),
//! and the closed-form failure thresholds they induce.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SchemeKind {
    ExplicitEuler,
    CrankNicolson,
}

/// A stepping scheme with step size h = 1/steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OdeScheme {
    pub kind: SchemeKind,
    steps: u32,
}

impl OdeScheme {
    pub fn new(kind: SchemeKind, steps: u32) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Domain("OdeScheme: step count must be >= 1".into()));
        }
        Ok(OdeScheme { kind, steps })
    }

    /// h = 2^-level.
    pub fn from_level(kind: SchemeKind, level: u32) -> Self {
        OdeScheme { kind, steps: 1u32 << level }
    }

    pub fn h(&self) -> f64 {
        1.0 / self.steps as f64
    }

    pub fn steps(&self) -> u32 {
        self.steps
    }
}

/// Steps the scheme from t = 0 to t = 1 and returns y(1).
///
/// The update loop is the real discretization; the closed forms
/// (1 - u h)^{1/h} and ((1 - h u/2)/(1 + h u/2))^{1/h} serve as test oracles.
pub fn integrate_to_one(scheme: OdeScheme, u: f64) -> Result<f64> {
    let h = scheme.h();
    let mut y = 1.0f64;
    match scheme.kind {
        SchemeKind::ExplicitEuler => {
            let factor = 1.0 - u * h;
            for _ in 0..scheme.steps {
                y *= factor;
            }
        }
        SchemeKind::CrankNicolson => {
            let denom = 1.0 + 0.5 * h * u;
            if denom.abs() < 1e-300 {
                return Err(Error::SteppingSingularity { u, h });
            }
            let factor = (1.0 - 0.5 * h * u) / denom;
            for _ in 0..scheme.steps {
                y *= factor;
            }
        }
    }
    Ok(y)
}

/// Failure threshold in u for the event y_h(1) >= y_max: the discrete MLFP.
///
/// Explicit Euler: (1 - y_max^h)/h; Crank-Nicolson: 2 h^-1 (1 - y_max^h)/(1 + y_max^h).
/// Both tend to -log(y_max) as h -> 0.
pub fn mlfp_closed_form(scheme: OdeScheme, y_max: f64) -> Result<f64> {
    if !(y_max > 1.0) {
        return Err(Error::Domain(format!("mlfp_closed_form: y_max = {y_max} must be > 1")));
    }
    let h = scheme.h();
    let p = y_max.powf(h);
    Ok(match scheme.kind {
        SchemeKind::ExplicitEuler => (1.0 - p) / h,
        SchemeKind::CrankNicolson => 2.0 / h * (1.0 - p) / (1.0 + p),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn closed_form(scheme: OdeScheme, u: f64) -> f64 {
        let h = scheme.h();
        match scheme.kind {
            SchemeKind::ExplicitEuler => (1.0 - u * h).powi(scheme.steps() as i32),
            SchemeKind::CrankNicolson => {
                ((1.0 - 0.5 * h * u) / (1.0 + 0.5 * h * u)).powi(scheme.steps() as i32)
            }
        }
    }

    #[test]
    fn one_step_euler_is_one_minus_u() {
        let s = OdeScheme::new(SchemeKind::ExplicitEuler, 1).unwrap();
        for &u in &[-2.5, 0.0, 0.7] {
            assert_eq!(integrate_to_one(s, u).unwrap(), 1.0 - u);
        }
    }

    #[test]
    fn zero_parameter_gives_one() {
        for kind in [SchemeKind::ExplicitEuler, SchemeKind::CrankNicolson] {
            for level in [0, 3, 7] {
                let s = OdeScheme::from_level(kind, level);
                assert_eq!(integrate_to_one(s, 0.0).unwrap(), 1.0);
            }
        }
    }

    #[test]
    fn euler_matches_frozen_value() {
        // (1 - u h)^16 at u = -3.6889, h = 2^-4
        let s = OdeScheme::from_level(SchemeKind::ExplicitEuler, 4);
        let y = integrate_to_one(s, -3.6889).unwrap();
        assert!((y - 27.645441413246267).abs() / 27.645441413246267 < 1e-12);
    }

    #[test]
    fn steppers_match_closed_forms_randomly() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let u: f64 = rng.random_range(-4.0..4.0);
            let level: u32 = rng.random_range(0..10);
            for kind in [SchemeKind::ExplicitEuler, SchemeKind::CrankNicolson] {
                let s = OdeScheme::from_level(kind, level);
                if kind == SchemeKind::CrankNicolson && (1.0 + 0.5 * s.h() * u).abs() < 1e-6 {
                    continue;
                }
                let got = integrate_to_one(s, u).unwrap();
                let want = closed_form(s, u);
                let denom = want.abs().max(1e-300);
                assert!((got - want).abs() / denom < 1e-12, "{kind:?} level {level} u {u}");
            }
        }
    }

    #[test]
    fn crank_nicolson_pole_detected() {
        let s = OdeScheme::new(SchemeKind::CrankNicolson, 1).unwrap();
        assert!(matches!(integrate_to_one(s, -2.0), Err(Error::SteppingSingularity { .. })));
    }

    #[test]
    fn thresholds() {
        let e1 = OdeScheme::new(SchemeKind::ExplicitEuler, 1).unwrap();
        assert_eq!(mlfp_closed_form(e1, 40.0).unwrap(), -39.0);
        // h -> 0 limit is -log(y_max) for both schemes
        for kind in [SchemeKind::ExplicitEuler, SchemeKind::CrankNicolson] {
            let s = OdeScheme::from_level(kind, 20);
            let t = mlfp_closed_form(s, 40.0).unwrap();
            assert!((t - (-(40.0f64).ln())).abs() < 1e-4, "{kind:?}: {t}");
        }
        assert!(mlfp_closed_form(e1, 1.0).is_err());
    }

    #[test]
    fn threshold_convergence_orders() {
        let exact = -(40.0f64).ln();
        for (kind, want, tol) in [
            (SchemeKind::ExplicitEuler, 1.0, 0.15),
            (SchemeKind::CrankNicolson, 2.0, 0.15),
        ] {
            let mut lx = Vec::new();
            let mut ly = Vec::new();
            for level in 4..=9 {
                let s = OdeScheme::from_level(kind, level);
                let d = (mlfp_closed_form(s, 40.0).unwrap() - exact).abs();
                lx.push(s.h().ln());
                ly.push(d.ln());
            }
            let n = lx.len() as f64;
            let mx = lx.iter().sum::<f64>() / n;
            let my = ly.iter().sum::<f64>() / n;
            let slope: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
                / lx.iter().map(|x| (x - mx) * (x - mx)).sum::<f64>();
            assert!((slope - want).abs() < tol, "{kind:?}: slope {slope}");
        }
    }

    #[test]
    fn global_error_orders_at_fixed_u() {
        let u = -(40.0f64).ln();
        let exact = (-u).exp();
        for (kind, want) in [(SchemeKind::ExplicitEuler, 1.0), (SchemeKind::CrankNicolson, 2.0)] {
            let mut lx = Vec::new();
            let mut ly = Vec::new();
            for level in 4..=9 {
                let s = OdeScheme::from_level(kind, level);
                let e = (integrate_to_one(s, u).unwrap() - exact).abs();
                lx.push(s.h().ln());
                ly.push(e.ln());
            }
            let n = lx.len() as f64;
            let mx = lx.iter().sum::<f64>() / n;
            let my = ly.iter().sum::<f64>() / n;
            let slope: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
                / lx.iter().map(|x| (x - mx) * (x - mx)).sum::<f64>();
            assert!((slope - want).abs() < 0.15, "{kind:?}: global-error slope {slope}");
        }
    }
}
