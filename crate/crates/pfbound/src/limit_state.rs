//! Limit-state evaluators: failure is the event G(u) <= 0 for u in the
//! n-dimensional standard-normal parameter space.
//!
//! The three experiment families (scalar ODE, 2-parameter BVP, log-normal
//! diffusion) and the affine-linear test family all implement [`LimitState`].
//! Discretized variants carry an h/s tag so the bound assembly knows the
//! claimed convergence order.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem1d::{self, Coefficient, Degree, Mesh1D};
use crate::kle::{DiffusionKind, ExpCovKle};
use crate::ode::{self, OdeScheme, SchemeKind};

/// Central-difference step for [`fd_gradient`].
pub const FD_STEP: f64 = 1e-5;

/// Discretization metadata attached to an evaluator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DiscretizationTag {
    Exact,
    Approx {
        h: f64,
        /// claimed convergence order s in |G - G_h| <= C_FE h^s
        s: f64,
        /// error constant when known
        c_fe: Option<f64>,
    },
}

pub trait LimitState: Send + Sync {
    fn dim(&self) -> usize;

    fn evaluate(&self, u: &[f64]) -> Result<f64>;

    /// Gradient of G; defaults to central finite differences.
    fn gradient(&self, u: &[f64]) -> Result<Vec<f64>> {
        fd_gradient(self, u)
    }

    fn discretization(&self) -> DiscretizationTag {
        DiscretizationTag::Exact
    }
}

fn check_dim(lsf: &(impl LimitState + ?Sized), u: &[f64]) -> Result<()> {
    if u.len() != lsf.dim() {
        return Err(Error::DimensionMismatch { expected: lsf.dim(), got: u.len() });
    }
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("parameter vector has non-finite components".into()));
    }
    Ok(())
}

/// Central differences with step [`FD_STEP`] per coordinate.
pub fn fd_gradient<L: LimitState + ?Sized>(lsf: &L, u: &[f64]) -> Result<Vec<f64>> {
    check_dim(lsf, u)?;
    let mut grad = Vec::with_capacity(u.len());
    let mut point = u.to_vec();
    for i in 0..u.len() {
        point[i] = u[i] + FD_STEP;
        let up = lsf.evaluate(&point)?;
        point[i] = u[i] - FD_STEP;
        let dn = lsf.evaluate(&point)?;
        point[i] = u[i];
        if !up.is_finite() || !dn.is_finite() {
            return Err(Error::Gradient);
        }
        grad.push((up - dn) / (2.0 * FD_STEP));
    }
    Ok(grad)
}

/// Affine-linear limit state G(u) = alpha^T u + beta, beta > 0, for which
/// P_f = Phi(-beta/||alpha||) exactly.
#[derive(Debug, Clone)]
pub struct LinearGaussianLsf {
    alpha: Vec<f64>,
    beta: f64,
}

impl LinearGaussianLsf {
    pub fn new(alpha: Vec<f64>, beta: f64) -> Result<Self> {
        if alpha.is_empty() || alpha.iter().any(|a| !a.is_finite()) {
            return Err(Error::Domain("LinearGaussianLsf: alpha must be non-empty and finite".into()));
        }
        if !(beta > 0.0) {
            return Err(Error::Domain(format!("LinearGaussianLsf: beta = {beta} must be > 0")));
        }
        Ok(Self { alpha, beta })
    }

    /// sigma = ||alpha||_2, the std of W = alpha^T U.
    pub fn sigma(&self) -> f64 {
        self.alpha.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

impl LimitState for LinearGaussianLsf {
    fn dim(&self) -> usize {
        self.alpha.len()
    }

    fn evaluate(&self, u: &[f64]) -> Result<f64> {
        check_dim(self, u)?;
        Ok(self.alpha.iter().zip(u).map(|(a, x)| a * x).sum::<f64>() + self.beta)
    }

    fn gradient(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_dim(self, u)?;
        Ok(self.alpha.clone())
    }
}

/// Scalar ODE limit state G(u) = y_max - y(1; u), failure when the decay
/// solution exceeds y_max at t = 1.
#[derive(Debug, Clone, Copy)]
pub struct OdeLsf {
    scheme: Option<OdeScheme>,
    y_max: f64,
}

/// `scheme = None` selects the exact solution exp(-u).
pub fn make_ode_lsf(scheme: Option<OdeScheme>, y_max: f64) -> Result<OdeLsf> {
    if !(y_max > 1.0) {
        return Err(Error::Domain(format!("make_ode_lsf: y_max = {y_max} must be > 1")));
    }
    Ok(OdeLsf { scheme, y_max })
}

impl LimitState for OdeLsf {
    fn dim(&self) -> usize {
        1
    }

    fn evaluate(&self, u: &[f64]) -> Result<f64> {
        check_dim(self, u)?;
        let y1 = match self.scheme {
            None => (-u[0]).exp(),
            Some(s) => ode::integrate_to_one(s, u[0])?,
        };
        Ok(self.y_max - y1)
    }

    fn gradient(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_dim(self, u)?;
        match self.scheme {
            None => Ok(vec![(-u[0]).exp()]),
            Some(_) => fd_gradient(self, u),
        }
    }

    fn discretization(&self) -> DiscretizationTag {
        match self.scheme {
            None => DiscretizationTag::Exact,
            Some(s) => DiscretizationTag::Approx {
                h: s.h(),
                s: match s.kind {
                    SchemeKind::ExplicitEuler => 1.0,
                    SchemeKind::CrankNicolson => 2.0,
                },
                c_fe: None,
            },
        }
    }
}

/// Boundary value problem -(exp(u1/3 - 3) y')' = 1 - x, y(0) = 0, y(1) = u2;
/// failure when y(xhat) <= y_max.
#[derive(Debug, Clone, Copy)]
pub enum Bvp2dVariant {
    Exact,
    Fe { degree: Degree, level: u32 },
}

pub const BVP2D_Y_MAX: f64 = -1.0 / 3.0;
pub const BVP2D_XHAT: f64 = 1.0 / 3.0;

#[derive(Debug, Clone, Copy)]
pub struct Bvp2dLsf {
    variant: Bvp2dVariant,
    y_max: f64,
    xhat: f64,
    /// xhat^3/6 - xhat^2/2 + xhat/3, the polynomial factor of the exact solution
    poly: f64,
}

pub fn make_bvp2d_lsf(variant: Bvp2dVariant) -> Bvp2dLsf {
    let xhat = BVP2D_XHAT;
    Bvp2dLsf {
        variant,
        y_max: BVP2D_Y_MAX,
        xhat,
        poly: xhat * xhat * xhat / 6.0 - xhat * xhat / 2.0 + xhat / 3.0,
    }
}

impl Bvp2dLsf {
    /// y(xhat; u1, u2) for the chosen variant.
    fn solution_at_xhat(&self, u1: f64, u2: f64) -> Result<f64> {
        match self.variant {
            Bvp2dVariant::Exact => Ok(u2 * self.xhat + (-u1 / 3.0 + 3.0).exp() * self.poly),
            Bvp2dVariant::Fe { degree, level } => {
                let a = (u1 / 3.0 - 3.0).exp();
                let sol = fem1d::solve(
                    Box::new(move |_x: f64| a),
                    &|x| 1.0 - x,
                    (0.0, u2),
                    Mesh1D::uniform(level),
                    degree,
                )?;
                sol.point_value(self.xhat)
            }
        }
    }

    /// The failure surface expressed as u2 as a function of u1: G is affine in
    /// u2 with slope xhat for both variants (the FE space reproduces linears),
    /// so the threshold follows from one evaluation at u2 = 0.
    pub fn failure_threshold_u2(&self, u1: f64) -> Result<f64> {
        let g0 = self.evaluate(&[u1, 0.0])?;
        Ok(-g0 / self.xhat)
    }

    pub fn exact_surface_u2(&self, u1: f64) -> f64 {
        (self.y_max - self.poly * (-u1 / 3.0 + 3.0).exp()) / self.xhat
    }
}

impl LimitState for Bvp2dLsf {
    fn dim(&self) -> usize {
        2
    }

    fn evaluate(&self, u: &[f64]) -> Result<f64> {
        check_dim(self, u)?;
        Ok(self.solution_at_xhat(u[0], u[1])? - self.y_max)
    }

    fn gradient(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_dim(self, u)?;
        match self.variant {
            Bvp2dVariant::Exact => {
                Ok(vec![-self.poly / 3.0 * (-u[0] / 3.0 + 3.0).exp(), self.xhat])
            }
            Bvp2dVariant::Fe { .. } => fd_gradient(self, u),
        }
    }

    fn discretization(&self) -> DiscretizationTag {
        match self.variant {
            Bvp2dVariant::Exact => DiscretizationTag::Exact,
            Bvp2dVariant::Fe { degree, level } => DiscretizationTag::Approx {
                h: Mesh1D::uniform(level).h(),
                s: (degree.order() + 1) as f64,
                c_fe: None,
            },
        }
    }
}

/// Branch-free exp over a slice (Cody-Waite reduction, degree-11 minimax-ish
/// polynomial, 2^k scaling via exponent bits). Relative error is a few ulp
/// over the coefficient-field range; the arguments here are |z| <= O(10), far
/// from overflow or denormal territory.
fn exp_slice(z: &mut [f64]) {
    const INV_LN2: f64 = std::f64::consts::LOG2_E;
    const LN2_HI: f64 = 6.931_471_805_599_453e-1;
    const LN2_LO: f64 = 2.319_046_813_846_299_6e-17;
    const C: [f64; 14] = [
        1.0,
        1.0,
        0.5,
        1.666_666_666_666_666_6e-1,
        4.166_666_666_666_666_4e-2,
        8.333_333_333_333_333e-3,
        1.388_888_888_888_889e-3,
        1.984_126_984_126_984e-4,
        2.480_158_730_158_730_2e-5,
        2.755_731_922_398_589_4e-6,
        2.755_731_922_398_589_4e-7,
        2.505_210_838_544_171_9e-8,
        2.087_675_698_786_810e-9,
        1.605_904_383_682_161_3e-10,
    ];
    // round-to-nearest via the 2^52 magic constant keeps the loop branch-free
    const SHIFT: f64 = 6_755_399_441_055_744.0; // 1.5 * 2^52
    for v in z.iter_mut() {
        let x = *v;
        let t = x * INV_LN2 + SHIFT;
        let k = t - SHIFT;
        let r = (x - k * LN2_HI) - k * LN2_LO;
        let mut p = C[13];
        for c in C[..13].iter().rev() {
            p = p.mul_add(r, *c);
        }
        let ik = (t.to_bits() as u32) as i32 as i64; // low mantissa bits hold k
        let scale = f64::from_bits(((ik + 1023) as u64) << 52);
        *v = p * scale;
    }
}

/// Coefficient sample a(x) = exp(Z_n(x; u)) with cached values at the
/// assembler's Gauss grid, lent out without a copy; `value` evaluates the
/// series directly (used by the flux at x = 1).
struct KleSample {
    kle: Arc<ExpCovKle>,
    u: Vec<f64>,
    a_quad: Vec<f64>,
}

impl Coefficient for KleSample {
    fn value(&self, x: f64) -> f64 {
        self.kle
            .diffusion_value(DiffusionKind::LogNormal, &self.u, x)
            .expect("dimension checked at construction")
    }

    fn gauss_values(&self, mesh: &Mesh1D) -> std::borrow::Cow<'_, [f64]> {
        if 3 * mesh.n_elements() == self.a_quad.len() {
            std::borrow::Cow::Borrowed(&self.a_quad)
        } else {
            let h = mesh.h();
            let mut out = Vec::with_capacity(3 * mesh.n_elements());
            for e in 0..mesh.n_elements() {
                for g in crate::fem1d::GAUSS_PTS {
                    out.push(self.value((e as f64 + g) * h));
                }
            }
            std::borrow::Cow::Owned(out)
        }
    }
}

/// Flow-rate limit state G(u) = q_max - q_h(1; u) for the log-normal
/// diffusion problem with y(0) = 1, y(1) = 0, f = 0, linear elements.
/// Zero source term with a pre-sized buffer to lend to the assembler.
struct ZeroSource(Vec<f64>);

impl Coefficient for ZeroSource {
    fn value(&self, _x: f64) -> f64 {
        0.0
    }

    fn gauss_values(&self, mesh: &Mesh1D) -> std::borrow::Cow<'_, [f64]> {
        if 3 * mesh.n_elements() == self.0.len() {
            std::borrow::Cow::Borrowed(&self.0)
        } else {
            std::borrow::Cow::Owned(vec![0.0; 3 * mesh.n_elements()])
        }
    }
}

pub struct DiffusionLsf {
    kle: Arc<ExpCovKle>,
    q_max: f64,
    mesh: Mesh1D,
    /// weighted KLE basis at the Gauss points, one contiguous column per mode
    basis_cols: Vec<Vec<f64>>,
    n_points: usize,
    zero_source: ZeroSource,
}

pub fn make_diffusion_lsf(kle: &ExpCovKle, q_max: f64, level: u32) -> DiffusionLsf {
    let mesh = Mesh1D::uniform(level);
    let pts = mesh.gauss_points();
    let n = kle.n_modes();
    let mut row = vec![0.0; n];
    let mut basis_cols = vec![vec![0.0; pts.len()]; n];
    for (p, &x) in pts.iter().enumerate() {
        kle.weighted_basis(x, &mut row);
        for (col, &v) in basis_cols.iter_mut().zip(&row) {
            col[p] = v;
        }
    }
    DiffusionLsf {
        kle: Arc::new(kle.clone()),
        q_max,
        mesh,
        basis_cols,
        n_points: pts.len(),
        zero_source: ZeroSource(vec![0.0; pts.len()]),
    }
}

impl DiffusionLsf {
    pub fn level(&self) -> u32 {
        self.mesh.level()
    }

    pub fn q_max(&self) -> f64 {
        self.q_max
    }

    /// Discrete flow rate q_h(1; u), one FE solve.
    pub fn flux_at_one(&self, u: &[f64]) -> Result<f64> {
        check_dim(self, u)?;
        let mut z = vec![self.kle.mean(); self.n_points];
        for (col, &um) in self.basis_cols.iter().zip(u) {
            for (zi, b) in z.iter_mut().zip(col) {
                *zi += b * um;
            }
        }
        exp_slice(&mut z);
        let sample = KleSample { kle: Arc::clone(&self.kle), u: u.to_vec(), a_quad: z };
        let sol = fem1d::solve(Box::new(sample), &self.zero_source, (1.0, 0.0), self.mesh, Degree::Linear)?;
        sol.flux(1.0)
    }
}

impl LimitState for DiffusionLsf {
    fn dim(&self) -> usize {
        self.basis_cols.len()
    }

    fn evaluate(&self, u: &[f64]) -> Result<f64> {
        Ok(self.q_max - self.flux_at_one(u)?)
    }

    fn discretization(&self) -> DiscretizationTag {
        DiscretizationTag::Approx { h: self.mesh.h(), s: 1.0, c_fe: None }
    }
}
