//! Galerkin finite elements on (0,1) for -(a(x) y')' = f with Dirichlet data,
//! linear and quadratic Lagrange elements, direct banded solve.
//!
//! Inhomogeneous boundary values enter through a lifting (the linear
//! interpolant of the boundary data is subtracted), so the assembled system
//! lives on the homogeneous interior space and the imposed values are exact
//! at the boundary nodes. Element integrals use 3-point Gauss quadrature.

use serde::Serialize;
use std::borrow::Cow;

use crate::error::{Error, Result};

/// 3-point Gauss rule on the reference element [0,1].
pub const GAUSS_PTS: [f64; 3] = [
    0.112_701_665_379_258_3, // 1/2 - sqrt(15)/10
    0.5,
    0.887_298_334_620_741_7,
];
pub const GAUSS_WTS: [f64; 3] = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];

/// Uniform mesh on [0,1] with h = 2^-level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mesh1D {
    level: u32,
}

impl Mesh1D {
    pub fn uniform(level: u32) -> Self {
        assert!(level <= 30, "mesh level {level} out of range");
        Mesh1D { level }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn h(&self) -> f64 {
        (0.5f64).powi(self.level as i32)
    }

    pub fn n_elements(&self) -> usize {
        1usize << self.level
    }

    /// All element Gauss points, element by element (3 per element).
    pub fn gauss_points(&self) -> Vec<f64> {
        let h = self.h();
        let ne = self.n_elements();
        let mut pts = Vec::with_capacity(3 * ne);
        for e in 0..ne {
            for g in GAUSS_PTS {
                pts.push((e as f64 + g) * h);
            }
        }
        pts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Degree {
    Linear,
    Quadratic,
}

impl Degree {
    pub fn order(&self) -> usize {
        match self {
            Degree::Linear => 1,
            Degree::Quadratic => 2,
        }
    }
}

/// Pointwise-evaluable coefficient field. `gauss_values` exists so a caller
/// holding precomputed values at the assembler's Gauss grid can lend them out
/// without any copy.
pub trait Coefficient: Send + Sync {
    fn value(&self, x: f64) -> f64;

    /// Values at the mesh's element Gauss points, element by element.
    fn gauss_values(&self, mesh: &Mesh1D) -> Cow<'_, [f64]> {
        let h = mesh.h();
        let mut out = Vec::with_capacity(3 * mesh.n_elements());
        for e in 0..mesh.n_elements() {
            for g in GAUSS_PTS {
                out.push(self.value((e as f64 + g) * h));
            }
        }
        Cow::Owned(out)
    }
}

impl<F: Fn(f64) -> f64 + Send + Sync> Coefficient for F {
    fn value(&self, x: f64) -> f64 {
        self(x)
    }
}

/// Symmetric tridiagonal LDL^T solve on flat storage; the bandwidth-1 case is
/// the linear-element hot path.
fn tridiag_ldlt_solve(diag: &mut [f64], off: &[f64], rhs: &mut [f64]) -> Result<()> {
    let n = diag.len();
    // factorize: diag ends up holding 1/D, l the subdiagonal of L
    let mut l = vec![0.0; n.saturating_sub(1)];
    let mut d_prev = 0.0;
    for j in 0..n {
        let mut d = diag[j];
        if j > 0 {
            d -= l[j - 1] * l[j - 1] * d_prev;
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::AssemblySingular { row: j, pivot: d });
        }
        let inv = 1.0 / d;
        diag[j] = inv;
        if j + 1 < n {
            l[j] = off[j] * inv;
        }
        d_prev = d;
    }
    for i in 1..n {
        rhs[i] -= l[i - 1] * rhs[i - 1];
    }
    for (r, inv) in rhs.iter_mut().zip(diag.iter()) {
        *r *= inv;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= l[i] * rhs[i + 1];
    }
    Ok(())
}

/// Symmetric banded LDL^T factorization and solve; `band[b][i] = A[i+b][i]`.
/// Fails on non-positive pivots, which is the SPD check.
fn ldlt_solve(band: &mut [Vec<f64>], rhs: &mut [f64]) -> Result<()> {
    let bw = band.len() - 1;
    let n = rhs.len();
    let mut inv_d = vec![0.0; n];
    for j in 0..n {
        let mut d = band[0][j];
        let k0 = j.saturating_sub(bw);
        for k in k0..j {
            let l = band[j - k][k];
            d -= l * l * band[0][k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::AssemblySingular { row: j, pivot: d });
        }
        band[0][j] = d;
        inv_d[j] = 1.0 / d;
        let imax = (j + bw).min(n - 1);
        for i in j + 1..=imax {
            let mut t = band[i - j][j];
            let k1 = i.saturating_sub(bw);
            for k in k1..j {
                t -= band[i - k][k] * band[j - k][k] * band[0][k];
            }
            band[i - j][j] = t * inv_d[j];
        }
    }
    // forward: L z = rhs
    for i in 0..n {
        let k0 = i.saturating_sub(bw);
        let mut t = rhs[i];
        for k in k0..i {
            t -= band[i - k][k] * rhs[k];
        }
        rhs[i] = t;
    }
    // diagonal: D w = z
    for i in 0..n {
        rhs[i] *= inv_d[i];
    }
    // backward: L^T x = w
    for i in (0..n).rev() {
        let kmax = (i + bw).min(n - 1);
        let mut t = rhs[i];
        for k in i + 1..=kmax {
            t -= band[k - i][i] * rhs[k];
        }
        rhs[i] = t;
    }
    Ok(())
}

/// Galerkin solution of -(a y')' = f with y(0), y(1) prescribed.
pub struct FemSolution {
    mesh: Mesh1D,
    degree: Degree,
    /// nodal values including the boundary nodes; P2 stores vertex and
    /// midpoint values interleaved (node k at x = k*h/2)
    values: Vec<f64>,
    coeff: Box<dyn Coefficient>,
}

pub fn solve(
    a: Box<dyn Coefficient>,
    f: &dyn Coefficient,
    bc: (f64, f64),
    mesh: Mesh1D,
    degree: Degree,
) -> Result<FemSolution> {
    let h = mesh.h();
    let ne = mesh.n_elements();
    let aq = a.gauss_values(&mesh);
    let aq = aq.as_ref();
    let amin = aq.iter().fold(f64::INFINITY, |m, v| m.min(*v));
    if !(amin > 0.0) || aq.iter().any(|v| !v.is_finite()) {
        let q = aq
            .iter()
            .position(|av| !(*av > 0.0) || !av.is_finite())
            .unwrap_or(0);
        let x = (GAUSS_PTS[q % 3] + (q / 3) as f64) * h;
        return Err(Error::Ellipticity { x, value: aq[q] });
    }
    let fq = f.gauss_values(&mesh);
    let fq = fq.as_ref();
    let delta = bc.1 - bc.0; // slope of the lifting
    let lift = |x: f64| bc.0 + delta * x;

    let values = match degree {
        Degree::Linear => {
            // element means; stiffness k_e = abar_e / h
            let mut abar = Vec::with_capacity(ne);
            for chunk in aq.chunks_exact(3) {
                abar.push(GAUSS_WTS[0] * chunk[0] + GAUSS_WTS[1] * chunk[1] + GAUSS_WTS[2] * chunk[2]);
            }
            let n = ne - 1; // interior vertices
            if n == 0 {
                // single element: solution is the lifting
                return Ok(FemSolution {
                    mesh,
                    degree,
                    values: vec![bc.0, bc.1],
                    coeff: a,
                });
            }
            // rolling per-element load moments: node i+1 sees shape xi on its
            // left element and 1 - xi on its right
            let moments = |e: usize| {
                let (mut ll, mut lr) = (0.0, 0.0);
                for (q, (&g, w)) in GAUSS_PTS.iter().zip(GAUSS_WTS).enumerate() {
                    let fv = fq[3 * e + q];
                    ll += w * fv * g;
                    lr += w * fv * (1.0 - g);
                }
                (ll, lr)
            };
            let mut diag = Vec::with_capacity(n);
            let mut off = Vec::with_capacity(n - 1);
            let mut rhs = Vec::with_capacity(n);
            let (mut prev_ll, _) = moments(0);
            for i in 0..n {
                diag.push((abar[i] + abar[i + 1]) / h);
                if i + 1 < n {
                    off.push(-abar[i + 1] / h);
                }
                let (ll, lr) = moments(i + 1);
                rhs.push(h * (prev_ll + lr) - delta * (abar[i] - abar[i + 1]));
                prev_ll = ll;
            }
            tridiag_ldlt_solve(&mut diag, &off, &mut rhs)?;
            let mut vals = Vec::with_capacity(ne + 1);
            vals.push(bc.0);
            for i in 0..n {
                vals.push(lift((i + 1) as f64 * h) + rhs[i]);
            }
            vals.push(bc.1);
            vals
        }
        Degree::Quadratic => {
            let nn = 2 * ne + 1; // vertices + midpoints
            let n = nn - 2; // interior dofs
            let mut band = vec![vec![0.0; n], vec![0.0; n], vec![0.0; n]];
            let mut rhs = vec![0.0; n];
            // reference shapes and derivatives at the Gauss points
            let shp = |g: f64| [(1.0 - g) * (1.0 - 2.0 * g), 4.0 * g * (1.0 - g), g * (2.0 * g - 1.0)];
            let dshp = |g: f64| [4.0 * g - 3.0, 4.0 - 8.0 * g, 4.0 * g - 1.0];
            for e in 0..ne {
                let dofs = [2 * e, 2 * e + 1, 2 * e + 2];
                let mut ke = [[0.0; 3]; 3];
                let mut fe = [0.0; 3];
                for (q, (&g, w)) in GAUSS_PTS.iter().zip(GAUSS_WTS).enumerate() {
                    let av = aq[3 * e + q];
                    let fv = fq[3 * e + q];
                    let nb = shp(g);
                    let db = dshp(g);
                    for i in 0..3 {
                        fe[i] += w * (h * fv * nb[i] - delta * av * db[i]);
                        for j in 0..3 {
                            ke[i][j] += w * av * db[i] * db[j] / h;
                        }
                    }
                }
                for i in 0..3 {
                    let gi = dofs[i];
                    if gi == 0 || gi == nn - 1 {
                        continue;
                    }
                    rhs[gi - 1] += fe[i];
                    for j in i..3 {
                        let gj = dofs[j];
                        if gj == 0 || gj == nn - 1 {
                            continue;
                        }
                        let (lo, hi) = (gi.min(gj), gi.max(gj));
                        band[hi - lo][lo - 1] += ke[i][j];
                    }
                }
            }
            ldlt_solve(&mut band, &mut rhs)?;
            let mut vals = Vec::with_capacity(nn);
            vals.push(bc.0);
            for k in 1..nn - 1 {
                vals.push(lift(k as f64 * 0.5 * h) + rhs[k - 1]);
            }
            vals.push(bc.1);
            vals
        }
    };

    Ok(FemSolution { mesh, degree, values, coeff: a })
}

impl FemSolution {
    pub fn mesh(&self) -> Mesh1D {
        self.mesh
    }

    pub fn degree(&self) -> Degree {
        self.degree
    }

    /// Nodal values including the boundary nodes (P2: vertex/midpoint interleaved).
    pub fn nodal_values(&self) -> &[f64] {
        &self.values
    }

    fn locate(&self, x: f64) -> Result<(usize, f64)> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Domain(format!("evaluation point {x} outside [0,1]")));
        }
        let h = self.mesh.h();
        let e = ((x / h) as usize).min(self.mesh.n_elements() - 1);
        Ok((e, x / h - e as f64))
    }

    /// FE interpolant value at x.
    pub fn point_value(&self, x: f64) -> Result<f64> {
        let (e, g) = self.locate(x)?;
        Ok(match self.degree {
            Degree::Linear => (1.0 - g) * self.values[e] + g * self.values[e + 1],
            Degree::Quadratic => {
                let v = &self.values[2 * e..2 * e + 3];
                (1.0 - g) * (1.0 - 2.0 * g) * v[0] + 4.0 * g * (1.0 - g) * v[1] + g * (2.0 * g - 1.0) * v[2]
            }
        })
    }

    /// Derivative of the FE interpolant at x, taken in the element containing
    /// x (one-sided at the endpoints).
    pub fn derivative(&self, x: f64) -> Result<f64> {
        let (e, g) = self.locate(x)?;
        let h = self.mesh.h();
        Ok(match self.degree {
            Degree::Linear => (self.values[e + 1] - self.values[e]) / h,
            Degree::Quadratic => {
                let v = &self.values[2 * e..2 * e + 3];
                ((4.0 * g - 3.0) * v[0] + (4.0 - 8.0 * g) * v[1] + (4.0 * g - 1.0) * v[2]) / h
            }
        })
    }

    /// Flow rate q(x) = -a(x) y_h'(x).
    pub fn flux(&self, x: f64) -> Result<f64> {
        Ok(-self.coeff.value(x) * self.derivative(x)?)
    }
}
