//! Failure-probability estimators: dimension-reduced quadrature for the two
//! analytic families, crude Monte Carlo, and Sequential Importance Sampling.
//!
//! SIS bridges the standard-normal prior and the failure-conditioned density
//! through smoothed indicators Phi(-G/sigma_k). Each tempering step picks
//! sigma_k by bisection so the incremental-weight coefficient of variation
//! hits the target, resamples a fraction of the population multinomially as
//! chain seeds, and moves every chain with adaptive conditional sampling (no
//! burn-in). Chain RNG streams derive deterministically from
//! (seed, stage, chain), so parallel and serial runs produce bit-identical
//! estimates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::limit_state::{Bvp2dLsf, LimitState};
use crate::normal::{ln_std_normal_cdf, std_normal_cdf, std_normal_pdf};
use crate::ode::{self, OdeScheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateMethod {
    Quadrature,
    MonteCarlo,
    Sis,
}

#[derive(Debug, Clone)]
pub struct ProbabilityEstimate {
    pub value: f64,
    /// coefficient of variation; 0 for quadrature, infinity when no failures
    /// were observed, an i.i.d. approximation for a single SIS run
    pub cov: f64,
    pub samples_used: u64,
    pub method: EstimateMethod,
    pub seed: u64,
}

/// Default absolute tolerance of [`quadrature_pf`].
pub const QUADRATURE_ABS_TOL: f64 = 1e-10;

/// Families admitting a reduced-dimension representation of P_f.
pub enum QuadTarget {
    /// 1-D threshold: P_f = Phi(t), t the (possibly discrete) MLFP
    Ode { scheme: Option<OdeScheme>, y_max: f64 },
    /// 2-D with explicit surface u2(u1): P_f = int Phi(u2(u1)) phi(u1) du1
    Bvp2d(Bvp2dLsf),
}

fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
    (fa + 4.0 * fm + fb) * h / 6.0
}

fn adaptive_simpson(
    f: &dyn Fn(f64) -> Result<f64>,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm)?;
    let frm = f(rm)?;
    let left = simpson(fa, flm, fm, m - a);
    let right = simpson(fm, frm, fb, b - m);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    let half = 0.5 * tol;
    Ok(adaptive_simpson(f, a, m, fa, flm, fm, left, half, depth - 1)?
        + adaptive_simpson(f, m, b, fm, frm, fb, right, half, depth - 1)?)
}

fn integrate_adaptive(f: &dyn Fn(f64) -> Result<f64>, a: f64, b: f64, tol: f64) -> Result<f64> {
    // seed the recursion on a coarse panelization so narrow integrand bumps
    // cannot hide from the first Simpson estimate
    let panels = 64;
    let mut acc = 0.0;
    let w = (b - a) / panels as f64;
    for i in 0..panels {
        let pa = a + i as f64 * w;
        let pb = pa + w;
        let pm = 0.5 * (pa + pb);
        let (fa, fm, fb) = (f(pa)?, f(pm)?, f(pb)?);
        let whole = simpson(fa, fm, fb, w);
        acc += adaptive_simpson(f, pa, pb, fa, fm, fb, whole, tol / panels as f64, 48)?;
    }
    Ok(acc)
}

/// Deterministic P_f for the reducible families, to absolute tolerance `tol`.
pub fn quadrature_pf_with_tol(target: &QuadTarget, tol: f64) -> Result<ProbabilityEstimate> {
    let value = match target {
        QuadTarget::Ode { scheme, y_max } => {
            if !(*y_max > 1.0) {
                return Err(Error::Domain(format!("quadrature_pf: y_max = {y_max} must be > 1")));
            }
            let threshold = match scheme {
                None => -y_max.ln(),
                Some(s) => ode::mlfp_closed_form(*s, *y_max)?,
            };
            std_normal_cdf(threshold)?
        }
        QuadTarget::Bvp2d(lsf) => {
            let f = |u1: f64| -> Result<f64> {
                let t = lsf.failure_threshold_u2(u1)?;
                Ok(std_normal_pdf(u1) * std_normal_cdf(t)?)
            };
            integrate_adaptive(&f, -12.0, 12.0, tol)?
        }
    };
    Ok(ProbabilityEstimate {
        value,
        cov: 0.0,
        samples_used: 0,
        method: EstimateMethod::Quadrature,
        seed: 0,
    })
}

/// Deterministic P_f at the spec tolerance [`QUADRATURE_ABS_TOL`].
pub fn quadrature_pf(target: &QuadTarget) -> Result<ProbabilityEstimate> {
    quadrature_pf_with_tol(target, QUADRATURE_ABS_TOL)
}

/// Crude Monte Carlo estimate of P[G(U) <= 0] from `n` standard-normal draws.
pub fn monte_carlo(lsf: &dyn LimitState, n: usize, seed: u64) -> Result<ProbabilityEstimate> {
    if n == 0 {
        return Err(Error::Domain("monte_carlo: n must be >= 1".into()));
    }
    let dim = lsf.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0u64;
    let mut u = vec![0.0f64; dim];
    for _ in 0..n {
        for v in u.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        if lsf.evaluate(&u)? <= 0.0 {
            failures += 1;
        }
    }
    let p = failures as f64 / n as f64;
    let cov = if failures > 0 { ((1.0 - p) / (n as f64 * p)).sqrt() } else { f64::INFINITY };
    Ok(ProbabilityEstimate {
        value: p,
        cov,
        samples_used: n as u64,
        method: EstimateMethod::MonteCarlo,
        seed,
    })
}

/// Tuning knobs of [`sis`]; the defaults mirror the reference protocol
/// (10^4 samples, weight-cov target 0.25, 10% seed fraction).
#[derive(Debug, Clone, Copy)]
pub struct SisConfig {
    pub n_samples: usize,
    pub target_cov: f64,
    pub seed_fraction: f64,
}

impl Default for SisConfig {
    fn default() -> Self {
        SisConfig { n_samples: 10_000, target_cov: 0.25, seed_fraction: 0.1 }
    }
}

const SIS_MAX_STAGES: usize = 400;
const SIS_STAGNATION_LIMIT: usize = 50;
const ACS_TARGET_ACCEPTANCE: f64 = 0.44;

struct ChainState {
    rng: ChaCha8Rng,
    u: Vec<f64>,
    g: f64,
    /// ln Phi(-g/sigma_k) at the current tempering level
    ln_phi: f64,
    remaining: usize,
}

fn population_cov(w: &[f64]) -> f64 {
    let n = w.len() as f64;
    let mean = w.iter().sum::<f64>() / n;
    if mean <= 0.0 {
        return f64::INFINITY;
    }
    let var = w.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    var.sqrt() / mean
}

/// cov of the incremental weights Phi(-g/sigma)/Phi(-g/sigma_prev), computed
/// on max-shifted log weights so deep-tail levels cannot underflow the spread
/// (the cov is invariant under constant scaling).
fn weight_cov(g: &[f64], ln_phi_prev: &[f64], sigma: f64) -> f64 {
    let ln_w: Vec<f64> = g
        .iter()
        .zip(ln_phi_prev)
        .map(|(gi, lp)| ln_std_normal_cdf(-gi / sigma) - lp)
        .collect();
    let shift = ln_w.iter().fold(f64::NEG_INFINITY, |m, x| m.max(*x));
    if !shift.is_finite() {
        return f64::INFINITY;
    }
    let w: Vec<f64> = ln_w.iter().map(|l| (l - shift).exp()).collect();
    population_cov(&w)
}

/// Sequential importance sampling estimate of P[G(U) <= 0].
pub fn sis(lsf: &dyn LimitState, cfg: &SisConfig, seed: u64) -> Result<ProbabilityEstimate> {
    let n = cfg.n_samples;
    if n < 100 {
        return Err(Error::Domain(format!("sis: need at least 100 samples, got {n}")));
    }
    if !(cfg.target_cov > 0.0) {
        return Err(Error::Domain(format!("sis: target_cov = {} must be > 0", cfg.target_cov)));
    }
    if !(cfg.seed_fraction > 0.0 && cfg.seed_fraction <= 1.0) {
        return Err(Error::Domain(format!(
            "sis: seed_fraction = {} outside (0, 1]",
            cfg.seed_fraction
        )));
    }
    let dim = lsf.dim();
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    master.set_stream(u64::MAX);

    // initial population from the prior
    let mut samples: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..dim).map(|_| StandardNormal.sample(&mut master)).collect())
        .collect();
    let mut g: Vec<f64> = samples
        .par_iter()
        .map(|u| lsf.evaluate(u))
        .collect::<Result<Vec<_>>>()?;
    let mut evals = n as u64;

    // ln Phi(-g/sigma_prev); all zero while no smoothing is applied yet
    let mut ln_phi_prev = vec![0.0f64; n];
    let mut sigma_prev: Option<f64> = None;
    let mut ln_prod = 0.0f64;
    let mut cov_sq_sum = 0.0f64;
    let mut lambda = 0.6f64;
    let mut stagnation = 0usize;

    for stage in 1..=SIS_MAX_STAGES {
        // stopping test on the final importance weights I(G<=0)/Phi(-G/sigma)
        let w_fin: Vec<f64> = g
            .iter()
            .zip(&ln_phi_prev)
            .map(|(gi, lp)| if *gi <= 0.0 { (-lp).exp() } else { 0.0 })
            .collect();
        let mean_fin = w_fin.iter().sum::<f64>() / n as f64;
        if mean_fin > 0.0 {
            let cov_fin = population_cov(&w_fin);
            if cov_fin <= cfg.target_cov {
                let value = ln_prod.exp() * mean_fin;
                let cov = ((cov_sq_sum + cov_fin * cov_fin) / n as f64).sqrt();
                return Ok(ProbabilityEstimate {
                    value,
                    cov,
                    samples_used: evals,
                    method: EstimateMethod::Sis,
                    seed,
                });
            }
        }

        // next smoothing parameter by bisection on the weight cov
        let scale = g.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-12);
        let mut hi = sigma_prev.unwrap_or(10.0 * scale);
        if sigma_prev.is_none() {
            let mut guard = 0;
            while weight_cov(&g, &ln_phi_prev, hi) >= cfg.target_cov && guard < 60 {
                hi *= 10.0;
                guard += 1;
            }
        }
        let lo = 1e-12 * scale;
        let sigma_k = if weight_cov(&g, &ln_phi_prev, lo) < cfg.target_cov {
            lo
        } else {
            let (mut llo, mut lhi) = (lo.ln(), hi.ln());
            for _ in 0..80 {
                let mid = 0.5 * (llo + lhi);
                if weight_cov(&g, &ln_phi_prev, mid.exp()) >= cfg.target_cov {
                    llo = mid;
                } else {
                    lhi = mid;
                }
            }
            (0.5 * (llo + lhi)).exp()
        };

        if let Some(sp) = sigma_prev {
            if sigma_k > 0.999_999 * sp {
                stagnation += 1;
                if stagnation >= SIS_STAGNATION_LIMIT {
                    return Err(Error::NonConvergence(format!(
                        "SIS tempering stagnated at sigma = {sigma_k} after {stage} stages"
                    )));
                }
            } else {
                stagnation = 0;
            }
        }

        // stage weights and normalizing-constant factor
        let ln_phi_k: Vec<f64> = g.iter().map(|gi| ln_std_normal_cdf(-gi / sigma_k)).collect();
        let w: Vec<f64> = ln_phi_k
            .iter()
            .zip(&ln_phi_prev)
            .map(|(lk, lp)| (lk - lp).exp())
            .collect();
        let s_k = w.iter().sum::<f64>() / n as f64;
        if !(s_k > 0.0) || !s_k.is_finite() {
            return Err(Error::NonConvergence(format!(
                "SIS stage {stage}: degenerate weight mean {s_k}"
            )));
        }
        ln_prod += s_k.ln();
        let cov_k = population_cov(&w);
        cov_sq_sum += cov_k * cov_k;
        if std::env::var_os("PFBOUND_SIS_DEBUG").is_some() {
            let nfail = g.iter().filter(|x| **x <= 0.0).count();
            eprintln!("stage {stage}: sigma={sigma_k:.4e} S_k={s_k:.5} lambda={lambda:.3} nfail={nfail} ln_prod={ln_prod:.4}");
        }

        // weighted per-coordinate spread for the aCS proposal
        let wsum = s_k * n as f64;
        let mut mean_j = vec![0.0f64; dim];
        let mut m2_j = vec![0.0f64; dim];
        for (u, wi) in samples.iter().zip(&w) {
            for j in 0..dim {
                mean_j[j] += wi * u[j];
                m2_j[j] += wi * u[j] * u[j];
            }
        }
        let center: Vec<f64> = mean_j.iter().map(|m| m / wsum).collect();
        let spread: Vec<f64> = (0..dim)
            .map(|j| ((m2_j[j] / wsum - center[j] * center[j]).max(1e-24)).sqrt())
            .collect();

        // multinomial resampling of the chain seeds
        let n_seeds = ((cfg.seed_fraction * n as f64).ceil() as usize).clamp(1, n);
        let mut cum = Vec::with_capacity(n);
        let mut acc = 0.0;
        for wi in &w {
            acc += wi;
            cum.push(acc);
        }
        let base_len = n / n_seeds;
        let remainder = n % n_seeds;
        let mut chains: Vec<ChainState> = (0..n_seeds)
            .map(|c| {
                let r: f64 = master.random::<f64>() * acc;
                let idx = cum.partition_point(|x| *x < r).min(n - 1);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(((stage as u64) << 32) | c as u64);
                ChainState {
                    rng,
                    u: samples[idx].clone(),
                    g: g[idx],
                    ln_phi: ln_phi_k[idx],
                    remaining: base_len + usize::from(c < remainder),
                }
            })
            .collect();

        // lockstep aCS moves; lambda adapts between steps from the pooled
        // acceptance rate, so thread count cannot change the arithmetic
        let mut adapt_count = 1u64;
        let mut out_u: Vec<Vec<f64>> = Vec::with_capacity(n);
        let mut out_g: Vec<f64> = Vec::with_capacity(n);
        let mut out_lp: Vec<f64> = Vec::with_capacity(n);
        let max_len = base_len + usize::from(remainder > 0);
        for _step in 0..max_len {
            let sigma_prop: Vec<f64> =
                spread.iter().map(|s| (lambda * s).min(1.0)).collect();
            let rho: Vec<f64> =
                sigma_prop.iter().map(|s| (1.0 - s * s).max(0.0).sqrt()).collect();
            let moves: Vec<Option<(bool, Vec<f64>, f64, f64)>> = chains
                .par_iter_mut()
                .map(|chain| -> Result<Option<(bool, Vec<f64>, f64, f64)>> {
                    if chain.remaining == 0 {
                        return Ok(None);
                    }
                    chain.remaining -= 1;
                    // conditional proposal centered at the adaptive stage mean;
                    // the prior and proposal terms no longer cancel, so the
                    // Metropolis ratio carries them explicitly
                    let mut v = Vec::with_capacity(dim);
                    let mut ln_ratio = 0.0;
                    for j in 0..dim {
                        let xi: f64 = StandardNormal.sample(&mut chain.rng);
                        let uj = chain.u[j];
                        let vj = center[j] + rho[j] * (uj - center[j]) + sigma_prop[j] * xi;
                        // prior: -(v^2 - u^2)/2
                        ln_ratio += 0.5 * (uj * uj - vj * vj);
                        // proposal reverse/forward, N(center + rho (x - center), sigma_prop^2)
                        let fwd = vj - center[j] - rho[j] * (uj - center[j]);
                        let rev = uj - center[j] - rho[j] * (vj - center[j]);
                        ln_ratio += (fwd * fwd - rev * rev) / (2.0 * sigma_prop[j] * sigma_prop[j]);
                        v.push(vj);
                    }
                    let gv = lsf.evaluate(&v)?;
                    let lpv = ln_std_normal_cdf(-gv / sigma_k);
                    let accept = {
                        let r: f64 = chain.rng.random();
                        r.ln() < lpv - chain.ln_phi + ln_ratio
                    };
                    if accept {
                        chain.u = v;
                        chain.g = gv;
                        chain.ln_phi = lpv;
                    }
                    Ok(Some((accept, chain.u.clone(), chain.g, chain.ln_phi)))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut active = 0u64;
            let mut accepted = 0u64;
            let dbg_step = std::env::var_os("PFBOUND_SIS_DEBUG").is_some();
            for mv in moves.into_iter().flatten() {
                active += 1;
                accepted += mv.0 as u64;
                out_u.push(mv.1);
                out_g.push(mv.2);
                out_lp.push(mv.3);
            }
            evals += active;
            if active > 0 {
                let rate = accepted as f64 / active as f64;
                if dbg_step {
                    eprint!(" a{rate:.2}");
                }
                lambda = (lambda
                    * ((rate - ACS_TARGET_ACCEPTANCE) / (adapt_count as f64).sqrt()).exp())
                .clamp(0.05, 3.0);
                adapt_count += 1;
            }
        }

        if std::env::var_os("PFBOUND_SIS_DEBUG").is_some() {
            eprintln!();
        }
        samples = out_u;
        g = out_g;
        ln_phi_prev = out_lp;
        sigma_prev = Some(sigma_k);
    }
    Err(Error::NonConvergence(format!(
        "SIS did not reach the stopping criterion within {SIS_MAX_STAGES} stages"
    )))
}

/// SIS with the default configuration.
pub fn sis_default(lsf: &dyn LimitState, seed: u64) -> Result<ProbabilityEstimate> {
    sis(lsf, &SisConfig::default(), seed)
}
