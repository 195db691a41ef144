//! Model registry: the structural data `(q, chi)` defining a cross-diffusion
//! model, catalog builders for the standard families, hypothesis validation
//! on sampled points, and the derived model constants.
//!
//! A model is the pair of a vacancy mobility `q : [0,1] -> R` with
//! `q(0) = 0`, `q > 0` and `q'(s) >= gamma q(s)` on `(0,1)`, and a convex
//! potential `chi` on the closed simplex whose gradient exponentials are the
//! occupancy factors `p_i(u) = exp(d chi / d u_i)`. Everything downstream
//! (entropy density, diffusion matrix, transition rates) is built from these
//! two ingredients.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::SquareMat;
use crate::quad;
use crate::sampling::{boundary_offset_samples, interval_samples, SimplexSampler};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type GradFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
pub type HessFn = Arc<dyn Fn(&[f64], &mut SquareMat) + Send + Sync>;

/// PSD tolerance for sampled Hessian eigenvalue checks.
pub const TOL_PSD: f64 = 1e-10;
/// Slack for the sampled growth inequality q' >= gamma q.
pub const TOL_GROWTH: f64 = 1e-12;
/// Default sample count for validation and constants.
pub const DEFAULT_SAMPLES: usize = 10_000;
/// Default seed for sampled certification.
pub const DEFAULT_SEED: u64 = 0x5eed_cafe;
/// Offset of the deterministic near-boundary probes.
pub const BOUNDARY_OFFSET: f64 = 1e-6;
/// Step for central finite differences of user-supplied scalar functions.
pub const FD_STEP: f64 = 1e-6;

fn central_diff(f: &ScalarFn, s: f64, h: f64) -> f64 {
    // keep the stencil inside [0,1]
    let c = s.clamp(h, 1.0 - h);
    ((f)(c + h) - (f)(c - h)) / (2.0 * h)
}

/// The vacancy mobility `q` with its derivatives and the constants read off
/// the hypothesis inequalities.
#[derive(Clone)]
pub struct QSpec {
    pub name: String,
    q: ScalarFn,
    dq: ScalarFn,
    d2q: ScalarFn,
    /// Analytic `log q` when the plain evaluation would underflow; falls back
    /// to `q(s).ln()`.
    log_q: Option<ScalarFn>,
    /// Analytic `q'/q`; falls back to the quotient. Needed where both q and
    /// q' underflow together (the vanishing family near full packing).
    dlog_q: Option<ScalarFn>,
    /// Antiderivative of `log q` (any fixed constant); quadrature otherwise.
    log_q_antiderivative: Option<ScalarFn>,
    /// Growth constant of `q' >= gamma q`.
    pub gamma: f64,
    /// min over [0,1] of q.
    pub q0: f64,
    /// min over [0,1] of q'.
    pub q1: f64,
    /// Whether q is expected to vanish at 0 (the volume-filling case).
    pub degenerate: bool,
    /// Whether the integral of |log q| diverges at 0, which is the
    /// positivity criterion for the vacancy fraction.
    pub log_q_divergent_at_zero: bool,
}

impl fmt::Debug for QSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("QSpec")
            .field("name", &self.name)
            .field("gamma", &self.gamma)
            .field("q0", &self.q0)
            .field("q1", &self.q1)
            .field("degenerate", &self.degenerate)
            .finish()
    }
}

impl QSpec {
    /// Build from a plain function; derivatives are central differences with
    /// step `FD_STEP` and the growth constant is certified by sampling.
    pub fn from_fn(name: impl Into<String>, q: ScalarFn, gamma: f64) -> Self {
        let dq = {
            let q = q.clone();
            Arc::new(move |s: f64| central_diff(&q, s, FD_STEP)) as ScalarFn
        };
        let d2q = {
            let dq = dq.clone();
            Arc::new(move |s: f64| central_diff(&dq, s, FD_STEP)) as ScalarFn
        };
        let q0 = sampled_min(&q);
        let q1 = sampled_min(&dq);
        let degenerate = (q)(0.0).abs() <= 1e-12;
        Self {
            name: name.into(),
            q,
            dq,
            d2q,
            log_q: None,
            dlog_q: None,
            log_q_antiderivative: None,
            gamma,
            q0,
            q1,
            degenerate,
            log_q_divergent_at_zero: false,
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        name: impl Into<String>,
        q: ScalarFn,
        dq: ScalarFn,
        d2q: ScalarFn,
        log_q: Option<ScalarFn>,
        dlog_q: Option<ScalarFn>,
        log_q_antiderivative: Option<ScalarFn>,
        gamma: f64,
        degenerate: bool,
        log_q_divergent_at_zero: bool,
    ) -> Self {
        let q0 = sampled_min(&q);
        let q1 = sampled_min(&dq);
        Self {
            name: name.into(),
            q,
            dq,
            d2q,
            log_q,
            dlog_q,
            log_q_antiderivative,
            gamma,
            q0,
            q1,
            degenerate,
            log_q_divergent_at_zero,
        }
    }

    pub fn q(&self, s: f64) -> f64 {
        (self.q)(s)
    }

    pub fn dq(&self, s: f64) -> f64 {
        (self.dq)(s)
    }

    pub fn d2q(&self, s: f64) -> f64 {
        (self.d2q)(s)
    }

    pub fn log_q(&self, s: f64) -> f64 {
        match &self.log_q {
            Some(f) => (f)(s),
            None => self.q(s).ln(),
        }
    }

    /// Logarithmic derivative q'/q.
    pub fn dlog_q(&self, s: f64) -> f64 {
        match &self.dlog_q {
            Some(f) => (f)(s),
            None => self.dq(s) / self.q(s),
        }
    }

    /// Integral of `log q` from `a` to `b`, both in [0,1]. Returns +inf when
    /// the lower corner of the volume constraint is hit and the integral
    /// diverges there.
    pub fn int_log_q(&self, a: f64, b: f64) -> f64 {
        if (a == 0.0 || b == 0.0) && self.log_q_divergent_at_zero {
            return f64::INFINITY;
        }
        match &self.log_q_antiderivative {
            Some(f) => (f)(b) - (f)(a),
            None => quad::integrate(|s| self.log_q(s.max(1e-300)), a, b, 1e-12),
        }
    }

    /// Anchor `a` of the entropy integral: 1 when `q(1) <= 1`, otherwise the
    /// solution of `q(a) = 1` by bisection (q is nondecreasing).
    pub fn entropy_anchor(&self) -> f64 {
        if self.q(1.0) <= 1.0 {
            return 1.0;
        }
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.q(mid) < 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

fn sampled_min(f: &ScalarFn) -> f64 {
    let mut m = f64::INFINITY;
    const GRID: usize = 4096;
    for k in 0..=GRID {
        let s = k as f64 / GRID as f64;
        let v = (f)(s);
        if v.is_finite() {
            m = m.min(v);
        }
    }
    m
}

/// `q(s) = s^alpha`, `alpha >= 1`; the growth constant is `alpha` itself.
pub fn build_power_q(alpha: f64) -> Result<QSpec> {
    if !(alpha >= 1.0) {
        return Err(Error::Hypothesis(format!(
            "power mobility needs alpha >= 1 (got {alpha}); q'/q = alpha/s is \
             otherwise unbounded below no positive growth constant near 0"
        )));
    }
    let q: ScalarFn = Arc::new(move |s: f64| s.max(0.0).powf(alpha));
    let dq: ScalarFn = Arc::new(move |s: f64| alpha * s.max(0.0).powf(alpha - 1.0));
    let d2q: ScalarFn =
        Arc::new(move |s: f64| alpha * (alpha - 1.0) * s.max(0.0).powf(alpha - 2.0));
    let log_q: ScalarFn = Arc::new(move |s: f64| alpha * s.ln());
    let dlog_q: ScalarFn = Arc::new(move |s: f64| alpha / s);
    // antiderivative of alpha ln s, continuous extension 0 at s = 0
    let anti: ScalarFn = Arc::new(move |s: f64| {
        if s <= 0.0 {
            0.0
        } else {
            alpha * (s * s.ln() - s)
        }
    });
    Ok(QSpec::from_parts(
        format!("power-q:{alpha}"),
        q,
        dq,
        d2q,
        Some(log_q),
        Some(dlog_q),
        Some(anti),
        alpha,
        true,
        false,
    ))
}

/// `q(s) = exp(s^alpha) - 1` with `0 < alpha <= 1`; the growth constant is
/// the sampled minimum of the exponent derivative.
pub fn build_exp_q(alpha: f64) -> Result<QSpec> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Hypothesis(format!(
            "exponential mobility needs alpha in (0, 1] (got {alpha})"
        )));
    }
    let q: ScalarFn = Arc::new(move |s: f64| s.max(0.0).powf(alpha).exp_m1());
    let dq: ScalarFn = Arc::new(move |s: f64| {
        if s <= 0.0 {
            if alpha == 1.0 {
                1.0
            } else {
                f64::INFINITY
            }
        } else {
            alpha * s.powf(alpha - 1.0) * s.powf(alpha).exp()
        }
    });
    let d2q: ScalarFn = Arc::new(move |s: f64| {
        if s <= 0.0 {
            return if alpha == 1.0 { 1.0 } else { f64::INFINITY };
        }
        let e = s.powf(alpha).exp();
        let g = alpha * s.powf(alpha - 1.0);
        e * (g * g + alpha * (alpha - 1.0) * s.powf(alpha - 2.0))
    });
    // gamma from sampling the exponent derivative f'(s) = alpha s^(alpha-1)
    let mut gamma = f64::INFINITY;
    for k in 1..=4096 {
        let s = k as f64 / 4096.0;
        gamma = gamma.min(alpha * s.powf(alpha - 1.0));
    }
    Ok(QSpec::from_parts(
        format!("exp-q:{alpha}"),
        q,
        dq,
        d2q,
        None,
        None,
        None,
        gamma,
        true,
        false,
    ))
}

/// `q(s) = exp(-s^-alpha)`, the family whose entropy blows up at full
/// packing; `int_0 |log q|` diverges exactly when `alpha >= 1`.
pub fn build_vanishing_q(alpha: f64) -> Result<QSpec> {
    if !(alpha > 0.0) {
        return Err(Error::Hypothesis(format!(
            "vanishing mobility needs alpha > 0 (got {alpha})"
        )));
    }
    let q: ScalarFn = Arc::new(move |s: f64| {
        if s <= 0.0 {
            0.0
        } else {
            (-s.powf(-alpha)).exp()
        }
    });
    let dq: ScalarFn = Arc::new(move |s: f64| {
        if s <= 0.0 {
            0.0
        } else {
            alpha * s.powf(-alpha - 1.0) * (-s.powf(-alpha)).exp()
        }
    });
    let d2q: ScalarFn = Arc::new(move |s: f64| {
        if s <= 0.0 {
            0.0
        } else {
            let e = (-s.powf(-alpha)).exp();
            e * alpha * s.powf(-alpha - 2.0) * (alpha * s.powf(-alpha) - (alpha + 1.0))
        }
    });
    let log_q: ScalarFn = Arc::new(move |s: f64| {
        if s <= 0.0 {
            f64::NEG_INFINITY
        } else {
            -s.powf(-alpha)
        }
    });
    let dlog_q: ScalarFn = Arc::new(move |s: f64| alpha * s.powf(-alpha - 1.0));
    // antiderivative of -s^-alpha
    let anti: ScalarFn = Arc::new(move |s: f64| {
        if (alpha - 1.0).abs() < 1e-14 {
            -s.max(1e-300).ln()
        } else {
            -s.max(0.0).powf(1.0 - alpha) / (1.0 - alpha)
        }
    });
    // gamma from sampling q'/q = alpha s^-(alpha+1)
    let mut gamma = f64::INFINITY;
    for k in 1..=4096 {
        let s = k as f64 / 4096.0;
        gamma = gamma.min(alpha * s.powf(-alpha - 1.0));
    }
    Ok(QSpec::from_parts(
        format!("vanishing-q:{alpha}"),
        q,
        dq,
        d2q,
        Some(log_q),
        Some(dlog_q),
        Some(anti),
        gamma,
        true,
        alpha >= 1.0,
    ))
}

/// The convex potential `chi` with gradient and Hessian; the occupancy
/// factors are `p_i = exp(grad_i chi)`.
#[derive(Clone)]
pub struct ChiSpec {
    pub name: String,
    chi: VectorFn,
    grad: GradFn,
    hess: HessFn,
    /// Identically zero (`p_i = 1`); enables the structural inversion guess.
    pub is_zero: bool,
}

impl fmt::Debug for ChiSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChiSpec")
            .field("name", &self.name)
            .field("is_zero", &self.is_zero)
            .finish()
    }
}

impl ChiSpec {
    pub fn new(name: impl Into<String>, chi: VectorFn, grad: GradFn, hess: HessFn) -> Self {
        Self { name: name.into(), chi, grad, hess, is_zero: false }
    }

    /// chi = 0, p_i = 1.
    pub fn zero() -> Self {
        Self {
            name: "unit".into(),
            chi: Arc::new(|_| 0.0),
            grad: Arc::new(|u, g| g[..u.len()].iter_mut().for_each(|x| *x = 0.0)),
            hess: Arc::new(|u, h| {
                let n = u.len();
                for i in 0..n {
                    for j in 0..n {
                        h.set(i, j, 0.0);
                    }
                }
            }),
            is_zero: true,
        }
    }

    pub fn chi(&self, u: &[f64]) -> f64 {
        (self.chi)(u)
    }

    pub fn grad_into(&self, u: &[f64], out: &mut [f64]) {
        (self.grad)(u, out)
    }

    pub fn grad(&self, u: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; u.len()];
        self.grad_into(u, &mut g);
        g
    }

    pub fn hessian_into(&self, u: &[f64], out: &mut SquareMat) {
        (self.hess)(u, out)
    }

    pub fn hessian(&self, u: &[f64]) -> SquareMat {
        let mut h = SquareMat::zeros(u.len());
        self.hessian_into(u, &mut h);
        h
    }

    /// Occupancy factors `p_i(u) = exp(grad_i chi)`.
    pub fn p_into(&self, u: &[f64], out: &mut [f64]) {
        self.grad_into(u, out);
        out.iter_mut().for_each(|x| *x = x.exp());
    }

    pub fn p(&self, u: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; u.len()];
        self.p_into(u, &mut p);
        p
    }
}

/// One per-species occupancy factor `p~_i` on [0,1]; the derivative falls
/// back to central differences when not supplied.
pub struct PTilde {
    pub f: ScalarFn,
    pub df: Option<ScalarFn>,
}

impl PTilde {
    pub fn new(f: ScalarFn) -> Self {
        Self { f, df: None }
    }

    pub fn with_derivative(f: ScalarFn, df: ScalarFn) -> Self {
        Self { f, df: Some(df) }
    }

    fn eval(&self, s: f64) -> f64 {
        (self.f)(s)
    }

    fn deriv(&self, s: f64) -> f64 {
        match &self.df {
            Some(d) => (d)(s),
            None => central_diff(&self.f, s, FD_STEP),
        }
    }
}

/// Separable potential for `p_i(u) = p~_i(u_i)` with each `p~_i` strictly
/// positive and nondecreasing: `chi_i(s) = int_0^s log p~_i + k_i` with the
/// smallest `k_i >= 0` keeping `chi_i >= 0` on [0,1].
pub fn build_chi_per_species(ptilde: Vec<PTilde>) -> Result<ChiSpec> {
    let n = ptilde.len();
    if n == 0 {
        return Err(Error::Hypothesis("need at least one species factor".into()));
    }
    const GRID: usize = 512;
    for (i, p) in ptilde.iter().enumerate() {
        for k in 0..=GRID {
            let s = k as f64 / GRID as f64;
            let v = p.eval(s);
            if !(v > 0.0) {
                return Err(Error::Hypothesis(format!(
                    "p~_{i} must be strictly positive on [0,1]; p~_{i}({s}) = {v}"
                )));
            }
        }
    }
    let ptilde = Arc::new(ptilde);
    // per-species shift: chi_i is convex in s, so its minimum over the dense
    // grid pins k_i up to grid resolution
    let shifts: Vec<f64> = ptilde
        .iter()
        .map(|p| {
            let mut acc = 0.0_f64;
            let mut min = 0.0_f64;
            let h = 1.0 / GRID as f64;
            for k in 0..GRID {
                let a = k as f64 * h;
                acc += quad::integrate(|s| p.eval(s).ln(), a, a + h, 1e-13);
                min = min.min(acc);
            }
            (-min).max(0.0)
        })
        .collect();
    let chi = {
        let ptilde = ptilde.clone();
        let shifts = shifts.clone();
        Arc::new(move |u: &[f64]| {
            u.iter()
                .zip(ptilde.iter())
                .zip(shifts.iter())
                .map(|((&ui, p), k)| quad::integrate(|s| p.eval(s).ln(), 0.0, ui, 1e-12) + k)
                .sum()
        }) as VectorFn
    };
    let grad = {
        let ptilde = ptilde.clone();
        Arc::new(move |u: &[f64], g: &mut [f64]| {
            for (i, &ui) in u.iter().enumerate() {
                g[i] = ptilde[i].eval(ui).ln();
            }
        }) as GradFn
    };
    let hess = {
        let ptilde = ptilde.clone();
        Arc::new(move |u: &[f64], h: &mut SquareMat| {
            let n = u.len();
            for i in 0..n {
                for j in 0..n {
                    h.set(i, j, 0.0);
                }
            }
            for (i, &ui) in u.iter().enumerate() {
                h.set(i, i, ptilde[i].deriv(ui) / ptilde[i].eval(ui));
            }
        }) as HessFn
    };
    Ok(ChiSpec::new("per-species", chi, grad, hess))
}

fn xlogx(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// Total-density potential for `p_i(u) = (sum_j a_j u_j)^{a_i}`: the same
/// coefficient list drives the density and the exponents, and
/// `chi = sigma (log sigma - 1) + k` with `sigma = sum_j a_j u_j` and the
/// smallest shift `k` keeping chi nonnegative on the closed simplex.
pub fn build_chi_total_density(a: &[f64]) -> Result<ChiSpec> {
    let n = a.len();
    if n == 0 || a.iter().any(|&x| x < 0.0) || a.iter().all(|&x| x == 0.0) {
        return Err(Error::Hypothesis(
            "total-density weights must be nonnegative and not all zero".into(),
        ));
    }
    let coeffs: Arc<Vec<f64>> = Arc::new(a.to_vec());
    // sigma ranges over [0, max_j a_j]; sigma(log sigma - 1) has its minimum
    // at sigma = min(1, sigma_max)
    let sigma_max = a.iter().cloned().fold(0.0_f64, f64::max);
    let s_star = sigma_max.min(1.0);
    let shift = (-(xlogx(s_star) - s_star)).max(0.0);
    let sigma = {
        let c = coeffs.clone();
        move |u: &[f64]| -> f64 { u.iter().zip(c.iter()).map(|(&ui, &ai)| ai * ui).sum() }
    };
    let chi = {
        let sigma = sigma.clone();
        Arc::new(move |u: &[f64]| {
            let s = sigma(u);
            xlogx(s) - s + shift
        }) as VectorFn
    };
    let grad = {
        let sigma = sigma.clone();
        let c = coeffs.clone();
        Arc::new(move |u: &[f64], g: &mut [f64]| {
            let s = sigma(u);
            let ls = if s > 0.0 { s.ln() } else { f64::NEG_INFINITY };
            for (gi, &ai) in g.iter_mut().zip(c.iter()) {
                *gi = ai * ls;
            }
        }) as GradFn
    };
    let hess = {
        let c = coeffs.clone();
        Arc::new(move |u: &[f64], h: &mut SquareMat| {
            let s: f64 = u.iter().zip(c.iter()).map(|(&ui, &ai)| ai * ui).sum();
            let n = u.len();
            for i in 0..n {
                for j in 0..n {
                    h.set(i, j, c[i] * c[j] / s);
                }
            }
        }) as HessFn
    };
    Ok(ChiSpec::new("total-density", chi, grad, hess))
}

/// Lotka-Volterra reaction data: `f_i(u) = u_i (1 - sum_j s_ij u_j)` with a
/// bound constant `cf` for the entropy absorption audit.
#[derive(Clone, Debug)]
pub struct ReactionSpec {
    pub s: SquareMat,
    pub cf: f64,
}

impl ReactionSpec {
    pub fn new(s: SquareMat, cf: f64) -> Result<Self> {
        if !(cf > 0.0) {
            return Err(Error::Hypothesis(format!("cf must be positive (got {cf})")));
        }
        for i in 0..s.n() {
            for j in 0..s.n() {
                if s.get(i, j) < 0.0 {
                    return Err(Error::Hypothesis(format!(
                        "Lotka-Volterra coefficients must be nonnegative; s[{i}][{j}] = {}",
                        s.get(i, j)
                    )));
                }
            }
        }
        Ok(Self { s, cf })
    }

    pub fn eval_into(&self, u: &[f64], out: &mut [f64]) {
        let n = u.len();
        for i in 0..n {
            let mut crowd = 0.0;
            for j in 0..n {
                crowd += self.s.get(i, j) * u[j];
            }
            out[i] = u[i] * (1.0 - crowd);
        }
    }
}

/// A complete model: species count, mobility, potential, optional reactions.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    pub name: String,
    pub n: usize,
    pub q: QSpec,
    pub chi: ChiSpec,
    pub reaction: Option<ReactionSpec>,
    /// Anchor of the entropy integral, cached from `q`.
    pub entropy_anchor: f64,
}

impl ModelSpec {
    pub fn new(name: impl Into<String>, n: usize, q: QSpec, chi: ChiSpec) -> Result<Self> {
        if n == 0 {
            return Err(Error::Hypothesis("species count must be >= 1".into()));
        }
        let entropy_anchor = q.entropy_anchor();
        Ok(Self { name: name.into(), n, q, chi, reaction: None, entropy_anchor })
    }

    pub fn with_reaction(mut self, reaction: ReactionSpec) -> Result<Self> {
        if reaction.s.n() != self.n {
            return Err(Error::Hypothesis(format!(
                "reaction matrix is {}x{} but the model has {} species",
                reaction.s.n(),
                reaction.s.n(),
                self.n
            )));
        }
        self.reaction = Some(reaction);
        Ok(self)
    }

    /// Occupancy factors at a point.
    pub fn p(&self, u: &[f64]) -> Vec<f64> {
        self.chi.p(u)
    }

    pub fn p_into(&self, u: &[f64], out: &mut [f64]) {
        self.chi.p_into(u, out)
    }

    /// Catalog lookup. Names: `ion-transport`, `power-q:<alpha>`,
    /// `skt-volume`, `exp-q:<alpha>`, `vanishing-q:<alpha>`.
    pub fn by_name(name: &str, n: usize) -> Result<ModelSpec> {
        let parse_alpha = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::Config(format!("bad alpha in model name '{name}'")))
        };
        if name == "ion-transport" {
            return ModelSpec::new(name, n, build_power_q(1.0)?, ChiSpec::zero());
        }
        if name == "skt-volume" {
            let chi = build_chi_total_density(&vec![1.0; n])?;
            return ModelSpec::new(name, n, build_power_q(1.0)?, chi);
        }
        if let Some(rest) = name.strip_prefix("power-q:") {
            return ModelSpec::new(name, n, build_power_q(parse_alpha(rest)?)?, ChiSpec::zero());
        }
        if let Some(rest) = name.strip_prefix("exp-q:") {
            return ModelSpec::new(name, n, build_exp_q(parse_alpha(rest)?)?, ChiSpec::zero());
        }
        if let Some(rest) = name.strip_prefix("vanishing-q:") {
            return ModelSpec::new(name, n, build_vanishing_q(parse_alpha(rest)?)?, ChiSpec::zero());
        }
        Err(Error::Config(format!(
            "unknown model '{name}'; known: ion-transport, power-q:<alpha>, \
             skt-volume, exp-q:<alpha>, vanishing-q:<alpha>"
        )))
    }
}

/// Constants derived from the model data; `c0` is the dissipation constant
/// and vanishes exactly when the occupancy factors can degenerate.
#[derive(Clone, Debug, Serialize)]
pub struct ModelConstants {
    /// Sampled infimum of all p_i over the admissible region.
    pub p0: f64,
    /// min(1/2, 2 q(1/2) / sup_{1/2<s<1} q'(s)).
    pub delta: f64,
    /// Anchor of the entropy integral.
    pub a: f64,
    /// 4 p0 min(1, delta).
    pub c0: f64,
    /// Growth constant of the mobility.
    pub gamma: f64,
    /// min over [0,1] of q and q'.
    pub q0: f64,
    pub q1: f64,
    /// Set when p0 is zero within tolerance: entropy-decrease diagnostics
    /// stay active but rate diagnostics are meaningless.
    pub degenerate_c0: bool,
}

/// Tolerance below which the sampled p0 counts as degenerate.
pub const P0_DEGENERATE_TOL: f64 = 1e-5;

pub fn compute_constants(model: &ModelSpec) -> ModelConstants {
    compute_constants_seeded(model, DEFAULT_SAMPLES, DEFAULT_SEED)
}

pub fn compute_constants_seeded(model: &ModelSpec, samples: usize, seed: u64) -> ModelConstants {
    // p0: interior samples plus near-boundary probes
    let mut p0 = f64::INFINITY;
    let mut p = vec![0.0; model.n];
    let mut sampler = SimplexSampler::new(model.n, 0.0, seed);
    let mut points = sampler.take(samples);
    points.extend(boundary_offset_samples(model.n, BOUNDARY_OFFSET));
    for u in &points {
        model.p_into(u, &mut p);
        for &pi in &p {
            if pi.is_finite() {
                p0 = p0.min(pi);
            }
        }
    }
    // delta: sampled supremum of q' over (1/2, 1)
    let mut sup_dq = f64::NEG_INFINITY;
    for s in interval_samples(0.5, 1.0, samples.max(1000), seed ^ 0x9e37_79b9) {
        sup_dq = sup_dq.max(model.q.dq(s));
    }
    sup_dq = sup_dq.max(model.q.dq(1.0));
    let delta = (0.5_f64).min(2.0 * model.q.q(0.5) / sup_dq);
    let a = model.entropy_anchor;
    let degenerate_c0 = p0 <= P0_DEGENERATE_TOL;
    let c0 = 4.0 * p0 * delta.min(1.0);
    ModelConstants {
        p0,
        delta,
        a,
        c0,
        gamma: model.q.gamma,
        q0: model.q.q0,
        q1: model.q.q1,
        degenerate_c0,
    }
}

/// Outcome of one sampled hypothesis condition.
#[derive(Clone, Debug, Serialize)]
pub struct Condition {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub model: String,
    pub samples: usize,
    pub conditions: Vec<Condition>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.conditions.iter().all(|c| c.passed)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "hypothesis report for '{}' ({} samples)", self.model, self.samples)?;
        for c in &self.conditions {
            writeln!(
                f,
                "  [{}] {} - {}",
                if c.passed { "pass" } else { "FAIL" },
                c.name,
                c.detail
            )?;
        }
        Ok(())
    }
}

/// Check the structural hypotheses on sampled interior points and
/// near-boundary probes. Failures are reported, never thrown.
pub fn validate_hypotheses(model: &ModelSpec, samples: usize) -> ValidationReport {
    validate_hypotheses_seeded(model, samples, DEFAULT_SEED)
}

pub fn validate_hypotheses_seeded(
    model: &ModelSpec,
    samples: usize,
    seed: u64,
) -> ValidationReport {
    let samples = samples.max(1);
    let mut conditions = Vec::new();

    // q(0) = 0 for volume-filling models, q0 > 0 otherwise
    let q_at_zero = model.q.q(0.0);
    conditions.push(if model.q.degenerate {
        Condition {
            name: "q(0) = 0".into(),
            passed: q_at_zero.abs() <= 1e-12,
            detail: format!("q(0) = {q_at_zero:.3e}"),
        }
    } else {
        Condition {
            name: "q0 > 0 (nondegenerate)".into(),
            passed: q_at_zero > 0.0,
            detail: format!("q(0) = {q_at_zero:.3e}"),
        }
    });

    // q > 0 and q' >= gamma q on (0,1)
    let s_samples = interval_samples(0.0, 1.0, samples, seed ^ 0x51);
    let mut min_q = f64::INFINITY;
    let mut worst_growth = f64::INFINITY;
    let mut worst_s = f64::NAN;
    for &s in &s_samples {
        let qv = model.q.q(s);
        min_q = min_q.min(qv);
        let slack = model.q.dq(s) - model.q.gamma * qv;
        if slack < worst_growth {
            worst_growth = slack;
            worst_s = s;
        }
    }
    conditions.push(Condition {
        name: "q > 0 on (0,1)".into(),
        passed: min_q > 0.0,
        detail: format!("sampled min q = {min_q:.3e}"),
    });
    conditions.push(Condition {
        name: "q' >= gamma q".into(),
        passed: worst_growth >= -TOL_GROWTH,
        detail: format!(
            "worst slack {worst_growth:.3e} at s = {worst_s:.6} (gamma = {})",
            model.q.gamma
        ),
    });

    // interior samples plus boundary probes for the potential
    let mut sampler = SimplexSampler::new(model.n, 0.0, seed ^ 0xc4);
    let mut points = sampler.take(samples);
    points.extend(boundary_offset_samples(model.n, BOUNDARY_OFFSET));

    let mut min_chi = f64::INFINITY;
    let mut min_eig = f64::INFINITY;
    let mut hess = SquareMat::zeros(model.n);
    let mut max_asym = 0.0_f64;
    let mut p_ok = true;
    let mut p_detail = String::from("finite and positive at all samples");
    let mut pbuf = vec![0.0; model.n];
    for u in &points {
        min_chi = min_chi.min(model.chi.chi(u));
        model.chi.hessian_into(u, &mut hess);
        let e = hess.min_sym_eigenvalue();
        if e.is_finite() {
            min_eig = min_eig.min(e);
        }
        max_asym = max_asym.max(hess.max_asymmetry());
        model.p_into(u, &mut pbuf);
        if pbuf.iter().any(|&x| !(x.is_finite() && x > 0.0)) && p_ok {
            p_ok = false;
            p_detail = format!("p = {pbuf:?} at u = {u:?}");
        }
    }
    conditions.push(Condition {
        name: "chi >= 0".into(),
        passed: min_chi >= -1e-12,
        detail: format!("sampled min chi = {min_chi:.3e}"),
    });
    conditions.push(Condition {
        name: "hess chi PSD".into(),
        passed: min_eig >= -TOL_PSD && max_asym <= TOL_PSD,
        detail: format!("min eigenvalue {min_eig:.3e}, max asymmetry {max_asym:.3e}"),
    });
    conditions.push(Condition {
        name: "p = exp(grad chi) finite".into(),
        passed: p_ok,
        detail: p_detail,
    });

    // gradient self-consistency against central differences of chi, away
    // from the boundary so the stencil stays admissible
    let mut fd_sampler = SimplexSampler::new(model.n, 1e-3, seed ^ 0xfd);
    let mut worst_fd = 0.0_f64;
    let mut grad = vec![0.0; model.n];
    for u in fd_sampler.take(samples.min(64)) {
        model.chi.grad_into(&u, &mut grad);
        for i in 0..model.n {
            let mut up = u.clone();
            let mut dn = u.clone();
            up[i] += FD_STEP;
            dn[i] -= FD_STEP;
            let fd = (model.chi.chi(&up) - model.chi.chi(&dn)) / (2.0 * FD_STEP);
            worst_fd = worst_fd.max((fd - grad[i]).abs() / (1.0 + grad[i].abs()));
        }
    }
    conditions.push(Condition {
        name: "grad chi consistent with chi".into(),
        passed: worst_fd <= 1e-6,
        detail: format!("worst relative finite-difference mismatch {worst_fd:.3e}"),
    });

    ValidationReport { model: model.name.clone(), samples, conditions }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_q_evaluates() {
        let q = build_power_q(1.0).unwrap();
        assert_eq!(q.q(0.5), 0.5);
        assert_eq!(q.dq(0.5), 1.0);
        assert_eq!(q.gamma, 1.0);
        assert_eq!(q.q1, 1.0); // q' is identically 1

        let q2 = build_power_q(2.0).unwrap();
        assert_eq!(q2.q(0.5), 0.25);
        assert_eq!(q2.dq(0.5), 1.0);
        assert_eq!(q2.gamma, 2.0);
        assert_eq!(q2.q(0.0), 0.0);
    }

    #[test]
    fn power_q_rejects_sublinear() {
        assert!(matches!(build_power_q(0.5), Err(Error::Hypothesis(_))));
    }

    #[test]
    fn exp_q_values_and_anchor() {
        let q = build_exp_q(1.0).unwrap();
        assert_eq!(q.q(0.0), 0.0);
        assert!((q.q(1.0) - (1.0_f64.exp() - 1.0)).abs() < 1e-12);
        // q(1) = e - 1 > 1, so the anchor solves exp(a) - 1 = 1, a = ln 2
        assert!((q.entropy_anchor() - 2.0_f64.ln()).abs() < 1e-12);
        assert!(matches!(build_exp_q(1.5), Err(Error::Hypothesis(_))));
        assert!(matches!(build_exp_q(0.0), Err(Error::Hypothesis(_))));
    }

    #[test]
    fn vanishing_q_divergence_flag() {
        let q = build_vanishing_q(1.0).unwrap();
        assert!(q.log_q_divergent_at_zero);
        assert_eq!(q.q(0.0), 0.0);
        assert!((q.log_q(0.5) + 2.0).abs() < 1e-12);
        let q_half = build_vanishing_q(0.5).unwrap();
        assert!(!q_half.log_q_divergent_at_zero);
    }

    #[test]
    fn growth_inequality_on_catalog() {
        // q'(s) >= gamma q(s) - 1e-12 on 1e3 samples for every cataloged q
        for q in [
            build_power_q(1.0).unwrap(),
            build_power_q(2.0).unwrap(),
            build_power_q(3.5).unwrap(),
            build_exp_q(1.0).unwrap(),
            build_exp_q(0.5).unwrap(),
            build_vanishing_q(1.0).unwrap(),
            build_vanishing_q(2.0).unwrap(),
        ] {
            for s in interval_samples(0.0, 1.0, 1000, 99) {
                assert!(
                    q.dq(s) >= q.gamma * q.q(s) - TOL_GROWTH,
                    "{}: growth fails at s = {s}",
                    q.name
                );
            }
        }
    }

    #[test]
    fn per_species_chi_values() {
        // p~(s) = 1 + s: grad = log p~, hess = p~'/p~
        let chi = build_chi_per_species(vec![PTilde::with_derivative(
            Arc::new(|s| 1.0 + s),
            Arc::new(|_| 1.0),
        )])
        .unwrap();
        let g = chi.grad(&[0.5]);
        assert!((g[0] - 1.5_f64.ln()).abs() < 1e-12);
        let p = chi.p(&[0.5]);
        assert!((p[0] - 1.5).abs() < 1e-12);
        let h = chi.hessian(&[0.5]);
        assert!((h.get(0, 0) - 1.0 / 1.5).abs() < 1e-12);
        // int_0^s log(1+t) dt >= 0 already, so no shift and chi(0) = 0
        assert!(chi.chi(&[0.0]).abs() < 1e-12);
    }

    #[test]
    fn per_species_chi_is_diagonal() {
        let chi = build_chi_per_species(vec![
            PTilde::new(Arc::new(|s| 1.0 + s)),
            PTilde::new(Arc::new(|s| (0.3 * s).exp())),
        ])
        .unwrap();
        let h = chi.hessian(&[0.3, 0.4]);
        assert_eq!(h.get(0, 1), 0.0);
        assert_eq!(h.get(1, 0), 0.0);
        // diagonal entries are p~'/p~ up to the finite-difference fallback
        assert!((h.get(0, 0) - 1.0 / 1.3).abs() < 1e-9);
        assert!((h.get(1, 1) - 0.3).abs() < 1e-9);
    }

    #[test]
    fn per_species_rejects_nonpositive() {
        assert!(build_chi_per_species(vec![PTilde::new(Arc::new(|s| s - 0.5))]).is_err());
    }

    #[test]
    fn total_density_chi_values() {
        let chi = build_chi_total_density(&[1.0, 1.0]).unwrap();
        let p = chi.p(&[0.25, 0.25]);
        assert!((p[0] - 0.5).abs() < 1e-12);
        assert!((p[1] - 0.5).abs() < 1e-12);
        // finite at the origin via the x log x limit; shift keeps chi >= 0
        let at_origin = chi.chi(&[0.0, 0.0]);
        assert!(at_origin.is_finite());
        assert!((at_origin - 1.0).abs() < 1e-12);
        // exp(grad_i chi) = u1 + u2 identically on samples
        let mut sampler = SimplexSampler::new(2, 1e-6, 5);
        for u in sampler.take(200) {
            let p = chi.p(&u);
            let sigma = u[0] + u[1];
            for pi in p {
                assert!((pi - sigma).abs() <= 1e-12 * (1.0 + sigma));
            }
        }
    }

    #[test]
    fn catalog_names_resolve() {
        for name in ["ion-transport", "power-q:2", "skt-volume", "exp-q:1", "vanishing-q:1"] {
            let m = ModelSpec::by_name(name, 2).unwrap();
            assert_eq!(m.n, 2);
        }
        assert!(matches!(ModelSpec::by_name("nope", 2), Err(Error::Config(_))));
        assert!(matches!(ModelSpec::by_name("power-q:x", 2), Err(Error::Config(_))));
    }

    #[test]
    fn constants_ion_transport() {
        // q = s, p = 1: delta = min(1/2, 2*0.5/1) = 0.5, p0 = 1, c0 = 2, a = 1
        let m = ModelSpec::by_name("ion-transport", 2).unwrap();
        let c = compute_constants(&m);
        assert!((c.p0 - 1.0).abs() < 1e-12);
        assert!((c.delta - 0.5).abs() < 1e-12);
        assert!((c.c0 - 2.0).abs() < 1e-12);
        assert_eq!(c.a, 1.0);
        assert!(!c.degenerate_c0);
    }

    #[test]
    fn constants_power_two_anchor() {
        // q(1) = 1 <= 1, first branch of the anchor definition
        let m = ModelSpec::by_name("power-q:2", 1).unwrap();
        let c = compute_constants(&m);
        assert_eq!(c.a, 1.0);
        // delta = min(1/2, 2 * 0.25 / 2) = 0.25
        assert!((c.delta - 0.25).abs() < 1e-9);
    }

    #[test]
    fn constants_flag_degenerate_density() {
        // p_i = u1 + u2 has infimum 0 over the admissible region
        let m = ModelSpec::by_name("skt-volume", 2).unwrap();
        let c = compute_constants(&m);
        assert!(c.p0 < 1e-4);
        assert!(c.degenerate_c0);
        assert!(c.c0 < 1e-3);
    }

    #[test]
    fn constants_deterministic() {
        let m = ModelSpec::by_name("skt-volume", 2).unwrap();
        let c1 = compute_constants_seeded(&m, 2000, 7);
        let c2 = compute_constants_seeded(&m, 2000, 7);
        assert_eq!(c1.p0, c2.p0);
        assert_eq!(c1.delta, c2.delta);
        assert!(c1.delta > 0.0 && c1.delta <= 0.5);
    }

    #[test]
    fn validation_passes_for_catalog() {
        for name in ["ion-transport", "skt-volume", "power-q:2", "exp-q:1", "vanishing-q:1"] {
            let m = ModelSpec::by_name(name, 2).unwrap();
            let r = validate_hypotheses(&m, 400);
            assert!(r.all_passed(), "{name}:\n{r}");
        }
    }

    #[test]
    fn validation_pointwise_sublinear_power() {
        // q = s^0.5 with gamma = 0.5 fails the catalog gate but passes the
        // pointwise growth check: q'/q = 0.5/s >= 0.5 on (0,1]
        let q = QSpec::from_fn("sqrt", Arc::new(|s: f64| s.max(0.0).sqrt()), 0.5);
        let m = ModelSpec::new("sqrt-model", 1, q, ChiSpec::zero()).unwrap();
        let r = validate_hypotheses(&m, 500);
        assert!(r.all_passed(), "{r}");
    }

    #[test]
    fn validation_catches_concave_chi() {
        let chi = ChiSpec::new(
            "concave",
            Arc::new(|u: &[f64]| -u[0] * u[0]),
            Arc::new(|u: &[f64], g: &mut [f64]| g[0] = -2.0 * u[0]),
            Arc::new(|_: &[f64], h: &mut SquareMat| h.set(0, 0, -2.0)),
        );
        let m = ModelSpec::new("bad", 1, build_power_q(1.0).unwrap(), chi).unwrap();
        let r = validate_hypotheses(&m, 200);
        assert!(!r.all_passed());
        let psd = r.conditions.iter().find(|c| c.name.contains("PSD")).unwrap();
        assert!(!psd.passed);
    }

    #[test]
    fn reaction_spec_validation() {
        let s = SquareMat::from_rows(&[&[1.0, 0.5], &[0.5, 1.0]]);
        let r = ReactionSpec::new(s, 1.0).unwrap();
        let mut f = vec![0.0; 2];
        // equilibrium of 1 - sum s_ij u_j = 0
        r.eval_into(&[2.0 / 3.0, 2.0 / 3.0], &mut f);
        assert!(f[0].abs() < 1e-12 && f[1].abs() < 1e-12);
        // zero state produces nothing
        r.eval_into(&[0.0, 0.0], &mut f);
        assert_eq!(f, vec![0.0, 0.0]);
        let bad = SquareMat::from_rows(&[&[1.0, -0.1], &[0.5, 1.0]]);
        assert!(ReactionSpec::new(bad, 1.0).is_err());
    }

    #[test]
    fn int_log_q_closed_form_matches_quadrature() {
        let q = build_power_q(2.0).unwrap();
        let direct = q.int_log_q(1.0, 0.3);
        let quadr = quad::integrate(|s| 2.0 * s.ln(), 1.0, 0.3, 1e-13);
        assert!((direct - quadr).abs() < 1e-10);
        // divergent marker
        let v = build_vanishing_q(1.0).unwrap();
        assert!(v.int_log_q(1.0, 0.0).is_infinite());
    }
}
