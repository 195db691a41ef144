//! Entropy density, entropy variables, and the inverse entropy map.
//!
//! The entropy density is
//! `h(u) = sum_i (u_i log u_i - u_i + 1) + int_a^{u_{n+1}} log q + chi(u)`,
//! with the anchor `a` chosen so the integral term is nonnegative. Its
//! gradient `w = h'(u)` maps the open simplex bijectively onto R^n; the
//! solver's unknowns are the `w` and states are recovered through
//! [`invert_gradient`], which is what makes the box constraints structural.

use crate::error::{Error, Result};
use crate::linalg::SquareMat;
use crate::model::ModelSpec;

/// Residual tolerance (max norm on h'(u) - w) of the inversion.
pub const TOL_NEWTON: f64 = 1e-11;
/// Iteration cap of the inversion.
pub const MAX_NEWTON: usize = 50;
/// Margin below which a point no longer counts as interior for gradient and
/// Hessian evaluation.
pub const INTERIOR_MARGIN: f64 = 1e-12;
/// Margin the inversion keeps its iterates away from the boundary.
const NEWTON_MARGIN: f64 = 1e-14;

#[inline]
pub(crate) fn xlogx(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// A point of the closed simplex: species fractions plus the derived
/// vacancy `u_{n+1} = 1 - sum u_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct StatePoint {
    u: Vec<f64>,
    vacancy: f64,
}

impl StatePoint {
    pub fn new(u: Vec<f64>) -> Result<Self> {
        if u.is_empty() {
            return Err(Error::BoundaryState("empty state".into()));
        }
        let mut sum = 0.0;
        for (i, &x) in u.iter().enumerate() {
            if !x.is_finite() || x < 0.0 {
                return Err(Error::BoundaryState(format!("u[{i}] = {x}")));
            }
            sum += x;
        }
        if sum > 1.0 + 1e-12 {
            return Err(Error::BoundaryState(format!("sum u = {sum} > 1")));
        }
        let vacancy = (1.0 - sum).max(0.0);
        Ok(Self { u, vacancy })
    }

    /// Interior point with all species at 1/(2n), vacancy 1/2.
    pub fn barycenter(n: usize) -> Self {
        let u = vec![0.5 / n as f64; n];
        Self { vacancy: 0.5, u }
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn vacancy(&self) -> f64 {
        self.vacancy
    }

    pub fn n(&self) -> usize {
        self.u.len()
    }

    /// Membership in the open region: every fraction and the vacancy at
    /// least `margin` away from zero.
    pub fn is_interior(&self, margin: f64) -> bool {
        self.u.iter().all(|&x| x >= margin) && self.vacancy >= margin
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.u
    }
}

/// Entropy variables `w = h'(u)`; unconstrained but finite.
#[derive(Clone, Debug, PartialEq)]
pub struct EntropyVars {
    w: Vec<f64>,
}

impl EntropyVars {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if let Some((i, &x)) = w.iter().enumerate().find(|(_, x)| !x.is_finite()) {
            return Err(Error::BoundaryState(format!("w[{i}] = {x} is not finite")));
        }
        Ok(Self { w })
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.w
    }
}

/// Relative entropy against a constant state, split into the species part,
/// the vacancy part, and the potential part; each is nonnegative and the
/// total is their sum.
#[derive(Clone, Copy, Debug)]
pub struct RelEntropySplit {
    pub total: f64,
    pub h1: f64,
    pub h2: f64,
    pub h3: f64,
}

/// `h(u)`; +inf when the vacancy integral diverges at full packing.
pub fn entropy_density(point: &StatePoint, model: &ModelSpec) -> f64 {
    let mut h = 0.0;
    for &ui in point.u() {
        h += xlogx(ui) - ui + 1.0;
    }
    h += model.q.int_log_q(model.entropy_anchor, point.vacancy());
    h + model.chi.chi(point.u())
}

pub(crate) fn gradient_into(model: &ModelSpec, u: &[f64], vacancy: f64, out: &mut [f64]) {
    model.chi.grad_into(u, out);
    let lq = model.q.log_q(vacancy);
    for (gi, &ui) in out.iter_mut().zip(u.iter()) {
        *gi += ui.ln() - lq;
    }
}

/// `w = h'(u)`; the point must be strictly interior.
pub fn entropy_gradient(point: &StatePoint, model: &ModelSpec) -> Result<EntropyVars> {
    if !point.is_interior(INTERIOR_MARGIN) {
        return Err(Error::BoundaryState(
            "entropy gradient needs a strictly interior point".into(),
        ));
    }
    let mut w = vec![0.0; point.n()];
    gradient_into(model, point.u(), point.vacancy(), &mut w);
    EntropyVars::new(w)
}

pub(crate) fn hessian_into(model: &ModelSpec, u: &[f64], vacancy: f64, out: &mut SquareMat) {
    model.chi.hessian_into(u, out);
    let phi = model.q.dlog_q(vacancy);
    let n = u.len();
    for i in 0..n {
        for j in 0..n {
            out.add_to(i, j, phi);
        }
        out.add_to(i, i, 1.0 / u[i]);
    }
}

/// `h''(u)`, symmetric with all eigenvalues >= 1 on the interior.
pub fn entropy_hessian(point: &StatePoint, model: &ModelSpec) -> Result<SquareMat> {
    if !point.is_interior(INTERIOR_MARGIN) {
        return Err(Error::BoundaryState(
            "entropy Hessian needs a strictly interior point".into(),
        ));
    }
    let mut h = SquareMat::zeros(point.n());
    hessian_into(model, point.u(), point.vacancy(), &mut h);
    Ok(h)
}

/// Reusable workspace for the inversion; the time stepper runs one per grid
/// sweep so nothing allocates in the inner loop.
pub struct InversionWorkspace {
    g: Vec<f64>,
    delta: Vec<f64>,
    trial: Vec<f64>,
    hess: SquareMat,
    piv: Vec<usize>,
    lu: Vec<f64>,
}

impl InversionWorkspace {
    pub fn new(n: usize) -> Self {
        Self {
            g: vec![0.0; n],
            delta: vec![0.0; n],
            trial: vec![0.0; n],
            hess: SquareMat::zeros(n),
            piv: vec![0; n],
            lu: vec![0.0; n * n],
        }
    }
}

fn vacancy_of(u: &[f64]) -> f64 {
    (1.0 - u.iter().sum::<f64>()).max(0.0)
}

fn residual_norm(model: &ModelSpec, u: &[f64], w: &[f64], g: &mut [f64]) -> f64 {
    gradient_into(model, u, vacancy_of(u), g);
    let mut r: f64 = 0.0;
    for (gi, wi) in g.iter_mut().zip(w.iter()) {
        *gi -= wi;
        r = r.max(gi.abs());
    }
    r
}

/// Structural initial guess for models with `chi = 0`: there
/// `u_i = q(v) exp(w_i)` with the vacancy solving the scalar balance
/// `v + q(v) sum_i exp(w_i) = 1`, which is strictly monotone in v.
fn structural_guess(model: &ModelSpec, w: &[f64], u: &mut [f64]) {
    let wmax = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum: f64 = wmax + w.iter().map(|&wi| (wi - wmax).exp()).sum::<f64>().ln();
    let balance = |v: f64| -> f64 {
        let t = log_sum + model.q.log_q(v);
        let occupied = if t > 700.0 { f64::INFINITY } else { t.exp() };
        v + occupied - 1.0
    };
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if balance(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let v = (0.5 * (lo + hi)).clamp(NEWTON_MARGIN, 1.0 - NEWTON_MARGIN);
    let lq = model.q.log_q(v);
    for (ui, &wi) in u.iter_mut().zip(w.iter()) {
        *ui = (wi + lq).exp().clamp(NEWTON_MARGIN, 1.0 - NEWTON_MARGIN);
    }
    // keep the guess inside the simplex with the bisected vacancy
    let sum: f64 = u.iter().sum();
    if sum > 1.0 - NEWTON_MARGIN {
        let scale = (1.0 - v).max(NEWTON_MARGIN) / sum;
        u.iter_mut().for_each(|x| *x *= scale);
    }
}

/// Damped Newton solve of `h'(u) = w` in place; `u` enters as the initial
/// guess and exits strictly interior with residual below [`TOL_NEWTON`].
pub(crate) fn invert_into(
    model: &ModelSpec,
    w: &[f64],
    u: &mut [f64],
    ws: &mut InversionWorkspace,
) -> Result<()> {
    let n = u.len();
    // sanitize the guess
    let mut sum = 0.0;
    for x in u.iter_mut() {
        *x = x.clamp(NEWTON_MARGIN, 1.0);
        sum += *x;
    }
    if sum > 1.0 - NEWTON_MARGIN {
        let scale = (1.0 - 2.0 * NEWTON_MARGIN) / sum;
        u.iter_mut().for_each(|x| *x *= scale);
    }

    let mut res = residual_norm(model, u, w, &mut ws.g);
    if !res.is_finite() {
        structural_guess_or_barycenter(model, w, u);
        res = residual_norm(model, u, w, &mut ws.g);
    }
    // Polish past the acceptance tolerance down to the floating-point floor:
    // the stepper divides u(w) by tau, so u must be a reproducible function
    // of w at round-off level, not merely accurate to the gate. Both floor
    // and gate scale with |w|, which carries the conditioning of the
    // near-boundary logarithms.
    let wmax = w.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let floor = 1e-15 * (1.0 + wmax);
    let gate = TOL_NEWTON * (1.0 + wmax);
    for iter in 0..MAX_NEWTON {
        if res <= floor {
            return Ok(());
        }
        hessian_into(model, u, vacancy_of(u), &mut ws.hess);
        ws.lu.copy_from_slice(ws.hess.as_slice());
        crate::linalg::lu_factor(&mut ws.lu, &mut ws.piv, n)?;
        ws.delta.copy_from_slice(&ws.g);
        crate::linalg::lu_solve(&ws.lu, &ws.piv, &mut ws.delta, n);
        ws.delta.iter_mut().for_each(|d| *d = -*d);

        // largest feasible step keeping the iterate strictly interior
        let mut alpha_max = f64::INFINITY;
        let mut dsum = 0.0;
        for i in 0..n {
            dsum += ws.delta[i];
            if ws.delta[i] < 0.0 {
                alpha_max = alpha_max.min((u[i] - NEWTON_MARGIN) / (-ws.delta[i]));
            }
        }
        if dsum > 0.0 {
            let room = (1.0 - NEWTON_MARGIN) - u.iter().sum::<f64>();
            alpha_max = alpha_max.min(room.max(0.0) / dsum);
        }
        let mut alpha = (0.995 * alpha_max).min(1.0);
        let mut improved = false;
        for _ in 0..60 {
            if alpha <= 0.0 {
                break;
            }
            for i in 0..n {
                ws.trial[i] = u[i] + alpha * ws.delta[i];
            }
            let r_new = residual_norm(model, &ws.trial, w, &mut ws.g);
            if r_new.is_finite() && r_new < res {
                u.copy_from_slice(&ws.trial);
                res = r_new;
                improved = true;
                break;
            }
            alpha *= 0.5;
        }
        if !improved {
            // the basin's floating floor; fine as long as the gate is met
            if res <= gate {
                return Ok(());
            }
            return Err(Error::InversionFailed {
                iterations: iter + 1,
                residual: res,
                last_iterate: u.to_vec(),
            });
        }
    }
    if res <= gate {
        return Ok(());
    }
    Err(Error::InversionFailed {
        iterations: MAX_NEWTON,
        residual: res,
        last_iterate: u.to_vec(),
    })
}

fn structural_guess_or_barycenter(model: &ModelSpec, w: &[f64], u: &mut [f64]) {
    if model.chi.is_zero {
        structural_guess(model, w, u);
    } else {
        let n = u.len();
        u.iter_mut().for_each(|x| *x = 0.5 / n as f64);
    }
}

/// Invert the entropy transformation: find the unique `u` in the open
/// simplex with `h'(u) = w`.
pub fn invert_gradient(
    w: &EntropyVars,
    model: &ModelSpec,
    guess: Option<&StatePoint>,
) -> Result<StatePoint> {
    let n = w.w().len();
    let mut u = vec![0.0; n];
    match guess {
        Some(g) if g.is_interior(NEWTON_MARGIN) => u.copy_from_slice(g.u()),
        _ => structural_guess_or_barycenter(model, w.w(), &mut u),
    }
    let mut ws = InversionWorkspace::new(n);
    invert_into(model, w.w(), &mut u, &mut ws)?;
    StatePoint::new(u)
}

/// Relative entropy `h(u) - h(uinf) - h'(uinf).(u - uinf)` split into its
/// three nonnegative parts.
pub fn relative_entropy(
    point: &StatePoint,
    uinf: &StatePoint,
    model: &ModelSpec,
) -> Result<RelEntropySplit> {
    if !uinf.is_interior(INTERIOR_MARGIN) {
        return Err(Error::BoundaryState(
            "relative entropy needs a strictly interior reference state".into(),
        ));
    }
    if point.n() != uinf.n() {
        return Err(Error::BoundaryState("species counts differ".into()));
    }
    let clamp = |x: f64| if x < 0.0 && x > -1e-13 { 0.0 } else { x };

    let mut h1 = 0.0;
    for (&ui, &vi) in point.u().iter().zip(uinf.u().iter()) {
        h1 += if ui > 0.0 { ui * (ui / vi).ln() } else { 0.0 } - ui + vi;
    }
    let h2 = model.q.int_log_q(uinf.vacancy(), point.vacancy())
        - (point.vacancy() - uinf.vacancy()) * model.q.log_q(uinf.vacancy());
    let grad_inf = model.chi.grad(uinf.u());
    let mut h3 = model.chi.chi(point.u()) - model.chi.chi(uinf.u());
    for i in 0..point.n() {
        h3 -= (point.u()[i] - uinf.u()[i]) * grad_inf[i];
    }
    let (h1, h2, h3) = (clamp(h1), clamp(h2), clamp(h3));
    Ok(RelEntropySplit { total: h1 + h2 + h3, h1, h2, h3 })
}
